//! Seeded two-domain benchmarks.
//!
//! * Gaussian: class clusters on a circle in feature space; the target domain
//!   translates and rotates the class means.
//! * Texture: grayscale images whose class lives in a high-frequency grating
//!   and whose domain lives in a low-frequency illumination field (DC level
//!   plus a one-cycle cosine), so the two signals occupy disjoint DFT bands.
//!
//! Each sample draws from its own child stream keyed by (split, class, index),
//! so generation order never changes the data.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Domain, FeatureSet};
use crate::image::Image;
use crate::rng::{RunSeed, Stream};
use crate::spectral::{dft2d, LowFreqMask};

/// Fraction of each target class held out for testing.
pub const TARGET_TEST_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DomainShift {
    /// Rotation of the first two feature axes, in radians.
    pub rotation_angle: f64,
    /// Added to the class means before rotating; empty means zero.
    pub translation: Vec<f64>,
}

impl Default for DomainShift {
    fn default() -> Self {
        Self {
            rotation_angle: PI / 4.0,
            translation: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaussianBenchSpec {
    pub num_classes: usize,
    pub feature_dim: usize,
    pub samples_per_class: usize,
    pub class_mean_radius: f64,
    pub noise_sigma: f64,
    pub shift: DomainShift,
    pub seed: u64,
}

impl Default for GaussianBenchSpec {
    fn default() -> Self {
        Self {
            num_classes: 3,
            feature_dim: 2,
            samples_per_class: 300,
            class_mean_radius: 2.0,
            noise_sigma: 0.5,
            shift: DomainShift::default(),
            seed: 0,
        }
    }
}

impl GaussianBenchSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.num_classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.num_classes));
        }
        if self.feature_dim < 2 {
            return bad(format!("need feature_dim >= 2, got {}", self.feature_dim));
        }
        if self.samples_per_class == 0 {
            return bad("samples_per_class must be positive".into());
        }
        if !(self.noise_sigma > 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise_sigma must be positive, got {}", self.noise_sigma));
        }
        if !self.class_mean_radius.is_finite() || !self.shift.rotation_angle.is_finite() {
            return bad("radius and rotation must be finite".into());
        }
        if !self.shift.translation.is_empty() && self.shift.translation.len() != self.feature_dim {
            return bad(format!(
                "translation has {} entries, feature_dim is {}",
                self.shift.translation.len(),
                self.feature_dim
            ));
        }
        if self.shift.translation.iter().any(|t| !t.is_finite()) {
            return bad("translation must be finite".into());
        }
        Ok(())
    }

    pub fn source_mean(&self, class: usize) -> Vec<f64> {
        let angle = 2.0 * PI * class as f64 / self.num_classes as f64;
        let mut mean = vec![0.0; self.feature_dim];
        mean[0] = self.class_mean_radius * angle.cos();
        mean[1] = self.class_mean_radius * angle.sin();
        mean
    }

    /// Translated, then rotated in the first two axes.
    pub fn target_mean(&self, class: usize) -> Vec<f64> {
        let mut mean = self.source_mean(class);
        for (m, t) in mean.iter_mut().zip(&self.shift.translation) {
            *m += t;
        }
        let (s, c) = self.shift.rotation_angle.sin_cos();
        let (x, y) = (mean[0], mean[1]);
        mean[0] = c * x - s * y;
        mean[1] = s * x + c * y;
        mean
    }
}

/// Source training set plus the target pool/test split.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSplits {
    pub source: FeatureSet,
    pub target_pool: FeatureSet,
    pub target_test: FeatureSet,
}

/// Number of target samples per class that go to the test split.
pub fn test_count(per_class: usize) -> usize {
    (per_class as f64 * TARGET_TEST_FRACTION).round() as usize
}

pub fn make_gaussian_bench(spec: &GaussianBenchSpec) -> Result<FeatureSplits> {
    spec.validate()?;
    let seed = RunSeed::new(spec.seed);
    let noise = Normal::new(0.0, spec.noise_sigma).expect("validated sigma");
    let draw = |mean: &[f64], rng: &mut Stream| -> Vec<f64> {
        mean.iter().map(|m| m + noise.sample(rng)).collect()
    };
    let per_class = spec.samples_per_class;
    let n_test = test_count(per_class);

    let mut source = SplitBuilder::default();
    let mut pool = SplitBuilder::default();
    let mut test = SplitBuilder::default();
    for class in 0..spec.num_classes {
        let src_mean = spec.source_mean(class);
        let tgt_mean = spec.target_mean(class);
        for i in 0..per_class {
            let id = sample_id(class, i);
            source.push(draw(&src_mean, &mut seed.child("generation/source", id)), class);
            let row = draw(&tgt_mean, &mut seed.child("generation/target", id));
            if i < per_class - n_test {
                pool.push(row, class);
            } else {
                test.push(row, class);
            }
        }
    }
    let dim = spec.feature_dim;
    Ok(FeatureSplits {
        source: source.finish(dim, Domain::Source)?,
        target_pool: pool.finish(dim, Domain::Target)?,
        target_test: test.finish(dim, Domain::Target)?,
    })
}

fn sample_id(class: usize, index: usize) -> u64 {
    ((class as u64) << 32) | index as u64
}

#[derive(Default)]
struct SplitBuilder {
    features: Vec<f64>,
    labels: Vec<usize>,
}

impl SplitBuilder {
    fn push(&mut self, row: Vec<f64>, label: usize) {
        self.features.extend(row);
        self.labels.push(label);
    }

    fn finish(self, dim: usize, domain: Domain) -> Result<FeatureSet> {
        let n = self.labels.len();
        FeatureSet::new(dim, self.features, Some(self.labels), vec![domain; n])
    }
}

/// Labeled images of one split.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ImageSet {
    pub images: Vec<Image>,
    pub labels: Vec<usize>,
}

impl ImageSet {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

/// Per-class grating parameters. Class `k` uses the integer frequency closest
/// to `frequency_radius` bins at orientation `k·π/K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassPattern {
    pub frequency_radius: f64,
    pub amplitude: f64,
    /// Relative amplitude jitter, uniform in `±amplitude_jitter`.
    pub amplitude_jitter: f64,
    /// Phase jitter in radians, uniform in `±phase_jitter`.
    pub phase_jitter: f64,
}

impl Default for ClassPattern {
    fn default() -> Self {
        Self {
            frequency_radius: 8.0,
            amplitude: 0.15,
            amplitude_jitter: 0.2,
            phase_jitter: 0.3,
        }
    }
}

/// Low-frequency appearance of one domain: a DC level and a one-cycle cosine
/// illumination field with random orientation and phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainStyle {
    pub brightness: f64,
    pub brightness_jitter: f64,
    pub gradient_amplitude: f64,
    pub gradient_jitter: f64,
}

impl DomainStyle {
    pub fn source_default() -> Self {
        Self {
            brightness: 0.35,
            brightness_jitter: 0.05,
            gradient_amplitude: 0.05,
            gradient_jitter: 0.5,
        }
    }

    pub fn target_default() -> Self {
        Self {
            brightness: 0.6,
            brightness_jitter: 0.05,
            gradient_amplitude: 0.15,
            gradient_jitter: 0.5,
        }
    }
}

impl Default for DomainStyle {
    fn default() -> Self {
        Self::source_default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TextureBenchSpec {
    pub num_classes: usize,
    pub image_size: usize,
    pub samples_per_class: usize,
    pub class_pattern: ClassPattern,
    pub source_style: DomainStyle,
    pub target_style: DomainStyle,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for TextureBenchSpec {
    fn default() -> Self {
        Self {
            num_classes: 3,
            image_size: 32,
            samples_per_class: 300,
            class_pattern: ClassPattern::default(),
            source_style: DomainStyle::source_default(),
            target_style: DomainStyle::target_default(),
            noise_sigma: 0.03,
            seed: 0,
        }
    }
}

/// Orientations of the illumination cosine, as (row, column) frequencies.
const GRADIENT_DIRECTIONS: [(i64, i64); 4] = [(1, 0), (0, 1), (1, 1), (1, -1)];

impl TextureBenchSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.num_classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.num_classes));
        }
        if !self.image_size.is_power_of_two() || self.image_size < 8 {
            return bad(format!(
                "image_size must be a power of two >= 8, got {}",
                self.image_size
            ));
        }
        if self.samples_per_class == 0 {
            return bad("samples_per_class must be positive".into());
        }
        if !(self.noise_sigma > 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise_sigma must be positive, got {}", self.noise_sigma));
        }
        let freqs = self.class_frequencies();
        for (k, f) in freqs.iter().enumerate() {
            if self.band_radius(*f) <= 1 {
                return bad(format!("class {k} frequency {f:?} overlaps the illumination band"));
            }
            if freqs[..k].contains(f) {
                return bad(format!("classes share grating frequency {f:?}"));
            }
        }
        Ok(())
    }

    /// Signed (row, column) grating frequency of each class.
    pub fn class_frequencies(&self) -> Vec<(i64, i64)> {
        (0..self.num_classes)
            .map(|k| {
                let angle = PI * k as f64 / self.num_classes as f64;
                let r = self.class_pattern.frequency_radius;
                ((r * angle.sin()).round() as i64, (r * angle.cos()).round() as i64)
            })
            .collect()
    }

    /// Chebyshev distance of a frequency from DC in wrapped bin units; a bin
    /// lies outside a mask with half-width `b` iff this exceeds `b`.
    fn band_radius(&self, (u, v): (i64, i64)) -> usize {
        let n = self.image_size as i64;
        let wrap = |x: i64| {
            let x = x.rem_euclid(n);
            x.min(n - x) as usize
        };
        wrap(u).max(wrap(v))
    }

    /// True when every class grating lies outside `mask`.
    pub fn classes_outside(&self, mask: &LowFreqMask) -> bool {
        let n = self.image_size as i64;
        self.class_frequencies().iter().all(|&(u, v)| {
            !mask.contains(u.rem_euclid(n) as usize, v.rem_euclid(n) as usize)
        })
    }

    fn render(&self, class: usize, style: &DomainStyle, rng: &mut Stream) -> Image {
        let n = self.image_size;
        let (u, v) = self.class_frequencies()[class];
        let pat = &self.class_pattern;
        let amp = pat.amplitude * (1.0 + pat.amplitude_jitter * rng.random_range(-1.0..=1.0));
        let phase = pat.phase_jitter * rng.random_range(-1.0..=1.0);
        let level = style.brightness + style.brightness_jitter * rng.random_range(-1.0..=1.0);
        let (gu, gv) = GRADIENT_DIRECTIONS[rng.random_range(0..GRADIENT_DIRECTIONS.len())];
        let g_amp = style.gradient_amplitude * (1.0 + style.gradient_jitter * rng.random_range(-1.0..=1.0));
        let g_phase = rng.random_range(0.0..2.0 * PI);
        let noise = Normal::new(0.0, self.noise_sigma).expect("validated sigma");
        let mut data = Vec::with_capacity(n * n);
        for h in 0..n {
            for w in 0..n {
                let (hf, wf, nf) = (h as f64, w as f64, n as f64);
                let texture = amp * (2.0 * PI * (u as f64 * hf + v as f64 * wf) / nf + phase).cos();
                let light = level + g_amp * (2.0 * PI * (gu as f64 * hf + gv as f64 * wf) / nf + g_phase).cos();
                let value = light + texture + noise.sample(rng);
                data.push(value.clamp(0.0, 1.0));
            }
        }
        Image::new(n, n, 1, data).expect("generated image is well formed")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageSplits {
    pub source: ImageSet,
    pub target_pool: ImageSet,
    pub target_test: ImageSet,
}

pub fn make_texture_bench(spec: &TextureBenchSpec) -> Result<ImageSplits> {
    spec.validate()?;
    let seed = RunSeed::new(spec.seed);
    let per_class = spec.samples_per_class;
    let n_test = test_count(per_class);
    let mut source = ImageSet::default();
    let mut pool = ImageSet::default();
    let mut test = ImageSet::default();
    for class in 0..spec.num_classes {
        for i in 0..per_class {
            let id = sample_id(class, i);
            source
                .images
                .push(spec.render(class, &spec.source_style, &mut seed.child("generation/source", id)));
            source.labels.push(class);
            let img = spec.render(class, &spec.target_style, &mut seed.child("generation/target", id));
            let split = if i < per_class - n_test { &mut pool } else { &mut test };
            split.images.push(img);
            split.labels.push(class);
        }
    }
    Ok(ImageSplits {
        source,
        target_pool: pool,
        target_test: test,
    })
}

/// Mean amplitude spectrum of channel 0 over a set of equally sized images.
pub fn mean_amplitude_spectrum(images: &[Image]) -> Result<Vec<f64>> {
    let first = images.first().ok_or(Error::Empty("image set"))?;
    let mut acc = vec![0.0; first.height() * first.width()];
    for img in images {
        if !img.same_shape(first) {
            return Err(Error::ShapeMismatch("images differ in shape".into()));
        }
        let amp = dft2d(img.height(), img.width(), &img.channel(0))?.amplitude();
        acc.iter_mut().zip(amp).for_each(|(a, v)| *a += v);
    }
    let inv = 1.0 / images.len() as f64;
    Ok(acc.into_iter().map(|a| a * inv).collect())
}

/// Mean absolute amplitude difference inside and outside a mask band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandGap {
    pub inside: f64,
    pub outside: f64,
}

pub fn band_gap(a: &[f64], b: &[f64], mask: &LowFreqMask) -> BandGap {
    let (mut inside, mut n_in, mut outside, mut n_out) = (0.0, 0usize, 0.0, 0usize);
    for ((x, y), &low) in a.iter().zip(b).zip(mask.bits()) {
        let d = (x - y).abs();
        if low {
            inside += d;
            n_in += 1;
        } else {
            outside += d;
            n_out += 1;
        }
    }
    BandGap {
        inside: if n_in > 0 { inside / n_in as f64 } else { 0.0 },
        outside: if n_out > 0 { outside / n_out as f64 } else { 0.0 },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_split_sizes_and_determinism() {
        let spec = GaussianBenchSpec {
            samples_per_class: 50,
            ..Default::default()
        };
        let a = make_gaussian_bench(&spec).unwrap();
        let b = make_gaussian_bench(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.source.len(), 150);
        assert_eq!(a.target_pool.len(), 120);
        assert_eq!(a.target_test.len(), 30);
        for k in 0..3 {
            assert_eq!(a.target_test.labels().unwrap().iter().filter(|&&l| l == k).count(), 10);
            assert_eq!(a.target_pool.labels().unwrap().iter().filter(|&&l| l == k).count(), 40);
        }
        assert!(a.target_pool.domains().iter().all(|&d| d == Domain::Target));
        let other = make_gaussian_bench(&GaussianBenchSpec { seed: 1, ..spec }).unwrap();
        assert_ne!(a.source, other.source);
    }

    #[test]
    fn target_means_follow_the_shift() {
        let spec = GaussianBenchSpec {
            feature_dim: 3,
            shift: DomainShift {
                rotation_angle: PI / 2.0,
                translation: vec![1.0, 0.0, 2.0],
            },
            ..Default::default()
        };
        // class 0 source mean (2, 0, 0) -> translated (3, 0, 2) -> rotated (0, 3, 2)
        let m = spec.target_mean(0);
        assert!(m[0].abs() < 1e-12 && (m[1] - 3.0).abs() < 1e-12 && (m[2] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_specs() {
        let bad = [
            GaussianBenchSpec { num_classes: 1, ..Default::default() },
            GaussianBenchSpec { feature_dim: 1, ..Default::default() },
            GaussianBenchSpec { noise_sigma: 0.0, ..Default::default() },
            GaussianBenchSpec {
                shift: DomainShift { rotation_angle: 0.0, translation: vec![1.0] },
                ..Default::default()
            },
        ];
        for spec in bad {
            assert!(make_gaussian_bench(&spec).is_err());
        }
        assert!(make_texture_bench(&TextureBenchSpec { image_size: 24, ..Default::default() }).is_err());
        let low = TextureBenchSpec {
            class_pattern: ClassPattern { frequency_radius: 1.0, ..Default::default() },
            ..Default::default()
        };
        assert!(make_texture_bench(&low).is_err());
    }

    #[test]
    fn class_gratings_sit_outside_experiment_bands() {
        let spec = TextureBenchSpec::default();
        assert_eq!(spec.class_frequencies(), vec![(0, 8), (7, 4), (7, -4)]);
        for beta in [0.033, 0.1] {
            let mask = LowFreqMask::new(32, 32, beta).unwrap();
            assert!(spec.classes_outside(&mask));
        }
    }

    #[test]
    fn texture_bench_is_deterministic_and_stratified() {
        let spec = TextureBenchSpec {
            samples_per_class: 10,
            ..Default::default()
        };
        let a = make_texture_bench(&spec).unwrap();
        assert_eq!(a, make_texture_bench(&spec).unwrap());
        assert_eq!(a.source.len(), 30);
        assert_eq!(a.target_pool.len(), 24);
        assert_eq!(a.target_test.len(), 6);
        assert!(a.source.images.iter().all(|i| i.data().iter().all(|v| (0.0..=1.0).contains(v))));
    }
}
