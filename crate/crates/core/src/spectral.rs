//! Per-channel 2-D DFT, amplitude/phase decomposition, low-frequency masks and
//! the low-frequency amplitude swap between a source and a target image.
//!
//! Spectra are kept unshifted: the DC bin sits at (0, 0) and the low-frequency
//! band wraps around the edges of the index range.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{ensure_finite, Error, Result};
use crate::image::Image;

/// Imaginary residue above which an inverse transform logs a warning.
pub const IMAGINARY_RESIDUE_WARN: f64 = 1e-6;

/// Unnormalized DFT of one image channel, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    height: usize,
    width: usize,
    values: Vec<Complex64>,
}

impl Spectrum {
    pub fn new(height: usize, width: usize, values: Vec<Complex64>) -> Result<Self> {
        check_dims(height, width)?;
        if values.len() != height * width {
            return Err(Error::ShapeMismatch(format!(
                "{height}x{width} spectrum needs {} values, got {}",
                height * width,
                values.len()
            )));
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    /// Recombines amplitude and phase planes (`a·e^{jφ}` per bin).
    pub fn from_polar(height: usize, width: usize, amplitude: &[f64], phase: &[f64]) -> Result<Self> {
        if amplitude.len() != phase.len() {
            return Err(Error::ShapeMismatch(
                "amplitude and phase planes differ in size".into(),
            ));
        }
        let values = amplitude
            .iter()
            .zip(phase)
            .map(|(&a, &p)| Complex64::from_polar(a, p))
            .collect();
        Self::new(height, width, values)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn at(&self, u: usize, v: usize) -> Complex64 {
        self.values[u * self.width + v]
    }

    pub fn amplitude(&self) -> Vec<f64> {
        self.values.iter().map(|c| c.norm()).collect()
    }

    /// Principal argument in (-π, π]; a zero bin has phase 0.
    pub fn phase(&self) -> Vec<f64> {
        self.values.iter().map(|c| c.im.atan2(c.re)).collect()
    }
}

/// Real part of an inverse transform plus the largest discarded imaginary part.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseTransform {
    pub values: Vec<f64>,
    pub max_imaginary: f64,
}

fn check_dims(height: usize, width: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::InvalidParameter(format!(
            "transform dimensions must be positive, got {height}x{width}"
        )));
    }
    Ok(())
}

/// Forward 2-D DFT with kernel `e^{-j2π(hu/H + wv/W)}` and no normalization.
pub fn dft2d(height: usize, width: usize, channel: &[f64]) -> Result<Spectrum> {
    check_dims(height, width)?;
    if channel.len() != height * width {
        return Err(Error::ShapeMismatch(format!(
            "{height}x{width} channel needs {} values, got {}",
            height * width,
            channel.len()
        )));
    }
    ensure_finite("DFT input", channel)?;
    let mut values: Vec<Complex64> = channel.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    transform_2d(&mut values, height, width, Direction::Forward);
    Spectrum::new(height, width, values)
}

/// Inverse 2-D DFT with `1/(H·W)` normalization, returning the real part.
pub fn idft2d(spectrum: &Spectrum) -> InverseTransform {
    let (height, width) = (spectrum.height, spectrum.width);
    let mut values = spectrum.values.clone();
    transform_2d(&mut values, height, width, Direction::Inverse);
    let scale = 1.0 / (height * width) as f64;
    let mut max_imaginary = 0.0f64;
    let real = values
        .iter()
        .map(|c| {
            max_imaginary = max_imaginary.max((c.im * scale).abs());
            c.re * scale
        })
        .collect();
    if max_imaginary > IMAGINARY_RESIDUE_WARN {
        log::warn!("inverse DFT discarded an imaginary residue of {max_imaginary:e}");
    }
    InverseTransform {
        values: real,
        max_imaginary,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Direction {
    Forward,
    Inverse,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Forward => -1.0,
            Direction::Inverse => 1.0,
        }
    }
}

/// Row transforms followed by column transforms, in place.
fn transform_2d(values: &mut [Complex64], height: usize, width: usize, dir: Direction) {
    let row_plan = Plan1d::new(width, dir);
    for row in values.chunks_exact_mut(width) {
        row_plan.run(row);
    }
    let col_plan = Plan1d::new(height, dir);
    let mut column = vec![Complex64::new(0.0, 0.0); height];
    for w in 0..width {
        for h in 0..height {
            column[h] = values[h * width + w];
        }
        col_plan.run(&mut column);
        for h in 0..height {
            values[h * width + w] = column[h];
        }
    }
}

/// Precomputed twiddles for one axis length. Radix-2 when the length is a
/// power of two, direct summation otherwise.
struct Plan1d {
    len: usize,
    twiddles: Vec<Complex64>,
    radix2: bool,
}

impl Plan1d {
    fn new(len: usize, dir: Direction) -> Self {
        let twiddles = (0..len)
            .map(|k| {
                let angle = dir.sign() * 2.0 * PI * k as f64 / len as f64;
                Complex64::new(angle.cos(), angle.sin())
            })
            .collect();
        Self {
            len,
            twiddles,
            radix2: len.is_power_of_two(),
        }
    }

    fn run(&self, data: &mut [Complex64]) {
        debug_assert_eq!(data.len(), self.len);
        if self.len == 1 {
            return;
        }
        if self.radix2 {
            self.radix2_in_place(data);
        } else {
            self.direct(data);
        }
    }

    fn direct(&self, data: &mut [Complex64]) {
        let n = self.len;
        let out: Vec<Complex64> = (0..n)
            .map(|k| {
                data.iter()
                    .enumerate()
                    .map(|(t, &x)| x * self.twiddles[(k * t) % n])
                    .sum()
            })
            .collect();
        data.copy_from_slice(&out);
    }

    // iterative Cooley-Tukey, decimation in time
    fn radix2_in_place(&self, data: &mut [Complex64]) {
        let n = self.len;
        let bits = n.trailing_zeros();
        for i in 0..n {
            let j = i.reverse_bits() >> (usize::BITS - bits);
            if j > i {
                data.swap(i, j);
            }
        }
        let mut size = 2;
        while size <= n {
            let half = size / 2;
            let stride = n / size;
            for start in (0..n).step_by(size) {
                for k in 0..half {
                    let w = self.twiddles[k * stride];
                    let a = data[start + k];
                    let b = data[start + k + half] * w;
                    data[start + k] = a + b;
                    data[start + k + half] = a - b;
                }
            }
            size *= 2;
        }
    }
}

/// Binary low-frequency selector around the unshifted DC bin.
///
/// With `b_h = floor(beta·H)` and `b_w = floor(beta·W)`, bin (h, w) is selected
/// iff `min(h, H-h) <= b_h` and `min(w, W-w) <= b_w`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LowFreqMask {
    height: usize,
    width: usize,
    half_height: usize,
    half_width: usize,
    bits: Vec<bool>,
}

impl LowFreqMask {
    pub fn new(height: usize, width: usize, beta: f64) -> Result<Self> {
        check_dims(height, width)?;
        validate_beta(beta)?;
        let half_height = (beta * height as f64).floor() as usize;
        let half_width = (beta * width as f64).floor() as usize;
        let bits = (0..height)
            .flat_map(|h| {
                (0..width).map(move |w| {
                    h.min(height - h) <= half_height && w.min(width - w) <= half_width
                })
            })
            .collect();
        Ok(Self {
            height,
            width,
            half_height,
            half_width,
            bits,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// `(b_h, b_w)`, the band half-widths in bins.
    pub fn half_widths(&self) -> (usize, usize) {
        (self.half_height, self.half_width)
    }

    pub fn contains(&self, h: usize, w: usize) -> bool {
        self.bits[h * self.width + w]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn popcount(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Mask as a 0/1 real matrix.
    pub fn to_weights(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }
}

pub fn low_freq_mask(height: usize, width: usize, beta: f64) -> Result<LowFreqMask> {
    LowFreqMask::new(height, width, beta)
}

pub fn validate_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "beta must lie strictly inside (0, 1), got {beta}"
        )))
    }
}

/// Amplitude and phase planes of every channel of an image.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposed {
    height: usize,
    width: usize,
    amplitude: Vec<Vec<f64>>,
    phase: Vec<Vec<f64>>,
}

impl Decomposed {
    pub fn of(image: &Image) -> Result<Self> {
        let (height, width) = (image.height(), image.width());
        let mut amplitude = Vec::with_capacity(image.channels());
        let mut phase = Vec::with_capacity(image.channels());
        for c in 0..image.channels() {
            let spectrum = dft2d(height, width, &image.channel(c))?;
            amplitude.push(spectrum.amplitude());
            phase.push(spectrum.phase());
        }
        Ok(Self {
            height,
            width,
            amplitude,
            phase,
        })
    }

    pub fn channels(&self) -> usize {
        self.amplitude.len()
    }

    pub fn amplitude(&self, channel: usize) -> &[f64] {
        &self.amplitude[channel]
    }

    pub fn phase(&self, channel: usize) -> &[f64] {
        &self.phase[channel]
    }

    fn same_shape(&self, other: &Decomposed) -> bool {
        self.height == other.height
            && self.width == other.width
            && self.channels() == other.channels()
    }

    /// Spectral transfer with pre-decomposed operands: masked bins take this
    /// (source) image's phase with the target's amplitude.
    pub fn transfer_from(&self, target: &Decomposed, mask: &LowFreqMask) -> Result<Image> {
        if !self.same_shape(target) {
            return Err(Error::ShapeMismatch(format!(
                "source {}x{}x{} vs target {}x{}x{}",
                self.height,
                self.width,
                self.channels(),
                target.height,
                target.width,
                target.channels()
            )));
        }
        if mask.height != self.height || mask.width != self.width {
            return Err(Error::ShapeMismatch(format!(
                "mask is {}x{}, image is {}x{}",
                mask.height, mask.width, self.height, self.width
            )));
        }
        let planes = (0..self.channels())
            .map(|c| {
                let mixed: Vec<f64> = mask
                    .bits
                    .iter()
                    .zip(self.amplitude[c].iter().zip(&target.amplitude[c]))
                    .map(|(&low, (&src, &tgt))| if low { tgt } else { src })
                    .collect();
                let spectrum = Spectrum::from_polar(self.height, self.width, &mixed, &self.phase[c])?;
                Ok(idft2d(&spectrum).values)
            })
            .collect::<Result<Vec<_>>>()?;
        Image::from_planes(self.height, self.width, &planes)
    }
}

/// Replaces the low-frequency amplitude of `source` with that of `target`,
/// keeping the source phase. Output is not clamped.
pub fn fda_transfer(source: &Image, target: &Image, beta: f64) -> Result<Image> {
    if !source.same_shape(target) {
        return Err(Error::ShapeMismatch(format!(
            "source {}x{}x{} vs target {}x{}x{}",
            source.height(),
            source.width(),
            source.channels(),
            target.height(),
            target.width(),
            target.channels()
        )));
    }
    let mask = LowFreqMask::new(source.height(), source.width(), beta)?;
    Decomposed::of(source)?.transfer_from(&Decomposed::of(target)?, &mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Four nested loops straight from the definition; shares no code with
    /// the library transforms.
    fn naive_dft(height: usize, width: usize, x: &[f64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); height * width];
        for u in 0..height {
            for v in 0..width {
                let mut acc = Complex64::new(0.0, 0.0);
                for h in 0..height {
                    for w in 0..width {
                        let angle = -2.0
                            * PI
                            * ((h * u) as f64 / height as f64 + (w * v) as f64 / width as f64);
                        acc += x[h * width + w] * Complex64::new(angle.cos(), angle.sin());
                    }
                }
                out[u * width + v] = acc;
            }
        }
        out
    }

    fn random_plane(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random::<f64>()).collect()
    }

    fn max_rel_err(a: &[Complex64], b: &[Complex64]) -> f64 {
        let scale = b.iter().map(|c| c.norm()).fold(0.0, f64::max).max(1e-300);
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
            / scale
    }

    #[test]
    fn impulse_transforms_to_all_ones() {
        let mut x = vec![0.0; 8 * 6];
        x[0] = 1.0;
        let s = dft2d(8, 6, &x).unwrap();
        for c in s.values() {
            assert!((c - Complex64::new(1.0, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn constant_transforms_to_dc_only() {
        let (h, w, c) = (4, 8, 0.3);
        let s = dft2d(h, w, &vec![c; h * w]).unwrap();
        assert!((s.at(0, 0).re - (h * w) as f64 * c).abs() < 1e-12);
        for (i, v) in s.values().iter().enumerate().skip(1) {
            assert!(v.norm() < 1e-12, "bin {i} = {v}");
        }
        assert!((s.amplitude()[0] - (h * w) as f64 * c).abs() < 1e-12);
    }

    #[test]
    fn matches_direct_oracle_8x8() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = random_plane(&mut rng, 64);
        let fast = dft2d(8, 8, &x).unwrap();
        assert!(max_rel_err(fast.values(), &naive_dft(8, 8, &x)) < 1e-10);
    }

    #[test]
    fn matches_direct_oracle_on_mixed_sizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for &(h, w) in &[(1, 1), (1, 7), (3, 5), (16, 12), (6, 32), (32, 32)] {
            let x = random_plane(&mut rng, h * w);
            let fast = dft2d(h, w, &x).unwrap();
            assert!(max_rel_err(fast.values(), &naive_dft(h, w, &x)) < 1e-8, "{h}x{w}");
        }
    }

    #[test]
    fn round_trip_64() {
        let mut rng = ChaCha8Rng::seed_from_u64(64);
        let x = random_plane(&mut rng, 64 * 64);
        let back = idft2d(&dft2d(64, 64, &x).unwrap());
        let err = x
            .iter()
            .zip(&back.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-9, "{err}");
        assert!(back.max_imaginary < 1e-9);
    }

    #[test]
    fn all_ones_spectrum_inverts_to_impulse() {
        let s = Spectrum::new(4, 4, vec![Complex64::new(1.0, 0.0); 16]).unwrap();
        let x = idft2d(&s).values;
        assert!((x[0] - 1.0).abs() < 1e-14);
        assert!(x[1..].iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn parseval() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &(h, w) in &[(8, 8), (5, 9), (16, 32)] {
            let x = random_plane(&mut rng, h * w);
            let energy: f64 = x.iter().map(|v| v * v).sum();
            let spectral: f64 = dft2d(h, w, &x)
                .unwrap()
                .values()
                .iter()
                .map(|c| c.norm_sqr())
                .sum::<f64>()
                / (h * w) as f64;
            assert!(((energy - spectral) / energy).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_non_finite_and_bad_shapes() {
        assert!(matches!(
            dft2d(1, 2, &[0.0, f64::INFINITY]),
            Err(Error::NonFinite { index: 1, .. })
        ));
        assert!(dft2d(2, 2, &[0.0; 3]).is_err());
        assert!(dft2d(0, 2, &[]).is_err());
    }

    #[test]
    fn amplitude_and_phase_of_known_values() {
        let s = Spectrum::new(1, 2, vec![Complex64::new(3.0, 4.0), Complex64::new(0.0, 0.0)]).unwrap();
        assert_eq!(s.amplitude(), vec![5.0, 0.0]);
        assert_eq!(s.phase(), vec![4f64.atan2(3.0), 0.0]);
        // negative zero imaginary part still maps to +π on the negative real axis
        let neg = Spectrum::new(1, 1, vec![Complex64::new(-1.0, 0.0)]).unwrap();
        assert_eq!(neg.phase()[0], PI);
    }

    #[test]
    fn mask_224_beta_0033() {
        let mask = low_freq_mask(224, 224, 0.033).unwrap();
        assert_eq!(mask.half_widths(), (7, 7));
        let rows: Vec<usize> = (0..224).filter(|&h| mask.contains(h, 0)).collect();
        let expected: Vec<usize> = (0..=7).chain(217..224).collect();
        assert_eq!(rows, expected);
        assert_eq!(mask.popcount(), 15 * 15);
    }

    #[test]
    fn mask_degenerate_band_is_dc_only() {
        let mask = low_freq_mask(16, 16, 0.05).unwrap();
        assert_eq!(mask.half_widths(), (0, 0));
        assert_eq!(mask.popcount(), 1);
        assert!(mask.contains(0, 0));
    }

    #[test]
    fn mask_popcount_by_enumeration() {
        let mask = low_freq_mask(16, 16, 0.25).unwrap();
        let mut count = 0;
        for h in 0..16 {
            for w in 0..16 {
                let row_in = h <= 4 || h >= 12;
                let col_in = w <= 4 || w >= 12;
                assert_eq!(mask.contains(h, w), row_in && col_in);
                count += usize::from(row_in && col_in);
            }
        }
        assert_eq!(count, 81);
        assert_eq!(mask.popcount(), 81);
    }

    #[test]
    fn mask_rejects_endpoints() {
        for beta in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(low_freq_mask(8, 8, beta).is_err(), "{beta}");
        }
    }

    #[test]
    fn constant_images_swap_dc() {
        let src = Image::filled(8, 8, 3, 0.25).unwrap();
        let tgt = Image::filled(8, 8, 3, 0.75).unwrap();
        for beta in [0.01, 0.2, 0.9] {
            let out = fda_transfer(&src, &tgt, beta).unwrap();
            assert!(out.data().iter().all(|v| (v - 0.75).abs() < 1e-12));
        }
    }

    #[test]
    fn transfer_rejects_mismatched_shapes() {
        let a = Image::filled(8, 8, 1, 0.5).unwrap();
        let b = Image::filled(8, 4, 1, 0.5).unwrap();
        let c = Image::filled(8, 8, 3, 0.5).unwrap();
        assert!(matches!(fda_transfer(&a, &b, 0.1), Err(Error::ShapeMismatch(_))));
        assert!(matches!(fda_transfer(&a, &c, 0.1), Err(Error::ShapeMismatch(_))));
        assert!(fda_transfer(&a, &a, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn linearity(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (h, w) = (8, 12);
            let x = random_plane(&mut rng, h * w);
            let y = random_plane(&mut rng, h * w);
            let combo: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
            let lhs = dft2d(h, w, &combo).unwrap();
            let fx = dft2d(h, w, &x).unwrap();
            let fy = dft2d(h, w, &y).unwrap();
            let rhs: Vec<Complex64> = fx.values().iter().zip(fy.values()).map(|(p, q)| a * p + b * q).collect();
            let scale = rhs.iter().map(|c| c.norm()).fold(1e-12, f64::max);
            for (l, r) in lhs.values().iter().zip(&rhs) {
                prop_assert!((l - r).norm() / scale < 1e-10);
            }
        }

        #[test]
        fn mask_monotone_in_beta(h in 1usize..40, w in 1usize..40, b1 in 0.001f64..0.999, b2 in 0.001f64..0.999) {
            let (lo, hi) = if b1 <= b2 { (b1, b2) } else { (b2, b1) };
            let small = low_freq_mask(h, w, lo).unwrap();
            let large = low_freq_mask(h, w, hi).unwrap();
            prop_assert!(small.popcount() <= large.popcount());
            prop_assert!(small.contains(0, 0));
            let ones: Vec<f64> = small.to_weights().iter().map(|m| m + (1.0 - m)).collect();
            prop_assert!(ones.iter().all(|&v| v == 1.0));
        }

        #[test]
        fn self_transfer_is_identity(seed in any::<u64>(), beta in 0.01f64..0.99) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let img = Image::new(16, 8, 3, random_plane(&mut rng, 16 * 8 * 3)).unwrap();
            let out = fda_transfer(&img, &img, beta).unwrap();
            for (a, b) in img.data().iter().zip(out.data()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
