//! In-memory feature pools and the `FEAT` binary container.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "FEAT" | version u32 | N u64 | D u64 | has_labels u8
//! | N*D f32 features, row-major
//! | N i32 labels            (only when has_labels == 1)
//! | N u8 domain tags        (0 = source, 1 = target)
//! ```

use std::fs;
use std::path::Path;

use crate::error::{ensure_finite, Error, Magic, Result};

pub const FEATURE_MAGIC: [u8; 4] = *b"FEAT";
pub const FEATURE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Domain {
    Source,
    Target,
}

impl Domain {
    pub fn tag(self) -> u8 {
        match self {
            Domain::Source => 0,
            Domain::Target => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Domain::Source),
            1 => Some(Domain::Target),
            _ => None,
        }
    }
}

/// N x D feature matrix with optional labels and a domain tag per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    dim: usize,
    features: Vec<f64>,
    labels: Option<Vec<usize>>,
    domains: Vec<Domain>,
}

impl FeatureSet {
    pub fn new(
        dim: usize,
        features: Vec<f64>,
        labels: Option<Vec<usize>>,
        domains: Vec<Domain>,
    ) -> Result<Self> {
        let n = domains.len();
        let expected = n.checked_mul(dim).ok_or(Error::Overflow("feature matrix"))?;
        if features.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "{n} samples of dimension {dim} need {expected} values, got {}",
                features.len()
            )));
        }
        if let Some(labels) = &labels {
            if labels.len() != n {
                return Err(Error::ShapeMismatch(format!(
                    "{} labels for {n} samples",
                    labels.len()
                )));
            }
        }
        ensure_finite("features", &features)?;
        Ok(Self {
            dim,
            features,
            labels,
            domains,
        })
    }

    /// All samples tagged with one domain.
    pub fn uniform(dim: usize, features: Vec<f64>, labels: Option<Vec<usize>>, domain: Domain) -> Result<Self> {
        let n = features
            .len()
            .checked_div(dim)
            .unwrap_or_else(|| labels.as_ref().map_or(0, Vec::len));
        Self::new(dim, features, labels, vec![domain; n])
    }

    pub fn len(&self) -> usize {
        self.domains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.domains.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.len()).map(move |i| self.row(i))
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn label(&self, i: usize) -> Option<usize> {
        self.labels.as_ref().map(|l| l[i])
    }

    pub fn domains(&self) -> &[Domain] {
        &self.domains
    }

    /// Subset in the given order.
    pub fn select(&self, indices: &[usize]) -> FeatureSet {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        FeatureSet {
            dim: self.dim,
            features,
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
            domains: indices.iter().map(|&i| self.domains[i]).collect(),
        }
    }

    pub fn max_label(&self) -> Option<usize> {
        self.labels.as_ref().and_then(|l| l.iter().copied().max())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let n = self.len();
        let mut out = Vec::with_capacity(25 + n * self.dim * 4 + n * 5);
        out.extend_from_slice(&FEATURE_MAGIC);
        out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
        out.extend_from_slice(&(n as u64).to_le_bytes());
        out.extend_from_slice(&(self.dim as u64).to_le_bytes());
        out.push(u8::from(self.labels.is_some()));
        for &v in &self.features {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        if let Some(labels) = &self.labels {
            for &l in labels {
                let l = i32::try_from(l).map_err(|_| Error::Overflow("label"))?;
                out.extend_from_slice(&l.to_le_bytes());
            }
        }
        out.extend(self.domains.iter().map(|d| d.tag()));
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic: [u8; 4] = r.take(4)?.try_into().unwrap();
        if magic != FEATURE_MAGIC {
            return Err(Error::BadMagic {
                expected: Magic(FEATURE_MAGIC),
                found: Magic(magic),
            });
        }
        let version = r.u32()?;
        if version != FEATURE_VERSION {
            return Err(Error::UnsupportedVersion {
                what: "feature file",
                version,
            });
        }
        let n = usize::try_from(r.u64()?).map_err(|_| Error::Overflow("feature count"))?;
        let dim = usize::try_from(r.u64()?).map_err(|_| Error::Overflow("feature dimension"))?;
        let has_labels = match r.take(1)?[0] {
            0 => false,
            1 => true,
            other => {
                return Err(Error::malformed(
                    "feature file",
                    format!("has_labels flag {other} is not 0 or 1"),
                ))
            }
        };
        let cells = n.checked_mul(dim).ok_or(Error::Overflow("feature matrix N*D"))?;
        let feature_bytes = cells.checked_mul(4).ok_or(Error::Overflow("feature matrix N*D"))?;
        let label_bytes = if has_labels {
            n.checked_mul(4).ok_or(Error::Overflow("label block"))?
        } else {
            0
        };
        let total = feature_bytes
            .checked_add(label_bytes)
            .and_then(|t| t.checked_add(n))
            .ok_or(Error::Overflow("feature payload"))?;
        let remaining = bytes.len() - r.pos;
        if remaining < total {
            return Err(Error::Truncated {
                what: "feature file",
                needed: total,
                available: remaining,
            });
        }
        if remaining > total {
            return Err(Error::TrailingBytes {
                what: "feature file",
                count: remaining - total,
            });
        }
        let features = r
            .take(feature_bytes)?
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
            .collect();
        let labels = if has_labels {
            let raw = r.take(label_bytes)?;
            let labels = raw
                .chunks_exact(4)
                .map(|c| {
                    let l = i32::from_le_bytes(c.try_into().unwrap());
                    usize::try_from(l)
                        .map_err(|_| Error::malformed("feature file", format!("negative label {l}")))
                })
                .collect::<Result<Vec<_>>>()?;
            Some(labels)
        } else {
            None
        };
        let domains = r
            .take(n)?
            .iter()
            .map(|&t| {
                Domain::from_tag(t)
                    .ok_or_else(|| Error::malformed("feature file", format!("domain tag {t}")))
            })
            .collect::<Result<Vec<_>>>()?;
        FeatureSet::new(dim, features, labels, domains)
    }
}

pub fn read_feature_file(path: impl AsRef<Path>) -> Result<FeatureSet> {
    FeatureSet::from_bytes(&fs::read(path)?)
}

pub fn write_feature_file(set: &FeatureSet, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, set.to_bytes()?)?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let available = self.bytes.len() - self.pos;
        if len > available {
            return Err(Error::Truncated {
                what: "feature file",
                needed: len,
                available,
            });
        }
        let out = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_by_three() -> FeatureSet {
        FeatureSet::new(
            3,
            vec![1.0, -2.0, 0.5, 0.0, 3.0, -0.25],
            Some(vec![1, 0]),
            vec![Domain::Source, Domain::Target],
        )
        .unwrap()
    }

    #[test]
    fn exact_layout() {
        let mut expected: Vec<u8> = b"FEAT".to_vec();
        expected.extend([1, 0, 0, 0]);
        expected.extend([2, 0, 0, 0, 0, 0, 0, 0]);
        expected.extend([3, 0, 0, 0, 0, 0, 0, 0]);
        expected.push(1);
        // f32 little-endian bit patterns
        expected.extend([0x00, 0x00, 0x80, 0x3f]); // 1.0
        expected.extend([0x00, 0x00, 0x00, 0xc0]); // -2.0
        expected.extend([0x00, 0x00, 0x00, 0x3f]); // 0.5
        expected.extend([0x00, 0x00, 0x00, 0x00]); // 0.0
        expected.extend([0x00, 0x00, 0x40, 0x40]); // 3.0
        expected.extend([0x00, 0x00, 0x80, 0xbe]); // -0.25
        expected.extend([1, 0, 0, 0, 0, 0, 0, 0]); // labels
        expected.extend([0, 1]); // domains
        assert_eq!(two_by_three().to_bytes().unwrap(), expected);
        assert_eq!(FeatureSet::from_bytes(&expected).unwrap(), two_by_three());
    }

    #[test]
    fn empty_set_round_trips() {
        let empty = FeatureSet::new(4, vec![], None, vec![]).unwrap();
        let bytes = empty.to_bytes().unwrap();
        assert_eq!(bytes.len(), 25);
        assert_eq!(FeatureSet::from_bytes(&bytes).unwrap(), empty);
    }

    #[test]
    fn bad_magic_is_reported() {
        let mut bytes = two_by_three().to_bytes().unwrap();
        bytes[0] = b'X';
        assert!(matches!(FeatureSet::from_bytes(&bytes), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn truncation_and_trailing_bytes() {
        let bytes = two_by_three().to_bytes().unwrap();
        for cut in [0, 3, 10, 24, bytes.len() - 1] {
            assert!(
                matches!(FeatureSet::from_bytes(&bytes[..cut]), Err(Error::Truncated { .. })),
                "cut at {cut}"
            );
        }
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(FeatureSet::from_bytes(&long), Err(Error::TrailingBytes { count: 1, .. })));
    }

    #[test]
    fn dimension_overflow() {
        let mut bytes = b"FEAT".to_vec();
        bytes.extend(1u32.to_le_bytes());
        bytes.extend(u64::MAX.to_le_bytes());
        bytes.extend(3u64.to_le_bytes());
        bytes.push(0);
        assert!(matches!(FeatureSet::from_bytes(&bytes), Err(Error::Overflow(_))));
    }

    #[test]
    fn bad_tags_and_labels() {
        let mut bytes = two_by_three().to_bytes().unwrap();
        let last = bytes.len() - 1;
        bytes[last] = 7;
        assert!(matches!(FeatureSet::from_bytes(&bytes), Err(Error::Malformed { .. })));
        let mut bytes = two_by_three().to_bytes().unwrap();
        let label_at = 25 + 6 * 4;
        bytes[label_at..label_at + 4].copy_from_slice(&(-1i32).to_le_bytes());
        assert!(matches!(FeatureSet::from_bytes(&bytes), Err(Error::Malformed { .. })));
    }

    #[test]
    fn rejects_inconsistent_sets() {
        assert!(FeatureSet::new(2, vec![0.0; 3], None, vec![Domain::Source]).is_err());
        assert!(FeatureSet::new(1, vec![0.0], Some(vec![]), vec![Domain::Source]).is_err());
        assert!(FeatureSet::new(1, vec![f64::NAN], None, vec![Domain::Source]).is_err());
    }

    proptest! {
        #[test]
        fn write_read_is_identity_on_bytes(
            n in 0usize..12,
            dim in 0usize..5,
            seed in any::<u32>(),
            with_labels in any::<bool>(),
        ) {
            let features: Vec<f64> = (0..n * dim)
                .map(|i| f64::from(((seed as usize + i * 7919) % 1000) as f32 / 8.0 - 60.0))
                .collect();
            let labels = with_labels.then(|| (0..n).map(|i| i % 3).collect());
            let domains = (0..n).map(|i| if i % 2 == 0 { Domain::Source } else { Domain::Target }).collect();
            let set = FeatureSet::new(dim, features, labels, domains).unwrap();
            let bytes = set.to_bytes().unwrap();
            let back = FeatureSet::from_bytes(&bytes).unwrap();
            prop_assert_eq!(&back, &set);
            prop_assert_eq!(back.to_bytes().unwrap(), bytes);
        }
    }
}
