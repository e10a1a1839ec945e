//! Expected calibration error, reliability bins and per-class accuracy.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_BINS: usize = 10;

/// Confidence, predicted class and actual class for each evaluated sample.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PredictionLog {
    confidences: Vec<f64>,
    predicted: Vec<usize>,
    actual: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub confidence: f64,
    pub predicted: usize,
    pub actual: usize,
}

impl PredictionLog {
    pub fn new(confidences: Vec<f64>, predicted: Vec<usize>, actual: Vec<usize>) -> Result<Self> {
        if confidences.len() != predicted.len() || predicted.len() != actual.len() {
            return Err(Error::ShapeMismatch(format!(
                "prediction log columns have lengths {}, {}, {}",
                confidences.len(),
                predicted.len(),
                actual.len()
            )));
        }
        if let Some(bad) = confidences.iter().find(|&&c| !(c > 0.0 && c <= 1.0)) {
            return Err(Error::InvalidParameter(format!(
                "confidence {bad} is outside (0, 1]"
            )));
        }
        Ok(Self {
            confidences,
            predicted,
            actual,
        })
    }

    pub fn from_predictions(rows: &[Prediction]) -> Result<Self> {
        Self::new(
            rows.iter().map(|r| r.confidence).collect(),
            rows.iter().map(|r| r.predicted).collect(),
            rows.iter().map(|r| r.actual).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.confidences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.confidences.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = Prediction> + '_ {
        (0..self.len()).map(move |i| Prediction {
            confidence: self.confidences[i],
            predicted: self.predicted[i],
            actual: self.actual[i],
        })
    }

    pub fn accuracy(&self) -> f64 {
        let correct = self.iter().filter(|p| p.predicted == p.actual).count();
        correct as f64 / self.len() as f64
    }

    /// Reads `confidence,predicted,actual` rows with a header line.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let rows = rdr
            .deserialize::<Prediction>()
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Self::from_predictions(&rows)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        for row in self.iter() {
            wtr.serialize(row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub mean_confidence: f64,
    pub accuracy: f64,
}

impl ReliabilityBin {
    pub fn gap(&self) -> f64 {
        (self.accuracy - self.mean_confidence).abs()
    }
}

fn check(log: &PredictionLog, n_bins: usize) -> Result<()> {
    if log.is_empty() {
        return Err(Error::Empty("prediction log"));
    }
    if n_bins == 0 {
        return Err(Error::InvalidParameter("number of bins must be positive".into()));
    }
    Ok(())
}

/// Bin `b` (1-based) covers `((b-1)/n, b/n]`; confidence `c` lands in
/// `ceil(c·n)` clamped to `[1, n]`.
pub fn bin_index(confidence: f64, n_bins: usize) -> usize {
    let b = (confidence * n_bins as f64).ceil() as usize;
    b.clamp(1, n_bins) - 1
}

/// Equal-width bins over (0, 1]; empty bins have zero count and zero statistics.
pub fn reliability_bins(log: &PredictionLog, n_bins: usize) -> Result<Vec<ReliabilityBin>> {
    check(log, n_bins)?;
    let mut counts = vec![0usize; n_bins];
    let mut conf_sums = vec![0.0; n_bins];
    let mut correct = vec![0usize; n_bins];
    for p in log.iter() {
        let b = bin_index(p.confidence, n_bins);
        counts[b] += 1;
        conf_sums[b] += p.confidence;
        correct[b] += usize::from(p.predicted == p.actual);
    }
    Ok((0..n_bins)
        .map(|b| {
            let count = counts[b];
            let (mean_confidence, accuracy) = if count == 0 {
                (0.0, 0.0)
            } else {
                (conf_sums[b] / count as f64, correct[b] as f64 / count as f64)
            };
            ReliabilityBin {
                lower: b as f64 / n_bins as f64,
                upper: (b + 1) as f64 / n_bins as f64,
                count,
                mean_confidence,
                accuracy,
            }
        })
        .collect())
}

/// `Σ_b (n_b/N)·|acc_b − conf_b|` from already computed bins.
pub fn ece_from_bins(bins: &[ReliabilityBin]) -> f64 {
    let total: usize = bins.iter().map(|b| b.count).sum();
    bins.iter()
        .filter(|b| b.count > 0)
        .map(|b| b.count as f64 / total as f64 * b.gap())
        .sum()
}

pub fn ece(log: &PredictionLog, n_bins: usize) -> Result<f64> {
    Ok(ece_from_bins(&reliability_bins(log, n_bins)?))
}

/// Per-class accuracy in percent; `None` for classes without samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassAccuracy {
    pub per_class: Vec<Option<f64>>,
    /// Unweighted mean of the defined per-class accuracies.
    pub macro_average: Option<f64>,
}

pub fn per_class_accuracy(log: &PredictionLog, num_classes: usize) -> Result<ClassAccuracy> {
    let mut totals = vec![0usize; num_classes];
    let mut hits = vec![0usize; num_classes];
    for p in log.iter() {
        for class in [p.actual, p.predicted] {
            if class >= num_classes {
                return Err(Error::LabelOutOfRange {
                    label: class,
                    classes: num_classes,
                });
            }
        }
        totals[p.actual] += 1;
        hits[p.actual] += usize::from(p.predicted == p.actual);
    }
    let per_class: Vec<Option<f64>> = totals
        .iter()
        .zip(&hits)
        .map(|(&t, &h)| (t > 0).then(|| 100.0 * h as f64 / t as f64))
        .collect();
    let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
    let macro_average = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    Ok(ClassAccuracy {
        per_class,
        macro_average,
    })
}

/// One row of the calibration report: either a bin or the closing summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub row: String,
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub mean_confidence: f64,
    pub accuracy: f64,
    /// `(n_b/N)·gap` for bins; the total ECE on the summary row.
    pub ece: f64,
}

/// Writes the per-bin table followed by a `summary` row carrying the ECE.
pub fn write_report<W: Write>(log: &PredictionLog, n_bins: usize, writer: W) -> Result<f64> {
    let bins = reliability_bins(log, n_bins)?;
    let total = log.len();
    let ece = ece_from_bins(&bins);
    let mut wtr = csv::Writer::from_writer(writer);
    for b in &bins {
        wtr.serialize(ReportRow {
            row: "bin".into(),
            lower: b.lower,
            upper: b.upper,
            count: b.count,
            mean_confidence: b.mean_confidence,
            accuracy: b.accuracy,
            ece: if b.count > 0 {
                b.count as f64 / total as f64 * b.gap()
            } else {
                0.0
            },
        })?;
    }
    let mean_confidence = log.iter().map(|p| p.confidence).sum::<f64>() / total as f64;
    wtr.serialize(ReportRow {
        row: "summary".into(),
        lower: 0.0,
        upper: 1.0,
        count: total,
        mean_confidence,
        accuracy: log.accuracy(),
        ece,
    })?;
    wtr.flush()?;
    Ok(ece)
}

/// Parses a report back into its bins and the summary ECE.
pub fn read_report<R: Read>(reader: R) -> Result<(Vec<ReliabilityBin>, f64)> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut bins = Vec::new();
    let mut summary = None;
    for row in rdr.deserialize::<ReportRow>() {
        let row = row?;
        match row.row.as_str() {
            "bin" => bins.push(ReliabilityBin {
                lower: row.lower,
                upper: row.upper,
                count: row.count,
                mean_confidence: row.mean_confidence,
                accuracy: row.accuracy,
            }),
            "summary" => summary = Some(row.ece),
            other => return Err(Error::malformed("calibration report", format!("row kind {other:?}"))),
        }
    }
    let ece = summary.ok_or_else(|| Error::malformed("calibration report", "missing summary row"))?;
    Ok((bins, ece))
}
