//! Budgeted active selection: target pool bookkeeping, selection strategies,
//! simulated oracle, spectral transfer of source images, and the end-to-end
//! experiment loop.

use std::collections::HashSet;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{ece_from_bins, per_class_accuracy, reliability_bins, ClassAccuracy, PredictionLog, ReliabilityBin};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::features::FeatureSet;
use crate::image::Image;
use crate::margin::{query_score, shannon_entropy, softmax_probs, Featurizer, LinearHead, MarginParams, QueryRecord};
use crate::rng::{sample_without_replacement, RunSeed, Stream, PAIRING, SELECTION, SHUFFLING};
use crate::spectral::{Decomposed, LowFreqMask};
use crate::synthetic::{FeatureSplits, ImageSplits};
use crate::train::Trainer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Margin plus gradient-agreement query score.
    #[default]
    Sdm,
    Random,
    Entropy,
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sdm" => Ok(Strategy::Sdm),
            "random" => Ok(Strategy::Random),
            "entropy" => Ok(Strategy::Entropy),
            other => Err(Error::InvalidParameter(format!("unknown strategy {other:?}"))),
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Strategy::Sdm => "sdm",
            Strategy::Random => "random",
            Strategy::Entropy => "entropy",
        })
    }
}

/// Target-side bookkeeping: which pool samples the oracle has labeled, and
/// in which round.
#[derive(Debug, Clone, PartialEq)]
pub struct Pool {
    ground_truth: Vec<usize>,
    labeled: Vec<bool>,
    labeled_order: Vec<usize>,
    rounds: Vec<Vec<usize>>,
    budget: usize,
}

impl Pool {
    /// `ground_truth` stays hidden until a sample is annotated.
    pub fn new(ground_truth: Vec<usize>, budget: usize) -> Result<Self> {
        if budget > ground_truth.len() {
            return Err(Error::InvalidConfig(format!(
                "budget {budget} exceeds the {}-sample pool",
                ground_truth.len()
            )));
        }
        Ok(Self {
            labeled: vec![false; ground_truth.len()],
            ground_truth,
            labeled_order: Vec::new(),
            rounds: Vec::new(),
            budget,
        })
    }

    pub fn len(&self) -> usize {
        self.ground_truth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ground_truth.is_empty()
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn is_labeled(&self, index: usize) -> bool {
        self.labeled[index]
    }

    pub fn unlabeled(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.labeled[i]).collect()
    }

    /// Labeled indices in annotation order.
    pub fn labeled(&self) -> &[usize] {
        &self.labeled_order
    }

    pub fn rounds(&self) -> &[Vec<usize>] {
        &self.rounds
    }

    /// Reveals labels for `indices` and records them as one round.
    pub fn annotate(&mut self, indices: &[usize]) -> Result<Vec<(usize, usize)>> {
        let mut seen = HashSet::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::InvalidParameter(format!(
                    "index {i} is outside the {}-sample pool",
                    self.len()
                )));
            }
            if self.labeled[i] || !seen.insert(i) {
                return Err(Error::AlreadyLabeled(i));
            }
        }
        if self.labeled_order.len() + indices.len() > self.budget {
            return Err(Error::InvalidConfig(format!(
                "annotating {} more samples would exceed the budget of {}",
                indices.len(),
                self.budget
            )));
        }
        let mut revealed = Vec::with_capacity(indices.len());
        for &i in indices {
            self.labeled[i] = true;
            self.labeled_order.push(i);
            revealed.push((i, self.ground_truth[i]));
        }
        self.rounds.push(indices.to_vec());
        Ok(revealed)
    }
}

/// One selected sample and the score that ranked it (`None` for random).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pick {
    pub sample_index: usize,
    pub score: Option<f64>,
    pub margin_score: Option<f64>,
    pub cosine_term: Option<f64>,
}

/// Picks `k` unlabeled pool samples. `pool_features` holds head features for
/// every pool sample, indexed like the pool.
pub fn select_batch(
    head: &LinearHead,
    pool_features: &[Vec<f64>],
    pool: &Pool,
    k: usize,
    strategy: Strategy,
    params: &MarginParams,
    rng: &mut Stream,
) -> Result<Vec<Pick>> {
    if pool_features.len() != pool.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} feature rows for a {}-sample pool",
            pool_features.len(),
            pool.len()
        )));
    }
    let candidates = pool.unlabeled();
    if k > candidates.len() {
        return Err(Error::NotEnoughSamples {
            requested: k,
            available: candidates.len(),
        });
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    match strategy {
        Strategy::Random => Ok(sample_without_replacement(rng, candidates.len(), k)
            .into_iter()
            .map(|c| Pick {
                sample_index: candidates[c],
                score: None,
                margin_score: None,
                cosine_term: None,
            })
            .collect()),
        Strategy::Sdm => {
            let records = candidates
                .par_iter()
                .map(|&i| {
                    query_score(head, &pool_features[i], params).map(|r| QueryRecord {
                        sample_index: i,
                        ..r
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let picks = records
                .into_iter()
                .map(|r| Pick {
                    sample_index: r.sample_index,
                    score: Some(r.q_value),
                    margin_score: Some(r.margin_score),
                    cosine_term: Some(r.cosine_term),
                })
                .collect();
            Ok(top_k(picks, k))
        }
        Strategy::Entropy => {
            let picks = candidates
                .par_iter()
                .map(|&i| {
                    let p = softmax_probs(&head.logits(&pool_features[i])?);
                    Ok(Pick {
                        sample_index: i,
                        score: Some(shannon_entropy(&p)),
                        margin_score: None,
                        cosine_term: None,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(top_k(picks, k))
        }
    }
}

/// Highest scores first, ascending sample index among equal scores.
fn top_k(mut picks: Vec<Pick>, k: usize) -> Vec<Pick> {
    picks.sort_by(|a, b| {
        let (sa, sb) = (a.score.unwrap_or(f64::NEG_INFINITY), b.score.unwrap_or(f64::NEG_INFINITY));
        sb.total_cmp(&sa).then(a.sample_index.cmp(&b.sample_index))
    });
    picks.truncate(k);
    picks
}

/// Cached spectra for re-pairing source images with random target images
/// every epoch.
#[derive(Debug, Clone)]
pub struct FdaPairing {
    source: Vec<Decomposed>,
    target: Vec<Decomposed>,
    mask: LowFreqMask,
}

impl FdaPairing {
    pub fn new(source: &[Image], target: &[Image], beta: f64) -> Result<Self> {
        let first = target.first().ok_or(Error::Empty("target image set"))?;
        if let Some(bad) = source.iter().chain(target).find(|img| !img.same_shape(first)) {
            return Err(Error::ShapeMismatch(format!(
                "image {}x{}x{} does not match {}x{}x{}",
                bad.height(),
                bad.width(),
                bad.channels(),
                first.height(),
                first.width(),
                first.channels()
            )));
        }
        let mask = LowFreqMask::new(first.height(), first.width(), beta)?;
        let decompose = |set: &[Image]| set.par_iter().map(Decomposed::of).collect::<Result<Vec<_>>>();
        Ok(Self {
            source: decompose(source)?,
            target: decompose(target)?,
            mask,
        })
    }

    /// Target index paired with each source image for one epoch.
    pub fn draw_pairs(&self, rng: &mut Stream) -> Vec<usize> {
        use rand::Rng;
        (0..self.source.len())
            .map(|_| rng.random_range(0..self.target.len()))
            .collect()
    }

    pub fn transfer(&self, pairs: &[usize]) -> Result<Vec<Image>> {
        self.source
            .par_iter()
            .zip(pairs)
            .map(|(src, &t)| src.transfer_from(&self.target[t], &self.mask))
            .collect()
    }
}

/// Spectral transfer of every source image with a uniformly drawn target
/// image; the draw for `epoch` comes from the seeded pairing stream.
pub fn apply_fda_to_source(
    source: &[Image],
    target: &[Image],
    beta: f64,
    seed: u64,
    epoch: usize,
) -> Result<Vec<Image>> {
    let pairing = FdaPairing::new(source, target, beta)?;
    let pairs = pairing.draw_pairs(&mut RunSeed::new(seed).child(PAIRING, epoch as u64));
    pairing.transfer(&pairs)
}

/// Input data of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub enum ExperimentData {
    Features(FeatureSplits),
    Images(ImageSplits),
}

impl ExperimentData {
    fn pool_labels(&self) -> Result<Vec<usize>> {
        match self {
            ExperimentData::Features(s) => s
                .target_pool
                .labels()
                .map(<[usize]>::to_vec)
                .ok_or_else(|| Error::InvalidParameter("target pool has no ground truth".into())),
            ExperimentData::Images(s) => Ok(s.target_pool.labels.clone()),
        }
    }

    fn num_classes(&self) -> usize {
        let max = match self {
            ExperimentData::Features(s) => [&s.source, &s.target_pool, &s.target_test]
                .iter()
                .filter_map(|f| f.max_label())
                .max(),
            ExperimentData::Images(s) => [&s.source, &s.target_pool, &s.target_test]
                .iter()
                .filter_map(|set| set.labels.iter().copied().max())
                .max(),
        };
        max.map_or(0, |m| m + 1)
    }

    fn input_dim(&self) -> usize {
        match self {
            ExperimentData::Features(s) => s.source.dim(),
            ExperimentData::Images(s) => s.source.images.first().map_or(0, |i| i.data().len()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_size: usize,
    pub labeled_target: usize,
    pub mean_loss: f64,
    pub target_test_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub epoch: usize,
    pub picks: Vec<Pick>,
}

impl RoundRecord {
    pub fn indices(&self) -> Vec<usize> {
        self.picks.iter().map(|p| p.sample_index).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinalMetrics {
    pub accuracy: f64,
    pub class_accuracy: ClassAccuracy,
    pub ece: f64,
    pub bins: Vec<ReliabilityBin>,
    pub predictions: PredictionLog,
}

#[derive(Debug, Clone)]
pub struct MetricsHistory {
    pub epochs: Vec<EpochRecord>,
    pub rounds: Vec<RoundRecord>,
    pub final_metrics: FinalMetrics,
    pub head: LinearHead,
    /// Pool indices labeled by the oracle, in annotation order.
    pub labeled: Vec<usize>,
    pub budget: usize,
}

impl MetricsHistory {
    pub fn write_epochs_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        for e in &self.epochs {
            wtr.serialize(e)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_round_csv<W: Write>(&self, round: usize, writer: W) -> Result<()> {
        #[derive(Serialize)]
        struct Row {
            round: usize,
            epoch: usize,
            rank: usize,
            sample_index: usize,
            score: Option<f64>,
            margin_score: Option<f64>,
            cosine_term: Option<f64>,
        }
        let record = &self.rounds[round];
        let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        wtr.write_record(["round", "epoch", "rank", "sample_index", "score", "margin_score", "cosine_term"])?;
        for (rank, p) in record.picks.iter().enumerate() {
            wtr.serialize(Row {
                round: record.round,
                epoch: record.epoch,
                rank,
                sample_index: p.sample_index,
                score: p.score,
                margin_score: p.margin_score,
                cosine_term: p.cosine_term,
            })?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn featurize_all(featurizer: &Featurizer, rows: Vec<&[f64]>) -> Result<Vec<Vec<f64>>> {
    rows.into_par_iter().map(|r| featurizer.forward(r)).collect()
}

fn feature_rows(set: &FeatureSet) -> Vec<&[f64]> {
    set.rows().collect()
}

fn image_rows(images: &[Image]) -> Vec<&[f64]> {
    images.iter().map(Image::data).collect()
}

fn evaluate(head: &LinearHead, features: &[Vec<f64>], labels: &[usize]) -> Result<PredictionLog> {
    let preds = features
        .par_iter()
        .map(|f| head.predict(f))
        .collect::<Result<Vec<_>>>()?;
    PredictionLog::new(
        preds.iter().map(|p| p.1).collect(),
        preds.iter().map(|p| p.0).collect(),
        labels.to_vec(),
    )
}

fn accuracy(log: &PredictionLog) -> f64 {
    if log.is_empty() {
        0.0
    } else {
        log.accuracy()
    }
}

/// Trains for `total_epochs`, running a selection round at the start of each
/// selection epoch. After a round, labeled target samples (without spectral
/// transfer) join the source samples in training.
pub fn run_experiment(config: &ExperimentConfig, data: &ExperimentData) -> Result<MetricsHistory> {
    config.validate()?;
    if config.use_fda && !matches!(data, ExperimentData::Images(_)) {
        return Err(Error::InvalidConfig("use_fda needs image data".into()));
    }
    let classes = data.num_classes();
    let pool_labels = data.pool_labels()?;
    let n_t = pool_labels.len();
    let per_round = config.per_round_count(n_t);
    let budget = config.budget(n_t)?;
    let mut pool = Pool::new(pool_labels, budget)?;
    let featurizer = config.featurizer.build(data.input_dim())?;

    let (source_labels, pool_features, test_features, test_labels) = match data {
        ExperimentData::Features(s) => (
            s.source.labels().ok_or(Error::Empty("source labels"))?.to_vec(),
            featurize_all(&featurizer, feature_rows(&s.target_pool))?,
            featurize_all(&featurizer, feature_rows(&s.target_test))?,
            s.target_test.labels().ok_or(Error::Empty("target test labels"))?.to_vec(),
        ),
        ExperimentData::Images(s) => (
            s.source.labels.clone(),
            featurize_all(&featurizer, image_rows(&s.target_pool.images))?,
            featurize_all(&featurizer, image_rows(&s.target_test.images))?,
            s.target_test.labels.clone(),
        ),
    };
    if source_labels.is_empty() {
        return Err(Error::Empty("source set"));
    }
    if test_labels.is_empty() {
        return Err(Error::Empty("target test split"));
    }

    let fda = match data {
        ExperimentData::Images(s) if config.use_fda => {
            Some(FdaPairing::new(&s.source.images, &s.target_pool.images, config.beta)?)
        }
        _ => None,
    };
    // source features are fixed unless they are re-styled every epoch
    let static_source = match (data, &fda) {
        (ExperimentData::Features(s), _) => Some(featurize_all(&featurizer, feature_rows(&s.source))?),
        (ExperimentData::Images(s), None) => Some(featurize_all(&featurizer, image_rows(&s.source.images))?),
        (ExperimentData::Images(_), Some(_)) => None,
    };

    let seed = RunSeed::new(config.seed);
    let mut shuffle_rng = seed.stream(SHUFFLING);
    let mut selection_rng = seed.stream(SELECTION);
    let params = config.margin_params();
    let mut trainer = Trainer::new(LinearHead::zeros(classes, featurizer.output_dim())?, config.optimizer_config())?;

    let mut epochs = Vec::with_capacity(config.total_epochs);
    let mut rounds = Vec::with_capacity(config.rounds);
    for epoch in 0..config.total_epochs {
        if let Some(round) = config.selection_epochs.iter().position(|&e| e == epoch) {
            let picks = select_batch(
                trainer.head(),
                &pool_features,
                &pool,
                per_round,
                config.strategy,
                &params,
                &mut selection_rng,
            )?;
            let indices: Vec<usize> = picks.iter().map(|p| p.sample_index).collect();
            pool.annotate(&indices)?;
            log::debug!("epoch {epoch}: round {round} labeled {} target samples", indices.len());
            rounds.push(RoundRecord { round, epoch, picks });
        }

        let transferred;
        let source_features: &[Vec<f64>] = match (&static_source, &fda) {
            (Some(features), _) => features,
            (None, Some(pairing)) => {
                let pairs = pairing.draw_pairs(&mut seed.child(PAIRING, epoch as u64));
                let images = pairing.transfer(&pairs)?;
                transferred = featurize_all(&featurizer, image_rows(&images))?;
                &transferred
            }
            (None, None) => unreachable!("source features are static without FDA"),
        };
        let mut rows: Vec<&[f64]> = source_features.iter().map(Vec::as_slice).collect();
        let mut labels = source_labels.clone();
        for &i in pool.labeled() {
            rows.push(&pool_features[i]);
            labels.push(pool_labels_at(&pool, i));
        }
        let mean_loss = trainer.train_epoch(&rows, &labels, &mut shuffle_rng)?;
        let log = evaluate(trainer.head(), &test_features, &test_labels)?;
        epochs.push(EpochRecord {
            epoch,
            train_size: rows.len(),
            labeled_target: pool.labeled().len(),
            mean_loss,
            target_test_accuracy: accuracy(&log),
        });
    }

    let head = trainer.into_head();
    let predictions = evaluate(&head, &test_features, &test_labels)?;
    let bins = reliability_bins(&predictions, config.calibration_bins)?;
    let final_metrics = FinalMetrics {
        accuracy: accuracy(&predictions),
        class_accuracy: per_class_accuracy(&predictions, classes)?,
        ece: ece_from_bins(&bins),
        bins,
        predictions,
    };
    Ok(MetricsHistory {
        epochs,
        rounds,
        final_metrics,
        head,
        labeled: pool.labeled().to_vec(),
        budget,
    })
}

fn pool_labels_at(pool: &Pool, index: usize) -> usize {
    debug_assert!(pool.is_labeled(index));
    pool.ground_truth[index]
}
