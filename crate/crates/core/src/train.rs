//! Minibatch training of a [`LinearHead`] on the mean adaptive margin loss.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureSet;
use crate::margin::{adaptive_margin_loss, grad_loss_wrt_logits, GammaConvention, LinearHead};
use crate::rng::{seeded_stream, Stream, SHUFFLING};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adadelta,
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    /// AdaDelta decay of both running averages.
    pub rho: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub margin: f64,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Adadelta,
            learning_rate: 0.5,
            rho: 0.9,
            eps: 1e-6,
            batch_size: 32,
            epochs: 50,
            margin: 1.0,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be non-negative, got {}", self.learning_rate));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return bad(format!("rho must lie in (0, 1), got {}", self.rho));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return bad(format!("eps must be positive, got {}", self.eps));
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive".into());
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return bad(format!("margin must be positive, got {}", self.margin));
        }
        Ok(())
    }
}

/// Per-parameter optimizer state, laid out as all weights then all biases.
#[derive(Debug, Clone)]
enum OptimizerState {
    Sgd,
    Adadelta { square_avg: Vec<f64>, delta_avg: Vec<f64> },
}

/// Head plus optimizer state, advanced one epoch at a time.
#[derive(Debug, Clone)]
pub struct Trainer {
    head: LinearHead,
    config: OptimizerConfig,
    state: OptimizerState,
}

impl Trainer {
    pub fn new(head: LinearHead, config: OptimizerConfig) -> Result<Self> {
        config.validate()?;
        let params = head.weights().len() + head.bias().len();
        let state = match config.kind {
            OptimizerKind::Sgd => OptimizerState::Sgd,
            OptimizerKind::Adadelta => OptimizerState::Adadelta {
                square_avg: vec![0.0; params],
                delta_avg: vec![0.0; params],
            },
        };
        Ok(Self { head, config, state })
    }

    pub fn head(&self) -> &LinearHead {
        &self.head
    }

    pub fn into_head(self) -> LinearHead {
        self.head
    }

    /// One pass over `rows` (indices into `features`) in an order drawn from
    /// `rng`. Returns the mean per-sample loss observed during the pass.
    pub fn train_epoch(
        &mut self,
        features: &[&[f64]],
        labels: &[usize],
        rng: &mut Stream,
    ) -> Result<f64> {
        if features.is_empty() {
            return Err(Error::Empty("training set"));
        }
        if features.len() != labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} feature rows for {} labels",
                features.len(),
                labels.len()
            )));
        }
        let classes = self.head.classes();
        if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        if let Some(row) = features.iter().find(|r| r.len() != self.head.dim()) {
            return Err(Error::ShapeMismatch(format!(
                "head expects {} features, got {}",
                self.head.dim(),
                row.len()
            )));
        }
        let mut order: Vec<usize> = (0..features.len()).collect();
        order.shuffle(rng);
        let mut total = 0.0;
        for batch in order.chunks(self.config.batch_size) {
            total += self.step(batch.iter().map(|&i| (features[i], labels[i])));
        }
        Ok(total / features.len() as f64)
    }

    /// One update on the mean loss of a batch; returns the summed batch loss.
    fn step<'a>(&mut self, batch: impl Iterator<Item = (&'a [f64], usize)>) -> f64 {
        let (classes, dim) = (self.head.classes(), self.head.dim());
        let mut grad = vec![0.0; classes * dim + classes];
        let mut loss = 0.0;
        let mut count = 0usize;
        let m = self.config.margin;
        for (f, label) in batch {
            let z = self.head.logits_unchecked(f);
            loss += adaptive_margin_loss(&z, label, m).expect("validated");
            let gz = grad_loss_wrt_logits(&z, label, m, GammaConvention::DetachedGamma)
                .expect("validated");
            for (k, &g) in gz.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                for (slot, &x) in grad[k * dim..(k + 1) * dim].iter_mut().zip(f) {
                    *slot += g * x;
                }
                grad[classes * dim + k] += g;
            }
            count += 1;
        }
        let inv = 1.0 / count as f64;
        grad.iter_mut().for_each(|g| *g *= inv);
        self.apply(&grad);
        loss
    }

    fn apply(&mut self, grad: &[f64]) {
        let lr = self.config.learning_rate;
        let (rho, eps) = (self.config.rho, self.config.eps);
        let (weights, bias) = self.head.params_mut();
        let params = weights.iter_mut().chain(bias.iter_mut());
        match &mut self.state {
            OptimizerState::Sgd => {
                for (p, &g) in params.zip(grad) {
                    *p -= lr * g;
                }
            }
            OptimizerState::Adadelta {
                square_avg,
                delta_avg,
            } => {
                for (((p, &g), v), u) in params.zip(grad).zip(square_avg.iter_mut()).zip(delta_avg.iter_mut()) {
                    *v = rho * *v + (1.0 - rho) * g * g;
                    let delta = (*u + eps).sqrt() / (*v + eps).sqrt() * g;
                    *u = rho * *u + (1.0 - rho) * delta * delta;
                    *p -= lr * delta;
                }
            }
        }
    }
}

/// Result of [`train_head`].
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub head: LinearHead,
    /// Mean loss of each epoch.
    pub loss_history: Vec<f64>,
}

/// Trains `head` for `config.epochs` epochs on a labeled feature set.
pub fn train_head(head: LinearHead, data: &FeatureSet, config: &OptimizerConfig) -> Result<TrainOutcome> {
    if data.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let labels = data
        .labels()
        .ok_or_else(|| Error::InvalidParameter("training set has no labels".into()))?;
    let rows: Vec<&[f64]> = data.rows().collect();
    let mut trainer = Trainer::new(head, config.clone())?;
    let mut rng = seeded_stream(config.seed, SHUFFLING);
    let loss_history = (0..config.epochs)
        .map(|_| trainer.train_epoch(&rows, labels, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(TrainOutcome {
        head: trainer.into_head(),
        loss_history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::Domain;

    #[test]
    fn empty_and_unlabeled_sets_are_rejected() {
        let head = LinearHead::zeros(2, 2).unwrap();
        let empty = FeatureSet::new(2, vec![], Some(vec![]), vec![]).unwrap();
        assert!(matches!(
            train_head(head.clone(), &empty, &OptimizerConfig::default()),
            Err(Error::Empty(_))
        ));
        let unlabeled = FeatureSet::new(2, vec![0.0, 1.0], None, vec![Domain::Source]).unwrap();
        assert!(train_head(head.clone(), &unlabeled, &OptimizerConfig::default()).is_err());
        let bad_label = FeatureSet::new(2, vec![0.0, 1.0], Some(vec![5]), vec![Domain::Source]).unwrap();
        assert!(matches!(
            train_head(head, &bad_label, &OptimizerConfig::default()),
            Err(Error::LabelOutOfRange { .. })
        ));
    }

    #[test]
    fn config_validation() {
        let c = OptimizerConfig { batch_size: 0, ..Default::default() };
        assert!(c.validate().is_err());
        let c = OptimizerConfig { rho: 1.0, ..Default::default() };
        assert!(c.validate().is_err());
        let c = OptimizerConfig { learning_rate: -1.0, ..Default::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn sgd_step_matches_hand_computation() {
        // one sample, z = 0 for both classes, label 0, m = 1:
        // dL/dz = (-1 - 1, 1) = (-2, 1), f = (1, 2)
        let head = LinearHead::zeros(2, 2).unwrap();
        let data = FeatureSet::new(2, vec![1.0, 2.0], Some(vec![0]), vec![Domain::Source]).unwrap();
        let config = OptimizerConfig {
            kind: OptimizerKind::Sgd,
            learning_rate: 0.1,
            epochs: 1,
            ..Default::default()
        };
        let out = train_head(head, &data, &config).unwrap();
        let expected_w = [0.2, 0.4, -0.1, -0.2];
        for (w, e) in out.head.weights().iter().zip(expected_w) {
            assert!((w - e).abs() < 1e-15);
        }
        assert!((out.head.bias()[0] - 0.2).abs() < 1e-15);
        assert!((out.head.bias()[1] + 0.1).abs() < 1e-15);
        assert_eq!(out.loss_history, vec![1.0]);
    }
}
