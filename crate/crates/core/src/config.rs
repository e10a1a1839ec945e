//! JSON experiment configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::active::Strategy;
use crate::error::{Error, Result};
use crate::margin::{Featurizer, MarginParams};
use crate::spectral::validate_beta;
use crate::synthetic::{GaussianBenchSpec, TextureBenchSpec};
use crate::train::{OptimizerConfig, OptimizerKind};

/// Which synthetic benchmark an experiment runs on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BenchmarkConfig {
    Gaussian(GaussianBenchSpec),
    Texture(TextureBenchSpec),
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig::Gaussian(GaussianBenchSpec::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FeaturizerKind {
    #[default]
    IdentityFlatten,
    FixedRandomProjection,
    ExternalFeatures,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturizerConfig {
    pub kind: FeaturizerKind,
    /// Output dimension of the random projection.
    pub output_dim: Option<usize>,
    pub seed: u64,
}

impl FeaturizerConfig {
    pub fn build(&self, input_dim: usize) -> Result<Featurizer> {
        match self.kind {
            FeaturizerKind::IdentityFlatten => Ok(Featurizer::IdentityFlatten { dim: input_dim }),
            FeaturizerKind::ExternalFeatures => Ok(Featurizer::External { dim: input_dim }),
            FeaturizerKind::FixedRandomProjection => {
                let out = self.output_dim.ok_or_else(|| {
                    Error::InvalidConfig("fixed_random_projection needs output_dim".into())
                })?;
                Featurizer::random_projection(input_dim, out, self.seed)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub rounds: usize,
    pub per_round_fraction: f64,
    /// Zero-based epochs whose start triggers a selection round.
    pub selection_epochs: Vec<usize>,
    pub total_epochs: usize,
    pub batch_size: usize,
    pub lambda: f64,
    pub beta: f64,
    pub m: f64,
    pub strategy: Strategy,
    pub use_fda: bool,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub rho: f64,
    pub eps: f64,
    pub calibration_bins: usize,
    pub benchmark: BenchmarkConfig,
    pub featurizer: FeaturizerConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            rounds: 5,
            per_round_fraction: 0.02,
            selection_epochs: vec![10, 12, 14, 16, 18],
            total_epochs: 50,
            batch_size: 32,
            lambda: 0.001,
            beta: 0.033,
            m: 1.0,
            strategy: Strategy::Sdm,
            use_fda: false,
            seed: 0,
            optimizer: OptimizerKind::Adadelta,
            learning_rate: 0.5,
            rho: 0.9,
            eps: 1e-6,
            calibration_bins: 10,
            benchmark: BenchmarkConfig::default(),
            featurizer: FeaturizerConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn margin_params(&self) -> MarginParams {
        MarginParams {
            m: self.m,
            lambda: self.lambda,
        }
    }

    pub fn optimizer_config(&self) -> OptimizerConfig {
        OptimizerConfig {
            kind: self.optimizer,
            learning_rate: self.learning_rate,
            rho: self.rho,
            eps: self.eps,
            batch_size: self.batch_size,
            epochs: self.total_epochs,
            margin: self.m,
            seed: self.seed,
        }
    }

    /// Checks everything that does not depend on the data.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.selection_epochs.len() != self.rounds {
            return bad(format!(
                "{} selection epochs for {} rounds",
                self.selection_epochs.len(),
                self.rounds
            ));
        }
        if self.selection_epochs.windows(2).any(|w| w[0] >= w[1]) {
            return bad("selection epochs must be strictly increasing".into());
        }
        if let Some(&last) = self.selection_epochs.last() {
            if last >= self.total_epochs {
                return bad(format!(
                    "selection epoch {last} is not before total_epochs {}",
                    self.total_epochs
                ));
            }
        }
        if self.selection_epochs.first() == Some(&0) {
            return bad("the head must train for at least one epoch before selecting".into());
        }
        if !(0.0..=1.0).contains(&self.per_round_fraction) {
            return bad(format!(
                "per_round_fraction must lie in [0, 1], got {}",
                self.per_round_fraction
            ));
        }
        if self.calibration_bins == 0 {
            return bad("calibration_bins must be positive".into());
        }
        validate_beta(self.beta).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        self.margin_params()
            .validate()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        self.optimizer_config()
            .validate()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        if self.use_fda && !matches!(self.benchmark, BenchmarkConfig::Texture(_)) {
            return bad("use_fda needs an image benchmark".into());
        }
        Ok(())
    }

    /// Samples labeled per round: `ceil(per_round_fraction · n_t)` of the
    /// original pool size.
    pub fn per_round_count(&self, pool_size: usize) -> usize {
        // the slack keeps products such as 0.07 * 100 from rounding up to 8
        let raw = self.per_round_fraction * pool_size as f64;
        ((raw - 1e-9).ceil().max(0.0) as usize).min(pool_size)
    }

    /// Total budget `B`; errors when it exceeds the pool.
    pub fn budget(&self, pool_size: usize) -> Result<usize> {
        let budget = self.rounds * self.per_round_count(pool_size);
        if budget > pool_size {
            return Err(Error::InvalidConfig(format!(
                "budget {budget} exceeds the {pool_size}-sample target pool"
            )));
        }
        Ok(budget)
    }
}
