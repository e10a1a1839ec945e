//! Spectral-transfer guided active domain adaptation at desk scale.
//!
//! * [`spectral`]: 2-D DFT, amplitude/phase split, low-frequency masks and the
//!   source-to-target amplitude swap.
//! * [`margin`]: linear head, adaptive margin loss, margin and query scores
//!   with their closed-form gradients.
//! * [`train`]: minibatch AdaDelta/SGD training of the head.
//! * [`active`]: target pool, selection strategies, simulated oracle and the
//!   experiment loop.
//! * [`calibration`]: ECE, reliability bins and per-class accuracy.
//! * [`synthetic`]: seeded Gaussian and texture two-domain benchmarks.
//! * [`features`], [`netpbm`], [`config`], [`rng`]: file formats, JSON
//!   configuration and labeled random streams.

pub mod active;
pub mod calibration;
pub mod config;
pub mod error;
pub mod features;
pub mod image;
pub mod margin;
pub mod netpbm;
pub mod rng;
pub mod spectral;
pub mod stats;
pub mod synthetic;
pub mod train;

pub use error::{Error, ErrorKind, Result};
pub use features::{Domain, FeatureSet};
pub use image::Image;
pub use margin::{Featurizer, LinearHead, MarginParams, QueryRecord};
