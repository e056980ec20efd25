//! Continuous-conditional point-cloud generation.
//!
//! A TreeGCN generator takes a latent code and a continuous label (object
//! extents or part ratios); a PointNet discriminator scores realism and
//! regresses the label. Around the models sit KDE-based label sampling,
//! density-region stratification, the evaluation metrics, and two
//! non-learned baselines.

pub mod baselines;
pub mod conditioning;
pub mod error;
pub mod metrics;
pub mod models;
pub mod shapes;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
