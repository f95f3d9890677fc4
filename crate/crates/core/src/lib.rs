//! Calibrated confidence for classifiers that predict a Gaussian per class in
//! logit space.
//!
//! The [`estimate`] module holds the per-sample estimators: the sampling-free
//! product-of-pairwise-CDFs lower bound, a deterministic quadrature of the
//! exact integral, Monte-Carlo integration, joint sampling, and the
//! softmax-averaging baseline. [`field`] applies them to whole fields,
//! [`ensemble`] averages across independently trained members, [`metrics`]
//! measures calibration (ACE/ECE, reliability diagrams) and segmentation
//! quality (mIoU), [`toy`] trains a small Gaussian-head classifier end to end,
//! and [`io`] reads and writes the GLF1 tensor format and report files.

pub mod ensemble;
pub mod error;
pub mod estimate;
pub mod field;
pub mod gaussian;
pub mod io;
pub mod metrics;
pub mod normal;
pub mod rng;
pub mod toy;

pub use error::{Error, Result};
pub use estimate::{
    confidence_joint_sampling, confidence_lower_bound, confidence_mc, confidence_quadrature,
    pairwise_win_prob, softmax_avg_probs, win_prob_all_classes, QuadratureEstimate,
};
pub use field::{field_confidence, EstimatorConfig, FieldConfidence, Method};
pub use gaussian::{select_winner, ClassGaussians, GaussianField, GaussianView};
pub use normal::std_normal_cdf;
pub use rng::DeterministicStream;
