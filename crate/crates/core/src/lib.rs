//! Stochastic optimization of the area under the precision-recall curve.
//!
//! The crate provides
//!
//! * exact and surrogate AUPRC metrics over a full score set ([`metrics`]),
//! * the scalar surrogate losses and their derivatives ([`surrogate`]),
//! * mini-batch estimators with analytic gradients ([`estimator`]),
//! * score resampling onto a fixed length ([`interp`]),
//! * scorers and an SGD training loop with an auxiliary moving average
//!   ([`model`], [`trainer`]),
//! * a seeded Monte-Carlo lab for the estimator, interpolation, moving-average
//!   and stability studies ([`simlab`]).

pub mod data;
pub mod error;
pub mod estimator;
pub mod interp;
pub mod metrics;
pub mod model;
pub mod simlab;
pub mod surrogate;
pub mod trainer;

pub use data::{load_dataset, sample_batch, Batch, Dataset, Label, LabeledVector, RngHandle, ScoreRange, ScoreSet};
pub use error::{Error, Result};
pub use estimator::{
    ap_estimator, ap_estimator_grad, batch_estimator, batch_estimator_grad, AuxVector, EstimatorGradients,
};
pub use interp::{interp_sup_error, interpolate, InterpConfig};
pub use metrics::{ap_loss, empirical_auprc, pr_curve, surrogate_risk, PrCurve, PrPoint};
pub use model::{ModelKind, ScorerModel};
pub use surrogate::{ell1, ell1_prime, ell2, ell2_prime, sigma, sigma_prime, SurrogateParams};
pub use trainer::{
    batch_objective, ema_update, evaluate_auprc, interpolated_objective, lr_at, semi_variance, train,
    train_with_validation, AuxGradient, BatchObjective, LrSchedule, TrainConfig, TrainResult, TrainTrace,
};
