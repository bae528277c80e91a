//! Calibration of agents that state confidence with certainty phrases.
//!
//! Each phrase is a distribution over `[0, 1]` (a beta law or a point mass).
//! The crate measures calibration of phrase-valued predictions with
//! generalized binned and kernel estimators, and recalibrates phrase usage by
//! solving an entropic unbalanced optimal-transport problem whose cost is the
//! change in calibration error caused by swapping one phrase for another.
//!
//! All numerical code is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix it to `f64`.

// `!(x > 0)` comparisons are deliberate: they reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod bootstrap;
pub mod distribution;
pub mod error;
pub mod grid;
pub mod lexicon;
pub mod measure;
pub mod ot;
pub mod records;
pub mod reporting;
pub mod rng;
pub mod scalar;
pub mod special;
pub mod synth;

pub use bootstrap::{Estimate, Interval};
pub use distribution::{fit_method_of_moments, ConfidenceDistribution, KernelParams, MomentFit, SurveyStats};
pub use error::{Error, Result};
pub use grid::BinGrid;
pub use lexicon::{CertaintyLexicon, LexiconEntry};
pub use measure::{
    brier_and_accuracy, continuous_curve, ece_from_bins, ece_star_from_bins, measure, per_bin_estimates,
    BinStats, BootstrapConfig, MassMode, ReliabilityReport, SamplingConfig, ScoreSummary,
};
pub use ot::{
    apply_policy, cost_matrix, policy_from_plan, solve_balanced, solve_unbalanced, source_weights,
    CalibrationPolicy, CostMatrix, OtConfig, PolicyMode, TransportPlan,
};
pub use records::{PredictionRecord, Target};
pub use scalar::Scalar;
pub use synth::{AgentSpec, OutcomeRule};

pub type Distribution = ConfidenceDistribution<f64>;
pub type Lexicon = CertaintyLexicon<f64>;
pub type Grid = BinGrid<f64>;
pub type Bins = Vec<BinStats<f64>>;
pub type Report = ReliabilityReport<f64>;
pub type Costs = CostMatrix<f64>;
pub type Plan = TransportPlan<f64>;
pub type Policy = CalibrationPolicy<f64>;
pub type Agent = AgentSpec<f64>;

pub type Distribution32 = ConfidenceDistribution<f32>;
pub type Lexicon32 = CertaintyLexicon<f32>;
pub type Report32 = ReliabilityReport<f32>;
pub type Plan32 = TransportPlan<f32>;
