//! Cross-modal knowledge distillation in a jointly Gaussian linear model.
//!
//! The teacher sees `x1`, the student sees `x2`, and both are correlated with a
//! scalar label `y`. The crate provides the population model and its sampler,
//! closed-form teacher and student fits, the high-dimensional asymptotic risk
//! of the distilled student, mutual-information estimators, the classification
//! distillation loss, and a sweep harness with CSV/SVG output.

pub mod asymptotic;
pub mod cli;
pub mod error;
pub mod gaussian_model;
pub mod harness;
pub mod linalg;
pub mod losses;
pub mod mi;
pub mod regression;
pub mod rng;
pub mod validation;

pub use asymptotic::{
    asymptotic_risk, asymptotic_risk_over, asymptotic_risk_under, cch_correlations, cch_mi_gap, cch_verdict,
    optimal_teacher_weight, small_lambda_condition, small_lambda_slope, solve_tau, AsymptoticContext, CchVerdict,
    RiskBreakdown,
};
pub use error::{Error, Result};
pub use gaussian_model::{
    apply_teacher_noise, derive_population_model, sample_dataset, validate_feasibility, CorrelationSpec, Dataset,
    PopulationModel,
};
pub use losses::{kd_loss, kd_loss_gradient, softened_softmax, DistillationConfig, LogitVector};
pub use mi::{digamma, gaussian_mi, ksg_mi, ross_mi, MiEstimate};
pub use regression::{fit_student, fit_teacher_empirical, fit_teacher_population, StudentEstimate, TeacherWeights};
