//! Control-variable adjusted dose-response estimation for randomized dose
//! trials.
//!
//! Randomized dose `D` is an instrument for exposure `C`. Residuals of a
//! separable dose-exposure fit serve as a control variable `V̂`, which
//! working outcome models use to sharpen dose-level mean estimates without
//! giving up consistency when the working model is wrong.
//!
//! The linear algebra and regression layer is generic over [`Scalar`]
//! (`f32`/`f64`); the `*64` aliases below name the `f64` instantiations that
//! the rest of the crate uses.

pub mod cli_io;
pub mod control;
pub mod data;
pub mod error;
pub mod estimators;
pub mod linalg;
pub mod regression;
pub mod scalar;
pub mod simulation;

pub use control::{
    balance_diagnostic, export_density_data, fit_de_model, BalanceReport, Bandwidth,
    ControlVariableSet, DeModelSpec, DensityTable,
};
pub use data::{DoseLevel, OutcomeKind, SubjectRecord, TrialDataset, ValidationReport, Violation};
pub use error::{Error, Result};
pub use estimators::{
    ancova_adjusted, composite_de_er, linear_dr_fit, residual_inclusion, unadjusted_means,
    DoseEstimates, Family, Method, Structure, WorkingModelSpec,
};
pub use linalg::{Matrix, PivotedQr};
pub use regression::{
    logistic_fit, ols_fit, sandwich_covariance, stacked_ee_covariance, DesignMatrix, FitResult,
    HcType,
};
pub use scalar::Scalar;
pub use simulation::{
    generate_dataset, run_monte_carlo, true_means, ScenarioConfig, SimulationReport,
};

pub type Matrix64 = Matrix<f64>;
pub type Matrix32 = Matrix<f32>;
pub type DesignMatrix64 = DesignMatrix<f64>;
pub type DesignMatrix32 = DesignMatrix<f32>;
pub type FitResult64 = FitResult<f64>;
pub type FitResult32 = FitResult<f32>;
