//! Dose-level mean estimators and linear dose-response fits.
//!
//! [`unadjusted_means`] gives the arm sample means. [`ancova_adjusted`]
//! augments them with a working outcome model in the control variable `V̂`
//! (and optionally baseline covariates), using
//! `μ̂ₖ = ȳₖ + n⁻¹ Σᵢ ĝᵢₖ − nₖ⁻¹ Σ_{i∈Sₖ} ĝᵢₖ`, which stays consistent when
//! the working model is wrong. Standard errors come from one stacked
//! estimating-equation sandwich over the dose-exposure fit, the working
//! model and the averaging step.

mod ancova;
mod bootstrap;
mod linear;
mod unadjusted;

pub use ancova::{ancova_adjusted, WorkingDesign};
pub use bootstrap::{bootstrap_se, BootstrapSummary};
pub use linear::{
    composite_de_er, linear_dr_fit, residual_inclusion, LinearDrFit, ResidualInclusionFit,
};
pub use unadjusted::unadjusted_means;

use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Linear,
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Structure {
    /// One model with arm indicators and shared `V̂`/covariate slopes.
    Ancova1,
    /// A separate model per arm.
    Ancova2,
}

/// Working outcome model used for adjustment. An intercept is always present.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkingModelSpec {
    pub family: Family,
    pub structure: Structure,
    #[serde(default)]
    pub include_covariates: bool,
    #[serde(default = "default_true")]
    pub include_cv: bool,
}

fn default_true() -> bool {
    true
}

impl WorkingModelSpec {
    pub fn new(family: Family, structure: Structure) -> Self {
        Self {
            family,
            structure,
            include_covariates: false,
            include_cv: true,
        }
    }

    /// Intercept-only working model (per arm), which reproduces the arm means.
    pub fn intercept_only(family: Family, structure: Structure) -> Self {
        Self {
            family,
            structure,
            include_covariates: false,
            include_cv: false,
        }
    }

    pub fn method(&self) -> Method {
        match self.structure {
            Structure::Ancova1 => Method::Ancova1,
            Structure::Ancova2 => Method::Ancova2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Unadjusted,
    Ancova1,
    Ancova2,
    ResidualInclusion,
    CompositeDeEr,
    LinearDr,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Unadjusted => "unadjusted",
            Method::Ancova1 => "ancova1",
            Method::Ancova2 => "ancova2",
            Method::ResidualInclusion => "residual_inclusion",
            Method::CompositeDeEr => "composite_de_er",
            Method::LinearDr => "linear_dr",
        }
    }

    /// Human label used in the estimates table.
    pub fn label(self) -> &'static str {
        match self {
            Method::Unadjusted => "No adjustment",
            Method::Ancova1 => "ANCOVA I",
            Method::Ancova2 => "ANCOVA II",
            Method::ResidualInclusion => "Residual inclusion",
            Method::CompositeDeEr => "Composite DE-ER",
            Method::LinearDr => "Linear DR",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmEstimate {
    pub arm: usize,
    pub dose_value: f64,
    pub n: usize,
    pub mu_hat: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// `Δ̂ⱼₖ = μ̂ⱼ − μ̂ₖ` with its standard error and 95% interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contrast {
    pub arm_j: usize,
    pub arm_k: usize,
    pub estimate: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DoseEstimates {
    pub method: Method,
    pub arms: Vec<ArmEstimate>,
    /// Joint covariance of `(μ̂₀, …, μ̂_{K−1})`.
    pub covariance: Matrix<f64>,
    /// Every ordered pair `j ≠ k`.
    pub contrasts: Vec<Contrast>,
    /// Plug-in averages `n⁻¹ Σᵢ ĝᵢₖ` for model-adjusted methods.
    pub plug_in: Option<Vec<f64>>,
}

impl DoseEstimates {
    pub(crate) fn assemble(
        method: Method,
        dose_values: &[f64],
        sizes: &[usize],
        mu: Vec<f64>,
        covariance: Matrix<f64>,
        plug_in: Option<Vec<f64>>,
    ) -> Self {
        let arms = mu
            .iter()
            .enumerate()
            .map(|(k, &m)| {
                let se = covariance[(k, k)].max(0.0).sqrt();
                ArmEstimate {
                    arm: k,
                    dose_value: dose_values[k],
                    n: sizes[k],
                    mu_hat: m,
                    se,
                    ci_low: m - Z_95 * se,
                    ci_high: m + Z_95 * se,
                }
            })
            .collect();
        let mut out = Self {
            method,
            arms,
            covariance,
            contrasts: Vec::new(),
            plug_in,
        };
        let k = out.arms.len();
        out.contrasts = (0..k)
            .flat_map(|j| (0..k).filter(move |&kk| kk != j).map(move |kk| (j, kk)))
            .map(|(j, kk)| contrast(&out, j, kk))
            .collect();
        out
    }

    pub fn mu(&self) -> Vec<f64> {
        self.arms.iter().map(|a| a.mu_hat).collect()
    }

    pub fn se(&self) -> Vec<f64> {
        self.arms.iter().map(|a| a.se).collect()
    }
}

/// Contrast between arms `j` and `k` using the joint covariance.
pub fn contrast(estimates: &DoseEstimates, j: usize, k: usize) -> Contrast {
    let mj = estimates.arms[j].mu_hat;
    let mk = estimates.arms[k].mu_hat;
    let c = &estimates.covariance;
    let var = if j == k {
        0.0
    } else {
        (c[(j, j)] + c[(k, k)] - 2.0 * c[(j, k)]).max(0.0)
    };
    let estimate = mj - mk;
    let se = var.sqrt();
    Contrast {
        arm_j: j,
        arm_k: k,
        estimate,
        se,
        ci_low: estimate - Z_95 * se,
        ci_high: estimate + Z_95 * se,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_arm(se: [f64; 2]) -> DoseEstimates {
        let cov = Matrix::from_diagonal(&[se[0] * se[0], se[1] * se[1]]);
        DoseEstimates::assemble(
            Method::Unadjusted,
            &[1.0, 2.0],
            &[10, 10],
            vec![0.154, 0.364],
            cov,
            None,
        )
    }

    #[test]
    fn independent_arm_contrast() {
        let est = two_arm([0.3, 0.4]);
        let c = contrast(&est, 1, 0);
        assert!((c.se - 0.5).abs() < 1e-15);
        assert!((c.estimate - 0.21).abs() < 1e-12);
    }

    #[test]
    fn self_contrast_is_zero() {
        let est = two_arm([0.3, 0.4]);
        let c = contrast(&est, 1, 1);
        assert_eq!((c.estimate, c.se), (0.0, 0.0));
    }

    #[test]
    fn contrasts_are_antisymmetric() {
        let est = two_arm([0.1, 0.2]);
        assert_eq!(est.contrasts.len(), 2);
        let a = contrast(&est, 0, 1);
        let b = contrast(&est, 1, 0);
        assert_eq!(a.estimate + b.estimate, 0.0);
        assert_eq!(a.se, b.se);
    }

    #[test]
    fn spec_json_defaults() {
        let spec: WorkingModelSpec =
            serde_json::from_str(r#"{"family":"logistic","structure":"ancova2"}"#).unwrap();
        assert!(spec.include_cv && !spec.include_covariates);
        assert_eq!(spec.method(), Method::Ancova2);
    }
}
