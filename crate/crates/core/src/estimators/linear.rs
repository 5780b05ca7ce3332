//! Single-model regressions on the control variable: linear dose-response,
//! residual inclusion and the composite dose-exposure / exposure-response fit.

use crate::control::{ControlVariableSet, DeModelSpec};
use crate::data::{OutcomeKind, TrialDataset};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::regression::{logistic_fit, ols_fit, stacked_ee_covariance, DesignMatrix, FitResult};

use super::Family;

/// Linear dose-response fit `Y = β₀ + β_d·D + β_v·V̂ + ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearDrFit {
    pub intercept: f64,
    pub beta_d: f64,
    pub beta_v: f64,
    pub se_intercept: f64,
    pub se_d: f64,
    pub se_v: f64,
    /// Covariance of `(β₀, β_d, β_v)` including dose-exposure uncertainty.
    pub covariance: Matrix<f64>,
}

impl LinearDrFit {
    fn from_cov(coef: [f64; 3], covariance: Matrix<f64>) -> Self {
        let se = |k: usize| covariance[(k, k)].max(0.0).sqrt();
        Self {
            intercept: coef[0],
            beta_d: coef[1],
            beta_v: coef[2],
            se_intercept: se(0),
            se_d: se(1),
            se_v: se(2),
            covariance,
        }
    }
}

/// Outcome regressed on exposure and control variable.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualInclusionFit {
    pub family: Family,
    pub labels: Vec<String>,
    /// `(β₀, β₁ for C, β₂ for V̂)`.
    pub coefficients: Vec<f64>,
    pub se: Vec<f64>,
    pub covariance: Matrix<f64>,
}

impl ResidualInclusionFit {
    /// Exposure coefficient `β̂₁` and its standard error.
    pub fn exposure_effect(&self) -> (f64, f64) {
        (self.coefficients[1], self.se[1])
    }
}

fn check_alignment(dataset: &TrialDataset, cv: &ControlVariableSet) -> Result<()> {
    if cv.residuals.len() != dataset.n() {
        return Err(Error::InvalidInput(format!(
            "control variable has {} entries for {} subjects",
            cv.residuals.len(),
            dataset.n()
        )));
    }
    Ok(())
}

/// Joint covariance of `(γ̂, β̂)` for a regression whose column `cv_col`
/// is the estimated control variable.
fn stacked_with_cv(
    cv: &ControlVariableSet,
    design: &DesignMatrix<f64>,
    fit: &FitResult<f64>,
    cv_col: usize,
) -> Result<Matrix<f64>> {
    let x = design.matrix();
    let (n, p) = (design.n(), design.p());
    let p1 = cv.gamma_len();
    let bv = fit.coefficients[cv_col];
    let mut cross = Matrix::zeros(p, p1);
    for i in 0..n {
        let z = cv.design_row(i);
        let xi = x.row(i);
        let (r, w) = (fit.residuals[i], fit.weights[i]);
        for g in 0..p1 {
            cross[(cv_col, g)] -= z[g] * r;
            for a in 0..p {
                cross[(a, g)] += w * bv * xi[a] * z[g];
            }
        }
    }
    stacked_ee_covariance(
        &cv.de_fit.score_contributions,
        &cv.de_fit.bread,
        &fit.score_contributions,
        &fit.bread,
        &cross,
    )
}

fn three_column_design(
    first: Vec<f64>,
    first_label: &str,
    cv: &ControlVariableSet,
) -> Result<DesignMatrix<f64>> {
    let rows: Vec<Vec<f64>> = first
        .iter()
        .zip(&cv.residuals)
        .map(|(&a, &v)| vec![1.0, a, v])
        .collect();
    DesignMatrix::new(
        Matrix::from_rows(&rows),
        vec!["(intercept)".into(), first_label.into(), "cv".into()],
    )
}

/// Least squares of `Y` on `(1, D, V̂)` with stacked robust covariance.
pub fn linear_dr_fit(dataset: &TrialDataset, cv: &ControlVariableSet) -> Result<LinearDrFit> {
    check_alignment(dataset, cv)?;
    let design = three_column_design(dataset.doses(), "dose", cv)?;
    let fit = ols_fit(&design, &dataset.outcomes())?;
    let joint = stacked_with_cv(cv, &design, &fit, 2)?;
    let p1 = cv.gamma_len();
    let c = &fit.coefficients;
    Ok(LinearDrFit::from_cov(
        [c[0], c[1], c[2]],
        joint.block(p1, p1, 3, 3),
    ))
}

/// Regression of `Y` on `(1, C, V̂)`: linear for [`Family::Linear`],
/// logistic for [`Family::Logistic`].
///
/// Only consistent when this outcome model is correct; kept as a baseline.
pub fn residual_inclusion(
    dataset: &TrialDataset,
    cv: &ControlVariableSet,
    family: Family,
) -> Result<ResidualInclusionFit> {
    check_alignment(dataset, cv)?;
    if family == Family::Logistic && dataset.outcome_kind != OutcomeKind::Binary {
        return Err(Error::InvalidInput(
            "logistic residual inclusion requires a binary outcome".into(),
        ));
    }
    let design = three_column_design(dataset.exposures(), "exposure", cv)?;
    let y = dataset.outcomes();
    let fit = match family {
        Family::Linear => ols_fit(&design, &y)?,
        Family::Logistic => logistic_fit(&design, &y)?,
    };
    let joint = stacked_with_cv(cv, &design, &fit, 2)?;
    let p1 = cv.gamma_len();
    let covariance = joint.block(p1, p1, 3, 3);
    let se = covariance
        .diagonal()
        .iter()
        .map(|v| v.max(0.0).sqrt())
        .collect();
    Ok(ResidualInclusionFit {
        family,
        labels: design.labels().to_vec(),
        coefficients: fit.coefficients,
        se,
        covariance,
    })
}

/// Composite fit: exposure-response `Y = β₀ + β_c·C + β_v·V̂` combined with the
/// proportional dose-exposure slope `γ̂`, giving `β_d* = β_c·γ̂` and
/// `β_v* = β_c + β_v`. Standard errors use the delta method on the stacked
/// covariance of `(γ̂, β̂)`.
pub fn composite_de_er(dataset: &TrialDataset, cv: &ControlVariableSet) -> Result<LinearDrFit> {
    check_alignment(dataset, cv)?;
    if cv.spec != DeModelSpec::Proportional {
        return Err(Error::InvalidInput(format!(
            "composite DE-ER needs the proportional dose-exposure model, got {}",
            cv.spec.name()
        )));
    }
    let design = three_column_design(dataset.exposures(), "exposure", cv)?;
    let fit = ols_fit(&design, &dataset.outcomes())?;
    // Order: (γ, β₀, β_c, β_v).
    let joint = stacked_with_cv(cv, &design, &fit, 2)?;
    let gamma = cv.gamma_hat[0];
    let (b0, bc, bv) = (
        fit.coefficients[0],
        fit.coefficients[1],
        fit.coefficients[2],
    );
    let jac = Matrix::from_rows(&[
        vec![0.0, 1.0, 0.0, 0.0],
        vec![bc, 0.0, gamma, 0.0],
        vec![0.0, 0.0, 1.0, 1.0],
    ]);
    let covariance = jac.matmul(&joint).matmul(&jac.transpose());
    Ok(LinearDrFit::from_cov([b0, bc * gamma, bc + bv], covariance))
}
