//! Control-variable adjusted ANCOVA I/II estimators.

use crate::control::ControlVariableSet;
use crate::data::{OutcomeKind, TrialDataset};
use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::regression::{
    expit, logistic_fit, ols_fit, stacked_ee_covariance, DesignMatrix, FitResult,
};

use super::{DoseEstimates, Family, Structure, WorkingModelSpec};

/// Column layout of the working outcome model.
///
/// ANCOVA I uses one coefficient block `[1, arm₁, …, arm_{K−1}, V̂, X…]`
/// fitted to every subject. ANCOVA II uses one block `[1, V̂, X…]` per arm,
/// each fitted to that arm's subjects.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkingDesign {
    pub structure: Structure,
    pub arms: usize,
    pub include_cv: bool,
    pub covariates: usize,
}

impl WorkingDesign {
    pub fn new(spec: &WorkingModelSpec, dataset: &TrialDataset) -> Self {
        Self {
            structure: spec.structure,
            arms: dataset.arms(),
            include_cv: spec.include_cv,
            covariates: if spec.include_covariates {
                dataset.covariate_count()
            } else {
                0
            },
        }
    }

    fn indicator_cols(&self) -> usize {
        match self.structure {
            Structure::Ancova1 => self.arms - 1,
            Structure::Ancova2 => 0,
        }
    }

    /// Coefficients per block.
    pub fn block_len(&self) -> usize {
        1 + self.indicator_cols() + usize::from(self.include_cv) + self.covariates
    }

    pub fn blocks(&self) -> usize {
        match self.structure {
            Structure::Ancova1 => 1,
            Structure::Ancova2 => self.arms,
        }
    }

    /// Block whose coefficients describe arm `arm`.
    pub fn block_of(&self, arm: usize) -> usize {
        match self.structure {
            Structure::Ancova1 => 0,
            Structure::Ancova2 => arm,
        }
    }

    /// Position of the `V̂` column within a block.
    pub fn cv_column(&self) -> Option<usize> {
        self.include_cv.then(|| 1 + self.indicator_cols())
    }

    pub fn labels(&self, covariate_names: &[String]) -> Vec<String> {
        let mut l = vec!["(intercept)".to_string()];
        l.extend((1..=self.indicator_cols()).map(|a| format!("arm{a}")));
        if self.include_cv {
            l.push("cv".into());
        }
        l.extend(covariate_names.iter().take(self.covariates).cloned());
        l
    }

    /// Design row of a subject with control variable `v` and covariates `x`
    /// evaluated as if assigned to `arm`.
    pub fn row(&self, arm: usize, v: f64, x: &[f64]) -> Vec<f64> {
        let mut r = Vec::with_capacity(self.block_len());
        r.push(1.0);
        for a in 1..=self.indicator_cols() {
            r.push(if arm == a { 1.0 } else { 0.0 });
        }
        if self.include_cv {
            r.push(v);
        }
        r.extend_from_slice(&x[..self.covariates]);
        r
    }
}

struct WorkingFit {
    /// Coefficient blocks, one per [`WorkingDesign::blocks`].
    betas: Vec<Vec<f64>>,
}

fn fit_family(family: Family, design: &DesignMatrix<f64>, y: &[f64]) -> Result<FitResult<f64>> {
    match family {
        Family::Linear => ols_fit(design, y),
        Family::Logistic => logistic_fit(design, y),
    }
}

/// Inverse link and its derivative at linear predictor `eta`.
fn mean_and_slope(family: Family, eta: f64) -> (f64, f64) {
    match family {
        Family::Linear => (eta, 1.0),
        Family::Logistic => {
            let m = expit(eta);
            (m, m * (1.0 - m))
        }
    }
}

/// Model-adjusted dose means `μ̂ₖ = ȳₖ + μ̂ₖᵃ − μ̂ₖʷ` with stacked-EE standard errors.
///
/// `μ̂ₖᵃ = n⁻¹ Σᵢ ĝᵢₖ` averages the arm-`k` prediction over all subjects and
/// `μ̂ₖʷ` over arm `k` only. For the canonical links used here the last two
/// terms of the sum reduce to `μ̂ₖᵃ`, which is reported in
/// [`DoseEstimates::plug_in`].
pub fn ancova_adjusted(
    dataset: &TrialDataset,
    cv: &ControlVariableSet,
    spec: &WorkingModelSpec,
) -> Result<DoseEstimates> {
    let n = dataset.n();
    let k_arms = dataset.arms();
    if cv.residuals.len() != n {
        return Err(Error::InvalidInput(format!(
            "control variable has {} entries for {} subjects",
            cv.residuals.len(),
            n
        )));
    }
    if spec.family == Family::Logistic && dataset.outcome_kind != OutcomeKind::Binary {
        return Err(Error::InvalidInput(
            "logistic working model requires a binary outcome".into(),
        ));
    }

    let wd = WorkingDesign::new(spec, dataset);
    let p = wd.block_len();
    let parts = dataset.arm_partition();
    let y = dataset.outcomes();
    let labels = wd.labels(&dataset.covariate_names);
    let row_of = |i: usize, arm: usize| {
        let s = &dataset.subjects[i];
        wd.row(arm, cv.residuals[i], &s.covariates)
    };

    let working = match wd.structure {
        Structure::Ancova1 => {
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|i| row_of(i, dataset.subjects[i].arm_index))
                .collect();
            let design = DesignMatrix::new(Matrix::from_rows(&rows), labels)?;
            let fit = fit_family(spec.family, &design, &y)
                .map_err(|e| e.in_context("ANCOVA I working model"))?;
            WorkingFit {
                betas: vec![fit.coefficients],
            }
        }
        Structure::Ancova2 => {
            let mut betas = Vec::with_capacity(k_arms);
            for (arm, idx) in parts.iter().enumerate() {
                if idx.len() < p + 1 {
                    return Err(Error::DegenerateArm {
                        arm,
                        size: idx.len(),
                        required: p + 1,
                    });
                }
                let rows: Vec<Vec<f64>> = idx.iter().map(|&i| row_of(i, arm)).collect();
                let ya: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
                let design = DesignMatrix::new(Matrix::from_rows(&rows), labels.clone())?;
                let fit = fit_family(spec.family, &design, &ya)
                    .map_err(|e| e.in_context(format!("arm {arm} working model")))?;
                betas.push(fit.coefficients);
            }
            WorkingFit { betas }
        }
    };

    // Predictions ĝᵢₖ and slopes ∂ĝᵢₖ/∂η for every subject under every arm.
    let mut pred = Matrix::zeros(n, k_arms);
    let mut slope = Matrix::zeros(n, k_arms);
    for i in 0..n {
        for arm in 0..k_arms {
            let beta = &working.betas[wd.block_of(arm)];
            let (m, w) = mean_and_slope(spec.family, dot(&row_of(i, arm), beta));
            pred[(i, arm)] = m;
            slope[(i, arm)] = w;
        }
    }

    let sizes: Vec<usize> = parts.iter().map(Vec::len).collect();
    let mut mu = Vec::with_capacity(k_arms);
    let mut plug_in = Vec::with_capacity(k_arms);
    for (arm, idx) in parts.iter().enumerate() {
        let nk = idx.len() as f64;
        let ybar = idx.iter().map(|&i| y[i]).sum::<f64>() / nk;
        let within = idx.iter().map(|&i| pred[(i, arm)]).sum::<f64>() / nk;
        let overall = (0..n).map(|i| pred[(i, arm)]).sum::<f64>() / n as f64;
        mu.push(ybar + overall - within);
        plug_in.push(overall);
    }

    let covariance =
        stacked_mu_covariance(dataset, cv, spec.family, &wd, &working, &pred, &slope, &mu)?;
    let doses: Vec<f64> = dataset.dose_levels.iter().map(|d| d.dose_value).collect();
    Ok(DoseEstimates::assemble(
        spec.method(),
        &doses,
        &sizes,
        mu,
        covariance,
        Some(plug_in),
    ))
}

/// Covariance of `μ̂` from the stacked system `(γ; β-blocks, μ)`.
#[allow(clippy::too_many_arguments)]
fn stacked_mu_covariance(
    dataset: &TrialDataset,
    cv: &ControlVariableSet,
    family: Family,
    wd: &WorkingDesign,
    working: &WorkingFit,
    pred: &Matrix<f64>,
    slope: &Matrix<f64>,
    mu: &[f64],
) -> Result<Matrix<f64>> {
    let n = dataset.n();
    let k_arms = dataset.arms();
    let p = wd.block_len();
    let n_beta = p * wd.blocks();
    let p2 = n_beta + k_arms;
    let p1 = cv.gamma_len();
    let cv_col = wd.cv_column();
    let sizes = dataset.arm_sizes();

    let mut s2 = Matrix::zeros(n, p2);
    let mut a22 = Matrix::zeros(p2, p2);
    let mut a21 = Matrix::zeros(p2, p1);

    for i in 0..n {
        let subj = &dataset.subjects[i];
        let own = subj.arm_index;
        let z = cv.design_row(i);
        let x = wd.row(own, cv.residuals[i], &subj.covariates);
        let block = wd.block_of(own);
        let off = block * p;
        let beta = &working.betas[block];
        let (m, w) = mean_and_slope(family, dot(&x, beta));
        let r = subj.outcome - m;

        // Working-model estimating equations.
        for a in 0..p {
            s2[(i, off + a)] = x[a] * r;
            for b in 0..p {
                a22[(off + a, off + b)] -= w * x[a] * x[b];
            }
        }
        if let Some(c) = cv_col {
            let bv = beta[c];
            for g in 0..p1 {
                a21[(off + c, g)] -= z[g] * r;
                for a in 0..p {
                    a21[(off + a, g)] += w * bv * x[a] * z[g];
                }
            }
        }

        // Averaging equations for μ.
        for arm in 0..k_arms {
            let row = n_beta + arm;
            let factor = if own == arm {
                n as f64 / sizes[arm] as f64
            } else {
                0.0
            };
            let g = pred[(i, arm)];
            s2[(i, row)] = factor * (subj.outcome - g) + g - mu[arm];
            let coef = (1.0 - factor) * slope[(i, arm)];
            if coef == 0.0 {
                continue;
            }
            let xa = wd.row(arm, cv.residuals[i], &subj.covariates);
            let boff = wd.block_of(arm) * p;
            for a in 0..p {
                a22[(row, boff + a)] += coef * xa[a];
            }
            if let Some(c) = cv_col {
                let bv = working.betas[wd.block_of(arm)][c];
                for g in 0..p1 {
                    a21[(row, g)] -= coef * bv * z[g];
                }
            }
        }
    }
    // Each subject's μ equation has ∂/∂μₖ = −1.
    for arm in 0..k_arms {
        a22[(n_beta + arm, n_beta + arm)] = -(n as f64);
    }
    let joint = stacked_ee_covariance(
        &cv.de_fit.score_contributions,
        &cv.de_fit.bread,
        &s2,
        &a22,
        &a21,
    )?;
    Ok(joint.block(p1 + n_beta, p1 + n_beta, k_arms, k_arms))
}
