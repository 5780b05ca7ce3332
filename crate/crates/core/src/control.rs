//! Dose-exposure model fitting and the residual control variable `V̂`.
//!
//! Only separable models `C = h(D, X; γ) + η` are supported, so the control
//! variable is the least-squares residual `V̂ᵢ = Cᵢ − h(Dᵢ, Xᵢ; γ̂)`.

use serde::{Deserialize, Serialize};

use crate::data::TrialDataset;
use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::regression::{ols_fit, DesignMatrix, FitResult};

/// Form of the dose-exposure model `h(D, X; γ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeModelSpec {
    /// One mean per arm (arm indicators, no separate intercept).
    Anova,
    /// `C = γ·D + η`.
    Proportional,
    /// `C = (γ₀ + γₓᵀX)·D + η`; needs at least one covariate.
    ProportionalWithCovariates,
    /// `C = γ₀ + γ_d·D + γₓᵀX + η`.
    LinearInDoseAndCovariates,
}

impl DeModelSpec {
    /// Whether the column space contains the constant vector, making `V̂`
    /// invariant to shifting all exposures.
    pub fn has_intercept(self) -> bool {
        matches!(
            self,
            DeModelSpec::Anova | DeModelSpec::LinearInDoseAndCovariates
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            DeModelSpec::Anova => "anova",
            DeModelSpec::Proportional => "proportional",
            DeModelSpec::ProportionalWithCovariates => "proportional_with_covariates",
            DeModelSpec::LinearInDoseAndCovariates => "linear_in_dose_and_covariates",
        }
    }
}

/// Builds the dose-exposure design implied by `spec`.
pub fn de_design(dataset: &TrialDataset, spec: DeModelSpec) -> Result<DesignMatrix<f64>> {
    let q = dataset.covariate_count();
    let k = dataset.arms();
    let mut labels: Vec<String> = Vec::new();
    match spec {
        DeModelSpec::Anova => labels.extend((0..k).map(|a| format!("arm{a}"))),
        DeModelSpec::Proportional => labels.push("dose".into()),
        DeModelSpec::ProportionalWithCovariates => {
            if q == 0 {
                return Err(Error::InvalidInput(
                    "proportional_with_covariates dose-exposure model needs at least one covariate"
                        .into(),
                ));
            }
            labels.push("dose".into());
            labels.extend(dataset.covariate_names.iter().map(|c| format!("dose:{c}")));
        }
        DeModelSpec::LinearInDoseAndCovariates => {
            labels.push("(intercept)".into());
            labels.push("dose".into());
            labels.extend(dataset.covariate_names.iter().cloned());
        }
    }

    let p = labels.len();
    let mut m = Matrix::zeros(dataset.n(), p);
    for (i, s) in dataset.subjects.iter().enumerate() {
        let d = dataset.dose_levels[s.arm_index].dose_value;
        let row = m.row_mut(i);
        match spec {
            DeModelSpec::Anova => row[s.arm_index] = 1.0,
            DeModelSpec::Proportional => row[0] = d,
            DeModelSpec::ProportionalWithCovariates => {
                row[0] = d;
                for (j, x) in s.covariates.iter().enumerate() {
                    row[1 + j] = x * d;
                }
            }
            DeModelSpec::LinearInDoseAndCovariates => {
                row[0] = 1.0;
                row[1] = d;
                row[2..].copy_from_slice(&s.covariates);
            }
        }
    }
    DesignMatrix::new(m, labels)
}

/// Fitted dose-exposure model and the residual control variables.
#[derive(Debug, Clone)]
pub struct ControlVariableSet {
    pub spec: DeModelSpec,
    pub gamma_hat: Vec<f64>,
    /// `V̂ᵢ`, in exposure units, aligned with the dataset's subject order.
    pub residuals: Vec<f64>,
    pub de_fit: FitResult<f64>,
    /// Dose-exposure design; row `i` is `−∂V̂ᵢ/∂γ`.
    pub design: DesignMatrix<f64>,
}

impl ControlVariableSet {
    /// `h(Dᵢ, Xᵢ; γ̂)` per subject.
    pub fn predicted_exposure(&self) -> Vec<f64> {
        self.design.matrix().matvec(&self.gamma_hat)
    }

    /// Number of DE parameters.
    pub fn gamma_len(&self) -> usize {
        self.gamma_hat.len()
    }

    /// Row `i` of the DE design.
    pub fn design_row(&self, i: usize) -> &[f64] {
        self.design.matrix().row(i)
    }

    /// Residual recomputed from the design and `γ̂`.
    pub fn reconstruct_residual(&self, i: usize, exposure: f64) -> f64 {
        exposure - dot(self.design_row(i), &self.gamma_hat)
    }

    /// Same fit with every control variable multiplied by `factor`.
    pub fn rescaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.residuals.iter_mut().for_each(|v| *v *= factor);
        out
    }
}

/// Fits the dose-exposure model by least squares and returns `γ̂` and `V̂`.
pub fn fit_de_model(dataset: &TrialDataset, spec: DeModelSpec) -> Result<ControlVariableSet> {
    let design = de_design(dataset, spec)?;
    let fit = ols_fit(&design, &dataset.exposures())?;
    Ok(ControlVariableSet {
        spec,
        gamma_hat: fit.coefficients.clone(),
        residuals: fit.residuals.clone(),
        de_fit: fit,
        design,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmBalance {
    pub arm: usize,
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    /// `(v, F̂ₖ(v))` on a grid shared by all arms.
    pub ecdf: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairBalance {
    pub arm_j: usize,
    pub arm_k: usize,
    /// Two-sample Kolmogorov–Smirnov statistic `sup |F̂ⱼ − F̂ₖ|`.
    pub ks: f64,
    /// Welch t statistic for the difference of residual means.
    pub t: f64,
}

/// Descriptive check that `V̂` is distributed alike across arms.
#[derive(Debug, Clone, PartialEq)]
pub struct BalanceReport {
    pub arms: Vec<ArmBalance>,
    pub pairs: Vec<PairBalance>,
    pub residuals_by_arm: Vec<Vec<f64>>,
}

impl BalanceReport {
    pub fn max_ks(&self) -> f64 {
        self.pairs.iter().map(|p| p.ks).fold(0.0, f64::max)
    }
}

const ECDF_GRID_POINTS: usize = 101;

pub fn balance_diagnostic(cv: &ControlVariableSet, dataset: &TrialDataset) -> BalanceReport {
    let residuals_by_arm: Vec<Vec<f64>> = dataset
        .arm_partition()
        .iter()
        .map(|idx| idx.iter().map(|&i| cv.residuals[i]).collect())
        .collect();
    balance_from_groups(residuals_by_arm)
}

/// Balance statistics for arbitrary per-arm samples.
pub fn balance_from_groups(residuals_by_arm: Vec<Vec<f64>>) -> BalanceReport {
    let (lo, hi) = residuals_by_arm
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let grid: Vec<f64> = if lo.is_finite() {
        (0..ECDF_GRID_POINTS)
            .map(|g| lo + (hi - lo) * g as f64 / (ECDF_GRID_POINTS - 1) as f64)
            .collect()
    } else {
        Vec::new()
    };

    let sorted: Vec<Vec<f64>> = residuals_by_arm
        .iter()
        .map(|r| {
            let mut s = r.clone();
            s.sort_by(f64::total_cmp);
            s
        })
        .collect();

    let arms = residuals_by_arm
        .iter()
        .zip(&sorted)
        .enumerate()
        .map(|(arm, (r, s))| {
            let (mean, sd) = mean_sd(r);
            ArmBalance {
                arm,
                n: r.len(),
                mean,
                sd,
                ecdf: grid.iter().map(|&v| (v, ecdf_at(s, v))).collect(),
            }
        })
        .collect::<Vec<_>>();

    let mut pairs = Vec::new();
    for j in 0..sorted.len() {
        for k in (j + 1)..sorted.len() {
            pairs.push(PairBalance {
                arm_j: j,
                arm_k: k,
                ks: ks_statistic(&sorted[j], &sorted[k]),
                t: welch_t(&arms[j], &arms[k]),
            });
        }
    }
    BalanceReport {
        arms,
        pairs,
        residuals_by_arm,
    }
}

fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

fn ecdf_at(sorted: &[f64], v: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    sorted.partition_point(|&x| x <= v) as f64 / sorted.len() as f64
}

/// Exact two-sample KS statistic on sorted samples.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return f64::NAN;
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

fn welch_t(a: &ArmBalance, b: &ArmBalance) -> f64 {
    let diff = a.mean - b.mean;
    let se2 = a.sd.powi(2) / a.n as f64 + b.sd.powi(2) / b.n as f64;
    if se2 > 0.0 {
        diff / se2.sqrt()
    } else if diff == 0.0 {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    }
}

/// KDE bandwidth choice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    /// Silverman's rule per arm; the largest is used for every arm.
    Auto,
    Fixed(f64),
}

pub const DENSITY_GRID_POINTS: usize = 256;

/// Per-arm Gaussian kernel densities on a common grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityTable {
    pub bandwidth: f64,
    pub grid: Vec<f64>,
    /// `curves[k][g]` is the arm-`k` density at `grid[g]`.
    pub curves: Vec<Vec<f64>>,
}

impl DensityTable {
    /// `(arm_index, grid_value, density)` rows, arm-major.
    pub fn rows(&self) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        self.curves
            .iter()
            .enumerate()
            .flat_map(move |(k, c)| self.grid.iter().zip(c).map(move |(&g, &d)| (k, g, d)))
    }

    /// Linear interpolation of arm `k`'s curve at `x` (0 outside the grid).
    pub fn value_at(&self, k: usize, x: f64) -> f64 {
        let g = &self.grid;
        if g.is_empty() || x < g[0] || x > g[g.len() - 1] {
            return 0.0;
        }
        let hi = g.partition_point(|&v| v < x).min(g.len() - 1);
        if hi == 0 {
            return self.curves[k][0];
        }
        let lo = hi - 1;
        let w = (x - g[lo]) / (g[hi] - g[lo]);
        self.curves[k][lo] * (1.0 - w) + self.curves[k][hi] * w
    }

    /// Trapezoidal integral of arm `k`'s curve over the grid.
    pub fn integral(&self, k: usize) -> f64 {
        self.grid
            .windows(2)
            .zip(self.curves[k].windows(2))
            .map(|(g, d)| 0.5 * (g[1] - g[0]) * (d[0] + d[1]))
            .sum()
    }
}

/// Silverman's rule of thumb `0.9·min(sd, IQR/1.34)·n^(−1/5)`.
pub fn silverman_bandwidth(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 2 {
        return 0.0;
    }
    let (_, sd) = mean_sd(x);
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&s, 0.75) - quantile_sorted(&s, 0.25);
    let spread = match (sd > 0.0, iqr > 0.0) {
        (true, true) => sd.min(iqr / 1.34),
        (true, false) => sd,
        _ => 0.0,
    };
    0.9 * spread * (n as f64).powf(-0.2)
}

fn quantile_sorted(s: &[f64], q: f64) -> f64 {
    let pos = q * (s.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    s[lo] + (s[hi] - s[lo]) * (pos - lo as f64)
}

pub fn export_density_data(report: &BalanceReport, bandwidth: Bandwidth) -> Result<DensityTable> {
    let all: Vec<f64> = report.residuals_by_arm.iter().flatten().copied().collect();
    if all.is_empty() {
        return Err(Error::InvalidInput("no residuals to smooth".into()));
    }
    let h = match bandwidth {
        Bandwidth::Fixed(h) if h > 0.0 && h.is_finite() => h,
        Bandwidth::Fixed(h) => {
            return Err(Error::InvalidInput(format!(
                "bandwidth must be positive, got {h}"
            )))
        }
        Bandwidth::Auto => {
            let h = report
                .residuals_by_arm
                .iter()
                .map(|r| silverman_bandwidth(r))
                .fold(0.0, f64::max);
            if h > 0.0 {
                h
            } else {
                // No spread anywhere: smooth each point mass at a scale
                // relative to its magnitude.
                1e-3 * all.iter().fold(1.0f64, |m, v| m.max(v.abs()))
            }
        }
    };

    let lo = all.iter().copied().fold(f64::INFINITY, f64::min) - 3.0 * h;
    let hi = all.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 3.0 * h;
    let grid: Vec<f64> = (0..DENSITY_GRID_POINTS)
        .map(|g| lo + (hi - lo) * g as f64 / (DENSITY_GRID_POINTS - 1) as f64)
        .collect();
    let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let curves = report
        .residuals_by_arm
        .iter()
        .map(|r| {
            grid.iter()
                .map(|&x| {
                    if r.is_empty() {
                        return 0.0;
                    }
                    let s: f64 = r
                        .iter()
                        .map(|&v| (-0.5 * ((x - v) / h).powi(2)).exp())
                        .sum();
                    s * norm / (h * r.len() as f64)
                })
                .collect()
        })
        .collect();
    Ok(DensityTable {
        bandwidth: h,
        grid,
        curves,
    })
}
