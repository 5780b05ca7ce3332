//! Linear least squares, logistic maximum likelihood and sandwich covariance
//! for estimating-equation (EE) estimators.
//!
//! Every fit carries its per-subject score contributions and its *bread*,
//! the summed Jacobian `Σᵢ ∂eᵢ/∂β` of the estimating equations. Downstream
//! code stacks these across stages to propagate first-stage uncertainty.

use crate::error::{Error, Result};
use crate::linalg::{Matrix, PivotedQr};
use crate::scalar::Scalar;

const MAX_NEWTON_ITERATIONS: usize = 50;
const MAX_STEP_HALVINGS: usize = 10;
const SCORE_TOLERANCE: f64 = 1e-8;
const STEP_TOLERANCE: f64 = 1e-6;
const SEPARATION_COEFFICIENT: f64 = 30.0;
const SEPARATION_PROBABILITY: f64 = 1e-10;

/// Heteroskedasticity-consistent covariance flavour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HcType {
    /// `A⁻¹ B A⁻ᵀ` with no small-sample correction.
    #[default]
    Hc0,
    /// HC0 inflated by `n / (n − p)`.
    Hc1,
}

/// Regression design: `n × p` matrix with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix<T> {
    matrix: Matrix<T>,
    labels: Vec<String>,
}

impl<T: Scalar> DesignMatrix<T> {
    pub fn new(matrix: Matrix<T>, labels: Vec<String>) -> Result<Self> {
        if labels.len() != matrix.cols() {
            return Err(Error::InvalidInput(format!(
                "{} column labels for {} columns",
                labels.len(),
                matrix.cols()
            )));
        }
        if matrix.rows() < matrix.cols() {
            return Err(Error::InvalidInput(format!(
                "design has {} rows but {} columns",
                matrix.rows(),
                matrix.cols()
            )));
        }
        if !matrix.is_finite() {
            return Err(Error::InvalidInput(
                "design contains non-finite entries".into(),
            ));
        }
        Ok(Self { matrix, labels })
    }

    /// Builds a design from rows, labelling columns `x0, x1, …`.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let m = Matrix::from_rows(rows);
        let labels = (0..m.cols()).map(|j| format!("x{j}")).collect();
        Self::new(m, labels)
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.matrix
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn n(&self) -> usize {
        self.matrix.rows()
    }

    pub fn p(&self) -> usize {
        self.matrix.cols()
    }

    fn check_rank(&self) -> Result<PivotedQr<T>> {
        let qr = PivotedQr::new(&self.matrix);
        match qr.rank_deficient_column() {
            Some(col) => Err(Error::RankDeficient {
                column: self.labels[col].clone(),
            }),
            None => Ok(qr),
        }
    }
}

/// Result of a linear or logistic fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult<T> {
    pub coefficients: Vec<T>,
    /// Response-scale residuals `yᵢ − ŷᵢ`.
    pub residuals: Vec<T>,
    /// Fitted means `ŷᵢ` (probabilities for logistic fits).
    pub fitted: Vec<T>,
    /// Model-based covariance: `σ̂²(XᵀX)⁻¹` or the inverse Fisher information.
    pub model_covariance: Matrix<T>,
    /// Sandwich covariance.
    pub robust_covariance: Matrix<T>,
    pub converged: bool,
    pub iterations: usize,
    /// Working weights `∂ŷᵢ/∂ηᵢ`: 1 for linear fits, `p̂(1 − p̂)` for logistic.
    pub weights: Vec<T>,
    /// Per-subject EE contributions `xᵢ(yᵢ − ŷᵢ)`, `n × p`.
    pub score_contributions: Matrix<T>,
    /// Summed EE Jacobian `−Σᵢ wᵢ xᵢ xᵢᵀ`.
    pub bread: Matrix<T>,
}

impl<T: Scalar> FitResult<T> {
    pub fn robust_se(&self) -> Vec<T> {
        self.robust_covariance
            .diagonal()
            .into_iter()
            .map(|v| v.max(T::zero()).sqrt())
            .collect()
    }

    pub fn model_se(&self) -> Vec<T> {
        self.model_covariance
            .diagonal()
            .into_iter()
            .map(|v| v.max(T::zero()).sqrt())
            .collect()
    }
}

/// Ordinary least squares with HC0 robust covariance.
pub fn ols_fit<T: Scalar>(design: &DesignMatrix<T>, response: &[T]) -> Result<FitResult<T>> {
    ols_fit_with(design, response, HcType::Hc0)
}

pub fn ols_fit_with<T: Scalar>(
    design: &DesignMatrix<T>,
    response: &[T],
    hc: HcType,
) -> Result<FitResult<T>> {
    check_response_len(design, response)?;
    let qr = design.check_rank()?;
    let x = design.matrix();
    let (n, p) = (design.n(), design.p());

    let coefficients = qr.solve(response);
    let fitted = x.matvec(&coefficients);
    let residuals: Vec<T> = response.iter().zip(&fitted).map(|(&y, &f)| y - f).collect();

    let gram_inv = qr.gram_inverse();
    let rss: T = residuals.iter().map(|&r| r * r).sum();
    let sigma2 = if n > p {
        rss / T::from_count(n - p)
    } else {
        T::zero()
    };
    let model_covariance = gram_inv.scale(sigma2);

    let scores = score_matrix(x, &residuals);
    let meat = scores.weighted_gram(None);
    let mut robust = gram_inv.matmul(&meat).matmul(&gram_inv);
    symmetrize(&mut robust);
    let robust_covariance = apply_hc(robust, hc, n, p);

    Ok(FitResult {
        coefficients,
        residuals,
        fitted,
        model_covariance,
        robust_covariance,
        converged: true,
        iterations: 1,
        weights: vec![T::one(); n],
        score_contributions: scores,
        bread: x.weighted_gram(None).scale(-T::one()),
    })
}

/// Logistic regression by Newton–Raphson with step halving.
pub fn logistic_fit<T: Scalar>(design: &DesignMatrix<T>, response: &[T]) -> Result<FitResult<T>> {
    logistic_fit_with(design, response, HcType::Hc0)
}

pub fn logistic_fit_with<T: Scalar>(
    design: &DesignMatrix<T>,
    response: &[T],
    hc: HcType,
) -> Result<FitResult<T>> {
    check_response_len(design, response)?;
    if let Some(i) = response
        .iter()
        .position(|&y| y != T::zero() && y != T::one())
    {
        return Err(Error::InvalidInput(format!(
            "logistic response must be 0/1; row {i} is {}",
            response[i]
        )));
    }
    design.check_rank()?;
    let x = design.matrix();
    let (n, p) = (design.n(), design.p());

    let mut beta = vec![T::zero(); p];
    let mut loglik = log_likelihood(x, response, &beta);
    let mut converged = false;
    let mut iterations = 0;

    for iter in 0..MAX_NEWTON_ITERATIONS {
        iterations = iter;
        let probs = probabilities(x, &beta);
        let resid: Vec<T> = response.iter().zip(&probs).map(|(&y, &m)| y - m).collect();
        let score = x.tr_matvec(&resid);
        let weights: Vec<T> = probs.iter().map(|&m| m * (T::one() - m)).collect();
        let info_inv = match weighted_gram_inverse(x, &weights) {
            Some(m) => m,
            // Weights collapsed to zero on a full-rank design: fitted
            // probabilities are saturated.
            None => return Err(Error::separation()),
        };
        let step = info_inv.matvec(&score);

        let max_score = max_abs(&score);
        let max_beta = max_abs(&beta);
        if max_score <= T::lit(SCORE_TOLERANCE)
            && max_abs(&step) <= T::lit(STEP_TOLERANCE) * (T::one() + max_beta)
        {
            converged = true;
            break;
        }

        let mut t = T::one();
        let mut candidate = axpy(&beta, t, &step);
        let mut cand_ll = log_likelihood(x, response, &candidate);
        for _ in 0..MAX_STEP_HALVINGS {
            if cand_ll.is_finite() && cand_ll >= loglik {
                break;
            }
            t = t * T::lit(0.5);
            candidate = axpy(&beta, t, &step);
            cand_ll = log_likelihood(x, response, &candidate);
        }
        beta = candidate;
        loglik = cand_ll;
        iterations = iter + 1;
    }

    let probs = probabilities(x, &beta);
    if !converged {
        let big_coef = max_abs(&beta) > T::lit(SEPARATION_COEFFICIENT);
        let tol = T::lit(SEPARATION_PROBABILITY);
        let saturated = probs.iter().any(|&m| m < tol || m > T::one() - tol);
        if big_coef || saturated {
            return Err(Error::separation());
        }
    }

    let residuals: Vec<T> = response.iter().zip(&probs).map(|(&y, &m)| y - m).collect();
    let weights: Vec<T> = probs.iter().map(|&m| m * (T::one() - m)).collect();
    let info_inv = weighted_gram_inverse(x, &weights).ok_or_else(Error::separation)?;
    let scores = score_matrix(x, &residuals);
    let meat = scores.weighted_gram(None);
    let mut robust = info_inv.matmul(&meat).matmul(&info_inv);
    symmetrize(&mut robust);

    Ok(FitResult {
        coefficients: beta,
        residuals,
        fitted: probs,
        model_covariance: info_inv,
        robust_covariance: apply_hc(robust, hc, n, p),
        converged,
        iterations,
        bread: x.weighted_gram(Some(&weights)).scale(-T::one()),
        weights,
        score_contributions: scores,
    })
}

/// `bread⁻¹ (Σᵢ sᵢ sᵢᵀ) bread⁻ᵀ` for per-subject score rows `sᵢ`.
pub fn sandwich_covariance<T: Scalar>(
    score_contributions: &Matrix<T>,
    bread: &Matrix<T>,
) -> Result<Matrix<T>> {
    if bread.rows() != bread.cols() || bread.cols() != score_contributions.cols() {
        return Err(Error::InvalidInput(
            "sandwich: bread must be p × p matching the score columns".into(),
        ));
    }
    let inv = bread.inverse().ok_or(Error::SingularBread)?;
    let meat = score_contributions.weighted_gram(None);
    let mut out = inv.matmul(&meat).matmul(&inv.transpose());
    symmetrize(&mut out);
    Ok(out)
}

/// Inflates an HC0 covariance by `n / (n − p)`.
pub fn hc1_adjust<T: Scalar>(cov: &Matrix<T>, n: usize, p: usize) -> Matrix<T> {
    apply_hc(cov.clone(), HcType::Hc1, n, p)
}

/// Per-subject influence rows of a two-stage stacked estimating system.
///
/// Stage one solves `Σ e₁ᵢ(θ₁) = 0`, stage two `Σ e₂ᵢ(θ₁, θ₂) = 0`. With
/// breads `A₁₁ = Σ ∂e₁/∂θ₁`, `A₂₂ = Σ ∂e₂/∂θ₂` and cross derivative
/// `A₂₁ = Σ ∂e₂/∂θ₁`, row `i` of the result is
/// `ψᵢ = (−A₁₁⁻¹ s₁ᵢ, −A₂₂⁻¹ (s₂ᵢ + A₂₁ ψ₁ᵢ))`, so that `θ̂ − θ ≈ Σᵢ ψᵢ`.
pub fn stacked_influence<T: Scalar>(
    stage1_scores: &Matrix<T>,
    stage1_bread: &Matrix<T>,
    stage2_scores: &Matrix<T>,
    stage2_bread: &Matrix<T>,
    cross_derivative: &Matrix<T>,
) -> Result<Matrix<T>> {
    let n = stage1_scores.rows();
    let p1 = stage1_scores.cols();
    let p2 = stage2_scores.cols();
    let conformable = stage2_scores.rows() == n
        && stage1_bread.rows() == p1
        && stage1_bread.cols() == p1
        && stage2_bread.rows() == p2
        && stage2_bread.cols() == p2
        && cross_derivative.rows() == p2
        && cross_derivative.cols() == p1;
    if !conformable {
        return Err(Error::InvalidInput(
            "stacked EE covariance: non-conformable dimensions".into(),
        ));
    }
    let a11_inv = stage1_bread.inverse().ok_or(Error::SingularBread)?;
    let a22_inv = stage2_bread.inverse().ok_or(Error::SingularBread)?;

    let mut psi = Matrix::zeros(n, p1 + p2);
    for i in 0..n {
        let psi1: Vec<T> = a11_inv
            .matvec(stage1_scores.row(i))
            .into_iter()
            .map(|v| -v)
            .collect();
        let carried = cross_derivative.matvec(&psi1);
        let rhs: Vec<T> = stage2_scores
            .row(i)
            .iter()
            .zip(&carried)
            .map(|(&s, &c)| s + c)
            .collect();
        let psi2 = a22_inv.matvec(&rhs);
        let row = psi.row_mut(i);
        row[..p1].copy_from_slice(&psi1);
        for (dst, v) in row[p1..].iter_mut().zip(psi2) {
            *dst = -v;
        }
    }
    Ok(psi)
}

/// Joint sandwich covariance `Σᵢ ψᵢψᵢᵀ` of a two-stage stacked system; see
/// [`stacked_influence`]. Rows/columns are ordered `(θ₁, θ₂)`.
pub fn stacked_ee_covariance<T: Scalar>(
    stage1_scores: &Matrix<T>,
    stage1_bread: &Matrix<T>,
    stage2_scores: &Matrix<T>,
    stage2_bread: &Matrix<T>,
    cross_derivative: &Matrix<T>,
) -> Result<Matrix<T>> {
    let psi = stacked_influence(
        stage1_scores,
        stage1_bread,
        stage2_scores,
        stage2_bread,
        cross_derivative,
    )?;
    Ok(psi.weighted_gram(None))
}

fn check_response_len<T: Scalar>(design: &DesignMatrix<T>, response: &[T]) -> Result<()> {
    if response.len() != design.n() {
        return Err(Error::InvalidInput(format!(
            "response has {} entries for {} design rows",
            response.len(),
            design.n()
        )));
    }
    if response.iter().any(|y| !y.is_finite()) {
        return Err(Error::InvalidInput(
            "response contains non-finite values".into(),
        ));
    }
    Ok(())
}

fn score_matrix<T: Scalar>(x: &Matrix<T>, residuals: &[T]) -> Matrix<T> {
    let mut s = x.clone();
    for (i, &r) in residuals.iter().enumerate() {
        s.row_mut(i).iter_mut().for_each(|v| *v = *v * r);
    }
    s
}

fn weighted_gram_inverse<T: Scalar>(x: &Matrix<T>, weights: &[T]) -> Option<Matrix<T>> {
    let mut xw = x.clone();
    for (i, &w) in weights.iter().enumerate() {
        let s = w.sqrt();
        xw.row_mut(i).iter_mut().for_each(|v| *v = *v * s);
    }
    let qr = PivotedQr::new(&xw);
    if qr.rank_deficient_column().is_some() {
        return None;
    }
    Some(qr.gram_inverse())
}

pub(crate) fn expit<T: Scalar>(eta: T) -> T {
    if eta >= T::zero() {
        T::one() / (T::one() + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (T::one() + e)
    }
}

fn softplus<T: Scalar>(eta: T) -> T {
    // log(1 + e^η) without overflow.
    if eta > T::zero() {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

fn probabilities<T: Scalar>(x: &Matrix<T>, beta: &[T]) -> Vec<T> {
    x.matvec(beta).into_iter().map(expit).collect()
}

fn log_likelihood<T: Scalar>(x: &Matrix<T>, y: &[T], beta: &[T]) -> T {
    x.matvec(beta)
        .into_iter()
        .zip(y)
        .map(|(eta, &yi)| yi * eta - softplus(eta))
        .sum()
}

fn axpy<T: Scalar>(base: &[T], t: T, dir: &[T]) -> Vec<T> {
    base.iter().zip(dir).map(|(&b, &d)| b + t * d).collect()
}

fn max_abs<T: Scalar>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
}

fn symmetrize<T: Scalar>(m: &mut Matrix<T>) {
    let half = T::lit(0.5);
    for i in 0..m.rows() {
        for j in 0..i {
            let avg = (m[(i, j)] + m[(j, i)]) * half;
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

fn apply_hc<T: Scalar>(cov: Matrix<T>, hc: HcType, n: usize, p: usize) -> Matrix<T> {
    match hc {
        HcType::Hc0 => cov,
        HcType::Hc1 if n > p => cov.scale(T::from_count(n) / T::from_count(n - p)),
        HcType::Hc1 => cov,
    }
}
