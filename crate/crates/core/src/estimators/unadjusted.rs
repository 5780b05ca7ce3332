use crate::data::TrialDataset;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

use super::{DoseEstimates, Method};

/// Arm sample means with `sd/√nₖ` standard errors; arms are independent.
pub fn unadjusted_means(dataset: &TrialDataset) -> Result<DoseEstimates> {
    let parts = dataset.arm_partition();
    let mut mu = Vec::with_capacity(parts.len());
    let mut var = Vec::with_capacity(parts.len());
    for (arm, idx) in parts.iter().enumerate() {
        let n = idx.len();
        if n < 2 {
            return Err(Error::DegenerateArm {
                arm,
                size: n,
                required: 2,
            });
        }
        let y: Vec<f64> = idx.iter().map(|&i| dataset.subjects[i].outcome).collect();
        let mean = y.iter().sum::<f64>() / n as f64;
        let ss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
        mu.push(mean);
        var.push(ss / (n - 1) as f64 / n as f64);
    }
    let doses: Vec<f64> = dataset.dose_levels.iter().map(|d| d.dose_value).collect();
    let sizes: Vec<usize> = parts.iter().map(Vec::len).collect();
    Ok(DoseEstimates::assemble(
        Method::Unadjusted,
        &doses,
        &sizes,
        mu,
        Matrix::from_diagonal(&var),
        None,
    ))
}
