use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::TrialDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapSummary {
    pub draws: usize,
    /// Resamples on which the estimator failed (e.g. separation); excluded.
    pub failures: usize,
    /// Standard deviation of each estimate component across resamples.
    pub se: Vec<f64>,
}

/// Nonparametric bootstrap, resampling subjects with replacement within arm.
///
/// `estimator` is rerun from scratch on every resample, so the dose-exposure
/// fit is re-estimated too.
pub fn bootstrap_se<F>(
    dataset: &TrialDataset,
    draws: usize,
    seed: u64,
    estimator: F,
) -> Result<BootstrapSummary>
where
    F: Fn(&TrialDataset) -> Result<Vec<f64>>,
{
    if draws < 2 {
        return Err(Error::InvalidInput(
            "bootstrap needs at least 2 draws".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let parts = dataset.arm_partition();
    let mut samples: Vec<Vec<f64>> = Vec::with_capacity(draws);
    let mut failures = 0;
    for _ in 0..draws {
        let mut resampled = dataset.clone();
        resampled.subjects.clear();
        for idx in &parts {
            for _ in 0..idx.len() {
                let pick = idx[rng.random_range(0..idx.len())];
                resampled.subjects.push(dataset.subjects[pick].clone());
            }
        }
        match estimator(&resampled) {
            Ok(v) => samples.push(v),
            Err(_) => failures += 1,
        }
    }
    if samples.len() < 2 {
        return Err(Error::TooManyFailures {
            failed: failures,
            runs: draws,
        });
    }
    let dim = samples[0].len();
    let m = samples.len() as f64;
    let se = (0..dim)
        .map(|c| {
            let mean = samples.iter().map(|s| s[c]).sum::<f64>() / m;
            let ss: f64 = samples.iter().map(|s| (s[c] - mean).powi(2)).sum();
            (ss / (m - 1.0)).sqrt()
        })
        .collect();
    Ok(BootstrapSummary {
        draws,
        failures,
        se,
    })
}
