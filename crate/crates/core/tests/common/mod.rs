#![allow(dead_code)]

use cvdose::{DoseLevel, OutcomeKind, SubjectRecord, TrialDataset};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Builds a dataset from `(arm, exposure, outcome)` rows; doses are `arm + 1`.
pub fn dataset(rows: &[(usize, f64, f64)], kind: OutcomeKind) -> TrialDataset {
    let arms = rows.iter().map(|r| r.0).max().unwrap() + 1;
    dataset_with_doses(
        rows,
        &(1..=arms).map(|d| d as f64).collect::<Vec<_>>(),
        kind,
    )
}

pub fn dataset_with_doses(
    rows: &[(usize, f64, f64)],
    doses: &[f64],
    kind: OutcomeKind,
) -> TrialDataset {
    let levels = doses
        .iter()
        .enumerate()
        .map(|(arm_index, &dose_value)| DoseLevel {
            arm_index,
            dose_value,
        })
        .collect();
    let subjects = rows
        .iter()
        .enumerate()
        .map(|(i, &(arm, c, y))| SubjectRecord {
            subject_id: format!("s{i:06}"),
            arm_index: arm,
            exposure: c,
            covariates: vec![],
            outcome: y,
        })
        .collect();
    TrialDataset::new(levels, vec![], subjects, kind)
}

/// `C = D + V` with balanced allocation over `doses`; `y` maps `(d, v, e)` to the outcome.
pub fn triangular(
    n: usize,
    doses: &[f64],
    seed: u64,
    kind: OutcomeKind,
    y: impl Fn(f64, f64, f64, &mut ChaCha8Rng) -> f64,
) -> TrialDataset {
    let mut r = rng(seed);
    let rows: Vec<_> = (0..n)
        .map(|i| {
            let arm = i % doses.len();
            let d = doses[arm];
            let v = normal(&mut r);
            let e = normal(&mut r);
            (arm, d + v, y(d, v, e, &mut r))
        })
        .collect();
    dataset_with_doses(&rows, doses, kind)
}
