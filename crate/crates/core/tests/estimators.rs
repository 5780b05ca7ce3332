mod common;

use common::{dataset, dataset_with_doses, normal, rng, triangular};
use cvdose::estimators::contrast;
use cvdose::{
    ancova_adjusted, composite_de_er, fit_de_model, linear_dr_fit, residual_inclusion,
    unadjusted_means, DeModelSpec, Error, Family, OutcomeKind, Structure, WorkingModelSpec,
};
use proptest::prelude::*;
use rand::Rng;

const NINE: [(usize, f64, f64); 9] = [
    (0, 0.7, 1.9),
    (0, 1.4, 2.6),
    (0, 1.1, 1.7),
    (1, 2.3, 4.4),
    (1, 1.6, 3.1),
    (1, 2.5, 3.9),
    (2, 3.6, 6.8),
    (2, 2.9, 5.2),
    (2, 2.4, 5.9),
];

/// Direct evaluation of `ȳₖ + n⁻¹Σᵢ ĝᵢₖ − nₖ⁻¹Σ_{Sₖ} ĝᵢₖ` with 2×2 normal
/// equations solved by Cramer's rule.
fn brute_force_ancova2(rows: &[(usize, f64, f64)]) -> Vec<f64> {
    let dose = |a: usize| (a + 1) as f64;
    let sdd: f64 = rows.iter().map(|r| dose(r.0).powi(2)).sum();
    let sdc: f64 = rows.iter().map(|r| dose(r.0) * r.1).sum();
    let gamma = sdc / sdd;
    let v: Vec<f64> = rows.iter().map(|r| r.1 - gamma * dose(r.0)).collect();
    let n = rows.len() as f64;
    (0..3)
        .map(|k| {
            let idx: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].0 == k).collect();
            let m = idx.len() as f64;
            let sv: f64 = idx.iter().map(|&i| v[i]).sum();
            let svv: f64 = idx.iter().map(|&i| v[i] * v[i]).sum();
            let sy: f64 = idx.iter().map(|&i| rows[i].2).sum();
            let svy: f64 = idx.iter().map(|&i| v[i] * rows[i].2).sum();
            let det = m * svv - sv * sv;
            let a = (svv * sy - sv * svy) / det;
            let b = (m * svy - sv * sy) / det;
            let g = |vi: f64| a + b * vi;
            let ybar = sy / m;
            let all = v.iter().map(|&vi| g(vi)).sum::<f64>() / n;
            let within = idx.iter().map(|&i| g(v[i])).sum::<f64>() / m;
            ybar + all - within
        })
        .collect()
}

#[test]
fn nine_subject_oracle() {
    let ds = dataset(&NINE, OutcomeKind::Continuous);
    let cv = fit_de_model(&ds, DeModelSpec::Proportional).unwrap();
    let est = ancova_adjusted(
        &ds,
        &cv,
        &WorkingModelSpec::new(Family::Linear, Structure::Ancova2),
    )
    .unwrap();
    for (a, b) in est.mu().iter().zip(brute_force_ancova2(&NINE)) {
        assert!((a - b).abs() <= 1e-10, "{a} vs {b}");
    }
}

#[test]
fn two_arm_anova_cancellation() {
    let ds = triangular(40, &[1.0, 2.0], 4, OutcomeKind::Continuous, |d, v, e, _| {
        d + v * v + e
    });
    let cv = fit_de_model(&ds, DeModelSpec::Anova).unwrap();
    let unadj = unadjusted_means(&ds).unwrap().mu();
    for s in [Structure::Ancova1, Structure::Ancova2] {
        let adj = ancova_adjusted(&ds, &cv, &WorkingModelSpec::new(Family::Linear, s)).unwrap();
        for (a, b) in adj.mu().iter().zip(&unadj) {
            assert!((a - b).abs() <= 1e-10);
        }
    }
}

#[test]
fn intercept_only_reproduces_arm_means() {
    let ds = triangular(
        60,
        &[1.0, 2.0, 3.0],
        8,
        OutcomeKind::Continuous,
        |d, v, e, _| d * v + e,
    );
    let cv = fit_de_model(&ds, DeModelSpec::Proportional).unwrap();
    let unadj = unadjusted_means(&ds).unwrap().mu();
    for s in [Structure::Ancova1, Structure::Ancova2] {
        let adj = ancova_adjusted(
            &ds,
            &cv,
            &WorkingModelSpec::intercept_only(Family::Linear, s),
        )
        .unwrap();
        for (a, b) in adj.mu().iter().zip(&unadj) {
            assert!((a - b).abs() <= 1e-12);
        }
    }
}

fn random_binary(seed: u64, n: usize) -> cvdose::TrialDataset {
    triangular(
        n,
        &[1.0, 2.0, 3.0],
        seed,
        OutcomeKind::Binary,
        |d, v, e, r| {
            let p = 1.0 / (1.0 + (-(0.4 * d - 0.8 + 0.7 * v + 0.3 * e)).exp());
            f64::from(r.random::<f64>() < p)
        },
    )
}

#[test]
fn canonical_link_identity_logistic_ancova2() {
    let spec = WorkingModelSpec::new(Family::Logistic, Structure::Ancova2);
    for seed in 0..100 {
        let ds = random_binary(seed, 90);
        let cv = fit_de_model(&ds, DeModelSpec::Proportional).unwrap();
        let est = ancova_adjusted(&ds, &cv, &spec).unwrap();
        let plug = est.plug_in.as_ref().unwrap();
        for (a, b) in est.mu().iter().zip(plug) {
            assert!((a - b).abs() <= 1e-8, "seed {seed}: {a} vs {b}");
        }
    }
}

#[test]
fn logistic_requires_binary_outcome() {
    let ds = dataset(&NINE, OutcomeKind::Continuous);
    let cv = fit_de_model(&ds, DeModelSpec::Proportional).unwrap();
    let spec = WorkingModelSpec::new(Family::Logistic, Structure::Ancova1);
    assert!(matches!(
        ancova_adjusted(&ds, &cv, &spec),
        Err(Error::InvalidInput(_))
    ));
}

#[test]
fn small_arm_is_degenerate_for_ancova2() {
    // Intercept plus V̂ needs at least 3 subjects per arm.
    let rows: Vec<_> = NINE
        .iter()
        .copied()
        .filter(|r| !(r.0 == 1 && r.1 == 2.5))
        .collect();
    let ds = dataset(&rows, OutcomeKind::Continuous);
    let cv = fit_de_model(&ds, DeModelSpec::Proportional).unwrap();
    let spec = WorkingModelSpec::new(Family::Linear, Structure::Ancova2);
    assert!(matches!(
        ancova_adjusted(&ds, &cv, &spec),
        Err(Error::DegenerateArm {
            arm: 1,
            size: 2,
            required: 3
        })
    ));
}

/// Population least-squares slope of `g(D)` on `D` under equal allocation.
fn population_slope(doses: &[f64], g: impl Fn(f64) -> f64) -> f64 {
    let k = doses.len() as f64;
    let md = doses.iter().sum::<f64>() / k;
    let mg = doses.iter().map(|&d| g(d)).sum::<f64>() / k;
    let cov = doses.iter().map(|&d| (d - md) * (g(d) - mg)).sum::<f64>() / k;
    let var = doses.iter().map(|&d| (d - md).powi(2)).sum::<f64>() / k;
    cov / var
}

#[test]
fn linear_dr_slope_under_cubic_confounding() {
    let doses = [1.0, 2.0, 3.0];
    let ds = triangular(20_000, &doses, 31, OutcomeKind::Continuous, |d, v, e, _| {
        2.0 * d + v.powi(3) + e
    });
    let cv = fit_de_model(&ds, DeModelSpec::Proportional).unwrap();
    let fit = linear_dr_fit(&ds, &cv).unwrap();
    let target = population_slope(&doses, |d| 2.0 * d);
    assert!(
        (fit.beta_d - target).abs() <= 3.0 * fit.se_d,
        "{} ± {}",
        fit.beta_d,
        fit.se_d
    );
}

#[test]
fn linear_dr_slope_is_best_linear_approximation() {
    let doses = [1.0, 2.0, 3.0];
    let target = population_slope(&doses, |d| d * d);
    assert!((target - 4.0).abs() < 1e-12);
    let ds = triangular(20_000, &doses, 32, OutcomeKind::Continuous, |d, v, e, _| {
        d * d + v + e
    });
    let cv = fit_de_model(&ds, DeModelSpec::Proportional).unwrap();
    let fit = linear_dr_fit(&ds, &cv).unwrap();
    assert!(
        (fit.beta_d - target).abs() <= 3.0 * fit.se_d,
        "{} ± {}",
        fit.beta_d,
        fit.se_d
    );
}

#[test]
fn residual_inclusion_recovers_exposure_effect() {
    let ds = triangular(
        20_000,
        &[1.0, 2.0, 3.0],
        33,
        OutcomeKind::Continuous,
        |d, v, e, _| 2.0 * (d + v) + v + e,
    );
    let cv = fit_de_model(&ds, DeModelSpec::Proportional).unwrap();
    let (b, se) = residual_inclusion(&ds, &cv, Family::Linear)
        .unwrap()
        .exposure_effect();
    assert!((b - 2.0).abs() <= 3.0 * se, "{b} ± {se}");

    let null = triangular(
        20_000,
        &[1.0, 2.0, 3.0],
        34,
        OutcomeKind::Continuous,
        |_, v, e, _| v + e,
    );
    let cv = fit_de_model(&null, DeModelSpec::Proportional).unwrap();
    let (b, se) = residual_inclusion(&null, &cv, Family::Linear)
        .unwrap()
        .exposure_effect();
    assert!(b.abs() <= 3.0 * se, "{b} ± {se}");
}

#[test]
fn composite_identity_and_null() {
    let ds = triangular(
        20_000,
        &[1.0, 2.0, 3.0],
        35,
        OutcomeKind::Continuous,
        |d, v, e, _| (d + v) + e,
    );
    let cv = fit_de_model(&ds, DeModelSpec::Proportional).unwrap();
    let fit = composite_de_er(&ds, &cv).unwrap();
    assert!((fit.beta_d - 1.0).abs() <= 3.0 * fit.se_d);
    assert!((fit.beta_v - 1.0).abs() <= 3.0 * fit.se_v);

    let mut r = rng(36);
    let rows: Vec<_> = (0..20_000)
        .map(|i| {
            let arm = i % 3;
            let c = 2.5 * (arm + 1) as f64 + normal(&mut r);
            (arm, c, normal(&mut r))
        })
        .collect();
    let ds = dataset(&rows, OutcomeKind::Continuous);
    let cv = fit_de_model(&ds, DeModelSpec::Proportional).unwrap();
    let fit = composite_de_er(&ds, &cv).unwrap();
    assert!(fit.beta_d.abs() <= 3.0 * fit.se_d);
}

#[test]
fn two_dose_composite_equals_linear_dr() {
    let ds = triangular(
        60,
        &[0.5, 1.5],
        37,
        OutcomeKind::Continuous,
        |d, v, e, _| (d + v).exp() + e,
    );
    let cv = fit_de_model(&ds, DeModelSpec::Proportional).unwrap();
    let a = composite_de_er(&ds, &cv).unwrap();
    let b = linear_dr_fit(&ds, &cv).unwrap();
    assert!((a.beta_d - b.beta_d).abs() <= 1e-8);
}

#[test]
fn unadjusted_contrasts() {
    let mut rows = Vec::new();
    for i in 0..13 {
        rows.push((0, 7.7, f64::from(i < 4)));
    }
    for i in 0..19 {
        rows.push((1, 8.7, f64::from(i < 10)));
    }
    let ds = dataset_with_doses(&rows, &[5e7, 5e8], OutcomeKind::Binary);
    let est = unadjusted_means(&ds).unwrap();
    let c = contrast(&est, 1, 0);
    assert!((c.estimate - (10.0 / 19.0 - 4.0 / 13.0)).abs() < 1e-15);
    let se = est.se();
    assert!((c.se - (se[0].powi(2) + se[1].powi(2)).sqrt()).abs() < 1e-15);
    let same = contrast(&est, 1, 1);
    assert_eq!(same.estimate, 0.0);
}

fn continuous_strategy() -> impl Strategy<Value = Vec<(usize, f64, f64)>> {
    prop::collection::vec((0usize..3, -3.0f64..3.0, -10.0f64..10.0), 24..48).prop_map(|mut rows| {
        // Every arm gets at least a few subjects.
        for (i, r) in rows.iter_mut().enumerate().take(12) {
            r.0 = i % 3;
        }
        rows.iter()
            .map(|&(a, v, y)| (a, (a + 1) as f64 + v, y))
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn location_equivariance(rows in continuous_strategy(), c in -50.0f64..50.0) {
        let ds = dataset(&rows, OutcomeKind::Continuous);
        let shifted = ds.map_outcomes(|y| y + c);
        let cv = fit_de_model(&ds, DeModelSpec::Proportional).unwrap();
        let base = unadjusted_means(&ds).unwrap().mu();
        let moved = unadjusted_means(&shifted).unwrap().mu();
        for (a, b) in base.iter().zip(&moved) {
            prop_assert!((b - a - c).abs() <= 1e-9 * (1.0 + c.abs()));
        }
        for s in [Structure::Ancova1, Structure::Ancova2] {
            let spec = WorkingModelSpec::new(Family::Linear, s);
            let base = ancova_adjusted(&ds, &cv, &spec).unwrap().mu();
            let moved = ancova_adjusted(&shifted, &cv, &spec).unwrap().mu();
            for (a, b) in base.iter().zip(&moved) {
                prop_assert!((b - a - c).abs() <= 1e-9 * (1.0 + c.abs()));
            }
        }
    }

    #[test]
    fn argmax_invariant_to_cv_scale(rows in continuous_strategy(), factor in 0.01f64..100.0) {
        let ds = dataset(&rows, OutcomeKind::Continuous);
        let cv = fit_de_model(&ds, DeModelSpec::Proportional).unwrap();
        let scaled = cv.rescaled(factor);
        for s in [Structure::Ancova1, Structure::Ancova2] {
            let spec = WorkingModelSpec::new(Family::Linear, s);
            let a = ancova_adjusted(&ds, &cv, &spec).unwrap().mu();
            let b = ancova_adjusted(&ds, &scaled, &spec).unwrap().mu();
            let argmax = |v: &[f64]| (0..v.len()).max_by(|&i, &j| v[i].total_cmp(&v[j])).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-8 * (1.0 + x.abs()));
            }
            prop_assert_eq!(argmax(&a), argmax(&b));
        }
    }

    #[test]
    fn contrasts_are_antisymmetric_and_cis_bracket(rows in continuous_strategy()) {
        let ds = dataset(&rows, OutcomeKind::Continuous);
        let cv = fit_de_model(&ds, DeModelSpec::Proportional).unwrap();
        let est = ancova_adjusted(&ds, &cv, &WorkingModelSpec::new(Family::Linear, Structure::Ancova1)).unwrap();
        for a in &est.arms {
            prop_assert!(a.se >= 0.0);
            prop_assert!(a.ci_low <= a.mu_hat && a.mu_hat <= a.ci_high);
            if a.se > 0.0 {
                prop_assert!(a.ci_low < a.mu_hat && a.mu_hat < a.ci_high);
            }
        }
        let mu = est.mu();
        for j in 0..3 {
            for k in 0..3 {
                let cjk = contrast(&est, j, k);
                let ckj = contrast(&est, k, j);
                prop_assert_eq!(cjk.estimate, mu[j] - mu[k]);
                prop_assert_eq!(cjk.estimate + ckj.estimate, 0.0);
            }
        }
    }

    #[test]
    fn linear_dr_refit_is_reproducible(rows in continuous_strategy()) {
        let ds = dataset(&rows, OutcomeKind::Continuous);
        let cv = fit_de_model(&ds, DeModelSpec::Proportional).unwrap();
        let a = linear_dr_fit(&ds, &cv).unwrap();
        let b = linear_dr_fit(&ds, &cv).unwrap();
        prop_assert!((a.beta_d - b.beta_d).abs() <= 1e-12 && (a.beta_v - b.beta_v).abs() <= 1e-12);
    }
}
