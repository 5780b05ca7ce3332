//! File formats and the command implementations behind the `cvdose` binary.
//!
//! Every command is a pure function of its input files and options: outputs
//! carry no timestamps, and floating-point values are written in Rust's
//! shortest round-trip form so re-parsing reproduces them exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::control::{
    balance_diagnostic, export_density_data, fit_de_model, Bandwidth, ControlVariableSet,
    DeModelSpec,
};
use crate::data::{DoseLevel, OutcomeKind, SubjectRecord, TrialDataset};
use crate::error::{Error, Result};
use crate::estimators::{
    ancova_adjusted, bootstrap_se, composite_de_er, linear_dr_fit, residual_inclusion,
    unadjusted_means, DoseEstimates, LinearDrFit, Method, Structure, WorkingModelSpec,
};
use crate::simulation::{
    report_table, run_monte_carlo, true_means, BiasScale, ScenarioConfig, SimOutcome,
    SimulationReport, DOSES, TABLE_HEADER,
};

const REQUIRED_COLUMNS: [&str; 5] = [
    "subject_id",
    "dose_arm",
    "dose_value",
    "exposure",
    "outcome",
];
const COVARIATE_PREFIX: &str = "covariate_";
pub const MIN_BOOTSTRAP_DRAWS: usize = 100;
pub const DEFAULT_SEED: u64 = 20_240_601;

fn default_ci_level() -> f64 {
    0.95
}

fn default_methods() -> Vec<Method> {
    vec![Method::Ancova2, Method::Ancova1, Method::Unadjusted]
}

/// Analysis settings read from the `--config` JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub de_spec: DeModelSpec,
    pub working: WorkingModelSpec,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    /// Only 0.95 is accepted.
    #[serde(default = "default_ci_level")]
    pub ci_level: f64,
    /// Bootstrap draws for a cross-check of the sandwich SEs.
    #[serde(default)]
    pub bootstrap: Option<usize>,
    /// Overrides outcome-kind inference from the data.
    #[serde(default)]
    pub outcome_kind: Option<OutcomeKind>,
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::InvalidInput(
                "config: methods must be nonempty".into(),
            ));
        }
        if (self.ci_level - 0.95).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!(
                "config: ci_level must be 0.95, got {}",
                self.ci_level
            )));
        }
        if let Some(b) = self.bootstrap {
            if b < MIN_BOOTSTRAP_DRAWS {
                return Err(Error::InvalidInput(format!(
                    "config: bootstrap needs at least {MIN_BOOTSTRAP_DRAWS} draws, got {b}"
                )));
            }
        }
        if self.methods.contains(&Method::CompositeDeEr)
            && self.de_spec != DeModelSpec::Proportional
        {
            return Err(Error::InvalidInput(
                "config: composite_de_er requires de_spec \"proportional\"".into(),
            ));
        }
        Ok(())
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Working model for a per-arm method, taking the structure from the method.
    fn working_for(&self, method: Method) -> WorkingModelSpec {
        let mut spec = self.working;
        match method {
            Method::Ancova1 => spec.structure = Structure::Ancova1,
            Method::Ancova2 => spec.structure = Structure::Ancova2,
            _ => {}
        }
        spec
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

fn parse_number(field: &str, column: &str, line: u64) -> Result<f64> {
    let t = field.trim();
    if t.is_empty() || t.eq_ignore_ascii_case("na") {
        // Missing values are reported by validation with the subject id.
        return Ok(f64::NAN);
    }
    t.parse::<f64>().map_err(|_| Error::Parse {
        line,
        message: format!("column {column}: cannot parse {t:?} as a number"),
    })
}

/// Reads and validates a trial CSV.
///
/// Header: `subject_id, dose_arm, dose_value, exposure, outcome` followed by
/// any number of `covariate_<name>` columns. The outcome is treated as binary
/// when every value is 0 or 1, unless `outcome_kind` overrides it.
pub fn parse_dataset(path: &Path, outcome_kind: Option<OutcomeKind>) -> Result<TrialDataset> {
    let text = read_to_string(path)?;
    parse_dataset_str(&text, outcome_kind)
}

pub fn parse_dataset_str(text: &str, outcome_kind: Option<OutcomeKind>) -> Result<TrialDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let header = reader.headers()?.clone();
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if names.len() < REQUIRED_COLUMNS.len() || names[..REQUIRED_COLUMNS.len()] != REQUIRED_COLUMNS {
        return Err(Error::Parse {
            line: 1,
            message: format!("header must start with {}", REQUIRED_COLUMNS.join(",")),
        });
    }
    let mut covariate_names = Vec::new();
    for name in &names[REQUIRED_COLUMNS.len()..] {
        match name.strip_prefix(COVARIATE_PREFIX) {
            Some(c) if !c.is_empty() => covariate_names.push(c.to_string()),
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    message: format!(
                    "unexpected column {name:?}; extra columns must be {COVARIATE_PREFIX}<name>"
                ),
                })
            }
        }
    }

    // arm -> (dose, first line it was seen on)
    let mut arms: BTreeMap<usize, (f64, u64)> = BTreeMap::new();
    let mut subjects = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != names.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", names.len(), record.len()),
            });
        }
        let subject_id = record[0].trim().to_string();
        if subject_id.is_empty() {
            return Err(Error::Parse {
                line,
                message: "empty subject_id".into(),
            });
        }
        let arm: usize = record[1].trim().parse().map_err(|_| Error::Parse {
            line,
            message: format!(
                "column dose_arm: {:?} is not a non-negative integer",
                &record[1]
            ),
        })?;
        let dose = parse_number(&record[2], "dose_value", line)?;
        match arms.get(&arm) {
            Some(&(d, first)) if d.to_bits() != dose.to_bits() => {
                return Err(Error::Parse {
                    line,
                    message: format!("arm {arm} has dose_value {dose} but line {first} gave {d}"),
                })
            }
            Some(_) => {}
            None => {
                arms.insert(arm, (dose, line));
            }
        }
        let exposure = parse_number(&record[3], "exposure", line)?;
        let outcome = parse_number(&record[4], "outcome", line)?;
        let covariates = (0..covariate_names.len())
            .map(|j| parse_number(&record[5 + j], names[5 + j], line))
            .collect::<Result<Vec<_>>>()?;
        subjects.push(SubjectRecord {
            subject_id,
            arm_index: arm,
            exposure,
            covariates,
            outcome,
        });
    }
    if subjects.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "no data rows".into(),
        });
    }
    let kind = outcome_kind.unwrap_or_else(|| {
        if subjects
            .iter()
            .all(|s| s.outcome == 0.0 || s.outcome == 1.0)
        {
            OutcomeKind::Binary
        } else {
            OutcomeKind::Continuous
        }
    });
    let levels = arms
        .into_iter()
        .map(|(arm_index, (dose_value, _))| DoseLevel {
            arm_index,
            dose_value,
        })
        .collect();
    TrialDataset::new(levels, covariate_names, subjects, kind).into_validated()
}

/// Canonical CSV form of a dataset, accepted by [`parse_dataset`].
pub fn dataset_to_csv(dataset: &TrialDataset) -> String {
    let mut out = REQUIRED_COLUMNS.join(",");
    for c in &dataset.covariate_names {
        write!(out, ",{COVARIATE_PREFIX}{c}").unwrap();
    }
    out.push('\n');
    for s in &dataset.subjects {
        let dose = dataset.dose_levels[s.arm_index].dose_value;
        write!(
            out,
            "{},{},{dose},{},{}",
            s.subject_id, s.arm_index, s.exposure, s.outcome
        )
        .unwrap();
        for x in &s.covariates {
            write!(out, ",{x}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn write_dataset(dataset: &TrialDataset, path: &Path) -> Result<()> {
    fs::write(path, dataset_to_csv(dataset))?;
    Ok(())
}

/// Options shared by all commands.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    /// Overrides the scenario seed, or seeds the bootstrap.
    pub seed: Option<u64>,
    /// Worker threads for simulations; `None` uses all cores.
    pub threads: Option<usize>,
}

impl RunOptions {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self {
            out_dir: out_dir.into(),
            seed: None,
            threads: None,
        }
    }

    fn prepare(&self) -> Result<()> {
        fs::create_dir_all(&self.out_dir)?;
        Ok(())
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Everything produced by `analyze`, also returned for programmatic use.
#[derive(Debug, Clone)]
pub struct AnalysisOutput {
    pub dataset: TrialDataset,
    pub control: ControlVariableSet,
    pub estimates: Vec<DoseEstimates>,
    pub linear: Vec<(Method, LinearDrFit)>,
    pub log: Vec<String>,
    pub files: Vec<PathBuf>,
}

pub const ESTIMATES_HEADER: [&str; 8] = [
    "method",
    "arm",
    "dose_value",
    "n",
    "estimate",
    "se",
    "ci_low",
    "ci_high",
];

/// Runs the configured estimators and writes `estimates.csv`,
/// `contrasts.csv`, `coefficients.csv`, `analyze.log` and, when requested,
/// `bootstrap.csv`.
pub fn cmd_analyze(data: &Path, config: &Path, opts: &RunOptions) -> Result<AnalysisOutput> {
    let cfg = AnalysisConfig::from_path(config)?;
    let ds = parse_dataset(data, cfg.outcome_kind)?;
    analyze_dataset(ds, &cfg, opts)
}

pub fn analyze_dataset(
    ds: TrialDataset,
    cfg: &AnalysisConfig,
    opts: &RunOptions,
) -> Result<AnalysisOutput> {
    cfg.validate()?;
    opts.prepare()?;
    let mut log = vec![
        format!("subjects: {}", ds.n()),
        format!("arms: {} (sizes {:?})", ds.arms(), ds.arm_sizes()),
        format!(
            "outcome: {}",
            match ds.outcome_kind {
                OutcomeKind::Binary => "binary",
                OutcomeKind::Continuous => "continuous",
            }
        ),
        format!("dose-exposure model: {}", cfg.de_spec.name()),
    ];
    let cv = fit_de_model(&ds, cfg.de_spec)?;
    log.push(format!("gamma_hat: {:?}", cv.gamma_hat));
    log.push(format!(
        "working model: family={} covariates={} cv={}",
        format!("{:?}", cfg.working.family).to_lowercase(),
        cfg.working.include_covariates,
        cfg.working.include_cv
    ));
    log.push(format!(
        "methods: {}",
        cfg.methods
            .iter()
            .map(|m| m.name())
            .collect::<Vec<_>>()
            .join(",")
    ));

    let mut estimates = Vec::new();
    let mut linear = Vec::new();
    let mut coef_rows: Vec<Vec<String>> = cv
        .design
        .labels()
        .iter()
        .zip(&cv.gamma_hat)
        .zip(cv.de_fit.robust_se())
        .map(|((l, g), s)| vec!["de_model".into(), l.clone(), g.to_string(), s.to_string()])
        .collect();

    for &method in &cfg.methods {
        match method {
            Method::Unadjusted => estimates.push(unadjusted_means(&ds)?),
            Method::Ancova1 | Method::Ancova2 => {
                let spec = cfg.working_for(method);
                let est = ancova_adjusted(&ds, &cv, &spec)?;
                if let Some(plug) = &est.plug_in {
                    let gap = est
                        .mu()
                        .iter()
                        .zip(plug)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max);
                    if gap > 1e-8 {
                        log.push(format!(
                            "warning: {} plug-in and three-term forms differ by {gap:e}",
                            method.name()
                        ));
                    }
                }
                estimates.push(est);
            }
            Method::ResidualInclusion => {
                let fit = residual_inclusion(&ds, &cv, cfg.working.family)?;
                for ((l, b), s) in fit.labels.iter().zip(&fit.coefficients).zip(&fit.se) {
                    coef_rows.push(vec![
                        method.name().into(),
                        l.clone(),
                        b.to_string(),
                        s.to_string(),
                    ]);
                }
            }
            Method::LinearDr | Method::CompositeDeEr => {
                let fit = if method == Method::LinearDr {
                    linear_dr_fit(&ds, &cv)?
                } else {
                    composite_de_er(&ds, &cv)?
                };
                for (term, b, s) in [
                    ("(intercept)", fit.intercept, fit.se_intercept),
                    ("dose", fit.beta_d, fit.se_d),
                    ("cv", fit.beta_v, fit.se_v),
                ] {
                    coef_rows.push(vec![
                        method.name().into(),
                        term.into(),
                        b.to_string(),
                        s.to_string(),
                    ]);
                }
                linear.push((method, fit));
            }
        }
    }

    let mut files = Vec::new();
    let est_rows: Vec<Vec<String>> = estimates
        .iter()
        .flat_map(|e| {
            e.arms.iter().map(move |a| {
                vec![
                    e.method.label().to_string(),
                    a.arm.to_string(),
                    a.dose_value.to_string(),
                    a.n.to_string(),
                    a.mu_hat.to_string(),
                    a.se.to_string(),
                    a.ci_low.to_string(),
                    a.ci_high.to_string(),
                ]
            })
        })
        .collect();
    let p = opts.path("estimates.csv");
    write_csv(&p, &ESTIMATES_HEADER, &est_rows)?;
    files.push(p);

    let contrast_rows: Vec<Vec<String>> = estimates
        .iter()
        .flat_map(|e| {
            e.contrasts.iter().map(move |c| {
                vec![
                    e.method.label().to_string(),
                    c.arm_j.to_string(),
                    c.arm_k.to_string(),
                    c.estimate.to_string(),
                    c.se.to_string(),
                    c.ci_low.to_string(),
                    c.ci_high.to_string(),
                ]
            })
        })
        .collect();
    let p = opts.path("contrasts.csv");
    write_csv(
        &p,
        &[
            "method", "arm_j", "arm_k", "estimate", "se", "ci_low", "ci_high",
        ],
        &contrast_rows,
    )?;
    files.push(p);

    let p = opts.path("coefficients.csv");
    write_csv(&p, &["model", "term", "estimate", "se"], &coef_rows)?;
    files.push(p);

    if let Some(draws) = cfg.bootstrap {
        let seed = opts.seed.unwrap_or(DEFAULT_SEED);
        let mut rows = Vec::new();
        for e in &estimates {
            let method = e.method;
            let summary = bootstrap_se(&ds, draws, seed, |d| {
                let mu = match method {
                    Method::Unadjusted => unadjusted_means(d)?,
                    _ => {
                        let cv = fit_de_model(d, cfg.de_spec)?;
                        ancova_adjusted(d, &cv, &cfg.working_for(method))?
                    }
                };
                Ok(mu.mu())
            })?;
            if summary.failures > 0 {
                log.push(format!(
                    "warning: {} of {draws} bootstrap resamples failed for {}",
                    summary.failures,
                    method.name()
                ));
            }
            for (a, b) in e.arms.iter().zip(&summary.se) {
                rows.push(vec![
                    method.label().to_string(),
                    a.arm.to_string(),
                    a.se.to_string(),
                    b.to_string(),
                    draws.to_string(),
                    summary.failures.to_string(),
                ]);
            }
        }
        let p = opts.path("bootstrap.csv");
        write_csv(
            &p,
            &[
                "method",
                "arm",
                "sandwich_se",
                "bootstrap_se",
                "draws",
                "failures",
            ],
            &rows,
        )?;
        files.push(p);
        log.push(format!("bootstrap: {draws} draws, seed {seed}"));
    }

    let p = opts.path("analyze.log");
    fs::write(&p, log.join("\n") + "\n")?;
    files.push(p);
    Ok(AnalysisOutput {
        dataset: ds,
        control: cv,
        estimates,
        linear,
        log,
        files,
    })
}

/// Writes `balance.csv` (per arm), `balance_pairs.csv`, `ecdf.csv` and
/// `density.csv` (`K × 256` rows).
pub fn cmd_diagnose(
    data: &Path,
    config: &Path,
    bandwidth: Bandwidth,
    opts: &RunOptions,
) -> Result<Vec<PathBuf>> {
    let cfg = AnalysisConfig::from_path(config)?;
    let ds = parse_dataset(data, cfg.outcome_kind)?;
    diagnose_dataset(&ds, cfg.de_spec, bandwidth, opts)
}

pub fn diagnose_dataset(
    ds: &TrialDataset,
    de_spec: DeModelSpec,
    bandwidth: Bandwidth,
    opts: &RunOptions,
) -> Result<Vec<PathBuf>> {
    opts.prepare()?;
    let cv = fit_de_model(ds, de_spec)?;
    let report = balance_diagnostic(&cv, ds);
    let density = export_density_data(&report, bandwidth)?;
    let mut files = Vec::new();

    let rows: Vec<Vec<String>> = report
        .arms
        .iter()
        .map(|a| {
            vec![
                a.arm.to_string(),
                a.n.to_string(),
                a.mean.to_string(),
                a.sd.to_string(),
            ]
        })
        .collect();
    let p = opts.path("balance.csv");
    write_csv(&p, &["arm", "n", "residual_mean", "residual_sd"], &rows)?;
    files.push(p);

    let rows: Vec<Vec<String>> = report
        .pairs
        .iter()
        .map(|q| {
            vec![
                q.arm_j.to_string(),
                q.arm_k.to_string(),
                q.ks.to_string(),
                q.t.to_string(),
            ]
        })
        .collect();
    let p = opts.path("balance_pairs.csv");
    write_csv(&p, &["arm_j", "arm_k", "ks", "welch_t"], &rows)?;
    files.push(p);

    let rows: Vec<Vec<String>> = report
        .arms
        .iter()
        .flat_map(|a| {
            a.ecdf
                .iter()
                .map(move |(v, f)| vec![a.arm.to_string(), v.to_string(), f.to_string()])
        })
        .collect();
    let p = opts.path("ecdf.csv");
    write_csv(&p, &["arm_index", "value", "ecdf"], &rows)?;
    files.push(p);

    let rows: Vec<Vec<String>> = density
        .rows()
        .map(|(k, g, d)| vec![k.to_string(), g.to_string(), d.to_string()])
        .collect();
    let p = opts.path("density.csv");
    write_csv(&p, &["arm_index", "grid_value", "density"], &rows)?;
    files.push(p);
    Ok(files)
}

/// A scenario file holds one [`ScenarioConfig`] object or an array of them.
pub fn read_scenarios(path: &Path) -> Result<Vec<ScenarioConfig>> {
    let text = read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let list = match value {
        serde_json::Value::Array(_) => serde_json::from_value::<Vec<ScenarioConfig>>(value)?,
        other => vec![serde_json::from_value::<ScenarioConfig>(other)?],
    };
    if list.is_empty() {
        return Err(Error::InvalidInput(
            "scenario file holds no scenarios".into(),
        ));
    }
    for s in &list {
        s.validate()?;
    }
    Ok(list)
}

fn with_pool<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        if t == 0 {
            return Err(Error::InvalidInput("--threads must be at least 1".into()));
        }
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot start thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn outcome_name(o: SimOutcome) -> &'static str {
    match o {
        SimOutcome::Normal => "normal",
        SimOutcome::Binary => "binary",
    }
}

pub const DETAIL_HEADER: [&str; 24] = [
    "scenario",
    "n",
    "b1",
    "b2",
    "outcome_kind",
    "working_family",
    "structure",
    "runs",
    "runs_completed",
    "separation_failures",
    "arm",
    "dose",
    "true_mu",
    "true_mu_mc_se",
    "bias_x10_unadj",
    "bias_x10_unadj_mc_se",
    "bias_x10_adj",
    "bias_x10_adj_mc_se",
    "var_unadj",
    "var_adj",
    "var_ratio",
    "var_ratio_mc_se",
    "rms_se_adj",
    "sd_adj",
];

fn detail_rows(reports: &[SimulationReport], scale: BiasScale) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for (s, r) in reports.iter().enumerate() {
        let (bu, ba) = r.bias_x10(scale);
        let sd = r.sd_adjusted();
        for k in 0..DOSES.len() {
            // MC-SE on the absolute scale drops the 1/|μ| factor.
            let rescale = |v: Option<f64>| match scale {
                BiasScale::Relative => v,
                BiasScale::Absolute => v.map(|x| x * r.true_mu[k].abs()),
            };
            rows.push(vec![
                s.to_string(),
                r.config.n.to_string(),
                r.config.b1.to_string(),
                r.config.b2.to_string(),
                outcome_name(r.config.outcome_kind).into(),
                format!("{:?}", r.config.working_family).to_lowercase(),
                format!("{:?}", r.config.structure).to_lowercase(),
                r.config.runs.to_string(),
                r.runs_completed.to_string(),
                r.separation_failures.to_string(),
                k.to_string(),
                DOSES[k].to_string(),
                r.true_mu[k].to_string(),
                r.true_mu_mc_se[k].to_string(),
                bu[k].to_string(),
                fmt_full(rescale(r.bias_mc_se_unadjusted[k])),
                ba[k].to_string(),
                fmt_full(rescale(r.bias_mc_se_adjusted[k])),
                fmt_full(r.var_unadjusted[k]),
                fmt_full(r.var_adjusted[k]),
                fmt_full(r.var_ratio[k]),
                fmt_full(r.var_ratio_mc_se[k]),
                r.rms_se_adjusted[k].to_string(),
                fmt_full(sd[k]),
            ]);
        }
    }
    rows
}

fn fmt_full(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

/// Runs every scenario in the file and writes `simulation_table.csv`
/// (12 columns, one row per scenario) and `simulation_detail.csv`.
pub fn cmd_simulate(
    scenario: &Path,
    scale: BiasScale,
    opts: &RunOptions,
) -> Result<(Vec<SimulationReport>, Vec<PathBuf>)> {
    let mut scenarios = read_scenarios(scenario)?;
    if let Some(seed) = opts.seed {
        for s in &mut scenarios {
            s.seed = seed;
        }
    }
    simulate_scenarios(&scenarios, scale, opts)
}

pub fn simulate_scenarios(
    scenarios: &[ScenarioConfig],
    scale: BiasScale,
    opts: &RunOptions,
) -> Result<(Vec<SimulationReport>, Vec<PathBuf>)> {
    opts.prepare()?;
    let reports = with_pool(opts.threads, || {
        scenarios
            .iter()
            .map(run_monte_carlo)
            .collect::<Result<Vec<_>>>()
    })??;
    let table = report_table(&reports, scale)?;
    let t = opts.path("simulation_table.csv");
    write_csv(&t, &TABLE_HEADER, &table)?;
    let d = opts.path("simulation_detail.csv");
    write_csv(&d, &DETAIL_HEADER, &detail_rows(&reports, scale))?;
    Ok((reports, vec![t, d]))
}

/// Writes `true_means.csv` with one row per scenario and dose.
pub fn cmd_true_means(scenario: &Path, opts: &RunOptions) -> Result<PathBuf> {
    let mut scenarios = read_scenarios(scenario)?;
    if let Some(seed) = opts.seed {
        for s in &mut scenarios {
            s.seed = seed;
        }
    }
    opts.prepare()?;
    let rows: Vec<Vec<String>> = scenarios
        .iter()
        .enumerate()
        .flat_map(|(i, s)| {
            let t = true_means(s);
            (0..DOSES.len())
                .map(|k| {
                    vec![
                        i.to_string(),
                        s.n.to_string(),
                        s.b1.to_string(),
                        s.b2.to_string(),
                        outcome_name(s.outcome_kind).into(),
                        DOSES[k].to_string(),
                        t.mu[k].to_string(),
                        t.mc_se[k].to_string(),
                    ]
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let p = opts.path("true_means.csv");
    write_csv(
        &p,
        &[
            "scenario",
            "n",
            "b1",
            "b2",
            "outcome_kind",
            "dose",
            "true_mu",
            "mc_se",
        ],
        &rows,
    )?;
    Ok(p)
}

/// Short human summary of a simulation table, printed by the binary.
pub fn format_table(reports: &[SimulationReport], scale: BiasScale) -> Result<String> {
    let rows = report_table(reports, scale)?;
    let mut s = TABLE_HEADER.join("\t");
    s.push('\n');
    for r in rows {
        s.push_str(&r.join("\t"));
        s.push('\n');
    }
    for r in reports {
        if r.separation_failures > 0 {
            writeln!(
                s,
                "note: n={} b1={} b2={}: {} run(s) dropped for separation",
                r.config.n, r.config.b1, r.config.b2, r.separation_failures
            )
            .unwrap();
        }
    }
    Ok(s)
}
