//! In-memory representation of a randomized dose trial.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One randomized dose level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoseLevel {
    /// 0-based, contiguous across the trial.
    pub arm_index: usize,
    /// Dose in trial units (mg, log10 cells, …).
    pub dose_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub subject_id: String,
    pub arm_index: usize,
    /// Drug exposure `C`.
    pub exposure: f64,
    /// Baseline covariates `X`; may be empty.
    pub covariates: Vec<f64>,
    /// Response `Y`.
    pub outcome: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutcomeKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialDataset {
    pub dose_levels: Vec<DoseLevel>,
    pub covariate_names: Vec<String>,
    pub subjects: Vec<SubjectRecord>,
    pub outcome_kind: OutcomeKind,
}

/// A single broken invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    TooFewArms {
        arms: usize,
    },
    NonContiguousArms {
        position: usize,
        arm_index: usize,
    },
    DoseNotIncreasing {
        arm: usize,
    },
    NonFiniteDose {
        arm: usize,
    },
    EmptyArm {
        arm: usize,
    },
    UnknownArm {
        subject_id: String,
        arm: usize,
    },
    DuplicateSubject {
        subject_id: String,
    },
    NonFiniteExposure {
        subject_id: String,
    },
    NonFiniteOutcome {
        subject_id: String,
    },
    NonFiniteCovariate {
        subject_id: String,
        index: usize,
    },
    CovariateLength {
        subject_id: String,
        expected: usize,
        found: usize,
    },
    NonBinaryOutcome {
        subject_id: String,
        value: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TooFewArms { arms } => write!(f, "need at least 2 dose arms, found {arms}"),
            Violation::NonContiguousArms { position, arm_index } => write!(
                f,
                "dose level at position {position} has arm_index {arm_index}; arm indices must be 0..K-1 in order"
            ),
            Violation::DoseNotIncreasing { arm } => {
                write!(f, "dose_value of arm {arm} is not above that of arm {}", arm - 1)
            }
            Violation::NonFiniteDose { arm } => write!(f, "dose_value of arm {arm} is not finite"),
            Violation::EmptyArm { arm } => write!(f, "empty arm {arm}"),
            Violation::UnknownArm { subject_id, arm } => {
                write!(f, "subject {subject_id}: arm {arm} is not a defined dose level")
            }
            Violation::DuplicateSubject { subject_id } => {
                write!(f, "subject {subject_id} appears more than once")
            }
            Violation::NonFiniteExposure { subject_id } => {
                write!(f, "subject {subject_id}: exposure is missing or not finite")
            }
            Violation::NonFiniteOutcome { subject_id } => {
                write!(f, "subject {subject_id}: outcome is missing or not finite")
            }
            Violation::NonFiniteCovariate { subject_id, index } => {
                write!(f, "subject {subject_id}: covariate {index} is missing or not finite")
            }
            Violation::CovariateLength { subject_id, expected, found } => write!(
                f,
                "subject {subject_id}: {found} covariates, expected {expected}"
            ),
            Violation::NonBinaryOutcome { subject_id, value } => {
                write!(f, "subject {subject_id}: binary outcome is {value}, expected 0 or 1")
            }
        }
    }
}

/// All invariant violations found in a dataset; empty when valid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "  - {v}")?;
        }
        Ok(())
    }
}

impl TrialDataset {
    /// Assembles a dataset in canonical subject order. No validation is done;
    /// see [`TrialDataset::validate`].
    pub fn new(
        dose_levels: Vec<DoseLevel>,
        covariate_names: Vec<String>,
        subjects: Vec<SubjectRecord>,
        outcome_kind: OutcomeKind,
    ) -> Self {
        let mut ds = Self {
            dose_levels,
            covariate_names,
            subjects,
            outcome_kind,
        };
        ds.canonicalize();
        ds
    }

    /// Sorts subjects by `(arm_index, subject_id)` so results do not depend
    /// on input order.
    pub fn canonicalize(&mut self) {
        self.subjects.sort_by(|a, b| {
            a.arm_index
                .cmp(&b.arm_index)
                .then_with(|| a.subject_id.cmp(&b.subject_id))
        });
    }

    /// Validates and returns the dataset, or the full violation report.
    pub fn into_validated(self) -> Result<Self> {
        let report = self.validate();
        if report.is_empty() {
            Ok(self)
        } else {
            Err(Error::Validation(report))
        }
    }

    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        let k = self.dose_levels.len();
        if k < 2 {
            violations.push(Violation::TooFewArms { arms: k });
        }
        for (pos, level) in self.dose_levels.iter().enumerate() {
            if level.arm_index != pos {
                violations.push(Violation::NonContiguousArms {
                    position: pos,
                    arm_index: level.arm_index,
                });
            }
            if !level.dose_value.is_finite() {
                violations.push(Violation::NonFiniteDose { arm: pos });
            } else if pos > 0 && level.dose_value <= self.dose_levels[pos - 1].dose_value {
                violations.push(Violation::DoseNotIncreasing { arm: pos });
            }
        }

        let mut counts = vec![0usize; k];
        let mut seen = HashSet::new();
        let q = self.covariate_names.len();
        for s in &self.subjects {
            let id = || s.subject_id.clone();
            if s.arm_index < k {
                counts[s.arm_index] += 1;
            } else {
                violations.push(Violation::UnknownArm {
                    subject_id: id(),
                    arm: s.arm_index,
                });
            }
            if !seen.insert(s.subject_id.as_str()) {
                violations.push(Violation::DuplicateSubject { subject_id: id() });
            }
            if !s.exposure.is_finite() {
                violations.push(Violation::NonFiniteExposure { subject_id: id() });
            }
            if !s.outcome.is_finite() {
                violations.push(Violation::NonFiniteOutcome { subject_id: id() });
            } else if self.outcome_kind == OutcomeKind::Binary
                && s.outcome != 0.0
                && s.outcome != 1.0
            {
                violations.push(Violation::NonBinaryOutcome {
                    subject_id: id(),
                    value: s.outcome,
                });
            }
            if s.covariates.len() != q {
                violations.push(Violation::CovariateLength {
                    subject_id: id(),
                    expected: q,
                    found: s.covariates.len(),
                });
            }
            for (index, c) in s.covariates.iter().enumerate() {
                if !c.is_finite() {
                    violations.push(Violation::NonFiniteCovariate {
                        subject_id: id(),
                        index,
                    });
                }
            }
        }
        for (arm, &c) in counts.iter().enumerate() {
            if c == 0 {
                violations.push(Violation::EmptyArm { arm });
            }
        }
        ValidationReport { violations }
    }

    pub fn n(&self) -> usize {
        self.subjects.len()
    }

    /// Number of dose arms `K`.
    pub fn arms(&self) -> usize {
        self.dose_levels.len()
    }

    pub fn covariate_count(&self) -> usize {
        self.covariate_names.len()
    }

    /// Subject indices per arm, ordered by arm index.
    pub fn arm_partition(&self) -> Vec<Vec<usize>> {
        let mut sets = vec![Vec::new(); self.arms()];
        for (i, s) in self.subjects.iter().enumerate() {
            if let Some(set) = sets.get_mut(s.arm_index) {
                set.push(i);
            }
        }
        sets
    }

    pub fn arm_sizes(&self) -> Vec<usize> {
        self.arm_partition().iter().map(Vec::len).collect()
    }

    pub fn outcomes(&self) -> Vec<f64> {
        self.subjects.iter().map(|s| s.outcome).collect()
    }

    pub fn exposures(&self) -> Vec<f64> {
        self.subjects.iter().map(|s| s.exposure).collect()
    }

    /// Numeric dose of each subject.
    pub fn doses(&self) -> Vec<f64> {
        self.subjects
            .iter()
            .map(|s| self.dose_levels[s.arm_index].dose_value)
            .collect()
    }

    pub fn arm_indices(&self) -> Vec<usize> {
        self.subjects.iter().map(|s| s.arm_index).collect()
    }

    /// Returns a copy with `f` applied to every outcome.
    pub fn map_outcomes(&self, f: impl Fn(f64) -> f64) -> Self {
        let mut out = self.clone();
        out.subjects
            .iter_mut()
            .for_each(|s| s.outcome = f(s.outcome));
        out
    }

    /// Returns a copy with `f` applied to every exposure.
    pub fn map_exposures(&self, f: impl Fn(f64) -> f64) -> Self {
        let mut out = self.clone();
        out.subjects
            .iter_mut()
            .for_each(|s| s.exposure = f(s.exposure));
        out
    }
}
