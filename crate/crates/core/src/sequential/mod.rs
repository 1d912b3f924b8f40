//! The sequential design/validation loop.
//!
//! Iteration `k` of `k_t` draws `N_k = ceil(N k / k_t)` fresh design
//! samples, with `N` the one-sided sample bound for the problem's `m_theta`,
//! bound dimension and strictness, and solves the scenario program. At
//! `k = k_t` the candidate is returned unvalidated. Otherwise it is checked on
//! `M_k` fresh validation samples and returned when the empirical violation
//! is at most `rho`.

use std::fmt;
use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error as CoreError, LevelError, SolveError};
use crate::expr::ParamTable;
use crate::learning::{
    default_validation_constants, design_samples_at, sample_bound_one_sided, BoundReport, ProbabilisticLevels,
    ValidationConstant, ValidationSchedule,
};
use crate::problem::UncertainProblem;
use crate::sampling::{count_violations, derive_seed, draw_stream, violation_estimate, Purpose, ViolationEstimate};
use crate::solver::{solve, SolveStatus, SolverOptions};

/// Coverage of the audit interval.
pub const AUDIT_CONFIDENCE: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SequentialConfig {
    pub levels: ProbabilisticLevels,
    pub k_t: u64,
    /// Exponent of the validation schedule; `None` picks 0.1 for `rho = 0`
    /// and 0.9 otherwise.
    pub alpha: Option<f64>,
    /// `None` picks `inf` for `rho = 0` and 3.05 otherwise.
    pub a: Option<ValidationConstant>,
    pub seed: u64,
    pub solver: SolverOptions,
}

impl Default for SequentialConfig {
    fn default() -> Self {
        Self {
            levels: ProbabilisticLevels { epsilon: 0.2, delta: 0.01, rho: 0.0 },
            k_t: 10,
            alpha: None,
            a: None,
            seed: 0,
            solver: SolverOptions::default(),
        }
    }
}

impl SequentialConfig {
    pub fn new(levels: ProbabilisticLevels, k_t: u64, seed: u64) -> Self {
        Self { levels, k_t, seed, ..Self::default() }
    }

    /// `(a, alpha)` after defaults are filled in.
    pub fn validation_constants(&self) -> (ValidationConstant, f64) {
        let (a, alpha) = default_validation_constants(self.levels.rho);
        (self.a.unwrap_or(a), self.alpha.unwrap_or(alpha))
    }

    pub fn schedule(&self) -> Result<ValidationSchedule, LevelError> {
        if self.k_t < 2 {
            return Err(LevelError::TooFewIterations(self.k_t));
        }
        let (a, alpha) = self.validation_constants();
        ValidationSchedule::new(self.levels, self.k_t, alpha, a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequentialStatus {
    ProbabilisticSolution,
    Infeasible,
    ExitAtLastIteration,
}

impl SequentialStatus {
    pub fn certified(self) -> bool {
        self == SequentialStatus::ProbabilisticSolution
    }
}

impl fmt::Display for SequentialStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SequentialStatus::ProbabilisticSolution => "probabilistic_solution",
            SequentialStatus::Infeasible => "infeasible",
            SequentialStatus::ExitAtLastIteration => "exit_at_last_iteration",
        })
    }
}

/// One line of the per-iteration log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: u64,
    pub n_k: u64,
    pub design_status: SolveStatus,
    pub objective: Option<f64>,
    /// Validation sample count, absent when no validation ran.
    pub m_k: Option<u64>,
    pub violations: Option<u64>,
    pub validation_violation: Option<f64>,
    pub wall_secs: f64,
}

impl IterationRecord {
    /// JSON line; `timing = false` zeroes the wall time so that logs of
    /// identical runs compare equal.
    pub fn to_json_line(&self, timing: bool) -> String {
        let mut r = self.clone();
        if !timing {
            r.wall_secs = 0.0;
        }
        serde_json::to_string(&r).expect("record serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequentialOutcome {
    pub problem: String,
    pub status: SequentialStatus,
    pub theta: Option<Vec<f64>>,
    pub objective: Option<f64>,
    pub exit_iteration: u64,
    pub levels: ProbabilisticLevels,
    pub k_t: u64,
    pub alpha: f64,
    pub a: ValidationConstant,
    pub seed: u64,
    /// The one-sided bound that sets `N`.
    pub bound: BoundReport,
    pub design_samples: u64,
    pub validation_samples: u64,
    pub log: Vec<IterationRecord>,
}

impl SequentialOutcome {
    pub fn write_log<W: Write>(&self, mut w: W, timing: bool) -> std::io::Result<()> {
        for r in &self.log {
            writeln!(w, "{}", r.to_json_line(timing))?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
#[error("iteration {k}: {source}")]
pub struct SequentialError {
    pub k: u64,
    /// Iterations completed before the failure, plus the failing one when it
    /// got as far as a solver status.
    pub log: Vec<IterationRecord>,
    #[source]
    pub source: CoreError,
}

fn fail(k: u64, log: &[IterationRecord], e: impl Into<CoreError>) -> SequentialError {
    SequentialError { k, log: log.to_vec(), source: e.into() }
}

pub fn run_sequential(p: &UncertainProblem, cfg: &SequentialConfig) -> Result<SequentialOutcome, SequentialError> {
    let schedule = cfg.schedule().map_err(|e| fail(0, &[], e))?;
    let bound = sample_bound_one_sided(&cfg.levels, p.m_theta() as u64, p.bound_dimension() as u64, p.strictness());
    let mut log: Vec<IterationRecord> = Vec::new();
    let (mut design_samples, mut validation_samples) = (0u64, 0u64);

    for k in 1..=cfg.k_t {
        let start = Instant::now();
        let n_k = design_samples_at(bound.samples, k, cfg.k_t);
        let design = draw_stream(&p.params, n_k as usize, cfg.seed, Purpose::Design, k);
        design_samples += n_k;
        let opts = SolverOptions { seed: derive_seed(cfg.seed, Purpose::Design, k), ..cfg.solver.clone() };
        let result = solve(p, &design, &opts).map_err(|e| fail(k, &log, e))?;
        let mut record = IterationRecord {
            k,
            n_k,
            design_status: result.status,
            objective: None,
            m_k: None,
            violations: None,
            validation_violation: None,
            wall_secs: 0.0,
        };

        let finish = |status,
                      theta: Option<Vec<f64>>,
                      objective,
                      mut record: IterationRecord,
                      mut log: Vec<IterationRecord>,
                      (design_samples, validation_samples): (u64, u64)| {
            record.wall_secs = start.elapsed().as_secs_f64();
            log.push(record);
            SequentialOutcome {
                problem: p.name.clone(),
                status,
                theta,
                objective,
                exit_iteration: k,
                levels: cfg.levels,
                k_t: cfg.k_t,
                alpha: schedule.alpha,
                a: schedule.a,
                seed: cfg.seed,
                bound: bound.clone(),
                design_samples,
                validation_samples,
                log,
            }
        };

        match result.status {
            SolveStatus::Optimal | SolveStatus::IterationLimit => {}
            // a failed local BMI search is read as infeasibility of the sampled program
            SolveStatus::Infeasible | SolveStatus::AllRestartsFailed => {
                return Ok(finish(SequentialStatus::Infeasible, None, None, record, log, (design_samples, validation_samples)));
            }
            SolveStatus::NumericalFailure => {
                record.wall_secs = start.elapsed().as_secs_f64();
                log.push(record);
                let msg = result.message.unwrap_or_else(|| "numerical failure".into());
                return Err(fail(k, &log, SolveError::Numerical(msg)));
            }
        }
        record.objective = Some(result.objective);

        if k == cfg.k_t {
            return Ok(finish(
                SequentialStatus::ExitAtLastIteration,
                Some(result.theta),
                Some(result.objective),
                record,
                log,
                (design_samples, validation_samples),
            ));
        }

        let m_k = schedule.m_k(k).map_err(|e| fail(k, &log, e))?;
        let validation = draw_stream(&p.params, m_k as usize, cfg.seed, Purpose::Validation, k);
        let violations = count_violations(p, &result.theta, &validation).map_err(|e| fail(k, &log, e))?;
        validation_samples += m_k;
        let v_hat = violations as f64 / m_k as f64;
        record.m_k = Some(m_k);
        record.violations = Some(violations);
        record.validation_violation = Some(v_hat);

        if v_hat <= cfg.levels.rho {
            return Ok(finish(
                SequentialStatus::ProbabilisticSolution,
                Some(result.theta),
                Some(result.objective),
                record,
                log,
                (design_samples, validation_samples),
            ));
        }
        record.wall_secs = start.elapsed().as_secs_f64();
        log.push(record);
    }
    unreachable!("the loop returns at k = k_t")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub status: SequentialStatus,
    /// Only validated exits are certified.
    pub certified: bool,
    pub label: String,
    pub threshold: f64,
    pub estimate: Option<ViolationEstimate>,
    /// Whether the estimate is at most `rho + epsilon`.
    pub within_threshold: Option<bool>,
}

/// Fresh a-posteriori violation estimate of the returned design.
pub fn audit(
    outcome: &SequentialOutcome,
    p: &UncertainProblem,
    table: &ParamTable,
    m_audit: usize,
    seed: u64,
) -> Result<AuditReport, CoreError> {
    let threshold = outcome.levels.rho + outcome.levels.epsilon;
    let estimate = match &outcome.theta {
        Some(theta) => Some(violation_estimate(p, theta, table, m_audit, seed, AUDIT_CONFIDENCE)?),
        None if m_audit == 0 => {
            return Err(LevelError::OutOfRange { name: "M", value: 0.0, range: "[1, inf)" }.into());
        }
        None => None,
    };
    let label = match outcome.status {
        SequentialStatus::ProbabilisticSolution => "certified",
        SequentialStatus::ExitAtLastIteration => "uncertified",
        SequentialStatus::Infeasible => "no solution",
    };
    Ok(AuditReport {
        status: outcome.status,
        certified: outcome.status.certified(),
        label: label.into(),
        threshold,
        within_threshold: estimate.as_ref().map(|e| e.estimate <= threshold),
        estimate,
    })
}
