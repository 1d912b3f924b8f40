//! Scenario programs: `min c'theta` subject to every block at every sampled
//! parameter vector. Affine problems go to the barrier solver; bilinear ones
//! to a local alternating method built on it.
//!
//! Strict blocks are imposed as `F >= sigma I` with
//! `sigma = 1e-6 (1 + max|F0(q_nominal)|)`; nonstrict blocks as
//! `F >= -r I` with a relaxation `r` well below the semidefiniteness
//! tolerance, so that equality-like constraints keep an interior. Every
//! decision variable is boxed by its declared bound or
//! [`SolverOptions::variable_bound`].

mod barrier;
mod bmi;

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::SolveError;
use crate::linalg::{add_scaled, cholesky_shifted, max_abs, min_eigenvalue};
use crate::problem::{
    is_positive_definite, is_positive_semidefinite, pd_tolerance, InstantiatedConstraint, ProblemKind,
    Strictness, UncertainProblem,
};
use crate::sampling::ScenarioSet;

use barrier::{solve_affine, AffineConstraint, AffineProgram, AffineStatus, Goal};

pub const MAX_VARIABLES: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Strict-block margin; `None` uses `1e-6 (1 + max|F0(q_nominal)|)` per block.
    pub margin: Option<f64>,
    pub nonstrict_relaxation: f64,
    pub variable_bound: f64,
    pub mu: f64,
    pub t0: f64,
    pub newton_tol: f64,
    pub gap_tol: f64,
    /// Newton steps allowed per affine solve.
    pub max_newton_steps: u64,
    /// Constraint counts up to this are solved without an active set.
    pub active_set_threshold: usize,
    pub active_set_initial: usize,
    pub active_set_batch: usize,
    pub max_active_rounds: u64,
    /// Largest stacked dimension of a working set.
    pub max_stacked_dim: usize,
    pub restarts: usize,
    pub tol_alt: f64,
    pub max_rounds: usize,
    /// Seed for BMI restart points.
    pub seed: u64,
    /// Starting point of the first BMI restart (y part) or LMI phase 1.
    pub initial_theta: Option<Vec<f64>>,
    pub margin_raises: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            margin: None,
            nonstrict_relaxation: 5e-10,
            variable_bound: 1e6,
            mu: 0.2,
            t0: 1.0,
            newton_tol: 1e-9,
            gap_tol: 1e-7,
            max_newton_steps: 5000,
            active_set_threshold: 50,
            active_set_initial: 40,
            active_set_batch: 20,
            max_active_rounds: 500,
            max_stacked_dim: 2000,
            restarts: 5,
            tol_alt: 1e-5,
            max_rounds: 50,
            seed: 0,
            initial_theta: None,
            margin_raises: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    IterationLimit,
    NumericalFailure,
    AllRestartsFailed,
}

impl SolveStatus {
    /// Statuses whose `theta` satisfies every sampled constraint.
    pub fn has_solution(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::IterationLimit)
    }
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = serde_json::to_value(self).expect("unit enum");
        f.write_str(s.as_str().expect("string"))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolveCounters {
    pub newton_steps: u64,
    pub centerings: u64,
    pub active_rounds: u64,
    pub alternation_rounds: u64,
    pub restarts: u64,
    pub margin_raises: u64,
    #[serde(skip)]
    pub(crate) newton_budget_end: u64,
}

impl SolveCounters {
    fn absorb(&mut self, other: &SolveCounters) {
        self.newton_steps += other.newton_steps;
        self.centerings += other.centerings;
        self.active_rounds += other.active_rounds;
        self.alternation_rounds += other.alternation_rounds;
        self.restarts += other.restarts;
        self.margin_raises += other.margin_raises;
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub theta: Vec<f64>,
    pub objective: f64,
    /// Smallest eigenvalue over all sampled blocks at `theta`.
    pub min_eigenvalue: f64,
    /// Strict-block margins in effect, per block.
    pub margins: Vec<f64>,
    pub certificate: Option<String>,
    pub message: Option<String>,
    /// Objective after each accepted BMI alternation round (best restart).
    pub objective_history: Vec<f64>,
    pub counters: SolveCounters,
    pub elapsed_secs: f64,
}

/// The sampled constraints of one scenario problem, sample-major and
/// block-minor: constraint `s * blocks + b` is block `b` at sample `s`.
#[derive(Debug, Clone)]
pub struct ScenarioProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<InstantiatedConstraint>,
    pub blocks: usize,
    pub samples: usize,
    /// Per block: `sigma` for strict blocks, `-relaxation` for nonstrict ones.
    pub margins: Vec<f64>,
    /// Per block: strict, certain, affine and without constant term, so its
    /// feasible set is a cone.
    pub cones: Vec<bool>,
    /// Per decision entry: `|theta_j| < bound`.
    pub bounds: Vec<f64>,
    pub kind: ProblemKind,
}

impl ScenarioProgram {
    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    pub fn stacked_dimension(&self) -> usize {
        self.constraints.iter().map(InstantiatedConstraint::dim).sum()
    }

    pub fn m_theta(&self) -> usize {
        self.objective.len()
    }

    fn margin(&self, k: usize) -> f64 {
        self.margins[self.constraints[k].block]
    }

    fn objective_at(&self, theta: &[f64]) -> f64 {
        self.objective.iter().zip(theta).map(|(c, t)| c * t).sum()
    }
}

/// Instantiates every block at every scenario.
pub fn assemble(p: &UncertainProblem, scenarios: &ScenarioSet, opts: &SolverOptions) -> Result<ScenarioProgram, SolveError> {
    if p.m_theta() > MAX_VARIABLES {
        return Err(SolveError::TooLarge(format!("{} decision entries > {MAX_VARIABLES}", p.m_theta())));
    }
    let nominal = p.instantiate(&p.params.nominal())?;
    let margins = p
        .blocks
        .iter()
        .zip(&nominal)
        .map(|(b, inst)| match b.strictness {
            Strictness::Strict => opts.margin.unwrap_or(1e-6 * (1.0 + max_abs(&inst.constant))),
            Strictness::Nonstrict => -opts.nonstrict_relaxation,
        })
        .collect();
    let cones = p
        .blocks
        .iter()
        .zip(&nominal)
        .map(|(b, inst)| {
            b.strictness == Strictness::Strict && b.is_certain() && b.is_affine() && max_abs(&inst.constant) == 0.0
        })
        .collect();
    let mut constraints = Vec::with_capacity(scenarios.len() * p.blocks.len());
    for q in scenarios.iter() {
        constraints.extend(p.instantiate(q)?);
    }
    let bounds = (0..p.m_theta())
        .map(|j| p.layout.bound(j).unwrap_or(opts.variable_bound))
        .collect();
    Ok(ScenarioProgram {
        objective: p.objective.clone(),
        constraints,
        blocks: p.blocks.len(),
        samples: scenarios.len(),
        margins,
        cones,
        bounds,
        kind: p.kind(),
    })
}

/// Affine program in the entries `free`, with every other entry fixed at
/// `theta` and the block margins moved into the constant term.
pub(crate) fn reduce(sp: &ScenarioProgram, theta: &[f64], free: &[usize]) -> Result<AffineProgram, SolveError> {
    let mut local = vec![None; sp.m_theta()];
    for (l, &g) in free.iter().enumerate() {
        local[g] = Some(l);
    }
    let mut cons = Vec::with_capacity(sp.len());
    for (k, con) in sp.constraints.iter().enumerate() {
        let n = con.dim();
        let mut c = con.constant.clone() - DMatrix::<f64>::identity(n, n) * sp.margin(k);
        let mut terms: BTreeMap<usize, DMatrix<f64>> = BTreeMap::new();
        let mut add_term = |l: usize, w: f64, a: &DMatrix<f64>| {
            add_scaled(terms.entry(l).or_insert_with(|| DMatrix::zeros(n, n)), w, a);
        };
        for (j, a) in &con.linear {
            match local[*j] {
                Some(l) => add_term(l, 1.0, a),
                None => add_scaled(&mut c, theta[*j], a),
            }
        }
        for (i, j, h) in &con.bilinear {
            match (local[*i], local[*j]) {
                (Some(_), Some(_)) => {
                    return Err(SolveError::NotAffine(format!(
                        "entries {i} and {j} are both free in a bilinear term"
                    )))
                }
                (Some(l), None) => add_term(l, theta[*j], h),
                (None, Some(l)) => add_term(l, theta[*i], h),
                (None, None) => add_scaled(&mut c, theta[*i] * theta[*j], h),
            }
        }
        cons.push(AffineConstraint {
            c,
            terms: terms.into_iter().filter(|(_, a)| a.iter().any(|v| *v != 0.0)).collect(),
        });
    }
    Ok(AffineProgram {
        cost: free.iter().map(|&g| sp.objective[g]).collect(),
        cons,
        lo: free.iter().map(|&g| -sp.bounds[g]).collect(),
        hi: free.iter().map(|&g| sp.bounds[g]).collect(),
    })
}

pub(crate) struct Verification {
    pub min_eigenvalue: f64,
    /// Every constraint satisfies its program margin.
    pub margins_ok: bool,
    /// Strict blocks whose definiteness check fails at some sample, with the
    /// largest tolerance seen there.
    pub failing_strict: BTreeMap<usize, f64>,
    pub nonstrict_ok: bool,
}

pub(crate) fn verify(sp: &ScenarioProgram, theta: &[f64]) -> Verification {
    let mut v = Verification {
        min_eigenvalue: f64::INFINITY,
        margins_ok: true,
        failing_strict: BTreeMap::new(),
        nonstrict_ok: true,
    };
    for (k, con) in sp.constraints.iter().enumerate() {
        let m = con.assemble(theta);
        v.min_eigenvalue = v.min_eigenvalue.min(min_eigenvalue(&m));
        match con.strictness {
            Strictness::Strict => {
                if cholesky_shifted(&m, -sp.margin(k)).is_none() {
                    v.margins_ok = false;
                }
                if !is_positive_definite(&m) {
                    let tau = pd_tolerance(&m);
                    let e = v.failing_strict.entry(con.block).or_insert(0.0);
                    *e = e.max(tau);
                }
            }
            Strictness::Nonstrict => {
                if !is_positive_semidefinite(&m) {
                    v.nonstrict_ok = false;
                    v.margins_ok = false;
                }
            }
        }
    }
    v
}

fn infeasibility_certificate(s: f64, work: usize, total: usize) -> String {
    format!(
        "phase 1 minimum shift s = {s:.6e} >= 0 on {work} of {total} sampled constraints: \
         no theta in the variable box satisfies every block with its margin"
    )
}

fn solve_lmi(sp: &ScenarioProgram, opts: &SolverOptions, counters: &mut SolveCounters) -> Result<SolveResult, SolveError> {
    let m = sp.m_theta();
    let all: Vec<usize> = (0..m).collect();
    let prog = reduce(sp, &vec![0.0; m], &all)?;
    let z0 = opts.initial_theta.clone().filter(|t| t.len() == m).unwrap_or_else(|| vec![0.0; m]);
    let goal = if sp.objective.iter().all(|c| *c == 0.0) { Goal::Feasible } else { Goal::Optimize };
    let out = solve_affine(&prog, &z0, &[], goal, opts, counters);
    let (status, certificate, message) = match out.status {
        AffineStatus::Optimal | AffineStatus::Feasible => (SolveStatus::Optimal, None, None),
        AffineStatus::Infeasible { s } => {
            (SolveStatus::Infeasible, Some(infeasibility_certificate(s, out.work.len(), sp.len())), None)
        }
        AffineStatus::IterationLimit => (SolveStatus::IterationLimit, None, None),
        AffineStatus::Numerical(msg) => (SolveStatus::NumericalFailure, None, Some(msg)),
    };
    Ok(SolveResult {
        status,
        objective: sp.objective_at(&out.z),
        theta: out.z,
        min_eigenvalue: f64::NAN,
        margins: sp.margins.clone(),
        certificate,
        message,
        objective_history: Vec::new(),
        counters: SolveCounters::default(),
        elapsed_secs: 0.0,
    })
}

/// Solves a scenario program, raising a strict block's margin and
/// re-solving when the returned point fails that block's definiteness check.
pub fn solve_program(sp: &ScenarioProgram, opts: &SolverOptions) -> Result<SolveResult, SolveError> {
    let start = Instant::now();
    let mut sp = sp.clone();
    let mut counters = SolveCounters::default();
    let mut opts = opts.clone();
    loop {
        let mut result = match sp.kind {
            ProblemKind::Lmi => solve_lmi(&sp, &opts, &mut counters)?,
            ProblemKind::Bmi => bmi::solve_bmi(&sp, &opts, &mut counters)?,
        };
        let v = verify(&sp, &result.theta);
        result.min_eigenvalue = v.min_eigenvalue;
        if result.status.has_solution() {
            if !v.failing_strict.is_empty() && (counters.margin_raises as usize) < opts.margin_raises {
                for (block, tau) in &v.failing_strict {
                    sp.margins[*block] = (2.0 * sp.margins[*block]).max(2.0 * tau);
                }
                counters.margin_raises += 1;
                opts.initial_theta = Some(result.theta);
                continue;
            }
            if !v.margins_ok || !v.failing_strict.is_empty() {
                result.status = SolveStatus::NumericalFailure;
                result.message = Some("returned point fails the sampled constraints".into());
            }
        }
        result.margins = sp.margins.clone();
        result.counters = counters;
        result.elapsed_secs = start.elapsed().as_secs_f64();
        return Ok(result);
    }
}

/// Scenario LMI solve; errors if the problem has bilinear terms.
pub fn solve_scenario_lmi(sp: &ScenarioProgram, opts: &SolverOptions) -> Result<SolveResult, SolveError> {
    if sp.kind != ProblemKind::Lmi {
        return Err(SolveError::NotAffine("problem has bilinear terms".into()));
    }
    solve_program(sp, opts)
}

/// Local BMI solve by alternating LMI solves over the x and y groups.
///
/// Without `initial_theta`, the first restart is warm-started by
/// continuation: the nominal parameter vector alone, then prefixes of the
/// design set growing by a factor 8, each solved from the previous point.
/// Random restarts run only when the warm-started one finds no solution.
pub fn solve_scenario_bmi(p: &UncertainProblem, design: &ScenarioSet, opts: &SolverOptions) -> Result<SolveResult, SolveError> {
    let start = Instant::now();
    let mut sp = assemble(p, design, opts)?;
    sp.kind = ProblemKind::Bmi;
    let mut warm = SolveCounters::default();
    let mut local = opts.clone();
    if opts.initial_theta.is_none() && !(design.len() == 1 && design.samples[0] == p.params.nominal()) {
        let mut stages = vec![ScenarioSet::nominal(&p.params)];
        let mut n = 8;
        while n < design.len() {
            stages.push(ScenarioSet { samples: design.samples[..n].to_vec(), ..design.clone() });
            n *= 8;
        }
        let mut init: Option<Vec<f64>> = None;
        for (i, stage) in stages.iter().enumerate() {
            let mut stage_sp = assemble(p, stage, opts)?;
            stage_sp.kind = ProblemKind::Bmi;
            // the nominal stage is cheap and gets every restart
            let restarts = if i == 0 { opts.restarts } else { 1 };
            let stage_opts = SolverOptions { restarts, initial_theta: init.clone(), ..opts.clone() };
            let r = solve_program(&stage_sp, &stage_opts)?;
            warm.absorb(&r.counters);
            if r.status.has_solution() {
                init = Some(r.theta);
            }
        }
        local.initial_theta = init;
    }
    let mut result = solve_program(&sp, &local)?;
    result.counters.absorb(&warm);
    result.elapsed_secs = start.elapsed().as_secs_f64();
    Ok(result)
}

/// Assembles and solves with the method matching the problem kind.
pub fn solve(p: &UncertainProblem, design: &ScenarioSet, opts: &SolverOptions) -> Result<SolveResult, SolveError> {
    match p.kind() {
        ProblemKind::Lmi => solve_program(&assemble(p, design, opts)?, opts),
        ProblemKind::Bmi => solve_scenario_bmi(p, design, opts),
    }
}

#[cfg(test)]
mod tests;
