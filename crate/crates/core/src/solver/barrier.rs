//! Log-det barrier path following for affine matrix inequalities
//!
//! ```text
//! minimize c'z  subject to  F_i(z) = C_i + sum_j z_j A_ij > 0,  lo < z < hi
//! ```
//!
//! Phase 1 adds a variable `s` and minimizes it subject to
//! `F_i(z) + s I > 0`; a negative `s` yields a strictly feasible start.
//! Large constraint lists are handled by an active set: the barrier only sees
//! a working subset, grown with the most violated constraints until the
//! solution satisfies all of them.

use nalgebra::{DMatrix, DVector};

use crate::linalg::{add_scaled, cholesky, congruence_inv, min_eigenvalue, spd_solve};

use super::{SolveCounters, SolverOptions};

#[derive(Debug, Clone)]
pub(crate) struct AffineConstraint {
    pub c: DMatrix<f64>,
    pub terms: Vec<(usize, DMatrix<f64>)>,
}

impl AffineConstraint {
    pub fn dim(&self) -> usize {
        self.c.nrows()
    }

    pub fn at(&self, z: &[f64]) -> DMatrix<f64> {
        let mut m = self.c.clone();
        for (j, a) in &self.terms {
            if z[*j] != 0.0 {
                add_scaled(&mut m, z[*j], a);
            }
        }
        m
    }
}

#[derive(Debug, Clone)]
pub(crate) struct AffineProgram {
    pub cost: Vec<f64>,
    pub cons: Vec<AffineConstraint>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl AffineProgram {
    pub fn n_vars(&self) -> usize {
        self.cost.len()
    }

    fn cost_at(&self, z: &[f64]) -> f64 {
        self.cost.iter().zip(z).map(|(c, v)| c * v).sum()
    }

    /// Barrier parameter: total dimension plus finite box sides.
    fn degree(&self) -> f64 {
        let box_sides = self.lo.iter().filter(|v| v.is_finite()).count()
            + self.hi.iter().filter(|v| v.is_finite()).count();
        (self.cons.iter().map(AffineConstraint::dim).sum::<usize>() + box_sides) as f64
    }

    fn barrier(&self, z: &[f64]) -> Option<f64> {
        let mut val = 0.0;
        for (j, v) in z.iter().enumerate() {
            if self.lo[j].is_finite() {
                let d = v - self.lo[j];
                if !(d > 0.0) {
                    return None;
                }
                val -= d.ln();
            }
            if self.hi[j].is_finite() {
                let d = self.hi[j] - v;
                if !(d > 0.0) {
                    return None;
                }
                val -= d.ln();
            }
        }
        for con in &self.cons {
            let l = cholesky(&con.at(z))?;
            val -= 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
        }
        Some(val)
    }

    /// Gradient and Hessian of `t c'z + barrier(z)`.
    fn newton_system(&self, z: &[f64], t: f64) -> Option<(DVector<f64>, DMatrix<f64>)> {
        let n = self.n_vars();
        let mut g = DVector::from_iterator(n, self.cost.iter().map(|c| t * c));
        let mut h = DMatrix::<f64>::zeros(n, n);
        for (j, v) in z.iter().enumerate() {
            if self.lo[j].is_finite() {
                let d = v - self.lo[j];
                g[j] -= 1.0 / d;
                h[(j, j)] += 1.0 / (d * d);
            }
            if self.hi[j].is_finite() {
                let d = self.hi[j] - v;
                g[j] += 1.0 / d;
                h[(j, j)] += 1.0 / (d * d);
            }
        }
        for con in &self.cons {
            let l = cholesky(&con.at(z))?;
            let scaled: Vec<(usize, DMatrix<f64>)> =
                con.terms.iter().map(|(j, a)| (*j, congruence_inv(&l, a))).collect();
            for (p, (j, bj)) in scaled.iter().enumerate() {
                g[*j] -= bj.trace();
                for (k, bk) in &scaled[p..] {
                    let v = bj.dot(bk);
                    h[(*j, *k)] += v;
                    if j != k {
                        h[(*k, *j)] += v;
                    }
                }
            }
        }
        Some((g, h))
    }

    fn subset(&self, work: &[usize]) -> AffineProgram {
        AffineProgram {
            cost: self.cost.clone(),
            cons: work.iter().map(|&i| self.cons[i].clone()).collect(),
            lo: self.lo.clone(),
            hi: self.hi.clone(),
        }
    }

    /// Phase-1 program over `(z, s)` restricted to `work`.
    fn phase1(&self, work: &[usize]) -> AffineProgram {
        let n = self.n_vars();
        let mut cost = vec![0.0; n + 1];
        cost[n] = 1.0;
        let cons = work
            .iter()
            .map(|&i| {
                let con = &self.cons[i];
                let mut terms = con.terms.clone();
                terms.push((n, DMatrix::identity(con.dim(), con.dim())));
                AffineConstraint { c: con.c.clone(), terms }
            })
            .collect();
        let mut lo = self.lo.clone();
        let mut hi = self.hi.clone();
        lo.push(f64::NEG_INFINITY);
        hi.push(f64::INFINITY);
        AffineProgram { cost, cons, lo, hi }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum BarrierFail {
    IterationLimit,
    Numerical(String),
}

enum Centering {
    Centered,
    Stopped,
}

fn center(
    prog: &AffineProgram,
    z: &mut Vec<f64>,
    t: f64,
    opts: &SolverOptions,
    counters: &mut SolveCounters,
    stop: &mut dyn FnMut(&[f64]) -> bool,
) -> Result<Centering, BarrierFail> {
    loop {
        if counters.newton_steps >= counters.newton_budget_end {
            return Err(BarrierFail::IterationLimit);
        }
        let (g, h) = prog
            .newton_system(z, t)
            .ok_or_else(|| BarrierFail::Numerical("iterate left the feasible region".into()))?;
        let dz = spd_solve(&h, &(-&g)).ok_or_else(|| BarrierFail::Numerical("singular Newton system".into()))?;
        let slope = g.dot(&dz);
        let lambda2 = -slope;
        if !lambda2.is_finite() || lambda2 < 0.0 {
            return Err(BarrierFail::Numerical("non-descent Newton direction".into()));
        }
        if lambda2 / 2.0 <= opts.newton_tol {
            return Ok(Centering::Centered);
        }

        let mut alpha: f64 = 1.0;
        for (j, d) in dz.iter().enumerate() {
            if *d < 0.0 && prog.lo[j].is_finite() {
                alpha = alpha.min(0.99 * (prog.lo[j] - z[j]) / d);
            } else if *d > 0.0 && prog.hi[j].is_finite() {
                alpha = alpha.min(0.99 * (prog.hi[j] - z[j]) / d);
            }
        }
        let f0 = t * prog.cost_at(z) + prog.barrier(z).expect("current iterate is feasible");
        let trial = loop {
            let zt: Vec<f64> = z.iter().zip(dz.iter()).map(|(v, d)| v + alpha * d).collect();
            if let Some(b) = prog.barrier(&zt) {
                if t * prog.cost_at(&zt) + b <= f0 + 0.25 * alpha * slope {
                    break Some(zt);
                }
            }
            alpha *= 0.5;
            if alpha < 1e-14 {
                break None;
            }
        };
        counters.newton_steps += 1;
        // a step that rounds to no change is treated as a failed line search
        let trial = trial.filter(|zt| zt != z);
        match trial {
            Some(zt) => *z = zt,
            // the decrement is below what the line search can resolve in floating point
            None if lambda2 / 2.0 < 1e-6 * (1.0 + f0.abs()) => return Ok(Centering::Centered),
            None => return Err(BarrierFail::Numerical(format!("line search failed, decrement {lambda2:.3e}"))),
        }
        if stop(z) {
            return Ok(Centering::Stopped);
        }
    }
}

enum PathEnd {
    Converged,
    Stopped,
}

/// Follows the central path from a strictly feasible `z`. `stop` is asked
/// after every Newton step with `None` and after every centering with the
/// duality-gap bound `Some(p/t)`.
fn path_follow(
    prog: &AffineProgram,
    z: &mut Vec<f64>,
    opts: &SolverOptions,
    counters: &mut SolveCounters,
    stop: &mut dyn FnMut(&[f64], Option<f64>) -> bool,
) -> Result<PathEnd, BarrierFail> {
    let p = prog.degree();
    let mut t = opts.t0;
    loop {
        counters.centerings += 1;
        match center(prog, z, t, opts, counters, &mut |z| stop(z, None))? {
            Centering::Stopped => return Ok(PathEnd::Stopped),
            Centering::Centered => {}
        }
        let gap = p / t;
        if stop(z, Some(gap)) {
            return Ok(PathEnd::Stopped);
        }
        if gap <= opts.gap_tol * (1.0 + prog.cost_at(z).abs()) {
            return Ok(PathEnd::Converged);
        }
        t /= opts.mu;
    }
}

pub(crate) enum Phase1 {
    Feasible(Vec<f64>),
    /// No strictly feasible point; `s` is the smallest shift found.
    Infeasible { z: Vec<f64>, s: f64 },
}

fn clamp_into_box(prog: &AffineProgram, z0: &[f64]) -> Vec<f64> {
    z0.iter()
        .enumerate()
        .map(|(j, &v)| {
            let (lo, hi) = (prog.lo[j], prog.hi[j]);
            let inner_lo = if lo.is_finite() { lo + 0.01 * (hi - lo).min(1.0) } else { f64::NEG_INFINITY };
            let inner_hi = if hi.is_finite() { hi - 0.01 * (hi - lo).min(1.0) } else { f64::INFINITY };
            v.clamp(inner_lo, inner_hi)
        })
        .collect()
}

fn run_phase1(
    prog: &AffineProgram,
    work: &[usize],
    z0: &[f64],
    goal: Goal,
    opts: &SolverOptions,
    counters: &mut SolveCounters,
) -> Result<Phase1, BarrierFail> {
    let z0 = clamp_into_box(prog, z0);
    let worst = work
        .iter()
        .map(|&i| min_eigenvalue(&prog.cons[i].at(&z0)))
        .fold(f64::INFINITY, f64::min);
    if worst > 0.0 && prog.subset(work).barrier(&z0).is_some() {
        return Ok(Phase1::Feasible(z0));
    }
    let aug = prog.phase1(work);
    let n = prog.n_vars();
    let mut z = z0;
    z.push(-worst + (0.1 * worst.abs()).max(1.0));
    let end = path_follow(&aug, &mut z, opts, counters, &mut |z, gap| {
        let s = z[n];
        // s < 0 is a strictly feasible point; s - gap > 0 proves there is none
        match goal {
            Goal::MinShift => s < 0.0,
            _ => s < 0.0 || gap.is_some_and(|g| s - g > 0.0),
        }
    })?;
    let s = z.pop().expect("phase-1 variable");
    match end {
        PathEnd::Stopped if s < 0.0 => Ok(Phase1::Feasible(z)),
        _ => Ok(Phase1::Infeasible { z, s }),
    }
}

pub(crate) enum AffineStatus {
    Optimal,
    Feasible,
    Infeasible { s: f64 },
    IterationLimit,
    Numerical(String),
}

pub(crate) struct AffineOutcome {
    pub status: AffineStatus,
    pub z: Vec<f64>,
    pub work: Vec<usize>,
}

/// Smallest eigenvalue of each violated constraint outside `work` at `z`.
fn violations(prog: &AffineProgram, in_work: &[bool], z: &[f64]) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    for (i, con) in prog.cons.iter().enumerate() {
        if in_work[i] {
            continue;
        }
        let m = con.at(z);
        if cholesky(&m).is_none() {
            out.push((i, min_eigenvalue(&m)));
        }
    }
    out.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    out
}

/// Constraints outside `work` whose smallest eigenvalue at `z` is below `-s`.
fn shifted_violations(prog: &AffineProgram, in_work: &[bool], z: &[f64], s: f64) -> Vec<(usize, f64)> {
    let mut out: Vec<(usize, f64)> = prog
        .cons
        .iter()
        .enumerate()
        .filter(|(i, _)| !in_work[*i])
        .map(|(i, con)| (i, min_eigenvalue(&con.at(z))))
        .filter(|(_, l)| *l + s < -1e-9 * (1.0 + s.abs()))
        .collect();
    out.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    out
}

fn initial_work(prog: &AffineProgram, z0: &[f64], hint: &[usize], opts: &SolverOptions) -> Vec<usize> {
    let total = prog.cons.len();
    if total <= opts.active_set_threshold {
        return (0..total).collect();
    }
    let mut chosen = vec![false; total];
    let mut work: Vec<usize> = Vec::new();
    for &i in hint {
        if i < total && !chosen[i] {
            chosen[i] = true;
            work.push(i);
        }
    }
    let z0 = clamp_into_box(prog, z0);
    let mut ranked: Vec<(usize, f64)> = (0..total)
        .filter(|i| !chosen[*i])
        .map(|i| (i, min_eigenvalue(&prog.cons[i].at(&z0))))
        .collect();
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let want = opts.active_set_initial.saturating_sub(work.len());
    work.extend(ranked.into_iter().take(want).map(|(i, _)| i));
    work.sort_unstable();
    work
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Goal {
    /// Phase 1, then phase 2 on the cost.
    Optimize,
    /// Phase 1, stopping at the first strictly feasible point or at a proof
    /// that there is none.
    Feasible,
    /// Phase 1 run to its optimum when infeasible, so `Infeasible { s }`
    /// carries the smallest shift over all constraints and its minimizer.
    MinShift,
}

/// Phase 1 then (for [`Goal::Optimize`]) phase 2, under an active set.
pub(crate) fn solve_affine(
    prog: &AffineProgram,
    z0: &[f64],
    hint: &[usize],
    goal: Goal,
    opts: &SolverOptions,
    counters: &mut SolveCounters,
) -> AffineOutcome {
    let mut work = initial_work(prog, z0, hint, opts);
    let mut in_work = vec![false; prog.cons.len()];
    for &i in &work {
        in_work[i] = true;
    }
    let mut z = z0.to_vec();
    counters.newton_budget_end = counters.newton_steps + opts.max_newton_steps;
    let mut rounds = 0;
    loop {
        rounds += 1;
        counters.active_rounds += 1;
        let stacked: usize = work.iter().map(|&i| prog.cons[i].dim()).sum();
        if stacked > opts.max_stacked_dim {
            return AffineOutcome {
                status: AffineStatus::Numerical(format!(
                    "working set reached stacked dimension {stacked} > {}",
                    opts.max_stacked_dim
                )),
                z,
                work,
            };
        }
        let fail = |e: BarrierFail, z: Vec<f64>, work: Vec<usize>| AffineOutcome {
            status: match e {
                BarrierFail::IterationLimit => AffineStatus::IterationLimit,
                BarrierFail::Numerical(m) => AffineStatus::Numerical(m),
            },
            z,
            work,
        };
        let feasible = match run_phase1(prog, &work, &z, goal, opts, counters) {
            Ok(Phase1::Feasible(zf)) => zf,
            Ok(Phase1::Infeasible { z: zi, s }) if goal == Goal::MinShift => {
                // grow the working set until the minimizer's shift covers every constraint
                let outside = shifted_violations(prog, &in_work, &zi, s);
                if outside.is_empty() {
                    return AffineOutcome { status: AffineStatus::Infeasible { s }, z: zi, work };
                }
                for (i, _) in outside.into_iter().take(opts.active_set_batch) {
                    in_work[i] = true;
                    work.push(i);
                }
                work.sort_unstable();
                z = zi;
                if rounds >= opts.max_active_rounds {
                    return AffineOutcome { status: AffineStatus::IterationLimit, z, work };
                }
                continue;
            }
            Ok(Phase1::Infeasible { z: zi, s }) => {
                return AffineOutcome { status: AffineStatus::Infeasible { s }, z: zi, work }
            }
            Err(e) => return fail(e, z, work),
        };
        z = feasible;
        let mut status = AffineStatus::Feasible;
        if goal == Goal::Optimize {
            let sub = prog.subset(&work);
            let mut zz = z.clone();
            match path_follow(&sub, &mut zz, opts, counters, &mut |_, _| false) {
                Ok(_) => {
                    z = zz;
                    status = AffineStatus::Optimal;
                }
                // keep the feasible phase-1 point; the partial path iterate is also feasible
                Err(BarrierFail::IterationLimit) => {
                    z = zz;
                    status = AffineStatus::IterationLimit;
                }
                Err(e) => return fail(e, z, work),
            }
        }
        let violated = violations(prog, &in_work, &z);
        if violated.is_empty() {
            return AffineOutcome { status, z, work };
        }
        for (i, _) in violated.into_iter().take(opts.active_set_batch) {
            in_work[i] = true;
            work.push(i);
        }
        work.sort_unstable();
        if rounds >= opts.max_active_rounds {
            return AffineOutcome { status: AffineStatus::IterationLimit, z, work };
        }
    }
}
