//! Local BMI solver by alternation.
//!
//! Entries are split into coupled x (appearing in some bilinear term),
//! coupled y, and free entries (the rest). Step A fixes the coupled y and
//! solves the LMI in coupled x and free entries; step B fixes the coupled x.
//! A first alternation on the phase-1 shift looks for a feasible point, a
//! second one on the objective descends from it. Restart 0 starts from
//! `y = 0` (or the supplied point), later restarts from uniform `[-1, 1]`.
//!
//! Phase 1 first holds cone blocks (such as `X > 0`) at unit margin, which
//! keeps homogeneous certificates from shrinking to zero, and falls back to
//! a compass search over the coupled y when the alternation stalls.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::SolveError;
use crate::sampling::{derive_seed, Purpose};

use super::barrier::{solve_affine, AffineStatus, Goal};
use super::{reduce, verify, ScenarioProgram, SolveCounters, SolveResult, SolveStatus, SolverOptions};

struct Partition {
    step_a: Vec<usize>,
    step_b: Vec<usize>,
    coupled_y: Vec<usize>,
}

fn partition(sp: &ScenarioProgram) -> Partition {
    let m = sp.m_theta();
    let (mut cx, mut cy) = (vec![false; m], vec![false; m]);
    for con in sp.constraints.iter().take(sp.blocks) {
        for (i, j, _) in &con.bilinear {
            cx[*i] = true;
            cy[*j] = true;
        }
    }
    let free = |j: usize| !cx[j] && !cy[j];
    Partition {
        step_a: (0..m).filter(|&j| cx[j] || free(j)).collect(),
        step_b: (0..m).filter(|&j| cy[j] || free(j)).collect(),
        coupled_y: (0..m).filter(|&j| cy[j]).collect(),
    }
}

fn gather(theta: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&j| theta[j]).collect()
}

fn scatter(theta: &mut [f64], idx: &[usize], z: &[f64]) {
    for (&j, v) in idx.iter().zip(z) {
        theta[j] = *v;
    }
}

const COMPASS_EVALS: usize = 80;

enum Feasibility {
    Found,
    Stalled(f64),
    Failed(String),
}

/// Phase 1, first with cone blocks held at unit margin so their entries
/// cannot shrink toward zero, then with the true margins.
fn find_feasible(
    sp: &ScenarioProgram,
    theta: &mut [f64],
    part: &Partition,
    work: &mut Vec<usize>,
    opts: &SolverOptions,
    counters: &mut SolveCounters,
) -> Result<Feasibility, SolveError> {
    if sp.cones.iter().any(|&c| c) {
        let mut unit = sp.clone();
        for (m, _) in unit.margins.iter_mut().zip(&sp.cones).filter(|(_, c)| **c) {
            *m = m.max(1.0);
        }
        let mut trial = theta.to_vec();
        let mut found = matches!(alternate_shift(&unit, &mut trial, part, work, opts, counters)?, Feasibility::Found);
        if !found {
            found = matches!(compass(&unit, &mut trial, part, work, opts, counters)?, Feasibility::Found);
        }
        if found {
            theta.copy_from_slice(&trial);
            return Ok(Feasibility::Found);
        }
    }
    alternate_shift(sp, theta, part, work, opts, counters)
}

/// Shift after minimizing over step A with the coupled y fixed; `None` when
/// that step finds a feasible point.
fn x_shift(
    sp: &ScenarioProgram,
    theta: &mut [f64],
    part: &Partition,
    work: &mut Vec<usize>,
    opts: &SolverOptions,
    counters: &mut SolveCounters,
) -> Result<Option<f64>, SolveError> {
    let prog = reduce(sp, theta, &part.step_a)?;
    let out = solve_affine(&prog, &gather(theta, &part.step_a), work, Goal::MinShift, opts, counters);
    *work = out.work;
    Ok(match out.status {
        AffineStatus::Feasible | AffineStatus::Optimal => {
            scatter(theta, &part.step_a, &out.z);
            None
        }
        AffineStatus::Infeasible { s } => {
            scatter(theta, &part.step_a, &out.z);
            Some(s)
        }
        _ => Some(f64::INFINITY),
    })
}

/// Compass search over the coupled y on the step-A shift. Each coordinate
/// step doubles after a success and halves after a failed pair of moves.
fn compass(
    sp: &ScenarioProgram,
    theta: &mut [f64],
    part: &Partition,
    work: &mut Vec<usize>,
    opts: &SolverOptions,
    counters: &mut SolveCounters,
) -> Result<Feasibility, SolveError> {
    let ys = &part.coupled_y;
    let Some(mut best) = x_shift(sp, theta, part, work, opts, counters)? else {
        return Ok(Feasibility::Found);
    };
    let mut h: Vec<f64> = ys.iter().map(|&j| 0.5 * theta[j].abs().max(1e-2)).collect();
    let mut evals = 0;
    while evals < COMPASS_EVALS {
        let mut moved = false;
        for (i, &j) in ys.iter().enumerate() {
            let mut improved = false;
            for sign in [1.0, -1.0] {
                let mut trial = theta.to_vec();
                trial[j] = (trial[j] + sign * h[i]).clamp(-sp.bounds[j], sp.bounds[j]);
                evals += 1;
                match x_shift(sp, &mut trial, part, work, opts, counters)? {
                    None => {
                        theta.copy_from_slice(&trial);
                        return Ok(Feasibility::Found);
                    }
                    Some(s) if s < best => {
                        theta.copy_from_slice(&trial);
                        best = s;
                        improved = true;
                        break;
                    }
                    _ => {}
                }
            }
            h[i] *= if improved { 2.0 } else { 0.5 };
            moved |= improved;
        }
        let tiny = ys.iter().zip(&h).all(|(&j, hi)| *hi < 1e-9 * (1.0 + theta[j].abs()));
        if !moved && tiny {
            break;
        }
    }
    Ok(Feasibility::Stalled(best))
}

/// Alternating phase 1: drives the largest margin violation below zero.
/// Each step minimizes the shift over its entries and is kept only when the
/// shift does not grow.
fn alternate_shift(
    sp: &ScenarioProgram,
    theta: &mut [f64],
    part: &Partition,
    work: &mut Vec<usize>,
    opts: &SolverOptions,
    counters: &mut SolveCounters,
) -> Result<Feasibility, SolveError> {
    let mut prev = f64::INFINITY;
    for _ in 0..opts.max_rounds {
        let mut shift = prev;
        for vars in [&part.step_a, &part.step_b] {
            let prog = reduce(sp, theta, vars)?;
            let out = solve_affine(&prog, &gather(theta, vars), work, Goal::MinShift, opts, counters);
            *work = out.work;
            match out.status {
                AffineStatus::Feasible | AffineStatus::Optimal => {
                    scatter(theta, vars, &out.z);
                    return Ok(Feasibility::Found);
                }
                AffineStatus::Infeasible { s } => {
                    if s <= shift {
                        scatter(theta, vars, &out.z);
                        shift = s;
                    }
                }
                AffineStatus::IterationLimit => return Ok(Feasibility::Failed("phase 1 iteration limit".into())),
                AffineStatus::Numerical(m) => return Ok(Feasibility::Failed(m)),
            }
        }
        if prev.is_finite() && prev - shift <= opts.tol_alt * prev.abs() {
            return Ok(Feasibility::Stalled(shift));
        }
        prev = shift;
    }
    Ok(Feasibility::Stalled(prev))
}

struct Local {
    theta: Vec<f64>,
    objective: f64,
    status: SolveStatus,
    history: Vec<f64>,
    message: Option<String>,
}

/// Objective alternation from a feasible `theta`; the objective never increases.
fn descend(
    sp: &ScenarioProgram,
    mut theta: Vec<f64>,
    part: &Partition,
    work: &mut Vec<usize>,
    opts: &SolverOptions,
    counters: &mut SolveCounters,
) -> Result<Local, SolveError> {
    let mut objective = sp.objective_at(&theta);
    let mut history = vec![objective];
    for _ in 0..opts.max_rounds {
        counters.alternation_rounds += 1;
        let start = objective;
        for vars in [&part.step_a, &part.step_b] {
            let prog = reduce(sp, &theta, vars)?;
            let out = solve_affine(&prog, &gather(&theta, vars), work, Goal::Optimize, opts, counters);
            *work = out.work;
            let usable = matches!(out.status, AffineStatus::Optimal | AffineStatus::IterationLimit);
            if !usable {
                // theta is still the last verified point; report the early stop
                let reason = match out.status {
                    AffineStatus::Numerical(m) => m,
                    _ => "subproblem lost feasibility".into(),
                };
                let message = Some(format!("alternation stopped early: {reason}"));
                return Ok(Local { theta, objective, status: SolveStatus::IterationLimit, history, message });
            }
            let mut candidate = theta.clone();
            scatter(&mut candidate, vars, &out.z);
            let value = sp.objective_at(&candidate);
            if value <= objective + 1e-12 * (1.0 + objective.abs()) && verify(sp, &candidate).margins_ok {
                theta = candidate;
                objective = value.min(objective);
            }
        }
        history.push(objective);
        if start - objective <= opts.tol_alt * start.abs().max(1.0) {
            return Ok(Local { theta, objective, status: SolveStatus::Optimal, history, message: None });
        }
    }
    Ok(Local { theta, objective, status: SolveStatus::IterationLimit, history, message: None })
}

pub(super) fn solve_bmi(
    sp: &ScenarioProgram,
    opts: &SolverOptions,
    counters: &mut SolveCounters,
) -> Result<SolveResult, SolveError> {
    let m = sp.m_theta();
    let part = partition(sp);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, Purpose::Design, u64::MAX));
    let mut best: Option<Local> = None;
    let mut last_failure = String::new();
    let mut work: Vec<usize> = Vec::new();

    for r in 0..opts.restarts.max(1) {
        counters.restarts += 1;
        let mut theta = vec![0.0; m];
        if r == 0 {
            if let Some(init) = opts.initial_theta.as_ref().filter(|t| t.len() == m) {
                theta.copy_from_slice(init);
            }
        } else {
            for &j in &part.coupled_y {
                theta[j] = rng.random_range(-1.0..=1.0);
            }
        }
        match find_feasible(sp, &mut theta, &part, &mut work, opts, counters)? {
            Feasibility::Found => {}
            Feasibility::Stalled(s) => {
                last_failure = format!("restart {r}: alternating phase 1 stalled at shift {s:.3e}");
                continue;
            }
            Feasibility::Failed(msg) => {
                last_failure = format!("restart {r}: {msg}");
                continue;
            }
        }
        let local = descend(sp, theta, &part, &mut work, opts, counters)?;
        debug_assert!(local.history.windows(2).all(|w| w[1] <= w[0]));
        let better = match &best {
            None => true,
            Some(b) => {
                let rank = |s: SolveStatus| u8::from(!s.has_solution());
                (rank(local.status), local.objective) < (rank(b.status), b.objective)
            }
        };
        if better {
            best = Some(local);
        }
        // a warm start that reaches a solution is kept without random restarts
        if r == 0 && opts.initial_theta.is_some() && best.as_ref().is_some_and(|b| b.status.has_solution()) {
            break;
        }
    }

    Ok(match best {
        Some(b) => SolveResult {
            status: b.status,
            objective: b.objective,
            theta: b.theta,
            min_eigenvalue: f64::NAN,
            margins: sp.margins.clone(),
            certificate: None,
            message: b.message,
            objective_history: b.history,
            counters: SolveCounters::default(),
            elapsed_secs: 0.0,
        },
        None => SolveResult {
            status: SolveStatus::AllRestartsFailed,
            objective: f64::NAN,
            theta: vec![0.0; m],
            min_eigenvalue: f64::NAN,
            margins: sp.margins.clone(),
            certificate: None,
            message: Some(last_failure),
            objective_history: Vec::new(),
            counters: SolveCounters::default(),
            elapsed_secs: 0.0,
        },
    })
}
