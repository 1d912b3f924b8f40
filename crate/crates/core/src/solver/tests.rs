use super::*;
use crate::problem::UncertainProblem;
use crate::sampling::{draw, empirical_violation, Distribution, Purpose, ScenarioSet};

fn fixed_set(p: &UncertainProblem, rows: &[&[f64]]) -> ScenarioSet {
    ScenarioSet {
        names: p.params.names(),
        samples: rows.iter().map(|r| r.to_vec()).collect(),
        purpose: Purpose::Design,
        distribution: Distribution::Uniform,
        seed: None,
        iteration: 0,
    }
}

fn testbed() -> UncertainProblem {
    UncertainProblem::from_json(
        r#"{"parameters": [{"name": "q", "nominal": 0.5, "lower": 0, "upper": 1}],
            "variables": [{"name": "x"}], "objective": {"x": 1},
            "blocks": [{"dim": 1, "strictness": "strict", "entries": {"0,0": "x - q"}}]}"#,
    )
    .unwrap()
}

fn two_by_two() -> UncertainProblem {
    UncertainProblem::from_json(
        r#"{"parameters": [], "variables": [{"name": "x1"}, {"name": "x2"}],
            "objective": {"x1": 1, "x2": 1},
            "blocks": [
              {"dim": 2, "strictness": "nonstrict", "entries": {"0,0": "x1", "0,1": "1", "1,1": "x2"}},
              {"dim": 1, "strictness": "nonstrict", "entries": {"0,0": "3 - x1"}}]}"#,
    )
    .unwrap()
}

#[test]
fn scenario_maximum() {
    let p = testbed();
    let s = fixed_set(&p, &[&[0.3], &[0.7], &[0.5]]);
    let r = solve(&p, &s, &SolverOptions::default()).unwrap();
    assert_eq!(r.status, SolveStatus::Optimal);
    let sigma = 1e-6 * 1.5;
    assert_eq!(r.margins, [sigma]);
    assert!((r.theta[0] - (0.7 + sigma)).abs() < 1e-6, "{}", r.theta[0]);
    assert!(r.theta[0] > 0.7 + sigma);
    assert!((r.objective - (0.7 + sigma)).abs() < 1e-6);
}

#[test]
fn zero_objective_on_constant_block() {
    let p = UncertainProblem::from_json(
        r#"{"parameters": [], "variables": [{"name": "x"}],
            "blocks": [{"dim": 2, "strictness": "strict", "entries": {"0,0": "2", "1,1": "1", "0,1": "0.5"}}]}"#,
    )
    .unwrap();
    let r = solve(&p, &fixed_set(&p, &[&[]]), &SolverOptions::default()).unwrap();
    assert_eq!(r.status, SolveStatus::Optimal);
    assert_eq!(r.objective, 0.0);
}

#[test]
fn two_by_two_kkt_point() {
    let p = two_by_two();
    let r = solve(&p, &fixed_set(&p, &[&[]]), &SolverOptions::default()).unwrap();
    assert_eq!(r.status, SolveStatus::Optimal);
    assert!((r.objective - 2.0).abs() < 1e-6, "{}", r.objective);
    assert!((r.theta[0] - 1.0).abs() < 1e-3 && (r.theta[1] - 1.0).abs() < 1e-3, "{:?}", r.theta);
}

#[test]
fn infeasible_constant_problem() {
    let p = UncertainProblem::from_json(
        r#"{"parameters": [], "variables": [{"name": "x"}], "objective": {"x": 1},
            "blocks": [{"dim": 1, "strictness": "strict", "entries": {"0,0": "x - 1"}},
                       {"dim": 1, "strictness": "strict", "entries": {"0,0": "-x"}}]}"#,
    )
    .unwrap();
    let r = solve(&p, &fixed_set(&p, &[&[]]), &SolverOptions::default()).unwrap();
    assert_eq!(r.status, SolveStatus::Infeasible);
    assert!(r.certificate.unwrap().contains("phase 1"));
}

#[test]
fn assembly_order() {
    let p = UncertainProblem::from_json(
        r#"{"parameters": [{"name": "q", "nominal": 0.5, "lower": 0, "upper": 1}],
            "variables": [{"name": "x"}],
            "blocks": [{"dim": 1, "strictness": "strict", "entries": {"0,0": "x - q"}},
                       {"dim": 2, "strictness": "nonstrict", "entries": {"0,0": "x", "1,1": "q"}}]}"#,
    )
    .unwrap();
    let sp = assemble(&p, &fixed_set(&p, &[&[0.1], &[0.2], &[0.3]]), &SolverOptions::default()).unwrap();
    assert_eq!(sp.len(), 6);
    assert_eq!(sp.stacked_dimension(), 9);
    for (k, con) in sp.constraints.iter().enumerate() {
        assert_eq!(con.block, k % 2);
    }
    assert_eq!(sp.constraints[2].constant[(0, 0)], -0.2);
    assert_eq!(sp.constraints[5].constant[(1, 1)], 0.3);
    let one = assemble(&testbed(), &fixed_set(&testbed(), &[&[0.4]]), &SolverOptions::default()).unwrap();
    assert_eq!(one.len(), 1);
}

#[test]
fn more_samples_never_lower_the_optimum() {
    let p = testbed();
    let s = draw(&p.params, 200, 17, Purpose::Design);
    let mut prev = f64::NEG_INFINITY;
    for n in [1, 5, 20, 60, 200] {
        let sub = ScenarioSet { samples: s.samples[..n].to_vec(), ..s.clone() };
        let r = solve(&p, &sub, &SolverOptions::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        // up to the barrier accuracy gap_tol * (1 + |obj|)
        assert!(r.objective >= prev - 1e-7 * (1.0 + prev.abs()), "{n}: {} < {prev}", r.objective);
        prev = r.objective;
    }
}

#[test]
fn optimal_points_satisfy_every_design_sample() {
    let p = UncertainProblem::from_json(
        r#"{"parameters": [{"name": "a", "nominal": 0, "lower": -1, "upper": 1},
                           {"name": "b", "nominal": 0, "lower": -1, "upper": 1}],
            "variables": [{"name": "P", "kind": "symmetric", "dim": 2}],
            "objective": {"P_0_0": 1, "P_1_1": 1},
            "blocks": [{"dim": 2, "strictness": "strict",
                        "entries": {"0,0": "P_0_0 - 1 - a", "0,1": "P_0_1 - b", "1,1": "P_1_1 - 1 + a"}}]}"#,
    )
    .unwrap();
    for seed in 0..5 {
        let s = draw(&p.params, 300, seed, Purpose::Design);
        let r = solve(&p, &s, &SolverOptions::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert_eq!(empirical_violation(&p, &r.theta, &s).unwrap(), 0.0);
        assert!(r.min_eigenvalue >= r.margins[0]);
    }
}

#[test]
fn deterministic() {
    let p = testbed();
    let s = draw(&p.params, 500, 3, Purpose::Design);
    let a = solve(&p, &s, &SolverOptions::default()).unwrap();
    let b = solve(&p, &s, &SolverOptions::default()).unwrap();
    assert_eq!(a.status, b.status);
    assert_eq!(a.theta, b.theta);
    assert_eq!(a.counters, b.counters);
}

#[test]
fn bmi_path_on_affine_problem_matches_lmi() {
    let p = two_by_two();
    let s = fixed_set(&p, &[&[]]);
    let lmi = solve(&p, &s, &SolverOptions::default()).unwrap();
    let bmi = solve_scenario_bmi(&p, &s, &SolverOptions::default()).unwrap();
    assert_eq!(bmi.status, SolveStatus::Optimal);
    assert!((lmi.objective - bmi.objective).abs() < 1e-6);
    assert!(solve_scenario_lmi(&assemble(&p, &s, &SolverOptions::default()).unwrap(), &SolverOptions::default()).is_ok());
}

#[test]
fn scalar_bmi_keeps_gamma_above_product() {
    let p = UncertainProblem::from_json(
        r#"{"parameters": [], "variables": [{"name": "g"}, {"name": "x"}, {"name": "y", "group": "y"}],
            "objective": {"g": 1},
            "blocks": [
              {"dim": 1, "strictness": "strict", "entries": {"0,0": "g - x*y"}},
              {"dim": 1, "strictness": "nonstrict", "entries": {"0,0": "x + y - 2"}},
              {"dim": 1, "strictness": "nonstrict", "entries": {"0,0": "2 - x - y"}},
              {"dim": 1, "strictness": "nonstrict", "entries": {"0,0": "x"}},
              {"dim": 1, "strictness": "nonstrict", "entries": {"0,0": "y"}}]}"#,
    )
    .unwrap();
    assert_eq!(p.kind(), ProblemKind::Bmi);
    let s = fixed_set(&p, &[&[]]);
    for init in [vec![0.0, 2.0, 0.0], vec![0.0, 0.5, 1.5]] {
        let opts = SolverOptions { initial_theta: Some(init), ..Default::default() };
        let r = solve(&p, &s, &opts).unwrap();
        assert!(r.status.has_solution(), "{r:?}");
        let (g, x, y) = (r.theta[0], r.theta[1], r.theta[2]);
        assert!(g > x * y, "{g} {x} {y}");
        assert!((x + y - 2.0).abs() < 1e-6);
        assert!(r.objective_history.windows(2).all(|w| w[1] <= w[0]));
    }
    // all restarts fail on an infeasible bilinear problem
    let bad = UncertainProblem::from_json(
        r#"{"parameters": [], "variables": [{"name": "x"}, {"name": "y", "group": "y"}],
            "blocks": [{"dim": 1, "strictness": "strict", "entries": {"0,0": "x*y - 1"}},
                       {"dim": 1, "strictness": "strict", "entries": {"0,0": "-x*y"}}]}"#,
    )
    .unwrap();
    let r = solve(&bad, &fixed_set(&bad, &[&[]]), &SolverOptions { restarts: 2, ..Default::default() }).unwrap();
    assert_eq!(r.status, SolveStatus::AllRestartsFailed);
}
