use randmi::problems::manipulator;
use randmi::sampling::ScenarioSet;
use randmi::solver::{assemble, solve, SolveStatus, SolverOptions};
use randmi::{ProblemKind, Strictness};

#[test]
fn dimensions_and_kind() {
    let p = manipulator();
    assert_eq!(p.m_theta(), 13);
    assert_eq!(p.bound_dimension(), 11);
    assert_eq!(p.strictness(), Strictness::Strict);
    assert_eq!(p.kind(), ProblemKind::Bmi);
    assert_eq!(p.params.len(), 6);
    let dims: Vec<usize> = p.blocks.iter().map(|b| b.dim).collect();
    assert_eq!(dims, vec![6, 4, 1]);
}

#[test]
fn cone_blocks_are_the_certificate_and_gamma() {
    let p = manipulator();
    let sp = assemble(&p, &ScenarioSet::nominal(&p.params), &SolverOptions::default()).unwrap();
    assert_eq!(sp.cones, vec![false, true, true]);
}

#[test]
fn boxes_are_fifteen_percent() {
    let p = manipulator();
    for q in p.params.params() {
        let lo = q.nominal * if q.nominal < 0.0 { 1.15 } else { 0.85 };
        let hi = q.nominal * if q.nominal < 0.0 { 0.85 } else { 1.15 };
        assert!((q.lower - lo).abs() <= 1e-12 * lo.abs(), "{}", q.name);
        assert!((q.upper - hi).abs() <= 1e-12 * hi.abs(), "{}", q.name);
    }
}

#[test]
fn nominal_coefficient() {
    let p = manipulator();
    let nominal = p.params.nominal();
    let blocks = p.instantiate(&nominal).unwrap();
    let x33 = p.layout.entry_index("X_3_3").unwrap();
    let (_, m) = blocks[0].linear.iter().find(|(i, _)| *i == x33).unwrap();
    assert!((m[(2, 3)] - 2.23923).abs() < 1e-5, "{}", m[(2, 3)]);
    assert_eq!(m[(2, 3)], m[(3, 2)]);
}

#[test]
fn nominal_design_attenuation_level() {
    let p = manipulator();
    let r = solve(&p, &ScenarioSet::nominal(&p.params), &SolverOptions::default()).unwrap();
    assert_eq!(r.status, SolveStatus::Optimal, "{:?}", r.message);
    let gamma = r.theta[p.layout.entry_index("gamma").unwrap()];
    assert!((0.9..=1.2).contains(&gamma), "gamma = {gamma}");
    assert_eq!(gamma, r.objective);
    let hist = &r.objective_history;
    assert!(hist.windows(2).all(|w| w[1] <= w[0] + 1e-9 * w[0].abs()));
}
