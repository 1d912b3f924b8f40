use std::io::Write;

use randmi::sequential::{SequentialOutcome, SequentialStatus};

/// Mean, sample standard deviation and maximum of one column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stats {
    pub mean: f64,
    /// `None` for fewer than two values.
    pub std: Option<f64>,
    pub worst: f64,
}

pub fn stats(values: &[f64]) -> Option<Stats> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.len() > 1)
        .then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    let worst = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Some(Stats { mean, std, worst })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

const COLUMNS: [&str; 4] = ["design_samples", "validation_samples", "objective", "exit_iteration"];

pub fn header() -> String {
    let mut h = vec!["runs".to_string(), "certified".into(), "exit_last".into(), "infeasible".into()];
    for c in COLUMNS {
        h.extend([format!("{c}_mean"), format!("{c}_std"), format!("{c}_worst")]);
    }
    h.join(",")
}

/// One CSV row over a batch of runs. Objective statistics use only runs that
/// returned a design.
pub fn row(outcomes: &[SequentialOutcome]) -> String {
    let count = |s| outcomes.iter().filter(|o| o.status == s).count();
    let mut cells = vec![
        outcomes.len().to_string(),
        count(SequentialStatus::ProbabilisticSolution).to_string(),
        count(SequentialStatus::ExitAtLastIteration).to_string(),
        count(SequentialStatus::Infeasible).to_string(),
    ];
    let design: Vec<f64> = outcomes.iter().map(|o| o.design_samples as f64).collect();
    let validation: Vec<f64> = outcomes.iter().map(|o| o.validation_samples as f64).collect();
    let objective: Vec<f64> = outcomes.iter().filter_map(|o| o.objective).collect();
    let exit: Vec<f64> = outcomes.iter().map(|o| o.exit_iteration as f64).collect();
    for col in [&design, &validation, &objective, &exit] {
        match stats(col) {
            Some(s) => cells.extend([format!("{}", s.mean), fmt_opt(s.std), format!("{}", s.worst)]),
            None => cells.extend([String::new(), String::new(), String::new()]),
        }
    }
    cells.join(",")
}

pub fn write<W: Write>(mut w: W, outcomes: &[SequentialOutcome]) -> std::io::Result<()> {
    writeln!(w, "{}", header())?;
    writeln!(w, "{}", row(outcomes))
}
