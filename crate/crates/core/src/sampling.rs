//! Seeded i.i.d. multisamples over the parameter box and empirical
//! violation estimates.
//!
//! Every scenario set is drawn from its own ChaCha8 stream whose seed is
//! derived from `(master seed, purpose, iteration)` by [`derive_seed`], so a
//! design set and a validation set drawn with the same master seed are
//! independent, and results do not depend on evaluation order.

use std::fmt;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

use crate::error::{Error, ModelError};
use crate::expr::ParamTable;
use crate::problem::UncertainProblem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Purpose {
    Design,
    Validation,
    Audit,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Design => 0x6465_7369_676e,
            Purpose::Validation => 0x7661_6c69_6461,
            Purpose::Audit => 0x6175_6469_74,
        }
    }
}

impl fmt::Display for Purpose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Purpose::Design => "design",
            Purpose::Validation => "validation",
            Purpose::Audit => "audit",
        })
    }
}

/// Only independent per-coordinate uniform sampling on the box is shipped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distribution {
    #[default]
    Uniform,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed `sm(sm(sm(master) ^ tag) ^ k)` with `sm` the SplitMix64 finalizer.
pub fn derive_seed(master: u64, purpose: Purpose, k: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ purpose.tag()) ^ k)
}

/// Master seed of run `r` in a batch of repeated runs.
pub fn repeat_seed(master: u64, r: u64) -> u64 {
    splitmix64(splitmix64(master) ^ 0x7265_7065_6174 ^ splitmix64(r))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSet {
    pub names: Vec<String>,
    /// One row per sample, in parameter-table order.
    pub samples: Vec<Vec<f64>>,
    pub purpose: Purpose,
    pub distribution: Distribution,
    /// Master seed, `None` for imported sets.
    pub seed: Option<u64>,
    pub iteration: u64,
}

impl ScenarioSet {
    /// The single nominal parameter vector.
    pub fn nominal(table: &ParamTable) -> Self {
        ScenarioSet {
            names: table.names(),
            samples: vec![table.nominal()],
            purpose: Purpose::Design,
            distribution: Distribution::Uniform,
            seed: None,
            iteration: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.samples.iter().map(Vec::as_slice)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), Error> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&self.names)?;
        for row in &self.samples {
            out.write_record(row.iter().map(|v| format!("{v:?}")))?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads a set written by [`ScenarioSet::write_csv`]; the header must name
    /// the table's parameters in order and every row must lie in the box.
    pub fn read_csv<R: Read>(r: R, table: &ParamTable, purpose: Purpose) -> Result<Self, Error> {
        let mut rdr = csv::Reader::from_reader(r);
        let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
        if header != table.names() {
            return Err(ModelError::schema(
                "header",
                format!("expected columns {:?}, got {:?}", table.names(), header),
            )
            .into());
        }
        let mut samples = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let mut row = Vec::with_capacity(rec.len());
            for (j, field) in rec.iter().enumerate() {
                let v: f64 = field.trim().parse().map_err(|_| {
                    ModelError::schema(format!("row {}.{}", i + 1, header[j]), format!("`{field}` is not a number"))
                })?;
                let p = &table.params()[j];
                if !(p.lower <= v && v <= p.upper) {
                    return Err(ModelError::schema(
                        format!("row {}.{}", i + 1, header[j]),
                        format!("{v} outside [{}, {}]", p.lower, p.upper),
                    )
                    .into());
                }
                row.push(v);
            }
            samples.push(row);
        }
        if samples.is_empty() {
            return Err(ModelError::schema("rows", "scenario file has no samples").into());
        }
        Ok(ScenarioSet {
            names: header,
            samples,
            purpose,
            distribution: Distribution::Uniform,
            seed: None,
            iteration: 0,
        })
    }
}

/// `n` i.i.d. uniform samples from the stream `(seed, purpose, k)`.
pub fn draw_stream(table: &ParamTable, n: usize, seed: u64, purpose: Purpose, k: u64) -> ScenarioSet {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, purpose, k));
    let samples = (0..n)
        .map(|_| {
            table
                .params()
                .iter()
                .map(|p| {
                    let u: f64 = rng.random();
                    // u < 1 keeps the draw inside [lower, upper)
                    (p.lower + (p.upper - p.lower) * u).clamp(p.lower, p.upper)
                })
                .collect()
        })
        .collect();
    ScenarioSet {
        names: table.names(),
        samples,
        purpose,
        distribution: Distribution::Uniform,
        seed: Some(seed),
        iteration: k,
    }
}

pub fn draw(table: &ParamTable, n: usize, seed: u64, purpose: Purpose) -> ScenarioSet {
    draw_stream(table, n, seed, purpose, 0)
}

/// Number of samples at which `theta` violates the constraints. Samples are
/// checked in parallel; the first error in sample order is returned.
pub fn count_violations(p: &UncertainProblem, theta: &[f64], s: &ScenarioSet) -> Result<u64, ModelError> {
    p.check_theta(theta)?;
    let flags: Vec<Result<u8, ModelError>> = s.samples.par_iter().map(|q| p.indicator(theta, q)).collect();
    let mut count = 0;
    for f in flags {
        count += u64::from(f?);
    }
    Ok(count)
}

/// Fraction of samples at which `theta` violates the constraints.
pub fn empirical_violation(p: &UncertainProblem, theta: &[f64], s: &ScenarioSet) -> Result<f64, ModelError> {
    if s.is_empty() {
        return Ok(0.0);
    }
    Ok(count_violations(p, theta, s)? as f64 / s.len() as f64)
}

/// Exact (Clopper-Pearson) two-sided interval for a binomial proportion
/// with `k` successes out of `n`, at coverage `confidence`.
pub fn clopper_pearson(k: u64, n: u64, confidence: f64) -> (f64, f64) {
    assert!(n > 0 && k <= n, "need 0 <= k <= n, n > 0");
    let tail = (1.0 - confidence) / 2.0;
    let (kf, nf) = (k as f64, n as f64);
    let lower = if k == 0 {
        0.0
    } else {
        Beta::new(kf, nf - kf + 1.0).expect("positive shapes").inverse_cdf(tail)
    };
    let upper = if k == n {
        1.0
    } else {
        Beta::new(kf + 1.0, nf - kf).expect("positive shapes").inverse_cdf(1.0 - tail)
    };
    (lower, upper)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationEstimate {
    pub samples: u64,
    pub violations: u64,
    pub estimate: f64,
    pub confidence: f64,
    pub lower: f64,
    pub upper: f64,
    pub seed: u64,
}

/// Fresh audit multisample of size `m` from `table`, its empirical violation
/// and Clopper-Pearson interval.
pub fn violation_estimate(
    p: &UncertainProblem,
    theta: &[f64],
    table: &ParamTable,
    m: usize,
    seed: u64,
    confidence: f64,
) -> Result<ViolationEstimate, Error> {
    if m == 0 {
        return Err(crate::error::LevelError::OutOfRange { name: "M", value: 0.0, range: "[1, inf)" }.into());
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(crate::error::LevelError::OutOfRange { name: "confidence", value: confidence, range: "(0, 1)" }.into());
    }
    if table.names() != p.params.names() {
        return Err(ModelError::schema("parameters", "audit table does not match the problem's parameters").into());
    }
    let set = draw(table, m, seed, Purpose::Audit);
    let violations = count_violations(p, theta, &set)?;
    let (lower, upper) = clopper_pearson(violations, m as u64, confidence);
    Ok(ViolationEstimate {
        samples: m as u64,
        violations,
        estimate: violations as f64 / m as f64,
        confidence,
        lower,
        upper,
        seed,
    })
}
