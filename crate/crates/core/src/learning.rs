//! Closed-form sample-complexity quantities: VC-dimension bounds, the
//! two-sided and one-sided sample bounds, the uniform-convergence failure
//! bound and the validation-sample schedule of the sequential algorithm.
//!
//! `lg` is log base 2 and `ln` the natural log. VC bounds `d` are never
//! rounded; only final sample counts are.

use std::f64::consts::E;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::LevelError;
use crate::problem::Strictness;

/// Accuracy `epsilon`, confidence `delta` and level `rho`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbabilisticLevels {
    pub epsilon: f64,
    pub delta: f64,
    pub rho: f64,
}

impl ProbabilisticLevels {
    pub fn new(epsilon: f64, delta: f64, rho: f64) -> Result<Self, LevelError> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(LevelError::OutOfRange { name: "epsilon", value: epsilon, range: "(0, 1)" });
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(LevelError::OutOfRange { name: "delta", value: delta, range: "(0, 1)" });
        }
        if !(rho >= 0.0 && rho < 1.0) {
            return Err(LevelError::OutOfRange { name: "rho", value: rho, range: "[0, 1)" });
        }
        Ok(Self { epsilon, delta, rho })
    }

    /// Re-checks the ranges, for values that arrived through deserialization.
    pub fn validate(&self) -> Result<(), LevelError> {
        Self::new(self.epsilon, self.delta, self.rho).map(|_| ())
    }
}

/// `2 m lg(4 e gamma eta)`, the VC bound for a `(gamma, eta)`-Boolean family
/// in `m` real parameters.
pub fn boolean_vc_bound(gamma: u64, eta: u64, m_theta: u64) -> f64 {
    2.0 * m_theta as f64 * (4.0 * E * gamma as f64 * eta as f64).log2()
}

/// `2 m lg(4 e n^2)`: strict constraints of size `n`, decided by `n` leading
/// principal minors of degree at most `n`.
pub fn vc_bound_strict(m_theta: u64, n: u64) -> f64 {
    boolean_vc_bound(n, n, m_theta)
}

/// `2 m lg(4 e n 2^n)`: nonstrict constraints need all `2^n` principal minors.
/// Evaluated as `2 m (lg(4 e n) + n)`.
pub fn vc_bound_nonstrict(m_theta: u64, n: u64) -> f64 {
    2.0 * m_theta as f64 * ((4.0 * E * n as f64).log2() + n as f64)
}

pub fn vc_bound(m_theta: u64, n: u64, strictness: Strictness) -> f64 {
    match strictness {
        Strictness::Strict => vc_bound_strict(m_theta, n),
        Strictness::Nonstrict => vc_bound_nonstrict(m_theta, n),
    }
}

/// `4 e^{2 eps} (2 e N / d)^d e^{-N eps^2}`, clamped to `[0, 1]`.
pub fn two_sided_failure_bound(n_samples: u64, epsilon: f64, d: f64) -> f64 {
    let n = n_samples as f64;
    let log = 4f64.ln() + 2.0 * epsilon + d * (2.0 * E * n / d).ln() - n * epsilon * epsilon;
    if log >= 0.0 {
        1.0
    } else {
        log.exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundFormula {
    /// `N >= 1.2/eps^2 (ln(4 e^{2 eps}/delta) + d ln(12/eps^2))`
    TwoSided,
    /// `N >= 5(rho+eps)/eps^2 (ln(4/delta) + d ln(40(rho+eps)/eps^2))`
    OneSided,
}

impl fmt::Display for BoundFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BoundFormula::TwoSided => "two_sided",
            BoundFormula::OneSided => "one_sided",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub formula: BoundFormula,
    pub levels: ProbabilisticLevels,
    pub m_theta: u64,
    pub n: u64,
    pub strictness: Strictness,
    /// VC bound, unrounded.
    pub d: f64,
    /// Right-hand side before the ceiling.
    pub raw: f64,
    /// `ceil(raw)`, at least 1.
    pub samples: u64,
}

fn report(
    formula: BoundFormula,
    levels: &ProbabilisticLevels,
    m_theta: u64,
    n: u64,
    strictness: Strictness,
    d: f64,
    raw: f64,
) -> BoundReport {
    BoundReport {
        formula,
        levels: *levels,
        m_theta,
        n,
        strictness,
        d,
        raw,
        samples: (raw.ceil() as u64).max(1),
    }
}

/// Two-sided bound for a given `d`.
pub fn two_sided_samples(epsilon: f64, delta: f64, d: f64) -> f64 {
    let e2 = epsilon * epsilon;
    1.2 / e2 * ((4.0 * (2.0 * epsilon).exp() / delta).ln() + d * (12.0 / e2).ln())
}

/// One-sided bound for a given `d`.
pub fn one_sided_samples(epsilon: f64, delta: f64, rho: f64, d: f64) -> f64 {
    let e2 = epsilon * epsilon;
    let re = rho + epsilon;
    5.0 * re / e2 * ((4.0 / delta).ln() + d * (40.0 * re / e2).ln())
}

/// Sample size guaranteeing uniform two-sided accuracy; `rho` is ignored.
pub fn sample_bound_two_sided(
    levels: &ProbabilisticLevels,
    m_theta: u64,
    n: u64,
    strictness: Strictness,
) -> BoundReport {
    let d = vc_bound(m_theta, n, strictness);
    let raw = two_sided_samples(levels.epsilon, levels.delta, d);
    report(BoundFormula::TwoSided, levels, m_theta, n, strictness, d, raw)
}

/// Sample size guaranteeing that every `theta` with empirical violation at
/// most `rho` has true violation at most `rho + epsilon`.
pub fn sample_bound_one_sided(
    levels: &ProbabilisticLevels,
    m_theta: u64,
    n: u64,
    strictness: Strictness,
) -> BoundReport {
    let d = vc_bound(m_theta, n, strictness);
    let raw = one_sided_samples(levels.epsilon, levels.delta, levels.rho, d);
    report(BoundFormula::OneSided, levels, m_theta, n, strictness, d, raw)
}

/// `S_{k_t}(alpha) = sum_{k=1}^{k_t} k^{-alpha}` by direct summation,
/// smallest terms first.
pub fn p_series(k_t: u64, alpha: f64) -> f64 {
    (1..=k_t).rev().map(|k| (k as f64).powf(-alpha)).sum()
}

/// `N_k = ceil(N k / k_t)` for `k = 1..=k_t`.
pub fn design_sample_schedule(n: u64, k_t: u64) -> Result<Vec<u64>, LevelError> {
    if k_t < 2 {
        return Err(LevelError::TooFewIterations(k_t));
    }
    Ok((1..=k_t).map(|k| design_samples_at(n, k, k_t)).collect())
}

/// `ceil(N k / k_t)` in exact integer arithmetic.
pub fn design_samples_at(n: u64, k: u64, k_t: u64) -> u64 {
    let num = n as u128 * k as u128;
    num.div_ceil(k_t as u128) as u64
}

/// The constant `a` of the validation bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationConstant {
    Finite(f64),
    Infinite,
}

impl ValidationConstant {
    pub fn value(self) -> f64 {
        match self {
            ValidationConstant::Finite(a) => a,
            ValidationConstant::Infinite => f64::INFINITY,
        }
    }
}

impl fmt::Display for ValidationConstant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationConstant::Finite(a) => write!(f, "{a}"),
            ValidationConstant::Infinite => f.write_str("inf"),
        }
    }
}

impl std::str::FromStr for ValidationConstant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "inf" | "infinity" | "Inf" | "INF" => Ok(ValidationConstant::Infinite),
            other => other
                .parse::<f64>()
                .map(|a| if a.is_infinite() { ValidationConstant::Infinite } else { ValidationConstant::Finite(a) })
                .map_err(|e| format!("bad value for a: {e}")),
        }
    }
}

/// Default `(a, alpha)`: `(3.05, 0.9)` for `rho > 0`, `(inf, 0.1)` for `rho = 0`.
pub fn default_validation_constants(rho: f64) -> (ValidationConstant, f64) {
    if rho > 0.0 {
        (ValidationConstant::Finite(3.05), 0.9)
    } else {
        (ValidationConstant::Infinite, 0.1)
    }
}

/// Denominator `ln(1 / ((rho+eps) a^{rho-1} + a^rho (1-(rho+eps))))`, with
/// the `a -> inf, rho = 0` limit `ln(1/(1-eps))`.
pub fn validation_denominator(levels: &ProbabilisticLevels, a: ValidationConstant) -> Result<f64, LevelError> {
    let re = levels.rho + levels.epsilon;
    let den = match a {
        ValidationConstant::Infinite => {
            if levels.rho != 0.0 {
                return Err(LevelError::InfiniteA);
            }
            -(-levels.epsilon).ln_1p()
        }
        ValidationConstant::Finite(a) => {
            if !(a >= 1.0 && a.is_finite()) {
                return Err(LevelError::OutOfRange { name: "a", value: a, range: "[1, inf]" });
            }
            -(re * a.powf(levels.rho - 1.0) + a.powf(levels.rho) * (1.0 - re)).ln()
        }
    };
    if den > 0.0 && den.is_finite() {
        Ok(den)
    } else {
        Err(LevelError::VacuousBound(den))
    }
}

/// Validation sample count `M_k` at iteration `k` of `k_t`.
pub fn validation_bound(
    k: u64,
    k_t: u64,
    alpha: f64,
    a: ValidationConstant,
    levels: &ProbabilisticLevels,
) -> Result<u64, LevelError> {
    ValidationSchedule::new(*levels, k_t, alpha, a)?.m_k(k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationSchedule {
    pub levels: ProbabilisticLevels,
    pub k_t: u64,
    pub alpha: f64,
    pub a: ValidationConstant,
    pub s_kt: f64,
    denominator: f64,
}

impl ValidationSchedule {
    pub fn new(levels: ProbabilisticLevels, k_t: u64, alpha: f64, a: ValidationConstant) -> Result<Self, LevelError> {
        levels.validate()?;
        if k_t < 1 {
            return Err(LevelError::TooFewIterations(k_t));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(LevelError::OutOfRange { name: "alpha", value: alpha, range: "(0, inf)" });
        }
        let denominator = validation_denominator(&levels, a)?;
        Ok(Self { levels, k_t, alpha, a, s_kt: p_series(k_t, alpha), denominator })
    }

    pub fn with_defaults(levels: ProbabilisticLevels, k_t: u64) -> Result<Self, LevelError> {
        let (a, alpha) = default_validation_constants(levels.rho);
        Self::new(levels, k_t, alpha, a)
    }

    pub fn denominator(&self) -> f64 {
        self.denominator
    }

    pub fn raw(&self, k: u64) -> Result<f64, LevelError> {
        if k < 1 || k > self.k_t {
            return Err(LevelError::Iteration { k, k_t: self.k_t });
        }
        let num = self.alpha * (k as f64).ln() + self.s_kt.ln() - self.levels.delta.ln();
        Ok(num / self.denominator)
    }

    pub fn m_k(&self, k: u64) -> Result<u64, LevelError> {
        Ok((self.raw(k)?.ceil() as u64).max(1))
    }

    /// `M_1..=M_{k_t}`.
    pub fn counts(&self) -> Vec<u64> {
        (1..=self.k_t).map(|k| self.m_k(k).expect("k in range")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lv(e: f64, d: f64, r: f64) -> ProbabilisticLevels {
        ProbabilisticLevels::new(e, d, r).unwrap()
    }

    #[test]
    fn level_ranges() {
        assert!(ProbabilisticLevels::new(0.0, 0.1, 0.0).is_err());
        assert!(ProbabilisticLevels::new(0.1, 1.0, 0.0).is_err());
        assert!(ProbabilisticLevels::new(0.1, 0.1, 1.0).is_err());
        assert!(ProbabilisticLevels::new(f64::NAN, 0.1, 0.0).is_err());
        assert!(ProbabilisticLevels::new(0.1, 0.1, 0.0).is_ok());
    }

    #[test]
    fn vc_bounds_match_oracle() {
        // values from an independent Python evaluation
        assert!((boolean_vc_bound(1, 1, 1) - 6.885390081777927).abs() < 1e-12);
        assert!((vc_bound_strict(13, 11) - 269.40051523225253).abs() < 1e-9);
        assert!((vc_bound_nonstrict(13, 11) - 465.45529314768277).abs() < 1e-9);
        for m in 1..20 {
            assert!((vc_bound_nonstrict(m, 1) - boolean_vc_bound(1, 2, m)).abs() < 1e-12);
            assert!((boolean_vc_bound(4, 4, 2 * m) - 2.0 * boolean_vc_bound(4, 4, m)).abs() < 1e-9);
            for n in 2..30 {
                assert_eq!(vc_bound_strict(m, n), boolean_vc_bound(n, n, m));
                assert!(vc_bound_nonstrict(m, n) > vc_bound_strict(m, n));
                assert!(vc_bound_strict(m, n) >= vc_bound_strict(m, n - 1));
            }
        }
        assert!(vc_bound_nonstrict(1, 1000).is_finite());
    }

    #[test]
    fn two_sided_bound_values() {
        let r = sample_bound_two_sided(&lv(0.2, 1e-2, 0.0), 13, 11, Strictness::Strict);
        assert_eq!(r.samples, 46290);
        let s = sample_bound_two_sided(&lv(0.2, 1e-2, 0.0), 13, 11, Strictness::Nonstrict);
        assert_eq!(s.samples, 79838);
        let common = 1.2 / 0.04 * (4.0 * 0.4f64.exp() / 1e-2).ln();
        let ratio = (s.raw - common) / (r.raw - common);
        assert!((ratio - 465.45529314768277 / 269.40051523225253).abs() < 1e-9);
    }

    #[test]
    fn table1_one_sided_values() {
        let rows = [
            (0.2, 1e-2, 35835),
            (0.1, 1e-4, 81236),
            (0.05, 1e-6, 181604),
            (0.01, 1e-8, 1127115),
            (0.005, 1e-10, 2445568),
        ];
        for (e, d, n) in rows {
            assert_eq!(sample_bound_one_sided(&lv(e, d, 0.0), 13, 11, Strictness::Strict).samples, n);
        }
        assert_eq!(sample_bound_one_sided(&lv(0.2, 1e-2, 0.05), 13, 11, Strictness::Strict).samples, 46672);
        assert_eq!(sample_bound_one_sided(&lv(0.2, 0.1, 0.0), 1, 1, Strictness::Strict).samples, 1005);
    }

    #[test]
    fn failure_bound_limits() {
        assert!(two_sided_failure_bound(10_000_000, 0.1, 10.0) < 1e-300);
        assert_eq!(two_sided_failure_bound(10, 0.1, 10.0), 1.0);
        for e in [0.05, 0.1, 0.2, 0.4] {
            for delta in [1e-1, 1e-3, 1e-6] {
                for d in [1.0, 7.0, 50.0, 269.4] {
                    let n = two_sided_samples(e, delta, d).ceil() as u64;
                    assert!(two_sided_failure_bound(n, e, d) <= delta, "{e} {delta} {d}");
                }
            }
        }
    }

    #[test]
    fn p_series_values() {
        assert_eq!(p_series(1, 0.3), 1.0);
        assert!((p_series(4, 1.0) - 25.0 / 12.0).abs() < 1e-15);
        // mpmath: zeta(0.1) + 5000^0.9/0.9 + 5000^-0.1/2
        assert!((p_series(5000, 0.1) - 2370.0586).abs() < 1e-3);
        assert!((p_series(10, 0.1) - 8.6193).abs() < 1e-3);
    }

    #[test]
    fn validation_bound_values() {
        let inf = ValidationConstant::Infinite;
        assert_eq!(validation_bound(1, 5000, 0.1, inf, &lv(0.2, 1e-2, 0.0)).unwrap(), 56);
        assert_eq!(validation_bound(1, 5000, 0.1, inf, &lv(0.1, 1e-4, 0.0)).unwrap(), 162);
        assert_eq!(validation_bound(1, 10, 0.1, inf, &lv(0.2, 1e-2, 0.0)).unwrap(), 31);
        assert_eq!(validation_bound(5000, 5000, 0.1, inf, &lv(0.2, 1e-2, 0.0)).unwrap(), 60);
        let a = ValidationConstant::Finite(3.05);
        assert_eq!(validation_bound(3, 10, 0.9, a, &lv(0.2, 1e-2, 0.1)).unwrap(), 60);

        let s = ValidationSchedule::new(lv(0.2, 1e-2, 0.0), 5000, 0.1, inf).unwrap();
        let inc = s.raw(5000).unwrap() - s.raw(1).unwrap();
        assert!((inc - 0.1 * 5000f64.ln() / 1.25f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn validation_bound_errors() {
        let l = lv(0.2, 1e-2, 0.1);
        assert!(matches!(
            validation_bound(1, 10, 0.1, ValidationConstant::Infinite, &l),
            Err(LevelError::InfiniteA)
        ));
        assert!(matches!(
            validation_bound(11, 10, 0.1, ValidationConstant::Infinite, &lv(0.2, 0.1, 0.0)),
            Err(LevelError::Iteration { k: 11, k_t: 10 })
        ));
        // a = 1 makes the log argument exactly 1
        assert!(matches!(
            validation_bound(1, 10, 0.9, ValidationConstant::Finite(1.0), &l),
            Err(LevelError::VacuousBound(_))
        ));
        assert!(validation_bound(1, 10, 0.9, ValidationConstant::Finite(0.5), &l).is_err());
    }

    #[test]
    fn design_schedule() {
        assert_eq!(design_sample_schedule(100, 4).unwrap(), [25, 50, 75, 100]);
        assert_eq!(design_sample_schedule(10, 3).unwrap(), [4, 7, 10]);
        assert!(design_sample_schedule(10, 1).is_err());
    }

    #[test]
    fn default_constants() {
        assert_eq!(default_validation_constants(0.0), (ValidationConstant::Infinite, 0.1));
        assert_eq!(default_validation_constants(0.05), (ValidationConstant::Finite(3.05), 0.9));
        assert_eq!("inf".parse::<ValidationConstant>().unwrap(), ValidationConstant::Infinite);
        assert_eq!("3.05".parse::<ValidationConstant>().unwrap(), ValidationConstant::Finite(3.05));
    }

    proptest! {
        #[test]
        fn design_schedule_ends_at_n(n in 1u64..10_000_000, k_t in 2u64..200) {
            let s = design_sample_schedule(n, k_t).unwrap();
            prop_assert_eq!(*s.last().unwrap(), n);
            prop_assert!(s.windows(2).all(|w| w[0] <= w[1]));
            for (i, v) in s.iter().enumerate() {
                let k = i as u64 + 1;
                prop_assert!(*v as u128 * k_t as u128 >= n as u128 * k as u128);
            }
        }

        #[test]
        fn one_sided_below_two_sided(e in 0.005f64..0.2, lg_delta in -10.0f64..-2.0, m in 1u64..40, n in 1u64..30) {
            let l = lv(e, 10f64.powf(lg_delta), 0.0);
            for s in [Strictness::Strict, Strictness::Nonstrict] {
                prop_assert!(sample_bound_one_sided(&l, m, n, s).samples < sample_bound_two_sided(&l, m, n, s).samples);
            }
        }

        #[test]
        fn bounds_monotone(e in 0.01f64..0.5, delta in 1e-8f64..0.5, d in 1.0f64..500.0) {
            prop_assert!(two_sided_samples(e, delta * 0.5, d) >= two_sided_samples(e, delta, d));
            prop_assert!(two_sided_samples(e * 1.1, delta, d) <= two_sided_samples(e, delta, d));
            prop_assert!(one_sided_samples(e, delta * 0.5, 0.0, d) >= one_sided_samples(e, delta, 0.0, d));
            prop_assert!(one_sided_samples(e * 1.1, delta, 0.0, d) <= one_sided_samples(e, delta, 0.0, d));
        }

        #[test]
        fn validation_monotone(k_t in 2u64..300, e in 0.01f64..0.5, delta in 1e-8f64..0.5, rho in 0.0f64..0.3) {
            let l = lv(e, delta, rho);
            let (a, alpha) = default_validation_constants(rho);
            if let Ok(s) = ValidationSchedule::new(l, k_t, alpha, a) {
                let c = s.counts();
                prop_assert!(c.windows(2).all(|w| w[0] <= w[1]));
                let tighter = ValidationSchedule::new(lv(e, delta / 10.0, rho), k_t, alpha, a).unwrap();
                prop_assert!(tighter.m_k(1).unwrap() >= c[0]);
            }
        }
    }
}
