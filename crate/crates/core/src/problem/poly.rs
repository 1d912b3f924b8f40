//! Splits an entry expression that mentions decision variables into its
//! constant, linear and bilinear coefficient expressions.

use std::collections::BTreeMap;

use crate::expr::Expr;

use super::{DecisionLayout, VarGroup};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub(crate) enum Monomial {
    One,
    Linear(usize),
    /// (x-group entry, y-group entry)
    Bilinear(usize, usize),
}

pub(crate) type Poly = BTreeMap<Monomial, Expr>;

fn is_zero(e: &Expr) -> bool {
    matches!(e, Expr::Const(v) if *v == 0.0)
}

fn is_one(e: &Expr) -> bool {
    matches!(e, Expr::Const(v) if *v == 1.0)
}

fn add(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        _ if is_zero(&a) => b,
        _ if is_zero(&b) => a,
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x + y),
        (_, Expr::Neg(inner)) => a - (**inner).clone(),
        _ => a + b,
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        _ if is_one(&a) => b,
        _ if is_one(&b) => a,
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x * y),
        _ => a * b,
    }
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Const(v) => Expr::Const(-v),
        Expr::Neg(inner) => *inner,
        other => -other,
    }
}

fn degree(m: Monomial) -> usize {
    match m {
        Monomial::One => 0,
        Monomial::Linear(_) => 1,
        Monomial::Bilinear(..) => 2,
    }
}

fn merge(mut a: Poly, b: Poly) -> Poly {
    for (m, e) in b {
        let merged = match a.remove(&m) {
            Some(prev) => add(prev, e),
            None => e,
        };
        a.insert(m, merged);
    }
    a
}

fn product(a: Monomial, b: Monomial, layout: &DecisionLayout) -> Result<Monomial, String> {
    use Monomial::*;
    match (a, b) {
        (One, m) | (m, One) => Ok(m),
        (Linear(i), Linear(j)) => {
            let (gi, gj) = (layout.entries()[i].group, layout.entries()[j].group);
            let name = |k: usize| layout.entries()[k].name.clone();
            match (gi, gj) {
                (VarGroup::X, VarGroup::Y) => Ok(Bilinear(i, j)),
                (VarGroup::Y, VarGroup::X) => Ok(Bilinear(j, i)),
                _ => Err(format!(
                    "product `{}*{}` pairs two variables of the same group; only x*y terms are bilinear",
                    name(i),
                    name(j)
                )),
            }
        }
        _ => Err("term of degree > 2 in the decision variables".to_string()),
    }
}

/// Polynomial of degree at most two in the decision variables, with
/// parameter-expression coefficients.
pub(crate) fn decompose(e: &Expr, layout: &DecisionLayout) -> Result<Poly, String> {
    let constant = |e: Expr| -> Poly { BTreeMap::from([(Monomial::One, e)]) };
    Ok(match e {
        Expr::Const(_) => constant(e.clone()),
        Expr::Param(name) => match layout.entry_index(name) {
            Some(i) => BTreeMap::from([(Monomial::Linear(i), Expr::Const(1.0))]),
            None => constant(e.clone()),
        },
        Expr::Neg(a) => decompose(a, layout)?
            .into_iter()
            .map(|(m, c)| (m, neg(c)))
            .collect(),
        Expr::Add(a, b) => merge(decompose(a, layout)?, decompose(b, layout)?),
        Expr::Sub(a, b) => {
            let rhs = decompose(b, layout)?.into_iter().map(|(m, c)| (m, neg(c))).collect();
            merge(decompose(a, layout)?, rhs)
        }
        Expr::Mul(a, b) => {
            let (pa, pb) = (decompose(a, layout)?, decompose(b, layout)?);
            let mut out = Poly::new();
            for (ma, ca) in &pa {
                for (mb, cb) in &pb {
                    if degree(*ma) + degree(*mb) > 2 {
                        return Err("term of degree > 2 in the decision variables".into());
                    }
                    let m = product(*ma, *mb, layout)?;
                    out = merge(out, BTreeMap::from([(m, mul(ca.clone(), cb.clone()))]));
                }
            }
            out
        }
        Expr::Div(a, b) => {
            let pb = decompose(b, layout)?;
            let den = match (pb.len(), pb.get(&Monomial::One)) {
                (1, Some(d)) => d.clone(),
                _ => return Err("decision variables may not appear in a denominator".into()),
            };
            decompose(a, layout)?
                .into_iter()
                .map(|(m, c)| (m, c / den.clone()))
                .collect()
        }
        Expr::Pow(a, k) => {
            let pa = decompose(a, layout)?;
            if pa.keys().all(|m| *m == Monomial::One) {
                constant(e.clone())
            } else if *k == 1 {
                pa
            } else if *k == 0 {
                constant(Expr::Const(1.0))
            } else {
                return Err("decision variables may only appear with exponent 1".into());
            }
        }
    })
}
