//! Uncertain LMI/BMI problems: decision-variable layout, constraint blocks
//! with parameter-dependent coefficient grids, and their instantiation at a
//! sampled parameter vector.
//!
//! A block of dimension `n` encodes
//!
//! ```text
//! F(theta, q) = F0(q) + sum_i theta_i F_i(q) + sum_(i,j) theta_i theta_j H_ij(q)
//! ```
//!
//! where `i` ranges over the x-group and `j` over the y-group in the bilinear
//! sum. A block with no bilinear grids is an LMI block.

pub mod definite;
mod poly;
pub mod schema;

use std::collections::HashMap;
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::expr::{Expr, ParamTable};
use crate::linalg::max_abs;

pub use definite::{
    is_positive_definite, is_positive_semidefinite, pd_tolerance, principal_minors_check,
    MinorMode,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strictness {
    Strict,
    Nonstrict,
}

impl fmt::Display for Strictness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strictness::Strict => "strict",
            Strictness::Nonstrict => "nonstrict",
        })
    }
}

impl std::str::FromStr for Strictness {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "strict" => Ok(Strictness::Strict),
            "nonstrict" => Ok(Strictness::Nonstrict),
            other => Err(format!("unknown strictness `{other}`")),
        }
    }
}

/// Which side of the bilinear products a variable sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarGroup {
    #[default]
    X,
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    Lmi,
    Bmi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarShape {
    Scalar,
    Symmetric(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub shape: VarShape,
    pub group: VarGroup,
    /// Box bound `|entry| <= bound` applied to every packed entry.
    pub bound: Option<f64>,
}

/// One packed coordinate of the design vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PackedEntry {
    pub name: String,
    pub variable: usize,
    pub row: usize,
    pub col: usize,
    pub group: VarGroup,
}

/// Packing of scalar and symmetric-matrix variables into one design vector.
///
/// Variables are packed in declaration order. A symmetric `d x d` variable
/// `X` contributes its upper triangle row by row as entries named `X_i_j`
/// (`i <= j`, zero-based); `X_j_i` resolves to the same entry.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionLayout {
    variables: Vec<Variable>,
    offsets: Vec<usize>,
    entries: Vec<PackedEntry>,
    lookup: HashMap<String, usize>,
}

impl DecisionLayout {
    pub fn new(variables: Vec<Variable>) -> Result<Self, ModelError> {
        let mut offsets = Vec::with_capacity(variables.len());
        let mut entries = Vec::new();
        let mut lookup = HashMap::new();
        for (v, var) in variables.iter().enumerate() {
            offsets.push(entries.len());
            let mut push = |name: String, row, col, lookup: &mut HashMap<String, usize>| {
                let idx = entries.len();
                if lookup.insert(name.clone(), idx).is_some() {
                    return Err(ModelError::schema(
                        format!("variables[{v}]"),
                        format!("entry name `{name}` collides with an earlier variable"),
                    ));
                }
                entries.push(PackedEntry {
                    name,
                    variable: v,
                    row,
                    col,
                    group: var.group,
                });
                Ok(idx)
            };
            match var.shape {
                VarShape::Scalar => {
                    push(var.name.clone(), 0, 0, &mut lookup)?;
                }
                VarShape::Symmetric(d) => {
                    if d == 0 {
                        return Err(ModelError::schema(
                            format!("variables[{v}].dim"),
                            "dimension must be positive",
                        ));
                    }
                    for i in 0..d {
                        for j in i..d {
                            let idx = push(format!("{}_{i}_{j}", var.name), i, j, &mut lookup)?;
                            if i != j {
                                lookup.insert(format!("{}_{j}_{i}", var.name), idx);
                            }
                        }
                    }
                }
            }
        }
        Ok(DecisionLayout {
            variables,
            offsets,
            entries,
            lookup,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn m_x(&self) -> usize {
        self.entries.iter().filter(|e| e.group == VarGroup::X).count()
    }

    pub fn m_y(&self) -> usize {
        self.entries.iter().filter(|e| e.group == VarGroup::Y).count()
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn entries(&self) -> &[PackedEntry] {
        &self.entries
    }

    pub fn entry_index(&self, name: &str) -> Option<usize> {
        self.lookup.get(name).copied()
    }

    pub fn offset(&self, variable: usize) -> usize {
        self.offsets[variable]
    }

    pub fn bound(&self, entry: usize) -> Option<f64> {
        self.variables[self.entries[entry].variable].bound
    }

    /// Unpacks a symmetric variable from the design vector.
    pub fn symmetric_value(&self, variable: usize, theta: &[f64]) -> Option<DMatrix<f64>> {
        let VarShape::Symmetric(d) = self.variables.get(variable)?.shape else {
            return None;
        };
        let mut m = DMatrix::zeros(d, d);
        let mut k = self.offsets[variable];
        for i in 0..d {
            for j in i..d {
                m[(i, j)] = theta[k];
                m[(j, i)] = theta[k];
                k += 1;
            }
        }
        Some(m)
    }
}

/// Sparse `n x n` grid of expressions. Both triangles are stored.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Grid {
    pub entries: Vec<(usize, usize, Expr)>,
}

impl Grid {
    pub fn new(entries: Vec<(usize, usize, Expr)>) -> Self {
        Grid { entries }
    }

    /// Builds a grid from `(row, col, expr)` triples, mirroring an
    /// off-diagonal entry whose transpose position is not given.
    pub fn mirrored(given: Vec<(usize, usize, Expr)>) -> Self {
        let present: std::collections::HashSet<(usize, usize)> =
            given.iter().map(|(i, j, _)| (*i, *j)).collect();
        let mut entries = Vec::with_capacity(given.len() * 2);
        for (i, j, e) in given {
            if i != j && !present.contains(&(j, i)) {
                entries.push((j, i, e.clone()));
            }
            entries.push((i, j, e));
        }
        entries.sort_by_key(|(i, j, _)| (*i, *j));
        Grid { entries }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn evaluate(
        &self,
        dim: usize,
        env: &dyn crate::expr::Env,
        block: usize,
    ) -> Result<DMatrix<f64>, ModelError> {
        let mut m = DMatrix::zeros(dim, dim);
        for (i, j, e) in &self.entries {
            m[(*i, *j)] = e.eval(env).map_err(|source| ModelError::Eval {
                block,
                row: *i,
                col: *j,
                source,
            })?;
        }
        symmetrize(m, block)
    }
}

fn symmetrize(m: DMatrix<f64>, block: usize) -> Result<DMatrix<f64>, ModelError> {
    let asym = max_abs(&(&m - m.transpose()));
    if asym > 1e-12 * max_abs(&m) {
        return Err(ModelError::Asymmetric {
            block,
            asymmetry: asym,
        });
    }
    let mt = m.transpose();
    Ok((m + mt) * 0.5)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintBlock {
    pub name: String,
    pub dim: usize,
    pub strictness: Strictness,
    pub constant: Grid,
    /// `(packed entry, F_i)`, sorted by entry.
    pub linear: Vec<(usize, Grid)>,
    /// `(x entry, y entry, H_ij)`, sorted.
    pub bilinear: Vec<(usize, usize, Grid)>,
}

impl ConstraintBlock {
    pub fn is_affine(&self) -> bool {
        self.bilinear.is_empty()
    }

    /// True when no coefficient depends on an uncertain parameter.
    pub fn is_certain(&self) -> bool {
        let grids = std::iter::once(&self.constant)
            .chain(self.linear.iter().map(|(_, g)| g))
            .chain(self.bilinear.iter().map(|(_, _, g)| g));
        grids
            .flat_map(|g| g.entries.iter())
            .all(|(_, _, e)| e.is_constant())
    }
}

/// Constant coefficient matrices of one block at one sampled `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct InstantiatedConstraint {
    pub block: usize,
    pub strictness: Strictness,
    pub constant: DMatrix<f64>,
    pub linear: Vec<(usize, DMatrix<f64>)>,
    pub bilinear: Vec<(usize, usize, DMatrix<f64>)>,
}

impl InstantiatedConstraint {
    pub fn dim(&self) -> usize {
        self.constant.nrows()
    }

    /// `F(theta)` for this sample.
    pub fn assemble(&self, theta: &[f64]) -> DMatrix<f64> {
        let mut m = self.constant.clone();
        for (i, a) in &self.linear {
            if theta[*i] != 0.0 {
                m += a * theta[*i];
            }
        }
        for (i, j, h) in &self.bilinear {
            let w = theta[*i] * theta[*j];
            if w != 0.0 {
                m += h * w;
            }
        }
        m
    }

    pub fn is_satisfied(&self, theta: &[f64]) -> bool {
        let m = self.assemble(theta);
        match self.strictness {
            Strictness::Strict => is_positive_definite(&m),
            Strictness::Nonstrict => is_positive_semidefinite(&m),
        }
    }
}

/// An uncertain LMI or BMI optimization problem.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertainProblem {
    pub name: String,
    pub params: ParamTable,
    pub layout: DecisionLayout,
    pub objective: Vec<f64>,
    pub blocks: Vec<ConstraintBlock>,
}

impl UncertainProblem {
    pub fn new(
        name: impl Into<String>,
        params: ParamTable,
        layout: DecisionLayout,
        objective: Vec<f64>,
        blocks: Vec<ConstraintBlock>,
    ) -> Result<Self, ModelError> {
        if objective.len() != layout.len() {
            return Err(ModelError::schema(
                "objective",
                format!("length {} != m_theta {}", objective.len(), layout.len()),
            ));
        }
        for (b, block) in blocks.iter().enumerate() {
            let grids = std::iter::once(&block.constant)
                .chain(block.linear.iter().map(|(_, g)| g))
                .chain(block.bilinear.iter().map(|(_, _, g)| g));
            for g in grids {
                for (i, j, e) in &g.entries {
                    if *i >= block.dim || *j >= block.dim {
                        return Err(ModelError::schema(
                            format!("blocks[{b}]"),
                            format!("entry ({i},{j}) outside dimension {}", block.dim),
                        ));
                    }
                    if let Some(name) = e.free_params().into_iter().find(|n| !params.contains(n)) {
                        return Err(ModelError::schema(
                            format!("blocks[{b}]"),
                            format!("unknown parameter `{name}` at entry ({i},{j})"),
                        ));
                    }
                }
            }
            for (i, _) in &block.linear {
                if *i >= layout.len() {
                    return Err(ModelError::schema(format!("blocks[{b}].linear"), "bad entry index"));
                }
            }
            for (i, j, _) in &block.bilinear {
                let ok = *i < layout.len()
                    && *j < layout.len()
                    && layout.entries()[*i].group == VarGroup::X
                    && layout.entries()[*j].group == VarGroup::Y;
                if !ok {
                    return Err(ModelError::schema(
                        format!("blocks[{b}].bilinear"),
                        "bilinear terms must pair an x-group entry with a y-group entry",
                    ));
                }
            }
        }
        Ok(UncertainProblem {
            name: name.into(),
            params,
            layout,
            objective,
            blocks,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        schema::ProblemFile::from_json(text)?.build()
    }

    pub fn m_theta(&self) -> usize {
        self.layout.len()
    }

    pub fn kind(&self) -> ProblemKind {
        if self.blocks.iter().all(ConstraintBlock::is_affine) {
            ProblemKind::Lmi
        } else {
            ProblemKind::Bmi
        }
    }

    /// Dimension fed to the VC bounds: blocks are accounted as one
    /// block-diagonal matrix, so their sizes add up.
    pub fn bound_dimension(&self) -> usize {
        self.blocks.iter().map(|b| b.dim).sum()
    }

    /// Strict when every block is strict; any nonstrict block makes the whole
    /// problem nonstrict for bound purposes.
    pub fn strictness(&self) -> Strictness {
        if self.blocks.iter().all(|b| b.strictness == Strictness::Strict) {
            Strictness::Strict
        } else {
            Strictness::Nonstrict
        }
    }

    /// Same problem with every parameter fixed at its nominal value.
    pub fn nominal_only(&self) -> Self {
        UncertainProblem {
            params: self.params.collapsed(),
            ..self.clone()
        }
    }

    pub fn instantiate(&self, q: &[f64]) -> Result<Vec<InstantiatedConstraint>, ModelError> {
        if q.len() != self.params.len() {
            return Err(ModelError::ParamLength {
                got: q.len(),
                expected: self.params.len(),
            });
        }
        let env = self.params.bind(q);
        self.blocks
            .iter()
            .enumerate()
            .map(|(b, block)| {
                Ok(InstantiatedConstraint {
                    block: b,
                    strictness: block.strictness,
                    constant: block.constant.evaluate(block.dim, &env, b)?,
                    linear: block
                        .linear
                        .iter()
                        .map(|(i, g)| Ok((*i, g.evaluate(block.dim, &env, b)?)))
                        .collect::<Result<_, ModelError>>()?,
                    bilinear: block
                        .bilinear
                        .iter()
                        .map(|(i, j, g)| Ok((*i, *j, g.evaluate(block.dim, &env, b)?)))
                        .collect::<Result<_, ModelError>>()?,
                })
            })
            .collect()
    }

    /// Violation indicator: 0 when every block passes its definiteness test
    /// at `(theta, q)`, 1 otherwise.
    pub fn indicator(&self, theta: &[f64], q: &[f64]) -> Result<u8, ModelError> {
        self.check_theta(theta)?;
        let constraints = self.instantiate(q)?;
        Ok(u8::from(!constraints.iter().all(|c| c.is_satisfied(theta))))
    }

    pub fn check_theta(&self, theta: &[f64]) -> Result<(), ModelError> {
        if theta.len() != self.m_theta() {
            return Err(ModelError::ThetaLength {
                got: theta.len(),
                expected: self.m_theta(),
            });
        }
        Ok(())
    }

    pub fn objective_value(&self, theta: &[f64]) -> f64 {
        self.objective.iter().zip(theta).map(|(c, t)| c * t).sum()
    }
}

pub fn instantiate(p: &UncertainProblem, q: &[f64]) -> Result<Vec<InstantiatedConstraint>, ModelError> {
    p.instantiate(q)
}

pub fn indicator_g(p: &UncertainProblem, theta: &[f64], q: &[f64]) -> Result<u8, ModelError> {
    p.indicator(theta, q)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::error::EvalError;
    use crate::expr::{parse, Parameter};

    pub(crate) fn scalar_testbed(strictness: Strictness) -> UncertainProblem {
        let params = ParamTable::new(vec![Parameter {
            name: "q".into(),
            nominal: 0.5,
            lower: 0.0,
            upper: 1.0,
        }])
        .unwrap();
        let layout = DecisionLayout::new(vec![Variable {
            name: "x".into(),
            shape: VarShape::Scalar,
            group: VarGroup::X,
            bound: None,
        }])
        .unwrap();
        let block = ConstraintBlock {
            name: "x - q".into(),
            dim: 1,
            strictness,
            constant: Grid::new(vec![(0, 0, parse("-q").unwrap())]),
            linear: vec![(0, Grid::new(vec![(0, 0, Expr::Const(1.0))]))],
            bilinear: vec![],
        };
        UncertainProblem::new("testbed", params, layout, vec![1.0], vec![block]).unwrap()
    }

    fn constant_problem(m: &[f64], n: usize, strictness: Strictness) -> UncertainProblem {
        let params = ParamTable::new(vec![]).unwrap();
        let layout = DecisionLayout::new(vec![]).unwrap();
        let mut entries = vec![];
        for i in 0..n {
            for j in 0..n {
                entries.push((i, j, Expr::Const(m[i * n + j])));
            }
        }
        let block = ConstraintBlock {
            name: "const".into(),
            dim: n,
            strictness,
            constant: Grid::new(entries),
            linear: vec![],
            bilinear: vec![],
        };
        UncertainProblem::new("const", params, layout, vec![], vec![block]).unwrap()
    }

    #[test]
    fn layout_packing() {
        let layout = DecisionLayout::new(vec![
            Variable { name: "X".into(), shape: VarShape::Symmetric(3), group: VarGroup::X, bound: None },
            Variable { name: "g".into(), shape: VarShape::Scalar, group: VarGroup::X, bound: None },
            Variable { name: "f".into(), shape: VarShape::Scalar, group: VarGroup::Y, bound: None },
        ])
        .unwrap();
        assert_eq!(layout.len(), 8);
        assert_eq!((layout.m_x(), layout.m_y()), (7, 1));
        assert_eq!(layout.entry_index("X_0_0"), Some(0));
        assert_eq!(layout.entry_index("X_0_2"), Some(2));
        assert_eq!(layout.entry_index("X_2_0"), Some(2));
        assert_eq!(layout.entry_index("X_1_1"), Some(3));
        assert_eq!(layout.entry_index("g"), Some(6));
        let theta: Vec<f64> = (0..8).map(f64::from).collect();
        let x = layout.symmetric_value(0, &theta).unwrap();
        assert_eq!(x[(2, 1)], 4.0);
        assert_eq!(x[(1, 2)], 4.0);
    }

    #[test]
    fn identity_block_instantiates_to_identity() {
        let p = constant_problem(&[1.0, 0.0, 0.0, 1.0], 2, Strictness::Strict);
        let inst = p.instantiate(&[]).unwrap();
        assert_eq!(inst.len(), 1);
        assert_eq!(inst[0].constant, DMatrix::identity(2, 2));
    }

    #[test]
    fn unit_coefficient_is_exact() {
        let p = scalar_testbed(Strictness::Strict);
        for q in [0.0, 0.3, 1.0] {
            let inst = p.instantiate(&[q]).unwrap();
            assert_eq!(inst[0].linear[0].1[(0, 0)], 1.0);
        }
    }

    #[test]
    fn scalar_indicator_boundary() {
        let p = scalar_testbed(Strictness::Strict);
        assert_eq!(p.indicator(&[2.0], &[1.0]).unwrap(), 0);
        assert_eq!(p.indicator(&[1.0], &[1.0]).unwrap(), 1);
        let ns = scalar_testbed(Strictness::Nonstrict);
        assert_eq!(ns.indicator(&[1.0], &[1.0]).unwrap(), 0);
    }

    #[test]
    fn remark_matrix_block_is_violated() {
        let p = constant_problem(&[1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.0], 3, Strictness::Nonstrict);
        assert_eq!(p.indicator(&[], &[]).unwrap(), 1);
    }

    #[test]
    fn asymmetry_is_a_model_error() {
        let p = constant_problem(&[1.0, 0.5, 0.0, 1.0], 2, Strictness::Strict);
        assert!(matches!(p.instantiate(&[]), Err(ModelError::Asymmetric { .. })));
    }

    #[test]
    fn division_by_zero_aborts() {
        let mut p = scalar_testbed(Strictness::Strict);
        p.blocks[0].constant = Grid::new(vec![(0, 0, parse("1/q").unwrap())]);
        assert!(matches!(
            p.instantiate(&[0.0]),
            Err(ModelError::Eval { source: EvalError::DivisionByZero(_), .. })
        ));
    }

    #[test]
    fn indicator_is_scale_invariant() {
        let p = scalar_testbed(Strictness::Strict);
        let mut scaled = p.clone();
        let block = &mut scaled.blocks[0];
        block.constant = Grid::new(vec![(0, 0, parse("-3*q").unwrap())]);
        block.linear = vec![(0, Grid::new(vec![(0, 0, Expr::Const(3.0))]))];
        for (x, q) in [(0.2, 0.1), (0.2, 0.5), (0.7, 0.7), (0.9, 0.3)] {
            assert_eq!(p.indicator(&[x], &[q]).unwrap(), scaled.indicator(&[x], &[q]).unwrap());
        }
    }

    #[test]
    fn instantiate_is_deterministic() {
        let p = scalar_testbed(Strictness::Strict);
        let a = p.instantiate(&[0.123456789]).unwrap();
        let b = p.instantiate(&[0.123456789]).unwrap();
        assert_eq!(a, b);
    }
}
