//! JSON problem files.
//!
//! ```json
//! {
//!   "name": "scalar testbed",
//!   "parameters": [{"name": "q", "nominal": 0.5, "lower": 0.0, "upper": 1.0}],
//!   "variables": [{"name": "x", "kind": "scalar", "group": "x"}],
//!   "objective": {"x": 1.0},
//!   "blocks": [{
//!     "name": "margin",
//!     "dim": 1,
//!     "strictness": "strict",
//!     "entries": {"0,0": "x - q"}
//!   }]
//! }
//! ```
//!
//! Entry keys are zero-based `"row,col"`. An off-diagonal entry whose
//! transpose is not listed is mirrored. A block's matrix is the sum of
//!
//! * `entries`: expressions in parameters *and* decision variables, affine or
//!   x*y bilinear in the variables; split into coefficient grids on load;
//! * `constant`: the `F0` grid (parameters only);
//! * `linear`: `{ entry: grid }`, the `F_i` / `G_j` grids;
//! * `bilinear`: `{ "xentry*yentry": grid }`, the `H_ij` grids.
//!
//! Variables are `scalar` or `symmetric` (with `dim`); symmetric entries are
//! addressed as `X_i_j`. `group` is `x` (default) or `y`; bilinear products
//! must pair an x entry with a y entry. The optional `bound` boxes every
//! entry of the variable. Objective keys are packed entry names.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::expr::{self, Expr, ParamTable, Parameter};

use super::poly::{decompose, Monomial};
use super::{
    ConstraintBlock, DecisionLayout, Grid, Strictness, UncertainProblem, VarGroup, VarShape,
    Variable,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariableKind {
    #[default]
    Scalar,
    Symmetric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariableSpec {
    pub name: String,
    #[serde(default)]
    pub kind: VariableKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default)]
    pub group: VarGroup,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
}

pub type EntryMap = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockSpec {
    #[serde(default)]
    pub name: String,
    pub dim: usize,
    pub strictness: Strictness,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub entries: EntryMap,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub constant: EntryMap,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub linear: BTreeMap<String, EntryMap>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub bilinear: BTreeMap<String, EntryMap>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    #[serde(default)]
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub parameters: Vec<Parameter>,
    pub variables: Vec<VariableSpec>,
    #[serde(default)]
    pub objective: BTreeMap<String, f64>,
    pub blocks: Vec<BlockSpec>,
}

fn parse_key(key: &str, dim: usize, path: &str) -> Result<(usize, usize), ModelError> {
    let bad = || ModelError::schema(path, format!("entry key `{key}` is not `row,col` within 0..{dim}"));
    let (r, c) = key.split_once(',').ok_or_else(bad)?;
    let r: usize = r.trim().parse().map_err(|_| bad())?;
    let c: usize = c.trim().parse().map_err(|_| bad())?;
    if r >= dim || c >= dim {
        return Err(bad());
    }
    Ok((r, c))
}

fn parse_expr(text: &str, path: &str) -> Result<Expr, ModelError> {
    expr::parse(text).map_err(|e| ModelError::schema(path, e.to_string()))
}

#[derive(Default)]
struct GridBuilder {
    cells: BTreeMap<(usize, usize), Expr>,
}

impl GridBuilder {
    fn add(&mut self, at: (usize, usize), e: Expr) {
        let merged = match self.cells.remove(&at) {
            Some(prev) => prev + e,
            None => e,
        };
        self.cells.insert(at, merged);
    }

    fn finish(self) -> Grid {
        Grid::mirrored(self.cells.into_iter().map(|((i, j), e)| (i, j, e)).collect())
    }
}

impl ProblemFile {
    /// Deserializes, reporting the JSON path of any structural error.
    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            ModelError::schema(if path.is_empty() { "$".into() } else { path }, e.into_inner().to_string())
        })
    }

    pub fn build(&self) -> Result<UncertainProblem, ModelError> {
        let params = ParamTable::new(self.parameters.clone())?;

        let mut variables = Vec::with_capacity(self.variables.len());
        for (v, spec) in self.variables.iter().enumerate() {
            let path = format!("variables[{v}]");
            if !expr::is_identifier(&spec.name) {
                return Err(ModelError::schema(format!("{path}.name"), format!("`{}` is not an identifier", spec.name)));
            }
            let shape = match (spec.kind, spec.dim) {
                (VariableKind::Scalar, None | Some(1)) => VarShape::Scalar,
                (VariableKind::Scalar, Some(_)) => {
                    return Err(ModelError::schema(format!("{path}.dim"), "scalar variables take no dimension"))
                }
                (VariableKind::Symmetric, Some(d)) if d > 0 => VarShape::Symmetric(d),
                (VariableKind::Symmetric, _) => {
                    return Err(ModelError::schema(format!("{path}.dim"), "symmetric variables need a positive `dim`"))
                }
            };
            if let Some(b) = spec.bound {
                if !(b > 0.0) {
                    return Err(ModelError::schema(format!("{path}.bound"), "bound must be positive"));
                }
            }
            variables.push(Variable {
                name: spec.name.clone(),
                shape,
                group: spec.group,
                bound: spec.bound,
            });
        }
        let layout = DecisionLayout::new(variables)?;
        for (i, e) in layout.entries().iter().enumerate() {
            if params.contains(&e.name) {
                return Err(ModelError::schema(
                    format!("variables[{}]", e.variable),
                    format!("entry `{}` shadows a parameter", layout.entries()[i].name),
                ));
            }
        }

        let mut objective = vec![0.0; layout.len()];
        for (name, coeff) in &self.objective {
            let idx = layout
                .entry_index(name)
                .ok_or_else(|| ModelError::schema(format!("objective.{name}"), "not a decision-variable entry"))?;
            objective[idx] += coeff;
        }

        let mut blocks = Vec::with_capacity(self.blocks.len());
        for (b, spec) in self.blocks.iter().enumerate() {
            blocks.push(self.build_block(b, spec, &params, &layout)?);
        }
        UncertainProblem::new(self.name.clone(), params, layout, objective, blocks)
    }

    fn build_block(
        &self,
        b: usize,
        spec: &BlockSpec,
        params: &ParamTable,
        layout: &DecisionLayout,
    ) -> Result<ConstraintBlock, ModelError> {
        let base = format!("blocks[{b}]");
        if spec.dim == 0 {
            return Err(ModelError::schema(format!("{base}.dim"), "dimension must be positive"));
        }
        let mut constant = GridBuilder::default();
        let mut linear: BTreeMap<usize, GridBuilder> = BTreeMap::new();
        let mut bilinear: BTreeMap<(usize, usize), GridBuilder> = BTreeMap::new();

        let params_only = |e: &Expr, path: &str| -> Result<(), ModelError> {
            match e.free_params().into_iter().find(|n| !params.contains(n)) {
                Some(n) if layout.entry_index(&n).is_some() => Err(ModelError::schema(
                    path,
                    format!("decision variable `{n}` not allowed in a coefficient grid"),
                )),
                Some(n) => Err(ModelError::schema(path, format!("unknown parameter `{n}`"))),
                None => Ok(()),
            }
        };

        for (key, text) in &spec.entries {
            let path = format!("{base}.entries.\"{key}\"");
            let at = parse_key(key, spec.dim, &path)?;
            let e = parse_expr(text, &path)?;
            if let Some(n) = e
                .free_params()
                .into_iter()
                .find(|n| !params.contains(n) && layout.entry_index(n).is_none())
            {
                return Err(ModelError::schema(path, format!("unknown identifier `{n}`")));
            }
            let poly = decompose(&e, layout).map_err(|m| ModelError::schema(&path, m))?;
            for (mono, coeff) in poly {
                match mono {
                    Monomial::One => constant.add(at, coeff),
                    Monomial::Linear(i) => linear.entry(i).or_default().add(at, coeff),
                    Monomial::Bilinear(i, j) => bilinear.entry((i, j)).or_default().add(at, coeff),
                }
            }
        }
        for (key, text) in &spec.constant {
            let path = format!("{base}.constant.\"{key}\"");
            let at = parse_key(key, spec.dim, &path)?;
            let e = parse_expr(text, &path)?;
            params_only(&e, &path)?;
            constant.add(at, e);
        }
        for (var, grid) in &spec.linear {
            let idx = layout
                .entry_index(var)
                .ok_or_else(|| ModelError::schema(format!("{base}.linear.{var}"), "not a decision-variable entry"))?;
            for (key, text) in grid {
                let path = format!("{base}.linear.{var}.\"{key}\"");
                let at = parse_key(key, spec.dim, &path)?;
                let e = parse_expr(text, &path)?;
                params_only(&e, &path)?;
                linear.entry(idx).or_default().add(at, e);
            }
        }
        for (pair, grid) in &spec.bilinear {
            let ppath = format!("{base}.bilinear.{pair}");
            let (a, c) = pair
                .split_once('*')
                .ok_or_else(|| ModelError::schema(&ppath, "key must be `xentry*yentry`"))?;
            let lookup = |n: &str| {
                layout
                    .entry_index(n.trim())
                    .ok_or_else(|| ModelError::schema(&ppath, format!("`{}` is not a decision-variable entry", n.trim())))
            };
            let (i, j) = (lookup(a)?, lookup(c)?);
            let (gi, gj) = (layout.entries()[i].group, layout.entries()[j].group);
            let key = match (gi, gj) {
                (VarGroup::X, VarGroup::Y) => (i, j),
                (VarGroup::Y, VarGroup::X) => (j, i),
                _ => return Err(ModelError::schema(&ppath, "bilinear pairs need one x entry and one y entry")),
            };
            for (k, text) in grid {
                let path = format!("{ppath}.\"{k}\"");
                let at = parse_key(k, spec.dim, &path)?;
                let e = parse_expr(text, &path)?;
                params_only(&e, &path)?;
                bilinear.entry(key).or_default().add(at, e);
            }
        }

        Ok(ConstraintBlock {
            name: if spec.name.is_empty() { format!("block{b}") } else { spec.name.clone() },
            dim: spec.dim,
            strictness: spec.strictness,
            constant: constant.finish(),
            linear: linear.into_iter().map(|(i, g)| (i, g.finish())).filter(|(_, g)| !g.is_empty()).collect(),
            bilinear: bilinear
                .into_iter()
                .map(|((i, j), g)| (i, j, g.finish()))
                .filter(|(_, _, g)| !g.is_empty())
                .collect(),
        })
    }
}
