//! TOML scenario files.
//!
//! ```toml
//! name = "two_maps"
//! depths = [4, 6, 8]                 # optional, default 4..=12
//!
//! [base]
//! kind = "bernoulli"                 # deterministic | bernoulli | markov | telescoping
//! probs = [0.5, 0.5]                 # pattern / initial+kernel for the other kinds
//! horizon = 48
//! seed = 3                           # optional, default 0
//! l_max = 8                          # optional, telescoping only
//!
//! [model]
//! kind = "table"                     # table | gamma
//! matrices = "full"                  # full | last_row_forced, optional
//!
//! [[model.symbols]]                  # one entry per base symbol, in order
//! a0 = 1.0
//! branches = [
//!   { interval = [0.0, 0.5] },       # shape defaults to identity
//!   { interval = [0.5, 1.0], shape = "polynomial", coefficients = [0.0, 0.875, 0.125] },
//! ]
//!
//! [[model.symbols]]
//! a0 = 0.5
//! branches = [{ interval = [0.0, 1.0], shape = "series", series_base = 6.0, series_terms = 24 }]
//!
//! [[model.matrix]]                   # optional overrides keyed by consecutive base symbols
//! from = 0
//! to = 1
//! rows = [[1, 0], [1, 1]]
//!
//! [phi]
//! kind = "log_weights"               # log_weights | uniform | linear | constant | geometric
//! weights = [[0.3, 0.7], [1.0]]      # probabilities; logs are taken on load
//! ```
//!
//! Keys are order-insensitive; unknown keys are rejected. Errors carry the field path.

use std::collections::HashMap;

use serde::Deserialize;

use super::{margin_term, sup_psi, Oracle, Scenario};
use crate::base::{BaseConfig, BoolMatrix, FiberModel, MatrixRule, SymbolFiber};
use crate::error::{Error, Result};
use crate::geometry::{BranchMap, BranchShape};
use crate::symbolic::{PotentialSpec, WeightRule};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    #[serde(default)]
    pub depths: Option<Vec<usize>>,
    pub base: BaseConfig,
    pub model: ModelSection,
    pub phi: PhiSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum ModelKind {
    Table,
    Gamma,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelKind,
    #[serde(default)]
    pub matrices: Option<MatrixKind>,
    #[serde(default)]
    pub symbols: Vec<SymbolSection>,
    #[serde(default)]
    pub matrix: Vec<MatrixSection>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixKind {
    Full,
    LastRowForced,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymbolSection {
    pub a0: f64,
    pub branches: Vec<BranchSection>,
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    #[default]
    Identity,
    Polynomial,
    Series,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchSection {
    pub interval: [f64; 2],
    #[serde(default)]
    pub shape: ShapeKind,
    #[serde(default)]
    pub coefficients: Option<Vec<f64>>,
    #[serde(default)]
    pub series_base: Option<f64>,
    #[serde(default)]
    pub series_terms: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixSection {
    pub from: u32,
    pub to: u32,
    pub rows: Vec<Vec<u8>>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiKind {
    LogWeights,
    Uniform,
    Linear,
    Constant,
    Geometric,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhiSection {
    pub kind: PhiKind,
    #[serde(default)]
    pub weights: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub value: Option<f64>,
}

/// Parses and validates a scenario file.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let value: toml::Value = toml::from_str(text).map_err(|e| Error::schema("<document>", e.message()))?;
    let file: ScenarioFile = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        Error::schema(if path == "." { "<document>".to_string() } else { path }, e.into_inner().to_string())
    })?;
    let scenario = file.into_scenario()?;
    scenario.validate()?;
    Ok(scenario)
}

fn branch(path: &str, b: &BranchSection) -> Result<BranchMap> {
    let extra = |field: &str| Error::schema(format!("{path}.{field}"), "not used by this shape");
    let shape = match b.shape {
        ShapeKind::Identity => {
            if b.coefficients.is_some() {
                return Err(extra("coefficients"));
            }
            BranchShape::Identity
        }
        ShapeKind::Polynomial => {
            let c = b
                .coefficients
                .clone()
                .ok_or_else(|| Error::schema(format!("{path}.coefficients"), "required for a polynomial shape"))?;
            BranchShape::Polynomial(c)
        }
        ShapeKind::Series => {
            if b.coefficients.is_some() {
                return Err(extra("coefficients"));
            }
            BranchShape::Series {
                base: b.series_base.unwrap_or(6.0),
                terms: b.series_terms.unwrap_or(BranchShape::DEFAULT_SERIES_TERMS),
            }
        }
    };
    if !matches!(b.shape, ShapeKind::Series) && (b.series_base.is_some() || b.series_terms.is_some()) {
        return Err(extra(if b.series_base.is_some() { "series_base" } else { "series_terms" }));
    }
    BranchMap::new(b.interval[0], b.interval[1], shape)
}

impl ScenarioFile {
    pub fn into_scenario(self) -> Result<Scenario> {
        let model = match self.model.kind {
            ModelKind::Gamma => {
                if !self.model.symbols.is_empty() || !self.model.matrix.is_empty() || self.model.matrices.is_some() {
                    return Err(Error::schema("model", "the gamma model takes no symbols or matrices"));
                }
                FiberModel::Gamma
            }
            ModelKind::Table => {
                if self.model.symbols.is_empty() {
                    return Err(Error::schema("model.symbols", "a table model needs at least one symbol"));
                }
                let mut symbols = Vec::with_capacity(self.model.symbols.len());
                for (i, s) in self.model.symbols.iter().enumerate() {
                    let branches = s
                        .branches
                        .iter()
                        .enumerate()
                        .map(|(j, b)| branch(&format!("model.symbols[{i}].branches[{j}]"), b))
                        .collect::<Result<Vec<_>>>()?;
                    symbols.push(SymbolFiber { branches, a0: s.a0 });
                }
                let matrices = if !self.model.matrix.is_empty() {
                    if matches!(self.model.matrices, Some(MatrixKind::LastRowForced)) {
                        return Err(Error::schema("model.matrix", "explicit matrices need `matrices = \"full\"`"));
                    }
                    let mut map = HashMap::new();
                    for (i, m) in self.model.matrix.iter().enumerate() {
                        let path = format!("model.matrix[{i}].rows");
                        let bm = BoolMatrix::from_rows(&m.rows).map_err(|e| Error::schema(&path, e.to_string()))?;
                        if map.insert((m.from, m.to), bm).is_some() {
                            return Err(Error::schema(format!("model.matrix[{i}]"), "duplicate (from, to) pair"));
                        }
                    }
                    MatrixRule::Explicit(map)
                } else {
                    match self.model.matrices {
                        None | Some(MatrixKind::Full) => MatrixRule::Full,
                        Some(MatrixKind::LastRowForced) => MatrixRule::LastRowForced,
                    }
                };
                FiberModel::Table { symbols, matrices }
            }
        };
        let phi = match self.phi.kind {
            PhiKind::LogWeights => {
                let w = self.phi.weights.ok_or_else(|| Error::schema("phi.weights", "required for log_weights"))?;
                if let FiberModel::Table { symbols, .. } = &model {
                    if w.len() != symbols.len() {
                        return Err(Error::schema("phi.weights", "one row per base symbol"));
                    }
                    for (i, (row, sf)) in w.iter().zip(symbols).enumerate() {
                        if row.len() != sf.branches.len() {
                            return Err(Error::schema(format!("phi.weights[{i}]"), "one weight per branch"));
                        }
                        if row.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
                            return Err(Error::schema(format!("phi.weights[{i}]"), "weights must be positive"));
                        }
                    }
                } else {
                    return Err(Error::schema("phi.kind", "log_weights needs a table model"));
                }
                PotentialSpec::symbol_log_weights(WeightRule::Table(
                    w.iter().map(|row| row.iter().map(|x| x.ln()).collect()).collect(),
                ))
            }
            PhiKind::Uniform => PotentialSpec::symbol_log_weights(WeightRule::Uniform),
            PhiKind::Linear => PotentialSpec::symbol_log_weights(WeightRule::Linear),
            PhiKind::Constant => {
                PotentialSpec::constant(self.phi.value.ok_or_else(|| Error::schema("phi.value", "required for constant"))?)
            }
            PhiKind::Geometric => PotentialSpec::geometric(),
        };
        let mut scenario = Scenario {
            name: self.name,
            base: self.base,
            model,
            phi,
            psi: PotentialSpec::geometric(),
            oracle: Oracle::default(),
            depths: self.depths.unwrap_or_else(|| (4..=12).collect()),
        };
        scenario.oracle.margin = scenario.average(margin_term);
        scenario.oracle.c_psi = scenario.average(sup_psi).map(|x| -x);
        Ok(scenario)
    }
}
