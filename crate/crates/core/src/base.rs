//! Realizations of the base driver and the per-step fiber data it induces.
//!
//! A [`FiberSequence`] is a finite orbit `ω, σω, …, σ^{horizon}ω` of the base
//! system together with, for each step `k < horizon`, the alphabet size
//! `l_k`, the `l_k × l_{k+1}` transition matrix and the interval branches.
//!
//! Sampling is counter based: step `k` draws from a ChaCha8 stream whose
//! stream id is `k`, seeded by the configured 64-bit seed. Extending the
//! horizon therefore never changes already realized steps.

use std::collections::HashMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BranchMap;

/// Dense 0/1 matrix, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BoolMatrix {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
}

impl BoolMatrix {
    pub fn ones(rows: usize, cols: usize) -> Self {
        BoolMatrix { rows, cols, bits: vec![true; rows * cols] }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        BoolMatrix { rows, cols, bits: vec![false; rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
            return Err(Error::InvalidConfig("transition matrix rows must be nonempty and of equal length".into()));
        }
        let bits = rows.iter().flat_map(|row| row.iter().map(|&v| v != 0)).collect();
        Ok(BoolMatrix { rows: r, cols: c, bits })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Entry for 0-based indices.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: bool) {
        self.bits[i * self.cols + j] = v;
    }

    /// Entry for 1-based symbols, matching word notation.
    #[inline]
    pub fn allows(&self, s: u32, t: u32) -> bool {
        self.get(s as usize - 1, t as usize - 1)
    }

    pub fn is_positive(&self) -> bool {
        self.bits.iter().all(|&b| b)
    }

    pub fn is_full(&self) -> bool {
        self.is_positive()
    }

    /// Boolean product; never overflows.
    pub fn bool_mul(&self, other: &BoolMatrix) -> BoolMatrix {
        assert_eq!(self.cols, other.rows, "matrix shapes do not chain");
        let mut out = BoolMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                if self.get(i, k) {
                    for j in 0..other.cols {
                        if other.get(k, j) {
                            out.set(i, j, true);
                        }
                    }
                }
            }
        }
        out
    }

    pub fn dominates(&self, other: &BoolMatrix) -> bool {
        self.rows == other.rows
            && self.cols == other.cols
            && self.bits.iter().zip(&other.bits).all(|(&a, &b)| a || !b)
    }

    fn every_row_and_col_nonzero(&self) -> bool {
        (0..self.rows).all(|i| (0..self.cols).any(|j| self.get(i, j)))
            && (0..self.cols).all(|j| (0..self.rows).any(|i| self.get(i, j)))
    }
}

/// Law of the base symbols `ω_0 ω_1 …`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaseKind {
    /// The periodic sequence `pattern[k mod len]`; a single symbol gives a deterministic system.
    Deterministic { pattern: Vec<u32> },
    /// I.i.d. symbols `0..probs.len()`.
    Bernoulli { probs: Vec<f64> },
    /// Markov chain on `0..initial.len()`.
    Markov { initial: Vec<f64>, kernel: Vec<Vec<f64>> },
    /// I.i.d. symbols `n >= 1` with `P(n) = 1/(n(n+1))`, truncated at `l_max` by resampling.
    Telescoping,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseConfig {
    #[serde(flatten)]
    pub kind: BaseKind,
    pub horizon: usize,
    #[serde(default)]
    pub seed: u64,
    /// Cap on alphabet sizes when the base alphabet is unbounded.
    #[serde(default = "default_l_max")]
    pub l_max: usize,
}

fn default_l_max() -> usize {
    8
}

fn check_probs(p: &[f64], what: &str) -> Result<()> {
    if p.is_empty() || p.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::InvalidConfig(format!("{what} must be a nonempty list of nonnegative numbers")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidConfig(format!("{what} sums to {s}, not 1")));
    }
    Ok(())
}

impl BaseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidConfig("horizon must be at least 1".into()));
        }
        match &self.kind {
            BaseKind::Deterministic { pattern } if pattern.is_empty() => {
                Err(Error::InvalidConfig("deterministic pattern is empty".into()))
            }
            BaseKind::Deterministic { .. } => Ok(()),
            BaseKind::Bernoulli { probs } => check_probs(probs, "bernoulli probs"),
            BaseKind::Markov { initial, kernel } => {
                check_probs(initial, "markov initial law")?;
                if kernel.len() != initial.len() {
                    return Err(Error::InvalidConfig("markov kernel must be square with the initial law's size".into()));
                }
                for (i, row) in kernel.iter().enumerate() {
                    if row.len() != initial.len() {
                        return Err(Error::InvalidConfig(format!("markov kernel row {i} has wrong length")));
                    }
                    check_probs(row, &format!("markov kernel row {i}"))?;
                }
                Ok(())
            }
            BaseKind::Telescoping if self.l_max < 2 => {
                Err(Error::InvalidConfig("l_max must be at least 2".into()))
            }
            BaseKind::Telescoping => Ok(()),
        }
    }

    /// Number of distinct base symbols, when finite.
    pub fn symbol_count(&self) -> Option<usize> {
        match &self.kind {
            BaseKind::Deterministic { pattern } => pattern.iter().max().map(|&m| m as usize + 1),
            BaseKind::Bernoulli { probs } => Some(probs.len()),
            BaseKind::Markov { initial, .. } => Some(initial.len()),
            BaseKind::Telescoping => None,
        }
    }

    /// Stationary single-symbol law for i.i.d. and deterministic bases, used for exact averages.
    pub fn marginal(&self) -> Option<Vec<(u32, f64)>> {
        match &self.kind {
            BaseKind::Deterministic { pattern } => {
                let w = 1.0 / pattern.len() as f64;
                let mut acc: Vec<(u32, f64)> = Vec::new();
                for &s in pattern {
                    match acc.iter_mut().find(|(t, _)| *t == s) {
                        Some(e) => e.1 += w,
                        None => acc.push((s, w)),
                    }
                }
                Some(acc)
            }
            BaseKind::Bernoulli { probs } => {
                Some(probs.iter().enumerate().map(|(i, &p)| (i as u32, p)).collect())
            }
            BaseKind::Markov { .. } => None,
            BaseKind::Telescoping => {
                let z = self.l_max as f64 / (self.l_max as f64 + 1.0);
                Some((1..=self.l_max as u32).map(|n| (n, 1.0 / (n as f64 * (n as f64 + 1.0)) / z)).collect())
            }
        }
    }
}

fn step_rng(seed: u64, step: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step as u64);
    rng
}

fn categorical(rng: &mut ChaCha8Rng, probs: &[f64]) -> u32 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i as u32;
        }
    }
    // rounding left a sliver above the last cumulative sum
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0) as u32
}

/// Samples `count` base symbols; returns the trace and the number of truncation resamples.
pub fn sample_base_trace(config: &BaseConfig, count: usize) -> Result<(Vec<u32>, usize)> {
    config.validate()?;
    let mut trace = Vec::with_capacity(count);
    let mut truncations = 0usize;
    for k in 0..count {
        let sym = match &config.kind {
            BaseKind::Deterministic { pattern } => pattern[k % pattern.len()],
            BaseKind::Bernoulli { probs } => categorical(&mut step_rng(config.seed, k), probs),
            BaseKind::Markov { initial, kernel } => {
                let mut rng = step_rng(config.seed, k);
                match trace.last() {
                    None => categorical(&mut rng, initial),
                    Some(&prev) => categorical(&mut rng, &kernel[prev as usize]),
                }
            }
            BaseKind::Telescoping => {
                let mut rng = step_rng(config.seed, k);
                loop {
                    // P(floor(1/u) >= n) = 1/n for u uniform on (0, 1]
                    let u = 1.0 - rng.random::<f64>();
                    let n = (1.0 / u).floor();
                    if n <= config.l_max as f64 {
                        break n as u32;
                    }
                    truncations += 1;
                }
            }
        };
        trace.push(sym);
    }
    Ok((trace, truncations))
}

/// How transition matrices depend on consecutive base symbols.
#[derive(Debug, Clone, PartialEq)]
pub enum MatrixRule {
    Full,
    /// Explicit matrices keyed by `(ω_k, ω_{k+1})`; missing pairs are full.
    Explicit(HashMap<(u32, u32), BoolMatrix>),
    /// `n_1 × n_2` all ones unless `n_2 = n_1 - 1` and `n_1 != 2`, in which case
    /// the last row only allows its last column.
    LastRowForced,
}

impl MatrixRule {
    pub fn matrix(&self, sym: u32, next: u32, rows: usize, cols: usize) -> Result<BoolMatrix> {
        let m = match self {
            MatrixRule::Full => BoolMatrix::ones(rows, cols),
            MatrixRule::Explicit(map) => match map.get(&(sym, next)) {
                Some(m) => m.clone(),
                None => BoolMatrix::ones(rows, cols),
            },
            MatrixRule::LastRowForced => {
                let mut m = BoolMatrix::ones(rows, cols);
                if cols + 1 == rows && rows != 2 {
                    for j in 0..cols {
                        m.set(rows - 1, j, j + 1 == rows - 1);
                    }
                }
                m
            }
        };
        if m.rows() != rows || m.cols() != cols {
            return Err(Error::InvalidConfig(format!(
                "matrix for base pair ({sym}, {next}) is {}x{}, expected {rows}x{cols}",
                m.rows(),
                m.cols()
            )));
        }
        if !m.every_row_and_col_nonzero() {
            return Err(Error::InvalidConfig(format!(
                "matrix for base pair ({sym}, {next}) has an all-zero row or column"
            )));
        }
        Ok(m)
    }
}

/// Geometric data attached to one base symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolFiber {
    pub branches: Vec<BranchMap>,
    /// Declared lower bound on the shape derivatives of all branches.
    pub a0: f64,
}

impl SymbolFiber {
    pub fn validate(&self) -> Result<()> {
        if self.branches.is_empty() {
            return Err(Error::InvalidConfig("a base symbol needs at least one interval".into()));
        }
        for (i, br) in self.branches.iter().enumerate() {
            br.validate()?;
            if i == 0 && br.a < 0.0 {
                return Err(Error::InvalidConfig(format!("first interval starts at {} < 0", br.a)));
            }
            if i + 1 < self.branches.len() && br.b > self.branches[i + 1].a {
                return Err(Error::InvalidConfig(format!(
                    "intervals {} and {} overlap: {} > {}",
                    i + 1,
                    i + 2,
                    br.b,
                    self.branches[i + 1].a
                )));
            }
        }
        let last = self.branches.last().unwrap();
        if last.b > 1.0 {
            return Err(Error::InvalidConfig(format!("last interval ends at {} > 1", last.b)));
        }
        if !(self.a0 > 0.0 && self.a0 <= 1.0) {
            return Err(Error::InvalidConfig(format!("a0 = {} must lie in (0, 1]", self.a0)));
        }
        Ok(())
    }

    /// Equal contiguous intervals `[(i-1)/n, i/n]` with affine branches (`x -> n x mod 1`).
    pub fn uniform(n: usize) -> Self {
        let branches = (0..n)
            .map(|i| BranchMap::affine(i as f64 / n as f64, (i + 1) as f64 / n as f64))
            .collect();
        SymbolFiber { branches, a0: 1.0 }
    }
}

/// Maps base symbols to alphabet sizes, matrices and branches.
#[derive(Debug, Clone, PartialEq)]
pub enum FiberModel {
    Table { symbols: Vec<SymbolFiber>, matrices: MatrixRule },
    /// Symbol `n` has `n` equal contiguous affine branches; matrices follow [`MatrixRule::LastRowForced`].
    Gamma,
}

impl FiberModel {
    pub fn alphabet(&self, sym: u32) -> Result<usize> {
        match self {
            FiberModel::Table { symbols, .. } => symbols
                .get(sym as usize)
                .map(|f| f.branches.len())
                .ok_or_else(|| Error::InvalidConfig(format!("base symbol {sym} has no fiber table"))),
            FiberModel::Gamma if sym >= 1 => Ok(sym as usize),
            FiberModel::Gamma => Err(Error::InvalidConfig("gamma base symbols start at 1".into())),
        }
    }

    pub fn symbol_fiber(&self, sym: u32) -> Result<SymbolFiber> {
        match self {
            FiberModel::Table { symbols, .. } => symbols
                .get(sym as usize)
                .cloned()
                .ok_or_else(|| Error::InvalidConfig(format!("base symbol {sym} has no fiber table"))),
            FiberModel::Gamma => Ok(SymbolFiber::uniform(self.alphabet(sym)?)),
        }
    }

    fn matrix(&self, sym: u32, next: u32) -> Result<BoolMatrix> {
        let (r, c) = (self.alphabet(sym)?, self.alphabet(next)?);
        match self {
            FiberModel::Table { matrices, .. } => matrices.matrix(sym, next, r, c),
            FiberModel::Gamma => MatrixRule::LastRowForced.matrix(sym, next, r, c),
        }
    }
}

/// Fiber data at one step of the realized orbit.
#[derive(Debug, Clone)]
pub struct FiberStep {
    pub base_symbol: u32,
    /// `l_k × l_{k+1}` admissibility matrix.
    pub matrix: BoolMatrix,
    pub fiber: Arc<SymbolFiber>,
}

impl FiberStep {
    pub fn alphabet(&self) -> usize {
        self.fiber.branches.len()
    }

    /// Branch for the 1-based symbol `s`.
    #[inline]
    pub fn branch(&self, s: u32) -> &BranchMap {
        &self.fiber.branches[s as usize - 1]
    }
}

/// A realized orbit of the base system with its fiber data; immutable once built.
#[derive(Debug, Clone)]
pub struct FiberSequence {
    config: BaseConfig,
    trace: Vec<u32>,
    steps: Vec<FiberStep>,
    truncations: usize,
}

impl FiberSequence {
    /// Samples `horizon + 1` base symbols and builds `horizon` fiber steps.
    pub fn sample(config: &BaseConfig, model: &FiberModel) -> Result<Self> {
        let (trace, truncations) = sample_base_trace(config, config.horizon + 1)?;
        let mut fiber = Self::from_trace(config, model, trace)?;
        fiber.truncations = truncations;
        Ok(fiber)
    }

    /// Builds the fiber along a prescribed base trace (`trace.len() - 1` steps).
    pub fn from_trace(config: &BaseConfig, model: &FiberModel, trace: Vec<u32>) -> Result<Self> {
        if trace.len() < 2 {
            return Err(Error::InvalidConfig("a base trace needs at least two symbols".into()));
        }
        let mut cache: HashMap<u32, Arc<SymbolFiber>> = HashMap::new();
        let mut steps = Vec::with_capacity(trace.len() - 1);
        for k in 0..trace.len() - 1 {
            let (sym, next) = (trace[k], trace[k + 1]);
            let fiber = match cache.get(&sym) {
                Some(f) => f.clone(),
                None => {
                    let f = Arc::new(model.symbol_fiber(sym)?);
                    f.validate()?;
                    cache.insert(sym, f.clone());
                    f
                }
            };
            steps.push(FiberStep { base_symbol: sym, matrix: model.matrix(sym, next)?, fiber });
        }
        let mut config = config.clone();
        config.horizon = steps.len();
        Ok(FiberSequence { config, trace, steps, truncations: 0 })
    }

    pub fn config(&self) -> &BaseConfig {
        &self.config
    }

    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    /// Realized base symbols `ω_0 … ω_horizon`.
    pub fn trace(&self) -> &[u32] {
        &self.trace
    }

    pub fn steps(&self) -> &[FiberStep] {
        &self.steps
    }

    #[inline]
    pub fn step(&self, k: usize) -> &FiberStep {
        &self.steps[k]
    }

    /// Alphabet size `l_k`, defined for `k <= horizon`.
    pub fn alphabet(&self, k: usize) -> usize {
        if k < self.steps.len() {
            self.steps[k].alphabet()
        } else {
            self.steps[k - 1].matrix.cols()
        }
    }

    pub fn truncations(&self) -> usize {
        self.truncations
    }

    pub(crate) fn check_range(&self, start: usize, depth: usize) -> Result<()> {
        if start + depth > self.horizon() {
            return Err(Error::HorizonExhausted { needed: start + depth, available: self.horizon() });
        }
        Ok(())
    }
}

/// Smallest `m >= 1` such that `A_start · … · A_{start+m-1}` is entrywise positive.
pub fn mixing_time(fiber: &FiberSequence, start: usize) -> Result<usize> {
    fiber.check_range(start, 1)?;
    let mut prod = fiber.step(start).matrix.clone();
    let mut m = 1;
    while !prod.is_positive() {
        if start + m >= fiber.horizon() {
            return Err(Error::HorizonExhausted { needed: start + m + 1, available: fiber.horizon() });
        }
        prod = prod.bool_mul(&fiber.step(start + m).matrix);
        m += 1;
    }
    Ok(m)
}
