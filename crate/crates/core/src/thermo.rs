//! Partition functions, pressure, transfer operators on coarse potentials and
//! weak-Gibbs cylinder weights.

use std::collections::HashMap;

use crate::base::FiberSequence;
use crate::error::{Error, Result};
use crate::symbolic::{enumerate_cylinders, CoarseTable, Extension, PotentialSpec, WordTable};

/// `log Σ exp(x_i)` with max shift; summation runs in slice order.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

/// `log Z_n(Φ)` over the depth-`n` words from step 0.
pub fn log_partition_function(
    fiber: &FiberSequence,
    potential: &PotentialSpec,
    n: usize,
    ext: &Extension,
    budget: usize,
) -> Result<f64> {
    log_partition_from(fiber, 0, potential, n, ext, budget)
}

/// `log Z_n(Φ, σ^start ω)`.
pub fn log_partition_from(
    fiber: &FiberSequence,
    start: usize,
    potential: &PotentialSpec,
    n: usize,
    ext: &Extension,
    budget: usize,
) -> Result<f64> {
    let t = WordTable::build(fiber, start, n, &[potential], ext, budget)?;
    Ok(log_sum_exp(t.sums(0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extrapolation {
    /// Single depth, no extrapolation.
    None,
    /// Two depths, exact solve of `c + a/n`.
    Richardson,
    /// Least squares fit of `c + a/n` over all depths.
    LeastSquares,
}

impl Extrapolation {
    pub fn tag(&self) -> &'static str {
        match self {
            Extrapolation::None => "none",
            Extrapolation::Richardson => "richardson",
            Extrapolation::LeastSquares => "least-squares",
        }
    }
}

/// Mean and standard error over independent fiber realizations.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicaSummary {
    pub count: usize,
    pub mean: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PressureEstimate {
    pub value: f64,
    /// `(n, (1/n) log Z_n)`, depths increasing.
    pub trace: Vec<(usize, f64)>,
    pub method: Extrapolation,
    /// `|last - value|`.
    pub diagnostic: f64,
    pub replicas: Option<ReplicaSummary>,
}

impl PressureEstimate {
    pub fn from_trace(trace: Vec<(usize, f64)>) -> Result<Self> {
        if trace.is_empty() {
            return Err(Error::InvalidConfig("empty depth grid".into()));
        }
        if trace.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::InvalidConfig("depth grid must be strictly increasing".into()));
        }
        let (value, method) = extrapolate(&trace);
        let last = trace.last().unwrap().1;
        Ok(PressureEstimate { value, diagnostic: (last - value).abs(), trace, method, replicas: None })
    }

    /// `(1/N) log Z_N` at the deepest depth.
    pub fn last(&self) -> f64 {
        self.trace.last().unwrap().1
    }

    /// Averages per-replica estimates; the diagnostic becomes the larger of the mean
    /// diagnostic and the standard error.
    pub fn aggregate(estimates: &[PressureEstimate]) -> Result<Self> {
        let first = estimates.first().ok_or_else(|| Error::InvalidConfig("no replicas".into()))?;
        let r = estimates.len() as f64;
        let mean = estimates.iter().map(|e| e.value).sum::<f64>() / r;
        let var = if estimates.len() > 1 {
            estimates.iter().map(|e| (e.value - mean).powi(2)).sum::<f64>() / (r - 1.0)
        } else {
            0.0
        };
        let std_error = (var / r).sqrt();
        let trace = first
            .trace
            .iter()
            .enumerate()
            .map(|(j, &(n, _))| (n, estimates.iter().map(|e| e.trace[j].1).sum::<f64>() / r))
            .collect();
        let diag = estimates.iter().map(|e| e.diagnostic).sum::<f64>() / r;
        Ok(PressureEstimate {
            value: mean,
            trace,
            method: first.method,
            diagnostic: diag.max(std_error),
            replicas: Some(ReplicaSummary { count: estimates.len(), mean, std_error }),
        })
    }
}

fn extrapolate(trace: &[(usize, f64)]) -> (f64, Extrapolation) {
    match trace {
        [(_, y)] => (*y, Extrapolation::None),
        [(n1, y1), (n2, y2)] => {
            let (n1, n2) = (*n1 as f64, *n2 as f64);
            ((n2 * y2 - n1 * y1) / (n2 - n1), Extrapolation::Richardson)
        }
        _ => {
            // y = c + a u with u = 1/n
            let m = trace.len() as f64;
            let (su, sy) = trace.iter().fold((0.0, 0.0), |(a, b), &(n, y)| (a + 1.0 / n as f64, b + y));
            let (mu, my) = (su / m, sy / m);
            let (mut sxx, mut sxy) = (0.0, 0.0);
            for &(n, y) in trace {
                let u = 1.0 / n as f64 - mu;
                sxx += u * u;
                sxy += u * (y - my);
            }
            (my - (sxy / sxx) * mu, Extrapolation::LeastSquares)
        }
    }
}

/// Pressure of `potential` from the partition functions on `depths`.
pub fn pressure(
    fiber: &FiberSequence,
    potential: &PotentialSpec,
    depths: &[usize],
    ext: &Extension,
    budget: usize,
) -> Result<PressureEstimate> {
    let trace = depths
        .iter()
        .map(|&n| Ok((n, log_partition_function(fiber, potential, n, ext, budget)? / n as f64)))
        .collect::<Result<Vec<_>>>()?;
    PressureEstimate::from_trace(trace)
}

#[derive(Debug, Clone)]
pub struct Normalized {
    pub potential: PotentialSpec,
    /// Constant removed from the input potential.
    pub shift: f64,
    pub estimate: PressureEstimate,
}

/// `Φ - c` with `c = (1/N) log Z_N(Φ)` at the deepest depth `N` of the grid.
///
/// Shifting by the deepest finite-depth value makes `log Z_N` of the result
/// exactly zero, which is what the root finders downstream evaluate.
pub fn normalize_potential(
    fiber: &FiberSequence,
    potential: &PotentialSpec,
    depths: &[usize],
    ext: &Extension,
    budget: usize,
) -> Result<Normalized> {
    let estimate = pressure(fiber, potential, depths, ext, budget)?;
    if !estimate.value.is_finite() {
        return Err(Error::InvalidConfig(format!("pressure of {} is not finite", potential.name)));
    }
    let shift = estimate.last();
    Ok(Normalized { potential: potential.shifted(shift), shift, estimate })
}

/// Value of a symbolic potential on a word of at least its symbolic depth.
fn coarse_value(fiber: &FiberSequence, potential: &PotentialSpec, k: usize, word: &[u32]) -> Result<f64> {
    let br = fiber.step(k).branch(word[0]);
    potential.eval(fiber, k, word[0], 0.5 * (br.a + br.b), word)
}

fn require_depth(fiber: &FiberSequence, potential: &PotentialSpec) -> Result<usize> {
    potential.symbolic_depth(fiber).ok_or_else(|| {
        Error::RequiresCoarsening(format!("{} depends on the point, coarsen it first", potential.name))
    })
}

/// Depth of the cylinder algebra the transfer operator of `potential` acts on.
pub fn rpf_algebra_depth(fiber: &FiberSequence, potential: &PotentialSpec) -> Result<usize> {
    Ok(require_depth(fiber, potential)?.saturating_sub(1).max(1))
}

fn word_index(fiber: &FiberSequence, k: usize, words: &[Vec<u32>]) -> HashMap<u64, usize> {
    words.iter().enumerate().map(|(i, w)| (CoarseTable::key(fiber, k, w), i)).collect()
}

/// `ℒ^{ω_k}` applied to `values`, a function on the depth-`m` words at step `k`
/// (lexicographic order, `m` from [`rpf_algebra_depth`]); the result lives on
/// the depth-`m` words at step `k + 1`.
pub fn rpf_apply(fiber: &FiberSequence, potential: &PotentialSpec, k: usize, values: &[f64]) -> Result<Vec<f64>> {
    let i = require_depth(fiber, potential)?;
    let m = i.saturating_sub(1).max(1);
    fiber.check_range(k, i.max(m + 1))?;
    let src: Vec<Vec<u32>> = enumerate_cylinders(fiber, k, m, usize::MAX)?.into_iter().map(|w| w.symbols).collect();
    if values.len() != src.len() {
        return Err(Error::InvalidConfig(format!(
            "expected {} values on depth-{m} words at step {k}, got {}",
            src.len(),
            values.len()
        )));
    }
    let src_index = word_index(fiber, k, &src);
    let dst = enumerate_cylinders(fiber, k + 1, m, usize::MAX)?;
    let step = fiber.step(k);
    let mut out = Vec::with_capacity(dst.len());
    let mut word = Vec::with_capacity(m + 1);
    for v in &dst {
        let mut acc = 0.0;
        for s in 1..=step.alphabet() as u32 {
            if !step.matrix.allows(s, v.symbols[0]) {
                continue;
            }
            word.clear();
            word.push(s);
            word.extend_from_slice(&v.symbols);
            let phi = coarse_value(fiber, potential, k, &word[..i.max(1)])?;
            let h = values[src_index[&CoarseTable::key(fiber, k, &word[..m])]];
            acc += phi.exp() * h;
        }
        out.push(acc);
    }
    Ok(out)
}

/// `log λ(ω, k)` for `k = 1..=n`: the log of the uniform average of `ℒ^k 1`.
pub fn lambda_sequence(fiber: &FiberSequence, potential: &PotentialSpec, n: usize) -> Result<Vec<f64>> {
    let m = rpf_algebra_depth(fiber, potential)?;
    fiber.check_range(0, n + m)?;
    let count = enumerate_cylinders(fiber, 0, m, usize::MAX)?.len();
    let mut h = vec![1.0; count];
    let mut log_scale = 0.0;
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        h = rpf_apply(fiber, potential, k, &h)?;
        let avg = h.iter().sum::<f64>() / h.len() as f64;
        if !(avg > 0.0 && avg.is_finite()) {
            return Err(Error::DegenerateSupport(format!("transfer operator mass {avg} at step {}", k + 1)));
        }
        log_scale += avg.ln();
        h.iter_mut().for_each(|x| *x /= avg);
        out.push(log_scale);
    }
    Ok(out)
}

/// Normalized Birkhoff weights `exp(S_nΦ(v) - log Z_n)` on the depth-`n` words from step 0.
#[derive(Debug, Clone)]
pub struct GibbsWeights {
    pub depth: usize,
    pub potential: String,
    pub log_normalizer: f64,
    /// Weights below `exp(-745)` relative to the largest, raised to the smallest positive float.
    pub flushed: usize,
    weights: Vec<f64>,
    log_weights: Vec<f64>,
    table: WordTable,
}

/// Log-gap below the maximum where weights stop being representable.
const FLUSH_GAP: f64 = 745.0;

impl GibbsWeights {
    /// Weights from column `p` of a prebuilt table.
    pub fn from_table(table: WordTable, p: usize, name: impl Into<String>) -> Self {
        let sums = table.sums(p);
        let log_z = log_sum_exp(sums);
        let max = sums.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut flushed = 0;
        let log_weights: Vec<f64> = sums.iter().map(|s| s - log_z).collect();
        let weights = sums
            .iter()
            .zip(&log_weights)
            .map(|(&s, &lw)| {
                if max - s > FLUSH_GAP {
                    flushed += 1;
                    f64::from_bits(1)
                } else {
                    lw.exp()
                }
            })
            .collect();
        GibbsWeights { depth: table.depth(), potential: name.into(), log_normalizer: log_z, flushed, weights, log_weights, table }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn table(&self) -> &WordTable {
        &self.table
    }

    pub fn weight_of(&self, word: &[u32]) -> Option<f64> {
        self.table.index_of(word).map(|i| self.weights[i])
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }
}

pub fn gibbs_cylinder_weights(
    fiber: &FiberSequence,
    potential: &PotentialSpec,
    n: usize,
    ext: &Extension,
    budget: usize,
) -> Result<GibbsWeights> {
    let table = WordTable::build(fiber, 0, n, &[potential], ext, budget)?;
    Ok(GibbsWeights::from_table(table, 0, potential.name.clone()))
}

/// `max_v |log w_n(v) - log Σ_s w_{n+1}(vs)|` for weights at consecutive depths.
pub fn consistency_slack(parent: &GibbsWeights, child: &GibbsWeights) -> Result<f64> {
    if child.depth != parent.depth + 1 || child.table.start() != parent.table.start() {
        return Err(Error::InvalidConfig("consistency needs weights at depths n and n + 1 from one step".into()));
    }
    let n = parent.depth;
    let mut worst: f64 = 0.0;
    let mut j = 0;
    for i in 0..parent.len() {
        let pw = parent.table.word(i);
        let mut acc = Vec::new();
        while j < child.len() && &child.table.word(j)[..n] == pw {
            acc.push(child.log_weights[j]);
            j += 1;
        }
        if acc.is_empty() {
            return Err(Error::InconsistentFiber(format!("word {pw:?} has no children")));
        }
        worst = worst.max((parent.log_weights[i] - log_sum_exp(&acc)).abs());
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NegativityReport {
    /// `(n, max_v S_nΦ(v) / n)`.
    pub rows: Vec<(usize, f64)>,
    /// `-max S_N Φ / N` at the deepest depth.
    pub threshold: f64,
    /// Deepest maximum is negative.
    pub negative: bool,
}

/// Tracks `max_v S_nΦ / n` for a normalized potential.
pub fn negativity_check(
    fiber: &FiberSequence,
    potential: &PotentialSpec,
    n_grid: &[usize],
    ext: &Extension,
    budget: usize,
) -> Result<NegativityReport> {
    let rows = n_grid
        .iter()
        .map(|&n| {
            let t = WordTable::build(fiber, 0, n, &[potential], ext, budget)?;
            let m = t.sums(0).iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            Ok((n, m / n as f64))
        })
        .collect::<Result<Vec<_>>>()?;
    let last = rows.last().map(|r| r.1).unwrap_or(f64::NAN);
    Ok(NegativityReport { threshold: -last, negative: last < 0.0, rows })
}
