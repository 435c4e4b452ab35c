//! Builtin scenarios, the scenario file format, and scenario-level diagnostics.
//!
//! Builtins are addressed by name, optionally with arguments:
//!
//! ```
//! use randgibbs::scenarios::load_scenario;
//!
//! let s = load_scenario("cookie_cutter(p=1/4,3/4; r=1/3,1/3)").unwrap();
//! assert_eq!(s.name, "cookie_cutter(p=1/4,3/4; r=1/3,1/3)");
//! let t2 = s.oracle.t(2.0).unwrap();
//! assert!((t2 + (0.0625f64 + 0.5625).ln() / 3f64.ln()).abs() < 1e-12);
//! ```

mod diagnostics;
mod file;

use std::path::Path;

pub use diagnostics::{scenario_diagnostics, Diagnostics, MarginEstimate, DIAGNOSTIC_STEPS};
pub use file::{parse_scenario, ScenarioFile};

use crate::base::{BaseConfig, BaseKind, FiberModel, FiberSequence, MatrixRule, SymbolFiber};
use crate::error::{Error, Result};
use crate::geometry::{BranchMap, BranchShape};
use crate::symbolic::{PotentialSpec, WeightRule};

/// Names accepted by [`load_scenario`] without arguments.
pub const BUILTINS: [&str; 5] = ["cookie_cutter", "cookie_cutter_skewed", "example_three_state", "example_gamma", "full_interval"];

/// Closed forms known for a scenario.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Oracle {
    /// `(p, r)`: `T(q) = -log Σ p_i^q / log(1/r)` for a cookie-cutter with equal ratios.
    pub equal_ratio: Option<(Vec<f64>, f64)>,
    /// Declared `a_0` per base symbol.
    pub a0: Option<Vec<f64>>,
    /// Exact expansiveness margin `∫ [log a_0 − log Σ|U^s|] dP`.
    pub margin: Option<f64>,
    /// Exact `c_ψ`.
    pub c_psi: Option<f64>,
}

impl Oracle {
    pub fn t(&self, q: f64) -> Option<f64> {
        let (p, r) = self.equal_ratio.as_ref()?;
        let z: f64 = p.iter().map(|pi| pi.powf(q)).sum();
        Some(-z.ln() / (1.0 / r).ln())
    }

    /// Similarity dimension `log m / log(1/r)`.
    pub fn t0(&self) -> Option<f64> {
        let (p, r) = self.equal_ratio.as_ref()?;
        Some((p.len() as f64).ln() / (1.0 / r).ln())
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub base: BaseConfig,
    pub model: FiberModel,
    pub phi: PotentialSpec,
    pub psi: PotentialSpec,
    pub oracle: Oracle,
    /// Depth grid used when a run does not give one.
    pub depths: Vec<usize>,
}

impl Scenario {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.base.seed = seed;
        self
    }

    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.base.horizon = horizon;
        self
    }

    pub fn with_phi(mut self, phi: PotentialSpec) -> Self {
        self.phi = phi;
        self
    }

    pub fn sample_fiber(&self) -> Result<FiberSequence> {
        FiberSequence::sample(&self.base, &self.model)
    }

    /// Base symbols the scenario can produce.
    pub fn base_symbols(&self) -> Vec<u32> {
        match &self.base.kind {
            BaseKind::Deterministic { pattern } => {
                let mut v = pattern.clone();
                v.sort_unstable();
                v.dedup();
                v
            }
            BaseKind::Bernoulli { probs } => (0..probs.len() as u32).collect(),
            BaseKind::Markov { initial, .. } => (0..initial.len() as u32).collect(),
            BaseKind::Telescoping => (1..=self.base.l_max as u32).collect(),
        }
    }

    /// Checks the base law, every branch table the base can reach, every matrix between
    /// reachable symbols, and that `Ψ` agrees with `−log T′` on a sample grid.
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        let syms = self.base_symbols();
        for &s in &syms {
            let f = self.model.symbol_fiber(s)?;
            f.validate()?;
            psi_consistency(&f, 1e-10)?;
        }
        if let FiberModel::Table { matrices, .. } = &self.model {
            for &s in &syms {
                for &t in &syms {
                    matrices.matrix(s, t, self.model.alphabet(s)?, self.model.alphabet(t)?)?;
                }
            }
        }
        if self.depths.is_empty() || self.depths.windows(2).any(|w| w[1] <= w[0]) || self.depths[0] == 0 {
            return Err(Error::schema("depths", "must be a nonempty, strictly increasing list of positive depths"));
        }
        Ok(())
    }

    /// `Σ_ω P(ω_0) f(ω_0)` when the base has a single-symbol marginal.
    pub(crate) fn average<F: Fn(&SymbolFiber) -> f64>(&self, f: F) -> Option<f64> {
        let marginal = self.base.marginal()?;
        let mut acc = 0.0;
        for (s, p) in marginal {
            acc += p * f(&self.model.symbol_fiber(s).ok()?);
        }
        Some(acc)
    }
}

/// `log a_0 − log Σ|U^s|` for one base symbol.
pub fn margin_term(f: &SymbolFiber) -> f64 {
    f.a0.ln() - f.branches.iter().map(|b| b.len()).sum::<f64>().ln()
}

/// `max_s sup ψ` for one base symbol.
pub fn sup_psi(f: &SymbolFiber) -> f64 {
    f.branches.iter().map(|b| b.sup_psi()).fold(f64::NEG_INFINITY, f64::max)
}

fn psi_consistency(f: &SymbolFiber, tol: f64) -> Result<()> {
    for (i, br) in f.branches.iter().enumerate() {
        for j in 0..=16 {
            let x = br.a + (br.b - br.a) * j as f64 / 16.0;
            let direct = -br.derivative(x).ln();
            let psi = br.psi(x);
            if !((psi - direct).abs() <= tol * (1.0 + direct.abs())) {
                return Err(Error::InconsistentFiber(format!(
                    "psi of branch {} at x = {x} is {psi}, -log T' is {direct}",
                    i + 1
                )));
            }
        }
    }
    Ok(())
}

/// Resolves a builtin (with optional arguments) or reads a scenario file.
pub fn load_scenario(name_or_path: &str) -> Result<Scenario> {
    let s = name_or_path.trim();
    let (head, args) = split_call(s)?;
    let scenario = match head {
        "cookie_cutter" => {
            let p = args.get("p").cloned().unwrap_or_else(|| vec![0.5, 0.5]);
            let r = args.get("r").cloned().unwrap_or_else(|| vec![1.0 / 3.0; p.len()]);
            let mut sc = cookie_cutter(&p, &r)?;
            if !args.is_empty() {
                sc.name = s.to_string();
            }
            sc
        }
        "cookie_cutter_skewed" => {
            let mut sc = cookie_cutter(&[0.25, 0.75], &[1.0 / 3.0, 1.0 / 3.0])?;
            sc.name = head.to_string();
            sc
        }
        "example_three_state" => example_three_state(),
        "example_gamma" => {
            let l_max = match args.get("l_max").map(|v| v.as_slice()) {
                None => 8,
                Some([x]) if *x >= 2.0 && x.fract() == 0.0 => *x as usize,
                Some(_) => return Err(Error::schema("l_max", "expected one integer >= 2")),
            };
            example_gamma(l_max)
        }
        "full_interval" => full_interval(),
        _ if Path::new(s).is_file() => {
            let text = std::fs::read_to_string(s)?;
            return parse_scenario(&text);
        }
        _ => return Err(Error::UnknownScenario(s.to_string())),
    };
    if !args.is_empty() && !matches!(head, "cookie_cutter" | "example_gamma") {
        return Err(Error::schema(head, "this builtin takes no arguments"));
    }
    scenario.validate()?;
    Ok(scenario)
}

type Args = std::collections::BTreeMap<String, Vec<f64>>;

fn split_call(s: &str) -> Result<(&str, Args)> {
    let mut args = Args::new();
    let Some(open) = s.find('(') else {
        return Ok((s, args));
    };
    if !s.ends_with(')') || s.ends_with(".toml") {
        return Ok((s, args));
    }
    let head = s[..open].trim();
    for part in s[open + 1..s.len() - 1].split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part.split_once('=').ok_or_else(|| Error::schema(head, format!("argument `{part}` is not key=values")))?;
        let k = k.trim();
        let vals = v
            .split(',')
            .map(|x| parse_number(x.trim()).ok_or_else(|| Error::schema(format!("{head}.{k}"), format!("`{}` is not a number", x.trim()))))
            .collect::<Result<Vec<_>>>()?;
        args.insert(k.to_string(), vals);
    }
    Ok((head, args))
}

fn parse_number(x: &str) -> Option<f64> {
    match x.split_once('/') {
        Some((a, b)) => Some(a.trim().parse::<f64>().ok()? / b.trim().parse::<f64>().ok()?),
        None => x.parse().ok(),
    }
}

fn single_symbol_base(horizon: usize) -> BaseConfig {
    BaseConfig { kind: BaseKind::Deterministic { pattern: vec![0] }, horizon, seed: 0, l_max: 8 }
}

/// Deterministic cookie-cutter: `m` affine branches with ratios `r`, the first flush left,
/// the last flush right and equal gaps between; `Φ = log p_s`.
pub fn cookie_cutter(p: &[f64], r: &[f64]) -> Result<Scenario> {
    let m = p.len();
    if m < 2 || r.len() != m {
        return Err(Error::schema("cookie_cutter", "p and r need the same length, at least 2"));
    }
    if p.iter().any(|&x| !(x > 0.0)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::schema("cookie_cutter.p", "weights must be positive and sum to 1"));
    }
    let total: f64 = r.iter().sum();
    if r.iter().any(|&x| !(x > 0.0)) || total > 1.0 + 1e-12 {
        return Err(Error::schema("cookie_cutter.r", "ratios must be positive with sum at most 1"));
    }
    let gap = (1.0 - total).max(0.0) / (m - 1) as f64;
    let mut branches = Vec::with_capacity(m);
    let mut a = 0.0;
    for (i, &ri) in r.iter().enumerate() {
        let b = if i + 1 == m { 1.0 } else { a + ri };
        let a_i = if i + 1 == m { 1.0 - ri } else { a };
        branches.push(BranchMap::affine(a_i, b));
        a = b + gap;
    }
    let fiber = SymbolFiber { branches, a0: 1.0 };
    let margin = margin_term(&fiber);
    let c_psi = -sup_psi(&fiber);
    let equal = r.iter().all(|&x| (x - r[0]).abs() < 1e-15);
    Ok(Scenario {
        name: "cookie_cutter".into(),
        base: single_symbol_base(48),
        model: FiberModel::Table { symbols: vec![fiber], matrices: MatrixRule::Full },
        phi: PotentialSpec::symbol_log_weights(WeightRule::Table(vec![p.iter().map(|x| x.ln()).collect()])),
        psi: PotentialSpec::geometric(),
        oracle: Oracle {
            equal_ratio: equal.then(|| (p.to_vec(), r[0])),
            a0: Some(vec![1.0]),
            margin: Some(margin),
            c_psi: Some(c_psi),
        },
        depths: (4..=14).collect(),
    })
}

/// Two halves of `[0, 1]` with uniform weights: the attractor is the whole interval.
pub fn full_interval() -> Scenario {
    let mut s = cookie_cutter(&[0.5, 0.5], &[0.5, 0.5]).expect("valid parameters");
    s.name = "full_interval".into();
    s
}

/// Fullshift on three base symbols with alphabets `(4, 1, 3)`, including a nowhere-Hölder
/// `C^1` branch and a quadratic one.
pub fn example_three_state() -> Scenario {
    let quarters = SymbolFiber::uniform(4);
    let series = SymbolFiber {
        branches: vec![BranchMap::new(0.0, 1.0, BranchShape::series()).expect("series branch")],
        a0: 0.5,
    };
    let ninths = SymbolFiber {
        branches: vec![
            BranchMap::affine(0.0, 1.0 / 9.0),
            BranchMap::new(1.0 / 9.0, 2.0 / 9.0, BranchShape::Polynomial(vec![0.0, 7.0 / 8.0, 1.0 / 8.0]))
                .expect("quadratic branch"),
            BranchMap::affine(2.0 / 3.0, 7.0 / 9.0),
        ],
        a0: 7.0 / 8.0,
    };
    let weights = [vec![0.1, 0.2, 0.3, 0.4], vec![1.0], vec![0.5, 0.3, 0.2]];
    let mut s = Scenario {
        name: "example_three_state".into(),
        base: BaseConfig { kind: BaseKind::Bernoulli { probs: vec![1.0 / 3.0; 3] }, horizon: 64, seed: 7, l_max: 8 },
        model: FiberModel::Table { symbols: vec![quarters, series, ninths], matrices: MatrixRule::Full },
        phi: PotentialSpec::symbol_log_weights(WeightRule::Table(
            weights.iter().map(|row| row.iter().map(|w: &f64| w.ln()).collect()).collect(),
        )),
        psi: PotentialSpec::geometric(),
        oracle: Oracle { a0: Some(vec![1.0, 0.5, 7.0 / 8.0]), ..Default::default() },
        depths: (4..=12).collect(),
    };
    s.oracle.margin = s.average(margin_term);
    s.oracle.c_psi = s.average(sup_psi).map(|x| -x);
    s
}

/// Telescoping base `P(n) = 1/(n(n+1))` truncated at `l_max`, `n` equal branches,
/// last-row transition rule, weights proportional to the symbol.
pub fn example_gamma(l_max: usize) -> Scenario {
    let mut s = Scenario {
        name: format!("example_gamma(l_max={l_max})"),
        base: BaseConfig { kind: BaseKind::Telescoping, horizon: 64, seed: 11, l_max },
        model: FiberModel::Gamma,
        phi: PotentialSpec::symbol_log_weights(WeightRule::Linear),
        psi: PotentialSpec::geometric(),
        oracle: Oracle { a0: Some(vec![1.0; l_max]), ..Default::default() },
        depths: (8..=24).step_by(4).collect(),
    };
    if l_max == 8 {
        s.name = "example_gamma".into();
    }
    s.oracle.margin = s.average(margin_term);
    s.oracle.c_psi = s.average(sup_psi).map(|x| -x);
    s
}
