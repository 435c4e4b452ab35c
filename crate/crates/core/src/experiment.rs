//! Run configuration and the command pipelines behind the CLI.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::base::FiberSequence;
use crate::error::{Error, Result};
use crate::multifractal::{
    bowen_ruelle_t0, empirical_lq, ld_spectrum, legendre_on, level_set_predictions, linspace, solve_t_curve,
    EmpiricalLq, LdSpectrum, LevelSetPrediction, PressureFamily, SolveOptions, SpectrumCurve, TRoot, MAX_CELL_RATIO,
};
use crate::output::{curve_table, gnuplot_series, join, num, Header, Table};
use crate::scenarios::{load_scenario, scenario_diagnostics, Diagnostics, Scenario};
use crate::symbolic::{Extension, ExtensionRule, PotentialSpec, DEFAULT_BUDGET};
use crate::thermo::{gibbs_cylinder_weights, normalize_potential, pressure, GibbsWeights, PressureEstimate};

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "RANDGIBBS_OUT";

/// Which potential `cmd_pressure` evaluates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialChoice {
    #[default]
    Phi,
    Zero,
    Psi,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtensionChoice {
    #[default]
    Leftmost,
    Midpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: String,
    /// Overrides the scenario seed.
    pub seed: Option<u64>,
    /// Overrides the scenario horizon.
    pub horizon: Option<usize>,
    /// Depth grid; the scenario default when absent.
    pub depths: Option<Vec<usize>>,
    pub q_grid: Vec<f64>,
    /// Extra `q` nodes used only to extend the domain of the Legendre transform.
    pub tail_q: Vec<f64>,
    /// `d` grid for `T*` and the LD curves; 25 points over the slope range when absent.
    pub d_grid: Option<Vec<f64>>,
    /// `q` grid of the empirical `L^q` estimator.
    pub lq_q_grid: Vec<f64>,
    /// Ball radii; derived from the largest cell when absent.
    pub radii: Option<Vec<f64>>,
    /// Half-width of the `d` window in the LD counts.
    pub ld_eps: f64,
    pub replicas: usize,
    /// Worker threads; the rayon default when absent.
    pub threads: Option<usize>,
    /// Output directory; `$RANDGIBBS_OUT`, then `out`, when absent.
    pub out: Option<PathBuf>,
    pub budget: usize,
    pub potential: PotentialChoice,
    pub extension: ExtensionChoice,
    /// Overrides every verification tolerance.
    pub tolerance: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scenario: "cookie_cutter".into(),
            seed: None,
            horizon: None,
            depths: None,
            q_grid: linspace(-5.0, 5.0, 41),
            tail_q: vec![-16.0, 16.0],
            d_grid: None,
            lq_q_grid: linspace(-2.0, 3.0, 21),
            radii: None,
            ld_eps: 0.002,
            replicas: 1,
            threads: None,
            out: None,
            budget: DEFAULT_BUDGET,
            potential: PotentialChoice::Phi,
            extension: ExtensionChoice::Leftmost,
            tolerance: None,
        }
    }
}

fn sorted(name: &str, v: &[f64]) -> Result<()> {
    if v.is_empty() || v.iter().any(|x| !x.is_finite()) || v.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidConfig(format!("{name} must be nonempty, finite and strictly increasing")));
    }
    Ok(())
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(format!("run config: {}", e.message())))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        sorted("q_grid", &self.q_grid)?;
        sorted("lq_q_grid", &self.lq_q_grid)?;
        if !self.tail_q.is_empty() {
            sorted("tail_q", &self.tail_q)?;
        }
        if let Some(d) = &self.d_grid {
            sorted("d_grid", d)?;
        }
        if let Some(r) = &self.radii {
            sorted("radii", r)?;
            if r[0] <= 0.0 || r[r.len() - 1] >= 1.0 {
                return Err(Error::InvalidConfig("radii must lie in (0, 1)".into()));
            }
        }
        if let Some(d) = &self.depths {
            if d.is_empty() || d[0] == 0 || d.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::InvalidConfig("depths must be nonempty, positive and strictly increasing".into()));
            }
        }
        if self.replicas == 0 {
            return Err(Error::InvalidConfig("replicas must be at least 1".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::InvalidConfig("threads must be at least 1".into()));
        }
        if !(self.ld_eps > 0.0) {
            return Err(Error::InvalidConfig("ld_eps must be positive".into()));
        }
        if self.budget == 0 {
            return Err(Error::InvalidConfig("budget must be positive".into()));
        }
        if let Some(t) = self.tolerance {
            if !(t >= 0.0) {
                return Err(Error::InvalidConfig("tolerance must be nonnegative".into()));
            }
        }
        Ok(())
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn ext(&self) -> Extension {
        match self.extension {
            ExtensionChoice::Leftmost => Extension { rule: ExtensionRule::LeftmostAdmissible, ..Extension::default() },
            ExtensionChoice::Midpoint => Extension::midpoint(),
        }
    }

    /// Runs `f` on a pool with the configured thread count.
    pub fn install<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T> {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = self.threads {
            b = b.num_threads(n);
        }
        let pool = b.build().map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
        Ok(pool.install(f))
    }
}

/// A loaded scenario with its replica fibers.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub scenario: Scenario,
    pub depths: Vec<usize>,
    pub fibers: Vec<FiberSequence>,
    pub seeds: Vec<u64>,
}

impl Prepared {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        Self::from_scenario(load_scenario(&cfg.scenario)?, cfg)
    }

    pub fn from_scenario(mut scenario: Scenario, cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        if let Some(s) = cfg.seed {
            scenario.base.seed = s;
        }
        if let Some(h) = cfg.horizon {
            scenario.base.horizon = h;
        }
        let depths = cfg.depths.clone().unwrap_or_else(|| scenario.depths.clone());
        let deepest = *depths.last().unwrap();
        if deepest > scenario.base.horizon {
            return Err(Error::InvalidConfig(format!(
                "deepest depth {deepest} exceeds the horizon {}",
                scenario.base.horizon
            )));
        }
        let seeds: Vec<u64> = (0..cfg.replicas as u64).map(|i| scenario.base.seed.wrapping_add(i)).collect();
        let fibers = seeds
            .iter()
            .map(|&s| scenario.clone().with_seed(s).sample_fiber())
            .collect::<Result<Vec<_>>>()?;
        Ok(Prepared { scenario, depths, fibers, seeds })
    }

    fn header(&self, command: &str, cfg: &RunConfig) -> Header {
        let mut h = Header::new(command);
        h.push("scenario", &self.scenario.name);
        h.push("seed", self.scenario.base.seed);
        h.push("horizon", self.scenario.base.horizon);
        h.push("replicas", cfg.replicas);
        h.push_list("depths", &self.depths);
        h
    }
}

/// Pressure estimate per replica and their aggregate.
#[derive(Debug, Clone)]
pub struct PressureRun {
    pub replicas: Vec<PressureEstimate>,
    pub aggregate: PressureEstimate,
}

pub fn run_pressure(prep: &Prepared, cfg: &RunConfig) -> Result<PressureRun> {
    let pot = match cfg.potential {
        PotentialChoice::Phi => prep.scenario.phi.clone(),
        PotentialChoice::Zero => PotentialSpec::constant(0.0),
        PotentialChoice::Psi => prep.scenario.psi.clone(),
    };
    let replicas = prep
        .fibers
        .iter()
        .map(|f| pressure(f, &pot, &prep.depths, &cfg.ext(), cfg.budget))
        .collect::<Result<Vec<_>>>()?;
    let aggregate = PressureEstimate::aggregate(&replicas)?;
    Ok(PressureRun { replicas, aggregate })
}

/// `T` on one fiber: the grid curve, the tail-extended curve and `t_0`.
#[derive(Debug, Clone)]
pub struct TRun {
    pub curve: SpectrumCurve,
    pub roots: Vec<TRoot>,
    /// `T` on the union of the grid and the tail nodes.
    pub extended: SpectrumCurve,
    pub t0: TRoot,
    /// Constant removed from `Φ`.
    pub shift: f64,
    pub normalized: PotentialSpec,
    pub c_psi: f64,
}

pub fn run_t(scenario: &Scenario, fiber: &FiberSequence, depths: &[usize], cfg: &RunConfig) -> Result<TRun> {
    let ext = cfg.ext();
    let norm = normalize_potential(fiber, &scenario.phi, depths, &ext, cfg.budget)?;
    let family = PressureFamily::build(fiber, &norm.potential, &scenario.psi, depths, &ext, cfg.budget)?;
    let opts = SolveOptions::default();
    let (curve, roots) = solve_t_curve(&family, &cfg.q_grid, &opts)?;
    let mut qs: Vec<f64> = cfg.q_grid.iter().chain(&cfg.tail_q).copied().collect();
    qs.sort_by(f64::total_cmp);
    qs.dedup();
    let extended = if qs.len() == cfg.q_grid.len() { curve.clone() } else { solve_t_curve(&family, &qs, &opts)?.0 };
    let t0 = bowen_ruelle_t0(&family, &opts)?;
    Ok(TRun { curve, roots, extended, t0, shift: norm.shift, normalized: norm.potential, c_psi: family.c_psi() })
}

/// Concavity tolerance for the Legendre step.
pub const CONCAVITY_TOL: f64 = 1e-6;

/// 25 points over the slope range of the extended `T`, widened to at least 0.1.
pub fn default_d_grid(t: &TRun) -> Vec<f64> {
    let s = t.extended.slopes();
    let mut lo = s.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut hi = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo < 0.1 {
        let mid = 0.5 * (lo + hi);
        lo = mid - 0.05;
        hi = mid + 0.05;
    }
    linspace(lo, hi, 25)
}

pub fn run_legendre(t: &TRun, cfg: &RunConfig) -> Result<SpectrumCurve> {
    let grid = cfg.d_grid.clone().unwrap_or_else(|| default_d_grid(t));
    legendre_on(&t.extended, &grid, CONCAVITY_TOL)
}

/// Longest cylinder at each depth `1..=N`, as hulls of the depth-`N` cells.
pub fn max_cell_lengths(weights: &GibbsWeights) -> Vec<f64> {
    let t = weights.table();
    let n = t.depth();
    let mut out = vec![0.0f64; n];
    for (m, slot) in out.iter_mut().enumerate() {
        let mut i = 0;
        while i < t.len() {
            let mut j = i;
            while j + 1 < t.len() && t.word(j + 1)[..=m] == t.word(i)[..=m] {
                j += 1;
            }
            *slot = slot.max(t.right(j) - t.left(i));
            i = j + 1;
        }
    }
    out
}

/// Up to eight radii below 0.1, geometric with ratio `e^{c_ψ}` (clamped to `[1.5, 4]`).
///
/// The grid starts at the shortest longest-cell length over shallower depths that is
/// still at least `max_len / MAX_CELL_RATIO`, so balls follow the construction scale.
pub fn default_radii(weights: &GibbsWeights, c_psi: f64) -> Result<Vec<f64>> {
    let lengths = max_cell_lengths(weights);
    let max_len = *lengths.last().expect("depth at least one");
    let floor = max_len / MAX_CELL_RATIO * (1.0 + 1e-12);
    let r0 = lengths.iter().rev().copied().find(|&l| l >= floor).unwrap_or(floor);
    let factor = c_psi.exp().clamp(1.5, 4.0);
    let radii: Vec<f64> = (0..8).map(|j| r0 * factor.powi(j)).filter(|&r| r < 0.1).collect();
    if radii.len() < 3 {
        return Err(Error::TooShallowWeights { max_len, min_radius: r0 });
    }
    Ok(radii)
}

/// Normalized Gibbs weights at the deepest depth, with the radius grid to use on them.
pub fn deepest_weights(prep: &Prepared, fiber: &FiberSequence, t: &TRun, cfg: &RunConfig) -> Result<(GibbsWeights, Vec<f64>)> {
    let n = *prep.depths.last().unwrap();
    let w = gibbs_cylinder_weights(fiber, &t.normalized, n, &cfg.ext(), cfg.budget)?;
    let radii = match &cfg.radii {
        Some(r) => r.clone(),
        None => default_radii(&w, t.c_psi)?,
    };
    Ok((w, radii))
}

/// One verification line of a spectrum run.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub tolerance: f64,
}

impl Check {
    pub fn at_most(name: &str, measured: f64, tolerance: f64) -> Self {
        Check { name: name.into(), passed: measured <= tolerance, measured, tolerance }
    }
}

#[derive(Debug, Clone)]
pub struct SpectrumRun {
    pub t: TRun,
    pub tstar: SpectrumCurve,
    pub tau_hat: EmpiricalLq,
    pub ld: LdSpectrum,
    pub radii: Vec<f64>,
    pub predictions: Vec<LevelSetPrediction>,
    pub summary: Vec<Check>,
}

/// Largest amount by which the nonnegative part of `ld` exceeds `tstar` at the same `d`.
pub fn ld_excess(ld: &SpectrumCurve, tstar: &SpectrumCurve) -> f64 {
    ld.y.iter()
        .zip(&tstar.y)
        .filter(|(l, _)| **l >= 0.0)
        .map(|(l, t)| l - t)
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn run_spectrum(prep: &Prepared, cfg: &RunConfig) -> Result<SpectrumRun> {
    let fiber = &prep.fibers[0];
    let t = run_t(&prep.scenario, fiber, &prep.depths, cfg)?;
    let tstar = run_legendre(&t, cfg)?;
    let (w, radii) = deepest_weights(prep, fiber, &t, cfg)?;
    let tau_hat = empirical_lq(&w, &radii, &cfg.lq_q_grid)?;
    let ld = ld_spectrum(&w, &radii, &tstar.x, cfg.ld_eps)?;
    let predictions = tstar
        .x
        .iter()
        .map(|&d| level_set_predictions(&t.extended, &tstar, d, d))
        .collect::<Result<Vec<_>>>()?;

    let tol = |x: f64| cfg.tolerance.unwrap_or(x);
    let mut summary = Vec::new();
    let t_at = |q: f64| solve_at(&t, q);
    if let Some(t1) = t_at(1.0) {
        summary.push(Check::at_most("t_at_one", t1.abs(), tol(1e-6)));
    }
    if let Some(tz) = t_at(0.0) {
        summary.push(Check::at_most("t0_identity", (tz + t.t0.t).abs(), tol(2e-6)));
    }
    let first = t.curve.first_differences().into_iter().fold(f64::INFINITY, f64::min);
    let second = t.curve.second_differences().into_iter().fold(f64::NEG_INFINITY, f64::max);
    summary.push(Check::at_most("t_monotone", (-first).max(0.0), tol(1e-6)));
    summary.push(Check::at_most("t_concave", second.max(0.0), tol(1e-6)));
    let tau_gap = tau_hat
        .curve
        .x
        .iter()
        .zip(&tau_hat.curve.y)
        .map(|(&q, &y)| (y - t.extended.interpolate(q)).abs())
        .fold(0.0, f64::max);
    summary.push(Check::at_most("tau_hat_vs_t", tau_gap, tol(0.06)));
    summary.push(Check::at_most("ld_lower_below_tstar", ld_excess(&ld.lower, &tstar).max(0.0), tol(0.05)));
    summary.push(Check::at_most("ld_upper_below_tstar", ld_excess(&ld.upper, &tstar).max(0.0), tol(0.05)));
    summary.push(Check::at_most("tstar_peak_vs_t0", (tstar.max() - t.t0.t).abs(), tol(0.01)));
    if prep.scenario.oracle.equal_ratio.is_some() {
        let gap = t
            .curve
            .x
            .iter()
            .zip(&t.curve.y)
            .map(|(&q, &y)| (y - prep.scenario.oracle.t(q).unwrap()).abs())
            .fold(0.0, f64::max);
        summary.push(Check::at_most("t_vs_closed_form", gap, tol(0.02)));
    }
    Ok(SpectrumRun { t, tstar, tau_hat, ld, radii, predictions, summary })
}

fn solve_at(t: &TRun, q: f64) -> Option<f64> {
    t.extended.x.iter().position(|&x| x == q).map(|i| t.extended.y[i])
}

/// Files written by a command.
#[derive(Debug, Clone, Default)]
pub struct Written {
    pub files: Vec<PathBuf>,
}

fn prepare_out(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg.out_dir();
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

pub fn cmd_pressure(cfg: &RunConfig) -> Result<(PressureRun, Written)> {
    let prep = Prepared::new(cfg)?;
    let run = cfg.install(|| run_pressure(&prep, cfg))??;
    let dir = prepare_out(cfg)?;
    let mut h = prep.header("pressure", cfg);
    h.push("potential", format!("{:?}", cfg.potential).to_lowercase());
    let mut trace = Table::new(&["replica", "seed", "depth", "pressure"]);
    let mut summary = Table::new(&["replica", "seed", "value", "method", "diagnostic", "std_error"]);
    for (i, (e, s)) in run.replicas.iter().zip(&prep.seeds).enumerate() {
        for &(n, y) in &e.trace {
            trace.row(vec![i.to_string(), s.to_string(), n.to_string(), num(y)]);
        }
        summary.row(vec![i.to_string(), s.to_string(), num(e.value), e.method.tag().into(), num(e.diagnostic), num(0.0)]);
    }
    let a = &run.aggregate;
    let se = a.replicas.as_ref().map_or(0.0, |r| r.std_error);
    summary.row(vec!["all".into(), "-".into(), num(a.value), a.method.tag().into(), num(a.diagnostic), num(se)]);
    let files = vec![trace.write(&dir, "pressure_trace.csv", &h)?, summary.write(&dir, "pressure.csv", &h)?];
    Ok((run, Written { files }))
}

fn t_header(prep: &Prepared, command: &str, cfg: &RunConfig) -> Header {
    let mut h = prep.header(command, cfg);
    h.push_list("q_grid", &cfg.q_grid);
    h.push_list("tail_q", &cfg.tail_q);
    h
}

fn tq_table(t: &TRun) -> Table {
    let mut tab = Table::new(&["q", "t", "uncertainty", "residual", "noisy"]);
    for r in &t.roots {
        tab.row(vec![num(r.q), num(r.t), num(r.uncertainty), num(r.residual), (r.noisy as u8).to_string()]);
    }
    tab
}

/// `T(q)` on replica 0; with several replicas, also their mean and standard error.
pub fn cmd_tq(cfg: &RunConfig) -> Result<(Vec<TRun>, Written)> {
    let prep = Prepared::new(cfg)?;
    let runs = cfg.install(|| {
        prep.fibers.iter().map(|f| run_t(&prep.scenario, f, &prep.depths, cfg)).collect::<Result<Vec<_>>>()
    })??;
    let dir = prepare_out(cfg)?;
    let h = t_header(&prep, "tq", cfg);
    let mut files = vec![tq_table(&runs[0]).write(&dir, "tq.csv", &h)?];
    if runs.len() > 1 {
        let mut tab = Table::new(&["q", "t_mean", "t_std_error"]);
        let r = runs.len() as f64;
        for (j, &q) in cfg.q_grid.iter().enumerate() {
            let vals: Vec<f64> = runs.iter().map(|t| t.curve.y[j]).collect();
            let mean = vals.iter().sum::<f64>() / r;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1.0);
            tab.row(vec![num(q), num(mean), num((var / r).sqrt())]);
        }
        files.push(tab.write(&dir, "tq_replicas.csv", &h)?);
    }
    Ok((runs, Written { files }))
}

fn tstar_header(prep: &Prepared, cfg: &RunConfig, grid: &[f64]) -> Header {
    let mut h = t_header(prep, "legendre", cfg);
    h.push_list("d_grid", grid);
    h
}

pub fn cmd_legendre(cfg: &RunConfig) -> Result<(SpectrumCurve, Written)> {
    let prep = Prepared::new(cfg)?;
    let tstar = cfg.install(|| -> Result<_> {
        let t = run_t(&prep.scenario, &prep.fibers[0], &prep.depths, cfg)?;
        run_legendre(&t, cfg)
    })??;
    let dir = prepare_out(cfg)?;
    let h = tstar_header(&prep, cfg, &tstar.x);
    let files = vec![curve_table(&tstar, "d", "tstar").write(&dir, "tstar.csv", &h)?];
    Ok((tstar, Written { files }))
}

fn empirical_header(prep: &Prepared, command: &str, cfg: &RunConfig, radii: &[f64]) -> Header {
    let mut h = t_header(prep, command, cfg);
    h.push_list("radii", radii);
    h
}

fn tau_table(tau: &EmpiricalLq, t: &TRun) -> Table {
    let mut tab = Table::new(&["q", "tau_hat", "std_error", "t"]);
    let c = &tau.curve;
    for i in 0..c.len() {
        tab.row(vec![num(c.x[i]), num(c.y[i]), num(c.uncertainty[i]), num(t.extended.interpolate(c.x[i]))]);
    }
    tab
}

pub fn cmd_lq_empirical(cfg: &RunConfig) -> Result<(EmpiricalLq, Written)> {
    let prep = Prepared::new(cfg)?;
    let (t, tau, radii) = cfg.install(|| -> Result<_> {
        let t = run_t(&prep.scenario, &prep.fibers[0], &prep.depths, cfg)?;
        let (w, radii) = deepest_weights(&prep, &prep.fibers[0], &t, cfg)?;
        let tau = empirical_lq(&w, &radii, &cfg.lq_q_grid)?;
        Ok((t, tau, radii))
    })??;
    let dir = prepare_out(cfg)?;
    let mut h = empirical_header(&prep, "lq-empirical", cfg, &radii);
    h.push_list("lq_q_grid", &cfg.lq_q_grid);
    let files = vec![tau_table(&tau, &t).write(&dir, "tauhat.csv", &h)?];
    Ok((tau, Written { files }))
}

fn ld_table(curve: &SpectrumCurve, tstar: &SpectrumCurve) -> Table {
    let mut tab = Table::new(&["d", "ld", "tstar"]);
    for i in 0..curve.len() {
        tab.row(vec![num(curve.x[i]), num(curve.y[i]), num(tstar.y[i])]);
    }
    tab
}

pub fn cmd_ld(cfg: &RunConfig) -> Result<(LdSpectrum, Written)> {
    let prep = Prepared::new(cfg)?;
    let (tstar, ld, radii) = cfg.install(|| -> Result<_> {
        let t = run_t(&prep.scenario, &prep.fibers[0], &prep.depths, cfg)?;
        let tstar = run_legendre(&t, cfg)?;
        let (w, radii) = deepest_weights(&prep, &prep.fibers[0], &t, cfg)?;
        let ld = ld_spectrum(&w, &radii, &tstar.x, cfg.ld_eps)?;
        Ok((tstar, ld, radii))
    })??;
    let dir = prepare_out(cfg)?;
    let mut h = empirical_header(&prep, "ld", cfg, &radii);
    h.push_list("d_grid", &tstar.x);
    h.push("ld_eps", cfg.ld_eps);
    let files = vec![
        ld_table(&ld.lower, &tstar).write(&dir, "ld_lower.csv", &h)?,
        ld_table(&ld.upper, &tstar).write(&dir, "ld_upper.csv", &h)?,
    ];
    Ok((ld, Written { files }))
}

pub fn summary_table(checks: &[Check]) -> Table {
    let mut tab = Table::new(&["check", "passed", "measured", "tolerance"]);
    for c in checks {
        tab.row(vec![c.name.clone(), (c.passed as u8).to_string(), num(c.measured), num(c.tolerance)]);
    }
    tab
}

/// Every curve, the level-set predictions and a verification summary.
pub fn cmd_spectrum(cfg: &RunConfig) -> Result<(SpectrumRun, Written)> {
    let prep = Prepared::new(cfg)?;
    let run = cfg.install(|| run_spectrum(&prep, cfg))??;
    let dir = prepare_out(cfg)?;
    let mut h = empirical_header(&prep, "spectrum", cfg, &run.radii);
    h.push_list("d_grid", &run.tstar.x);
    h.push_list("lq_q_grid", &cfg.lq_q_grid);
    h.push("ld_eps", cfg.ld_eps);
    let mut files = vec![
        tq_table(&run.t).write(&dir, "tq.csv", &h)?,
        curve_table(&run.tstar, "d", "tstar").write(&dir, "tstar.csv", &h)?,
        tau_table(&run.tau_hat, &run.t).write(&dir, "tauhat.csv", &h)?,
        ld_table(&run.ld.lower, &run.tstar).write(&dir, "ld_lower.csv", &h)?,
        ld_table(&run.ld.upper, &run.tstar).write(&dir, "ld_upper.csv", &h)?,
    ];
    let mut pred = Table::new(&[
        "d",
        "d_prime",
        "dim_h",
        "dim_p",
        "lower_dim_h",
        "lower_dim_p",
        "upper_dim_h",
        "upper_dim_p",
        "gauge_threshold",
    ]);
    for p in &run.predictions {
        pred.row(
            [p.d, p.d_prime, p.dim_h, p.dim_p, p.lower_dim_h, p.lower_dim_p, p.upper_dim_h, p.upper_dim_p, p.gauge_threshold]
                .iter()
                .map(|&x| num(x))
                .collect(),
        );
    }
    files.push(pred.write(&dir, "predictions.csv", &h)?);
    files.push(summary_table(&run.summary).write(&dir, "summary.csv", &h)?);
    let dat = gnuplot_series(&h, &[&run.t.curve, &run.tstar, &run.tau_hat.curve, &run.ld.lower, &run.ld.upper]);
    let path = dir.join("spectrum.dat");
    std::fs::write(&path, dat)?;
    files.push(path);
    Ok((run, Written { files }))
}

pub fn cmd_diagnostics(cfg: &RunConfig) -> Result<(Diagnostics, Written)> {
    let prep = Prepared::new(cfg)?;
    let d = scenario_diagnostics(&prep.scenario, &prep.fibers[0]);
    let dir = prepare_out(cfg)?;
    let h = prep.header("diagnostics", cfg);
    let mut tab = Table::new(&["key", "value"]);
    for (k, v) in d.rows() {
        tab.row(vec![k, v]);
    }
    let files = vec![tab.write(&dir, "diagnostics.csv", &h)?];
    Ok((d, Written { files }))
}

/// Curve files of `cmd_spectrum`, in write order.
pub const SPECTRUM_FILES: [&str; 8] =
    ["tq.csv", "tstar.csv", "tauhat.csv", "ld_lower.csv", "ld_upper.csv", "predictions.csv", "summary.csv", "spectrum.dat"];

/// Space-separated grids for headers and messages.
pub fn describe(cfg: &RunConfig) -> String {
    format!("scenario {} q_grid [{}] replicas {}", cfg.scenario, join(&cfg.q_grid), cfg.replicas)
}
