use rayon::prelude::*;

use super::{CurveKind, SpectrumCurve};
use crate::base::FiberSequence;
use crate::error::{Error, Result};
use crate::symbolic::{Extension, PotentialSpec, WordTable};
use crate::thermo::{log_sum_exp, PressureEstimate};

/// `c_ψ = -(1/H) Σ_k max_s sup ψ(σ^kω, s, ·)` over the realized steps.
pub fn contraction_in_mean(fiber: &FiberSequence) -> f64 {
    let total: f64 = fiber
        .steps()
        .iter()
        .map(|st| st.fiber.branches.iter().map(|b| b.sup_psi()).fold(f64::NEG_INFINITY, f64::max))
        .sum();
    -total / fiber.horizon() as f64
}

/// Birkhoff sums `(S_nΦ, S_nΨ)` of every word on a depth grid, so that
/// `P(qΦ - tΨ)` costs one pass over the words of a single depth.
#[derive(Debug, Clone)]
pub struct PressureFamily {
    depths: Vec<usize>,
    phi: Vec<Vec<f64>>,
    psi: Vec<Vec<f64>>,
    c_psi: f64,
}

impl PressureFamily {
    /// Fails with `ContractionViolated` unless `c_ψ > 0` on the realized fiber.
    pub fn build(
        fiber: &FiberSequence,
        phi: &PotentialSpec,
        psi: &PotentialSpec,
        depths: &[usize],
        ext: &Extension,
        budget: usize,
    ) -> Result<Self> {
        if depths.is_empty() || depths.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidConfig("depth grid must be nonempty and strictly increasing".into()));
        }
        let c_psi = contraction_in_mean(fiber);
        if !(c_psi > 0.0) {
            return Err(Error::ContractionViolated { c_psi });
        }
        let mut fam = PressureFamily { depths: depths.to_vec(), phi: Vec::new(), psi: Vec::new(), c_psi };
        for &n in depths {
            let t = WordTable::build(fiber, 0, n, &[phi, psi], ext, budget)?;
            fam.phi.push(t.sums(0).to_vec());
            fam.psi.push(t.sums(1).to_vec());
        }
        Ok(fam)
    }

    pub fn depths(&self) -> &[usize] {
        &self.depths
    }

    pub fn c_psi(&self) -> f64 {
        self.c_psi
    }

    fn at_level(&self, j: usize, q: f64, t: f64) -> f64 {
        let xs: Vec<f64> = self.phi[j].iter().zip(&self.psi[j]).map(|(a, b)| q * a - t * b).collect();
        log_sum_exp(&xs) / self.depths[j] as f64
    }

    /// `(1/N) log Z_N(qΦ - tΨ)` at the deepest depth.
    pub fn pressure(&self, q: f64, t: f64) -> f64 {
        self.at_level(self.depths.len() - 1, q, t)
    }

    /// The full depth trace with its extrapolation.
    pub fn estimate(&self, q: f64, t: f64) -> PressureEstimate {
        let trace = (0..self.depths.len()).map(|j| (self.depths[j], self.at_level(j, q, t))).collect();
        PressureEstimate::from_trace(trace).expect("depth grid validated at construction")
    }

    /// `∂P/∂t` at the deepest depth: minus the Gibbs average of `S_NΨ / N`.
    pub fn slope_t(&self, q: f64, t: f64) -> f64 {
        let j = self.depths.len() - 1;
        let xs: Vec<f64> = self.phi[j].iter().zip(&self.psi[j]).map(|(a, b)| q * a - t * b).collect();
        let lz = log_sum_exp(&xs);
        let avg: f64 = xs.iter().zip(&self.psi[j]).map(|(x, b)| (x - lz).exp() * b).sum();
        -avg / self.depths[j] as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Bisection stops once the bracket is narrower than this.
    pub t_tol: f64,
    /// Pressure diagnostics above this mark the root as noisy.
    pub noise_tol: f64,
    /// Brackets grow from `[-1, 1]` by doubling up to `[-limit, limit]`.
    pub bracket_limit: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { t_tol: 1e-10, noise_tol: 1e-3, bracket_limit: 64.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TRoot {
    pub q: f64,
    pub t: f64,
    /// `P(qΦ - tΨ)` at the returned `t`.
    pub residual: f64,
    /// Extrapolation diagnostic of the pressure, converted to units of `t`.
    pub uncertainty: f64,
    pub noisy: bool,
}

fn bisect<F: Fn(f64) -> f64>(f: F, q: f64, opts: &SolveOptions) -> Result<f64> {
    let (mut lo, mut hi) = (-1.0_f64, 1.0_f64);
    loop {
        let (flo, fhi) = (f(lo), f(hi));
        if flo <= 0.0 && fhi >= 0.0 {
            break;
        }
        if (flo > 0.0 && lo <= -opts.bracket_limit) || (fhi < 0.0 && hi >= opts.bracket_limit) {
            return Err(Error::BracketFailure { q, lo, hi });
        }
        if flo > 0.0 {
            lo = (2.0 * lo).max(-opts.bracket_limit);
        }
        if fhi < 0.0 {
            hi = (2.0 * hi).min(opts.bracket_limit);
        }
    }
    while hi - lo > opts.t_tol {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `T(q)`: the root in `t` of `P(qΦ - tΨ) = 0`.
pub fn solve_t(family: &PressureFamily, q: f64, opts: &SolveOptions) -> Result<TRoot> {
    let t = bisect(|t| family.pressure(q, t), q, opts)?;
    let est = family.estimate(q, t);
    let slope = family.slope_t(q, t);
    Ok(TRoot {
        q,
        t,
        residual: family.pressure(q, t),
        uncertainty: est.diagnostic / slope.abs().max(f64::MIN_POSITIVE),
        noisy: est.diagnostic > opts.noise_tol,
    })
}

/// `T` on a q-grid; nodes are solved in parallel and assembled in grid order.
pub fn solve_t_curve(family: &PressureFamily, q_grid: &[f64], opts: &SolveOptions) -> Result<(SpectrumCurve, Vec<TRoot>)> {
    let roots = q_grid.par_iter().map(|&q| solve_t(family, q, opts)).collect::<Result<Vec<_>>>()?;
    let mut curve = SpectrumCurve::new(CurveKind::T, q_grid.to_vec(), roots.iter().map(|r| r.t).collect())?;
    curve.uncertainty = roots.iter().map(|r| r.uncertainty).collect();
    Ok((curve, roots))
}

/// Root `t_0` of `P(tΨ) = 0`.
pub fn bowen_ruelle_t0(family: &PressureFamily, opts: &SolveOptions) -> Result<TRoot> {
    // T(0) is the root of P(-TΨ) = 0
    let root = solve_t(family, 0.0, opts)?;
    Ok(TRoot { t: -root.t, ..root })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base::{BaseConfig, BaseKind, FiberModel, MatrixRule, SymbolFiber};
    use crate::geometry::BranchMap;
    use crate::symbolic::{WeightRule, DEFAULT_BUDGET};

    fn cookie(p: f64, horizon: usize) -> (FiberSequence, PotentialSpec) {
        let config = BaseConfig { kind: BaseKind::Deterministic { pattern: vec![0] }, horizon, seed: 0, l_max: 8 };
        let sf = SymbolFiber { branches: vec![BranchMap::affine(0.0, 1.0 / 3.0), BranchMap::affine(2.0 / 3.0, 1.0)], a0: 1.0 };
        let model = FiberModel::Table { symbols: vec![sf], matrices: MatrixRule::Full };
        let phi = PotentialSpec::symbol_log_weights(WeightRule::Table(vec![vec![p.ln(), (1.0 - p).ln()]]));
        (FiberSequence::sample(&config, &model).unwrap(), phi)
    }

    fn family(p: f64) -> PressureFamily {
        let (f, phi) = cookie(p, 12);
        PressureFamily::build(&f, &phi, &PotentialSpec::geometric(), &[6, 8, 10], &Extension::default(), DEFAULT_BUDGET)
            .unwrap()
    }

    #[test]
    fn uniform_cookie_roots() {
        let fam = family(0.5);
        let opts = SolveOptions::default();
        let a = 2f64.ln() / 3f64.ln();
        assert!(solve_t(&fam, 1.0, &opts).unwrap().t.abs() < 1e-9);
        assert!((solve_t(&fam, 0.0, &opts).unwrap().t + a).abs() < 1e-9);
        assert!((solve_t(&fam, 2.0, &opts).unwrap().t - a).abs() < 1e-9);
        assert!((a - 0.63093).abs() < 1e-5);
        assert!((bowen_ruelle_t0(&fam, &opts).unwrap().t - a).abs() < 1e-9);
    }

    #[test]
    fn closed_form_on_skewed_cookie() {
        let fam = family(0.25);
        let opts = SolveOptions::default();
        for q in [-5.0, -2.0, 0.5, 3.0] {
            let oracle = -(0.25f64.powf(q) + 0.75f64.powf(q)).ln() / 3f64.ln();
            let r = solve_t(&fam, q, &opts).unwrap();
            assert!((r.t - oracle).abs() < 1e-8, "q = {q}: {} vs {oracle}", r.t);
            assert!(!r.noisy);
            assert!(r.residual.abs() < 1e-9);
        }
    }

    #[test]
    fn pressure_increases_in_t() {
        let fam = family(0.25);
        for q in [-2.0, 0.0, 2.0] {
            let vals: Vec<f64> = (-10..=10).map(|i| fam.pressure(q, i as f64 * 0.5)).collect();
            assert!(vals.windows(2).all(|w| w[1] > w[0]));
            assert!(fam.slope_t(q, 0.3) > 0.0);
        }
    }

    #[test]
    fn narrow_bracket_fails() {
        let fam = family(0.25);
        let opts = SolveOptions { bracket_limit: 2.0, ..Default::default() };
        assert_eq!(solve_t(&fam, 10.0, &opts).unwrap_err().tag(), "bracket-failure");
    }

    #[test]
    fn expanding_in_mean_is_required() {
        let config = BaseConfig { kind: BaseKind::Deterministic { pattern: vec![0] }, horizon: 6, seed: 0, l_max: 8 };
        let model = FiberModel::Table { symbols: vec![SymbolFiber::uniform(1)], matrices: MatrixRule::Full };
        let f = FiberSequence::sample(&config, &model).unwrap();
        let phi = PotentialSpec::constant(0.0);
        let err = PressureFamily::build(&f, &phi, &PotentialSpec::geometric(), &[3], &Extension::default(), DEFAULT_BUDGET)
            .unwrap_err();
        assert_eq!(err.tag(), "contraction-violated");
    }

    #[test]
    fn curve_is_in_grid_order() {
        let fam = family(0.25);
        let grid: Vec<f64> = (-4..=4).map(|i| i as f64).collect();
        let (curve, roots) = solve_t_curve(&fam, &grid, &SolveOptions::default()).unwrap();
        assert_eq!(curve.x, grid);
        assert!(roots.iter().zip(&grid).all(|(r, &q)| r.q == q));
        assert!(curve.first_differences().iter().all(|&d| d >= 0.0));
        assert!(curve.check_concave(1e-9).is_ok());
    }
}
