use super::legendre::legendre_at;
use super::SpectrumCurve;
use crate::base::FiberSequence;
use crate::error::{Error, Result};
use crate::symbolic::PotentialSpec;

/// Predicted dimensions of the level sets `E(μ, d, d')`, `E_(μ, d)` and `E^(μ, d)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelSetPrediction {
    pub d: f64,
    pub d_prime: f64,
    /// `min(T*(d), T*(d'))`.
    pub dim_h: f64,
    /// `max_{β ∈ [d, d']} T*(β)`.
    pub dim_p: f64,
    /// Hausdorff dimension of the lower level set at `d`: `T*(d)`.
    pub lower_dim_h: f64,
    /// `sup_{β ≥ d} T*(β)`.
    pub lower_dim_p: f64,
    pub upper_dim_h: f64,
    /// `sup_{β ≤ d} T*(β)`.
    pub upper_dim_p: f64,
    /// Gauge threshold of the zero-infinity laws at `d`.
    pub gauge_threshold: f64,
}

/// Predictions from the `T` curve (exact transform at `d`, `d'`) and the `T*` grid (suprema).
pub fn level_set_predictions(t: &SpectrumCurve, tstar: &SpectrumCurve, d: f64, d_prime: f64) -> Result<LevelSetPrediction> {
    if d > d_prime {
        return Err(Error::InvalidConfig(format!("need d <= d', got {d} > {d_prime}")));
    }
    let at = |x: f64| legendre_at(t, x).value;
    let (a, b) = (at(d), at(d_prime));
    let sup_over = |lo: f64, hi: f64, ends: &[f64]| {
        tstar
            .x
            .iter()
            .zip(&tstar.y)
            .filter(|(&x, _)| x >= lo && x <= hi)
            .map(|(_, &y)| y)
            .chain(ends.iter().copied())
            .fold(f64::NEG_INFINITY, f64::max)
    };
    Ok(LevelSetPrediction {
        d,
        d_prime,
        dim_h: a.min(b),
        dim_p: sup_over(d, d_prime, &[a, b]),
        lower_dim_h: a,
        lower_dim_p: sup_over(d, f64::INFINITY, &[a]),
        upper_dim_h: a,
        upper_dim_p: sup_over(f64::NEG_INFINITY, d, &[a]),
        gauge_threshold: a,
    })
}

/// A per-step product measure: for each base symbol, a distribution over its fiber symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductMeasure {
    pub per_base_symbol: Vec<Vec<f64>>,
}

fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
}

/// `(h_ρ + q ∫Φ dρ) / ∫Ψ dρ` for a product measure on a fullshift fiber, with
/// entropy and integrals averaged over the realized steps.
pub fn variational_ratio(
    fiber: &FiberSequence,
    rho: &ProductMeasure,
    phi: &PotentialSpec,
    psi: &PotentialSpec,
    q: f64,
) -> Result<f64> {
    for p in [phi, psi] {
        if p.symbolic_depth(fiber) != Some(1) {
            return Err(Error::UnsupportedMeasure(format!("{} is not constant on depth-1 cylinders", p.name)));
        }
    }
    let (mut h, mut iphi, mut ipsi) = (0.0, 0.0, 0.0);
    for (k, step) in fiber.steps().iter().enumerate() {
        if !step.matrix.is_full() {
            return Err(Error::UnsupportedMeasure(format!("step {k} is not a full shift")));
        }
        let dist = rho
            .per_base_symbol
            .get(step.base_symbol as usize)
            .filter(|d| d.len() == step.alphabet())
            .ok_or_else(|| Error::UnsupportedMeasure(format!("no distribution of size {} for base symbol {}", step.alphabet(), step.base_symbol)))?;
        if (dist.iter().sum::<f64>() - 1.0).abs() > 1e-9 || dist.iter().any(|&x| x < 0.0) {
            return Err(Error::UnsupportedMeasure(format!("distribution for base symbol {} is not a probability", step.base_symbol)));
        }
        h += entropy(dist);
        for (i, &w) in dist.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let s = i as u32 + 1;
            let br = step.branch(s);
            let x = 0.5 * (br.a + br.b);
            iphi += w * phi.eval(fiber, k, s, x, &[s])?;
            ipsi += w * psi.eval(fiber, k, s, x, &[s])?;
        }
    }
    let n = fiber.horizon() as f64;
    Ok((h / n + q * iphi / n) / (ipsi / n))
}

#[cfg(test)]
mod tests {
    use super::super::{legendre, linspace, CurveKind};
    use super::*;

    fn t_curve(n: usize) -> SpectrumCurve {
        let q = linspace(-5.0, 5.0, n);
        let y = q.iter().map(|&q| -(0.25f64.powf(q) + 0.75f64.powf(q)).ln() / 3f64.ln()).collect();
        SpectrumCurve::new(CurveKind::T, q, y).unwrap()
    }

    #[test]
    fn grid_refinement_agrees() {
        let coarse = t_curve(41);
        let fine = t_curve(401);
        let a = level_set_predictions(&coarse, &legendre(&coarse, 1e-9).unwrap(), 0.45, 0.60).unwrap();
        let b = level_set_predictions(&fine, &legendre(&fine, 1e-9).unwrap(), 0.45, 0.60).unwrap();
        assert!((a.dim_h - b.dim_h).abs() < 5e-3);
        assert!((a.dim_p - b.dim_p).abs() < 5e-3);
        assert!(a.dim_h <= a.dim_p);
        assert!(a.lower_dim_p >= a.lower_dim_h && a.upper_dim_p >= a.upper_dim_h);
    }

    #[test]
    fn peak_gives_t0_everywhere() {
        let c = t_curve(401);
        let star = legendre(&c, 1e-9).unwrap();
        let d = star.x[star.argmax().unwrap()];
        let p = level_set_predictions(&c, &star, d, d).unwrap();
        let t0 = 2f64.ln() / 3f64.ln();
        assert!((p.dim_h - t0).abs() < 1e-4);
        assert!((p.dim_p - t0).abs() < 1e-4);
    }

    #[test]
    fn outside_the_domain_is_empty() {
        let c = t_curve(41);
        let star = legendre(&c, 1e-9).unwrap();
        let p = level_set_predictions(&c, &star, 3.0, 4.0).unwrap();
        assert_eq!(p.dim_h, f64::NEG_INFINITY);
        assert!(level_set_predictions(&c, &star, 0.6, 0.5).is_err());
    }
}
