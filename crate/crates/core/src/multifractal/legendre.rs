use super::{linspace, CurveKind, SpectrumCurve};
use crate::error::{Error, Result};

/// Size of the default output grid of [`legendre`].
pub const DEFAULT_D_POINTS: usize = 201;

/// Slack on the slope range when deciding whether a point is in the domain.
const DOMAIN_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LegendreValue {
    pub value: f64,
    /// The infimum was attained at an end node of the input grid.
    pub extrapolated: bool,
}

/// `f*(d) = min_j (d x_j - f(x_j))` for `d` in the secant-slope range of the
/// finite part of `curve`, `-∞` outside it.
pub fn legendre_at(curve: &SpectrumCurve, d: f64) -> LegendreValue {
    let (x, y) = curve.finite();
    if x.is_empty() {
        return LegendreValue { value: f64::NEG_INFINITY, extrapolated: false };
    }
    let s = curve.slopes();
    let (lo, hi) = if s.is_empty() {
        (f64::INFINITY, f64::NEG_INFINITY)
    } else {
        (s.iter().cloned().fold(f64::INFINITY, f64::min), s.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
    };
    if s.is_empty() || d < lo - DOMAIN_SLACK * (1.0 + lo.abs()) || d > hi + DOMAIN_SLACK * (1.0 + hi.abs()) {
        return LegendreValue { value: f64::NEG_INFINITY, extrapolated: false };
    }
    let (mut best, mut arg) = (f64::INFINITY, 0);
    for (j, (&xj, &yj)) in x.iter().zip(&y).enumerate() {
        let v = d * xj - yj;
        if v < best {
            best = v;
            arg = j;
        }
    }
    LegendreValue { value: best, extrapolated: arg == 0 || arg + 1 == x.len() }
}

/// Legendre transform on an explicit output grid.
pub fn legendre_on(curve: &SpectrumCurve, grid: &[f64], tol: f64) -> Result<SpectrumCurve> {
    curve.check_concave(tol)?;
    let kind = match curve.kind {
        CurveKind::TStar => CurveKind::T,
        _ => CurveKind::TStar,
    };
    let vals: Vec<LegendreValue> = grid.iter().map(|&d| legendre_at(curve, d)).collect();
    let mut out = SpectrumCurve::new(kind, grid.to_vec(), vals.iter().map(|v| v.value).collect())?;
    out.extrapolated = vals.iter().map(|v| v.extrapolated).collect();
    Ok(out)
}

/// Legendre transform on [`DEFAULT_D_POINTS`] points spanning the slope range of `curve`.
pub fn legendre(curve: &SpectrumCurve, tol: f64) -> Result<SpectrumCurve> {
    let s = curve.slopes();
    if s.is_empty() {
        return Err(Error::InvalidConfig("Legendre transform needs at least two finite nodes".into()));
    }
    let lo = s.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let grid = if hi - lo > 1e-12 { linspace(lo, hi, DEFAULT_D_POINTS) } else { vec![lo] };
    legendre_on(curve, &grid, tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t_curve(f: impl Fn(f64) -> f64) -> SpectrumCurve {
        let q = linspace(-5.0, 5.0, 41);
        let y = q.iter().map(|&q| f(q)).collect();
        SpectrumCurve::new(CurveKind::T, q, y).unwrap()
    }

    fn bernoulli_t(q: f64) -> f64 {
        -(0.25f64.powf(q) + 0.75f64.powf(q)).ln() / 3f64.ln()
    }

    #[test]
    fn affine_t_has_a_single_point() {
        let a = 0.4;
        let c = t_curve(|q| (q - 1.0) * a);
        assert!((legendre_at(&c, a).value - a).abs() < 1e-12);
        assert_eq!(legendre_at(&c, a + 0.01).value, f64::NEG_INFINITY);
        let star = legendre(&c, 1e-9).unwrap();
        assert_eq!(star.len(), 1);
        assert!((star.y[0] - a).abs() < 1e-12);
    }

    #[test]
    fn dimension_of_measure_is_a_fixed_point() {
        let c = t_curve(bernoulli_t);
        // entropy over Lyapunov exponent
        let h = -(0.25 * 0.25f64.ln() + 0.75 * 0.75f64.ln());
        let d = h / 3f64.ln();
        assert!((d - 0.511860).abs() < 1e-6);
        assert!((legendre_at(&c, d).value - d).abs() < 2e-3);
    }

    #[test]
    fn peak_equals_t0() {
        let c = t_curve(bernoulli_t);
        let star = legendre(&c, 1e-9).unwrap();
        let t0 = -bernoulli_t(0.0);
        assert!((star.max() - t0).abs() < 1e-3, "{} vs {t0}", star.max());
        assert!(star.max() <= t0 + 1e-12);
    }

    #[test]
    fn double_transform_returns_t() {
        let c = t_curve(bernoulli_t);
        let star = legendre(&c, 1e-9).unwrap();
        let back = legendre_on(&star, &c.x[4..37], 1e-6).unwrap();
        assert_eq!(back.kind, CurveKind::T);
        for (i, &v) in back.y.iter().enumerate() {
            let q = c.x[4 + i];
            assert!((v - bernoulli_t(q)).abs() < 5e-3, "q = {q}: {v} vs {}", bernoulli_t(q));
        }
    }

    #[test]
    fn convex_input_is_rejected() {
        let c = t_curve(|q| q * q);
        assert_eq!(legendre(&c, 1e-6).unwrap_err().tag(), "not-concave");
    }

    #[test]
    fn endpoint_minimizers_are_flagged() {
        let c = t_curve(bernoulli_t);
        let s = c.slopes();
        assert!(legendre_at(&c, s[0]).extrapolated);
        assert!(!legendre_at(&c, 0.6).extrapolated);
    }
}
