//! `T(q)`, its Legendre transform, empirical `L^q` and large-deviation
//! spectra, and the level-set predictions derived from `T*`.

mod empirical;
mod legendre;
mod predictions;
mod tq;

pub use empirical::{empirical_lq, ld_spectrum, pack_balls, EmpiricalLq, LdSpectrum, Packing, MAX_CELL_RATIO};
pub use legendre::{legendre, legendre_at, legendre_on, LegendreValue, DEFAULT_D_POINTS};
pub use predictions::{level_set_predictions, variational_ratio, LevelSetPrediction, ProductMeasure};
pub use tq::{bowen_ruelle_t0, contraction_in_mean, solve_t, solve_t_curve, PressureFamily, SolveOptions, TRoot};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveKind {
    T,
    TStar,
    TauHat,
    LdLower,
    LdUpper,
}

impl CurveKind {
    pub fn tag(&self) -> &'static str {
        match self {
            CurveKind::T => "T",
            CurveKind::TStar => "T*",
            CurveKind::TauHat => "tau_hat",
            CurveKind::LdLower => "LD_lower",
            CurveKind::LdUpper => "LD_upper",
        }
    }
}

/// A sampled spectrum: strictly increasing abscissae, values (possibly `-∞`),
/// per-node uncertainties and extrapolation flags.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumCurve {
    pub kind: CurveKind,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub uncertainty: Vec<f64>,
    pub extrapolated: Vec<bool>,
}

impl SpectrumCurve {
    pub fn new(kind: CurveKind, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() || x.is_empty() {
            return Err(Error::InvalidConfig(format!("curve needs matching nonempty grids ({} vs {})", x.len(), y.len())));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidConfig("curve abscissae must be strictly increasing".into()));
        }
        let n = x.len();
        Ok(SpectrumCurve { kind, x, y, uncertainty: vec![0.0; n], extrapolated: vec![false; n] })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Secant slopes between consecutive finite nodes.
    pub fn slopes(&self) -> Vec<f64> {
        let (x, y) = self.finite();
        x.windows(2).zip(y.windows(2)).map(|(a, b)| (b[1] - b[0]) / (a[1] - a[0])).collect()
    }

    /// Central slope estimates at interior nodes (`NaN` at the ends).
    pub fn node_slopes(&self) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                if i == 0 || i + 1 == n {
                    f64::NAN
                } else {
                    (self.y[i + 1] - self.y[i - 1]) / (self.x[i + 1] - self.x[i - 1])
                }
            })
            .collect()
    }

    /// Finite part of the curve.
    pub fn finite(&self) -> (Vec<f64>, Vec<f64>) {
        self.x.iter().zip(&self.y).filter(|(_, y)| y.is_finite()).map(|(&x, &y)| (x, y)).unzip()
    }

    /// Second differences scaled to the local spacing; positive values break concavity.
    pub fn second_differences(&self) -> Vec<f64> {
        let (x, _) = self.finite();
        let s = self.slopes();
        (1..s.len()).map(|j| (s[j] - s[j - 1]) * 0.5 * (x[j + 1] - x[j - 1])).collect()
    }

    pub fn first_differences(&self) -> Vec<f64> {
        let (_, y) = self.finite();
        y.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Errors with the first node whose second difference exceeds `tol`.
    pub fn check_concave(&self, tol: f64) -> Result<()> {
        match self.second_differences().iter().enumerate().find(|(_, &d)| d > tol) {
            Some((j, &d)) => Err(Error::NotConcave { index: j + 1, excess: d }),
            None => Ok(()),
        }
    }

    pub fn argmax(&self) -> Option<usize> {
        (0..self.len()).filter(|&i| self.y[i].is_finite()).max_by(|&a, &b| self.y[a].total_cmp(&self.y[b]))
    }

    pub fn max(&self) -> f64 {
        self.argmax().map(|i| self.y[i]).unwrap_or(f64::NEG_INFINITY)
    }

    /// Linear interpolation on the finite nodes; `-∞` outside them.
    pub fn interpolate(&self, at: f64) -> f64 {
        let (x, y) = self.finite();
        if x.is_empty() || at < x[0] || at > x[x.len() - 1] {
            return f64::NEG_INFINITY;
        }
        let j = x.partition_point(|&v| v <= at);
        if j == 0 {
            return y[0];
        }
        if j == x.len() {
            return y[x.len() - 1];
        }
        let w = (at - x[j - 1]) / (x[j] - x[j - 1]);
        y[j - 1] + w * (y[j] - y[j - 1])
    }
}

/// `n` evenly spaced points from `a` to `b` inclusive.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unsorted_grid() {
        assert!(SpectrumCurve::new(CurveKind::T, vec![0.0, 0.0], vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn concavity_detection() {
        let c = SpectrumCurve::new(CurveKind::T, vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 3.0]).unwrap();
        match c.check_concave(1e-6).unwrap_err() {
            Error::NotConcave { index, excess } => {
                assert_eq!(index, 1);
                assert!((excess - 1.0).abs() < 1e-12);
            }
            e => panic!("{e}"),
        }
        let ok = SpectrumCurve::new(CurveKind::T, vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 1.5]).unwrap();
        assert!(ok.check_concave(1e-6).is_ok());
    }

    #[test]
    fn interpolation_and_linspace() {
        let c = SpectrumCurve::new(CurveKind::TStar, vec![0.0, 1.0, 2.0], vec![0.0, 2.0, f64::NEG_INFINITY]).unwrap();
        assert_eq!(c.interpolate(0.5), 1.0);
        assert_eq!(c.interpolate(1.5), f64::NEG_INFINITY);
        assert_eq!(linspace(0.0, 1.0, 5), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }
}
