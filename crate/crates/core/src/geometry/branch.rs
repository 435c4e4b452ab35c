use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Default tolerance for branch inversion, measured in the image space `[0, 1]`.
pub const INVERT_TOL: f64 = 1e-12;

/// Number of grid points used when a property of a branch has to be checked
/// on "a dense sample grid".
pub const DENSE_GRID: usize = 2049;

/// Shape of the diffeomorphism `[0,1] -> [0,1]` applied after the affine
/// rescaling of the branch domain.
#[derive(Debug, Clone, PartialEq)]
pub enum BranchShape {
    Identity,
    /// `u -> sum_i c[i] u^i`; must fix 0 and 1 and be strictly increasing.
    Polynomial(Vec<f64>),
    /// Normalized antiderivative of `h(u) = base + sum_{j=1}^{terms} j^-2 sin(2^j pi u)`.
    Series { base: f64, terms: usize },
}

impl BranchShape {
    /// Truncation used for the nowhere-Hölder series branch when nothing else is configured.
    pub const DEFAULT_SERIES_TERMS: usize = 24;

    pub fn series() -> Self {
        BranchShape::Series { base: 6.0, terms: Self::DEFAULT_SERIES_TERMS }
    }

    pub fn value(&self, u: f64) -> f64 {
        match self {
            BranchShape::Identity => u,
            BranchShape::Polynomial(c) => horner(c, u),
            BranchShape::Series { base, terms } => {
                let mut acc = base * u;
                for j in 1..=*terms {
                    let freq = series_freq(j);
                    let coef = 1.0 / (j * j) as f64;
                    acc += coef * (1.0 - (freq * u).cos()) / freq;
                }
                acc / base
            }
        }
    }

    pub fn derivative(&self, u: f64) -> f64 {
        match self {
            BranchShape::Identity => 1.0,
            BranchShape::Polynomial(c) => c
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(0.0, |acc, (i, ci)| acc * u + i as f64 * ci),
            BranchShape::Series { base, terms } => series_h(*base, *terms, u) / base,
        }
    }

    fn is_identity(&self) -> bool {
        matches!(self, BranchShape::Identity)
    }

    /// Solves `value(u) = y` on `[0, 1]` by bracketed Newton.
    fn invert(&self, y: f64, tol: f64) -> Result<f64> {
        if self.is_identity() {
            return Ok(y.clamp(0.0, 1.0));
        }
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        let f_lo = self.value(lo) - y;
        let f_hi = self.value(hi) - y;
        if f_lo > tol || f_hi < -tol {
            return Err(Error::NonMonotoneBranch(format!(
                "no bracket for y = {y}: shape(0) - y = {f_lo:.3e}, shape(1) - y = {f_hi:.3e}"
            )));
        }
        if f_lo.abs() <= tol && y <= 0.5 {
            return Ok(0.0);
        }
        if f_hi.abs() <= tol {
            return Ok(1.0);
        }
        let mut u = y.clamp(0.0, 1.0);
        for _ in 0..200 {
            let f = self.value(u) - y;
            if f.abs() <= tol * 1e-3 {
                return Ok(u);
            }
            if f < 0.0 {
                lo = u;
            } else {
                hi = u;
            }
            let d = self.derivative(u);
            let mut next = if d > 0.0 { u - f / d } else { f64::NAN };
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - u).abs() <= 1e-16 || hi - lo <= 1e-16 {
                u = next;
                break;
            }
            u = next;
        }
        let resid = (self.value(u) - y).abs();
        if resid > tol {
            return Err(Error::NonMonotoneBranch(format!(
                "inversion stalled at y = {y}: residual {resid:.3e}"
            )));
        }
        Ok(u)
    }
}

fn horner(c: &[f64], u: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, ci| acc * u + ci)
}

fn series_freq(j: usize) -> f64 {
    (1u64 << j) as f64 * PI
}

fn series_h(base: f64, terms: usize, u: f64) -> f64 {
    let mut acc = base;
    for j in 1..=terms {
        acc += (series_freq(j) * u).sin() / (j * j) as f64;
    }
    acc
}

/// A branch `T = shape ∘ f` where `f` maps the domain `[a, b]` affinely onto `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchMap {
    pub a: f64,
    pub b: f64,
    pub shape: BranchShape,
}

impl BranchMap {
    pub fn new(a: f64, b: f64, shape: BranchShape) -> Result<Self> {
        let map = BranchMap { a, b, shape };
        map.validate()?;
        Ok(map)
    }

    pub fn affine(a: f64, b: f64) -> Self {
        BranchMap { a, b, shape: BranchShape::Identity }
    }

    pub fn len(&self) -> f64 {
        self.b - self.a
    }

    pub fn is_affine(&self) -> bool {
        self.shape.is_identity()
    }

    fn to_unit(&self, x: f64) -> f64 {
        (x - self.a) / (self.b - self.a)
    }

    pub fn forward(&self, x: f64) -> f64 {
        self.shape.value(self.to_unit(x))
    }

    pub fn derivative(&self, x: f64) -> f64 {
        self.shape.derivative(self.to_unit(x)) / self.len()
    }

    /// `psi = -log T'(x)`.
    pub fn psi(&self, x: f64) -> f64 {
        match self.shape {
            BranchShape::Identity => self.len().ln(),
            _ => self.len().ln() - self.shape.derivative(self.to_unit(x)).ln(),
        }
    }

    /// The inverse branch `g`, mapping `[0, 1]` back into `[a, b]`.
    pub fn inverse(&self, y: f64) -> f64 {
        match self.shape {
            BranchShape::Identity => self.a + self.len() * y,
            _ => {
                let u = self
                    .shape
                    .invert(y, INVERT_TOL)
                    .expect("branch validated at construction");
                self.a + self.len() * u
            }
        }
    }

    /// Smallest value of the shape derivative over a dense grid (exact for the affine case).
    pub fn min_shape_derivative(&self) -> f64 {
        match &self.shape {
            BranchShape::Identity => 1.0,
            shape => (0..DENSE_GRID)
                .map(|i| shape.derivative(i as f64 / (DENSE_GRID - 1) as f64))
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// Largest value of `psi` over the domain (dense grid for non-affine shapes).
    pub fn sup_psi(&self) -> f64 {
        self.len().ln() - self.min_shape_derivative().ln()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a.is_finite() && self.b.is_finite() && self.b > self.a) {
            return Err(Error::NonMonotoneBranch(format!(
                "degenerate domain [{}, {}]",
                self.a, self.b
            )));
        }
        let s0 = self.shape.value(0.0);
        let s1 = self.shape.value(1.0);
        if s0.abs() > 1e-10 || (s1 - 1.0).abs() > 1e-10 {
            return Err(Error::NonMonotoneBranch(format!(
                "branch on [{}, {}] maps endpoints to {s0} and {s1}",
                self.a, self.b
            )));
        }
        if let BranchShape::Series { base, .. } = self.shape {
            if base <= 0.0 {
                return Err(Error::NonMonotoneBranch(format!("series base {base} must be positive")));
            }
        }
        if !self.shape.is_identity() {
            for i in 0..DENSE_GRID {
                let u = i as f64 / (DENSE_GRID - 1) as f64;
                let d = self.shape.derivative(u);
                if !(d > 0.0) {
                    return Err(Error::NonMonotoneBranch(format!(
                        "derivative {d:.4} at relative position {u:.4} of [{}, {}]",
                        self.a, self.b
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Inverts a branch at `y` with an explicit tolerance; `|T(x) - y| <= tol` on success.
pub fn invert_branch(map: &BranchMap, y: f64, tol: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&y) {
        return Err(Error::InvalidConfig(format!("inverse branch evaluated at y = {y} outside [0, 1]")));
    }
    let u = map.shape.invert(y, tol)?;
    Ok(map.a + map.len() * u)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic() -> BranchMap {
        BranchMap::new(0.0, 1.0, BranchShape::Polynomial(vec![0.0, 7.0 / 8.0, 1.0 / 8.0])).unwrap()
    }

    #[test]
    fn affine_inverse_is_linear() {
        let m = BranchMap::affine(0.0, 0.25);
        assert!((invert_branch(&m, 0.5, 1e-12).unwrap() - 0.125).abs() < 1e-15);
    }

    #[test]
    fn quadratic_inverse_endpoint_and_interior() {
        let m = quadratic();
        assert!((invert_branch(&m, 1.0, 1e-12).unwrap() - 1.0).abs() < 1e-12);
        // x^2 + 7x - 4 = 0
        let oracle = (-7.0 + 65f64.sqrt()) / 2.0;
        let x = invert_branch(&m, 0.5, 1e-12).unwrap();
        assert!((x - oracle).abs() < 1e-11, "{x} vs {oracle}");
        assert!((x - 0.53113).abs() < 1e-5);
    }

    #[test]
    fn series_shape_is_normalized() {
        let m = BranchMap::new(0.0, 1.0, BranchShape::series()).unwrap();
        assert!(m.forward(0.0).abs() < 1e-12);
        assert!((m.forward(1.0) - 1.0).abs() < 1e-10);
        // derivative is h / 6 with h >= 6 - pi^2/6
        let lower = (6.0 - PI * PI / 6.0) / 6.0;
        assert!(m.min_shape_derivative() >= lower - 1e-12);
        assert!(m.min_shape_derivative() >= 0.5);
    }

    #[test]
    fn series_derivative_matches_finite_differences() {
        // few terms, so the step resolves the highest frequency
        let shape = BranchShape::Series { base: 6.0, terms: 8 };
        let h = 1e-7;
        for i in 1..50 {
            let u = i as f64 / 50.0;
            let fd = (shape.value(u + h) - shape.value(u - h)) / (2.0 * h);
            assert!((fd - shape.derivative(u)).abs() < 1e-4, "u = {u}");
        }
    }

    #[test]
    fn series_inverse_round_trips() {
        let m = BranchMap::new(0.2, 0.7, BranchShape::series()).unwrap();
        for i in 0..=40 {
            let y = i as f64 / 40.0;
            let x = invert_branch(&m, y, 1e-12).unwrap();
            assert!((m.forward(x) - y).abs() <= 1e-12);
            assert!((0.2..=0.7).contains(&x));
        }
    }

    #[test]
    fn non_monotone_polynomial_is_rejected() {
        // 3u^2 - 2u: fixes 0 and 1 but decreases near 0
        let err = BranchMap::new(0.0, 1.0, BranchShape::Polynomial(vec![0.0, -2.0, 3.0])).unwrap_err();
        assert_eq!(err.tag(), "non-monotone-branch");
    }

    #[test]
    fn psi_of_affine_branch_is_log_length() {
        let m = BranchMap::affine(0.5, 0.75);
        assert!((m.psi(0.6) + 4f64.ln()).abs() < 1e-15);
    }
}
