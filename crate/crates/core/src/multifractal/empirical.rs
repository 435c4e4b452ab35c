use rayon::prelude::*;

use super::{CurveKind, SpectrumCurve};
use crate::error::{Error, Result};
use crate::thermo::GibbsWeights;

/// Largest admissible ratio between the longest cell and the smallest radius.
pub const MAX_CELL_RATIO: f64 = 0.12;

/// Greedy left-to-right packing of disjoint closed balls of one radius.
#[derive(Debug, Clone, PartialEq)]
pub struct Packing {
    pub radius: f64,
    pub centers: Vec<f64>,
    /// Mass of each ball: total weight of the cells it meets.
    pub masses: Vec<f64>,
}

struct Cells {
    left: Vec<f64>,
    right: Vec<f64>,
    prefix: Vec<f64>,
}

impl Cells {
    fn new(weights: &GibbsWeights) -> Self {
        let t = weights.table();
        let mut order: Vec<usize> = (0..t.len()).collect();
        order.sort_by(|&a, &b| t.left(a).total_cmp(&t.left(b)));
        let mut prefix = Vec::with_capacity(order.len() + 1);
        prefix.push(0.0);
        let mut acc = 0.0;
        for &i in &order {
            acc += weights.weights()[i];
            prefix.push(acc);
        }
        Cells {
            left: order.iter().map(|&i| t.left(i)).collect(),
            right: order.iter().map(|&i| t.right(i)).collect(),
            prefix,
        }
    }

    /// Total weight of cells meeting `[a, b]`.
    fn mass(&self, a: f64, b: f64) -> f64 {
        let lo = self.right.partition_point(|&r| r < a);
        let hi = self.left.partition_point(|&l| l <= b);
        if hi <= lo {
            0.0
        } else {
            self.prefix[hi] - self.prefix[lo]
        }
    }

    fn max_len(&self) -> f64 {
        self.left.iter().zip(&self.right).map(|(l, r)| r - l).fold(0.0, f64::max)
    }

    fn pack(&self, r: f64) -> Packing {
        let mut centers = Vec::new();
        let mut last = f64::NEG_INFINITY;
        for (l, rt) in self.left.iter().zip(&self.right) {
            let c = 0.5 * (l + rt);
            if c - last > 2.0 * r {
                centers.push(c);
                last = c;
            }
        }
        let masses = centers.iter().map(|&c| self.mass(c - r, c + r)).collect();
        Packing { radius: r, centers, masses }
    }
}

fn check_radii(cells: &Cells, radii: &[f64]) -> Result<()> {
    if radii.len() < 2 || radii.iter().any(|&r| !(r > 0.0)) {
        return Err(Error::InvalidConfig("need at least two positive radii".into()));
    }
    let min_r = radii.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_len = cells.max_len();
    if max_len > MAX_CELL_RATIO * min_r {
        return Err(Error::TooShallowWeights { max_len, min_radius: min_r });
    }
    Ok(())
}

fn packings(cells: &Cells, radii: &[f64]) -> Result<Vec<Packing>> {
    let packs: Vec<Packing> = radii.par_iter().map(|&r| cells.pack(r)).collect();
    if packs.iter().any(|p| p.centers.is_empty()) {
        return Err(Error::DegenerateSupport("no ball could be packed".into()));
    }
    Ok(packs)
}

/// Packing of radius `r` over the cells of `weights`.
pub fn pack_balls(weights: &GibbsWeights, r: f64) -> Result<Packing> {
    let cells = Cells::new(weights);
    let p = cells.pack(r);
    if p.centers.is_empty() {
        return Err(Error::DegenerateSupport("no ball could be packed".into()));
    }
    Ok(p)
}

/// Least-squares slope and its standard error.
fn fit_slope(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    if x.len() < 3 {
        return (slope, 0.0);
    }
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - my - slope * (a - mx)).powi(2)).sum();
    (slope, (rss / (n - 2.0) / sxx).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalLq {
    pub curve: SpectrumCurve,
    /// Zero-mass balls left out of the negative-q sums, per radius.
    pub excluded: Vec<usize>,
    /// Balls packed per radius.
    pub ball_counts: Vec<usize>,
}

/// `τ̂(q)`: slope of `log Σ μ(B_i)^q` against `log r` over the radius grid.
pub fn empirical_lq(weights: &GibbsWeights, radii: &[f64], q_grid: &[f64]) -> Result<EmpiricalLq> {
    let cells = Cells::new(weights);
    check_radii(&cells, radii)?;
    let packs = packings(&cells, radii)?;
    let log_r: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let fits: Vec<(f64, f64)> = q_grid
        .par_iter()
        .map(|&q| {
            let ys: Vec<f64> = packs
                .iter()
                .map(|p| {
                    let logs: Vec<f64> = p
                        .masses
                        .iter()
                        .filter(|&&m| m > 0.0 || q >= 0.0)
                        .map(|&m| if q == 0.0 { 0.0 } else { q * m.ln() })
                        .collect();
                    crate::thermo::log_sum_exp(&logs)
                })
                .collect();
            fit_slope(&log_r, &ys)
        })
        .collect();
    let mut curve = SpectrumCurve::new(CurveKind::TauHat, q_grid.to_vec(), fits.iter().map(|f| f.0).collect())?;
    curve.uncertainty = fits.iter().map(|f| f.1).collect();
    Ok(EmpiricalLq {
        curve,
        excluded: packs.iter().map(|p| p.masses.iter().filter(|&&m| m <= 0.0).count()).collect(),
        ball_counts: packs.iter().map(|p| p.centers.len()).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LdSpectrum {
    pub lower: SpectrumCurve,
    pub upper: SpectrumCurve,
    /// `log N_r(d) / -log r`, one row per radius.
    pub ratios: Vec<Vec<f64>>,
}

/// Large-deviation spectra: for each radius and `d`, the number of packed
/// balls with `r^{d+ε} ≤ μ(B) ≤ r^{d-ε}`, as the exponent `log N / -log r`.
/// Lower and upper curves are the minimum and maximum of the exponent over the
/// finer half of the radii (`-∞` when no ball qualifies).
pub fn ld_spectrum(weights: &GibbsWeights, radii: &[f64], d_grid: &[f64], eps: f64) -> Result<LdSpectrum> {
    if !(eps > 0.0) {
        return Err(Error::InvalidConfig(format!("window half-width {eps} must be positive")));
    }
    let cells = Cells::new(weights);
    check_radii(&cells, radii)?;
    let packs = packings(&cells, radii)?;
    let ratios: Vec<Vec<f64>> = packs
        .par_iter()
        .map(|p| {
            let lr = p.radius.ln();
            let local: Vec<f64> = p.masses.iter().filter(|&&m| m > 0.0).map(|m| m.ln() / lr).collect();
            d_grid
                .iter()
                .map(|&d| {
                    let count = local.iter().filter(|&&a| (a - d).abs() <= eps).count();
                    if count == 0 {
                        f64::NEG_INFINITY
                    } else {
                        (count as f64).ln() / -lr
                    }
                })
                .collect()
        })
        .collect();
    let mut order: Vec<usize> = (0..radii.len()).collect();
    order.sort_by(|&a, &b| radii[a].total_cmp(&radii[b]));
    let fine = &order[..radii.len().div_ceil(2)];
    let pick = |f: fn(f64, f64) -> f64, init: f64| -> Vec<f64> {
        (0..d_grid.len()).map(|j| fine.iter().map(|&i| ratios[i][j]).fold(init, f)).collect()
    };
    Ok(LdSpectrum {
        lower: SpectrumCurve::new(CurveKind::LdLower, d_grid.to_vec(), pick(f64::min, f64::INFINITY))?,
        upper: SpectrumCurve::new(CurveKind::LdUpper, d_grid.to_vec(), pick(f64::max, f64::NEG_INFINITY))?,
        ratios,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base::{BaseConfig, BaseKind, FiberModel, FiberSequence, MatrixRule, SymbolFiber};
    use crate::geometry::BranchMap;
    use crate::symbolic::{Extension, PotentialSpec, WeightRule, DEFAULT_BUDGET};
    use crate::thermo::gibbs_cylinder_weights;

    fn weights(p: f64, depth: usize) -> GibbsWeights {
        let config = BaseConfig { kind: BaseKind::Deterministic { pattern: vec![0] }, horizon: depth, seed: 0, l_max: 8 };
        let sf = SymbolFiber { branches: vec![BranchMap::affine(0.0, 1.0 / 3.0), BranchMap::affine(2.0 / 3.0, 1.0)], a0: 1.0 };
        let f = FiberSequence::sample(&config, &FiberModel::Table { symbols: vec![sf], matrices: MatrixRule::Full }).unwrap();
        let phi = PotentialSpec::symbol_log_weights(WeightRule::Table(vec![vec![p.ln(), (1.0 - p).ln()]]));
        gibbs_cylinder_weights(&f, &phi, depth, &Extension::default(), DEFAULT_BUDGET).unwrap()
    }

    fn radii(a: i32, b: i32) -> Vec<f64> {
        (a..=b).map(|k| 3f64.powi(-k)).collect()
    }

    #[test]
    fn one_ball_per_cylinder_on_the_middle_third_set() {
        let w = weights(0.25, 10);
        let p = pack_balls(&w, 3f64.powi(-4)).unwrap();
        assert_eq!(p.centers.len(), 16);
        let mut masses = p.masses.clone();
        masses.sort_by(f64::total_cmp);
        // cylinder masses of depth 4: 0.25^j 0.75^(4-j) with multiplicity C(4, j)
        let mut expected: Vec<f64> = (0..16u32)
            .map(|m| {
                let j = m.count_ones() as i32;
                0.25f64.powi(j) * 0.75f64.powi(4 - j)
            })
            .collect();
        expected.sort_by(f64::total_cmp);
        for (a, b) in masses.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_tau_matches_closed_form() {
        let w = weights(0.5, 14);
        let lq = empirical_lq(&w, &radii(6, 12), &[0.0, 1.0, 2.0]).unwrap();
        let a = 2f64.ln() / 3f64.ln();
        assert!((lq.curve.y[2] - a).abs() < 0.05);
        assert!(lq.curve.y[1].abs() < 0.05);
        assert!((lq.curve.y[0] + a).abs() < 0.05);
    }

    #[test]
    fn shallow_weights_are_rejected() {
        let w = weights(0.5, 6);
        let err = empirical_lq(&w, &radii(5, 8), &[1.0]).unwrap_err();
        assert_eq!(err.tag(), "too-shallow-weights");
    }

    #[test]
    fn uniform_ld_is_a_single_point() {
        let w = weights(0.5, 14);
        let a = 2f64.ln() / 3f64.ln();
        let ld = ld_spectrum(&w, &radii(5, 12), &[a - 0.2, a, a + 0.2], 0.01).unwrap();
        assert_eq!(ld.lower.y[0], f64::NEG_INFINITY);
        assert_eq!(ld.upper.y[2], f64::NEG_INFINITY);
        assert!((ld.lower.y[1] - a).abs() < 1e-9);
        assert!((ld.upper.y[1] - a).abs() < 1e-9);
    }

    #[test]
    fn slope_fit_recovers_a_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [0.5, 1.0, 1.5, 2.0];
        let (s, se) = fit_slope(&x, &y);
        assert!((s - 0.5).abs() < 1e-15);
        assert!(se < 1e-12);
    }
}
