use proptest::prelude::*;

use randgibbs::experiment::{run_t, Prepared, RunConfig};
use randgibbs::multifractal::{legendre_at, linspace, CurveKind, SpectrumCurve};
use randgibbs::scenarios::load_scenario;
use randgibbs::symbolic::{Extension, PotentialSpec, DEFAULT_BUDGET};
use randgibbs::thermo::{gibbs_cylinder_weights, log_partition_function};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn cookie_t_matches_closed_form(p in 0.05f64..0.95) {
        let cfg = RunConfig {
            scenario: format!("cookie_cutter(p={p},{}; r=1/3,1/3)", 1.0 - p),
            depths: Some(vec![4, 6, 8]),
            q_grid: vec![-2.0, 0.0, 1.0, 3.0],
            tail_q: vec![],
            ..Default::default()
        };
        let prep = Prepared::new(&cfg).unwrap();
        let t = run_t(&prep.scenario, &prep.fibers[0], &prep.depths, &cfg).unwrap();
        for (&q, &y) in t.curve.x.iter().zip(&t.curve.y) {
            let exact = -(p.powf(q) + (1.0 - p).powf(q)).ln() / 3f64.ln();
            prop_assert!((y - exact).abs() < 1e-6, "q={} T={} exact={}", q, y, exact);
        }
    }

    #[test]
    fn bernoulli_weights_are_products(p in 0.05f64..0.95, word in proptest::collection::vec(1u32..=2, 5)) {
        let s = load_scenario(&format!("cookie_cutter(p={p},{}; r=1/3,1/3)", 1.0 - p)).unwrap();
        let f = s.sample_fiber().unwrap();
        let w = gibbs_cylinder_weights(&f, &s.phi, 5, &Extension::default(), DEFAULT_BUDGET).unwrap();
        let i = w.table().index_of(&word).unwrap();
        let expected: f64 = word.iter().map(|&s| if s == 1 { p } else { 1.0 - p }).product();
        prop_assert!((w.weights()[i] - expected).abs() < 1e-12);
    }

    #[test]
    fn constant_shift_moves_log_partition_linearly(c in -3.0f64..3.0, n in 1usize..7) {
        let s = load_scenario("example_three_state").unwrap();
        let f = s.sample_fiber().unwrap();
        let ext = Extension::default();
        let base = log_partition_function(&f, &s.phi, n, &ext, DEFAULT_BUDGET).unwrap();
        let shifted = log_partition_function(&f, &s.phi.shifted(-c), n, &ext, DEFAULT_BUDGET).unwrap();
        prop_assert!((shifted - base - n as f64 * c).abs() < 1e-9);
        let larger = log_partition_function(&f, &PotentialSpec::constant(c.abs() + 1.0), n, &ext, DEFAULT_BUDGET).unwrap();
        let smaller = log_partition_function(&f, &PotentialSpec::constant(-c.abs()), n, &ext, DEFAULT_BUDGET).unwrap();
        prop_assert!(larger > smaller);
    }

    #[test]
    fn legendre_of_a_parabola(a in 0.2f64..1.5, b in 0.05f64..0.5, d in -0.5f64..0.5) {
        // T(q) = a (q - 1) - b (q - 1)^2 has T*(x) = x - (x - a)^2 / (4b) for slopes inside the grid
        let q = linspace(-20.0, 20.0, 4001);
        let y = q.iter().map(|&x| a * (x - 1.0) - b * (x - 1.0).powi(2)).collect();
        let curve = SpectrumCurve::new(CurveKind::T, q, y).unwrap();
        let at = a + d;
        let exact = at - d * d / (4.0 * b);
        prop_assert!((legendre_at(&curve, at).value - exact).abs() < 1e-3);
    }
}
