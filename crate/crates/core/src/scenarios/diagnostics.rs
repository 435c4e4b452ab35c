use std::collections::{BTreeMap, HashMap};

use super::{margin_term, sup_psi, Scenario};
use crate::base::{mixing_time, sample_base_trace, BaseConfig, FiberSequence};
use crate::multifractal::contraction_in_mean;

/// Base steps drawn for the empirical margin.
pub const DIAGNOSTIC_STEPS: usize = 10_000;

/// `∫ [log a_0 − log Σ|U^s|] dP`, exact and estimated.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginEstimate {
    pub exact: Option<f64>,
    pub empirical: f64,
    pub std_error: f64,
    pub steps: usize,
    /// The margin vanishes: the attractor may carry Lebesgue measure.
    pub boundary: bool,
}

impl MarginEstimate {
    /// `|empirical − exact|` in standard errors.
    pub fn z_score(&self) -> Option<f64> {
        let e = self.exact?;
        if self.std_error == 0.0 {
            return Some(if self.empirical == e { 0.0 } else { f64::INFINITY });
        }
        Some((self.empirical - e).abs() / self.std_error)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub scenario: String,
    /// `c_ψ` along the realized fiber.
    pub c_psi: f64,
    pub c_psi_exact: Option<f64>,
    pub margin: MarginEstimate,
    /// Mixing time `M` → number of start steps.
    pub mixing: BTreeMap<usize, usize>,
    /// Start steps whose products never became positive within the horizon.
    pub mixing_unresolved: usize,
    pub truncations: usize,
    pub truncation_rate: f64,
    /// Empirical `E[log l]` over the diagnostic steps.
    pub mean_log_l: f64,
    /// `log l_max`, the bound `E[log l]` is compared against for truncated bases.
    pub log_l_max: f64,
    pub a0: Vec<(u32, f64)>,
}

impl Diagnostics {
    /// `key,value` rows for reports.
    pub fn rows(&self) -> Vec<(String, String)> {
        let opt = |x: Option<f64>| x.map_or("nan".to_string(), |v| format!("{v:.12e}"));
        let mut rows = vec![
            ("c_psi".to_string(), format!("{:.12e}", self.c_psi)),
            ("c_psi_exact".to_string(), opt(self.c_psi_exact)),
            ("margin_exact".to_string(), opt(self.margin.exact)),
            ("margin_empirical".to_string(), format!("{:.12e}", self.margin.empirical)),
            ("margin_std_error".to_string(), format!("{:.12e}", self.margin.std_error)),
            ("margin_steps".to_string(), self.margin.steps.to_string()),
            ("margin_boundary".to_string(), self.margin.boundary.to_string()),
            ("truncations".to_string(), self.truncations.to_string()),
            ("truncation_rate".to_string(), format!("{:.12e}", self.truncation_rate)),
            ("mean_log_l".to_string(), format!("{:.12e}", self.mean_log_l)),
            ("log_l_max".to_string(), format!("{:.12e}", self.log_l_max)),
            ("mixing_unresolved".to_string(), self.mixing_unresolved.to_string()),
        ];
        for (m, c) in &self.mixing {
            rows.push((format!("mixing_time_{m}"), c.to_string()));
        }
        for (s, a) in &self.a0 {
            rows.push((format!("a0_{s}"), format!("{a:.12e}")));
        }
        rows
    }
}

/// Contraction, expansiveness margin, mixing and truncation statistics of a scenario.
///
/// The margin is estimated over [`DIAGNOSTIC_STEPS`] fresh base steps drawn with the
/// scenario seed; mixing times come from the given fiber.
pub fn scenario_diagnostics(scenario: &Scenario, fiber: &FiberSequence) -> Diagnostics {
    let config = BaseConfig { horizon: DIAGNOSTIC_STEPS, ..scenario.base.clone() };
    let (trace, truncations) = sample_base_trace(&config, DIAGNOSTIC_STEPS).expect("scenario base was validated");
    let mut per_symbol: HashMap<u32, (f64, f64)> = HashMap::new();
    let mut terms = Vec::with_capacity(trace.len());
    let mut log_l = 0.0;
    for &s in &trace {
        let (m, ll) = *per_symbol.entry(s).or_insert_with(|| {
            let f = scenario.model.symbol_fiber(s).expect("scenario model was validated");
            (margin_term(&f), (f.branches.len() as f64).ln())
        });
        terms.push(m);
        log_l += ll;
    }
    let n = terms.len() as f64;
    let mean = terms.iter().sum::<f64>() / n;
    let var = terms.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / (n - 1.0);
    let exact = scenario.oracle.margin;
    let std_error = (var / n).sqrt();
    let boundary = match exact {
        Some(e) => e.abs() < 1e-12,
        None => mean.abs() <= 3.0 * std_error,
    };

    let mut mixing = BTreeMap::new();
    let mut unresolved = 0;
    for k in 0..fiber.horizon() {
        match mixing_time(fiber, k) {
            Ok(m) => *mixing.entry(m).or_insert(0) += 1,
            Err(_) => unresolved += 1,
        }
    }

    let a0 = scenario
        .base_symbols()
        .into_iter()
        .filter_map(|s| scenario.model.symbol_fiber(s).ok().map(|f| (s, f.a0)))
        .collect();
    Diagnostics {
        scenario: scenario.name.clone(),
        c_psi: contraction_in_mean(fiber),
        c_psi_exact: scenario.oracle.c_psi.or_else(|| scenario.average(sup_psi).map(|x| -x)),
        margin: MarginEstimate { exact, empirical: mean, std_error, steps: terms.len(), boundary },
        mixing,
        mixing_unresolved: unresolved,
        truncations,
        truncation_rate: truncations as f64 / n,
        mean_log_l: log_l / n,
        log_l_max: (scenario.base.l_max as f64).ln(),
        a0,
    }
}
