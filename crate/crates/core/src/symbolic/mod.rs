//! Admissible-word combinatorics of the random subshift.
//!
//! Words are 1-based: symbol `s` at step `k` satisfies `1 <= s <= l_k`, and
//! consecutive symbols must be allowed by the transition matrix of the
//! earlier step.

mod potential;
mod table;

pub use potential::{
    birkhoff_sum, holder_coarsening, variation_profile, CoarseTable, Extension, ExtensionRule, PotentialKind,
    PotentialSpec, VariationBound, WeightRule, DEFAULT_SAMPLES,
};
pub use table::WordTable;

use crate::base::FiberSequence;
use crate::error::{Error, Result};

/// Default cap on the number of words any single enumeration may materialize.
pub const DEFAULT_BUDGET: usize = 4_000_000;

/// A finite admissible word `v_0 … v_{n-1}` read from fiber step `start`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CylinderWord {
    pub start: usize,
    pub symbols: Vec<u32>,
}

impl CylinderWord {
    pub fn new(start: usize, symbols: Vec<u32>) -> Self {
        CylinderWord { start, symbols }
    }

    pub fn depth(&self) -> usize {
        self.symbols.len()
    }

    pub fn last(&self) -> Option<u32> {
        self.symbols.last().copied()
    }

    pub fn is_admissible(&self, fiber: &FiberSequence) -> bool {
        if self.start + self.depth() > fiber.horizon() {
            return false;
        }
        let in_range = self
            .symbols
            .iter()
            .enumerate()
            .all(|(j, &s)| s >= 1 && s as usize <= fiber.alphabet(self.start + j));
        in_range
            && self
                .symbols
                .windows(2)
                .enumerate()
                .all(|(j, w)| fiber.step(self.start + j).matrix.allows(w[0], w[1]))
    }

    pub fn check(&self, fiber: &FiberSequence) -> Result<()> {
        fiber.check_range(self.start, self.depth())?;
        if !self.is_admissible(fiber) {
            return Err(Error::InconsistentFiber(format!(
                "word {:?} at step {} is not admissible",
                self.symbols, self.start
            )));
        }
        Ok(())
    }

    /// Space-separated symbols, as used in dump files.
    pub fn label(&self) -> String {
        let parts: Vec<String> = self.symbols.iter().map(u32::to_string).collect();
        parts.join(" ")
    }
}

/// Number of admissible words of depth `n` from `start`, by backward path counting.
///
/// Returned as `f64` so that oversized requests can be reported without overflow.
pub fn count_words(fiber: &FiberSequence, start: usize, n: usize) -> Result<f64> {
    fiber.check_range(start, n)?;
    if n == 0 {
        return Ok(1.0);
    }
    let last = start + n - 1;
    let mut counts = vec![1.0_f64; fiber.alphabet(last)];
    for k in (start..last).rev() {
        let m = &fiber.step(k).matrix;
        counts = (0..m.rows())
            .map(|i| (0..m.cols()).filter(|&j| m.get(i, j)).map(|j| counts[j]).sum())
            .collect();
    }
    Ok(counts.iter().sum())
}

pub(crate) fn check_budget(fiber: &FiberSequence, start: usize, n: usize, budget: usize) -> Result<f64> {
    let estimate = count_words(fiber, start, n)?;
    if estimate > budget as f64 {
        return Err(Error::BudgetExceeded { estimate, budget });
    }
    Ok(estimate)
}

/// All admissible words of depth `n` starting at `start`, in lexicographic order.
pub fn enumerate_cylinders(fiber: &FiberSequence, start: usize, n: usize, budget: usize) -> Result<Vec<CylinderWord>> {
    check_budget(fiber, start, n, budget)?;
    if n == 0 {
        return Ok(vec![CylinderWord::new(start, Vec::new())]);
    }
    let mut words: Vec<Vec<u32>> = (1..=fiber.alphabet(start) as u32).map(|s| vec![s]).collect();
    for j in 1..n {
        let m = &fiber.step(start + j - 1).matrix;
        let l = fiber.alphabet(start + j) as u32;
        let mut next = Vec::with_capacity(words.len() * l as usize);
        for w in words {
            let s = *w.last().unwrap();
            for t in 1..=l {
                if m.allows(s, t) {
                    let mut v = Vec::with_capacity(n);
                    v.extend_from_slice(&w);
                    v.push(t);
                    next.push(v);
                }
            }
        }
        words = next;
    }
    Ok(words.into_iter().map(|v| CylinderWord::new(start, v)).collect())
}

/// One-symbol admissible right extensions of `word`, in lexicographic order.
pub fn children(fiber: &FiberSequence, word: &CylinderWord) -> Result<Vec<CylinderWord>> {
    let k = word.start + word.depth();
    if k >= fiber.horizon() {
        return Err(Error::HorizonExhausted { needed: k + 1, available: fiber.horizon() });
    }
    let l = fiber.alphabet(k) as u32;
    let allowed: Vec<u32> = match word.last() {
        None => (1..=l).collect(),
        Some(s) => {
            let m = &fiber.step(k - 1).matrix;
            (1..=l).filter(|&t| m.allows(s, t)).collect()
        }
    };
    Ok(allowed
        .into_iter()
        .map(|t| {
            let mut symbols = word.symbols.clone();
            symbols.push(t);
            CylinderWord::new(word.start, symbols)
        })
        .collect())
}

/// The word `s * s'` of length `n` from `step`: first symbol `s`, last symbol `s'`,
/// with the lexicographically smallest admissible middle.
pub fn connection_word(fiber: &FiberSequence, step: usize, s: u32, s_prime: u32, n: usize) -> Result<CylinderWord> {
    if n < 2 {
        return Err(Error::InvalidConfig("a connection word needs length at least 2".into()));
    }
    fiber.check_range(step, n)?;
    let last = step + n - 1;
    if s == 0 || s as usize > fiber.alphabet(step) || s_prime == 0 || s_prime as usize > fiber.alphabet(last) {
        return Err(Error::InvalidConfig(format!("symbols {s}, {s_prime} out of range")));
    }
    // reach[j][t]: symbol t+1 at position j can reach s' at position n-1
    let mut reach: Vec<Vec<bool>> = vec![Vec::new(); n];
    reach[n - 1] = (1..=fiber.alphabet(last) as u32).map(|t| t == s_prime).collect();
    for j in (0..n - 1).rev() {
        let m = &fiber.step(step + j).matrix;
        reach[j] = (0..m.rows()).map(|i| (0..m.cols()).any(|c| m.get(i, c) && reach[j + 1][c])).collect();
    }
    if !reach[0][s as usize - 1] {
        return Err(Error::InconsistentFiber(format!(
            "no admissible path of length {n} from {s} at step {step} to {s_prime}"
        )));
    }
    let mut symbols = vec![s];
    for j in 1..n {
        let m = &fiber.step(step + j - 1).matrix;
        let prev = symbols[j - 1];
        let next = (1..=fiber.alphabet(step + j) as u32)
            .find(|&t| m.allows(prev, t) && reach[j][t as usize - 1])
            .expect("reachability table guarantees a continuation");
        symbols.push(next);
    }
    Ok(CylinderWord::new(step, symbols))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base::{BaseConfig, BaseKind, FiberModel, MatrixRule, SymbolFiber};

    fn fullshift(l: usize, horizon: usize) -> FiberSequence {
        let config = BaseConfig { kind: BaseKind::Deterministic { pattern: vec![0] }, horizon, seed: 0, l_max: 8 };
        let model = FiberModel::Table { symbols: vec![SymbolFiber::uniform(l)], matrices: MatrixRule::Full };
        FiberSequence::sample(&config, &model).unwrap()
    }

    fn gamma(trace: Vec<u32>) -> FiberSequence {
        let config = BaseConfig { kind: BaseKind::Telescoping, horizon: 1, seed: 0, l_max: 16 };
        FiberSequence::from_trace(&config, &FiberModel::Gamma, trace).unwrap()
    }

    #[test]
    fn fullshift_depth_three_is_lexicographic() {
        let words = enumerate_cylinders(&fullshift(2, 5), 0, 3, DEFAULT_BUDGET).unwrap();
        assert_eq!(words.len(), 8);
        let syms: Vec<Vec<u32>> = words.iter().map(|w| w.symbols.clone()).collect();
        let mut sorted = syms.clone();
        sorted.sort();
        assert_eq!(syms, sorted);
        assert_eq!(syms[0], vec![1, 1, 1]);
        assert_eq!(syms[7], vec![2, 2, 2]);
    }

    #[test]
    fn gamma_three_two_has_five_words() {
        let f = gamma(vec![3, 2, 4, 4]);
        let words = enumerate_cylinders(&f, 0, 2, DEFAULT_BUDGET).unwrap();
        // brute force over the 3x2 matrix: rows 1 and 2 are full, row 3 only reaches column 2
        let mut brute = 0;
        for a in 1..=3u32 {
            for b in 1..=2u32 {
                if a < 3 || b == 2 {
                    brute += 1;
                }
            }
        }
        assert_eq!(words.len(), brute);
        assert_eq!(words.len(), 5);
    }

    #[test]
    fn budget_is_enforced() {
        let err = enumerate_cylinders(&fullshift(2, 30), 0, 25, 1000).unwrap_err();
        match err {
            Error::BudgetExceeded { estimate, .. } => assert_eq!(estimate, 2f64.powi(25)),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn children_counts() {
        let f = fullshift(3, 6);
        let w = CylinderWord::new(0, vec![2, 1]);
        assert_eq!(children(&f, &w).unwrap().len(), 3);
        // gamma: 4 -> 3 forces the last row, so symbol 4 has a single child 3
        let g = gamma(vec![4, 3, 5, 5]);
        let kids = children(&g, &CylinderWord::new(0, vec![4])).unwrap();
        assert_eq!(kids.len(), 1);
        assert_eq!(kids[0].symbols, vec![4, 3]);
    }

    #[test]
    fn connection_word_fullshift() {
        let w = connection_word(&fullshift(2, 6), 0, 2, 1, 4).unwrap();
        assert_eq!(w.symbols, vec![2, 1, 1, 1]);
    }

    #[test]
    fn connection_word_respects_forced_row() {
        let g = gamma(vec![4, 3, 2, 5, 5]);
        let w = connection_word(&g, 0, 4, 1, 4).unwrap();
        assert!(w.is_admissible(&g));
        assert_eq!(w.symbols, vec![4, 3, 2, 1]);
    }

    #[test]
    fn connection_word_without_path_is_inconsistent() {
        let g = gamma(vec![4, 3, 2, 5]);
        // 4 -> 3 -> 2 is forced, so 4 cannot reach 1 at position 2
        let err = connection_word(&g, 0, 4, 1, 3).unwrap_err();
        assert_eq!(err.tag(), "inconsistent-fiber");
    }
}
