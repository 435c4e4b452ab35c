use super::potential::extension_point;
use super::{check_budget, CylinderWord, Extension, PotentialSpec};
use crate::base::FiberSequence;
use crate::error::{Error, Result};

/// All depth-`n` words from a step, with their intervals, extension points and
/// Birkhoff sums of several potentials, built in one backward sweep.
///
/// Words are grown to the left (`v = s·w`), so every inverse branch is applied
/// once per word rather than once per symbol. Rows are in lexicographic order.
#[derive(Debug, Clone)]
pub struct WordTable {
    start: usize,
    depth: usize,
    words: Vec<u32>,
    left: Vec<f64>,
    right: Vec<f64>,
    point: Vec<f64>,
    sums: Vec<Vec<f64>>,
}

struct Level {
    sym: Vec<u32>,
    x: Vec<f64>,
    left: Vec<f64>,
    right: Vec<f64>,
    sums: Vec<Vec<f64>>,
    heads: Vec<u32>,
    // index of the suffix word in the previous level
    parent: Vec<u32>,
}

impl WordTable {
    pub fn build(
        fiber: &FiberSequence,
        start: usize,
        depth: usize,
        potentials: &[&PotentialSpec],
        ext: &Extension,
        budget: usize,
    ) -> Result<Self> {
        if depth == 0 {
            return Err(Error::InvalidConfig("word tables need depth at least 1".into()));
        }
        fiber.check_range(start, depth)?;
        let estimate = check_budget(fiber, start, depth, budget)?;
        let np = potentials.len();
        let width = potentials.iter().map(|p| p.head_len()).max().unwrap_or(1).max(1);
        let last = start + depth - 1;

        let l = fiber.alphabet(last);
        let mut cur = Level {
            sym: Vec::with_capacity(l),
            x: Vec::with_capacity(l),
            left: Vec::with_capacity(l),
            right: Vec::with_capacity(l),
            sums: vec![Vec::with_capacity(l); np],
            heads: Vec::with_capacity(l * width),
            parent: Vec::new(),
        };
        let step = fiber.step(last);
        for s in 1..=l as u32 {
            let (y, tail) = extension_point(fiber, last + 1, Some(s), ext, width - 1);
            let br = step.branch(s);
            let x = br.inverse(y);
            let h0 = cur.heads.len();
            cur.heads.push(s);
            cur.heads.extend(tail.iter().take(width - 1));
            cur.heads.resize(h0 + width, 0);
            for (j, p) in potentials.iter().enumerate() {
                cur.sums[j].push(p.eval(fiber, last, s, x, &cur.heads[h0..h0 + width])?);
            }
            cur.sym.push(s);
            cur.x.push(x);
            cur.left.push(br.a);
            cur.right.push(br.b);
        }

        let mut chain: Vec<(Vec<u32>, Vec<u32>)> = Vec::with_capacity(depth);
        for k in (start..last).rev() {
            let step = fiber.step(k);
            // rows of the previous level are sorted, so equal first symbols are contiguous
            let lnext = fiber.alphabet(k + 1);
            let mut ranges = vec![(0usize, 0usize); lnext + 1];
            let mut i = 0;
            while i < cur.sym.len() {
                let s = cur.sym[i] as usize;
                let j0 = i;
                while i < cur.sym.len() && cur.sym[i] as usize == s {
                    i += 1;
                }
                ranges[s] = (j0, i);
            }
            let cap = cur.sym.len() * step.alphabet();
            let mut next = Level {
                sym: Vec::with_capacity(cap),
                x: Vec::with_capacity(cap),
                left: Vec::with_capacity(cap),
                right: Vec::with_capacity(cap),
                sums: vec![Vec::with_capacity(cap); np],
                heads: Vec::with_capacity(cap * width),
                parent: Vec::with_capacity(cap),
            };
            for s in 1..=step.alphabet() as u32 {
                let br = step.branch(s);
                for t in 1..=lnext as u32 {
                    if !step.matrix.allows(s, t) {
                        continue;
                    }
                    let (a, b) = ranges[t as usize];
                    for w in a..b {
                        let x = br.inverse(cur.x[w]);
                        let h0 = next.heads.len();
                        next.heads.push(s);
                        next.heads.extend_from_slice(&cur.heads[w * width..w * width + width - 1]);
                        for (j, p) in potentials.iter().enumerate() {
                            let v = p.eval(fiber, k, s, x, &next.heads[h0..h0 + width])?;
                            next.sums[j].push(cur.sums[j][w] + v);
                        }
                        next.sym.push(s);
                        next.x.push(x);
                        next.left.push(br.inverse(cur.left[w]));
                        next.right.push(br.inverse(cur.right[w]));
                        next.parent.push(w as u32);
                    }
                }
            }
            chain.push((std::mem::take(&mut cur.sym), std::mem::take(&mut cur.parent)));
            cur = next;
        }

        let n = cur.sym.len();
        debug_assert_eq!(n as f64, estimate);
        let mut words = vec![0u32; n * depth];
        for i in 0..n {
            let row = &mut words[i * depth..(i + 1) * depth];
            row[0] = cur.sym[i];
            let mut idx = if depth > 1 { cur.parent[i] as usize } else { 0 };
            for (pos, (syms, parents)) in chain.iter().rev().enumerate() {
                row[pos + 1] = syms[idx];
                if pos + 2 < depth {
                    idx = parents[idx] as usize;
                }
            }
        }
        Ok(WordTable { start, depth, words, left: cur.left, right: cur.right, point: cur.x, sums: cur.sums })
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn len(&self) -> usize {
        self.point.len()
    }

    pub fn is_empty(&self) -> bool {
        self.point.is_empty()
    }

    pub fn word(&self, i: usize) -> &[u32] {
        &self.words[i * self.depth..(i + 1) * self.depth]
    }

    pub fn cylinder(&self, i: usize) -> CylinderWord {
        CylinderWord::new(self.start, self.word(i).to_vec())
    }

    /// Left endpoint of `U^v`.
    pub fn left(&self, i: usize) -> f64 {
        self.left[i]
    }

    pub fn right(&self, i: usize) -> f64 {
        self.right[i]
    }

    /// The extension point of `v` (its image under the coding map).
    pub fn point(&self, i: usize) -> f64 {
        self.point[i]
    }

    /// Birkhoff sums `S_n` of the `p`-th potential, one per word.
    pub fn sums(&self, p: usize) -> &[f64] {
        &self.sums[p]
    }

    pub fn index_of(&self, symbols: &[u32]) -> Option<usize> {
        if symbols.len() != self.depth {
            return None;
        }
        let (mut lo, mut hi) = (0, self.len());
        while lo < hi {
            let mid = (lo + hi) / 2;
            match self.word(mid).cmp(symbols) {
                std::cmp::Ordering::Less => lo = mid + 1,
                std::cmp::Ordering::Greater => hi = mid,
                std::cmp::Ordering::Equal => return Some(mid),
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base::{BaseConfig, BaseKind, FiberModel, MatrixRule, SymbolFiber};
    use crate::geometry::{BranchMap, BranchShape};
    use crate::symbolic::{birkhoff_sum, enumerate_cylinders, WeightRule, DEFAULT_BUDGET};

    fn mixed(horizon: usize, seed: u64) -> FiberSequence {
        let config = BaseConfig { kind: BaseKind::Bernoulli { probs: vec![0.5, 0.5] }, horizon, seed, l_max: 8 };
        let curved = SymbolFiber {
            branches: vec![
                BranchMap::new(0.0, 0.3, BranchShape::Polynomial(vec![0.0, 0.875, 0.125])).unwrap(),
                BranchMap::new(0.5, 0.9, BranchShape::series()).unwrap(),
            ],
            a0: 0.5,
        };
        let mut m = std::collections::HashMap::new();
        m.insert((1, 0), crate::base::BoolMatrix::from_rows(&[vec![1, 1], vec![0, 1], vec![1, 0]]).unwrap());
        let model = FiberModel::Table { symbols: vec![curved, SymbolFiber::uniform(3)], matrices: MatrixRule::Explicit(m) };
        FiberSequence::sample(&config, &model).unwrap()
    }

    #[test]
    fn rows_match_direct_enumeration() {
        let f = mixed(12, 7);
        let psi = PotentialSpec::geometric();
        let phi = PotentialSpec::symbol_log_weights(WeightRule::Uniform);
        let ext = Extension::default();
        for start in [0, 3] {
            let t = WordTable::build(&f, start, 5, &[&phi, &psi], &ext, DEFAULT_BUDGET).unwrap();
            let words = enumerate_cylinders(&f, start, 5, DEFAULT_BUDGET).unwrap();
            assert_eq!(t.len(), words.len());
            for (i, w) in words.iter().enumerate() {
                assert_eq!(t.word(i), &w.symbols[..]);
                let a = birkhoff_sum(&phi, &f, w, &ext).unwrap();
                let b = birkhoff_sum(&psi, &f, w, &ext).unwrap();
                assert!((t.sums(0)[i] - a).abs() < 1e-12);
                assert!((t.sums(1)[i] - b).abs() < 1e-10, "{} vs {b}", t.sums(1)[i]);
                assert!(t.left(i) <= t.point(i) && t.point(i) <= t.right(i));
                assert_eq!(t.index_of(&w.symbols), Some(i));
            }
        }
    }

    #[test]
    fn midpoint_extension_lies_inside() {
        let f = mixed(10, 3);
        let t = WordTable::build(&f, 0, 4, &[], &Extension::midpoint(), DEFAULT_BUDGET).unwrap();
        for i in 0..t.len() {
            assert!(t.left(i) < t.point(i) && t.point(i) < t.right(i));
        }
    }

    #[test]
    fn depth_one_table() {
        let f = mixed(4, 1);
        let t = WordTable::build(&f, 0, 1, &[], &Extension::default(), DEFAULT_BUDGET).unwrap();
        assert_eq!(t.len(), f.alphabet(0));
        assert_eq!(t.word(0), &[1]);
    }
}
