//! Nested intervals `U_ω^v`, their neighbor structure, and the coding map.

mod branch;

use std::io::Write;

pub use branch::{invert_branch, BranchMap, BranchShape, DENSE_GRID, INVERT_TOL};

use crate::base::FiberSequence;
use crate::error::{Error, Result};
use crate::symbolic::{enumerate_cylinders, CylinderWord, Extension, WordTable};

/// Gap below which consecutive cover intervals count as touching.
pub const TOUCH_TOL: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq)]
pub struct IntervalNode {
    pub word: CylinderWord,
    pub left: f64,
    pub right: f64,
    pub length: f64,
    /// Index of the neighbor in the enclosing cover, when built by [`attractor_cover`].
    pub prev: Option<usize>,
    pub next: Option<usize>,
    pub touches_prev: bool,
    pub touches_next: bool,
    /// Endpoints no longer separated in floating point.
    pub precision_loss: bool,
}

impl IntervalNode {
    fn new(word: CylinderWord, left: f64, right: f64) -> Self {
        let length = right - left;
        let precision_loss = !(length > 4.0 * f64::EPSILON * right.abs().max(f64::MIN_POSITIVE));
        IntervalNode {
            word,
            left,
            right,
            length,
            prev: None,
            next: None,
            touches_prev: false,
            touches_next: false,
            precision_loss,
        }
    }
}

/// `U_ω^v` by composing inverse branches applied to 0 and 1.
pub fn cylinder_interval(fiber: &FiberSequence, word: &CylinderWord) -> Result<IntervalNode> {
    word.check(fiber)?;
    let (mut lo, mut hi) = (0.0, 1.0);
    for (j, &s) in word.symbols.iter().enumerate().rev() {
        let br = fiber.step(word.start + j).branch(s);
        lo = br.inverse(lo);
        hi = br.inverse(hi);
    }
    Ok(IntervalNode::new(word.clone(), lo, hi))
}

/// Depth-`n` cover of the attractor from step 0, sorted by left endpoint.
pub fn attractor_cover(fiber: &FiberSequence, n: usize, budget: usize) -> Result<Vec<IntervalNode>> {
    let table = WordTable::build(fiber, 0, n, &[], &Extension::default(), budget)?;
    Ok(cover_from_table(&table))
}

pub(crate) fn cover_from_table(table: &WordTable) -> Vec<IntervalNode> {
    let mut nodes: Vec<IntervalNode> = (0..table.len())
        .map(|i| IntervalNode::new(table.cylinder(i), table.left(i), table.right(i)))
        .collect();
    // lexicographic order is already left-to-right; the sort is a cheap guarantee
    nodes.sort_by(|a, b| a.left.total_cmp(&b.left));
    link_neighbors(&mut nodes);
    nodes
}

fn link_neighbors(nodes: &mut [IntervalNode]) {
    for i in 1..nodes.len() {
        let touching = (nodes[i].left - nodes[i - 1].right).abs() <= TOUCH_TOL;
        nodes[i].prev = Some(i - 1);
        nodes[i].touches_prev = touching;
        nodes[i - 1].next = Some(i);
        nodes[i - 1].touches_next = touching;
    }
}

/// CSV rows `depth,word,left,right,length`.
pub fn write_cover_csv<W: Write>(out: &mut W, cover: &[IntervalNode]) -> Result<()> {
    writeln!(out, "depth,word,left,right,length")?;
    for node in cover {
        writeln!(
            out,
            "{},{},{:.17e},{:.17e},{:.17e}",
            node.word.depth(),
            node.word.label(),
            node.left,
            node.right,
            node.length
        )?;
    }
    Ok(())
}

/// Approximation of `π_ω(v…)`: the left endpoint of `U^v`.
#[derive(Debug, Clone, PartialEq)]
pub struct CodingPoint {
    pub point: f64,
    /// Upper bound on the distance to the true coding point, `|U^v|`.
    pub error: f64,
    /// The symbolic address actually used.
    pub word: CylinderWord,
}

/// Codes the longest available prefix of `word`, extending it with the smallest admissible
/// symbols until the interval is shorter than `tol`.
pub fn coding_point(fiber: &FiberSequence, word: &CylinderWord, tol: f64) -> Result<CodingPoint> {
    word.check(fiber)?;
    let mut w = word.clone();
    loop {
        let node = cylinder_interval(fiber, &w)?;
        if node.length <= tol {
            return Ok(CodingPoint { point: node.left, error: node.length, word: w });
        }
        let k = w.start + w.depth();
        if k >= fiber.horizon() {
            return Err(Error::HorizonExhausted { needed: k + 1, available: fiber.horizon() });
        }
        let m_allow = |t: u32| match w.last() {
            None => true,
            Some(s) => fiber.step(k - 1).matrix.allows(s, t),
        };
        let t = (1..=fiber.alphabet(k) as u32).find(|&t| m_allow(t)).expect("rows have a nonzero entry");
        w.symbols.push(t);
    }
}

/// Total length `Σ |U^v|` of the depth-`n` cover.
pub fn cover_length(fiber: &FiberSequence, n: usize, budget: usize) -> Result<f64> {
    let words = enumerate_cylinders(fiber, 0, n, budget)?;
    words.iter().map(|w| cylinder_interval(fiber, w).map(|u| u.length)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base::{BaseConfig, BaseKind, FiberModel, MatrixRule, SymbolFiber};
    use crate::symbolic::DEFAULT_BUDGET;

    fn middle_third(horizon: usize) -> FiberSequence {
        let config = BaseConfig { kind: BaseKind::Deterministic { pattern: vec![0] }, horizon, seed: 0, l_max: 8 };
        let sf = SymbolFiber { branches: vec![BranchMap::affine(0.0, 1.0 / 3.0), BranchMap::affine(2.0 / 3.0, 1.0)], a0: 1.0 };
        FiberSequence::sample(&config, &FiberModel::Table { symbols: vec![sf], matrices: MatrixRule::Full }).unwrap()
    }

    #[test]
    fn middle_third_word_one_one() {
        let u = cylinder_interval(&middle_third(4), &CylinderWord::new(0, vec![1, 1])).unwrap();
        assert_eq!(u.left, 0.0);
        assert!((u.right - 1.0 / 9.0).abs() < 1e-16);
        assert!(!u.precision_loss);
    }

    #[test]
    fn middle_third_cover_has_gaps() {
        let cover = attractor_cover(&middle_third(4), 2, DEFAULT_BUDGET).unwrap();
        assert_eq!(cover.len(), 4);
        assert!(cover.iter().all(|c| !c.touches_prev && !c.touches_next));
        assert_eq!(cover[0].next, Some(1));
        assert_eq!(cover[3].prev, Some(2));
    }

    #[test]
    fn coding_points_of_constant_words() {
        let f = middle_third(30);
        let p = coding_point(&f, &CylinderWord::new(0, vec![1, 1, 1]), 1e-9).unwrap();
        assert_eq!(p.point, 0.0);
        let w = CylinderWord::new(0, vec![2; 20]);
        let q = cylinder_interval(&f, &w).unwrap();
        assert!((q.left - 1.0).abs() <= 1.000001 * 3f64.powi(-20));
        assert!((q.right - 1.0).abs() < 1e-15);
    }

    #[test]
    fn coding_point_needs_horizon() {
        let f = middle_third(5);
        let err = coding_point(&f, &CylinderWord::new(0, vec![1]), 1e-9).unwrap_err();
        assert_eq!(err.tag(), "horizon-exhausted");
    }

    #[test]
    fn cover_length_decreases() {
        let f = middle_third(10);
        let lens: Vec<f64> = (1..=6).map(|n| cover_length(&f, n, DEFAULT_BUDGET).unwrap()).collect();
        for w in lens.windows(2) {
            assert!(w[1] <= w[0]);
        }
        assert!((lens[5] - (2.0f64 / 3.0).powi(6)).abs() < 1e-12);
    }

    #[test]
    fn cover_csv_format() {
        let cover = attractor_cover(&middle_third(3), 1, DEFAULT_BUDGET).unwrap();
        let mut buf = Vec::new();
        write_cover_csv(&mut buf, &cover).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("depth,word,left,right,length\n1,1,"));
        assert_eq!(text.lines().count(), 3);
    }
}
