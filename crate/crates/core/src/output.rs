//! CSV and gnuplot series files with a reproducibility header.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::multifractal::SpectrumCurve;

/// Artifact version embedded in every output file.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// `# key: value` lines opening every file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Header {
    pub lines: Vec<(String, String)>,
}

impl Header {
    pub fn new(command: &str) -> Self {
        let mut h = Header::default();
        h.push("randgibbs", VERSION);
        h.push("command", command);
        h
    }

    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.lines.push((key.to_string(), value.to_string()));
    }

    pub fn push_list<T: ToString>(&mut self, key: &str, values: &[T]) {
        self.push(key, join(values));
    }

    fn render(&self) -> String {
        self.lines.iter().map(|(k, v)| format!("# {k}: {v}\n")).collect()
    }
}

pub fn join<T: ToString>(values: &[T]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

/// Shortest round-trip representation; `inf`, `-inf` and `nan` spelled out.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x == f64::INFINITY {
        "inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{x:e}")
    }
}

/// A CSV table held in memory until written.
#[derive(Debug, Clone)]
pub struct Table {
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn row(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.columns.len());
        self.rows.push(cells);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn render(&self, header: &Header) -> String {
        let mut s = header.render();
        s.push_str(&self.columns.join(","));
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }

    pub fn write(&self, dir: &Path, name: &str, header: &Header) -> Result<PathBuf> {
        let path = dir.join(name);
        fs::write(&path, self.render(header))?;
        Ok(path)
    }
}

/// A curve as `x,y[,uncertainty][,extrapolated]` rows.
pub fn curve_table(curve: &SpectrumCurve, x: &str, y: &str) -> Table {
    let mut t = Table::new(&[x, y, "uncertainty", "extrapolated"]);
    for i in 0..curve.len() {
        t.row(vec![
            num(curve.x[i]),
            num(curve.y[i]),
            num(curve.uncertainty[i]),
            (curve.extrapolated[i] as u8).to_string(),
        ]);
    }
    t
}

/// Gnuplot data file: one indexed block per curve, blocks separated by two blank lines.
pub fn gnuplot_series(header: &Header, curves: &[&SpectrumCurve]) -> String {
    let mut s = header.render();
    for (i, c) in curves.iter().enumerate() {
        if i > 0 {
            s.push_str("\n\n");
        }
        let _ = writeln!(s, "# index {i}: {}", c.kind.tag());
        for (x, y) in c.x.iter().zip(&c.y) {
            if y.is_finite() {
                let _ = writeln!(s, "{} {}", num(*x), num(*y));
            }
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multifractal::CurveKind;

    #[test]
    fn header_and_rows() {
        let mut h = Header::new("tq");
        h.push("scenario", "cookie_cutter");
        h.push_list("depths", &[4, 5]);
        let mut t = Table::new(&["q", "t"]);
        t.row(vec![num(1.0), num(f64::NEG_INFINITY)]);
        let text = t.render(&h);
        assert_eq!(text, format!("# randgibbs: {VERSION}\n# command: tq\n# scenario: cookie_cutter\n# depths: 4 5\nq,t\n1e0,-inf\n"));
    }

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, -2.5e-300, 1.0 / 3.0, 6.02e23] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn gnuplot_blocks_skip_infinite_points() {
        let a = SpectrumCurve::new(CurveKind::T, vec![0.0, 1.0], vec![-1.0, 0.0]).unwrap();
        let b = SpectrumCurve::new(CurveKind::TStar, vec![0.5, 0.7], vec![f64::NEG_INFINITY, 0.6]).unwrap();
        let s = gnuplot_series(&Header::new("spectrum"), &[&a, &b]);
        assert!(s.contains("# index 0: T\n0e0 -1e0\n1e0 0e0\n\n\n# index 1: T*\n7e-1 6e-1\n"));
    }
}
