//! Binary observation sets: `0`/`1` text files and a synthetic 6x6 pattern set.

use std::path::Path;

use rand::Rng;

use crate::cube::stream;
use crate::error::{Error, Result};

pub const SYNTHETIC_SIDE: usize = 6;

/// Observations stored as {-1, +1} rows of equal width.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    width: usize,
    rows: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let width = rows.first().map(Vec::len).ok_or_else(|| Error::InvalidArgument("empty dataset".into()))?;
        if width == 0 {
            return Err(Error::InvalidArgument("zero-width observations".into()));
        }
        for (i, r) in rows.iter().enumerate() {
            if r.len() != width {
                return Err(Error::DimensionMismatch { expected: width, found: r.len() });
            }
            if r.iter().any(|&v| v != 1.0 && v != -1.0) {
                return Err(Error::InvalidArgument(format!("row {i} has a value outside {{-1, +1}}")));
            }
        }
        Ok(Self { width, rows })
    }

    /// `count` copies of one observation.
    pub fn constant(row: Vec<f64>, count: usize) -> Self {
        Self::new(vec![row; count.max(1)]).expect("valid constant dataset")
    }

    /// Parses one observation per line of `0`/`1` characters; blank lines and `#` comments are skipped.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row = line
                .chars()
                .map(|c| match c {
                    '0' => Ok(-1.0),
                    '1' => Ok(1.0),
                    other => Err(Error::Parse { line: n + 1, message: format!("unexpected character {other:?}") }),
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        Self::new(rows)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.rows.len() * (self.width + 1));
        for r in &self.rows {
            s.extend(r.iter().map(|&v| if v > 0.0 { '1' } else { '0' }));
            s.push('\n');
        }
        s
    }

    /// `count` noisy copies of eight fixed 6x6 prototypes (bars, halves, diagonals,
    /// frame, cross); each pixel flips independently with probability `flip`.
    pub fn synthetic(count: usize, flip: f64, seed: u64) -> Self {
        let protos = prototypes();
        let mut rng = stream(seed);
        let rows = (0..count.max(1))
            .map(|_| {
                let p = &protos[rng.random_range(0..protos.len())];
                p.iter().map(|&v| if rng.random::<f64>() < flip { -v } else { v }).collect()
            })
            .collect();
        Self::new(rows).expect("synthetic rows are valid")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }
}

pub fn prototypes() -> Vec<Vec<f64>> {
    let s = SYNTHETIC_SIDE;
    let on = |pred: &dyn Fn(usize, usize) -> bool| -> Vec<f64> {
        (0..s * s).map(|k| if pred(k / s, k % s) { 1.0 } else { -1.0 }).collect()
    };
    vec![
        on(&|r, _| r < 3),
        on(&|r, _| r >= 3),
        on(&|_, c| c < 3),
        on(&|_, c| c >= 3),
        on(&|r, c| r.abs_diff(c) <= 1),
        on(&|r, c| (r + c).abs_diff(s - 1) <= 1),
        on(&|r, c| r == 0 || c == 0 || r == s - 1 || c == s - 1),
        on(&|r, c| r == 2 || r == 3 || c == 2 || c == 3),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let d = Dataset::from_text("# two rows\n0110\n\n1000\n").unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.row(0), &[-1.0, 1.0, 1.0, -1.0]);
        assert_eq!(d.to_text(), "0110\n1000\n");
        assert!(matches!(Dataset::from_text("01\n0x\n"), Err(Error::Parse { line: 2, .. })));
        assert!(Dataset::from_text("01\n011\n").is_err());
        assert!(Dataset::from_text("\n").is_err());
    }

    #[test]
    fn synthetic_set_is_reproducible_and_noisy() {
        let a = Dataset::synthetic(400, 0.05, 7);
        assert_eq!(a, Dataset::synthetic(400, 0.05, 7));
        assert_eq!(a.width(), 36);
        let protos = prototypes();
        let mut flips = 0usize;
        for r in a.rows() {
            flips += protos
                .iter()
                .map(|p| p.iter().zip(r).filter(|(x, y)| x != y).count())
                .min()
                .unwrap();
        }
        let rate = flips as f64 / (400.0 * 36.0);
        assert!(rate > 0.03 && rate < 0.06, "{rate}");
        let distinct: std::collections::BTreeSet<String> = protos.iter().map(|p| format!("{p:?}")).collect();
        assert_eq!(distinct.len(), 8);
    }
}
