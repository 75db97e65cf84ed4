use serde::Serialize;

use crate::error::{Error, Result};

/// Detector counts indexed by phase slice and announced phase-difference
/// index (OPD), as published for the shortest link.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SliceCountMatrix {
    pub slices: usize,
    /// `counts[slice][opd] = (left, right)`.
    pub counts: Vec<Vec<(u64, u64)>>,
}

impl SliceCountMatrix {
    /// Parses `slice,opd,det_l,det_r` rows; every cell must appear once.
    pub fn from_csv(text: &str, slices: usize) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, h)) if h.trim() == "slice,opd,det_l,det_r" => {}
            Some((i, h)) => {
                return Err(Error::Csv {
                    line: i + 1,
                    message: format!("unexpected header {h:?}"),
                })
            }
            None => return Err(Error::Csv { line: 1, message: "empty file".into() }),
        }
        let mut cells: Vec<Vec<Option<(u64, u64)>>> = vec![vec![None; slices]; slices];
        for (i, line) in lines {
            let bad = |message: String| Error::Csv { line: i + 1, message };
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 4 {
                return Err(bad(format!("expected 4 fields, found {}", fields.len())));
            }
            let nums: Vec<u64> = fields
                .iter()
                .map(|f| f.parse::<u64>().map_err(|e| bad(format!("{f:?}: {e}"))))
                .collect::<Result<_>>()?;
            let (s, o) = (nums[0] as usize, nums[1] as usize);
            if s >= slices || o >= slices {
                return Err(bad(format!("cell ({s}, {o}) outside {slices}x{slices}")));
            }
            if cells[s][o].replace((nums[2], nums[3])).is_some() {
                return Err(bad(format!("cell ({s}, {o}) listed twice")));
            }
        }
        let mut counts = Vec::with_capacity(slices);
        for (s, row) in cells.into_iter().enumerate() {
            let mut out = Vec::with_capacity(slices);
            for (o, c) in row.into_iter().enumerate() {
                out.push(c.ok_or_else(|| Error::Csv {
                    line: 0,
                    message: format!("cell ({s}, {o}) missing"),
                })?);
            }
            counts.push(out);
        }
        Ok(SliceCountMatrix { slices, counts })
    }

    pub fn bundled() -> Self {
        Self::from_csv(super::dataset::BUNDLED_SLICE_MATRIX, 16).expect("bundled slice matrix is valid")
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().map(|(l, r)| l + r).sum()
    }

    /// Fraction of left clicks in a cell; `None` when the cell is empty.
    pub fn left_fraction(&self, slice: usize, opd: usize) -> Option<f64> {
        let (l, r) = *self.counts.get(slice)?.get(opd)?;
        (l + r > 0).then(|| l as f64 / (l + r) as f64)
    }
}
