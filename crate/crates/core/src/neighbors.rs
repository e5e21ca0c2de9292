//! Uniform cell grid for exact fixed-radius candidate search.

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Points bucketed into axis-aligned cells.
#[derive(Debug, Clone)]
pub struct CellGrid {
    dim: usize,
    cell: Vec<f64>,
    cells: HashMap<Vec<i64>, Vec<u32>>,
}

#[inline]
fn cell_index(x: f64, size: f64) -> i64 {
    // saturating cast keeps far-away points in edge cells
    (x / size).floor() as i64
}

impl CellGrid {
    /// Buckets the rows of `coords` (row-major, `dim` columns).
    pub fn build(coords: &[f64], dim: usize, cell: Vec<f64>) -> Result<Self> {
        if dim == 0 || cell.len() != dim {
            return Err(Error::Argument(format!(
                "cell grid needs one cell size per dimension (dim {dim}, got {})",
                cell.len()
            )));
        }
        if cell.iter().any(|c| !(*c > 0.0) || !c.is_finite()) {
            return Err(Error::Argument(format!("cell sizes must be positive, got {cell:?}")));
        }
        if coords.len() % dim != 0 {
            return Err(Error::Argument("coordinate array is not a whole number of rows".into()));
        }
        let n = coords.len() / dim;
        if n > u32::MAX as usize {
            return Err(Error::Argument("too many points for the cell grid".into()));
        }
        let mut cells: HashMap<Vec<i64>, Vec<u32>> = HashMap::new();
        for (j, row) in coords.chunks_exact(dim).enumerate() {
            let key: Vec<i64> = row.iter().zip(&cell).map(|(&x, &s)| cell_index(x, s)).collect();
            cells.entry(key).or_default().push(j as u32);
        }
        Ok(Self { dim, cell, cells })
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn occupied_cells(&self) -> usize {
        self.cells.len()
    }

    /// Collects, in ascending order, every point lying in a cell that
    /// intersects the box `center ± half_width`.
    pub fn candidates(&self, center: &[f64], half_width: &[f64], buf: &mut Candidates) {
        buf.ids.clear();
        let dim = self.dim;
        let mut lo = [0i64; 16];
        let mut hi = [0i64; 16];
        assert!(dim <= 16, "cell grid supports at most 16 dimensions");
        for k in 0..dim {
            // widen slightly so rounding never drops a point on the boundary
            let w = half_width[k] * (1.0 + 1e-9);
            lo[k] = cell_index(center[k] - w, self.cell[k]);
            hi[k] = cell_index(center[k] + w, self.cell[k]);
        }
        buf.key.clear();
        buf.key.extend_from_slice(&lo[..dim]);
        let mut runs = 0usize;
        let (mut first, mut last) = (usize::MAX, 0usize);
        loop {
            if let Some(ids) = self.cells.get(buf.key.as_slice()) {
                runs += 1;
                if runs == 1 {
                    buf.ids.extend_from_slice(ids);
                } else {
                    // merge through a bitset so the output stays sorted
                    if runs == 2 {
                        let pending = std::mem::take(&mut buf.ids);
                        for &j in &pending {
                            buf.mark(j, &mut first, &mut last);
                        }
                        buf.ids = pending;
                        buf.ids.clear();
                    }
                    for &j in ids {
                        buf.mark(j, &mut first, &mut last);
                    }
                }
            }
            let mut k = dim;
            loop {
                if k == 0 {
                    if runs > 1 {
                        buf.drain_marks(first, last);
                    }
                    return;
                }
                k -= 1;
                if buf.key[k] < hi[k] {
                    buf.key[k] += 1;
                    break;
                }
                buf.key[k] = lo[k];
            }
        }
    }
}

/// Reusable output and scratch space for [`CellGrid::candidates`].
#[derive(Debug, Clone, Default)]
pub struct Candidates {
    pub ids: Vec<u32>,
    marks: Vec<u64>,
    key: Vec<i64>,
}

impl Candidates {
    #[inline]
    fn mark(&mut self, j: u32, first: &mut usize, last: &mut usize) {
        let w = (j >> 6) as usize;
        if w >= self.marks.len() {
            self.marks.resize(w + 1, 0);
        }
        self.marks[w] |= 1u64 << (j & 63);
        *first = (*first).min(w);
        *last = (*last).max(w);
    }

    fn drain_marks(&mut self, first: usize, last: usize) {
        for w in first..=last {
            let mut bits = self.marks[w];
            while bits != 0 {
                let b = bits.trailing_zeros();
                self.ids.push(((w as u32) << 6) | b);
                bits &= bits - 1;
            }
            self.marks[w] = 0;
        }
    }
}
