//! Explicit Boolean matrices: dense bit tables and sparse one-entry indexes.

use serde::{Deserialize, Serialize};

/// Dense row-major bit table.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    words_per_row: usize,
    data: Vec<u64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        let words_per_row = cols.div_ceil(64).max(1);
        DenseMatrix { rows, cols, words_per_row, data: vec![0; rows * words_per_row] }
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut m = Self::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                if f(r, c) {
                    m.set(r, c, true);
                }
            }
        }
        m
    }

    /// Parses rows written as strings of '0'/'1', separated by whitespace or '/'.
    pub fn parse(text: &str) -> Option<Self> {
        let rows: Vec<&str> = text
            .split(|c: char| c.is_whitespace() || c == '/' || c == ',')
            .filter(|s| !s.is_empty())
            .collect();
        let cols = rows.first()?.len();
        if cols == 0 || rows.iter().any(|r| r.len() != cols || r.chars().any(|c| c != '0' && c != '1')) {
            return None;
        }
        Some(Self::from_fn(rows.len(), cols, |r, c| rows[r].as_bytes()[c] == b'1'))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        (self.data[r * self.words_per_row + c / 64] >> (c % 64)) & 1 == 1
    }

    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        let w = &mut self.data[r * self.words_per_row + c / 64];
        if v {
            *w |= 1 << (c % 64);
        } else {
            *w &= !(1 << (c % 64));
        }
    }

    /// Row as a bitmask; only valid when `cols <= 64`.
    #[inline]
    pub fn row_mask(&self, r: usize) -> u64 {
        debug_assert!(self.cols <= 64);
        self.data[r * self.words_per_row]
    }

    pub fn count_ones(&self) -> u64 {
        self.data.iter().map(|w| w.count_ones() as u64).sum()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.rows * (self.cols + 1));
        for r in 0..self.rows {
            for c in 0..self.cols {
                s.push(if self.get(r, c) { '1' } else { '0' });
            }
            s.push('\n');
        }
        s
    }
}

/// Sparse 2^n × 2^n matrix storing only its one-entries, sorted, with row and column indexes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparseMatrix {
    n: usize,
    row_ptr: Vec<u32>,
    row_cols: Vec<u32>,
    col_ptr: Vec<u32>,
    col_rows: Vec<u32>,
}

impl SparseMatrix {
    /// Builds from a list of one-entries; duplicates are merged.
    pub fn from_pairs(n: usize, mut pairs: Vec<(u32, u32)>) -> Self {
        let side = 1usize << n;
        pairs.sort_unstable();
        pairs.dedup();
        let mut row_ptr = vec![0u32; side + 1];
        for &(r, _) in &pairs {
            row_ptr[r as usize + 1] += 1;
        }
        for i in 0..side {
            row_ptr[i + 1] += row_ptr[i];
        }
        let row_cols: Vec<u32> = pairs.iter().map(|&(_, c)| c).collect();
        let mut by_col: Vec<(u32, u32)> = pairs.iter().map(|&(r, c)| (c, r)).collect();
        by_col.sort_unstable();
        let mut col_ptr = vec![0u32; side + 1];
        for &(c, _) in &by_col {
            col_ptr[c as usize + 1] += 1;
        }
        for i in 0..side {
            col_ptr[i + 1] += col_ptr[i];
        }
        let col_rows = by_col.iter().map(|&(_, r)| r).collect();
        SparseMatrix { n, row_ptr, row_cols, col_ptr, col_rows }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn side(&self) -> usize {
        1 << self.n
    }

    pub fn ones(&self) -> u64 {
        self.row_cols.len() as u64
    }

    pub fn row(&self, r: usize) -> &[u32] {
        &self.row_cols[self.row_ptr[r] as usize..self.row_ptr[r + 1] as usize]
    }

    pub fn col(&self, c: usize) -> &[u32] {
        &self.col_rows[self.col_ptr[c] as usize..self.col_ptr[c + 1] as usize]
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.row(r).binary_search(&(c as u32)).is_ok()
    }

    /// The k-th one-entry in (row, column) order.
    pub fn entry(&self, k: usize) -> (u32, u32) {
        let r = self.row_ptr.partition_point(|&p| p as usize <= k) - 1;
        (r as u32, self.row_cols[k])
    }

    /// Iterates one-entries in (row, column) order.
    pub fn pairs(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (0..self.side()).flat_map(move |r| self.row(r).iter().map(move |&c| (r as u32, c)))
    }
}
