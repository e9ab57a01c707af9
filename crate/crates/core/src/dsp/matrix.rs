use crate::error::{ensure, Result};

/// Row-major `rows x cols` matrix of `f64`; rows are frames.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        ensure!(data.len() == rows * cols, "matrix {}x{} needs {} values, got {}", rows, cols, rows * cols, data.len());
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    /// Column-major copy (`cols x rows`), i.e. channels-first layout.
    pub fn transposed(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// Rows `start..start+len`, zero-padded past the end.
    pub fn rows_padded(&self, start: usize, len: usize) -> Matrix {
        let mut out = Matrix::zeros(len, self.cols);
        let avail = self.rows.saturating_sub(start).min(len);
        out.data[..avail * self.cols].copy_from_slice(&self.data[start * self.cols..(start + avail) * self.cols]);
        out
    }
}
