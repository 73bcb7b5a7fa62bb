use crate::error::{invalid, Result};
use serde::{Deserialize, Serialize};

/// Row-major `n x dim` matrix of points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SampleMatrix {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(invalid(format!(
                "{} values do not form rows of dimension {dim}",
                data.len()
            )));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            crate::error::check_len(r.as_ref().len(), dim)?;
            data.extend_from_slice(r.as_ref());
        }
        Self::new(dim, data)
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            data: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn push(&mut self, row: &[f64]) {
        debug_assert_eq!(row.len(), self.dim);
        self.data.extend_from_slice(row);
    }

    pub fn extend(&mut self, other: &SampleMatrix) {
        debug_assert_eq!(other.dim, self.dim);
        self.data.extend_from_slice(&other.data);
    }

    /// Single column as a one-dimensional sample set.
    pub fn column(&self, d: usize) -> SampleMatrix {
        SampleMatrix {
            dim: 1,
            data: self.rows().map(|r| r[d]).collect(),
        }
    }

    pub fn column_mean(&self, d: usize) -> f64 {
        self.rows().map(|r| r[d]).sum::<f64>() / self.len() as f64
    }

    pub fn column_variance(&self, d: usize) -> f64 {
        let m = self.column_mean(d);
        self.rows().map(|r| (r[d] - m).powi(2)).sum::<f64>() / (self.len() as f64 - 1.0)
    }

    pub fn map_rows(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> Result<SampleMatrix> {
        let rows: Vec<Vec<f64>> = self.rows().map(f).collect();
        SampleMatrix::from_rows(&rows)
    }
}
