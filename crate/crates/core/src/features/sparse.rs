use crate::error::{Error, Result};

/// Sorted-index sparse vector with positive values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseVector {
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl SparseVector {
    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(&j, &v)| dense[j as usize] * v)
            .sum()
    }
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    offsets: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<f64>,
    n_cols: usize,
}

/// Borrowed view of one matrix row.
#[derive(Debug, Clone, Copy)]
pub struct Row<'a> {
    pub indices: &'a [u32],
    pub values: &'a [f64],
}

impl Row<'_> {
    pub fn dot(&self, dense: &[f64]) -> f64 {
        let mut s = 0.0;
        for (&j, &v) in self.indices.iter().zip(self.values) {
            s += dense[j as usize] * v;
        }
        s
    }

    pub fn squared_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    /// `dense += scale * row`
    pub fn axpy(&self, scale: f64, dense: &mut [f64]) {
        for (&j, &v) in self.indices.iter().zip(self.values) {
            dense[j as usize] += scale * v;
        }
    }

    pub fn to_vector(self) -> SparseVector {
        SparseVector {
            indices: self.indices.to_vec(),
            values: self.values.to_vec(),
        }
    }
}

impl SparseMatrix {
    pub fn new(n_cols: usize) -> Self {
        SparseMatrix {
            offsets: vec![0],
            indices: Vec::new(),
            values: Vec::new(),
            n_cols,
        }
    }

    /// Builds from rows given as sorted `(column, value)` pairs.
    pub fn from_rows<I>(n_cols: usize, rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = SparseVector>,
    {
        let mut m = SparseMatrix::new(n_cols);
        for row in rows {
            m.push_row(&row)?;
        }
        Ok(m)
    }

    /// Dense row-major input; zeros are dropped.
    pub fn from_dense(rows: &[Vec<f64>], n_cols: usize) -> Result<Self> {
        let mut m = SparseMatrix::new(n_cols);
        for r in rows {
            if r.len() != n_cols {
                return Err(Error::Dimension(format!(
                    "row has {} entries, expected {n_cols}",
                    r.len()
                )));
            }
            let mut v = SparseVector::default();
            for (j, &x) in r.iter().enumerate() {
                if x != 0.0 {
                    v.indices.push(j as u32);
                    v.values.push(x);
                }
            }
            m.push_row(&v)?;
        }
        Ok(m)
    }

    pub fn push_row(&mut self, row: &SparseVector) -> Result<()> {
        if row.indices.len() != row.values.len() {
            return Err(Error::Dimension("indices and values differ in length".into()));
        }
        if row.indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("row indices not strictly increasing".into()));
        }
        if let Some(&last) = row.indices.last() {
            if last as usize >= self.n_cols {
                return Err(Error::Dimension(format!(
                    "column {last} out of range for {} columns",
                    self.n_cols
                )));
            }
        }
        self.indices.extend_from_slice(&row.indices);
        self.values.extend_from_slice(&row.values);
        self.offsets.push(self.indices.len());
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn row(&self, i: usize) -> Row<'_> {
        let (a, b) = (self.offsets[i], self.offsets[i + 1]);
        Row {
            indices: &self.indices[a..b],
            values: &self.values[a..b],
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = Row<'_>> {
        (0..self.n_rows()).map(move |i| self.row(i))
    }

    /// New matrix holding `rows` in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> SparseMatrix {
        let mut m = SparseMatrix::new(self.n_cols);
        for &i in rows {
            let r = self.row(i);
            m.indices.extend_from_slice(r.indices);
            m.values.extend_from_slice(r.values);
            m.offsets.push(m.indices.len());
        }
        m
    }

    /// `X w` for a dense weight vector.
    pub fn mul_vec(&self, w: &[f64]) -> Result<Vec<f64>> {
        if w.len() != self.n_cols {
            return Err(Error::Dimension(format!(
                "weights have length {}, matrix has {} columns",
                w.len(),
                self.n_cols
            )));
        }
        Ok(self.rows().map(|r| r.dot(w)).collect())
    }
}
