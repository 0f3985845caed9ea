use serde::{Deserialize, Serialize};

use super::AdError;

/// Dense row-major matrix of `f64`. Rows are batch entries by convention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, v: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![v; rows * cols],
        }
    }

    pub fn scalar(v: f64) -> Self {
        Self::filled(1, 1, v)
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, AdError> {
        if data.len() != rows * cols {
            return Err(AdError::ShapeMismatch(format!(
                "{} values for a {rows}x{cols} tensor",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// A single row.
    pub fn row_vector(data: Vec<f64>) -> Self {
        Self {
            rows: 1,
            cols: data.len(),
            data,
        }
    }

    /// A single column.
    pub fn col_vector(data: Vec<f64>) -> Self {
        Self {
            rows: data.len(),
            cols: 1,
            data,
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, AdError> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(AdError::ShapeMismatch("ragged rows".into()));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// The single entry of a 1x1 tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn map_inplace(&mut self, f: impl Fn(f64) -> f64) {
        for v in &mut self.data {
            *v = f(*v);
        }
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Columns `start..start + width`.
    pub fn slice_cols(&self, start: usize, width: usize) -> Result<Tensor, AdError> {
        if start + width > self.cols {
            return Err(AdError::ShapeMismatch(format!(
                "columns {start}..{} of a {}-column tensor",
                start + width,
                self.cols
            )));
        }
        let mut data = Vec::with_capacity(self.rows * width);
        for r in 0..self.rows {
            data.extend_from_slice(&self.row(r)[start..start + width]);
        }
        Ok(Tensor {
            rows: self.rows,
            cols: width,
            data,
        })
    }

    pub fn concat_cols(parts: &[&Tensor]) -> Result<Tensor, AdError> {
        let rows = parts.first().map_or(0, |t| t.rows);
        if parts.iter().any(|t| t.rows != rows) {
            return Err(AdError::ShapeMismatch("concat of tensors with different row counts".into()));
        }
        let cols: usize = parts.iter().map(|t| t.cols).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for t in parts {
                data.extend_from_slice(t.row(r));
            }
        }
        Ok(Tensor { rows, cols, data })
    }

    pub fn transpose(&self) -> Tensor {
        let mut out = Tensor::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// `op(self) * op(other)` where `op` optionally transposes.
    pub fn gemm(&self, trans_a: bool, other: &Tensor, trans_b: bool) -> Result<Tensor, AdError> {
        let (m, k, rsa, csa) = if trans_a {
            (self.cols, self.rows, 1isize, self.cols as isize)
        } else {
            (self.rows, self.cols, self.cols as isize, 1isize)
        };
        let (k2, n, rsb, csb) = if trans_b {
            (other.cols, other.rows, 1isize, other.cols as isize)
        } else {
            (other.rows, other.cols, other.cols as isize, 1isize)
        };
        if k != k2 {
            return Err(AdError::ShapeMismatch(format!(
                "matmul of {m}x{k} by {k2}x{n}"
            )));
        }
        let mut out = Tensor::zeros(m, n);
        if m == 0 || n == 0 || k == 0 {
            return Ok(out);
        }
        // SAFETY: strides describe the row-major buffers above, whose lengths
        // are exactly rows * cols, and `out` is a fresh m x n buffer.
        unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                1.0,
                self.data.as_ptr(),
                rsa,
                csa,
                other.data.as_ptr(),
                rsb,
                csb,
                0.0,
                out.data.as_mut_ptr(),
                n as isize,
                1,
            );
        }
        Ok(out)
    }

    pub fn matmul(&self, other: &Tensor) -> Result<Tensor, AdError> {
        self.gemm(false, other, false)
    }
}

/// Output shape of a broadcasting binary op: each dimension must match or be 1.
pub(crate) fn broadcast_shape(a: (usize, usize), b: (usize, usize)) -> Result<(usize, usize), AdError> {
    let dim = |x: usize, y: usize| {
        if x == y {
            Some(x)
        } else if x == 1 {
            Some(y)
        } else if y == 1 {
            Some(x)
        } else {
            None
        }
    };
    match (dim(a.0, b.0), dim(a.1, b.1)) {
        (Some(r), Some(c)) => Ok((r, c)),
        _ => Err(AdError::ShapeMismatch(format!(
            "cannot broadcast {}x{} with {}x{}",
            a.0, a.1, b.0, b.1
        ))),
    }
}

pub(crate) fn broadcast_zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor, AdError> {
    if a.shape() == b.shape() {
        return Ok(Tensor {
            rows: a.rows,
            cols: a.cols,
            data: a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect(),
        });
    }
    let (rows, cols) = broadcast_shape(a.shape(), b.shape())?;
    let mut data = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let ra = if a.rows == 1 { 0 } else { r };
        let rb = if b.rows == 1 { 0 } else { r };
        for c in 0..cols {
            let ca = if a.cols == 1 { 0 } else { c };
            let cb = if b.cols == 1 { 0 } else { c };
            data.push(f(a.get(ra, ca), b.get(rb, cb)));
        }
    }
    Ok(Tensor { rows, cols, data })
}

/// Sums `g` down to `shape` along the broadcast dimensions.
pub(crate) fn reduce_to(g: Tensor, shape: (usize, usize)) -> Tensor {
    if g.shape() == shape {
        return g;
    }
    let mut out = Tensor::zeros(shape.0, shape.1);
    for r in 0..g.rows {
        let ro = if shape.0 == 1 { 0 } else { r };
        for c in 0..g.cols {
            let co = if shape.1 == 1 { 0 } else { c };
            out.data[ro * shape.1 + co] += g.data[r * g.cols + c];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_transposes() {
        let a = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        let b = Tensor::from_rows(&[vec![1.0, 0.0, -1.0], vec![2.0, 1.0, 0.0]]).unwrap();
        let ab = a.matmul(&b).unwrap();
        assert_eq!(ab.row(0), &[5.0, 2.0, -1.0]);
        assert_eq!(ab.row(2), &[17.0, 6.0, -5.0]);
        let atb = a.gemm(true, &a, false).unwrap();
        assert_eq!(atb, a.transpose().matmul(&a).unwrap());
        let abt = a.gemm(false, &a, true).unwrap();
        assert_eq!(abt, a.matmul(&a.transpose()).unwrap());
        assert!(a.matmul(&a).is_err());
    }

    #[test]
    fn broadcasting() {
        let a = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let row = Tensor::row_vector(vec![10.0, 20.0]);
        let s = broadcast_zip(&a, &row, |x, y| x + y).unwrap();
        assert_eq!(s.data(), &[11.0, 22.0, 13.0, 24.0]);
        let back = reduce_to(s, (1, 2));
        assert_eq!(back.data(), &[11.0 + 13.0, 22.0 + 24.0]);
        assert!(broadcast_zip(&a, &Tensor::zeros(3, 2), |x, _| x).is_err());
    }
}
