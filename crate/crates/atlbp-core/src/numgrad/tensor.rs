//! Dense 64-bit vectors and row-major matrices, plus the pure numeric
//! kernels (affine map, softmax, cross-entropy) shared by the inference
//! path and the gradient tape.

use crate::error::{Error, Result};

/// Dense vector of finite 64-bit floats. Length is strictly positive.
#[derive(Clone, Debug, PartialEq)]
pub struct Vec64 {
    data: Vec<f64>,
}

impl Vec64 {
    /// Builds a vector, rejecting empty input and non-finite entries.
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Dimension {
                op: "Vec64::new",
                detail: "length must be positive".into(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite entry {} at index {i} in Vec64",
                data[i]
            )));
        }
        Ok(Self { data })
    }

    pub fn zeros(len: usize) -> Self {
        assert!(len > 0, "Vec64 length must be positive");
        Self {
            data: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.data.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl std::ops::Index<usize> for Vec64 {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.data[i]
    }
}

impl std::ops::IndexMut<usize> for Vec64 {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.data[i]
    }
}

/// Dense row-major matrix of finite 64-bit floats with positive dimensions.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat64 {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat64 {
    /// Builds a matrix from row-major data, validating dimensions and finiteness.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Dimension {
                op: "Mat64::new",
                detail: format!("dimensions must be positive, got {rows}x{cols}"),
            });
        }
        if data.len() != rows * cols {
            return Err(Error::Dimension {
                op: "Mat64::new",
                detail: format!("{rows}x{cols} needs {} entries, got {}", rows * cols, data.len()),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite entry {} at flat index {i} in Mat64",
                data[i]
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "Mat64 dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.cols + col] = value;
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// out = W x, with W row-major [rows x cols] and x of length cols.
pub(crate) fn matvec_into(w: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(w.len(), rows * cols);
    debug_assert_eq!(x.len(), cols);
    debug_assert_eq!(out.len(), rows);
    for (r, o) in out.iter_mut().enumerate() {
        let row = &w[r * cols..(r + 1) * cols];
        let mut acc = 0.0;
        for (a, b) in row.iter().zip(x.iter()) {
            acc += a * b;
        }
        *o = acc;
    }
}

/// Returns Wx + b.
///
/// Shared by the inference path and the tape forward so both compute
/// bit-identical values.
pub fn apply_affine(w: &Mat64, b: &Vec64, x: &Vec64) -> Result<Vec64> {
    if w.cols() != x.len() || w.rows() != b.len() {
        return Err(Error::Dimension {
            op: "apply_affine",
            detail: format!(
                "W is {}x{}, b has length {}, x has length {}",
                w.rows(),
                w.cols(),
                b.len(),
                x.len()
            ),
        });
    }
    let mut out = vec![0.0; w.rows()];
    matvec_into(w.as_slice(), w.rows(), w.cols(), x.as_slice(), &mut out);
    for (o, bv) in out.iter_mut().zip(b.iter()) {
        *o += bv;
    }
    Ok(Vec64 { data: out })
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Numerically safe softmax: shifts by the maximum before exponentiating.
pub fn softmax(z: &Vec64) -> Result<Vec64> {
    if !z.is_finite() {
        return Err(Error::Numeric("softmax input contains non-finite entries".into()));
    }
    let mut out = z.as_slice().to_vec();
    softmax_in_place(&mut out);
    Ok(Vec64 { data: out })
}

pub(crate) fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

/// Probability floor applied inside the log so a zero probability yields a
/// large finite loss instead of infinity.
pub const PROB_CLAMP: f64 = 1e-12;

/// Cross-entropy loss -log p[target] with the probability clamped at
/// [`PROB_CLAMP`].
pub fn cross_entropy(p: &Vec64, target: usize) -> Result<f64> {
    if target >= p.len() {
        return Err(Error::Index(format!(
            "class {target} out of range for {} classes",
            p.len()
        )));
    }
    Ok(-(p[target].max(PROB_CLAMP)).ln())
}
