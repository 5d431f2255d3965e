//! Dense matrices, rank-3 tensors and the mode-n contractions the model is built from.
//!
//! Both containers store 64-bit floats in row-major order with the last index
//! fastest. For [`DenseTensor3`] the flat index of `(i, j, k)` is
//! `((i * dim2) + j) * dim3 + k`; checkpoints depend on this layout.

use std::fmt;

use crate::error::{Error, Result};

/// One of the three modes of a rank-3 tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    One,
    Two,
    Three,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::One, Mode::Two, Mode::Three];

    pub fn from_index(n: usize) -> Option<Mode> {
        match n {
            1 => Some(Mode::One),
            2 => Some(Mode::Two),
            3 => Some(Mode::Three),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
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

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "DenseMatrix::from_vec",
                format!("{rows}x{cols}"),
                format!("{} values", data.len()),
            ));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(Error::shape(
                    "DenseMatrix::from_rows",
                    format!("row length {cols}"),
                    format!("row length {}", row.len()),
                ));
            }
            data.extend_from_slice(row);
        }
        Ok(DenseMatrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        DenseMatrix { rows, cols, data }
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Matrix-vector product `self · v`.
    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(Error::shape(
                "mul_vec",
                format!("{}x{}", self.rows, self.cols),
                format!("vector of length {}", v.len()),
            ));
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), v)).collect())
    }

    /// Row-vector product `vᵀ · self`.
    pub fn vec_mul(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.rows {
            return Err(Error::shape(
                "vec_mul",
                format!("vector of length {}", v.len()),
                format!("{}x{}", self.rows, self.cols),
            ));
        }
        let mut out = vec![0.0; self.cols];
        for (i, &vi) in v.iter().enumerate() {
            axpy(vi, self.row(i), &mut out);
        }
        Ok(out)
    }
}

impl fmt::Display for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{} matrix", self.rows, self.cols)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor3 {
    dims: [usize; 3],
    data: Vec<f64>,
}

impl DenseTensor3 {
    pub fn zeros(dim1: usize, dim2: usize, dim3: usize) -> Self {
        DenseTensor3 {
            dims: [dim1, dim2, dim3],
            data: vec![0.0; dim1 * dim2 * dim3],
        }
    }

    pub fn from_vec(dim1: usize, dim2: usize, dim3: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != dim1 * dim2 * dim3 {
            return Err(Error::shape(
                "DenseTensor3::from_vec",
                format!("{dim1}x{dim2}x{dim3}"),
                format!("{} values", data.len()),
            ));
        }
        Ok(DenseTensor3 {
            dims: [dim1, dim2, dim3],
            data,
        })
    }

    pub fn from_fn(
        dim1: usize,
        dim2: usize,
        dim3: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(dim1 * dim2 * dim3);
        for i in 0..dim1 {
            for j in 0..dim2 {
                for k in 0..dim3 {
                    data.push(f(i, j, k));
                }
            }
        }
        DenseTensor3 {
            dims: [dim1, dim2, dim3],
            data,
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn dim(&self, mode: Mode) -> usize {
        match mode {
            Mode::One => self.dims[0],
            Mode::Two => self.dims[1],
            Mode::Three => self.dims[2],
        }
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.index(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let idx = self.index(i, j, k);
        self.data[idx] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn shape_string(&self) -> String {
        format!("{}x{}x{}", self.dims[0], self.dims[1], self.dims[2])
    }
}

impl fmt::Display for DenseTensor3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} tensor", self.shape_string())
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += alpha * x`
#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Contracts `t` with `m` along `mode`: `out[.., p, ..] = Σ_i m[p, i] · t[.., i, ..]`.
pub fn mode_n_product(t: &DenseTensor3, m: &DenseMatrix, mode: Mode) -> Result<DenseTensor3> {
    if m.cols() != t.dim(mode) {
        return Err(Error::shape(
            "mode_n_product",
            format!("{} (mode {:?})", t.shape_string(), mode),
            m,
        ));
    }
    let [d1, d2, d3] = t.dims();
    let mut out = match mode {
        Mode::One => DenseTensor3::zeros(m.rows(), d2, d3),
        Mode::Two => DenseTensor3::zeros(d1, m.rows(), d3),
        Mode::Three => DenseTensor3::zeros(d1, d2, m.rows()),
    };
    match mode {
        Mode::One => {
            // Each mode-1 slab is a contiguous block of d2*d3 values.
            let slab = d2 * d3;
            for p in 0..m.rows() {
                let dst = &mut out.data[p * slab..(p + 1) * slab];
                for i in 0..d1 {
                    axpy(m.get(p, i), &t.data[i * slab..(i + 1) * slab], dst);
                }
            }
        }
        Mode::Two => {
            for i in 0..d1 {
                for q in 0..m.rows() {
                    let dst_start = out.index(i, q, 0);
                    for j in 0..d2 {
                        let src_start = t.index(i, j, 0);
                        let w = m.get(q, j);
                        axpy(
                            w,
                            &t.data[src_start..src_start + d3],
                            &mut out.data[dst_start..dst_start + d3],
                        );
                    }
                }
            }
        }
        Mode::Three => {
            for i in 0..d1 {
                for j in 0..d2 {
                    let fiber = &t.data[t.index(i, j, 0)..t.index(i, j, 0) + d3];
                    for r in 0..m.rows() {
                        let idx = out.index(i, j, r);
                        out.data[idx] = dot(m.row(r), fiber);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Contracts `t` with the vector `v` along `mode`, returning the matrix over
/// the two remaining modes (in their original order).
pub fn mode_n_vec_product(t: &DenseTensor3, v: &[f64], mode: Mode) -> Result<DenseMatrix> {
    if v.len() != t.dim(mode) {
        return Err(Error::shape(
            "mode_n_vec_product",
            format!("{} (mode {:?})", t.shape_string(), mode),
            format!("vector of length {}", v.len()),
        ));
    }
    let [d1, d2, d3] = t.dims();
    let out = match mode {
        Mode::One => {
            let mut out = DenseMatrix::zeros(d2, d3);
            let slab = d2 * d3;
            for (i, &vi) in v.iter().enumerate() {
                axpy(vi, &t.data[i * slab..(i + 1) * slab], &mut out.data);
            }
            out
        }
        Mode::Two => {
            let mut out = DenseMatrix::zeros(d1, d3);
            for i in 0..d1 {
                let dst = out.row_mut(i);
                for (j, &vj) in v.iter().enumerate() {
                    let start = (i * d2 + j) * d3;
                    axpy(vj, &t.data[start..start + d3], dst);
                }
            }
            out
        }
        Mode::Three => {
            let mut out = DenseMatrix::zeros(d1, d2);
            for i in 0..d1 {
                for j in 0..d2 {
                    let start = (i * d2 + j) * d3;
                    out.data[i * d2 + j] = dot(&t.data[start..start + d3], v);
                }
            }
            out
        }
    };
    Ok(out)
}

pub fn matmul(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.cols() != b.rows() {
        return Err(Error::shape("matmul", a, b));
    }
    let mut out = DenseMatrix::zeros(a.rows(), b.cols());
    for i in 0..a.rows() {
        let dst = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for (k, &aik) in a.row(i).iter().enumerate() {
            axpy(aik, b.row(k), dst);
        }
    }
    Ok(out)
}

pub fn transpose(m: &DenseMatrix) -> DenseMatrix {
    DenseMatrix::from_fn(m.cols(), m.rows(), |i, j| m.get(j, i))
}
