//! Dense row-major tensors over `f64`.
//!
//! Rank 0 (scalar), 1 (vector) and 2 (matrix) cover every object in this
//! project. Matrix products go through `matrixmultiply::dgemm`; everything
//! else is plain loops.

use crate::error::{CoreError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expect: usize = shape.iter().product();
        if expect != data.len() {
            return Err(CoreError::shape(
                "Tensor::new",
                format!("shape {:?} wants {} values, got {}", shape, expect, data.len()),
            ));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![0.0; n] }
    }

    pub fn full(shape: &[usize], v: f64) -> Self {
        let n: usize = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![v; n] }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor { shape: vec![], data: vec![v] }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor { shape: vec![data.len()], data }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Self {
        let n: usize = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: (0..n).map(|i| f(i)).collect() }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
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

    /// Scalar payload of a one-element tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn rows(&self) -> usize {
        match self.shape.len() {
            2 => self.shape[0],
            1 => 1,
            _ => 1,
        }
    }

    pub fn cols(&self) -> usize {
        match self.shape.len() {
            2 => self.shape[1],
            1 => self.shape[0],
            _ => 1,
        }
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        debug_assert_eq!(self.shape.len(), 2);
        self.data[i * self.shape[1] + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert_eq!(self.shape.len(), 2);
        self.data[i * self.shape[1] + j] = v;
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(CoreError::shape(
                "zip_map",
                format!("{:?} vs {:?}", self.shape, other.shape),
            ));
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn transpose(&self) -> Tensor {
        assert_eq!(self.shape.len(), 2, "transpose expects a matrix");
        let (r, c) = (self.shape[0], self.shape[1]);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Tensor { shape: vec![c, r], data: out }
    }

    /// Column sums of a matrix (used to reduce row-broadcast gradients).
    pub fn col_sum(&self) -> Tensor {
        assert_eq!(self.shape.len(), 2);
        let (r, c) = (self.shape[0], self.shape[1]);
        let mut out = vec![0.0; c];
        for i in 0..r {
            for j in 0..c {
                out[j] += self.data[i * c + j];
            }
        }
        Tensor { shape: vec![c], data: out }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// `A · B` or `A · b` with optional transposition of either side.
    ///
    /// Accepted shapes: matrix × matrix and matrix × vector. Vectors on the
    /// right are treated as single columns, and the result is a vector.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        gemm(self, false, other, false)
    }
}

/// General matrix multiply with transposition flags, no copies.
pub fn gemm(a: &Tensor, ta: bool, b: &Tensor, tb: bool) -> Result<Tensor> {
    let a_mat = a.rank() == 2;
    let b_mat = b.rank() == 2;
    if !a_mat && a.rank() != 1 || !b_mat && b.rank() != 1 {
        return Err(CoreError::shape("matmul", "operands must be rank 1 or 2".to_string()));
    }
    // Logical dims after transposition. A vector is (len, 1) on the right,
    // (1, len) would be unused; we only support vector as rhs.
    let (ar, ac) = if a_mat {
        if ta {
            (a.shape()[1], a.shape()[0])
        } else {
            (a.shape()[0], a.shape()[1])
        }
    } else {
        return Err(CoreError::shape("matmul", "left operand must be a matrix".to_string()));
    };
    let (br, bc, vec_rhs) = if b_mat {
        if tb {
            (b.shape()[1], b.shape()[0], false)
        } else {
            (b.shape()[0], b.shape()[1], false)
        }
    } else {
        (b.len(), 1, true)
    };
    if ac != br {
        return Err(CoreError::shape(
            "matmul",
            format!("inner dims {} vs {} (shapes {:?}/{:?})", ac, br, a.shape(), b.shape()),
        ));
    }
    let mut out = vec![0.0; ar * bc];
    let (rsa, csa) = strides(a.shape()[0], a.shape()[1], ta);
    let (rsb, csb) = if b_mat { strides(b.shape()[0], b.shape()[1], tb) } else { (1, 1) };
    unsafe {
        matrixmultiply::dgemm(
            ar,
            ac,
            bc,
            1.0,
            a.data().as_ptr(),
            rsa,
            csa,
            b.data().as_ptr(),
            rsb,
            csb,
            0.0,
            out.as_mut_ptr(),
            bc as isize,
            1,
        );
    }
    if vec_rhs {
        Ok(Tensor { shape: vec![ar], data: out })
    } else {
        Ok(Tensor { shape: vec![ar, bc], data: out })
    }
}

fn strides(rows: usize, cols: usize, transposed: bool) -> (isize, isize) {
    let _ = rows;
    if transposed {
        (1, cols as isize)
    } else {
        (cols as isize, 1)
    }
}
