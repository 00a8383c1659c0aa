//! Dense row-major `f64` tensors and the elementary kernels built on them.
//!
//! Everything here is deterministic: `matmul` accumulates in row-major order
//! (k-index innermost, ascending), so repeated runs produce identical bits.

use crate::error::{Error, Result};

/// Dense row-major tensor of 64-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Dimension(format!(
                "shape {:?} wants {} values, got {}",
                shape,
                expected,
                data.len()
            )));
        }
        if shape.contains(&0) {
            return Err(Error::Dimension(format!(
                "zero-sized dimension in shape {:?}",
                shape
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n: usize = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    /// 1-d tensor from a flat vector.
    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    /// 2-d tensor from row slices.
    pub fn matrix(rows: &[&[f64]]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            data.extend_from_slice(row);
        }
        Tensor::new(vec![r, c], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
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

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Column count of a 2-d tensor; 1 for vectors.
    pub fn cols(&self) -> usize {
        if self.shape.len() >= 2 {
            self.shape[1]
        } else {
            1
        }
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols() + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let c = self.cols();
        self.data[i * c + j] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Matrix product with deterministic row-major accumulation (inner index
/// ascending). Inner dimensions must agree.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape().len() != 2 || b.shape().len() != 2 {
        return Err(Error::Dimension("matmul expects 2-d operands".into()));
    }
    let (m, k) = (a.rows(), a.cols());
    let (k2, n) = (b.rows(), b.cols());
    if k != k2 {
        return Err(Error::Dimension(format!(
            "matmul inner dims disagree: {}x{} vs {}x{}",
            m, k, k2, n
        )));
    }
    let mut out = vec![0.0; m * n];
    let ad = a.data();
    let bd = b.data();
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0;
            for l in 0..k {
                acc += ad[i * k + l] * bd[l * n + j];
            }
            out[i * n + j] = acc;
        }
    }
    Tensor::new(vec![m, n], out)
}

/// Elementwise `max(0, x)`.
pub fn relu_forward(x: &Tensor) -> Tensor {
    let data = x.data().iter().map(|&v| v.max(0.0)).collect();
    Tensor {
        shape: x.shape().to_vec(),
        data,
    }
}

/// Passes `upstream` through where `x > 0`, zero elsewhere. The gradient at
/// exactly zero is defined as zero.
pub fn relu_backward(x: &Tensor, upstream: &Tensor) -> Result<Tensor> {
    if x.shape() != upstream.shape() {
        return Err(Error::Dimension(format!(
            "relu_backward shapes {:?} vs {:?}",
            x.shape(),
            upstream.shape()
        )));
    }
    let data = x
        .data()
        .iter()
        .zip(upstream.data())
        .map(|(&xi, &ui)| if xi > 0.0 { ui } else { 0.0 })
        .collect();
    Ok(Tensor {
        shape: x.shape().to_vec(),
        data,
    })
}

/// Numerically stable softmax over a flat slice (max-subtraction).
pub fn softmax_slice(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Softmax of a 1-d tensor.
pub fn softmax(logits: &Tensor) -> Tensor {
    Tensor::vector(softmax_slice(logits.data()))
}

/// Stable `log(sum(exp(x_i / t)))` scaled by `t` over a slice.
pub fn log_sum_exp_scaled(logits: &[f64], t: f64) -> f64 {
    let max = logits.iter().map(|&z| z / t).fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|&z| (z / t - max).exp()).sum();
    t * (max + sum.ln())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_identity() {
        let a = Tensor::matrix(&[&[1.0, 0.0], &[0.0, 1.0]]).unwrap();
        let b = Tensor::matrix(&[&[3.0, 4.0], &[5.0, 6.0]]).unwrap();
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c.data(), &[3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn matmul_hand_evaluated() {
        // 1*3 + 2*4 = 11
        let a = Tensor::matrix(&[&[1.0, 2.0]]).unwrap();
        let b = Tensor::matrix(&[&[3.0], &[4.0]]).unwrap();
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c.shape(), &[1, 1]);
        assert_eq!(c.data(), &[11.0]);
    }

    #[test]
    fn matmul_zero_left() {
        let a = Tensor::zeros(vec![2, 2]);
        let b = Tensor::matrix(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]).unwrap();
        let c = matmul(&a, &b).unwrap();
        assert!(c.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matmul_shape_mismatch() {
        let a = Tensor::zeros(vec![2, 3]);
        let b = Tensor::zeros(vec![2, 2]);
        assert!(matches!(matmul(&a, &b), Err(Error::Dimension(_))));
    }

    #[test]
    fn relu_cases() {
        let x = Tensor::vector(vec![-1.0, 0.0, 2.0]);
        assert_eq!(relu_forward(&x).data(), &[0.0, 0.0, 2.0]);

        let x = Tensor::vector(vec![-1.0, 2.0]);
        let up = Tensor::vector(vec![5.0, 5.0]);
        assert_eq!(relu_backward(&x, &up).unwrap().data(), &[0.0, 5.0]);

        // boundary convention: gradient at exactly 0 is 0
        let x = Tensor::vector(vec![0.0]);
        let up = Tensor::vector(vec![7.0]);
        assert_eq!(relu_backward(&x, &up).unwrap().data(), &[0.0]);
    }

    #[test]
    fn softmax_symmetry() {
        let p = softmax_slice(&[0.0, 0.0, 0.0]);
        for v in &p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_closed_form() {
        // e^{ln 2} / (e^{ln 2} + 1) = 2/3
        let p = softmax_slice(&[2.0f64.ln(), 0.0]);
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((p[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn softmax_no_overflow() {
        let p = softmax_slice(&[1000.0, 0.0]);
        assert!(p[0] > 1.0 - 1e-12);
        assert!(p[1] < 1e-12);
        assert!(p.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn softmax_sums_to_one() {
        let p = softmax_slice(&[0.3, -1.2, 4.0, 0.0]);
        let s: f64 = p.iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn log_sum_exp_examples() {
        // logits (0,0) at t=1 -> ln 2
        assert!((log_sum_exp_scaled(&[0.0, 0.0], 1.0) - 2.0f64.ln()).abs() < 1e-12);
        // logits (10,0) -> ln(e^10 + 1) ~= 10.0000454
        let v = log_sum_exp_scaled(&[10.0, 0.0], 1.0);
        assert!((v - (10f64.exp() + 1.0).ln()).abs() < 1e-12);
        assert!((v - 10.0000454).abs() < 1e-6);
    }
}
