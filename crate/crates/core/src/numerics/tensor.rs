use std::fmt;

use crate::error::{Error, Result};

/// Dense row-major `f32` array.
///
/// Every constructor rejects NaN and infinite values, and the arithmetic
/// helpers keep that guarantee for finite inputs of reasonable magnitude.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

/// Which L_p norm to take.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Norm {
    L1,
    L2,
    Inf,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::invalid(format!(
                "shape {:?} needs {} values, got {}",
                shape,
                numel,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Tensor::new"));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f32) -> Self {
        assert!(value.is_finite(), "fill value must be finite");
        let numel = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; numel],
        }
    }

    pub fn from_slice(values: &[f32]) -> Result<Self> {
        Self::new(vec![values.len()], values.to_vec())
    }

    /// Builds a tensor from raw parts whose finiteness the caller has already
    /// established.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f32>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        debug_assert!(data.iter().all(|v| v.is_finite()));
        Self { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Same data, new shape.
    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        Self::new(shape.to_vec(), self.data.clone())
    }

    /// Interprets the tensor as an image `(C, H, W)`. A rank-2 tensor is
    /// treated as a single channel.
    pub fn image_dims(&self) -> Result<(usize, usize, usize)> {
        match self.shape.as_slice() {
            &[h, w] => Ok((1, h, w)),
            &[c, h, w] => Ok((c, h, w)),
            other => Err(Error::invalid(format!(
                "expected an image of shape (C,H,W) or (H,W), got {other:?}"
            ))),
        }
    }

    pub fn ensure_same_shape(&self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                expected: self.shape.clone(),
                actual: other.shape.clone(),
            });
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor::from_parts(self.shape.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f32, f32) -> f32) -> Result<Tensor> {
        self.ensure_same_shape(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Tensor::from_parts(self.shape.clone(), data))
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, k: f32) -> Tensor {
        self.map(|v| v * k)
    }

    /// `self + k * other`
    pub fn axpy(&self, k: f32, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, |a, b| a + k * b)
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        self.ensure_same_shape(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    /// Elementwise sign: -1, 0 or +1.
    pub fn sign(&self) -> Tensor {
        self.map(sign_scalar)
    }

    pub fn abs(&self) -> Tensor {
        self.map(f32::abs)
    }

    pub fn clamp(&self, lo: f32, hi: f32) -> Tensor {
        self.map(|v| v.clamp(lo, hi))
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum()
    }

    pub fn max(&self) -> f32 {
        self.data.iter().copied().fold(f32::NEG_INFINITY, f32::max)
    }

    pub fn min(&self) -> f32 {
        self.data.iter().copied().fold(f32::INFINITY, f32::min)
    }

    pub fn dot(&self, other: &Tensor) -> Result<f64> {
        self.ensure_same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a as f64 * b as f64)
            .sum())
    }

    /// L_p norm over all elements, accumulated in `f64`.
    pub fn norm(&self, p: Norm) -> Result<f64> {
        if self.data.is_empty() {
            return Err(Error::invalid("norm of an empty tensor"));
        }
        let it = self.data.iter().map(|&v| (v as f64).abs());
        Ok(match p {
            Norm::L1 => it.sum(),
            Norm::L2 => it.map(|v| v * v).sum::<f64>().sqrt(),
            Norm::Inf => it.fold(0.0, f64::max),
        })
    }

    /// `self / ||self||_1`, or the zero tensor when the norm vanishes.
    pub fn l1_normalized(&self) -> Tensor {
        let n: f64 = self.data.iter().map(|&v| (v as f64).abs()).sum();
        if n == 0.0 {
            return Tensor::zeros(&self.shape);
        }
        Tensor::from_parts(
            self.shape.clone(),
            self.data.iter().map(|&v| (v as f64 / n) as f32).collect(),
        )
    }

    /// Largest |self_i - other_i|.
    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f64> {
        self.ensure_same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a as f64 - b as f64).abs())
            .fold(0.0, f64::max))
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const PREVIEW: usize = 8;
        write!(f, "Tensor{:?}", self.shape)?;
        let head = &self.data[..self.data.len().min(PREVIEW)];
        write!(f, "{head:?}")?;
        if self.data.len() > PREVIEW {
            write!(f, "..")?;
        }
        Ok(())
    }
}

fn sign_scalar(v: f32) -> f32 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Mean of equally shaped tensors, accumulated in `f64`.
///
/// Averaging `k` bit-identical tensors returns that tensor bit-exactly,
/// which the strategy reduction checks rely on.
pub(crate) fn mean_of(shape: &[usize], parts: &[Tensor]) -> Tensor {
    let numel: usize = shape.iter().product();
    let mut acc = vec![0.0f64; numel];
    for p in parts {
        debug_assert_eq!(p.shape(), shape);
        for (a, &v) in acc.iter_mut().zip(p.data()) {
            *a += v as f64;
        }
    }
    let k = parts.len().max(1) as f64;
    Tensor::from_parts(shape.to_vec(), acc.into_iter().map(|a| (a / k) as f32).collect())
}

/// Projects `x` onto the L∞ ball of radius `eps` around `x0`, intersected with
/// the box `[lo, hi]`.
///
/// The per-element bounds are tightened by one ulp where `f32` rounding of
/// `x0 ± eps` would otherwise land outside the ball, so the result satisfies
/// `|r - x0| <= eps` exactly.
pub fn project_linf(x0: &Tensor, x: &Tensor, eps: f32, lo: f32, hi: f32) -> Result<Tensor> {
    x0.ensure_same_shape(x)?;
    if !(eps >= 0.0) {
        return Err(Error::invalid(format!("eps must be >= 0, got {eps}")));
    }
    if !(lo <= hi) {
        return Err(Error::invalid(format!("empty range [{lo}, {hi}]")));
    }
    let data = x0
        .data()
        .iter()
        .zip(x.data())
        .map(|(&c, &v)| {
            let (bl, bh) = ball_bounds(c, eps);
            let lower = bl.max(lo);
            let upper = bh.min(hi);
            if lower > upper {
                // Ball and box do not intersect; the box wins.
                return v.clamp(lo, hi);
            }
            v.clamp(lower, upper)
        })
        .collect();
    Ok(Tensor::from_parts(x0.shape().to_vec(), data))
}

fn ball_bounds(center: f32, eps: f32) -> (f32, f32) {
    let c = center as f64;
    let e = eps as f64;
    let mut upper = center + eps;
    while upper as f64 - c > e {
        upper = upper.next_down();
    }
    let mut lower = center - eps;
    while c - lower as f64 > e {
        lower = lower.next_up();
    }
    (lower, upper)
}
