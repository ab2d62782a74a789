//! Orthonormal 2-D DCT-II and its inverse (DCT-III), applied per channel
//! over the two trailing dimensions.

use super::tensor::Tensor;
use crate::error::Result;

/// Row `k` holds the k-th orthonormal DCT-II basis vector of length `n`.
fn basis(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    let nf = n as f64;
    for k in 0..n {
        let scale = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
        for i in 0..n {
            let angle = std::f64::consts::PI * (2 * i + 1) as f64 * k as f64 / (2.0 * nf);
            m[k * n + i] = scale * angle.cos();
        }
    }
    m
}

/// `out = L · X · R^T` per channel when `forward`, else `out = L^T · X · R`.
fn apply(t: &Tensor, forward: bool) -> Result<Tensor> {
    let (c, h, w) = t.image_dims()?;
    let bh = basis(h);
    let bw = basis(w);
    let src = t.data();
    let mut out = vec![0.0f32; src.len()];
    let mut tmp = vec![0.0f64; h * w];
    for ch in 0..c {
        let plane = &src[ch * h * w..(ch + 1) * h * w];
        // Rows: tmp[i][k] = sum_j X[i][j] * B(k, j)
        for i in 0..h {
            for k in 0..w {
                let mut acc = 0.0;
                for j in 0..w {
                    let b = if forward { bw[k * w + j] } else { bw[j * w + k] };
                    acc += plane[i * w + j] as f64 * b;
                }
                tmp[i * w + k] = acc;
            }
        }
        // Columns: out[k][j] = sum_i B(k, i) * tmp[i][j]
        let dst = &mut out[ch * h * w..(ch + 1) * h * w];
        for k in 0..h {
            for j in 0..w {
                let mut acc = 0.0;
                for i in 0..h {
                    let b = if forward { bh[k * h + i] } else { bh[i * h + k] };
                    acc += b * tmp[i * w + j];
                }
                dst[k * w + j] = acc as f32;
            }
        }
    }
    Tensor::new(t.shape().to_vec(), out)
}

pub fn dct2(t: &Tensor) -> Result<Tensor> {
    apply(t, true)
}

pub fn idct2(t: &Tensor) -> Result<Tensor> {
    apply(t, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng::{uniform, Rng};

    #[test]
    fn constant_image_has_dc_only() {
        let c = 0.7f32;
        let img = Tensor::full(&[1, 4, 6], c);
        let d = dct2(&img).unwrap();
        let dc = d.data()[0] as f64;
        assert!((dc - c as f64 * (24.0f64).sqrt()).abs() < 1e-5);
        assert!(d.data()[1..].iter().all(|v| v.abs() < 1e-5));
    }

    #[test]
    fn zero_maps_to_zero() {
        let z = Tensor::zeros(&[2, 5, 5]);
        assert_eq!(dct2(&z).unwrap(), z);
    }

    #[test]
    fn round_trip_16() {
        let x = uniform(&mut Rng::new(4), &[1, 16, 16], -1.0, 1.0).unwrap();
        let back = idct2(&dct2(&x).unwrap()).unwrap();
        assert!(back.max_abs_diff(&x).unwrap() <= 1e-4);
    }

    #[test]
    fn rejects_rank_one() {
        assert!(dct2(&Tensor::zeros(&[8])).is_err());
    }

    #[test]
    fn parseval_holds() {
        let x = uniform(&mut Rng::new(9), &[3, 7, 5], -1.0, 1.0).unwrap();
        let d = dct2(&x).unwrap();
        let e1: f64 = x.data().iter().map(|&v| (v as f64).powi(2)).sum();
        let e2: f64 = d.data().iter().map(|&v| (v as f64).powi(2)).sum();
        assert!((e1 - e2).abs() < 1e-4 * e1);
    }
}
