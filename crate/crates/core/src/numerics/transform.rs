//! Image-space transforms used by the input-diversity strategies.
//!
//! The randomized transforms come in two flavours: a plain form returning the
//! transformed image, and a `*_traced` form that also returns a [`Pullback`]
//! so gradients taken at the transformed image can be carried back to the
//! original pixels.

use super::rng::Rng;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Sparse Jacobian of a transform where each output element depends on at
/// most one input element: `d out[i] / d in[src[i]] = gain[i]`.
#[derive(Debug, Clone)]
pub struct Pullback {
    input_shape: Vec<usize>,
    src: Vec<Option<usize>>,
    gain: Vec<f32>,
}

impl Pullback {
    fn identity(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            input_shape: shape.to_vec(),
            src: (0..n).map(Some).collect(),
            gain: vec![1.0; n],
        }
    }

    /// Vector-Jacobian product: maps a gradient on the output back to the input.
    pub fn apply(&self, grad_out: &Tensor) -> Result<Tensor> {
        if grad_out.len() != self.src.len() {
            return Err(Error::invalid(format!(
                "pullback expects {} values, got {}",
                self.src.len(),
                grad_out.len()
            )));
        }
        let mut out = vec![0.0f32; self.input_shape.iter().product()];
        for ((src, &g), &gain) in self.src.iter().zip(grad_out.data()).zip(&self.gain) {
            if let Some(s) = *src {
                out[s] += gain * g;
            }
        }
        Tensor::new(self.input_shape.clone(), out)
    }
}

/// Nearest-neighbour downscale to a random size in
/// `[ceil(low_frac*H), H] x [ceil(low_frac*W), W]`, pasted at a random offset
/// on a zero canvas of the original size.
pub fn resize_pad(img: &Tensor, rng: &mut Rng, low_frac: f32) -> Result<Tensor> {
    resize_pad_traced(img, rng, low_frac).map(|(t, _)| t)
}

pub fn resize_pad_traced(img: &Tensor, rng: &mut Rng, low_frac: f32) -> Result<(Tensor, Pullback)> {
    if !(low_frac > 0.0 && low_frac <= 1.0) {
        return Err(Error::invalid(format!("low_frac must be in (0, 1], got {low_frac}")));
    }
    let (c, h, w) = img.image_dims()?;
    let min_h = ((low_frac as f64 * h as f64).ceil() as usize).clamp(1, h);
    let min_w = ((low_frac as f64 * w as f64).ceil() as usize).clamp(1, w);
    let nh = rng.range_inclusive(min_h, h);
    let nw = rng.range_inclusive(min_w, w);
    let top = rng.range_inclusive(0, h - nh);
    let left = rng.range_inclusive(0, w - nw);

    let n = c * h * w;
    let mut src = vec![None; n];
    for ch in 0..c {
        for i in 0..nh {
            let si = i * h / nh;
            for j in 0..nw {
                let sj = j * w / nw;
                src[ch * h * w + (top + i) * w + left + j] = Some(ch * h * w + si * w + sj);
            }
        }
    }
    let data = src
        .iter()
        .map(|s| s.map_or(0.0, |s| img.data()[s]))
        .collect();
    let out = Tensor::new(img.shape().to_vec(), data)?;
    let pb = Pullback {
        input_shape: img.shape().to_vec(),
        src,
        gain: vec![1.0; n],
    };
    Ok((out, pb))
}

/// Shifts the image by `(dy, dx)` pixels, zero-filling the vacated region.
pub fn translate(img: &Tensor, dy: isize, dx: isize) -> Result<Tensor> {
    let (c, h, w) = img.image_dims()?;
    if dy.unsigned_abs() >= h || dx.unsigned_abs() >= w {
        return Err(Error::invalid(format!(
            "shift ({dy}, {dx}) out of range for {h}x{w} image"
        )));
    }
    let mut out = vec![0.0f32; img.len()];
    for ch in 0..c {
        for i in 0..h {
            let si = i as isize - dy;
            if si < 0 || si >= h as isize {
                continue;
            }
            for j in 0..w {
                let sj = j as isize - dx;
                if sj < 0 || sj >= w as isize {
                    continue;
                }
                out[ch * h * w + i * w + j] = img.data()[ch * h * w + si as usize * w + sj as usize];
            }
        }
    }
    Tensor::new(img.shape().to_vec(), out)
}

/// Same-size 2-D convolution with zero padding, per channel. The kernel must
/// be square with odd side.
pub fn conv2d_same(img: &Tensor, kernel: &Tensor) -> Result<Tensor> {
    let (c, h, w) = img.image_dims()?;
    let k = match kernel.shape() {
        &[a, b] if a == b => a,
        other => {
            return Err(Error::invalid(format!("kernel must be k x k, got {other:?}")));
        }
    };
    if k % 2 == 0 {
        return Err(Error::invalid(format!("kernel side must be odd, got {k}")));
    }
    let r = (k / 2) as isize;
    let kd = kernel.data();
    let src = img.data();
    let mut out = vec![0.0f32; img.len()];
    for ch in 0..c {
        let plane = &src[ch * h * w..(ch + 1) * h * w];
        for i in 0..h as isize {
            for j in 0..w as isize {
                let mut acc = 0.0f64;
                for a in 0..k as isize {
                    let si = i - a + r;
                    if si < 0 || si >= h as isize {
                        continue;
                    }
                    for b in 0..k as isize {
                        let sj = j - b + r;
                        if sj < 0 || sj >= w as isize {
                            continue;
                        }
                        acc += kd[(a * k as isize + b) as usize] as f64
                            * plane[(si * w as isize + sj) as usize] as f64;
                    }
                }
                out[ch * h * w + (i * w as isize + j) as usize] = acc as f32;
            }
        }
    }
    Tensor::new(img.shape().to_vec(), out)
}

/// Normalized `size x size` Gaussian kernel.
pub fn gaussian_kernel(size: usize, std: f32) -> Result<Tensor> {
    if size % 2 == 0 {
        return Err(Error::invalid(format!("kernel side must be odd, got {size}")));
    }
    if size == 1 {
        return Tensor::new(vec![1, 1], vec![1.0]);
    }
    if !(std > 0.0) {
        return Err(Error::invalid(format!("kernel std must be > 0, got {std}")));
    }
    let r = (size / 2) as f64;
    let s2 = 2.0 * (std as f64).powi(2);
    let mut vals = Vec::with_capacity(size * size);
    for i in 0..size {
        for j in 0..size {
            let (y, x) = (i as f64 - r, j as f64 - r);
            vals.push((-(x * x + y * y) / s2).exp());
        }
    }
    let total: f64 = vals.iter().sum();
    Tensor::new(vec![size, size], vals.into_iter().map(|v| (v / total) as f32).collect())
}

/// Per-block operation of the structure-invariant transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockOp {
    Identity,
    FlipVertical,
    FlipHorizontal,
    /// Multiply by `u ~ U[0.5, 1.5]`, then clamp to `[0, 1]`.
    Scale,
    /// Add `N(0, 0.05^2)` noise, then clamp to `[0, 1]`.
    Noise,
}

impl BlockOp {
    pub const ALL: [BlockOp; 5] = [
        BlockOp::Identity,
        BlockOp::FlipVertical,
        BlockOp::FlipHorizontal,
        BlockOp::Scale,
        BlockOp::Noise,
    ];
}

const BLOCK_NOISE_STD: f64 = 0.05;

/// Splits the image into `splits x splits` blocks (the last row/column of
/// blocks absorbs any remainder) and applies one randomly drawn
/// [`BlockOp`] from the full set to each block.
pub fn block_transform(img: &Tensor, rng: &mut Rng, splits: usize) -> Result<Tensor> {
    block_transform_traced(img, rng, splits, &BlockOp::ALL).map(|(t, _)| t)
}

fn block_edges(n: usize, splits: usize) -> Vec<(usize, usize)> {
    let splits = splits.clamp(1, n.max(1));
    let size = n / splits;
    (0..splits)
        .map(|b| {
            let start = b * size;
            let end = if b + 1 == splits { n } else { start + size };
            (start, end)
        })
        .collect()
}

/// [`block_transform`] restricted to `ops`, returning the pullback as well.
pub fn block_transform_traced(
    img: &Tensor,
    rng: &mut Rng,
    splits: usize,
    ops: &[BlockOp],
) -> Result<(Tensor, Pullback)> {
    if splits == 0 {
        return Err(Error::invalid("splits must be >= 1"));
    }
    if ops.is_empty() {
        return Err(Error::invalid("block transform needs at least one op"));
    }
    let (c, h, w) = img.image_dims()?;
    let src_data = img.data();
    let mut out = src_data.to_vec();
    let mut pb = Pullback::identity(img.shape());

    for &(r0, r1) in &block_edges(h, splits) {
        for &(c0, c1) in &block_edges(w, splits) {
            let op = ops[rng.next_below(ops.len() as u64) as usize];
            match op {
                BlockOp::Identity => {}
                BlockOp::FlipVertical | BlockOp::FlipHorizontal => {
                    for ch in 0..c {
                        for i in r0..r1 {
                            for j in c0..c1 {
                                let (si, sj) = if op == BlockOp::FlipVertical {
                                    (r0 + r1 - 1 - i, j)
                                } else {
                                    (i, c0 + c1 - 1 - j)
                                };
                                let o = ch * h * w + i * w + j;
                                let s = ch * h * w + si * w + sj;
                                out[o] = src_data[s];
                                pb.src[o] = Some(s);
                            }
                        }
                    }
                }
                BlockOp::Scale => {
                    let u = 0.5 + rng.next_f64();
                    for ch in 0..c {
                        for i in r0..r1 {
                            for j in c0..c1 {
                                let o = ch * h * w + i * w + j;
                                let raw = src_data[o] as f64 * u;
                                out[o] = raw.clamp(0.0, 1.0) as f32;
                                pb.gain[o] = if (0.0..=1.0).contains(&raw) { u as f32 } else { 0.0 };
                            }
                        }
                    }
                }
                BlockOp::Noise => {
                    for ch in 0..c {
                        for i in r0..r1 {
                            for j in c0..c1 {
                                let o = ch * h * w + i * w + j;
                                let raw = src_data[o] as f64 + BLOCK_NOISE_STD * rng.next_gaussian();
                                out[o] = raw.clamp(0.0, 1.0) as f32;
                                pb.gain[o] = if (0.0..=1.0).contains(&raw) { 1.0 } else { 0.0 };
                            }
                        }
                    }
                }
            }
        }
    }
    Ok((Tensor::new(img.shape().to_vec(), out)?, pb))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng::uniform;

    fn ramp(c: usize, h: usize, w: usize) -> Tensor {
        let n = c * h * w;
        Tensor::new(vec![c, h, w], (0..n).map(|i| (i + 1) as f32 / n as f32).collect()).unwrap()
    }

    #[test]
    fn resize_full_frac_is_identity() {
        let img = ramp(2, 6, 5);
        let (out, pb) = resize_pad_traced(&img, &mut Rng::new(3), 1.0).unwrap();
        assert_eq!(out, img);
        let g = ramp(2, 6, 5);
        assert_eq!(pb.apply(&g).unwrap(), g);
    }

    #[test]
    fn resize_half_frac_region_bounds() {
        let img = Tensor::full(&[1, 8, 8], 1.0);
        for seed in 0..50 {
            let out = resize_pad(&img, &mut Rng::new(seed), 0.5).unwrap();
            let rows: Vec<usize> = (0..8)
                .filter(|&i| (0..8).any(|j| out.data()[i * 8 + j] != 0.0))
                .collect();
            let cols: Vec<usize> = (0..8)
                .filter(|&j| (0..8).any(|i| out.data()[i * 8 + j] != 0.0))
                .collect();
            assert!((4..=8).contains(&rows.len()), "{rows:?}");
            assert!((4..=8).contains(&cols.len()), "{cols:?}");
            let count = out.data().iter().filter(|&&v| v != 0.0).count();
            assert_eq!(count, rows.len() * cols.len());
        }
    }

    #[test]
    fn resize_preserves_value_range() {
        let img = uniform(&mut Rng::new(1), &[3, 9, 7], 0.0, 1.0).unwrap();
        for seed in 0..20 {
            let out = resize_pad(&img, &mut Rng::new(seed), 0.6).unwrap();
            assert!(out.max() <= img.max());
        }
    }

    #[test]
    fn translate_examples() {
        let img = ramp(1, 4, 4);
        assert_eq!(translate(&img, 0, 0).unwrap(), img);
        let back = translate(&translate(&img, 1, 0).unwrap(), -1, 0).unwrap();
        for i in 0..3 {
            for j in 0..4 {
                assert_eq!(back.data()[i * 4 + j], img.data()[i * 4 + j]);
            }
        }
        assert!(back.data()[12..].iter().all(|&v| v == 0.0));
        assert!(translate(&img, 2, -3).unwrap().sum() <= img.sum());
        assert!(translate(&img, 4, 0).is_err());
    }

    #[test]
    fn conv_identity_and_box() {
        let img = ramp(2, 5, 5);
        let one = Tensor::new(vec![1, 1], vec![1.0]).unwrap();
        assert_eq!(conv2d_same(&img, &one).unwrap(), img);

        let flat = Tensor::full(&[1, 6, 6], 0.4);
        let bx = Tensor::full(&[3, 3], 1.0 / 9.0);
        let out = conv2d_same(&flat, &bx).unwrap();
        for i in 1..5 {
            for j in 1..5 {
                assert!((out.data()[i * 6 + j] - 0.4).abs() < 1e-6);
            }
        }
        assert!(conv2d_same(&img, &Tensor::zeros(&[2, 2])).is_err());
    }

    #[test]
    fn conv_stamps_kernel_at_delta() {
        let mut d = vec![0.0; 49];
        d[3 * 7 + 2] = 1.0;
        let delta = Tensor::new(vec![1, 7, 7], d).unwrap();
        let kernel = Tensor::new(vec![3, 3], (1..=9).map(|v| v as f32).collect()).unwrap();
        let out = conv2d_same(&delta, &kernel).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                assert_eq!(out.data()[(2 + a) * 7 + (1 + b)], kernel.data()[a * 3 + b]);
            }
        }
        assert!((out.sum() - 45.0).abs() < 1e-9);
    }

    #[test]
    fn gaussian_kernel_is_normalized() {
        let k = gaussian_kernel(7, 3.0).unwrap();
        assert!((k.sum() - 1.0).abs() < 1e-6);
        assert_eq!(gaussian_kernel(1, 3.0).unwrap().data(), &[1.0]);
    }

    #[test]
    fn block_identity_only_is_noop() {
        let img = ramp(1, 9, 9);
        let (out, pb) =
            block_transform_traced(&img, &mut Rng::new(0), 1, &[BlockOp::Identity]).unwrap();
        assert_eq!(out, img);
        assert_eq!(pb.apply(&img).unwrap(), img);
    }

    #[test]
    fn block_output_in_unit_range_and_deterministic() {
        let img = uniform(&mut Rng::new(5), &[3, 10, 11], 0.0, 1.0).unwrap();
        for seed in 0..30 {
            let a = block_transform(&img, &mut Rng::new(seed), 3).unwrap();
            let b = block_transform(&img, &mut Rng::new(seed), 3).unwrap();
            assert_eq!(a, b);
            assert!(a.min() >= 0.0 && a.max() <= 1.0);
        }
    }

    #[test]
    fn block_edges_absorb_remainder() {
        assert_eq!(block_edges(10, 3), vec![(0, 3), (3, 6), (6, 10)]);
        assert_eq!(block_edges(2, 3), vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn flip_pullback_is_transpose() {
        let img = ramp(1, 4, 4);
        let (out, pb) =
            block_transform_traced(&img, &mut Rng::new(1), 1, &[BlockOp::FlipHorizontal]).unwrap();
        // A flip is its own inverse, so pulling the output back restores the input.
        assert_eq!(pb.apply(&out).unwrap(), img);
    }
}
