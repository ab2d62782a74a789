//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use std::sync::OnceLock;

use advexplain::cli::{synthetic_blobs, BlobSpec, Dataset};
use advexplain::model::{train, DifferentiableModel, Layer, ModelSpec, Network, Weights};
use advexplain::Tensor;

/// Training split of the synthetic benchmark.
pub const TRAIN_SPEC: BlobSpec = BlobSpec {
    classes: 3,
    per_class: 40,
    side: 16,
    seed: 7,
};

/// Held-out split: 102 samples drawn from a different noise stream.
pub const TEST_SPEC: BlobSpec = BlobSpec {
    classes: 3,
    per_class: 34,
    side: 16,
    seed: 11,
};

pub const TRAIN_LR: f64 = 0.05;
pub const TRAIN_EPOCHS: usize = 500;

pub fn mlp_spec() -> ModelSpec {
    ModelSpec::mlp(16 * 16, &[64, 32], 3)
}

/// The benchmark MLP, trained once per test binary.
pub fn trained_mlp() -> &'static Network {
    static NET: OnceLock<Network> = OnceLock::new();
    NET.get_or_init(|| {
        let data = synthetic_blobs(&TRAIN_SPEC).unwrap();
        let w = train(&mlp_spec(), &data.pairs(), TRAIN_LR, TRAIN_EPOCHS, 0).unwrap();
        Network::new(mlp_spec(), w).unwrap()
    })
}

/// A linear-softmax model trained on the same data.
pub fn trained_linear() -> &'static Network {
    static NET: OnceLock<Network> = OnceLock::new();
    NET.get_or_init(|| {
        let spec = ModelSpec::linear(16 * 16, 3);
        let data = synthetic_blobs(&TRAIN_SPEC).unwrap();
        let w = train(&spec, &data.pairs(), TRAIN_LR, 200, 0).unwrap();
        Network::new(spec, w).unwrap()
    })
}

pub fn test_set() -> &'static Dataset {
    static DATA: OnceLock<Dataset> = OnceLock::new();
    DATA.get_or_init(|| synthetic_blobs(&TEST_SPEC).unwrap())
}

pub fn linear_net(w: &[f32], b: &[f32], classes: usize) -> Network {
    let n = w.len() / classes;
    Network::new(
        ModelSpec::linear(n, classes),
        Weights {
            layers: vec![Layer {
                weight: Tensor::new(vec![classes, n], w.to_vec()).unwrap(),
                bias: Tensor::new(vec![classes], b.to_vec()).unwrap(),
            }],
        },
    )
    .unwrap()
}

/// Plain f64 copy of a network's parameters: `(weight rows, bias, out, in)`.
#[derive(Clone)]
pub struct RefNet {
    pub layers: Vec<(Vec<f64>, Vec<f64>, usize, usize)>,
}

impl RefNet {
    pub fn of(net: &Network) -> Self {
        let layers = net
            .weights()
            .layers
            .iter()
            .map(|l| {
                let (o, i) = (l.weight.shape()[0], l.weight.shape()[1]);
                (
                    l.weight.data().iter().map(|&v| v as f64).collect(),
                    l.bias.data().iter().map(|&v| v as f64).collect(),
                    o,
                    i,
                )
            })
            .collect();
        Self { layers }
    }

    /// Logits plus the sign pattern (`z > 0`) of every hidden unit.
    pub fn forward(&self, x: &[f64]) -> (Vec<f64>, Vec<bool>) {
        let mut a = x.to_vec();
        let mut pattern = Vec::new();
        for (l, (w, b, o, i)) in self.layers.iter().enumerate() {
            let mut z = vec![0.0; *o];
            for r in 0..*o {
                let mut s = b[r];
                for c in 0..*i {
                    s += w[r * i + c] * a[c];
                }
                z[r] = s;
            }
            if l + 1 < self.layers.len() {
                pattern.extend(z.iter().map(|&v| v > 0.0));
                a = z.into_iter().map(|v| v.max(0.0)).collect();
            } else {
                a = z;
            }
        }
        (a, pattern)
    }

    /// Cross-entropy of class `y`, computed without max subtraction
    /// shortcuts shared with the library.
    pub fn loss(&self, x: &[f64], y: usize) -> f64 {
        let (z, _) = self.forward(x);
        let m = z.iter().cloned().fold(f64::MIN, f64::max);
        let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        lse - z[y]
    }

    pub fn probs(&self, x: &[f64]) -> Vec<f64> {
        let (z, _) = self.forward(x);
        let m = z.iter().cloned().fold(f64::MIN, f64::max);
        let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
        let s: f64 = e.iter().sum();
        e.iter().map(|v| v / s).collect()
    }

    /// Closed-form input gradient of the loss for a single-layer model:
    /// `W^T (p - e_y)`.
    pub fn linear_grad(&self, x: &[f64], y: usize) -> Vec<f64> {
        assert_eq!(self.layers.len(), 1);
        let (w, _, o, i) = &self.layers[0];
        let mut p = self.probs(x);
        p[y] -= 1.0;
        (0..*i).map(|c| (0..*o).map(|r| w[r * i + c] * p[r]).sum()).collect()
    }
}

pub fn to_f64(t: &Tensor) -> Vec<f64> {
    t.data().iter().map(|&v| v as f64).collect()
}

/// Right-Riemann integrated gradients of the loss from a black baseline,
/// using the closed-form linear gradient.
pub fn linear_ig_oracle(r: &RefNet, x: &[f64], y: usize, m: usize) -> Vec<f64> {
    let mut acc = vec![0.0; x.len()];
    for k in 1..=m {
        let pt: Vec<f64> = x.iter().map(|v| v * k as f64 / m as f64).collect();
        for (a, g) in acc.iter_mut().zip(r.linear_grad(&pt, y)) {
            *a += g;
        }
    }
    acc.iter().zip(x).map(|(a, xi)| xi * a / m as f64).collect()
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Every permutation of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, rest: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if rest.is_empty() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..rest.len() {
            let v = rest.remove(i);
            prefix.push(v);
            rec(prefix, rest, out);
            prefix.pop();
            rest.insert(i, v);
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut (0..n).collect(), &mut out);
    out
}

/// Scores after revealing (`insert`) or removing the first `k` pixels of
/// `order`, for `k = 0..=len`, on a single-channel image.
pub fn order_curve(
    model: &dyn DifferentiableModel,
    x: &Tensor,
    baseline: &Tensor,
    order: &[usize],
    insert: bool,
) -> Vec<f64> {
    let reference = model.forward(x).unwrap().label;
    (0..=order.len())
        .map(|k| {
            let mut img: Vec<f32> = if insert { baseline.data().to_vec() } else { x.data().to_vec() };
            for &p in &order[..k] {
                img[p] = if insert { x.data()[p] } else { baseline.data()[p] };
            }
            let img = Tensor::new(x.shape().to_vec(), img).unwrap();
            model.forward(&img).unwrap().confidence(reference)
        })
        .collect()
}

pub fn trapezoid(scores: &[f64]) -> f64 {
    let n = (scores.len() - 1) as f64;
    scores.windows(2).map(|w| (w[0] + w[1]) / 2.0 / n).sum()
}

/// Largest `|analytic - fd|` over input coordinates, relative to the
/// infinity norm of the finite-difference gradient. Coordinates whose
/// `+-h` probes change a ReLU's sign pattern are skipped (the loss is not
/// differentiable across the kink); returns the error and the skip count.
pub fn input_fd_error(net: &Network, x: &Tensor, y: usize, h: f64) -> (f64, usize) {
    let r = RefNet::of(net);
    let analytic = to_f64(&net.input_gradient(x, y).unwrap());
    let x0 = to_f64(x);
    let (_, centre) = r.forward(&x0);
    let mut fd = vec![None; x0.len()];
    let mut skipped = 0;
    for i in 0..x0.len() {
        let mut xp = x0.clone();
        let mut xm = x0.clone();
        xp[i] += h;
        xm[i] -= h;
        if r.forward(&xp).1 != centre || r.forward(&xm).1 != centre {
            skipped += 1;
            continue;
        }
        fd[i] = Some((r.loss(&xp, y) - r.loss(&xm, y)) / (2.0 * h));
    }
    let scale = fd.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    let err = fd
        .iter()
        .zip(&analytic)
        .filter_map(|(f, a)| f.map(|f| (f - a).abs()))
        .fold(0.0, f64::max);
    (err / scale, skipped)
}

/// Same check for `count` weight coordinates per layer, picked by `pick`.
pub fn weight_fd_error(
    net: &Network,
    x: &Tensor,
    y: usize,
    h: f64,
    mut pick: impl FnMut(usize) -> usize,
    count: usize,
) -> (f64, usize) {
    let base = RefNet::of(net);
    let grads = net.weight_gradient(x, y).unwrap();
    let x0 = to_f64(x);
    let (_, centre) = base.forward(&x0);
    let mut worst: f64 = 0.0;
    let mut skipped = 0;
    for (l, layer) in grads.layers.iter().enumerate() {
        let gw = to_f64(&layer.weight);
        let gb = to_f64(&layer.bias);
        let scale = gw.iter().chain(&gb).fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
        for k in 0..count + 1 {
            // The last probe is a bias coordinate.
            let is_bias = k == count;
            let idx = pick(if is_bias { gb.len() } else { gw.len() });
            let probe = |d: f64| {
                let mut r = base.clone();
                if is_bias {
                    r.layers[l].1[idx] += d;
                } else {
                    r.layers[l].0[idx] += d;
                }
                r
            };
            let (rp, rm) = (probe(h), probe(-h));
            if rp.forward(&x0).1 != centre || rm.forward(&x0).1 != centre {
                skipped += 1;
                continue;
            }
            let fd = (rp.loss(&x0, y) - rm.loss(&x0, y)) / (2.0 * h);
            let a = if is_bias { gb[idx] } else { gw[idx] };
            worst = worst.max((fd - a).abs() / scale);
        }
    }
    (worst, skipped)
}
