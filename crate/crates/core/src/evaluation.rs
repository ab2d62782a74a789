//! Insertion and deletion curves.
//!
//! Pixels are revealed (insertion) or removed (deletion) in the order given by
//! an attribution map's `pixel_rank`, all channels at once. The ranked pixels
//! are split into `steps` equal groups with any remainder attached to the
//! last group; the curve is scored after each group. The score is the model's
//! probability for its original prediction on the clean input, and the AUC is
//! the trapezoidal integral over the fraction of pixels changed.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::attribution::{pixel_layout, AttributionMap};
use crate::error::{Error, Result};
use crate::model::DifferentiableModel;
use crate::numerics::{conv2d_same, gaussian_kernel, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct EvalCurve {
    pub fractions: Vec<f64>,
    pub scores: Vec<f64>,
    pub auc: f64,
}

impl EvalCurve {
    pub fn new(fractions: Vec<f64>, scores: Vec<f64>) -> Result<Self> {
        if fractions.len() != scores.len() || fractions.len() < 2 {
            return Err(Error::invalid("a curve needs matching fractions and scores, at least 2 points"));
        }
        if fractions[0] != 0.0 || *fractions.last().unwrap() != 1.0 {
            return Err(Error::invalid("curve fractions must run from 0 to 1"));
        }
        if fractions.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("curve fractions must be strictly increasing"));
        }
        let auc = trapezoid(&fractions, &scores);
        Ok(Self {
            fractions,
            scores,
            auc,
        })
    }
}

fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| (x[1] - x[0]) * (y[0] + y[1]) / 2.0)
        .sum()
}

/// Trapezoidal area under `curve`.
pub fn auc(curve: &EvalCurve) -> f64 {
    trapezoid(&curve.fractions, &curve.scores)
}

/// Reference image that pixels are inserted into or deleted towards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BaselineMode {
    /// All zeros.
    #[default]
    Zero,
    /// The input blurred by an 11x11 Gaussian kernel with std 5.
    Blur,
}

impl BaselineMode {
    pub fn build(&self, x: &Tensor) -> Result<Tensor> {
        match self {
            BaselineMode::Zero => Ok(Tensor::zeros(x.shape())),
            BaselineMode::Blur => conv2d_same(x, &gaussian_kernel(11, 5.0)?),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            BaselineMode::Zero => "zero",
            BaselineMode::Blur => "blur",
        }
    }
}

impl FromStr for BaselineMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" | "black" => Ok(BaselineMode::Zero),
            "blur" => Ok(BaselineMode::Blur),
            other => Err(Error::invalid(format!("unknown baseline mode `{other}`"))),
        }
    }
}

impl fmt::Display for BaselineMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Cumulative pixel counts at each checkpoint, `0..=P`.
pub fn checkpoints(num_pixels: usize, steps: usize) -> Vec<usize> {
    let groups = steps.clamp(1, num_pixels.max(1));
    let size = num_pixels / groups;
    let mut counts: Vec<usize> = (0..groups).map(|k| k * size).collect();
    counts.push(num_pixels);
    counts
}

#[derive(Clone, Copy)]
enum Direction {
    Insert,
    Delete,
}

fn sweep_curve(
    model: &dyn DifferentiableModel,
    x: &Tensor,
    map: &AttributionMap,
    steps: usize,
    baseline: &Tensor,
    direction: Direction,
) -> Result<EvalCurve> {
    x.ensure_same_shape(baseline)?;
    x.ensure_same_shape(&map.values)?;
    if steps == 0 {
        return Err(Error::invalid("curve needs steps >= 1"));
    }
    let (channels, pixels) = pixel_layout(x.shape())?;
    if map.pixel_rank.len() != pixels {
        return Err(Error::invalid(format!(
            "ranking covers {} pixels, image has {pixels}",
            map.pixel_rank.len()
        )));
    }
    let reference = model.forward(x)?.label;
    let (start, fill) = match direction {
        Direction::Insert => (baseline, x),
        Direction::Delete => (x, baseline),
    };
    let mut canvas = start.data().to_vec();
    let counts = checkpoints(pixels, steps);
    let mut scores = Vec::with_capacity(counts.len());
    let mut done = 0;
    for &count in &counts {
        for &p in &map.pixel_rank[done..count] {
            for ch in 0..channels {
                canvas[ch * pixels + p] = fill.data()[ch * pixels + p];
            }
        }
        done = count;
        let img = Tensor::new(x.shape().to_vec(), canvas.clone())?;
        scores.push(model.forward(&img)?.confidence(reference));
    }
    let fractions = counts.iter().map(|&c| c as f64 / pixels as f64).collect();
    EvalCurve::new(fractions, scores)
}

/// Starts at `baseline` and copies the top-ranked pixels of `x` in.
pub fn insertion_curve(
    model: &dyn DifferentiableModel,
    x: &Tensor,
    map: &AttributionMap,
    steps: usize,
    baseline: &Tensor,
) -> Result<EvalCurve> {
    sweep_curve(model, x, map, steps, baseline, Direction::Insert)
}

/// Starts at `x` and overwrites the top-ranked pixels with `baseline`.
pub fn deletion_curve(
    model: &dyn DifferentiableModel,
    x: &Tensor,
    map: &AttributionMap,
    steps: usize,
    baseline: &Tensor,
) -> Result<EvalCurve> {
    sweep_curve(model, x, map, steps, baseline, Direction::Delete)
}

/// One row of the per-sample results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub sample_id: usize,
    pub method: String,
    pub strategy: String,
    pub seed: u64,
    pub insertion_auc: f64,
    pub deletion_auc: f64,
    pub success_step: Option<usize>,
    #[serde(rename = "steps_T")]
    pub steps_t: usize,
    pub sweep_axis: String,
    pub sweep_value: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub count: usize,
    pub mean_insertion: f64,
    pub mean_deletion: f64,
}

/// Per-image AUCs averaged over samples.
pub fn aggregate(rows: &[ResultRow]) -> Result<Summary> {
    if rows.is_empty() {
        return Err(Error::invalid("cannot aggregate an empty result list"));
    }
    let n = rows.len() as f64;
    Ok(Summary {
        count: rows.len(),
        mean_insertion: rows.iter().map(|r| r.insertion_auc).sum::<f64>() / n,
        mean_deletion: rows.iter().map(|r| r.deletion_auc).sum::<f64>() / n,
    })
}

/// One-sided exact sign test: probability of at least `wins` successes out of
/// `wins + losses` fair coin flips. Ties are dropped by the caller.
pub fn sign_test(wins: usize, losses: usize) -> f64 {
    let n = wins + losses;
    if n == 0 {
        return 1.0;
    }
    let ln_half_n = n as f64 * 0.5f64.ln();
    let mut ln_choose = 0.0f64; // ln C(n, 0)
    let mut tail = 0.0;
    for k in 0..=n {
        if k > 0 {
            ln_choose += ((n - k + 1) as f64).ln() - (k as f64).ln();
        }
        if k >= wins {
            tail += (ln_choose + ln_half_n).exp();
        }
    }
    tail.min(1.0)
}

/// Paired comparison: `(wins, losses)` of `a` over `b` where a win means
/// `a_i > b_i`; exact ties are dropped.
pub fn paired_wins(a: &[f64], b: &[f64]) -> (usize, usize) {
    a.iter().zip(b).fold((0, 0), |(w, l), (x, y)| {
        if x > y {
            (w + 1, l)
        } else if x < y {
            (w, l + 1)
        } else {
            (w, l)
        }
    })
}
