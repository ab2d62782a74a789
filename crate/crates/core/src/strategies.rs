//! Attack-gradient strategies.
//!
//! Each strategy maps the current [`AttackState`] to the update direction
//! `g(x^{t+1})` that the path integrator signs and steps along. Strategies
//! that keep momentum read the previous direction from `state.momentum`; the
//! integrator stores the returned direction back there after every step.
//!
//! Gradients taken at a transformed input (`D(x)`, `S_i(x)`, block or
//! spectral transforms) are carried back to `x` through the transform's
//! Jacobian, so every strategy returns a direction in the coordinates of `x`.
//! For the scale copies of SI-NIM the Jacobian is the scalar `2^-i`, which the
//! L1 normalization cancels.
//!
//! Any L1 normalization of a zero vector contributes zero, since dead ReLU
//! regions make vanishing input gradients reachable.

use std::fmt;
use std::str::FromStr;

use crate::attribution::integrated_gradients;
use crate::error::{Error, Result};
use crate::model::{DifferentiableModel, Objective};
use crate::numerics::{
    block_transform_traced, conv2d_same, dct2, gaussian, gaussian_kernel, idct2, mean_of,
    resize_pad_traced, uniform, BlockOp, Norm, Rng, Tensor,
};

/// Hyperparameters shared by every strategy.
///
/// `eps` lives on the 0–255 pixel scale; [`AttackConfig::eps_norm`] gives the
/// budget in `[0, 1]` image units.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackConfig {
    pub eps: f32,
    pub steps: usize,
    /// Step size in `[0, 1]` units; `None` means `eps_norm / steps`.
    pub alpha: Option<f32>,
    pub mu: f32,
    /// Ensemble size for DIM, SIA and GRA.
    pub ensemble: usize,
    /// Number of scale copies for SI-NIM.
    pub scales: usize,
    /// Number of spectral samples for FSPS and frequency exploration.
    pub freq_samples: usize,
    /// Interior Riemann steps of the IG inside MIG.
    pub ig_steps: usize,
    /// Diversity probability.
    pub dp: f32,
    /// Spectral mask half-width: masks are drawn from `U[1 - rho, 1 + rho]`.
    pub rho: f32,
    /// Spectral noise std in units of `eps_norm`.
    pub sigma: f32,
    /// GRA neighbourhood half-width in units of `eps_norm`.
    pub beta: f32,
    /// Smallest resize fraction of the diversity transform.
    pub low_frac: f32,
    pub tim_kernel: usize,
    pub tim_std: f32,
    pub sia_splits: usize,
    pub sia_ops: Vec<BlockOp>,
    /// Std of the Gaussian noise added to every strategy output (`g' = g + eta`).
    pub gradient_noise: f32,
    pub seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            eps: 16.0,
            steps: 20,
            alpha: None,
            mu: 1.0,
            ensemble: 8,
            scales: 5,
            freq_samples: 8,
            ig_steps: 20,
            dp: 0.5,
            rho: 0.5,
            sigma: 1.0,
            beta: 4.0,
            low_frac: 0.9,
            tim_kernel: 7,
            tim_std: 3.0,
            sia_splits: 3,
            sia_ops: BlockOp::ALL.to_vec(),
            gradient_noise: 0.0,
            seed: 0,
        }
    }
}

impl AttackConfig {
    pub fn eps_norm(&self) -> f32 {
        self.eps / 255.0
    }

    pub fn alpha(&self) -> f32 {
        self.alpha
            .unwrap_or_else(|| self.eps_norm() / self.steps.max(1) as f32)
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::invalid(format!("attack config: {what}")))
            }
        };
        check(self.eps >= 0.0 && self.eps.is_finite(), "eps must be >= 0")?;
        check(self.steps >= 1, "steps must be >= 1")?;
        check(self.alpha() > 0.0 && self.alpha().is_finite(), "alpha must be > 0")?;
        check(self.mu.is_finite(), "mu must be finite")?;
        check(self.ensemble >= 1 && self.scales >= 1, "ensemble sizes must be >= 1")?;
        check(self.freq_samples >= 1 && self.ig_steps >= 1, "sample counts must be >= 1")?;
        check((0.0..=1.0).contains(&self.dp), "dp must be in [0, 1]")?;
        check((0.0..=1.0).contains(&self.rho), "rho must be in [0, 1]")?;
        check(self.sigma >= 0.0 && self.sigma.is_finite(), "sigma must be >= 0")?;
        check(self.beta >= 0.0 && self.beta.is_finite(), "beta must be >= 0")?;
        check(self.low_frac > 0.0 && self.low_frac <= 1.0, "low_frac must be in (0, 1]")?;
        check(self.tim_kernel % 2 == 1, "tim_kernel must be odd")?;
        check(self.sia_splits >= 1 && !self.sia_ops.is_empty(), "bad SIA settings")?;
        check(self.gradient_noise >= 0.0, "gradient_noise must be >= 0")
    }
}

/// Per-trajectory attack state.
#[derive(Debug, Clone)]
pub struct AttackState {
    pub x0: Tensor,
    pub x_t: Tensor,
    /// Previous direction `g_t`; zero before the first step.
    pub momentum: Tensor,
    pub t: usize,
    pub rng: Rng,
    /// First step at which the prediction left the target label.
    pub success_step: Option<usize>,
}

impl AttackState {
    pub fn new(x0: &Tensor, seed: u64) -> Self {
        Self {
            x0: x0.clone(),
            x_t: x0.clone(),
            momentum: Tensor::zeros(x0.shape()),
            t: 0,
            rng: Rng::new(seed),
            success_step: None,
        }
    }
}

/// Canonical strategy ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StrategyId {
    Bim,
    Pgd,
    Mim,
    Mig,
    Dim,
    Sinim,
    Tim,
    Sia,
    Gra,
    Fsps,
    AttExplore,
}

impl StrategyId {
    pub const ALL: [StrategyId; 11] = [
        StrategyId::Bim,
        StrategyId::Pgd,
        StrategyId::Mim,
        StrategyId::Mig,
        StrategyId::Dim,
        StrategyId::Sinim,
        StrategyId::Tim,
        StrategyId::Sia,
        StrategyId::Gra,
        StrategyId::Fsps,
        StrategyId::AttExplore,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            StrategyId::Bim => "bim",
            StrategyId::Pgd => "pgd",
            StrategyId::Mim => "mim",
            StrategyId::Mig => "mig",
            StrategyId::Dim => "dim",
            StrategyId::Sinim => "sinim",
            StrategyId::Tim => "tim",
            StrategyId::Sia => "sia",
            StrategyId::Gra => "gra",
            StrategyId::Fsps => "fsps",
            StrategyId::AttExplore => "attexplore",
        }
    }

    /// Whether the strategy draws from the random stream.
    pub fn is_stochastic(&self) -> bool {
        matches!(
            self,
            StrategyId::Dim | StrategyId::Sia | StrategyId::Gra | StrategyId::Fsps | StrategyId::AttExplore
        )
    }
}

impl FromStr for StrategyId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyId::ALL
            .iter()
            .copied()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| Error::UnknownStrategy(s.to_string()))
    }
}

impl fmt::Display for StrategyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Dispatches to the strategy named by `id`.
pub fn step_gradient(
    id: StrategyId,
    state: &mut AttackState,
    model: &dyn DifferentiableModel,
    y: usize,
    cfg: &AttackConfig,
) -> Result<Tensor> {
    match id {
        // "bim" is the same raw-gradient update under its historical name.
        StrategyId::Bim | StrategyId::Pgd => grad_pgd(state, model, y, cfg),
        StrategyId::Mim => grad_mim(state, model, y, cfg),
        StrategyId::Mig => grad_mig(state, model, y, cfg),
        StrategyId::Dim => grad_dim(state, model, y, cfg),
        StrategyId::Sinim => grad_sinim(state, model, y, cfg),
        StrategyId::Tim => grad_tim(state, model, y, cfg),
        StrategyId::Sia => grad_sia(state, model, y, cfg),
        StrategyId::Gra => grad_gra(state, model, y, cfg),
        StrategyId::Fsps => grad_fsps(state, model, y, cfg),
        StrategyId::AttExplore => grad_attexplore(state, model, y, cfg),
    }
}

/// `mu * g_t + term`
fn with_momentum(state: &AttackState, mu: f32, term: &Tensor) -> Result<Tensor> {
    state.momentum.scale(mu).add(term)
}

/// Raw loss gradient at `x_t`.
pub fn grad_pgd(
    state: &mut AttackState,
    model: &dyn DifferentiableModel,
    y: usize,
    _cfg: &AttackConfig,
) -> Result<Tensor> {
    model.input_gradient(&state.x_t, y)
}

/// `mu * g_t + grad / ||grad||_1`
pub fn grad_mim(
    state: &mut AttackState,
    model: &dyn DifferentiableModel,
    y: usize,
    cfg: &AttackConfig,
) -> Result<Tensor> {
    let g = model.input_gradient(&state.x_t, y)?;
    with_momentum(state, cfg.mu, &g.l1_normalized())
}

/// `mu * g_t + IG / ||IG||_1`, with IG of the loss from a black baseline.
pub fn grad_mig(
    state: &mut AttackState,
    model: &dyn DifferentiableModel,
    y: usize,
    cfg: &AttackConfig,
) -> Result<Tensor> {
    let baseline = Tensor::zeros(state.x_t.shape());
    let ig = integrated_gradients(model, &state.x_t, y, &baseline, cfg.ig_steps, Objective::Loss)?;
    with_momentum(state, cfg.mu, &ig.values.l1_normalized())
}

/// Mean over `ensemble` draws of the gradient through the random
/// resize-and-pad transform, applied with probability `dp`.
pub fn grad_dim(
    state: &mut AttackState,
    model: &dyn DifferentiableModel,
    y: usize,
    cfg: &AttackConfig,
) -> Result<Tensor> {
    let mut parts = Vec::with_capacity(cfg.ensemble);
    for _ in 0..cfg.ensemble {
        parts.push(diverse_gradient(&state.x_t, &mut state.rng, model, y, cfg)?);
    }
    Ok(mean_of(state.x_t.shape(), &parts))
}

/// Gradient at `D(x)` pulled back to `x`, where `D` is resize-and-pad with
/// probability `dp` and the identity otherwise.
fn diverse_gradient(
    x: &Tensor,
    rng: &mut Rng,
    model: &dyn DifferentiableModel,
    y: usize,
    cfg: &AttackConfig,
) -> Result<Tensor> {
    if rng.next_f32() < cfg.dp {
        let (xd, pullback) = resize_pad_traced(x, rng, cfg.low_frac)?;
        pullback.apply(&model.input_gradient(&xd, y)?)
    } else {
        model.input_gradient(x, y)
    }
}

/// Nesterov look-ahead with scale copies:
/// `mu * g_t + mean_i normalize(grad at (x_t + alpha*mu*g_t) / 2^i)`.
pub fn grad_sinim(
    state: &mut AttackState,
    model: &dyn DifferentiableModel,
    y: usize,
    cfg: &AttackConfig,
) -> Result<Tensor> {
    let x_nest = state.x_t.axpy(cfg.alpha() * cfg.mu, &state.momentum)?;
    let mut parts = Vec::with_capacity(cfg.scales);
    for i in 0..cfg.scales {
        let scaled = x_nest.scale(1.0 / (1u64 << i.min(63)) as f32);
        parts.push(model.input_gradient(&scaled, y)?.l1_normalized());
    }
    with_momentum(state, cfg.mu, &mean_of(state.x_t.shape(), &parts))
}

/// Loss gradient smoothed by a normalized Gaussian kernel, the convolutional
/// form of averaging over translations.
pub fn grad_tim(
    state: &mut AttackState,
    model: &dyn DifferentiableModel,
    y: usize,
    cfg: &AttackConfig,
) -> Result<Tensor> {
    state.x_t.image_dims()?;
    let kernel = gaussian_kernel(cfg.tim_kernel, cfg.tim_std)?;
    conv2d_same(&model.input_gradient(&state.x_t, y)?, &kernel)
}

/// Mean over `ensemble` draws of the gradient through a random block-wise
/// structure-invariant transform.
pub fn grad_sia(
    state: &mut AttackState,
    model: &dyn DifferentiableModel,
    y: usize,
    cfg: &AttackConfig,
) -> Result<Tensor> {
    state.x_t.image_dims()?;
    let mut parts = Vec::with_capacity(cfg.ensemble);
    for _ in 0..cfg.ensemble {
        let (xt, pullback) =
            block_transform_traced(&state.x_t, &mut state.rng, cfg.sia_splits, &cfg.sia_ops)?;
        parts.push(pullback.apply(&model.input_gradient(&xt, y)?)?);
    }
    Ok(mean_of(state.x_t.shape(), &parts))
}

/// Cosine weight between two gradients; zero when either vanishes.
pub fn gra_weight(g_t: &Tensor, g_i: &Tensor) -> Result<f64> {
    let n_t = g_t.norm(Norm::L2)?;
    let n_i = g_i.norm(Norm::L2)?;
    if n_t == 0.0 || n_i == 0.0 {
        return Ok(0.0);
    }
    Ok((g_t.dot(g_i)? / (n_t * n_i)).clamp(-1.0, 1.0))
}

/// `mu * g_t + mean_i [c_i G_t + (1 - c_i) G_i]` with neighbour gradients
/// `G_i` sampled uniformly in the box of half-width `beta * eps_norm`.
pub fn grad_gra(
    state: &mut AttackState,
    model: &dyn DifferentiableModel,
    y: usize,
    cfg: &AttackConfig,
) -> Result<Tensor> {
    let g_t = model.input_gradient(&state.x_t, y)?;
    let radius = cfg.beta * cfg.eps_norm();
    let mut parts = Vec::with_capacity(cfg.ensemble);
    for _ in 0..cfg.ensemble {
        let gamma = uniform(&mut state.rng, state.x_t.shape(), -radius, radius)?;
        let g_i = model.input_gradient(&state.x_t.add(&gamma)?, y)?;
        let c = gra_weight(&g_t, &g_i)?;
        // c*G_t + (1-c)*G_i, written so that G_i == G_t yields G_t exactly.
        let data = g_t
            .data()
            .iter()
            .zip(g_i.data())
            .map(|(&a, &b)| (b as f64 + c * (a as f64 - b as f64)) as f32)
            .collect();
        parts.push(Tensor::new(g_t.shape().to_vec(), data)?);
    }
    with_momentum(state, cfg.mu, &mean_of(g_t.shape(), &parts))
}

/// One spectral draw: multiplicative mask and additive noise on the DCT
/// coefficients. `None` when `rho == 0` and `sigma == 0`, where the spectral
/// transform is the identity.
struct SpectralDraw {
    mask: Tensor,
    noise: Tensor,
}

fn spectral_draws(x: &Tensor, rng: &mut Rng, cfg: &AttackConfig) -> Result<Vec<Option<SpectralDraw>>> {
    let mut draws = Vec::with_capacity(cfg.freq_samples);
    for _ in 0..cfg.freq_samples {
        if cfg.rho == 0.0 && cfg.sigma == 0.0 {
            draws.push(None);
            continue;
        }
        let noise = gaussian(rng, x.shape(), 0.0, cfg.sigma * cfg.eps_norm())?;
        let mask = uniform(rng, x.shape(), 1.0 - cfg.rho, 1.0 + cfg.rho)?;
        draws.push(Some(SpectralDraw { mask, noise }));
    }
    Ok(draws)
}

/// `x_idct = idct2(dct2(x) * mask + noise)`, or `x` itself for the identity draw.
fn spectral_input(x: &Tensor, draw: &Option<SpectralDraw>) -> Result<Tensor> {
    match draw {
        None => Ok(x.clone()),
        Some(d) => idct2(&dct2(x)?.mul(&d.mask)?.add(&d.noise)?),
    }
}

/// Pulls a gradient at `x_idct` back to `x`: `idct2(mask * dct2(g))`.
fn spectral_pullback(grad: Tensor, draw: &Option<SpectralDraw>) -> Result<Tensor> {
    match draw {
        None => Ok(grad),
        Some(d) => idct2(&dct2(&grad)?.mul(&d.mask)?),
    }
}

/// `mu * g_t + mean_i normalize(grad through x_idct^(i))`.
pub fn grad_fsps(
    state: &mut AttackState,
    model: &dyn DifferentiableModel,
    y: usize,
    cfg: &AttackConfig,
) -> Result<Tensor> {
    state.x_t.image_dims()?;
    let draws = spectral_draws(&state.x_t, &mut state.rng, cfg)?;
    let mut parts = Vec::with_capacity(draws.len());
    for draw in &draws {
        let xs = spectral_input(&state.x_t, draw)?;
        let g = spectral_pullback(model.input_gradient(&xs, y)?, draw)?;
        parts.push(g.l1_normalized());
    }
    with_momentum(state, cfg.mu, &mean_of(state.x_t.shape(), &parts))
}

/// Frequency exploration: the spectral sampling of [`grad_fsps`], with each
/// spectral sample additionally passed through the resize-and-pad diversity
/// transform with probability `dp`.
///
/// All spectral draws are taken before any diversity draw, so with `dp = 1`
/// and `low_frac = 1` this returns exactly what [`grad_fsps`] returns.
pub fn grad_attexplore(
    state: &mut AttackState,
    model: &dyn DifferentiableModel,
    y: usize,
    cfg: &AttackConfig,
) -> Result<Tensor> {
    state.x_t.image_dims()?;
    let draws = spectral_draws(&state.x_t, &mut state.rng, cfg)?;
    let mut parts = Vec::with_capacity(draws.len());
    for draw in &draws {
        let xs = spectral_input(&state.x_t, draw)?;
        let g = diverse_gradient(&xs, &mut state.rng, model, y, cfg)?;
        parts.push(spectral_pullback(g, draw)?.l1_normalized());
    }
    with_momentum(state, cfg.mu, &mean_of(state.x_t.shape(), &parts))
}

/// `g + N(0, sigma^2)` elementwise; the identity when `sigma == 0`.
pub fn add_gradient_noise(g: &Tensor, rng: &mut Rng, sigma: f32) -> Result<Tensor> {
    if sigma == 0.0 {
        return Ok(g.clone());
    }
    g.add(&gaussian(rng, g.shape(), 0.0, sigma)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Layer, ModelSpec, Network, Weights};

    fn linear_model(seed: u64, c: usize, h: usize, w: usize) -> Network {
        Network::init(ModelSpec::linear(c * h * w, 3), seed).unwrap()
    }

    fn image(seed: u64, c: usize, h: usize, w: usize) -> Tensor {
        uniform(&mut Rng::new(seed), &[c, h, w], 0.0, 1.0).unwrap()
    }

    #[test]
    fn ids_round_trip() {
        for id in StrategyId::ALL {
            assert_eq!(id.as_str().parse::<StrategyId>().unwrap(), id);
        }
        assert!(matches!("naa".parse::<StrategyId>(), Err(Error::UnknownStrategy(_))));
    }

    #[test]
    fn default_config_alpha() {
        let cfg = AttackConfig::default();
        assert_eq!(cfg.eps, 16.0);
        assert_eq!(cfg.rho, 0.5);
        assert_eq!(cfg.dp, 0.5);
        assert_eq!(cfg.beta, 4.0);
        assert!((cfg.alpha() - 16.0 / 255.0 / 20.0).abs() < 1e-9);
        cfg.validate().unwrap();
        assert!(AttackConfig { dp: 1.5, ..cfg.clone() }.validate().is_err());
        assert!(AttackConfig { steps: 0, ..cfg }.validate().is_err());
    }

    #[test]
    fn pgd_on_zero_model_is_zero() {
        let spec = ModelSpec::linear(16, 2);
        let net = Network::new(spec.clone(), Weights::zeros(&spec)).unwrap();
        let x = image(1, 1, 4, 4);
        let mut st = AttackState::new(&x, 0);
        let cfg = AttackConfig::default();
        for id in StrategyId::ALL {
            let g = step_gradient(id, &mut st, &net, 0, &cfg).unwrap();
            assert_eq!(g, Tensor::zeros(x.shape()), "{id}");
        }
    }

    #[test]
    fn mim_first_step_has_unit_l1() {
        let net = linear_model(2, 1, 4, 4);
        let x = image(3, 1, 4, 4);
        let mut st = AttackState::new(&x, 0);
        let g = grad_mim(&mut st, &net, 1, &AttackConfig { mu: 0.7, ..Default::default() }).unwrap();
        assert!((g.norm(Norm::L1).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn mim_accumulates_with_unit_momentum() {
        let net = linear_model(2, 1, 4, 4);
        let x = image(3, 1, 4, 4);
        let cfg = AttackConfig { mu: 1.0, ..Default::default() };
        let mut st = AttackState::new(&x, 0);
        let g1 = grad_mim(&mut st, &net, 1, &cfg).unwrap();
        st.momentum = g1.clone();
        let g2 = grad_mim(&mut st, &net, 1, &cfg).unwrap();
        assert!(g2.max_abs_diff(&g1.scale(2.0)).unwrap() < 1e-7);

        let cfg0 = AttackConfig { mu: 0.0, ..cfg };
        let g3 = grad_mim(&mut st, &net, 1, &cfg0).unwrap();
        assert_eq!(g3, g1);
    }

    #[test]
    fn sinim_summands_bounded_and_scale_exact() {
        let net = linear_model(4, 1, 5, 5);
        let x = image(5, 1, 5, 5);
        let mut st = AttackState::new(&x, 0);
        let g = grad_sinim(&mut st, &net, 0, &AttackConfig { mu: 0.0, ..Default::default() }).unwrap();
        assert!(g.norm(Norm::L1).unwrap() <= 1.0 + 1e-6);
        let s2 = x.scale(1.0 / 4.0);
        for (a, b) in s2.data().iter().zip(x.data()) {
            assert_eq!(*a, b / 4.0);
        }
    }

    #[test]
    fn tim_preserves_constant_gradient_interior() {
        // A model whose loss gradient is the same at every pixel: one class
        // weight row of ones against a zero row.
        let n = 81;
        let spec = ModelSpec::linear(n, 2);
        let mut wdata = vec![1.0f32; n];
        wdata.extend(vec![0.0f32; n]);
        let net = Network::new(
            spec,
            Weights {
                layers: vec![Layer {
                    weight: Tensor::new(vec![2, n], wdata).unwrap(),
                    bias: Tensor::zeros(&[2]),
                }],
            },
        )
        .unwrap();
        let x = image(6, 1, 9, 9);
        let mut st = AttackState::new(&x, 0);
        let cfg = AttackConfig { tim_kernel: 3, tim_std: 1.0, ..Default::default() };
        let raw = grad_pgd(&mut st, &net, 0, &cfg).unwrap();
        let g = grad_tim(&mut st, &net, 0, &cfg).unwrap();
        for i in 1..8 {
            for j in 1..8 {
                assert!((g.data()[i * 9 + j] - raw.data()[i * 9 + j]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn tim_rejects_flat_input() {
        let net = Network::init(ModelSpec::linear(4, 2), 0).unwrap();
        let mut st = AttackState::new(&Tensor::zeros(&[4]), 0);
        assert!(grad_tim(&mut st, &net, 0, &AttackConfig::default()).is_err());
    }

    #[test]
    fn gra_weights_in_unit_interval() {
        let net = Network::init(ModelSpec::mlp(36, &[10], 3), 7).unwrap();
        let x = image(8, 1, 6, 6);
        let g_t = net.input_gradient(&x, 0).unwrap();
        let mut rng = Rng::new(1);
        for _ in 0..50 {
            let gamma = uniform(&mut rng, x.shape(), -0.3, 0.3).unwrap();
            let g_i = net.input_gradient(&x.add(&gamma).unwrap(), 0).unwrap();
            let c = gra_weight(&g_t, &g_i).unwrap();
            assert!((-1.0..=1.0).contains(&c));
        }
        assert_eq!(gra_weight(&g_t, &Tensor::zeros(x.shape())).unwrap(), 0.0);
    }

    #[test]
    fn gra_beta_zero_is_momentum_plus_gradient() {
        let net = Network::init(ModelSpec::mlp(16, &[8], 3), 3).unwrap();
        let x = image(9, 1, 4, 4);
        let mut st = AttackState::new(&x, 0);
        st.momentum = image(10, 1, 4, 4);
        let cfg = AttackConfig { beta: 0.0, mu: 0.5, ..Default::default() };
        let g = grad_gra(&mut st, &net, 2, &cfg).unwrap();
        let g_t = net.input_gradient(&x, 2).unwrap();
        assert_eq!(g, st.momentum.scale(0.5).add(&g_t).unwrap());
    }

    #[test]
    fn gra_small_neighbourhood_on_linear_model() {
        // Tiny box: neighbour gradients differ from G_t only at second order.
        let net = linear_model(11, 1, 6, 6);
        let x = image(12, 1, 6, 6);
        let mut st = AttackState::new(&x, 4);
        st.momentum = image(13, 1, 6, 6).scale(0.01);
        // beta * eps_norm = 1e-4
        let cfg = AttackConfig { beta: 1e-4 * 255.0 / 16.0, mu: 0.9, ..Default::default() };
        let g = grad_gra(&mut st, &net, 1, &cfg).unwrap();
        let expect = st.momentum.scale(0.9).add(&net.input_gradient(&x, 1).unwrap()).unwrap();
        let rel = g.max_abs_diff(&expect).unwrap() / expect.norm(Norm::Inf).unwrap();
        assert!(rel <= 1e-3, "relative error {rel}");
    }

    #[test]
    fn fsps_summands_normalized_and_deterministic() {
        let net = Network::init(ModelSpec::mlp(64, &[16], 3), 5).unwrap();
        let x = image(14, 1, 8, 8);
        let cfg = AttackConfig { mu: 0.0, freq_samples: 1, ..Default::default() };
        let mut a = AttackState::new(&x, 21);
        let mut b = AttackState::new(&x, 21);
        let ga = grad_fsps(&mut a, &net, 0, &cfg).unwrap();
        let gb = grad_fsps(&mut b, &net, 0, &cfg).unwrap();
        assert_eq!(ga, gb);
        assert!((ga.norm(Norm::L1).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn gradient_noise_identity_and_mean() {
        let g = image(15, 1, 2, 2);
        let mut rng = Rng::new(0);
        assert_eq!(add_gradient_noise(&g, &mut rng, 0.0).unwrap(), g);
        let a = add_gradient_noise(&g, &mut Rng::new(3), 0.2).unwrap();
        let b = add_gradient_noise(&g, &mut Rng::new(3), 0.2).unwrap();
        assert_eq!(a, b);

        let sigma = 0.2f32;
        let draws = 10_000;
        let mut sums = vec![0.0f64; g.len()];
        let mut rng = Rng::new(17);
        for _ in 0..draws {
            let noisy = add_gradient_noise(&g, &mut rng, sigma).unwrap();
            for (s, &v) in sums.iter_mut().zip(noisy.data()) {
                *s += v as f64;
            }
        }
        for (s, &v) in sums.iter().zip(g.data()) {
            let dev = (s / draws as f64 - v as f64).abs();
            assert!(dev <= 3.0 * sigma as f64 / 100.0, "deviation {dev}");
        }
    }
}
