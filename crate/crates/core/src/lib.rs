//! Feature attribution by integrating model gradients along transferable
//! adversarial-attack trajectories.
//!
//! The crate is layered bottom-up:
//!
//! * [`numerics`]: tensors, seeded randomness, DCT and image transforms.
//! * [`model`]: small differentiable classifiers with analytic gradients.
//! * [`strategies`]: pluggable attack-gradient estimators (PGD, MIM, MIG,
//!   DIM, SI-NIM, TIM, SIA, GRA, FSPS and frequency exploration).
//! * [`attribution`]: the attack-path integrator plus IG, saliency and
//!   random baselines.
//! * [`evaluation`]: insertion/deletion curves and their AUCs.
//! * [`cli`]: datasets, experiment configs, sweeps and reports.

pub mod attribution;
pub mod cli;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod numerics;
pub mod strategies;

pub use error::{Error, Result};
pub use numerics::{Rng, Tensor};
