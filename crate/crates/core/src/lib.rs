//! Two-stage generative modelling: a hierarchical latent generator trained on
//! the ELBO, followed by a sequence of conditional energy-based priors learned
//! on the generator's base-noise space with short-run Langevin dynamics.

pub mod adam;
pub mod ebm;
pub mod error;
pub mod generator;
pub mod nn;
mod par;
pub mod rng;
pub mod stack;
pub mod synthesis;
pub mod tasks;
pub mod tensor;
pub mod uspace;

pub use error::{Error, Result};
pub use stack::{LatentStack, LayerSpec, UStack};
pub use tensor::{ParamSet, Tensor};
