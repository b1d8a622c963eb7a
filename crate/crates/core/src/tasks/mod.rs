//! Downstream uses of a trained prior: label coupling and OOD scoring.

pub mod coupling;
pub mod ood;

pub use coupling::{
    classify, controllable_sample, coupled_marginal_energy, train_coupled, CoupledEnergyParams, CoupledPrior,
    CoupledTrainConfig, GuidedPrior, SymbolBlock, SymbolSpec, SymbolVector,
};
pub use ood::{auroc, ood_score_inference, ood_scores_diffusion, ReverseSource};
