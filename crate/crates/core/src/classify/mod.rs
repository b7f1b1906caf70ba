//! Sigmoid MLP classifiers trained by Levenberg-Marquardt, with an inner
//! leave-one-out search over hidden size and selected-feature count.

mod grid;
mod mlp;

pub use grid::{effective_k_grid, grid_search, loo_accuracy, loo_posteriors, GridOutcome, GridPoint};
pub use mlp::{
    loss_trace, train_mlp, ClassifierPosterior, MlpModel, Network, Standardizer, TrainConfig,
    OUTPUTS,
};

#[cfg(test)]
mod tests;
