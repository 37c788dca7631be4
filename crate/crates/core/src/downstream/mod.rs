//! Phase-sensitive downstream procedures: pruning, ensembling, weight
//! averaging (naive, permutation-aligned, across epochs, interpolated) and
//! fine-tuning, evaluated per grid cell.

mod grid;
mod hungarian;
mod methods;

pub use grid::{downstream_grid, save_downstream, DownstreamMethod, DownstreamRecord, DownstreamReport};
pub use hungarian::hungarian;
pub use methods::{
    align_permutations, average_aligned, average_epochs, average_last, average_naive,
    ensemble_accuracy, finetune, interpolate, permute, prune_magnitude, transfer_init,
    PermutationMap,
};
