//! Five-phase taxonomy: a hierarchical decision tree over train loss, mode
//! connectivity, CKA and Hessian trace, with thresholds fit from labeled
//! reference models.

mod fit;
mod label;

pub use fit::{
    bootstrap_labels, bootstrap_thresholds, fit_thresholds, maximize_plateau, quantile, tree_accuracy,
    FitReport, ThresholdBounds,
};
pub use label::{
    classify, group_records, load_thresholds, phase_grid, save_thresholds, CellRef, MetricRecord,
    PhaseGrid, PhaseLabel, PhaseThresholds, ThresholdsFile,
};
