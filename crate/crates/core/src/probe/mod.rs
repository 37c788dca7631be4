//! Linear probes from raw weight statistics to performance and landscape
//! metrics, scored by held-out R².

mod features;
mod ridge;
mod run;

pub use features::{weight_features, WeightFeatures, STATS};
pub use ridge::{fit_ridge, r2_score, RidgeModel};
pub use run::{
    collect_probe_data, run_probe, save_probe_reports, ProbeData, ProbeOptions, ProbeReport,
    ProbeRow, ProbeSplit, ProbeTarget, PROBE_REPORT_FILE,
};
