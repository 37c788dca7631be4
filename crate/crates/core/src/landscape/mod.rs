//! Loss-landscape metrics: Hessian top eigenvalue and trace, Bézier mode
//! connectivity, and CKA similarity of output logits.

pub mod connectivity;
pub mod curvature;
pub mod objective;
pub mod similarity;
pub mod zoo;

pub use connectivity::{fit_bezier, mode_connectivity, t_grid, BezierCurve, BezierOptions, ConnectivityReport, TStar};
pub use curvature::{
    curvature, hessian_trace, top_eigenvalue, CurvatureOptions, CurvatureReport, EigenEstimate, TraceEstimate,
};
pub use objective::{MlpLoss, Objective, Quadratic, Scalar1d};
pub use similarity::{cka_similarity, SimilarityReport};
pub use zoo::{compute_zoo_metrics, pairwise_metrics, MetricOptions, PairOptions, PairwiseReport};
