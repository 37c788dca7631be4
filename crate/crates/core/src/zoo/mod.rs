//! Planning, training and persisting a load × temperature × seed grid.

pub mod checkpoint;
pub mod grid;
pub mod io;
pub mod store;
pub mod table;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use grid::{cell_key, plan_grid, CellStatus, GridCell, GridSpec};
pub use store::{
    run_grid, CellConfig, CellEntry, CellMetrics, CellResults, CurvatureMetrics, PairMetrics,
    CONFIG_FILE, MANIFEST_FILE, METRICS_FILE, RESULTS_FILE,
    RunOptions, Zoo, ZooManifest,
};
pub use table::{
    collect_field, collect_grid, export_grid_csv, grid_to_csv, parse_grid_csv, read_grid_csv,
    seed_mean, CsvToken, GridField, GridTable,
};
