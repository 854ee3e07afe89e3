//! Benchmark layer: analytic functions on grids, method runners, and
//! metrics.

mod functions;
mod harness;

pub use functions::{discretize, grid_points, reciprocal_chain, synthetic_separable, Function};
pub use harness::{
    csv_header, prepare, run_with_config, BenchmarkCase, EdgeSummary, GroundTruth, InputCache,
    MetricsReport, PreparedInput, Sizes, SAMPLE_POINTS,
};
