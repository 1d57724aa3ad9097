//! Distribution distances, coverage diagnostics and metric reports.

mod report;
mod sweep;
mod tarp;
mod wasserstein;

pub use report::{fmt_float, MetricReport, MetricRow, CSV_HEADER};
pub use sweep::{swd_sweep, sweep_data, sweep_recover_seed, ModelRecoverer, Recoverer, SweepConfig, SweepOutput, TruthOracle};
pub use tarp::{tarp_coverage, tarp_deviation, CoverageCurve, TarpConfig};
pub use wasserstein::{sliced_wasserstein, wasserstein1_1d, SwdConfig};
