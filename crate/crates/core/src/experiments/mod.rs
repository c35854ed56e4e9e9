//! End-to-end experiment drivers: subsample, corrupt labels, train, evaluate
//! the bound and the held-out error, and write CSV artifacts.

mod config;
mod plot;
mod sweep;

pub use config::{DataSource, SweepConfig};
pub use plot::{emit_plot, render_svg, PlotKind};
pub use sweep::{
    compare_norms, load_run_source, norm_growth, run_one, score_params, summarize,
    sweep_random_labels, sweep_sample_size, sweep_sigma, write_norms_csv, NormRow, RunData, RunRow,
    SigmaRow, SigmaSweep, SummaryRow, SweepResult, NORMS_HEADER, RESULTS_HEADER,
};
