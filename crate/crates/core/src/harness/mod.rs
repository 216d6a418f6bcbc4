//! Configuration, the multi-seed driver, metrics and report files.

mod config;
mod report;
mod run;

pub use config::ExperimentConfig;
pub use report::{
    curves_svg, emit_report, mean_std, metrics_csv, parse_metrics, report_dir, rows, summaries, summaries_from_rows,
    summary_table, Row, SeedResult, Summary, METRICS_FILE, PLOT_FILE, SUMMARY_FILE,
};
pub use run::{
    game_for_seed, run_experiment, run_grid, run_seed, run_seed_with, trailing_mean, RunMetrics, AVG_WINDOW,
};

#[cfg(test)]
mod tests;
