//! Experiment orchestration: config files, per-seed runs, figure presets, CSV output.

mod config;
mod plot;
mod presets;
mod run;

pub use config::{
    format_config, parse_config, parse_seeds, resolve_game, slug, ExperimentConfig, OracleSpec, ReportScale,
    BOS_MODIFIED, BOS_MODIFIED_PENALTY, DEFAULT_INNER_EPISODES,
};
pub use plot::{aggregate, group_runs, Band};
pub use presets::{reproduce, FIGURES};
pub use run::{
    curve_csv, final_rewards, read_curve_csv, read_summary_reference, run_experiment, run_id, run_seed, summary_csv,
    summary_table, trace_final_episode, write_run, write_summary, CurvePoint, RunResult, CURVE_HEADER, FINAL_WINDOW, SUMMARY_HEADER,
};
