//! End-to-end runs: keyframe selection, seed segmentation, propagation,
//! evaluation and the seed-count ablation.

mod config;
mod run;
pub mod synth;

pub use config::{parse_config, parse_config_str, select_seed_frames, RunConfig};
pub use run::{
    ablation_csv, evaluate_dirs, frames_dir, load_run_weights, load_scene, run_ablation, run_eval,
    run_segment, segment_frames, AblationRow, SegmentRun, TimingReport, ABLATION_KS, STAGES,
};
