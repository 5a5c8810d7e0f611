//! Experiment orchestration: sweeps, threshold bisection, exponent fits,
//! recipes and the drivers behind the command line.

pub mod config;
pub mod manifest;
pub mod recipes;
pub mod runs;
pub mod sweep;
pub mod threshold;

pub use config::{apply_set, from_table, load_toml, Cell, ExperimentConfig, IntegratorSettings, SuccessKind, SuccessRule};
pub use manifest::{Manifest, ManifestFile, MANIFEST_NAME};
pub use recipes::{run_recipe, Recipe, RecipeConfig, RecipeReport};
pub use runs::{
    run_baseline, run_check_init, run_fewell, run_recipe_to, run_simulate, run_sweep, run_threshold, BaselineConfig,
    CheckInitConfig, FewellConfig, ModelConfig, RunOutput, SimulateConfig, ThresholdConfig,
};
pub use sweep::{run_phase_diagram, wilson_interval, CellResult, PhaseDiagramResult, ReplicaOutcome};
pub use threshold::{estimate_lambda_c, fit_alpha_exponent, BisectionOptions, ExponentFit, LambdaCEstimate};
