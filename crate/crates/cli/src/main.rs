use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

use spikelab::harness::{
    self, BaselineConfig, CheckInitConfig, ExperimentConfig, FewellConfig, RecipeConfig, SimulateConfig, ThresholdConfig,
};

#[derive(Parser)]
#[command(
    name = "spikelab",
    version,
    about = "Langevin dynamics and recovery experiments for spiked tensor landscapes"
)]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML configuration file.
    #[arg(short, long)]
    config: Option<PathBuf>,

    /// Override a config key, e.g. `--set success.epsilon=0.2`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Output directory (default: the config's output_dir, else runs/<command>).
    #[arg(short, long)]
    out: Option<PathBuf>,

    /// Disorder cache directory.
    #[arg(long, env = "SPIKELAB_CACHE_DIR")]
    cache_dir: Option<PathBuf>,

    /// Print the resolved configuration as TOML and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one trajectory.
    Simulate(Common),
    /// Phase-diagram sweep over N, k, alpha or lambda, and beta.
    Sweep(Common),
    /// Bisection for lambda_c(N) and a log-log exponent fit.
    Threshold(Common),
    /// Entropy profiles, free energy wells and exit times.
    Fewell(Common),
    /// Condition 1 and Condition 2 reports for an initialization.
    CheckInit(Common),
    /// Tensor power iteration on spiked tensors.
    Baseline(Common),
    /// Recovery, stability and refutation recipes.
    Recipe(Common),
}

/// Resolve file, cache flag and overrides into a typed config.
fn resolve<T: DeserializeOwned>(common: &Common, takes_cache: bool) -> Result<T> {
    let mut table = harness::load_toml(common.config.as_deref(), &[])?;
    if let (true, Some(dir)) = (takes_cache, &common.cache_dir) {
        table.insert("cache_dir".into(), toml::Value::String(dir.to_string_lossy().into_owned()));
    }
    for o in &common.overrides {
        harness::apply_set(&mut table, o)?;
    }
    Ok(harness::from_table(table)?)
}

fn out_dir(common: &Common, configured: &Option<PathBuf>, command: &str) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| configured.clone())
        .unwrap_or_else(|| Path::new("runs").join(command))
}

fn print_config(cfg: &impl Serialize) -> Result<()> {
    print!("{}", toml::to_string_pretty(cfg).context("serializing the config")?);
    Ok(())
}

fn report<T>(out: &harness::RunOutput<T>, summary: serde_json::Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(&summary)?);
    println!("manifest: {}", out.manifest.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(c) => {
            let cfg: SimulateConfig = resolve(c, true)?;
            if c.print_config {
                return print_config(&cfg);
            }
            let out = harness::run_simulate(&cfg, &out_dir(c, &cfg.output_dir, "simulate"))?;
            let rec = &out.result;
            report(
                &out,
                serde_json::json!({
                    "records": rec.len(),
                    "final_m": rec.final_state.m(),
                    "hitting": rec.hitting,
                }),
            )
        }
        Command::Sweep(c) => {
            let cfg: ExperimentConfig = resolve(c, true)?;
            if c.print_config {
                return print_config(&cfg);
            }
            cfg.validate()?;
            let out = harness::run_sweep(&cfg, &out_dir(c, &cfg.output_dir, "sweep"))?;
            let cells: Vec<_> = out
                .result
                .cells
                .iter()
                .map(|r| {
                    serde_json::json!({
                        "n": r.cell.n, "k": r.cell.k, "lambda": r.cell.lambda, "beta": r.cell.beta,
                        "successes": r.successes, "total": r.total, "ci": r.ci, "incomplete": r.incomplete,
                    })
                })
                .collect();
            report(&out, serde_json::json!({ "cells": cells }))
        }
        Command::Threshold(c) => {
            let cfg: ThresholdConfig = resolve(c, true)?;
            if c.print_config {
                return print_config(&cfg);
            }
            let out = harness::run_threshold(&cfg, &out_dir(c, &cfg.output_dir, "threshold"))?;
            let est: Vec<_> = out
                .result
                .estimates
                .iter()
                .map(|e| serde_json::json!({ "n": e.n, "lambda_c": e.lambda_c, "ci": e.ci, "monotone": e.monotone }))
                .collect();
            report(
                &out,
                serde_json::json!({ "estimates": est, "fit": out.result.fit, "theory_slope": out.result.theory_slope }),
            )
        }
        Command::Fewell(c) => {
            let cfg: FewellConfig = resolve(c, true)?;
            if c.print_config {
                return print_config(&cfg);
            }
            let out = harness::run_fewell(&cfg, &out_dir(c, &cfg.output_dir, "fewell"))?;
            let r = &out.result;
            let margins: Vec<_> = r.wells.iter().map(|w| w.report.well_margin).collect();
            report(
                &out,
                serde_json::json!({
                    "margins": margins,
                    "positive_margin_fraction": r.positive_margin_fraction,
                    "censored_fraction": r.censored_fraction,
                    "median_exit_time": r.median_exit_time,
                }),
            )
        }
        Command::CheckInit(c) => {
            let cfg: CheckInitConfig = resolve(c, true)?;
            if c.print_config {
                return print_config(&cfg);
            }
            let out = harness::run_check_init(&cfg, &out_dir(c, &cfg.output_dir, "check-init"))?;
            let r = &out.result;
            report(
                &out,
                serde_json::json!({
                    "threshold": r.condition1.threshold,
                    "fraction_violating": r.condition1.fraction_violating,
                    "condition2": r.condition2,
                    "condition2_prime_fraction": r.condition2_prime_fraction,
                }),
            )
        }
        Command::Baseline(c) => {
            let cfg: BaselineConfig = resolve(c, true)?;
            if c.print_config {
                return print_config(&cfg);
            }
            let out = harness::run_baseline(&cfg, &out_dir(c, &cfg.output_dir, "baseline"))?;
            let r = &out.result;
            report(
                &out,
                serde_json::json!({
                    "effective_lambda": r.effective_lambda,
                    "mean_abs_overlap": r.mean_abs_overlap,
                    "success_fraction": r.success_fraction,
                }),
            )
        }
        Command::Recipe(c) => {
            let cfg: RecipeConfig = resolve(c, false)?;
            if c.print_config {
                return print_config(&cfg);
            }
            let out = harness::run_recipe_to(&cfg, &out_dir(c, &None, "recipe"))?;
            let r = &out.result;
            report(
                &out,
                serde_json::json!({ "recipe": r.recipe, "pass": r.pass, "fraction": r.fraction, "eligible": r.eligible }),
            )
        }
    }
}

fn main() {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
