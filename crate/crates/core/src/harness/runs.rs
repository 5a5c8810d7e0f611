//! Configurations and drivers behind the command-line subcommands. Every
//! driver writes its files plus a manifest into the output directory.

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, IntegratorSettings, SuccessRule};
use super::manifest::Manifest;
use super::recipes::{run_recipe, RecipeConfig, RecipeReport};
use super::sweep::{run_phase_diagram, PhaseDiagramResult};
use super::threshold::{estimate_lambda_c, fit_alpha_exponent, BisectionOptions, ExponentFit, LambdaCEstimate};
use crate::baselines::{effective_lambda, tensor_power_iteration, SpikedTensor};
use crate::conditions::{
    condition1_check, condition2_check, condition2_prime_check, ConditionLevel, ConditionReport, SemigroupOptions,
};
use crate::dynamics::{self, IntegratorConfig, Observers, TrajectoryRecord};
use crate::error::{invalid, Error, Result};
use crate::freeenergy::{
    entropy_profile, exit_summary, exit_time_experiment, ExitExperiment, ExitSample, FreeEnergyOptions, WellReport, WellSpec,
};
use crate::initializers::{InitKind, InitSpec};
use crate::landscape::{Beta, Disorder, Landscape, MixtureSpec, DEFAULT_ENTRY_BUDGET};
use crate::rng::{self, derive_seed};

const DISORDER_TAG: u64 = 0xD150;

/// Files written by a driver and its result.
#[derive(Clone, Debug)]
pub struct RunOutput<T> {
    pub result: T,
    pub files: Vec<PathBuf>,
    pub manifest: PathBuf,
}

fn finish<T>(
    command: &str,
    seed: u64,
    config: &impl Serialize,
    dir: &Path,
    result: T,
    files: Vec<PathBuf>,
) -> Result<RunOutput<T>> {
    let manifest = Manifest::new(command, seed, config)?.write(dir, &files)?;
    Ok(RunOutput { result, files, manifest })
}

fn write_json(path: PathBuf, value: &impl Serialize) -> Result<PathBuf> {
    std::fs::write(&path, serde_json::to_string_pretty(value)?)?;
    Ok(path)
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    Ok(std::io::BufWriter::new(std::fs::File::create(path)?))
}

fn default_budget() -> u64 {
    DEFAULT_ENTRY_BUDGET
}

/// The model part shared by several configs. Give `lambda` or `alpha`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub n: usize,
    /// `[[p, a_p], …]`.
    pub mixture: Vec<(u32, f64)>,
    pub k: f64,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub alpha: Option<f64>,
    pub beta: Beta,
    #[serde(default)]
    pub pure_signal: bool,
    #[serde(default = "default_budget")]
    pub entry_budget: u64,
}

impl ModelConfig {
    pub fn spec(&self) -> Result<MixtureSpec> {
        let base = MixtureSpec::with_budget(
            self.n,
            self.mixture.iter().copied(),
            self.k,
            self.lambda.unwrap_or(0.0),
            self.beta,
            self.entry_budget,
        )?;
        match (self.lambda, self.alpha) {
            (Some(_), Some(_)) => Err(Error::Config("give lambda or alpha, not both".into())),
            (None, None) => Err(Error::Config("give lambda or alpha".into())),
            (None, Some(a)) => base.with_alpha(a),
            (Some(_), None) => Ok(base),
        }
    }

    pub fn disorder(&self, spec: &MixtureSpec, seed: u64, cache: Option<&Path>) -> Result<Disorder> {
        if self.pure_signal {
            return Ok(Disorder::zero(spec));
        }
        match cache {
            Some(dir) => Disorder::load_or_sample(spec, seed, dir),
            None => Disorder::sample(spec, seed),
        }
    }
}

fn default_horizon() -> f64 {
    20.0
}
fn default_init() -> InitKind {
    InitKind::UniformHemisphere
}
fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserverSettings {
    #[serde(default)]
    pub l0m: bool,
    #[serde(default = "yes")]
    pub gradnorm: bool,
    #[serde(default)]
    pub thresholds: Vec<f64>,
}

impl Default for ObserverSettings {
    fn default() -> Self {
        ObserverSettings {
            l0m: false,
            gradnorm: true,
            thresholds: Vec::new(),
        }
    }
}

/// A single trajectory. Runs the full horizon (`integrator.early_stop` is
/// ignored).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub model: ModelConfig,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    pub seed: u64,
    /// Defaults to a seed derived from `seed`.
    #[serde(default)]
    pub disorder_seed: Option<u64>,
    #[serde(default = "default_init")]
    pub init: InitKind,
    #[serde(default)]
    pub integrator: IntegratorSettings,
    #[serde(default)]
    pub observers: ObserverSettings,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulateSummary {
    pub n: usize,
    pub lambda: f64,
    pub beta: Beta,
    pub disorder_seed: u64,
    pub initial_m: f64,
    pub final_m: f64,
    pub hitting: Vec<dynamics::HitTime>,
    pub records: usize,
}

pub fn run_simulate(cfg: &SimulateConfig, out: &Path) -> Result<RunOutput<TrajectoryRecord>> {
    std::fs::create_dir_all(out)?;
    let spec = cfg.model.spec()?;
    let dseed = cfg.disorder_seed.unwrap_or_else(|| derive_seed(cfg.seed, &[DISORDER_TAG]));
    let disorder = cfg.model.disorder(&spec, dseed, cfg.cache_dir.as_deref())?;
    let l = Landscape::new(&spec, &disorder)?;
    let init = InitSpec::new(cfg.init.clone(), derive_seed(cfg.seed, &[1])).sample(&spec, Some(&disorder), 0)?;
    let mut ic = IntegratorConfig::for_spec(&spec, cfg.horizon, derive_seed(cfg.seed, &[2]));
    if let Some(h) = cfg.integrator.step_h {
        ic.step_h = h;
    }
    ic.record_every = cfg.integrator.record_every.max(ic.step_h).min(cfg.horizon.max(ic.step_h));
    if spec.beta().is_infinite() {
        ic.scheme = cfg.integrator.scheme;
    }
    let obs = Observers {
        l0m: cfg.observers.l0m,
        gradnorm: cfg.observers.gradnorm,
        thresholds: cfg.observers.thresholds.clone(),
        stop: Vec::new(),
    };
    let rec = dynamics::run_trajectory(&l, &init, &ic, &obs)?;
    let csv = out.join("trajectory.csv");
    rec.save_csv(&csv)?;
    let summary = SimulateSummary {
        n: spec.n(),
        lambda: spec.lambda(),
        beta: spec.beta(),
        disorder_seed: dseed,
        initial_m: init.m(),
        final_m: rec.final_state.m(),
        hitting: rec.hitting.clone(),
        records: rec.len(),
    };
    let json = write_json(out.join("summary.json"), &summary)?;
    let mut stored = cfg.clone();
    stored.output_dir = None;
    finish("simulate", cfg.seed, &stored, out, rec, vec![csv, json])
}

pub fn run_sweep(cfg: &ExperimentConfig, out: &Path) -> Result<RunOutput<PhaseDiagramResult>> {
    std::fs::create_dir_all(out)?;
    let res = run_phase_diagram(cfg)?;
    log::info!("sweep finished in {:.1} s", res.wall_clock);
    let files = res.save(out)?;
    let mut stored = cfg.clone();
    stored.output_dir = None;
    finish("sweep", cfg.seed, &stored, out, res, files)
}

fn default_rel_width() -> f64 {
    0.1
}
fn default_widen() -> usize {
    3
}
fn default_bootstrap() -> usize {
    1000
}
fn default_factor() -> f64 {
    4.0
}
fn one() -> f64 {
    1.0
}
fn default_t0() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BisectionSettings {
    #[serde(default = "default_rel_width")]
    pub rel_width: f64,
    #[serde(default = "default_widen")]
    pub max_widen: usize,
    #[serde(default = "default_bootstrap")]
    pub bootstrap: usize,
    /// The initial bracket is `center·N^{(k−2)/2}` times and divided by `factor`.
    #[serde(default = "one")]
    pub center: f64,
    #[serde(default = "default_factor")]
    pub factor: f64,
}

impl Default for BisectionSettings {
    fn default() -> Self {
        BisectionSettings {
            rel_width: default_rel_width(),
            max_widen: default_widen(),
            bootstrap: default_bootstrap(),
            center: 1.0,
            factor: default_factor(),
        }
    }
}

impl BisectionSettings {
    pub fn options(&self, n: usize, k: f64) -> BisectionOptions {
        let scale = self.center * (n as f64).powf(((k - 2.0) / 2.0).max(0.0));
        BisectionOptions {
            lo: scale / self.factor,
            hi: scale * self.factor,
            rel_width: self.rel_width,
            max_widen: self.max_widen,
            bootstrap: self.bootstrap,
        }
    }
}

/// `λ_c(N)` for each `N` and a log-log fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdConfig {
    pub n: Vec<usize>,
    pub k: f64,
    pub beta: Beta,
    pub mixture: Vec<(u32, f64)>,
    #[serde(default)]
    pub pure_signal: bool,
    pub n_disorder: usize,
    pub n_init: usize,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_t0")]
    pub t0: f64,
    pub success: SuccessRule,
    #[serde(default)]
    pub integrator: IntegratorSettings,
    #[serde(default = "default_init")]
    pub init: InitKind,
    pub seed: u64,
    #[serde(default)]
    pub bisection: BisectionSettings,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
}

impl ThresholdConfig {
    /// The sweep settings used at each `N` (the `λ` grid is a placeholder).
    pub fn experiment(&self, n: usize) -> ExperimentConfig {
        ExperimentConfig {
            name: format!("threshold-n{n}"),
            n: vec![n],
            k: vec![self.k],
            alpha: Vec::new(),
            lambda: vec![1.0],
            beta: vec![self.beta],
            mixture: self.mixture.clone(),
            pure_signal: self.pure_signal,
            n_disorder: self.n_disorder,
            n_init: self.n_init,
            horizon: self.horizon,
            t0: self.t0,
            success: self.success,
            integrator: self.integrator.clone(),
            init: self.init.clone(),
            seed: derive_seed(self.seed, &[n as u64]),
            output_dir: None,
            cache_dir: self.cache_dir.clone(),
            entry_budget: DEFAULT_ENTRY_BUDGET,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    pub estimates: Vec<LambdaCEstimate>,
    pub fit: Option<ExponentFit>,
    /// `(k − 2)/2`, the predicted slope.
    pub theory_slope: f64,
}

pub fn run_threshold(cfg: &ThresholdConfig, out: &Path) -> Result<RunOutput<ThresholdResult>> {
    std::fs::create_dir_all(out)?;
    if cfg.n.is_empty() {
        return Err(Error::Config("threshold needs at least one N".into()));
    }
    let mut estimates = Vec::new();
    for &n in &cfg.n {
        let exp = cfg.experiment(n);
        exp.validate()?;
        estimates.push(estimate_lambda_c(&exp, n, cfg.k, cfg.beta, &cfg.bisection.options(n, cfg.k))?);
    }
    let fit = if estimates.len() >= 3 {
        Some(fit_alpha_exponent(
            &estimates.iter().map(|e| (e.n, e.lambda_c)).collect::<Vec<_>>(),
        )?)
    } else {
        None
    };
    let result = ThresholdResult {
        estimates,
        fit,
        theory_slope: (cfg.k - 2.0) / 2.0,
    };
    let csv = out.join("thresholds.csv");
    {
        let mut f = create(&csv)?;
        writeln!(f, "n,lambda_c,ci_lo,ci_hi,bracket_lo,bracket_hi,evaluations,monotone")?;
        for e in &result.estimates {
            writeln!(
                f,
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{}",
                e.n,
                e.lambda_c,
                e.ci.0,
                e.ci.1,
                e.bracket.0,
                e.bracket.1,
                e.evaluations.len(),
                u8::from(e.monotone)
            )?;
        }
        f.flush()?;
    }
    let json = write_json(out.join("threshold.json"), &result)?;
    let mut stored = cfg.clone();
    stored.output_dir = None;
    finish("threshold", cfg.seed, &stored, out, result, vec![csv, json])
}

fn default_points() -> usize {
    13
}
fn default_chains() -> usize {
    100
}
fn default_exit_horizon() -> f64 {
    50.0
}
fn default_burn() -> usize {
    1000
}
fn default_mala() -> f64 {
    0.05
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExitSettings {
    /// Chains per disorder.
    #[serde(default = "default_chains")]
    pub n_chains: usize,
    #[serde(default = "default_exit_horizon")]
    pub horizon: f64,
    #[serde(default = "default_burn")]
    pub burn_in: usize,
    #[serde(default = "default_mala")]
    pub mala_step: f64,
}

/// Entropy profiles, well tests and exit times of `x₁` at scale `N^ε`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FewellConfig {
    pub model: ModelConfig,
    /// The exponent `ε` of the window scale `N^ε`.
    pub well_exponent: f64,
    pub n_disorder: usize,
    pub seed: u64,
    /// Profile windows centered on `[−3N^ε, 3N^ε]` with radius `½N^ε`.
    #[serde(default = "default_points")]
    pub profile_points: usize,
    #[serde(default)]
    pub min_height: f64,
    #[serde(default)]
    pub free_energy: FreeEnergyOptions,
    #[serde(default)]
    pub exit: Option<ExitSettings>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisorderWell {
    pub disorder: usize,
    pub disorder_seed: u64,
    pub report: WellReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FewellResult {
    pub wells: Vec<DisorderWell>,
    /// Disorders whose margin `min(I(a), I(b)) − I(c)` is positive.
    pub positive_margin_fraction: f64,
    pub exit_samples: Vec<(usize, ExitSample)>,
    pub censored_fraction: Option<f64>,
    pub median_exit_time: Option<f64>,
}

pub fn run_fewell(cfg: &FewellConfig, out: &Path) -> Result<RunOutput<FewellResult>> {
    std::fs::create_dir_all(out)?;
    let spec = cfg.model.spec()?;
    let beta = match spec.beta() {
        Beta::Finite(b) => b,
        Beta::Infinite => return Err(Error::Config("fewell needs a finite beta".into())),
    };
    if cfg.n_disorder == 0 || cfg.profile_points == 0 {
        return Err(Error::Config("n_disorder and profile_points must be positive".into()));
    }
    let n = spec.n();
    let scale = (n as f64).powf(cfg.well_exponent);
    let grid: Vec<f64> = if cfg.profile_points == 1 {
        vec![0.0]
    } else {
        (0..cfg.profile_points)
            .map(|i| -3.0 * scale + 6.0 * scale * i as f64 / (cfg.profile_points - 1) as f64)
            .collect()
    };
    let well = WellSpec::equatorial(n, cfg.well_exponent);
    let mut wells = Vec::new();
    let mut exits = Vec::new();
    for d in 0..cfg.n_disorder {
        let dseed = derive_seed(cfg.seed, &[DISORDER_TAG, d as u64]);
        let disorder = cfg.model.disorder(&spec, dseed, cfg.cache_dir.as_deref())?;
        let l = Landscape::new(&spec, &disorder)?;
        let opts = FreeEnergyOptions {
            seed: derive_seed(cfg.seed, &[3, d as u64]),
            ..cfg.free_energy
        };
        let report = entropy_profile(&l, beta, &grid, 0.5 * scale, Some(well), cfg.min_height, &opts)?;
        log::info!("disorder {d}: well margin {:?}", report.well_margin);
        wells.push(DisorderWell {
            disorder: d,
            disorder_seed: dseed,
            report,
        });
        if let Some(ex) = &cfg.exit {
            let mut exp = ExitExperiment::equatorial(
                n,
                cfg.well_exponent,
                ex.n_chains,
                ex.horizon,
                derive_seed(cfg.seed, &[4, d as u64]),
            );
            exp.burn_in = ex.burn_in;
            exp.mala_step = ex.mala_step;
            exits.extend(exit_time_experiment(&l, &exp)?.into_iter().map(|s| (d, s)));
        }
    }
    let positive = wells.iter().filter(|w| w.report.well_margin.is_some_and(|m| m > 0.0)).count();
    let (censored_fraction, median_exit_time) = if cfg.exit.is_some() {
        let samples: Vec<ExitSample> = exits.iter().map(|e| e.1).collect();
        let (c, m) = exit_summary(&samples);
        (Some(c), m)
    } else {
        (None, None)
    };
    let result = FewellResult {
        wells,
        positive_margin_fraction: positive as f64 / cfg.n_disorder as f64,
        exit_samples: exits,
        censored_fraction,
        median_exit_time,
    };

    let wells_csv = out.join("wells.csv");
    {
        let mut f = create(&wells_csv)?;
        writeln!(f, "disorder,disorder_seed,i_a,i_b,i_c,err_a,err_b,err_c,margin")?;
        for w in &result.wells {
            let v = w.report.well_values.unwrap_or([f64::NAN; 3]);
            let e = w.report.well_errors.unwrap_or([f64::NAN; 3]);
            writeln!(
                f,
                "{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                w.disorder,
                w.disorder_seed,
                v[0],
                v[1],
                v[2],
                e[0],
                e[1],
                e[2],
                w.report.well_margin.unwrap_or(f64::NAN)
            )?;
        }
        f.flush()?;
    }
    let profile_csv = out.join("profile.csv");
    {
        let mut f = create(&profile_csv)?;
        writeln!(f, "disorder,center_x1,radius,i_value,std_error")?;
        for w in &result.wells {
            for ((c, i), e) in w.report.grid.iter().zip(&w.report.i_values).zip(&w.report.estimator_errors) {
                writeln!(f, "{},{:.16e},{:.16e},{:.16e},{:.16e}", w.disorder, c, w.report.radius, i, e)?;
            }
        }
        f.flush()?;
    }
    let mut files = vec![wells_csv, profile_csv];
    if cfg.exit.is_some() {
        let path = out.join("exit_times.csv");
        let mut f = create(&path)?;
        writeln!(f, "disorder,chain,seed,start_x1,time,censored")?;
        for (d, s) in &result.exit_samples {
            writeln!(
                f,
                "{},{},{},{:.16e},{:.16e},{}",
                d,
                s.chain,
                s.seed,
                s.start_x1,
                s.time,
                u8::from(s.censored)
            )?;
        }
        f.flush()?;
        files.push(path);
    }
    files.push(write_json(out.join("fewell.json"), &result)?);
    let mut stored = cfg.clone();
    stored.output_dir = None;
    finish("fewell", cfg.seed, &stored, out, result, files)
}

fn default_delta() -> f64 {
    0.25
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemigroupSettings {
    pub n_replicas: usize,
    #[serde(default)]
    pub step_h: Option<f64>,
    #[serde(default)]
    pub grid_spacing: Option<f64>,
}

/// Condition 1 and Condition 2 reports for an initialization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckInitConfig {
    pub model: ModelConfig,
    pub init: InitKind,
    pub n_samples: usize,
    pub seed: u64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    pub level: ConditionLevel,
    #[serde(default)]
    pub semigroup: Option<SemigroupSettings>,
    /// Thresholds for the empirical law of `x₁`.
    #[serde(default)]
    pub condition2_eps: Vec<f64>,
    /// `δ` of the check `x₁ ≤ N^{−δ}`.
    #[serde(default)]
    pub condition2_prime_delta: Option<f64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckInitResult {
    pub condition1: ConditionReport,
    pub condition2: Vec<(f64, f64)>,
    pub condition2_prime_fraction: Option<f64>,
}

pub fn run_check_init(cfg: &CheckInitConfig, out: &Path) -> Result<RunOutput<CheckInitResult>> {
    std::fs::create_dir_all(out)?;
    let spec = cfg.model.spec()?;
    let dseed = derive_seed(cfg.seed, &[DISORDER_TAG]);
    let disorder = cfg.model.disorder(&spec, dseed, cfg.cache_dir.as_deref())?;
    let init = InitSpec::new(cfg.init.clone(), derive_seed(cfg.seed, &[1]));
    let samples = init.sample_many(&spec, Some(&disorder), cfg.n_samples)?;
    let sg = cfg.semigroup.as_ref().map(|s| {
        let mut o = SemigroupOptions::new(s.n_replicas, derive_seed(cfg.seed, &[2]));
        if let Some(h) = s.step_h {
            o.step_h = h;
        }
        if let Some(g) = s.grid_spacing {
            o.grid_spacing = g;
        }
        o
    });
    let condition1 = condition1_check(&samples, &spec, &disorder, cfg.level, cfg.delta, sg.as_ref())?;
    let condition2 = condition2_check(&samples, &cfg.condition2_eps);
    let condition2_prime_fraction = cfg.condition2_prime_delta.map(|d| condition2_prime_check(&samples, d));
    let result = CheckInitResult {
        condition1,
        condition2,
        condition2_prime_fraction,
    };
    let c1 = write_json(out.join("condition1.json"), &result.condition1)?;
    let c2 = out.join("condition2.csv");
    {
        let mut f = create(&c2)?;
        writeln!(f, "epsilon,fraction_below")?;
        for (e, p) in &result.condition2 {
            writeln!(f, "{e:.16e},{p:.16e}")?;
        }
        f.flush()?;
    }
    let summary = write_json(
        out.join("summary.json"),
        &serde_json::json!({
            "n_samples": cfg.n_samples,
            "threshold": result.condition1.threshold,
            "fraction_violating": result.condition1.fraction_violating,
            "mc_std_error": result.condition1.mc_std_error,
            "condition2_prime_fraction": result.condition2_prime_fraction,
        }),
    )?;
    let mut stored = cfg.clone();
    stored.output_dir = None;
    finish("check-init", cfg.seed, &stored, out, result, vec![c1, c2, summary])
}

fn default_iters() -> usize {
    100
}
fn default_obs() -> usize {
    1
}
fn default_success_overlap() -> f64 {
    0.9
}

/// Tensor power iteration on spiked tensors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    pub n: usize,
    pub k: u32,
    pub lambda: f64,
    /// Independent observations, folded into `√M λ`.
    #[serde(default = "default_obs")]
    pub observations: usize,
    pub trials: usize,
    #[serde(default = "default_iters")]
    pub iters: usize,
    pub seed: u64,
    #[serde(default = "default_success_overlap")]
    pub success_overlap: f64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineTrial {
    pub trial: usize,
    pub seed: u64,
    pub final_overlap: f64,
    pub restarts: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub effective_lambda: f64,
    pub trials: Vec<BaselineTrial>,
    pub mean_abs_overlap: f64,
    pub success_fraction: f64,
}

pub fn run_baseline(cfg: &BaselineConfig, out: &Path) -> Result<RunOutput<BaselineResult>> {
    std::fs::create_dir_all(out)?;
    if cfg.trials == 0 || cfg.observations == 0 {
        return Err(invalid("trials and observations must be positive"));
    }
    let lambda = effective_lambda(cfg.lambda, cfg.observations);
    let trials: Vec<BaselineTrial> = (0..cfg.trials)
        .into_par_iter()
        .map(|i| {
            let seed = derive_seed(cfg.seed, &[i as u64]);
            let y = match &cfg.cache_dir {
                Some(dir) => SpikedTensor::load_or_sample(cfg.n, cfg.k, lambda, seed, dir)?,
                None => SpikedTensor::sample(cfg.n, cfg.k, lambda, seed)?,
            };
            let mut r = rng::stream(seed, &[1]);
            let mut x0 = vec![0.0; cfg.n];
            rng::fill_normal(&mut r, &mut x0);
            let norm = x0.iter().map(|v| v * v).sum::<f64>().sqrt();
            x0.iter_mut().for_each(|v| *v /= norm);
            let run = tensor_power_iteration(&y, &x0, cfg.iters, &mut r)?;
            Ok(BaselineTrial {
                trial: i,
                seed,
                final_overlap: *run.overlaps.last().unwrap(),
                restarts: run.restarts,
            })
        })
        .collect::<Result<_>>()?;
    let t = trials.len() as f64;
    let result = BaselineResult {
        effective_lambda: lambda,
        mean_abs_overlap: trials.iter().map(|x| x.final_overlap.abs()).sum::<f64>() / t,
        success_fraction: trials.iter().filter(|x| x.final_overlap.abs() >= cfg.success_overlap).count() as f64 / t,
        trials,
    };
    let csv = out.join("trials.csv");
    {
        let mut f = create(&csv)?;
        writeln!(f, "trial,seed,final_overlap,restarts")?;
        for x in &result.trials {
            writeln!(f, "{},{},{:.16e},{}", x.trial, x.seed, x.final_overlap, x.restarts)?;
        }
        f.flush()?;
    }
    let json = write_json(out.join("baseline.json"), &result)?;
    let mut stored = cfg.clone();
    stored.output_dir = None;
    finish("baseline", cfg.seed, &stored, out, result, vec![csv, json])
}

pub fn run_recipe_to(cfg: &RecipeConfig, out: &Path) -> Result<RunOutput<RecipeReport>> {
    std::fs::create_dir_all(out)?;
    let report = run_recipe(cfg)?;
    let json = write_json(out.join(format!("{}.json", report.recipe)), &report)?;
    finish("recipe", cfg.seed, cfg, out, report, vec![json])
}
