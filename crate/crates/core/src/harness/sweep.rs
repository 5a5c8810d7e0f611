//! Phase-diagram sweeps over `(N, k, α|λ, β)`.

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Cell, ExperimentConfig};
use crate::dynamics::{self, IntegratorConfig, Observers, StopRule};
use crate::error::{Error, Result};
use crate::initializers::InitSpec;
use crate::landscape::{Beta, Disorder, Landscape, MixtureSpec};
use crate::rng::derive_seed;

const DISORDER_TAG: u64 = 0xD150;
const INIT_TAG: u64 = 1;
const NOISE_TAG: u64 = 2;

/// Seed of replica `(cell, disorder, init)`.
pub fn replica_seed(master: u64, cell: usize, disorder: usize, init: usize) -> u64 {
    derive_seed(master, &[cell as u64, disorder as u64, init as u64])
}

pub fn disorder_seed(master: u64, cell: usize, disorder: usize) -> u64 {
    derive_seed(master, &[DISORDER_TAG, cell as u64, disorder as u64])
}

/// Wilson score interval for `successes / total` at 95%.
pub fn wilson_interval(successes: usize, total: usize) -> (f64, f64) {
    if total == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054_f64;
    let n = total as f64;
    let p = successes as f64 / n;
    let denom = 1.0 + z * z / n;
    let center = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicaOutcome {
    pub cell: usize,
    pub disorder: usize,
    pub init: usize,
    pub seed: u64,
    pub disorder_seed: u64,
    pub initial_m: f64,
    /// Minimum of `m` over the main window (`None` if the run stopped early
    /// or failed before reaching it).
    pub min_m: Option<f64>,
    pub min_m_alt: Option<f64>,
    pub final_m: f64,
    /// First recorded time with `m` at the success level.
    pub hit_time: Option<f64>,
    pub success: bool,
    pub success_alt: bool,
    pub stopped_early: bool,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub cell: Cell,
    pub successes: usize,
    pub total: usize,
    pub rate: f64,
    pub ci: (f64, f64),
    /// Counts for the sensitivity window `[2·t0, T]`.
    pub successes_alt: usize,
    pub ci_alt: (f64, f64),
    pub failures: usize,
    pub incomplete: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseDiagramResult {
    pub name: String,
    pub master_seed: u64,
    pub cells: Vec<CellResult>,
    pub replicas: Vec<ReplicaOutcome>,
    /// Seconds spent; kept out of every output file.
    #[serde(skip)]
    pub wall_clock: f64,
    /// Success rates that drop as `λ` grows at fixed `(N, k, β)`.
    pub monotonicity_violations: Vec<(usize, usize)>,
}

/// Build the landscape inputs of a cell for one disorder index.
pub(crate) fn cell_disorder(cfg: &ExperimentConfig, spec: &MixtureSpec, seed: u64) -> Result<Disorder> {
    if cfg.pure_signal {
        return Ok(Disorder::zero(spec));
    }
    match &cfg.cache_dir {
        Some(dir) => Disorder::load_or_sample(spec, seed, dir),
        None => Disorder::sample(spec, seed),
    }
}

/// Integrator settings and stop rules for a replica.
pub(crate) fn replica_setup(cfg: &ExperimentConfig, spec: &MixtureSpec, seed: u64) -> (IntegratorConfig, Observers) {
    let mut ic = IntegratorConfig::for_spec(spec, cfg.horizon, derive_seed(seed, &[NOISE_TAG]));
    if let Some(h) = cfg.integrator.step_h {
        ic.step_h = h;
    }
    ic.record_every = cfg.integrator.record_every.max(ic.step_h).min(cfg.horizon);
    if spec.beta().is_infinite() {
        ic.scheme = cfg.integrator.scheme;
    }
    let (window, alt) = cfg.windows();
    let level = cfg.success.level();
    let mut obs = Observers {
        thresholds: vec![level],
        ..Default::default()
    };
    if cfg.integrator.early_stop {
        // a drop inside both windows settles both outcomes
        obs.stop.push(StopRule::DropsBelow {
            level,
            after: window[0].max(alt[0]),
        });
        if spec.beta().is_infinite() {
            obs.stop.push(StopRule::Stationary {
                tol: cfg.integrator.stationary_tol * (spec.n() as f64).sqrt(),
            });
        }
    }
    (ic, obs)
}

/// Run one replica; errors are returned inside the outcome.
pub(crate) fn run_replica(
    cfg: &ExperimentConfig,
    spec: &MixtureSpec,
    disorder: &Disorder,
    ids: (usize, usize, usize),
    dseed: u64,
) -> ReplicaOutcome {
    let seed = replica_seed(cfg.seed, ids.0, ids.1, ids.2);
    let mut out = ReplicaOutcome {
        cell: ids.0,
        disorder: ids.1,
        init: ids.2,
        seed,
        disorder_seed: dseed,
        initial_m: f64::NAN,
        min_m: None,
        min_m_alt: None,
        final_m: f64::NAN,
        hit_time: None,
        success: false,
        success_alt: false,
        stopped_early: false,
        error: None,
    };
    let result = (|| -> Result<()> {
        let l = Landscape::new(spec, disorder)?;
        let init = InitSpec::new(cfg.init.clone(), derive_seed(seed, &[INIT_TAG])).sample(spec, Some(disorder), 0)?;
        out.initial_m = init.m();
        let (ic, obs) = replica_setup(cfg, spec, seed);
        let rec = dynamics::run_trajectory(&l, &init, &ic, &obs)?;
        let (window, alt) = cfg.windows();
        let level = cfg.success.level();
        let dropped = matches!(rec.stopped, Some(ev) if matches!(ev.rule, StopRule::DropsBelow { .. }));
        out.stopped_early = rec.stopped.is_some();
        out.final_m = *rec.m.last().unwrap();
        out.hit_time = rec.hitting.first().and_then(|h| h.time);
        out.min_m = rec.min_m_over(window[0], window[1]);
        out.min_m_alt = rec.min_m_over(alt[0], alt[1]);
        out.success = !dropped && out.min_m.is_some_and(|m| m >= level);
        out.success_alt = !dropped && out.min_m_alt.is_some_and(|m| m >= level);
        Ok(())
    })();
    if let Err(e) = result {
        log::warn!("replica (cell {}, disorder {}, init {}) failed: {e}", ids.0, ids.1, ids.2);
        out.error = Some(e.to_string());
    }
    out
}

/// All replicas of one cell, in `(disorder, init)` order.
pub(crate) fn run_cell(cfg: &ExperimentConfig, cell: &Cell, spec: &MixtureSpec) -> Vec<ReplicaOutcome> {
    (0..cfg.n_disorder)
        .into_par_iter()
        .map(|d| {
            let dseed = disorder_seed(cfg.seed, cell.index, d);
            match cell_disorder(cfg, spec, dseed) {
                Ok(disorder) => (0..cfg.n_init)
                    .into_par_iter()
                    .map(|i| run_replica(cfg, spec, &disorder, (cell.index, d, i), dseed))
                    .collect::<Vec<_>>(),
                Err(e) => {
                    log::warn!("disorder {d} of cell {} failed: {e}", cell.index);
                    (0..cfg.n_init)
                        .map(|i| ReplicaOutcome {
                            cell: cell.index,
                            disorder: d,
                            init: i,
                            seed: replica_seed(cfg.seed, cell.index, d, i),
                            disorder_seed: dseed,
                            initial_m: f64::NAN,
                            min_m: None,
                            min_m_alt: None,
                            final_m: f64::NAN,
                            hit_time: None,
                            success: false,
                            success_alt: false,
                            stopped_early: false,
                            error: Some(e.to_string()),
                        })
                        .collect()
                }
            }
        })
        .flatten()
        .collect()
}

pub(crate) fn summarize(cell: Cell, reps: &[ReplicaOutcome]) -> CellResult {
    let ok: Vec<&ReplicaOutcome> = reps.iter().filter(|r| r.error.is_none()).collect();
    let successes = ok.iter().filter(|r| r.success).count();
    let successes_alt = ok.iter().filter(|r| r.success_alt).count();
    let total = ok.len();
    CellResult {
        cell,
        successes,
        total,
        rate: if total == 0 {
            f64::NAN
        } else {
            successes as f64 / total as f64
        },
        ci: wilson_interval(successes, total),
        successes_alt,
        ci_alt: wilson_interval(successes_alt, total),
        failures: reps.len() - total,
        incomplete: total < reps.len(),
    }
}

fn check_seeds(cfg: &ExperimentConfig, cells: &[Cell]) -> Result<()> {
    let mut seen = HashSet::new();
    for c in cells {
        for d in 0..cfg.n_disorder {
            for i in 0..cfg.n_init {
                let s = replica_seed(cfg.seed, c.index, d, i);
                if !seen.insert(s) {
                    return Err(Error::SeedCollision(s));
                }
            }
        }
    }
    Ok(())
}

/// Cells with equal `(N, k, β)` whose rate falls as `λ` grows.
fn monotonicity_violations(cells: &[CellResult]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for a in cells {
        for b in cells {
            let same = a.cell.n == b.cell.n && a.cell.k == b.cell.k && a.cell.beta == b.cell.beta;
            if same && a.cell.lambda < b.cell.lambda && a.rate > b.rate {
                out.push((a.cell.index, b.cell.index));
            }
        }
    }
    out
}

/// Run the full grid. Per-replica failures mark the cell incomplete.
pub fn run_phase_diagram(cfg: &ExperimentConfig) -> Result<PhaseDiagramResult> {
    cfg.validate()?;
    let started = Instant::now();
    let cells = cfg.cells()?;
    check_seeds(cfg, &cells)?;
    let mut results = Vec::with_capacity(cells.len());
    let mut replicas = Vec::new();
    for cell in &cells {
        let spec = cfg.spec_for(cell)?;
        let reps = run_cell(cfg, cell, &spec);
        let summary = summarize(*cell, &reps);
        log::info!(
            "cell {} (N={}, k={}, lambda={:.4}, beta={}): {}/{}",
            cell.index,
            cell.n,
            cell.k,
            cell.lambda,
            cell.beta,
            summary.successes,
            summary.total
        );
        results.push(summary);
        replicas.extend(reps);
    }
    let violations = monotonicity_violations(&results);
    for (a, b) in &violations {
        log::warn!("success rate of cell {a} exceeds that of cell {b} at larger lambda");
    }
    Ok(PhaseDiagramResult {
        name: cfg.name.clone(),
        master_seed: cfg.seed,
        cells: results,
        replicas,
        wall_clock: started.elapsed().as_secs_f64(),
        monotonicity_violations: violations,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.16e}")).unwrap_or_default()
}

impl PhaseDiagramResult {
    pub fn write_cells_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(
            out,
            "cell,n,k,alpha,lambda,beta,successes,total,rate,ci_lo,ci_hi,successes_alt,ci_alt_lo,ci_alt_hi,failures,incomplete"
        )?;
        for c in &self.cells {
            let beta = match c.cell.beta {
                Beta::Finite(b) => format!("{b}"),
                Beta::Infinite => "inf".into(),
            };
            writeln!(
                out,
                "{},{},{},{},{:.16e},{},{},{},{:.16e},{:.16e},{:.16e},{},{:.16e},{:.16e},{},{}",
                c.cell.index,
                c.cell.n,
                c.cell.k,
                opt(c.cell.alpha),
                c.cell.lambda,
                beta,
                c.successes,
                c.total,
                c.rate,
                c.ci.0,
                c.ci.1,
                c.successes_alt,
                c.ci_alt.0,
                c.ci_alt.1,
                c.failures,
                u8::from(c.incomplete)
            )?;
        }
        Ok(())
    }

    pub fn write_replicas_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "cell,disorder,init,seed,disorder_seed,initial_m,min_m,min_m_alt,final_m,hit_time,success,success_alt,stopped_early,error")?;
        for r in &self.replicas {
            writeln!(
                out,
                "{},{},{},{},{},{:.16e},{},{},{:.16e},{},{},{},{},{}",
                r.cell,
                r.disorder,
                r.init,
                r.seed,
                r.disorder_seed,
                r.initial_m,
                opt(r.min_m),
                opt(r.min_m_alt),
                r.final_m,
                opt(r.hit_time),
                u8::from(r.success),
                u8::from(r.success_alt),
                u8::from(r.stopped_early),
                r.error.as_deref().unwrap_or("").replace([',', '\n'], ";")
            )?;
        }
        Ok(())
    }

    /// `cells.csv`, `replicas.csv` and `phase_diagram.json` in `dir`.
    pub fn save(&self, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let cells = dir.join("cells.csv");
        let reps = dir.join("replicas.csv");
        let json = dir.join("phase_diagram.json");
        self.write_cells_csv(std::io::BufWriter::new(std::fs::File::create(&cells)?))?;
        self.write_replicas_csv(std::io::BufWriter::new(std::fs::File::create(&reps)?))?;
        std::fs::write(&json, serde_json::to_string_pretty(self)?)?;
        Ok(vec![cells, reps, json])
    }
}
