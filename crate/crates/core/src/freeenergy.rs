//! Restricted free energies, the entropy profile of the correlation, free
//! energy wells and exit-time experiments.
//!
//! `F(A) = (1/N) log ∫_A e^{−βH} dx` with `dx` the normalized volume, so
//! `F(sphere) = 0` at `β = 0`. Regions are unions of disjoint latitude
//! windows `{m ∈ [lo, hi]}`.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{self, IntegratorConfig, Observers, StopRule};
use crate::error::{invalid, Result};
use crate::initializers::{banded_gibbs_sampler, LatitudeLaw, MalaChain, MalaConfig, Restriction};
use crate::landscape::{Beta, Landscape};
use crate::rng;

/// Equatorial band `{|m − center| < half_width}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub half_width: f64,
    pub center: f64,
    /// `half_width · √N`, the same band in units of `x₁`.
    pub x1_half_width: f64,
}

impl Band {
    pub fn new(n: usize, half_width: f64) -> Result<Self> {
        Self::centered(n, half_width, 0.0)
    }

    pub fn centered(n: usize, half_width: f64, center: f64) -> Result<Self> {
        if !(half_width > 0.0) || center.abs() - half_width >= 1.0 {
            return Err(invalid(format!("empty band {center} ± {half_width}")));
        }
        Ok(Band {
            half_width,
            center,
            x1_half_width: half_width * (n as f64).sqrt(),
        })
    }

    pub fn window(&self) -> Window {
        Window::new(
            (self.center - self.half_width).max(-1.0),
            (self.center + self.half_width).min(1.0),
        )
    }
}

/// `{m ∈ [lo, hi]}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub lo: f64,
    pub hi: f64,
}

impl Window {
    pub fn new(lo: f64, hi: f64) -> Self {
        Window { lo, hi }
    }

    pub fn sphere() -> Self {
        Window { lo: -1.0, hi: 1.0 }
    }

    /// The ball `B_r(a)` of the observable `x₁`, as a correlation window.
    pub fn x1_ball(n: usize, a: f64, r: f64) -> Self {
        let s = (n as f64).sqrt();
        Window {
            lo: ((a - r) / s).max(-1.0),
            hi: ((a + r) / s).min(1.0),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(-1.0 <= self.lo && self.lo < self.hi && self.hi <= 1.0) {
            return Err(invalid(format!("bad window [{}, {}]", self.lo, self.hi)));
        }
        Ok(())
    }

    pub fn disjoint(&self, other: &Window) -> bool {
        self.hi <= other.lo || other.hi <= self.lo
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// Importance sampling from the exact uniform law on the window,
    /// switching to AIS when the effective sample size is too small.
    #[default]
    Auto,
    Uniform,
    Ais,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FreeEnergyOptions {
    pub estimator: Estimator,
    /// Samples for uniform importance sampling.
    pub n_samples: usize,
    /// Independent annealing runs.
    pub ais_runs: usize,
    /// Number of intermediate temperatures.
    pub ais_temperatures: usize,
    /// MALA moves per temperature.
    pub ais_moves: usize,
    pub mala_step: f64,
    /// Below this effective sample size `Auto` switches to AIS.
    pub min_ess: f64,
    pub seed: u64,
}

impl Default for FreeEnergyOptions {
    fn default() -> Self {
        Self::new(0)
    }
}

impl FreeEnergyOptions {
    pub fn new(seed: u64) -> Self {
        FreeEnergyOptions {
            estimator: Estimator::Auto,
            n_samples: 4000,
            ais_runs: 128,
            ais_temperatures: 200,
            ais_moves: 2,
            mala_step: 0.05,
            min_ess: 200.0,
            seed,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FreeEnergyEstimate {
    pub value: f64,
    pub std_error: f64,
    /// `log(vol(A)/vol(sphere))`.
    pub log_volume: f64,
    /// Effective sample size of the final weights.
    pub ess: f64,
    pub estimator: Estimator,
}

/// `log mean exp` of `xs` and its delete-one jackknife standard error.
pub(crate) fn log_mean_exp_jackknife(xs: &[f64]) -> (f64, f64, f64) {
    let n = xs.len();
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = xs.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = w.iter().sum();
    let s2: f64 = w.iter().map(|v| v * v).sum();
    let value = s.ln() - (n as f64).ln() + max;
    let ess = s * s / s2;
    if n < 2 {
        return (value, 0.0, ess);
    }
    let loo: Vec<f64> = w
        .iter()
        .map(|wi| ((s - wi).max(f64::MIN_POSITIVE)).ln() - ((n - 1) as f64).ln() + max)
        .collect();
    let mean = loo.iter().sum::<f64>() / n as f64;
    let var = loo.iter().map(|v| (v - mean).powi(2)).sum::<f64>() * (n as f64 - 1.0) / n as f64;
    (value, var.sqrt(), ess)
}

fn uniform_estimate(l: &Landscape, law: &LatitudeLaw, beta: f64, opts: &FreeEnergyOptions, label: u64) -> FreeEnergyEstimate {
    let nf = l.n() as f64;
    let logw: Vec<f64> = (0..opts.n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(opts.seed, &[label, 0, i]);
            let x = law.sample_state(&mut r);
            -beta * l.energy(&x)
        })
        .collect();
    let (lme, se, ess) = log_mean_exp_jackknife(&logw);
    let log_volume = law.log_fraction();
    FreeEnergyEstimate {
        value: (log_volume + lme) / nf,
        std_error: se / nf,
        log_volume,
        ess,
        estimator: Estimator::Uniform,
    }
}

fn ais_estimate(l: &Landscape, law: &LatitudeLaw, beta: f64, opts: &FreeEnergyOptions, label: u64) -> Result<FreeEnergyEstimate> {
    let n = l.n();
    let nf = n as f64;
    let (lo, hi) = law.window();
    let restriction = if lo <= -1.0 && hi >= 1.0 {
        Restriction::Sphere
    } else {
        Restriction::Band {
            x1_lo: lo * nf.sqrt(),
            x1_hi: hi * nf.sqrt(),
        }
    };
    let k = opts.ais_temperatures.max(1);
    let logw: Vec<f64> = (0..opts.ais_runs as u64)
        .into_par_iter()
        .map(|run| -> Result<f64> {
            let mut r = rng::stream(opts.seed, &[label, 1, run]);
            let x0 = law.sample_state(&mut r);
            let mut cfg = MalaConfig::new(0.0, opts.mala_step, restriction);
            cfg.max_beta = f64::INFINITY;
            let mut chain = MalaChain::new(*l, cfg, &x0)?;
            let mut acc = 0.0;
            let mut prev = 0.0;
            for j in 1..=k {
                let bj = beta * j as f64 / k as f64;
                acc -= (bj - prev) * chain.energy();
                prev = bj;
                if j < k {
                    chain.set_beta(bj);
                    chain.run(opts.ais_moves, &mut r);
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let (lme, se, ess) = log_mean_exp_jackknife(&logw);
    let log_volume = law.log_fraction();
    Ok(FreeEnergyEstimate {
        value: (log_volume + lme) / nf,
        std_error: se / nf,
        log_volume,
        ess,
        estimator: Estimator::Ais,
    })
}

/// Estimate `F(A)` for one window. `label` separates random streams of
/// different windows sharing a seed.
pub fn restricted_free_energy(
    l: &Landscape,
    window: Window,
    beta: f64,
    opts: &FreeEnergyOptions,
    label: u64,
) -> Result<FreeEnergyEstimate> {
    window.validate()?;
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(invalid("free energies need a finite beta >= 0"));
    }
    let law = LatitudeLaw::new(l.n(), window.lo, window.hi)?;
    if beta == 0.0 {
        let log_volume = law.log_fraction();
        return Ok(FreeEnergyEstimate {
            value: log_volume / l.n() as f64,
            std_error: 0.0,
            log_volume,
            ess: f64::INFINITY,
            estimator: Estimator::Uniform,
        });
    }
    match opts.estimator {
        Estimator::Uniform => {
            let est = uniform_estimate(l, &law, beta, opts, label);
            if est.ess < 50.0 {
                log::warn!("importance weights are degenerate: effective sample size {:.1}", est.ess);
            }
            Ok(est)
        }
        Estimator::Ais => ais_estimate(l, &law, beta, opts, label),
        Estimator::Auto => {
            let est = uniform_estimate(l, &law, beta, opts, label);
            if est.ess >= opts.min_ess {
                Ok(est)
            } else {
                log::debug!(
                    "effective sample size {:.1}; switching to annealed importance sampling",
                    est.ess
                );
                ais_estimate(l, &law, beta, opts, label)
            }
        }
    }
}

/// `F` of a union of disjoint windows.
pub fn region_free_energy(
    l: &Landscape,
    windows: &[Window],
    beta: f64,
    opts: &FreeEnergyOptions,
    label: u64,
) -> Result<FreeEnergyEstimate> {
    if windows.is_empty() {
        return Err(invalid("empty region"));
    }
    for (i, a) in windows.iter().enumerate() {
        for b in &windows[i + 1..] {
            if !a.disjoint(b) {
                return Err(invalid("region windows overlap"));
            }
        }
    }
    let nf = l.n() as f64;
    let parts: Vec<FreeEnergyEstimate> = windows
        .iter()
        .enumerate()
        .map(|(i, w)| restricted_free_energy(l, *w, beta, opts, label.wrapping_mul(1 << 16) + i as u64))
        .collect::<Result<_>>()?;
    let logs: Vec<f64> = parts.iter().map(|p| nf * p.value).collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = logs.iter().map(|v| (v - max).exp()).sum();
    let value = (total.ln() + max) / nf;
    // delta method: d(NF)/d(NF_i) = share_i
    let var: f64 = parts
        .iter()
        .zip(&logs)
        .map(|(p, v)| ((v - max).exp() / total * p.std_error).powi(2))
        .sum();
    let vols: f64 = parts.iter().map(|p| p.log_volume.exp()).sum();
    Ok(FreeEnergyEstimate {
        value,
        std_error: var.sqrt(),
        log_volume: vols.ln(),
        ess: parts.iter().map(|p| p.ess).fold(f64::INFINITY, f64::min),
        estimator: parts[0].estimator,
    })
}

/// Windows of a free energy well test for the observable `x₁`:
/// edges `B_ε(a)`, `B_ε(b)` and center `B_η(c)`, all in units of `x₁`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WellSpec {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub epsilon: f64,
    pub eta: f64,
}

impl WellSpec {
    /// Edges `±(3/2)N^ε` of radius `½N^ε`, center 0 of radius `N^ε`.
    pub fn equatorial(n: usize, eps: f64) -> Self {
        let s = (n as f64).powf(eps);
        WellSpec {
            a: -1.5 * s,
            b: 1.5 * s,
            c: 0.0,
            epsilon: 0.5 * s,
            eta: s,
        }
    }

    /// The three balls are pairwise disjoint (as open sets) and `a < c < b`.
    pub fn is_valid(&self) -> bool {
        let (ea, eb, ec) = (
            (self.a - self.epsilon, self.a + self.epsilon),
            (self.b - self.epsilon, self.b + self.epsilon),
            (self.c - self.eta, self.c + self.eta),
        );
        // touching balls count as disjoint
        let tol = 1e-12 * (self.epsilon + self.eta);
        let apart = |x: (f64, f64), y: (f64, f64)| x.1 <= y.0 + tol || y.1 <= x.0 + tol;
        self.a < self.c && self.c < self.b && apart(ea, eb) && apart(ea, ec) && apart(eb, ec)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Well {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub height: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WellReport {
    pub n: usize,
    pub beta: f64,
    /// Centers of the profile windows, in units of `x₁`.
    pub grid: Vec<f64>,
    pub radius: f64,
    pub i_values: Vec<f64>,
    pub estimator_errors: Vec<f64>,
    pub well_spec: Option<WellSpec>,
    /// `I(a;ε)`, `I(b;ε)`, `I(c;η)` and their errors.
    pub well_values: Option<[f64; 3]>,
    pub well_errors: Option<[f64; 3]>,
    /// `min(I(a), I(b)) − I(c)`, reported whenever the windows are valid.
    pub well_margin: Option<f64>,
    /// Present when the margin is at least `min_height`.
    pub well: Option<Well>,
}

impl WellReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// `I(a; r) = −log π(|x₁ − a| < r) = −N [F(window) − F(sphere)]`.
fn entropy(
    l: &Landscape,
    a: f64,
    r: f64,
    beta: f64,
    f_sphere: &FreeEnergyEstimate,
    opts: &FreeEnergyOptions,
    label: u64,
) -> Result<(f64, f64)> {
    let nf = l.n() as f64;
    let f = restricted_free_energy(l, Window::x1_ball(l.n(), a, r), beta, opts, label)?;
    Ok((-nf * (f.value - f_sphere.value), nf * f.std_error.hypot(f_sphere.std_error)))
}

/// Entropy profile of `x₁` on `grid` with window radius `radius`, plus the
/// well test for `well` when given. The test declines (returns no margin)
/// when the windows of `well` overlap.
pub fn entropy_profile(
    l: &Landscape,
    beta: f64,
    grid: &[f64],
    radius: f64,
    well: Option<WellSpec>,
    min_height: f64,
    opts: &FreeEnergyOptions,
) -> Result<WellReport> {
    let f_sphere = restricted_free_energy(l, Window::sphere(), beta, opts, u64::MAX)?;
    let profile: Vec<(f64, f64)> = grid
        .iter()
        .enumerate()
        .map(|(i, &a)| entropy(l, a, radius, beta, &f_sphere, opts, i as u64))
        .collect::<Result<_>>()?;
    let mut report = WellReport {
        n: l.n(),
        beta,
        grid: grid.to_vec(),
        radius,
        i_values: profile.iter().map(|p| p.0).collect(),
        estimator_errors: profile.iter().map(|p| p.1).collect(),
        well_spec: well,
        well_values: None,
        well_errors: None,
        well_margin: None,
        well: None,
    };
    if let Some(w) = well {
        if !w.is_valid() {
            log::warn!("well windows overlap or are out of order; skipping the well test");
            return Ok(report);
        }
        let base = 1u64 << 40;
        let (ia, ea) = entropy(l, w.a, w.epsilon, beta, &f_sphere, opts, base)?;
        let (ib, eb) = entropy(l, w.b, w.epsilon, beta, &f_sphere, opts, base + 1)?;
        let (ic, ec) = entropy(l, w.c, w.eta, beta, &f_sphere, opts, base + 2)?;
        let margin = ia.min(ib) - ic;
        report.well_values = Some([ia, ib, ic]);
        report.well_errors = Some([ea, eb, ec]);
        report.well_margin = Some(margin);
        if margin >= min_height {
            report.well = Some(Well {
                a: w.a,
                b: w.b,
                c: w.c,
                height: margin,
            });
        }
    }
    Ok(report)
}

/// `F₀(A_{δ/2}) − F₀(A_δ ∖ A_{δ/2})` for the pure-noise landscape, with its
/// standard error.
pub fn f0_gap(l: &Landscape, beta: f64, delta: f64, opts: &FreeEnergyOptions) -> Result<(f64, f64)> {
    let spec0 = l.spec().clone().with_lambda(0.0)?;
    let l0 = Landscape::new(&spec0, l.disorder())?;
    let inner = restricted_free_energy(&l0, Window::new(-delta / 2.0, delta / 2.0), beta, opts, 1)?;
    let ring = region_free_energy(
        &l0,
        &[Window::new(-delta, -delta / 2.0), Window::new(delta / 2.0, delta)],
        beta,
        opts,
        2,
    )?;
    Ok((inner.value - ring.value, inner.std_error.hypot(ring.std_error)))
}

/// Largest `|signal energy|` on `A_δ`: `λ N δ^k`.
pub fn signal_energy_bound(l: &Landscape, delta: f64) -> f64 {
    let s = l.spec();
    s.lambda() * s.n() as f64 * delta.powf(s.k())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExitSample {
    pub chain: usize,
    pub seed: u64,
    pub start_x1: f64,
    pub time: f64,
    pub censored: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExitExperiment {
    /// Starts are drawn from the Gibbs measure restricted to `|x₁| ≤ start_x1`.
    pub start_x1: f64,
    /// Chains stop when `|x₁| ≥ exit_x1`.
    pub exit_x1: f64,
    pub n_chains: usize,
    pub horizon: f64,
    pub burn_in: usize,
    pub mala_step: f64,
    pub seed: u64,
}

impl ExitExperiment {
    /// Start band `(3/2)N^ε`, exit at `2N^ε`.
    pub fn equatorial(n: usize, eps: f64, n_chains: usize, horizon: f64, seed: u64) -> Self {
        let s = (n as f64).powf(eps);
        ExitExperiment {
            start_x1: 1.5 * s,
            exit_x1: 2.0 * s,
            n_chains,
            horizon,
            burn_in: 1000,
            mala_step: 0.05,
            seed,
        }
    }
}

/// Run Langevin dynamics from banded Gibbs starts until `|x₁|` leaves the
/// exit band or the horizon is reached.
pub fn exit_time_experiment(l: &Landscape, exp: &ExitExperiment) -> Result<Vec<ExitSample>> {
    let beta = match l.spec().beta() {
        Beta::Finite(b) => b,
        Beta::Infinite => return Err(invalid("exit-time experiments need a finite beta")),
    };
    if !(exp.exit_x1 > exp.start_x1 && exp.start_x1 > 0.0) {
        return Err(invalid("exit band must contain the start band"));
    }
    let mut mala = MalaConfig::new(
        beta,
        exp.mala_step,
        Restriction::Band {
            x1_lo: -exp.start_x1,
            x1_hi: exp.start_x1,
        },
    );
    mala.burn_in = exp.burn_in;
    mala.max_beta = f64::INFINITY;
    (0..exp.n_chains)
        .into_par_iter()
        .map(|i| {
            let seed = rng::derive_seed(exp.seed, &[i as u64]);
            let mut r = rng::stream(seed, &[0]);
            let (x0, _) = banded_gibbs_sampler(l, &mala, &mut r)?;
            let mut cfg = IntegratorConfig::for_spec(l.spec(), exp.horizon, rng::derive_seed(seed, &[1]));
            cfg.record_every = exp.horizon.max(cfg.step_h);
            let obs = Observers {
                stop: vec![StopRule::LeavesBand { x1_bound: exp.exit_x1 }],
                ..Default::default()
            };
            let rec = dynamics::run_trajectory(l, &x0, &cfg, &obs)?;
            let (time, censored) = match rec.stopped {
                Some(ev) => (ev.time, false),
                None => (exp.horizon, true),
            };
            Ok(ExitSample {
                chain: i,
                seed,
                start_x1: x0.x1(),
                time,
                censored,
            })
        })
        .collect()
}

/// Fraction of censored chains and the median exit time (censored chains
/// count as `+∞`; the median is `None` when more than half are censored).
pub fn exit_summary(samples: &[ExitSample]) -> (f64, Option<f64>) {
    let censored = samples.iter().filter(|s| s.censored).count();
    let mut times: Vec<f64> = samples
        .iter()
        .map(|s| if s.censored { f64::INFINITY } else { s.time })
        .collect();
    times.sort_by(f64::total_cmp);
    let median = if times.is_empty() {
        None
    } else {
        let m = times[(times.len() - 1) / 2];
        m.is_finite().then_some(m)
    };
    (censored as f64 / samples.len().max(1) as f64, median)
}

pub fn write_exit_csv(samples: &[ExitSample], mut out: impl Write) -> Result<()> {
    writeln!(out, "chain,seed,start_x1,time,censored")?;
    for s in samples {
        writeln!(
            out,
            "{},{},{:.16e},{:.16e},{}",
            s.chain,
            s.seed,
            s.start_x1,
            s.time,
            u8::from(s.censored)
        )?;
    }
    Ok(())
}

pub fn save_exit_csv(samples: &[ExitSample], path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_exit_csv(samples, &mut f)?;
    f.flush()?;
    Ok(())
}
