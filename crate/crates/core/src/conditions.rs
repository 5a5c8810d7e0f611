//! Checks of the initialization conditions: exact `L₀m` and `L₀²m`, the
//! pure-noise semigroup `e^{tL₀} L₀m`, and the correlation-scale condition.
//!
//! `L₀ = Δ − β<∇H₀, ∇·>` is the generator of the dynamics with the signal
//! removed; for gradient descent it is `−<∇H₀, ∇·>`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{self, IntegratorConfig, Observers, Scheme};
use crate::error::{invalid, Error, Result};
use crate::landscape::{correlation, tensor::dot, Beta, Disorder, Landscape, MixtureSpec, SphereState};
use crate::rng;

/// `L₀m(x)` at inverse temperature `beta`.
pub(crate) fn l0m_at(l: &Landscape, x: &[f64], beta: Beta) -> f64 {
    let n = x.len() as f64;
    let (_, d) = l.noise_value_grad_at(x);
    let s = dot(x, &d);
    let g = (d[0] - x[0] * s / n) / n.sqrt();
    match beta {
        Beta::Finite(b) => -(n - 1.0) / n * correlation(x) - b * g,
        Beta::Infinite => -g,
    }
}

/// Exact `L₀m` at the spec's inverse temperature.
pub fn l0m_exact(l: &Landscape, x: &SphereState) -> f64 {
    l0m_at(l, x.coords(), l.spec().beta())
}

/// Exact `L₀²m`, assembled from per-order gradients, one Hessian-vector
/// product and the gradient of the ambient Laplacian of `H₀`.
pub fn l0_squared_m(l: &Landscape, x: &SphereState) -> f64 {
    l0_squared_at(l, x.coords(), l.spec().beta())
}

pub(crate) fn l0_squared_at(l: &Landscape, x: &[f64], beta: Beta) -> f64 {
    let nn = x.len();
    let n = nn as f64;
    let c1 = (n - 1.0) / n;
    let x1 = x[0];

    let mut d = vec![0.0; nn];
    let mut mx = vec![0.0; nn]; // M x
    let (mut s, mut xmx, mut txxx, mut texx) = (0.0, 0.0, 0.0, 0.0);
    for (p, hp, dp) in l.noise_parts_at(x) {
        let p = p as f64;
        for i in 0..nn {
            d[i] += dp[i];
            mx[i] += (p - 1.0) * dp[i];
        }
        s += p * hp;
        xmx += p * (p - 1.0) * hp;
        txxx += p * (p - 1.0) * (p - 2.0) * hp;
        texx += (p - 1.0) * (p - 2.0) * dp[0];
    }
    let (mut tr_m, mut tr_tx, mut d1_lap) = (0.0, 0.0, 0.0);
    for (p, lap, lap_grad) in l.noise_laplacian_parts_at(x) {
        tr_m += lap;
        tr_tx += (p as f64 - 2.0) * lap;
        d1_lap += lap_grad[0];
    }
    let mut e1 = vec![0.0; nn];
    e1[0] = 1.0;
    let me = l.noise_hvp_at(x, &e1);

    // G = √N ⟨∇H₀, ∇m⟩ = d₁ − x₁ s / N
    let g = d[0] - x1 * s / n;
    let dg: Vec<f64> = (0..nn)
        .map(|j| me[j] - ((if j == 0 { s } else { 0.0 }) + x1 * d[j] + x1 * mx[j]) / n)
        .collect();
    let pd: Vec<f64> = (0..nn).map(|j| d[j] - s / n * x[j]).collect();
    let drift = dot(&pd, &dg);

    let l0m = match beta {
        Beta::Finite(b) => -c1 * correlation(x) - b * g / n.sqrt(),
        Beta::Infinite => -g / n.sqrt(),
    };
    match beta {
        Beta::Infinite => drift / n.sqrt(),
        Beta::Finite(b) => {
            let tr_d2g = d1_lap - (2.0 * (d[0] + mx[0]) + x1 * (2.0 * tr_m + tr_tx)) / n;
            let xd2gx = texx - 2.0 * x1 * (s + xmx) / n - x1 * (2.0 * xmx + txxx) / n;
            let x_dg = mx[0] - x1 * (2.0 * s + xmx) / n;
            let lap_g = tr_d2g - xd2gx / n - (n - 1.0) * x_dg / n;
            let l0g = (lap_g - b * drift) / n.sqrt();
            -c1 * l0m - b * l0g
        }
    }
}

/// Monte Carlo estimate of `t ↦ e^{tL₀} L₀m(x)` on a time grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemigroupPath {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
}

impl SemigroupPath {
    /// `sup_t |mean(t)|` and the standard error at the maximizing time.
    pub fn sup_abs(&self) -> (f64, f64) {
        self.mean
            .iter()
            .zip(&self.std_error)
            .map(|(m, s)| (m.abs(), *s))
            .fold((0.0, 0.0), |a, b| if b.0 > a.0 { b } else { a })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemigroupOptions {
    pub n_replicas: usize,
    pub step_h: f64,
    pub grid_spacing: f64,
    pub seed: u64,
}

impl SemigroupOptions {
    pub fn new(n_replicas: usize, seed: u64) -> Self {
        SemigroupOptions {
            n_replicas,
            step_h: 1e-3,
            grid_spacing: 0.05,
            seed,
        }
    }
}

/// Run the pure-noise dynamics from `x` and average `L₀m` along the paths.
/// For gradient descent a single deterministic path is used.
pub fn semigroup_l0m_path(l: &Landscape, x: &SphereState, horizon: f64, opts: &SemigroupOptions) -> Result<SemigroupPath> {
    if opts.n_replicas < 2 {
        return Err(invalid("semigroup estimate needs at least 2 replicas"));
    }
    let spec0 = l.spec().clone().with_lambda(0.0)?;
    let l0 = Landscape::new(&spec0, l.disorder())?;
    let beta = spec0.beta();
    let spacing = if horizon > 0.0 {
        opts.grid_spacing.min(horizon)
    } else {
        opts.step_h
    };
    let cfg = |seed| IntegratorConfig {
        step_h: opts.step_h.min(spacing),
        horizon_t: horizon,
        record_every: spacing,
        beta,
        seed,
        scheme: Scheme::ProjectedEulerMaruyama,
    };
    let obs = Observers {
        l0m: true,
        ..Default::default()
    };
    let replicas = if beta.is_infinite() { 1 } else { opts.n_replicas };
    let paths: Vec<Vec<f64>> = (0..replicas)
        .into_par_iter()
        .map(|i| {
            dynamics::run_trajectory(&l0, x, &cfg(rng::derive_seed(opts.seed, &[i as u64])), &obs)
                .map(|r| r.l0m.expect("l0m observed"))
        })
        .collect::<Result<_>>()?;
    let times = grid_times(horizon, spacing);
    let len = paths[0].len();
    let mut mean = vec![0.0; len];
    let mut std_error = vec![0.0; len];
    for j in 0..len {
        let col: Vec<f64> = paths.iter().map(|p| p[j]).collect();
        let (m, se) = mean_and_se(&col);
        mean[j] = m;
        std_error[j] = se;
    }
    Ok(SemigroupPath { times, mean, std_error })
}

fn grid_times(horizon: f64, spacing: f64) -> Vec<f64> {
    let mut g = vec![0.0];
    if horizon > 0.0 {
        let count = (horizon / spacing + 1e-9).floor() as usize;
        g.extend((1..=count).map(|i| i as f64 * spacing));
        if horizon - g.last().unwrap() > 1e-9 * horizon {
            g.push(horizon);
        }
    }
    g
}

/// `e^{tL₀} L₀m(x)` at a single time, as `(mean, std_error)`.
pub fn semigroup_l0m_estimate(l: &Landscape, x: &SphereState, t: f64, n_replicas: usize, seed: u64) -> Result<(f64, f64)> {
    let mut opts = SemigroupOptions::new(n_replicas, seed);
    opts.grid_spacing = if t > 0.0 { t } else { opts.step_h };
    let path = semigroup_l0m_path(l, x, t, &opts)?;
    let last = path.mean.len() - 1;
    Ok((path.mean[last], path.std_error[last]))
}

pub(crate) fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConditionLevel {
    /// `|L₀^ℓ m| ≤ N^{−1/2+δ}` for `ℓ = 1..=n`, evaluated exactly.
    Exact { n: u32 },
    /// `sup_{t ≤ T} |e^{tL₀} L₀m| ≤ N^{−1/2+δ}`, by Monte Carlo on a grid.
    WeakInfinity { horizon: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub level: ConditionLevel,
    pub delta: f64,
    pub threshold: f64,
    pub fraction_violating: f64,
    /// Per sample: `max_ℓ |L₀^ℓ m|`, or the sup over the grid of the Monte Carlo mean.
    pub values: Vec<f64>,
    /// Largest per-sample standard error (weak level only).
    pub mc_std_error: Option<f64>,
}

impl ConditionReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Check Condition 1 on a set of samples.
pub fn condition1_check(
    samples: &[SphereState],
    spec: &MixtureSpec,
    disorder: &Disorder,
    level: ConditionLevel,
    delta: f64,
    semigroup: Option<&SemigroupOptions>,
) -> Result<ConditionReport> {
    if !(delta > 0.0) {
        return Err(invalid("delta must be positive"));
    }
    if samples.is_empty() {
        return Err(invalid("no samples"));
    }
    let l = Landscape::new(spec, disorder)?;
    let threshold = (spec.n() as f64).powf(-0.5 + delta);
    let (values, mc_std_error) = match level {
        ConditionLevel::Exact { n } => {
            if !(1..=2).contains(&n) {
                return Err(Error::UnsupportedLevel(n));
            }
            let values: Vec<f64> = samples
                .par_iter()
                .map(|x| {
                    let v1 = l0m_exact(&l, x).abs();
                    if n == 2 {
                        v1.max(l0_squared_m(&l, x).abs())
                    } else {
                        v1
                    }
                })
                .collect();
            (values, None)
        }
        ConditionLevel::WeakInfinity { horizon } => {
            let base = semigroup.ok_or_else(|| invalid("weak level-infinity check needs semigroup options"))?;
            let results: Vec<(f64, f64)> = samples
                .par_iter()
                .enumerate()
                .map(|(i, x)| {
                    let opts = SemigroupOptions {
                        seed: rng::derive_seed(base.seed, &[i as u64]),
                        ..*base
                    };
                    semigroup_l0m_path(&l, x, horizon, &opts).map(|p| p.sup_abs())
                })
                .collect::<Result<_>>()?;
            let se = results.iter().map(|r| r.1).fold(0.0, f64::max);
            (results.into_iter().map(|r| r.0).collect(), Some(se))
        }
    };
    let bad = values.iter().filter(|&&v| v > threshold).count();
    Ok(ConditionReport {
        level,
        delta,
        threshold,
        fraction_violating: bad as f64 / values.len() as f64,
        values,
        mc_std_error,
    })
}

/// Empirical `ε ↦ fraction of samples with x₁ < ε`, in the sphere's own
/// coordinates (`x₁ = √N m`).
pub fn condition2_check(samples: &[SphereState], epsilons: &[f64]) -> Vec<(f64, f64)> {
    let total = samples.len().max(1) as f64;
    epsilons
        .iter()
        .map(|&eps| (eps, samples.iter().filter(|x| x.x1() < eps).count() as f64 / total))
        .collect()
}

/// Fraction of samples with `x₁ ≤ N^{−δ}`.
pub fn condition2_prime_check(samples: &[SphereState], delta: f64) -> f64 {
    let Some(first) = samples.first() else {
        return 0.0;
    };
    let bound = (first.n() as f64).powf(-delta);
    samples.iter().filter(|x| x.x1() <= bound).count() as f64 / samples.len() as f64
}
