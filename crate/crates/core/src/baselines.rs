//! Spiked tensor `Y = √N λ e₁^{⊗k} + W` and tensor power iteration.
//!
//! Only one observation is materialized. `M` independent observations are
//! equivalent in law to one at `√M λ`, see [`effective_lambda`].

use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::landscape::tensor::{contract_leading, dot};
use crate::landscape::{cache_file_name, read_tensor_file, write_tensor_file};
use crate::landscape::{sample_tensor, DEFAULT_ENTRY_BUDGET};
use crate::rng;

#[derive(Clone, Debug, PartialEq)]
pub struct SpikedTensor {
    k: u32,
    n: usize,
    lambda: f64,
    seed: u64,
    y: Vec<f64>,
}

impl SpikedTensor {
    /// Noise drawn from the same stream as a landscape tensor of order `k`.
    pub fn sample(n: usize, k: u32, lambda: f64, seed: u64) -> Result<Self> {
        Self::check(n, k)?;
        Self::from_noise(n, k, lambda, seed, sample_tensor(n, k, seed))
    }

    /// Like [`SpikedTensor::sample`] but reads the noise from the disorder
    /// cache in `dir`, writing it there on a miss.
    pub fn load_or_sample(n: usize, k: u32, lambda: f64, seed: u64, dir: &Path) -> Result<Self> {
        Self::check(n, k)?;
        std::fs::create_dir_all(dir)?;
        let path = dir.join(cache_file_name(n, k, seed));
        let w = if path.exists() {
            let (h, w) = read_tensor_file(&path)?;
            if h.n as usize != n || h.p != k || h.seed != seed {
                return Err(crate::Error::CacheFormat {
                    path,
                    reason: "header does not match the requested tensor".into(),
                });
            }
            w
        } else {
            let w = sample_tensor(n, k, seed);
            write_tensor_file(&path, n, k, seed, &w)?;
            w
        };
        Self::from_noise(n, k, lambda, seed, w)
    }

    /// Build from an explicit noise tensor (row-major, last index fastest).
    pub fn from_noise(n: usize, k: u32, lambda: f64, seed: u64, mut w: Vec<f64>) -> Result<Self> {
        Self::check(n, k)?;
        if w.len() != n.pow(k) {
            return Err(invalid(format!(
                "noise tensor has {} entries, expected {}",
                w.len(),
                n.pow(k)
            )));
        }
        if !lambda.is_finite() {
            return Err(invalid("lambda must be finite"));
        }
        w[0] += (n as f64).sqrt() * lambda;
        Ok(SpikedTensor {
            k,
            n,
            lambda,
            seed,
            y: w,
        })
    }

    fn check(n: usize, k: u32) -> Result<()> {
        if k < 2 || n == 0 {
            return Err(invalid("spiked tensors need k >= 2 and N >= 1"));
        }
        let entries = (n as u64).checked_pow(k).unwrap_or(u64::MAX);
        if entries > DEFAULT_ENTRY_BUDGET {
            return Err(crate::Error::BudgetExceeded {
                p: k,
                entries,
                budget: DEFAULT_ENTRY_BUDGET,
            });
        }
        Ok(())
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn entries(&self) -> &[f64] {
        &self.y
    }

    /// `Y[x, …, x, ·]`.
    pub fn contract(&self, x: &[f64]) -> Vec<f64> {
        contract_leading(&self.y, x, self.k)
    }
}

/// One observation at `√M λ` has the law of `M` averaged observations at `λ`.
pub fn effective_lambda(lambda: f64, observations: usize) -> f64 {
    (observations as f64).sqrt() * lambda
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerIteration {
    /// Final unit iterate.
    pub x: Vec<f64>,
    /// `⟨x_t, e₁⟩` for `t = 0, …, iters`.
    pub overlaps: Vec<f64>,
    /// Times a zero contraction forced a fresh random start.
    pub restarts: usize,
}

fn random_unit<R: Rng + ?Sized>(n: usize, r: &mut R) -> Vec<f64> {
    loop {
        let mut x = vec![0.0; n];
        rng::fill_normal(r, &mut x);
        let norm = dot(&x, &x).sqrt();
        if norm > 0.0 {
            x.iter_mut().for_each(|v| *v /= norm);
            return x;
        }
    }
}

/// `x ← Y[x, …, x, ·] / |Y[x, …, x, ·]|`.
pub fn tensor_power_iteration<R: Rng + ?Sized>(y: &SpikedTensor, x0: &[f64], iters: usize, r: &mut R) -> Result<PowerIteration> {
    if x0.len() != y.n() {
        return Err(invalid("start vector has the wrong dimension"));
    }
    let norm0 = dot(x0, x0).sqrt();
    if (norm0 - 1.0).abs() > 1e-9 {
        return Err(invalid(format!("start vector must be a unit vector, |x0| = {norm0}")));
    }
    let mut x = x0.to_vec();
    let mut overlaps = vec![x[0]];
    let mut restarts = 0;
    for _ in 0..iters {
        let mut next = y.contract(&x);
        let mut norm = dot(&next, &next).sqrt();
        while !(norm > 0.0) {
            log::warn!("zero contraction in power iteration; restarting from a random vector");
            restarts += 1;
            next = y.contract(&random_unit(y.n(), r));
            norm = dot(&next, &next).sqrt();
        }
        next.iter_mut().for_each(|v| *v /= norm);
        x = next;
        overlaps.push(x[0]);
    }
    Ok(PowerIteration { x, overlaps, restarts })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerTrial {
    pub trial: usize,
    pub seed: u64,
    pub final_overlap: f64,
    pub restarts: usize,
}

/// Independent trials, each with fresh noise and a uniform random start.
pub fn power_iteration_trials(n: usize, k: u32, lambda: f64, trials: usize, iters: usize, seed: u64) -> Result<Vec<PowerTrial>> {
    (0..trials)
        .into_par_iter()
        .map(|i| {
            let s = rng::derive_seed(seed, &[i as u64]);
            let y = SpikedTensor::sample(n, k, lambda, s)?;
            let mut r = rng::stream(s, &[1]);
            let x0 = random_unit(n, &mut r);
            let run = tensor_power_iteration(&y, &x0, iters, &mut r)?;
            Ok(PowerTrial {
                trial: i,
                seed: s,
                final_overlap: *run.overlaps.last().unwrap(),
                restarts: run.restarts,
            })
        })
        .collect()
}
