//! Threshold bisection in `λ` and exponent fits.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::config::{Cell, ExperimentConfig};
use super::sweep::run_cell;
use crate::error::{invalid, Error, Result};
use crate::landscape::Beta;
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BisectionOptions {
    pub lo: f64,
    pub hi: f64,
    /// Stop when `hi/lo ≤ 1 + rel_width`.
    pub rel_width: f64,
    /// Bracket widenings (`lo/4`, `hi·4`) before giving up.
    pub max_widen: usize,
    pub bootstrap: usize,
}

impl BisectionOptions {
    /// Bracket `[N^{(k−2)/2}/4, 4N^{(k−2)/2}]` around the predicted scale.
    pub fn around_theory(n: usize, k: f64) -> Self {
        let scale = (n as f64).powf(((k - 2.0) / 2.0).max(0.0));
        BisectionOptions {
            lo: scale / 4.0,
            hi: scale * 4.0,
            rel_width: 0.1,
            max_widen: 3,
            bootstrap: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub lambda: f64,
    pub successes: usize,
    pub total: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaCEstimate {
    pub n: usize,
    pub k: f64,
    pub beta: Beta,
    pub lambda_c: f64,
    /// 95% bootstrap interval over replicas.
    pub ci: (f64, f64),
    pub bracket: (f64, f64),
    /// Every evaluated `λ`, sorted.
    pub evaluations: Vec<Evaluation>,
    /// Success rates were non-decreasing in `λ` across the evaluations.
    pub monotone: bool,
}

/// Interpolate the `½` crossing in `log λ` between the last evaluation below
/// `½` and the first at or above it.
fn crossing(lambdas: &[f64], rates: &[f64]) -> Option<f64> {
    let j = rates.iter().position(|&p| p >= 0.5)?;
    if j == 0 {
        return Some(lambdas[0]);
    }
    let i = (0..j).rev().find(|&i| rates[i] < 0.5)?;
    let (a, b) = (lambdas[i].ln(), lambdas[j].ln());
    let (pa, pb) = (rates[i], rates[j]);
    let t = if pb > pa { (0.5 - pa) / (pb - pa) } else { 0.5 };
    Some((a + t * (b - a)).exp())
}

/// Bisection of the empirical success probability in `log λ`. Every
/// evaluation reuses the same disorders, starts and noise (cell index 0), so
/// the success indicators are coupled across `λ`.
pub fn estimate_lambda_c(
    cfg: &ExperimentConfig,
    n: usize,
    k: f64,
    beta: Beta,
    opts: &BisectionOptions,
) -> Result<LambdaCEstimate> {
    if !(opts.lo > 0.0 && opts.hi > opts.lo && opts.rel_width > 0.0) {
        return Err(invalid("bisection needs 0 < lo < hi and a positive width"));
    }
    let mut evals: Vec<(f64, Vec<bool>)> = Vec::new();
    let mut eval = |lambda: f64| -> Result<f64> {
        let cell = Cell {
            index: 0,
            n,
            k,
            alpha: None,
            lambda,
            beta,
        };
        let spec = cfg.spec_for(&cell)?;
        let reps = run_cell(cfg, &cell, &spec);
        let ok: Vec<bool> = reps.iter().filter(|r| r.error.is_none()).map(|r| r.success).collect();
        if ok.is_empty() {
            return Err(invalid(format!("every replica failed at lambda = {lambda}")));
        }
        if ok.len() < reps.len() {
            log::warn!("{} replicas failed at lambda = {lambda}", reps.len() - ok.len());
        }
        let rate = ok.iter().filter(|&&s| s).count() as f64 / ok.len() as f64;
        log::info!("N = {n}: lambda = {lambda:.5} -> success {rate:.3}");
        evals.push((lambda, ok));
        Ok(rate)
    };

    let (mut lo, mut hi) = (opts.lo, opts.hi);
    let mut p_lo = eval(lo)?;
    let mut p_hi = eval(hi)?;
    let mut widen = 0;
    while !(p_lo < 0.5 && p_hi >= 0.5) {
        if widen == opts.max_widen {
            return Err(Error::Bracket { lo, hi, p_lo, p_hi });
        }
        widen += 1;
        if p_lo >= 0.5 {
            lo /= 4.0;
            p_lo = eval(lo)?;
        }
        if p_hi < 0.5 {
            hi *= 4.0;
            p_hi = eval(hi)?;
        }
    }
    while hi / lo > 1.0 + opts.rel_width {
        let mid = (lo * hi).sqrt();
        if eval(mid)? >= 0.5 {
            hi = mid;
        } else {
            lo = mid;
        }
    }

    evals.sort_by(|a, b| a.0.total_cmp(&b.0));
    let lambdas: Vec<f64> = evals.iter().map(|e| e.0).collect();
    let rate = |v: &[bool], idx: &[usize]| idx.iter().filter(|&&i| v[i]).count() as f64 / idx.len() as f64;
    let m = evals.iter().map(|e| e.1.len()).min().unwrap();
    let all: Vec<usize> = (0..m).collect();
    let rates: Vec<f64> = evals.iter().map(|e| rate(&e.1, &all)).collect();
    let monotone = rates.windows(2).all(|w| w[1] >= w[0]);
    if !monotone {
        log::warn!("success rates are not monotone in lambda at N = {n}: {rates:?}");
    }
    let lambda_c = crossing(&lambdas, &rates).unwrap_or((lo * hi).sqrt());

    let mut r = rng::stream(cfg.seed, &[0xB007, n as u64]);
    let mut boots: Vec<f64> = (0..opts.bootstrap)
        .map(|_| {
            let idx: Vec<usize> = (0..m).map(|_| r.random_range(0..m)).collect();
            let rs: Vec<f64> = evals.iter().map(|e| rate(&e.1, &idx)).collect();
            crossing(&lambdas, &rs).unwrap_or(if rs.iter().all(|&p| p < 0.5) {
                *lambdas.last().unwrap()
            } else {
                lambdas[0]
            })
        })
        .collect();
    boots.sort_by(f64::total_cmp);
    let ci = if boots.is_empty() {
        (lo, hi)
    } else {
        let q = |p: f64| boots[((p * (boots.len() - 1) as f64).round()) as usize];
        (q(0.025), q(0.975))
    };
    Ok(LambdaCEstimate {
        n,
        k,
        beta,
        lambda_c,
        ci,
        bracket: (lo, hi),
        evaluations: evals
            .iter()
            .map(|e| Evaluation {
                lambda: e.0,
                successes: e.1.iter().filter(|&&s| s).count(),
                total: e.1.len(),
            })
            .collect(),
        monotone,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub slope_std_error: f64,
    /// 95% interval for the slope (Student t with `n − 2` degrees of freedom).
    pub slope_ci: (f64, f64),
}

/// Least squares of `log λ_c` on `log N`.
pub fn fit_alpha_exponent(points: &[(usize, f64)]) -> Result<ExponentFit> {
    if points.len() < 3 {
        return Err(invalid("an exponent fit needs at least 3 points"));
    }
    if points.iter().any(|&(n, l)| n == 0 || !(l > 0.0)) {
        return Err(invalid("exponent fits need N > 0 and lambda_c > 0"));
    }
    let xs: Vec<f64> = points.iter().map(|p| (p.0 as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(invalid("exponent fits need at least two distinct N"));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - sse / syy };
    let slope_std_error = (sse / (n - 2.0) / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, n - 2.0)
        .map_err(|e| invalid(e.to_string()))?
        .inverse_cdf(0.975);
    Ok(ExponentFit {
        slope,
        intercept,
        r_squared,
        slope_std_error,
        slope_ci: (slope - t * slope_std_error, slope + t * slope_std_error),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal_oracle;

    #[test]
    fn exact_line() {
        let pts: Vec<(usize, f64)> = [16usize, 32, 64, 128].iter().map(|&n| (n, 3.0 * (n as f64).sqrt())).collect();
        let fit = fit_alpha_exponent(&pts).unwrap();
        assert!((fit.slope - 0.5).abs() < 1e-12);
        assert!((fit.intercept - 3f64.ln()).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noisy_line() {
        let mut r = rng::stream(4, &[]);
        let pts: Vec<(usize, f64)> = [16usize, 32, 64, 128, 256, 512]
            .iter()
            .map(|&n| (n, 3.0 * (n as f64).sqrt() * (1.0 + 0.05 * (2.0 * r.random::<f64>() - 1.0))))
            .collect();
        let fit = fit_alpha_exponent(&pts).unwrap();
        assert!((fit.slope - 0.5).abs() < 0.05);
        assert!(fit.slope_ci.0 < fit.slope && fit.slope < fit.slope_ci.1);
    }

    #[test]
    fn too_few_points() {
        assert!(fit_alpha_exponent(&[(16, 1.0), (32, 2.0)]).is_err());
    }

    fn pure_signal_config(n: usize) -> ExperimentConfig {
        let r0 = 1.0 / (n as f64).sqrt();
        ExperimentConfig::from_toml_str(&format!(
            r#"
n = [{n}]
k = [3.0]
lambda = [1.0]
beta = ["inf"]
mixture = [[3, 1.0]]
pure_signal = true
n_disorder = 1
n_init = 1
horizon = 20.0
seed = 1
[success]
kind = "strong"
epsilon = 0.1
[init]
kind = "fixed_correlation"
r = {r0}
"#
        ))
        .unwrap()
    }

    #[test]
    fn pure_signal_threshold_matches_the_ode() {
        let n = 100;
        let cfg = pure_signal_config(n);
        let est = estimate_lambda_c(&cfg, n, 3.0, Beta::Infinite, &BisectionOptions::around_theory(n, 3.0)).unwrap();
        // the ODE reaches 0.9 exactly at t0 = 1 at the threshold
        let m0 = 1.0 / (n as f64).sqrt();
        let reaches = |lambda: f64| {
            let spec = crate::landscape::MixtureSpec::new(n, [(3, 1.0)], 3.0, lambda, Beta::Infinite).unwrap();
            let sol = signal_oracle::solve_pure_signal_ode(m0, &spec, 1.0).unwrap();
            sol.y_end() >= 0.9
        };
        let (mut lo, mut hi) = (0.1f64, 1000.0f64);
        for _ in 0..60 {
            let mid: f64 = (lo * hi).sqrt();
            if reaches(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let oracle = (lo * hi).sqrt();
        assert!((est.lambda_c / oracle - 1.0).abs() < 0.2, "{} vs {oracle}", est.lambda_c);
        assert!(est.monotone);
    }

    #[test]
    fn unreachable_bracket_errors() {
        let n = 16;
        let cfg = pure_signal_config(n);
        let opts = BisectionOptions {
            lo: 1e-6,
            hi: 2e-6,
            rel_width: 0.1,
            max_widen: 1,
            bootstrap: 10,
        };
        assert!(matches!(
            estimate_lambda_c(&cfg, n, 3.0, Beta::Infinite, &opts),
            Err(Error::Bracket { .. })
        ));
    }
}
