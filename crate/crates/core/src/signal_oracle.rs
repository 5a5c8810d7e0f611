//! Noise-free oracles: the effective potential, the drift of `m` with
//! `H₀ ≡ 0`, power-law comparison bounds and the recovery thresholds.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::landscape::{Beta, MixtureSpec};

/// `V(m) = βλ φ(m) + ½ log(1 − m²)`.
pub fn effective_potential(m: f64, beta: f64, lambda: f64, k: f64) -> Result<f64> {
    if !(m.abs() < 1.0) {
        return Err(Error::Domain {
            what: "effective potential",
            value: m,
        });
    }
    Ok(beta * lambda * signal_power(m, k) + 0.5 * (1.0 - m * m).ln())
}

pub fn effective_potential_prime(m: f64, beta: f64, lambda: f64, k: f64) -> Result<f64> {
    if !(m.abs() < 1.0) {
        return Err(Error::Domain {
            what: "effective potential",
            value: m,
        });
    }
    Ok(beta * lambda * signal_power_prime(m, k) - m / (1.0 - m * m))
}

fn signal_power(m: f64, k: f64) -> f64 {
    if k.fract() == 0.0 {
        m.powi(k as i32)
    } else {
        m.max(0.0).powf(k)
    }
}

fn signal_power_prime(m: f64, k: f64) -> f64 {
    if k.fract() == 0.0 {
        k * m.powi(k as i32 - 1)
    } else if m > 0.0 {
        k * m.powf(k - 1.0)
    } else {
        0.0
    }
}

/// Which right-hand side to use for `ṁ`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftForm {
    /// `βλ φ'(m)(1 − m²) − (N−1)/N m`, without the last term for gradient descent.
    #[default]
    Exact,
    /// `βλ φ'(m) − m` (β finite) or `λ φ'(m)` (gradient descent).
    Simplified,
}

/// Drift of `m` in the pure-signal problem.
pub fn drift_m(m: f64, spec: &MixtureSpec) -> f64 {
    drift_with(m, spec, DriftForm::Exact)
}

pub fn drift_with(m: f64, spec: &MixtureSpec, form: DriftForm) -> f64 {
    let n = spec.n() as f64;
    let push = spec.beta().drift_scale() * spec.lambda() * spec.phi_prime(m);
    match (form, spec.beta()) {
        (DriftForm::Exact, Beta::Finite(_)) => push * (1.0 - m * m) - (n - 1.0) / n * m,
        (DriftForm::Exact, Beta::Infinite) => push * (1.0 - m * m),
        (DriftForm::Simplified, Beta::Finite(_)) => push - m,
        (DriftForm::Simplified, Beta::Infinite) => push,
    }
}

/// Options for the adaptive Dormand–Prince integrator.
#[derive(Clone, Copy, Debug)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: 1e-10,
            atol: 1e-14,
            max_steps: 1_000_000,
        }
    }
}

/// Piecewise quartic dense output of a scalar ODE solution.
#[derive(Clone, Debug)]
pub struct DenseSolution {
    t: Vec<f64>,
    y: Vec<f64>,
    /// Per step: `y0, y1 − y0, h f0 − (y1 − y0), …` in the usual contd5 layout.
    cont: Vec<[f64; 5]>,
    clamp: Option<(f64, f64)>,
    /// Time at which the stop condition fired, if it did.
    pub event: Option<f64>,
}

impl DenseSolution {
    pub fn t_end(&self) -> f64 {
        *self.t.last().unwrap()
    }

    pub fn y_end(&self) -> f64 {
        *self.y.last().unwrap()
    }

    pub fn mesh(&self) -> (&[f64], &[f64]) {
        (&self.t, &self.y)
    }

    /// Interpolated value at `t`. Outside the integrated range the nearest
    /// endpoint value is returned.
    pub fn eval(&self, t: f64) -> f64 {
        let v = if t <= self.t[0] {
            self.y[0]
        } else if t >= self.t_end() {
            self.y_end()
        } else {
            let i = self.t.partition_point(|&s| s <= t) - 1;
            let h = self.t[i + 1] - self.t[i];
            let th = (t - self.t[i]) / h;
            let th1 = 1.0 - th;
            let r = &self.cont[i];
            r[0] + th * (r[1] + th1 * (r[2] + th * (r[3] + th1 * r[4])))
        };
        match self.clamp {
            Some((lo, hi)) => v.clamp(lo, hi),
            None => v,
        }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Integrate `ẏ = f(t, y)` from `(t0, y0)` to `t_end` with Dormand–Prince 5(4).
/// Integration halts at the end of the first accepted step where `stop`
/// returns true; that time is reported in `event`.
pub fn integrate<F, S>(f: F, t0: f64, y0: f64, t_end: f64, opts: OdeOptions, stop: S) -> Result<DenseSolution>
where
    F: Fn(f64, f64) -> f64,
    S: Fn(f64, f64) -> bool,
{
    if !(t_end >= t0) {
        return Err(invalid("integration end precedes start"));
    }
    let mut sol = DenseSolution {
        t: vec![t0],
        y: vec![y0],
        cont: Vec::new(),
        clamp: None,
        event: None,
    };
    if t_end == t0 {
        return Ok(sol);
    }
    let (mut t, mut y) = (t0, y0);
    let mut k1 = f(t, y);
    let scale0 = opts.atol + opts.rtol * y.abs();
    let mut h = if k1 == 0.0 {
        (t_end - t0) * 1e-3
    } else {
        (0.01 * scale0 / k1.abs()).powf(0.2).min(t_end - t0) * 0.1
    }
    .max(1e-12 * (t_end - t0).max(1.0));
    let mut steps = 0;
    while t < t_end {
        steps += 1;
        if steps > opts.max_steps {
            return Err(invalid("ODE integration exceeded the step budget"));
        }
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }
        let k2 = f(t + C2 * h, y + h * A21 * k1);
        let k3 = f(t + C3 * h, y + h * (A31 * k1 + A32 * k2));
        let k4 = f(t + C4 * h, y + h * (A41 * k1 + A42 * k2 + A43 * k3));
        let k5 = f(t + C5 * h, y + h * (A51 * k1 + A52 * k2 + A53 * k3 + A54 * k4));
        let k6 = f(t + h, y + h * (A61 * k1 + A62 * k2 + A63 * k3 + A64 * k4 + A65 * k5));
        let y1 = y + h * (A71 * k1 + A73 * k3 + A74 * k4 + A75 * k5 + A76 * k6);
        let k7 = f(t + h, y1);
        let err = h * (E1 * k1 + E3 * k3 + E4 * k4 + E5 * k5 + E6 * k6 + E7 * k7);
        let sc = opts.atol + opts.rtol * y.abs().max(y1.abs());
        let en = (err / sc).abs();
        if !en.is_finite() || !y1.is_finite() {
            h *= 0.2;
            continue;
        }
        if en <= 1.0 {
            let r2 = y1 - y;
            let r3 = h * k1 - r2;
            let r4 = r2 - h * k7 - r3;
            let r5 = h * (D1 * k1 + D3 * k3 + D4 * k4 + D5 * k5 + D6 * k6 + D7 * k7);
            sol.cont.push([y, r2, r3, r4, r5]);
            t = if last { t_end } else { t + h };
            y = y1;
            k1 = k7;
            sol.t.push(t);
            sol.y.push(y);
            if stop(t, y) {
                sol.event = Some(t);
                break;
            }
        }
        let fac = if en == 0.0 {
            10.0
        } else {
            (0.9 * en.powf(-0.2)).clamp(0.2, 10.0)
        };
        h *= if en <= 1.0 { fac } else { fac.min(1.0) };
    }
    Ok(sol)
}

/// Solve `ṁ = drift(m)` on `[0, T]` with the exact drift.
pub fn solve_pure_signal_ode(m0: f64, spec: &MixtureSpec, horizon: f64) -> Result<DenseSolution> {
    solve_signal_ode(m0, spec, horizon, DriftForm::Exact)
}

pub fn solve_signal_ode(m0: f64, spec: &MixtureSpec, horizon: f64, form: DriftForm) -> Result<DenseSolution> {
    if !(m0.abs() < 1.0) {
        return Err(Error::Domain {
            what: "initial correlation",
            value: m0,
        });
    }
    let mut sol = match form {
        DriftForm::Exact => integrate(
            |_, m| drift_with(m.clamp(-1.0, 1.0), spec, form),
            0.0,
            m0,
            horizon,
            OdeOptions::default(),
            |_, m| m.abs() >= 1.0,
        )?,
        // the simplified drift can blow up in finite time
        DriftForm::Simplified => integrate(
            |_, m| drift_with(m, spec, form),
            0.0,
            m0,
            horizon,
            OdeOptions::default(),
            |_, m| m.abs() >= 1.0,
        )?,
    };
    if form == DriftForm::Exact {
        sol.clamp = Some((-1.0, 1.0));
    }
    Ok(sol)
}

fn check_power_law(a: f64, c: f64, gamma: f64) -> Result<()> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::Domain {
            what: "power-law initial value a",
            value: a,
        });
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::Domain {
            what: "power-law rate c",
            value: c,
        });
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::Domain {
            what: "power-law exponent gamma",
            value: gamma,
        });
    }
    if gamma == 1.0 {
        return Err(Error::GronwallRegime);
    }
    Ok(())
}

/// `t** = [(γ−1) c a^{γ−1}]⁻¹` for `γ > 1`; infinite for `γ < 1`.
pub fn blowup_time(a: f64, c: f64, gamma: f64) -> Result<f64> {
    check_power_law(a, c, gamma)?;
    if gamma < 1.0 {
        return Ok(f64::INFINITY);
    }
    Ok(1.0 / ((gamma - 1.0) * c * a.powf(gamma - 1.0)))
}

/// `a (1 − (γ−1) c a^{γ−1} t)^{−1/(γ−1)}`, the solution of `ḣ = c h^γ`, `h(0) = a`.
pub fn power_law_bound(a: f64, c: f64, gamma: f64, t: f64) -> Result<f64> {
    check_power_law(a, c, gamma)?;
    let base = 1.0 - (gamma - 1.0) * c * a.powf(gamma - 1.0) * t;
    if !(t >= 0.0) || base <= 0.0 {
        return Err(Error::Domain {
            what: "time before blow-up",
            value: t,
        });
    }
    Ok(a * base.powf(-1.0 / (gamma - 1.0)))
}

/// Result of numerically integrating `ḣ = c h^γ` until blow-up.
#[derive(Clone, Debug)]
pub struct PowerLawRun {
    pub solution: DenseSolution,
    /// Estimated blow-up time, or `None` if the horizon was reached first.
    pub blowup: Option<f64>,
}

/// Growth-rate ratio `(f(h)/h) / (f(a)/a)` at which blow-up is declared.
/// The remaining time is then about `t** / BLOWUP_RATIO`.
pub const BLOWUP_RATIO: f64 = 1e12;

/// Integrate `ḣ = c h^γ` adaptively, detecting blow-up by event.
pub fn integrate_power_law(a: f64, c: f64, gamma: f64, horizon: f64) -> Result<PowerLawRun> {
    check_power_law(a, c, gamma)?;
    let rate0 = c * a.powf(gamma - 1.0);
    let opts = OdeOptions {
        rtol: 1e-12,
        atol: 0.0,
        max_steps: 1_000_000,
    };
    let solution = integrate(
        |_, h| c * h.powf(gamma),
        0.0,
        a,
        horizon,
        opts,
        |_, h| c * h.powf(gamma - 1.0) >= BLOWUP_RATIO * rate0,
    )?;
    let blowup = solution.event;
    Ok(PowerLawRun { solution, blowup })
}

/// `α_c(n) = (k−1)/2 − (n−1)/(2n)`; `None` means `n = ∞`, giving `(k−2)/2`.
pub fn alpha_c(k: f64, n: Option<u32>) -> f64 {
    match n {
        Some(n) => (k - 1.0) / 2.0 - (n as f64 - 1.0) / (2.0 * n as f64),
        None => (k - 2.0) / 2.0,
    }
}

/// `k_c(n) = 2 − 1/n`; `None` means `n = ∞`, giving 2.
pub fn k_c(n: Option<u32>) -> f64 {
    match n {
        Some(n) => 2.0 - 1.0 / n as f64,
        None => 2.0,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdTable {
    pub k: f64,
    /// `α_c(n)` for `n = 1..=n_max`.
    pub alpha_c: Vec<f64>,
    pub alpha_c_inf: f64,
    pub k_c: Vec<f64>,
    pub k_c_inf: f64,
}

pub fn threshold_table(k: f64, n_max: u32) -> Result<ThresholdTable> {
    if n_max == 0 {
        return Err(invalid("n_max must be at least 1"));
    }
    Ok(ThresholdTable {
        k,
        alpha_c: (1..=n_max).map(|n| alpha_c(k, Some(n))).collect(),
        alpha_c_inf: alpha_c(k, None),
        k_c: (1..=n_max).map(|n| k_c(Some(n))).collect(),
        k_c_inf: k_c(None),
    })
}
