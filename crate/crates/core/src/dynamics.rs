//! Spherical Langevin dynamics and gradient descent.
//!
//! One Langevin step is `v = x + √(2h) P_x ζ − hβ ∇H(x)` followed by the
//! retraction `x' = √N v/|v|`; gradient descent drops the noise and uses
//! `β = 1` in the drift.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::conditions;
use crate::error::{invalid, Error, Result};
use crate::landscape::{correlation, project_tangent, retract, tensor, Beta, Landscape, MixtureSpec, SphereState};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    ProjectedEulerMaruyama,
    /// Classical RK4 with every stage retracted. Gradient descent only.
    ProjectedRk4,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub step_h: f64,
    pub horizon_t: f64,
    pub record_every: f64,
    pub beta: Beta,
    pub seed: u64,
    pub scheme: Scheme,
}

/// Default step: `min(1e-3, 1e-2/(βλk + 1))` for Langevin and
/// `min(1e-2, 0.5/(λk + 1))` for gradient descent.
pub fn default_step(spec: &MixtureSpec) -> f64 {
    let lk = spec.lambda() * spec.k();
    match spec.beta() {
        Beta::Finite(b) => (1e-2 / (b * lk + 1.0)).min(1e-3),
        Beta::Infinite => (0.5 / (lk + 1.0)).min(1e-2),
    }
}

impl IntegratorConfig {
    /// Euler–Maruyama with the default step for `spec`, recording every 0.05.
    pub fn for_spec(spec: &MixtureSpec, horizon_t: f64, seed: u64) -> Self {
        let step_h = default_step(spec);
        IntegratorConfig {
            step_h,
            horizon_t,
            record_every: 0.05f64.max(step_h),
            beta: spec.beta(),
            seed,
            scheme: Scheme::ProjectedEulerMaruyama,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_h.is_finite() && self.step_h > 0.0) {
            return Err(invalid(format!("step_h must be positive, got {}", self.step_h)));
        }
        if !(self.horizon_t.is_finite() && self.horizon_t >= 0.0) {
            return Err(invalid(format!("horizon_t must be >= 0, got {}", self.horizon_t)));
        }
        if !(self.record_every.is_finite() && self.record_every >= self.step_h) {
            return Err(invalid("record_every must be at least step_h"));
        }
        if self.horizon_t > 0.0 && self.record_every > self.horizon_t {
            return Err(invalid("record_every must not exceed horizon_t"));
        }
        if self.scheme == Scheme::ProjectedRk4 && !self.beta.is_infinite() {
            return Err(invalid("the RK4 scheme is only available for gradient descent (beta = inf)"));
        }
        Ok(())
    }
}

/// Scratch space reused across steps.
struct Workspace {
    noise: Vec<f64>,
    v: Vec<f64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Workspace {
            noise: vec![0.0; n],
            v: vec![0.0; n],
        }
    }
}

fn covariant_value_grad(l: &Landscape, x: &[f64], time: f64) -> Result<(f64, Vec<f64>)> {
    let (value, mut g) = l.value_grad_at(x);
    project_tangent(x, &mut g);
    if !(value.is_finite() && g.iter().all(|c| c.is_finite())) {
        return Err(Error::NonFiniteGradient { time });
    }
    Ok((value, g))
}

fn langevin_in_place<R: Rng + ?Sized>(x: &mut [f64], grad: &[f64], beta: f64, h: f64, ws: &mut Workspace, rng: &mut R) {
    rng::fill_normal(rng, &mut ws.noise);
    project_tangent(x, &mut ws.noise);
    let s = (2.0 * h).sqrt();
    for ((xi, zi), gi) in x.iter_mut().zip(&ws.noise).zip(grad) {
        *xi += s * zi - h * beta * gi;
    }
    retract(x);
}

fn euler_in_place(x: &mut [f64], grad: &[f64], h: f64) {
    tensor::axpy(x, -h, grad);
    retract(x);
}

fn rk4_in_place(l: &Landscape, x: &mut [f64], k1: &[f64], h: f64, time: f64, ws: &mut Workspace) -> Result<()> {
    let stage = |ws: &mut Workspace, x: &[f64], k: &[f64], c: f64| -> Result<Vec<f64>> {
        ws.v.copy_from_slice(x);
        tensor::axpy(&mut ws.v, -c, k);
        retract(&mut ws.v);
        Ok(covariant_value_grad(l, &ws.v, time)?.1)
    };
    let k2 = stage(ws, x, k1, 0.5 * h)?;
    let k3 = stage(ws, x, &k2, 0.5 * h)?;
    let k4 = stage(ws, x, &k3, h)?;
    for i in 0..x.len() {
        x[i] -= h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    retract(x);
    Ok(())
}

/// One projected Euler–Maruyama step of Langevin dynamics.
pub fn langevin_step<R: Rng + ?Sized>(l: &Landscape, x: &SphereState, h: f64, rng: &mut R) -> Result<SphereState> {
    let beta = l
        .spec()
        .beta()
        .finite()
        .ok_or_else(|| invalid("langevin_step needs a finite beta"))?;
    if !(h > 0.0) {
        return Err(invalid("step must be positive"));
    }
    let mut y = x.coords().to_vec();
    let (_, g) = covariant_value_grad(l, &y, 0.0)?;
    let mut ws = Workspace::new(y.len());
    langevin_in_place(&mut y, &g, beta, h, &mut ws, rng);
    Ok(SphereState::from_raw(y))
}

fn check_well_posed(spec: &MixtureSpec, m: f64) -> Result<()> {
    let k = spec.k();
    if !spec.k_is_integer() && k < 2.0 && m <= 0.0 {
        return Err(Error::IllPosedStart { m });
    }
    Ok(())
}

/// One deterministic gradient-descent step.
pub fn gd_step(l: &Landscape, x: &SphereState, h: f64, scheme: Scheme) -> Result<SphereState> {
    if !l.spec().beta().is_infinite() {
        return Err(invalid("gd_step needs beta = inf"));
    }
    check_well_posed(l.spec(), x.m())?;
    let mut y = x.coords().to_vec();
    let (_, g) = covariant_value_grad(l, &y, 0.0)?;
    match scheme {
        Scheme::ProjectedEulerMaruyama => euler_in_place(&mut y, &g, h),
        Scheme::ProjectedRk4 => {
            let mut ws = Workspace::new(y.len());
            rk4_in_place(l, &mut y, &g, h, 0.0, &mut ws)?
        }
    }
    Ok(SphereState::from_raw(y))
}

/// Early termination of a trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum StopRule {
    /// Gradient descent has reached a critical point: `|∇H| < tol`. The rest
    /// of the record is filled with the frozen state.
    Stationary { tol: f64 },
    /// `m < level` at a recording time `t ≥ after`. Checked on the record
    /// grid only, so stopping agrees with [`TrajectoryRecord::min_m_over`].
    DropsBelow { level: f64, after: f64 },
    /// `m ≥ level`.
    Reaches { level: f64 },
    /// `|x₁| ≥ bound`.
    LeavesBand { x1_bound: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StopEvent {
    pub time: f64,
    pub rule: StopRule,
}

/// What to record besides `t`, `m` and the energy.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Observers {
    pub l0m: bool,
    pub gradnorm: bool,
    pub thresholds: Vec<f64>,
    pub stop: Vec<StopRule>,
}

impl Observers {
    pub fn all() -> Self {
        Observers {
            l0m: true,
            gradnorm: true,
            ..Default::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HitTime {
    pub threshold: f64,
    pub time: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub m: Vec<f64>,
    pub energy: Vec<f64>,
    pub l0m: Option<Vec<f64>>,
    pub gradnorm: Option<Vec<f64>>,
    pub hitting: Vec<HitTime>,
    pub stopped: Option<StopEvent>,
    pub final_state: SphereState,
}

impl TrajectoryRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Minimum of `m` over recorded times in `[t0, t1]`, or `None` if no
    /// record falls in the window.
    pub fn min_m_over(&self, t0: f64, t1: f64) -> Option<f64> {
        self.times
            .iter()
            .zip(&self.m)
            .filter(|(&t, _)| t >= t0 - 1e-12 && t <= t1 + 1e-12)
            .map(|(_, &m)| m)
            .reduce(f64::min)
    }

    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "t,m,energy,l0m,gradnorm")?;
        let opt = |v: &Option<Vec<f64>>, i: usize| v.as_ref().map(|s| format!("{:.16e}", s[i])).unwrap_or_default();
        for i in 0..self.len() {
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{},{}",
                self.times[i],
                self.m[i],
                self.energy[i],
                opt(&self.l0m, i),
                opt(&self.gradnorm, i)
            )?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(&mut out)?;
        out.flush()?;
        Ok(())
    }
}

/// First recorded time with `m ≥ eps`.
pub fn hitting_time(record: &TrajectoryRecord, eps: f64) -> Option<f64> {
    first_passage(&record.times, &record.m, eps)
}

pub(crate) fn first_passage(times: &[f64], m: &[f64], eps: f64) -> Option<f64> {
    times.iter().zip(m).find(|(_, &v)| v >= eps).map(|(&t, _)| t)
}

struct Recorder<'r> {
    obs: &'r Observers,
    beta: Beta,
    rec: TrajectoryRecord,
}

impl<'r> Recorder<'r> {
    fn push(&mut self, l: &Landscape, t: f64, x: &[f64], energy: f64, gradnorm: f64) {
        self.rec.times.push(t);
        self.rec.m.push(correlation(x));
        self.rec.energy.push(energy);
        if let Some(v) = self.rec.l0m.as_mut() {
            v.push(conditions::l0m_at(l, x, self.beta));
        }
        if let Some(v) = self.rec.gradnorm.as_mut() {
            v.push(gradnorm);
        }
    }

    /// Repeat the last record at each remaining grid time.
    fn freeze(&mut self, grid: &[f64]) {
        let last = self.rec.len() - 1;
        let t_last = self.rec.times[last];
        for &t in grid.iter().filter(|&&t| t > t_last + 1e-12) {
            self.rec.times.push(t);
            self.rec.m.push(self.rec.m[last]);
            self.rec.energy.push(self.rec.energy[last]);
            if let Some(v) = self.rec.l0m.as_mut() {
                v.push(v[last]);
            }
            if let Some(v) = self.rec.gradnorm.as_mut() {
                v.push(v[last]);
            }
        }
    }
}

fn triggered(rule: &StopRule, t: f64, x: &[f64], gradnorm: f64) -> bool {
    match *rule {
        StopRule::Stationary { tol } => gradnorm < tol,
        StopRule::DropsBelow { level, after } => t >= after - 1e-12 && correlation(x) < level,
        StopRule::Reaches { level } => correlation(x) >= level,
        StopRule::LeavesBand { x1_bound } => x[0].abs() >= x1_bound,
    }
}

/// Record grid `0, r, 2r, …` up to the horizon, plus the horizon itself.
fn record_grid(cfg: &IntegratorConfig) -> Vec<f64> {
    let mut grid = vec![0.0];
    if cfg.horizon_t == 0.0 {
        return grid;
    }
    let count = (cfg.horizon_t / cfg.record_every + 1e-9).floor() as usize;
    grid.extend((1..=count).map(|i| i as f64 * cfg.record_every));
    let last = *grid.last().unwrap();
    if cfg.horizon_t - last > 1e-9 * cfg.horizon_t {
        grid.push(cfg.horizon_t);
    }
    grid
}

/// Integrate from `init` and record observables on the grid `record_every`.
///
/// The step is shrunk so that it divides each recording interval exactly.
/// The noise stream is `rng::stream(config.seed, &[])`.
pub fn run_trajectory(
    l: &Landscape,
    init: &SphereState,
    config: &IntegratorConfig,
    observers: &Observers,
) -> Result<TrajectoryRecord> {
    config.validate()?;
    let spec = l.spec();
    if config.beta != spec.beta() {
        return Err(invalid(format!(
            "integrator beta {} differs from landscape beta {}",
            config.beta,
            spec.beta()
        )));
    }
    if init.n() != spec.n() {
        return Err(invalid("initial state has the wrong dimension"));
    }
    if config.beta.is_infinite() {
        check_well_posed(spec, init.m())?;
    }
    let mut rng = rng::stream(config.seed, &[]);
    let mut ws = Workspace::new(spec.n());
    let mut x = init.coords().to_vec();
    let grid = record_grid(config);
    let mut recorder = Recorder {
        obs: observers,
        beta: config.beta,
        rec: TrajectoryRecord {
            times: Vec::with_capacity(grid.len()),
            m: Vec::with_capacity(grid.len()),
            energy: Vec::with_capacity(grid.len()),
            l0m: observers.l0m.then(Vec::new),
            gradnorm: observers.gradnorm.then(Vec::new),
            hitting: Vec::new(),
            stopped: None,
            final_state: init.clone(),
        },
    };

    let (mut energy, mut grad) = covariant_value_grad(l, &x, 0.0)?;
    let mut gnorm = tensor::dot(&grad, &grad).sqrt();
    recorder.push(l, 0.0, &x, energy, gnorm);
    let mut t = 0.0;
    let mut stop = observers.stop.iter().find(|r| triggered(r, 0.0, &x, gnorm)).copied();

    'segments: for w in grid.windows(2) {
        if stop.is_some() {
            break;
        }
        let (t0, t1) = (w[0], w[1]);
        let steps = ((t1 - t0) / config.step_h - 1e-9).ceil().max(1.0) as usize;
        let h = (t1 - t0) / steps as f64;
        for s in 1..=steps {
            match config.beta {
                Beta::Finite(b) => langevin_in_place(&mut x, &grad, b, h, &mut ws, &mut rng),
                Beta::Infinite => match config.scheme {
                    Scheme::ProjectedEulerMaruyama => euler_in_place(&mut x, &grad, h),
                    Scheme::ProjectedRk4 => rk4_in_place(l, &mut x, &grad, h, t, &mut ws)?,
                },
            }
            t = if s == steps { t1 } else { t0 + s as f64 * h };
            (energy, grad) = covariant_value_grad(l, &x, t)?;
            gnorm = tensor::dot(&grad, &grad).sqrt();
            let on_grid = s == steps;
            if let Some(rule) = observers
                .stop
                .iter()
                .find(|r| (on_grid || !matches!(r, StopRule::DropsBelow { .. })) && triggered(r, t, &x, gnorm))
            {
                stop = Some(*rule);
                recorder.push(l, t, &x, energy, gnorm);
                break 'segments;
            }
        }
        recorder.push(l, t, &x, energy, gnorm);
    }

    if let Some(rule) = stop {
        recorder.rec.stopped = Some(StopEvent { time: t, rule });
        if matches!(rule, StopRule::Stationary { .. }) {
            recorder.freeze(&grid);
        }
    }
    let obs = recorder.obs;
    let mut rec = recorder.rec;
    rec.hitting = obs
        .thresholds
        .iter()
        .map(|&eps| HitTime {
            threshold: eps,
            time: first_passage(&rec.times, &rec.m, eps),
        })
        .collect();
    rec.final_state = SphereState::from_raw(x);
    Ok(rec)
}
