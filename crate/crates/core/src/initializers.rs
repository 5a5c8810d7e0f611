//! Initial conditions: uniform states on the sphere or a hemisphere,
//! fixed-correlation slices, the exact latitude law of `m`, and MALA
//! samplers for (restricted) Gibbs measures.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{invalid, Error, Result};
use crate::landscape::{project_tangent, retract, tensor::dot, Disorder, Landscape, MixtureSpec, SphereState};
use crate::rng;

/// Uniform point of the sphere of radius `√N`.
pub fn uniform_sphere<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<SphereState> {
    if n < 2 {
        return Err(invalid("N must be at least 2"));
    }
    let mut v = vec![0.0; n];
    loop {
        rng::fill_normal(rng, &mut v);
        if dot(&v, &v) > 0.0 {
            return SphereState::from_direction(v);
        }
    }
}

/// Uniform point of `{x₁ > 0}`.
pub fn uniform_hemisphere<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<SphereState> {
    let mut c = uniform_sphere(n, rng)?.into_coords();
    if c[0] < 0.0 {
        c[0] = -c[0];
    }
    Ok(SphereState::from_raw(c))
}

/// `x₁ = r√N`, the other coordinates uniform on the sphere of radius `√(N(1−r²))`.
pub fn fixed_correlation<R: Rng + ?Sized>(n: usize, r: f64, rng: &mut R) -> Result<SphereState> {
    if !(r.abs() < 1.0) {
        return Err(Error::Domain {
            what: "fixed correlation",
            value: r,
        });
    }
    if n < 2 {
        return Err(invalid("N must be at least 2"));
    }
    Ok(with_rest(n, r, rng))
}

fn with_rest<R: Rng + ?Sized>(n: usize, m: f64, rng: &mut R) -> SphereState {
    let nf = n as f64;
    let mut rest = vec![0.0; n - 1];
    loop {
        rng::fill_normal(rng, &mut rest);
        if dot(&rest, &rest) > 0.0 {
            break;
        }
    }
    let scale = (nf * (1.0 - m * m)).max(0.0).sqrt() / dot(&rest, &rest).sqrt();
    let mut c = Vec::with_capacity(n);
    c.push(m * nf.sqrt());
    c.extend(rest.iter().map(|v| v * scale));
    SphereState::from_raw(c)
}

/// The deterministic state `(m√N, √(N(1−m²)), 0, …, 0)`.
pub fn with_correlation_on_axis(n: usize, m: f64) -> Result<SphereState> {
    if !(m.abs() <= 1.0) || n < 2 {
        return Err(Error::Domain {
            what: "correlation",
            value: m,
        });
    }
    let nf = n as f64;
    let mut c = vec![0.0; n];
    c[0] = m * nf.sqrt();
    c[1] = (nf * (1.0 - m * m)).sqrt();
    Ok(SphereState::from_raw(c))
}

#[allow(clippy::excessive_precision)]
const GL_NODES: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329_0,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329_0,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
#[allow(clippy::excessive_precision)]
const GL_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_3,
    0.222_381_034_453_374_5,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362_0,
    0.362_683_783_378_362_0,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

fn gauss_legendre(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    GL_NODES
        .iter()
        .zip(&GL_WEIGHTS)
        .map(|(x, w)| w * f(mid + half * x))
        .sum::<f64>()
        * half
}

/// Law of `m` under the uniform measure restricted to `m ∈ [lo, hi]`.
///
/// With `m = sin θ` the density is `cos^{N−2} θ` on `(−π/2, π/2)`. It is
/// tabulated in log space relative to its maximum over the window.
#[derive(Clone, Debug)]
pub struct LatitudeLaw {
    n: usize,
    lo: f64,
    hi: f64,
    edges: Vec<f64>,
    cum: Vec<f64>,
    log_ref: f64,
}

impl LatitudeLaw {
    pub fn new(n: usize, lo: f64, hi: f64) -> Result<Self> {
        if n < 3 {
            return Err(invalid("the latitude law needs N >= 3"));
        }
        if !(-1.0 <= lo && lo < hi && hi <= 1.0) {
            return Err(invalid(format!("bad correlation window [{lo}, {hi}]")));
        }
        let (ta, tb) = (lo.asin(), hi.asin());
        let peak = 0.0f64.clamp(ta, tb);
        let log_ref = (n as f64 - 2.0) * peak.cos().ln();
        let panels = (((tb - ta) * (n as f64).sqrt() * 4.0).ceil() as usize).clamp(16, 1 << 14);
        let edges: Vec<f64> = (0..=panels).map(|i| ta + (tb - ta) * i as f64 / panels as f64).collect();
        let mut law = LatitudeLaw {
            n,
            lo,
            hi,
            edges,
            cum: Vec::with_capacity(panels + 1),
            log_ref,
        };
        let mut acc = 0.0;
        law.cum.push(0.0);
        for w in law.edges.windows(2) {
            acc += gauss_legendre(|t| law.density(t), w[0], w[1]);
            law.cum.push(acc);
        }
        Ok(law)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn window(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    /// Density in `θ`, divided by `exp(log_ref)`.
    fn density(&self, theta: f64) -> f64 {
        let c = theta.cos();
        if c <= 0.0 {
            return 0.0;
        }
        ((self.n as f64 - 2.0) * c.ln() - self.log_ref).exp()
    }

    /// `log(vol(window) / vol(sphere))`.
    pub fn log_fraction(&self) -> f64 {
        let nf = self.n as f64;
        let log_z = 0.5 * std::f64::consts::PI.ln() + ln_gamma((nf - 1.0) / 2.0) - ln_gamma(nf / 2.0);
        self.cum.last().unwrap().ln() + self.log_ref - log_z
    }

    /// Draw `m` from the restricted law.
    pub fn sample_m<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let total = *self.cum.last().unwrap();
        let u = rng.random::<f64>() * total;
        let i = (self.cum.partition_point(|&c| c <= u).max(1) - 1).min(self.edges.len() - 2);
        let (a, b) = (self.edges[i], self.edges[i + 1]);
        let target = u - self.cum[i];
        let (mut lo, mut hi) = (a, b);
        let mut t = 0.5 * (a + b);
        for _ in 0..60 {
            let f = gauss_legendre(|s| self.density(s), a, t) - target;
            if f > 0.0 {
                hi = t;
            } else {
                lo = t;
            }
            let d = self.density(t);
            let newton = if d > 0.0 { t - f / d } else { f64::NAN };
            let next = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            if (next - t).abs() <= 1e-15 * (1.0 + t.abs()) {
                t = next;
                break;
            }
            t = next;
        }
        t.sin().clamp(self.lo, self.hi)
    }

    /// Uniform state of the sphere restricted to the window.
    pub fn sample_state<R: Rng + ?Sized>(&self, rng: &mut R) -> SphereState {
        let m = self.sample_m(rng);
        with_rest(self.n, m, rng)
    }
}

/// `log(vol{m ∈ [lo, hi]} / vol(sphere))`.
pub fn log_volume_fraction(n: usize, lo: f64, hi: f64) -> Result<f64> {
    Ok(LatitudeLaw::new(n, lo, hi)?.log_fraction())
}

/// Where a MALA chain is allowed to go.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Restriction {
    Sphere,
    /// `{x₁ > 0}`. For even `ξ` and no signal the chain is folded by `x ↦ −x`,
    /// otherwise proposals leaving the hemisphere are rejected.
    Hemisphere,
    /// `x₁ ∈ [lo, hi]`, hard wall.
    Band {
        x1_lo: f64,
        x1_hi: f64,
    },
}

impl Restriction {
    fn admits(&self, x1: f64) -> bool {
        match *self {
            Restriction::Sphere => true,
            Restriction::Hemisphere => x1 > 0.0,
            Restriction::Band { x1_lo, x1_hi } => x1 >= x1_lo && x1 <= x1_hi,
        }
    }

    /// A uniform starting point inside the restriction.
    pub fn uniform_start<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<SphereState> {
        match *self {
            Restriction::Sphere => uniform_sphere(n, rng),
            Restriction::Hemisphere => uniform_hemisphere(n, rng),
            Restriction::Band { x1_lo, x1_hi } => {
                let r = (n as f64).sqrt();
                let law = LatitudeLaw::new(n, (x1_lo / r).max(-1.0), (x1_hi / r).min(1.0))?;
                Ok(law.sample_state(rng))
            }
        }
    }
}

pub const DEFAULT_BURN_IN: usize = 1000;
pub const DEFAULT_MAX_BETA: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MalaConfig {
    pub beta: f64,
    pub step: f64,
    pub burn_in: usize,
    pub restriction: Restriction,
    /// High-temperature guard on `beta`.
    pub max_beta: f64,
}

impl MalaConfig {
    pub fn new(beta: f64, step: f64, restriction: Restriction) -> Self {
        MalaConfig {
            beta,
            step,
            burn_in: DEFAULT_BURN_IN,
            restriction,
            max_beta: DEFAULT_MAX_BETA,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0 && self.beta <= self.max_beta) {
            return Err(invalid(format!(
                "MALA beta {} outside [0, {}] (high-temperature guard)",
                self.beta, self.max_beta
            )));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(invalid("MALA step must be positive"));
        }
        if let Restriction::Band { x1_lo, x1_hi } = self.restriction {
            if !(x1_lo < x1_hi) {
                return Err(invalid("empty band"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MalaStats {
    pub proposed: u64,
    pub accepted: u64,
}

impl MalaStats {
    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            1.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

/// Metropolis-adjusted Langevin chain on the sphere targeting `e^{−βH}`.
///
/// The proposal is `y = √N (x+u)/|x+u|` with `u ~ N(−hβ∇H(x), 2h)` in the
/// tangent space at `x`. The reverse move uses the tangent vector
/// `(N/(x·y)) x − y` at `y`; the Jacobian of the radial projection depends
/// only on the angle between `x` and `y` and cancels.
pub struct MalaChain<'a> {
    l: Landscape<'a>,
    cfg: MalaConfig,
    fold: bool,
    x: Vec<f64>,
    energy: f64,
    grad: Vec<f64>,
    stats: MalaStats,
}

impl<'a> MalaChain<'a> {
    pub fn new(l: Landscape<'a>, cfg: MalaConfig, init: &SphereState) -> Result<Self> {
        cfg.validate()?;
        if !cfg.restriction.admits(init.x1()) {
            return Err(invalid("initial state violates the restriction"));
        }
        let spec = l.spec();
        let fold = matches!(cfg.restriction, Restriction::Hemisphere) && spec.xi_is_even() && spec.lambda() == 0.0;
        let x = init.coords().to_vec();
        let (energy, grad) = tangent_value_grad(&l, &x);
        Ok(MalaChain {
            l,
            cfg,
            fold,
            x,
            energy,
            grad,
            stats: MalaStats::default(),
        })
    }

    pub fn state(&self) -> SphereState {
        SphereState::from_raw(self.x.clone())
    }

    pub fn stats(&self) -> MalaStats {
        self.stats
    }

    /// Current value of `H`.
    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub(crate) fn set_beta(&mut self, beta: f64) {
        self.cfg.beta = beta;
    }

    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let n = self.x.len();
        let nf = n as f64;
        let (h, beta) = (self.cfg.step, self.cfg.beta);
        self.stats.proposed += 1;

        let mut u = vec![0.0; n];
        rng::fill_normal(rng, &mut u);
        project_tangent(&self.x, &mut u);
        let s = (2.0 * h).sqrt();
        for (ui, gi) in u.iter_mut().zip(&self.grad) {
            *ui = s * *ui - h * beta * gi;
        }
        let mut y: Vec<f64> = self.x.iter().zip(&u).map(|(a, b)| a + b).collect();
        retract(&mut y);
        if !self.cfg.restriction.admits(y[0]) && !self.fold {
            return;
        }
        let xy = dot(&self.x, &y);
        if xy <= 0.0 {
            return;
        }
        let (ey, gy) = tangent_value_grad(&self.l, &y);
        // forward: u − μ_x = √(2h) ζ
        let fwd: f64 = u.iter().zip(&self.grad).map(|(ui, gi)| (ui + h * beta * gi).powi(2)).sum();
        let c = nf / xy;
        let bwd: f64 = (0..n).map(|i| (c * self.x[i] - y[i] + h * beta * gy[i]).powi(2)).sum();
        let log_alpha = -beta * (ey - self.energy) - (bwd - fwd) / (4.0 * h);
        if log_alpha >= 0.0 || rng.random::<f64>().ln() < log_alpha {
            self.stats.accepted += 1;
            self.x = y;
            self.energy = ey;
            self.grad = gy;
            if self.fold && self.x[0] < 0.0 {
                self.x.iter_mut().for_each(|v| *v = -*v);
                self.grad.iter_mut().for_each(|v| *v = -*v);
            }
        }
    }

    pub fn run<R: Rng + ?Sized>(&mut self, steps: usize, rng: &mut R) {
        for _ in 0..steps {
            self.step(rng);
        }
    }

    fn burn_in<R: Rng + ?Sized>(mut self, rng: &mut R) -> (SphereState, MalaStats) {
        self.run(self.cfg.burn_in, rng);
        let rate = self.stats.acceptance_rate();
        if rate < 0.1 {
            log::warn!(
                "MALA acceptance rate {:.3} is below 10%; try a step smaller than {}",
                rate,
                self.cfg.step
            );
        } else {
            log::debug!("MALA acceptance rate {rate:.3}");
        }
        (self.state(), self.stats)
    }
}

fn tangent_value_grad(l: &Landscape, x: &[f64]) -> (f64, Vec<f64>) {
    let (v, mut g) = l.value_grad_at(x);
    project_tangent(x, &mut g);
    (v, g)
}

/// Approximate sample of the pure-noise Gibbs measure `e^{−βH₀}` on the
/// upper hemisphere (or on the sphere, per `restriction`).
pub fn gibbs_noise_sampler<R: Rng + ?Sized>(
    spec: &MixtureSpec,
    disorder: &Disorder,
    cfg: &MalaConfig,
    rng: &mut R,
) -> Result<(SphereState, MalaStats)> {
    let spec0 = spec.clone().with_lambda(0.0)?;
    let l = Landscape::new(&spec0, disorder)?;
    let init = cfg.restriction.uniform_start(spec.n(), rng)?;
    let chain = MalaChain::new(l, *cfg, &init)?;
    let (x, stats) = chain.burn_in(rng);
    Ok((x, stats))
}

/// MALA restricted to a band `x₁ ∈ [lo, hi]`. The target is `e^{−βH}` with
/// the landscape's own `λ`; pass a `λ = 0` landscape for the pure-noise measure.
pub fn banded_gibbs_sampler<R: Rng + ?Sized>(l: &Landscape, cfg: &MalaConfig, rng: &mut R) -> Result<(SphereState, MalaStats)> {
    if !matches!(cfg.restriction, Restriction::Band { .. }) {
        return Err(invalid("banded sampler needs a band restriction"));
    }
    let init = cfg.restriction.uniform_start(l.n(), rng)?;
    MalaChain::new(*l, *cfg, &init).map(|c| c.burn_in(rng))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitKind {
    Uniform,
    UniformHemisphere,
    FixedCorrelation {
        r: f64,
    },
    GibbsNoise {
        beta_init: f64,
        burn_in_steps: usize,
        mala_step: f64,
    },
    BandedGibbs {
        beta_init: f64,
        band_halfwidth_x1: f64,
        burn_in_steps: usize,
        mala_step: f64,
        /// Target the full measure (with signal) instead of the pure-noise one.
        with_signal: bool,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitSpec {
    pub kind: InitKind,
    pub seed: u64,
}

impl InitSpec {
    pub fn new(kind: InitKind, seed: u64) -> Self {
        InitSpec { kind, seed }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            InitKind::FixedCorrelation { r } if !(r.abs() < 1.0) => Err(Error::Domain {
                what: "fixed correlation",
                value: r,
            }),
            InitKind::BandedGibbs { band_halfwidth_x1, .. } if !(band_halfwidth_x1 > 0.0) => {
                Err(invalid("band half-width must be positive"))
            }
            _ => Ok(()),
        }
    }

    /// Seed of sample number `index`.
    pub fn sample_seed(&self, index: u64) -> u64 {
        rng::derive_seed(self.seed, &[index])
    }

    /// Draw sample number `index`. Gibbs kinds need the landscape.
    pub fn sample(&self, spec: &MixtureSpec, disorder: Option<&Disorder>, index: u64) -> Result<SphereState> {
        self.validate()?;
        let mut r = rng::stream(self.sample_seed(index), &[]);
        let n = spec.n();
        let need = || disorder.ok_or_else(|| invalid("Gibbs initialization needs a disorder"));
        match self.kind {
            InitKind::Uniform => uniform_sphere(n, &mut r),
            InitKind::UniformHemisphere => uniform_hemisphere(n, &mut r),
            InitKind::FixedCorrelation { r: c } => fixed_correlation(n, c, &mut r),
            InitKind::GibbsNoise {
                beta_init,
                burn_in_steps,
                mala_step,
            } => {
                let mut cfg = MalaConfig::new(beta_init, mala_step, Restriction::Hemisphere);
                cfg.burn_in = burn_in_steps;
                Ok(gibbs_noise_sampler(spec, need()?, &cfg, &mut r)?.0)
            }
            InitKind::BandedGibbs {
                beta_init,
                band_halfwidth_x1,
                burn_in_steps,
                mala_step,
                with_signal,
            } => {
                let mut cfg = MalaConfig::new(
                    beta_init,
                    mala_step,
                    Restriction::Band {
                        x1_lo: -band_halfwidth_x1,
                        x1_hi: band_halfwidth_x1,
                    },
                );
                cfg.burn_in = burn_in_steps;
                let target = if with_signal {
                    spec.clone()
                } else {
                    spec.clone().with_lambda(0.0)?
                };
                let l = Landscape::new(&target, need()?)?;
                Ok(banded_gibbs_sampler(&l, &cfg, &mut r)?.0)
            }
        }
    }

    /// Draw samples `0..count` in parallel; the result does not depend on
    /// the number of workers.
    pub fn sample_many(&self, spec: &MixtureSpec, disorder: Option<&Disorder>, count: usize) -> Result<Vec<SphereState>> {
        use rayon::prelude::*;
        (0..count as u64)
            .into_par_iter()
            .map(|i| self.sample(spec, disorder, i))
            .collect()
    }
}

#[derive(Serialize)]
struct InitSidecar<'a> {
    init: &'a InitSpec,
    n: usize,
    count: usize,
    sample_seeds: Vec<u64>,
}

/// Write samples as CSV (`x1,…,xN`, one row per sample) and a JSON sidecar
/// next to it with the same stem.
pub fn save_init_set(path: &Path, init: &InitSpec, samples: &[SphereState]) -> Result<()> {
    let n = samples.first().map_or(0, |s| s.n());
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let header: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
    writeln!(out, "{}", header.join(","))?;
    for s in samples {
        let row: Vec<String> = s.coords().iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    let sidecar = InitSidecar {
        init,
        n,
        count: samples.len(),
        sample_seeds: (0..samples.len() as u64).map(|i| init.sample_seed(i)).collect(),
    };
    std::fs::write(path.with_extension("json"), serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

/// Read back a CSV written by [`save_init_set`].
pub fn load_init_set(path: &Path) -> Result<Vec<SphereState>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let coords = line
                .split(',')
                .map(|f| f.trim().parse::<f64>().map_err(|e| invalid(format!("bad number {f:?}: {e}"))))
                .collect::<Result<Vec<f64>>>()?;
            SphereState::new(coords)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landscape::Beta;
    use statrs::distribution::{Beta as BetaDist, ContinuousCDF};

    #[test]
    fn fixed_correlation_is_exact() {
        let mut r = rng::stream(1, &[]);
        let x = fixed_correlation(50, 0.0, &mut r).unwrap();
        assert_eq!(x.x1(), 0.0);
        let x = fixed_correlation(50, 0.3, &mut r).unwrap();
        assert!((x.m() - 0.3).abs() < 1e-15);
        assert!(SphereState::new(x.into_coords()).is_ok());
        assert!(fixed_correlation(50, 1.0, &mut r).is_err());
    }

    #[test]
    fn hemisphere_samples_are_positive() {
        let mut r = rng::stream(2, &[]);
        for _ in 0..1000 {
            assert!(uniform_hemisphere(10, &mut r).unwrap().x1() > 0.0);
        }
    }

    #[test]
    fn latitude_mass_matches_the_incomplete_beta() {
        // m² ~ Beta(1/2, (N−1)/2) under the uniform measure
        for &n in &[3usize, 8, 40, 400] {
            let nf = n as f64;
            let law = BetaDist::new(0.5, (nf - 1.0) / 2.0).unwrap();
            for &(lo, hi) in &[(-1.0, 1.0), (0.0, 0.1), (-0.3, 0.05), (0.2, 0.9)] {
                let got = log_volume_fraction(n, lo, hi).unwrap().exp();
                let sym = |m: f64| 0.5 * m.signum() * law.cdf(m * m);
                let want = sym(hi) - sym(lo);
                assert!(
                    (got - want).abs() < 1e-10 * (1.0 + want),
                    "N={n} [{lo},{hi}]: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn latitude_samples_stay_in_window_and_follow_the_law() {
        let n = 64;
        let law = LatitudeLaw::new(n, -0.1, 0.25).unwrap();
        let mut r = rng::stream(3, &[]);
        let ms: Vec<f64> = (0..20_000).map(|_| law.sample_m(&mut r)).collect();
        assert!(ms.iter().all(|&m| (-0.1..=0.25).contains(&m)));
        // fraction below 0 against quadrature
        let p0 = (log_volume_fraction(n, -0.1, 0.0).unwrap() - law.log_fraction()).exp();
        let f0 = ms.iter().filter(|&&m| m < 0.0).count() as f64 / ms.len() as f64;
        let se = (p0 * (1.0 - p0) / ms.len() as f64).sqrt();
        assert!((f0 - p0).abs() < 5.0 * se);
    }

    #[test]
    fn mala_at_zero_beta_always_accepts() {
        let spec = MixtureSpec::new(16, [(3, 1.0)], 3.0, 0.0, Beta::Finite(1.0)).unwrap();
        let d = Disorder::sample(&spec, 1).unwrap();
        let mut cfg = MalaConfig::new(0.0, 0.05, Restriction::Sphere);
        cfg.burn_in = 200;
        let mut r = rng::stream(4, &[]);
        let (_, stats) = gibbs_noise_sampler(&spec, &d, &cfg, &mut r).unwrap();
        assert_eq!(stats.accepted, stats.proposed);
    }

    #[test]
    fn beta_guard_is_enforced() {
        let spec = MixtureSpec::new(8, [(2, 1.0)], 3.0, 0.0, Beta::Finite(1.0)).unwrap();
        let d = Disorder::sample(&spec, 1).unwrap();
        let cfg = MalaConfig::new(2.0, 0.05, Restriction::Sphere);
        assert!(gibbs_noise_sampler(&spec, &d, &cfg, &mut rng::stream(0, &[])).is_err());
    }

    #[test]
    fn banded_samples_respect_the_wall() {
        let spec = MixtureSpec::new(16, [(3, 1.0)], 3.0, 2.0, Beta::Finite(1.0)).unwrap();
        let d = Disorder::sample(&spec, 2).unwrap();
        let l = Landscape::new(&spec, &d).unwrap();
        let mut cfg = MalaConfig::new(1.0, 0.02, Restriction::Band { x1_lo: -0.5, x1_hi: 0.5 });
        cfg.burn_in = 300;
        for i in 0..20 {
            let (x, _) = banded_gibbs_sampler(&l, &cfg, &mut rng::stream(i, &[])).unwrap();
            assert!(x.x1().abs() <= 0.5);
        }
    }

    #[test]
    fn mala_occupancy_on_a_tabulated_two_sphere() {
        // N = 3, ξ = t²: compare latitude-bin occupancy with quadrature of e^{−βH₀}
        let spec = MixtureSpec::new(3, [(2, 1.0)], 3.0, 0.0, Beta::Finite(1.0)).unwrap();
        let d = Disorder::sample(&spec, 9).unwrap();
        let l = Landscape::new(&spec, &d).unwrap();
        let beta = 1.0;
        let bins = 6usize;
        let bin_of = |m: f64| (((m + 1.0) / 2.0 * bins as f64) as usize).min(bins - 1);

        let (nt, np) = (600, 600);
        let mut want = vec![0.0; bins];
        for i in 0..nt {
            let m = -1.0 + 2.0 * (i as f64 + 0.5) / nt as f64; // uniform in m on S²
            for j in 0..np {
                let ph = 2.0 * std::f64::consts::PI * (j as f64 + 0.5) / np as f64;
                let s = (1.0 - m * m).sqrt();
                let x = [3f64.sqrt() * m, 3f64.sqrt() * s * ph.cos(), 3f64.sqrt() * s * ph.sin()];
                want[bin_of(m)] += (-beta * l.noise_energy_at(&x)).exp();
            }
        }
        let z: f64 = want.iter().sum();
        want.iter_mut().for_each(|w| *w /= z);

        let cfg = MalaConfig::new(beta, 0.3, Restriction::Sphere);
        let chains = 40;
        let per = 20_000;
        let mut counts = vec![vec![0.0; bins]; chains];
        for (c, row) in counts.iter_mut().enumerate() {
            let mut r = rng::stream(100 + c as u64, &[]);
            let init = uniform_sphere(3, &mut r).unwrap();
            let mut chain = MalaChain::new(l, cfg, &init).unwrap();
            chain.run(500, &mut r);
            for _ in 0..per {
                chain.step(&mut r);
                row[bin_of(chain.state().m())] += 1.0 / per as f64;
            }
        }
        for b in 0..bins {
            let vals: Vec<f64> = counts.iter().map(|r| r[b]).collect();
            let (mean, se) = crate::conditions::mean_and_se(&vals);
            assert!(
                (mean - want[b]).abs() < 3.0 * se + 1e-3,
                "bin {b}: {mean} vs {} ± {se}",
                want[b]
            );
        }
    }

    #[test]
    fn init_set_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let spec = MixtureSpec::new(5, [(2, 1.0)], 3.0, 0.0, Beta::Infinite).unwrap();
        let init = InitSpec::new(InitKind::UniformHemisphere, 12);
        let samples = init.sample_many(&spec, None, 7).unwrap();
        let path = dir.path().join("init.csv");
        save_init_set(&path, &init, &samples).unwrap();
        assert_eq!(load_init_set(&path).unwrap(), samples);
        assert!(path.with_extension("json").exists());
    }
}
