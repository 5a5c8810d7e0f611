//! The random landscape `H(x) = H₀(x) − Nλ φ(m(x))` on the sphere of radius `√N`.
//!
//! The noise is `H₀(x) = Σ_p a_p N^{-(p-1)/2} <W^(p), x^{⊗p}>` with i.i.d.
//! standard Gaussian, unsymmetrized `W^(p)`, which gives
//! `Cov(H₀(x), H₀(y)) = N ξ((x,y)/N)` with `ξ(t) = Σ_p a_p² t^p`.

mod cache;
pub(crate) mod tensor;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng;

pub use cache::{cache_file_name, read_tensor_file, write_tensor_file, TensorFileHeader, CACHE_MAGIC, CACHE_VERSION};

/// Default cap on the total number of stored noise entries, `Σ_p N^p`.
pub const DEFAULT_ENTRY_BUDGET: u64 = 1 << 27;

/// Relative tolerance on `|x|² = N`.
pub const SPHERE_TOL: f64 = 1e-9;

/// Inverse temperature. `Infinite` selects gradient descent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Beta {
    Finite(f64),
    Infinite,
}

impl Beta {
    pub fn is_infinite(self) -> bool {
        matches!(self, Beta::Infinite)
    }

    /// The finite value, or `None` for gradient descent.
    pub fn finite(self) -> Option<f64> {
        match self {
            Beta::Finite(b) => Some(b),
            Beta::Infinite => None,
        }
    }

    /// Multiplier on the drift: `β` for Langevin dynamics, 1 for gradient descent.
    pub fn drift_scale(self) -> f64 {
        self.finite().unwrap_or(1.0)
    }

    fn validate(self) -> Result<()> {
        match self {
            Beta::Finite(b) if !(b.is_finite() && b >= 0.0) => Err(invalid(format!("beta must be >= 0, got {b}"))),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Beta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Beta::Finite(b) => write!(f, "{b}"),
            Beta::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for Beta {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Beta::Finite(b) => s.serialize_f64(*b),
            Beta::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Beta {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(b) => Ok(Beta::Finite(b)),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

impl std::str::FromStr for Beta {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "gd" => Ok(Beta::Infinite),
            other => other
                .parse::<f64>()
                .map(Beta::Finite)
                .map_err(|e| format!("invalid beta {s:?}: {e}")),
        }
    }
}

/// Landscape parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MixtureSpecRaw", into = "MixtureSpecRaw")]
pub struct MixtureSpec {
    n: usize,
    mixture: BTreeMap<u32, f64>,
    k: f64,
    lambda: f64,
    alpha: Option<f64>,
    beta: Beta,
    entry_budget: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct MixtureSpecRaw {
    n: usize,
    mixture: BTreeMap<u32, f64>,
    k: f64,
    #[serde(default)]
    lambda: Option<f64>,
    #[serde(default)]
    alpha: Option<f64>,
    beta: Beta,
    #[serde(default = "default_budget")]
    entry_budget: u64,
}

fn default_budget() -> u64 {
    DEFAULT_ENTRY_BUDGET
}

impl TryFrom<MixtureSpecRaw> for MixtureSpec {
    type Error = Error;

    fn try_from(raw: MixtureSpecRaw) -> Result<Self> {
        let base = MixtureSpec::with_budget(
            raw.n,
            raw.mixture,
            raw.k,
            raw.lambda.unwrap_or(0.0),
            raw.beta,
            raw.entry_budget,
        )?;
        match (raw.alpha, raw.lambda) {
            (Some(alpha), Some(lambda)) => {
                let spec = base.with_alpha(alpha)?;
                if (spec.lambda - lambda).abs() > 1e-12 * spec.lambda {
                    return Err(invalid(format!("lambda {lambda} disagrees with N^alpha = {}", spec.lambda)));
                }
                Ok(spec)
            }
            (Some(alpha), None) => base.with_alpha(alpha),
            _ => Ok(base),
        }
    }
}

impl From<MixtureSpec> for MixtureSpecRaw {
    fn from(s: MixtureSpec) -> Self {
        MixtureSpecRaw {
            n: s.n,
            mixture: s.mixture,
            k: s.k,
            lambda: Some(s.lambda),
            alpha: s.alpha,
            beta: s.beta,
            entry_budget: s.entry_budget,
        }
    }
}

impl MixtureSpec {
    pub fn new(n: usize, mixture: impl IntoIterator<Item = (u32, f64)>, k: f64, lambda: f64, beta: Beta) -> Result<Self> {
        Self::with_budget(n, mixture, k, lambda, beta, DEFAULT_ENTRY_BUDGET)
    }

    pub fn with_budget(
        n: usize,
        mixture: impl IntoIterator<Item = (u32, f64)>,
        k: f64,
        lambda: f64,
        beta: Beta,
        entry_budget: u64,
    ) -> Result<Self> {
        if n < 2 {
            return Err(invalid(format!("dimension N must be >= 2, got {n}")));
        }
        let mixture: BTreeMap<u32, f64> = mixture.into_iter().collect();
        if mixture.is_empty() {
            return Err(invalid("mixture needs at least one term"));
        }
        for (&p, &a) in &mixture {
            if p == 0 {
                return Err(invalid("mixture orders must be >= 1"));
            }
            if !(a.is_finite() && a > 0.0) {
                return Err(invalid(format!("mixture coefficient a_{p} must be positive, got {a}")));
            }
        }
        if !(k.is_finite() && k >= 1.0) {
            return Err(invalid(format!("signal exponent k must be >= 1, got {k}")));
        }
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(invalid(format!("lambda must be >= 0, got {lambda}")));
        }
        beta.validate()?;
        let spec = MixtureSpec {
            n,
            mixture,
            k,
            lambda,
            alpha: None,
            beta,
            entry_budget,
        };
        spec.check_budget()?;
        Ok(spec)
    }

    fn check_budget(&self) -> Result<()> {
        let mut total: u64 = 0;
        for &p in self.mixture.keys() {
            let entries = (self.n as u64).checked_pow(p).unwrap_or(u64::MAX);
            total = total.saturating_add(entries);
            if total > self.entry_budget {
                return Err(Error::BudgetExceeded {
                    p,
                    entries,
                    budget: self.entry_budget,
                });
            }
        }
        Ok(())
    }

    /// Sets `λ = N^α` and records `α`.
    pub fn with_alpha(mut self, alpha: f64) -> Result<Self> {
        if !alpha.is_finite() {
            return Err(invalid(format!("alpha must be finite, got {alpha}")));
        }
        self.lambda = (self.n as f64).powf(alpha);
        self.alpha = Some(alpha);
        Ok(self)
    }

    pub fn with_lambda(mut self, lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(invalid(format!("lambda must be >= 0, got {lambda}")));
        }
        self.lambda = lambda;
        self.alpha = None;
        Ok(self)
    }

    pub fn with_beta(mut self, beta: Beta) -> Result<Self> {
        beta.validate()?;
        self.beta = beta;
        Ok(self)
    }

    pub fn with_k(mut self, k: f64) -> Result<Self> {
        if !(k.is_finite() && k >= 1.0) {
            return Err(invalid(format!("signal exponent k must be >= 1, got {k}")));
        }
        self.k = k;
        Ok(self)
    }

    pub fn with_entry_budget(mut self, budget: u64) -> Result<Self> {
        self.entry_budget = budget;
        self.check_budget()?;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn mixture(&self) -> &BTreeMap<u32, f64> {
        &self.mixture
    }
    pub fn k(&self) -> f64 {
        self.k
    }
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn alpha(&self) -> Option<f64> {
        self.alpha
    }
    pub fn beta(&self) -> Beta {
        self.beta
    }
    pub fn entry_budget(&self) -> u64 {
        self.entry_budget
    }

    pub fn k_is_integer(&self) -> bool {
        self.k.fract() == 0.0
    }

    /// `ξ(q) = Σ_p a_p² q^p`.
    pub fn xi(&self, q: f64) -> f64 {
        self.mixture.iter().map(|(&p, &a)| a * a * q.powi(p as i32)).sum()
    }

    pub fn xi_prime(&self, q: f64) -> f64 {
        self.mixture
            .iter()
            .map(|(&p, &a)| a * a * p as f64 * q.powi(p as i32 - 1))
            .sum()
    }

    /// True when every mixture order is even, i.e. `H₀(−x) = H₀(x)`.
    pub fn xi_is_even(&self) -> bool {
        self.mixture.keys().all(|p| p % 2 == 0)
    }

    /// `N ξ(q)`, the exact covariance of `H₀` at overlap `q`.
    pub fn covariance_oracle(&self, q: f64) -> Result<f64> {
        if !(-1.0..=1.0).contains(&q) {
            return Err(Error::Domain {
                what: "overlap",
                value: q,
            });
        }
        Ok(self.n as f64 * self.xi(q))
    }

    /// Hash of `N` and the orders present in the mixture: everything that
    /// determines the shape of the noise tensors.
    pub fn fingerprint(&self) -> u64 {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&(self.n as u64).to_le_bytes());
        for &p in self.mixture.keys() {
            bytes.extend_from_slice(&p.to_le_bytes());
        }
        rng::fnv1a(bytes)
    }

    /// Signal profile `φ(m)`: `m^k` for integer `k`, `max(m, 0)^k` otherwise.
    pub fn phi(&self, m: f64) -> f64 {
        if self.k_is_integer() {
            m.powi(self.k as i32)
        } else {
            m.max(0.0).powf(self.k)
        }
    }

    pub fn phi_prime(&self, m: f64) -> f64 {
        if self.k_is_integer() {
            self.k * m.powi(self.k as i32 - 1)
        } else if m > 0.0 {
            self.k * m.powf(self.k - 1.0)
        } else {
            0.0
        }
    }

    pub fn phi_second(&self, m: f64) -> f64 {
        let k = self.k;
        if self.k_is_integer() {
            if k < 2.0 {
                0.0
            } else {
                k * (k - 1.0) * m.powi(k as i32 - 2)
            }
        } else if m > 0.0 {
            k * (k - 1.0) * m.powf(k - 2.0)
        } else {
            0.0
        }
    }
}

const TENSOR_STREAM: u64 = 0x0057_5445_4e53_4f52; // "WTENSOR"

/// One realization of the noise tensors.
#[derive(Clone, Debug)]
pub struct Disorder {
    n: usize,
    seed: u64,
    fingerprint: u64,
    tensors: BTreeMap<u32, Arc<Vec<f64>>>,
    traces: OnceLock<BTreeMap<u32, Vec<f64>>>,
}

impl Disorder {
    /// Sample i.i.d. standard Gaussian tensors for every order in the mixture.
    pub fn sample(spec: &MixtureSpec, seed: u64) -> Result<Self> {
        spec.check_budget()?;
        let tensors = spec
            .mixture()
            .keys()
            .map(|&p| (p, Arc::new(sample_tensor(spec.n(), p, seed))))
            .collect();
        Ok(Self::assemble(spec, seed, tensors))
    }

    /// `W ≡ 0`: the pure-signal landscape.
    pub fn zero(spec: &MixtureSpec) -> Self {
        Self::assemble(spec, 0, BTreeMap::new())
    }

    /// Wrap explicit tensors. Every order in the mixture must be present
    /// with `N^p` entries.
    pub fn from_tensors(spec: &MixtureSpec, seed: u64, tensors: BTreeMap<u32, Vec<f64>>) -> Result<Self> {
        let mut out = BTreeMap::new();
        for &p in spec.mixture().keys() {
            let t = tensors
                .get(&p)
                .ok_or_else(|| invalid(format!("missing tensor of order {p}")))?;
            let want = spec.n().pow(p);
            if t.len() != want {
                return Err(invalid(format!(
                    "tensor of order {p} has {} entries, expected {want}",
                    t.len()
                )));
            }
            out.insert(p, Arc::new(t.clone()));
        }
        Ok(Self::assemble(spec, seed, out))
    }

    fn assemble(spec: &MixtureSpec, seed: u64, tensors: BTreeMap<u32, Arc<Vec<f64>>>) -> Self {
        Disorder {
            n: spec.n(),
            seed,
            fingerprint: spec.fingerprint(),
            tensors,
            traces: OnceLock::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }
    pub fn is_zero(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn tensor(&self, p: u32) -> Option<&[f64]> {
        self.tensors.get(&p).map(|t| t.as_slice())
    }

    pub fn orders(&self) -> impl Iterator<Item = u32> + '_ {
        self.tensors.keys().copied()
    }

    fn pair_traces(&self) -> &BTreeMap<u32, Vec<f64>> {
        self.traces.get_or_init(|| {
            self.tensors
                .iter()
                .map(|(&p, w)| (p, tensor::pair_trace(w, self.n, p)))
                .collect()
        })
    }
}

pub(crate) fn sample_tensor(n: usize, p: u32, seed: u64) -> Vec<f64> {
    let mut r = rng::stream(seed, &[TENSOR_STREAM, p as u64]);
    let mut w = vec![0.0; n.pow(p)];
    rng::fill_normal(&mut r, &mut w);
    w
}

/// A point of the sphere `|x| = √N`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SphereState {
    coords: Vec<f64>,
}

impl SphereState {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        let n = coords.len();
        let norm_sq: f64 = coords.iter().map(|c| c * c).sum();
        if n < 2 || !norm_sq.is_finite() || ((norm_sq - n as f64) / n as f64).abs() > SPHERE_TOL {
            return Err(Error::OffSphere { norm_sq, n });
        }
        Ok(SphereState { coords })
    }

    /// Rescale a nonzero vector onto the sphere.
    pub fn from_direction(mut v: Vec<f64>) -> Result<Self> {
        let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        if v.len() < 2 || !(norm.is_finite() && norm > 0.0) {
            return Err(invalid("cannot project a zero or non-finite vector onto the sphere"));
        }
        let s = (v.len() as f64).sqrt() / norm;
        v.iter_mut().for_each(|c| *c *= s);
        Ok(SphereState { coords: v })
    }

    /// `√N e₁`.
    pub fn pole(n: usize) -> Self {
        let mut coords = vec![0.0; n];
        coords[0] = (n as f64).sqrt();
        SphereState { coords }
    }

    pub(crate) fn from_raw(coords: Vec<f64>) -> Self {
        SphereState { coords }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }
    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }
    pub fn n(&self) -> usize {
        self.coords.len()
    }
    pub fn x1(&self) -> f64 {
        self.coords[0]
    }
    /// Correlation with the spike, `x₁/√N`.
    pub fn m(&self) -> f64 {
        correlation(&self.coords)
    }
    pub fn overlap(&self, other: &SphereState) -> f64 {
        tensor::dot(&self.coords, &other.coords) / self.n() as f64
    }
}

#[inline]
pub(crate) fn correlation(x: &[f64]) -> f64 {
    x[0] / (x.len() as f64).sqrt()
}

/// Rescale `v` in place to norm `√N`.
#[inline]
pub(crate) fn retract(v: &mut [f64]) {
    let norm = tensor::dot(v, v).sqrt();
    let s = (v.len() as f64).sqrt() / norm;
    v.iter_mut().for_each(|c| *c *= s);
}

/// Tangent projection `P_x v = v − (x·v) x / N`, in place.
#[inline]
pub(crate) fn project_tangent(x: &[f64], v: &mut [f64]) {
    let c = tensor::dot(x, v) / x.len() as f64;
    for (vi, xi) in v.iter_mut().zip(x) {
        *vi -= c * xi;
    }
}

/// Contribution of one mixture order, `a_p N^{-(p-1)/2} <W^(p), x^{⊗p}>`.
pub(crate) struct NoiseTerm<'a> {
    pub p: u32,
    pub scale: f64,
    pub tensor: &'a [f64],
}

/// A spec paired with a matching disorder.
#[derive(Clone, Copy, Debug)]
pub struct Landscape<'a> {
    spec: &'a MixtureSpec,
    disorder: &'a Disorder,
}

impl<'a> Landscape<'a> {
    pub fn new(spec: &'a MixtureSpec, disorder: &'a Disorder) -> Result<Self> {
        if spec.fingerprint() != disorder.fingerprint() || spec.n() != disorder.n() {
            return Err(Error::FingerprintMismatch {
                spec: spec.fingerprint(),
                disorder: disorder.fingerprint(),
            });
        }
        Ok(Landscape { spec, disorder })
    }

    pub fn spec(&self) -> &'a MixtureSpec {
        self.spec
    }
    pub fn disorder(&self) -> &'a Disorder {
        self.disorder
    }
    pub fn n(&self) -> usize {
        self.spec.n()
    }

    pub(crate) fn noise_terms(&self) -> impl Iterator<Item = NoiseTerm<'a>> + 'a {
        let n = self.spec.n() as f64;
        let disorder = self.disorder;
        self.spec.mixture().iter().filter_map(move |(&p, &a)| {
            disorder.tensor(p).map(|tensor| NoiseTerm {
                p,
                scale: a * n.powf(-(p as f64 - 1.0) / 2.0),
                tensor,
            })
        })
    }

    pub fn noise_energy(&self, x: &SphereState) -> f64 {
        self.noise_energy_at(x.coords())
    }

    pub(crate) fn noise_energy_at(&self, x: &[f64]) -> f64 {
        self.noise_terms()
            .map(|t| t.scale * tensor::contract_value(t.tensor, x, t.p))
            .sum()
    }

    /// `−Nλ φ(m)`.
    pub fn signal_energy(&self, x: &SphereState) -> f64 {
        self.signal_energy_at(x.coords())
    }

    pub(crate) fn signal_energy_at(&self, x: &[f64]) -> f64 {
        -(self.n() as f64) * self.spec.lambda() * self.spec.phi(correlation(x))
    }

    pub fn energy(&self, x: &SphereState) -> f64 {
        self.noise_energy_at(x.coords()) + self.signal_energy_at(x.coords())
    }

    /// Ambient gradient of `H₀` together with its value.
    pub(crate) fn noise_value_grad_at(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let mut value = 0.0;
        let mut grad = vec![0.0; x.len()];
        for t in self.noise_terms() {
            let (v, g) = tensor::contract_grad(t.tensor, x, t.p);
            value += t.scale * v;
            tensor::axpy(&mut grad, t.scale, &g);
        }
        (value, grad)
    }

    pub fn noise_gradient(&self, x: &SphereState) -> Vec<f64> {
        self.noise_value_grad_at(x.coords()).1
    }

    /// Energy and ambient gradient of the full Hamiltonian.
    pub(crate) fn value_grad_at(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let (mut value, mut grad) = self.noise_value_grad_at(x);
        let n = self.n() as f64;
        let m = correlation(x);
        value -= n * self.spec.lambda() * self.spec.phi(m);
        grad[0] -= n.sqrt() * self.spec.lambda() * self.spec.phi_prime(m);
        (value, grad)
    }

    /// `H` at an arbitrary point of `R^N`, off the sphere included.
    pub fn energy_at(&self, x: &[f64]) -> f64 {
        self.noise_energy_at(x) + self.signal_energy_at(x)
    }

    /// Ambient gradient at an arbitrary point of `R^N`.
    pub fn gradient_at(&self, x: &[f64]) -> Vec<f64> {
        self.value_grad_at(x).1
    }

    pub fn euclidean_gradient(&self, x: &SphereState) -> Vec<f64> {
        self.value_grad_at(x.coords()).1
    }

    /// Riemannian gradient `P_x ∂H(x)`.
    pub fn covariant_gradient(&self, x: &SphereState) -> Vec<f64> {
        let mut g = self.euclidean_gradient(x);
        project_tangent(x.coords(), &mut g);
        g
    }

    /// Ambient second derivative `∂²H(x)[v]`.
    pub fn hessian_vector_product(&self, x: &SphereState, v: &[f64]) -> Vec<f64> {
        let mut out = self.noise_hvp_at(x.coords(), v);
        out[0] -= self.spec.lambda() * self.spec.phi_second(x.m()) * v[0];
        out
    }

    pub(crate) fn noise_hvp_at(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        for t in self.noise_terms() {
            let jet = tensor::contract_jet(t.tensor, None, x, v, t.p);
            tensor::axpy(&mut out, t.scale, &jet.dgrad);
        }
        out
    }

    /// Per-order values and gradients of the noise.
    pub(crate) fn noise_parts_at(&self, x: &[f64]) -> Vec<(u32, f64, Vec<f64>)> {
        self.noise_terms()
            .map(|t| {
                let (v, mut g) = tensor::contract_grad(t.tensor, x, t.p);
                g.iter_mut().for_each(|gi| *gi *= t.scale);
                (t.p, t.scale * v, g)
            })
            .collect()
    }

    /// Per-order ambient Laplacian of the noise and its gradient.
    pub(crate) fn noise_laplacian_parts_at(&self, x: &[f64]) -> Vec<(u32, f64, Vec<f64>)> {
        let traces = self.disorder.pair_traces();
        self.noise_terms()
            .map(|t| {
                if t.p < 2 {
                    return (t.p, 0.0, vec![0.0; x.len()]);
                }
                let (v, mut g) = tensor::contract_grad(&traces[&t.p], x, t.p - 2);
                g.iter_mut().for_each(|gi| *gi *= t.scale);
                (t.p, t.scale * v, g)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(n: usize, mixture: &[(u32, f64)], k: f64, lambda: f64) -> MixtureSpec {
        MixtureSpec::new(n, mixture.iter().copied(), k, lambda, Beta::Finite(1.0)).unwrap()
    }

    #[test]
    fn budget_is_enforced_with_the_offending_order() {
        let err = MixtureSpec::with_budget(64, [(2, 1.0), (4, 1.0)], 3.0, 1.0, Beta::Infinite, 1 << 20).unwrap_err();
        match err {
            Error::BudgetExceeded { p, .. } => assert_eq!(p, 4),
            other => panic!("unexpected {other:?}"),
        }
        assert!(MixtureSpec::new(64, [(4, 1.0)], 3.0, 1.0, Beta::Infinite).is_ok());
    }

    #[test]
    fn alpha_sets_lambda() {
        let s = spec(64, &[(3, 1.0)], 3.0, 0.0).with_alpha(0.5).unwrap();
        assert!((s.lambda() - 8.0).abs() / 8.0 < 1e-12);
        assert_eq!(s.alpha(), Some(0.5));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(MixtureSpec::new(1, [(2, 1.0)], 3.0, 1.0, Beta::Infinite).is_err());
        assert!(MixtureSpec::new(4, [(2, 0.0)], 3.0, 1.0, Beta::Infinite).is_err());
        assert!(MixtureSpec::new(4, Vec::<(u32, f64)>::new(), 3.0, 1.0, Beta::Infinite).is_err());
        assert!(MixtureSpec::new(4, [(2, 1.0)], 0.5, 1.0, Beta::Infinite).is_err());
        assert!(MixtureSpec::new(4, [(2, 1.0)], 3.0, -1.0, Beta::Infinite).is_err());
        assert!(MixtureSpec::new(4, [(2, 1.0)], 3.0, 1.0, Beta::Finite(-1.0)).is_err());
    }

    #[test]
    fn spec_round_trips_through_json() {
        let s = spec(16, &[(2, 0.5), (3, 1.0)], 2.5, 3.0).with_beta(Beta::Infinite).unwrap();
        let text = serde_json::to_string(&s).unwrap();
        let back: MixtureSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn disorder_is_reproducible() {
        let s = spec(2, &[(2, 1.0)], 3.0, 0.0);
        let a = Disorder::sample(&s, 99).unwrap();
        let b = Disorder::sample(&s, 99).unwrap();
        let c = Disorder::sample(&s, 100).unwrap();
        assert_eq!(a.tensor(2).unwrap().len(), 4);
        assert_eq!(a.tensor(2), b.tensor(2));
        assert_ne!(a.tensor(2), c.tensor(2));
    }

    #[test]
    fn hand_contraction_of_the_two_by_two_case() {
        let s = spec(2, &[(2, 1.0)], 3.0, 0.0);
        let d = Disorder::from_tensors(&s, 0, BTreeMap::from([(2, vec![1.0, 0.0, 0.0, 1.0])])).unwrap();
        let l = Landscape::new(&s, &d).unwrap();
        let x = SphereState::new(vec![1.0, 1.0]).unwrap();
        assert!((l.noise_energy(&x) - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn signal_energy_cases() {
        let s = spec(4, &[(2, 1.0)], 3.0, 2.0);
        let d = Disorder::zero(&s);
        let l = Landscape::new(&s, &d).unwrap();
        assert_eq!(l.signal_energy(&SphereState::pole(4)), -8.0);
        let south = SphereState::new(vec![-2.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(l.signal_energy(&south), 8.0);
        let eq = SphereState::new(vec![0.0, 2.0, 0.0, 0.0]).unwrap();
        assert_eq!(l.signal_energy(&eq), 0.0);
        for k in [1.5, 2.5, 4.0] {
            let s = s.clone().with_k(k).unwrap();
            let l = Landscape::new(&s, &d).unwrap();
            assert_eq!(l.signal_energy(&SphereState::pole(4)), -8.0);
        }
        // non-integer k vanishes on the lower hemisphere
        let s = s.with_k(2.5).unwrap();
        let l = Landscape::new(&s, &d).unwrap();
        assert_eq!(l.signal_energy(&south), 0.0);
    }

    #[test]
    fn signal_gradient_at_the_pole() {
        let (n, lambda, k) = (9usize, 1.5, 3.0);
        let s = spec(n, &[(2, 1.0)], k, lambda);
        let d = Disorder::zero(&s);
        let l = Landscape::new(&s, &d).unwrap();
        let pole = SphereState::pole(n);
        let g = l.euclidean_gradient(&pole);
        assert!((g[0] + 3.0 * lambda * k).abs() < 1e-12);
        assert!(g[1..].iter().all(|&c| c == 0.0));
        assert!(l.covariant_gradient(&pole).iter().all(|c| c.abs() < 1e-12));
    }

    #[test]
    fn mismatched_disorder_is_rejected() {
        let a = spec(4, &[(2, 1.0)], 3.0, 0.0);
        let b = spec(4, &[(3, 1.0)], 3.0, 0.0);
        let d = Disorder::sample(&b, 1).unwrap();
        assert!(matches!(Landscape::new(&a, &d), Err(Error::FingerprintMismatch { .. })));
    }

    #[test]
    fn off_sphere_states_are_rejected() {
        assert!(SphereState::new(vec![1.0, 0.0]).is_err());
        assert!(SphereState::new(vec![1.0, 1.0]).is_ok());
    }

    #[test]
    fn p2_hessian_is_the_symmetrized_matrix() {
        let n = 5;
        let s = spec(n, &[(2, 0.7)], 3.0, 0.0);
        let d = Disorder::sample(&s, 3).unwrap();
        let l = Landscape::new(&s, &d).unwrap();
        let w = d.tensor(2).unwrap();
        let x = SphereState::from_direction(vec![0.3, -1.0, 0.2, 0.5, 0.9]).unwrap();
        let v = [1.0, 2.0, -0.5, 0.0, 0.25];
        let hv = l.hessian_vector_product(&x, &v);
        let c = 0.7 / (n as f64).sqrt();
        for i in 0..n {
            let expect: f64 = (0..n).map(|j| c * (w[i * n + j] + w[j * n + i]) * v[j]).sum();
            assert!((hv[i] - expect).abs() < 1e-12);
        }
    }
}
