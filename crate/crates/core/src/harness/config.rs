//! TOML experiment configuration and `key=value` overrides.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::dynamics::Scheme;
use crate::error::{Error, Result};
use crate::initializers::InitKind;
use crate::landscape::{Beta, MixtureSpec, DEFAULT_ENTRY_BUDGET};

/// Read a TOML file (or start from an empty table) and apply overrides.
pub fn load_toml(path: Option<&Path>, overrides: &[String]) -> Result<toml::Table> {
    let mut table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            text.parse::<toml::Table>()
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => toml::Table::new(),
    };
    for o in overrides {
        apply_set(&mut table, o)?;
    }
    Ok(table)
}

/// Apply one `dotted.key=value` override. The value is parsed as a TOML
/// value when possible and taken as a bare string otherwise.
pub fn apply_set(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(Error::Config(format!("override {assignment:?} has an empty key")));
    }
    let value = parse_value(raw.trim());
    let parts: Vec<&str> = key.split('.').collect();
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("{key}: {part} is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

pub fn from_table<T: DeserializeOwned>(table: toml::Table) -> Result<T> {
    toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(e.to_string()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuccessKind {
    /// `min m ≥ ε` over the window.
    Weak,
    /// `min m ≥ 1 − ε` over the window.
    Strong,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuccessRule {
    pub kind: SuccessKind,
    pub epsilon: f64,
    /// Defaults to `[t0, horizon]`.
    #[serde(default)]
    pub window: Option<[f64; 2]>,
}

impl SuccessRule {
    pub fn level(&self) -> f64 {
        match self.kind {
            SuccessKind::Weak => self.epsilon,
            SuccessKind::Strong => 1.0 - self.epsilon,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSettings {
    /// Defaults to the step chosen by `dynamics::default_step`.
    #[serde(default)]
    pub step_h: Option<f64>,
    #[serde(default = "default_record_every")]
    pub record_every: f64,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    /// Stop a replica once its outcome is decided.
    #[serde(default = "yes")]
    pub early_stop: bool,
    /// Gradient descent stops when `|∇H| < tol · √N`.
    #[serde(default = "default_stationary")]
    pub stationary_tol: f64,
}

fn default_record_every() -> f64 {
    0.05
}
fn default_scheme() -> Scheme {
    Scheme::ProjectedEulerMaruyama
}
fn yes() -> bool {
    true
}
fn default_stationary() -> f64 {
    1e-7
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        IntegratorSettings {
            step_h: None,
            record_every: default_record_every(),
            scheme: default_scheme(),
            early_stop: true,
            stationary_tol: default_stationary(),
        }
    }
}

fn default_horizon() -> f64 {
    20.0
}
fn default_t0() -> f64 {
    1.0
}
fn default_init() -> InitKind {
    InitKind::UniformHemisphere
}
fn default_budget() -> u64 {
    DEFAULT_ENTRY_BUDGET
}

/// A phase-diagram sweep. Exactly one of `alpha` and `lambda` is non-empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub n: Vec<usize>,
    pub k: Vec<f64>,
    #[serde(default)]
    pub alpha: Vec<f64>,
    #[serde(default)]
    pub lambda: Vec<f64>,
    pub beta: Vec<Beta>,
    /// `[[p, a_p], …]`.
    pub mixture: Vec<(u32, f64)>,
    /// Drop the noise (`H₀ ≡ 0`).
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
    pub output_dir: Option<PathBuf>,
    /// Disorder cache; tensors are sampled in memory when unset.
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default = "default_budget")]
    pub entry_budget: u64,
}

/// One point of the sweep grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub index: usize,
    pub n: usize,
    pub k: f64,
    pub alpha: Option<f64>,
    pub lambda: f64,
    pub beta: Beta,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Success windows: the configured one and the sensitivity window
    /// `[2·t0, T]`.
    pub fn windows(&self) -> ([f64; 2], [f64; 2]) {
        let main = self.success.window.unwrap_or([self.t0, self.horizon]);
        (main, [2.0 * self.t0, self.horizon])
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n.is_empty() || self.k.is_empty() || self.beta.is_empty() {
            return bad("n, k and beta grids must be non-empty".into());
        }
        if self.alpha.is_empty() == self.lambda.is_empty() {
            return bad("give exactly one of the alpha and lambda grids".into());
        }
        if self.n_disorder == 0 || self.n_init == 0 {
            return bad("n_disorder and n_init must be positive".into());
        }
        if !(self.horizon > 0.0 && self.t0 >= 0.0 && self.t0 <= self.horizon) {
            return bad(format!("need 0 <= t0 <= horizon, got t0 = {}, T = {}", self.t0, self.horizon));
        }
        let (w, alt) = self.windows();
        if !(self.t0 <= w[0] && w[0] <= w[1] && w[1] <= self.horizon) {
            return bad(format!("success window {w:?} must lie in [t0, T]"));
        }
        if alt[0] > alt[1] {
            log::warn!("sensitivity window {alt:?} is empty; its counts will be zero");
        }
        if !(self.success.epsilon > 0.0 && self.success.epsilon < 1.0) {
            return bad("success epsilon must lie in (0, 1)".into());
        }
        for cell in self.cells()? {
            self.spec_for(&cell)?;
        }
        Ok(())
    }

    /// The grid in the order `n, k, alpha|lambda, beta` (last fastest).
    pub fn cells(&self) -> Result<Vec<Cell>> {
        let mut out = Vec::new();
        let scales: Vec<(Option<f64>, f64)> = if self.alpha.is_empty() {
            self.lambda.iter().map(|&l| (None, l)).collect()
        } else {
            self.alpha.iter().map(|&a| (Some(a), f64::NAN)).collect()
        };
        for &n in &self.n {
            for &k in &self.k {
                for &(alpha, lambda) in &scales {
                    for &beta in &self.beta {
                        let lambda = alpha.map_or(lambda, |a| (n as f64).powf(a));
                        out.push(Cell {
                            index: out.len(),
                            n,
                            k,
                            alpha,
                            lambda,
                            beta,
                        });
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn spec_for(&self, cell: &Cell) -> Result<MixtureSpec> {
        let spec = MixtureSpec::with_budget(
            cell.n,
            self.mixture.iter().copied(),
            cell.k,
            cell.lambda,
            cell.beta,
            self.entry_budget,
        )?;
        match cell.alpha {
            Some(a) => spec.with_alpha(a),
            None => Ok(spec),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
name = "demo"
n = [16, 32]
k = [3.0]
alpha = [0.5, 1.0]
beta = ["inf", 1.0]
mixture = [[3, 1.0]]
n_disorder = 2
n_init = 3
seed = 7

[success]
kind = "strong"
epsilon = 0.1

[init]
kind = "uniform_hemisphere"
"#;

    #[test]
    fn parses_and_expands_the_grid() {
        let cfg = ExperimentConfig::from_toml_str(SAMPLE).unwrap();
        let cells = cfg.cells().unwrap();
        assert_eq!(cells.len(), 8);
        assert_eq!(cells[3].n, 16);
        assert!((cells[3].lambda - 16f64.powf(1.0)).abs() < 1e-12);
        assert_eq!(cells[3].beta, Beta::Finite(1.0));
        assert_eq!(cfg.windows(), ([1.0, 20.0], [2.0, 20.0]));
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let mut t: toml::Table = SAMPLE.parse().unwrap();
        apply_set(&mut t, "success.epsilon=0.2").unwrap();
        apply_set(&mut t, "n=[8]").unwrap();
        apply_set(&mut t, "integrator.step_h=0.001").unwrap();
        apply_set(&mut t, "name=plain words").unwrap();
        let cfg: ExperimentConfig = from_table(t).unwrap();
        assert_eq!(cfg.success.epsilon, 0.2);
        assert_eq!(cfg.n, vec![8]);
        assert_eq!(cfg.integrator.step_h, Some(0.001));
        assert_eq!(cfg.name, "plain words");
    }

    #[test]
    fn rejects_inconsistent_configs() {
        let mut t: toml::Table = SAMPLE.parse().unwrap();
        apply_set(&mut t, "lambda=[1.0]").unwrap();
        let cfg: ExperimentConfig = from_table(t).unwrap();
        assert!(cfg.validate().is_err());
        assert!(apply_set(&mut toml::Table::new(), "novalue").is_err());
        let mut t: toml::Table = SAMPLE.parse().unwrap();
        apply_set(&mut t, "success.window=[0.5, 30.0]").unwrap();
        let cfg: ExperimentConfig = from_table(t).unwrap();
        assert!(cfg.validate().is_err());
        let mut t: toml::Table = SAMPLE.parse().unwrap();
        apply_set(&mut t, "n=[100000]").unwrap();
        let cfg: ExperimentConfig = from_table(t).unwrap();
        assert!(matches!(cfg.validate(), Err(Error::BudgetExceeded { .. })));
    }
}
