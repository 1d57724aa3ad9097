//! Experiment configuration: a sectioned TOML document with defaults for
//! every field. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use eip_core::generative::{Method, Strategy, TrainConfig};
use eip_core::nn::{Algorithm, BatchMode, EncoderConfig, GenerativeKind, VarianceKind};
use eip_core::synthetic::{interval_grid, three_param_grid, ForwardSpec, PriorSpec};
use eip_core::{Error, Result};
use serde::{Deserialize, Serialize};

pub const OUTPUT_ROOT_VAR: &str = "EIP_OUTPUT_ROOT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Output directory, relative to `$EIP_OUTPUT_ROOT` when that is set.
    pub output: String,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainSection,
    pub sample: SampleConfig,
    pub eval: EvalConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output: "eip-out".into(),
            data: DataConfig::default(),
            model: ModelConfig::default(),
            train: TrainSection::default(),
            sample: SampleConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Gauss2d,
    ThreeParam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub family: Family,
    /// Correlation intervals, `per_range` evenly spaced values each.
    pub gamma_ranges: Vec<[f64; 2]>,
    pub per_range: usize,
    /// Mean intervals for the three-parameter family (shared by both means).
    pub mu_ranges: Vec<[f64; 2]>,
    pub mu_per_range: usize,
    pub n_per_prior: usize,
    pub forward_a: [[f64; 2]; 2],
    pub noise_mean_scale: f64,
    pub noise_var_scale: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        let f = ForwardSpec::default();
        Self {
            family: Family::Gauss2d,
            gamma_ranges: vec![[-0.75, -0.25], [0.25, 0.75]],
            per_range: 10,
            mu_ranges: vec![[-1.5, -0.5], [0.5, 1.5]],
            mu_per_range: 2,
            n_per_prior: 4000,
            forward_a: f.a,
            noise_mean_scale: f.noise_mean_scale,
            noise_var_scale: f.noise_var_scale,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncoderKind {
    DeepSet,
    SetTransformer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub methods: Vec<String>,
    pub encoder: EncoderKind,
    pub encoder_width: usize,
    pub heads: usize,
    pub inducing: usize,
    pub moment_order: usize,
    /// Learned embedding width.
    pub k: usize,
    pub eps_hidden: usize,
    pub ddpm_steps: usize,
    pub beta1: f64,
    pub beta_t: f64,
    pub variance: String,
    pub dt: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            methods: vec!["ei-fm".into(), "cfm".into(), "cfm-gamma".into()],
            encoder: EncoderKind::DeepSet,
            encoder_width: 128,
            heads: 4,
            inducing: 16,
            moment_order: 3,
            k: 3,
            eps_hidden: 64,
            ddpm_steps: 100,
            beta1: 1e-4,
            beta_t: 0.02,
            variance: "posterior".into(),
            dt: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub n_subset: usize,
    pub steps: u64,
    /// `full` or `minibatch:B`.
    pub batch: String,
    /// `adam` or `sgd`.
    pub optimizer: String,
    pub lr: f64,
    pub with_replacement: bool,
    pub log_every: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            n_subset: 4000,
            steps: 50_000,
            batch: "minibatch:256".into(),
            optimizer: "adam".into(),
            lr: 1e-3,
            with_replacement: false,
            log_every: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleConfig {
    /// Prior of the observation set written by `gen-data`: `[gamma]` or
    /// `[mu1, mu2, gamma1]`.
    pub prior: Vec<f64>,
    pub n_obs: usize,
    /// Observation file; defaults to the one written by `gen-data`.
    pub observations: Option<String>,
    pub strategy: String,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            prior: vec![0.9],
            n_obs: 4000,
            observations: None,
            strategy: "repeated-subsets".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub gammas: Vec<f64>,
    /// Three-parameter evaluation points `[mu1, mu2, gamma1]`.
    pub priors3: Vec<[f64; 3]>,
    pub n_samples: usize,
    pub n_projections: usize,
    pub plot_data: bool,
    pub tarp_mode: String,
    pub tarp_method: String,
    pub tarp_prior: Vec<f64>,
    pub tarp_pairs: usize,
    pub tarp_samples: usize,
    pub tarp_inflate: f64,
    pub analytic_noise_std: f64,
    pub nprime: Vec<usize>,
    pub nprime_prior: Vec<f64>,
    pub train_n: Vec<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            gammas: vec![-0.9, -0.5, 0.0, 0.5, 0.9],
            priors3: vec![[2.0, 2.0, 0.9]],
            n_samples: 10_000,
            n_projections: 128,
            plot_data: true,
            tarp_mode: "model".into(),
            tarp_method: "ei-fm".into(),
            tarp_prior: vec![0.9],
            tarp_pairs: 500,
            tarp_samples: 200,
            tarp_inflate: 0.1,
            analytic_noise_std: 0.5,
            nprime: vec![10, 100, 1000, 4000],
            nprime_prior: vec![0.9],
            train_n: vec![5, 50, 4000],
        }
    }
}

fn parse_override(item: &str) -> Result<(Vec<String>, toml::Value)> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {item:?} is not key=value")))?;
    let path: Vec<String> = key.trim().split('.').map(str::to_string).collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key {key:?}")));
    }
    let raw = raw.trim();
    // Accept any TOML value; fall back to a bare string.
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    Ok((path, value))
}

fn apply_override(table: &mut toml::Table, path: &[String], value: toml::Value) -> Result<()> {
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut cur = table;
    for p in parents {
        let entry = cur
            .entry(p.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override path {p:?} is not a section")))?;
    }
    cur.insert(last.clone(), value);
    Ok(())
}

impl ExperimentConfig {
    /// Parse `text` (may be empty) and apply `key=value` overrides.
    pub fn from_str_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(one_line(&e.to_string())))?;
        for o in overrides {
            let (path, value) = parse_override(o)?;
            apply_override(&mut table, &path, value)?;
        }
        let cfg: Self = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(one_line(&e.to_string())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read config {}: {e}", p.display())))?,
            None => String::new(),
        };
        Self::from_str_with_overrides(&text, overrides)
    }

    /// The fully resolved document.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.forward()?;
        self.training_priors()?;
        self.learned_encoder()?;
        self.fm_kind();
        self.ddpm_kind()?;
        self.batch_mode()?;
        self.optimizer()?;
        self.strategy()?;
        for m in &self.model.methods {
            m.parse::<Method>()?;
        }
        if self.model.methods.is_empty() {
            return Err(Error::Config("model.methods is empty".into()));
        }
        self.prior_from(&self.sample.prior)?;
        if self.sample.n_obs == 0 || self.eval.n_samples == 0 || self.data.n_per_prior == 0 {
            return Err(Error::Config("sample.n_obs, eval.n_samples and data.n_per_prior must be >= 1".into()));
        }
        if !["model", "analytic", "point-mass"].contains(&self.eval.tarp_mode.as_str()) {
            return Err(Error::Config(format!("unknown eval.tarp_mode {:?}", self.eval.tarp_mode)));
        }
        Ok(())
    }

    pub fn output_dir(&self) -> PathBuf {
        let out = PathBuf::from(&self.output);
        match std::env::var_os(OUTPUT_ROOT_VAR) {
            Some(root) if out.is_relative() => PathBuf::from(root).join(out),
            _ => out,
        }
    }

    pub fn forward(&self) -> Result<ForwardSpec> {
        let f = ForwardSpec {
            a: self.data.forward_a,
            noise_mean_scale: self.data.noise_mean_scale,
            noise_var_scale: self.data.noise_var_scale,
        };
        f.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(f)
    }

    pub fn training_priors(&self) -> Result<Vec<PriorSpec>> {
        let ranges: Vec<(f64, f64)> = self.data.gamma_ranges.iter().map(|r| (r[0], r[1])).collect();
        match self.data.family {
            Family::Gauss2d => interval_grid(&ranges, self.data.per_range)
                .and_then(|g| g.into_iter().map(PriorSpec::gauss2d).collect()),
            Family::ThreeParam => {
                let mu: Vec<(f64, f64)> = self.data.mu_ranges.iter().map(|r| (r[0], r[1])).collect();
                three_param_grid(&ranges, self.data.per_range, &mu, self.data.mu_per_range)
            }
        }
        .map_err(|e| Error::Config(e.to_string()))
    }

    /// `[gamma]` or `[mu1, mu2, gamma1]` per the data family.
    pub fn prior_from(&self, p: &[f64]) -> Result<PriorSpec> {
        match (self.data.family, p) {
            (Family::Gauss2d, [g]) => PriorSpec::gauss2d(*g),
            (Family::ThreeParam, [m1, m2, g]) => PriorSpec::three_param(*m1, *m2, *g),
            _ => Err(Error::Config(format!("prior {p:?} does not match family {:?}", self.data.family))),
        }
        .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn eval_grid(&self, full: bool) -> Result<Vec<PriorSpec>> {
        match self.data.family {
            Family::Gauss2d => {
                let gammas: Vec<f64> = if full {
                    (-100..=100).map(|i| f64::from(i) / 100.0).collect()
                } else {
                    self.eval.gammas.clone()
                };
                gammas.into_iter().map(|g| self.prior_from(&[g])).collect()
            }
            Family::ThreeParam => self.eval.priors3.iter().map(|p| self.prior_from(p)).collect(),
        }
    }

    pub fn learned_encoder(&self) -> Result<EncoderConfig> {
        let m = &self.model;
        let c = match m.encoder {
            EncoderKind::DeepSet => EncoderConfig::DeepSet { width: m.encoder_width },
            EncoderKind::SetTransformer => EncoderConfig::SetTransformer {
                width: m.encoder_width,
                heads: m.heads,
                inducing: m.inducing,
            },
        };
        c.validate(m.k).map_err(|e| Error::Config(e.to_string()))?;
        Ok(c)
    }

    pub fn fm_kind(&self) -> GenerativeKind {
        GenerativeKind::Fm { dt: self.model.dt }
    }

    pub fn ddpm_kind(&self) -> Result<GenerativeKind> {
        let variance = match self.model.variance.as_str() {
            "posterior" => VarianceKind::Posterior,
            "beta" => VarianceKind::Beta,
            v => return Err(Error::Config(format!("unknown model.variance {v:?}"))),
        };
        Ok(GenerativeKind::Ddpm {
            steps: self.model.ddpm_steps,
            beta1: self.model.beta1,
            beta_t: self.model.beta_t,
            variance,
        })
    }

    pub fn batch_mode(&self) -> Result<BatchMode> {
        self.train.batch.parse().map_err(|e: Error| Error::Config(e.to_string()))
    }

    pub fn optimizer(&self) -> Result<Algorithm> {
        match self.train.optimizer.as_str() {
            "adam" => Ok(Algorithm::ADAM),
            "sgd" => Ok(Algorithm::Sgd),
            other => Err(Error::Config(format!("unknown optimizer '{other}' (expected adam or sgd)"))),
        }
    }

    pub fn strategy(&self) -> Result<Strategy> {
        self.sample.strategy.parse()
    }

    pub fn methods(&self) -> Result<Vec<Method>> {
        self.model.methods.iter().map(|m| m.parse()).collect()
    }

    /// Training configuration for one method, with subset size `n`.
    pub fn train_config(&self, method: Method, n: usize) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            n_subset: n,
            steps: self.train.steps,
            batch: match self.batch_mode()? {
                BatchMode::Minibatch(b) => BatchMode::Minibatch(b.min(n)),
                full => full,
            },
            kind: method.kind(self.fm_kind(), self.ddpm_kind()?),
            conditioning: method.conditioning(),
            eps_hidden: self.model.eps_hidden,
            encoder: method.encoder(
                self.learned_encoder()?,
                EncoderConfig::Moments {
                    order: self.model.moment_order,
                },
            ),
            k: self.model.k,
            optimizer: self.optimizer()?,
            lr: self.train.lr,
            seed: eip_core::rng::derive_seed(self.seed, "train", method as u64),
            with_replacement: self.train.with_replacement,
        };
        cfg.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}
