use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use super::encoder::{Encoder, EncoderConfig};
use super::eps_net::{EpsNet, EpsNetConfig};
use super::params::ParamTree;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// What the predictor sees besides `(x_t, t, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConditioningMode {
    /// Single-measurement baseline, `k = 0`.
    None,
    /// The true prior parameter vector.
    OracleGamma,
    /// A trained permutation-invariant set encoder.
    LearnedEnsemble,
    /// Fixed standardized moments of the observation set.
    MomentEnsemble,
}

impl ConditioningMode {
    pub fn uses_set(&self) -> bool {
        matches!(self, ConditioningMode::LearnedEnsemble | ConditioningMode::MomentEnsemble)
    }

    pub fn name(&self) -> &'static str {
        match self {
            ConditioningMode::None => "none",
            ConditioningMode::OracleGamma => "oracle-gamma",
            ConditioningMode::LearnedEnsemble => "learned-ensemble",
            ConditioningMode::MomentEnsemble => "moment-ensemble",
        }
    }
}

impl FromStr for ConditioningMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "none" => ConditioningMode::None,
            "oracle-gamma" => ConditioningMode::OracleGamma,
            "learned-ensemble" => ConditioningMode::LearnedEnsemble,
            "moment-ensemble" => ConditioningMode::MomentEnsemble,
            other => return Err(Error::Format(format!("unknown conditioning mode {other:?}"))),
        })
    }
}

/// Reverse-process variance choice for DDPM sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarianceKind {
    /// `sigma_t^2 = (1 - abar_{t-1}) / (1 - abar_t) * beta_t`
    Posterior,
    /// `sigma_t^2 = beta_t`
    Beta,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GenerativeKind {
    Ddpm {
        steps: usize,
        beta1: f64,
        beta_t: f64,
        variance: VarianceKind,
    },
    Fm {
        dt: f64,
    },
}

impl GenerativeKind {
    pub const DEFAULT_DDPM: GenerativeKind = GenerativeKind::Ddpm {
        steps: 100,
        beta1: 1e-4,
        beta_t: 0.02,
        variance: VarianceKind::Posterior,
    };
    pub const DEFAULT_FM: GenerativeKind = GenerativeKind::Fm { dt: 0.01 };

    pub fn name(&self) -> &'static str {
        match self {
            GenerativeKind::Ddpm { .. } => "ddpm",
            GenerativeKind::Fm { .. } => "fm",
        }
    }
}

/// Per-coordinate standardization of truths and observations.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    pub x_mean: Vec<f64>,
    pub x_std: Vec<f64>,
    pub y_mean: Vec<f64>,
    pub y_std: Vec<f64>,
}

fn column_stats(rows: &[ArrayView2<f64>]) -> (Vec<f64>, Vec<f64>) {
    let d = rows[0].ncols();
    let n: usize = rows.iter().map(|r| r.nrows()).sum();
    let mut mean = vec![0.0; d];
    for r in rows {
        for row in r.rows() {
            for c in 0..d {
                mean[c] += row[c];
            }
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; d];
    for r in rows {
        for row in r.rows() {
            for c in 0..d {
                var[c] += (row[c] - mean[c]).powi(2);
            }
        }
    }
    let std = var
        .iter()
        .map(|v| {
            let s = (v / n as f64).sqrt();
            if s > 1e-12 {
                s
            } else {
                1.0
            }
        })
        .collect();
    (mean, std)
}

impl Normalization {
    pub fn identity(d: usize) -> Self {
        Self {
            x_mean: vec![0.0; d],
            x_std: vec![1.0; d],
            y_mean: vec![0.0; d],
            y_std: vec![1.0; d],
        }
    }

    /// Fit over paired `x` / `y` blocks (e.g. every dataset in a corpus).
    pub fn fit(x_blocks: &[ArrayView2<f64>], y_blocks: &[ArrayView2<f64>]) -> Result<Self> {
        if x_blocks.is_empty() || y_blocks.is_empty() {
            return Err(Error::Contract("normalization needs data".into()));
        }
        let (x_mean, x_std) = column_stats(x_blocks);
        let (y_mean, y_std) = column_stats(y_blocks);
        Ok(Self {
            x_mean,
            x_std,
            y_mean,
            y_std,
        })
    }

    pub fn dim(&self) -> usize {
        self.x_mean.len()
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        let lens = [self.x_mean.len(), self.x_std.len(), self.y_mean.len(), self.y_std.len()];
        if lens.iter().any(|&l| l != d) {
            return Err(Error::Format(format!("normalization stats do not have dimension {d}")));
        }
        if !self.x_std.iter().chain(&self.y_std).all(|s| s.is_finite() && *s > 0.0) {
            return Err(Error::Format("normalization std must be positive".into()));
        }
        Ok(())
    }

    fn apply(v: ArrayView2<f64>, mean: &[f64], std: &[f64], forward: bool) -> Array2<f64> {
        let mut out = v.to_owned();
        for mut row in out.rows_mut() {
            for c in 0..row.len() {
                row[c] = if forward {
                    (row[c] - mean[c]) / std[c]
                } else {
                    row[c] * std[c] + mean[c]
                };
            }
        }
        out
    }

    pub fn normalize_x(&self, x: ArrayView2<f64>) -> Array2<f64> {
        Self::apply(x, &self.x_mean, &self.x_std, true)
    }

    pub fn denormalize_x(&self, x: ArrayView2<f64>) -> Array2<f64> {
        Self::apply(x, &self.x_mean, &self.x_std, false)
    }

    pub fn normalize_y(&self, y: ArrayView2<f64>) -> Array2<f64> {
        Self::apply(y, &self.y_mean, &self.y_std, true)
    }
}

/// Trainable parameters `(theta, w)`. Also serves as the gradient tree.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub eps: EpsNet,
    pub enc: Option<Encoder>,
}

/// Gradients share the parameter tree's type and traversal order.
pub type Gradients = ModelParams;

impl ParamTree for ModelParams {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut v = self.eps.tensors();
        if let Some(e) = &self.enc {
            v.extend(e.tensors());
        }
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.eps.tensors_mut();
        if let Some(e) = &mut self.enc {
            v.extend(e.tensors_mut());
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchMode {
    /// Every pair of the drawn subset contributes to one step.
    FullSubset,
    /// `B` pairs drawn from the subset per step.
    Minibatch(usize),
}

impl fmt::Display for BatchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BatchMode::FullSubset => write!(f, "full"),
            BatchMode::Minibatch(b) => write!(f, "minibatch:{b}"),
        }
    }
}

impl FromStr for BatchMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "full" {
            return Ok(BatchMode::FullSubset);
        }
        s.strip_prefix("minibatch:")
            .and_then(|b| b.parse().ok())
            .map(BatchMode::Minibatch)
            .ok_or_else(|| Error::Format(format!("bad batch mode {s:?}")))
    }
}

/// Training provenance recorded in checkpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingMeta {
    pub corpus_seed: u64,
    pub train_seed: u64,
    pub steps: u64,
    pub lr: f64,
    pub batch: BatchMode,
}

impl Default for TrainingMeta {
    fn default() -> Self {
        Self {
            corpus_seed: 0,
            train_seed: 0,
            steps: 0,
            lr: 1e-3,
            batch: BatchMode::Minibatch(256),
        }
    }
}

/// Architecture choices needed to rebuild a parameter tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelArch {
    pub d: usize,
    pub k: usize,
    pub eps_hidden: usize,
    pub encoder: Option<EncoderConfig>,
}

impl ModelArch {
    pub fn eps_config(&self) -> EpsNetConfig {
        EpsNetConfig {
            d: self.d,
            k: self.k,
            hidden: self.eps_hidden,
        }
    }

    /// Check the architecture against a conditioning mode.
    pub fn validate(&self, mode: ConditioningMode) -> Result<()> {
        if self.d == 0 || self.eps_hidden == 0 {
            return Err(Error::Config("d and hidden width must be >= 1".into()));
        }
        match (mode, self.encoder) {
            (ConditioningMode::None, None) if self.k == 0 => Ok(()),
            (ConditioningMode::None, _) => Err(Error::Config("conditioning none requires k = 0 and no encoder".into())),
            (ConditioningMode::OracleGamma, None) if self.k >= 1 => Ok(()),
            (ConditioningMode::OracleGamma, _) => {
                Err(Error::Config("oracle conditioning needs k = #prior params and no encoder".into()))
            }
            (ConditioningMode::LearnedEnsemble, Some(c @ (EncoderConfig::DeepSet { .. } | EncoderConfig::SetTransformer { .. }))) => {
                c.validate(self.k)
            }
            (ConditioningMode::MomentEnsemble, Some(c @ EncoderConfig::Moments { order })) => {
                c.validate(self.k)?;
                if self.k != self.d * order {
                    return Err(Error::Config(format!(
                        "moment conditioning needs k = d * order = {}",
                        self.d * order
                    )));
                }
                Ok(())
            }
            (m, e) => Err(Error::Config(format!("encoder {e:?} incompatible with conditioning {}", m.name()))),
        }
    }
}

/// Everything needed to sample: parameters, conditioning, normalization,
/// generative kind and training metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub params: ModelParams,
    pub arch: ModelArch,
    pub conditioning: ConditioningMode,
    pub kind: GenerativeKind,
    pub norm: Normalization,
    /// Observation-set size used in training.
    pub n_train: usize,
    pub meta: TrainingMeta,
}

impl ModelBundle {
    pub fn init(
        arch: ModelArch,
        conditioning: ConditioningMode,
        kind: GenerativeKind,
        norm: Normalization,
        n_train: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        arch.validate(conditioning)?;
        norm.validate(arch.d).map_err(|e| Error::Config(e.to_string()))?;
        let eps = EpsNet::init(arch.eps_config(), rng);
        let enc = arch
            .encoder
            .map(|c| Encoder::init(c, arch.d, arch.k, rng))
            .transpose()?;
        Ok(Self {
            params: ModelParams { eps, enc },
            arch,
            conditioning,
            kind,
            norm,
            n_train,
            meta: TrainingMeta::default(),
        })
    }

    /// A zero-filled parameter tree with this architecture.
    pub fn zero_params(arch: &ModelArch) -> Result<ModelParams> {
        Ok(ModelParams {
            eps: EpsNet::zeros(arch.eps_config()),
            enc: arch.encoder.map(|c| Encoder::zeros(c, arch.d, arch.k)).transpose()?,
        })
    }

    pub fn d(&self) -> usize {
        self.arch.d
    }

    pub fn k(&self) -> usize {
        self.arch.k
    }

    /// Encode a raw (un-normalized) observation set.
    pub fn encode_set(&self, raw_set: ArrayView2<f64>) -> Result<Array1<f64>> {
        let enc = self
            .params
            .enc
            .as_ref()
            .ok_or_else(|| Error::Contract("model has no set encoder".into()))?;
        enc.forward(self.norm.normalize_y(raw_set).view())
    }

    /// Resolve the condition vector `z` for this model's conditioning mode.
    pub fn condition(&self, raw_set: Option<ArrayView2<f64>>, prior_params: Option<&[f64]>) -> Result<Array1<f64>> {
        match self.conditioning {
            ConditioningMode::None => Ok(Array1::zeros(0)),
            ConditioningMode::OracleGamma => {
                let p = prior_params
                    .ok_or_else(|| Error::Contract("oracle conditioning needs the prior parameters".into()))?;
                if p.len() != self.k() {
                    return Err(Error::Contract(format!(
                        "oracle model expects {} prior parameters, got {}",
                        self.k(),
                        p.len()
                    )));
                }
                Ok(Array1::from(p.to_vec()))
            }
            ConditioningMode::LearnedEnsemble | ConditioningMode::MomentEnsemble => {
                let set = raw_set.ok_or_else(|| Error::Contract("ensemble conditioning needs an observation set".into()))?;
                self.encode_set(set)
            }
        }
    }

    pub fn check_condition(&self, z: ArrayView1<f64>) -> Result<()> {
        if z.len() != self.k() {
            return Err(Error::Contract(format!("condition has {} entries, model expects {}", z.len(), self.k())));
        }
        Ok(())
    }

    /// Time as fed to the network, always in `[0, 1]`.
    pub fn network_time(&self, t: f64) -> f64 {
        match self.kind {
            GenerativeKind::Ddpm { steps, .. } => t / steps as f64,
            GenerativeKind::Fm { .. } => t,
        }
    }
}
