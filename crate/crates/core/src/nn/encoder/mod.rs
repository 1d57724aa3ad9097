//! Permutation-invariant set encoders mapping an `N x d` observation set to a
//! `k`-vector.

mod deep_set;
mod moments;
mod set_transformer;

pub use deep_set::{DeepSet, DeepSetCache};
pub use moments::Moments;
pub use set_transformer::{Mab, SetTransformer, SetTransformerCache};

use ndarray::{Array1, Array2, ArrayView2};

use super::params::ParamTree;
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderConfig {
    DeepSet { width: usize },
    SetTransformer { width: usize, heads: usize, inducing: usize },
    Moments { order: usize },
}

impl EncoderConfig {
    pub const DEFAULT_DEEP_SET: EncoderConfig = EncoderConfig::DeepSet { width: 128 };
    pub const DEFAULT_SET_TRANSFORMER: EncoderConfig = EncoderConfig::SetTransformer {
        width: 128,
        heads: 4,
        inducing: 16,
    };
    pub const DEFAULT_MOMENTS: EncoderConfig = EncoderConfig::Moments { order: 3 };

    pub fn name(&self) -> &'static str {
        match self {
            EncoderConfig::DeepSet { .. } => "deep-set",
            EncoderConfig::SetTransformer { .. } => "set-transformer",
            EncoderConfig::Moments { .. } => "moments",
        }
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        match *self {
            EncoderConfig::DeepSet { width: 0 } => {
                Err(Error::Config("deep set width must be >= 1".into()))
            }
            EncoderConfig::SetTransformer { width, heads, inducing } => {
                if heads == 0 || width == 0 || width % heads != 0 {
                    Err(Error::Config(format!(
                        "set transformer: {heads} heads must divide width {width}"
                    )))
                } else if inducing == 0 {
                    Err(Error::Config("set transformer needs >= 1 inducing point".into()))
                } else {
                    Ok(())
                }
            }
            EncoderConfig::Moments { order: 0 } => {
                Err(Error::Config("moment order must be >= 1".into()))
            }
            _ if k == 0 => Err(Error::Config("encoder output width k must be >= 1".into())),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Encoder {
    DeepSet(DeepSet),
    SetTransformer(SetTransformer),
    Moments(Moments),
}

pub enum EncoderCache {
    DeepSet(DeepSetCache),
    SetTransformer(Box<SetTransformerCache>),
    Moments,
}

impl Encoder {
    /// Build a randomly initialized encoder. For `Moments` the output width is
    /// `d * order` regardless of `k`.
    pub fn init(config: EncoderConfig, d: usize, k: usize, rng: &mut Rng) -> Result<Self> {
        config.validate(k)?;
        Ok(match config {
            EncoderConfig::DeepSet { width } => Encoder::DeepSet(DeepSet::init(d, width, k, rng)),
            EncoderConfig::SetTransformer { width, heads, inducing } => {
                Encoder::SetTransformer(SetTransformer::init(d, width, heads, inducing, k, rng))
            }
            EncoderConfig::Moments { order } => Encoder::Moments(Moments::new(d, order)),
        })
    }

    pub fn zeros(config: EncoderConfig, d: usize, k: usize) -> Result<Self> {
        config.validate(k)?;
        Ok(match config {
            EncoderConfig::DeepSet { width } => Encoder::DeepSet(DeepSet::zeros(d, width, k)),
            EncoderConfig::SetTransformer { width, heads, inducing } => {
                Encoder::SetTransformer(SetTransformer::zeros(d, width, heads, inducing, k))
            }
            EncoderConfig::Moments { order } => Encoder::Moments(Moments::new(d, order)),
        })
    }

    pub fn config(&self) -> EncoderConfig {
        match self {
            Encoder::DeepSet(e) => EncoderConfig::DeepSet { width: e.width() },
            Encoder::SetTransformer(e) => EncoderConfig::SetTransformer {
                width: e.width(),
                heads: e.heads(),
                inducing: e.num_inducing(),
            },
            Encoder::Moments(m) => EncoderConfig::Moments { order: m.order },
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Encoder::DeepSet(e) => e.phi1.input_dim(),
            Encoder::SetTransformer(e) => e.isab_pool.fc_k.input_dim(),
            Encoder::Moments(m) => m.d,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Encoder::DeepSet(e) => e.rho2.output_dim(),
            Encoder::SetTransformer(e) => e.out.output_dim(),
            Encoder::Moments(m) => m.k(),
        }
    }

    fn check_set(&self, set: &ArrayView2<f64>) -> Result<()> {
        if set.nrows() == 0 {
            return Err(Error::Contract("cannot encode an empty set".into()));
        }
        if set.ncols() != self.input_dim() {
            return Err(Error::Contract(format!(
                "set has {} columns, encoder expects {}",
                set.ncols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Encode the rows of `set`; returns a `1 x k` row and the backward cache.
    pub fn forward_cached(&self, set: ArrayView2<f64>) -> Result<(Array2<f64>, EncoderCache)> {
        self.check_set(&set)?;
        Ok(match self {
            Encoder::DeepSet(e) => {
                let (z, c) = e.forward(set);
                (z, EncoderCache::DeepSet(c))
            }
            Encoder::SetTransformer(e) => {
                let (z, c) = e.forward(set);
                (z, EncoderCache::SetTransformer(Box::new(c)))
            }
            Encoder::Moments(m) => (m.forward(set), EncoderCache::Moments),
        })
    }

    pub fn forward(&self, set: ArrayView2<f64>) -> Result<Array1<f64>> {
        let (z, _) = self.forward_cached(set)?;
        Ok(z.row(0).to_owned())
    }

    /// Accumulate `dL/dw` given `dL/dz` (a `1 x k` row).
    pub fn backward(&self, cache: &EncoderCache, dz: &Array2<f64>, grad: &mut Encoder) {
        match (self, cache, grad) {
            (Encoder::DeepSet(e), EncoderCache::DeepSet(c), Encoder::DeepSet(g)) => e.backward(c, dz, g),
            (Encoder::SetTransformer(e), EncoderCache::SetTransformer(c), Encoder::SetTransformer(g)) => {
                e.backward(c, dz, g)
            }
            (Encoder::Moments(_), EncoderCache::Moments, Encoder::Moments(_)) => {}
            _ => panic!("encoder, cache and gradient variants differ"),
        }
    }
}

impl ParamTree for Encoder {
    fn tensors(&self) -> Vec<&[f64]> {
        match self {
            Encoder::DeepSet(e) => e.tensors(),
            Encoder::SetTransformer(e) => e.tensors(),
            Encoder::Moments(_) => Vec::new(),
        }
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            Encoder::DeepSet(e) => e.tensors_mut(),
            Encoder::SetTransformer(e) => e.tensors_mut(),
            Encoder::Moments(_) => Vec::new(),
        }
    }
}
