//! Checkpoint files.
//!
//! ```text
//! magic "EIPM" | version u32
//! descriptor: byte length u64, then UTF-8 `key = value` lines
//! parameter count u64, then that many little-endian f64
//! ```
//!
//! Parameters are stored in `ParamTree` traversal order: the predictor's
//! `input, time1, time2, hidden1, hidden2, output` layers (weight then bias),
//! followed by the encoder's tensors. Floats in the descriptor use Rust's
//! shortest round-trip formatting, so they reload bit-exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::bundle::{BatchMode, ConditioningMode, GenerativeKind, ModelArch, ModelBundle, Normalization, TrainingMeta, VarianceKind};
use super::encoder::{Encoder, EncoderConfig};
use super::params::ParamTree;
use crate::binio::{atomic_write, ByteReader, ByteWriter};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"EIPM";
const VERSION: u32 = 1;

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",")
}

fn descriptor(b: &ModelBundle) -> String {
    let mut s = String::new();
    let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").unwrap();
    kv("d", b.arch.d.to_string());
    kv("k", b.arch.k.to_string());
    kv("eps.hidden", b.arch.eps_hidden.to_string());
    match b.arch.encoder {
        None => kv("encoder", "none".into()),
        Some(EncoderConfig::DeepSet { width }) => {
            kv("encoder", "deep-set".into());
            kv("encoder.width", width.to_string());
        }
        Some(EncoderConfig::SetTransformer { width, heads, inducing }) => {
            kv("encoder", "set-transformer".into());
            kv("encoder.width", width.to_string());
            kv("encoder.heads", heads.to_string());
            kv("encoder.inducing", inducing.to_string());
        }
        Some(EncoderConfig::Moments { order }) => {
            kv("encoder", "moments".into());
            kv("encoder.order", order.to_string());
            if let Some(Encoder::Moments(m)) = &b.params.enc {
                kv("encoder.feature_mean", join(&m.feature_mean));
                kv("encoder.feature_std", join(&m.feature_std));
            }
        }
    }
    kv("conditioning", b.conditioning.name().into());
    match b.kind {
        GenerativeKind::Fm { dt } => {
            kv("kind", "fm".into());
            kv("fm.dt", format!("{dt:?}"));
        }
        GenerativeKind::Ddpm { steps, beta1, beta_t, variance } => {
            kv("kind", "ddpm".into());
            kv("ddpm.steps", steps.to_string());
            kv("ddpm.beta1", format!("{beta1:?}"));
            kv("ddpm.beta_t", format!("{beta_t:?}"));
            kv(
                "ddpm.variance",
                match variance {
                    VarianceKind::Posterior => "posterior".into(),
                    VarianceKind::Beta => "beta".into(),
                },
            );
        }
    }
    kv("norm.x_mean", join(&b.norm.x_mean));
    kv("norm.x_std", join(&b.norm.x_std));
    kv("norm.y_mean", join(&b.norm.y_mean));
    kv("norm.y_std", join(&b.norm.y_std));
    kv("n_train", b.n_train.to_string());
    kv("meta.corpus_seed", b.meta.corpus_seed.to_string());
    kv("meta.train_seed", b.meta.train_seed.to_string());
    kv("meta.steps", b.meta.steps.to_string());
    kv("meta.lr", format!("{:?}", b.meta.lr));
    kv("meta.batch", b.meta.batch.to_string());
    s
}

struct Descriptor(BTreeMap<String, String>);

impl Descriptor {
    fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once(" = ")
                .ok_or_else(|| Error::Format(format!("bad descriptor line {line:?}")))?;
            map.insert(k.to_string(), v.to_string());
        }
        Ok(Self(map))
    }

    fn str(&self, key: &str) -> Result<&str> {
        self.0
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Format(format!("descriptor missing {key:?}")))
    }

    fn parse_as<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.str(key)?
            .parse()
            .map_err(|_| Error::Format(format!("descriptor {key:?} malformed")))
    }

    fn floats(&self, key: &str) -> Result<Vec<f64>> {
        let s = self.str(key)?;
        if s.is_empty() {
            return Ok(Vec::new());
        }
        s.split(',')
            .map(|x| x.parse().map_err(|_| Error::Format(format!("descriptor {key:?} malformed"))))
            .collect()
    }
}

pub fn save_checkpoint(bundle: &ModelBundle, path: &Path) -> Result<()> {
    let desc = descriptor(bundle);
    let flat = bundle.params.flatten();
    let mut w = ByteWriter::with_capacity(32 + desc.len() + 8 * flat.len());
    w.bytes(MAGIC);
    w.u32(VERSION);
    w.u64(desc.len() as u64);
    w.bytes(desc.as_bytes());
    w.u64(flat.len() as u64);
    w.f64s(&flat);
    atomic_write(path, &w.buf)
}

pub fn load_checkpoint(path: &Path) -> Result<ModelBundle> {
    let bytes = fs::read(path)?;
    let mut r = ByteReader::new(&bytes);
    r.magic(MAGIC)?;
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let len = r.u64()? as usize;
    let text = std::str::from_utf8(r.take(len)?)
        .map_err(|_| Error::Format("descriptor is not UTF-8".into()))?;
    let desc = Descriptor::parse(text)?;

    let d: usize = desc.parse_as("d")?;
    let k: usize = desc.parse_as("k")?;
    let eps_hidden: usize = desc.parse_as("eps.hidden")?;
    let encoder = match desc.str("encoder")? {
        "none" => None,
        "deep-set" => Some(EncoderConfig::DeepSet {
            width: desc.parse_as("encoder.width")?,
        }),
        "set-transformer" => Some(EncoderConfig::SetTransformer {
            width: desc.parse_as("encoder.width")?,
            heads: desc.parse_as("encoder.heads")?,
            inducing: desc.parse_as("encoder.inducing")?,
        }),
        "moments" => Some(EncoderConfig::Moments {
            order: desc.parse_as("encoder.order")?,
        }),
        other => return Err(Error::Format(format!("unknown encoder {other:?}"))),
    };
    let arch = ModelArch {
        d,
        k,
        eps_hidden,
        encoder,
    };
    let conditioning: ConditioningMode = desc.parse_as("conditioning")?;
    arch.validate(conditioning)
        .map_err(|e| Error::Format(format!("inconsistent architecture: {e}")))?;

    let kind = match desc.str("kind")? {
        "fm" => GenerativeKind::Fm {
            dt: desc.parse_as("fm.dt")?,
        },
        "ddpm" => GenerativeKind::Ddpm {
            steps: desc.parse_as("ddpm.steps")?,
            beta1: desc.parse_as("ddpm.beta1")?,
            beta_t: desc.parse_as("ddpm.beta_t")?,
            variance: match desc.str("ddpm.variance")? {
                "posterior" => VarianceKind::Posterior,
                "beta" => VarianceKind::Beta,
                other => return Err(Error::Format(format!("unknown variance kind {other:?}"))),
            },
        },
        other => return Err(Error::Format(format!("unknown generative kind {other:?}"))),
    };
    let norm = Normalization {
        x_mean: desc.floats("norm.x_mean")?,
        x_std: desc.floats("norm.x_std")?,
        y_mean: desc.floats("norm.y_mean")?,
        y_std: desc.floats("norm.y_std")?,
    };
    norm.validate(d)?;
    let meta = TrainingMeta {
        corpus_seed: desc.parse_as("meta.corpus_seed")?,
        train_seed: desc.parse_as("meta.train_seed")?,
        steps: desc.parse_as("meta.steps")?,
        lr: desc.parse_as("meta.lr")?,
        batch: desc.str("meta.batch")?.parse::<BatchMode>()?,
    };

    let mut params = ModelBundle::zero_params(&arch).map_err(|e| Error::Format(e.to_string()))?;
    if let Some(Encoder::Moments(m)) = &mut params.enc {
        m.feature_mean = desc.floats("encoder.feature_mean")?;
        m.feature_std = desc.floats("encoder.feature_std")?;
        if m.feature_mean.len() != m.k() || m.feature_std.len() != m.k() {
            return Err(Error::Format("moment statistics have the wrong length".into()));
        }
    }
    let count = r.u64()? as usize;
    if count != params.num_params() {
        return Err(Error::Format(format!(
            "checkpoint stores {count} parameters, architecture needs {}",
            params.num_params()
        )));
    }
    let flat = r.f64s(count)?;
    r.finish()?;
    params.assign_flat(&flat)?;

    Ok(ModelBundle {
        params,
        arch,
        conditioning,
        kind,
        norm,
        n_train: desc.parse_as("n_train")?,
        meta,
    })
}

/// Load and require a specific data dimension.
pub fn load_checkpoint_for_dim(path: &Path, d: usize) -> Result<ModelBundle> {
    let b = load_checkpoint(path)?;
    if b.d() != d {
        return Err(Error::Format(format!("checkpoint has d = {}, expected {d}", b.d())));
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn tmp(name: &str) -> std::path::PathBuf {
        let d = std::env::temp_dir().join(format!("eip-ckpt-{}-{}", std::process::id(), rand::random::<u32>()));
        fs::create_dir_all(&d).unwrap();
        d.join(name)
    }

    fn bundle(arch: ModelArch, mode: ConditioningMode, kind: GenerativeKind) -> ModelBundle {
        let mut b = ModelBundle::init(
            arch,
            mode,
            kind,
            Normalization {
                x_mean: vec![0.1, -0.3],
                x_std: vec![1.7, 0.3333333333333333],
                y_mean: vec![1e-17, 2.5],
                y_std: vec![std::f64::consts::PI, 1.0],
            },
            4000,
            &mut rng_from_seed(9),
        )
        .unwrap();
        b.meta.corpus_seed = 17;
        b.meta.steps = 123;
        b
    }

    #[test]
    fn round_trip_every_variant() {
        let cases = [
            (
                ModelArch { d: 2, k: 3, eps_hidden: 64, encoder: Some(EncoderConfig::DEFAULT_DEEP_SET) },
                ConditioningMode::LearnedEnsemble,
                GenerativeKind::DEFAULT_FM,
            ),
            (
                ModelArch { d: 2, k: 3, eps_hidden: 16, encoder: Some(EncoderConfig::SetTransformer { width: 8, heads: 2, inducing: 4 }) },
                ConditioningMode::LearnedEnsemble,
                GenerativeKind::DEFAULT_DDPM,
            ),
            (
                ModelArch { d: 2, k: 6, eps_hidden: 16, encoder: Some(EncoderConfig::DEFAULT_MOMENTS) },
                ConditioningMode::MomentEnsemble,
                GenerativeKind::Ddpm { steps: 7, beta1: 0.001, beta_t: 0.3, variance: VarianceKind::Beta },
            ),
            (
                ModelArch { d: 2, k: 0, eps_hidden: 16, encoder: None },
                ConditioningMode::None,
                GenerativeKind::Fm { dt: 0.05 },
            ),
            (
                ModelArch { d: 2, k: 1, eps_hidden: 16, encoder: None },
                ConditioningMode::OracleGamma,
                GenerativeKind::DEFAULT_FM,
            ),
        ];
        for (arch, mode, kind) in cases {
            let mut b = bundle(arch, mode, kind);
            if let Some(Encoder::Moments(m)) = &mut b.params.enc {
                m.feature_mean = vec![0.1, 0.2, 1.0 / 3.0, 0.4, 0.5, 0.6];
                m.feature_std = vec![2.0; 6];
            }
            let p = tmp("m.eipm");
            save_checkpoint(&b, &p).unwrap();
            let back = load_checkpoint(&p).unwrap();
            assert_eq!(back, b);
            let bits: Vec<u64> = back.params.flatten().iter().map(|v| v.to_bits()).collect();
            let orig: Vec<u64> = b.params.flatten().iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits, orig);
        }
    }

    #[test]
    fn default_model_checkpoint_is_small() {
        let b = bundle(
            ModelArch { d: 2, k: 3, eps_hidden: 64, encoder: Some(EncoderConfig::DEFAULT_DEEP_SET) },
            ConditioningMode::LearnedEnsemble,
            GenerativeKind::DEFAULT_FM,
        );
        let p = tmp("m.eipm");
        save_checkpoint(&b, &p).unwrap();
        let size = fs::metadata(&p).unwrap().len();
        assert!(size < 5 * 1024 * 1024, "{size} bytes");
    }

    #[test]
    fn mismatched_dimension_and_corruption_are_rejected() {
        let b = bundle(
            ModelArch { d: 2, k: 3, eps_hidden: 8, encoder: Some(EncoderConfig::DeepSet { width: 4 }) },
            ConditioningMode::LearnedEnsemble,
            GenerativeKind::DEFAULT_FM,
        );
        let p = tmp("m.eipm");
        save_checkpoint(&b, &p).unwrap();
        assert!(matches!(load_checkpoint_for_dim(&p, 3), Err(Error::Format(_))));
        load_checkpoint_for_dim(&p, 2).unwrap();

        // Claim a wider hidden layer than the stored parameters support.
        let bytes = fs::read(&p).unwrap();
        let text = String::from_utf8_lossy(&bytes).replace("eps.hidden = 8\n", "eps.hidden = 9\n");
        let mut patched = bytes.clone();
        let at = text.find("eps.hidden = 9").unwrap();
        patched[at + "eps.hidden = ".len()] = b'9';
        fs::write(&p, &patched).unwrap();
        assert!(matches!(load_checkpoint(&p), Err(Error::Format(_))));

        fs::write(&p, b"EIPX").unwrap();
        assert!(matches!(load_checkpoint(&p), Err(Error::Format(_))));
    }
}
