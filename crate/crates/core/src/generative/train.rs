use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::index;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::sample::schedule_for;
use crate::error::{Error, Result};
use crate::nn::{
    loss_and_grad, BatchMode, Condition, ConditioningMode, Encoder, EncoderConfig, GenerativeKind, ModelArch,
    Algorithm, ModelBundle, Normalization, OptimizerState, TrainBatch, TrainingMeta,
};
use crate::rng::derive_rng;
use crate::synthetic::Corpus;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Observation-set size `N` drawn per step.
    pub n_subset: usize,
    pub steps: u64,
    pub batch: BatchMode,
    pub kind: GenerativeKind,
    pub conditioning: ConditioningMode,
    pub eps_hidden: usize,
    pub encoder: Option<EncoderConfig>,
    /// Embedding width for learned encoders. Other modes derive `k`.
    pub k: usize,
    pub optimizer: Algorithm,
    pub lr: f64,
    pub seed: u64,
    /// Allow subsets drawn with replacement from datasets smaller than `N`.
    pub with_replacement: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_subset: 4000,
            steps: 50_000,
            batch: BatchMode::Minibatch(256),
            kind: GenerativeKind::DEFAULT_FM,
            conditioning: ConditioningMode::LearnedEnsemble,
            eps_hidden: 64,
            encoder: Some(EncoderConfig::DEFAULT_DEEP_SET),
            k: 3,
            optimizer: Algorithm::ADAM,
            lr: 1e-3,
            seed: 0,
            with_replacement: false,
        }
    }
}

impl TrainConfig {
    /// Resolve the architecture for data dimension `d` and `n_prior_params`
    /// oracle parameters.
    pub fn arch(&self, d: usize, n_prior_params: usize) -> Result<ModelArch> {
        let (k, encoder) = match self.conditioning {
            ConditioningMode::None => (0, None),
            ConditioningMode::OracleGamma => (n_prior_params, None),
            ConditioningMode::MomentEnsemble => match self.encoder {
                Some(c @ EncoderConfig::Moments { order }) => (d * order, Some(c)),
                None => (d * 3, Some(EncoderConfig::DEFAULT_MOMENTS)),
                Some(c) => return Err(Error::Config(format!("moment conditioning cannot use encoder {}", c.name()))),
            },
            ConditioningMode::LearnedEnsemble => match self.encoder {
                Some(c @ (EncoderConfig::DeepSet { .. } | EncoderConfig::SetTransformer { .. })) => (self.k, Some(c)),
                None => (self.k, Some(EncoderConfig::DEFAULT_DEEP_SET)),
                Some(c) => return Err(Error::Config(format!("learned conditioning cannot use encoder {}", c.name()))),
            },
        };
        let arch = ModelArch {
            d,
            k,
            eps_hidden: self.eps_hidden,
            encoder,
        };
        arch.validate(self.conditioning)?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_subset == 0 {
            return Err(Error::Config("subset size N must be >= 1".into()));
        }
        if let BatchMode::Minibatch(b) = self.batch {
            if b == 0 || b > self.n_subset {
                return Err(Error::Config(format!("minibatch size must lie in 1..=N, got {b}")));
            }
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        match self.kind {
            GenerativeKind::Ddpm { .. } => {
                schedule_for(&self.kind)?;
            }
            GenerativeKind::Fm { dt } => {
                super::sample::euler_steps(dt)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub bundle: ModelBundle,
    /// Mean per-element squared error for every optimizer step.
    pub losses: Vec<f64>,
}

pub fn train(corpus: &Corpus, cfg: &TrainConfig) -> Result<TrainOutput> {
    train_with(corpus, cfg, |_, _| {})
}

/// Train, calling `on_step(step, loss)` after every optimizer step.
pub fn train_with(corpus: &Corpus, cfg: &TrainConfig, mut on_step: impl FnMut(u64, f64)) -> Result<TrainOutput> {
    cfg.validate()?;
    let first = corpus
        .datasets
        .first()
        .ok_or_else(|| Error::Config("corpus has no datasets".into()))?;
    let d = first.dim();
    let n_params = first.prior.params().len();
    for ds in &corpus.datasets {
        ds.validate()?;
        if ds.dim() != d {
            return Err(Error::Config("corpus datasets disagree on dimension".into()));
        }
        if cfg.conditioning == ConditioningMode::OracleGamma && ds.prior.params().len() != n_params {
            return Err(Error::Config("oracle conditioning needs one prior family".into()));
        }
        if ds.len() < cfg.n_subset && !cfg.with_replacement {
            return Err(Error::Config(format!(
                "dataset with {} pairs is smaller than N = {} and replacement is off",
                ds.len(),
                cfg.n_subset
            )));
        }
    }
    let arch = cfg.arch(d, n_params)?;
    let xs: Vec<_> = corpus.datasets.iter().map(|ds| ds.x.view()).collect();
    let ys: Vec<_> = corpus.datasets.iter().map(|ds| ds.y.view()).collect();
    let norm = Normalization::fit(&xs, &ys)?;
    let data: Vec<(Array2<f64>, Array2<f64>, Array1<f64>)> = corpus
        .datasets
        .iter()
        .map(|ds| {
            (
                norm.normalize_x(ds.x.view()),
                norm.normalize_y(ds.y.view()),
                Array1::from(ds.prior.params()),
            )
        })
        .collect();

    let mut init_rng = derive_rng(cfg.seed, "train-init", 0);
    let mut bundle = ModelBundle::init(arch, cfg.conditioning, cfg.kind, norm, cfg.n_subset, &mut init_rng)?;
    bundle.meta = TrainingMeta {
        corpus_seed: corpus.seed,
        train_seed: cfg.seed,
        steps: cfg.steps,
        lr: cfg.lr,
        batch: cfg.batch,
    };

    let mut rng = derive_rng(cfg.seed, "train-loop", 0);
    if let Some(Encoder::Moments(m)) = &mut bundle.params.enc {
        let sets: Vec<Array2<f64>> = data
            .iter()
            .map(|(_, y, _)| {
                let idx = draw_subset(&mut rng, y.nrows(), cfg.n_subset);
                y.select(Axis(0), &idx)
            })
            .collect();
        m.fit(sets.iter().map(|s| s.view()));
    }

    let sched = match cfg.kind {
        GenerativeKind::Ddpm { .. } => Some(schedule_for(&cfg.kind)?),
        GenerativeKind::Fm { .. } => None,
    };
    let mut opt = OptimizerState::new(cfg.optimizer, cfg.lr);
    let mut losses = Vec::with_capacity(cfg.steps as usize);

    for step in 0..cfg.steps {
        let (x, y, params) = &data[rng.random_range(0..data.len())];
        let subset = draw_subset(&mut rng, x.nrows(), cfg.n_subset);
        let picks: Vec<usize> = match cfg.batch {
            BatchMode::FullSubset => subset.clone(),
            BatchMode::Minibatch(b) => index::sample(&mut rng, subset.len(), b)
                .into_iter()
                .map(|i| subset[i])
                .collect(),
        };
        let batch = build_batch(x, y, &picks, &bundle, sched.as_ref(), &mut rng);
        let set_y;
        let cond = match cfg.conditioning {
            ConditioningMode::None => Condition::Empty,
            ConditioningMode::OracleGamma => Condition::Vector(params.view()),
            ConditioningMode::LearnedEnsemble | ConditioningMode::MomentEnsemble => {
                set_y = y.select(Axis(0), &subset);
                Condition::Set(set_y.view())
            }
        };
        let (loss, grads) = loss_and_grad(&bundle.params, &batch, cond).map_err(|e| match e {
            Error::NonFiniteLoss { index, .. } => Error::NonFiniteLoss {
                index,
                step: Some(step as usize),
            },
            other => other,
        })?;
        opt.step(&mut bundle.params, &grads)?;
        let mean = loss / batch.len() as f64;
        losses.push(mean);
        on_step(step, mean);
    }
    Ok(TrainOutput { bundle, losses })
}

fn draw_subset(rng: &mut crate::rng::Rng, len: usize, n: usize) -> Vec<usize> {
    if n <= len {
        index::sample(rng, len, n).into_vec()
    } else {
        (0..n).map(|_| rng.random_range(0..len)).collect()
    }
}

fn build_batch(
    x: &Array2<f64>,
    y: &Array2<f64>,
    picks: &[usize],
    bundle: &ModelBundle,
    sched: Option<&super::NoiseSchedule>,
    rng: &mut crate::rng::Rng,
) -> TrainBatch {
    let b = picks.len();
    let d = x.ncols();
    let mut x_t = Array2::zeros((b, d));
    let mut target = Array2::zeros((b, d));
    let mut t = Array1::zeros(b);
    let mut xi = Array1::zeros(d);
    for (r, &j) in picks.iter().enumerate() {
        xi.mapv_inplace(|_| StandardNormal.sample(rng));
        let xj: ArrayView1<f64> = x.row(j);
        let (xt, tg, time) = match sched {
            Some(s) => {
                let step = rng.random_range(1..=s.steps());
                let (xt, tg) = super::ddpm_training_example(xj, step, xi.view(), s).expect("step in range");
                (xt, tg, bundle.network_time(step as f64))
            }
            None => {
                let tau: f64 = rng.random();
                let (xt, tg) = super::fm_training_example(xj, xi.view(), tau).expect("time in range");
                (xt, tg, tau)
            }
        };
        x_t.row_mut(r).assign(&xt);
        target.row_mut(r).assign(&tg);
        t[r] = time;
    }
    TrainBatch {
        x_t,
        t,
        y: y.select(Axis(0), picks),
        target,
    }
}
