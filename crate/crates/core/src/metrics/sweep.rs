use std::time::Instant;

use ndarray::{concatenate, Array2, ArrayView2, Axis};

use super::report::MetricRow;
use super::wasserstein::{sliced_wasserstein, SwdConfig};
use crate::error::{Error, Result};
use crate::generative::{recover_ensemble, SampleRequest, Strategy};
use crate::nn::ModelBundle;
use crate::rng::{derive_rng, derive_seed};
use crate::synthetic::{make_pair_dataset, sample_prior, ForwardSpec, PriorSpec};

/// Anything that maps observations drawn under `prior` to recovered truths.
pub trait Recoverer {
    fn name(&self) -> &str;
    fn recover(&self, prior: &PriorSpec, truths: ArrayView2<f64>, observations: ArrayView2<f64>, seed: u64) -> Result<Array2<f64>>;
}

/// Returns the truths themselves.
pub struct TruthOracle;

impl Recoverer for TruthOracle {
    fn name(&self) -> &str {
        "truth"
    }

    fn recover(&self, _: &PriorSpec, truths: ArrayView2<f64>, _: ArrayView2<f64>, _: u64) -> Result<Array2<f64>> {
        Ok(truths.to_owned())
    }
}

/// A trained model.
///
/// With `group = Some(g)` the observations are split, in order, into
/// consecutive sets of `g` that are recovered independently (each with
/// `strategy`), mimicking many small observation sets of size `g`.
pub struct ModelRecoverer<'a> {
    pub name: String,
    pub bundle: &'a ModelBundle,
    pub strategy: Strategy,
    pub group: Option<usize>,
}

impl Recoverer for ModelRecoverer<'_> {
    fn name(&self) -> &str {
        &self.name
    }

    fn recover(&self, prior: &PriorSpec, _: ArrayView2<f64>, observations: ArrayView2<f64>, seed: u64) -> Result<Array2<f64>> {
        let prior_params = Some(prior.params());
        let Some(g) = self.group else {
            let req = SampleRequest {
                observations,
                strategy: self.strategy,
                seed,
                prior_params,
            };
            return Ok(recover_ensemble(self.bundle, &req)?.x_hat);
        };
        if g == 0 {
            return Err(Error::Config("group size must be >= 1".into()));
        }
        let n = observations.nrows();
        let parts: Vec<Array2<f64>> = (0..n.div_ceil(g))
            .map(|i| {
                let req = SampleRequest {
                    observations: observations.slice(ndarray::s![i * g..((i + 1) * g).min(n), ..]),
                    strategy: self.strategy,
                    seed: derive_seed(seed, "recover-group", i as u64),
                    prior_params: prior_params.clone(),
                };
                recover_ensemble(self.bundle, &req).map(|r| r.x_hat)
            })
            .collect::<Result<_>>()?;
        let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
        Ok(concatenate(Axis(0), &views).expect("matching widths"))
    }
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub experiment: String,
    pub n_samples: usize,
    pub seed: u64,
    pub swd: SwdConfig,
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub rows: Vec<MetricRow>,
    /// Wall-clock seconds for each row, aligned with `rows`.
    pub runtimes: Vec<f64>,
}

/// Stable key of a prior, so evaluation streams do not depend on grid layout.
fn prior_key(prior: &PriorSpec) -> u64 {
    prior
        .params()
        .iter()
        .fold(derive_seed(0, prior.family_name(), 0), |h, p| derive_seed(h, "param", p.to_bits()))
}

/// Evaluation data for one prior: truths, observations and an independent
/// reference sample from the same prior.
pub fn sweep_data(prior: &PriorSpec, fwd: &ForwardSpec, n: usize, seed: u64) -> Result<(Array2<f64>, Array2<f64>, Array2<f64>)> {
    let key = prior_key(prior);
    let ds = make_pair_dataset(prior, fwd, n, &mut derive_rng(seed, "sweep-data", key))?;
    let reference = sample_prior(prior, n, &mut derive_rng(seed, "sweep-reference", key))?;
    Ok((ds.x, ds.y, reference))
}

/// Seed handed to recoverers for one prior.
pub fn sweep_recover_seed(seed: u64, prior: &PriorSpec) -> u64 {
    derive_seed(seed, "sweep-recover", prior_key(prior))
}

/// SWD between recovered ensembles and fresh prior samples for each prior on
/// the grid and each recoverer. Rows are ordered grid-major.
pub fn swd_sweep(recoverers: &[&dyn Recoverer], grid: &[PriorSpec], fwd: &ForwardSpec, cfg: &SweepConfig) -> Result<SweepOutput> {
    if grid.is_empty() {
        return Err(Error::Config("sweep grid is empty".into()));
    }
    let mut out = SweepOutput {
        rows: Vec::new(),
        runtimes: Vec::new(),
    };
    for prior in grid {
        let (x, y, reference) = sweep_data(prior, fwd, cfg.n_samples, cfg.seed)?;
        for r in recoverers {
            let start = Instant::now();
            let x_hat = r.recover(prior, x.view(), y.view(), sweep_recover_seed(cfg.seed, prior))?;
            let swd = sliced_wasserstein(x_hat.view(), reference.view(), &cfg.swd)?;
            out.rows.push(MetricRow::for_prior(&cfg.experiment, prior, r.name(), "swd", swd, cfg.n_samples, cfg.seed));
            out.runtimes.push(start.elapsed().as_secs_f64());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{ConditioningMode, EncoderConfig, GenerativeKind, ModelArch, Normalization};
    use crate::rng::rng_from_seed;

    fn cfg(n: usize) -> SweepConfig {
        SweepConfig {
            experiment: "t".into(),
            n_samples: n,
            seed: 5,
            swd: SwdConfig::default(),
        }
    }

    #[test]
    fn truth_oracle_is_near_zero() {
        let grid = [PriorSpec::gauss2d(0.5).unwrap()];
        let out = swd_sweep(&[&TruthOracle], &grid, &ForwardSpec::default(), &cfg(10_000)).unwrap();
        assert_eq!(out.rows.len(), 1);
        assert!(out.rows[0].value < 0.05, "{}", out.rows[0].value);
        assert_eq!(out.rows[0].gamma, 0.5);
    }

    #[test]
    fn grouped_model_recovery() {
        let b = ModelBundle::init(
            ModelArch { d: 2, k: 2, eps_hidden: 6, encoder: Some(EncoderConfig::DeepSet { width: 4 }) },
            ConditioningMode::LearnedEnsemble,
            GenerativeKind::Fm { dt: 0.5 },
            Normalization::identity(2),
            20,
            &mut rng_from_seed(1),
        )
        .unwrap();
        let grouped = ModelRecoverer { name: "g".into(), bundle: &b, strategy: Strategy::Duplicate, group: Some(7) };
        let whole = ModelRecoverer { name: "w".into(), bundle: &b, strategy: Strategy::RepeatedSubsets, group: None };
        let grid = [PriorSpec::gauss2d(0.0).unwrap(), PriorSpec::gauss2d(0.9).unwrap()];
        let a = swd_sweep(&[&grouped, &whole], &grid, &ForwardSpec::default(), &cfg(50)).unwrap();
        let b2 = swd_sweep(&[&grouped, &whole], &grid, &ForwardSpec::default(), &cfg(50)).unwrap();
        assert_eq!(a.rows.len(), 4);
        assert_eq!(a.rows, b2.rows);
        assert_eq!(a.rows[1].method, "w");
        assert!(swd_sweep(&[&grouped], &[], &ForwardSpec::default(), &cfg(5)).is_err());
        // A grid point's value does not depend on its neighbours.
        let solo = swd_sweep(&[&grouped], &grid[1..], &ForwardSpec::default(), &cfg(50)).unwrap();
        assert_eq!(solo.rows[0], a.rows[2]);
    }
}
