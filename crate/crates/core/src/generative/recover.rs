use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng as _;

use super::sample::sample_rows;
use crate::error::{Error, Result};
use crate::nn::ModelBundle;
use crate::rng::{derive_rng, derive_seed, rng_from_seed, Rng};

/// How to encode an observation set whose size differs from the training `N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Require `N' = N`.
    Exact,
    /// Pad a smaller set with random duplicates for encoding only.
    Duplicate,
    /// Encode successive size-`N` parts of a random partition.
    RepeatedSubsets,
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Exact => "exact",
            Strategy::Duplicate => "duplicate",
            Strategy::RepeatedSubsets => "repeated-subsets",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Strategy::Exact),
            "duplicate" => Ok(Strategy::Duplicate),
            "repeated-subsets" => Ok(Strategy::RepeatedSubsets),
            _ => Err(Error::Config(format!("unknown strategy {s:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SampleRequest<'a> {
    /// Raw observations, one per row.
    pub observations: ArrayView2<'a, f64>,
    pub strategy: Strategy,
    pub seed: u64,
    /// Prior parameters for oracle-conditioned models.
    pub prior_params: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub model: String,
    pub strategy: Strategy,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveredEnsemble {
    /// Row `j` is the draw for observation `j`.
    pub x_hat: Array2<f64>,
    pub provenance: Provenance,
    pub encoder_passes: usize,
}

/// Seed of the sampling stream for observation `index`.
pub fn observation_seed(seed: u64, index: usize) -> u64 {
    derive_seed(seed, "recover-sample", index as u64)
}

/// Split `0..n_obs` into encoder passes of exactly `n` indices each. Returns
/// `(members, encode_set)` per pass: `members` are sampled with that pass's
/// embedding; `encode_set` is `members` plus padding.
fn plan_passes(n_obs: usize, n: usize, strategy: Strategy, rng: &mut Rng) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    match strategy {
        Strategy::Exact => {
            if n_obs != n {
                return Err(Error::Contract(format!(
                    "exact strategy needs N' = N = {n}, got N' = {n_obs}"
                )));
            }
            let all: Vec<usize> = (0..n_obs).collect();
            Ok(vec![(all.clone(), all)])
        }
        Strategy::Duplicate => {
            if n_obs > n {
                return Err(Error::Contract(format!(
                    "duplicate strategy needs N' <= N = {n}, got N' = {n_obs}"
                )));
            }
            let members: Vec<usize> = (0..n_obs).collect();
            let mut set = members.clone();
            set.extend((n_obs..n).map(|_| rng.random_range(0..n_obs)));
            Ok(vec![(members, set)])
        }
        Strategy::RepeatedSubsets => {
            let mut order: Vec<usize> = (0..n_obs).collect();
            order.shuffle(rng);
            let mut passes = Vec::new();
            for chunk in order.chunks(n) {
                let members = chunk.to_vec();
                let mut set = members.clone();
                if set.len() < n {
                    // Pad from observations outside this pass when possible.
                    let others: Vec<usize> = order.iter().copied().filter(|i| !chunk.contains(i)).collect();
                    let pool = if others.is_empty() { &members } else { &others };
                    set.extend((set.len()..n).map(|_| pool[rng.random_range(0..pool.len())]));
                }
                passes.push((members, set));
            }
            Ok(passes)
        }
    }
}

pub fn recover_ensemble(bundle: &ModelBundle, req: &SampleRequest) -> Result<RecoveredEnsemble> {
    let obs = req.observations;
    let n_obs = obs.nrows();
    if n_obs == 0 {
        return Err(Error::Contract("observation set is empty".into()));
    }
    if obs.ncols() != bundle.d() {
        return Err(Error::Contract(format!(
            "observations have dimension {}, model expects {}",
            obs.ncols(),
            bundle.d()
        )));
    }
    let provenance = Provenance {
        model: format!("{}/{}", bundle.kind.name(), bundle.conditioning.name()),
        strategy: req.strategy,
        seed: req.seed,
    };
    let mut x_hat = Array2::zeros((n_obs, bundle.d()));

    if !bundle.conditioning.uses_set() {
        let z = bundle.condition(None, req.prior_params.as_deref())?;
        let mut rngs: Vec<Rng> = (0..n_obs).map(|j| rng_from_seed(observation_seed(req.seed, j))).collect();
        x_hat.assign(&sample_rows(bundle, obs, z.view(), &mut rngs)?);
        return Ok(RecoveredEnsemble {
            x_hat,
            provenance,
            encoder_passes: 0,
        });
    }

    let mut plan_rng = derive_rng(req.seed, "recover-plan", 0);
    let passes = plan_passes(n_obs, bundle.n_train, req.strategy, &mut plan_rng)?;
    for (members, set) in &passes {
        let z: Array1<f64> = bundle.condition(Some(obs.select(Axis(0), set).view()), None)?;
        let ys = obs.select(Axis(0), members);
        let mut rngs: Vec<Rng> = members
            .iter()
            .map(|&j| rng_from_seed(observation_seed(req.seed, j)))
            .collect();
        let draws = sample_rows(bundle, ys.view(), z.view(), &mut rngs)?;
        for (r, &j) in members.iter().enumerate() {
            x_hat.row_mut(j).assign(&draws.row(r));
        }
    }
    Ok(RecoveredEnsemble {
        x_hat,
        provenance,
        encoder_passes: passes.len(),
    })
}
