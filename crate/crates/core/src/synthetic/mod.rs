//! Synthetic ensemble-inverse data: correlated Gaussian priors, the noisy
//! linear forward model, and multi-prior training corpora.

mod io;

pub use io::{load_corpus, load_dataset, save_corpus, save_dataset};

use std::fmt;

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::{derive_rng, Rng};

/// Dimension of every prior family implemented here.
pub const DIM: usize = 2;

/// A member of one of the bivariate Gaussian prior families.
///
/// Both families have unit marginal variances; `Gauss2D` is centred while
/// `Gauss2D3Param` also shifts the mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PriorSpec {
    Gauss2D { gamma: f64 },
    Gauss2D3Param { mu1: f64, mu2: f64, gamma1: f64 },
}

impl PriorSpec {
    pub fn gauss2d(gamma: f64) -> Result<Self> {
        let s = PriorSpec::Gauss2D { gamma };
        s.validate()?;
        Ok(s)
    }

    pub fn three_param(mu1: f64, mu2: f64, gamma1: f64) -> Result<Self> {
        let s = PriorSpec::Gauss2D3Param { mu1, mu2, gamma1 };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let (mean, corr) = (self.mean(), self.correlation());
        if !corr.is_finite() || corr.abs() > 1.0 {
            return Err(Error::InvalidPrior(format!(
                "correlation {corr} outside [-1, 1]"
            )));
        }
        if !mean.iter().all(|m| m.is_finite()) {
            return Err(Error::InvalidPrior("non-finite mean".into()));
        }
        Ok(())
    }

    pub fn mean(&self) -> [f64; 2] {
        match *self {
            PriorSpec::Gauss2D { .. } => [0.0, 0.0],
            PriorSpec::Gauss2D3Param { mu1, mu2, .. } => [mu1, mu2],
        }
    }

    pub fn correlation(&self) -> f64 {
        match *self {
            PriorSpec::Gauss2D { gamma } => gamma,
            PriorSpec::Gauss2D3Param { gamma1, .. } => gamma1,
        }
    }

    pub fn covariance(&self) -> [[f64; 2]; 2] {
        let g = self.correlation();
        [[1.0, g], [g, 1.0]]
    }

    /// The raw parameter vector: `[gamma]` or `[mu1, mu2, gamma1]`.
    pub fn params(&self) -> Vec<f64> {
        match *self {
            PriorSpec::Gauss2D { gamma } => vec![gamma],
            PriorSpec::Gauss2D3Param { mu1, mu2, gamma1 } => vec![mu1, mu2, gamma1],
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            PriorSpec::Gauss2D { .. } => "gauss2d",
            PriorSpec::Gauss2D3Param { .. } => "gauss2d-3param",
        }
    }
}

impl fmt::Display for PriorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            PriorSpec::Gauss2D { gamma } => write!(f, "gauss2d(gamma={gamma})"),
            PriorSpec::Gauss2D3Param { mu1, mu2, gamma1 } => {
                write!(f, "gauss2d-3param(mu1={mu1},mu2={mu2},gamma1={gamma1})")
            }
        }
    }
}

/// Draw `n` rows from the prior.
///
/// Uses the lower Cholesky factor `[[1, 0], [g, sqrt(1 - g^2)]]`, which stays
/// exact at `|g| = 1` where the second diagonal entry is zero.
pub fn sample_prior(spec: &PriorSpec, n: usize, rng: &mut Rng) -> Result<Array2<f64>> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::Contract("sample_prior needs n >= 1".into()));
    }
    let [m1, m2] = spec.mean();
    let g = spec.correlation();
    let l22 = (1.0 - g * g).max(0.0).sqrt();
    let mut out = Array2::zeros((n, DIM));
    for mut row in out.rows_mut() {
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        row[0] = m1 + z1;
        row[1] = m2 + g * z1 + l22 * z2;
    }
    Ok(out)
}

/// Noisy linear forward model `y = A x + n(x)` with
/// `n(x) ~ N(mean_scale * x, var_scale * |x|^2 * I)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForwardSpec {
    pub a: [[f64; 2]; 2],
    pub noise_mean_scale: f64,
    pub noise_var_scale: f64,
}

impl Default for ForwardSpec {
    fn default() -> Self {
        Self {
            a: [[1.0, 0.5], [0.5, 2.0]],
            noise_mean_scale: 0.2,
            noise_var_scale: 0.25,
        }
    }
}

impl ForwardSpec {
    pub fn validate(&self) -> Result<()> {
        if !self.a.iter().flatten().all(|v| v.is_finite()) {
            return Err(Error::Config("forward matrix must be finite".into()));
        }
        if !(self.noise_mean_scale.is_finite() && self.noise_mean_scale >= 0.0) {
            return Err(Error::Config("noise_mean_scale must be >= 0".into()));
        }
        if !(self.noise_var_scale.is_finite() && self.noise_var_scale >= 0.0) {
            return Err(Error::Config("noise_var_scale must be >= 0".into()));
        }
        Ok(())
    }

    /// Deterministic part of the map, `A x + mean_scale * x`.
    pub fn mean_response(&self, x: [f64; 2]) -> [f64; 2] {
        let a = &self.a;
        let s = self.noise_mean_scale;
        [
            a[0][0] * x[0] + a[0][1] * x[1] + s * x[0],
            a[1][0] * x[0] + a[1][1] * x[1] + s * x[1],
        ]
    }
}

/// Push one truth through the forward model. Two normal draws are consumed
/// even at the origin so the stream position does not depend on `x`.
pub fn apply_forward(x: ArrayView1<f64>, fwd: &ForwardSpec, rng: &mut Rng) -> Result<Array1<f64>> {
    if x.len() != DIM {
        return Err(Error::Contract(format!("expected a {DIM}-vector, got {}", x.len())));
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::Contract("non-finite truth".into()));
    }
    let xv = [x[0], x[1]];
    let mean = fwd.mean_response(xv);
    let sd = (fwd.noise_var_scale * (xv[0] * xv[0] + xv[1] * xv[1])).sqrt();
    let z1: f64 = rng.sample(StandardNormal);
    let z2: f64 = rng.sample(StandardNormal);
    Ok(Array1::from(vec![mean[0] + sd * z1, mean[1] + sd * z2]))
}

/// Truth-observation pairs drawn i.i.d. from one prior; row `j` of `x` and
/// `y` form pair `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairDataset {
    pub prior: PriorSpec,
    pub x: Array2<f64>,
    pub y: Array2<f64>,
}

impl PairDataset {
    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.dim() != self.y.dim() {
            return Err(Error::Format(format!(
                "x {:?} and y {:?} shapes differ",
                self.x.dim(),
                self.y.dim()
            )));
        }
        if self.is_empty() {
            return Err(Error::Format("empty dataset".into()));
        }
        if !self.x.iter().chain(self.y.iter()).all(|v| v.is_finite()) {
            return Err(Error::Format("non-finite pair".into()));
        }
        Ok(())
    }
}

pub fn make_pair_dataset(
    spec: &PriorSpec,
    fwd: &ForwardSpec,
    n: usize,
    rng: &mut Rng,
) -> Result<PairDataset> {
    fwd.validate()?;
    let x = sample_prior(spec, n, rng)?;
    let mut y = Array2::zeros(x.raw_dim());
    for (xr, mut yr) in x.rows().into_iter().zip(y.rows_mut()) {
        yr.assign(&apply_forward(xr, fwd, rng)?);
    }
    Ok(PairDataset { prior: *spec, x, y })
}

/// A multi-prior training corpus sharing one forward model.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub datasets: Vec<PairDataset>,
    pub forward: ForwardSpec,
    pub seed: u64,
}

impl Corpus {
    pub fn dim(&self) -> usize {
        self.datasets.first().map_or(DIM, PairDataset::dim)
    }

    pub fn total_pairs(&self) -> usize {
        self.datasets.iter().map(PairDataset::len).sum()
    }
}

/// One dataset per prior; dataset `i` draws from its own stream derived from
/// `(seed, i)`.
pub fn make_training_corpus(
    specs: &[PriorSpec],
    fwd: &ForwardSpec,
    n_per: usize,
    seed: u64,
) -> Result<Corpus> {
    if specs.is_empty() {
        return Err(Error::Config("training corpus needs at least one prior".into()));
    }
    let datasets = specs
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            let mut rng = derive_rng(seed, "corpus-dataset", i as u64);
            make_pair_dataset(spec, fwd, n_per, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Corpus {
        datasets,
        forward: *fwd,
        seed,
    })
}

/// `per_range` evenly spaced points over each closed interval.
pub fn interval_grid(ranges: &[(f64, f64)], per_range: usize) -> Result<Vec<f64>> {
    if per_range == 0 || ranges.is_empty() {
        return Err(Error::Config("grid needs at least one range and one point".into()));
    }
    let mut out = Vec::with_capacity(ranges.len() * per_range);
    for &(lo, hi) in ranges {
        if !(lo.is_finite() && hi.is_finite()) || lo > hi {
            return Err(Error::Config(format!("bad range [{lo}, {hi}]")));
        }
        if per_range == 1 {
            out.push(0.5 * (lo + hi));
            continue;
        }
        for i in 0..per_range {
            out.push(lo + (hi - lo) * i as f64 / (per_range - 1) as f64);
        }
    }
    Ok(out)
}

/// The centred family's default training grid: 10 priors on each of
/// `[-0.75, -0.25]` and `[0.25, 0.75]`.
pub fn default_gamma_grid() -> Vec<PriorSpec> {
    interval_grid(&[(-0.75, -0.25), (0.25, 0.75)], 10)
        .expect("static grid")
        .into_iter()
        .map(|gamma| PriorSpec::Gauss2D { gamma })
        .collect()
}

/// Cartesian grid for the three-parameter family.
pub fn three_param_grid(
    gamma_ranges: &[(f64, f64)],
    gamma_per_range: usize,
    mu_ranges: &[(f64, f64)],
    mu_per_range: usize,
) -> Result<Vec<PriorSpec>> {
    let gammas = interval_grid(gamma_ranges, gamma_per_range)?;
    let mus = interval_grid(mu_ranges, mu_per_range)?;
    let mut out = Vec::with_capacity(gammas.len() * mus.len() * mus.len());
    for &gamma1 in &gammas {
        for &mu1 in &mus {
            for &mu2 in &mus {
                out.push(PriorSpec::three_param(mu1, mu2, gamma1)?);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use ndarray::array;

    fn sample_cov(x: &Array2<f64>) -> [[f64; 2]; 2] {
        let n = x.nrows() as f64;
        let m = x.mean_axis(ndarray::Axis(0)).unwrap();
        let mut c = [[0.0; 2]; 2];
        for r in x.rows() {
            for i in 0..2 {
                for j in 0..2 {
                    c[i][j] += (r[i] - m[i]) * (r[j] - m[j]) / n;
                }
            }
        }
        c
    }

    #[test]
    fn rejects_correlation_outside_unit_interval() {
        assert!(matches!(PriorSpec::gauss2d(1.2), Err(Error::InvalidPrior(_))));
        assert!(matches!(
            PriorSpec::three_param(0.0, 0.0, -1.01),
            Err(Error::InvalidPrior(_))
        ));
        let bad = PriorSpec::Gauss2D { gamma: 2.0 };
        assert!(sample_prior(&bad, 3, &mut rng_from_seed(0)).is_err());
    }

    #[test]
    fn independent_prior_has_identity_covariance() {
        let x = sample_prior(&PriorSpec::Gauss2D { gamma: 0.0 }, 200_000, &mut rng_from_seed(1)).unwrap();
        let c = sample_cov(&x);
        assert!((c[0][0] - 1.0).abs() < 0.02);
        assert!((c[1][1] - 1.0).abs() < 0.02);
        assert!(c[0][1].abs() < 0.02);
    }

    #[test]
    fn thin_prior_has_requested_correlation() {
        let x = sample_prior(&PriorSpec::Gauss2D { gamma: 0.9 }, 40_000, &mut rng_from_seed(2)).unwrap();
        let c = sample_cov(&x);
        let r = c[0][1] / (c[0][0] * c[1][1]).sqrt();
        assert!((r - 0.9).abs() < 0.02, "r = {r}");
    }

    #[test]
    fn degenerate_prior_is_exactly_on_the_diagonal() {
        let x = sample_prior(&PriorSpec::Gauss2D { gamma: 1.0 }, 100, &mut rng_from_seed(3)).unwrap();
        for r in x.rows() {
            assert!((r[1] - r[0]).abs() <= 1e-12);
        }
        let x = sample_prior(&PriorSpec::Gauss2D { gamma: -1.0 }, 100, &mut rng_from_seed(3)).unwrap();
        for r in x.rows() {
            assert!((r[1] + r[0]).abs() <= 1e-12);
        }
    }

    #[test]
    fn three_param_prior_is_shifted() {
        let spec = PriorSpec::three_param(1.5, -0.5, 0.3).unwrap();
        let x = sample_prior(&spec, 100_000, &mut rng_from_seed(4)).unwrap();
        let m = x.mean_axis(ndarray::Axis(0)).unwrap();
        assert!((m[0] - 1.5).abs() < 0.02 && (m[1] + 0.5).abs() < 0.02);
        let c = sample_cov(&x);
        assert!((c[0][1] - 0.3).abs() < 0.02);
    }

    #[test]
    fn forward_at_origin_is_exact() {
        let fwd = ForwardSpec::default();
        let y = apply_forward(array![0.0, 0.0].view(), &fwd, &mut rng_from_seed(5)).unwrap();
        assert_eq!(y, array![0.0, 0.0]);
    }

    #[test]
    fn forward_moments_at_unit_vector() {
        let fwd = ForwardSpec::default();
        let mut rng = rng_from_seed(6);
        let n = 100_000;
        let x = array![1.0, 0.0];
        let (mut s, mut ss) = ([0.0; 2], [0.0; 2]);
        for _ in 0..n {
            let y = apply_forward(x.view(), &fwd, &mut rng).unwrap();
            for i in 0..2 {
                s[i] += y[i];
                ss[i] += y[i] * y[i];
            }
        }
        let mean = [s[0] / n as f64, s[1] / n as f64];
        assert!((mean[0] - 1.2).abs() < 0.01 && (mean[1] - 0.5).abs() < 0.01, "{mean:?}");
        for i in 0..2 {
            let var = ss[i] / n as f64 - mean[i] * mean[i];
            assert!((var - 0.25).abs() < 0.0125, "var {var}");
        }
    }

    #[test]
    fn forward_without_noise_variance_is_deterministic_mean() {
        let fwd = ForwardSpec {
            noise_var_scale: 0.0,
            ..ForwardSpec::default()
        };
        let y = apply_forward(array![1.0, 1.0].view(), &fwd, &mut rng_from_seed(7)).unwrap();
        assert!((y[0] - 1.7).abs() < 1e-15 && (y[1] - 2.7).abs() < 1e-15, "{y}");
    }

    #[test]
    fn forward_rejects_non_finite_truth() {
        let fwd = ForwardSpec::default();
        assert!(apply_forward(array![f64::NAN, 0.0].view(), &fwd, &mut rng_from_seed(0)).is_err());
    }

    #[test]
    fn datasets_are_deterministic() {
        let fwd = ForwardSpec::default();
        let spec = PriorSpec::Gauss2D { gamma: 0.5 };
        let a = make_pair_dataset(&spec, &fwd, 4000, &mut rng_from_seed(9)).unwrap();
        let b = make_pair_dataset(&spec, &fwd, 4000, &mut rng_from_seed(9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 4000);
        a.validate().unwrap();
        let one = make_pair_dataset(&PriorSpec::Gauss2D { gamma: 0.0 }, &fwd, 1, &mut rng_from_seed(1)).unwrap();
        assert_eq!(one.len(), 1);
        one.validate().unwrap();
    }

    #[test]
    fn corpus_construction() {
        let fwd = ForwardSpec::default();
        assert!(matches!(make_training_corpus(&[], &fwd, 10, 0), Err(Error::Config(_))));
        let specs = default_gamma_grid();
        assert_eq!(specs.len(), 20);
        assert_eq!(specs[0], PriorSpec::Gauss2D { gamma: -0.75 });
        assert_eq!(specs[19], PriorSpec::Gauss2D { gamma: 0.75 });
        let c = make_training_corpus(&specs[..3], &fwd, 50, 11).unwrap();
        assert_eq!(c.datasets.len(), 3);
        assert_eq!(c, make_training_corpus(&specs[..3], &fwd, 50, 11).unwrap());
        let single = make_training_corpus(&specs[..1], &fwd, 5, 1).unwrap();
        assert_eq!(single.datasets.len(), 1);
    }

    #[test]
    fn three_param_grid_covers_ranges() {
        let g = three_param_grid(&[(-0.75, -0.25), (0.25, 0.75)], 2, &[(-1.5, -0.5), (0.5, 1.5)], 2).unwrap();
        assert_eq!(g.len(), 4 * 4 * 4);
        for s in &g {
            let p = s.params();
            assert!(p[0].abs() >= 0.5 && p[0].abs() <= 1.5);
            assert!(p[2].abs() >= 0.25 && p[2].abs() <= 0.75);
        }
    }

    #[test]
    fn noise_mean_offset_over_regenerations() {
        let fwd = ForwardSpec::default();
        let x = array![0.7, -1.3];
        let ax = [1.0 * 0.7 + 0.5 * -1.3, 0.5 * 0.7 + 2.0 * -1.3];
        let mut rng = rng_from_seed(12);
        let n = 100_000;
        let mut acc = [0.0; 2];
        for _ in 0..n {
            let y = apply_forward(x.view(), &fwd, &mut rng).unwrap();
            acc[0] += (y[0] - ax[0]) / n as f64;
            acc[1] += (y[1] - ax[1]) / n as f64;
        }
        assert!((acc[0] - 0.14).abs() < 0.01 && (acc[1] + 0.26).abs() < 0.01, "{acc:?}");
    }
}
