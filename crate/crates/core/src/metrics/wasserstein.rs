use ndarray::{ArrayView1, ArrayView2};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::derive_rng;

fn sorted(v: impl IntoIterator<Item = f64>) -> Result<Vec<f64>> {
    let mut out: Vec<f64> = v.into_iter().collect();
    if out.is_empty() {
        return Err(Error::Contract("Wasserstein distance of an empty sample".into()));
    }
    if out.iter().any(|x| !x.is_finite()) {
        return Err(Error::Contract("Wasserstein distance of non-finite values".into()));
    }
    out.sort_by(f64::total_cmp);
    Ok(out)
}

/// `int_0^1 |F_a^-1(u) - F_b^-1(u)| du` for two sorted samples.
fn w1_sorted(a: &[f64], b: &[f64]) -> f64 {
    let (n, m) = (a.len(), b.len());
    if n == m {
        return a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / n as f64;
    }
    // Quantile breakpoints i/n and j/m compared exactly as i*m vs j*n.
    let (mut i, mut j) = (0usize, 0usize);
    let mut prev = 0u128;
    let scale = (n * m) as u128;
    let mut acc = 0.0;
    while i < n && j < m {
        let na = ((i + 1) * m) as u128;
        let nb = ((j + 1) * n) as u128;
        let next = na.min(nb);
        acc += (next - prev) as f64 * (a[i] - b[j]).abs();
        prev = next;
        if na == next {
            i += 1;
        }
        if nb == next {
            j += 1;
        }
    }
    acc / scale as f64
}

/// Empirical 1-D Wasserstein-1 distance.
pub fn wasserstein1_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    Ok(w1_sorted(&sorted(a.iter().copied())?, &sorted(b.iter().copied())?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwdConfig {
    pub n_projections: usize,
    pub seed: u64,
    /// Reject inputs of different sizes.
    pub require_equal_sizes: bool,
}

impl Default for SwdConfig {
    fn default() -> Self {
        Self {
            n_projections: 128,
            seed: 0,
            require_equal_sizes: false,
        }
    }
}

fn project(x: ArrayView2<f64>, dir: ArrayView1<f64>) -> Vec<f64> {
    x.rows().into_iter().map(|r| r.dot(&dir)).collect()
}

/// Mean 1-D Wasserstein-1 distance over random unit directions.
pub fn sliced_wasserstein(a: ArrayView2<f64>, b: ArrayView2<f64>, cfg: &SwdConfig) -> Result<f64> {
    if a.ncols() != b.ncols() {
        return Err(Error::Contract(format!("dimension mismatch: {} vs {}", a.ncols(), b.ncols())));
    }
    if a.nrows() == 0 || b.nrows() == 0 {
        return Err(Error::Contract("sliced Wasserstein of an empty sample".into()));
    }
    if cfg.n_projections == 0 {
        return Err(Error::Config("n_projections must be >= 1".into()));
    }
    if cfg.require_equal_sizes && a.nrows() != b.nrows() {
        return Err(Error::Contract(format!("sample sizes differ: {} vs {}", a.nrows(), b.nrows())));
    }
    let d = a.ncols();
    let mut rng = derive_rng(cfg.seed, "swd-directions", 0);
    let mut total = 0.0;
    for _ in 0..cfg.n_projections {
        let dir = loop {
            let v: ndarray::Array1<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = v.dot(&v).sqrt();
            if norm > 1e-12 {
                break v / norm;
            }
        };
        let pa = sorted(project(a, dir.view()))?;
        let pb = sorted(project(b, dir.view()))?;
        total += w1_sorted(&pa, &pb);
    }
    Ok(total / cfg.n_projections as f64)
}
