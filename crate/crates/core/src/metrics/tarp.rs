use ndarray::{Array1, ArrayView1, ArrayView2};
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::derive_rng;

#[derive(Debug, Clone, PartialEq)]
pub struct TarpConfig {
    /// Levels `alpha`, each in `(0, 1)`.
    pub alpha_grid: Vec<f64>,
    pub seed: u64,
    /// Relative widening of the reference-point box on each side.
    pub inflate: f64,
}

impl TarpConfig {
    /// `alpha = 0.01, 0.02, ..., 0.99`.
    pub fn default_alpha_grid() -> Vec<f64> {
        (1..=99).map(|i| f64::from(i) / 100.0).collect()
    }
}

impl Default for TarpConfig {
    fn default() -> Self {
        Self {
            alpha_grid: Self::default_alpha_grid(),
            seed: 0,
            inflate: 0.1,
        }
    }
}

/// ECP at each credibility level `1 - alpha`, sorted by credibility.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageCurve {
    pub credibility: Vec<f64>,
    pub ecp: Vec<f64>,
    pub deviation: f64,
}

fn dist(a: ArrayView1<f64>, b: &Array1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

pub fn tarp_coverage(truths: ArrayView2<f64>, samples: &[ArrayView2<f64>], cfg: &TarpConfig) -> Result<CoverageCurve> {
    let n = truths.nrows();
    if n == 0 || samples.len() != n {
        return Err(Error::Contract(format!(
            "{} truths but {} posterior sample sets",
            n,
            samples.len()
        )));
    }
    if cfg.alpha_grid.is_empty() || cfg.alpha_grid.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
        return Err(Error::Config("alpha grid must be non-empty and inside (0, 1)".into()));
    }
    let d = truths.ncols();
    if samples.iter().any(|s| s.nrows() == 0 || s.ncols() != d) {
        return Err(Error::Contract("every posterior sample set must be non-empty with matching dimension".into()));
    }

    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    let points = truths.rows().into_iter().chain(samples.iter().flat_map(|s| s.rows()));
    for row in points {
        for c in 0..d {
            lo[c] = lo[c].min(row[c]);
            hi[c] = hi[c].max(row[c]);
        }
    }
    for c in 0..d {
        let pad = cfg.inflate * (hi[c] - lo[c]);
        lo[c] -= pad;
        hi[c] += pad;
    }

    let mut rng = derive_rng(cfg.seed, "tarp-reference", 0);
    let f: Vec<f64> = (0..n)
        .map(|i| {
            let x_r: Array1<f64> = (0..d)
                .map(|c| if hi[c] > lo[c] { rng.random_range(lo[c]..hi[c]) } else { lo[c] })
                .collect();
            let r = dist(truths.row(i), &x_r);
            let s = &samples[i];
            let inside = s.rows().into_iter().filter(|row| dist(row.view(), &x_r) < r).count();
            inside as f64 / s.nrows() as f64
        })
        .collect();

    let mut credibility: Vec<f64> = cfg.alpha_grid.iter().map(|a| 1.0 - a).collect();
    credibility.sort_by(f64::total_cmp);
    let ecp: Vec<f64> = credibility
        .iter()
        .map(|&c| f.iter().filter(|&&fi| fi <= c).count() as f64 / n as f64)
        .collect();
    let mut curve = CoverageCurve {
        credibility,
        ecp,
        deviation: 0.0,
    };
    curve.deviation = tarp_deviation(&curve)?;
    Ok(curve)
}

/// Mean absolute gap between ECP and the credibility level.
pub fn tarp_deviation(curve: &CoverageCurve) -> Result<f64> {
    if curve.ecp.is_empty() || curve.ecp.len() != curve.credibility.len() {
        return Err(Error::Contract("coverage curve is empty or misaligned".into()));
    }
    Ok(curve
        .ecp
        .iter()
        .zip(&curve.credibility)
        .map(|(e, c)| (e - c).abs())
        .sum::<f64>()
        / curve.ecp.len() as f64)
}
