use ndarray::{Array2, ArrayView2, Axis};

/// Fixed moment summary of a set: per-coordinate mean followed by central
/// moments of order `2..=order`, laid out order-major
/// (`[mean_1..mean_d, m2_1..m2_d, ...]`), then standardized with
/// `(f - feature_mean) / feature_std`.
///
/// No trainable parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub d: usize,
    pub order: usize,
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
}

impl Moments {
    /// Identity standardization.
    pub fn new(d: usize, order: usize) -> Self {
        let k = d * order;
        Self {
            d,
            order,
            feature_mean: vec![0.0; k],
            feature_std: vec![1.0; k],
        }
    }

    pub fn k(&self) -> usize {
        self.d * self.order
    }

    pub fn raw_features(&self, set: ArrayView2<f64>) -> Vec<f64> {
        let n = set.nrows() as f64;
        let mean = set.mean_axis(Axis(0)).expect("non-empty set");
        let mut out = Vec::with_capacity(self.k());
        out.extend(mean.iter().copied());
        for p in 2..=self.order {
            for c in 0..self.d {
                let m = mean[c];
                let s: f64 = set.column(c).iter().map(|&v| (v - m).powi(p as i32)).sum();
                out.push(s / n);
            }
        }
        out
    }

    /// Fit the standardization over a collection of sets (one feature row per
    /// set). A feature with zero spread keeps unit scale.
    pub fn fit<'a>(&mut self, sets: impl IntoIterator<Item = ArrayView2<'a, f64>>) {
        let rows: Vec<Vec<f64>> = sets.into_iter().map(|s| self.raw_features(s)).collect();
        if rows.is_empty() {
            return;
        }
        let k = self.k();
        let n = rows.len() as f64;
        for j in 0..k {
            let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            self.feature_mean[j] = mean;
            self.feature_std[j] = if sd > 1e-12 { sd } else { 1.0 };
        }
    }

    pub fn forward(&self, set: ArrayView2<f64>) -> Array2<f64> {
        let raw = self.raw_features(set);
        Array2::from_shape_fn((1, self.k()), |(_, j)| {
            (raw[j] - self.feature_mean[j]) / self.feature_std[j]
        })
    }
}
