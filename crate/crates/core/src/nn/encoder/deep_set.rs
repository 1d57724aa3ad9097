use ndarray::{Array2, ArrayView2, Axis};

use crate::nn::linear::{silu, silu_backward, Linear};
use crate::nn::params::ParamTree;
use crate::rng::Rng;

/// Mean-pooled deep set: `rho(mean_j phi(y_j))`.
///
/// `phi` is `d -> width -> width` and `rho` is `width -> width -> k`, both
/// with SiLU between (and after) the hidden layers of `phi`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeepSet {
    pub phi1: Linear,
    pub phi2: Linear,
    pub rho1: Linear,
    pub rho2: Linear,
}

pub struct DeepSetCache {
    set: Array2<f64>,
    p1: Array2<f64>,
    a1: Array2<f64>,
    p2: Array2<f64>,
    pooled: Array2<f64>,
    q1: Array2<f64>,
    b1: Array2<f64>,
}

impl DeepSet {
    pub fn init(d: usize, width: usize, k: usize, rng: &mut Rng) -> Self {
        Self {
            phi1: Linear::init(d, width, rng),
            phi2: Linear::init(width, width, rng),
            rho1: Linear::init(width, width, rng),
            rho2: Linear::init(width, k, rng),
        }
    }

    pub fn zeros(d: usize, width: usize, k: usize) -> Self {
        Self {
            phi1: Linear::zeros(d, width),
            phi2: Linear::zeros(width, width),
            rho1: Linear::zeros(width, width),
            rho2: Linear::zeros(width, k),
        }
    }

    pub fn width(&self) -> usize {
        self.phi1.output_dim()
    }

    /// Per-element embedding before pooling.
    pub fn embed(&self, set: ArrayView2<f64>) -> Array2<f64> {
        silu(&self.phi2.forward(silu(&self.phi1.forward(set)).view()))
    }

    /// Post-pool map applied to a `1 x width` pooled row.
    pub fn readout(&self, pooled: ArrayView2<f64>) -> Array2<f64> {
        self.rho2.forward(silu(&self.rho1.forward(pooled)).view())
    }

    pub fn forward(&self, set: ArrayView2<f64>) -> (Array2<f64>, DeepSetCache) {
        let p1 = self.phi1.forward(set);
        let a1 = silu(&p1);
        let p2 = self.phi2.forward(a1.view());
        let a2 = silu(&p2);
        let pooled = a2.mean_axis(Axis(0)).expect("non-empty set").insert_axis(Axis(0));
        let q1 = self.rho1.forward(pooled.view());
        let b1 = silu(&q1);
        let z = self.rho2.forward(b1.view());
        (
            z,
            DeepSetCache {
                set: set.to_owned(),
                p1,
                a1,
                p2,
                pooled,
                q1,
                b1,
            },
        )
    }

    pub fn backward(&self, cache: &DeepSetCache, dz: &Array2<f64>, grad: &mut DeepSet) {
        let n = cache.set.nrows() as f64;
        let d_b1 = self.rho2.backward(cache.b1.view(), dz.view(), &mut grad.rho2);
        let d_q1 = silu_backward(&cache.q1, &d_b1);
        let d_pooled = self.rho1.backward(cache.pooled.view(), d_q1.view(), &mut grad.rho1) / n;
        let d_a2 = d_pooled
            .broadcast(cache.p2.raw_dim())
            .expect("one row")
            .to_owned();
        let d_p2 = silu_backward(&cache.p2, &d_a2);
        let d_a1 = self.phi2.backward(cache.a1.view(), d_p2.view(), &mut grad.phi2);
        let d_p1 = silu_backward(&cache.p1, &d_a1);
        self.phi1.accumulate(cache.set.view(), d_p1.view(), &mut grad.phi1);
    }
}

impl ParamTree for DeepSet {
    fn tensors(&self) -> Vec<&[f64]> {
        [&self.phi1, &self.phi2, &self.rho1, &self.rho2]
            .into_iter()
            .flat_map(|l| l.tensors())
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        [&mut self.phi1, &mut self.phi2, &mut self.rho1, &mut self.rho2]
            .into_iter()
            .flat_map(|l| l.tensors_mut())
            .collect()
    }
}
