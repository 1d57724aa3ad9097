//! Set transformer encoder: one induced set attention block, pooling by
//! multihead attention, a set attention block over the pooled row and a
//! final linear readout.
//!
//! Attention blocks follow the layernorm-free form
//! `O = Q' + softmax(Q' K'^T / sqrt(dh)) V'` per head, then
//! `out = O + silu(fc_o(O))`.

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::Rng as _;

use crate::nn::linear::{silu, silu_backward, Linear};
use crate::nn::params::ParamTree;
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Mab {
    pub heads: usize,
    pub fc_q: Linear,
    pub fc_k: Linear,
    pub fc_v: Linear,
    pub fc_o: Linear,
}

pub struct MabCache {
    q_in: Array2<f64>,
    k_in: Array2<f64>,
    qp: Array2<f64>,
    kp: Array2<f64>,
    vp: Array2<f64>,
    attn: Vec<Array2<f64>>,
    o: Array2<f64>,
    r: Array2<f64>,
}

fn softmax_rows(m: &mut Array2<f64>) {
    for mut row in m.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
}

impl Mab {
    pub fn init(dim_q: usize, dim_k: usize, dim: usize, heads: usize, rng: &mut Rng) -> Self {
        Self {
            heads,
            fc_q: Linear::init(dim_q, dim, rng),
            fc_k: Linear::init(dim_k, dim, rng),
            fc_v: Linear::init(dim_k, dim, rng),
            fc_o: Linear::init(dim, dim, rng),
        }
    }

    pub fn zeros(dim_q: usize, dim_k: usize, dim: usize, heads: usize) -> Self {
        Self {
            heads,
            fc_q: Linear::zeros(dim_q, dim),
            fc_k: Linear::zeros(dim_k, dim),
            fc_v: Linear::zeros(dim_k, dim),
            fc_o: Linear::zeros(dim, dim),
        }
    }

    fn dim(&self) -> usize {
        self.fc_q.output_dim()
    }

    pub fn forward(&self, q: ArrayView2<f64>, k: ArrayView2<f64>) -> (Array2<f64>, MabCache) {
        let dim = self.dim();
        let dh = dim / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let qp = self.fc_q.forward(q);
        let kp = self.fc_k.forward(k);
        let vp = self.fc_v.forward(k);
        let mut o = qp.clone();
        let mut attn = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let mut a = qp.slice(cols).dot(&kp.slice(cols).t()) * scale;
            softmax_rows(&mut a);
            let mut oh = o.slice_mut(cols);
            oh += &a.dot(&vp.slice(cols));
            attn.push(a);
        }
        let r = self.fc_o.forward(o.view());
        let out = &o + &silu(&r);
        (
            out,
            MabCache {
                q_in: q.to_owned(),
                k_in: k.to_owned(),
                qp,
                kp,
                vp,
                attn,
                o,
                r,
            },
        )
    }

    /// Returns `(dL/dq, dL/dk)`.
    pub fn backward(&self, c: &MabCache, d_out: &Array2<f64>, grad: &mut Mab) -> (Array2<f64>, Array2<f64>) {
        let dim = self.dim();
        let dh = dim / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let d_r = silu_backward(&c.r, d_out);
        let mut d_o = self.fc_o.backward(c.o.view(), d_r.view(), &mut grad.fc_o);
        d_o += d_out;

        let mut d_qp = d_o.clone();
        let mut d_kp = Array2::zeros(c.kp.raw_dim());
        let mut d_vp = Array2::zeros(c.vp.raw_dim());
        for (h, a) in c.attn.iter().enumerate() {
            let cols = s![.., h * dh..(h + 1) * dh];
            let d_oh = d_o.slice(cols);
            let d_a = d_oh.dot(&c.vp.slice(cols).t());
            d_vp.slice_mut(cols).assign(&a.t().dot(&d_oh));
            // softmax backward, row-wise
            let row_dot = (&d_a * a).sum_axis(Axis(1)).insert_axis(Axis(1));
            let d_s = a * &(&d_a - &row_dot) * scale;
            let mut dq = d_qp.slice_mut(cols);
            dq += &d_s.dot(&c.kp.slice(cols));
            d_kp.slice_mut(cols).assign(&d_s.t().dot(&c.qp.slice(cols)));
        }
        let d_q = self.fc_q.backward(c.q_in.view(), d_qp.view(), &mut grad.fc_q);
        let mut d_k = self.fc_k.backward(c.k_in.view(), d_kp.view(), &mut grad.fc_k);
        d_k += &self.fc_v.backward(c.k_in.view(), d_vp.view(), &mut grad.fc_v);
        (d_q, d_k)
    }
}

impl ParamTree for Mab {
    fn tensors(&self) -> Vec<&[f64]> {
        [&self.fc_q, &self.fc_k, &self.fc_v, &self.fc_o]
            .into_iter()
            .flat_map(|l| l.tensors())
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        [&mut self.fc_q, &mut self.fc_k, &mut self.fc_v, &mut self.fc_o]
            .into_iter()
            .flat_map(|l| l.tensors_mut())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SetTransformer {
    /// `inducing x width` trainable inducing points.
    pub inducing: Array2<f64>,
    pub isab_pool: Mab,
    pub isab_expand: Mab,
    /// `1 x width` PMA seed.
    pub seed: Array2<f64>,
    pub pma: Mab,
    pub sab: Mab,
    pub out: Linear,
}

pub struct SetTransformerCache {
    pool: MabCache,
    expand: MabCache,
    pma: MabCache,
    sab: MabCache,
    sab_out: Array2<f64>,
}

fn xavier(rows: usize, cols: usize, rng: &mut Rng) -> Array2<f64> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..=bound))
}

impl SetTransformer {
    pub fn init(d: usize, width: usize, heads: usize, inducing: usize, k: usize, rng: &mut Rng) -> Self {
        Self {
            inducing: xavier(inducing, width, rng),
            isab_pool: Mab::init(width, d, width, heads, rng),
            isab_expand: Mab::init(d, width, width, heads, rng),
            seed: xavier(1, width, rng),
            pma: Mab::init(width, width, width, heads, rng),
            sab: Mab::init(width, width, width, heads, rng),
            out: Linear::init(width, k, rng),
        }
    }

    pub fn zeros(d: usize, width: usize, heads: usize, inducing: usize, k: usize) -> Self {
        Self {
            inducing: Array2::zeros((inducing, width)),
            isab_pool: Mab::zeros(width, d, width, heads),
            isab_expand: Mab::zeros(d, width, width, heads),
            seed: Array2::zeros((1, width)),
            pma: Mab::zeros(width, width, width, heads),
            sab: Mab::zeros(width, width, width, heads),
            out: Linear::zeros(width, k),
        }
    }

    pub fn width(&self) -> usize {
        self.inducing.ncols()
    }

    pub fn heads(&self) -> usize {
        self.pma.heads
    }

    pub fn num_inducing(&self) -> usize {
        self.inducing.nrows()
    }

    pub fn forward(&self, set: ArrayView2<f64>) -> (Array2<f64>, SetTransformerCache) {
        let (h, pool) = self.isab_pool.forward(self.inducing.view(), set);
        let (x1, expand) = self.isab_expand.forward(set, h.view());
        let (p, pma) = self.pma.forward(self.seed.view(), x1.view());
        let (q, sab) = self.sab.forward(p.view(), p.view());
        let z = self.out.forward(q.view());
        (
            z,
            SetTransformerCache {
                pool,
                expand,
                pma,
                sab,
                sab_out: q,
            },
        )
    }

    pub fn backward(&self, c: &SetTransformerCache, dz: &Array2<f64>, grad: &mut SetTransformer) {
        let d_q = self.out.backward(c.sab_out.view(), dz.view(), &mut grad.out);
        let (d_p1, d_p2) = self.sab.backward(&c.sab, &d_q, &mut grad.sab);
        let d_p = d_p1 + d_p2;
        let (d_seed, d_x1) = self.pma.backward(&c.pma, &d_p, &mut grad.pma);
        grad.seed += &d_seed;
        let (_, d_h) = self.isab_expand.backward(&c.expand, &d_x1, &mut grad.isab_expand);
        let (d_inducing, _) = self.isab_pool.backward(&c.pool, &d_h, &mut grad.isab_pool);
        grad.inducing += &d_inducing;
    }
}

impl ParamTree for SetTransformer {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut v = vec![self.inducing.as_slice().expect("standard layout")];
        v.extend(self.isab_pool.tensors());
        v.extend(self.isab_expand.tensors());
        v.push(self.seed.as_slice().expect("standard layout"));
        v.extend(self.pma.tensors());
        v.extend(self.sab.tensors());
        v.extend(self.out.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = vec![self.inducing.as_slice_mut().expect("standard layout")];
        v.extend(self.isab_pool.tensors_mut());
        v.extend(self.isab_expand.tensors_mut());
        v.push(self.seed.as_slice_mut().expect("standard layout"));
        v.extend(self.pma.tensors_mut());
        v.extend(self.sab.tensors_mut());
        v.extend(self.out.tensors_mut());
        v
    }
}
