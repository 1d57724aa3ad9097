//! The noise / velocity predictor.
//!
//! ```text
//! u  = W_in [x_t, y, z] + b_in + time2(silu(time1(t)))
//! a0 = silu(u)
//! h1 = silu(hidden1(a0)),  h2 = silu(hidden2(h1))
//! out = output(h2 + a0)
//! ```
//!
//! `t` is always a normalized time in `[0, 1]`.

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::linear::{silu, silu_backward, Linear};
use super::params::ParamTree;
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpsNetConfig {
    pub d: usize,
    pub k: usize,
    pub hidden: usize,
}

impl EpsNetConfig {
    pub fn input_width(&self) -> usize {
        2 * self.d + self.k
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpsNet {
    pub config: EpsNetConfig,
    pub input: Linear,
    pub time1: Linear,
    pub time2: Linear,
    pub hidden1: Linear,
    pub hidden2: Linear,
    pub output: Linear,
}

/// Activations kept from the forward pass for backpropagation.
pub struct EpsCache {
    input: Array2<f64>,
    time: Array2<f64>,
    time_pre: Array2<f64>,
    time_act: Array2<f64>,
    u: Array2<f64>,
    a0: Array2<f64>,
    p1: Array2<f64>,
    h1: Array2<f64>,
    p2: Array2<f64>,
    skip: Array2<f64>,
}

impl EpsNet {
    pub fn zeros(config: EpsNetConfig) -> Self {
        let h = config.hidden;
        Self {
            config,
            input: Linear::zeros(config.input_width(), h),
            time1: Linear::zeros(1, h),
            time2: Linear::zeros(h, h),
            hidden1: Linear::zeros(h, h),
            hidden2: Linear::zeros(h, h),
            output: Linear::zeros(h, config.d),
        }
    }

    pub fn init(config: EpsNetConfig, rng: &mut Rng) -> Self {
        let h = config.hidden;
        Self {
            config,
            input: Linear::init(config.input_width(), h, rng),
            time1: Linear::init(1, h, rng),
            time2: Linear::init(h, h, rng),
            hidden1: Linear::init(h, h, rng),
            hidden2: Linear::init(h, h, rng),
            output: Linear::init(h, config.d, rng),
        }
    }

    fn check_shapes(&self, x_t: &ArrayView2<f64>, t: &ArrayView1<f64>, y: &ArrayView2<f64>, z: &ArrayView2<f64>) -> Result<()> {
        let c = self.config;
        let b = x_t.nrows();
        let ok = x_t.ncols() == c.d
            && y.ncols() == c.d
            && y.nrows() == b
            && t.len() == b
            && z.ncols() == c.k
            && (z.nrows() == 1 || z.nrows() == b);
        if !ok || b == 0 {
            return Err(Error::Contract(format!(
                "eps net (d={}, k={}) got x_t {:?}, t {}, y {:?}, z {:?}",
                c.d,
                c.k,
                x_t.dim(),
                t.len(),
                y.dim(),
                z.dim()
            )));
        }
        Ok(())
    }

    /// Batched forward pass. `z` has either one row (shared) or one row per
    /// batch element.
    pub fn forward_batch(
        &self,
        x_t: ArrayView2<f64>,
        t: ArrayView1<f64>,
        y: ArrayView2<f64>,
        z: ArrayView2<f64>,
    ) -> Result<Array2<f64>> {
        Ok(self.forward_cached(x_t, t, y, z)?.0)
    }

    pub fn forward_cached(
        &self,
        x_t: ArrayView2<f64>,
        t: ArrayView1<f64>,
        y: ArrayView2<f64>,
        z: ArrayView2<f64>,
    ) -> Result<(Array2<f64>, EpsCache)> {
        self.check_shapes(&x_t, &t, &y, &z)?;
        let b = x_t.nrows();
        let z_full = if z.nrows() == b {
            z.to_owned()
        } else {
            z.broadcast((b, self.config.k)).expect("one row").to_owned()
        };
        let input = concatenate(Axis(1), &[x_t, y, z_full.view()]).expect("row counts match");
        let time = t.to_owned().insert_axis(Axis(1));
        let time_pre = self.time1.forward(time.view());
        let time_act = silu(&time_pre);
        let mut u = self.input.forward(input.view());
        u += &self.time2.forward(time_act.view());
        let a0 = silu(&u);
        let p1 = self.hidden1.forward(a0.view());
        let h1 = silu(&p1);
        let p2 = self.hidden2.forward(h1.view());
        let mut skip = silu(&p2);
        skip += &a0;
        let out = self.output.forward(skip.view());
        Ok((
            out,
            EpsCache {
                input,
                time,
                time_pre,
                time_act,
                u,
                a0,
                p1,
                h1,
                p2,
                skip,
            },
        ))
    }

    /// Backpropagate `d_out` and return `dL/d[x_t, y, z]`.
    pub fn backward(&self, cache: &EpsCache, d_out: &Array2<f64>, grad: &mut EpsNet) -> Array2<f64> {
        let d_skip = self.output.backward(cache.skip.view(), d_out.view(), &mut grad.output);
        let d_p2 = silu_backward(&cache.p2, &d_skip);
        let d_h1 = self.hidden2.backward(cache.h1.view(), d_p2.view(), &mut grad.hidden2);
        let d_p1 = silu_backward(&cache.p1, &d_h1);
        let mut d_a0 = self.hidden1.backward(cache.a0.view(), d_p1.view(), &mut grad.hidden1);
        d_a0 += &d_skip;
        let d_u = silu_backward(&cache.u, &d_a0);
        let d_time_act = self.time2.backward(cache.time_act.view(), d_u.view(), &mut grad.time2);
        let d_time_pre = silu_backward(&cache.time_pre, &d_time_act);
        self.time1.accumulate(cache.time.view(), d_time_pre.view(), &mut grad.time1);
        self.input.backward(cache.input.view(), d_u.view(), &mut grad.input)
    }

    /// The slice of an input gradient that belongs to the `z` columns.
    pub fn z_columns<'a>(&self, d_input: &'a Array2<f64>) -> ArrayView2<'a, f64> {
        let d = self.config.d;
        d_input.slice(s![.., 2 * d..])
    }

    /// Single-vector convenience wrapper.
    pub fn forward(
        &self,
        x_t: ArrayView1<f64>,
        t: f64,
        y: ArrayView1<f64>,
        z: ArrayView1<f64>,
    ) -> Result<Array1<f64>> {
        let out = self.forward_batch(
            x_t.insert_axis(Axis(0)),
            ndarray::aview1(&[t]),
            y.insert_axis(Axis(0)),
            z.insert_axis(Axis(0)),
        )?;
        Ok(out.row(0).to_owned())
    }
}

impl ParamTree for EpsNet {
    fn tensors(&self) -> Vec<&[f64]> {
        [&self.input, &self.time1, &self.time2, &self.hidden1, &self.hidden2, &self.output]
            .into_iter()
            .flat_map(|l| l.tensors())
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        [
            &mut self.input,
            &mut self.time1,
            &mut self.time2,
            &mut self.hidden1,
            &mut self.hidden2,
            &mut self.output,
        ]
        .into_iter()
        .flat_map(|l| l.tensors_mut())
        .collect()
    }
}
