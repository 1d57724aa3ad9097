//! Squared-error training loss and its exact reverse-mode gradient with
//! respect to both the predictor and the set encoder.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::bundle::{Gradients, ModelParams};
use super::params::zeros_like;
use crate::error::{Error, Result};

/// Per-element network inputs and regression targets, all in normalized
/// units. `t` is network time in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct TrainBatch {
    pub x_t: Array2<f64>,
    pub t: Array1<f64>,
    pub y: Array2<f64>,
    pub target: Array2<f64>,
}

impl TrainBatch {
    pub fn len(&self) -> usize {
        self.x_t.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x_t.nrows() == 0
    }

    /// The batch with every element repeated `times` times.
    pub fn repeated(&self, times: usize) -> TrainBatch {
        let idx: Vec<usize> = (0..times).flat_map(|_| 0..self.len()).collect();
        TrainBatch {
            x_t: self.x_t.select(Axis(0), &idx),
            t: self.t.select(Axis(0), &idx),
            y: self.y.select(Axis(0), &idx),
            target: self.target.select(Axis(0), &idx),
        }
    }
}

/// The condition shared by every element of a batch.
#[derive(Debug, Clone, Copy)]
pub enum Condition<'a> {
    /// No condition (`k = 0`).
    Empty,
    /// A fixed vector such as oracle prior parameters.
    Vector(ArrayView1<'a, f64>),
    /// A normalized observation set routed through the encoder.
    Set(ArrayView2<'a, f64>),
}

/// `sum_i |eps(x_t_i, t_i, y_i, z) - target_i|^2` and its gradient.
pub fn loss_and_grad(params: &ModelParams, batch: &TrainBatch, cond: Condition) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(Error::Contract("empty training batch".into()));
    }
    let k = params.eps.config.k;
    let mut grads = zeros_like(params);

    let (z, enc_cache) = match cond {
        Condition::Empty => (Array2::zeros((1, 0)), None),
        Condition::Vector(v) => (v.to_owned().insert_axis(Axis(0)), None),
        Condition::Set(set) => {
            let enc = params
                .enc
                .as_ref()
                .ok_or_else(|| Error::Contract("set condition without an encoder".into()))?;
            let (z, cache) = enc.forward_cached(set)?;
            (z, Some(cache))
        }
    };
    if z.ncols() != k {
        return Err(Error::Contract(format!("condition width {} != k = {k}", z.ncols())));
    }
    if batch.target.dim() != batch.x_t.dim() {
        return Err(Error::Contract("target shape differs from x_t".into()));
    }

    let (pred, cache) = params
        .eps
        .forward_cached(batch.x_t.view(), batch.t.view(), batch.y.view(), z.view())?;
    let resid = &pred - &batch.target;
    let per_element = resid.mapv(|r| r * r).sum_axis(Axis(1));
    if let Some(index) = per_element.iter().position(|l| !l.is_finite()) {
        return Err(Error::NonFiniteLoss { index, step: None });
    }
    let loss = per_element.sum();

    let d_out = resid * 2.0;
    let d_input = params.eps.backward(&cache, &d_out, &mut grads.eps);

    if let (Some(cache), Some(enc), Some(genc)) = (enc_cache, params.enc.as_ref(), grads.enc.as_mut()) {
        let dz = params
            .eps
            .z_columns(&d_input)
            .sum_axis(Axis(0))
            .insert_axis(Axis(0));
        enc.backward(&cache, &dz, genc);
    }
    Ok((loss, grads))
}

/// Loss only, without building gradients.
pub fn loss(params: &ModelParams, batch: &TrainBatch, cond: Condition) -> Result<f64> {
    let k = params.eps.config.k;
    let z = match cond {
        Condition::Empty => Array2::zeros((1, 0)),
        Condition::Vector(v) => v.to_owned().insert_axis(Axis(0)),
        Condition::Set(set) => {
            let enc = params
                .enc
                .as_ref()
                .ok_or_else(|| Error::Contract("set condition without an encoder".into()))?;
            enc.forward(set)?.insert_axis(Axis(0))
        }
    };
    if z.ncols() != k {
        return Err(Error::Contract(format!("condition width {} != k = {k}", z.ncols())));
    }
    let pred = params
        .eps
        .forward_batch(batch.x_t.view(), batch.t.view(), batch.y.view(), z.view())?;
    Ok((&pred - &batch.target).mapv(|r| r * r).sum())
}
