use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand_distr::{Distribution, StandardNormal};

use super::schedule::{make_linear_schedule, NoiseSchedule};
use crate::error::{Error, Result};
use crate::nn::{GenerativeKind, ModelBundle};
use crate::rng::Rng;

/// Rows pushed through the network at once.
const CHUNK: usize = 2048;

pub fn schedule_for(kind: &GenerativeKind) -> Result<NoiseSchedule> {
    match *kind {
        GenerativeKind::Ddpm {
            steps,
            beta1,
            beta_t,
            variance,
        } => Ok(make_linear_schedule(steps, beta1, beta_t)?.with_variance(variance)),
        GenerativeKind::Fm { .. } => Err(Error::Contract("flow-matching models have no noise schedule".into())),
    }
}

/// Number of Euler steps for `dt`, which must divide 1.
pub fn euler_steps(dt: f64) -> Result<usize> {
    if !(dt > 0.0 && dt <= 1.0) {
        return Err(Error::Config(format!("dt must lie in (0, 1], got {dt}")));
    }
    let n = (1.0 / dt).round();
    if (n * dt - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("1/dt must be an integer, got dt = {dt}")));
    }
    Ok(n as usize)
}

fn normal_row(rng: &mut Rng, d: usize) -> impl Iterator<Item = f64> + '_ {
    (0..d).map(move |_| StandardNormal.sample(rng))
}

fn check_finite(x: &Array2<f64>, step: usize) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::SamplerDivergence { step })
    }
}

/// Sample one posterior draw per row of `ys` (raw units), all sharing `z`.
/// Row `i` consumes only `rngs[i]`, so results do not depend on batching.
pub fn sample_rows(bundle: &ModelBundle, ys: ArrayView2<f64>, z: ArrayView1<f64>, rngs: &mut [Rng]) -> Result<Array2<f64>> {
    let d = bundle.d();
    if ys.ncols() != d {
        return Err(Error::Contract(format!("observations have dimension {}, model expects {d}", ys.ncols())));
    }
    if rngs.len() != ys.nrows() {
        return Err(Error::Contract("one random stream per observation is required".into()));
    }
    bundle.check_condition(z)?;
    let z_row = z.insert_axis(Axis(0));
    let mut out = Array2::zeros((ys.nrows(), d));
    let sched = match bundle.kind {
        GenerativeKind::Ddpm { .. } => Some(schedule_for(&bundle.kind)?),
        GenerativeKind::Fm { .. } => None,
    };
    let mut start = 0;
    for chunk in rngs.chunks_mut(CHUNK) {
        let end = start + chunk.len();
        let y = bundle.norm.normalize_y(ys.slice(ndarray::s![start..end, ..]));
        let x = match (&bundle.kind, &sched) {
            (GenerativeKind::Ddpm { .. }, Some(s)) => ddpm_chunk(bundle, s, y.view(), z_row, chunk)?,
            (GenerativeKind::Fm { dt }, _) => fm_chunk(bundle, *dt, y.view(), z_row, chunk)?,
            _ => unreachable!(),
        };
        out.slice_mut(ndarray::s![start..end, ..])
            .assign(&bundle.norm.denormalize_x(x.view()));
        start = end;
    }
    Ok(out)
}

fn initial_noise(rngs: &mut [Rng], d: usize) -> Array2<f64> {
    let mut x = Array2::zeros((rngs.len(), d));
    for (mut row, rng) in x.rows_mut().into_iter().zip(rngs.iter_mut()) {
        for (v, n) in row.iter_mut().zip(normal_row(rng, d)) {
            *v = n;
        }
    }
    x
}

fn ddpm_chunk(
    bundle: &ModelBundle,
    sched: &NoiseSchedule,
    y: ArrayView2<f64>,
    z: ArrayView2<f64>,
    rngs: &mut [Rng],
) -> Result<Array2<f64>> {
    let d = bundle.d();
    let mut x = initial_noise(rngs, d);
    let big_t = sched.steps();
    for t in (1..=big_t).rev() {
        let time = Array1::from_elem(x.nrows(), bundle.network_time(t as f64));
        let eps = bundle.params.eps.forward_batch(x.view(), time.view(), y, z)?;
        let coef = sched.beta(t) / (1.0 - sched.alpha_bar(t)).sqrt();
        let inv_sqrt_alpha = 1.0 / sched.alpha(t).sqrt();
        x.zip_mut_with(&eps, |xv, &e| *xv = (*xv - coef * e) * inv_sqrt_alpha);
        if t > 1 {
            let sigma = sched.sigma(t);
            for (mut row, rng) in x.rows_mut().into_iter().zip(rngs.iter_mut()) {
                for (v, n) in row.iter_mut().zip(normal_row(rng, d)) {
                    *v += sigma * n;
                }
            }
        }
        check_finite(&x, t)?;
    }
    Ok(x)
}

fn fm_chunk(bundle: &ModelBundle, dt: f64, y: ArrayView2<f64>, z: ArrayView2<f64>, rngs: &mut [Rng]) -> Result<Array2<f64>> {
    let steps = euler_steps(dt)?;
    let mut x = initial_noise(rngs, bundle.d());
    for i in 1..=steps {
        // Velocity is queried at the pre-step state with the incremented time.
        let t = i as f64 * dt;
        let time = Array1::from_elem(x.nrows(), bundle.network_time(t));
        let v = bundle.params.eps.forward_batch(x.view(), time.view(), y, z)?;
        x.scaled_add(dt, &v);
        check_finite(&x, i)?;
    }
    Ok(x)
}

fn sample_one(bundle: &ModelBundle, y: ArrayView1<f64>, z: ArrayView1<f64>, rng: &mut Rng) -> Result<Array1<f64>> {
    let out = sample_rows(bundle, y.insert_axis(Axis(0)), z, std::slice::from_mut(rng))?;
    Ok(out.row(0).to_owned())
}

/// One reverse-diffusion draw for observation `y` (raw units).
pub fn ddpm_sample(bundle: &ModelBundle, y: ArrayView1<f64>, z: ArrayView1<f64>, rng: &mut Rng) -> Result<Array1<f64>> {
    if !matches!(bundle.kind, GenerativeKind::Ddpm { .. }) {
        return Err(Error::Contract("ddpm_sample needs a DDPM model".into()));
    }
    sample_one(bundle, y, z, rng)
}

/// One Euler flow draw for observation `y`. `dt` overrides the model's step.
pub fn fm_sample(bundle: &ModelBundle, y: ArrayView1<f64>, z: ArrayView1<f64>, rng: &mut Rng, dt: Option<f64>) -> Result<Array1<f64>> {
    let GenerativeKind::Fm { dt: own } = bundle.kind else {
        return Err(Error::Contract("fm_sample needs a flow-matching model".into()));
    };
    match dt {
        Some(dt) if dt != own => {
            let mut b = bundle.clone();
            b.kind = GenerativeKind::Fm { dt };
            sample_one(&b, y, z, rng)
        }
        _ => sample_one(bundle, y, z, rng),
    }
}
