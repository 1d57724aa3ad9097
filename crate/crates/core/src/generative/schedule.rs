use ndarray::{Array1, ArrayView1};

use crate::error::{Error, Result};
use crate::nn::VarianceKind;

/// DDPM tables. Index `t - 1` holds step `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    pub beta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub alpha_bar: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl NoiseSchedule {
    pub fn steps(&self) -> usize {
        self.beta.len()
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t - 1]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t - 1]
    }

    pub fn sigma(&self, t: usize) -> f64 {
        self.sigma[t - 1]
    }

    /// Switch the reverse-process std to `sqrt(beta_t)`.
    pub fn with_variance(mut self, kind: VarianceKind) -> Self {
        if kind == VarianceKind::Beta {
            self.sigma = self.beta.iter().map(|b| b.sqrt()).collect();
        }
        self
    }
}

/// Linear `beta` from `beta1` to `beta_t` inclusive, with
/// `sigma_t^2 = (1 - abar_{t-1}) / (1 - abar_t) * beta_t` and `abar_0 = 1`.
pub fn make_linear_schedule(steps: usize, beta1: f64, beta_t: f64) -> Result<NoiseSchedule> {
    if steps == 0 {
        return Err(Error::Config("schedule needs at least one step".into()));
    }
    if !(beta1 > 0.0 && beta1 <= beta_t && beta_t < 1.0) {
        return Err(Error::Config(format!(
            "need 0 < beta1 <= betaT < 1, got beta1 = {beta1}, betaT = {beta_t}"
        )));
    }
    let beta: Vec<f64> = (0..steps)
        .map(|i| {
            if steps == 1 {
                beta1
            } else {
                beta1 + (beta_t - beta1) * i as f64 / (steps - 1) as f64
            }
        })
        .collect();
    let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
    let mut alpha_bar = Vec::with_capacity(steps);
    let mut acc = 1.0;
    for a in &alpha {
        acc *= a;
        alpha_bar.push(acc);
    }
    let sigma = (0..steps)
        .map(|i| {
            let prev = if i == 0 { 1.0 } else { alpha_bar[i - 1] };
            ((1.0 - prev) / (1.0 - alpha_bar[i]) * beta[i]).sqrt()
        })
        .collect();
    Ok(NoiseSchedule {
        beta,
        alpha,
        alpha_bar,
        sigma,
    })
}

/// `(sqrt(abar_t) x + sqrt(1 - abar_t) xi, xi)`.
pub fn ddpm_training_example(
    x: ArrayView1<f64>,
    t: usize,
    xi: ArrayView1<f64>,
    sched: &NoiseSchedule,
) -> Result<(Array1<f64>, Array1<f64>)> {
    if t == 0 || t > sched.steps() {
        return Err(Error::Contract(format!("step {t} outside 1..={}", sched.steps())));
    }
    let ab = sched.alpha_bar(t);
    let x_t = &x * ab.sqrt() + &xi * (1.0 - ab).sqrt();
    Ok((x_t, xi.to_owned()))
}

/// `(t x + (1 - t) xi, x - xi)`.
pub fn fm_training_example(x: ArrayView1<f64>, xi: ArrayView1<f64>, t: f64) -> Result<(Array1<f64>, Array1<f64>)> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Contract(format!("interpolation time {t} outside [0, 1]")));
    }
    Ok((&x * t + &xi * (1.0 - t), &x - &xi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn single_step_schedule() {
        let s = make_linear_schedule(1, 0.3, 0.5).unwrap();
        assert_eq!(s.beta, vec![0.3]);
        assert_eq!(s.alpha_bar, vec![0.7]);
        assert_eq!(s.sigma, vec![0.0]);
    }

    #[test]
    fn default_schedule_terminal_alpha_bar() {
        let s = make_linear_schedule(100, 1e-4, 0.02).unwrap();
        // Independent product over an explicit linspace.
        let mut p = 1.0;
        for i in 0..100 {
            p *= 1.0 - (1e-4 + (0.02 - 1e-4) * f64::from(i) / 99.0);
        }
        assert!((s.alpha_bar(100) - p).abs() < 1e-14);
        assert!((s.alpha_bar(100) - 0.365).abs() < 0.005);
        assert_eq!(s.beta(1), 1e-4);
        assert!((s.beta(100) - 0.02).abs() < 1e-15);
        assert_eq!(s.sigma(1), 0.0);
        assert!(s.alpha_bar.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn bad_ranges() {
        assert!(make_linear_schedule(0, 0.1, 0.2).is_err());
        assert!(make_linear_schedule(10, 0.3, 0.2).is_err());
        assert!(make_linear_schedule(10, 0.0, 0.2).is_err());
        assert!(make_linear_schedule(10, 0.1, 1.0).is_err());
    }

    #[test]
    fn beta_variance_option() {
        let s = make_linear_schedule(5, 0.01, 0.04).unwrap().with_variance(VarianceKind::Beta);
        assert_eq!(s.sigma[0], 0.1);
    }

    #[test]
    fn ddpm_example_values() {
        let s = make_linear_schedule(100, 1e-4, 0.02).unwrap();
        let (x_t, target) = ddpm_training_example(array![1.0, 0.0].view(), 1, array![1.0, 1.0].view(), &s).unwrap();
        let want0 = 0.9999_f64.sqrt() + 0.01;
        assert!((x_t[0] - want0).abs() < 1e-12);
        assert!((x_t[1] - 0.01).abs() < 1e-12);
        assert_eq!(target, array![1.0, 1.0]);

        let (x_t, _) = ddpm_training_example(array![3.0, -2.0].view(), 50, array![0.0, 0.0].view(), &s).unwrap();
        let r = s.alpha_bar(50).sqrt();
        assert_eq!(x_t, array![3.0 * r, -2.0 * r]);
        assert!(ddpm_training_example(array![0.0].view(), 0, array![0.0].view(), &s).is_err());
        assert!(ddpm_training_example(array![0.0].view(), 101, array![0.0].view(), &s).is_err());
    }

    #[test]
    fn fm_example_values() {
        let (x_t, target) = fm_training_example(array![2.0, 0.0].view(), array![0.0, 2.0].view(), 0.25).unwrap();
        assert_eq!(x_t, array![0.5, 1.5]);
        assert_eq!(target, array![2.0, -2.0]);
        let x = array![0.3, -0.7];
        for t in [0.0, 0.4, 1.0] {
            let (x_t, target) = fm_training_example(x.view(), x.view(), t).unwrap();
            assert!((&x_t - &x).iter().all(|v| v.abs() < 1e-15));
            assert_eq!(target, array![0.0, 0.0]);
        }
        assert!(fm_training_example(x.view(), x.view(), 1.5).is_err());
    }
}
