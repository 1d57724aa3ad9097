use super::params::ParamTree;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Algorithm {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Algorithm {
    pub const ADAM: Algorithm = Algorithm::Adam {
        beta1: 0.9,
        beta2: 0.999,
        eps: 1e-8,
    };
}

/// Optimizer state; moment buffers are created lazily on the first step and
/// then must keep matching the parameter tree's shape signature.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub algorithm: Algorithm,
    pub lr: f64,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(algorithm: Algorithm, lr: f64) -> Self {
        Self {
            algorithm,
            lr,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn sgd(lr: f64) -> Self {
        Self::new(Algorithm::Sgd, lr)
    }

    pub fn adam(lr: f64) -> Self {
        Self::new(Algorithm::ADAM, lr)
    }

    pub fn first_moments(&self) -> &[Vec<f64>] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Vec<f64>] {
        &self.v
    }

    /// Apply one update. A non-finite gradient rejects the step and leaves
    /// both the parameters and the optimizer state untouched.
    pub fn step<P: ParamTree + ?Sized, G: ParamTree + ?Sized>(&mut self, params: &mut P, grads: &G) -> Result<()> {
        let sig = params.shape_signature();
        if sig != grads.shape_signature() {
            return Err(Error::Contract("gradient tree does not match parameter tree".into()));
        }
        if !grads.all_finite() {
            return Err(Error::NonFiniteGradient);
        }
        let g = grads.tensors();
        match self.algorithm {
            Algorithm::Sgd => {
                for (p, g) in params.tensors_mut().into_iter().zip(g) {
                    for (p, g) in p.iter_mut().zip(g) {
                        *p -= self.lr * g;
                    }
                }
            }
            Algorithm::Adam { beta1, beta2, eps } => {
                if self.m.is_empty() {
                    self.m = sig.iter().map(|&n| vec![0.0; n]).collect();
                    self.v = self.m.clone();
                } else if self.m.iter().map(Vec::len).ne(sig.iter().copied()) {
                    return Err(Error::Contract("optimizer moments do not match parameter tree".into()));
                }
                let t = (self.step + 1) as f64;
                let bc1 = 1.0 - beta1.powf(t);
                let bc2 = 1.0 - beta2.powf(t);
                for (((p, g), m), v) in params
                    .tensors_mut()
                    .into_iter()
                    .zip(g)
                    .zip(self.m.iter_mut())
                    .zip(self.v.iter_mut())
                {
                    for i in 0..p.len() {
                        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                        let m_hat = m[i] / bc1;
                        let v_hat = v[i] / bc2;
                        p[i] -= self.lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
        self.step += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Clone)]
    struct Vec1(Vec<f64>);

    impl ParamTree for Vec1 {
        fn tensors(&self) -> Vec<&[f64]> {
            vec![&self.0]
        }
        fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
            vec![&mut self.0]
        }
    }

    #[test]
    fn sgd_step_is_exact() {
        let mut p = Vec1(vec![1.0]);
        let mut opt = OptimizerState::sgd(0.1);
        opt.step(&mut p, &Vec1(vec![2.0])).unwrap();
        assert_eq!(p.0, vec![0.8]);
        assert_eq!(opt.step, 1);
    }

    #[test]
    fn zero_gradient_leaves_params_and_decays_moments() {
        let mut p = Vec1(vec![1.0, -2.0]);
        let mut opt = OptimizerState::adam(1e-3);
        opt.step(&mut p, &Vec1(vec![0.0, 0.0])).unwrap();
        assert_eq!(p.0, vec![1.0, -2.0]);

        opt.step(&mut p, &Vec1(vec![1.0, 1.0])).unwrap();
        let m_before = opt.first_moments()[0][0];
        let v_before = opt.second_moments()[0][0];
        opt.step(&mut p, &Vec1(vec![0.0, 0.0])).unwrap();
        assert!((opt.first_moments()[0][0] - 0.9 * m_before).abs() < 1e-15);
        assert!((opt.second_moments()[0][0] - 0.999 * v_before).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_is_sign_scaled() {
        // step 1: m_hat = g, v_hat = g^2, update = -lr * g / (|g| + eps)
        for g in [1e-3, 0.5, 40.0, -7.0] {
            let mut p = Vec1(vec![0.0]);
            let mut opt = OptimizerState::adam(0.01);
            opt.step(&mut p, &Vec1(vec![g])).unwrap();
            let expected = -0.01 * g / (g.abs() + 1e-8);
            assert!((p.0[0] - expected).abs() < 1e-15, "g={g}: {}", p.0[0]);
            assert!((p.0[0].abs() - 0.01).abs() < 1e-6);
        }
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut p = Vec1(vec![1.0]);
        let mut opt = OptimizerState::adam(0.1);
        assert!(matches!(opt.step(&mut p, &Vec1(vec![f64::NAN])), Err(Error::NonFiniteGradient)));
        assert_eq!(p.0, vec![1.0]);
        assert_eq!(opt.step, 0);
        assert!(opt.step(&mut p, &Vec1(vec![1.0, 2.0])).is_err());
    }
}
