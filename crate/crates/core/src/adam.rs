//! Adam optimizer with bias correction.

use crate::error::{CoreError, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 0.0005, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig { lr, ..Default::default() }
    }
}

/// First/second moment accumulators, one pair per parameter tensor.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(params: &[&Tensor], config: AdamConfig) -> Self {
        AdamState {
            step: 0,
            m: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            config,
        }
    }

    /// One descent step in place. Gradients must align with the parameters;
    /// a NaN gradient aborts before anything is mutated.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(CoreError::Contract(format!(
                "adam_step: {} params, {} grads, state for {}",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() {
                return Err(CoreError::shape(
                    "adam_step",
                    format!("param {} is {:?}, grad {:?}", i, p.shape(), g.shape()),
                ));
            }
            if !g.all_finite() {
                return Err(CoreError::Numeric(format!(
                    "adam_step: non-finite gradient for parameter {i}"
                )));
            }
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for ((p, g), (m, v)) in
            params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let pd = p.data_mut();
            let md = m.data_mut();
            let vd = v.data_mut();
            for k in 0..pd.len() {
                let gk = g.data()[k];
                md[k] = beta1 * md[k] + (1.0 - beta1) * gk;
                vd[k] = beta2 * vd[k] + (1.0 - beta2) * gk * gk;
                let mhat = md[k] / bc1;
                let vhat = vd[k] / bc2;
                pd[k] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut p = Tensor::vector(vec![1.0, -2.0, 3.0]);
        let before = p.clone();
        let mut state = AdamState::new(&[&p], AdamConfig::default());
        let g = Tensor::zeros(&[3]);
        state.step(&mut [&mut p], &[g]).unwrap();
        assert_eq!(p, before);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn single_step_matches_scripted_trace() {
        // minimize f(theta) = theta^2 from theta = 1 with lr 0.1
        let mut theta = Tensor::scalar(1.0);
        let grad = Tensor::scalar(2.0 * theta.item());
        let cfg = AdamConfig { lr: 0.1, beta1: 0.9, beta2: 0.999, eps: 1e-8 };
        let mut state = AdamState::new(&[&theta], cfg);
        state.step(&mut [&mut theta], &[grad]).unwrap();

        // independent straight-line trace of the same update
        let g = 2.0_f64;
        let m = (1.0 - 0.9) * g;
        let v = (1.0 - 0.999) * g * g;
        let mhat = m / (1.0 - 0.9_f64.powi(1));
        let vhat = v / (1.0 - 0.999_f64.powi(1));
        let expect = 1.0 - 0.1 * mhat / (vhat.sqrt() + 1e-8);

        assert!((theta.item() - expect).abs() < 1e-12, "{} vs {}", theta.item(), expect);
        assert!((theta.item() - 0.900_000_000_5).abs() < 1e-9);
    }

    #[test]
    fn nan_gradient_aborts_without_mutation() {
        let mut p = Tensor::vector(vec![1.0, 2.0]);
        let mut state = AdamState::new(&[&p], AdamConfig::default());
        let bad = Tensor::vector(vec![f64::NAN, 0.0]);
        let err = state.step(&mut [&mut p], &[bad]);
        assert!(matches!(err, Err(CoreError::Numeric(_))));
        assert_eq!(p.data(), &[1.0, 2.0]);
        assert_eq!(state.step, 0);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut p = Tensor::vector(vec![1.0, 2.0]);
        let mut state = AdamState::new(&[&p], AdamConfig::default());
        let g = Tensor::vector(vec![1.0, 2.0, 3.0]);
        assert!(state.step(&mut [&mut p], &[g]).is_err());
    }
}
