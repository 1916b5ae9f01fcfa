use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates for a fixed list of tensors.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    t: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(cfg: AdamConfig, shapes: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let (m, v): (Vec<_>, Vec<_>) = shapes
            .into_iter()
            .map(|(r, c)| (Tensor::zeros(r, c), Tensor::zeros(r, c)))
            .unzip();
        Adam { cfg, t: 0, m, v }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One bias-corrected update of every parameter in place.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::invalid(format!(
                "optimizer tracks {} tensors, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.t += 1;
        let AdamConfig { beta1, beta2, eps } = self.cfg;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            if p.shape() != g.shape() || p.shape() != self.m[i].shape() {
                return Err(Error::shape(
                    "adam",
                    format!("parameter {:?}, gradient {:?}", p.shape(), g.shape()),
                ));
            }
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for (((x, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let mhat = *mi / c1;
                let vhat = *vi / c2;
                *x -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(grads: &[f64], lr: f64) -> Tensor {
        let mut p = Tensor::row(&[1.0, -2.0, 0.5]);
        let mut opt = Adam::new(AdamConfig::default(), [p.shape()]);
        for &g in grads {
            let gt = Tensor::row(&[g, -g, 2.0 * g]);
            opt.step(&mut [&mut p], &[gt], lr).unwrap();
        }
        p
    }

    #[test]
    fn zero_gradient_leaves_params() {
        assert_eq!(run(&[0.0], 0.01).data(), &[1.0, -2.0, 0.5]);
    }

    #[test]
    fn first_step_is_signed_lr() {
        let g: [f64; 3] = [0.3, -0.3, 0.6];
        let p = run(&[0.3], 0.01);
        let start = [1.0, -2.0, 0.5];
        for i in 0..3 {
            let expect = start[i] - 0.01 * g[i] / (g[i].abs() + 1e-8);
            assert!((p.data()[i] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn deterministic_and_lr_zero_identity() {
        let seq = [0.1, -0.4, 2.0, 0.0, 1e-3];
        assert_eq!(run(&seq, 0.01), run(&seq, 0.01));
        assert_eq!(run(&seq, 0.0).data(), &[1.0, -2.0, 0.5]);
    }

    #[test]
    fn minimizes_quadratic() {
        let mut p = Tensor::row(&[3.0, -4.0]);
        let mut opt = Adam::new(AdamConfig::default(), [p.shape()]);
        for _ in 0..2000 {
            let g = Tensor::row(&[2.0 * p.data()[0], 2.0 * p.data()[1]]);
            opt.step(&mut [&mut p], &[g], 0.05).unwrap();
        }
        assert!(p.data().iter().all(|x| x.abs() < 1e-2), "{:?}", p.data());
        assert_eq!(opt.steps(), 2000);
    }

    #[test]
    fn shape_mismatch() {
        let mut p = Tensor::row(&[1.0]);
        let mut opt = Adam::new(AdamConfig::default(), [(1, 1)]);
        assert!(opt.step(&mut [&mut p], &[Tensor::row(&[1.0, 2.0])], 0.1).is_err());
        assert!(opt.step(&mut [], &[], 0.1).is_err());
    }
}
