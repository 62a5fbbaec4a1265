use super::graph::{AutodiffError, ComputeGraph, Gradients};
use super::tensor::{Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// L2 penalty folded into the gradient before the moment updates.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Adam moment state; zero-initialized and lazily sized on the first step.
#[derive(Debug, Clone, Default)]
pub struct AdamState<T> {
    step: u64,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new() -> Self {
        AdamState {
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One Adam update of `params` in place.
    pub fn step(
        &mut self,
        params: &mut [Tensor<T>],
        grads: &[Tensor<T>],
        cfg: &AdamConfig,
    ) -> Result<(), AutodiffError> {
        if params.len() != grads.len() {
            return Err(AutodiffError::Invalid(format!(
                "{} params vs {} gradients",
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() {
                return Err(AutodiffError::ShapeMismatch {
                    op: "adam",
                    lhs: p.shape(),
                    rhs: g.shape(),
                });
            }
            if !g.all_finite() {
                return Err(AutodiffError::Numerical {
                    op: "adam",
                    node: i,
                });
            }
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
            self.v = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        }
        self.step += 1;
        let (b1, b2) = (T::of(cfg.beta1), T::of(cfg.beta2));
        let bias1 = T::one() - T::of(cfg.beta1.powi(self.step as i32));
        let bias2 = T::one() - T::of(cfg.beta2.powi(self.step as i32));
        let (lr, eps, wd) = (T::of(cfg.lr), T::of(cfg.eps), T::of(cfg.weight_decay));

        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let pd = p.data_mut();
            for k in 0..pd.len() {
                let grad = g.data()[k] + wd * pd[k];
                let mk = b1 * m.data()[k] + (T::one() - b1) * grad;
                let vk = b2 * v.data()[k] + (T::one() - b2) * grad * grad;
                m.data_mut()[k] = mk;
                v.data_mut()[k] = vk;
                let m_hat = mk / bias1;
                let v_hat = vk / bias2;
                pd[k] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }

    /// Applies one update directly to the parameters of `graph`.
    pub fn step_graph(
        &mut self,
        graph: &mut ComputeGraph<T>,
        grads: &Gradients<T>,
        cfg: &AdamConfig,
    ) -> Result<(), AutodiffError> {
        let mut values: Vec<Tensor<T>> = graph.params().iter().map(|p| p.value.clone()).collect();
        self.step(&mut values, grads.as_slice(), cfg)?;
        for (p, v) in graph.params_mut().iter_mut().zip(values) {
            p.value = v;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![Tensor::<f64>::from_f64((1, 2), &[0.5, -1.0])];
        let g = vec![Tensor::<f64>::zeros((1, 2))];
        let mut s = AdamState::new();
        s.step(&mut p, &g, &AdamConfig::default()).unwrap();
        assert_eq!(p[0].data(), &[0.5, -1.0]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // bias-corrected m̂ = g, v̂ = g², so the update is lr * g / (|g| + eps)
        let mut p = vec![Tensor::<f64>::scalar(0.0)];
        let g = vec![Tensor::<f64>::scalar(1.0)];
        let cfg = AdamConfig {
            lr: 0.1,
            ..AdamConfig::default()
        };
        let mut s = AdamState::new();
        s.step(&mut p, &g, &cfg).unwrap();
        let expected = -0.1 / (1.0 + 1e-8);
        assert!((p[0].at(0, 0) - expected).abs() < 1e-12);
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut p = vec![Tensor::<f64>::scalar(0.0)];
        let g = vec![Tensor::<f64>::scalar(f64::NAN)];
        let err = AdamState::new()
            .step(&mut p, &g, &AdamConfig::default())
            .unwrap_err();
        assert!(matches!(err, AutodiffError::Numerical { .. }));
    }

    #[test]
    fn identical_runs_identical_trajectories() {
        let run = || {
            let mut p = vec![Tensor::<f32>::from_f64((1, 3), &[0.1, 0.2, 0.3])];
            let mut s = AdamState::new();
            let cfg = AdamConfig {
                weight_decay: 5e-4,
                ..AdamConfig::default()
            };
            let mut traj = Vec::new();
            for k in 0..20 {
                let g = vec![p[0].map(|x| x * 2.0 - k as f32 * 0.01)];
                s.step(&mut p, &g, &cfg).unwrap();
                traj.extend(p[0].data().iter().map(|x| x.to_bits()));
            }
            traj
        };
        assert_eq!(run(), run());
    }
}
