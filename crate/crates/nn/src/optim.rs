use crate::config::OptimizerConfig;
use crate::error::{NnError, Result};
use crate::params::ParameterStore;
use crate::scalar::Scalar;

/// One AdamW update with decoupled weight decay and linear warmup.
///
/// Moment buffers are created on the first call. Gradients are consumed (cleared).
/// Returns the learning rate that was applied.
pub fn adamw_step<F: Scalar>(store: &mut ParameterStore<F>, opt: &OptimizerConfig) -> Result<f64> {
    if let Some(p) = store.iter().find(|p| p.tensor.grad().is_none()) {
        return Err(NnError::Usage(format!(
            "parameter {} has no gradient; run backward first",
            p.name
        )));
    }
    let clip = match opt.max_grad_norm {
        Some(max) => {
            let norm = store.grad_norm();
            if norm > max {
                max / (norm + 1e-12)
            } else {
                1.0
            }
        }
        None => 1.0,
    };
    store.step += 1;
    let t = store.step;
    let lr = opt.lr_at(t);
    let (b1, b2) = opt.betas;
    let bias1 = 1.0 - b1.powi(t as i32);
    let bias2 = 1.0 - b2.powi(t as i32);
    let decay = F::of(1.0 - lr * opt.weight_decay);
    let (b1f, b2f) = (F::of(b1), F::of(b2));
    let (c1, c2) = (F::of(1.0 - b1), F::of(1.0 - b2));
    let step_size = lr / bias1;
    let bias2_sqrt = bias2.sqrt();

    for p in store.iter_mut() {
        let grad = p.tensor.take_grad().expect("checked above");
        let n = grad.len();
        let m = p.first_moment.get_or_insert_with(|| vec![F::zero(); n]);
        let v = p.second_moment.get_or_insert_with(|| vec![F::zero(); n]);
        let data = p.tensor.data_mut();
        for i in 0..n {
            let g = if clip < 1.0 {
                F::of(grad[i].f64() * clip)
            } else {
                grad[i]
            };
            m[i] = b1f * m[i] + c1 * g;
            v[i] = b2f * v[i] + c2 * g * g;
            let denom = v[i].f64().sqrt() / bias2_sqrt + opt.eps;
            data[i] = data[i] * decay - F::of(step_size * m[i].f64() / denom);
        }
    }
    Ok(lr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Gradients;
    use crate::tensor::Tensor;

    fn scalar_store(x: f64) -> ParameterStore<f64> {
        let mut s = ParameterStore::new();
        s.insert("w", Tensor::new(vec![1], vec![x]).unwrap())
            .unwrap();
        s
    }

    fn set_grad(store: &mut ParameterStore<f64>, g: f64) {
        store
            .accumulate(Gradients {
                per_param: vec![Some(vec![g])],
            })
            .unwrap();
    }

    #[test]
    fn zero_gradient_zero_decay_leaves_parameters() {
        let mut store = scalar_store(0.75);
        let opt = OptimizerConfig {
            weight_decay: 0.0,
            ..Default::default()
        };
        for _ in 0..10 {
            set_grad(&mut store, 0.0);
            adamw_step(&mut store, &opt).unwrap();
        }
        assert_eq!(store.get("w").unwrap().data()[0], 0.75);
        assert_eq!(store.step(), 10);
    }

    #[test]
    fn missing_gradient_is_usage_error() {
        let mut store = scalar_store(1.0);
        assert!(matches!(
            adamw_step(&mut store, &OptimizerConfig::default()),
            Err(NnError::Usage(_))
        ));
        assert!(!store.moments_initialized());
    }

    #[test]
    fn first_warmup_step_uses_scaled_rate_and_clears_grads() {
        let mut store = scalar_store(1.0);
        set_grad(&mut store, 0.3);
        let lr = adamw_step(&mut store, &OptimizerConfig::full_scale()).unwrap();
        assert_eq!(lr, 1e-4 / 4000.0);
        assert!(store.get("w").unwrap().grad().is_none());
        assert!(store.moments_initialized());
    }

    /// Straight-line AdamW on one scalar, written out independently of the store machinery.
    fn reference_trajectory(x0: f64, g: f64, steps: usize, opt: &OptimizerConfig) -> Vec<f64> {
        let (b1, b2) = opt.betas;
        let (mut x, mut m, mut v) = (x0, 0.0, 0.0);
        let mut out = Vec::new();
        for t in 1..=steps {
            let lr = if (t as u64) < opt.warmup_steps {
                opt.learning_rate * t as f64 / opt.warmup_steps as f64
            } else {
                opt.learning_rate
            };
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let m_hat = m / (1.0 - b1.powi(t as i32));
            let v_hat = v / (1.0 - b2.powi(t as i32));
            x -= lr * opt.weight_decay * x;
            x -= lr * m_hat / (v_hat.sqrt() + opt.eps);
            out.push(x);
        }
        out
    }

    #[test]
    fn constant_gradient_trajectory_matches_scalar_reference() {
        let opt = OptimizerConfig {
            learning_rate: 3e-2,
            betas: (0.9, 0.98),
            eps: 1e-8,
            weight_decay: 0.01,
            warmup_steps: 10,
            batch_size: 1,
            max_grad_norm: None,
        };
        let g = 0.37;
        let expected = reference_trajectory(2.0, g, 100, &opt);
        let mut store = scalar_store(2.0);
        for want in expected {
            set_grad(&mut store, g);
            adamw_step(&mut store, &opt).unwrap();
            let got = store.get("w").unwrap().data()[0];
            assert!((got - want).abs() < 1e-10, "{got} vs {want}");
        }
    }

    #[test]
    fn clipping_bounds_update_direction_only() {
        let opt = OptimizerConfig {
            max_grad_norm: Some(1.0),
            weight_decay: 0.0,
            warmup_steps: 0,
            ..Default::default()
        };
        let mut a = scalar_store(0.0);
        set_grad(&mut a, 50.0);
        adamw_step(&mut a, &opt).unwrap();
        // Adam normalizes magnitude, so the first step is -lr regardless of scale.
        assert!((a.get("w").unwrap().data()[0] + opt.learning_rate).abs() < 1e-9);
    }
}
