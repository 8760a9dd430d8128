use crate::numerics::{ParamStore, Real};

/// RMSProp with optional global gradient-norm clipping:
/// `ms ← ρ·ms + (1−ρ)·g²`, `θ ← θ − lr·g / (√ms + ε)`.
/// Frozen parameters and their statistics are left untouched.
#[derive(Clone, Debug)]
pub struct RmsProp<F> {
    pub lr: f64,
    pub decay: f64,
    pub eps: f64,
    square_avg: Vec<Vec<F>>,
}

impl<F: Real> RmsProp<F> {
    pub fn new(params: &ParamStore<F>, lr: f64, decay: f64, eps: f64) -> Self {
        RmsProp {
            lr,
            decay,
            eps,
            square_avg: params.iter().map(|(_, p)| vec![F::ZERO; p.value.len()]).collect(),
        }
    }

    /// Applies one update and returns the gradient norm before clipping.
    pub fn step(&mut self, params: &mut ParamStore<F>, clip_norm: Option<f64>) -> f64 {
        let norm = params.grad_norm();
        let scale = match clip_norm {
            Some(c) if norm > c => c / (norm + 1e-6),
            _ => 1.0,
        };
        let (rho, lr, eps) = (F::of(self.decay), F::of(self.lr), F::of(self.eps));
        let one_minus = F::of(1.0 - self.decay);
        let scale = F::of(scale);
        for ((_, p), ms) in params.iter_mut().zip(&mut self.square_avg) {
            if p.frozen {
                continue;
            }
            let grads = p.grad.data().to_vec();
            for ((theta, &g), m) in p.value.data_mut().iter_mut().zip(&grads).zip(ms.iter_mut()) {
                let g = g * scale;
                *m = rho * *m + one_minus * g * g;
                *theta -= lr * g / (m.sqrt() + eps);
            }
        }
        norm
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;

    fn store(x: f64, g: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        let id = s.insert("w", Tensor::vector(vec![x]));
        s.get_mut(id).grad = Tensor::vector(vec![g]);
        s
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut s = store(1.5, 0.0);
        let mut opt = RmsProp::new(&s, 0.1, 0.99, 1e-5);
        opt.step(&mut s, Some(0.5));
        assert_eq!(s.by_name("w").unwrap().value.data(), &[1.5]);
    }

    #[test]
    fn three_steps_follow_the_recurrence() {
        let (lr, rho, eps, g) = (0.01, 0.99, 1e-5, 0.2);
        let mut s = store(1.0, g);
        let mut opt = RmsProp::new(&s, lr, rho, eps);
        let (mut x, mut ms) = (1.0f64, 0.0f64);
        for _ in 0..3 {
            opt.step(&mut s, None);
            ms = rho * ms + (1.0 - rho) * g * g;
            x -= lr * g / (ms.sqrt() + eps);
            assert!((s.by_name("w").unwrap().value.data()[0] - x).abs() < 1e-15);
        }
    }

    #[test]
    fn frozen_values_are_bit_identical() {
        let mut s = store(0.123, 5.0);
        s.by_name_mut("w").unwrap().frozen = true;
        let mut opt = RmsProp::new(&s, 1.0, 0.99, 1e-5);
        for _ in 0..10 {
            opt.step(&mut s, Some(0.5));
        }
        assert_eq!(s.by_name("w").unwrap().value.data()[0].to_bits(), 0.123f64.to_bits());
    }

    #[test]
    fn clipping_scales_to_the_limit() {
        // With clipping at 1 a gradient of 10 behaves like a gradient of ~1.
        let mut s = store(0.0, 10.0);
        let mut opt = RmsProp::new(&s, 0.1, 0.0, 0.0);
        let norm = opt.step(&mut s, Some(1.0));
        assert_eq!(norm, 10.0);
        // decay 0: θ −= lr·g/|g| whatever the scale.
        assert!((s.by_name("w").unwrap().value.data()[0] + 0.1).abs() < 1e-12);
    }
}
