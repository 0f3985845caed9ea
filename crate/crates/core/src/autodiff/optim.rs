use super::tensor::Tensor;
use super::AdError;

/// Adam with bias correction. Moment buffers are created lazily on the first
/// step to match the parameter shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Default for Adam {
    fn default() -> Self {
        Self::new(0.9, 0.999, 1e-8)
    }
}

impl Adam {
    pub fn new(beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One descent step of size `lr`. Pass negated gradients to ascend.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor], lr: f64) -> Result<(), AdError> {
        if params.len() != grads.len() || params.iter().zip(grads).any(|(p, g)| p.shape() != g.shape()) {
            return Err(AdError::ShapeMismatch("parameters and gradients differ".into()));
        }
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| Tensor::zeros(g.rows(), g.cols())).collect();
            self.v = self.m.clone();
        } else if self.m.len() != grads.len() || self.m.iter().zip(grads).any(|(m, g)| m.shape() != g.shape()) {
            return Err(AdError::ShapeMismatch("optimizer state belongs to another network".into()));
        }
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            for (((pi, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                let mh = *mi / c1;
                let vh = *vi / c2;
                *pi -= lr * mh / (vh.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// Cosine annealing from `lr_hi` at step 0 to `lr_lo` at `total`, flat after.
pub fn cosine_lr(step: usize, total: usize, lr_hi: f64, lr_lo: f64) -> f64 {
    if total == 0 {
        return lr_lo;
    }
    let frac = (step.min(total) as f64) / total as f64;
    lr_lo + 0.5 * (lr_hi - lr_lo) * (1.0 + (std::f64::consts::PI * frac).cos())
}

/// `target <- tau * online + (1 - tau) * target`, elementwise.
pub fn polyak_update(target: &mut [&mut Tensor], online: &[&Tensor], tau: f64) -> Result<(), AdError> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(AdError::InvalidHyperparameter(format!("tau = {tau}")));
    }
    if target.len() != online.len() || target.iter().zip(online).any(|(t, o)| t.shape() != o.shape()) {
        return Err(AdError::ShapeMismatch("target and online networks differ".into()));
    }
    for (t, o) in target.iter_mut().zip(online) {
        if tau == 1.0 {
            t.data_mut().copy_from_slice(o.data());
        } else {
            for (ti, &oi) in t.data_mut().iter_mut().zip(o.data()) {
                *ti = tau * oi + (1.0 - tau) * *ti;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_minimizes_square() {
        let mut x = Tensor::scalar(1.0);
        let mut opt = Adam::default();
        for _ in 0..100 {
            let g = Tensor::scalar(2.0 * x.item());
            opt.step(&mut [&mut x], &[g], 0.1).unwrap();
        }
        assert!(x.item().abs() < 0.05, "x = {}", x.item());
    }

    #[test]
    fn cosine_endpoints() {
        assert_eq!(cosine_lr(0, 100, 1e-3, 1e-5), 1e-3);
        assert!((cosine_lr(100, 100, 1e-3, 1e-5) - 1e-5).abs() < 1e-18);
        assert!((cosine_lr(50, 100, 1e-3, 1e-5) - 0.5 * (1e-3 + 1e-5)).abs() < 1e-15);
        assert!((cosine_lr(500, 100, 1e-3, 1e-5) - 1e-5).abs() < 1e-18);
    }

    #[test]
    fn polyak_full_copy() {
        let mut t = Tensor::row_vector(vec![1.0, 2.0]);
        let o = Tensor::row_vector(vec![-3.0, 0.25]);
        polyak_update(&mut [&mut t], &[&o], 1.0).unwrap();
        assert_eq!(t, o);
        polyak_update(&mut [&mut t], &[&Tensor::row_vector(vec![1.0, 0.25])], 0.5).unwrap();
        assert_eq!(t.data(), &[-1.0, 0.25]);
        assert!(polyak_update(&mut [&mut t], &[&o], 0.0).is_err());
        assert!(polyak_update(&mut [&mut t], &[&Tensor::scalar(1.0)], 0.5).is_err());
    }
}
