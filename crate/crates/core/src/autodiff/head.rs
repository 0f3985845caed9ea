use super::tape::{Tape, Var};
use super::tensor::Tensor;
use super::AdError;

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// `tanh` is clipped to this magnitude so a saturated squash still lands
/// strictly inside the bounds.
const TANH_LIMIT: f64 = 1.0 - 1e-12;

/// Reparameterized policy head: `lo + (hi - lo) * (tanh(mean + exp(log_std) * noise) + 1) / 2`.
///
/// Noise is supplied by the caller so every sample is a deterministic,
/// differentiable function of the network outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct SquashedGaussianHead {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl SquashedGaussianHead {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, AdError> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(AdError::ShapeMismatch(format!(
                "{} lower and {} upper bounds",
                lo.len(),
                hi.len()
            )));
        }
        if lo.iter().zip(&hi).any(|(l, h)| !(l < h) || !l.is_finite() || !h.is_finite()) {
            return Err(AdError::InvalidHyperparameter("bounds need lo < hi".into()));
        }
        Ok(Self { lo, hi })
    }

    /// Action dimension; the feeding network must emit twice this many columns.
    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    fn check(&self, t: &Tensor, what: &str) -> Result<(), AdError> {
        if t.cols() != self.dim() {
            return Err(AdError::ShapeMismatch(format!(
                "{what} has {} columns, head has {}",
                t.cols(),
                self.dim()
            )));
        }
        Ok(())
    }

    fn squash(&self, col: usize, pre: f64) -> f64 {
        let t = pre.tanh().clamp(-TANH_LIMIT, TANH_LIMIT);
        let (lo, hi) = (self.lo[col], self.hi[col]);
        0.5 * (hi + lo) + 0.5 * (hi - lo) * t
    }

    /// Sample without recording; `noise` has the shape of `mean_raw`.
    pub fn sample(&self, mean_raw: &Tensor, logstd_raw: &Tensor, noise: &Tensor) -> Result<Tensor, AdError> {
        self.check(mean_raw, "mean")?;
        if logstd_raw.shape() != mean_raw.shape() || noise.shape() != mean_raw.shape() {
            return Err(AdError::ShapeMismatch("mean, log-std and noise shapes differ".into()));
        }
        let d = self.dim();
        let mut out = Tensor::zeros(mean_raw.rows(), d);
        for r in 0..mean_raw.rows() {
            for c in 0..d {
                let std = logstd_raw.get(r, c).clamp(LOG_STD_MIN, LOG_STD_MAX).exp();
                out.set(r, c, self.squash(c, mean_raw.get(r, c) + std * noise.get(r, c)));
            }
        }
        Ok(out)
    }

    /// The zero-noise action.
    pub fn deterministic(&self, mean_raw: &Tensor) -> Result<Tensor, AdError> {
        self.check(mean_raw, "mean")?;
        let mut out = mean_raw.clone();
        let d = self.dim();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v = self.squash(i % d, *v);
        }
        Ok(out)
    }

    /// Splits a `batch x 2d` network output into mean and log-std halves.
    pub fn split_output(&self, out: &Tensor) -> Result<(Tensor, Tensor), AdError> {
        let d = self.dim();
        if out.cols() != 2 * d {
            return Err(AdError::ShapeMismatch(format!(
                "network output has {} columns, head needs {}",
                out.cols(),
                2 * d
            )));
        }
        Ok((out.slice_cols(0, d)?, out.slice_cols(d, d)?))
    }

    /// Recorded sample, differentiable in `mean_raw` and `logstd_raw`.
    pub fn sample_tape(&self, tape: &mut Tape, mean_raw: Var, logstd_raw: Var, noise: &Tensor) -> Result<Var, AdError> {
        self.check(tape.value(mean_raw), "mean")?;
        if tape.value(logstd_raw).shape() != tape.value(mean_raw).shape() || noise.shape() != tape.value(mean_raw).shape()
        {
            return Err(AdError::ShapeMismatch("mean, log-std and noise shapes differ".into()));
        }
        let ls = tape.clamp_st(logstd_raw, LOG_STD_MIN, LOG_STD_MAX);
        let std = tape.exp(ls);
        let n = tape.constant(noise.clone());
        let scaled = tape.mul(std, n)?;
        let pre = tape.add(mean_raw, scaled)?;
        let t = tape.tanh(pre);
        let t = tape.clamp_st(t, -TANH_LIMIT, TANH_LIMIT);
        self.rescale_tape(tape, t)
    }

    /// Recorded zero-noise action.
    pub fn deterministic_tape(&self, tape: &mut Tape, mean_raw: Var) -> Result<Var, AdError> {
        self.check(tape.value(mean_raw), "mean")?;
        let t = tape.tanh(mean_raw);
        let t = tape.clamp_st(t, -TANH_LIMIT, TANH_LIMIT);
        self.rescale_tape(tape, t)
    }

    /// Recorded sample straight from a `batch x 2d` network output.
    pub fn sample_from_output(&self, tape: &mut Tape, out: Var, noise: &Tensor) -> Result<Var, AdError> {
        let d = self.dim();
        let mean = tape.slice_cols(out, 0, d)?;
        let logstd = tape.slice_cols(out, d, d)?;
        self.sample_tape(tape, mean, logstd, noise)
    }

    fn rescale_tape(&self, tape: &mut Tape, t: Var) -> Result<Var, AdError> {
        let half = tape.constant(Tensor::row_vector(
            self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (h - l)).collect(),
        ));
        let centre = tape.constant(Tensor::row_vector(
            self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (h + l)).collect(),
        ));
        let scaled = tape.mul(t, half)?;
        tape.add(scaled, centre)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_noise_zero_mean_is_midpoint() {
        let h = SquashedGaussianHead::new(vec![-0.4], vec![0.4]).unwrap();
        let a = h
            .sample(&Tensor::scalar(0.0), &Tensor::scalar(0.0), &Tensor::scalar(0.0))
            .unwrap();
        assert_eq!(a.item(), 0.0);
    }

    #[test]
    fn saturation_stays_inside() {
        let h = SquashedGaussianHead::new(vec![-0.4, -1.5], vec![0.4, 3.0]).unwrap();
        let m = Tensor::row_vector(vec![50.0, -50.0]);
        let a = h.deterministic(&m).unwrap();
        assert!(a.get(0, 0) < 0.4 && a.get(0, 0) > 0.399);
        assert!(a.get(0, 1) > -1.5 && a.get(0, 1) < -1.499);
        let mut tape = Tape::new();
        let mv = tape.leaf(m);
        let av = h.deterministic_tape(&mut tape, mv).unwrap();
        assert_eq!(tape.value(av), &a);
    }

    #[test]
    fn plain_and_tape_agree() {
        let h = SquashedGaussianHead::new(vec![-1.0, 0.0], vec![1.0, 2.0]).unwrap();
        let m = Tensor::from_rows(&[vec![0.2, -0.3], vec![1.0, 0.4]]).unwrap();
        let s = Tensor::from_rows(&[vec![-1.0, 30.0], vec![-25.0, 0.0]]).unwrap();
        let n = Tensor::from_rows(&[vec![0.5, -0.1], vec![2.0, 1.0]]).unwrap();
        let plain = h.sample(&m, &s, &n).unwrap();
        let mut tape = Tape::new();
        let mv = tape.leaf(m);
        let sv = tape.leaf(s);
        let a = h.sample_tape(&mut tape, mv, sv, &n).unwrap();
        for (x, y) in plain.data().iter().zip(tape.value(a).data()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_bad_bounds() {
        assert!(SquashedGaussianHead::new(vec![1.0], vec![1.0]).is_err());
        assert!(SquashedGaussianHead::new(vec![0.0], vec![]).is_err());
    }
}
