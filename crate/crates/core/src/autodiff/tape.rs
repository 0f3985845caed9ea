use super::tensor::{broadcast_zip, reduce_to, Tensor};
use super::AdError;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

const GELU_K: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_C: f64 = 0.044_715;

/// `tanh` through a single `exp`. Absolute error stays near 1e-16, which is
/// all GeLU needs, at a fraction of the libm cost.
#[inline]
fn tanh_fast(x: f64) -> f64 {
    if x.abs() > 20.0 {
        return x.signum();
    }
    1.0 - 2.0 / ((2.0 * x).exp() + 1.0)
}

/// Tanh approximation of GeLU.
#[inline]
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + tanh_fast(GELU_K * (x + GELU_C * x * x * x)))
}

#[inline]
pub fn gelu_grad(x: f64) -> f64 {
    let t = tanh_fast(GELU_K * (x + GELU_C * x * x * x));
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_K * (1.0 + 3.0 * GELU_C * x * x)
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    MatMul(Var, Var),
    Sum(Var),
    Mean(Var),
    SumCols(Var),
    Exp(Var),
    Log(Var),
    Tanh(Var),
    Gelu(Var),
    Square(Var),
    Sin(Var),
    Cos(Var),
    Atan(Var),
    /// Clamp forward, identity backward.
    ClampSt(Var),
    Affine(Var, f64),
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Append-only record of tensor operations for reverse-mode differentiation.
///
/// Nodes are pushed in evaluation order, so inputs always precede outputs and
/// a single reverse sweep visits every node once.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Adjoint of `v`, or `None` if nothing flowed into it.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    /// Adjoint of `v`, zeros when nothing flowed into it.
    pub fn get_or_zeros(&self, v: Var) -> Tensor {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Tensor::zeros(r, c)
            }
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A differentiable input.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// An input that never receives an adjoint.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn binary(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var, AdError> {
        let value = broadcast_zip(self.value(a), self.value(b), f)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, op, rg))
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let value = self.value(a).map(f);
        let rg = self.rg(a);
        self.push(value, op, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        self.binary(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        self.binary(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        self.binary(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        self.binary(a, b, Op::Div(a, b), |x, y| x / y)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    /// Sum of all entries, as a 1x1 tensor.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    /// Mean of all entries, as a 1x1 tensor.
    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let m = t.sum() / t.len() as f64;
        let rg = self.rg(a);
        self.push(Tensor::scalar(m), Op::Mean(a), rg)
    }

    /// Per-row sum, as an `rows x 1` tensor.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let data = (0..t.rows()).map(|r| t.row(r).iter().sum()).collect();
        let rg = self.rg(a);
        self.push(Tensor::col_vector(data), Op::SumCols(a), rg)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Op::Exp(a), f64::exp)
    }

    pub fn log(&mut self, a: Var) -> Result<Var, AdError> {
        if self.value(a).data().iter().any(|&v| !(v > 0.0)) {
            return Err(AdError::LogOfNonPositive);
        }
        Ok(self.unary(a, Op::Log(a), f64::ln))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Op::Tanh(a), f64::tanh)
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        self.unary(a, Op::Gelu(a), gelu)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, Op::Square(a), |x| x * x)
    }

    pub fn sin(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sin(a), f64::sin)
    }

    pub fn cos(&mut self, a: Var) -> Var {
        self.unary(a, Op::Cos(a), f64::cos)
    }

    pub fn atan(&mut self, a: Var) -> Var {
        self.unary(a, Op::Atan(a), f64::atan)
    }

    /// Clamps values to `[lo, hi]` while passing the adjoint through unchanged.
    pub fn clamp_st(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.unary(a, Op::ClampSt(a), move |x| x.clamp(lo, hi))
    }

    /// `scale * a + shift`.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Var {
        self.unary(a, Op::Affine(a, scale), move |x| scale * x + shift)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.affine(a, -1.0, 0.0)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, width: usize) -> Result<Var, AdError> {
        let value = self.value(a).slice_cols(start, width)?;
        let rg = self.rg(a);
        Ok(self.push(value, Op::SliceCols(a, start), rg))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, AdError> {
        let values: Vec<&Tensor> = parts.iter().map(|v| self.value(*v)).collect();
        let value = Tensor::concat_cols(&values)?;
        let rg = parts.iter().any(|v| self.rg(*v));
        Ok(self.push(value, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Reverse sweep from the scalar `out`. Forward values are left untouched.
    pub fn backward(&self, out: Var) -> Result<Gradients, AdError> {
        if self.value(out).shape() != (1, 1) {
            return Err(AdError::ShapeMismatch(format!(
                "backward needs a scalar output, got {:?}",
                self.value(out).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; out.0 + 1];
        grads[out.0] = Some(Tensor::scalar(1.0));

        fn acc(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }

        for i in (0..=out.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else {
                continue;
            };
            let val = &node.value;
            match &node.op {
                Op::Leaf => {
                    grads[i] = Some(g);
                    continue;
                }
                Op::Add(a, b) => {
                    if self.rg(*a) {
                        acc(&mut grads, *a, reduce_to(g.clone(), self.value(*a).shape()));
                    }
                    if self.rg(*b) {
                        acc(&mut grads, *b, reduce_to(g, self.value(*b).shape()));
                    }
                }
                Op::Sub(a, b) => {
                    if self.rg(*a) {
                        acc(&mut grads, *a, reduce_to(g.clone(), self.value(*a).shape()));
                    }
                    if self.rg(*b) {
                        acc(&mut grads, *b, reduce_to(g.map(|x| -x), self.value(*b).shape()));
                    }
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    if self.rg(*a) {
                        acc(&mut grads, *a, reduce_to(broadcast_zip(&g, vb, |x, y| x * y)?, va.shape()));
                    }
                    if self.rg(*b) {
                        acc(&mut grads, *b, reduce_to(broadcast_zip(&g, va, |x, y| x * y)?, vb.shape()));
                    }
                }
                Op::Div(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    if self.rg(*a) {
                        acc(&mut grads, *a, reduce_to(broadcast_zip(&g, vb, |x, y| x / y)?, va.shape()));
                    }
                    if self.rg(*b) {
                        // d(a/b)/db = -(a/b)/b = -out/b
                        let go = broadcast_zip(&g, val, |x, y| x * y)?;
                        let gb = broadcast_zip(&go, vb, |x, y| -x / y)?;
                        acc(&mut grads, *b, reduce_to(gb, vb.shape()));
                    }
                }
                Op::MatMul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    if self.rg(*a) {
                        acc(&mut grads, *a, g.gemm(false, vb, true)?);
                    }
                    if self.rg(*b) {
                        acc(&mut grads, *b, va.gemm(true, &g, false)?);
                    }
                }
                Op::Sum(a) => {
                    let (r, c) = self.value(*a).shape();
                    acc(&mut grads, *a, Tensor::filled(r, c, g.item()));
                }
                Op::Mean(a) => {
                    let (r, c) = self.value(*a).shape();
                    acc(&mut grads, *a, Tensor::filled(r, c, g.item() / (r * c) as f64));
                }
                Op::SumCols(a) => {
                    let (r, c) = self.value(*a).shape();
                    let mut ga = Tensor::zeros(r, c);
                    for row in 0..r {
                        let gr = g.get(row, 0);
                        for col in 0..c {
                            ga.set(row, col, gr);
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::Exp(a) => acc(&mut grads, *a, broadcast_zip(&g, val, |x, y| x * y)?),
                Op::Log(a) => acc(&mut grads, *a, broadcast_zip(&g, self.value(*a), |x, y| x / y)?),
                Op::Tanh(a) => acc(&mut grads, *a, broadcast_zip(&g, val, |x, t| x * (1.0 - t * t))?),
                Op::Gelu(a) => acc(&mut grads, *a, broadcast_zip(&g, self.value(*a), |x, y| x * gelu_grad(y))?),
                Op::Square(a) => acc(&mut grads, *a, broadcast_zip(&g, self.value(*a), |x, y| 2.0 * x * y)?),
                Op::Sin(a) => acc(&mut grads, *a, broadcast_zip(&g, self.value(*a), |x, y| x * y.cos())?),
                Op::Cos(a) => acc(&mut grads, *a, broadcast_zip(&g, self.value(*a), |x, y| -x * y.sin())?),
                Op::Atan(a) => acc(
                    &mut grads,
                    *a,
                    broadcast_zip(&g, self.value(*a), |x, y| x / (1.0 + y * y))?,
                ),
                Op::ClampSt(a) => acc(&mut grads, *a, g),
                Op::Affine(a, scale) => {
                    let s = *scale;
                    acc(&mut grads, *a, g.map(|x| s * x));
                }
                Op::SliceCols(a, start) => {
                    let (r, c) = self.value(*a).shape();
                    let mut ga = Tensor::zeros(r, c);
                    for row in 0..r {
                        for (k, &x) in g.row(row).iter().enumerate() {
                            ga.set(row, start + k, x);
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let w = self.value(*p).cols();
                        if self.rg(*p) {
                            acc(&mut grads, *p, g.slice_cols(offset, w)?);
                        }
                        offset += w;
                    }
                }
            }
        }
        let shapes = self.nodes[..=out.0].iter().map(|n| n.value.shape()).collect();
        Ok(Gradients { grads, shapes })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_derivative() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::scalar(3.0));
        let y = t.square(x);
        let g = t.backward(y).unwrap();
        assert_eq!(g.get(x).unwrap().item(), 6.0);
    }

    #[test]
    fn tanh_derivative_at_zero() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::scalar(0.0));
        let y = t.tanh(x);
        assert_eq!(t.backward(y).unwrap().get(x).unwrap().item(), 1.0);
    }

    #[test]
    fn constants_get_no_adjoint() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::scalar(2.0));
        let c = t.constant(Tensor::scalar(5.0));
        let y = t.mul(x, c).unwrap();
        let g = t.backward(y).unwrap();
        assert_eq!(g.get(x).unwrap().item(), 5.0);
        assert!(g.get(c).is_none());
        assert_eq!(g.get_or_zeros(c).item(), 0.0);
    }

    #[test]
    fn shared_inputs_accumulate() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::scalar(1.5));
        let y = t.mul(x, x).unwrap();
        let z = t.add(y, x).unwrap();
        assert_eq!(t.backward(z).unwrap().get(x).unwrap().item(), 4.0);
    }

    #[test]
    fn errors() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::row_vector(vec![1.0, -1.0]));
        assert_eq!(t.log(x).unwrap_err(), AdError::LogOfNonPositive);
        let y = t.leaf(Tensor::row_vector(vec![1.0, 2.0, 3.0]));
        assert!(matches!(t.add(x, y), Err(AdError::ShapeMismatch(_))));
        assert!(matches!(t.backward(x), Err(AdError::ShapeMismatch(_))));
    }

    #[test]
    fn fast_tanh_matches_libm() {
        for i in -4000..=4000 {
            let x = i as f64 * 0.01;
            assert!((tanh_fast(x) - x.tanh()).abs() < 1e-15, "{x}");
        }
        assert!((tanh_fast(1e-10) - 1e-10).abs() < 1e-15);
        assert_eq!(tanh_fast(1e6), 1.0);
        assert_eq!(tanh_fast(-1e6), -1.0);
    }

    #[test]
    fn backward_is_pure() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::row_vector(vec![0.3, -0.7]));
        let y = t.gelu(x);
        let s = t.sum(y);
        let before: Vec<Tensor> = (0..t.len()).map(|i| t.nodes[i].value.clone()).collect();
        t.backward(s).unwrap();
        t.backward(s).unwrap();
        let after: Vec<Tensor> = (0..t.len()).map(|i| t.nodes[i].value.clone()).collect();
        assert_eq!(before, after);
    }
}
