use std::sync::Arc;

use super::tensor::{Scalar, Tensor};
use super::AutodiffError;
use crate::sparse::CsrMatrix;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Targets with `|y|` at or below this floor are left out of the MAPE.
pub const MAPE_FLOOR: f64 = 1e-12;

enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    /// Applies the matrix to each consecutive block of `rows()` rows.
    SpMatMul(Arc<CsrMatrix<T>>, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Scale(Var, T),
    Relu(Var),
    Elu(Var),
    Sum(Var),
    Mape { pred: Var, target: Arc<Tensor<T>>, participating: usize },
}

struct Node<T> {
    op: Op<T>,
    value: Arc<Tensor<T>>,
    requires_grad: bool,
}

/// Records a computation for one reverse pass.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    consumed: bool,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients of a scalar with respect to the tape's values.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn shape_err(op: &'static str, left: &[usize], right: &[usize]) -> AutodiffError {
    AutodiffError::ShapeMismatch { op, left: left.to_vec(), right: right.to_vec() }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), consumed: false }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op<T>, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node { op, value: Arc::new(value), requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// A trainable leaf; gradients are reported for it.
    pub fn param(&mut self, value: Arc<Tensor<T>>) -> Var {
        self.nodes.push(Node { op: Op::Leaf, value, requires_grad: true });
        Var(self.nodes.len() - 1)
    }

    /// A constant leaf without gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(Op::Leaf, value, false)
    }

    /// A shared constant leaf without gradient.
    pub fn input(&mut self, value: Arc<Tensor<T>>) -> Var {
        self.nodes.push(Node { op: Op::Leaf, value, requires_grad: false });
        Var(self.nodes.len() - 1)
    }

    /// Moves the value out of the tape, cloning only if it is shared.
    pub fn take_value(&mut self, v: Var) -> Tensor<T> {
        let value = std::mem::replace(&mut self.nodes[v.0].value, Arc::new(Tensor::scalar(T::zero())));
        Arc::try_unwrap(value).unwrap_or_else(|shared| (*shared).clone())
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (x, y) = (self.value(a), self.value(b));
        let (m, k, n) = (x.rows(), x.cols(), y.cols());
        if x.shape().len() != 2 || y.shape().len() != 2 || y.rows() != k {
            return Err(shape_err("matmul", x.shape(), y.shape()));
        }
        let mut out = vec![T::zero(); m * n];
        T::gemm(m, k, n, x.data(), (k, 1), y.data(), (n, 1), T::zero(), &mut out);
        let value = Tensor::new(&[m, n], out)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(Op::MatMul(a, b), value, rg))
    }

    pub fn sp_matmul(&mut self, adjacency: Arc<CsrMatrix<T>>, x: Var) -> Result<Var, AutodiffError> {
        let v = self.value(x);
        let (n, c) = (adjacency.rows(), v.cols());
        if adjacency.cols() != n || v.shape().len() != 2 || n == 0 || v.rows() % n != 0 {
            return Err(shape_err("sp_matmul", &[adjacency.rows(), adjacency.cols()], v.shape()));
        }
        let mut out = vec![T::zero(); v.len()];
        for (src, dst) in v.data().chunks_exact(n * c).zip(out.chunks_exact_mut(n * c)) {
            adjacency.spmm(src, c, dst);
        }
        let value = Tensor::new(v.shape(), out)?;
        let rg = self.needs(&[x]);
        Ok(self.push(Op::SpMatMul(adjacency, x), value, rg))
    }

    /// Adds a row vector `b` (length = columns of `x`) to every row of `x`.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var, AutodiffError> {
        let (xv, bv) = (self.value(x), self.value(b));
        let c = xv.cols();
        if bv.len() != c || xv.shape().len() != 2 {
            return Err(shape_err("add_bias", xv.shape(), bv.shape()));
        }
        let mut out = xv.data().to_vec();
        for row in out.chunks_exact_mut(c) {
            for (o, b) in row.iter_mut().zip(bv.data()) {
                *o = *o + *b;
            }
        }
        let value = Tensor::new(xv.shape(), out)?;
        let rg = self.needs(&[x, b]);
        Ok(self.push(Op::AddBias(x, b), value, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(shape_err("add", x.shape(), y.shape()));
        }
        let out = x.data().iter().zip(y.data()).map(|(p, q)| *p + *q).collect();
        let value = Tensor::new(x.shape(), out)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(Op::Add(a, b), value, rg))
    }

    pub fn scale(&mut self, x: Var, s: T) -> Var {
        let v = self.value(x);
        let value = Tensor::new(v.shape(), v.data().iter().map(|p| *p * s).collect()).expect("same shape");
        let rg = self.needs(&[x]);
        self.push(Op::Scale(x, s), value, rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let value = Tensor::new(v.shape(), v.data().iter().map(|p| p.max(T::zero())).collect()).expect("same shape");
        let rg = self.needs(&[x]);
        self.push(Op::Relu(x), value, rg)
    }

    /// `x` for `x >= 0`, `exp(x) - 1` otherwise.
    pub fn elu(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let out = v.data().iter().map(|p| if *p >= T::zero() { *p } else { p.exp_m1() }).collect();
        let value = Tensor::new(v.shape(), out).expect("same shape");
        let rg = self.needs(&[x]);
        self.push(Op::Elu(x), value, rg)
    }

    /// Sum of all entries, accumulated in `f64`.
    pub fn sum(&mut self, x: Var) -> Var {
        let total: f64 = self.value(x).data().iter().map(|v| v.as_f64()).sum();
        let rg = self.needs(&[x]);
        self.push(Op::Sum(x), Tensor::scalar(T::of(total)), rg)
    }

    /// `100 / n * Σ |y - ŷ| / |y|` over the `n` targets with `|y| > MAPE_FLOOR`.
    pub fn mape_loss(&mut self, pred: Var, target: Arc<Tensor<T>>) -> Result<Var, AutodiffError> {
        let p = self.value(pred);
        if p.shape() != target.shape() {
            return Err(shape_err("mape_loss", p.shape(), target.shape()));
        }
        let mut total = 0.0;
        let mut participating = 0;
        for (yh, y) in p.data().iter().zip(target.data()) {
            let y = y.as_f64();
            if y.abs() > MAPE_FLOOR {
                total += (y - yh.as_f64()).abs() / y.abs();
                participating += 1;
            }
        }
        if participating == 0 {
            return Err(AutodiffError::NoParticipatingEntries);
        }
        let loss = 100.0 * total / participating as f64;
        let rg = self.needs(&[pred]);
        Ok(self.push(Op::Mape { pred, target, participating }, Tensor::scalar(T::of(loss)), rg))
    }

    /// Reverse pass from the scalar `loss`. A tape supports one reverse pass.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients<T>, AutodiffError> {
        if self.consumed {
            return Err(AutodiffError::StaleTape);
        }
        if self.value(loss).len() != 1 {
            return Err(AutodiffError::NonScalarLoss(self.value(loss).shape().to_vec()));
        }
        self.consumed = true;
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(T::one()));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            match &node.op {
                Op::Leaf => {
                    grads[i] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let (x, y) = (self.value(*a), self.value(*b));
                    let (m, k, n) = (x.rows(), x.cols(), y.cols());
                    if self.nodes[a.0].requires_grad {
                        let acc = grad_buffer(&mut grads, *a, x.shape());
                        T::gemm(m, n, k, g.data(), (n, 1), y.data(), (1, n), T::one(), acc);
                    }
                    if self.nodes[b.0].requires_grad {
                        let acc = grad_buffer(&mut grads, *b, y.shape());
                        T::gemm(k, m, n, x.data(), (1, k), g.data(), (n, 1), T::one(), acc);
                    }
                }
                Op::SpMatMul(adj, x) => {
                    let shape = self.value(*x).shape().to_vec();
                    let (n, c) = (adj.rows(), shape[1]);
                    let acc = grad_buffer(&mut grads, *x, &shape);
                    for (src, dst) in g.data().chunks_exact(n * c).zip(acc.chunks_exact_mut(n * c)) {
                        adj.spmm_transpose_acc(src, c, dst);
                    }
                }
                Op::AddBias(x, b) => {
                    let c = g.cols();
                    if self.nodes[x.0].requires_grad {
                        accumulate(grad_buffer(&mut grads, *x, g.shape()), g.data());
                    }
                    if self.nodes[b.0].requires_grad {
                        let mut col = vec![0.0f64; c];
                        for row in g.data().chunks_exact(c) {
                            for (s, v) in col.iter_mut().zip(row) {
                                *s += v.as_f64();
                            }
                        }
                        let col: Vec<T> = col.into_iter().map(T::of).collect();
                        let shape = self.value(*b).shape().to_vec();
                        accumulate(grad_buffer(&mut grads, *b, &shape), &col);
                    }
                }
                Op::Add(a, b) => {
                    for v in [a, b] {
                        if self.nodes[v.0].requires_grad {
                            accumulate(grad_buffer(&mut grads, *v, g.shape()), g.data());
                        }
                    }
                }
                Op::Scale(x, s) => {
                    let scaled: Vec<T> = g.data().iter().map(|v| *v * *s).collect();
                    accumulate(grad_buffer(&mut grads, *x, g.shape()), &scaled);
                }
                Op::Relu(x) => {
                    let input = self.value(*x).data();
                    let masked: Vec<T> =
                        g.data().iter().zip(input).map(|(d, v)| if *v > T::zero() { *d } else { T::zero() }).collect();
                    accumulate(grad_buffer(&mut grads, *x, g.shape()), &masked);
                }
                Op::Elu(x) => {
                    let out = node.value.data();
                    let input = self.value(*x).data();
                    let local: Vec<T> = g
                        .data()
                        .iter()
                        .zip(input.iter().zip(out))
                        .map(|(d, (v, o))| if *v >= T::zero() { *d } else { *d * (*o + T::one()) })
                        .collect();
                    accumulate(grad_buffer(&mut grads, *x, g.shape()), &local);
                }
                Op::Sum(x) => {
                    let shape = self.value(*x).shape().to_vec();
                    let seed = g.data()[0];
                    for v in grad_buffer(&mut grads, *x, &shape) {
                        *v = *v + seed;
                    }
                }
                Op::Mape { pred, target, participating } => {
                    let p = self.value(*pred);
                    let coef = g.data()[0].as_f64() * 100.0 / *participating as f64;
                    let local: Vec<T> = p
                        .data()
                        .iter()
                        .zip(target.data())
                        .map(|(yh, y)| {
                            let (yh, y) = (yh.as_f64(), y.as_f64());
                            if y.abs() <= MAPE_FLOOR || yh == y {
                                T::zero()
                            } else {
                                T::of(coef * (yh - y).signum() / y.abs())
                            }
                        })
                        .collect();
                    let shape = p.shape().to_vec();
                    accumulate(grad_buffer(&mut grads, *pred, &shape), &local);
                }
            }
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if !matches!(node.op, Op::Leaf) || !node.requires_grad {
                grads[i] = None;
            }
        }
        Ok(Gradients { grads })
    }
}

fn grad_buffer<'a, T: Scalar>(grads: &'a mut [Option<Tensor<T>>], v: Var, shape: &[usize]) -> &'a mut [T] {
    grads[v.0].get_or_insert_with(|| Tensor::zeros(shape)).data_mut()
}

fn accumulate<T: Scalar>(acc: &mut [T], g: &[T]) {
    for (a, b) in acc.iter_mut().zip(g) {
        *a = *a + *b;
    }
}
