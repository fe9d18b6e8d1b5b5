//! Reverse-mode differentiation over a linear tape of primitive applications.
//!
//! Nodes are appended as operations run, so the node order is a topological
//! order by construction; [`Tape::backward`] walks it in reverse.

use super::ops::{gelu_grad, layer_norm_parts};
use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Clamp applied to probabilities inside the binary cross-entropy.
pub const BCE_CLAMP: f64 = 1e-7;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Reshape(Var),
    SoftmaxRows(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<T>,
        rstd: Vec<T>,
    },
    Gelu(Var),
    Sigmoid(Var),
    Cols {
        src: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    Rows {
        src: Var,
        start: usize,
    },
    ConcatRows(Vec<Var>),
    Sum(Var),
    Mean(Var),
    Bce {
        probs: Var,
        targets: Tensor<T>,
    },
    SoftmaxCe {
        logits: Var,
        targets: Tensor<T>,
        probs: Tensor<T>,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    /// Some gradient-tracking leaf is upstream of this node.
    tracked: bool,
    requires_grad: bool,
}

/// Single-owner record of one forward pass.
pub struct Tape<T: Real = f32> {
    nodes: Vec<Node<T>>,
}

/// Adjoints of every gradient-tracking leaf, indexed by [`Var`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a gradient-tracking leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push_leaf(value, true)
    }

    /// Records a leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push_leaf(value, false)
    }

    fn push_leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            tracked: requires_grad,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let tracked = inputs.iter().any(|v| self.nodes[v.0].tracked);
        self.nodes.push(Node {
            value,
            op,
            tracked,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b), &[a, b]))
    }

    /// `a · bᵀ`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul_nt(self.value(b))?;
        Ok(self.push(out, Op::MatMulNt(a, b), &[a, b]))
    }

    /// `x · wᵀ + b` for weights stored `[out × in]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = self.matmul_nt(x, w)?;
        self.add_row(y, b)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).add(self.value(b))?;
        Ok(self.push(out, Op::Add(a, b), &[a, b]))
    }

    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let out = self.value(a).add_row(self.value(bias))?;
        Ok(self.push(out, Op::AddRow(a, bias), &[a, bias]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).mul(self.value(b))?;
        Ok(self.push(out, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        let out = self.value(a).scale(c);
        self.push(out, Op::Scale(a, c), &[a])
    }

    pub fn reshape(&mut self, a: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let out = self.value(a).reshape(shape)?;
        Ok(self.push(out, Op::Reshape(a), &[a]))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let out = self.value(a).softmax_rows();
        self.push(out, Op::SoftmaxRows(a), &[a])
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: T) -> Result<Var> {
        let (out, xhat, rstd) =
            layer_norm_parts(self.value(x), self.value(gamma), self.value(beta), eps)?;
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            },
            &[x, gamma, beta],
        ))
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let out = self.value(a).gelu();
        self.push(out, Op::Gelu(a), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).sigmoid();
        self.push(out, Op::Sigmoid(a), &[a])
    }

    /// Columns `start..start+len` of a matrix.
    pub fn cols(&mut self, src: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(src);
        let (r, c) = t.dims2();
        if len == 0 || start + len > c {
            return Err(Error::Contract(format!(
                "column slice {start}..{} out of range for {:?}",
                start + len,
                t.shape()
            )));
        }
        let mut out = Vec::with_capacity(r * len);
        for i in 0..r {
            out.extend_from_slice(&t.data()[i * c + start..i * c + start + len]);
        }
        let out = Tensor::new([r, len], out)?;
        Ok(self.push(out, Op::Cols { src, start }, &[src]))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let r = self.value(parts[0]).dims2().0;
        let widths: Vec<usize> = parts.iter().map(|&p| self.value(p).dims2().1).collect();
        for &p in parts {
            if self.value(p).dims2().0 != r {
                return Err(Error::dim(
                    "concat_cols",
                    self.value(parts[0]).shape(),
                    self.value(p).shape(),
                ));
            }
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(r * total);
        for i in 0..r {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p).data()[i * w..(i + 1) * w]);
            }
        }
        let out = Tensor::new([r, total], out)?;
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), parts))
    }

    /// Rows `start..start+len` of a matrix.
    pub fn rows(&mut self, src: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(src);
        let (r, c) = t.dims2();
        if len == 0 || start + len > r {
            return Err(Error::Contract(format!(
                "row slice {start}..{} out of range for {:?}",
                start + len,
                t.shape()
            )));
        }
        let out = Tensor::new([len, c], t.data()[start * c..(start + len) * c].to_vec())?;
        Ok(self.push(out, Op::Rows { src, start }, &[src]))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let c = self.value(parts[0]).dims2().1;
        let mut out = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let t = self.value(p);
            if t.dims2().1 != c {
                return Err(Error::dim(
                    "concat_rows",
                    self.value(parts[0]).shape(),
                    t.shape(),
                ));
            }
            rows += t.dims2().0;
            out.extend_from_slice(t.data());
        }
        let out = Tensor::new([rows, c], out)?;
        Ok(self.push(out, Op::ConcatRows(parts.to_vec()), parts))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        self.push(out, Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).mean());
        self.push(out, Op::Mean(a), &[a])
    }

    /// Mean binary cross-entropy of `probs` against soft `targets`.
    pub fn bce(&mut self, probs: Var, targets: Tensor<T>) -> Result<Var> {
        let p = self.value(probs);
        if p.shape() != targets.shape() {
            return Err(Error::dim("bce", p.shape(), targets.shape()));
        }
        let loss = bce_value(p.data(), targets.data());
        Ok(self.push(Tensor::scalar(loss), Op::Bce { probs, targets }, &[probs]))
    }

    /// Mean over rows of `-Σ t·log softmax(z)`.
    pub fn softmax_ce(&mut self, logits: Var, targets: Tensor<T>) -> Result<Var> {
        let z = self.value(logits);
        if z.shape() != targets.shape() {
            return Err(Error::dim("softmax_ce", z.shape(), targets.shape()));
        }
        let (rows, _) = z.dims2();
        let probs = z.softmax_rows();
        let mut loss = T::zero();
        for i in 0..rows {
            let zr = z.row(i);
            let max = zr.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
            let lse = zr.iter().fold(T::zero(), |a, &v| a + (v - max).exp()).ln() + max;
            for (&t, &v) in targets.row(i).iter().zip(zr) {
                loss = loss - t * (v - lse);
            }
        }
        let loss = loss / T::of(rows as f64);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SoftmaxCe {
                logits,
                targets,
                probs,
            },
            &[logits],
        ))
    }

    /// Adjoints of `loss` with respect to every [`Tape::param`] leaf.
    /// Consumes the tape.
    pub fn backward(self, loss: Var) -> Result<Gradients<T>> {
        let n = self.nodes.len();
        let loss_value = &self.nodes[loss.0].value;
        if loss_value.numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                loss_value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..n).map(|_| None).collect();
        let mut leaves: Vec<Option<Tensor<T>>> = (0..n).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::ones(loss_value.shape().to_vec()));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.tracked {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let val = |v: Var| &self.nodes[v.0].value;
            let mut acc = |v: Var, t: Tensor<T>| {
                if !self.nodes[v.0].tracked {
                    return;
                }
                match &mut grads[v.0] {
                    Some(existing) => {
                        for (e, x) in existing.data_mut().iter_mut().zip(t.data()) {
                            *e = *e + *x;
                        }
                    }
                    slot @ None => *slot = Some(t),
                }
            };
            match &node.op {
                Op::Leaf => {
                    if node.requires_grad {
                        leaves[i] = Some(g);
                    }
                }
                Op::MatMul(a, b) => {
                    acc(*a, g.matmul_nt(val(*b))?);
                    acc(*b, val(*a).transpose()?.matmul(&g)?);
                }
                Op::MatMulNt(a, b) => {
                    acc(*a, g.matmul(val(*b))?);
                    acc(*b, g.transpose()?.matmul(val(*a))?);
                }
                Op::Add(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, g);
                }
                Op::AddRow(a, b) => {
                    let (_, d) = g.dims2();
                    let mut col = vec![T::zero(); d];
                    for row in g.data().chunks(d) {
                        for (c, &v) in col.iter_mut().zip(row) {
                            *c = *c + v;
                        }
                    }
                    acc(*b, Tensor::new(val(*b).shape().to_vec(), col)?);
                    acc(*a, g);
                }
                Op::Mul(a, b) => {
                    acc(*a, g.mul(val(*b))?);
                    acc(*b, g.mul(val(*a))?);
                }
                Op::Scale(a, c) => acc(*a, g.scale(*c)),
                Op::Reshape(a) => acc(*a, g.reshape(val(*a).shape().to_vec())?),
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let (_, c) = y.dims2();
                    let mut dx = g.into_data();
                    for (drow, yrow) in dx.chunks_mut(c).zip(y.data().chunks(c)) {
                        let dot = drow
                            .iter()
                            .zip(yrow)
                            .fold(T::zero(), |s, (&d, &yv)| s + d * yv);
                        for (d, &yv) in drow.iter_mut().zip(yrow) {
                            *d = yv * (*d - dot);
                        }
                    }
                    acc(*a, Tensor::new(y.shape().to_vec(), dx)?);
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    rstd,
                } => {
                    let gm = val(*gamma).data();
                    let (_, d) = g.dims2();
                    let n = T::of(d as f64);
                    let mut dgamma = vec![T::zero(); d];
                    let mut dbeta = vec![T::zero(); d];
                    let mut dx = vec![T::zero(); g.numel()];
                    for (r, ((grow, xrow), dxrow)) in g
                        .data()
                        .chunks(d)
                        .zip(xhat.chunks(d))
                        .zip(dx.chunks_mut(d))
                        .enumerate()
                    {
                        let mut mean_dxhat = T::zero();
                        let mut mean_dxhat_xhat = T::zero();
                        for j in 0..d {
                            dgamma[j] = dgamma[j] + grow[j] * xrow[j];
                            dbeta[j] = dbeta[j] + grow[j];
                            let dxh = grow[j] * gm[j];
                            mean_dxhat = mean_dxhat + dxh;
                            mean_dxhat_xhat = mean_dxhat_xhat + dxh * xrow[j];
                        }
                        mean_dxhat = mean_dxhat / n;
                        mean_dxhat_xhat = mean_dxhat_xhat / n;
                        for j in 0..d {
                            let dxh = grow[j] * gm[j];
                            dxrow[j] = rstd[r] * (dxh - mean_dxhat - xrow[j] * mean_dxhat_xhat);
                        }
                    }
                    acc(*x, Tensor::new(g.shape().to_vec(), dx)?);
                    acc(*gamma, Tensor::new(val(*gamma).shape().to_vec(), dgamma)?);
                    acc(*beta, Tensor::new(val(*beta).shape().to_vec(), dbeta)?);
                }
                Op::Gelu(a) => {
                    let x = val(*a);
                    acc(*a, g.zip_with(x, "gelu", |gv, xv| gv * gelu_grad(xv))?);
                }
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    acc(*a, g.zip_with(y, "sigmoid", |gv, yv| gv * yv * (T::one() - yv))?);
                }
                Op::Cols { src, start } => {
                    let s = val(*src);
                    let (r, c) = s.dims2();
                    let w = g.dims2().1;
                    let mut out = vec![T::zero(); r * c];
                    for i in 0..r {
                        out[i * c + start..i * c + start + w].copy_from_slice(g.row(i));
                    }
                    acc(*src, Tensor::new(s.shape().to_vec(), out)?);
                }
                Op::ConcatCols(parts) => {
                    let (r, total) = g.dims2();
                    let mut offset = 0;
                    for &p in parts {
                        let w = val(p).dims2().1;
                        let mut out = Vec::with_capacity(r * w);
                        for i in 0..r {
                            out.extend_from_slice(
                                &g.data()[i * total + offset..i * total + offset + w],
                            );
                        }
                        acc(p, Tensor::new(val(p).shape().to_vec(), out)?);
                        offset += w;
                    }
                }
                Op::Rows { src, start } => {
                    let s = val(*src);
                    let (_, c) = s.dims2();
                    let mut out = vec![T::zero(); s.numel()];
                    out[start * c..start * c + g.numel()].copy_from_slice(g.data());
                    acc(*src, Tensor::new(s.shape().to_vec(), out)?);
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let len = val(p).numel();
                        let part = g.data()[offset..offset + len].to_vec();
                        acc(p, Tensor::new(val(p).shape().to_vec(), part)?);
                        offset += len;
                    }
                }
                Op::Sum(a) => {
                    let gv = g.data()[0];
                    acc(*a, Tensor::full(val(*a).shape().to_vec(), gv));
                }
                Op::Mean(a) => {
                    let x = val(*a);
                    let gv = g.data()[0] / T::of(x.numel() as f64);
                    acc(*a, Tensor::full(x.shape().to_vec(), gv));
                }
                Op::Bce { probs, targets } => {
                    let p = val(*probs);
                    let gv = g.data()[0] / T::of(p.numel() as f64);
                    let lo = T::of(BCE_CLAMP);
                    let hi = T::one() - lo;
                    let d = p.zip_with(targets, "bce", |pv, tv| {
                        if pv <= lo || pv >= hi {
                            T::zero()
                        } else {
                            gv * ((T::one() - tv) / (T::one() - pv) - tv / pv)
                        }
                    })?;
                    acc(*probs, d);
                }
                Op::SoftmaxCe {
                    logits,
                    targets,
                    probs,
                } => {
                    let (rows, c) = probs.dims2();
                    let gv = g.data()[0] / T::of(rows as f64);
                    let mut d = probs.data().to_vec();
                    for i in 0..rows {
                        let t = targets.row(i);
                        let mass = t.iter().fold(T::zero(), |a, &v| a + v);
                        for (dv, &tv) in d[i * c..(i + 1) * c].iter_mut().zip(t) {
                            *dv = gv * (mass * *dv - tv);
                        }
                    }
                    acc(*logits, Tensor::new(probs.shape().to_vec(), d)?);
                }
            }
        }
        Ok(Gradients { grads: leaves })
    }
}

/// Mean over all entries of `-[t·ln p + (1-t)·ln(1-p)]`, with `p` clamped to
/// `[1e-7, 1-1e-7]`.
pub(crate) fn bce_value<T: Real>(probs: &[T], targets: &[T]) -> T {
    let lo = T::of(BCE_CLAMP);
    let hi = T::one() - lo;
    let total = probs.iter().zip(targets).fold(T::zero(), |acc, (&p, &t)| {
        let p = p.max(lo).min(hi);
        acc - (t * p.ln() + (T::one() - t) * (T::one() - p).ln())
    });
    total / T::of(probs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
        Tensor::from_fn(shape.to_vec(), |_| rng.random_range(-2.0..2.0))
    }

    /// Central-difference check of `build` (which maps leaf values to a scalar
    /// loss) against the tape adjoint, for every leaf.
    fn gradcheck(
        inputs: &[Tensor<f64>],
        build: impl Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
    ) -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
        let loss = build(&mut tape, &vars).unwrap();
        let grads = tape.backward(loss).unwrap();
        let eval = |vals: &[Tensor<f64>]| {
            let mut t = Tape::new();
            let vs: Vec<Var> = vals.iter().map(|v| t.constant(v.clone())).collect();
            let l = build(&mut t, &vs).unwrap();
            t.value(l).data()[0]
        };
        let h = 1e-4;
        let mut worst: f64 = 0.0;
        for (k, input) in inputs.iter().enumerate() {
            let analytic = grads.get(vars[k]).unwrap_or_else(|| panic!("no gradient for input {k}"));
            for idx in 0..input.numel() {
                let mut plus = inputs.to_vec();
                plus[k].data_mut()[idx] += h;
                let mut minus = inputs.to_vec();
                minus[k].data_mut()[idx] -= h;
                let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
                let a = analytic.data()[idx];
                let denom = a.abs().max(numeric.abs()).max(1e-6);
                worst = worst.max((a - numeric).abs() / denom);
            }
        }
        worst
    }

    #[test]
    fn sum_gradient_is_ones() {
        let mut tape = Tape::<f64>::new();
        let x = tape.param(Tensor::new([3], vec![1., -2., 5.]).unwrap());
        let l = tape.sum(x);
        let g = tape.backward(l).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[1., 1., 1.]);
    }

    #[test]
    fn square_gradient_is_two_x() {
        let mut tape = Tape::<f64>::new();
        let xs = Tensor::new([2, 2], vec![1., -2., 0.5, 3.]).unwrap();
        let x = tape.param(xs.clone());
        let sq = tape.mul(x, x).unwrap();
        let l = tape.sum(sq);
        let g = tape.backward(l).unwrap();
        assert_eq!(g.get(x).unwrap(), &xs.scale(2.0));
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut tape = Tape::<f64>::new();
        let x = tape.param(Tensor::zeros([2]));
        assert!(matches!(tape.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut tape = Tape::<f64>::new();
        let x = tape.param(Tensor::ones([2]));
        let c = tape.constant(Tensor::ones([2]));
        let y = tape.mul(x, c).unwrap();
        let l = tape.sum(y);
        let g = tape.backward(l).unwrap();
        assert!(g.get(c).is_none());
        assert!(g.get(x).is_some());
    }

    #[test]
    fn primitives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let tol = 1e-4;
        let a = random(&[3, 4], &mut rng);
        let b = random(&[4, 2], &mut rng);
        let w = random(&[5, 4], &mut rng);
        let bias = random(&[5], &mut rng);
        let weights = random(&[3, 5], &mut rng);

        let checks: Vec<(&str, f64)> = vec![
            ("matmul", gradcheck(&[a.clone(), b.clone(), random(&[3, 2], &mut rng)], |t, v| {
                let y = t.matmul(v[0], v[1])?;
                let y = t.mul(y, v[2])?;
                Ok(t.sum(y))
            })),
            ("linear", gradcheck(&[a.clone(), w.clone(), bias.clone(), weights.clone()], |t, v| {
                let y = t.linear(v[0], v[1], v[2])?;
                let y = t.mul(y, v[3])?;
                Ok(t.sum(y))
            })),
            ("softmax", gradcheck(&[a.clone(), random(&[3, 4], &mut rng)], |t, v| {
                let y = t.softmax_rows(v[0]);
                let y = t.mul(y, v[1])?;
                Ok(t.sum(y))
            })),
            ("layer_norm", gradcheck(
                &[a.clone(), random(&[4], &mut rng), random(&[4], &mut rng), random(&[3, 4], &mut rng)],
                |t, v| {
                    let y = t.layer_norm(v[0], v[1], v[2], 1e-6)?;
                    let y = t.mul(y, v[3])?;
                    Ok(t.sum(y))
                },
            )),
            ("gelu", gradcheck(&[a.clone(), random(&[3, 4], &mut rng)], |t, v| {
                let y = t.gelu(v[0]);
                let y = t.mul(y, v[1])?;
                Ok(t.sum(y))
            })),
            ("sigmoid+bce", gradcheck(std::slice::from_ref(&a), |t, v| {
                let p = t.sigmoid(v[0]);
                let targets = Tensor::from_fn([3, 4], |i| (i % 3) as f64 / 2.0);
                t.bce(p, targets)
            })),
            ("softmax_ce", gradcheck(std::slice::from_ref(&a), |t, v| {
                let targets = Tensor::from_fn([3, 4], |i| if i % 4 == 1 { 0.7 } else { 0.1 });
                t.softmax_ce(v[0], targets)
            })),
            ("slices", gradcheck(&[a.clone(), random(&[1, 3], &mut rng)], |t, v| {
                let left = t.cols(v[0], 0, 1)?;
                let right = t.cols(v[0], 2, 2)?;
                let c = t.concat_cols(&[right, left])?;
                let top = t.rows(c, 1, 2)?;
                let stacked = t.concat_rows(&[v[1], top])?;
                let r = t.reshape(stacked, [1, 9])?;
                let prod = t.mul(r, r)?;
                let s = t.scale(prod, 0.3);
                Ok(t.mean(s))
            })),
            ("attention", gradcheck(&[a.clone(), random(&[3, 4], &mut rng), random(&[3, 4], &mut rng)], |t, v| {
                let s = t.matmul_nt(v[0], v[1])?;
                let s = t.scale(s, 0.5);
                let p = t.softmax_rows(s);
                let o = t.matmul(p, v[2])?;
                let o2 = t.mul(o, o)?;
                let o3 = t.add(o2, o)?;
                Ok(t.sum(o3))
            })),
        ];
        for (name, err) in checks {
            assert!(err <= tol, "{name}: max relative error {err:e}");
        }
    }
}
