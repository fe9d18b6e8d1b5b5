use super::{Real, Tensor};
use crate::error::{Error, Result};
use crate::par;

/// Default layer-norm epsilon (ViT convention).
pub const LN_EPS: f64 = 1e-6;

/// Φ(x) via the error function.
pub fn std_normal_cdf<T: Real>(x: T) -> T {
    T::of(0.5) * (T::one() + (x / T::of(std::f64::consts::SQRT_2)).erf())
}

/// Exact GELU, x·Φ(x).
pub fn gelu_scalar<T: Real>(x: T) -> T {
    x * std_normal_cdf(x)
}

pub(crate) fn gelu_grad<T: Real>(x: T) -> T {
    let pdf = (-(x * x) * T::of(0.5)).exp() / T::of((2.0 * std::f64::consts::PI).sqrt());
    std_normal_cdf(x) + x * pdf
}

pub(crate) fn sigmoid_scalar<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn as_matrix<T: Real>(t: &Tensor<T>, op: &'static str) -> Result<(usize, usize)> {
    if t.rank() != 2 {
        return Err(Error::Dimension {
            op,
            left: t.shape().to_vec(),
            right: vec![],
        });
    }
    Ok((t.shape()[0], t.shape()[1]))
}

impl<T: Real> Tensor<T> {
    /// `self[m×k] · rhs[k×n]`.
    pub fn matmul(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        let (m, k) = as_matrix(self, "matmul")?;
        let (k2, n) = as_matrix(rhs, "matmul")?;
        if k != k2 {
            return Err(Error::dim("matmul", self.shape(), rhs.shape()));
        }
        let a = self.data();
        let b = rhs.data();
        let mut out = vec![T::zero(); m * n];
        par::for_each_row(&mut out, n, |i, row| {
            let a_row = &a[i * k..(i + 1) * k];
            for (p, &av) in a_row.iter().enumerate() {
                if av == T::zero() {
                    continue;
                }
                let b_row = &b[p * n..(p + 1) * n];
                for (o, &bv) in row.iter_mut().zip(b_row) {
                    *o = *o + av * bv;
                }
            }
        });
        Tensor::new([m, n], out)
    }

    /// `self[m×k] · rhs[n×k]ᵀ`, the layout of a linear layer with `[out×in]` weights.
    pub fn matmul_nt(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        let (m, k) = as_matrix(self, "matmul_nt")?;
        let (n, k2) = as_matrix(rhs, "matmul_nt")?;
        if k != k2 {
            return Err(Error::dim("matmul_nt", self.shape(), rhs.shape()));
        }
        let a = self.data();
        let b = rhs.data();
        let mut out = vec![T::zero(); m * n];
        par::for_each_row(&mut out, n, |i, row| {
            let a_row = &a[i * k..(i + 1) * k];
            for (j, o) in row.iter_mut().enumerate() {
                let b_row = &b[j * k..(j + 1) * k];
                *o = a_row
                    .iter()
                    .zip(b_row)
                    .fold(T::zero(), |acc, (&x, &y)| acc + x * y);
            }
        });
        Tensor::new([m, n], out)
    }

    pub fn transpose(&self) -> Result<Tensor<T>> {
        let (m, n) = as_matrix(self, "transpose")?;
        let src = self.data();
        let mut out = vec![T::zero(); m * n];
        par::for_each_row(&mut out, m, |j, row| {
            for (i, o) in row.iter_mut().enumerate() {
                *o = src[i * n + j];
            }
        });
        Tensor::new([n, m], out)
    }

    pub fn add(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        self.zip_with(rhs, "add", |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        self.zip_with(rhs, "sub", |a, b| a - b)
    }

    pub fn mul(&self, rhs: &Tensor<T>) -> Result<Tensor<T>> {
        self.zip_with(rhs, "mul", |a, b| a * b)
    }

    pub fn scale(&self, c: T) -> Tensor<T> {
        self.map(|v| v * c)
    }

    pub(crate) fn zip_with(
        &self,
        rhs: &Tensor<T>,
        op: &'static str,
        f: impl Fn(T, T) -> T,
    ) -> Result<Tensor<T>> {
        if self.shape() != rhs.shape() {
            return Err(Error::dim(op, self.shape(), rhs.shape()));
        }
        let data = self
            .data()
            .iter()
            .zip(rhs.data())
            .map(|(&a, &b)| f(a, b))
            .collect();
        Tensor::new(self.shape().to_vec(), data)
    }

    /// Adds a length-`d` vector to every row of an `n×d` matrix.
    pub fn add_row(&self, bias: &Tensor<T>) -> Result<Tensor<T>> {
        let (_, d) = self.dims2();
        if bias.numel() != d {
            return Err(Error::dim("add_row", self.shape(), bias.shape()));
        }
        let b = bias.data();
        let mut out = self.data().to_vec();
        for row in out.chunks_mut(d) {
            for (o, &bv) in row.iter_mut().zip(b) {
                *o = *o + bv;
            }
        }
        Tensor::new(self.shape().to_vec(), out)
    }

    /// Softmax along `axis`, max-subtracted.
    pub fn softmax(&self, axis: usize) -> Result<Tensor<T>> {
        if axis >= self.rank() {
            return Err(Error::Contract(format!(
                "softmax axis {axis} out of range for shape {:?}",
                self.shape()
            )));
        }
        let len = self.shape()[axis];
        let inner: usize = self.shape()[axis + 1..].iter().product();
        let outer = self.numel() / (len * inner);
        let src = self.data();
        let mut out = vec![T::zero(); self.numel()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| o * len * inner + j * inner + i;
                let max = (0..len).fold(T::neg_infinity(), |m, j| m.max(src[at(j)]));
                let mut total = T::zero();
                for j in 0..len {
                    let e = (src[at(j)] - max).exp();
                    out[at(j)] = e;
                    total = total + e;
                }
                for j in 0..len {
                    out[at(j)] = out[at(j)] / total;
                }
            }
        }
        Tensor::new(self.shape().to_vec(), out)
    }

    /// Row-wise softmax over the last axis.
    pub fn softmax_rows(&self) -> Tensor<T> {
        let (_, c) = self.dims2();
        let mut out = self.data().to_vec();
        par::for_each_row(&mut out, c, |_, row| softmax_in_place(row));
        Tensor {
            shape: self.shape().to_vec(),
            data: out,
        }
    }

    /// Layer normalization over the last axis with affine `gamma`/`beta`.
    pub fn layer_norm(&self, gamma: &Tensor<T>, beta: &Tensor<T>, eps: T) -> Result<Tensor<T>> {
        Ok(layer_norm_parts(self, gamma, beta, eps)?.0)
    }

    pub fn gelu(&self) -> Tensor<T> {
        self.map(gelu_scalar)
    }

    pub fn sigmoid(&self) -> Tensor<T> {
        self.map(sigmoid_scalar)
    }
}

pub(crate) fn softmax_in_place<T: Real>(row: &mut [T]) {
    let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let mut total = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total = total + *v;
    }
    for v in row.iter_mut() {
        *v = *v / total;
    }
}

/// Returns `(output, xhat, rstd)`; the normalized values and reciprocal
/// standard deviations are kept for the adjoint.
pub(crate) fn layer_norm_parts<T: Real>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    eps: T,
) -> Result<(Tensor<T>, Vec<T>, Vec<T>)> {
    let (rows, d) = x.dims2();
    if gamma.numel() != d || beta.numel() != d {
        return Err(Error::dim("layer_norm", x.shape(), gamma.shape()));
    }
    let n = T::of(d as f64);
    let g = gamma.data();
    let b = beta.data();
    let mut xhat = x.data().to_vec();
    let mut rstd = vec![T::zero(); rows];
    for (row, r) in xhat.chunks_mut(d).zip(rstd.iter_mut()) {
        let mean = row.iter().fold(T::zero(), |a, &v| a + v) / n;
        let var = row
            .iter()
            .fold(T::zero(), |a, &v| a + (v - mean) * (v - mean))
            / n;
        *r = T::one() / (var + eps).sqrt();
        for v in row.iter_mut() {
            *v = (*v - mean) * *r;
        }
    }
    let mut out = xhat.clone();
    for row in out.chunks_mut(d) {
        for ((o, &gv), &bv) in row.iter_mut().zip(g).zip(b) {
            *o = *o * gv + bv;
        }
    }
    Ok((Tensor::new(x.shape().to_vec(), out)?, xhat, rstd))
}
