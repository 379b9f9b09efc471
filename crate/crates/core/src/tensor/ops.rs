use serde::{Deserialize, Serialize};

use super::{Tensor, TensorError};
use crate::scalar::Scalar;

fn check_2d<T: Scalar>(op: &'static str, t: &Tensor<T>) -> Result<(), TensorError> {
    t.expect_rank(op, 2)
}

/// Matrix product `a · b` of an `M×K` and a `K×N` tensor.
pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    check_2d("matmul", a)?;
    check_2d("matmul", b)?;
    let (m, k) = (a.rows(), a.cols());
    let n = b.cols();
    if b.rows() != k {
        return Err(TensorError::ShapeMismatch {
            op: "matmul",
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = ad[i * k + p];
            if av == T::zero() {
                continue;
            }
            let brow = &bd[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Tensor::new(vec![m, n], out)
}

/// `aᵀ · b` without materializing the transpose (`a`: K×M, `b`: K×N).
pub fn matmul_tn<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    check_2d("matmul_tn", a)?;
    check_2d("matmul_tn", b)?;
    let (k, m) = (a.rows(), a.cols());
    let n = b.cols();
    if b.rows() != k {
        return Err(TensorError::ShapeMismatch {
            op: "matmul_tn",
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![T::zero(); m * n];
    for p in 0..k {
        let brow = &bd[p * n..(p + 1) * n];
        for i in 0..m {
            let av = ad[p * m + i];
            if av == T::zero() {
                continue;
            }
            let orow = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Tensor::new(vec![m, n], out)
}

/// `a · bᵀ` without materializing the transpose (`a`: M×K, `b`: N×K).
pub fn matmul_nt<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    check_2d("matmul_nt", a)?;
    check_2d("matmul_nt", b)?;
    let (m, k) = (a.rows(), a.cols());
    let n = b.rows();
    if b.cols() != k {
        return Err(TensorError::ShapeMismatch {
            op: "matmul_nt",
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        let arow = &ad[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &bd[j * k..(j + 1) * k];
            out[i * n + j] = arow.iter().zip(brow).map(|(&x, &y)| x * y).sum();
        }
    }
    Tensor::new(vec![m, n], out)
}

/// Gradients of `a · b` with respect to both arguments given the upstream
/// gradient `dy`.
pub fn matmul_backward<T: Scalar>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    dy: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>), TensorError> {
    Ok((matmul_nt(dy, b)?, matmul_tn(a, dy)?))
}

/// (outer, axis length, inner) decomposition for reductions along `axis`.
fn axis_layout(shape: &[usize], axis: usize) -> Result<(usize, usize, usize), TensorError> {
    if axis >= shape.len() {
        return Err(TensorError::AxisOutOfRange {
            axis,
            shape: shape.to_vec(),
        });
    }
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    Ok((outer, shape[axis], inner))
}

/// Numerically stable softmax along `axis` (max-subtracted).
pub fn softmax<T: Scalar>(x: &Tensor<T>, axis: usize) -> Result<Tensor<T>, TensorError> {
    let (outer, n, inner) = axis_layout(x.shape(), axis)?;
    let mut out = x.clone();
    let d = out.data_mut();
    for o in 0..outer {
        for j in 0..inner {
            let idx = |i: usize| o * n * inner + i * inner + j;
            let mut max = T::neg_infinity();
            for i in 0..n {
                max = max.max(d[idx(i)]);
            }
            let mut total = T::zero();
            for i in 0..n {
                let e = (d[idx(i)] - max).exp();
                d[idx(i)] = e;
                total += e;
            }
            for i in 0..n {
                d[idx(i)] /= total;
            }
        }
    }
    Ok(out)
}

/// Backward pass of [`softmax`] given its output `y`.
pub fn softmax_backward<T: Scalar>(
    y: &Tensor<T>,
    dy: &Tensor<T>,
    axis: usize,
) -> Result<Tensor<T>, TensorError> {
    y.expect_shape("softmax_backward", dy.shape())?;
    let (outer, n, inner) = axis_layout(y.shape(), axis)?;
    let (yd, gd) = (y.data(), dy.data());
    let mut out = Tensor::zeros(y.shape());
    let od = out.data_mut();
    for o in 0..outer {
        for j in 0..inner {
            let idx = |i: usize| o * n * inner + i * inner + j;
            let dot: T = (0..n).map(|i| yd[idx(i)] * gd[idx(i)]).sum();
            for i in 0..n {
                od[idx(i)] = yd[idx(i)] * (gd[idx(i)] - dot);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(T::zero()),
        }
    }

    /// Derivative expressed through the pre-activation `x` and output `y`.
    #[inline]
    pub fn derivative<T: Scalar>(self, x: T, y: T) -> T {
        match self {
            Activation::Sigmoid => y * (T::one() - y),
            Activation::Tanh => T::one() - y * y,
            Activation::Relu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
        }
    }
}

#[inline]
pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn elementwise<T: Scalar>(x: &Tensor<T>, kind: Activation) -> Tensor<T> {
    x.map(|v| kind.apply(v))
}

/// Backward pass of [`elementwise`]; `x` is the input and `y` the output.
pub fn elementwise_backward<T: Scalar>(
    x: &Tensor<T>,
    y: &Tensor<T>,
    dy: &Tensor<T>,
    kind: Activation,
) -> Tensor<T> {
    let mut out = dy.clone();
    for ((g, &xv), &yv) in out.data_mut().iter_mut().zip(x.data()).zip(y.data()) {
        *g *= kind.derivative(xv, yv);
    }
    out
}

/// Scales every slice along `axis` to unit L2 norm.
///
/// Slices whose norm is below `eps` pass through unchanged, so an all-zero
/// slice stays zero.
pub fn l2_normalize<T: Scalar>(
    x: &Tensor<T>,
    axis: usize,
    eps: T,
) -> Result<Tensor<T>, TensorError> {
    if eps.partial_cmp(&T::zero()) != Some(std::cmp::Ordering::Greater) {
        return Err(TensorError::InvalidArgument(format!(
            "l2_normalize eps must be positive, got {eps}"
        )));
    }
    let (outer, n, inner) = axis_layout(x.shape(), axis)?;
    let mut out = x.clone();
    let d = out.data_mut();
    for o in 0..outer {
        for j in 0..inner {
            let idx = |i: usize| o * n * inner + i * inner + j;
            let norm = (0..n).map(|i| d[idx(i)] * d[idx(i)]).sum::<T>().sqrt();
            if norm >= eps {
                for i in 0..n {
                    d[idx(i)] /= norm;
                }
            }
        }
    }
    Ok(out)
}

/// Backward pass of [`l2_normalize`] given its input `x`.
pub fn l2_normalize_backward<T: Scalar>(
    x: &Tensor<T>,
    dy: &Tensor<T>,
    axis: usize,
    eps: T,
) -> Result<Tensor<T>, TensorError> {
    x.expect_shape("l2_normalize_backward", dy.shape())?;
    let (outer, n, inner) = axis_layout(x.shape(), axis)?;
    let (xd, gd) = (x.data(), dy.data());
    let mut out = dy.clone();
    let od = out.data_mut();
    for o in 0..outer {
        for j in 0..inner {
            let idx = |i: usize| o * n * inner + i * inner + j;
            let norm = (0..n).map(|i| xd[idx(i)] * xd[idx(i)]).sum::<T>().sqrt();
            if norm < eps {
                continue;
            }
            // dx = (dy - y (y·dy)) / |x|
            let ydot: T = (0..n).map(|i| xd[idx(i)] / norm * gd[idx(i)]).sum();
            for i in 0..n {
                od[idx(i)] = (gd[idx(i)] - xd[idx(i)] / norm * ydot) / norm;
            }
        }
    }
    Ok(out)
}
