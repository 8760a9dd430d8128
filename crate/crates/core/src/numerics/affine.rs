//! Fully connected layer `y = W·x + b` with `W` stored `[out, in]`.

use super::{matmul, matmul_acc, Parameter, Real, Tensor, Trans};
use crate::error::{Error, Result};

/// `y[batch×out] = x[batch×in]·Wᵀ + b`.
pub fn forward_rows<F: Real>(
    x: &[F],
    batch: usize,
    in_dim: usize,
    w: &[F],
    b: &[F],
    out_dim: usize,
    y: &mut [F],
) {
    for row in y[..batch * out_dim].chunks_exact_mut(out_dim) {
        row.copy_from_slice(&b[..out_dim]);
    }
    matmul_acc(batch, in_dim, out_dim, x, Trans::N, w, Trans::T, F::ONE, y);
}

/// Accumulates `dW += dyᵀ·x`, `db += Σ_rows dy`; writes `dx = dy·W` when asked.
#[allow(clippy::too_many_arguments)]
pub fn backward_rows<F: Real>(
    x: &[F],
    dy: &[F],
    batch: usize,
    in_dim: usize,
    out_dim: usize,
    w: &[F],
    dw: &mut [F],
    db: &mut [F],
    dx: Option<&mut [F]>,
) {
    matmul_acc(out_dim, batch, in_dim, dy, Trans::T, x, Trans::N, F::ONE, dw);
    for row in dy[..batch * out_dim].chunks_exact(out_dim) {
        for (g, &d) in db.iter_mut().zip(row) {
            *g += d;
        }
    }
    if let Some(dx) = dx {
        matmul(batch, out_dim, in_dim, dy, Trans::N, w, Trans::N, dx);
    }
}

fn check<F: Real>(x: &Tensor<F>, w: &Parameter<F>, b: &Parameter<F>) -> Result<(usize, usize, usize)> {
    let ws = w.shape();
    if ws.len() != 2 || x.cols() != ws[1] || x.shape().len() > 2 {
        return Err(Error::dim("affine", x.shape(), ws));
    }
    if b.shape() != [ws[0]] {
        return Err(Error::dim("affine bias", b.shape(), ws));
    }
    Ok((x.rows(), ws[1], ws[0]))
}

/// `W·x + b` for a vector `[in]` or a row batch `[batch, in]`.
pub fn affine<F: Real>(x: &Tensor<F>, w: &Parameter<F>, b: &Parameter<F>) -> Result<Tensor<F>> {
    let (batch, in_dim, out_dim) = check(x, w, b)?;
    let mut y = vec![F::ZERO; batch * out_dim];
    forward_rows(x.data(), batch, in_dim, w.value.data(), b.value.data(), out_dim, &mut y);
    let shape = if x.shape().len() == 1 {
        vec![out_dim]
    } else {
        vec![batch, out_dim]
    };
    Tensor::from_vec(&shape, y)
}

/// Reverse of [`affine`]: accumulates into `w.grad`, `b.grad`, returns `dL/dx`.
pub fn affine_backward<F: Real>(
    x: &Tensor<F>,
    w: &mut Parameter<F>,
    b: &mut Parameter<F>,
    dy: &Tensor<F>,
) -> Result<Tensor<F>> {
    let (batch, in_dim, out_dim) = check(x, w, b)?;
    if dy.len() != batch * out_dim {
        return Err(Error::dim("affine backward", dy.shape(), &[batch, out_dim]));
    }
    let mut dx = vec![F::ZERO; batch * in_dim];
    backward_rows(
        x.data(),
        dy.data(),
        batch,
        in_dim,
        out_dim,
        w.value.data(),
        w.grad.data_mut(),
        b.grad.data_mut(),
        Some(&mut dx),
    );
    Tensor::from_vec(x.shape(), dx)
}
