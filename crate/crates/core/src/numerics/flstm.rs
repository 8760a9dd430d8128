//! Factorized LSTM: the recurrent weight matrix for task embedding `v` is
//! `W_v = W1·diag(v)·W2`, with `W1: [4·hidden, rank]` and
//! `W2: [rank, in + hidden]` shared across tasks.
//!
//! The step never materializes `W_v`; it computes `W1·(v ⊙ (W2·z))`, which
//! costs `rank·(4·hidden + in + hidden)` per row instead of the full product.

use super::lstm::{self, cell_backward, cell_forward, concat_rows, split_rows};
use super::{matmul, matmul_acc, LstmCellState, Parameter, Real, Tensor, Trans};
use crate::error::{Error, Result};

/// Pre-activations `pre = (v ⊙ (z·W2ᵀ))·W1ᵀ + b` for a batch. `v` holds one
/// embedding row per batch row. Writes the intermediates `u = z·W2ᵀ` and
/// `s = v ⊙ u` needed by the reverse pass.
#[allow(clippy::too_many_arguments)]
pub fn pre_forward<F: Real>(
    z: &[F],
    batch: usize,
    zc: usize,
    v: &[F],
    rank: usize,
    w1: &[F],
    w2: &[F],
    bias: &[F],
    gates: usize,
    u: &mut [F],
    s: &mut [F],
    pre: &mut [F],
) {
    matmul(batch, zc, rank, z, Trans::N, w2, Trans::T, u);
    for ((sv, &uv), &vv) in s[..batch * rank].iter_mut().zip(&u[..batch * rank]).zip(&v[..batch * rank]) {
        *sv = uv * vv;
    }
    for row in pre[..batch * gates].chunks_exact_mut(gates) {
        row.copy_from_slice(&bias[..gates]);
    }
    matmul_acc(batch, rank, gates, s, Trans::N, w1, Trans::T, F::ONE, pre);
}

/// Per-row terms of the reverse pass that do not touch the shared weight
/// gradients: `ds = dpre·W1`, `dv = ds ⊙ u`, `du = ds ⊙ v`, and (optionally)
/// `dz = du·W2`. Weight gradients are left to [`weight_grads`] so callers can
/// batch them over many steps.
#[allow(clippy::too_many_arguments)]
pub fn row_backward<F: Real>(
    dpre: &[F],
    u: &[F],
    v: &[F],
    batch: usize,
    rank: usize,
    gates: usize,
    zc: usize,
    w1: &[F],
    w2: &[F],
    dv: &mut [F],
    du: &mut [F],
    dz: Option<&mut [F]>,
) {
    let mut ds = vec![F::ZERO; batch * rank];
    matmul(batch, gates, rank, dpre, Trans::N, w1, Trans::N, &mut ds);
    for k in 0..batch * rank {
        dv[k] = ds[k] * u[k];
        du[k] = ds[k] * v[k];
    }
    if let Some(dz) = dz {
        matmul(batch, rank, zc, du, Trans::N, w2, Trans::N, dz);
    }
}

/// `dW1 += dpreᵀ·s`, `dW2 += duᵀ·z`, `db += Σ dpre` over `rows` rows.
#[allow(clippy::too_many_arguments)]
pub fn weight_grads<F: Real>(
    dpre: &[F],
    s: &[F],
    du: &[F],
    z: &[F],
    rows: usize,
    rank: usize,
    gates: usize,
    zc: usize,
    dw1: &mut [F],
    dw2: &mut [F],
    db: &mut [F],
) {
    matmul_acc(gates, rows, rank, dpre, Trans::T, s, Trans::N, F::ONE, dw1);
    matmul_acc(rank, rows, zc, du, Trans::T, z, Trans::N, F::ONE, dw2);
    for r in dpre[..rows * gates].chunks_exact(gates) {
        for (g, &d) in db.iter_mut().zip(r) {
            *g += d;
        }
    }
}

fn compose_dims<F: Real>(v: &Tensor<F>, w1: &Parameter<F>, w2: &Parameter<F>) -> Result<(usize, usize, usize)> {
    let (a, b) = (w1.shape(), w2.shape());
    if a.len() != 2 || b.len() != 2 || v.shape().len() != 1 || a[1] != v.len() || b[0] != v.len() {
        return Err(Error::Dimension {
            op: "flstm_compose",
            left: [a, v.shape()].concat(),
            right: b.to_vec(),
        });
    }
    Ok((a[0], v.len(), b[1]))
}

/// `W1·diag(v)·W2`.
pub fn flstm_compose<F: Real>(v: &Tensor<F>, w1: &Parameter<F>, w2: &Parameter<F>) -> Result<Tensor<F>> {
    let (rows, rank, cols) = compose_dims(v, w1, w2)?;
    let mut scaled = w1.value.data().to_vec();
    for row in scaled.chunks_exact_mut(rank) {
        for (x, &vk) in row.iter_mut().zip(v.data()) {
            *x *= vk;
        }
    }
    let mut out = vec![F::ZERO; rows * cols];
    matmul(rows, rank, cols, &scaled, Trans::N, w2.value.data(), Trans::N, &mut out);
    Tensor::from_vec(&[rows, cols], out)
}

/// Routes `dL/dW_v` to `W1`, `W2` (accumulated) and returns `dL/dv`.
pub fn flstm_compose_backward<F: Real>(
    v: &Tensor<F>,
    w1: &mut Parameter<F>,
    w2: &mut Parameter<F>,
    d_composed: &Tensor<F>,
) -> Result<Tensor<F>> {
    let (rows, rank, cols) = compose_dims(v, w1, w2)?;
    if d_composed.shape() != [rows, cols] {
        return Err(Error::dim("flstm_compose backward", d_composed.shape(), &[rows, cols]));
    }
    // t = dW·W2ᵀ  [rows, rank]
    let mut t = vec![F::ZERO; rows * rank];
    matmul(rows, cols, rank, d_composed.data(), Trans::N, w2.value.data(), Trans::T, &mut t);
    let mut dv = vec![F::ZERO; rank];
    for r in 0..rows {
        for k in 0..rank {
            let w1v = w1.value.data()[r * rank + k];
            dv[k] += t[r * rank + k] * w1v;
            w1.grad.data_mut()[r * rank + k] += t[r * rank + k] * v.data()[k];
        }
    }
    // dW2 += (W1·diag v)ᵀ·dW
    let mut scaled = w1.value.data().to_vec();
    for row in scaled.chunks_exact_mut(rank) {
        for (x, &vk) in row.iter_mut().zip(v.data()) {
            *x *= vk;
        }
    }
    matmul_acc(rank, rows, cols, &scaled, Trans::T, d_composed.data(), Trans::N, F::ONE, w2.grad.data_mut());
    Ok(Tensor::vector(dv))
}

struct Dims {
    batch: usize,
    input: usize,
    hidden: usize,
    rank: usize,
}

fn step_dims<F: Real>(
    x: &Tensor<F>,
    prev: &LstmCellState<F>,
    v: &Tensor<F>,
    w1: &Parameter<F>,
    w2: &Parameter<F>,
    b: &Parameter<F>,
) -> Result<Dims> {
    let (batch, hidden) = lstm::check_state(x, prev)?;
    let input = x.cols();
    let rank = v.cols();
    if w1.shape() != [4 * hidden, rank] {
        return Err(Error::dim("flstm W1", w1.shape(), &[4 * hidden, rank]));
    }
    if w2.shape() != [rank, input + hidden] {
        return Err(Error::dim("flstm W2", w2.shape(), &[rank, input + hidden]));
    }
    if b.shape() != [4 * hidden] {
        return Err(Error::dim("flstm bias", b.shape(), &[4 * hidden]));
    }
    if !(v.shape().len() == 1 || v.rows() == batch) {
        return Err(Error::dim("flstm embedding", v.shape(), x.shape()));
    }
    Ok(Dims { batch, input, hidden, rank })
}

fn embed_rows<F: Real>(v: &Tensor<F>, batch: usize) -> Vec<F> {
    if v.shape().len() == 1 {
        v.data().repeat(batch)
    } else {
        v.data().to_vec()
    }
}

/// One factorized LSTM step. `v` is one embedding `[rank]` shared by the
/// batch or one row per batch entry `[batch, rank]`.
pub fn flstm_step<F: Real>(
    x: &Tensor<F>,
    prev: &LstmCellState<F>,
    v: &Tensor<F>,
    w1: &Parameter<F>,
    w2: &Parameter<F>,
    b: &Parameter<F>,
) -> Result<LstmCellState<F>> {
    let d = step_dims(x, prev, v, w1, w2, b)?;
    let zc = d.input + d.hidden;
    let z = concat_rows(x.data(), d.input, prev.h.data(), d.hidden, d.batch);
    let vr = embed_rows(v, d.batch);
    let mut u = vec![F::ZERO; d.batch * d.rank];
    let mut s = vec![F::ZERO; d.batch * d.rank];
    let mut pre = vec![F::ZERO; d.batch * 4 * d.hidden];
    pre_forward(
        &z, d.batch, zc, &vr, d.rank, w1.value.data(), w2.value.data(), b.value.data(),
        4 * d.hidden, &mut u, &mut s, &mut pre,
    );
    let mut c = vec![F::ZERO; d.batch * d.hidden];
    let mut h = vec![F::ZERO; d.batch * d.hidden];
    cell_forward(&mut pre, prev.c.data(), d.batch, d.hidden, &mut c, &mut h);
    Ok(LstmCellState {
        h: Tensor::from_vec(prev.h.shape(), h)?,
        c: Tensor::from_vec(prev.c.shape(), c)?,
    })
}

/// Gradients of [`flstm_step`]. Accumulates into `w1`, `w2`, `b`; returns
/// `(dx, d_prev, dv)` with `dv` shaped like `v`.
#[allow(clippy::type_complexity)]
pub fn flstm_step_backward<F: Real>(
    x: &Tensor<F>,
    prev: &LstmCellState<F>,
    v: &Tensor<F>,
    w1: &mut Parameter<F>,
    w2: &mut Parameter<F>,
    b: &mut Parameter<F>,
    upstream: &LstmCellState<F>,
) -> Result<(Tensor<F>, LstmCellState<F>, Tensor<F>)> {
    let d = step_dims(x, prev, v, w1, w2, b)?;
    let zc = d.input + d.hidden;
    let g4 = 4 * d.hidden;
    let z = concat_rows(x.data(), d.input, prev.h.data(), d.hidden, d.batch);
    let vr = embed_rows(v, d.batch);
    let mut u = vec![F::ZERO; d.batch * d.rank];
    let mut s = vec![F::ZERO; d.batch * d.rank];
    let mut gates = vec![F::ZERO; d.batch * g4];
    pre_forward(
        &z, d.batch, zc, &vr, d.rank, w1.value.data(), w2.value.data(), b.value.data(),
        g4, &mut u, &mut s, &mut gates,
    );
    let mut c = vec![F::ZERO; d.batch * d.hidden];
    let mut h = vec![F::ZERO; d.batch * d.hidden];
    cell_forward(&mut gates, prev.c.data(), d.batch, d.hidden, &mut c, &mut h);

    let mut dpre = vec![F::ZERO; gates.len()];
    let mut dc_prev = vec![F::ZERO; c.len()];
    cell_backward(
        &gates, prev.c.data(), &c, upstream.h.data(), upstream.c.data(),
        d.batch, d.hidden, &mut dpre, &mut dc_prev,
    );
    let mut dv_rows = vec![F::ZERO; d.batch * d.rank];
    let mut du = vec![F::ZERO; d.batch * d.rank];
    let mut dz = vec![F::ZERO; d.batch * zc];
    row_backward(
        &dpre, &u, &vr, d.batch, d.rank, g4, zc,
        w1.value.data(), w2.value.data(), &mut dv_rows, &mut du, Some(&mut dz),
    );
    weight_grads(
        &dpre, &s, &du, &z, d.batch, d.rank, g4, zc,
        w1.grad.data_mut(), w2.grad.data_mut(), b.grad.data_mut(),
    );
    let dv = if v.shape().len() == 1 {
        let mut acc = vec![F::ZERO; d.rank];
        for row in dv_rows.chunks_exact(d.rank) {
            for (a, &x) in acc.iter_mut().zip(row) {
                *a += x;
            }
        }
        Tensor::vector(acc)
    } else {
        Tensor::from_vec(v.shape(), dv_rows)?
    };
    let (dx, dh_prev) = split_rows(&dz, d.batch, d.input, d.hidden);
    Ok((
        Tensor::from_vec(x.shape(), dx)?,
        LstmCellState {
            h: Tensor::from_vec(prev.h.shape(), dh_prev)?,
            c: Tensor::from_vec(prev.c.shape(), dc_prev)?,
        },
        dv,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::lstm::lstm_step;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_param(rng: &mut ChaCha8Rng, shape: &[usize]) -> Parameter<f64> {
        let n = shape.iter().product();
        Parameter::new(Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap())
    }

    #[test]
    fn one_hot_gives_rank_one_outer_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w1 = rand_param(&mut rng, &[8, 3]);
        let w2 = rand_param(&mut rng, &[3, 5]);
        let k = 1;
        let mut e = vec![0.0; 3];
        e[k] = 1.0;
        let wg = flstm_compose(&Tensor::vector(e), &w1, &w2).unwrap();
        for i in 0..8 {
            for j in 0..5 {
                let outer = w1.value.data()[i * 3 + k] * w2.value.data()[k * 5 + j];
                assert!((wg.data()[i * 5 + j] - outer).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn zero_embedding_gives_zero_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w1 = rand_param(&mut rng, &[8, 3]);
        let w2 = rand_param(&mut rng, &[3, 5]);
        let wg = flstm_compose(&Tensor::zeros(&[3]), &w1, &w2).unwrap();
        assert!(wg.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn compose_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w1 = rand_param(&mut rng, &[12, 4]);
        let w2 = rand_param(&mut rng, &[4, 6]);
        let v: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let wg = flstm_compose(&Tensor::vector(v.clone()), &w1, &w2).unwrap();
        for i in 0..12 {
            for j in 0..6 {
                let mut acc = 0.0;
                for k in 0..4 {
                    acc += w1.value.data()[i * 4 + k] * v[k] * w2.value.data()[k * 6 + j];
                }
                assert!((wg.data()[i * 6 + j] - acc).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn rank_mismatch() {
        let w1 = Parameter::<f64>::zeros(&[8, 3]);
        let w2 = Parameter::<f64>::zeros(&[4, 5]);
        assert!(matches!(
            flstm_compose(&Tensor::zeros(&[3]), &w1, &w2),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn fused_step_equals_materialized() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (inp, hid, rank) = (5, 3, 4);
        let w1 = rand_param(&mut rng, &[4 * hid, rank]);
        let w2 = rand_param(&mut rng, &[rank, inp + hid]);
        let b = rand_param(&mut rng, &[4 * hid]);
        let v = Tensor::vector((0..rank).map(|_| rng.random_range(-1.0..1.0)).collect());
        let x = Tensor::vector((0..inp).map(|_| rng.random_range(-1.0..1.0)).collect());
        let prev = LstmCellState {
            h: Tensor::vector((0..hid).map(|_| rng.random_range(-1.0..1.0)).collect()),
            c: Tensor::vector((0..hid).map(|_| rng.random_range(-1.0..1.0)).collect()),
        };
        let fused = flstm_step(&x, &prev, &v, &w1, &w2, &b).unwrap();
        let wg = Parameter::new(flstm_compose(&v, &w1, &w2).unwrap());
        let plain = lstm_step(&x, &prev, &wg, &b).unwrap();
        assert!(fused.h.max_abs_diff(&plain.h) < 1e-10);
        assert!(fused.c.max_abs_diff(&plain.c) < 1e-10);
    }

    #[test]
    fn zero_embedding_zero_bias_zero_state_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let w1 = rand_param(&mut rng, &[8, 3]);
        let w2 = rand_param(&mut rng, &[3, 6]);
        let b = Parameter::zeros(&[8]);
        let x = Tensor::vector(vec![0.3, -1.0, 2.0, 0.5]);
        let out = flstm_step(&x, &LstmCellState::zeros(2), &Tensor::zeros(&[3]), &w1, &w2, &b).unwrap();
        assert!(out.h.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn distinct_one_hot_tasks_differ() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let w1 = rand_param(&mut rng, &[8, 2]);
        let w2 = rand_param(&mut rng, &[2, 5]);
        let b = Parameter::zeros(&[8]);
        let x = Tensor::vector(vec![0.3, -1.0, 2.0]);
        let prev = LstmCellState::zeros(2);
        let a = flstm_step(&x, &prev, &Tensor::vector(vec![1.0, 0.0]), &w1, &w2, &b).unwrap();
        let c = flstm_step(&x, &prev, &Tensor::vector(vec![0.0, 1.0]), &w1, &w2, &b).unwrap();
        assert!(a.h.max_abs_diff(&c.h) > 1e-6);
    }
}
