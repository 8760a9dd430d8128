//! LSTM cell. The packed pre-activation has `4·hidden` entries in gate
//! order `(i, f, o, g)`; `W` is `[4·hidden, in + hidden]` acting on `[x, h]`.

use super::affine;
use super::{LstmCellState, Parameter, Real, Tensor};
use crate::error::{Error, Result};

/// Applies the gate nonlinearities in place (`pre` becomes the activated
/// gates) and writes `c` and `h`.
pub fn cell_forward<F: Real>(
    pre: &mut [F],
    c_prev: &[F],
    batch: usize,
    hidden: usize,
    c: &mut [F],
    h: &mut [F],
) {
    let g4 = 4 * hidden;
    for b in 0..batch {
        let gates = &mut pre[b * g4..(b + 1) * g4];
        for v in &mut gates[..3 * hidden] {
            *v = v.sigmoid();
        }
        for v in &mut gates[3 * hidden..] {
            *v = v.tanh();
        }
        for j in 0..hidden {
            let (i, f, o, g) = (gates[j], gates[hidden + j], gates[2 * hidden + j], gates[3 * hidden + j]);
            let k = b * hidden + j;
            let cn = f * c_prev[k] + i * g;
            c[k] = cn;
            h[k] = o * cn.tanh();
        }
    }
}

/// Reverse of [`cell_forward`]. `dh` and `dc` are the gradients arriving at
/// this step's outputs; writes `dpre` (w.r.t. pre-activations) and `dc_prev`.
#[allow(clippy::too_many_arguments)]
pub fn cell_backward<F: Real>(
    gates: &[F],
    c_prev: &[F],
    c: &[F],
    dh: &[F],
    dc: &[F],
    batch: usize,
    hidden: usize,
    dpre: &mut [F],
    dc_prev: &mut [F],
) {
    let g4 = 4 * hidden;
    for b in 0..batch {
        let gt = &gates[b * g4..(b + 1) * g4];
        let dp = &mut dpre[b * g4..(b + 1) * g4];
        for j in 0..hidden {
            let k = b * hidden + j;
            let (i, f, o, g) = (gt[j], gt[hidden + j], gt[2 * hidden + j], gt[3 * hidden + j]);
            let tc = c[k].tanh();
            let d_o = dh[k] * tc;
            let dct = dc[k] + dh[k] * o * (F::ONE - tc * tc);
            let d_f = dct * c_prev[k];
            let d_i = dct * g;
            let d_g = dct * i;
            dc_prev[k] = dct * f;
            dp[j] = d_i * i * (F::ONE - i);
            dp[hidden + j] = d_f * f * (F::ONE - f);
            dp[2 * hidden + j] = d_o * o * (F::ONE - o);
            dp[3 * hidden + j] = d_g * (F::ONE - g * g);
        }
    }
}

pub(crate) struct StepDims {
    pub batch: usize,
    pub input: usize,
    pub hidden: usize,
}

pub(crate) fn check_state<F: Real>(x: &Tensor<F>, prev: &LstmCellState<F>) -> Result<(usize, usize)> {
    if prev.h.shape() != prev.c.shape() {
        return Err(Error::dim("lstm state", prev.h.shape(), prev.c.shape()));
    }
    if x.rows() != prev.h.rows() || x.shape().len() != prev.h.shape().len() {
        return Err(Error::dim("lstm batch", x.shape(), prev.h.shape()));
    }
    Ok((x.rows(), prev.hidden()))
}

fn dims<F: Real>(x: &Tensor<F>, prev: &LstmCellState<F>, w: &Parameter<F>, b: &Parameter<F>) -> Result<StepDims> {
    let (batch, hidden) = check_state(x, prev)?;
    let input = x.cols();
    if w.shape() != [4 * hidden, input + hidden] {
        return Err(Error::dim("lstm weights", w.shape(), &[4 * hidden, input + hidden]));
    }
    if b.shape() != [4 * hidden] {
        return Err(Error::dim("lstm bias", b.shape(), &[4 * hidden]));
    }
    Ok(StepDims { batch, input, hidden })
}

pub(crate) fn concat_rows<F: Real>(a: &[F], a_cols: usize, b: &[F], b_cols: usize, batch: usize) -> Vec<F> {
    let mut z = Vec::with_capacity(batch * (a_cols + b_cols));
    for r in 0..batch {
        z.extend_from_slice(&a[r * a_cols..(r + 1) * a_cols]);
        z.extend_from_slice(&b[r * b_cols..(r + 1) * b_cols]);
    }
    z
}

fn state_from<F: Real>(shape: &[usize], h: Vec<F>, c: Vec<F>) -> LstmCellState<F> {
    LstmCellState {
        h: Tensor::from_vec(shape, h).expect("state shape"),
        c: Tensor::from_vec(shape, c).expect("state shape"),
    }
}

/// One LSTM step. `x` is `[in]` or `[batch, in]` matching `prev`.
pub fn lstm_step<F: Real>(
    x: &Tensor<F>,
    prev: &LstmCellState<F>,
    w: &Parameter<F>,
    b: &Parameter<F>,
) -> Result<LstmCellState<F>> {
    let d = dims(x, prev, w, b)?;
    let z = concat_rows(x.data(), d.input, prev.h.data(), d.hidden, d.batch);
    let mut pre = vec![F::ZERO; d.batch * 4 * d.hidden];
    affine::forward_rows(&z, d.batch, d.input + d.hidden, w.value.data(), b.value.data(), 4 * d.hidden, &mut pre);
    let mut c = vec![F::ZERO; d.batch * d.hidden];
    let mut h = vec![F::ZERO; d.batch * d.hidden];
    cell_forward(&mut pre, prev.c.data(), d.batch, d.hidden, &mut c, &mut h);
    Ok(state_from(prev.h.shape(), h, c))
}

/// Gradients of [`lstm_step`] given upstream `dh`, `dc` at its output.
/// Accumulates into `w.grad`, `b.grad`; returns `(dx, d_prev)`.
pub fn lstm_step_backward<F: Real>(
    x: &Tensor<F>,
    prev: &LstmCellState<F>,
    w: &mut Parameter<F>,
    b: &mut Parameter<F>,
    upstream: &LstmCellState<F>,
) -> Result<(Tensor<F>, LstmCellState<F>)> {
    let d = dims(x, prev, w, b)?;
    let zc = d.input + d.hidden;
    let z = concat_rows(x.data(), d.input, prev.h.data(), d.hidden, d.batch);
    let mut gates = vec![F::ZERO; d.batch * 4 * d.hidden];
    affine::forward_rows(&z, d.batch, zc, w.value.data(), b.value.data(), 4 * d.hidden, &mut gates);
    let mut c = vec![F::ZERO; d.batch * d.hidden];
    let mut h = vec![F::ZERO; d.batch * d.hidden];
    cell_forward(&mut gates, prev.c.data(), d.batch, d.hidden, &mut c, &mut h);

    let mut dpre = vec![F::ZERO; gates.len()];
    let mut dc_prev = vec![F::ZERO; c.len()];
    cell_backward(
        &gates, prev.c.data(), &c, upstream.h.data(), upstream.c.data(),
        d.batch, d.hidden, &mut dpre, &mut dc_prev,
    );
    let mut dz = vec![F::ZERO; d.batch * zc];
    affine::backward_rows(
        &z, &dpre, d.batch, zc, 4 * d.hidden,
        w.value.data(), w.grad.data_mut(), b.grad.data_mut(), Some(&mut dz),
    );
    let (dx, dh_prev) = split_rows(&dz, d.batch, d.input, d.hidden);
    Ok((
        Tensor::from_vec(x.shape(), dx)?,
        state_from(prev.h.shape(), dh_prev, dc_prev),
    ))
}

pub(crate) fn split_rows<F: Real>(z: &[F], batch: usize, a: usize, b: usize) -> (Vec<F>, Vec<F>) {
    let mut left = Vec::with_capacity(batch * a);
    let mut right = Vec::with_capacity(batch * b);
    for r in z.chunks_exact(a + b).take(batch) {
        left.extend_from_slice(&r[..a]);
        right.extend_from_slice(&r[a..]);
    }
    (left, right)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sig(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    /// Gate-by-gate scalar reference, independent of the packed kernels.
    fn reference(x: &[f64], h: &[f64], c: &[f64], w: &[f64], b: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let hid = h.len();
        let cols = x.len() + hid;
        let z: Vec<f64> = x.iter().chain(h).copied().collect();
        let pre = |row: usize| -> f64 {
            let mut acc = b[row];
            for j in 0..cols {
                acc += w[row * cols + j] * z[j];
            }
            acc
        };
        let mut hn = vec![0.0; hid];
        let mut cn = vec![0.0; hid];
        for k in 0..hid {
            let i = sig(pre(k));
            let f = sig(pre(hid + k));
            let o = sig(pre(2 * hid + k));
            let g = pre(3 * hid + k).tanh();
            cn[k] = f * c[k] + i * g;
            hn[k] = o * cn[k].tanh();
        }
        (hn, cn)
    }

    #[test]
    fn zero_weights_zero_state() {
        let w = Parameter::<f64>::zeros(&[16, 7]);
        let b = Parameter::zeros(&[16]);
        let out = lstm_step(&Tensor::vector(vec![1.0, -2.0, 3.0]), &LstmCellState::zeros(4), &w, &b).unwrap();
        assert!(out.h.data().iter().chain(out.c.data()).all(|&v| v == 0.0));
    }

    #[test]
    fn zero_weights_halve_the_cell() {
        let w = Parameter::<f64>::zeros(&[8, 5]);
        let b = Parameter::zeros(&[8]);
        let c0 = [0.8, -3.0];
        let prev = LstmCellState {
            h: Tensor::vector(vec![0.4, 0.1]),
            c: Tensor::vector(c0.to_vec()),
        };
        let out = lstm_step(&Tensor::vector(vec![1.0, 2.0, 3.0]), &prev, &w, &b).unwrap();
        for k in 0..2 {
            assert!((out.c.data()[k] - 0.5 * c0[k]).abs() < 1e-15);
            assert!((out.h.data()[k] - 0.5 * (0.5 * c0[k]).tanh()).abs() < 1e-15);
        }
    }

    #[test]
    fn matches_scalar_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut r = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-1.0..1.0)).collect() };
        let (inp, hid) = (3, 4);
        let (wv, bv, xv, hv, cv) = (r(16 * 7), r(16), r(inp), r(hid), r(hid));
        let w = Parameter::new(Tensor::from_f64(&[16, 7], &wv).unwrap());
        let b = Parameter::new(Tensor::vector(bv.clone()));
        let prev = LstmCellState {
            h: Tensor::vector(hv.clone()),
            c: Tensor::vector(cv.clone()),
        };
        let out = lstm_step(&Tensor::vector(xv.clone()), &prev, &w, &b).unwrap();
        let (he, ce) = reference(&xv, &hv, &cv, &wv, &bv);
        for k in 0..hid {
            assert!((out.h.data()[k] - he[k]).abs() < 1e-12);
            assert!((out.c.data()[k] - ce[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn batched_rows_are_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut r = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-1.0..1.0)).collect() };
        let w = Parameter::new(Tensor::from_f64(&[8, 5], &r(40)).unwrap());
        let b = Parameter::new(Tensor::vector(r(8)));
        let xs = r(6);
        let hs = r(4);
        let cs = r(4);
        let batch = lstm_step(
            &Tensor::from_vec(&[2, 3], xs.clone()).unwrap(),
            &LstmCellState {
                h: Tensor::from_vec(&[2, 2], hs.clone()).unwrap(),
                c: Tensor::from_vec(&[2, 2], cs.clone()).unwrap(),
            },
            &w,
            &b,
        )
        .unwrap();
        for row in 0..2 {
            let single = lstm_step(
                &Tensor::vector(xs[row * 3..row * 3 + 3].to_vec()),
                &LstmCellState {
                    h: Tensor::vector(hs[row * 2..row * 2 + 2].to_vec()),
                    c: Tensor::vector(cs[row * 2..row * 2 + 2].to_vec()),
                },
                &w,
                &b,
            )
            .unwrap();
            assert_eq!(&batch.h.data()[row * 2..row * 2 + 2], single.h.data());
        }
    }

    #[test]
    fn bad_weight_shape() {
        let w = Parameter::<f64>::zeros(&[16, 6]);
        let b = Parameter::zeros(&[16]);
        assert!(matches!(
            lstm_step(&Tensor::vector(vec![0.0; 3]), &LstmCellState::zeros(4), &w, &b),
            Err(Error::Dimension { .. })
        ));
    }
}
