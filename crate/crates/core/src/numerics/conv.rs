//! 3×3 stride-1 zero-padded convolutions with ReLU, the observation encoder.
//!
//! Activations are kept channel-last (`[batch, side·side, channels]`) so the
//! im2col matrix multiplies straight into the next layer's layout. Weights
//! are stored `[out, in, 3, 3]`. The flattened encoder output is therefore
//! ordered `(row, col, channel)`.

use super::{matmul, matmul_acc, Parameter, Real, Tensor, Trans};
use crate::error::{Error, Result};

const K: usize = 3;

fn im2col<F: Real>(input: &[F], batch: usize, side: usize, cin: usize, cols: &mut [F]) {
    let area = side * side;
    let width = cin * K * K;
    for b in 0..batch {
        let img = &input[b * area * cin..(b + 1) * area * cin];
        for y in 0..side {
            for x in 0..side {
                let row = &mut cols[(b * area + y * side + x) * width..][..width];
                for ky in 0..K {
                    for kx in 0..K {
                        let sy = y as isize + ky as isize - 1;
                        let sx = x as isize + kx as isize - 1;
                        let inside = sy >= 0 && sx >= 0 && (sy as usize) < side && (sx as usize) < side;
                        for c in 0..cin {
                            row[c * K * K + ky * K + kx] = if inside {
                                img[(sy as usize * side + sx as usize) * cin + c]
                            } else {
                                F::ZERO
                            };
                        }
                    }
                }
            }
        }
    }
}

fn col2im_acc<F: Real>(cols: &[F], batch: usize, side: usize, cin: usize, out: &mut [F]) {
    let area = side * side;
    let width = cin * K * K;
    for b in 0..batch {
        let img = &mut out[b * area * cin..(b + 1) * area * cin];
        for y in 0..side {
            for x in 0..side {
                let row = &cols[(b * area + y * side + x) * width..][..width];
                for ky in 0..K {
                    for kx in 0..K {
                        let sy = y as isize + ky as isize - 1;
                        let sx = x as isize + kx as isize - 1;
                        if sy < 0 || sx < 0 || sy as usize >= side || sx as usize >= side {
                            continue;
                        }
                        let base = (sy as usize * side + sx as usize) * cin;
                        for c in 0..cin {
                            img[base + c] += row[c * K * K + ky * K + kx];
                        }
                    }
                }
            }
        }
    }
}

/// One convolution + ReLU. `input` is `[batch, side², cin]`, `out` is
/// `[batch, side², cout]`.
#[allow(clippy::too_many_arguments)]
pub fn conv3x3_relu_forward<F: Real>(
    input: &[F],
    batch: usize,
    side: usize,
    cin: usize,
    w: &[F],
    bias: &[F],
    cout: usize,
    out: &mut [F],
) {
    let rows = batch * side * side;
    let width = cin * K * K;
    let mut cols = vec![F::ZERO; rows * width];
    im2col(input, batch, side, cin, &mut cols);
    for r in out[..rows * cout].chunks_exact_mut(cout) {
        r.copy_from_slice(&bias[..cout]);
    }
    matmul_acc(rows, width, cout, &cols, Trans::N, w, Trans::T, F::ONE, out);
    for v in &mut out[..rows * cout] {
        if *v < F::ZERO {
            *v = F::ZERO;
        }
    }
}

/// Reverse of [`conv3x3_relu_forward`] given its input and (post-ReLU)
/// output. `dout` is consumed as scratch.
#[allow(clippy::too_many_arguments)]
pub fn conv3x3_relu_backward<F: Real>(
    input: &[F],
    out: &[F],
    dout: &mut [F],
    batch: usize,
    side: usize,
    cin: usize,
    cout: usize,
    w: &[F],
    dw: &mut [F],
    db: &mut [F],
    din: Option<&mut [F]>,
) {
    let rows = batch * side * side;
    let width = cin * K * K;
    for (d, &o) in dout[..rows * cout].iter_mut().zip(out) {
        if o <= F::ZERO {
            *d = F::ZERO;
        }
    }
    let mut cols = vec![F::ZERO; rows * width];
    im2col(input, batch, side, cin, &mut cols);
    matmul_acc(cout, rows, width, dout, Trans::T, &cols, Trans::N, F::ONE, dw);
    for r in dout[..rows * cout].chunks_exact(cout) {
        for (g, &d) in db.iter_mut().zip(r) {
            *g += d;
        }
    }
    if let Some(din) = din {
        matmul(rows, cout, width, dout, Trans::N, w, Trans::N, &mut cols);
        din[..rows * cin].fill(F::ZERO);
        col2im_acc(&cols, batch, side, cin, din);
    }
}

/// `[batch, c, side, side]` → `[batch, side², c]`.
pub fn chw_to_hwc<F: Real>(src: &[F], batch: usize, channels: usize, area: usize, dst: &mut [F]) {
    for b in 0..batch {
        for c in 0..channels {
            for p in 0..area {
                dst[(b * area + p) * channels + c] = src[(b * channels + c) * area + p];
            }
        }
    }
}

pub fn hwc_to_chw<F: Real>(src: &[F], batch: usize, channels: usize, area: usize, dst: &mut [F]) {
    for b in 0..batch {
        for c in 0..channels {
            for p in 0..area {
                dst[(b * channels + c) * area + p] = src[(b * area + p) * channels + c];
            }
        }
    }
}

/// Parameters of the two-layer encoder.
pub struct ConvStackParams<'a, F> {
    pub w1: &'a Parameter<F>,
    pub b1: &'a Parameter<F>,
    pub w2: &'a Parameter<F>,
    pub b2: &'a Parameter<F>,
}

struct StackDims {
    batch: usize,
    cin: usize,
    side: usize,
    c1: usize,
    c2: usize,
}

fn stack_dims<F: Real>(obs: &Tensor<F>, p: &ConvStackParams<F>) -> Result<StackDims> {
    let s = obs.shape();
    let (batch, cin, h, w) = match *s {
        [c, h, w] => (1, c, h, w),
        [b, c, h, w] => (b, c, h, w),
        _ => return Err(Error::dim("conv2d_stack input", s, &[0, 0, 0])),
    };
    if h != w {
        return Err(Error::dim("conv2d_stack input", s, &[cin, h, h]));
    }
    let w1 = p.w1.shape();
    let w2 = p.w2.shape();
    if w1.len() != 4 || w1[2] != K || w1[3] != K || w2.len() != 4 || w2[2] != K || w2[3] != K {
        return Err(Error::dim("conv2d_stack kernels", w1, w2));
    }
    if w1[1] != cin {
        return Err(Error::Config(format!(
            "observation has {cin} channels but the encoder expects {}",
            w1[1]
        )));
    }
    if w2[1] != w1[0] || p.b1.shape() != [w1[0]] || p.b2.shape() != [w2[0]] {
        return Err(Error::dim("conv2d_stack layers", w1, w2));
    }
    Ok(StackDims {
        batch,
        cin,
        side: h,
        c1: w1[0],
        c2: w2[0],
    })
}

/// Observation encoder: conv+ReLU, conv+ReLU, flatten.
///
/// `obs` is `[C, side, side]` or `[batch, C, side, side]`; the result is
/// `[side²·c2]` or `[batch, side²·c2]`.
pub fn conv2d_stack<F: Real>(obs: &Tensor<F>, p: &ConvStackParams<F>) -> Result<Tensor<F>> {
    let d = stack_dims(obs, p)?;
    let area = d.side * d.side;
    let mut x = vec![F::ZERO; d.batch * area * d.cin];
    chw_to_hwc(obs.data(), d.batch, d.cin, area, &mut x);
    let mut a1 = vec![F::ZERO; d.batch * area * d.c1];
    conv3x3_relu_forward(&x, d.batch, d.side, d.cin, p.w1.value.data(), p.b1.value.data(), d.c1, &mut a1);
    let mut a2 = vec![F::ZERO; d.batch * area * d.c2];
    conv3x3_relu_forward(&a1, d.batch, d.side, d.c1, p.w2.value.data(), p.b2.value.data(), d.c2, &mut a2);
    let shape = if obs.shape().len() == 3 {
        vec![area * d.c2]
    } else {
        vec![d.batch, area * d.c2]
    };
    Tensor::from_vec(&shape, a2)
}

/// Gradients of [`conv2d_stack`]: accumulates into the four parameters and
/// returns `dL/dobs` in the input layout.
pub fn conv2d_stack_backward<F: Real>(
    obs: &Tensor<F>,
    w1: &mut Parameter<F>,
    b1: &mut Parameter<F>,
    w2: &mut Parameter<F>,
    b2: &mut Parameter<F>,
    dy: &Tensor<F>,
) -> Result<Tensor<F>> {
    let d = {
        let view = ConvStackParams { w1, b1, w2, b2 };
        stack_dims(obs, &view)?
    };
    let area = d.side * d.side;
    if dy.len() != d.batch * area * d.c2 {
        return Err(Error::dim("conv2d_stack backward", dy.shape(), &[d.batch, area * d.c2]));
    }
    let mut x = vec![F::ZERO; d.batch * area * d.cin];
    chw_to_hwc(obs.data(), d.batch, d.cin, area, &mut x);
    let mut a1 = vec![F::ZERO; d.batch * area * d.c1];
    conv3x3_relu_forward(&x, d.batch, d.side, d.cin, w1.value.data(), b1.value.data(), d.c1, &mut a1);
    let mut a2 = vec![F::ZERO; d.batch * area * d.c2];
    conv3x3_relu_forward(&a1, d.batch, d.side, d.c1, w2.value.data(), b2.value.data(), d.c2, &mut a2);

    let mut da2 = dy.data().to_vec();
    let mut da1 = vec![F::ZERO; a1.len()];
    conv3x3_relu_backward(
        &a1, &a2, &mut da2, d.batch, d.side, d.c1, d.c2,
        w2.value.data(), w2.grad.data_mut(), b2.grad.data_mut(), Some(&mut da1),
    );
    let mut dx = vec![F::ZERO; x.len()];
    conv3x3_relu_backward(
        &x, &a1, &mut da1, d.batch, d.side, d.cin, d.c1,
        w1.value.data(), w1.grad.data_mut(), b1.grad.data_mut(), Some(&mut dx),
    );
    let mut dobs = vec![F::ZERO; dx.len()];
    hwc_to_chw(&dx, d.batch, d.cin, area, &mut dobs);
    Tensor::from_vec(obs.shape(), dobs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn param(shape: &[usize], f: impl FnMut(usize) -> f64) -> Parameter<f64> {
        let n = shape.iter().product();
        Parameter::new(Tensor::from_vec(shape, (0..n).map(f).collect()).unwrap())
    }

    #[test]
    fn zero_input_zero_bias_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w1 = param(&[4, 3, 3, 3], |_| rng.random_range(-1.0..1.0));
        let w2 = param(&[5, 4, 3, 3], |_| rng.random_range(-1.0..1.0));
        let b1 = Parameter::zeros(&[4]);
        let b2 = Parameter::zeros(&[5]);
        let p = ConvStackParams { w1: &w1, b1: &b1, w2: &w2, b2: &b2 };
        let y = conv2d_stack(&Tensor::zeros(&[3, 7, 7]), &p).unwrap();
        assert_eq!(y.len(), 5 * 49);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn centre_tap_kernels_mix_channels_per_cell() {
        // Kernels that are zero except the centre tap reduce each layer to a
        // per-cell channel mix: out[p, o] = relu(Σ_c W[o, c]·in[p, c] + b[o]).
        let cin = 2;
        let m1 = [[1.0, -2.0], [0.5, 0.25], [-1.0, 1.0]];
        let m2 = [[1.0, 1.0, 2.0]];
        let w1 = param(&[3, cin, 3, 3], |i| {
            let (o, rest) = (i / (cin * 9), i % (cin * 9));
            let (c, tap) = (rest / 9, rest % 9);
            if tap == 4 { m1[o][c] } else { 0.0 }
        });
        let w2 = param(&[1, 3, 3, 3], |i| if i % 9 == 4 { m2[0][i / 9] } else { 0.0 });
        let b1 = param(&[3], |i| [0.1, 0.0, -0.2][i]);
        let b2 = param(&[1], |_| 0.05);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let obs: Vec<f64> = (0..cin * 49).map(|_| rng.random_range(-1.0..1.0)).collect();
        let p = ConvStackParams { w1: &w1, b1: &b1, w2: &w2, b2: &b2 };
        let y = conv2d_stack(&Tensor::from_vec(&[cin, 7, 7], obs.clone()).unwrap(), &p).unwrap();
        for cell in 0..49 {
            let mut hidden = [0.0; 3];
            for o in 0..3 {
                let mut acc = b1.value.data()[o];
                for c in 0..cin {
                    acc += m1[o][c] * obs[c * 49 + cell];
                }
                hidden[o] = f64::max(acc, 0.0);
            }
            let mut out = 0.05;
            for c in 0..3 {
                out += m2[0][c] * hidden[c];
            }
            assert!((y.data()[cell] - out.max(0.0)).abs() < 1e-14);
        }
    }

    #[test]
    fn wrong_channel_count_is_config_error() {
        let w1 = Parameter::<f64>::zeros(&[4, 6, 3, 3]);
        let w2 = Parameter::<f64>::zeros(&[2, 4, 3, 3]);
        let b1 = Parameter::zeros(&[4]);
        let b2 = Parameter::zeros(&[2]);
        let p = ConvStackParams { w1: &w1, b1: &b1, w2: &w2, b2: &b2 };
        let err = conv2d_stack(&Tensor::zeros(&[5, 7, 7]), &p).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn layout_round_trip() {
        let src: Vec<f64> = (0..2 * 3 * 4).map(|i| i as f64).collect();
        let mut hwc = vec![0.0; src.len()];
        let mut back = vec![0.0; src.len()];
        chw_to_hwc(&src, 2, 3, 4, &mut hwc);
        hwc_to_chw(&hwc, 2, 3, 4, &mut back);
        assert_eq!(src, back);
    }
}
