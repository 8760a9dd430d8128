use super::{Real, Tensor};

/// Max-shifted softmax of one row, written into `out`.
pub fn softmax_row<F: Real>(logits: &[F], out: &mut [F]) {
    let m = logits.iter().copied().fold(logits[0], F::max);
    let mut sum = F::ZERO;
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = (z - m).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// `log softmax` of one row.
pub fn log_softmax_row<F: Real>(logits: &[F], out: &mut [F]) {
    let m = logits.iter().copied().fold(logits[0], F::max);
    let lse = logits.iter().map(|&z| (z - m).exp()).sum::<F>().ln() + m;
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = z - lse;
    }
}

/// Softmax over the last axis; a `[batch, n]` tensor is treated row by row.
///
/// # Panics
/// On an empty tensor.
pub fn softmax<F: Real>(logits: &Tensor<F>) -> Tensor<F> {
    assert!(!logits.is_empty(), "softmax of an empty tensor");
    let n = logits.cols();
    let mut out = Tensor::zeros(logits.shape());
    for (row, o) in logits.data().chunks_exact(n).zip(out.data_mut().chunks_exact_mut(n)) {
        softmax_row(row, o);
    }
    out
}
