use serde::{Deserialize, Serialize};

use crate::env::Action;
use crate::error::{Error, Result};
use crate::numerics::softmax::log_softmax_row;
use crate::numerics::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub value: f64,
    pub entropy: f64,
    pub completion: f64,
}

/// Means over the buffer. `total = policy + c_v·value − c_e·entropy +
/// c_d·completion`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub total: f64,
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub completion: f64,
}

/// Gradient of `total` w.r.t. the network outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct LossGrads<F> {
    pub d_logits: Vec<F>,
    pub d_values: Vec<F>,
    pub d_comp: Vec<F>,
}

/// Advantage actor-critic loss with an entropy bonus and a binary
/// cross-entropy term on the completion logits. Advantages enter as
/// constants. All inputs are step-major over `n` rows; `logits` is
/// `[n, actions]`.
#[allow(clippy::too_many_arguments)]
pub fn a2c_loss<F: Real>(
    logits: &[F],
    values: &[F],
    comp_logits: &[F],
    actions: &[usize],
    returns: &[f64],
    advantages: &[f64],
    completions: &[bool],
    w: &LossWeights,
) -> Result<(LossTerms, LossGrads<F>)> {
    let n = values.len();
    let na = Action::COUNT;
    let lens = [comp_logits.len(), actions.len(), returns.len(), advantages.len(), completions.len()];
    if logits.len() != n * na || lens.iter().any(|&l| l != n) {
        return Err(Error::dim("a2c_loss", &[logits.len(), n], &[n * na, n]));
    }
    let mut terms = LossTerms::default();
    let mut grads = LossGrads {
        d_logits: vec![F::ZERO; n * na],
        d_values: vec![F::ZERO; n],
        d_comp: vec![F::ZERO; n],
    };
    if n == 0 {
        return Ok((terms, grads));
    }
    let inv = 1.0 / n as f64;
    let mut row = vec![0.0f64; na];
    let mut logp = vec![0.0f64; na];
    for k in 0..n {
        for (dst, &z) in row.iter_mut().zip(&logits[k * na..(k + 1) * na]) {
            *dst = z.to_f64();
        }
        log_softmax_row(&row, &mut logp);
        let a = actions[k];
        let adv = advantages[k];
        let entropy: f64 = -logp.iter().map(|&lp| lp.exp() * lp).sum::<f64>();
        terms.policy -= logp[a] * adv;
        terms.entropy += entropy;
        for j in 0..na {
            let pj = logp[j].exp();
            let onehot = if j == a { 1.0 } else { 0.0 };
            // d(−logπ_a·A)/dz_j = −A(1[j=a] − π_j);  d(−H)/dz_j = π_j(logπ_j + H).
            let g = -adv * (onehot - pj) + w.entropy * pj * (logp[j] + entropy);
            grads.d_logits[k * na + j] = F::of(g * inv);
        }
        let v = values[k].to_f64();
        let err = returns[k] - v;
        terms.value += err * err;
        grads.d_values[k] = F::of(-2.0 * w.value * err * inv);
        let x = comp_logits[k].to_f64();
        let y = if completions[k] { 1.0 } else { 0.0 };
        terms.completion += x.softplus() - y * x;
        grads.d_comp[k] = F::of(w.completion * (x.sigmoid() - y) * inv);
    }
    terms.policy *= inv;
    terms.value *= inv;
    terms.entropy *= inv;
    terms.completion *= inv;
    terms.total = terms.policy + w.value * terms.value - w.entropy * terms.entropy + w.completion * terms.completion;
    if !terms.total.is_finite() {
        return Err(Error::NonFinite {
            context: format!(
                "a2c loss (policy {}, value {}, entropy {}, completion {})",
                terms.policy, terms.value, terms.entropy, terms.completion
            ),
        });
    }
    Ok((terms, grads))
}
