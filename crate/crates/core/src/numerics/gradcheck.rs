//! Central finite-difference verification of analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ParamStore;
use crate::error::{Error, Result};

/// Denominator floor of the relative error so entries whose true gradient
/// is ~0 are judged on absolute error.
pub const REL_ERR_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    pub epsilon: f64,
    /// Entries checked per parameter; larger parameters are subsampled.
    pub max_entries: usize,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            epsilon: 1e-5,
            max_entries: 64,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ParamReport {
    pub name: String,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub checked: usize,
    /// Frozen parameters are still checked but excluded from updates.
    pub frozen: bool,
}

#[derive(Clone, Debug, Default)]
pub struct GradReport {
    pub params: Vec<ParamReport>,
}

impl GradReport {
    pub fn max_rel_err(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_err).fold(0.0, f64::max)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.params.iter().all(|p| p.max_rel_err < tol)
    }

    pub fn get(&self, name: &str) -> Option<&ParamReport> {
        self.params.iter().find(|p| p.name == name)
    }
}

/// Compares the gradients already stored in `store` against
/// `(f(θ+ε) − f(θ−ε)) / 2ε`, one entry at a time. Values are restored
/// bit-exactly after each probe.
pub fn grad_check<L>(store: &mut ParamStore<f64>, opts: &GradCheckOptions, mut loss: L) -> Result<GradReport>
where
    L: FnMut(&ParamStore<f64>) -> f64,
{
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let eps = opts.epsilon;
    let names: Vec<String> = store.names().map(str::to_string).collect();
    let mut report = GradReport::default();
    for name in names {
        let id = store.id(&name).expect("name from store");
        let n = store.get(id).value.len();
        let entries: Vec<usize> = if n <= opts.max_entries {
            (0..n).collect()
        } else {
            let mut e = sample(&mut rng, n, opts.max_entries).into_vec();
            e.sort_unstable();
            e
        };
        let mut pr = ParamReport {
            name: name.clone(),
            max_rel_err: 0.0,
            max_abs_err: 0.0,
            checked: entries.len(),
            frozen: store.get(id).frozen,
        };
        for k in entries {
            let orig = store.get(id).value.data()[k];
            store.get_mut(id).value.data_mut()[k] = orig + eps;
            let up = loss(store);
            store.get_mut(id).value.data_mut()[k] = orig - eps;
            let down = loss(store);
            store.get_mut(id).value.data_mut()[k] = orig;
            if !up.is_finite() || !down.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("loss while probing {name}[{k}]"),
                });
            }
            let numeric = (up - down) / (2.0 * eps);
            let analytic = store.get(id).grad.data()[k];
            pr.max_rel_err = pr.max_rel_err.max(relative_error(analytic, numeric));
            pr.max_abs_err = pr.max_abs_err.max((analytic - numeric).abs());
        }
        report.params.push(pr);
    }
    Ok(report)
}
