use std::fmt;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ParamId, ParamStore, Tape, Var};
use crate::error::Result;

/// Central-difference step. Larger steps leave enough truncation error on
/// curved ops such as L2 normalization or batch norm over a few rows to
/// swamp a 1e-4 comparison.
pub const DEFAULT_EPS: f64 = 1e-6;

/// Gradients below this magnitude are compared in absolute rather than
/// relative terms, so that a true zero against a `1e-9` numerical estimate
/// does not read as a 100% error.
const FLOOR: f64 = 1e-2;

/// Coordinates probed per parameter; larger parameters are subsampled.
const MAX_COORDS: usize = 48;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub coords_checked: usize,
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "max relative error {:.3e} at {}[{}] (analytic {:.6e}, numeric {:.6e}; {} coords)",
            self.max_rel_error,
            self.worst_param,
            self.worst_index,
            self.analytic,
            self.numeric,
            self.coords_checked
        )
    }
}

/// Compares tape gradients with central finite differences.
///
/// `loss` must rebuild the same deterministic scalar from the store each
/// time it is called. The error per coordinate is
/// `|a - n| / max(|a|, |n|, 1e-2)`.
pub fn grad_check<F>(
    store: &mut ParamStore,
    params: &[ParamId],
    eps: f64,
    mut loss: F,
) -> Result<GradCheckReport>
where
    F: FnMut(&mut Tape, &mut ParamStore) -> Result<Var>,
{
    let mut tape = Tape::new();
    let out = loss(&mut tape, store)?;
    let grads = tape.gradients(out)?;

    let mut eval = |store: &mut ParamStore| -> Result<f64> {
        let mut t = Tape::new();
        let v = loss(&mut t, store)?;
        Ok(t.scalar(v))
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        coords_checked: 0,
    };
    for (k, &id) in params.iter().enumerate() {
        let analytic = grads
            .param(id)
            .unwrap_or_else(|| ndarray::Array2::zeros(store.value(id).raw_dim()));
        let len = store.value(id).len();
        let coords: Vec<usize> = if len <= MAX_COORDS {
            (0..len).collect()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(k as u64);
            let mut c = sample(&mut rng, len, MAX_COORDS).into_vec();
            c.sort_unstable();
            c
        };
        for idx in coords {
            let orig = store.value(id).as_slice().expect("standard layout")[idx];
            store.value_mut(id).as_slice_mut().unwrap()[idx] = orig + eps;
            let plus = eval(store);
            store.value_mut(id).as_slice_mut().unwrap()[idx] = orig - eps;
            let minus = eval(store);
            store.value_mut(id).as_slice_mut().unwrap()[idx] = orig;
            let numeric = (plus? - minus?) / (2.0 * eps);
            let a = analytic.as_slice().expect("standard layout")[idx];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FLOOR);
            report.coords_checked += 1;
            if err > report.max_rel_error || report.worst_param.is_empty() {
                report.max_rel_error = err;
                report.worst_param = store.get(id).name.clone();
                report.worst_index = idx;
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}
