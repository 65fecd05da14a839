//! Central finite-difference check of analytic gradients.

use crate::error::Result;
use crate::params::{Gradients, ParamStore};

/// Step used by [`finite_diff_check`].
pub const DEFAULT_STEP: f64 = 1e-5;

/// Largest relative gradient error over parameter tensors.
///
/// For each tensor the error is `|analytic - numeric| / (|numeric| + 1e-12)`
/// with `|.|` the Euclidean norm over the tensor's entries; `numeric` comes
/// from central differences of `loss` with step `h`. Parameters missing from
/// the analytic gradient count as zero gradient. `loss` must be
/// deterministic, i.e. any noise it uses has to be frozen by the caller.
pub fn finite_diff_check<F>(store: &ParamStore, loss: F) -> Result<f64>
where
    F: Fn(&ParamStore) -> Result<(f64, Gradients)>,
{
    finite_diff_check_with_step(store, loss, DEFAULT_STEP)
}

pub fn finite_diff_check_with_step<F>(store: &ParamStore, loss: F, h: f64) -> Result<f64>
where
    F: Fn(&ParamStore) -> Result<(f64, Gradients)>,
{
    let (_, analytic) = loss(store)?;
    let mut probe = store.clone();
    let mut worst = 0.0f64;
    for id in store.ids() {
        let base = store.get(id).clone();
        let mut numeric = Vec::with_capacity(base.len());
        for j in 0..base.len() {
            let mut t = base.clone();
            t.data_mut()[j] = base.data()[j] + h;
            probe.set(id, t.clone())?;
            let plus = loss(&probe)?.0;
            t.data_mut()[j] = base.data()[j] - h;
            probe.set(id, t)?;
            let minus = loss(&probe)?.0;
            numeric.push((plus - minus) / (2.0 * h));
        }
        probe.set(id, base)?;
        let diff: f64 = match analytic.get(id) {
            Some(a) => a
                .data()
                .iter()
                .zip(&numeric)
                .map(|(a, n)| (a - n) * (a - n))
                .sum(),
            None => numeric.iter().map(|n| n * n).sum(),
        };
        let scale: f64 = numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
        worst = worst.max(diff.sqrt() / (scale + 1e-12));
    }
    Ok(worst)
}
