//! Central finite-difference oracle for tape gradients.
//!
//! The numeric side only ever runs forward passes, so it shares no code with
//! [`Tape::backward`](crate::nn::Tape::backward).

use rand::seq::index::sample;
use rand::Rng;

use crate::error::Result;
use crate::nn::tape::{Tape, Var};
use crate::nn::tensor::{Grads, ParamStore};

/// Step of the five-point central stencil. Truncation and rounding error are
/// both around 1e-12 at this size for the losses checked here.
pub const FD_STEP: f64 = 1e-3;

/// Gradients with magnitude below this floor are compared absolutely.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, Default)]
pub struct GradCheck {
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst: Option<(String, usize, f64, f64)>,
}

pub fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
}

/// Compares analytic and central-difference gradients of the scalar built by
/// `f`, on at most `per_tensor` randomly chosen entries of every parameter.
pub fn check<F, R>(store: &mut ParamStore, f: F, per_tensor: usize, rng: &mut R) -> Result<GradCheck>
where
    F: Fn(&mut Tape) -> Result<Var>,
    R: Rng + ?Sized,
{
    store.zero_grad();
    {
        let (params, grads) = store.split();
        let mut tape = Tape::new(params);
        let out = f(&mut tape)?;
        tape.backward(out, grads)?;
    }
    let analytic: Grads = store.grads().clone();
    store.zero_grad();

    let eval = |store: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new(store.params());
        let out = f(&mut tape)?;
        tape.check()?;
        Ok(tape.scalar(out))
    };

    let mut report = GradCheck::default();
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let n = store.value(id).len();
        for k in sample(rng, n, per_tensor.min(n)) {
            let orig = store.value(id).data()[k];
            let mut at = |dx: f64| -> Result<f64> {
                store.value_mut(id).data_mut()[k] = orig + dx;
                eval(store)
            };
            let (p1, m1) = (at(FD_STEP)?, at(-FD_STEP)?);
            let (p2, m2) = (at(2.0 * FD_STEP)?, at(-2.0 * FD_STEP)?);
            store.value_mut(id).data_mut()[k] = orig;
            let numeric = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * FD_STEP);
            let a = analytic.get(id).data()[k];
            let err = rel_error(a, numeric);
            report.checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = Some((store.params().name(id).to_string(), k, a, numeric));
            }
        }
    }
    Ok(report)
}
