//! Central finite-difference gradient checking.
//!
//! Used by the test suites to validate every tape primitive and the full
//! model chain against an independent derivative estimate.

use crate::error::Result;
use crate::params::ParamSet;
use crate::tape::{NodeId, Tape};

/// `|ad - fd| / max(|ad|, |fd|, floor)`.
pub fn relative_error(ad: f64, fd: f64, floor: f64) -> f64 {
    (ad - fd).abs() / ad.abs().max(fd.abs()).max(floor)
}

/// Check autodiff gradients of a scalar loss against central finite
/// differences over every coordinate of every parameter. Returns the
/// maximum relative error.
///
/// `build` must be a pure function of the parameter values (fix any seeds
/// and masks beforehand).
pub fn check_gradients<B>(params: &mut ParamSet, build: B, h: f64, floor: f64) -> Result<f64>
where
    B: Fn(&mut Tape, &ParamSet) -> Result<NodeId>,
{
    let mut tape = Tape::new();
    let loss = build(&mut tape, params)?;
    tape.backward(loss)?;
    let grads = tape.grads(params);

    let eval = |params: &ParamSet| -> Result<f64> {
        let mut tape = Tape::new();
        let loss = build(&mut tape, params)?;
        tape.value(loss)?.item()
    };

    let ids: Vec<_> = params.ids().collect();
    let mut max_rel: f64 = 0.0;
    for (slot, &id) in ids.iter().enumerate() {
        for k in 0..params.value(id).data().len() {
            let orig = params.value(id).data()[k];
            params.value_mut(id).data_mut()[k] = orig + h;
            let plus = eval(params)?;
            params.value_mut(id).data_mut()[k] = orig - h;
            let minus = eval(params)?;
            params.value_mut(id).data_mut()[k] = orig;
            let fd = (plus - minus) / (2.0 * h);
            let ad = grads[slot].data()[k];
            max_rel = max_rel.max(relative_error(ad, fd, floor));
        }
    }
    Ok(max_rel)
}
