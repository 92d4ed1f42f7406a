//! Disentangling MLPs and the feature-dropout augmentation.
//!
//! Two parameter-disjoint MLPs map each user representation to a
//! domain-specific and a domain-common embedding. The augmented views pass
//! a column-dropout-masked copy of the same representation through the same
//! two MLPs; the mask is resampled per training step and shared between
//! both branches of that step.

use crate::error::{CoreError, Result};
use crate::params::{ParamId, ParamSet};
use crate::rng::stream;
use crate::tape::{dense, NodeId, Tape};
use rand::Rng;
use std::rc::Rc;

/// Two dense layers: hidden with ReLU, linear output.
#[derive(Debug, Clone, Copy)]
pub struct DisentangleMlp {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

impl DisentangleMlp {
    pub fn register(
        params: &mut ParamSet,
        name: &str,
        input: usize,
        hidden: usize,
        output: usize,
        seed: u64,
    ) -> Self {
        DisentangleMlp {
            w1: params.register_dense(&format!("{name}.w1"), input, hidden, seed),
            b1: params.register_zeros(&format!("{name}.b1"), 1, hidden),
            w2: params.register_dense(&format!("{name}.w2"), hidden, output, seed),
            b2: params.register_zeros(&format!("{name}.b2"), 1, output),
        }
    }

    pub fn forward(&self, tape: &mut Tape, params: &ParamSet, x: NodeId) -> Result<NodeId> {
        let w1 = tape.param(params, self.w1);
        let b1 = tape.param(params, self.b1);
        let w2 = tape.param(params, self.w2);
        let b2 = tape.param(params, self.b2);
        let h = dense(tape, x, w1, b1, true)?;
        dense(tape, h, w2, b2, false)
    }
}

/// `P_s = MLP(H_u; specific)`, `P_c = MLP(H_u; common)`.
pub fn disentangle(
    tape: &mut Tape,
    params: &ParamSet,
    h_u: NodeId,
    mlp_specific: &DisentangleMlp,
    mlp_common: &DisentangleMlp,
) -> Result<(NodeId, NodeId)> {
    let p_s = mlp_specific.forward(tape, params, h_u)?;
    let p_c = mlp_common.forward(tape, params, h_u)?;
    Ok((p_s, p_c))
}

/// Column dropout mask with inverted scaling: each column is zeroed with
/// probability `rate`, survivors are scaled by `1/(1-rate)`.
pub fn dropout_mask(cols: usize, rate: f64, seed: u64, labels: &[&str]) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(CoreError::InvalidArgument(format!(
            "dropout rate {rate} out of [0, 1)"
        )));
    }
    if rate == 0.0 {
        return Ok(vec![1.0; cols]);
    }
    let mut rng = stream(seed, labels);
    let keep = 1.0 / (1.0 - rate);
    Ok((0..cols)
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
        .collect())
}

/// Augmented views: mask `H_u`, then run the same two MLPs.
pub fn augment_dropout(
    tape: &mut Tape,
    params: &ParamSet,
    h_u: NodeId,
    mask: Rc<Vec<f64>>,
    mlp_specific: &DisentangleMlp,
    mlp_common: &DisentangleMlp,
) -> Result<(NodeId, NodeId)> {
    let masked = tape.mul_row_const(h_u, mask)?;
    disentangle(tape, params, masked, mlp_specific, mlp_common)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor2;

    fn mlp(params: &mut ParamSet, name: &str) -> DisentangleMlp {
        DisentangleMlp::register(params, name, 3, 4, 2, 7)
    }

    #[test]
    fn zero_input_zero_bias_gives_zero_outputs() {
        let mut params = ParamSet::new();
        let s = mlp(&mut params, "s");
        let c = mlp(&mut params, "c");
        let mut tape = Tape::new();
        let h = tape.constant(Tensor2::zeros(2, 3));
        let (ps, pc) = disentangle(&mut tape, &params, h, &s, &c).unwrap();
        assert_eq!(tape.value(ps).unwrap(), &Tensor2::zeros(2, 2));
        assert_eq!(tape.value(pc).unwrap(), &Tensor2::zeros(2, 2));
    }

    #[test]
    fn identical_parameters_give_identical_outputs() {
        let mut params = ParamSet::new();
        let s = mlp(&mut params, "same");
        let mut tape = Tape::new();
        let mut rng = stream(3, &["disen-test"]);
        let h = tape.constant(Tensor2::random_uniform(4, 3, -1.0, 1.0, &mut rng));
        let (ps, pc) = disentangle(&mut tape, &params, h, &s, &s).unwrap();
        assert_eq!(tape.value(ps).unwrap(), tape.value(pc).unwrap());
    }

    #[test]
    fn rate_zero_mask_is_identity() {
        let mask = dropout_mask(5, 0.0, 9, &["m"]).unwrap();
        assert_eq!(mask, vec![1.0; 5]);
    }

    #[test]
    fn invalid_rate_is_rejected() {
        assert!(dropout_mask(5, 1.0, 9, &["m"]).is_err());
        assert!(dropout_mask(5, -0.1, 9, &["m"]).is_err());
    }

    #[test]
    fn augmented_views_share_one_mask() {
        let mut params = ParamSet::new();
        let s = mlp(&mut params, "s");
        let c = mlp(&mut params, "c");
        let mut tape = Tape::new();
        let mut rng = stream(4, &["disen-test2"]);
        let h = tape.constant(Tensor2::random_uniform(4, 3, -1.0, 1.0, &mut rng));
        let mask = Rc::new(dropout_mask(3, 0.5, 42, &["step-mask"]).unwrap());
        // rate 0 equivalence: with an all-ones mask the augmented views equal
        // the plain ones
        let ones = Rc::new(vec![1.0; 3]);
        let (ps, pc) = disentangle(&mut tape, &params, h, &s, &c).unwrap();
        let (aps, apc) = augment_dropout(&mut tape, &params, h, ones, &s, &c).unwrap();
        assert_eq!(tape.value(ps).unwrap(), tape.value(aps).unwrap());
        assert_eq!(tape.value(pc).unwrap(), tape.value(apc).unwrap());
        // the same Rc mask drives both branches by construction
        let (m1, m2) = (Rc::clone(&mask), Rc::clone(&mask));
        assert!(Rc::ptr_eq(&m1, &m2));
    }
}
