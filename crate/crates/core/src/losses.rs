//! Contrastive objectives, embedding fusion, and the prediction loss.
//!
//! Both contrastive losses contrast each user's own embedding vectors
//! (row-wise), with cosine similarity and a trainable temperature:
//! `-log(positive terms / all terms)` averaged over users.

use crate::error::{CoreError, Result};
use crate::params::{ParamId, ParamSet};
use crate::tape::{dense, NodeId, Tape};
use std::rc::Rc;

/// Similarity scaled by the temperature node, exponentiated: one m x 1
/// column of `exp(cos(a_u, b_u) / tau)`.
fn sim_term(tape: &mut Tape, a: NodeId, b: NodeId, tau: NodeId) -> Result<NodeId> {
    let cos = tape.cosine_rows(a, b)?;
    let scaled = tape.div_scalar(cos, tau)?;
    tape.exp(scaled)
}

fn nce(tape: &mut Tape, positives: &[NodeId], negatives: &[NodeId]) -> Result<NodeId> {
    let mut pos = positives[0];
    for &p in &positives[1..] {
        pos = tape.add(pos, p)?;
    }
    let mut all = pos;
    for &n in negatives {
        all = tape.add(all, n)?;
    }
    let ratio = tape.div_elem(pos, all)?;
    let log = tape.log(ratio)?;
    let neg = tape.scale_const(log, -1.0)?;
    tape.reduce_mean(neg)
}

fn check_tau(tape: &Tape, tau: NodeId) -> Result<()> {
    let v = tape.value(tau)?.item()?;
    if v <= 0.0 {
        return Err(CoreError::InvalidArgument(format!(
            "temperature must be positive, got {v}"
        )));
    }
    Ok(())
}

/// Within-domain loss separating common from specific embeddings.
///
/// Positive pairs: `(Qc, Qc~)`, `(Qs, Qs~)`. Negative pairs: `(Qc, Qs)`,
/// `(Qc, Qs~)`, `(Qs, Qc~)`, `(Qs~, Qc~)`.
pub fn intra_loss(
    tape: &mut Tape,
    q_common: NodeId,
    q_specific: NodeId,
    q_common_aug: NodeId,
    q_specific_aug: NodeId,
    tau: NodeId,
) -> Result<NodeId> {
    check_tau(tape, tau)?;
    let p1 = sim_term(tape, q_common, q_common_aug, tau)?;
    let p2 = sim_term(tape, q_specific, q_specific_aug, tau)?;
    let n1 = sim_term(tape, q_common, q_specific, tau)?;
    let n2 = sim_term(tape, q_common, q_specific_aug, tau)?;
    let n3 = sim_term(tape, q_specific, q_common_aug, tau)?;
    let n4 = sim_term(tape, q_specific_aug, q_common_aug, tau)?;
    nce(tape, &[p1, p2], &[n1, n2, n3, n4])
}

/// Cross-domain loss aligning the two common embeddings and separating the
/// specific ones.
///
/// Positive pair: `(Qc_a, Qc_b)`. Negative pairs: `(Qc_a, Qs_b)`,
/// `(Qc_b, Qs_a)`, `(Qs_a, Qs_b)`.
pub fn inter_loss(
    tape: &mut Tape,
    q_common_a: NodeId,
    q_specific_a: NodeId,
    q_common_b: NodeId,
    q_specific_b: NodeId,
    tau: NodeId,
) -> Result<NodeId> {
    check_tau(tape, tau)?;
    let shape_a = tape.value(q_common_a)?.shape();
    let shape_b = tape.value(q_common_b)?.shape();
    if shape_a.0 != shape_b.0 {
        return Err(CoreError::ShapeMismatch {
            op: "inter_loss",
            left: format!("{} rows in domain A", shape_a.0),
            right: format!("{} rows in domain B", shape_b.0),
        });
    }
    let p = sim_term(tape, q_common_a, q_common_b, tau)?;
    let n1 = sim_term(tape, q_common_a, q_specific_b, tau)?;
    let n2 = sim_term(tape, q_common_b, q_specific_a, tau)?;
    let n3 = sim_term(tape, q_specific_a, q_specific_b, tau)?;
    nce(tape, &[p], &[n1, n2, n3])
}

/// `L_C = L_intra_A + L_intra_B + L_inter` over whichever terms are present
/// (ablations drop terms).
pub fn contrastive_total(l_intra_a: f64, l_intra_b: f64, l_inter: f64) -> f64 {
    l_intra_a + l_intra_b + l_inter
}

/// `L = L_prd_A + L_prd_B + alpha * L_C`.
pub fn total_loss(l_prd_a: f64, l_prd_b: f64, l_contrastive: f64, alpha: f64) -> f64 {
    l_prd_a + l_prd_b + alpha * l_contrastive
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FusionMethod {
    Sum,
    Concat,
    Attention,
}

impl FusionMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            FusionMethod::Sum => "sum",
            FusionMethod::Concat => "concat",
            FusionMethod::Attention => "attention",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(FusionMethod::Sum),
            "concat" => Ok(FusionMethod::Concat),
            "attention" => Ok(FusionMethod::Attention),
            other => Err(CoreError::InvalidArgument(format!(
                "unknown fusion method `{other}`"
            ))),
        }
    }

    /// Width of the fused output for a given embedding width.
    pub fn output_width(self, dim: usize) -> usize {
        match self {
            FusionMethod::Concat => 2 * dim,
            FusionMethod::Sum | FusionMethod::Attention => dim,
        }
    }
}

/// Trainable two-way scorer for attention fusion: per-user softmax weights
/// over `[Qc | Qs]`.
#[derive(Debug, Clone, Copy)]
pub struct AttentionParams {
    pub w: ParamId,
    pub b: ParamId,
}

impl AttentionParams {
    pub fn register(params: &mut ParamSet, name: &str, dim: usize, seed: u64) -> Self {
        AttentionParams {
            w: params.register_dense(&format!("{name}.w"), 2 * dim, 2, seed),
            b: params.register_zeros(&format!("{name}.b"), 1, 2),
        }
    }
}

/// Fuse the obfuscated common and specific embeddings into the final user
/// preference matrix. Fusion is strictly within one domain.
pub fn fuse(
    tape: &mut Tape,
    params: &ParamSet,
    q_common: NodeId,
    q_specific: NodeId,
    method: FusionMethod,
    attention: Option<AttentionParams>,
) -> Result<NodeId> {
    match method {
        FusionMethod::Sum => tape.add(q_common, q_specific),
        FusionMethod::Concat => tape.concat_cols(&[q_common, q_specific]),
        FusionMethod::Attention => {
            let att = attention.ok_or_else(|| {
                CoreError::InvalidArgument("attention fusion needs scorer parameters".into())
            })?;
            let stacked = tape.concat_cols(&[q_common, q_specific])?;
            let w = tape.param(params, att.w);
            let b = tape.param(params, att.b);
            let scores = dense(tape, stacked, w, b, false)?;
            let weights = tape.softmax_rows(scores)?; // m x 2
            let w_c = tape.slice_col(weights, 0)?;
            let w_s = tape.slice_col(weights, 1)?;
            let c_part = tape.mul_col_vec(q_common, w_c)?;
            let s_part = tape.mul_col_vec(q_specific, w_s)?;
            tape.add(c_part, s_part)
        }
    }
}

/// Two-layer predictor over `[H_u* | H_i]` rows; returns logits (apply
/// sigmoid for scores).
#[derive(Debug, Clone, Copy)]
pub struct PredictorParams {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

impl PredictorParams {
    pub fn register(
        params: &mut ParamSet,
        name: &str,
        input: usize,
        hidden: usize,
        seed: u64,
    ) -> Self {
        PredictorParams {
            w1: params.register_dense(&format!("{name}.w1"), input, hidden, seed),
            b1: params.register_zeros(&format!("{name}.b1"), 1, hidden),
            w2: params.register_dense(&format!("{name}.w2"), hidden, 1, seed),
            b2: params.register_zeros(&format!("{name}.b2"), 1, 1),
        }
    }
}

/// Score a batch of `(user, item)` pairs: gather fused user rows and item
/// rows, concatenate, and run the predictor MLP. Output is `batch x 1`
/// logits.
pub fn predict_logits(
    tape: &mut Tape,
    params: &ParamSet,
    h_user_star: NodeId,
    h_item: NodeId,
    users: Rc<Vec<usize>>,
    items: Rc<Vec<usize>>,
    predictor: &PredictorParams,
) -> Result<NodeId> {
    let hu = tape.gather_rows(h_user_star, users)?;
    let hi = tape.gather_rows(h_item, items)?;
    let x = tape.concat_cols(&[hu, hi])?;
    let w1 = tape.param(params, predictor.w1);
    let b1 = tape.param(params, predictor.b1);
    let w2 = tape.param(params, predictor.w2);
    let b2 = tape.param(params, predictor.b2);
    let h = dense(tape, x, w1, b1, true)?;
    dense(tape, h, w2, b2, false)
}

/// Mean binary cross-entropy between `sigmoid(logits)` and 0/1 labels.
pub fn prediction_loss(tape: &mut Tape, logits: NodeId, labels: Rc<Vec<f64>>) -> Result<NodeId> {
    tape.bce_with_logits(logits, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor2;

    fn constant(tape: &mut Tape, rows: &[Vec<f64>]) -> NodeId {
        tape.constant(Tensor2::from_rows(rows).unwrap())
    }

    #[test]
    fn intra_equal_similarities_is_log3() {
        let mut tape = Tape::new();
        let x = constant(&mut tape, &[vec![0.3, -0.8], vec![1.0, 2.0]]);
        let tau = tape.scalar(0.7);
        let loss = intra_loss(&mut tape, x, x, x, x, tau).unwrap();
        let v = tape.value(loss).unwrap().item().unwrap();
        assert!((v - 3.0f64.ln()).abs() < 1e-12, "{v}");
    }

    #[test]
    fn inter_equal_similarities_is_log4() {
        let mut tape = Tape::new();
        let x = constant(&mut tape, &[vec![0.5, 0.1], vec![-1.0, 0.4]]);
        let tau = tape.scalar(1.3);
        let loss = inter_loss(&mut tape, x, x, x, x, tau).unwrap();
        let v = tape.value(loss).unwrap().item().unwrap();
        assert!((v - 4.0f64.ln()).abs() < 1e-12, "{v}");
    }

    #[test]
    fn intra_unit_positive_zero_negative_case() {
        // positive sims = 1 (identical vectors), negative sims = 0
        // (orthogonal), tau = 1 -> -log(2e / (2e + 4))
        let mut tape = Tape::new();
        let qc = constant(&mut tape, &[vec![1.0, 0.0]]);
        let qs = constant(&mut tape, &[vec![0.0, 1.0]]);
        let tau = tape.scalar(1.0);
        let loss = intra_loss(&mut tape, qc, qs, qc, qs, tau).unwrap();
        let v = tape.value(loss).unwrap().item().unwrap();
        let e = std::f64::consts::E;
        let expect = -(2.0 * e / (2.0 * e + 4.0)).ln();
        assert!((v - expect).abs() < 1e-12);
        assert!((v - 0.5514447).abs() < 1e-6);
    }

    #[test]
    fn inter_unit_positive_zero_negative_case() {
        let mut tape = Tape::new();
        let qc_a = constant(&mut tape, &[vec![1.0, 0.0]]);
        let qs_a = constant(&mut tape, &[vec![0.0, 1.0]]);
        // common B aligned with common A, specific B orthogonal to both
        // cannot exist in 2 dims; use 3 dims
        let mut tape = Tape::new();
        let _ = (qc_a, qs_a);
        let qc_a = constant(&mut tape, &[vec![1.0, 0.0, 0.0]]);
        let qs_a = constant(&mut tape, &[vec![0.0, 1.0, 0.0]]);
        let qc_b = constant(&mut tape, &[vec![1.0, 0.0, 0.0]]);
        let qs_b = constant(&mut tape, &[vec![0.0, 0.0, 1.0]]);
        let tau = tape.scalar(1.0);
        let loss = inter_loss(&mut tape, qc_a, qs_a, qc_b, qs_b, tau).unwrap();
        let v = tape.value(loss).unwrap().item().unwrap();
        let e = std::f64::consts::E;
        let expect = -(e / (e + 3.0)).ln();
        assert!((v - expect).abs() < 1e-12);
        assert!((v - 0.7436684).abs() < 1e-6);
    }

    #[test]
    fn nonpositive_temperature_is_rejected() {
        let mut tape = Tape::new();
        let x = constant(&mut tape, &[vec![1.0, 0.0]]);
        let tau = tape.scalar(0.0);
        assert!(intra_loss(&mut tape, x, x, x, x, tau).is_err());
    }

    #[test]
    fn contrastive_and_total_arithmetic() {
        assert_eq!(contrastive_total(1.0, 2.0, 3.0), 6.0);
        assert!((total_loss(1.0, 2.0, 10.0, 0.001) - 3.01).abs() < 1e-12);
        assert_eq!(total_loss(1.0, 2.0, 10.0, 0.0), 3.0);
    }

    #[test]
    fn fusion_sum_and_concat() {
        let params = ParamSet::new();
        let mut tape = Tape::new();
        let qc = constant(&mut tape, &[vec![1.0, 2.0]]);
        let qs = constant(&mut tape, &[vec![3.0, 4.0]]);
        let sum = fuse(&mut tape, &params, qc, qs, FusionMethod::Sum, None).unwrap();
        assert_eq!(tape.value(sum).unwrap().row(0), &[4.0, 6.0]);
        let cat = fuse(&mut tape, &params, qc, qs, FusionMethod::Concat, None).unwrap();
        assert_eq!(tape.value(cat).unwrap().row(0), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn attention_with_equal_scores_is_half_half() {
        let mut params = ParamSet::new();
        // zero weights force equal scores -> softmax 0.5/0.5
        let att = AttentionParams {
            w: params.register("att.w", Tensor2::zeros(4, 2)),
            b: params.register("att.b", Tensor2::zeros(1, 2)),
        };
        let mut tape = Tape::new();
        let qc = constant(&mut tape, &[vec![2.0, 0.0]]);
        let qs = constant(&mut tape, &[vec![0.0, 4.0]]);
        let fused = fuse(
            &mut tape,
            &params,
            qc,
            qs,
            FusionMethod::Attention,
            Some(att),
        )
        .unwrap();
        assert_eq!(tape.value(fused).unwrap().row(0), &[1.0, 2.0]);
    }

    #[test]
    fn bce_closed_forms() {
        let mut tape = Tape::new();
        // logit 0 -> p = 0.5 -> loss ln 2 for either label
        let z = tape.constant(Tensor2::from_vec(2, 1, vec![0.0, 0.0]).unwrap());
        let loss = prediction_loss(&mut tape, z, Rc::new(vec![1.0, 0.0])).unwrap();
        let v = tape.value(loss).unwrap().item().unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-12);

        // strongly positive logit on a positive label -> loss ~ 0
        let z = tape.constant(Tensor2::from_vec(1, 1, vec![50.0]).unwrap());
        let loss = prediction_loss(&mut tape, z, Rc::new(vec![1.0])).unwrap();
        assert!(tape.value(loss).unwrap().item().unwrap() < 1e-20);
    }

    #[test]
    fn empty_batch_is_rejected() {
        let mut tape = Tape::new();
        let z = tape.constant(Tensor2::zeros(0, 1));
        assert!(prediction_loss(&mut tape, z, Rc::new(vec![])).is_err());
    }
}
