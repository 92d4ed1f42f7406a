//! Modality projection and user/item representation assembly.
//!
//! Each modality goes through one dense layer with ReLU, then the projected
//! blocks are column-concatenated with the ID embeddings. Ablations drop
//! whole blocks; nothing else changes.

use crate::error::Result;
use crate::params::{ParamId, ParamSet};
use crate::tape::{dense, NodeId, Tape};

/// One dense layer `d_raw -> d_proj` with ReLU.
#[derive(Debug, Clone, Copy)]
pub struct ModalityProjector {
    pub w: ParamId,
    pub b: ParamId,
}

impl ModalityProjector {
    pub fn register(params: &mut ParamSet, name: &str, d_raw: usize, d_proj: usize, seed: u64) -> Self {
        ModalityProjector {
            w: params.register_dense(&format!("{name}.w"), d_raw, d_proj, seed),
            b: params.register_zeros(&format!("{name}.b"), 1, d_proj),
        }
    }

    /// `relu(x W + b)` row-wise; missing-feature rows (all zero) come out as
    /// `relu(b)`.
    pub fn project(&self, tape: &mut Tape, params: &ParamSet, x: NodeId) -> Result<NodeId> {
        let w = tape.param(params, self.w);
        let b = tape.param(params, self.b);
        dense(tape, x, w, b, true)
    }
}

/// `H_u = [E_u | M_proj]`, or just `E_u` when the review block is ablated.
pub fn user_representation(
    tape: &mut Tape,
    e_u: NodeId,
    m_proj: Option<NodeId>,
) -> Result<NodeId> {
    match m_proj {
        Some(m) => tape.concat_cols(&[e_u, m]),
        None => Ok(e_u),
    }
}

/// `H_i = [E_i | V_proj | T_proj]` with ablatable visual/text blocks.
pub fn item_representation(
    tape: &mut Tape,
    e_i: NodeId,
    v_proj: Option<NodeId>,
    t_proj: Option<NodeId>,
) -> Result<NodeId> {
    let mut blocks = vec![e_i];
    if let Some(v) = v_proj {
        blocks.push(v);
    }
    if let Some(t) = t_proj {
        blocks.push(t);
    }
    if blocks.len() == 1 {
        Ok(e_i)
    } else {
        tape.concat_cols(&blocks)
    }
}
