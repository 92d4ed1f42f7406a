//! User-item bipartite graph and symmetric-normalized propagation.
//!
//! Propagation is the linear graph convolution `E_l = D^{-1/2} A D^{-1/2}
//! E_{l-1}` with no feature transform, no nonlinearity, and no self-loops;
//! the per-layer outputs are column-concatenated (layer 0 included) and
//! split back into the user and item blocks.

use crate::data::InteractionTable;
use crate::error::{CoreError, Result};
use crate::tape::{NodeId, SparseSym, Tape};
use std::sync::Arc;

#[derive(Debug, Clone)]
pub struct BipartiteGraph {
    pub m: usize,
    pub n: usize,
    /// Sorted `(user, item)` edge set.
    pub edges: Vec<(u32, u32)>,
    pub degree_u: Vec<u32>,
    pub degree_i: Vec<u32>,
    norm_adj: Arc<SparseSym>,
}

impl BipartiteGraph {
    /// The `(m+n) x (m+n)` symmetric normalized adjacency with entries
    /// `1/sqrt(d_u * d_i)` at `(u, m+i)` for every edge.
    pub fn norm_adj(&self) -> &Arc<SparseSym> {
        &self.norm_adj
    }
}

pub fn build_graph(table: &InteractionTable) -> Result<BipartiteGraph> {
    if table.records.is_empty() {
        return Err(CoreError::EmptyInput("edge list"));
    }
    let m = table.num_users();
    let n = table.num_items();
    let mut edges: Vec<(u32, u32)> = table
        .records
        .iter()
        .map(|&(u, i, _)| (u as u32, i as u32))
        .collect();
    edges.sort_unstable();
    edges.dedup();

    let mut degree_u = vec![0u32; m];
    let mut degree_i = vec![0u32; n];
    for &(u, i) in &edges {
        degree_u[u as usize] += 1;
        degree_i[i as usize] += 1;
    }

    let entries: Vec<(u32, u32, f64)> = edges
        .iter()
        .map(|&(u, i)| {
            let w = 1.0 / ((degree_u[u as usize] as f64 * degree_i[i as usize] as f64).sqrt());
            (u, m as u32 + i, w)
        })
        .collect();

    Ok(BipartiteGraph {
        m,
        n,
        edges,
        degree_u,
        degree_i,
        norm_adj: Arc::new(SparseSym {
            n: m + n,
            entries,
        }),
    })
}

/// Final embeddings after `layers` rounds of propagation: the user block is
/// `m x (layers+1)d`, the item block `n x (layers+1)d`.
pub struct IdEmbeddings {
    pub user: NodeId,
    pub item: NodeId,
}

/// Propagate a stacked `(m+n) x d` layer-0 node through the graph and
/// column-concatenate all layers. Gradients flow back into `e0`.
pub fn propagate(
    tape: &mut Tape,
    graph: &BipartiteGraph,
    e0: NodeId,
    layers: usize,
) -> Result<IdEmbeddings> {
    let stacked = propagate_stacked(tape, graph, e0, layers)?;
    let user = tape.slice_rows(stacked, 0, graph.m)?;
    let item = tape.slice_rows(stacked, graph.m, graph.m + graph.n)?;
    Ok(IdEmbeddings { user, item })
}

/// Same as [`propagate`] but without splitting the blocks.
pub fn propagate_stacked(
    tape: &mut Tape,
    graph: &BipartiteGraph,
    e0: NodeId,
    layers: usize,
) -> Result<NodeId> {
    let rows = tape.value(e0)?.rows();
    if rows != graph.m + graph.n {
        return Err(CoreError::ShapeMismatch {
            op: "propagate",
            left: format!("{} nodes in graph", graph.m + graph.n),
            right: format!("{rows} rows in e0"),
        });
    }
    let mut acc = vec![e0];
    let mut current = e0;
    for _ in 0..layers {
        current = tape.spmm(graph.norm_adj(), current)?;
        acc.push(current);
    }
    if acc.len() == 1 {
        Ok(e0)
    } else {
        tape.concat_cols(&acc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DomainTag;
    use crate::tensor::Tensor2;

    fn tiny_table(pairs: &[(&str, &str)]) -> InteractionTable {
        InteractionTable::from_raw(
            DomainTag::A,
            pairs
                .iter()
                .map(|(u, i)| (u.to_string(), i.to_string(), 1.0, 0i64)),
        )
        .unwrap()
    }

    #[test]
    fn single_edge_norm_entries_are_one() {
        let g = build_graph(&tiny_table(&[("u1", "i1")])).unwrap();
        let dense = g.norm_adj().to_dense();
        assert_eq!(dense.get(0, 1), 1.0);
        assert_eq!(dense.get(1, 0), 1.0);
    }

    #[test]
    fn shared_item_entries_are_inv_sqrt2() {
        let g = build_graph(&tiny_table(&[("u1", "i1"), ("u2", "i1")])).unwrap();
        let dense = g.norm_adj().to_dense();
        let expect = 1.0 / 2.0_f64.sqrt();
        assert!((dense.get(0, 2) - expect).abs() < 1e-15);
        assert!((dense.get(1, 2) - expect).abs() < 1e-15);
    }

    #[test]
    fn zero_layers_returns_e0() {
        let g = build_graph(&tiny_table(&[("u1", "i1")])).unwrap();
        let mut tape = Tape::new();
        let e0 = tape.constant(Tensor2::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let emb = propagate(&mut tape, &g, e0, 0).unwrap();
        assert_eq!(tape.value(emb.user).unwrap().row(0), &[1.0, 0.0]);
        assert_eq!(tape.value(emb.item).unwrap().row(0), &[0.0, 1.0]);
    }

    #[test]
    fn one_layer_swaps_the_single_edge_pair() {
        let g = build_graph(&tiny_table(&[("u1", "i1")])).unwrap();
        let mut tape = Tape::new();
        let e0 = tape.constant(Tensor2::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let emb = propagate(&mut tape, &g, e0, 1).unwrap();
        // layer-0 block then layer-1 block
        assert_eq!(tape.value(emb.user).unwrap().row(0), &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(tape.value(emb.item).unwrap().row(0), &[0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn empty_edge_list_is_error() {
        let t = tiny_table(&[("u1", "i1")]);
        let empty = InteractionTable {
            records: vec![],
            ..t
        };
        assert!(build_graph(&empty).is_err());
    }
}
