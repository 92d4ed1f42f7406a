//! Sparse propagation against a dense matrix oracle, plus input-order
//! invariance and a gradient check through the propagation.

use p2rec_core::data::{DomainTag, InteractionTable};
use p2rec_core::graph::{build_graph, propagate};
use p2rec_core::numcheck::check_gradients;
use p2rec_core::params::ParamSet;
use p2rec_core::rng::stream;
use p2rec_core::tape::Tape;
use p2rec_core::Tensor2;
use rand::Rng;

fn random_table(m: usize, n: usize, seed: u64) -> InteractionTable {
    let mut rng = stream(seed, &["graph-oracle"]);
    let mut pairs = Vec::new();
    // guarantee no zero-degree nodes, then sprinkle extra edges
    for u in 0..m {
        pairs.push((u, rng.gen_range(0..n)));
    }
    for i in 0..n {
        pairs.push((rng.gen_range(0..m), i));
    }
    for _ in 0..(m * n / 4) {
        pairs.push((rng.gen_range(0..m), rng.gen_range(0..n)));
    }
    InteractionTable::from_raw(
        DomainTag::A,
        pairs
            .into_iter()
            .map(|(u, i)| (format!("u{u:03}"), format!("i{i:03}"), 1.0, 0i64)),
    )
    .unwrap()
}

/// Dense D^{-1/2} A D^{-1/2} built straight from the definition.
fn dense_norm_adj(table: &InteractionTable) -> Tensor2 {
    let m = table.num_users();
    let n = table.num_items();
    let mut adj = Tensor2::zeros(m + n, m + n);
    for &(u, i, _) in &table.records {
        adj.set(u, m + i, 1.0);
        adj.set(m + i, u, 1.0);
    }
    let degrees: Vec<f64> = (0..m + n)
        .map(|r| (0..m + n).map(|c| adj.get(r, c)).sum())
        .collect();
    let mut out = Tensor2::zeros(m + n, m + n);
    for r in 0..m + n {
        for c in 0..m + n {
            let a = adj.get(r, c);
            if a != 0.0 {
                out.set(r, c, a / (degrees[r] * degrees[c]).sqrt());
            }
        }
    }
    out
}

#[test]
fn norm_adj_matches_dense_formula() {
    for seed in 0..20u64 {
        let table = random_table(7 + (seed as usize % 5), 9, 100 + seed);
        let graph = build_graph(&table).unwrap();
        let sparse = graph.norm_adj().to_dense();
        let dense = dense_norm_adj(&table);
        let diff = sparse.sub(&dense).unwrap().max_abs();
        assert!(diff < 1e-12, "seed {seed}: max abs diff {diff}");
    }
}

#[test]
fn propagation_matches_dense_repeated_matmul() {
    let mut rng = stream(77, &["prop-oracle"]);
    for seed in 0..30u64 {
        let m = 5 + (seed as usize % 10);
        let n = 6 + (seed as usize % 12);
        let table = random_table(m, n, 200 + seed);
        let graph = build_graph(&table).unwrap();
        let d = 4;
        let e0 = Tensor2::random_uniform(graph.m + graph.n, d, -1.0, 1.0, &mut rng);
        for layers in 0..=3usize {
            let mut tape = Tape::new();
            let e0n = tape.constant(e0.clone());
            let emb = propagate(&mut tape, &graph, e0n, layers).unwrap();

            // oracle: dense repeated matmul, then concatenation
            let dense = dense_norm_adj(&table);
            let mut acc = vec![e0.clone()];
            for l in 1..=layers {
                let prev = acc[l - 1].clone();
                acc.push(dense.matmul(&prev).unwrap());
            }
            let refs: Vec<&Tensor2> = acc.iter().collect();
            let expect = Tensor2::concat_cols(&refs).unwrap();
            let expect_user = expect.slice_rows(0, graph.m).unwrap();
            let expect_item = expect.slice_rows(graph.m, graph.m + graph.n).unwrap();

            let got_user = tape.value(emb.user).unwrap();
            let got_item = tape.value(emb.item).unwrap();
            assert!(got_user.sub(&expect_user).unwrap().max_abs() < 1e-10);
            assert!(got_item.sub(&expect_item).unwrap().max_abs() < 1e-10);
            assert_eq!(got_user.cols(), (layers + 1) * d);
        }
    }
}

#[test]
fn edge_order_permutation_leaves_everything_bit_identical() {
    let mut pairs = vec![
        ("u1", "i1"),
        ("u1", "i2"),
        ("u2", "i2"),
        ("u2", "i3"),
        ("u3", "i1"),
        ("u3", "i3"),
    ];
    let build = |pairs: &[(&str, &str)]| {
        let t = InteractionTable::from_raw(
            DomainTag::A,
            pairs
                .iter()
                .map(|(u, i)| (u.to_string(), i.to_string(), 1.0, 0i64)),
        )
        .unwrap();
        build_graph(&t).unwrap()
    };
    let g1 = build(&pairs);
    pairs.reverse();
    pairs.swap(0, 3);
    let g2 = build(&pairs);
    assert_eq!(g1.edges, g2.edges);
    assert_eq!(g1.norm_adj().entries, g2.norm_adj().entries);

    let e0 = Tensor2::random_uniform(
        g1.m + g1.n,
        3,
        -1.0,
        1.0,
        &mut stream(5, &["perm"]),
    );
    let run = |g: &p2rec_core::graph::BipartiteGraph| {
        let mut tape = Tape::new();
        let e = tape.constant(e0.clone());
        let emb = propagate(&mut tape, g, e, 2).unwrap();
        tape.value(emb.user).unwrap().clone()
    };
    assert_eq!(run(&g1), run(&g2));
}

#[test]
fn propagation_gradient_reaches_e0() {
    let table = random_table(5, 6, 321);
    let graph = build_graph(&table).unwrap();
    let mut params = ParamSet::new();
    let e0 = params.register(
        "e0",
        Tensor2::random_uniform(graph.m + graph.n, 3, -1.0, 1.0, &mut stream(9, &["g"])),
    );
    let err = check_gradients(
        &mut params,
        |tape, p| {
            let e = tape.param(p, e0);
            let emb = propagate(tape, &graph, e, 2)?;
            let readout = tape.sigmoid(emb.user)?;
            tape.reduce_mean(readout)
        },
        1e-5,
        1e-3,
    )
    .unwrap();
    assert!(err < 1e-4, "relative error {err}");
}
