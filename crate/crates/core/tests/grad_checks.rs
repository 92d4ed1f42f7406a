//! Finite-difference oracles for every tape primitive, a 3-layer MLP, and
//! the Adam update formula.

use p2rec_core::numcheck::check_gradients;
use p2rec_core::params::ParamSet;
use p2rec_core::rng::stream;
use p2rec_core::tape::{NodeId, SparseSym, Tape};
use p2rec_core::{adam, Result, Tensor2};
use std::rc::Rc;
use std::sync::Arc;

const H: f64 = 1e-5;
const FLOOR: f64 = 1e-3;
const TOL: f64 = 1e-4;

fn random(rows: usize, cols: usize, seed: u64) -> Tensor2 {
    let mut rng = stream(seed, &["grad-check"]);
    Tensor2::random_uniform(rows, cols, -1.0, 1.0, &mut rng)
}

/// Random values bounded away from relu/log kinks.
fn random_positive(rows: usize, cols: usize, seed: u64) -> Tensor2 {
    let mut rng = stream(seed, &["grad-check-pos"]);
    Tensor2::random_uniform(rows, cols, 0.2, 1.2, &mut rng)
}

fn check<B>(params: &mut ParamSet, build: B)
where
    B: Fn(&mut Tape, &ParamSet) -> Result<NodeId>,
{
    let err = check_gradients(params, build, H, FLOOR).unwrap();
    assert!(err < TOL, "max relative error {err}");
}

#[test]
fn matmul_and_reductions() {
    let mut params = ParamSet::new();
    let a = params.register("a", random(3, 4, 1));
    let b = params.register("b", random(4, 2, 2));
    check(&mut params, |tape, p| {
        let an = tape.param(p, a);
        let bn = tape.param(p, b);
        let y = tape.matmul(an, bn)?;
        tape.reduce_mean(y)
    });
}

#[test]
fn elementwise_binary_ops() {
    let mut params = ParamSet::new();
    let a = params.register("a", random(3, 3, 3));
    let b = params.register("b", random_positive(3, 3, 4));
    check(&mut params, |tape, p| {
        let an = tape.param(p, a);
        let bn = tape.param(p, b);
        let add = tape.add(an, bn)?;
        let sub = tape.sub(add, bn)?;
        let mul = tape.mul_elem(sub, bn)?;
        let div = tape.div_elem(mul, bn)?;
        tape.reduce_sum(div)
    });
}

#[test]
fn activations_and_log_exp() {
    let mut params = ParamSet::new();
    let a = params.register("a", random_positive(4, 3, 5));
    check(&mut params, |tape, p| {
        let an = tape.param(p, a);
        let r = tape.relu(an)?;
        let s = tape.sigmoid(r)?;
        let e = tape.exp(s)?;
        let l = tape.log(e)?;
        tape.reduce_mean(l)
    });
}

#[test]
fn add_bias_broadcast() {
    let mut params = ParamSet::new();
    let x = params.register("x", random(5, 3, 6));
    let b = params.register("b", random(1, 3, 7));
    check(&mut params, |tape, p| {
        let xn = tape.param(p, x);
        let bn = tape.param(p, b);
        let y = tape.add_bias(xn, bn)?;
        let y = tape.sigmoid(y)?;
        tape.reduce_mean(y)
    });
}

#[test]
fn concat_slice_gather() {
    let mut params = ParamSet::new();
    let a = params.register("a", random(3, 2, 8));
    let b = params.register("b", random(3, 3, 9));
    let c = params.register("c", random(2, 5, 10));
    check(&mut params, |tape, p| {
        let an = tape.param(p, a);
        let bn = tape.param(p, b);
        let cn = tape.param(p, c);
        let cat = tape.concat_cols(&[an, bn])?; // 3 x 5
        let stacked = tape.concat_rows(&[cat, cn])?; // 5 x 5
        let sliced = tape.slice_rows(stacked, 1, 4)?; // 3 x 5
        // gather with a duplicate row to exercise scatter accumulation
        let gathered = tape.gather_rows(sliced, Rc::new(vec![0, 2, 2]))?;
        let col = tape.slice_col(gathered, 3)?;
        let sq = tape.mul_elem(col, col)?;
        tape.reduce_sum(sq)
    });
}

#[test]
fn dropout_mask_application() {
    let mut params = ParamSet::new();
    let x = params.register("x", random(4, 6, 11));
    let mask = Rc::new(vec![0.0, 2.0, 0.0, 2.0, 2.0, 0.0]);
    check(&mut params, move |tape, p| {
        let xn = tape.param(p, x);
        let masked = tape.mul_row_const(xn, Rc::clone(&mask))?;
        let y = tape.sigmoid(masked)?;
        tape.reduce_mean(y)
    });
}

#[test]
fn cosine_rows_both_sides() {
    let mut params = ParamSet::new();
    let a = params.register("a", random(4, 5, 12));
    let b = params.register("b", random(4, 5, 13));
    check(&mut params, |tape, p| {
        let an = tape.param(p, a);
        let bn = tape.param(p, b);
        let cos = tape.cosine_rows(an, bn)?;
        tape.reduce_mean(cos)
    });
}

#[test]
fn scalar_broadcast_ops_reach_the_scalar() {
    let mut params = ParamSet::new();
    let x = params.register("x", random(3, 4, 14));
    let s = params.register("s", Tensor2::scalar(0.8));
    check(&mut params, |tape, p| {
        let xn = tape.param(p, x);
        let sn = tape.param(p, s);
        let tau = tape.exp(sn)?; // keep positive, exercise chain into scalar
        let d = tape.div_scalar(xn, tau)?;
        let m = tape.mul_scalar(d, tau)?;
        let sc = tape.scale_const(m, 0.7)?;
        tape.reduce_mean(sc)
    });
}

#[test]
fn softmax_and_column_weighting() {
    let mut params = ParamSet::new();
    let x = params.register("x", random(4, 2, 15));
    let v = params.register("v", random(4, 3, 16));
    check(&mut params, |tape, p| {
        let xn = tape.param(p, x);
        let vn = tape.param(p, v);
        let w = tape.softmax_rows(xn)?;
        let w0 = tape.slice_col(w, 0)?;
        let scaled = tape.mul_col_vec(vn, w0)?;
        tape.reduce_sum(scaled)
    });
}

#[test]
fn bce_with_logits_gradient() {
    let mut params = ParamSet::new();
    let z = params.register("z", random(6, 1, 17));
    let labels = Rc::new(vec![1.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
    check(&mut params, move |tape, p| {
        let zn = tape.param(p, z);
        tape.bce_with_logits(zn, Rc::clone(&labels))
    });
}

#[test]
fn spmm_propagation_gradient() {
    let adj = Arc::new(SparseSym {
        n: 4,
        entries: vec![(0, 2, 0.7), (0, 3, 0.5), (1, 2, 1.0)],
    });
    let mut params = ParamSet::new();
    let e0 = params.register("e0", random(4, 3, 18));
    check(&mut params, move |tape, p| {
        let e = tape.param(p, e0);
        let l1 = tape.spmm(&adj, e)?;
        let l2 = tape.spmm(&adj, l1)?;
        let cat = tape.concat_cols(&[e, l1, l2])?;
        let y = tape.sigmoid(cat)?;
        tape.reduce_mean(y)
    });
}

#[test]
fn three_layer_mlp_matches_finite_differences() {
    let mut params = ParamSet::new();
    let x = random(5, 6, 19);
    let w1 = params.register("w1", random(6, 8, 20).scale(0.5));
    let b1 = params.register("b1", random(1, 8, 21).scale(0.1));
    let w2 = params.register("w2", random(8, 7, 22).scale(0.5));
    let b2 = params.register("b2", random(1, 7, 23).scale(0.1));
    let w3 = params.register("w3", random(7, 1, 24).scale(0.5));
    let b3 = params.register("b3", random(1, 1, 25).scale(0.1));
    let labels = Rc::new(vec![1.0, 0.0, 1.0, 0.0, 1.0]);
    check(&mut params, move |tape, p| {
        let xn = tape.constant(x.clone());
        let (w1, b1) = (tape.param(p, w1), tape.param(p, b1));
        let (w2, b2) = (tape.param(p, w2), tape.param(p, b2));
        let (w3, b3) = (tape.param(p, w3), tape.param(p, b3));
        let h1 = p2rec_core::tape::dense(tape, xn, w1, b1, true)?;
        let h2 = p2rec_core::tape::dense(tape, h1, w2, b2, true)?;
        let z = p2rec_core::tape::dense(tape, h2, w3, b3, false)?;
        tape.bce_with_logits(z, Rc::clone(&labels))
    });
}

#[test]
fn adam_two_runs_are_bit_identical() {
    let run = || {
        let mut params = ParamSet::new();
        params.register("w", random(4, 4, 30));
        let mut opt = adam::Adam::new(adam::AdamConfig::default(), &params);
        for step in 0..10 {
            let grad = random(4, 4, 100 + step);
            opt.step(&mut params, &[grad]).unwrap();
        }
        params.value(params.id("w").unwrap()).clone()
    };
    assert_eq!(run(), run());
}
