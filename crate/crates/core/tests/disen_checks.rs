//! Dropout-mask statistics and the augmentation expectation property.

use p2rec_core::disentangle::{augment_dropout, disentangle, dropout_mask, DisentangleMlp};
use p2rec_core::params::ParamSet;
use p2rec_core::rng::stream;
use p2rec_core::tape::Tape;
use p2rec_core::Tensor2;
use std::rc::Rc;

#[test]
fn mask_zero_fraction_matches_rate() {
    // 10^5 columns at rate 0.3 -> zero fraction within 0.30 +- 0.01
    let mask = dropout_mask(100_000, 0.3, 11, &["frac"]).unwrap();
    let zeros = mask.iter().filter(|&&v| v == 0.0).count() as f64;
    let frac = zeros / mask.len() as f64;
    assert!((frac - 0.3).abs() < 0.01, "zero fraction {frac}");
    // survivors carry the inverse-keep scale
    assert!(mask.iter().all(|&v| v == 0.0 || (v - 1.0 / 0.7).abs() < 1e-12));
}

#[test]
fn dropout_expectation_recovers_input() {
    // mean over 1000 masks of the rescaled input approaches the input
    let mut rng = stream(3, &["expect"]);
    let h = Tensor2::random_uniform(4, 32, -1.0, 1.0, &mut rng);
    let mut acc = Tensor2::zeros(4, 32);
    let n_masks = 1000;
    for s in 0..n_masks {
        let mask = dropout_mask(32, 0.2, 1000 + s, &["expect-mask"]).unwrap();
        let mut masked = h.clone();
        for r in 0..4 {
            for (c, &m) in mask.iter().enumerate() {
                masked.set(r, c, masked.get(r, c) * m);
            }
        }
        acc.add_assign(&masked).unwrap();
    }
    let mean = acc.scale(1.0 / n_masks as f64);
    let max_dev = mean.sub(&h).unwrap().max_abs();
    // 5% of the input scale at 1000 masks
    assert!(max_dev < 0.05 * 1.0, "max deviation {max_dev}");
}

#[test]
fn rate_zero_augmentation_equals_plain_views() {
    let mut params = ParamSet::new();
    let s = DisentangleMlp::register(&mut params, "s", 6, 8, 4, 5);
    let c = DisentangleMlp::register(&mut params, "c", 6, 8, 4, 5);
    let mut tape = Tape::new();
    let h = tape.constant(Tensor2::random_uniform(
        5,
        6,
        -1.0,
        1.0,
        &mut stream(8, &["h"]),
    ));
    let mask = Rc::new(dropout_mask(6, 0.0, 1, &["m"]).unwrap());
    let (ps, pc) = disentangle(&mut tape, &params, h, &s, &c).unwrap();
    let (aps, apc) = augment_dropout(&mut tape, &params, h, mask, &s, &c).unwrap();
    assert_eq!(tape.value(ps).unwrap(), tape.value(aps).unwrap());
    assert_eq!(tape.value(pc).unwrap(), tape.value(apc).unwrap());
}

#[test]
fn disentangled_outputs_are_deterministic_in_inputs() {
    let mut params = ParamSet::new();
    let s = DisentangleMlp::register(&mut params, "s", 6, 8, 4, 5);
    let c = DisentangleMlp::register(&mut params, "c", 6, 8, 4, 5);
    let h_val = Tensor2::random_uniform(5, 6, -1.0, 1.0, &mut stream(9, &["h2"]));
    let run = || {
        let mut tape = Tape::new();
        let h = tape.constant(h_val.clone());
        let (ps, pc) = disentangle(&mut tape, &params, h, &s, &c).unwrap();
        (
            tape.value(ps).unwrap().clone(),
            tape.value(pc).unwrap().clone(),
        )
    };
    assert_eq!(run(), run());
}
