//! Preprocessing oracles: hand-run k-core peeling cases, Monte-Carlo
//! frequency checks for splits and negative sampling, and synthetic
//! generator properties.

use p2rec_core::data::{
    generate_synthetic_cdr, kcore_filter, leave_one_out_split, sample_negatives, DomainTag,
    InteractionTable, SyntheticSpec,
};
use p2rec_core::error::CoreError;

fn table(domain: DomainTag, pairs: &[(&str, &str)]) -> InteractionTable {
    InteractionTable::from_raw(
        domain,
        pairs
            .iter()
            .map(|(u, i)| (u.to_string(), i.to_string(), 1.0, 0i64)),
    )
    .unwrap()
}

/// Mirror of the same structure in both domains so the common-user
/// intersection is a no-op.
fn mirrored(pairs: &[(&str, &str)]) -> (InteractionTable, InteractionTable) {
    (table(DomainTag::A, pairs), table(DomainTag::B, pairs))
}

#[test]
fn k1_filter_is_identity_after_intersection() {
    let (a, b) = mirrored(&[("u1", "i1"), ("u1", "i2"), ("u2", "i1")]);
    let (fa, fb) = kcore_filter(&a, &b, 1).unwrap();
    assert_eq!(fa, a);
    assert_eq!(fb, b);
}

#[test]
fn star_graph_collapses_under_k2() {
    // 1 user with 5 items of degree 1: peeling removes the items (degree
    // 1 < 2), then the user, leaving nothing
    let star: Vec<(&str, &str)> = vec![
        ("u1", "i1"),
        ("u1", "i2"),
        ("u1", "i3"),
        ("u1", "i4"),
        ("u1", "i5"),
    ];
    let (a, b) = mirrored(&star);
    assert!(matches!(
        kcore_filter(&a, &b, 2),
        Err(CoreError::FilteredToEmpty)
    ));
}

#[test]
fn complete_block_survives_k5_and_stray_user_is_peeled() {
    // 6x6 complete block plus one degree-1 user attached to a block item
    let mut pairs = Vec::new();
    for u in 0..6 {
        for i in 0..6 {
            pairs.push((format!("u{u}"), format!("i{i}")));
        }
    }
    pairs.push(("stray".to_string(), "i0".to_string()));
    let borrowed: Vec<(&str, &str)> = pairs.iter().map(|(u, i)| (u.as_str(), i.as_str())).collect();
    let (a, b) = mirrored(&borrowed);
    let (fa, fb) = kcore_filter(&a, &b, 5).unwrap();

    // hand-run oracle: stray has degree 1 < 5 and is removed; i0 drops to
    // degree 6, still >= 5; block users/items all have degree 6
    assert_eq!(fa.num_users(), 6);
    assert_eq!(fa.num_items(), 6);
    assert_eq!(fa.num_interactions(), 36);
    assert!(fa.users.get("stray").is_none());
    assert_eq!(fa.users, fb.users, "shared user vocabulary");
}

#[test]
fn peeling_cascades_to_fixpoint() {
    // chain where removing the tail repeatedly lowers the next degree:
    // u1: i1 i2 i3 (deg 3), u2: i1 i2 (deg 2), u3: i1 (deg 1)
    // k=2: u3 removed -> i1 degree 2; i3 degree 1 -> removed -> u1 degree 2;
    // all degrees >= 2 now
    let pairs = &[
        ("u1", "i1"),
        ("u1", "i2"),
        ("u1", "i3"),
        ("u2", "i1"),
        ("u2", "i2"),
        ("u3", "i1"),
    ];
    let (a, b) = mirrored(pairs);
    let (fa, _) = kcore_filter(&a, &b, 2).unwrap();
    assert_eq!(fa.num_users(), 2);
    assert_eq!(fa.num_items(), 2);
    // invariant: exhaustive degree scan
    assert!(fa.user_degrees().iter().all(|&d| d >= 2));
    assert!(fa.item_degrees().iter().all(|&d| d >= 2));
}

#[test]
fn intersection_feeds_back_into_peeling() {
    // u_only_a has degree 2 in A but is absent from B: the intersection
    // removes it, which drops i1's degree in A below 2 and forces another
    // peel round
    let a = table(
        DomainTag::A,
        &[
            ("common1", "i1"),
            ("common1", "i2"),
            ("common2", "i1"),
            ("common2", "i2"),
            ("only_a", "i1"),
            ("only_a", "i3"),
            ("only_a2", "i3"),
        ],
    );
    let b = table(
        DomainTag::B,
        &[
            ("common1", "j1"),
            ("common1", "j2"),
            ("common2", "j1"),
            ("common2", "j2"),
        ],
    );
    let (fa, fb) = kcore_filter(&a, &b, 2).unwrap();
    assert_eq!(fa.users.keys(), fb.users.keys());
    assert_eq!(fa.num_users(), 2);
    assert!(fa.items.get("i3").is_none());
    assert!(fa.user_degrees().iter().all(|&d| d >= 2));
    assert!(fa.item_degrees().iter().all(|&d| d >= 2));
}

#[test]
fn split_holdout_frequency_is_uniform() {
    // user with {i1, i2}: over 10000 seeds i1 is held out 5000 +- 200 times
    let t = table(DomainTag::A, &[("u1", "i1"), ("u1", "i2")]);
    let i1 = t.items.get("i1").unwrap();
    let mut count = 0;
    for seed in 0..10_000u64 {
        let split = leave_one_out_split(&t, seed).unwrap();
        if split.test[0].1 == i1 {
            count += 1;
        }
    }
    assert!((4800..=5200).contains(&count), "i1 held out {count} times");
}

#[test]
fn negative_sampling_is_uniform_over_candidates() {
    // u1 interacted with i1 of {i1, i2, i3}: over 10000 draws each
    // candidate appears 5000 +- 200 times
    let t = table(DomainTag::A, &[("u1", "i1"), ("u2", "i2"), ("u2", "i3")]);
    let i2 = t.items.get("i2").unwrap();
    let mut count_i2 = 0;
    for seed in 0..10_000u64 {
        let negs = sample_negatives(&t, 1, seed).unwrap();
        let (u, item, label) = negs[0];
        assert_eq!((u, label), (0, 0));
        if item == i2 {
            count_i2 += 1;
        }
    }
    assert!((4800..=5200).contains(&count_i2), "i2 drawn {count_i2} times");
}

#[test]
fn negative_count_matches_ratio() {
    let t = table(
        DomainTag::A,
        &[("u1", "i1"), ("u1", "i2"), ("u2", "i3"), ("u2", "i1")],
    );
    let negs = sample_negatives(&t, 1, 3).unwrap();
    assert_eq!(negs.len(), t.num_interactions());
    let negs = sample_negatives(&t, 3, 3).unwrap();
    assert_eq!(negs.len(), 3 * t.num_interactions());
    // negatives never collide with the user's positives
    let by_user = t.items_by_user();
    for (u, i, _) in negs {
        assert!(!by_user[u].contains(&i));
    }
}

#[test]
fn synthetic_density_tracks_target() {
    let spec = SyntheticSpec {
        users: 60,
        items_a: 50,
        items_b: 50,
        target_density: Some(0.08),
        min_degree: 0,
        ..Default::default()
    };
    let mut densities = Vec::new();
    for seed in 0..10u64 {
        let data = generate_synthetic_cdr(&spec, seed).unwrap();
        // density over the generated universe, not the re-densified vocab
        densities.push(data.table_a.num_interactions() as f64 / (60.0 * 50.0));
    }
    let mean = densities.iter().sum::<f64>() / densities.len() as f64;
    assert!(
        (mean - 0.08).abs() <= 0.2 * 0.08,
        "mean generated density {mean} vs target 0.08"
    );
}

#[test]
fn split_partitions_synthetic_table_exactly() {
    let spec = SyntheticSpec {
        users: 40,
        items_a: 30,
        items_b: 30,
        ..Default::default()
    };
    let data = generate_synthetic_cdr(&spec, 9).unwrap();
    let split = leave_one_out_split(&data.table_a, 7).unwrap();
    assert_eq!(split.test.len(), data.table_a.num_users());
    assert_eq!(
        split.train.num_interactions() + split.test.len(),
        data.table_a.num_interactions()
    );
    // every test pair exists in the original table and not in train
    for &(u, i) in &split.test {
        assert!(data
            .table_a
            .records
            .iter()
            .any(|&(tu, ti, _)| tu == u && ti == i));
        assert!(!split
            .train
            .records
            .iter()
            .any(|&(tu, ti, _)| tu == u && ti == i));
    }
}
