//! Synthetic dual-domain dataset with planted common/specific structure.
//!
//! Each shared user gets a common latent plus one specific latent per
//! domain; items get matching latents. An interaction happens when the
//! combined affinity (optionally shifted to hit a target density, plus
//! logistic noise) is positive. Modality feature tables are noisy linear
//! images of the latents, so review/text/visual features genuinely carry
//! the planted signal.

use crate::data::features::{EntityKind, FeatureTable, Modality};
use crate::data::interactions::{DomainTag, InteractionTable};
use crate::error::{CoreError, Result};
use crate::rng::stream;
use crate::tensor::Tensor2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;

#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub users: usize,
    pub items_a: usize,
    pub items_b: usize,
    pub d_common: usize,
    pub d_specific: usize,
    /// Scale of the logistic noise added to affinities; 0 gives the
    /// deterministic sign rule.
    pub noise: f64,
    /// When set, affinities are shifted so the expected interaction density
    /// is approximately this value; when `None` the threshold sits at 0.
    pub target_density: Option<f64>,
    /// Width of the emitted modality feature vectors.
    pub d_raw: usize,
    pub feature_noise: f64,
    /// Degree floor enforced per user and item (0 disables top-up).
    pub min_degree: usize,
    /// Relative weight of the common vs specific affinity term.
    pub common_weight: f64,
    pub specific_weight: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            users: 300,
            items_a: 200,
            items_b: 200,
            d_common: 8,
            d_specific: 4,
            noise: 0.3,
            target_density: Some(0.05),
            d_raw: 32,
            feature_noise: 0.1,
            min_degree: 6,
            common_weight: 1.0,
            specific_weight: 0.8,
        }
    }
}

/// The planted latents, returned for diagnostics.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub user_common: Tensor2,
    pub user_specific_a: Tensor2,
    pub user_specific_b: Tensor2,
    pub item_common_a: Tensor2,
    pub item_specific_a: Tensor2,
    pub item_common_b: Tensor2,
    pub item_specific_b: Tensor2,
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub table_a: InteractionTable,
    pub table_b: InteractionTable,
    /// user review A/B, item text A/B, item visual A/B
    pub features: Vec<(DomainTag, FeatureTable)>,
    pub truth: GroundTruth,
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; both uniforms kept strictly inside (0,1)
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn gaussian_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor2 {
    let data = (0..rows * cols).map(|_| gaussian(rng)).collect();
    Tensor2::from_vec(rows, cols, data).unwrap()
}

fn logistic_draw(rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = rng.gen_range(1e-12..1.0 - 1e-12);
    (u / (1.0 - u)).ln()
}

pub fn generate_synthetic_cdr(spec: &SyntheticSpec, seed: u64) -> Result<SyntheticData> {
    if spec.users < 2 || spec.items_a < 2 || spec.items_b < 2 {
        return Err(CoreError::InvalidArgument(
            "synthetic spec needs at least 2 users and 2 items per domain".into(),
        ));
    }
    if spec.d_common == 0 || spec.d_specific == 0 || spec.d_raw == 0 {
        return Err(CoreError::InvalidArgument(
            "synthetic spec has a zero latent dimension".into(),
        ));
    }
    if let Some(d) = spec.target_density {
        if !(0.0..1.0).contains(&d) || d == 0.0 {
            return Err(CoreError::InvalidArgument(format!(
                "target density {d} out of (0, 1)"
            )));
        }
    }

    let m = spec.users;
    let user_common = gaussian_matrix(m, spec.d_common, &mut stream(seed, &["gen", "user-common"]));
    let user_spec_a =
        gaussian_matrix(m, spec.d_specific, &mut stream(seed, &["gen", "user-spec-A"]));
    let user_spec_b =
        gaussian_matrix(m, spec.d_specific, &mut stream(seed, &["gen", "user-spec-B"]));

    let item_common_a = gaussian_matrix(
        spec.items_a,
        spec.d_common,
        &mut stream(seed, &["gen", "item-common-A"]),
    );
    let item_spec_a = gaussian_matrix(
        spec.items_a,
        spec.d_specific,
        &mut stream(seed, &["gen", "item-spec-A"]),
    );
    let item_common_b = gaussian_matrix(
        spec.items_b,
        spec.d_common,
        &mut stream(seed, &["gen", "item-common-B"]),
    );
    let item_spec_b = gaussian_matrix(
        spec.items_b,
        spec.d_specific,
        &mut stream(seed, &["gen", "item-spec-B"]),
    );

    let table_a = sample_domain(
        spec,
        seed,
        DomainTag::A,
        &user_common,
        &user_spec_a,
        &item_common_a,
        &item_spec_a,
    )?;
    let table_b = sample_domain(
        spec,
        seed,
        DomainTag::B,
        &user_common,
        &user_spec_b,
        &item_common_b,
        &item_spec_b,
    )?;

    let user_keys: Vec<String> = (0..m).map(user_key).collect();
    let item_keys_a: Vec<String> = (0..spec.items_a).map(|i| item_key(DomainTag::A, i)).collect();
    let item_keys_b: Vec<String> = (0..spec.items_b).map(|i| item_key(DomainTag::B, i)).collect();

    let mut features = Vec::new();
    for (tag, user_spec, item_common, item_spec, item_keys) in [
        (DomainTag::A, &user_spec_a, &item_common_a, &item_spec_a, &item_keys_a),
        (DomainTag::B, &user_spec_b, &item_common_b, &item_spec_b, &item_keys_b),
    ] {
        let user_latent = Tensor2::concat_cols(&[&user_common, user_spec])?;
        let item_latent = Tensor2::concat_cols(&[item_common, item_spec])?;
        features.push((
            tag,
            feature_view(
                spec,
                seed,
                tag,
                "review",
                EntityKind::User,
                Modality::Review,
                &user_latent,
                user_keys.clone(),
            )?,
        ));
        features.push((
            tag,
            feature_view(
                spec,
                seed,
                tag,
                "text",
                EntityKind::Item,
                Modality::Text,
                &item_latent,
                item_keys.clone(),
            )?,
        ));
        features.push((
            tag,
            feature_view(
                spec,
                seed,
                tag,
                "visual",
                EntityKind::Item,
                Modality::Visual,
                &item_latent,
                item_keys.clone(),
            )?,
        ));
    }

    Ok(SyntheticData {
        table_a,
        table_b,
        features,
        truth: GroundTruth {
            user_common,
            user_specific_a: user_spec_a,
            user_specific_b: user_spec_b,
            item_common_a,
            item_specific_a: item_spec_a,
            item_common_b,
            item_specific_b: item_spec_b,
        },
    })
}

pub fn user_key(idx: usize) -> String {
    format!("u{idx:05}")
}

pub fn item_key(tag: DomainTag, idx: usize) -> String {
    match tag {
        DomainTag::A => format!("a{idx:05}"),
        DomainTag::B => format!("b{idx:05}"),
    }
}

/// Affinity matrix: weighted, dimension-normalized dot products.
fn affinities(
    spec: &SyntheticSpec,
    user_common: &Tensor2,
    user_spec: &Tensor2,
    item_common: &Tensor2,
    item_spec: &Tensor2,
) -> Result<Tensor2> {
    let common = user_common.matmul_transpose(item_common)?;
    let specific = user_spec.matmul_transpose(item_spec)?;
    let cw = spec.common_weight / (spec.d_common as f64).sqrt();
    let sw = spec.specific_weight / (spec.d_specific as f64).sqrt();
    common.scale(cw).add(&specific.scale(sw))
}

fn sample_domain(
    spec: &SyntheticSpec,
    seed: u64,
    tag: DomainTag,
    user_common: &Tensor2,
    user_spec: &Tensor2,
    item_common: &Tensor2,
    item_spec: &Tensor2,
) -> Result<InteractionTable> {
    let z = affinities(spec, user_common, user_spec, item_common, item_spec)?;
    let (m, n) = z.shape();

    let threshold = match spec.target_density {
        Some(d) => calibrate_threshold(&z, d, spec.noise),
        None => 0.0,
    };

    let mut rng = stream(seed, &["gen", "interactions", tag.as_str()]);
    let mut chosen: BTreeSet<(usize, usize)> = BTreeSet::new();
    for u in 0..m {
        for i in 0..n {
            let eps = if spec.noise > 0.0 {
                spec.noise * logistic_draw(&mut rng)
            } else {
                0.0
            };
            if z.get(u, i) - threshold + eps > 0.0 {
                chosen.insert((u, i));
            }
        }
    }

    if spec.min_degree > 0 {
        top_up_degrees(spec.min_degree, &z, &mut chosen);
    }

    let raw: Vec<(String, String, f64, i64)> = chosen
        .iter()
        .map(|&(u, i)| (user_key(u), item_key(tag, i), 1.0, 0i64))
        .collect();
    InteractionTable::from_raw(tag, raw)
}

/// Threshold such that the expected density under the logistic-noise rule
/// `P(interact) = sigmoid((z - t) / noise)` hits the target; with no noise
/// this is the plain (1 - d) quantile.
fn calibrate_threshold(z: &Tensor2, density: f64, noise: f64) -> f64 {
    let values = z.data();
    if noise == 0.0 {
        let mut sorted: Vec<f64> = values.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let rank = ((1.0 - density) * (sorted.len() - 1) as f64).round() as usize;
        return sorted[rank];
    }
    let expected = |t: f64| -> f64 {
        values
            .iter()
            .map(|&v| 1.0 / (1.0 + (-(v - t) / noise).exp()))
            .sum::<f64>()
            / values.len() as f64
    };
    let (mut lo, mut hi) = (
        values.iter().cloned().fold(f64::INFINITY, f64::min) - 20.0 * noise,
        values.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 20.0 * noise,
    );
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if expected(mid) > density {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Raise every user and item to the degree floor by adding the
/// highest-affinity missing pairs. Deterministic given the affinities.
fn top_up_degrees(min_degree: usize, z: &Tensor2, chosen: &mut BTreeSet<(usize, usize)>) {
    let (m, n) = z.shape();
    for u in 0..m {
        let mut deg = (0..n).filter(|&i| chosen.contains(&(u, i))).count();
        if deg >= min_degree {
            continue;
        }
        let mut candidates: Vec<usize> = (0..n).filter(|&i| !chosen.contains(&(u, i))).collect();
        candidates.sort_by(|&a, &b| z.get(u, b).partial_cmp(&z.get(u, a)).unwrap().then(a.cmp(&b)));
        for i in candidates {
            if deg >= min_degree {
                break;
            }
            chosen.insert((u, i));
            deg += 1;
        }
    }
    for i in 0..n {
        let mut deg = (0..m).filter(|&u| chosen.contains(&(u, i))).count();
        if deg >= min_degree {
            continue;
        }
        let mut candidates: Vec<usize> = (0..m).filter(|&u| !chosen.contains(&(u, i))).collect();
        candidates.sort_by(|&a, &b| z.get(b, i).partial_cmp(&z.get(a, i)).unwrap().then(a.cmp(&b)));
        for u in candidates {
            if deg >= min_degree {
                break;
            }
            chosen.insert((u, i));
            deg += 1;
        }
    }
}

/// A modality view: fixed random projection of the latents plus noise.
#[allow(clippy::too_many_arguments)]
fn feature_view(
    spec: &SyntheticSpec,
    seed: u64,
    tag: DomainTag,
    view: &str,
    entity: EntityKind,
    modality: Modality,
    latents: &Tensor2,
    keys: Vec<String>,
) -> Result<FeatureTable> {
    let mut proj_rng = stream(seed, &["gen", "proj", tag.as_str(), view]);
    let proj = gaussian_matrix(latents.cols(), spec.d_raw, &mut proj_rng);
    let mut out = latents.matmul(&proj)?.scale(1.0 / (latents.cols() as f64).sqrt());
    if spec.feature_noise > 0.0 {
        let mut noise_rng = stream(seed, &["gen", "feature-noise", tag.as_str(), view]);
        for v in out.data_mut() {
            *v += spec.feature_noise * gaussian(&mut noise_rng);
        }
    }
    FeatureTable::new(entity, modality, out, keys)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_is_bit_identical() {
        let spec = SyntheticSpec {
            users: 20,
            items_a: 15,
            items_b: 15,
            ..Default::default()
        };
        let a = generate_synthetic_cdr(&spec, 11).unwrap();
        let b = generate_synthetic_cdr(&spec, 11).unwrap();
        assert_eq!(a.table_a, b.table_a);
        assert_eq!(a.table_b, b.table_b);
        for ((_, fa), (_, fb)) in a.features.iter().zip(b.features.iter()) {
            assert_eq!(fa, fb);
        }
    }

    #[test]
    fn noiseless_limit_matches_affinity_sign() {
        let spec = SyntheticSpec {
            users: 12,
            items_a: 10,
            items_b: 10,
            noise: 0.0,
            target_density: None,
            min_degree: 0,
            ..Default::default()
        };
        let data = generate_synthetic_cdr(&spec, 5).unwrap();
        let z = affinities(
            &spec,
            &data.truth.user_common,
            &data.truth.user_specific_a,
            &data.truth.item_common_a,
            &data.truth.item_specific_a,
        )
        .unwrap();
        for u in 0..spec.users {
            for i in 0..spec.items_a {
                let expected = z.get(u, i) > 0.0;
                let uk = user_key(u);
                let ik = item_key(DomainTag::A, i);
                let ui = data.table_a.users.get(&uk);
                let have = match (ui, data.table_a.items.get(&ik)) {
                    (Some(ui), Some(ii)) => data
                        .table_a
                        .records
                        .iter()
                        .any(|&(u2, i2, _)| u2 == ui && i2 == ii),
                    _ => false,
                };
                assert_eq!(have, expected, "pair ({u},{i})");
            }
        }
    }

    #[test]
    fn degenerate_spec_is_rejected() {
        let spec = SyntheticSpec {
            d_common: 0,
            ..Default::default()
        };
        assert!(generate_synthetic_cdr(&spec, 1).is_err());
    }

    #[test]
    fn degree_floor_holds() {
        let spec = SyntheticSpec::default();
        let data = generate_synthetic_cdr(&spec, 3).unwrap();
        for t in [&data.table_a, &data.table_b] {
            assert!(t.user_degrees().iter().all(|&d| d >= spec.min_degree));
            assert!(t.item_degrees().iter().all(|&d| d >= spec.min_degree));
            assert_eq!(t.num_users(), spec.users);
        }
    }
}
