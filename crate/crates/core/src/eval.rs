//! Leave-one-out ranking under the 99-sampled-negative protocol, HR@K and
//! NDCG@K, a popularity baseline, and embedding separation diagnostics.

use crate::data::InteractionTable;
use crate::error::{CoreError, Result};
use crate::privacy::ObfuscatedBundle;
use crate::rng::stream;
use crate::tensor::Tensor2;
use rand::Rng;
use std::collections::HashSet;

/// Anything that can score a list of candidate items for a user.
pub trait Scorer {
    fn score(&self, user: usize, items: &[usize]) -> Vec<f64>;
}

impl<F: Fn(usize, &[usize]) -> Vec<f64>> Scorer for F {
    fn score(&self, user: usize, items: &[usize]) -> Vec<f64> {
        self(user, items)
    }
}

/// One user's ranked candidate set: the held-out positive plus its sampled
/// negatives.
#[derive(Debug, Clone)]
pub struct RankResult {
    pub user: usize,
    pub positive: usize,
    pub scores: Vec<f64>,
    /// 1-based rank of the positive; ties rank the positive last.
    pub rank: usize,
}

/// Score the positive against its negatives. The positive's rank is
/// `1 + |{negatives with score >= positive score}|` (pessimistic ties).
pub fn rank_candidates<S: Scorer + ?Sized>(
    user: usize,
    positive: usize,
    negatives: &[usize],
    scorer: &S,
) -> Result<RankResult> {
    let mut seen = HashSet::with_capacity(negatives.len() + 1);
    seen.insert(positive);
    for &n in negatives {
        if !seen.insert(n) {
            return Err(CoreError::InvalidArgument(format!(
                "duplicate candidate item {n} for user {user}"
            )));
        }
    }
    let mut items = Vec::with_capacity(negatives.len() + 1);
    items.push(positive);
    items.extend_from_slice(negatives);
    let scores = scorer.score(user, &items);
    let positive_score = scores[0];
    let rank = 1 + scores[1..]
        .iter()
        .filter(|&&s| s >= positive_score)
        .count();
    Ok(RankResult {
        user,
        positive,
        scores,
        rank,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsSummary {
    pub k: usize,
    pub hr: f64,
    pub ndcg: f64,
    pub n_users: usize,
}

/// HR@K and NDCG@K over per-user ranks. NDCG contribution is
/// `1/log2(rank+1)` for ranks within K, else 0.
pub fn metrics_at_k(results: &[RankResult], k: usize) -> Result<MetricsSummary> {
    if results.is_empty() {
        return Err(CoreError::EmptyInput("rank results"));
    }
    if k == 0 {
        return Err(CoreError::InvalidArgument("k must be >= 1".into()));
    }
    let n = results.len() as f64;
    let hits = results.iter().filter(|r| r.rank <= k).count() as f64;
    let ndcg: f64 = results
        .iter()
        .map(|r| {
            if r.rank <= k {
                1.0 / ((r.rank as f64 + 1.0).log2())
            } else {
                0.0
            }
        })
        .sum::<f64>()
        / n;
    Ok(MetricsSummary {
        k,
        hr: hits / n,
        ndcg,
        n_users: results.len(),
    })
}

/// User-independent scorer: an item's score is its training interaction
/// count.
pub struct PopularityScorer {
    counts: Vec<f64>,
}

impl PopularityScorer {
    pub fn from_train(train: &InteractionTable) -> Result<Self> {
        if train.records.is_empty() {
            return Err(CoreError::EmptyInput("training table"));
        }
        Ok(PopularityScorer {
            counts: train.item_degrees().iter().map(|&d| d as f64).collect(),
        })
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }
}

impl Scorer for PopularityScorer {
    fn score(&self, _user: usize, items: &[usize]) -> Vec<f64> {
        items.iter().map(|&i| self.counts[i]).collect()
    }
}

/// Frozen per-user candidate negatives for the ranking protocol: drawn once
/// per experiment from items the user never touched (train or test), so
/// every model variant ranks identical candidate sets.
pub fn draw_eval_candidates(
    full_table: &InteractionTable,
    test: &[(usize, usize)],
    count: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    let n = full_table.num_items();
    let by_user = full_table.items_by_user();
    let mut out = Vec::with_capacity(test.len());
    for &(u, positive) in test {
        let owned: HashSet<usize> = by_user[u].iter().copied().collect();
        let pool: Vec<usize> = (0..n)
            .filter(|i| !owned.contains(i) && *i != positive)
            .collect();
        if pool.len() < count {
            return Err(CoreError::InvalidArgument(format!(
                "user {} has only {} candidate negatives, need {count}",
                full_table.users.key(u),
                pool.len()
            )));
        }
        let mut rng = stream(seed, &[
            "eval-candidates",
            full_table.domain.as_str(),
            full_table.users.key(u),
        ]);
        // partial Fisher-Yates over the pool
        let mut pool = pool;
        for j in 0..count {
            let pick = j + rng.gen_range(0..pool.len() - j);
            pool.swap(j, pick);
        }
        pool.truncate(count);
        out.push(pool);
    }
    Ok(out)
}

/// Mean cosine similarities between embedding sets plus a 2-component
/// principal projection of all four sets, replacing t-SNE for determinism.
#[derive(Debug, Clone)]
pub struct SeparationReport {
    /// mean_u cos(Qc_a[u], Qc_b[u])
    pub common_cross: f64,
    /// mean_u cos(Qs_a[u], Qs_b[u])
    pub specific_cross: f64,
    /// mean_u cos(Qc[u], Qs[u]) within each domain
    pub within_a: f64,
    pub within_b: f64,
    /// Projections of (Qc_a, Qs_a, Qc_b, Qs_b), each m x 2.
    pub projections: [Tensor2; 4],
}

fn mean_row_cosine(a: &Tensor2, b: &Tensor2) -> f64 {
    let mut total = 0.0;
    for r in 0..a.rows() {
        let (ar, br) = (a.row(r), b.row(r));
        let dot: f64 = ar.iter().zip(br).map(|(x, y)| x * y).sum();
        let na: f64 = ar.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = br.iter().map(|x| x * x).sum::<f64>().sqrt();
        if na * nb > 1e-12 {
            total += dot / (na * nb);
        }
    }
    total / a.rows() as f64
}

pub fn separation_diagnostics(
    bundle_a: &ObfuscatedBundle,
    bundle_b: &ObfuscatedBundle,
) -> Result<SeparationReport> {
    let sets = [
        &bundle_a.common,
        &bundle_a.specific,
        &bundle_b.common,
        &bundle_b.specific,
    ];
    let stacked = Tensor2::concat_rows(&sets)?;
    let basis = principal_basis_2d(&stacked);
    let projections = [
        project_2d(&bundle_a.common, &basis),
        project_2d(&bundle_a.specific, &basis),
        project_2d(&bundle_b.common, &basis),
        project_2d(&bundle_b.specific, &basis),
    ];
    Ok(SeparationReport {
        common_cross: mean_row_cosine(&bundle_a.common, &bundle_b.common),
        specific_cross: mean_row_cosine(&bundle_a.specific, &bundle_b.specific),
        within_a: mean_row_cosine(&bundle_a.common, &bundle_a.specific),
        within_b: mean_row_cosine(&bundle_b.common, &bundle_b.specific),
        projections,
    })
}

struct Basis2d {
    mean: Vec<f64>,
    axes: [Vec<f64>; 2],
}

/// Top-2 principal directions of the row cloud, by deterministic power
/// iteration with deflation.
fn principal_basis_2d(x: &Tensor2) -> Basis2d {
    let (rows, cols) = x.shape();
    let mean: Vec<f64> = (0..cols)
        .map(|c| (0..rows).map(|r| x.get(r, c)).sum::<f64>() / rows as f64)
        .collect();
    // covariance (cols x cols)
    let mut cov = vec![0.0; cols * cols];
    for r in 0..rows {
        for a in 0..cols {
            let va = x.get(r, a) - mean[a];
            for b in a..cols {
                cov[a * cols + b] += va * (x.get(r, b) - mean[b]);
            }
        }
    }
    for a in 0..cols {
        for b in 0..a {
            cov[a * cols + b] = cov[b * cols + a];
        }
    }
    let scale = 1.0 / (rows.max(2) - 1) as f64;
    for v in cov.iter_mut() {
        *v *= scale;
    }

    let mut axes: Vec<Vec<f64>> = Vec::new();
    for comp in 0..2 {
        // fixed, slightly asymmetric start vector
        let mut v: Vec<f64> = (0..cols).map(|i| 1.0 + (i as f64 + comp as f64) * 1e-3).collect();
        normalize(&mut v);
        for _ in 0..300 {
            let mut w = vec![0.0; cols];
            for a in 0..cols {
                let mut acc = 0.0;
                for b in 0..cols {
                    acc += cov[a * cols + b] * v[b];
                }
                w[a] = acc;
            }
            for prev in &axes {
                let d: f64 = w.iter().zip(prev.iter()).map(|(x, y)| x * y).sum();
                for (wi, pi) in w.iter_mut().zip(prev.iter()) {
                    *wi -= d * pi;
                }
            }
            if normalize(&mut w) < 1e-300 {
                break;
            }
            v = w;
        }
        // deterministic sign: largest-magnitude component positive
        let lead = v
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
            .map(|(i, _)| i)
            .unwrap_or(0);
        if v[lead] < 0.0 {
            for e in v.iter_mut() {
                *e = -*e;
            }
        }
        axes.push(v);
    }
    let a1 = axes.pop().unwrap();
    let a0 = axes.pop().unwrap();
    Basis2d {
        mean,
        axes: [a0, a1],
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for e in v.iter_mut() {
            *e /= norm;
        }
    }
    norm
}

fn project_2d(x: &Tensor2, basis: &Basis2d) -> Tensor2 {
    let mut out = Tensor2::zeros(x.rows(), 2);
    for r in 0..x.rows() {
        for (c, axis) in basis.axes.iter().enumerate() {
            let mut acc = 0.0;
            for (j, &a) in axis.iter().enumerate() {
                acc += (x.get(r, j) - basis.mean[j]) * a;
            }
            out.set(r, c, acc);
        }
    }
    out
}
