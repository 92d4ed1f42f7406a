//! Training report rows and the machine-readable metrics document.

use crate::eval::MetricsSummary;

/// Mean per-step losses of one party over one epoch; the contrastive terms
/// are that party's own view (ablated terms are 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLosses {
    pub prd: f64,
    pub intra: f64,
    pub inter: f64,
}

/// What one party reports to the coordinator after each epoch. Epoch 0 is
/// the untrained baseline evaluation and carries no losses.
#[derive(Debug, Clone)]
pub struct PartyEpoch {
    pub epoch: usize,
    pub losses: Option<EpochLosses>,
    pub metrics: MetricsSummary,
}

/// Merged per-epoch row across both domains.
#[derive(Debug, Clone)]
pub struct EpochRow {
    pub epoch: usize,
    pub losses: Option<MergedLosses>,
    pub hr_a: f64,
    pub ndcg_a: f64,
    pub hr_b: f64,
    pub ndcg_b: f64,
    pub mean_hr: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct MergedLosses {
    pub prd_a: f64,
    pub prd_b: f64,
    /// `intra_a + intra_b + inter` (domain A's view of the inter term).
    pub contrastive: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub rows: Vec<EpochRow>,
    /// Best trained epoch by mean validation HR (0 when no epochs ran).
    pub best_epoch: usize,
    pub wall_clock_secs: f64,
}

impl TrainReport {
    /// Human-readable log lines, one per epoch.
    pub fn log_lines(&self) -> Vec<String> {
        self.rows
            .iter()
            .map(|r| match &r.losses {
                Some(l) => format!(
                    "epoch {:>3}  loss {:.6}  prd_a {:.6}  prd_b {:.6}  contrastive {:.6}  hr_a {:.4}  hr_b {:.4}  ndcg_a {:.4}  ndcg_b {:.4}",
                    r.epoch, l.total, l.prd_a, l.prd_b, l.contrastive, r.hr_a, r.hr_b, r.ndcg_a, r.ndcg_b
                ),
                None => format!(
                    "epoch {:>3}  (untrained baseline)  hr_a {:.4}  hr_b {:.4}  ndcg_a {:.4}  ndcg_b {:.4}",
                    r.epoch, r.hr_a, r.hr_b, r.ndcg_a, r.ndcg_b
                ),
            })
            .collect()
    }
}

/// The final metrics document. Key-value text, stable across reruns of the
/// same config+seed (no timestamps).
pub fn format_metrics_doc(
    config_hash: &str,
    seed: u64,
    k: usize,
    metrics_a: &MetricsSummary,
    metrics_b: &MetricsSummary,
    lambda_used: Option<f64>,
) -> String {
    let lambda = match lambda_used {
        Some(l) => format!("{l}"),
        None => "none".to_string(),
    };
    let mut out = String::new();
    out.push_str(&format!("config_hash = {config_hash}\n"));
    out.push_str(&format!("seed = {seed}\n"));
    out.push_str(&format!("k = {k}\n"));
    out.push_str(&format!("lambda_used = {lambda}\n"));
    for (domain, m) in [("A", metrics_a), ("B", metrics_b)] {
        out.push_str(&format!("domain.{domain}.hr = {:.6}\n", m.hr));
        out.push_str(&format!("domain.{domain}.ndcg = {:.6}\n", m.ndcg));
        out.push_str(&format!("domain.{domain}.n_users = {}\n", m.n_users));
    }
    out
}

/// Parse a metrics document back into key-value pairs.
pub fn parse_metrics_doc(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter_map(|line| {
            let (k, v) = line.split_once('=')?;
            Some((k.trim().to_string(), v.trim().to_string()))
        })
        .collect()
}

pub fn metrics_doc_value(text: &str, key: &str) -> Option<String> {
    parse_metrics_doc(text)
        .into_iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v)
}
