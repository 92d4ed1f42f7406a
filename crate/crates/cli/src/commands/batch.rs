//! `sweep` and `ablate`: batteries of full train+eval runs sharing one
//! prepared dataset and seed.

use crate::commands::train::run_training;
use crate::commands::{prepared_dir, write_text};
use crate::config::ExperimentConfig;
use crate::prepared::CliResult;
use p2rec_core::eval::MetricsSummary;
use p2rec_core::losses::FusionMethod;
use p2rec_core::train::AblationSet;
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Alpha,
    Lambda,
    Dim,
    Fusion,
}

impl SweepParam {
    pub fn parse(s: &str) -> CliResult<Self> {
        match s {
            "alpha" => Ok(SweepParam::Alpha),
            "lambda" => Ok(SweepParam::Lambda),
            "dim" => Ok(SweepParam::Dim),
            "fusion" => Ok(SweepParam::Fusion),
            other => Err(format!("unknown sweep parameter `{other}` (alpha|lambda|dim|fusion)").into()),
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            SweepParam::Alpha => "alpha",
            SweepParam::Lambda => "lambda",
            SweepParam::Dim => "disen_dim",
            SweepParam::Fusion => "fusion",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Alpha => "alpha",
            SweepParam::Lambda => "lambda",
            SweepParam::Dim => "dim",
            SweepParam::Fusion => "fusion",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: String,
    pub metrics_a: MetricsSummary,
    pub metrics_b: MetricsSummary,
    pub config_hash: String,
}

impl SweepRow {
    pub fn mean_hr(&self) -> f64 {
        0.5 * (self.metrics_a.hr + self.metrics_b.hr)
    }
}

fn grid_values(cfg: &ExperimentConfig, param: SweepParam) -> Vec<String> {
    match param {
        SweepParam::Alpha => {
            let mut v = cfg.sweep.alpha.clone();
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            v.into_iter().map(|x| x.to_string()).collect()
        }
        SweepParam::Lambda => {
            let mut v = cfg.sweep.lambda.clone();
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            v.into_iter().map(|x| x.to_string()).collect()
        }
        SweepParam::Dim => {
            let mut v = cfg.sweep.dim.clone();
            v.sort_unstable();
            v.into_iter().map(|x| x.to_string()).collect()
        }
        SweepParam::Fusion => cfg
            .sweep
            .fusion
            .iter()
            .map(|f| f.as_str().to_string())
            .collect(),
    }
}

fn apply_value(cfg: &ExperimentConfig, param: SweepParam, value: &str) -> CliResult<ExperimentConfig> {
    let mut point = cfg.clone();
    match param {
        SweepParam::Alpha => point.train.alpha = value.parse()?,
        SweepParam::Lambda => point.train.lambda = value.parse()?,
        SweepParam::Dim => point.train.disen_dim = value.parse()?,
        SweepParam::Fusion => point.train.fusion = FusionMethod::parse(value)?,
    }
    Ok(point)
}

/// One full train+eval per grid value, shared data seed, then an aligned
/// table plus a plot-ready series file.
pub fn cmd_sweep(cfg: &ExperimentConfig, param: SweepParam) -> CliResult<Vec<SweepRow>> {
    let prepared = prepared_dir(cfg);
    let sweep_dir = cfg.out_dir.join(format!("sweep_{}", param.name()));
    let mut point_dirs = Vec::new();
    for value in grid_values(cfg, param) {
        let point_cfg = apply_value(cfg, param, &value)?;
        let dir = sweep_dir.join(format!("{}_{}", param.name(), value));
        // a finished point with the exact same config is reused; anything
        // else in its place means two different experiments share one
        // output directory, which aggregation refuses
        let existing = dir.join("resolved.cfg");
        if existing.exists() && dir.join("metrics.txt").exists() {
            let prior = crate::config::ExperimentConfig::from_file(&existing)?;
            if prior.config_hash() == point_cfg.config_hash() {
                eprintln!("sweep {} = {value} (cached)", param.name());
                point_dirs.push((value, dir, point_cfg));
                continue;
            }
            return Err(format!(
                "refusing to aggregate {}: existing point was produced by config {} (this sweep expects {})",
                dir.display(),
                prior.config_hash(),
                point_cfg.config_hash()
            )
            .into());
        }
        eprintln!("sweep {} = {value}", param.name());
        run_training(&point_cfg, &prepared, &dir)?;
        point_dirs.push((value, dir, point_cfg));
    }
    let rows = merge_sweep(cfg, param, &point_dirs)?;
    write_sweep_tables(&sweep_dir, param, &rows)?;
    Ok(rows)
}

/// Aggregate point outputs; refuses rows whose base config (everything but
/// the swept key) differs.
fn merge_sweep(
    cfg: &ExperimentConfig,
    param: SweepParam,
    points: &[(String, std::path::PathBuf, ExperimentConfig)],
) -> CliResult<Vec<SweepRow>> {
    let base = cfg.base_hash_excluding(param.key());
    let mut rows = Vec::new();
    for (value, dir, _) in points {
        // re-read the resolved config actually written for the point
        let point_cfg = crate::config::ExperimentConfig::from_file(&dir.join("resolved.cfg"))?;
        let point_base = point_cfg.base_hash_excluding(param.key());
        if point_base != base {
            return Err(format!(
                "refusing to aggregate {}: base config hash {point_base} != {base}",
                dir.display()
            )
            .into());
        }
        let doc = std::fs::read_to_string(dir.join("metrics.txt"))?;
        rows.push(SweepRow {
            value: value.clone(),
            metrics_a: read_metrics(&doc, "A")?,
            metrics_b: read_metrics(&doc, "B")?,
            config_hash: doc_value(&doc, "config_hash")?,
        });
    }
    Ok(rows)
}

pub fn doc_value(doc: &str, key: &str) -> CliResult<String> {
    p2rec_core::train::metrics_doc_value(doc, key)
        .ok_or_else(|| format!("metrics document missing `{key}`").into())
}

pub fn read_metrics(doc: &str, domain: &str) -> CliResult<MetricsSummary> {
    Ok(MetricsSummary {
        k: doc_value(doc, "k")?.parse()?,
        hr: doc_value(doc, &format!("domain.{domain}.hr"))?.parse()?,
        ndcg: doc_value(doc, &format!("domain.{domain}.ndcg"))?.parse()?,
        n_users: doc_value(doc, &format!("domain.{domain}.n_users"))?.parse()?,
    })
}

fn write_sweep_tables(dir: &Path, param: SweepParam, rows: &[SweepRow]) -> CliResult<()> {
    let mut table = format!(
        "{}\thr_a\tndcg_a\thr_b\tndcg_b\tmean_hr\tconfig_hash\n",
        param.name()
    );
    let mut series = String::new();
    for row in rows {
        writeln!(
            table,
            "{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{}",
            row.value,
            row.metrics_a.hr,
            row.metrics_a.ndcg,
            row.metrics_b.hr,
            row.metrics_b.ndcg,
            row.mean_hr(),
            row.config_hash
        )?;
        writeln!(series, "{}\t{:.6}", row.value, row.mean_hr())?;
    }
    write_text(&dir.join(format!("sweep_{}.tsv", param.name())), &table)?;
    write_text(&dir.join(format!("series_{}.tsv", param.name())), &series)?;
    print!("{table}");
    Ok(())
}

/// The full model plus the eight single-component ablation variants, all
/// with shared seeds; emits a 9-row comparison table.
pub fn cmd_ablate(cfg: &ExperimentConfig) -> CliResult<Vec<(String, SweepRow)>> {
    let prepared = prepared_dir(cfg);
    let ablate_dir = cfg.out_dir.join("ablate");
    let mut variants: Vec<(String, AblationSet)> =
        vec![("full".to_string(), AblationSet::default())];
    for name in AblationSet::NAMES {
        variants.push((format!("w/o {name}"), AblationSet::single(name)?));
    }

    let mut rows = Vec::new();
    for (label, ablations) in variants {
        let mut point_cfg = cfg.clone();
        point_cfg.train.ablations = ablations;
        let dir_name = label.replace("w/o ", "wo_");
        let dir = ablate_dir.join(&dir_name);
        eprintln!("ablate: {label}");
        run_training(&point_cfg, &prepared, &dir)?;
        let doc = std::fs::read_to_string(dir.join("metrics.txt"))?;
        rows.push((
            label.clone(),
            SweepRow {
                value: doc_value(&doc, "lambda_used")?,
                metrics_a: read_metrics(&doc, "A")?,
                metrics_b: read_metrics(&doc, "B")?,
                config_hash: doc_value(&doc, "config_hash")?,
            },
        ));
    }

    let mut table = String::from("variant\thr_a\tndcg_a\thr_b\tndcg_b\tlambda_used\n");
    for (label, row) in &rows {
        writeln!(
            table,
            "{label}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{}",
            row.metrics_a.hr, row.metrics_a.ndcg, row.metrics_b.hr, row.metrics_b.ndcg, row.value
        )?;
    }
    write_text(&ablate_dir.join("ablate.tsv"), &table)?;
    print!("{table}");
    Ok(rows)
}
