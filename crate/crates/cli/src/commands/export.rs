//! `export-embeddings`: final obfuscated embeddings and their 2-component
//! principal projections as P2FT containers, plus the separation report.

use crate::commands::train::cmd_evaluate;
use crate::commands::write_text;
use crate::config::ExperimentConfig;
use crate::prepared::{load_domain, CliResult};
use crate::commands::prepared_dir;
use p2rec_core::data::{DomainTag, EntityKind, FeatureTable, Modality};
use p2rec_core::eval::separation_diagnostics;
use p2rec_core::Tensor2;

pub fn cmd_export_embeddings(cfg: &ExperimentConfig) -> CliResult<()> {
    let (bundle_a, bundle_b) = cmd_evaluate(cfg)?;
    let out = cfg.out_dir.join("embeddings");
    std::fs::create_dir_all(&out)?;

    let user_keys = load_domain(&prepared_dir(cfg), DomainTag::A, cfg.train.seed)?
        .split
        .train
        .users
        .keys()
        .to_vec();
    let write = |name: &str, matrix: &Tensor2| -> CliResult<()> {
        let table = FeatureTable::new(
            EntityKind::User,
            Modality::Embedding,
            matrix.clone(),
            user_keys.clone(),
        )?;
        table.write_file(&out.join(name))?;
        Ok(())
    };
    write("common_a.p2ft", &bundle_a.common)?;
    write("specific_a.p2ft", &bundle_a.specific)?;
    write("common_b.p2ft", &bundle_b.common)?;
    write("specific_b.p2ft", &bundle_b.specific)?;

    let report = separation_diagnostics(&bundle_a, &bundle_b)?;
    let names = [
        "proj_common_a.p2ft",
        "proj_specific_a.p2ft",
        "proj_common_b.p2ft",
        "proj_specific_b.p2ft",
    ];
    for (name, projection) in names.iter().zip(report.projections.iter()) {
        write(name, projection)?;
    }
    let mut doc = String::new();
    doc.push_str(&format!("config_hash = {}\n", cfg.config_hash()));
    doc.push_str(&format!("mean_cos.common_cross = {:.6}\n", report.common_cross));
    doc.push_str(&format!("mean_cos.specific_cross = {:.6}\n", report.specific_cross));
    doc.push_str(&format!("mean_cos.within_a = {:.6}\n", report.within_a));
    doc.push_str(&format!("mean_cos.within_b = {:.6}\n", report.within_b));
    write_text(&out.join("separation.txt"), &doc)?;
    print!("{doc}");
    println!("wrote embeddings to {}", out.display());
    Ok(())
}
