//! `train`, `evaluate`, and the `worker` subprocess for the socket
//! transport.

use crate::commands::{prepared_dir, train_dir, write_text};
use crate::config::{ExperimentConfig, TransportKind};
use crate::prepared::{load_domain, CliResult};
use p2rec_core::checkpoint::read_checkpoint;
use p2rec_core::data::DomainTag;
use p2rec_core::privacy::{ObfuscatedBundle, SocketTransport};
use p2rec_core::train::{
    fit, fit_coordinator, format_metrics_doc, run_worker, FitOutput, LineControl, LinePeer, Party,
};
use std::fmt::Write as _;
use std::io::BufReader;
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::process::{Child, Command, Stdio};

/// Run the full two-domain training on the prepared dataset and write the
/// report, metrics document, checkpoints, and separation diagnostics.
pub fn cmd_train(cfg: &ExperimentConfig) -> CliResult<FitOutput> {
    let prepared = prepared_dir(cfg);
    let out = train_dir(cfg);
    run_training(cfg, &prepared, &out)
}

pub fn run_training(
    cfg: &ExperimentConfig,
    prepared: &Path,
    out: &Path,
) -> CliResult<FitOutput> {
    let data_a = load_domain(prepared, DomainTag::A, cfg.train.seed)?;
    std::fs::create_dir_all(out)?;
    let resolved_path = out.join("resolved.cfg");
    write_text(&resolved_path, &cfg.resolved_file())?;

    let output = match cfg.transport {
        TransportKind::InProcess => {
            let data_b = load_domain(prepared, DomainTag::B, cfg.train.seed)?;
            fit(data_a, data_b, &cfg.train)?
        }
        TransportKind::Socket => {
            let listener = TcpListener::bind("127.0.0.1:0")?;
            let addr = listener.local_addr()?;
            let mut child = spawn_worker(&resolved_path, prepared, &addr.to_string())?;
            let result = (|| -> CliResult<FitOutput> {
                let (stream, _) = listener.accept()?;
                let transport = SocketTransport::new(stream);
                let stdout = child.stdout.take().ok_or("worker stdout missing")?;
                let stdin = child.stdin.take().ok_or("worker stdin missing")?;
                let link = LinePeer::new(BufReader::new(stdout), stdin);
                Ok(fit_coordinator(data_a, &cfg.train, transport, link)?)
            })();
            let status = child.wait()?;
            let output = result?;
            if !status.success() {
                return Err(format!("worker exited with {status}").into());
            }
            output
        }
    };

    write_outputs(cfg, out, &output)?;
    println!(
        "trained {} epochs (best {}), wall clock {:.1}s",
        output.report.rows.len().saturating_sub(1),
        output.report.best_epoch,
        output.report.wall_clock_secs
    );
    println!(
        "final HR@{}: A {:.4}  B {:.4}",
        cfg.train.eval_k, output.final_a.metrics.hr, output.final_b.metrics.hr
    );
    Ok(output)
}

fn spawn_worker(resolved_cfg: &Path, prepared: &Path, addr: &str) -> CliResult<Child> {
    let exe = std::env::current_exe()?;
    Ok(Command::new(exe)
        .arg("--config")
        .arg(resolved_cfg)
        .arg("worker")
        .arg("--domain")
        .arg("b")
        .arg("--prepared")
        .arg(prepared)
        .arg("--connect")
        .arg(addr)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::inherit())
        .spawn()?)
}

pub fn write_outputs(cfg: &ExperimentConfig, out: &Path, output: &FitOutput) -> CliResult<()> {
    let doc = format_metrics_doc(
        &cfg.config_hash(),
        cfg.train.seed,
        cfg.train.eval_k,
        &output.final_a.metrics,
        &output.final_b.metrics,
        output.final_a.lambda_used,
    );
    write_text(&out.join("metrics.txt"), &doc)?;

    let mut log = String::new();
    writeln!(log, "config_hash = {}", cfg.config_hash())?;
    writeln!(log, "best_epoch = {}", output.report.best_epoch)?;
    for line in output.report.log_lines() {
        writeln!(log, "{line}")?;
    }
    write_text(&out.join("report.log"), &log)?;

    std::fs::write(out.join("checkpoint_a.p2ck"), &output.final_a.checkpoint)?;
    std::fs::write(out.join("checkpoint_b.p2ck"), &output.final_b.checkpoint)?;

    write_text(
        &out.join("separation.txt"),
        &separation_doc(cfg, output),
    )?;
    Ok(())
}

fn separation_doc(cfg: &ExperimentConfig, output: &FitOutput) -> String {
    let s = &output.separation;
    let mut text = String::new();
    text.push_str(&format!("config_hash = {}\n", cfg.config_hash()));
    text.push_str(&format!("mean_cos.common_cross = {:.6}\n", s.common_cross));
    text.push_str(&format!(
        "mean_cos.specific_cross = {:.6}\n",
        s.specific_cross
    ));
    text.push_str(&format!("mean_cos.within_a = {:.6}\n", s.within_a));
    text.push_str(&format!("mean_cos.within_b = {:.6}\n", s.within_b));
    text
}

/// Re-evaluate saved checkpoints against the prepared dataset; writes a
/// metrics document identical in format to the trainer's.
pub fn cmd_evaluate(cfg: &ExperimentConfig) -> CliResult<(ObfuscatedBundle, ObfuscatedBundle)> {
    let prepared = prepared_dir(cfg);
    let train_out = train_dir(cfg);
    let mut bundles = Vec::new();
    let mut metrics = Vec::new();
    for (tag, file) in [
        (DomainTag::A, "checkpoint_a.p2ck"),
        (DomainTag::B, "checkpoint_b.p2ck"),
    ] {
        let data = load_domain(&prepared, tag, cfg.train.seed)?;
        let mut party = Party::new(tag, data, cfg.train.clone())?;
        let path = train_out.join(file);
        let bytes = std::fs::read(&path)
            .map_err(|e| format!("cannot read checkpoint {}: {e}", path.display()))?;
        party.params.load_values(&read_checkpoint(&bytes[..])?)?;
        let (m, bundle) = party.validate("final", 0)?;
        metrics.push(m);
        bundles.push(bundle);
    }
    let lambda_used = bundles[0].lambda_used;
    let doc = format_metrics_doc(
        &cfg.config_hash(),
        cfg.train.seed,
        cfg.train.eval_k,
        &metrics[0],
        &metrics[1],
        lambda_used,
    );
    let out = cfg.out_dir.join("evaluate");
    write_text(&out.join("metrics.txt"), &doc)?;
    print!("{doc}");
    let b = bundles.pop().unwrap();
    let a = bundles.pop().unwrap();
    Ok((a, b))
}

/// The domain-B side of the two-process deployment: control over stdio,
/// bundles over the socket. Everything else on stderr.
pub fn cmd_worker(cfg: &ExperimentConfig, domain: &str, prepared: &Path, connect: &str) -> CliResult<()> {
    if domain != "b" {
        return Err("only domain b runs as a worker; domain a is the coordinator".into());
    }
    let data_b = load_domain(prepared, DomainTag::B, cfg.train.seed)?;
    let stream = TcpStream::connect(connect)?;
    let transport = SocketTransport::new(stream);
    let stdin = std::io::stdin().lock();
    let stdout = std::io::stdout().lock();
    let control = LineControl::new(stdin, stdout);
    run_worker(data_b, &cfg.train, transport, control)?;
    eprintln!("worker: training complete");
    Ok(())
}
