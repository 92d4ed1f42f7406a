//! Coordination between the two domain trainers.
//!
//! Each party reports per-epoch validation results and receives a
//! snapshot/stop decision; the coordinator applies the shared early-stop
//! rule on the mean HR across domains. The control plane carries only
//! scalar metrics and the final artifacts, never raw embeddings or
//! interactions; embeddings cross domains solely through the exchange
//! session.
//!
//! Two deployments share this code: domain B as a thread (typed channels)
//! or as a subprocess (a line protocol over its stdio). Scalars on the
//! line protocol travel as hex-encoded f64 bits so both deployments are
//! bit-identical.

use crate::error::{CoreError, Result};
use crate::eval::MetricsSummary;
use crate::tensor::Tensor2;
use crate::train::report::{EpochLosses, EpochRow, MergedLosses, PartyEpoch};
use std::io::{BufRead, Write};
use std::sync::mpsc::{channel, Receiver, Sender};

/// Coordinator's verdict after an epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpochDecision {
    /// This epoch is the new best; snapshot parameters.
    pub snapshot_best: bool,
    pub stop: bool,
}

/// Final artifacts one party hands back after training.
#[derive(Debug, Clone)]
pub struct PartyFinal {
    pub metrics: MetricsSummary,
    pub checkpoint: Vec<u8>,
    /// Final obfuscated common/specific embeddings, for diagnostics.
    pub common: Tensor2,
    pub specific: Tensor2,
    pub lambda_used: Option<f64>,
}

/// The party-side view of the coordinator.
pub trait PartyControl {
    /// Exchange per-epoch batch counts for the agreed steps-per-epoch.
    fn negotiate_steps(&mut self, my_batches: usize) -> Result<usize>;
    fn epoch_result(&mut self, report: &PartyEpoch) -> Result<EpochDecision>;
    fn final_result(&mut self, artifacts: PartyFinal) -> Result<()>;
}

// ---------------------------------------------------------------------
// Typed-channel deployment (domain B on a thread)

pub enum UpMessage {
    Batches(usize),
    Epoch(PartyEpoch),
    Final(Box<PartyFinal>),
}

pub enum DownMessage {
    Steps(usize),
    Decision(EpochDecision),
}

/// Party side of a channel pair.
pub struct ChannelControl {
    pub tx: Sender<UpMessage>,
    pub rx: Receiver<DownMessage>,
}

/// Coordinator side of a channel pair.
pub struct ChannelPeer {
    pub tx: Sender<DownMessage>,
    pub rx: Receiver<UpMessage>,
}

pub fn control_channel() -> (ChannelControl, ChannelPeer) {
    let (up_tx, up_rx) = channel();
    let (down_tx, down_rx) = channel();
    (
        ChannelControl {
            tx: up_tx,
            rx: down_rx,
        },
        ChannelPeer {
            tx: down_tx,
            rx: up_rx,
        },
    )
}

impl PartyControl for ChannelControl {
    fn negotiate_steps(&mut self, my_batches: usize) -> Result<usize> {
        self.tx
            .send(UpMessage::Batches(my_batches))
            .map_err(|_| CoreError::PeerDisconnected)?;
        match self.rx.recv().map_err(|_| CoreError::PeerDisconnected)? {
            DownMessage::Steps(s) => Ok(s),
            _ => Err(CoreError::InvalidArgument(
                "expected steps message".into(),
            )),
        }
    }

    fn epoch_result(&mut self, report: &PartyEpoch) -> Result<EpochDecision> {
        self.tx
            .send(UpMessage::Epoch(report.clone()))
            .map_err(|_| CoreError::PeerDisconnected)?;
        match self.rx.recv().map_err(|_| CoreError::PeerDisconnected)? {
            DownMessage::Decision(d) => Ok(d),
            _ => Err(CoreError::InvalidArgument(
                "expected decision message".into(),
            )),
        }
    }

    fn final_result(&mut self, artifacts: PartyFinal) -> Result<()> {
        self.tx
            .send(UpMessage::Final(Box::new(artifacts)))
            .map_err(|_| CoreError::PeerDisconnected)
    }
}

/// Coordinator's handle to the remote (domain B) party, independent of the
/// deployment.
pub trait PeerLink {
    fn recv_batches(&mut self) -> Result<usize>;
    fn send_steps(&mut self, steps: usize) -> Result<()>;
    fn recv_epoch(&mut self) -> Result<PartyEpoch>;
    fn send_decision(&mut self, decision: EpochDecision) -> Result<()>;
    fn recv_final(&mut self) -> Result<PartyFinal>;
}

impl PeerLink for ChannelPeer {
    fn recv_batches(&mut self) -> Result<usize> {
        match self.rx.recv().map_err(|_| CoreError::PeerDisconnected)? {
            UpMessage::Batches(n) => Ok(n),
            _ => Err(CoreError::InvalidArgument("expected batches".into())),
        }
    }

    fn send_steps(&mut self, steps: usize) -> Result<()> {
        self.tx
            .send(DownMessage::Steps(steps))
            .map_err(|_| CoreError::PeerDisconnected)
    }

    fn recv_epoch(&mut self) -> Result<PartyEpoch> {
        match self.rx.recv().map_err(|_| CoreError::PeerDisconnected)? {
            UpMessage::Epoch(e) => Ok(e),
            _ => Err(CoreError::InvalidArgument("expected epoch".into())),
        }
    }

    fn send_decision(&mut self, decision: EpochDecision) -> Result<()> {
        self.tx
            .send(DownMessage::Decision(decision))
            .map_err(|_| CoreError::PeerDisconnected)
    }

    fn recv_final(&mut self) -> Result<PartyFinal> {
        match self.rx.recv().map_err(|_| CoreError::PeerDisconnected)? {
            UpMessage::Final(f) => Ok(*f),
            _ => Err(CoreError::InvalidArgument("expected final".into())),
        }
    }
}

// ---------------------------------------------------------------------
// Line-protocol deployment (domain B as a subprocess on stdio)

fn f64_hex(v: f64) -> String {
    format!("{:016x}", v.to_bits())
}

fn parse_f64_hex(s: &str) -> Result<f64> {
    u64::from_str_radix(s, 16)
        .map(f64::from_bits)
        .map_err(|_| CoreError::InvalidArgument(format!("bad f64 hex `{s}`")))
}

fn bytes_hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

fn parse_bytes_hex(s: &str) -> Result<Vec<u8>> {
    if !s.len().is_multiple_of(2) {
        return Err(CoreError::InvalidArgument("odd hex length".into()));
    }
    (0..s.len() / 2)
        .map(|i| {
            u8::from_str_radix(&s[2 * i..2 * i + 2], 16)
                .map_err(|_| CoreError::InvalidArgument("bad hex byte".into()))
        })
        .collect()
}

fn tensor_hex(t: &Tensor2) -> String {
    let mut bytes = Vec::with_capacity(t.data().len() * 8);
    for &v in t.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes_hex(&bytes)
}

fn parse_tensor_hex(rows: usize, cols: usize, s: &str) -> Result<Tensor2> {
    let bytes = parse_bytes_hex(s)?;
    if bytes.len() != rows * cols * 8 {
        return Err(CoreError::Truncated {
            expected: rows * cols * 8,
            actual: bytes.len(),
        });
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Tensor2::from_vec(rows, cols, data)
}

fn metrics_fields(m: &MetricsSummary) -> String {
    format!(
        "{} {} {} {}",
        m.k,
        f64_hex(m.hr),
        f64_hex(m.ndcg),
        m.n_users
    )
}

fn parse_metrics_fields(fields: &[&str]) -> Result<MetricsSummary> {
    if fields.len() != 4 {
        return Err(CoreError::InvalidArgument("bad metrics fields".into()));
    }
    Ok(MetricsSummary {
        k: fields[0]
            .parse()
            .map_err(|_| CoreError::InvalidArgument("bad k".into()))?,
        hr: parse_f64_hex(fields[1])?,
        ndcg: parse_f64_hex(fields[2])?,
        n_users: fields[3]
            .parse()
            .map_err(|_| CoreError::InvalidArgument("bad n_users".into()))?,
    })
}

/// Party side of the line protocol (runs in the worker subprocess).
pub struct LineControl<R: BufRead, W: Write> {
    pub reader: R,
    pub writer: W,
}

impl<R: BufRead, W: Write> LineControl<R, W> {
    pub fn new(reader: R, writer: W) -> Self {
        LineControl { reader, writer }
    }

    fn send_line(&mut self, line: &str) -> Result<()> {
        writeln!(self.writer, "{line}")?;
        self.writer.flush()?;
        Ok(())
    }

    fn read_line(&mut self) -> Result<String> {
        let mut line = String::new();
        let n = self.reader.read_line(&mut line)?;
        if n == 0 {
            return Err(CoreError::PeerDisconnected);
        }
        Ok(line.trim_end().to_string())
    }
}

impl<R: BufRead, W: Write> PartyControl for LineControl<R, W> {
    fn negotiate_steps(&mut self, my_batches: usize) -> Result<usize> {
        self.send_line(&format!("BATCHES {my_batches}"))?;
        let line = self.read_line()?;
        let rest = line
            .strip_prefix("STEPS ")
            .ok_or_else(|| CoreError::InvalidArgument(format!("expected STEPS, got `{line}`")))?;
        rest.parse()
            .map_err(|_| CoreError::InvalidArgument("bad step count".into()))
    }

    fn epoch_result(&mut self, report: &PartyEpoch) -> Result<EpochDecision> {
        let losses = match &report.losses {
            Some(l) => format!(
                "1 {} {} {}",
                f64_hex(l.prd),
                f64_hex(l.intra),
                f64_hex(l.inter)
            ),
            None => format!("0 {} {} {}", f64_hex(0.0), f64_hex(0.0), f64_hex(0.0)),
        };
        self.send_line(&format!(
            "EPOCH {} {losses} {}",
            report.epoch,
            metrics_fields(&report.metrics)
        ))?;
        let line = self.read_line()?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 || fields[0] != "DECISION" {
            return Err(CoreError::InvalidArgument(format!(
                "expected DECISION, got `{line}`"
            )));
        }
        Ok(EpochDecision {
            snapshot_best: fields[1] == "1",
            stop: fields[2] == "1",
        })
    }

    fn final_result(&mut self, artifacts: PartyFinal) -> Result<()> {
        let lambda = match artifacts.lambda_used {
            Some(l) => f64_hex(l),
            None => "-".to_string(),
        };
        self.send_line(&format!(
            "FINAL {} {lambda}",
            metrics_fields(&artifacts.metrics)
        ))?;
        self.send_line(&format!(
            "CHECKPOINT {}",
            bytes_hex(&artifacts.checkpoint)
        ))?;
        self.send_line(&format!(
            "BUNDLE {} {} {} {}",
            artifacts.common.rows(),
            artifacts.common.cols(),
            tensor_hex(&artifacts.common),
            tensor_hex(&artifacts.specific)
        ))?;
        self.send_line("DONE")
    }
}

/// Coordinator side of the line protocol (parent process reading the
/// worker's stdio).
pub struct LinePeer<R: BufRead, W: Write> {
    pub reader: R,
    pub writer: W,
}

impl<R: BufRead, W: Write> LinePeer<R, W> {
    pub fn new(reader: R, writer: W) -> Self {
        LinePeer { reader, writer }
    }

    fn read_line(&mut self) -> Result<String> {
        let mut line = String::new();
        let n = self.reader.read_line(&mut line)?;
        if n == 0 {
            return Err(CoreError::PeerDisconnected);
        }
        Ok(line.trim_end().to_string())
    }
}

impl<R: BufRead, W: Write> PeerLink for LinePeer<R, W> {
    fn recv_batches(&mut self) -> Result<usize> {
        let line = self.read_line()?;
        let rest = line
            .strip_prefix("BATCHES ")
            .ok_or_else(|| CoreError::InvalidArgument(format!("expected BATCHES, got `{line}`")))?;
        rest.parse()
            .map_err(|_| CoreError::InvalidArgument("bad batch count".into()))
    }

    fn send_steps(&mut self, steps: usize) -> Result<()> {
        writeln!(self.writer, "STEPS {steps}")?;
        self.writer.flush()?;
        Ok(())
    }

    fn recv_epoch(&mut self) -> Result<PartyEpoch> {
        let line = self.read_line()?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 10 || fields[0] != "EPOCH" {
            return Err(CoreError::InvalidArgument(format!(
                "expected EPOCH, got `{line}`"
            )));
        }
        let epoch = fields[1]
            .parse()
            .map_err(|_| CoreError::InvalidArgument("bad epoch".into()))?;
        let losses = if fields[2] == "1" {
            Some(EpochLosses {
                prd: parse_f64_hex(fields[3])?,
                intra: parse_f64_hex(fields[4])?,
                inter: parse_f64_hex(fields[5])?,
            })
        } else {
            None
        };
        Ok(PartyEpoch {
            epoch,
            losses,
            metrics: parse_metrics_fields(&fields[6..10])?,
        })
    }

    fn send_decision(&mut self, decision: EpochDecision) -> Result<()> {
        writeln!(
            self.writer,
            "DECISION {} {}",
            u8::from(decision.snapshot_best),
            u8::from(decision.stop)
        )?;
        self.writer.flush()?;
        Ok(())
    }

    fn recv_final(&mut self) -> Result<PartyFinal> {
        let line = self.read_line()?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 6 || fields[0] != "FINAL" {
            return Err(CoreError::InvalidArgument(format!(
                "expected FINAL, got `{line}`"
            )));
        }
        let metrics = parse_metrics_fields(&fields[1..5])?;
        let lambda_used = if fields[5] == "-" {
            None
        } else {
            Some(parse_f64_hex(fields[5])?)
        };

        let line = self.read_line()?;
        let checkpoint = parse_bytes_hex(line.strip_prefix("CHECKPOINT ").ok_or_else(|| {
            CoreError::InvalidArgument(format!("expected CHECKPOINT, got `{line}`"))
        })?)?;

        let line = self.read_line()?;
        let rest = line
            .strip_prefix("BUNDLE ")
            .ok_or_else(|| CoreError::InvalidArgument(format!("expected BUNDLE, got `{line}`")))?;
        let parts: Vec<&str> = rest.split_whitespace().collect();
        if parts.len() != 4 {
            return Err(CoreError::InvalidArgument("bad bundle line".into()));
        }
        let rows: usize = parts[0]
            .parse()
            .map_err(|_| CoreError::InvalidArgument("bad rows".into()))?;
        let cols: usize = parts[1]
            .parse()
            .map_err(|_| CoreError::InvalidArgument("bad cols".into()))?;
        let common = parse_tensor_hex(rows, cols, parts[2])?;
        let specific = parse_tensor_hex(rows, cols, parts[3])?;

        let line = self.read_line()?;
        if line != "DONE" {
            return Err(CoreError::InvalidArgument(format!(
                "expected DONE, got `{line}`"
            )));
        }
        Ok(PartyFinal {
            metrics,
            checkpoint,
            common,
            specific,
            lambda_used,
        })
    }
}

// ---------------------------------------------------------------------
// The coordinator itself: acts as domain A's control while driving the
// remote domain-B party through a PeerLink.

pub struct CoordinatorControl<L: PeerLink> {
    link: L,
    epochs: usize,
    patience: usize,
    best_mean_hr: f64,
    bad_epochs: usize,
    pub best_epoch: usize,
    pub history: Vec<EpochRow>,
    pub remote_final: Option<PartyFinal>,
    alpha: f64,
}

impl<L: PeerLink> CoordinatorControl<L> {
    pub fn new(link: L, epochs: usize, patience: usize, alpha: f64) -> Self {
        CoordinatorControl {
            link,
            epochs,
            patience,
            best_mean_hr: f64::NEG_INFINITY,
            bad_epochs: 0,
            best_epoch: 0,
            history: Vec::new(),
            remote_final: None,
            alpha,
        }
    }

    pub fn into_link(self) -> L {
        self.link
    }
}

impl<L: PeerLink> PartyControl for CoordinatorControl<L> {
    fn negotiate_steps(&mut self, my_batches: usize) -> Result<usize> {
        let remote = self.link.recv_batches()?;
        let steps = my_batches.max(remote);
        self.link.send_steps(steps)?;
        Ok(steps)
    }

    fn epoch_result(&mut self, report: &PartyEpoch) -> Result<EpochDecision> {
        let remote = self.link.recv_epoch()?;
        if remote.epoch != report.epoch {
            return Err(CoreError::InvalidArgument(format!(
                "epoch mismatch: local {}, remote {}",
                report.epoch, remote.epoch
            )));
        }
        let mean_hr = 0.5 * (report.metrics.hr + remote.metrics.hr);
        let merged_losses = match (&report.losses, &remote.losses) {
            (Some(a), Some(b)) => {
                let contrastive = a.intra + b.intra + a.inter;
                Some(MergedLosses {
                    prd_a: a.prd,
                    prd_b: b.prd,
                    contrastive,
                    total: a.prd + b.prd + self.alpha * contrastive,
                })
            }
            _ => None,
        };
        self.history.push(EpochRow {
            epoch: report.epoch,
            losses: merged_losses,
            hr_a: report.metrics.hr,
            ndcg_a: report.metrics.ndcg,
            hr_b: remote.metrics.hr,
            ndcg_b: remote.metrics.ndcg,
            mean_hr,
        });

        // epoch 0 is the untrained baseline: recorded, never "best"
        let decision = if report.epoch == 0 {
            EpochDecision {
                snapshot_best: false,
                stop: self.epochs == 0,
            }
        } else {
            let improved = mean_hr > self.best_mean_hr;
            if improved {
                self.best_mean_hr = mean_hr;
                self.best_epoch = report.epoch;
                self.bad_epochs = 0;
            } else {
                self.bad_epochs += 1;
            }
            EpochDecision {
                snapshot_best: improved,
                stop: self.bad_epochs >= self.patience || report.epoch >= self.epochs,
            }
        };
        self.link.send_decision(decision)?;
        Ok(decision)
    }

    fn final_result(&mut self, _artifacts: PartyFinal) -> Result<()> {
        // local (domain A) artifacts are returned by run_party; here we only
        // collect the remote side's
        self.remote_final = Some(self.link.recv_final()?);
        Ok(())
    }
}
