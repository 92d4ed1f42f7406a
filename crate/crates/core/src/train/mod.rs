//! Two-domain training orchestration.
//!
//! [`fit`] runs both domain trainers in one process (domain B on a thread,
//! bundles crossing an in-process queue pair); [`fit_coordinator`] and
//! [`run_worker`] are the same loop split for a two-process deployment
//! where the peer runs elsewhere and is reached through a socket plus a
//! control line protocol.

mod control;
mod party;
mod report;

pub use control::{
    control_channel, ChannelControl, ChannelPeer, CoordinatorControl, DownMessage, EpochDecision,
    LineControl, LinePeer, PartyControl, PartyFinal, PeerLink, UpMessage,
};
pub use party::{run_party, Batch, DomainData, Forward, Party, StepLosses};
pub use report::{
    format_metrics_doc, metrics_doc_value, parse_metrics_doc, EpochLosses, EpochRow, MergedLosses,
    PartyEpoch, TrainReport,
};

use crate::data::DomainTag;
use crate::error::{CoreError, Result};
use crate::eval::{separation_diagnostics, SeparationReport};
use crate::losses::FusionMethod;
use crate::privacy::{queue_pair, ExchangeSession, ObfuscatedBundle, Transport};
use std::time::Instant;

/// Which blocks or terms are removed, one independent switch each.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AblationSet {
    /// Drop user review features from user representations.
    pub rev: bool,
    /// Drop item visual features from item representations.
    pub vis: bool,
    /// Drop item textual features from item representations.
    pub txt: bool,
    /// Drop the obfuscated domain-common embedding from fusion.
    pub com: bool,
    /// Drop the obfuscated domain-specific embedding from fusion.
    pub spe: bool,
    /// Drop the domain-intra contrastive loss.
    pub intra: bool,
    /// Drop the domain-inter contrastive loss.
    pub inter: bool,
    /// Skip the Laplace obfuscation entirely.
    pub obf: bool,
}

impl AblationSet {
    pub const NAMES: [&'static str; 8] =
        ["rev", "vis", "txt", "com", "spe", "intra", "inter", "obf"];

    pub fn single(name: &str) -> Result<AblationSet> {
        let mut set = AblationSet::default();
        set.enable(name)?;
        Ok(set)
    }

    pub fn enable(&mut self, name: &str) -> Result<()> {
        match name {
            "rev" => self.rev = true,
            "vis" => self.vis = true,
            "txt" => self.txt = true,
            "com" => self.com = true,
            "spe" => self.spe = true,
            "intra" => self.intra = true,
            "inter" => self.inter = true,
            "obf" => self.obf = true,
            other => {
                return Err(CoreError::InvalidArgument(format!(
                    "unknown ablation `{other}` (expected one of {:?})",
                    Self::NAMES
                )))
            }
        }
        Ok(())
    }

    pub fn active(&self) -> Vec<&'static str> {
        let flags = [
            self.rev, self.vis, self.txt, self.com, self.spe, self.intra, self.inter, self.obf,
        ];
        Self::NAMES
            .iter()
            .zip(flags)
            .filter(|(_, on)| *on)
            .map(|(n, _)| *n)
            .collect()
    }

    pub fn label(&self) -> String {
        let active = self.active();
        if active.is_empty() {
            "full".to_string()
        } else {
            active
                .iter()
                .map(|n| format!("w/o {n}"))
                .collect::<Vec<_>>()
                .join(", ")
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Weight of the contrastive objective.
    pub alpha: f64,
    /// Laplace scale for the obfuscation.
    pub lambda: f64,
    pub dropout_rate: f64,
    /// Propagation layers.
    pub layers: usize,
    pub id_dim: usize,
    pub proj_dim: usize,
    pub disen_hidden: usize,
    pub disen_dim: usize,
    pub predictor_hidden: usize,
    pub fusion: FusionMethod,
    pub patience: usize,
    pub neg_ratio: usize,
    pub eval_k: usize,
    pub eval_negatives: usize,
    pub ablations: AblationSet,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 512,
            lr: 0.001,
            alpha: 0.001,
            lambda: 0.01,
            dropout_rate: 0.2,
            layers: 2,
            id_dim: 64,
            proj_dim: 64,
            disen_hidden: 128,
            disen_dim: 64,
            predictor_hidden: 64,
            fusion: FusionMethod::Sum,
            patience: 10,
            neg_ratio: 1,
            eval_k: 10,
            eval_negatives: 99,
            ablations: AblationSet::default(),
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(CoreError::InvalidArgument("batch_size must be >= 1".into()));
        }
        if self.patience == 0 {
            return Err(CoreError::InvalidArgument("patience must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(CoreError::InvalidArgument(format!(
                "dropout rate {} out of [0, 1)",
                self.dropout_rate
            )));
        }
        if self.lambda < 0.0 || self.alpha < 0.0 {
            return Err(CoreError::InvalidArgument(
                "alpha and lambda must be >= 0".into(),
            ));
        }
        for (name, v) in [
            ("id_dim", self.id_dim),
            ("proj_dim", self.proj_dim),
            ("disen_hidden", self.disen_hidden),
            ("disen_dim", self.disen_dim),
            ("predictor_hidden", self.predictor_hidden),
            ("neg_ratio", self.neg_ratio),
            ("eval_k", self.eval_k),
            ("eval_negatives", self.eval_negatives),
        ] {
            if v == 0 {
                return Err(CoreError::InvalidArgument(format!("{name} must be >= 1")));
            }
        }
        if self.ablations.com && self.ablations.spe {
            return Err(CoreError::InvalidArgument(
                "cannot ablate both common and specific embeddings".into(),
            ));
        }
        Ok(())
    }
}

/// Result of a full two-domain training run.
#[derive(Debug, Clone)]
pub struct FitOutput {
    pub report: TrainReport,
    pub final_a: PartyFinal,
    pub final_b: PartyFinal,
    pub separation: SeparationReport,
}

impl FitOutput {
    /// Final obfuscated bundles recovered for diagnostics; augmented slots
    /// mirror the plain ones (evaluation passes have no augmentation).
    pub fn bundles(&self) -> (ObfuscatedBundle, ObfuscatedBundle) {
        let mk = |f: &PartyFinal, domain| ObfuscatedBundle {
            domain,
            common: f.common.clone(),
            specific: f.specific.clone(),
            common_aug: f.common.clone(),
            specific_aug: f.specific.clone(),
            lambda_used: f.lambda_used,
        };
        (mk(&self.final_a, DomainTag::A), mk(&self.final_b, DomainTag::B))
    }
}

/// Coordinator-side training: runs domain A locally while driving the
/// domain-B party through `link`, exchanging bundles over `transport`.
pub fn fit_coordinator<T: Transport, L: PeerLink>(
    data_a: DomainData,
    cfg: &TrainConfig,
    transport: T,
    link: L,
) -> Result<FitOutput> {
    cfg.validate()?;
    let started = Instant::now();
    let mut party = Party::new(DomainTag::A, data_a, cfg.clone())?;
    let mut session = ExchangeSession::new(transport);
    let mut coordinator = CoordinatorControl::new(link, cfg.epochs, cfg.patience, cfg.alpha);
    let final_a = run_party(&mut party, &mut session, &mut coordinator)?;
    let final_b = coordinator.remote_final.take().ok_or_else(|| {
        CoreError::InvalidArgument("remote party never delivered final artifacts".into())
    })?;
    let report = TrainReport {
        rows: coordinator.history.clone(),
        best_epoch: coordinator.best_epoch,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    };
    let output = FitOutput {
        report,
        final_a,
        final_b,
        separation: SeparationReport {
            common_cross: 0.0,
            specific_cross: 0.0,
            within_a: 0.0,
            within_b: 0.0,
            projections: [
                crate::Tensor2::zeros(0, 2),
                crate::Tensor2::zeros(0, 2),
                crate::Tensor2::zeros(0, 2),
                crate::Tensor2::zeros(0, 2),
            ],
        },
    };
    let (bundle_a, bundle_b) = output.bundles();
    Ok(FitOutput {
        separation: separation_diagnostics(&bundle_a, &bundle_b)?,
        ..output
    })
}

/// Worker-side training loop for the remote deployment of domain B.
pub fn run_worker<T: Transport, C: PartyControl>(
    data_b: DomainData,
    cfg: &TrainConfig,
    transport: T,
    mut control: C,
) -> Result<()> {
    let mut party = Party::new(DomainTag::B, data_b, cfg.clone())?;
    let mut session = ExchangeSession::new(transport);
    run_party(&mut party, &mut session, &mut control)?;
    Ok(())
}

/// Train both domains in-process: domain B runs on a thread, the exchange
/// crosses an in-process queue pair carrying the same message bytes as the
/// socket deployment.
pub fn fit(data_a: DomainData, data_b: DomainData, cfg: &TrainConfig) -> Result<FitOutput> {
    cfg.validate()?;
    let (transport_a, transport_b) = queue_pair();
    let (control_b, peer_b) = control_channel();
    let cfg_b = cfg.clone();
    let worker = std::thread::spawn(move || run_worker(data_b, &cfg_b, transport_b, control_b));
    let result = fit_coordinator(data_a, cfg, transport_a, peer_b);
    let worker_result = worker
        .join()
        .map_err(|_| CoreError::InvalidArgument("domain B thread panicked".into()))?;
    match (result, worker_result) {
        (Ok(out), Ok(())) => Ok(out),
        // the worker's error is the root cause when the coordinator only
        // saw a dropped channel
        (Err(CoreError::PeerDisconnected), Err(e)) => Err(e),
        (Err(e), _) => Err(e),
        (Ok(_), Err(e)) => Err(e),
    }
}
