//! Obfuscation of disentangled embeddings and the cross-domain exchange
//! channel. Only [`ObfuscatedBundle`] matrices can be encoded for the wire;
//! there is no serialization path for raw disentangled embeddings, user
//! representations, or interactions.

mod laplace;
mod session;
mod transport;
mod wire;

pub use laplace::{laplace_cdf, sample_laplace, PrivacyConfig};
pub use session::{Direction, ExchangeSession, TranscriptEntry};
pub use transport::{queue_pair, QueueTransport, SocketTransport, Transport};
pub use wire::{
    decode_message, encode_message, MatrixKind, MessageHeader, EXCHANGE_MAGIC, EXCHANGE_VERSION,
};

use crate::data::DomainTag;
use crate::error::Result;
use crate::rng::stream;
use crate::tensor::Tensor2;

/// The four disentangled user-embedding matrices of one domain, before
/// obfuscation. These never leave the process that owns them.
#[derive(Debug, Clone)]
pub struct DisentangledBundle {
    pub domain: DomainTag,
    pub specific: Tensor2,
    pub common: Tensor2,
    pub specific_aug: Tensor2,
    pub common_aug: Tensor2,
}

/// The Laplace-noised counterparts; the only embeddings allowed across the
/// domain boundary.
#[derive(Debug, Clone)]
pub struct ObfuscatedBundle {
    pub domain: DomainTag,
    pub specific: Tensor2,
    pub common: Tensor2,
    pub specific_aug: Tensor2,
    pub common_aug: Tensor2,
    /// Noise scale that produced this bundle; `None` when obfuscation is
    /// ablated (then the matrices equal the disentangled ones).
    pub lambda_used: Option<f64>,
}

impl ObfuscatedBundle {
    pub fn rows(&self) -> usize {
        self.common.rows()
    }

    pub fn matrix(&self, kind: MatrixKind) -> &Tensor2 {
        match kind {
            MatrixKind::Common => &self.common,
            MatrixKind::Specific => &self.specific,
            MatrixKind::CommonAug => &self.common_aug,
            MatrixKind::SpecificAug => &self.specific_aug,
        }
    }
}

/// Independent noise matrices for the four bundle slots, keyed by
/// `(cfg.seed, "obf", domain, slot)`. The trainer feeds a step-scoped seed
/// so noise is fresh every step.
pub fn noise_for_bundle(
    rows: usize,
    cols: usize,
    cfg: &PrivacyConfig,
    domain: DomainTag,
) -> Result<[Tensor2; 4]> {
    let mut out = Vec::with_capacity(4);
    for slot in ["Qc", "Qs", "Qc~", "Qs~"] {
        let mut rng = stream(cfg.seed, &["obf", domain.as_str(), slot]);
        out.push(sample_laplace(rows, cols, cfg.lambda, &mut rng)?);
    }
    Ok(out.try_into().expect("exactly four noise matrices"))
}

/// Add independent Laplace noise to each of the four matrices.
pub fn obfuscate(bundle: &DisentangledBundle, cfg: &PrivacyConfig) -> Result<ObfuscatedBundle> {
    let (rows, cols) = bundle.common.shape();
    let [n_c, n_s, n_ca, n_sa] = noise_for_bundle(rows, cols, cfg, bundle.domain)?;
    Ok(ObfuscatedBundle {
        domain: bundle.domain,
        common: bundle.common.add(&n_c)?,
        specific: bundle.specific.add(&n_s)?,
        common_aug: bundle.common_aug.add(&n_ca)?,
        specific_aug: bundle.specific_aug.add(&n_sa)?,
        lambda_used: Some(cfg.lambda),
    })
}

/// Pass-through used by the obfuscation ablation: the bundle is wrapped
/// unchanged and marked as never noised.
pub fn pass_through(bundle: &DisentangledBundle) -> ObfuscatedBundle {
    ObfuscatedBundle {
        domain: bundle.domain,
        specific: bundle.specific.clone(),
        common: bundle.common.clone(),
        specific_aug: bundle.specific_aug.clone(),
        common_aug: bundle.common_aug.clone(),
        lambda_used: None,
    }
}
