//! Two-party synchronous bundle swap.
//!
//! Each side sends its four obfuscated matrices and receives the peer's
//! four. Rounds alternate strictly by role (domain A writes first in each
//! round, domain B reads first), so the protocol never has both sides
//! writing at once and behaves identically over queues and sockets.

use super::wire::{decode_message, encode_message, MatrixKind};
use super::{ObfuscatedBundle, Transport};
use crate::data::DomainTag;
use crate::error::{CoreError, Result};
use crate::tensor::Tensor2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Sent,
    Received,
}

#[derive(Debug, Clone)]
pub struct TranscriptEntry {
    pub direction: Direction,
    pub bytes: Vec<u8>,
}

pub struct ExchangeSession<T: Transport> {
    transport: T,
    transcript: Option<Vec<TranscriptEntry>>,
}

impl<T: Transport> ExchangeSession<T> {
    pub fn new(transport: T) -> Self {
        ExchangeSession {
            transport,
            transcript: None,
        }
    }

    /// Record every byte sent or received, for privacy audits.
    pub fn with_transcript(transport: T) -> Self {
        ExchangeSession {
            transport,
            transcript: Some(Vec::new()),
        }
    }

    pub fn transcript(&self) -> Option<&[TranscriptEntry]> {
        self.transcript.as_deref()
    }

    fn record(&mut self, direction: Direction, bytes: &[u8]) {
        if let Some(t) = self.transcript.as_mut() {
            t.push(TranscriptEntry {
                direction,
                bytes: bytes.to_vec(),
            });
        }
    }

    fn send_matrix(&mut self, local: &ObfuscatedBundle, kind: MatrixKind) -> Result<()> {
        let msg = encode_message(local, kind);
        self.record(Direction::Sent, &msg);
        self.transport.send(&msg)
    }

    fn recv_matrix(
        &mut self,
        local: &ObfuscatedBundle,
        kind: MatrixKind,
    ) -> Result<(Tensor2, f32)> {
        let msg = self.transport.recv()?;
        self.record(Direction::Received, &msg);
        let (header, matrix) = decode_message(&msg)?;
        if header.kind != kind {
            return Err(CoreError::InvalidArgument(format!(
                "peer sent matrix {:?}, expected {:?}",
                header.kind, kind
            )));
        }
        if header.domain != local.domain.other() {
            return Err(CoreError::InvalidArgument(format!(
                "peer claims domain {}, expected {}",
                header.domain,
                local.domain.other()
            )));
        }
        if matrix.rows() != local.rows() {
            return Err(CoreError::ShapeMismatch {
                op: "exchange",
                left: format!("{} local rows", local.rows()),
                right: format!("{} peer rows", matrix.rows()),
            });
        }
        Ok((matrix, header.lambda))
    }

    /// Swap bundles with the peer; blocks until the peer completes its side.
    pub fn swap(&mut self, local: &ObfuscatedBundle) -> Result<ObfuscatedBundle> {
        let mut received: Vec<Tensor2> = Vec::with_capacity(4);
        let mut peer_lambda = 0.0f32;
        for kind in MatrixKind::ALL {
            let matrix = match local.domain {
                DomainTag::A => {
                    self.send_matrix(local, kind)?;
                    let (m, l) = self.recv_matrix(local, kind)?;
                    peer_lambda = l;
                    m
                }
                DomainTag::B => {
                    let (m, l) = self.recv_matrix(local, kind)?;
                    peer_lambda = l;
                    self.send_matrix(local, kind)?;
                    m
                }
            };
            received.push(matrix);
        }
        let mut it = received.into_iter();
        Ok(ObfuscatedBundle {
            domain: local.domain.other(),
            common: it.next().unwrap(),
            specific: it.next().unwrap(),
            common_aug: it.next().unwrap(),
            specific_aug: it.next().unwrap(),
            lambda_used: Some(peer_lambda as f64),
        })
    }
}
