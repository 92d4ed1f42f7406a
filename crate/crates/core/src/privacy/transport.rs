//! Byte transports for the exchange session: an in-process queue pair and a
//! TCP socket. Both carry identical message bytes.

use crate::error::{CoreError, Result};
use crate::privacy::wire::{decode_header, HEADER_LEN};
use std::io::{Read, Write};
use std::net::TcpStream;
use std::sync::mpsc::{channel, Receiver, Sender};

pub trait Transport: Send {
    fn send(&mut self, msg: &[u8]) -> Result<()>;
    /// Block until one complete message arrives.
    fn recv(&mut self) -> Result<Vec<u8>>;
}

/// One endpoint of an in-process paired queue.
pub struct QueueTransport {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
}

/// Two connected in-process endpoints.
pub fn queue_pair() -> (QueueTransport, QueueTransport) {
    let (tx_ab, rx_ab) = channel();
    let (tx_ba, rx_ba) = channel();
    (
        QueueTransport { tx: tx_ab, rx: rx_ba },
        QueueTransport { tx: tx_ba, rx: rx_ab },
    )
}

impl Transport for QueueTransport {
    fn send(&mut self, msg: &[u8]) -> Result<()> {
        self.tx
            .send(msg.to_vec())
            .map_err(|_| CoreError::PeerDisconnected)
    }

    fn recv(&mut self) -> Result<Vec<u8>> {
        self.rx.recv().map_err(|_| CoreError::PeerDisconnected)
    }
}

/// Framed messages over a TCP stream; the header's row/col fields determine
/// the payload length.
pub struct SocketTransport {
    stream: TcpStream,
}

impl SocketTransport {
    pub fn new(stream: TcpStream) -> Self {
        SocketTransport { stream }
    }
}

impl Transport for SocketTransport {
    fn send(&mut self, msg: &[u8]) -> Result<()> {
        self.stream.write_all(msg)?;
        self.stream.flush()?;
        Ok(())
    }

    fn recv(&mut self) -> Result<Vec<u8>> {
        let mut header = [0u8; HEADER_LEN];
        read_exact_or_disconnect(&mut self.stream, &mut header)?;
        let parsed = decode_header(&header)?;
        let payload_len = parsed.rows as usize * parsed.cols as usize * 4;
        let mut msg = vec![0u8; HEADER_LEN + payload_len];
        msg[..HEADER_LEN].copy_from_slice(&header);
        read_exact_or_disconnect(&mut self.stream, &mut msg[HEADER_LEN..])?;
        Ok(msg)
    }
}

fn read_exact_or_disconnect<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            CoreError::PeerDisconnected
        } else {
            CoreError::Io(e)
        }
    })
}
