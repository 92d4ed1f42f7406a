//! Parameter checkpoint file (`P2CK`).
//!
//! Layout, all little-endian: magic `P2CK`, version u16, then one record
//! per parameter: name length u16, name bytes, rows u32, cols u32,
//! rows*cols f32 values. Records run to end of file.

use crate::error::{CoreError, Result};
use crate::params::ParamSet;
use crate::tensor::Tensor2;
use std::io::{Read, Write};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"P2CK";
pub const CHECKPOINT_VERSION: u16 = 1;

pub fn write_checkpoint<W: Write>(params: &ParamSet, mut w: W) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    for (_, name, value) in params.iter() {
        let name_bytes = name.as_bytes();
        w.write_all(&(name_bytes.len() as u16).to_le_bytes())?;
        w.write_all(name_bytes)?;
        w.write_all(&(value.rows() as u32).to_le_bytes())?;
        w.write_all(&(value.cols() as u32).to_le_bytes())?;
        for &v in value.data() {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn checkpoint_bytes(params: &ParamSet) -> Vec<u8> {
    let mut buf = Vec::new();
    write_checkpoint(params, &mut buf).expect("writing to Vec cannot fail");
    buf
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Vec<(String, Tensor2)>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| CoreError::BadCheckpoint("file shorter than header".into()))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(CoreError::BadCheckpoint("bad magic".into()));
    }
    let mut ver = [0u8; 2];
    r.read_exact(&mut ver)
        .map_err(|_| CoreError::BadCheckpoint("file shorter than header".into()))?;
    let version = u16::from_le_bytes(ver);
    if version != CHECKPOINT_VERSION {
        return Err(CoreError::BadCheckpoint(format!(
            "unsupported version {version}"
        )));
    }

    let mut out = Vec::new();
    loop {
        let mut len_buf = [0u8; 2];
        match r.read_exact(&mut len_buf) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e.into()),
        }
        let name_len = u16::from_le_bytes(len_buf) as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)
            .map_err(|_| CoreError::BadCheckpoint("truncated name".into()))?;
        let name = String::from_utf8(name)
            .map_err(|_| CoreError::BadCheckpoint("name is not utf-8".into()))?;
        let mut dims = [0u8; 8];
        r.read_exact(&mut dims)
            .map_err(|_| CoreError::BadCheckpoint(format!("truncated dims for {name}")))?;
        let rows = u32::from_le_bytes(dims[0..4].try_into().unwrap()) as usize;
        let cols = u32::from_le_bytes(dims[4..8].try_into().unwrap()) as usize;
        let mut payload = vec![0u8; rows * cols * 4];
        r.read_exact(&mut payload)
            .map_err(|_| CoreError::BadCheckpoint(format!("truncated data for {name}")))?;
        let data: Vec<f64> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        out.push((name, Tensor2::from_vec(rows, cols, data)?));
    }
    Ok(out)
}
