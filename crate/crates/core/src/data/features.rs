//! Precomputed modality feature tables and their binary container (`P2FT`).
//!
//! Layout, little-endian: magic `P2FT`, rows u32, dims u32, entity code u8,
//! modality code u8, rows*dims f32 values, then a newline-separated key
//! list aligned to the rows. Rows of all zeros are flagged as missing.

use crate::data::interactions::Vocab;
use crate::error::{CoreError, Result};
use crate::tensor::Tensor2;
use std::io::{Read, Write};

pub const FEATURE_MAGIC: &[u8; 4] = b"P2FT";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntityKind {
    User,
    Item,
}

impl EntityKind {
    pub fn code(self) -> u8 {
        match self {
            EntityKind::User => 0,
            EntityKind::Item => 1,
        }
    }

    fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(EntityKind::User),
            1 => Ok(EntityKind::Item),
            other => Err(CoreError::BadFeatureFile(format!(
                "unknown entity code {other}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modality {
    Review,
    Text,
    Visual,
    /// Exported model embeddings reuse the same container.
    Embedding,
}

impl Modality {
    pub fn code(self) -> u8 {
        match self {
            Modality::Review => 0,
            Modality::Text => 1,
            Modality::Visual => 2,
            Modality::Embedding => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Review => "review",
            Modality::Text => "text",
            Modality::Visual => "visual",
            Modality::Embedding => "emb",
        }
    }

    fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(Modality::Review),
            1 => Ok(Modality::Text),
            2 => Ok(Modality::Visual),
            3 => Ok(Modality::Embedding),
            other => Err(CoreError::BadFeatureFile(format!(
                "unknown modality code {other}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub entity: EntityKind,
    pub modality: Modality,
    pub matrix: Tensor2,
    pub keys: Vec<String>,
    /// True where the row is an explicit all-zero placeholder.
    pub missing: Vec<bool>,
}

impl FeatureTable {
    pub fn new(
        entity: EntityKind,
        modality: Modality,
        matrix: Tensor2,
        keys: Vec<String>,
    ) -> Result<Self> {
        if keys.len() != matrix.rows() {
            return Err(CoreError::BadFeatureFile(format!(
                "{} keys for {} rows",
                keys.len(),
                matrix.rows()
            )));
        }
        if !matrix.is_finite() {
            return Err(CoreError::NonFinite("feature matrix".into()));
        }
        let missing = (0..matrix.rows())
            .map(|r| matrix.row(r).iter().all(|&v| v == 0.0))
            .collect();
        Ok(FeatureTable {
            entity,
            modality,
            matrix,
            keys,
            missing,
        })
    }

    pub fn dims(&self) -> usize {
        self.matrix.cols()
    }

    /// Reindex rows to match a vocabulary; keys absent from the table get
    /// an all-zero missing row.
    pub fn aligned_to(&self, vocab: &Vocab) -> Result<FeatureTable> {
        let mut matrix = Tensor2::zeros(vocab.len(), self.dims());
        let lookup: std::collections::HashMap<&str, usize> = self
            .keys
            .iter()
            .enumerate()
            .map(|(r, k)| (k.as_str(), r))
            .collect();
        for idx in 0..vocab.len() {
            if let Some(&r) = lookup.get(vocab.key(idx)) {
                matrix.row_mut(idx).copy_from_slice(self.matrix.row(r));
            }
        }
        FeatureTable::new(
            self.entity,
            self.modality,
            matrix,
            vocab.keys().to_vec(),
        )
    }

    /// Column standardization over non-missing rows (mean 0, unit stddev);
    /// missing rows stay zero.
    pub fn standardized(&self) -> FeatureTable {
        let (rows, cols) = self.matrix.shape();
        let live: Vec<usize> = (0..rows).filter(|&r| !self.missing[r]).collect();
        let mut out = self.matrix.clone();
        if !live.is_empty() {
            for c in 0..cols {
                let mean: f64 =
                    live.iter().map(|&r| self.matrix.get(r, c)).sum::<f64>() / live.len() as f64;
                let var: f64 = live
                    .iter()
                    .map(|&r| (self.matrix.get(r, c) - mean).powi(2))
                    .sum::<f64>()
                    / live.len() as f64;
                let std = var.sqrt().max(1e-8);
                for &r in &live {
                    out.set(r, c, (self.matrix.get(r, c) - mean) / std);
                }
            }
        }
        FeatureTable {
            entity: self.entity,
            modality: self.modality,
            matrix: out,
            keys: self.keys.clone(),
            missing: self.missing.clone(),
        }
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(FEATURE_MAGIC)?;
        w.write_all(&(self.matrix.rows() as u32).to_le_bytes())?;
        w.write_all(&(self.matrix.cols() as u32).to_le_bytes())?;
        w.write_all(&[self.entity.code(), self.modality.code()])?;
        for &v in self.matrix.data() {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
        for key in &self.keys {
            w.write_all(key.as_bytes())?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<FeatureTable> {
        let mut header = [0u8; 14];
        r.read_exact(&mut header)
            .map_err(|_| CoreError::BadFeatureFile("file shorter than header".into()))?;
        if &header[0..4] != FEATURE_MAGIC {
            return Err(CoreError::BadFeatureFile("bad magic".into()));
        }
        let rows = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
        let dims = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
        let entity = EntityKind::from_code(header[12])?;
        let modality = Modality::from_code(header[13])?;
        let mut payload = vec![0u8; rows * dims * 4];
        r.read_exact(&mut payload)
            .map_err(|_| CoreError::BadFeatureFile("truncated float payload".into()))?;
        let data: Vec<f64> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        let mut rest = String::new();
        r.read_to_string(&mut rest)
            .map_err(|_| CoreError::BadFeatureFile("key list is not utf-8".into()))?;
        let keys: Vec<String> = rest.lines().map(|l| l.to_string()).collect();
        if keys.len() != rows {
            return Err(CoreError::BadFeatureFile(format!(
                "{} keys for {rows} rows",
                keys.len()
            )));
        }
        FeatureTable::new(entity, modality, Tensor2::from_vec(rows, dims, data)?, keys)
    }

    pub fn write_file(&self, path: &std::path::Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)
    }

    pub fn read_file(path: &std::path::Path) -> Result<FeatureTable> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_from(f)
    }
}
