//! Checkpoint container for network parameters.
//!
//! ```text
//! "OCSQM"            5 bytes
//! version            u8 (= 1)
//! descriptor         ArchDescriptor::ENCODED_LEN bytes
//! parameters         f64 LE, in the owner's declared layer order
//! crc32              u32 LE over all preceding bytes
//! ```

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 5] = b"OCSQM";
pub const VERSION: u8 = 1;

/// Network shape recorded ahead of the parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArchDescriptor {
    /// Number of aggregation stages.
    pub aggregations: u8,
    /// 0 = parent features, 1 = the node's own features (ablation control).
    pub aggregation_source: u8,
    pub feature_mask: u8,
    /// Training tree depth used to normalize the level feature.
    pub k_max: u8,
    pub input_width: u16,
    pub hidden_width: u16,
    pub output_width: u16,
    pub embed_layers: u8,
    pub aggregation_layers: u8,
}

impl ArchDescriptor {
    pub const ENCODED_LEN: usize = 12;

    fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&[
            self.aggregations,
            self.aggregation_source,
            self.feature_mask,
            self.k_max,
        ]);
        out.extend_from_slice(&self.input_width.to_le_bytes());
        out.extend_from_slice(&self.hidden_width.to_le_bytes());
        out.extend_from_slice(&self.output_width.to_le_bytes());
        out.extend_from_slice(&[self.embed_layers, self.aggregation_layers]);
    }

    fn decode(b: &[u8]) -> Self {
        let u16_at = |i: usize| u16::from_le_bytes([b[i], b[i + 1]]);
        ArchDescriptor {
            aggregations: b[0],
            aggregation_source: b[1],
            feature_mask: b[2],
            k_max: b[3],
            input_width: u16_at(4),
            hidden_width: u16_at(6),
            output_width: u16_at(8),
            embed_layers: b[10],
            aggregation_layers: b[11],
        }
    }
}

pub fn encode<'a>(desc: &ArchDescriptor, params: impl IntoIterator<Item = &'a [f64]>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    desc.encode(&mut out);
    for slice in params {
        for v in slice {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

/// A parsed checkpoint: shape, flat parameters and the stored checksum.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub descriptor: ArchDescriptor,
    pub params: Vec<f64>,
    pub checksum: u32,
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let header = MAGIC.len() + 1 + ArchDescriptor::ENCODED_LEN;
    if bytes.len() < header + 4 {
        return Err(Error::corruption(format!("checkpoint too short ({} bytes)", bytes.len())));
    }
    if &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::corruption("not a model checkpoint (bad magic)"));
    }
    if bytes[MAGIC.len()] != VERSION {
        return Err(Error::corruption(format!(
            "unsupported checkpoint version {}",
            bytes[MAGIC.len()]
        )));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }
    let descriptor = ArchDescriptor::decode(&body[MAGIC.len() + 1..header]);
    let raw = &body[header..];
    if raw.len() % 8 != 0 {
        return Err(Error::corruption("parameter block is not a whole number of f64s"));
    }
    let params = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Checkpoint {
        descriptor,
        params,
        checksum: stored,
    })
}
