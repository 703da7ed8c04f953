//! `.ocsq` files: a fixed little-endian header, the range-coded payload,
//! the raw early-leaf bits and a trailing CRC-32.

use crate::bits::BitBuf;
use crate::coder::CodedStream;
use crate::error::{Error, Result};
use crate::octree::OctreeMode;
use crate::pointcloud::{QuantParams, MAX_DEPTH};

pub const MAGIC: &[u8; 4] = b"OCSQ";
pub const VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Uniform = 0,
    Histogram = 1,
    ParentHistogram = 2,
    Deep = 3,
}

impl ModelKind {
    pub fn from_u8(v: u8) -> Result<Self> {
        Ok(match v {
            0 => ModelKind::Uniform,
            1 => ModelKind::Histogram,
            2 => ModelKind::ParentHistogram,
            3 => ModelKind::Deep,
            _ => return Err(Error::corruption(format!("unknown model kind {v}"))),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Uniform => "uniform",
            ModelKind::Histogram => "histogram",
            ModelKind::ParentHistogram => "parent-histogram",
            ModelKind::Deep => "deep",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub mode: OctreeMode,
    pub model_kind: ModelKind,
    /// Checkpoint CRC for deep models, 0 otherwise.
    pub model_hash: u32,
    /// Origin, cell size and depth of the coded lattice.
    pub params: QuantParams,
    /// Input points before deduplication.
    pub point_count: u32,
    pub payload: CodedStream,
    pub leaf_bits: BitBuf,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::corruption(format!("container truncated while reading {what} at byte {}", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_bits(self.u64(what)?))
    }
}

impl Container {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let symbols = u32::try_from(self.payload.symbol_count)
            .map_err(|_| Error::validation("more than 2^32 - 1 symbols"))?;
        let leaf_len = u32::try_from(self.leaf_bits.len())
            .map_err(|_| Error::validation("leaf payload exceeds 2^32 - 1 bits"))?;
        let depth = u8::try_from(self.params.depth)
            .map_err(|_| Error::validation("depth does not fit the header"))?;
        let mut out = Vec::with_capacity(64 + self.payload.bytes.len() + self.leaf_bits.as_bytes().len());
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.push(self.mode.as_u8());
        out.push(depth);
        out.push(self.model_kind as u8);
        out.extend_from_slice(&self.model_hash.to_le_bytes());
        for v in self.params.origin {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.params.cell.to_le_bytes());
        out.extend_from_slice(&self.point_count.to_le_bytes());
        out.extend_from_slice(&symbols.to_le_bytes());
        out.extend_from_slice(&(self.payload.bytes.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.payload.bytes);
        out.extend_from_slice(&leaf_len.to_le_bytes());
        out.extend_from_slice(self.leaf_bits.as_bytes());
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::corruption("not an OCSQ container (bad magic)"));
        }
        if bytes.len() < MAGIC.len() + 4 {
            return Err(Error::corruption("container truncated before checksum"));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(Error::Checksum { stored, computed });
        }

        let mut c = Cursor { bytes: body, pos: MAGIC.len() };
        let version = c.u8("version")?;
        if version != VERSION {
            return Err(Error::corruption(format!("unsupported container version {version}")));
        }
        let mode = OctreeMode::from_u8(c.u8("mode")?)
            .map_err(|e| Error::corruption(e.to_string()))?;
        let depth = u32::from(c.u8("depth")?);
        if !(1..=MAX_DEPTH).contains(&depth) {
            return Err(Error::corruption(format!("depth {depth} out of range")));
        }
        let model_kind = ModelKind::from_u8(c.u8("model kind")?)?;
        let model_hash = c.u32("model hash")?;
        let origin = [c.f64("origin")?, c.f64("origin")?, c.f64("origin")?];
        let cell = c.f64("cell")?;
        let params = QuantParams { origin, cell, depth };
        params.validate().map_err(|e| Error::corruption(e.to_string()))?;
        let point_count = c.u32("point count")?;
        let symbol_count = c.u32("symbol count")? as usize;
        let payload_len = usize::try_from(c.u64("payload length")?)
            .map_err(|_| Error::corruption("payload length overflows"))?;
        let payload = c.take(payload_len, "payload")?.to_vec();
        let leaf_len = c.u32("leaf bit count")? as usize;
        let leaf_bytes = c.take(leaf_len.div_ceil(8), "leaf payload")?.to_vec();
        if c.pos != body.len() {
            return Err(Error::corruption(format!(
                "{} unexpected bytes after leaf payload",
                body.len() - c.pos
            )));
        }
        Ok(Container {
            mode,
            model_kind,
            model_hash,
            params,
            point_count,
            payload: CodedStream {
                bytes: payload,
                symbol_count,
            },
            leaf_bits: BitBuf::from_bytes(leaf_bytes, leaf_len)?,
        })
    }
}
