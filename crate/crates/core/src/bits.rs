//! MSB-first bit buffer for raw leaf payloads.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BitBuf {
    bytes: Vec<u8>,
    len: usize,
}

impl BitBuf {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_bytes(bytes: Vec<u8>, len: usize) -> Result<Self> {
        if len > bytes.len() * 8 || bytes.len() > len.div_ceil(8) {
            return Err(Error::corruption(format!(
                "bit length {len} inconsistent with {} bytes",
                bytes.len()
            )));
        }
        Ok(BitBuf { bytes, len })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Backing bytes, zero-padded to a whole byte.
    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn push(&mut self, bit: bool) {
        if self.len % 8 == 0 {
            self.bytes.push(0);
        }
        if bit {
            self.bytes[self.len / 8] |= 0x80 >> (self.len % 8);
        }
        self.len += 1;
    }

    /// Appends the low `n` bits of `value`, most significant first.
    pub fn push_bits(&mut self, value: u64, n: u32) {
        for i in (0..n).rev() {
            self.push((value >> i) & 1 == 1);
        }
    }

    pub fn get(&self, i: usize) -> Option<bool> {
        (i < self.len).then(|| self.bytes[i / 8] & (0x80 >> (i % 8)) != 0)
    }

    pub fn reader(&self) -> BitReader<'_> {
        BitReader { buf: self, pos: 0 }
    }
}

pub struct BitReader<'a> {
    buf: &'a BitBuf,
    pos: usize,
}

impl BitReader<'_> {
    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.buf.len - self.pos
    }

    pub fn read_bits(&mut self, n: u32) -> Result<u64> {
        if self.remaining() < n as usize {
            return Err(Error::corruption(format!(
                "leaf payload exhausted: need {n} bits at bit {}, {} left",
                self.pos,
                self.remaining()
            )));
        }
        let mut v = 0u64;
        for _ in 0..n {
            v = (v << 1) | u64::from(self.buf.get(self.pos).unwrap());
            self.pos += 1;
        }
        Ok(v)
    }
}
