//! Byte-oriented range coder with 16-bit frequency tables.
//!
//! The coder keeps a 56-bit window `low` inside a 64-bit register; bit 56
//! catches carries. `range` stays in `[2^48, 2^56]`, so the per-symbol
//! truncation loss of `range >> 16` is below `2^-32` relative. Output bytes
//! whose value may still change through a carry are held back as one cached
//! byte plus a run of pending `0xFF`s, and released once a carry is ruled
//! out (or applied).
//!
//! The leading byte of the conceptual output is always zero (the coded
//! value lies in `[0, 1)`) and is not emitted. `finish` emits the fewest
//! window bytes that pin a value inside the final interval; the decoder
//! reads zeros past the end of the payload, at most 7 of them.

use crate::entropy::SYMBOLS;
use crate::error::{Error, Result};

pub const TOTAL_BITS: u32 = 16;
pub const TOTAL: u32 = 1 << TOTAL_BITS;

const WINDOW_BYTES: usize = 7;
const TOP: u64 = 1 << 56;
const BOTTOM: u64 = 1 << 48;

/// Cumulative frequencies summing to exactly 2^16, every symbol ≥ 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FreqTable {
    cumulative: [u32; SYMBOLS + 1],
}

impl FreqTable {
    pub fn uniform() -> Self {
        Self::quantize(&[1.0 / SYMBOLS as f64; SYMBOLS])
    }

    /// `f_j = 1 + floor(p_j * (2^16 - 256))`; the remainder goes to the most
    /// probable symbol (lowest index on ties).
    pub fn quantize(p: &[f64]) -> Self {
        assert_eq!(p.len(), SYMBOLS, "distribution must have 256 entries");
        let scale = f64::from(TOTAL - SYMBOLS as u32);
        let mut freq = [0u32; SYMBOLS];
        let mut argmax = 0;
        for (j, &pj) in p.iter().enumerate() {
            let pj = if pj.is_finite() { pj.clamp(0.0, 1.0) } else { 0.0 };
            freq[j] = 1 + (pj * scale).floor() as u32;
            if p[j] > p[argmax] {
                argmax = j;
            }
        }
        let sum: u32 = freq.iter().sum();
        if sum <= TOTAL {
            freq[argmax] += TOTAL - sum;
        } else {
            // only reachable when p sums to more than 1
            let mut excess = sum - TOTAL;
            let mut order: Vec<usize> = (0..SYMBOLS).collect();
            order.sort_by(|&a, &b| freq[b].cmp(&freq[a]).then(a.cmp(&b)));
            for j in order {
                let take = excess.min(freq[j] - 1);
                freq[j] -= take;
                excess -= take;
                if excess == 0 {
                    break;
                }
            }
        }
        Self::from_frequencies(&freq).expect("quantized table is valid")
    }

    pub fn from_frequencies(freq: &[u32]) -> Result<Self> {
        if freq.len() != SYMBOLS || freq.iter().any(|&f| f == 0) {
            return Err(Error::validation("frequency table needs 256 non-zero entries"));
        }
        let mut cumulative = [0u32; SYMBOLS + 1];
        for (j, &f) in freq.iter().enumerate() {
            cumulative[j + 1] = cumulative[j] + f;
        }
        if cumulative[SYMBOLS] != TOTAL {
            return Err(Error::validation(format!(
                "frequencies sum to {}, expected {TOTAL}",
                cumulative[SYMBOLS]
            )));
        }
        Ok(FreqTable { cumulative })
    }

    pub fn freq(&self, symbol: u8) -> u32 {
        let s = usize::from(symbol);
        self.cumulative[s + 1] - self.cumulative[s]
    }

    pub fn cumulative(&self) -> &[u32; SYMBOLS + 1] {
        &self.cumulative
    }

    /// Ideal code length of `symbol` under this table.
    pub fn cost_bits(&self, symbol: u8) -> f64 {
        -(f64::from(self.freq(symbol)) / f64::from(TOTAL)).log2()
    }

    fn symbol_for(&self, target: u32) -> u8 {
        // last index with cumulative[s] <= target
        (self.cumulative.partition_point(|&c| c <= target) - 1) as u8
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodedStream {
    pub bytes: Vec<u8>,
    pub symbol_count: usize,
}

impl CodedStream {
    /// Payload size in bits, flush included.
    pub fn measure_bits(&self) -> usize {
        self.bytes.len() * 8
    }
}

pub struct RangeEncoder {
    low: u64,
    range: u64,
    cache: u8,
    pending_ff: u64,
    /// The first released byte is the implicit leading zero.
    leading: bool,
    out: Vec<u8>,
    symbols: usize,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl RangeEncoder {
    pub fn new() -> Self {
        RangeEncoder {
            low: 0,
            range: TOP,
            cache: 0,
            pending_ff: 0,
            leading: true,
            out: Vec::new(),
            symbols: 0,
        }
    }

    fn shift_low(&mut self) {
        if self.low < 0xFF << 48 || self.low >= TOP {
            let carry = (self.low >> 56) as u8;
            if self.leading {
                debug_assert_eq!(carry, 0, "carry out of the leading byte");
                self.leading = false;
            } else {
                self.out.push(self.cache.wrapping_add(carry));
            }
            for _ in 0..self.pending_ff {
                self.out.push(0xFFu8.wrapping_add(carry));
            }
            self.pending_ff = 0;
            self.cache = (self.low >> 48) as u8;
        } else {
            self.pending_ff += 1;
        }
        self.low = (self.low << 8) & (TOP - 1);
    }

    pub fn encode(&mut self, table: &FreqTable, symbol: u8) {
        let s = usize::from(symbol);
        let start = u64::from(table.cumulative[s]);
        let freq = u64::from(table.cumulative[s + 1]) - start;
        let r = self.range >> TOTAL_BITS;
        self.low += r * start;
        self.range = r * freq;
        while self.range < BOTTOM {
            self.range <<= 8;
            self.shift_low();
        }
        self.symbols += 1;
    }

    pub fn finish(mut self) -> CodedStream {
        // fewest window bytes n such that some v = m * 2^(56 - 8n) lies in
        // [low, low + range)
        let end = self.low + self.range;
        let mut n = 0;
        loop {
            let step = 1u64 << (56 - 8 * n);
            let v = self.low.div_ceil(step) * step;
            if v < end {
                self.low = v;
                break;
            }
            n += 1;
        }
        for _ in 0..=n {
            self.shift_low();
        }
        CodedStream {
            bytes: self.out,
            symbol_count: self.symbols,
        }
    }
}

pub struct RangeDecoder<'a> {
    data: &'a [u8],
    pos: usize,
    code: u64,
    range: u64,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(data: &'a [u8]) -> Result<Self> {
        let mut d = RangeDecoder {
            data,
            pos: 0,
            code: 0,
            range: TOP,
        };
        for _ in 0..WINDOW_BYTES {
            d.code = (d.code << 8) | u64::from(d.next_byte()?);
        }
        Ok(d)
    }

    fn next_byte(&mut self) -> Result<u8> {
        let b = match self.data.get(self.pos) {
            Some(&b) => b,
            None if self.pos < self.data.len() + WINDOW_BYTES => 0,
            None => {
                return Err(Error::corruption(format!(
                    "range coder payload exhausted after {} bytes",
                    self.data.len()
                )))
            }
        };
        self.pos += 1;
        Ok(b)
    }

    pub fn decode(&mut self, table: &FreqTable) -> Result<u8> {
        let r = self.range >> TOTAL_BITS;
        let target = self.code / r;
        if target >= u64::from(TOTAL) {
            return Err(Error::corruption("range decoder state out of bounds"));
        }
        let symbol = table.symbol_for(target as u32);
        let s = usize::from(symbol);
        let start = u64::from(table.cumulative[s]);
        let freq = u64::from(table.cumulative[s + 1]) - start;
        self.code -= r * start;
        self.range = r * freq;
        while self.range < BOTTOM {
            self.code = (self.code << 8) | u64::from(self.next_byte()?);
            self.range <<= 8;
        }
        Ok(symbol)
    }
}

/// Encodes `symbols`, asking `table_for(i, prefix)` for the table of symbol
/// `i` given the already coded prefix.
pub fn encode_with(
    symbols: &[u8],
    mut table_for: impl FnMut(usize, &[u8]) -> FreqTable,
) -> CodedStream {
    let mut enc = RangeEncoder::new();
    for (i, &s) in symbols.iter().enumerate() {
        let t = table_for(i, &symbols[..i]);
        enc.encode(&t, s);
    }
    enc.finish()
}

pub fn decode_with(
    stream: &CodedStream,
    mut table_for: impl FnMut(usize, &[u8]) -> FreqTable,
) -> Result<Vec<u8>> {
    let mut dec = RangeDecoder::new(&stream.bytes)?;
    let mut out = Vec::with_capacity(stream.symbol_count);
    for i in 0..stream.symbol_count {
        let t = table_for(i, &out);
        out.push(dec.decode(&t)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_distribution(r: &mut ChaCha8Rng, peaky: bool) -> Vec<f64> {
        let mut p: Vec<f64> = (0..SYMBOLS)
            .map(|_| {
                let u: f64 = r.random();
                if peaky {
                    u.powi(12)
                } else {
                    u
                }
            })
            .collect();
        let s: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= s);
        p
    }

    #[test]
    fn uniform_table() {
        let t = FreqTable::uniform();
        assert!((0..=255u8).all(|s| t.freq(s) == 256));
        assert_eq!(t.cumulative()[256], 65536);
    }

    #[test]
    fn one_hot_table() {
        let mut p = vec![0.0; 256];
        p[5] = 1.0;
        let t = FreqTable::quantize(&p);
        assert_eq!(t.freq(5), 65281);
        assert!((0..=255u8).filter(|&s| s != 5).all(|s| t.freq(s) == 1));
    }

    #[test]
    fn over_unit_mass_still_valid() {
        let p = vec![1.0 / 250.0; 256];
        let t = FreqTable::quantize(&p);
        assert_eq!(t.cumulative()[256], TOTAL);
        assert!((0..=255u8).all(|s| t.freq(s) >= 1));
    }

    #[test]
    fn empty_stream() {
        let s = encode_with(&[], |_, _| FreqTable::uniform());
        assert!(s.bytes.is_empty());
        assert_eq!(decode_with(&s, |_, _| FreqTable::uniform()).unwrap(), Vec::<u8>::new());
    }

    #[test]
    fn single_symbol() {
        for sym in [0u8, 1, 128, 255] {
            let s = encode_with(&[sym], |_, _| FreqTable::uniform());
            assert_eq!(decode_with(&s, |_, _| FreqTable::uniform()).unwrap(), vec![sym]);
            assert!(s.bytes.len() <= 2);
        }
    }

    #[test]
    fn uniform_rate() {
        let mut r = ChaCha8Rng::seed_from_u64(1);
        for n in [1usize, 10, 1000, 20_000] {
            let syms: Vec<u8> = (0..n).map(|_| r.random()).collect();
            let s = encode_with(&syms, |_, _| FreqTable::uniform());
            assert!(s.bytes.len() <= n + 8 && s.bytes.len() + 8 >= n, "{n}: {}", s.bytes.len());
            assert_eq!(decode_with(&s, |_, _| FreqTable::uniform()).unwrap(), syms);
        }
    }

    #[test]
    fn skewed_rate() {
        let mut p = vec![0.004 / 255.0; 256];
        p[0] = 0.996;
        let t = FreqTable::quantize(&p);
        let syms = vec![0u8; 1000];
        let s = encode_with(&syms, |_, _| t.clone());
        let info: f64 = syms.iter().map(|&x| t.cost_bits(x)).sum();
        assert!(s.bytes.len() <= 16, "{} bytes", s.bytes.len());
        assert!(s.measure_bits() as f64 <= info + 64.0);
        assert_eq!(decode_with(&s, |_, _| t.clone()).unwrap(), syms);
    }

    #[test]
    fn carries_propagate() {
        // symbol 255 sits at the top of the interval and drives long 0xFF runs
        let mut p = vec![1e-9; 256];
        p[255] = 1.0;
        let t = FreqTable::quantize(&p);
        let mut syms = vec![255u8; 5000];
        syms.extend([0u8, 3, 255, 255, 0]);
        let s = encode_with(&syms, |_, _| t.clone());
        assert_eq!(decode_with(&s, |_, _| t.clone()).unwrap(), syms);
    }

    #[test]
    fn mismatched_table_corrupts() {
        let mut r = ChaCha8Rng::seed_from_u64(5);
        let syms: Vec<u8> = (0..500).map(|_| r.random_range(0..8)).collect();
        let good = FreqTable::quantize(&random_distribution(&mut r, true));
        let bad = FreqTable::quantize(&random_distribution(&mut r, true));
        let s = encode_with(&syms, |_, _| good.clone());
        match decode_with(&s, |_, _| bad.clone()) {
            Ok(out) => assert_ne!(out, syms),
            Err(e) => assert!(matches!(e, Error::Corruption(_))),
        }
    }

    #[test]
    fn truncated_payload_detected() {
        let mut r = ChaCha8Rng::seed_from_u64(6);
        let syms: Vec<u8> = (0..400).map(|_| r.random()).collect();
        let s = encode_with(&syms, |_, _| FreqTable::uniform());
        let cut = CodedStream {
            bytes: s.bytes[..s.bytes.len() - 40].to_vec(),
            symbol_count: s.symbol_count,
        };
        assert!(decode_with(&cut, |_, _| FreqTable::uniform()).is_err());
    }

    #[test]
    fn adaptive_tables_roundtrip_and_near_optimal() {
        let mut r = ChaCha8Rng::seed_from_u64(11);
        let tables: Vec<FreqTable> = (0..3000)
            .map(|i| FreqTable::quantize(&random_distribution(&mut r, i % 2 == 0)))
            .collect();
        let syms: Vec<u8> = tables
            .iter()
            .map(|t| {
                // sample from the table itself
                let u = r.random_range(0..TOTAL);
                t.symbol_for(u)
            })
            .collect();
        let s = encode_with(&syms, |i, _| tables[i].clone());
        let info: f64 = syms.iter().zip(&tables).map(|(&x, t)| t.cost_bits(x)).sum();
        let bits = s.measure_bits() as f64;
        assert!(bits <= info + 64.0, "{bits} > {info} + 64");
        assert_eq!(decode_with(&s, |i, _| tables[i].clone()).unwrap(), syms);
    }

    proptest! {
        #[test]
        fn roundtrip_arbitrary(
            syms in prop::collection::vec(any::<u8>(), 0..400),
            seed in any::<u64>(),
            peaky in any::<bool>(),
        ) {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let tables: Vec<FreqTable> = (0..syms.len())
                .map(|_| FreqTable::quantize(&random_distribution(&mut r, peaky)))
                .collect();
            let s = encode_with(&syms, |i, _| tables[i].clone());
            let info: f64 = syms.iter().zip(&tables).map(|(&x, t)| t.cost_bits(x)).sum();
            prop_assert!(s.measure_bits() as f64 <= info + 64.0);
            prop_assert_eq!(decode_with(&s, |i, _| tables[i].clone()).unwrap(), syms);
        }
    }
}
