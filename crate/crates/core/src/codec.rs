//! Octree ⇄ range-coded payload, one level of predictions at a time.

use crate::bits::BitBuf;
use crate::coder::{CodedStream, FreqTable, RangeDecoder, RangeEncoder};
use crate::entropy::SymbolModel;
use crate::error::{Error, Result};
use crate::octree::{Octree, OctreeBuilder, OctreeMode};

#[derive(Debug, Clone)]
pub struct EncodedTree {
    pub payload: CodedStream,
    pub leaf_bits: BitBuf,
    /// Σ −log2 of the quantized table entries actually used.
    pub table_bits: f64,
    /// Σ −log2 q under the unquantized model.
    pub model_bits: f64,
}

pub fn encode_tree(tree: &Octree, model: &dyn SymbolModel) -> Result<EncodedTree> {
    let mut predictor = model.predictor();
    let mut enc = RangeEncoder::new();
    let mut leaf_bits = BitBuf::new();
    let (mut table_bits, mut model_bits) = (0.0, 0.0);
    for nodes in tree.levels() {
        let probs = predictor.predict(nodes)?;
        let symbols: Vec<u8> = nodes.iter().map(|n| n.occupancy).collect();
        for (i, (node, &s)) in nodes.iter().zip(&symbols).enumerate() {
            let row = probs.row(i);
            let table = FreqTable::quantize(row);
            table_bits += table.cost_bits(s);
            model_bits -= row[usize::from(s)].log2();
            enc.encode(&table, s);
            if let Some(p) = node.leaf_payload {
                leaf_bits.push_bits(p.bits, p.len);
            }
        }
        predictor.observe(nodes, &symbols);
    }
    Ok(EncodedTree {
        payload: enc.finish(),
        leaf_bits,
        table_bits,
        model_bits,
    })
}

pub fn decode_tree(
    payload: &CodedStream,
    leaf_bits: &BitBuf,
    depth: u32,
    mode: OctreeMode,
    model: &dyn SymbolModel,
) -> Result<Octree> {
    let mut predictor = model.predictor();
    let mut dec = RangeDecoder::new(&payload.bytes)?;
    let mut builder = OctreeBuilder::new(depth, mode)?;
    let mut leaves = leaf_bits.reader();
    let mut decoded = 0;
    while let Some(pending) = builder.pending() {
        if decoded + pending.len() > payload.symbol_count {
            return Err(Error::corruption(format!(
                "tree needs more than the {} coded symbols",
                payload.symbol_count
            )));
        }
        let nodes = pending.to_vec();
        let probs = predictor.predict(&nodes)?;
        let symbols = (0..nodes.len())
            .map(|i| dec.decode(&FreqTable::quantize(probs.row(i))))
            .collect::<Result<Vec<u8>>>()?;
        predictor.observe(&nodes, &symbols);
        builder.push_level(&symbols, &mut leaves)?;
        decoded += nodes.len();
    }
    if decoded != payload.symbol_count {
        return Err(Error::corruption(format!(
            "tree complete after {decoded} of {} coded symbols",
            payload.symbol_count
        )));
    }
    if leaves.remaining() != 0 {
        return Err(Error::corruption(format!(
            "{} unused leaf payload bits",
            leaves.remaining()
        )));
    }
    Ok(builder.finish())
}
