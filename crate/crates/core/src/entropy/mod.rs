//! Entropy models over BFS occupancy streams.
//!
//! A model hands out a fresh [`LevelPredictor`] per tree. The predictor is
//! asked for the distributions of one whole level at a time, strictly from
//! the root down, and only ever sees nodes whose context is already known
//! to a decoder. After a level's symbols are known they are passed back
//! through [`LevelPredictor::observe`], which adaptive models use to update.

pub mod ablate;
pub mod deep;
pub mod histogram;
pub mod train;

pub use deep::{AggregationSource, BatchForward, DeepEntropyModel, ModelShape, NodeBatch};
pub use histogram::{Conditioning, HistogramModel};
pub use train::{evaluate_bits_per_symbol, split_corpus, train, CurvePoint, TrainConfig, TrainOutcome, TrainingTree};

use crate::error::Result;
use crate::nn::Matrix;
use crate::octree::{Octree, OctreeNode};

pub const SYMBOLS: usize = 256;

pub trait LevelPredictor {
    /// `nodes.len() x 256` probabilities for one level.
    fn predict(&mut self, nodes: &[OctreeNode]) -> Result<Matrix>;

    fn observe(&mut self, _nodes: &[OctreeNode], _symbols: &[u8]) {}
}

pub trait SymbolModel {
    fn predictor(&self) -> Box<dyn LevelPredictor + '_>;
}

/// Every symbol equally likely: 8 bits per symbol.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformModel;

struct UniformPredictor;

impl LevelPredictor for UniformPredictor {
    fn predict(&mut self, nodes: &[OctreeNode]) -> Result<Matrix> {
        Ok(Matrix {
            rows: nodes.len(),
            cols: SYMBOLS,
            data: vec![1.0 / SYMBOLS as f64; nodes.len() * SYMBOLS],
        })
    }
}

impl SymbolModel for UniformModel {
    fn predictor(&self) -> Box<dyn LevelPredictor + '_> {
        Box::new(UniformPredictor)
    }
}

/// Ideal code length of a tree under a model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossEntropy {
    /// Σ −log2 q(symbol) over all nodes.
    pub symbol_bits: f64,
    /// Raw early-leaf payload bits.
    pub leaf_bits: usize,
    pub symbols: usize,
    pub points: usize,
}

impl CrossEntropy {
    pub fn total_bits(&self) -> f64 {
        self.symbol_bits + self.leaf_bits as f64
    }

    pub fn bits_per_symbol(&self) -> f64 {
        self.symbol_bits / self.symbols.max(1) as f64
    }

    pub fn bits_per_point(&self) -> f64 {
        self.total_bits() / self.points.max(1) as f64
    }
}

/// Walks the tree level by level exactly as the coder does.
/// `points` is the bpp denominator (the input point count).
pub fn model_cross_entropy(
    model: &dyn SymbolModel,
    tree: &Octree,
    points: usize,
) -> Result<CrossEntropy> {
    let mut predictor = model.predictor();
    let mut symbol_bits = 0.0;
    let mut leaf_bits = 0;
    for nodes in tree.levels() {
        let probs = predictor.predict(nodes)?;
        let symbols: Vec<u8> = nodes.iter().map(|n| n.occupancy).collect();
        for (i, &s) in symbols.iter().enumerate() {
            symbol_bits -= probs.row(i)[usize::from(s)].log2();
        }
        leaf_bits += nodes
            .iter()
            .filter_map(|n| n.leaf_payload)
            .map(|p| p.len as usize)
            .sum::<usize>();
        predictor.observe(nodes, &symbols);
    }
    Ok(CrossEntropy {
        symbol_bits,
        leaf_bits,
        symbols: tree.node_count(),
        points,
    })
}
