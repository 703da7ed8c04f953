//! Counting baselines: add-one smoothed symbol histograms, optionally
//! conditioned on the parent's occupancy symbol.

use crate::entropy::{LevelPredictor, SymbolModel, SYMBOLS};
use crate::error::Result;
use crate::nn::Matrix;
use crate::octree::{Octree, OctreeNode};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Conditioning {
    None,
    ParentOccupancy,
}

impl Conditioning {
    fn classes(self) -> usize {
        match self {
            Conditioning::None => 1,
            Conditioning::ParentOccupancy => 256,
        }
    }

    fn class(self, node: &OctreeNode) -> usize {
        match self {
            Conditioning::None => 0,
            Conditioning::ParentOccupancy => usize::from(node.parent_occupancy),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistogramModel {
    pub conditioning: Conditioning,
    counts: Vec<[u64; SYMBOLS]>,
    /// Keep counting while coding (per tree, starting from `counts`).
    pub adaptive: bool,
}

impl HistogramModel {
    pub fn empty(conditioning: Conditioning) -> Self {
        HistogramModel {
            conditioning,
            counts: vec![[0; SYMBOLS]; conditioning.classes()],
            adaptive: false,
        }
    }

    /// Starts empty and learns from each level after it is coded.
    pub fn adaptive(conditioning: Conditioning) -> Self {
        HistogramModel {
            adaptive: true,
            ..HistogramModel::empty(conditioning)
        }
    }

    /// Static model counted over a corpus.
    pub fn fit<'a>(trees: impl IntoIterator<Item = &'a Octree>, conditioning: Conditioning) -> Self {
        let mut model = HistogramModel::empty(conditioning);
        for tree in trees {
            for node in tree.nodes() {
                model.count(node, node.occupancy);
            }
        }
        model
    }

    fn count(&mut self, node: &OctreeNode, symbol: u8) {
        self.counts[self.conditioning.class(node)][usize::from(symbol)] += 1;
    }

    pub fn counts(&self, class: usize) -> &[u64; SYMBOLS] {
        &self.counts[class]
    }

    /// `(count + 1) / (total + 256)`.
    pub fn distribution(&self, node: &OctreeNode) -> [f64; SYMBOLS] {
        let row = &self.counts[self.conditioning.class(node)];
        let total = row.iter().sum::<u64>() as f64 + SYMBOLS as f64;
        row.map(|c| (c as f64 + 1.0) / total)
    }
}

struct HistogramPredictor<'m> {
    model: std::borrow::Cow<'m, HistogramModel>,
}

impl LevelPredictor for HistogramPredictor<'_> {
    fn predict(&mut self, nodes: &[OctreeNode]) -> Result<Matrix> {
        let mut m = Matrix::zeros(nodes.len(), SYMBOLS);
        for (i, n) in nodes.iter().enumerate() {
            m.row_mut(i).copy_from_slice(&self.model.distribution(n));
        }
        Ok(m)
    }

    fn observe(&mut self, nodes: &[OctreeNode], symbols: &[u8]) {
        if self.model.adaptive {
            let model = self.model.to_mut();
            for (n, &s) in nodes.iter().zip(symbols) {
                model.count(n, s);
            }
        }
    }
}

impl SymbolModel for HistogramModel {
    fn predictor(&self) -> Box<dyn LevelPredictor + '_> {
        Box::new(HistogramPredictor {
            model: std::borrow::Cow::Borrowed(self),
        })
    }
}
