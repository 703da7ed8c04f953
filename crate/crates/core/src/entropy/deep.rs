//! Tree-structured deep entropy model.
//!
//! Every node gets an independent embedding of its context,
//! `h0 = embed(c)`, followed by `K` aggregation stages
//! `h_k = agg_k([h_{k-1}, h_{k-1}(parent)])`, so stage `k` sees `k`
//! generations of ancestors. The root's parent features are zero. A linear
//! head and softmax over `h_K` give the 256-way symbol distribution.
//!
//! Each aggregation stack ends with a skip connection that adds the node's
//! own `h_{k-1}` (the first half of its input) to the stack output.
//!
//! Two evaluation paths exist. [`DeepEntropyModel::predict_level`] walks
//! the tree level by level with a per-level cache of parent stages, which is
//! what the coder needs. [`DeepEntropyModel::forward_batch`] evaluates a
//! whole set of trees stage by stage, which is what training needs. They
//! compute the same function.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::context::{FeatureSet, FEATURE_DIM};
use crate::entropy::{LevelPredictor, SymbolModel, SYMBOLS};
use crate::error::{Error, Result};
use crate::nn::checkpoint::{self, ArchDescriptor};
use crate::nn::{softmax, softmax_xent, Dense, Matrix, MlpStack, StackCache};
use crate::octree::OctreeNode;

pub const HIDDEN: usize = 128;
pub const EMBED_LAYERS: usize = 5;
pub const AGGREGATION_LAYERS: usize = 3;
pub const MAX_AGGREGATIONS: usize = 5;

/// What each aggregation stage fuses the node's feature with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationSource {
    /// The parent's previous-stage feature.
    #[default]
    Parent,
    /// A copy of the node's own previous-stage feature. Same capacity, no
    /// ancestral information; an ablation control.
    SelfCopy,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelShape {
    pub aggregations: usize,
    pub source: AggregationSource,
    pub features: FeatureSet,
    pub k_max: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeepEntropyModel {
    pub embed: MlpStack,
    pub aggregators: Vec<MlpStack>,
    pub head: Dense,
    pub source: AggregationSource,
    pub features: FeatureSet,
    pub k_max: u32,
}

/// Stage features `h_0 .. h_{K-1}` of one level, kept for its children.
#[derive(Debug, Clone)]
pub struct LevelCache {
    pub stages: Vec<Matrix>,
}

/// Nodes of one training batch, flattened: features, parent row (if any)
/// and target symbol per row.
#[derive(Debug, Clone)]
pub struct NodeBatch {
    pub features: Matrix,
    pub parents: Vec<Option<usize>>,
    pub symbols: Vec<u8>,
}

impl NodeBatch {
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a NodeBatch>) -> NodeBatch {
        let mut data = Vec::new();
        let mut parents = Vec::new();
        let mut symbols = Vec::new();
        for b in parts {
            let offset = symbols.len();
            data.extend_from_slice(&b.features.data);
            parents.extend(b.parents.iter().map(|p| p.map(|p| p + offset)));
            symbols.extend_from_slice(&b.symbols);
        }
        NodeBatch {
            features: Matrix {
                rows: symbols.len(),
                cols: FEATURE_DIM,
                data,
            },
            parents,
            symbols,
        }
    }
}

/// Forward state of [`DeepEntropyModel::forward_batch`].
pub struct BatchForward {
    embed: StackCache,
    stages: Vec<StackCache>,
    pub logits: Matrix,
}

impl BatchForward {
    pub fn hidden(&self, stage: usize) -> &Matrix {
        if stage == 0 {
            self.embed.output()
        } else {
            self.stages[stage - 1].output()
        }
    }

    /// On/off state of every ReLU unit in the pass. Equal masks put two
    /// passes on the same smooth piece of the network.
    pub fn relu_mask(&self) -> Vec<bool> {
        std::iter::once(&self.embed)
            .chain(&self.stages)
            .flat_map(StackCache::relu_mask)
            .collect()
    }
}

/// `out[i] = m[parents[i]]`, zero rows for roots.
fn gather(m: &Matrix, parents: &[Option<usize>]) -> Matrix {
    let mut out = Matrix::zeros(parents.len(), m.cols);
    for (i, p) in parents.iter().enumerate() {
        if let Some(p) = *p {
            out.row_mut(i).copy_from_slice(m.row(p));
        }
    }
    out
}

impl DeepEntropyModel {
    pub fn new(shape: ModelShape, seed: u64) -> Result<Self> {
        if shape.aggregations > MAX_AGGREGATIONS {
            return Err(Error::validation(format!(
                "at most {MAX_AGGREGATIONS} aggregations supported, got {}",
                shape.aggregations
            )));
        }
        if !(1..=255).contains(&shape.k_max) {
            return Err(Error::validation(format!("k_max {} out of range", shape.k_max)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut embed_widths = vec![FEATURE_DIM];
        embed_widths.extend([HIDDEN; EMBED_LAYERS]);
        let embed = MlpStack::init(&embed_widths, false, &mut rng)?;
        let mut agg_widths = vec![2 * HIDDEN];
        agg_widths.extend([HIDDEN; AGGREGATION_LAYERS]);
        let aggregators = (0..shape.aggregations)
            .map(|_| MlpStack::init(&agg_widths, true, &mut rng))
            .collect::<Result<_>>()?;
        let head = Dense::he_uniform(HIDDEN, SYMBOLS, &mut rng);
        Ok(DeepEntropyModel {
            embed,
            aggregators,
            head,
            source: shape.source,
            features: shape.features,
            k_max: shape.k_max,
        })
    }

    pub fn shape(&self) -> ModelShape {
        ModelShape {
            aggregations: self.aggregators.len(),
            source: self.source,
            features: self.features,
            k_max: self.k_max,
        }
    }

    pub fn aggregations(&self) -> usize {
        self.aggregators.len()
    }

    pub fn zeros_like(&self) -> Self {
        DeepEntropyModel {
            embed: self.embed.zeros_like(),
            aggregators: self.aggregators.iter().map(MlpStack::zeros_like).collect(),
            head: Dense::zeros(self.head.input, self.head.output),
            source: self.source,
            features: self.features,
            k_max: self.k_max,
        }
    }

    pub fn param_count(&self) -> usize {
        self.embed.param_count()
            + self.aggregators.iter().map(MlpStack::param_count).sum::<usize>()
            + self.head.param_count()
    }

    /// Parameter slices in checkpoint order: embedding layers, aggregation
    /// stages in order, head; weights before bias within each layer.
    pub fn params(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = self.embed.params().collect();
        for a in &self.aggregators {
            out.extend(a.params());
        }
        out.push(&self.head.weight);
        out.push(&self.head.bias);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = self.embed.params_mut().collect();
        for a in &mut self.aggregators {
            out.extend(a.params_mut());
        }
        out.push(&mut self.head.weight);
        out.push(&mut self.head.bias);
        out
    }

    /// Context features of a level, masked to the model's feature set.
    pub fn level_features(&self, nodes: &[OctreeNode]) -> Result<Matrix> {
        let mut m = Matrix::zeros(nodes.len(), FEATURE_DIM);
        for (i, n) in nodes.iter().enumerate() {
            if n.level >= self.k_max {
                return Err(Error::validation(format!(
                    "node at level {} exceeds the model's training depth {}",
                    n.level, self.k_max
                )));
            }
            m.row_mut(i)
                .copy_from_slice(&self.features.featurize(&n.context(), self.k_max));
        }
        Ok(m)
    }

    fn aggregation_input(&self, own: &Matrix, parent: Matrix) -> Matrix {
        match self.source {
            AggregationSource::Parent => own.hcat(&parent),
            AggregationSource::SelfCopy => own.hcat(own),
        }
    }

    /// Distributions for one level given its parents' cached stages.
    ///
    /// `parents[i]` indexes the previous level. The root level passes
    /// `parent_cache = None` and gets zero parent features. Returns the
    /// `n x 256` probabilities and this level's cache.
    pub fn predict_level(
        &self,
        features: &Matrix,
        parents: &[Option<usize>],
        parent_cache: Option<&LevelCache>,
    ) -> Result<(Matrix, LevelCache)> {
        if parents.len() != features.rows {
            return Err(Error::Shape(format!(
                "{} parent links for {} nodes",
                parents.len(),
                features.rows
            )));
        }
        let k = self.aggregations();
        if k > 0 && self.source == AggregationSource::Parent {
            let has_parents = parents.iter().any(Option::is_some);
            match parent_cache {
                None if has_parents => {
                    return Err(Error::validation("missing parent stage cache for non-root level"))
                }
                Some(c) if c.stages.len() != k => {
                    return Err(Error::Shape(format!(
                        "parent cache has {} stages, model needs {k}",
                        c.stages.len()
                    )))
                }
                _ => {}
            }
            if let Some(c) = parent_cache {
                let rows = c.stages[0].rows;
                if let Some(bad) = parents.iter().flatten().find(|&&p| p >= rows) {
                    return Err(Error::Shape(format!(
                        "parent index {bad} outside cached level of {rows} nodes"
                    )));
                }
            }
        }
        let mut stages = Vec::with_capacity(k);
        let mut h = self.embed.forward(features)?.output().clone();
        for (stage, agg) in self.aggregators.iter().enumerate() {
            let parent = match parent_cache {
                Some(c) => gather(&c.stages[stage], parents),
                None => Matrix::zeros(features.rows, HIDDEN),
            };
            let input = self.aggregation_input(&h, parent);
            stages.push(h);
            h = agg.forward(&input)?.output().clone();
        }
        let logits = self.head.forward(&h)?;
        Ok((softmax(&logits), LevelCache { stages }))
    }

    /// Stage-major forward pass over a flattened batch of whole trees.
    pub fn forward_batch(&self, batch: &NodeBatch) -> Result<BatchForward> {
        let embed = self.embed.forward(&batch.features)?;
        let mut stages: Vec<StackCache> = Vec::with_capacity(self.aggregations());
        for agg in &self.aggregators {
            let own = stages.last().map_or(embed.output(), StackCache::output);
            let input = self.aggregation_input(own, gather(own, &batch.parents));
            stages.push(agg.forward(&input)?);
        }
        let top = stages.last().map_or(embed.output(), StackCache::output);
        let logits = self.head.forward(top)?;
        Ok(BatchForward {
            embed,
            stages,
            logits,
        })
    }

    /// Mean cross-entropy (nats) of the batch and its parameter gradient.
    pub fn loss_and_grad(&self, batch: &NodeBatch) -> Result<(f64, DeepEntropyModel)> {
        let fwd = self.forward_batch(batch)?;
        let xent = softmax_xent(&fwd.logits, &batch.symbols)?;
        let mut grad = self.zeros_like();
        let k = self.aggregations();
        let mut d = self
            .head
            .backward(fwd.hidden(k), &xent.grad, &mut grad.head);
        for stage in (0..k).rev() {
            let d_in = self.aggregators[stage].backward(
                &fwd.stages[stage],
                &d,
                &mut grad.aggregators[stage],
            )?;
            let (mut d_own, d_other) = d_in.hsplit(HIDDEN);
            match self.source {
                AggregationSource::Parent => {
                    for (i, p) in batch.parents.iter().enumerate() {
                        if let Some(p) = *p {
                            for (g, u) in d_own.row_mut(p).iter_mut().zip(d_other.row(i)) {
                                *g += u;
                            }
                        }
                    }
                }
                AggregationSource::SelfCopy => {
                    for (g, u) in d_own.data.iter_mut().zip(&d_other.data) {
                        *g += u;
                    }
                }
            }
            d = d_own;
        }
        self.embed.backward(&fwd.embed, &d, &mut grad.embed)?;
        Ok((xent.loss, grad))
    }

    /// Mean cross-entropy of a batch in nats, forward only.
    pub fn batch_loss(&self, batch: &NodeBatch) -> Result<f64> {
        let fwd = self.forward_batch(batch)?;
        Ok(softmax_xent(&fwd.logits, &batch.symbols)?.loss)
    }

    fn descriptor(&self) -> ArchDescriptor {
        ArchDescriptor {
            aggregations: self.aggregations() as u8,
            aggregation_source: match self.source {
                AggregationSource::Parent => 0,
                AggregationSource::SelfCopy => 1,
            },
            feature_mask: self.features.bits(),
            k_max: self.k_max as u8,
            input_width: FEATURE_DIM as u16,
            hidden_width: HIDDEN as u16,
            output_width: SYMBOLS as u16,
            embed_layers: EMBED_LAYERS as u8,
            aggregation_layers: AGGREGATION_LAYERS as u8,
        }
    }

    pub fn to_checkpoint(&self) -> Vec<u8> {
        checkpoint::encode(&self.descriptor(), self.params())
    }

    /// crc32 of the serialized checkpoint; binds containers to a model.
    pub fn checksum(&self) -> u32 {
        let bytes = self.to_checkpoint();
        u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap())
    }

    pub fn from_checkpoint(bytes: &[u8]) -> Result<Self> {
        let ck = checkpoint::decode(bytes)?;
        let d = ck.descriptor;
        if usize::from(d.input_width) != FEATURE_DIM
            || usize::from(d.hidden_width) != HIDDEN
            || usize::from(d.output_width) != SYMBOLS
            || usize::from(d.embed_layers) != EMBED_LAYERS
            || usize::from(d.aggregation_layers) != AGGREGATION_LAYERS
        {
            return Err(Error::corruption(format!("unsupported architecture {d:?}")));
        }
        let source = match d.aggregation_source {
            0 => AggregationSource::Parent,
            1 => AggregationSource::SelfCopy,
            s => return Err(Error::corruption(format!("unknown aggregation source {s}"))),
        };
        let features = FeatureSet::from_bits(d.feature_mask)
            .ok_or_else(|| Error::corruption(format!("bad feature mask {}", d.feature_mask)))?;
        let shape = ModelShape {
            aggregations: usize::from(d.aggregations),
            source,
            features,
            k_max: u32::from(d.k_max),
        };
        let mut model = DeepEntropyModel::new(shape, 0)?;
        if model.param_count() != ck.params.len() {
            return Err(Error::corruption(format!(
                "checkpoint holds {} parameters, architecture needs {}",
                ck.params.len(),
                model.param_count()
            )));
        }
        let mut rest = &ck.params[..];
        for slot in model.params_mut() {
            let (head, tail) = rest.split_at(slot.len());
            slot.copy_from_slice(head);
            rest = tail;
        }
        if ck.params.iter().any(|v| !v.is_finite()) {
            return Err(Error::corruption("non-finite parameter in checkpoint"));
        }
        Ok(model)
    }
}

/// Per-tree predictor holding the previous level's stage cache.
pub struct DeepPredictor<'m> {
    model: &'m DeepEntropyModel,
    cache: Option<LevelCache>,
}

impl LevelPredictor for DeepPredictor<'_> {
    fn predict(&mut self, nodes: &[OctreeNode]) -> Result<Matrix> {
        let features = self.model.level_features(nodes)?;
        let parents: Vec<Option<usize>> = nodes.iter().map(|n| n.parent).collect();
        let (probs, cache) = self
            .model
            .predict_level(&features, &parents, self.cache.as_ref())?;
        // only the immediately preceding level is ever needed
        self.cache = Some(cache);
        Ok(probs)
    }
}

impl SymbolModel for DeepEntropyModel {
    fn predictor(&self) -> Box<dyn LevelPredictor + '_> {
        Box::new(DeepPredictor {
            model: self,
            cache: None,
        })
    }
}
