//! Cross-entropy training of the deep model on whole-tree minibatches.

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::context::{FeatureSet, FEATURE_DIM};
use crate::entropy::deep::{AggregationSource, DeepEntropyModel, ModelShape, NodeBatch};
use crate::error::{Error, Result};
use crate::nn::{Adam, AdamConfig, Matrix};
use crate::octree::Octree;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Trees per minibatch.
    pub batch: usize,
    pub steps: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub aggregations: usize,
    pub source: AggregationSource,
    pub features: FeatureSet,
    /// Tree depth of the training corpus.
    pub k_max: u32,
    pub validation_fraction: f64,
    /// Validation cadence in steps; the last step is always evaluated.
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch: 2,
            steps: 2000,
            adam: AdamConfig::default(),
            seed: 0,
            aggregations: 4,
            source: AggregationSource::Parent,
            features: FeatureSet::ALL,
            k_max: 12,
            validation_fraction: 0.2,
            eval_every: 250,
        }
    }
}

impl TrainConfig {
    pub fn shape(&self) -> ModelShape {
        ModelShape {
            aggregations: self.aggregations,
            source: self.source,
            features: self.features,
            k_max: self.k_max,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 || self.steps == 0 || self.eval_every == 0 {
            return Err(Error::validation("batch, steps and eval_every must be positive"));
        }
        if !(self.adam.lr > 0.0) {
            return Err(Error::validation("learning rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::validation("validation_fraction must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// One tree flattened into model inputs.
#[derive(Debug, Clone)]
pub struct TrainingTree {
    pub nodes: NodeBatch,
    /// Input point count, for bits-per-point reporting.
    pub points: usize,
}

impl TrainingTree {
    pub fn new(tree: &Octree, features: FeatureSet, k_max: u32, points: usize) -> Result<Self> {
        if tree.depth > k_max {
            return Err(Error::validation(format!(
                "tree depth {} exceeds k_max {k_max}",
                tree.depth
            )));
        }
        let n = tree.node_count();
        let mut data = Vec::with_capacity(n * FEATURE_DIM);
        let mut parents = Vec::with_capacity(n);
        let mut symbols = Vec::with_capacity(n);
        let mut level_start = 0;
        let mut prev_start = 0;
        for nodes in tree.levels() {
            for node in nodes {
                data.extend_from_slice(&features.featurize(&node.context(), k_max));
                parents.push(node.parent.map(|p| prev_start + p));
                symbols.push(node.occupancy);
            }
            prev_start = level_start;
            level_start += nodes.len();
        }
        Ok(TrainingTree {
            nodes: NodeBatch {
                features: Matrix {
                    rows: n,
                    cols: FEATURE_DIM,
                    data,
                },
                parents,
                symbols,
            },
            points,
        })
    }
}

/// Splits off the trailing `fraction` of the corpus for validation, keeping
/// at least one tree on each side.
pub fn split_corpus<T>(mut items: Vec<T>, fraction: f64) -> Result<(Vec<T>, Vec<T>)> {
    if items.len() < 2 {
        return Err(Error::validation("need at least 2 trees for a train/validation split"));
    }
    let val = ((items.len() as f64 * fraction).round() as usize).clamp(1, items.len() - 1);
    let tail = items.split_off(items.len() - val);
    Ok((items, tail))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub step: usize,
    pub train_nats: f64,
    pub val_bits_per_symbol: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: DeepEntropyModel,
    pub curve: Vec<CurvePoint>,
}

impl TrainOutcome {
    pub fn final_val_bits(&self) -> Option<f64> {
        self.curve.iter().rev().find_map(|c| c.val_bits_per_symbol)
    }
}

/// Symbol-weighted cross-entropy of the model on `trees`, bits per symbol.
pub fn evaluate_bits_per_symbol(model: &DeepEntropyModel, trees: &[TrainingTree]) -> Result<f64> {
    let mut nats = 0.0;
    let mut count = 0;
    // bounded batches keep activation memory in check on large corpora
    for chunk in trees.chunks(8) {
        let batch = NodeBatch::concat(chunk.iter().map(|t| &t.nodes));
        nats += model.batch_loss(&batch)? * batch.len() as f64;
        count += batch.len();
    }
    Ok(nats / count.max(1) as f64 / std::f64::consts::LN_2)
}

pub fn train(
    config: &TrainConfig,
    train_set: &[TrainingTree],
    val_set: &[TrainingTree],
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::validation("empty training corpus"));
    }
    let mut model = DeepEntropyModel::new(config.shape(), config.seed)?;
    let mut adam = Adam::new(config.adam);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_0f_b47c4);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut cursor = order.len();
    let mut curve = Vec::with_capacity(config.steps);

    for step in 1..=config.steps {
        let picks: Vec<&NodeBatch> = (0..config.batch.min(train_set.len()))
            .map(|_| {
                if cursor == order.len() {
                    order.shuffle(&mut rng);
                    cursor = 0;
                }
                cursor += 1;
                &train_set[order[cursor - 1]].nodes
            })
            .collect();
        let batch = NodeBatch::concat(picks);
        let (loss, grad) = model.loss_and_grad(&batch)?;
        if !loss.is_finite() {
            return Err(Error::Diverged { step, loss });
        }
        adam.step(model.params_mut(), grad.params());

        let eval = step % config.eval_every == 0 || step == config.steps;
        let val_bits_per_symbol = if eval && !val_set.is_empty() {
            let v = evaluate_bits_per_symbol(&model, val_set)?;
            if !v.is_finite() {
                return Err(Error::Diverged { step, loss: v });
            }
            info!("step {step}: train {:.4} bits/sym, val {v:.4} bits/sym", loss / std::f64::consts::LN_2);
            Some(v)
        } else {
            debug!("step {step}: train {loss:.5} nats");
            None
        };
        curve.push(CurvePoint {
            step,
            train_nats: loss,
            val_bits_per_symbol,
        });
    }
    Ok(TrainOutcome { model, curve })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::octree::OctreeMode;
    use crate::pointcloud::{QuantParams, QuantizedCloud};
    use rand::Rng;

    fn corpus(n: usize) -> Vec<TrainingTree> {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        (0..n)
            .map(|_| {
                let coords = (0..30)
                    .map(|_| {
                        let base = [rng.random_range(0..4u32), rng.random_range(0..4u32), 0];
                        [base[0] * 8 + rng.random_range(0..3), base[1] * 8 + rng.random_range(0..3), base[2]]
                    })
                    .collect();
                let q = QuantizedCloud {
                    coords,
                    params: QuantParams {
                        origin: [0.0; 3],
                        cell: 1.0,
                        depth: 5,
                    },
                };
                let t = Octree::build(&q, OctreeMode::FullSubdivision).unwrap();
                TrainingTree::new(&t, FeatureSet::ALL, 5, 30).unwrap()
            })
            .collect()
    }

    fn config(steps: usize) -> TrainConfig {
        TrainConfig {
            batch: 2,
            steps,
            adam: AdamConfig {
                lr: 1e-3,
                ..AdamConfig::default()
            },
            aggregations: 1,
            k_max: 5,
            eval_every: 10,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn split_keeps_order_and_both_sides() {
        let (a, b) = split_corpus((0..10).collect(), 0.2).unwrap();
        assert_eq!(a, (0..8).collect::<Vec<_>>());
        assert_eq!(b, vec![8, 9]);
        let (a, b) = split_corpus(vec![1, 2], 0.0).unwrap();
        assert_eq!((a.len(), b.len()), (1, 1));
        let (a, b) = split_corpus(vec![1, 2, 3], 0.99).unwrap();
        assert_eq!((a.len(), b.len()), (1, 2));
        assert!(split_corpus(vec![1], 0.5).is_err());
    }

    #[test]
    fn tree_flattening() {
        let trees = corpus(1);
        let nodes = &trees[0].nodes;
        assert_eq!(nodes.features.cols, FEATURE_DIM);
        assert_eq!(nodes.parents[0], None);
        assert!(nodes.parents[1..].iter().all(|p| p.is_some()));
        assert!(nodes.parents.iter().enumerate().all(|(i, p)| p.is_none_or(|p| p < i)));
        assert!(nodes.features.data.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn trees_deeper_than_k_max_rejected() {
        let q = QuantizedCloud {
            coords: vec![[3, 1, 4]],
            params: QuantParams {
                origin: [0.0; 3],
                cell: 1.0,
                depth: 5,
            },
        };
        let t = Octree::build(&q, OctreeMode::FullSubdivision).unwrap();
        assert!(TrainingTree::new(&t, FeatureSet::ALL, 4, 1).is_err());
    }

    #[test]
    fn bad_configs_rejected() {
        let trees = corpus(2);
        for c in [
            TrainConfig { batch: 0, ..config(5) },
            TrainConfig { steps: 0, ..config(5) },
            TrainConfig { validation_fraction: 1.0, ..config(5) },
            TrainConfig {
                adam: AdamConfig { lr: 0.0, ..AdamConfig::default() },
                ..config(5)
            },
        ] {
            assert!(train(&c, &trees, &trees).is_err());
        }
        assert!(train(&config(5), &[], &trees).is_err());
    }

    #[test]
    fn training_lowers_validation_loss_deterministically() {
        let (train_set, val_set) = split_corpus(corpus(10), 0.2).unwrap();
        let init = DeepEntropyModel::new(config(40).shape(), 0).unwrap();
        let before = evaluate_bits_per_symbol(&init, &val_set).unwrap();
        let a = train(&config(40), &train_set, &val_set).unwrap();
        let after = a.final_val_bits().unwrap();
        assert!(after < before - 0.5, "{before} -> {after}");
        assert_eq!(a.curve.len(), 40);
        assert_eq!(a.curve.iter().filter(|c| c.val_bits_per_symbol.is_some()).count(), 4);
        let b = train(&config(40), &train_set, &val_set).unwrap();
        assert_eq!(a.model.to_checkpoint(), b.model.to_checkpoint());
        assert_eq!(a.curve, b.curve);
    }
}
