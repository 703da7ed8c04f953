//! Grids of identically seeded training runs over feature sets and
//! aggregation counts.

use std::io::Write;

use crate::context::FeatureSet;
use crate::entropy::deep::AggregationSource;
use crate::entropy::train::{evaluate_bits_per_symbol, train, TrainConfig, TrainingTree};
use crate::error::{Error, Result};
use crate::octree::Octree;

#[derive(Debug, Clone, PartialEq)]
pub struct AblationCell {
    pub label: String,
    pub features: FeatureSet,
    pub aggregations: usize,
    pub source: AggregationSource,
}

impl AblationCell {
    pub fn new(features: FeatureSet, aggregations: usize, source: AggregationSource) -> Self {
        let label = match source {
            AggregationSource::Parent => format!("{} K={aggregations}", features.label()),
            AggregationSource::SelfCopy => format!("{} K={aggregations} self", features.label()),
        };
        AblationCell {
            label,
            features,
            aggregations,
            source,
        }
    }
}

/// L ⊂ L+P ⊂ L+P+O ⊂ L+P+O+LL at a fixed aggregation count.
pub fn feature_grid(aggregations: usize) -> Vec<AblationCell> {
    let steps = [
        FeatureSet::LEVEL,
        FeatureSet {
            parent: true,
            ..FeatureSet::LEVEL
        },
        FeatureSet {
            parent: true,
            octant: true,
            ..FeatureSet::LEVEL
        },
        FeatureSet::ALL,
    ];
    steps
        .into_iter()
        .map(|f| AblationCell::new(f, aggregations, AggregationSource::Parent))
        .collect()
}

pub fn aggregation_grid(counts: &[usize]) -> Vec<AblationCell> {
    counts
        .iter()
        .map(|&k| AblationCell::new(FeatureSet::ALL, k, AggregationSource::Parent))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub cell: String,
    pub depth: u32,
    pub bits_per_symbol: f64,
    pub bpp: f64,
}

/// Trains one model per cell with the shared `base` settings (seed, steps,
/// learning rate) and scores it on `val`.
pub fn ablate(
    cells: &[AblationCell],
    base: &TrainConfig,
    trees: &[(Octree, usize)],
    val_trees: &[(Octree, usize)],
) -> Result<Vec<AblationRow>> {
    if trees.is_empty() || val_trees.is_empty() {
        return Err(Error::validation("ablation needs training and validation trees"));
    }
    let mut rows = Vec::with_capacity(cells.len());
    for cell in cells {
        let config = TrainConfig {
            features: cell.features,
            aggregations: cell.aggregations,
            source: cell.source,
            ..base.clone()
        };
        let prep = |set: &[(Octree, usize)]| -> Result<Vec<TrainingTree>> {
            set.iter()
                .map(|(t, n)| TrainingTree::new(t, cell.features, base.k_max, *n))
                .collect()
        };
        let train_set = prep(trees)?;
        let val_set = prep(val_trees)?;
        let outcome = train(&config, &train_set, &[])?;
        let bps = evaluate_bits_per_symbol(&outcome.model, &val_set)?;
        let symbols: usize = val_set.iter().map(|t| t.nodes.len()).sum();
        let points: usize = val_set.iter().map(|t| t.points).sum();
        log::info!("{}: {bps:.4} bits/symbol", cell.label);
        rows.push(AblationRow {
            cell: cell.label.clone(),
            depth: base.k_max,
            bits_per_symbol: bps,
            bpp: bps * symbols as f64 / points.max(1) as f64,
        });
    }
    Ok(rows)
}

/// CSV with header `cell,depth,bits_per_symbol,bpp`.
pub fn write_csv<W: Write>(rows: &[AblationRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let wrap = |e: csv::Error| Error::validation(format!("csv: {e}"));
    w.write_record(["cell", "depth", "bits_per_symbol", "bpp"]).map_err(wrap)?;
    for r in rows {
        w.write_record([
            r.cell.clone(),
            r.depth.to_string(),
            format!("{:.6}", r.bits_per_symbol),
            format!("{:.6}", r.bpp),
        ])
        .map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::validation(format!("csv: {e}")))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids_have_expected_cells() {
        let f: Vec<String> = feature_grid(0).into_iter().map(|c| c.label).collect();
        assert_eq!(f, ["L K=0", "L+P K=0", "L+P+O K=0", "L+P+O+LL K=0"]);
        let k: Vec<usize> = aggregation_grid(&[0, 2, 4]).iter().map(|c| c.aggregations).collect();
        assert_eq!(k, [0, 2, 4]);
    }

    #[test]
    fn csv_layout() {
        let rows = [AblationRow {
            cell: "L K=0".into(),
            depth: 10,
            bits_per_symbol: 3.5,
            bpp: 7.25,
        }];
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "cell,depth,bits_per_symbol,bpp\nL K=0,10,3.500000,7.250000\n"
        );
    }
}
