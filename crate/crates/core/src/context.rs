//! Per-node side information known to both encoder and decoder before the
//! node's own symbol, and its fixed-width feature encoding.

use serde::{Deserialize, Serialize};

use crate::octree::OctreeNode;

pub const FEATURE_DIM: usize = 20;

const LEVEL_SLOT: usize = 0;
const PARENT_SLOTS: std::ops::Range<usize> = 1..9;
const OCTANT_SLOTS: std::ops::Range<usize> = 9..17;
const LOCATION_SLOTS: std::ops::Range<usize> = 17..20;

pub type FeatureVector = [f64; FEATURE_DIM];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeContext {
    pub level: u32,
    /// Occupancy symbol of the parent, 0 for the root.
    pub parent_occupancy: u8,
    pub octant: Option<u8>,
    /// Cell center normalized to the unit cube.
    pub location: [f64; 3],
}

impl NodeContext {
    pub fn root() -> Self {
        NodeContext {
            level: 0,
            parent_occupancy: 0,
            octant: None,
            location: [0.5; 3],
        }
    }

    /// Uses only the node's geometry and its parent's symbol, never the
    /// node's own occupancy or anything below it.
    pub fn for_node(node: &OctreeNode) -> Self {
        let scale = 0.5f64.powi(node.level as i32);
        NodeContext {
            level: node.level,
            parent_occupancy: node.parent_occupancy,
            octant: node.octant,
            location: node.cell.map(|c| (f64::from(c) + 0.5) * scale),
        }
    }

    /// Level is scaled by `k_max`, the tree depth the model was trained on,
    /// so a truncated tree sees the same level encoding.
    pub fn featurize(&self, k_max: u32) -> FeatureVector {
        debug_assert!(k_max > self.level);
        let mut f = [0.0; FEATURE_DIM];
        f[LEVEL_SLOT] = f64::from(self.level) / f64::from(k_max);
        for (bit, slot) in PARENT_SLOTS.enumerate() {
            f[slot] = f64::from(self.parent_occupancy >> bit & 1);
        }
        if let Some(o) = self.octant {
            f[OCTANT_SLOTS.start + usize::from(o)] = 1.0;
        }
        f[LOCATION_SLOTS].copy_from_slice(&self.location);
        f
    }
}

/// Which context groups reach the network; excluded groups are zeroed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureSet {
    pub level: bool,
    pub parent: bool,
    pub octant: bool,
    pub location: bool,
}

impl Default for FeatureSet {
    fn default() -> Self {
        FeatureSet::ALL
    }
}

impl FeatureSet {
    pub const ALL: FeatureSet = FeatureSet {
        level: true,
        parent: true,
        octant: true,
        location: true,
    };

    pub const LEVEL: FeatureSet = FeatureSet {
        level: true,
        parent: false,
        octant: false,
        location: false,
    };

    pub fn bits(self) -> u8 {
        u8::from(self.level)
            | u8::from(self.parent) << 1
            | u8::from(self.octant) << 2
            | u8::from(self.location) << 3
    }

    pub fn from_bits(b: u8) -> Option<Self> {
        (b != 0 && b < 16).then_some(FeatureSet {
            level: b & 1 != 0,
            parent: b & 2 != 0,
            octant: b & 4 != 0,
            location: b & 8 != 0,
        })
    }

    /// Short label such as `L+P+O`.
    pub fn label(self) -> String {
        let mut parts = Vec::new();
        if self.level {
            parts.push("L");
        }
        if self.parent {
            parts.push("P");
        }
        if self.octant {
            parts.push("O");
        }
        if self.location {
            parts.push("LL");
        }
        parts.join("+")
    }

    pub fn apply(self, f: &mut FeatureVector) {
        if !self.level {
            f[LEVEL_SLOT] = 0.0;
        }
        if !self.parent {
            f[PARENT_SLOTS].fill(0.0);
        }
        if !self.octant {
            f[OCTANT_SLOTS].fill(0.0);
        }
        if !self.location {
            f[LOCATION_SLOTS].fill(0.0);
        }
    }

    pub fn featurize(self, ctx: &NodeContext, k_max: u32) -> FeatureVector {
        let mut f = ctx.featurize(k_max);
        self.apply(&mut f);
        f
    }
}
