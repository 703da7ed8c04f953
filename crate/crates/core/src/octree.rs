//! Occupancy octree over a quantized cloud.
//!
//! Bit conventions (these fix bitstream compatibility):
//!
//! * A node at level `i` covers the lattice cells whose top `i` coordinate
//!   bits equal its `cell` coordinates. The root is level 0 with `cell = 0`.
//! * Its child octant index is `b = (x_bit << 2) | (y_bit << 1) | z_bit`,
//!   where `x_bit` is bit `k - 1 - i` of the point's `u` coordinate (MSB
//!   first), likewise `y_bit`/`v` and `z_bit`/`w`.
//! * Bit `b` of the occupancy symbol is set iff octant `b` holds a point.
//! * In early-termination mode a node below level `k - 1` that holds exactly
//!   one point emits symbol 0 and stores the point's remaining
//!   `3 * (k - level)` coordinate bits raw, one `x y z` bit triple per
//!   remaining level, coarse to fine.
//!
//! Nodes are stored level by level in BFS order. Children of a level-`i`
//! node are contiguous in level `i + 1`, ordered by ascending octant.

use crate::bits::{BitBuf, BitReader};
use crate::context::NodeContext;
use crate::error::{Error, Result};
use crate::pointcloud::{Coord3, QuantParams, QuantizedCloud};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum OctreeMode {
    #[default]
    FullSubdivision,
    EarlyTermination,
}

impl OctreeMode {
    pub fn as_u8(self) -> u8 {
        match self {
            OctreeMode::FullSubdivision => 0,
            OctreeMode::EarlyTermination => 1,
        }
    }

    pub fn from_u8(v: u8) -> Result<Self> {
        match v {
            0 => Ok(OctreeMode::FullSubdivision),
            1 => Ok(OctreeMode::EarlyTermination),
            _ => Err(Error::corruption(format!("unknown octree mode {v}"))),
        }
    }
}

/// Raw coordinate bits of an early-terminated single-point leaf.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LeafPayload {
    /// Payload bits, right-aligned, first bit most significant.
    pub bits: u64,
    pub len: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OctreeNode {
    pub occupancy: u8,
    pub level: u32,
    pub cell: Coord3,
    /// Octant within the parent; `None` for the root.
    pub octant: Option<u8>,
    /// Index of the parent in the previous level.
    pub parent: Option<usize>,
    pub parent_occupancy: u8,
    /// Index of the first child in the next level.
    pub first_child: usize,
    pub leaf_payload: Option<LeafPayload>,
}

impl OctreeNode {
    fn root() -> Self {
        OctreeNode {
            occupancy: 0,
            level: 0,
            cell: [0; 3],
            octant: None,
            parent: None,
            parent_occupancy: 0,
            first_child: 0,
            leaf_payload: None,
        }
    }

    pub fn is_early_leaf(&self) -> bool {
        self.leaf_payload.is_some()
    }

    pub fn child_count(&self) -> usize {
        self.occupancy.count_ones() as usize
    }

    pub fn context(&self) -> NodeContext {
        NodeContext::for_node(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Octree {
    pub depth: u32,
    pub mode: OctreeMode,
    levels: Vec<Vec<OctreeNode>>,
}

/// BFS serialization: one occupancy byte per node plus the raw leaf bits.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolStream {
    pub symbols: Vec<u8>,
    pub contexts: Vec<NodeContext>,
    pub leaf_bits: BitBuf,
}

fn morton_key(c: Coord3, depth: u32) -> u64 {
    let mut key = 0u64;
    for bit in (0..depth).rev() {
        let x = u64::from((c[0] >> bit) & 1);
        let y = u64::from((c[1] >> bit) & 1);
        let z = u64::from((c[2] >> bit) & 1);
        key = (key << 3) | (x << 2) | (y << 1) | z;
    }
    key
}

fn morton_decode(key: u64, depth: u32) -> Coord3 {
    let mut c = [0u32; 3];
    for bit in 0..depth {
        let oct = (key >> (3 * bit)) & 7;
        c[0] |= ((oct >> 2) as u32 & 1) << bit;
        c[1] |= ((oct >> 1) as u32 & 1) << bit;
        c[2] |= (oct as u32 & 1) << bit;
    }
    c
}

fn child_cell(cell: Coord3, octant: u8) -> Coord3 {
    [
        (cell[0] << 1) | u32::from(octant >> 2 & 1),
        (cell[1] << 1) | u32::from(octant >> 1 & 1),
        (cell[2] << 1) | u32::from(octant & 1),
    ]
}

/// Creates the (symbol-less) children of a fully decoded level.
fn expand_level(nodes: &mut [OctreeNode]) -> Vec<OctreeNode> {
    let mut next = Vec::with_capacity(nodes.iter().map(OctreeNode::child_count).sum());
    for (idx, node) in nodes.iter_mut().enumerate() {
        node.first_child = next.len();
        for octant in 0..8u8 {
            if node.occupancy >> octant & 1 == 1 {
                next.push(OctreeNode {
                    occupancy: 0,
                    level: node.level + 1,
                    cell: child_cell(node.cell, octant),
                    octant: Some(octant),
                    parent: Some(idx),
                    parent_occupancy: node.occupancy,
                    first_child: 0,
                    leaf_payload: None,
                });
            }
        }
    }
    next
}

impl Octree {
    pub fn build(qc: &QuantizedCloud, mode: OctreeMode) -> Result<Octree> {
        if qc.is_empty() {
            return Err(Error::validation("cannot build an octree from an empty cloud"));
        }
        let depth = qc.params.depth;
        let mut keys: Vec<u64> = qc.coords.iter().map(|&c| morton_key(c, depth)).collect();
        keys.sort_unstable();
        keys.dedup();

        let mut levels = Vec::with_capacity(depth as usize);
        let mut nodes = vec![OctreeNode::root()];
        // Point range [start, end) of `keys` covered by each node.
        let mut ranges = vec![(0usize, keys.len())];
        for level in 0..depth {
            if nodes.is_empty() {
                break;
            }
            let shift = 3 * (depth - 1 - level);
            let mut child_ranges = Vec::new();
            for (node, &(start, end)) in nodes.iter_mut().zip(&ranges) {
                if mode == OctreeMode::EarlyTermination && end - start == 1 && level + 1 < depth {
                    let len = 3 * (depth - level);
                    let mask = if len == 64 { u64::MAX } else { (1u64 << len) - 1 };
                    node.leaf_payload = Some(LeafPayload {
                        bits: keys[start] & mask,
                        len,
                    });
                    continue;
                }
                let mut s = start;
                while s < end {
                    let oct = (keys[s] >> shift) & 7;
                    let mut e = s + 1;
                    while e < end && (keys[e] >> shift) & 7 == oct {
                        e += 1;
                    }
                    node.occupancy |= 1 << oct;
                    if level + 1 < depth {
                        child_ranges.push((s, e));
                    }
                    s = e;
                }
            }
            let children = if level + 1 < depth {
                expand_level(&mut nodes)
            } else {
                Vec::new()
            };
            levels.push(nodes);
            nodes = children;
            ranges = child_ranges;
        }
        Ok(Octree { depth, mode, levels })
    }

    pub fn levels(&self) -> &[Vec<OctreeNode>] {
        &self.levels
    }

    pub fn level(&self, level: usize) -> &[OctreeNode] {
        &self.levels[level]
    }

    pub fn root(&self) -> &OctreeNode {
        &self.levels[0][0]
    }

    pub fn node_count(&self) -> usize {
        self.levels.iter().map(Vec::len).sum()
    }

    pub fn nodes(&self) -> impl Iterator<Item = &OctreeNode> {
        self.levels.iter().flatten()
    }

    pub fn children(&self, node: &OctreeNode) -> &[OctreeNode] {
        let l = node.level as usize + 1;
        if l >= self.levels.len() {
            return &[];
        }
        &self.levels[l][node.first_child..node.first_child + node.child_count()]
    }

    pub fn serialize(&self) -> SymbolStream {
        let mut symbols = Vec::with_capacity(self.node_count());
        let mut contexts = Vec::with_capacity(self.node_count());
        let mut leaf_bits = BitBuf::new();
        for node in self.nodes() {
            symbols.push(node.occupancy);
            contexts.push(node.context());
            if let Some(p) = node.leaf_payload {
                leaf_bits.push_bits(p.bits, p.len);
            }
        }
        SymbolStream {
            symbols,
            contexts,
            leaf_bits,
        }
    }

    pub fn deserialize(
        symbols: &[u8],
        leaf_bits: &BitBuf,
        depth: u32,
        mode: OctreeMode,
    ) -> Result<Octree> {
        let mut builder = OctreeBuilder::new(depth, mode)?;
        let mut leaves = leaf_bits.reader();
        let mut pos = 0;
        while let Some(n) = builder.pending_len() {
            if pos + n > symbols.len() {
                return Err(Error::corruption(format!(
                    "symbol stream truncated: node {} missing ({} symbols present)",
                    symbols.len(),
                    symbols.len()
                )));
            }
            builder.push_level(&symbols[pos..pos + n], &mut leaves)?;
            pos += n;
        }
        if pos != symbols.len() {
            return Err(Error::corruption(format!(
                "{} trailing symbols after complete tree",
                symbols.len() - pos
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

    /// Recovers the deduplicated lattice points, in BFS order of their cells.
    pub fn reconstruct(&self, params: &QuantParams) -> QuantizedCloud {
        debug_assert_eq!(params.depth, self.depth);
        let depth = self.depth;
        let mut coords = Vec::new();
        for nodes in &self.levels {
            for node in nodes {
                if let Some(p) = node.leaf_payload {
                    let rest = depth - node.level;
                    let low = morton_decode(p.bits, rest);
                    coords.push([
                        node.cell[0] << rest | low[0],
                        node.cell[1] << rest | low[1],
                        node.cell[2] << rest | low[2],
                    ]);
                } else if node.level + 1 == depth {
                    for octant in 0..8u8 {
                        if node.occupancy >> octant & 1 == 1 {
                            coords.push(child_cell(node.cell, octant));
                        }
                    }
                }
            }
        }
        QuantizedCloud {
            coords,
            params: *params,
        }
    }

    /// Cuts the tree to `depth` levels. Early-leaf payloads keep only their
    /// coarsest `3 * (depth - level)` bits.
    pub fn truncate(&self, depth: u32) -> Result<Octree> {
        if depth < 1 || depth > self.depth {
            return Err(Error::validation(format!(
                "truncation depth {depth} outside [1, {}]",
                self.depth
            )));
        }
        let drop = self.depth - depth;
        let levels = self
            .levels
            .iter()
            .take(depth as usize)
            .map(|nodes| {
                nodes
                    .iter()
                    .map(|n| {
                        let mut n = n.clone();
                        if n.level + 1 == depth {
                            n.first_child = 0;
                        }
                        n.leaf_payload = n.leaf_payload.map(|p| LeafPayload {
                            bits: p.bits >> (3 * drop),
                            len: p.len - 3 * drop,
                        });
                        n
                    })
                    .collect()
            })
            .collect();
        Ok(Octree {
            depth,
            mode: self.mode,
            levels,
        })
    }
}

/// Level-at-a-time tree reconstruction, shared by BFS deserialization and
/// the entropy decoder: the children (and hence the contexts) of level `L`
/// are known as soon as level `L - 1` has been decoded.
pub struct OctreeBuilder {
    depth: u32,
    mode: OctreeMode,
    levels: Vec<Vec<OctreeNode>>,
    pending: Vec<OctreeNode>,
}

impl OctreeBuilder {
    pub fn new(depth: u32, mode: OctreeMode) -> Result<Self> {
        if !(1..=crate::pointcloud::MAX_DEPTH).contains(&depth) {
            return Err(Error::corruption(format!("tree depth {depth} out of range")));
        }
        Ok(OctreeBuilder {
            depth,
            mode,
            levels: Vec::new(),
            pending: vec![OctreeNode::root()],
        })
    }

    /// Nodes of the next level awaiting symbols; `None` once complete.
    pub fn pending(&self) -> Option<&[OctreeNode]> {
        (!self.pending.is_empty()).then_some(&self.pending[..])
    }

    pub fn pending_len(&self) -> Option<usize> {
        self.pending().map(<[_]>::len)
    }

    /// Index (in BFS order) of the first pending node.
    pub fn decoded_count(&self) -> usize {
        self.levels.iter().map(Vec::len).sum()
    }

    pub fn push_level(&mut self, symbols: &[u8], leaves: &mut BitReader<'_>) -> Result<()> {
        if symbols.len() != self.pending.len() {
            return Err(Error::corruption(format!(
                "level {} expects {} symbols, got {}",
                self.levels.len(),
                self.pending.len(),
                symbols.len()
            )));
        }
        let level = self.levels.len() as u32;
        let base = self.decoded_count();
        for (i, (node, &sym)) in self.pending.iter_mut().zip(symbols).enumerate() {
            node.occupancy = sym;
            if sym == 0 {
                if self.mode == OctreeMode::FullSubdivision {
                    return Err(Error::corruption(format!(
                        "empty occupancy symbol at node {} in full-subdivision tree",
                        base + i
                    )));
                }
                let len = 3 * (self.depth - level);
                node.leaf_payload = Some(LeafPayload {
                    bits: leaves.read_bits(len)?,
                    len,
                });
            }
        }
        let next = if level + 1 < self.depth {
            expand_level(&mut self.pending)
        } else {
            Vec::new()
        };
        self.levels.push(std::mem::replace(&mut self.pending, next));
        Ok(())
    }

    pub fn finish(self) -> Octree {
        Octree {
            depth: self.depth,
            mode: self.mode,
            levels: self.levels,
        }
    }
}
