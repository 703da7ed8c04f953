//! Reconstruction quality: symmetric Chamfer distance, point-to-plane PSNR
//! and voxel IOU.

use std::collections::{BinaryHeap, HashSet};

use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use crate::error::{Error, Result};
use crate::pointcloud::{Point3, PointCloud};

pub const NORMAL_NEIGHBORS: usize = 12;
pub const VOXEL_DIMS: [f64; 3] = [0.2, 0.2, 0.1];

/// Relative size of the middle eigenvalue below which a neighborhood counts
/// as rank-deficient.
const DEGENERATE_RATIO: f64 = 1e-12;

pub fn squared_distance(a: &Point3, b: &Point3) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// Neighbor ordered by squared distance, then by index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub dist2: f64,
    pub index: usize,
}

impl Eq for Neighbor {}

impl Ord for Neighbor {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Neighbor {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Static 3-d tree. Queries return exactly what a linear scan would,
/// including the lowest-index tie-break.
pub struct KdTree<'a> {
    points: &'a [Point3],
    /// Point indices; each subtree occupies a contiguous range with its
    /// splitting point at the middle.
    order: Vec<usize>,
    axes: Vec<u8>,
}

impl<'a> KdTree<'a> {
    pub fn new(points: &'a [Point3]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut axes = vec![0u8; points.len()];
        Self::build(points, &mut order, &mut axes);
        KdTree { points, order, axes }
    }

    fn build(points: &[Point3], order: &mut [usize], axes: &mut [u8]) {
        if order.len() <= 1 {
            return;
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in order.iter() {
            for a in 0..3 {
                lo[a] = lo[a].min(points[i][a]);
                hi[a] = hi[a].max(points[i][a]);
            }
        }
        let axis = (0..3)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
            .unwrap_or(0);
        let mid = order.len() / 2;
        order.select_nth_unstable_by(mid, |&a, &b| points[a][axis].total_cmp(&points[b][axis]));
        axes[mid] = axis as u8;
        let (left, right) = order.split_at_mut(mid);
        let (laxes, raxes) = axes.split_at_mut(mid);
        Self::build(points, left, laxes);
        Self::build(points, &mut right[1..], &mut raxes[1..]);
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn nearest(&self, q: &Point3) -> Option<Neighbor> {
        let mut best = BinaryHeap::with_capacity(2);
        self.search(q, 1, 0, self.order.len(), &mut best);
        best.pop()
    }

    /// The `k` nearest points, closest first.
    pub fn k_nearest(&self, q: &Point3, k: usize) -> Vec<Neighbor> {
        let mut best = BinaryHeap::with_capacity(k + 1);
        if k > 0 {
            self.search(q, k, 0, self.order.len(), &mut best);
        }
        best.into_sorted_vec()
    }

    fn search(&self, q: &Point3, k: usize, start: usize, end: usize, best: &mut BinaryHeap<Neighbor>) {
        if start >= end {
            return;
        }
        let mid = start + (end - start) / 2;
        let index = self.order[mid];
        let p = &self.points[index];
        let cand = Neighbor {
            dist2: squared_distance(q, p),
            index,
        };
        if best.len() < k {
            best.push(cand);
        } else if cand < *best.peek().expect("heap is full") {
            best.pop();
            best.push(cand);
        }
        let axis = usize::from(self.axes[mid]);
        let diff = q[axis] - p[axis];
        let (near, far) = if diff < 0.0 {
            ((start, mid), (mid + 1, end))
        } else {
            ((mid + 1, end), (start, mid))
        };
        self.search(q, k, near.0, near.1, best);
        // `<=` keeps equal-distance candidates with smaller indices reachable
        if best.len() < k || diff * diff <= best.peek().expect("heap is non-empty").dist2 {
            self.search(q, k, far.0, far.1, best);
        }
    }
}

fn require_points(cloud: &PointCloud, what: &str, min: usize) -> Result<()> {
    if cloud.len() < min {
        return Err(Error::validation(format!(
            "{what} needs at least {min} point(s), got {}",
            cloud.len()
        )));
    }
    Ok(())
}

/// Mean distance from each point of `p` to its nearest neighbor in `q`.
pub fn chamfer(p: &PointCloud, q: &PointCloud) -> Result<f64> {
    require_points(p, "chamfer distance", 1)?;
    require_points(q, "chamfer distance", 1)?;
    let tree = KdTree::new(&q.points);
    let sum: f64 = p
        .points
        .iter()
        .map(|x| tree.nearest(x).expect("non-empty").dist2.sqrt())
        .sum();
    Ok(sum / p.len() as f64)
}

pub fn chamfer_sym(p: &PointCloud, q: &PointCloud) -> Result<f64> {
    Ok(chamfer(p, q)? + chamfer(q, p)?)
}

/// Per-point unit normals; `None` where the neighborhood is rank-deficient.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalField {
    pub normals: Vec<Option<[f64; 3]>>,
}

impl NormalField {
    pub fn defined(&self) -> usize {
        self.normals.iter().filter(|n| n.is_some()).count()
    }
}

/// Smallest-eigenvalue direction of the neighborhood covariance.
pub fn plane_normal(neighborhood: &[Point3]) -> Option<[f64; 3]> {
    let n = neighborhood.len() as f64;
    let mut mean = Vector3::zeros();
    for p in neighborhood {
        mean += Vector3::from(*p);
    }
    mean /= n;
    let mut cov = Matrix3::zeros();
    for p in neighborhood {
        let d = Vector3::from(*p) - mean;
        cov += d * d.transpose();
    }
    cov /= n;
    let eig = SymmetricEigen::new(cov);
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let (min, mid, max) = (idx[0], eig.eigenvalues[idx[1]], eig.eigenvalues[idx[2]]);
    if !(max > 0.0) || mid <= DEGENERATE_RATIO * max {
        return None;
    }
    let v = eig.eigenvectors.column(min).normalize();
    Some([v[0], v[1], v[2]])
}

/// PCA normals over the `k` nearest neighbors (the point itself included).
pub fn estimate_normals(cloud: &PointCloud, k: usize) -> Result<NormalField> {
    require_points(cloud, "normal estimation", 3)?;
    let tree = KdTree::new(&cloud.points);
    let normals = cloud
        .points
        .iter()
        .map(|p| {
            let hood: Vec<Point3> = tree
                .k_nearest(p, k.max(3))
                .iter()
                .map(|n| cloud.points[n.index])
                .collect();
            plane_normal(&hood)
        })
        .collect();
    Ok(NormalField { normals })
}

/// One-directional PSNR with normals taken from `p`.
pub fn psnr(p: &PointCloud, q: &PointCloud) -> Result<f64> {
    require_points(q, "psnr", 1)?;
    let normals = estimate_normals(p, NORMAL_NEIGHBORS)?;
    let tree = KdTree::new(&q.points);
    let mut peak: f64 = 0.0;
    let mut sum = 0.0;
    let mut count = 0usize;
    for (x, n) in p.points.iter().zip(&normals.normals) {
        let nb = tree.nearest(x).expect("non-empty");
        peak = peak.max(nb.dist2);
        if let Some(n) = n {
            let y = &q.points[nb.index];
            let proj = (x[0] - y[0]) * n[0] + (x[1] - y[1]) * n[1] + (x[2] - y[2]) * n[2];
            sum += proj * proj;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::validation("psnr: no point has a well-defined normal"));
    }
    let mse = sum / count as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak / mse).log10())
}

/// Minimum of both directions; `+inf` when both errors vanish.
pub fn psnr_sym(p: &PointCloud, q: &PointCloud) -> Result<f64> {
    Ok(psnr(p, q)?.min(psnr(q, p)?))
}

pub type VoxelSet = HashSet<[i64; 3]>;

pub fn voxelize(cloud: &PointCloud, dims: [f64; 3], anchor: [f64; 3]) -> VoxelSet {
    cloud
        .points
        .iter()
        .map(|p| std::array::from_fn(|a| ((p[a] - anchor[a]) / dims[a]).floor() as i64))
        .collect()
}

/// `|P ∩ Q| / |P ∪ Q|` over occupied voxels; two empty clouds score 1.
pub fn voxel_iou(p: &PointCloud, q: &PointCloud, dims: [f64; 3], anchor: [f64; 3]) -> Result<f64> {
    if dims.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
        return Err(Error::validation(format!("voxel dims must be positive, got {dims:?}")));
    }
    let a = voxelize(p, dims, anchor);
    let b = voxelize(q, dims, anchor);
    let inter = a.intersection(&b).count();
    let union = a.len() + b.len() - inter;
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}
