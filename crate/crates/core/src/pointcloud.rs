//! Point-cloud ingestion and k-bit axis-aligned quantization.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub type Point3 = [f64; 3];
pub type Coord3 = [u32; 3];

/// Deepest supported quantization; 3 × 21 bits still fit a 64-bit key.
pub const MAX_DEPTH: u32 = 21;

/// Extent used when every input point coincides.
pub const DEGENERATE_CELL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    /// Whitespace-separated `x y z` decimal triples, one point per line.
    XyzText,
    /// Little-endian f32 records of `x y z intensity` (KITTI velodyne layout).
    BinF32,
}

impl CloudFormat {
    /// Guess the format from a file extension; `.bin` is binary, anything
    /// else is treated as text.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") => CloudFormat::BinF32,
            _ => CloudFormat::XyzText,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point3>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Self {
        PointCloud { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for (i, p) in self.points.iter().enumerate() {
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::validation(format!(
                    "point {i} has a non-finite coordinate {p:?}"
                )));
            }
        }
        Ok(())
    }

    /// Serializes as `xyz_text`. Uses the shortest representation that
    /// round-trips each f64 exactly.
    pub fn to_xyz_text(&self) -> String {
        let mut out = String::with_capacity(self.points.len() * 32);
        for p in &self.points {
            let _ = writeln!(out, "{} {} {}", p[0], p[1], p[2]);
        }
        out
    }
}

pub fn parse_xyz_text(text: &str) -> Result<PointCloud> {
    let mut points = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split_whitespace();
        let mut p = [0.0; 3];
        for (axis, slot) in p.iter_mut().enumerate() {
            let field = fields.next().ok_or_else(|| Error::Parse {
                location: format!("line {}", lineno + 1),
                message: format!("expected 3 values, found {axis}"),
            })?;
            *slot = field.parse::<f64>().map_err(|e| Error::Parse {
                location: format!("line {}", lineno + 1),
                message: format!("{field:?}: {e}"),
            })?;
        }
        if fields.next().is_some() {
            return Err(Error::Parse {
                location: format!("line {}", lineno + 1),
                message: "more than 3 values".into(),
            });
        }
        points.push(p);
    }
    let cloud = PointCloud { points };
    cloud.validate()?;
    Ok(cloud)
}

pub fn parse_bin_f32(bytes: &[u8]) -> Result<PointCloud> {
    const STRIDE: usize = 16;
    if bytes.len() % STRIDE != 0 {
        return Err(Error::Parse {
            location: format!("byte {}", bytes.len() - bytes.len() % STRIDE),
            message: format!("trailing partial record of {} bytes", bytes.len() % STRIDE),
        });
    }
    let points = bytes
        .chunks_exact(STRIDE)
        .map(|rec| {
            let f = |i: usize| f32::from_le_bytes(rec[4 * i..4 * i + 4].try_into().unwrap()) as f64;
            [f(0), f(1), f(2)]
        })
        .collect();
    let cloud = PointCloud { points };
    cloud.validate()?;
    Ok(cloud)
}

pub fn load_cloud(path: &Path, format: CloudFormat) -> Result<PointCloud> {
    match format {
        CloudFormat::XyzText => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            parse_xyz_text(&text)
        }
        CloudFormat::BinF32 => {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            parse_bin_f32(&bytes)
        }
    }
}

/// Affine map between meters and the integer lattice `[0, 2^k)^3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantParams {
    pub origin: Point3,
    /// Edge length of one lattice cell at depth `depth`, meters.
    pub cell: f64,
    pub depth: u32,
}

impl QuantParams {
    pub fn validate(&self) -> Result<()> {
        if !(1..=MAX_DEPTH).contains(&self.depth) {
            return Err(Error::validation(format!(
                "depth {} outside [1, {MAX_DEPTH}]",
                self.depth
            )));
        }
        if !(self.cell > 0.0 && self.cell.is_finite()) {
            return Err(Error::validation(format!("cell size {} not positive", self.cell)));
        }
        if self.origin.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("non-finite origin"));
        }
        Ok(())
    }

    pub fn side(&self) -> u32 {
        1 << self.depth
    }

    /// Parameters of the same grid viewed at a coarser depth.
    pub fn coarsened(&self, depth: u32) -> QuantParams {
        assert!(depth >= 1 && depth <= self.depth);
        QuantParams {
            origin: self.origin,
            cell: self.cell * f64::from(1u32 << (self.depth - depth)),
            depth,
        }
    }

    pub fn cell_center(&self, c: Coord3) -> Point3 {
        [
            self.origin[0] + (f64::from(c[0]) + 0.5) * self.cell,
            self.origin[1] + (f64::from(c[1]) + 0.5) * self.cell,
            self.origin[2] + (f64::from(c[2]) + 0.5) * self.cell,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedCloud {
    pub coords: Vec<Coord3>,
    pub params: QuantParams,
}

impl QuantizedCloud {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Coordinates sorted lexicographically; used to compare clouds as sets.
    pub fn sorted_coords(&self) -> Vec<Coord3> {
        let mut c = self.coords.clone();
        c.sort_unstable();
        c
    }
}

pub fn fit_quant_params(cloud: &PointCloud, depth: u32) -> Result<QuantParams> {
    if cloud.is_empty() {
        return Err(Error::validation("cannot fit quantization to an empty cloud"));
    }
    if !(1..=MAX_DEPTH).contains(&depth) {
        return Err(Error::validation(format!("depth {depth} outside [1, {MAX_DEPTH}]")));
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in &cloud.points {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let extent = (0..3).map(|a| hi[a] - lo[a]).fold(0.0, f64::max);
    let cell = if extent > 0.0 {
        extent / f64::from(1u32 << depth)
    } else {
        DEGENERATE_CELL
    };
    Ok(QuantParams {
        origin: lo,
        cell,
        depth,
    })
}

/// Lattice cell containing `p`, clamped to the grid.
pub fn quantize_point(p: &Point3, params: &QuantParams) -> Coord3 {
    let max = f64::from(params.side() - 1);
    let mut c = [0u32; 3];
    for a in 0..3 {
        let t = ((p[a] - params.origin[a]) / params.cell).floor();
        c[a] = t.clamp(0.0, max) as u32;
    }
    c
}

/// Floor-quantizes every point and drops duplicates, keeping first
/// occurrences in input order.
pub fn quantize(cloud: &PointCloud, params: &QuantParams) -> QuantizedCloud {
    let mut seen = HashSet::with_capacity(cloud.len());
    let coords = cloud
        .points
        .iter()
        .map(|p| quantize_point(p, params))
        .filter(|c| seen.insert(*c))
        .collect();
    QuantizedCloud {
        coords,
        params: *params,
    }
}

/// Cell-center reconstruction.
pub fn dequantize(qc: &QuantizedCloud) -> PointCloud {
    PointCloud {
        points: qc.coords.iter().map(|&c| qc.params.cell_center(c)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_text() {
        let c = parse_xyz_text("0 0 0\n1 2 3\n").unwrap();
        assert_eq!(c.points, vec![[0.0, 0.0, 0.0], [1.0, 2.0, 3.0]]);
    }

    #[test]
    fn text_nan_is_validation_error() {
        assert!(matches!(parse_xyz_text("nan 0 0\n"), Err(Error::Validation(_))));
        assert!(matches!(parse_xyz_text("inf 0 0\n"), Err(Error::Validation(_))));
    }

    #[test]
    fn text_parse_errors_carry_line() {
        match parse_xyz_text("0 0 0\n1 2\n") {
            Err(Error::Parse { location, .. }) => assert_eq!(location, "line 2"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_xyz_text("1 2 x\n").is_err());
        assert!(parse_xyz_text("1 2 3 4\n").is_err());
    }

    #[test]
    fn parses_kitti_record() {
        let mut bytes = Vec::new();
        for v in [1.0f32, 2.0, 3.0, 0.5] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let c = parse_bin_f32(&bytes).unwrap();
        assert_eq!(c.points, vec![[1.0, 2.0, 3.0]]);
        match parse_bin_f32(&bytes[..15]) {
            Err(Error::Parse { location, .. }) => assert_eq!(location, "byte 0"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn fit_examples() {
        let c = PointCloud::new(vec![[0.0; 3], [1.0; 3]]);
        let q = fit_quant_params(&c, 2).unwrap();
        assert_eq!(q.origin, [0.0; 3]);
        assert_eq!(q.cell, 0.25);

        let c = PointCloud::new(vec![[0.0; 3], [2.0, 1.0, 1.0]]);
        assert_eq!(fit_quant_params(&c, 1).unwrap().cell, 1.0);

        let c = PointCloud::new(vec![[5.0; 3]]);
        assert_eq!(fit_quant_params(&c, 4).unwrap().cell, 1e-6);

        assert!(fit_quant_params(&PointCloud::default(), 4).is_err());
        assert!(fit_quant_params(&c, 0).is_err());
        assert!(fit_quant_params(&c, 22).is_err());
    }

    #[test]
    fn quantize_examples() {
        let params = QuantParams {
            origin: [0.0; 3],
            cell: 0.25,
            depth: 2,
        };
        let c = PointCloud::new(vec![[0.9, 0.5, 0.25], [0.0; 3], [0.1, 0.1, 0.1], [1.0; 3]]);
        let q = quantize(&c, &params);
        // (0.1,0.1,0.1) collapses onto the origin cell; (1,1,1) clamps.
        assert_eq!(q.coords, vec![[3, 2, 1], [0, 0, 0], [3, 3, 3]]);
    }

    #[test]
    fn dequantize_examples() {
        let params = QuantParams {
            origin: [0.0; 3],
            cell: 0.25,
            depth: 2,
        };
        let q = QuantizedCloud {
            coords: vec![[0, 0, 0], [3, 2, 1]],
            params,
        };
        assert_eq!(
            dequantize(&q).points,
            vec![[0.125, 0.125, 0.125], [0.875, 0.625, 0.375]]
        );
    }

    fn cloud_strategy() -> impl Strategy<Value = Vec<Point3>> {
        prop::collection::vec(prop::array::uniform3(-50.0f64..50.0), 1..200)
    }

    proptest! {
        #[test]
        fn coords_in_range_and_error_bounded(pts in cloud_strategy(), depth in 1u32..=16) {
            let cloud = PointCloud::new(pts);
            let params = fit_quant_params(&cloud, depth).unwrap();
            let q = quantize(&cloud, &params);
            let side = params.side();
            for c in &q.coords {
                prop_assert!(c.iter().all(|&v| v < side));
            }
            let bound = 3f64.sqrt() / 2.0 * params.cell;
            for p in &cloud.points {
                let c = quantize_point(p, &params);
                let r = params.cell_center(c);
                let err = ((r[0]-p[0]).powi(2) + (r[1]-p[1]).powi(2) + (r[2]-p[2]).powi(2)).sqrt();
                prop_assert!(err <= bound * (1.0 + 1e-12), "err {err} bound {bound}");
            }
        }

        #[test]
        fn quantize_is_idempotent_on_lattice(pts in cloud_strategy(), depth in 1u32..=16) {
            let cloud = PointCloud::new(pts);
            let params = fit_quant_params(&cloud, depth).unwrap();
            let q = quantize(&cloud, &params);
            let again = quantize(&dequantize(&q), &params);
            prop_assert_eq!(q.coords, again.coords);
        }
    }
}
