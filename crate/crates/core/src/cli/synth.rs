//! Seeded street-like scenes: a noisy ground plane with boxes standing on
//! it, thinned with distance from a sensor at the origin.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pointcloud::{Point3, PointCloud};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub seed: u64,
    /// Ground covers `[-extent, extent]^2` meters.
    pub ground_extent: f64,
    pub ground_sigma: f64,
    pub boxes: usize,
    /// Per-axis `[min, max]` box dimensions in meters (x, y, z).
    pub box_size: [[f64; 2]; 3],
    /// Box centers are drawn from `[-box_range, box_range]^2`.
    pub box_range: f64,
    pub points: usize,
    /// Keep probability `(1 + r)^-density_exponent`, r the horizontal range.
    pub density_exponent: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            seed: 0,
            ground_extent: 20.0,
            ground_sigma: 0.02,
            boxes: 6,
            box_size: [[1.0, 4.0], [1.0, 4.0], [0.5, 3.0]],
            box_range: 15.0,
            points: 2000,
            density_exponent: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Rect {
    origin: Point3,
    u: Point3,
    v: Point3,
}

impl Rect {
    fn area(&self) -> f64 {
        let c = [
            self.u[1] * self.v[2] - self.u[2] * self.v[1],
            self.u[2] * self.v[0] - self.u[0] * self.v[2],
            self.u[0] * self.v[1] - self.u[1] * self.v[0],
        ];
        (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt()
    }

    fn at(&self, s: f64, t: f64) -> Point3 {
        std::array::from_fn(|a| self.origin[a] + s * self.u[a] + t * self.v[a])
    }
}

/// Four walls and a roof of an axis-aligned box resting on z = 0.
fn box_faces(center: [f64; 2], size: Point3) -> [Rect; 5] {
    let [sx, sy, sz] = size;
    let x0 = center[0] - sx / 2.0;
    let y0 = center[1] - sy / 2.0;
    [
        Rect { origin: [x0, y0, 0.0], u: [sx, 0.0, 0.0], v: [0.0, 0.0, sz] },
        Rect { origin: [x0, y0 + sy, 0.0], u: [sx, 0.0, 0.0], v: [0.0, 0.0, sz] },
        Rect { origin: [x0, y0, 0.0], u: [0.0, sy, 0.0], v: [0.0, 0.0, sz] },
        Rect { origin: [x0 + sx, y0, 0.0], u: [0.0, sy, 0.0], v: [0.0, 0.0, sz] },
        Rect { origin: [x0, y0, sz], u: [sx, 0.0, 0.0], v: [0.0, sy, 0.0] },
    ]
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.ground_extent, self.box_range + 1.0, self.density_exponent + 1.0];
        if self.points == 0 {
            return Err(Error::validation("scene needs at least one point"));
        }
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0))
            || !(self.ground_sigma.is_finite() && self.ground_sigma >= 0.0)
            || self.density_exponent < 0.0
            || self.box_range < 0.0
        {
            return Err(Error::validation("scene extents, sigma and exponent must be non-negative"));
        }
        for [lo, hi] in self.box_size {
            if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
                return Err(Error::validation(format!("bad box size range [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    /// The spec with a different seed, e.g. the i-th scene of a corpus.
    pub fn with_seed(&self, seed: u64) -> SceneSpec {
        SceneSpec { seed, ..self.clone() }
    }

    pub fn generate(&self) -> Result<PointCloud> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let e = self.ground_extent;
        let mut faces = vec![Rect {
            origin: [-e, -e, 0.0],
            u: [2.0 * e, 0.0, 0.0],
            v: [0.0, 2.0 * e, 0.0],
        }];
        for _ in 0..self.boxes {
            let center = [
                rng.random_range(-self.box_range..=self.box_range),
                rng.random_range(-self.box_range..=self.box_range),
            ];
            let size = self.box_size.map(|[lo, hi]| rng.random_range(lo..=hi));
            faces.extend(box_faces(center, size));
        }
        let mut cumulative = Vec::with_capacity(faces.len());
        let mut total = 0.0;
        for f in &faces {
            total += f.area();
            cumulative.push(total);
        }
        let noise = Normal::new(0.0, self.ground_sigma.max(f64::MIN_POSITIVE))
            .map_err(|e| Error::validation(format!("ground noise: {e}")))?;

        let mut points = Vec::with_capacity(self.points);
        while points.len() < self.points {
            let pick = rng.random_range(0.0..total);
            let i = cumulative.partition_point(|&c| c <= pick).min(faces.len() - 1);
            let mut p = faces[i].at(rng.random(), rng.random());
            let r = p[0].hypot(p[1]);
            if rng.random::<f64>() >= (1.0 + r).powf(-self.density_exponent) {
                continue;
            }
            if i == 0 && self.ground_sigma > 0.0 {
                p[2] += noise.sample(&mut rng);
            }
            points.push(p);
        }
        Ok(PointCloud::new(points))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_exact_count() {
        let spec = SceneSpec {
            points: 1234,
            seed: 9,
            ..SceneSpec::default()
        };
        let a = spec.generate().unwrap();
        assert_eq!(a.len(), 1234);
        assert_eq!(a.to_xyz_text(), spec.generate().unwrap().to_xyz_text());
        assert_ne!(a, spec.with_seed(10).generate().unwrap());
    }

    #[test]
    fn ground_noise_within_three_sigma() {
        let spec = SceneSpec {
            boxes: 0,
            points: 5000,
            ..SceneSpec::default()
        };
        let cloud = spec.generate().unwrap();
        let inside = cloud
            .points
            .iter()
            .filter(|p| p[2].abs() <= 3.0 * spec.ground_sigma)
            .count();
        assert!(inside as f64 >= 0.99 * cloud.len() as f64, "{inside}");
    }

    #[test]
    fn density_falls_with_range() {
        let cloud = SceneSpec::default().generate().unwrap();
        let near = cloud.points.iter().filter(|p| p[0].hypot(p[1]) < 5.0).count();
        let far = cloud
            .points
            .iter()
            .filter(|p| (10.0..15.0).contains(&p[0].hypot(p[1])))
            .count();
        // the far annulus has 5x the area of the near disc
        assert!(near > far, "{near} vs {far}");
    }

    #[test]
    fn rejects_bad_specs() {
        let mut s = SceneSpec { points: 0, ..SceneSpec::default() };
        assert!(s.generate().is_err());
        s.points = 10;
        s.box_size[0] = [2.0, 1.0];
        assert!(s.generate().is_err());
    }
}
