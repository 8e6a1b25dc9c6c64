//! Synthetic multi-class point clouds: surfaces of four geometric primitives.

use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::measures::{EmpiricalMeasure, LabeledDataset, Labels, MeasureError};
use crate::rng::{self, Rng};

pub const PRIMITIVES: [&str; 4] = ["box", "sphere_shell", "cylinder_shell", "plane"];

/// Shape perturbations applied to every cloud.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointCloudSpec {
    /// Per-axis scale factors are drawn from `U[1 - spread, 1 + spread]`.
    pub scale_spread: f64,
    /// Standard deviation of the isotropic Gaussian jitter added to every point.
    pub noise: f64,
    /// Rotate each cloud about the z axis by a uniform angle.
    pub rotate: bool,
}

impl Default for PointCloudSpec {
    fn default() -> Self {
        Self {
            scale_spread: 0.6,
            noise: 0.15,
            rotate: true,
        }
    }
}

fn unit_vector(rng: &mut Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = [
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        ];
        let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if r > 1e-12 {
            return [v[0] / r, v[1] / r, v[2] / r];
        }
    }
}

fn symmetric(rng: &mut Rng) -> f64 {
    2.0 * rng.random::<f64>() - 1.0
}

/// A uniform point on the unit primitive of class `class`.
fn surface_point(class: usize, rng: &mut Rng) -> [f64; 3] {
    match class {
        0 => {
            // faces of [-1,1]^3 have equal area
            let face = rng.random_range(0..6);
            let (u, v) = (symmetric(rng), symmetric(rng));
            let s = if face % 2 == 0 { 1.0 } else { -1.0 };
            match face / 2 {
                0 => [s, u, v],
                1 => [u, s, v],
                _ => [u, v, s],
            }
        }
        1 => unit_vector(rng),
        2 => {
            let a = 2.0 * PI * rng.random::<f64>();
            [a.cos(), a.sin(), symmetric(rng)]
        }
        _ => [symmetric(rng), symmetric(rng), 0.0],
    }
}

/// `n` clouds of `m` points in `R^3`; cloud `i` has class `i mod 4`.
pub fn sample_point_cloud_benchmark(
    n: usize,
    m: usize,
    spec: &PointCloudSpec,
    seed: u64,
) -> Result<LabeledDataset, MeasureError> {
    if n == 0 || m == 0 {
        return Err(MeasureError::EmptyInput);
    }
    if !(0.0..1.0).contains(&spec.scale_spread) || !(spec.noise >= 0.0 && spec.noise.is_finite()) {
        return Err(MeasureError::InvalidSpec(
            "scale_spread must lie in [0, 1) and noise must be nonnegative".into(),
        ));
    }
    let mut rng = rng::rng(seed);
    let mut measures = Vec::with_capacity(n);
    let mut classes = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % PRIMITIVES.len();
        let scale: Vec<f64> = (0..3)
            .map(|_| 1.0 + spec.scale_spread * symmetric(&mut rng))
            .collect();
        let angle = if spec.rotate {
            2.0 * PI * rng.random::<f64>()
        } else {
            0.0
        };
        let (sin, cos) = angle.sin_cos();
        let mut coords = Vec::with_capacity(3 * m);
        for _ in 0..m {
            let p = surface_point(class, &mut rng);
            let (x, y, z) = (p[0] * scale[0], p[1] * scale[1], p[2] * scale[2]);
            let rotated = [cos * x - sin * y, sin * x + cos * y, z];
            for c in rotated {
                let jitter: f64 = rng.sample(StandardNormal);
                coords.push(c + spec.noise * jitter);
            }
        }
        measures.push(EmpiricalMeasure::from_flat(coords, 3)?);
        classes.push(class);
    }
    LabeledDataset::new(measures, Labels::from_classes(&classes))
}
