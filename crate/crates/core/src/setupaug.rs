//! LiDAR setup perturbation: yaw, scale and translation applied as
//! `translate(scale(rotate(cloud)))`, with rotation and scaling centred on the
//! cloud itself so the perturbation stays local.

use crate::config::CmagConfig;
use crate::model::{Point, PointCloud};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SetupAugParams {
    /// Yaw about the vertical axis through the cloud's BEV centroid.
    pub rotation_rad: f64,
    /// Uniform scale about the cloud centroid (mean x, y, z).
    pub scale: f64,
    pub translation_m: [f64; 3],
}

impl SetupAugParams {
    pub const IDENTITY: SetupAugParams = SetupAugParams {
        rotation_rad: 0.0,
        scale: 1.0,
        translation_m: [0.0; 3],
    };
}

impl Default for SetupAugParams {
    fn default() -> Self {
        Self::IDENTITY
    }
}

pub fn sample_setup_params(cfg: &CmagConfig, rng: &mut RngStream) -> SetupAugParams {
    let rotation_rad = rng.symmetric(cfg.pa_rotation_range_rad);
    let (lo, hi) = cfg.pa_scale_range;
    let scale = rng.uniform(lo, hi);
    let b = cfg.pa_translation_bound_m;
    let translation_m = [rng.symmetric(b), rng.symmetric(b), rng.symmetric(b)];
    SetupAugParams {
        rotation_rad,
        scale,
        translation_m,
    }
}

/// Applies the three stages in order; each stage that is an exact identity is
/// skipped, so identity parameters leave the cloud bit-for-bit unchanged.
pub fn apply_setup_aug(cloud: &PointCloud, params: &SetupAugParams) -> PointCloud {
    let n = cloud.points.len();
    if n == 0 {
        return cloud.clone();
    }
    let inv = 1.0 / n as f64;
    let (sx, sy, sz) = cloud
        .points
        .iter()
        .fold((0.0, 0.0, 0.0), |(a, b, c), p| (a + p.x, b + p.y, c + p.z));
    let (cx, cy, cz) = (sx * inv, sy * inv, sz * inv);

    let rotate = params.rotation_rad != 0.0;
    let scale = params.scale != 1.0;
    let translate = params.translation_m.iter().any(|t| t.to_bits() != 0);
    let (sin, cos) = params.rotation_rad.sin_cos();
    let [tx, ty, tz] = params.translation_m;

    let points = cloud
        .points
        .iter()
        .map(|p| {
            let Point { mut x, mut y, mut z, intensity } = *p;
            if rotate {
                let (dx, dy) = (x - cx, y - cy);
                x = cx + (cos * dx - sin * dy);
                y = cy + (sin * dx + cos * dy);
            }
            if scale {
                x = cx + params.scale * (x - cx);
                y = cy + params.scale * (y - cy);
                z = cz + params.scale * (z - cz);
            }
            if translate {
                x += tx;
                y += ty;
                z += tz;
            }
            Point::new(x, y, z, intensity)
        })
        .collect();
    PointCloud::new(points, cloud.frame.clone())
}
