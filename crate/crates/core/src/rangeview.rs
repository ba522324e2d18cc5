//! Spherical range-view projection and beam resampling.
//!
//! Column `floor(½(1 − θ/π)·W) mod W` and row
//! `clamp(floor((1 − (φ − φ_min)/(φ_max − φ_min))·H), 0, H − 1)`, so the top of
//! the vertical field of view lands on row 0 and the bottom edge on row `H − 1`.
//! All angles are radians internally; the FOV is carried in degrees.

use std::f64::consts::PI;

use crate::config::CmagConfig;
use crate::error::{CmagError, Result};
use crate::model::{AgentType, FrameId, Point, PointCloud};
use crate::rng::RngStream;

/// Range stored in pixels that received no return.
pub const NO_RETURN: f64 = f64::INFINITY;

/// Slack on the vertical FOV test, absorbing rounding in `atan2` for points
/// generated exactly on the FOV edges.
pub const FOV_SLACK_RAD: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct RangeImage {
    height: usize,
    width: usize,
    fov_deg: (f64, f64),
    ranges: Vec<f64>,
    intensities: Vec<f64>,
    pub frame: FrameId,
}

/// Vertical FOV in radians plus derived quantities.
#[derive(Debug, Clone, Copy)]
struct Fov {
    min: f64,
    max: f64,
    span: f64,
}

impl Fov {
    fn from_deg(fov_deg: (f64, f64)) -> Result<Self> {
        let (lo, hi) = fov_deg;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(CmagError::BadImage(format!("fov [{lo}, {hi}]")));
        }
        let (min, max) = (lo.to_radians(), hi.to_radians());
        Ok(Self {
            min,
            max,
            span: max - min,
        })
    }
}

impl RangeImage {
    pub fn empty(height: usize, width: usize, fov_deg: (f64, f64), frame: FrameId) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(CmagError::BadImage(format!("{height}x{width}")));
        }
        Fov::from_deg(fov_deg)?;
        Ok(Self {
            height,
            width,
            fov_deg,
            ranges: vec![NO_RETURN; height * width],
            intensities: vec![0.0; height * width],
            frame,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn fov_deg(&self) -> (f64, f64) {
        self.fov_deg
    }

    pub fn range(&self, row: usize, col: usize) -> f64 {
        self.ranges[row * self.width + col]
    }

    pub fn intensity(&self, row: usize, col: usize) -> f64 {
        self.intensities[row * self.width + col]
    }

    pub fn is_valid(&self, row: usize, col: usize) -> bool {
        is_return(self.range(row, col))
    }

    /// Writes a return; `NO_RETURN` clears the pixel.
    pub fn set(&mut self, row: usize, col: usize, range: f64, intensity: f64) {
        let k = row * self.width + col;
        self.ranges[k] = range;
        self.intensities[k] = intensity;
    }

    pub fn ranges(&self) -> &[f64] {
        &self.ranges
    }

    pub fn valid_count(&self) -> usize {
        self.ranges.iter().filter(|r| is_return(**r)).count()
    }

    /// Azimuth and elevation pitch in radians.
    pub fn pitch(&self) -> (f64, f64) {
        let fov = Fov::from_deg(self.fov_deg).expect("validated at construction");
        (2.0 * PI / self.width as f64, fov.span / self.height as f64)
    }

    /// Ray direction (azimuth, elevation) through the center of a pixel.
    pub fn pixel_center_angles(&self, row: usize, col: usize) -> (f64, f64) {
        let fov = Fov::from_deg(self.fov_deg).expect("validated at construction");
        let theta = PI * (1.0 - 2.0 * (col as f64 + 0.5) / self.width as f64);
        let phi = fov.max - fov.span * (row as f64 + 0.5) / self.height as f64;
        (theta, phi)
    }
}

fn is_return(r: f64) -> bool {
    r.is_finite() && r > 0.0
}

/// Pixel `(row, col)` a point projects to, or `None` when it lies outside the
/// vertical FOV or at the sensor origin.
pub fn pixel_of(p: &Point, fov_deg: (f64, f64), height: usize, width: usize) -> Option<(usize, usize)> {
    let fov = Fov::from_deg(fov_deg).ok()?;
    pixel_in(p, &fov, height, width).map(|(r, c, _)| (r, c))
}

fn pixel_in(p: &Point, fov: &Fov, height: usize, width: usize) -> Option<(usize, usize, f64)> {
    let range = p.range();
    if !is_return(range) {
        return None;
    }
    let theta = p.y.atan2(p.x);
    let phi = p.z.atan2(p.x.hypot(p.y));
    if phi < fov.min - FOV_SLACK_RAD || phi > fov.max + FOV_SLACK_RAD {
        return None;
    }
    let rx = 0.5 * (1.0 - theta / PI) * width as f64;
    let ry = (1.0 - (phi - fov.min) / fov.span) * height as f64;
    let col = (rx.floor() as i64).rem_euclid(width as i64) as usize;
    let row = (ry.floor().max(0.0) as usize).min(height - 1);
    Some((row, col, range))
}

/// Projects a cloud into an `height × width` range image; the nearest return
/// wins each pixel.
pub fn project(cloud: &PointCloud, fov_deg: (f64, f64), height: usize, width: usize) -> Result<RangeImage> {
    let mut img = RangeImage::empty(height, width, fov_deg, cloud.frame.clone())?;
    let fov = Fov::from_deg(fov_deg)?;
    for p in &cloud.points {
        if let Some((row, col, range)) = pixel_in(p, &fov, height, width) {
            if range < img.range(row, col) {
                img.set(row, col, range, p.intensity);
            }
        }
    }
    Ok(img)
}

/// One point per valid pixel, along the pixel-center ray, row-major order.
pub fn unproject(img: &RangeImage) -> PointCloud {
    let mut points = Vec::with_capacity(img.valid_count());
    for row in 0..img.height {
        for col in 0..img.width {
            let r = img.range(row, col);
            if !is_return(r) {
                continue;
            }
            let (theta, phi) = img.pixel_center_angles(row, col);
            let (sp, cp) = phi.sin_cos();
            let (st, ct) = theta.sin_cos();
            points.push(Point::new(r * cp * ct, r * cp * st, r * sp, img.intensity(row, col)));
        }
    }
    PointCloud::new(points, img.frame.clone())
}

/// Changes the number of beam rows.
///
/// Downsampling keeps rows `floor(j·H/T)`. Upsampling places output row `j` at
/// source coordinate `s = j·H/T` and interpolates range linearly between the
/// bracketing rows; a single valid neighbour is copied and intensity comes
/// from the nearer valid neighbour.
pub fn resample_beams(img: &RangeImage, target_height: usize) -> Result<RangeImage> {
    if target_height < 1 {
        return Err(CmagError::BadTarget(target_height));
    }
    let h = img.height;
    if target_height == h {
        return Ok(img.clone());
    }
    let mut out = RangeImage::empty(target_height, img.width, img.fov_deg, img.frame.clone())?;
    if target_height < h {
        for j in 0..target_height {
            let src = j * h / target_height;
            let (a, b) = (src * img.width, (src + 1) * img.width);
            let (o, p) = (j * img.width, (j + 1) * img.width);
            out.ranges[o..p].copy_from_slice(&img.ranges[a..b]);
            out.intensities[o..p].copy_from_slice(&img.intensities[a..b]);
        }
        return Ok(out);
    }
    for j in 0..target_height {
        let s = j as f64 * h as f64 / target_height as f64;
        let lo = (s.floor() as usize).min(h - 1);
        let hi = (s.ceil() as usize).min(h - 1);
        let frac = s - lo as f64;
        for col in 0..img.width {
            let (rl, rh) = (img.range(lo, col), img.range(hi, col));
            let (il, ih) = (img.intensity(lo, col), img.intensity(hi, col));
            let (range, intensity) = match (is_return(rl), is_return(rh)) {
                (true, true) if lo == hi => (rl, il),
                (true, true) => {
                    let i = if frac <= 0.5 { il } else { ih };
                    (rl + frac * (rh - rl), i)
                }
                (true, false) => (rl, il),
                (false, true) => (rh, ih),
                (false, false) => continue,
            };
            out.set(j, col, range, intensity);
        }
    }
    Ok(out)
}

/// Projects with the agent's beam count, resamples to `target_beams` and
/// unprojects.
pub fn density_augment_to(
    cloud: &PointCloud,
    agent_type: &AgentType,
    target_beams: usize,
    width: usize,
) -> Result<PointCloud> {
    let img = project(cloud, agent_type.fov_deg, agent_type.beams, width)?;
    Ok(unproject(&resample_beams(&img, target_beams)?))
}

pub fn pick_density_target(cfg: &CmagConfig, rng: &mut RngStream) -> Result<usize> {
    if cfg.pa_density_targets.is_empty() {
        return Err(CmagError::BadConfig("no density targets".into()));
    }
    Ok(cfg.pa_density_targets[rng.index(cfg.pa_density_targets.len())])
}

/// Beam-count augmentation with a target drawn from `cfg.pa_density_targets`.
/// A target equal to the source beam count still round-trips through the
/// range image.
pub fn density_augment(
    cloud: &PointCloud,
    agent_type: &AgentType,
    cfg: &CmagConfig,
    rng: &mut RngStream,
) -> Result<PointCloud> {
    let target = pick_density_target(cfg, rng)?;
    density_augment_to(cloud, agent_type, target, cfg.range_image_width)
}
