//! Synthetic multi-agent LiDAR scenes: flat ground, box obstacles and agents
//! carrying the built-in sensor setups.

use std::f64::consts::PI;

use nalgebra::Vector3;

use crate::error::{CmagError, Result};
use crate::model::{
    transform_cloud, Agent, AgentClass, AgentType, CooperativeGroup, FrameId, Point, PointCloud,
    RigidTransform,
};
use crate::par::Execution;
use crate::rng::RngStream;

/// Half side of the square region boxes and agents are placed in.
pub const REGION_HALF_M: f64 = 50.0;
pub const MIN_AGENT_SEPARATION_M: f64 = 5.0;
/// Clearance kept between a box footprint and any agent.
pub const AGENT_CLEARANCE_M: f64 = 1.0;
pub const MAX_PLACEMENT_ATTEMPTS: usize = 1000;
pub const DEFAULT_AZIMUTH_STEPS: usize = 2048;

const HALF_X: (f64, f64) = (1.8, 2.6);
const HALF_Y: (f64, f64) = (0.8, 1.1);
const HALF_Z: (f64, f64) = (0.6, 0.9);

/// Sensor height above ground for each agent class.
pub fn mount_height(class: AgentClass) -> f64 {
    match class {
        AgentClass::Vehicle => 2.0,
        AgentClass::Infrastructure => 5.0,
    }
}

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub center: [f64; 3],
    pub half_extents: [f64; 3],
}

impl Aabb {
    /// Entry distance of the ray `origin + t·dir`, `t > 0`, via slab tests.
    pub fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        let mut t_near = f64::NEG_INFINITY;
        let mut t_far = f64::INFINITY;
        for k in 0..3 {
            let lo = self.center[k] - self.half_extents[k];
            let hi = self.center[k] + self.half_extents[k];
            if dir[k] == 0.0 {
                if origin[k] < lo || origin[k] > hi {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / dir[k];
            let (a, b) = ((lo - origin[k]) * inv, (hi - origin[k]) * inv);
            let (a, b) = if a <= b { (a, b) } else { (b, a) };
            t_near = t_near.max(a);
            t_far = t_far.min(b);
            if t_near > t_far {
                return None;
            }
        }
        if t_far <= 0.0 {
            None
        } else if t_near > 0.0 {
            Some(t_near)
        } else {
            // origin inside the box
            Some(t_far)
        }
    }

    fn overlaps_bev(&self, other: &Aabb, margin: f64) -> bool {
        (0..2).all(|k| {
            (self.center[k] - other.center[k]).abs()
                < self.half_extents[k] + other.half_extents[k] + margin
        })
    }

    fn covers_bev(&self, x: f64, y: f64, margin: f64) -> bool {
        (x - self.center[0]).abs() < self.half_extents[0] + margin
            && (y - self.center[1]).abs() < self.half_extents[1] + margin
    }

    /// Distance from `p` to the box surface.
    pub fn surface_distance(&self, p: &Vector3<f64>) -> f64 {
        let d: Vec<f64> = (0..3)
            .map(|k| (p[k] - self.center[k]).abs() - self.half_extents[k])
            .collect();
        let outside = Vector3::new(d[0].max(0.0), d[1].max(0.0), d[2].max(0.0)).norm();
        let inside = d[0].max(d[1]).max(d[2]).min(0.0);
        outside + inside.abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Placement {
    /// Sensor frame to world frame.
    pub pose: RigidTransform,
    pub agent_type: AgentType,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub ground_z: f64,
    pub boxes: Vec<Aabb>,
    pub placements: Vec<Placement>,
}

#[derive(Debug, Clone, Copy)]
pub struct SimOptions {
    pub azimuth_steps: usize,
    pub execution: Execution,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            azimuth_steps: DEFAULT_AZIMUTH_STEPS,
            execution: Execution::default(),
        }
    }
}

/// Random scene with `n_agents` sensors (types in order) and `n_boxes`
/// car-sized obstacles resting on the ground.
pub fn make_scene(
    n_boxes: usize,
    n_agents: usize,
    types: &[AgentType],
    rng: &mut RngStream,
) -> Result<Scene> {
    if n_agents == 0 || types.len() != n_agents {
        return Err(CmagError::BadConfig(format!(
            "{n_agents} agent(s) with {} type(s)",
            types.len()
        )));
    }
    let ground_z = 0.0;
    let mut xy: Vec<(f64, f64)> = Vec::with_capacity(n_agents);
    let mut placements = Vec::with_capacity(n_agents);
    for t in types {
        t.validate()?;
        let (x, y) = (0..MAX_PLACEMENT_ATTEMPTS)
            .map(|_| {
                (
                    rng.symmetric(REGION_HALF_M),
                    rng.symmetric(REGION_HALF_M),
                )
            })
            .find(|&(x, y)| {
                xy.iter()
                    .all(|&(u, v)| (x - u).hypot(y - v) >= MIN_AGENT_SEPARATION_M)
            })
            .ok_or(CmagError::PlacementFailure(MAX_PLACEMENT_ATTEMPTS))?;
        xy.push((x, y));
        let yaw = rng.symmetric(PI);
        let z = ground_z + mount_height(t.agent_class);
        placements.push(Placement {
            pose: RigidTransform::from_yaw(yaw, [x, y, z]),
            agent_type: *t,
        });
    }
    let mut boxes: Vec<Aabb> = Vec::with_capacity(n_boxes);
    for _ in 0..n_boxes {
        let b = (0..MAX_PLACEMENT_ATTEMPTS)
            .map(|_| {
                let half = [
                    rng.uniform(HALF_X.0, HALF_X.1),
                    rng.uniform(HALF_Y.0, HALF_Y.1),
                    rng.uniform(HALF_Z.0, HALF_Z.1),
                ];
                let center = [
                    rng.symmetric(REGION_HALF_M),
                    rng.symmetric(REGION_HALF_M),
                    ground_z + half[2],
                ];
                Aabb {
                    center,
                    half_extents: half,
                }
            })
            .find(|b| {
                xy.iter().all(|&(x, y)| !b.covers_bev(x, y, AGENT_CLEARANCE_M))
                    && boxes.iter().all(|o| !b.overlaps_bev(o, 0.0))
            })
            .ok_or(CmagError::PlacementFailure(MAX_PLACEMENT_ATTEMPTS))?;
        boxes.push(b);
    }
    Ok(Scene {
        ground_z,
        boxes,
        placements,
    })
}

/// Beam elevations in radians, evenly spaced over the FOV including both
/// edges, lowest first.
pub fn beam_elevations(t: &AgentType) -> Vec<f64> {
    let (lo, hi) = (t.fov_deg.0.to_radians(), t.fov_deg.1.to_radians());
    if t.beams == 1 {
        return vec![0.5 * (lo + hi)];
    }
    let step = (hi - lo) / (t.beams - 1) as f64;
    (0..t.beams)
        .map(|b| if b + 1 == t.beams { hi } else { lo + step * b as f64 })
        .collect()
}

/// Azimuths in `(−π, π)` at the centers of `steps` equal bins, matching the
/// columns of a range image of the same width.
pub fn azimuths(steps: usize) -> Vec<f64> {
    (0..steps)
        .map(|c| PI * (1.0 - 2.0 * (c as f64 + 0.5) / steps as f64))
        .collect()
}

/// Nearest hit distance among ground and boxes.
pub fn cast_ray(scene: &Scene, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
    let mut best = if dir.z < 0.0 {
        let t = (scene.ground_z - origin.z) / dir.z;
        (t > 0.0).then_some(t)
    } else {
        None
    };
    for b in &scene.boxes {
        if let Some(t) = b.intersect(origin, dir) {
            if best.is_none_or(|d| t < d) {
                best = Some(t);
            }
        }
    }
    best
}

pub fn simulate_lidar(scene: &Scene, placement_index: usize, rng: &mut RngStream) -> Result<PointCloud> {
    simulate_lidar_with(scene, placement_index, rng, &SimOptions::default())
}

/// Casts every (beam, azimuth) ray of one placement; returns the cloud in
/// that sensor's frame, beam-major.
pub fn simulate_lidar_with(
    scene: &Scene,
    placement_index: usize,
    rng: &mut RngStream,
    opts: &SimOptions,
) -> Result<PointCloud> {
    let placement = scene
        .placements
        .get(placement_index)
        .ok_or(CmagError::IndexOutOfBounds {
            index: placement_index,
            len: scene.placements.len(),
        })?;
    let t = &placement.agent_type;
    let elevations = beam_elevations(t);
    let az = azimuths(opts.azimuth_steps);
    let w = az.len();
    let origin = *placement.pose.translation();
    let rot = *placement.pose.rotation();

    let hits: Vec<Option<(f64, Vector3<f64>)>> = opts.execution.map_range(elevations.len() * w, |k| {
        let (e, a) = (elevations[k / w], az[k % w]);
        let (se, ce) = e.sin_cos();
        let (sa, ca) = a.sin_cos();
        let local = Vector3::new(ce * ca, ce * sa, se);
        let world = rot * local;
        cast_ray(scene, &origin, &world)
            .filter(|&d| d <= t.range_m)
            .map(|d| (d, local))
    });

    // noise is drawn in ray order so the output does not depend on scheduling
    let points = hits
        .into_iter()
        .flatten()
        .map(|(d, dir)| {
            let r = d + rng.symmetric(t.range_error_m);
            Point::new(r * dir.x, r * dir.y, r * dir.z, 1.0)
        })
        .collect();
    Ok(PointCloud::new(
        points,
        FrameId::sensor(&agent_id(placement_index)),
    ))
}

pub fn agent_id(placement_index: usize) -> String {
    format!("agent-{placement_index}")
}

pub fn make_group(scene: &Scene, ego_index: usize, rng: &mut RngStream) -> Result<CooperativeGroup> {
    make_group_with(scene, ego_index, rng, &SimOptions::default())
}

/// Simulates every placement and expresses all clouds in the ego frame.
pub fn make_group_with(
    scene: &Scene,
    ego_index: usize,
    rng: &mut RngStream,
    opts: &SimOptions,
) -> Result<CooperativeGroup> {
    let ego = scene
        .placements
        .get(ego_index)
        .ok_or(CmagError::IndexOutOfBounds {
            index: ego_index,
            len: scene.placements.len(),
        })?;
    let world_to_ego = ego.pose.inverse();
    let mut agents = Vec::with_capacity(scene.placements.len());
    for (i, p) in scene.placements.iter().enumerate() {
        let local = simulate_lidar_with(scene, i, rng, opts)?;
        let pose = if i == ego_index {
            RigidTransform::identity()
        } else {
            world_to_ego.compose(&p.pose)
        };
        agents.push(Agent {
            id: agent_id(i),
            pose,
            cloud: transform_cloud(&local, &pose, FrameId::ego()),
            agent_type: p.agent_type,
            is_ego: i == ego_index,
        });
    }
    CooperativeGroup::new(agents)
}
