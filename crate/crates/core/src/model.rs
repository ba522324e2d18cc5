//! Core domain types: points, clouds, rigid transforms, agents, cooperative
//! groups and agent-count distributions.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{CmagError, Result};

/// Tolerance for orthonormality and determinant checks on rotations.
pub const ROTATION_TOLERANCE: f64 = 1e-9;
/// Tolerance on the total mass of a [`CountDistribution`].
pub const PMF_TOLERANCE: f64 = 1e-9;
/// Largest agent count carried by the built-in distributions.
pub const DEFAULT_MAX_COUNT: u32 = 5;

pub const EGO_FRAME: &str = "ego";

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub intensity: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64, z: f64, intensity: f64) -> Self {
        Self { x, y, z, intensity }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite() && self.intensity.is_finite()
    }

    pub fn xyz(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn bev(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    pub fn range(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    /// Bitwise equality on all four fields.
    pub fn bits_eq(&self, other: &Point) -> bool {
        self.x.to_bits() == other.x.to_bits()
            && self.y.to_bits() == other.y.to_bits()
            && self.z.to_bits() == other.z.to_bits()
            && self.intensity.to_bits() == other.intensity.to_bits()
    }
}

/// Coordinate frame tag: `"ego"` or an agent sensor frame.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FrameId(pub String);

impl FrameId {
    pub fn ego() -> Self {
        FrameId(EGO_FRAME.to_string())
    }

    pub fn sensor(agent_id: &str) -> Self {
        FrameId(format!("sensor:{agent_id}"))
    }

    pub fn is_ego(&self) -> bool {
        self.0 == EGO_FRAME
    }
}

impl fmt::Display for FrameId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point>,
    pub frame: FrameId,
}

impl PointCloud {
    pub fn new(points: Vec<Point>, frame: FrameId) -> Self {
        Self { points, frame }
    }

    pub fn empty(frame: FrameId) -> Self {
        Self::new(Vec::new(), frame)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Bitwise equality of frame and every point.
    pub fn bits_eq(&self, other: &PointCloud) -> bool {
        self.frame == other.frame
            && self.points.len() == other.points.len()
            && self
                .points
                .iter()
                .zip(&other.points)
                .all(|(a, b)| a.bits_eq(b))
    }

    /// Mean BEV position, or `None` for an empty cloud.
    pub fn bev_centroid(&self) -> Option<[f64; 2]> {
        if self.points.is_empty() {
            return None;
        }
        let n = self.points.len() as f64;
        let (sx, sy) = self
            .points
            .iter()
            .fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
        Some([sx / n, sy / n])
    }
}

/// Proper rigid motion `p -> R p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if !rotation.iter().all(|v| v.is_finite()) || !translation.iter().all(|v| v.is_finite()) {
            return Err(CmagError::BadTransform("non-finite entry".into()));
        }
        let ortho_err = (rotation * rotation.transpose() - Matrix3::identity()).amax();
        if ortho_err > ROTATION_TOLERANCE {
            return Err(CmagError::BadTransform(format!(
                "R·Rᵀ deviates from I by {ortho_err:e}"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(CmagError::BadTransform(format!("det(R) = {det}")));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Rotation `Rz(yaw) · Ry(pitch) · Rx(roll)` followed by the translation.
    pub fn from_yaw_pitch_roll(ypr: [f64; 3], translation: [f64; 3]) -> Result<Self> {
        let rot = Rotation3::from_euler_angles(ypr[2], ypr[1], ypr[0]);
        Self::new(*rot.matrix(), Vector3::from(translation))
    }

    pub fn from_yaw(yaw: f64, translation: [f64; 3]) -> Self {
        Self::from_yaw_pitch_roll([yaw, 0.0, 0.0], translation)
            .expect("yaw rotations are orthonormal")
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn yaw_pitch_roll(&self) -> [f64; 3] {
        let (roll, pitch, yaw) = Rotation3::from_matrix_unchecked(self.rotation).euler_angles();
        [yaw, pitch, roll]
    }

    pub fn is_identity(&self) -> bool {
        self.rotation == Matrix3::identity() && self.translation == Vector3::zeros()
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn apply_vec(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v + self.translation
    }

    pub fn apply(&self, p: &Point) -> Point {
        let q = self.apply_vec(&p.xyz());
        Point::new(q.x, q.y, q.z, p.intensity)
    }
}

/// Moves a cloud into `target_frame`. The exact identity returns the points
/// untouched.
pub fn transform_cloud(cloud: &PointCloud, t: &RigidTransform, target_frame: FrameId) -> PointCloud {
    let points = if t.is_identity() {
        cloud.points.clone()
    } else {
        cloud.points.iter().map(|p| t.apply(p)).collect()
    };
    PointCloud::new(points, target_frame)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Realism {
    Sim,
    Real,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AgentClass {
    Vehicle,
    Infrastructure,
}

/// LiDAR setup of an agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentType {
    pub beams: usize,
    pub range_m: f64,
    pub fov_deg: (f64, f64),
    pub range_error_m: f64,
    pub realism: Realism,
    pub agent_class: AgentClass,
}

impl AgentType {
    pub const A: AgentType = AgentType {
        beams: 64,
        range_m: 120.0,
        fov_deg: (-25.0, 5.0),
        range_error_m: 0.02,
        realism: Realism::Sim,
        agent_class: AgentClass::Vehicle,
    };
    pub const B: AgentType = AgentType {
        beams: 32,
        range_m: 120.0,
        fov_deg: (-25.0, 5.0),
        range_error_m: 0.02,
        realism: Realism::Sim,
        agent_class: AgentClass::Infrastructure,
    };
    pub const C: AgentType = AgentType {
        beams: 32,
        range_m: 200.0,
        fov_deg: (-25.0, 15.0),
        range_error_m: 0.03,
        realism: Realism::Real,
        agent_class: AgentClass::Vehicle,
    };
    // No error is published for this sensor.
    pub const D: AgentType = AgentType {
        beams: 40,
        range_m: 200.0,
        fov_deg: (-30.0, 10.0),
        range_error_m: 0.0,
        realism: Realism::Real,
        agent_class: AgentClass::Vehicle,
    };
    pub const E: AgentType = AgentType {
        beams: 300,
        range_m: 280.0,
        fov_deg: (-30.0, 10.0),
        range_error_m: 0.03,
        realism: Realism::Real,
        agent_class: AgentClass::Infrastructure,
    };

    pub const BUILTIN: [(char, AgentType); 5] = [
        ('A', Self::A),
        ('B', Self::B),
        ('C', Self::C),
        ('D', Self::D),
        ('E', Self::E),
    ];

    pub fn by_letter(letter: &str) -> Option<AgentType> {
        let mut chars = letter.trim().chars();
        let c = chars.next()?.to_ascii_uppercase();
        if chars.next().is_some() {
            return None;
        }
        Self::BUILTIN
            .iter()
            .find(|(l, _)| *l == c)
            .map(|(_, t)| *t)
    }

    /// Letter of the built-in type this equals, if any.
    pub fn letter(&self) -> Option<char> {
        Self::BUILTIN
            .iter()
            .find(|(_, t)| t == self)
            .map(|(l, _)| *l)
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.fov_deg;
        if self.beams == 0 {
            return Err(CmagError::BadConfig("agent type needs at least one beam".into()));
        }
        if !(self.range_m > 0.0 && self.range_m.is_finite()) {
            return Err(CmagError::BadConfig(format!("range {} m", self.range_m)));
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(CmagError::BadConfig(format!("fov [{lo}, {hi}]")));
        }
        if !(self.range_error_m >= 0.0 && self.range_error_m.is_finite()) {
            return Err(CmagError::BadConfig(format!(
                "range error {} m",
                self.range_error_m
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub id: String,
    /// Sensor frame to ego frame.
    pub pose: RigidTransform,
    /// Always expressed in the ego frame.
    pub cloud: PointCloud,
    pub agent_type: AgentType,
    pub is_ego: bool,
}

impl Agent {
    /// Sensor origin in the ego frame.
    pub fn origin(&self) -> Vector3<f64> {
        *self.pose.translation()
    }
}

/// Invariant violations reported by [`validate_group`].
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Violation {
    #[error("group has no agents")]
    Empty,
    #[error("ego count = {0}")]
    EgoCount(usize),
    #[error("duplicate agent id {0:?}")]
    DuplicateId(String),
    #[error("agent {agent:?} cloud is in frame {frame:?}, expected \"ego\"")]
    FrameTag { agent: String, frame: String },
    #[error("non-finite point (agent {agent:?}, index {index})")]
    NonFinitePoint { agent: String, index: usize },
    #[error("intensity outside [0, 1] (agent {agent:?}, index {index})")]
    Intensity { agent: String, index: usize },
    #[error("agent {0:?} has an invalid pose")]
    BadPose(String),
}

/// An ego-anchored snapshot of cooperating agents.
#[derive(Debug, Clone, PartialEq)]
pub struct CooperativeGroup {
    pub agents: Vec<Agent>,
}

impl CooperativeGroup {
    pub fn new(agents: Vec<Agent>) -> Result<Self> {
        let group = Self { agents };
        validate_group(&group)?;
        Ok(group)
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    pub fn ego_index(&self) -> Option<usize> {
        self.agents.iter().position(|a| a.is_ego)
    }

    pub fn bits_eq(&self, other: &CooperativeGroup) -> bool {
        self.agents.len() == other.agents.len()
            && self.agents.iter().zip(&other.agents).all(|(a, b)| {
                a.id == b.id
                    && a.is_ego == b.is_ego
                    && a.agent_type == b.agent_type
                    && a.pose == b.pose
                    && a.cloud.bits_eq(&b.cloud)
            })
    }
}

/// Returns the first violated group invariant.
pub fn validate_group(group: &CooperativeGroup) -> std::result::Result<(), Violation> {
    if group.agents.is_empty() {
        return Err(Violation::Empty);
    }
    let egos = group.agents.iter().filter(|a| a.is_ego).count();
    if egos != 1 {
        return Err(Violation::EgoCount(egos));
    }
    let mut seen = std::collections::HashSet::new();
    for a in &group.agents {
        if !seen.insert(a.id.as_str()) {
            return Err(Violation::DuplicateId(a.id.clone()));
        }
    }
    for a in &group.agents {
        if !a.cloud.frame.is_ego() {
            return Err(Violation::FrameTag {
                agent: a.id.clone(),
                frame: a.cloud.frame.0.clone(),
            });
        }
    }
    for a in &group.agents {
        if let Some(index) = a.cloud.points.iter().position(|p| !p.is_finite()) {
            return Err(Violation::NonFinitePoint {
                agent: a.id.clone(),
                index,
            });
        }
        if let Some(index) = a
            .cloud
            .points
            .iter()
            .position(|p| !(0.0..=1.0).contains(&p.intensity))
        {
            return Err(Violation::Intensity {
                agent: a.id.clone(),
                index,
            });
        }
        if RigidTransform::new(*a.pose.rotation(), *a.pose.translation()).is_err() {
            return Err(Violation::BadPose(a.id.clone()));
        }
    }
    Ok(())
}

/// Probability mass function over agent counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountDistribution {
    pmf: BTreeMap<u32, f64>,
}

impl CountDistribution {
    /// Validates and stores a pmf. Zero-probability entries are dropped.
    pub fn new(pmf: BTreeMap<u32, f64>) -> Result<Self> {
        Self::with_cap(pmf, DEFAULT_MAX_COUNT)
    }

    pub fn with_cap(pmf: BTreeMap<u32, f64>, max_count: u32) -> Result<Self> {
        let mut total = 0.0;
        for (&count, &p) in &pmf {
            if count == 0 || count > max_count {
                return Err(CmagError::BadDistribution(format!(
                    "count {count} outside 1..={max_count}"
                )));
            }
            if !(0.0..=1.0).contains(&p) {
                return Err(CmagError::BadDistribution(format!(
                    "probability {p} for count {count}"
                )));
            }
            total += p;
        }
        if (total - 1.0).abs() > PMF_TOLERANCE {
            return Err(CmagError::BadDistribution(format!("mass sums to {total}")));
        }
        let pmf = pmf.into_iter().filter(|&(_, p)| p > 0.0).collect();
        Ok(Self { pmf })
    }

    pub fn from_pairs(pairs: &[(u32, f64)]) -> Result<Self> {
        Self::new(pairs.iter().copied().collect())
    }

    /// Probability of `count`; zero outside the support.
    pub fn prob(&self, count: u32) -> f64 {
        self.pmf.get(&count).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.pmf.iter().map(|(&k, &v)| (k, v))
    }

    pub fn max_count(&self) -> u32 {
        self.pmf.keys().next_back().copied().unwrap_or(0)
    }

    pub fn total(&self) -> f64 {
        self.pmf.values().sum()
    }

    /// Half the L1 distance between two pmfs.
    pub fn total_variation(&self, other: &CountDistribution) -> f64 {
        total_variation(&self.pmf, &other.pmf)
    }
}

pub(crate) fn total_variation(a: &BTreeMap<u32, f64>, b: &BTreeMap<u32, f64>) -> f64 {
    let keys: std::collections::BTreeSet<u32> = a.keys().chain(b.keys()).copied().collect();
    0.5 * keys
        .into_iter()
        .map(|k| (a.get(&k).unwrap_or(&0.0) - b.get(&k).unwrap_or(&0.0)).abs())
        .sum::<f64>()
}
