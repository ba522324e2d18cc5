//! On-disk formats: binary point clouds, PGM range images, scene manifests and
//! count-distribution tables.
//!
//! Cloud files (`.pcv`) are `b"PCV1"`, a little-endian `u32` point count, then
//! per point four little-endian `f32` values `x y z intensity`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{CmagError, Result};
use crate::model::{
    validate_group, Agent, AgentType, CooperativeGroup, CountDistribution, FrameId, Point,
    PointCloud, RigidTransform,
};
use crate::rangeview::RangeImage;
use crate::sim::{Aabb, Scene};

pub const CLOUD_MAGIC: &[u8; 4] = b"PCV1";
pub const MANIFEST_VERSION: &str = "1";
const HEADER_LEN: u64 = 8;
const RECORD_LEN: u64 = 16;

pub fn encode_cloud(cloud: &PointCloud) -> Vec<u8> {
    let mut buf = Vec::with_capacity((HEADER_LEN + RECORD_LEN * cloud.len() as u64) as usize);
    buf.extend_from_slice(CLOUD_MAGIC);
    buf.extend_from_slice(&(cloud.len() as u32).to_le_bytes());
    for p in &cloud.points {
        for v in [p.x, p.y, p.z, p.intensity] {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    buf
}

pub fn decode_cloud(bytes: &[u8], path: &Path, frame: FrameId) -> Result<PointCloud> {
    let truncated = |expected: u64| CmagError::TruncatedFile {
        path: path.to_path_buf(),
        expected,
        found: bytes.len() as u64,
    };
    if bytes.len() < 4 {
        return Err(truncated(HEADER_LEN));
    }
    if &bytes[..4] != CLOUD_MAGIC {
        return Err(CmagError::BadMagic(path.to_path_buf()));
    }
    if bytes.len() < HEADER_LEN as usize {
        return Err(truncated(HEADER_LEN));
    }
    let count = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    let expected = HEADER_LEN + RECORD_LEN * u64::from(count);
    if (bytes.len() as u64) < expected {
        return Err(truncated(expected));
    }
    let points = bytes[HEADER_LEN as usize..expected as usize]
        .chunks_exact(RECORD_LEN as usize)
        .map(|rec| {
            let f = |k: usize| f64::from(f32::from_le_bytes(rec[4 * k..4 * k + 4].try_into().expect("4 bytes")));
            Point::new(f(0), f(1), f(2), f(3))
        })
        .collect();
    Ok(PointCloud::new(points, frame))
}

pub fn save_cloud(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_cloud(cloud)).map_err(|e| CmagError::io(path, e))
}

/// Loads a cloud file; the frame tag is not stored on disk and defaults to ego.
pub fn load_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| CmagError::io(path, e))?;
    decode_cloud(&bytes, path, FrameId::ego())
}

/// 16-bit binary PGM, millimetre ranges, 0 for no return, saturating at
/// 65535 mm.
pub fn encode_pgm(img: &RangeImage) -> Vec<u8> {
    let header = format!("P5\n{} {}\n65535\n", img.width(), img.height());
    let mut buf = Vec::with_capacity(header.len() + 2 * img.ranges().len());
    buf.extend_from_slice(header.as_bytes());
    for &r in img.ranges() {
        let mm = if r.is_finite() && r > 0.0 {
            (r * 1000.0).round().clamp(1.0, 65535.0) as u16
        } else {
            0
        };
        buf.extend_from_slice(&mm.to_be_bytes());
    }
    buf
}

pub fn save_pgm(path: impl AsRef<Path>, img: &RangeImage) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pgm(img)).map_err(|e| CmagError::io(path, e))
}

/// Agent LiDAR type in a manifest: a built-in letter or inline parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TypeSpec {
    Named(String),
    Inline(AgentType),
}

impl TypeSpec {
    pub fn from_type(t: &AgentType) -> Self {
        match t.letter() {
            Some(l) => TypeSpec::Named(l.to_string()),
            None => TypeSpec::Inline(*t),
        }
    }

    pub fn resolve(&self) -> std::result::Result<AgentType, String> {
        match self {
            TypeSpec::Named(n) => AgentType::by_letter(n).ok_or_else(|| format!("unknown agent type {n:?}")),
            TypeSpec::Inline(t) => t.validate().map(|_| *t).map_err(|e| e.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseSpec {
    pub yaw_pitch_roll_rad: [f64; 3],
    pub translation: [f64; 3],
}

impl PoseSpec {
    pub fn from_transform(t: &RigidTransform) -> Self {
        let tr = t.translation();
        Self {
            yaw_pitch_roll_rad: t.yaw_pitch_roll(),
            translation: [tr.x, tr.y, tr.z],
        }
    }

    pub fn to_transform(&self) -> Result<RigidTransform> {
        RigidTransform::from_yaw_pitch_roll(self.yaw_pitch_roll_rad, self.translation)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSpec {
    pub center: [f64; 3],
    pub half_extents: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentEntry {
    pub id: String,
    #[serde(rename = "type")]
    pub agent_type: TypeSpec,
    /// Sensor frame to ego frame.
    pub pose: PoseSpec,
    /// Relative to the manifest's directory; the cloud is in the ego frame.
    pub cloud_path: String,
    pub is_ego: bool,
}

/// JSON description of one cooperative snapshot. Boxes are world-frame scene
/// metadata; `ego_world_pose`, when present, places the ego frame in the world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneManifest {
    pub version: String,
    pub ground_z: f64,
    pub boxes: Vec<BoxSpec>,
    pub agents: Vec<AgentEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ego_world_pose: Option<PoseSpec>,
}

impl SceneManifest {
    fn bad(path: &Path, reason: impl Into<String>) -> CmagError {
        CmagError::BadManifest {
            path: path.to_path_buf(),
            reason: reason.into(),
        }
    }

    pub fn check(&self, path: &Path) -> Result<()> {
        if self.version != MANIFEST_VERSION {
            return Err(Self::bad(path, format!("unsupported version {:?}", self.version)));
        }
        let egos = self.agents.iter().filter(|a| a.is_ego).count();
        if egos != 1 {
            return Err(Self::bad(path, format!("ego count = {egos}")));
        }
        for a in &self.agents {
            a.agent_type.resolve().map_err(|e| Self::bad(path, e))?;
        }
        Ok(())
    }

    pub fn boxes(&self) -> Vec<Aabb> {
        self.boxes
            .iter()
            .map(|b| Aabb {
                center: b.center,
                half_extents: b.half_extents,
            })
            .collect()
    }
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<SceneManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| CmagError::io(path, e))?;
    let m: SceneManifest =
        serde_json::from_str(&text).map_err(|e| SceneManifest::bad(path, e.to_string()))?;
    m.check(path)?;
    Ok(m)
}

fn manifest_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Loads a manifest and every cloud it references into a validated group.
pub fn load_group(path: impl AsRef<Path>) -> Result<(SceneManifest, CooperativeGroup)> {
    let path = path.as_ref();
    let m = read_manifest(path)?;
    let dir = manifest_dir(path);
    let mut agents = Vec::with_capacity(m.agents.len());
    for a in &m.agents {
        let cloud_path = dir.join(&a.cloud_path);
        if !cloud_path.is_file() {
            return Err(CmagError::io(
                &cloud_path,
                std::io::Error::new(std::io::ErrorKind::NotFound, "referenced cloud is missing"),
            ));
        }
        agents.push(Agent {
            id: a.id.clone(),
            pose: a.pose.to_transform()?,
            cloud: load_cloud(&cloud_path)?,
            agent_type: a.agent_type.resolve().map_err(|e| SceneManifest::bad(path, e))?,
            is_ego: a.is_ego,
        });
    }
    Ok((m, CooperativeGroup::new(agents)?))
}

/// File-system friendly name for an agent id.
pub fn cloud_file_name(index: usize, id: &str) -> String {
    let clean: String = id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("{index:03}_{clean}.pcv")
}

/// Writes `manifest.json` plus one cloud file per agent into `dir`.
pub fn write_group(
    dir: impl AsRef<Path>,
    group: &CooperativeGroup,
    ground_z: f64,
    boxes: &[Aabb],
    ego_world_pose: Option<&RigidTransform>,
) -> Result<PathBuf> {
    let dir = dir.as_ref();
    validate_group(group)?;
    let clouds = dir.join("clouds");
    fs::create_dir_all(&clouds).map_err(|e| CmagError::io(&clouds, e))?;
    let mut entries = Vec::with_capacity(group.len());
    for (k, a) in group.agents.iter().enumerate() {
        let rel = format!("clouds/{}", cloud_file_name(k, &a.id));
        save_cloud(dir.join(&rel), &a.cloud)?;
        entries.push(AgentEntry {
            id: a.id.clone(),
            agent_type: TypeSpec::from_type(&a.agent_type),
            pose: PoseSpec::from_transform(&a.pose),
            cloud_path: rel,
            is_ego: a.is_ego,
        });
    }
    let manifest = SceneManifest {
        version: MANIFEST_VERSION.to_string(),
        ground_z,
        boxes: boxes
            .iter()
            .map(|b| BoxSpec {
                center: b.center,
                half_extents: b.half_extents,
            })
            .collect(),
        agents: entries,
        ego_world_pose: ego_world_pose.map(PoseSpec::from_transform),
    };
    let path = dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(&path, text).map_err(|e| CmagError::io(&path, e))?;
    Ok(path)
}

/// Writes a simulated scene's group, recording the ego's world pose.
pub fn write_scene_group(dir: impl AsRef<Path>, scene: &Scene, ego_index: usize, group: &CooperativeGroup) -> Result<PathBuf> {
    let ego_pose = scene.placements.get(ego_index).map(|p| p.pose);
    write_group(dir, group, scene.ground_z, &scene.boxes, ego_pose.as_ref())
}

/// Parses a whitespace table of `[name] count probability` rows; `#` starts a
/// comment. Rows without a name belong to the empty name.
pub fn parse_count_table(text: &str) -> std::result::Result<BTreeMap<String, CountDistribution>, String> {
    let mut rows: BTreeMap<String, BTreeMap<u32, f64>> = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        let (name, count, prob) = match cols.as_slice() {
            [c, p] => ("", *c, *p),
            [n, c, p] => (*n, *c, *p),
            _ => return Err(format!("line {}: expected 2 or 3 columns", lineno + 1)),
        };
        let count: u32 = count
            .parse()
            .map_err(|_| format!("line {}: bad count {count:?}", lineno + 1))?;
        let prob: f64 = prob
            .parse()
            .map_err(|_| format!("line {}: bad probability {prob:?}", lineno + 1))?;
        if rows.entry(name.to_string()).or_default().insert(count, prob).is_some() {
            return Err(format!("line {}: count {count} repeated", lineno + 1));
        }
    }
    rows.into_iter()
        .map(|(name, pmf)| {
            CountDistribution::new(pmf)
                .map(|d| (name.clone(), d))
                .map_err(|e| format!("{name:?}: {e}"))
        })
        .collect()
}

/// Reads a single user distribution (the unnamed rows, or the only table).
pub fn load_count_distribution(path: impl AsRef<Path>) -> Result<CountDistribution> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| CmagError::io(path, e))?;
    let mut tables = parse_count_table(&text).map_err(CmagError::BadDistribution)?;
    if tables.len() == 1 {
        return Ok(tables.into_values().next().expect("one table"));
    }
    tables
        .remove("")
        .ok_or_else(|| CmagError::BadDistribution(format!("{}: expected a single distribution", path.display())))
}

/// The shipped table of reference distributions.
pub const BUILTIN_COUNT_TABLE: &str = include_str!("../data/agent_counts.txt");

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gate::{builtin_comprehensive, Dataset};

    #[test]
    fn empty_cloud_is_eight_bytes() {
        let bytes = encode_cloud(&PointCloud::empty(FrameId::ego()));
        assert_eq!(bytes, b"PCV1\0\0\0\0");
        let back = decode_cloud(&bytes, Path::new("x"), FrameId::ego()).unwrap();
        assert!(back.is_empty());
    }

    #[test]
    fn one_point_is_twenty_four_bytes() {
        let c = PointCloud::new(vec![Point::new(1.0, -2.5, 0.125, 1.0)], FrameId::ego());
        let bytes = encode_cloud(&c);
        assert_eq!(bytes.len(), 24);
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &1.0f32.to_le_bytes());
        assert_eq!(decode_cloud(&bytes, Path::new("x"), FrameId::ego()).unwrap(), c);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let mut bytes = encode_cloud(&PointCloud::new(vec![Point::default(); 2], FrameId::ego()));
        assert!(matches!(
            decode_cloud(&bytes[..30], Path::new("x"), FrameId::ego()),
            Err(CmagError::TruncatedFile { expected: 40, found: 30, .. })
        ));
        bytes[0] = b'X';
        assert!(matches!(decode_cloud(&bytes, Path::new("x"), FrameId::ego()), Err(CmagError::BadMagic(_))));
        assert!(matches!(decode_cloud(b"PC", Path::new("x"), FrameId::ego()), Err(CmagError::TruncatedFile { .. })));
    }

    #[test]
    fn missing_file_is_io_failure() {
        let e = load_cloud("/nonexistent/cloud.pcv").unwrap_err();
        assert!(matches!(e, CmagError::IoFailure { .. }));
        assert!(e.is_io());
    }

    #[test]
    fn pgm_layout() {
        let mut img = RangeImage::empty(2, 3, (-25.0, 5.0), FrameId::ego()).unwrap();
        img.set(0, 1, 10.0, 1.0);
        img.set(1, 2, 100.0, 1.0);
        let bytes = encode_pgm(&img);
        let header = b"P5\n3 2\n65535\n";
        assert_eq!(&bytes[..header.len()], header);
        let px: Vec<u16> = bytes[header.len()..]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect();
        assert_eq!(px, vec![0, 10_000, 0, 0, 0, 65_535]);
    }

    #[test]
    fn shipped_table_matches_constants() {
        let t = parse_count_table(BUILTIN_COUNT_TABLE).unwrap();
        for d in Dataset::ALL {
            assert_eq!(t[d.name()], d.distribution(), "{}", d.name());
        }
        let c = builtin_comprehensive();
        for n in 1..=5 {
            assert!((t["comprehensive"].prob(n) - c.prob(n)).abs() < 1e-12);
        }
    }

    #[test]
    fn table_parse_errors() {
        assert!(parse_count_table("1 0.5\n2 0.4\n").is_err());
        assert!(parse_count_table("1 0.5\n1 0.5\n").is_err());
        assert!(parse_count_table("a b c d\n").is_err());
        let t = parse_count_table("# pmf\n1 0.25\n3 0.75 # tail\n").unwrap();
        assert_eq!(t[""].prob(3), 0.75);
    }

    #[test]
    fn type_spec_forms() {
        let named: TypeSpec = serde_json::from_str("\"C\"").unwrap();
        assert_eq!(named.resolve().unwrap(), AgentType::C);
        let mut custom = AgentType::A;
        custom.beams = 48;
        let json = serde_json::to_string(&TypeSpec::from_type(&custom)).unwrap();
        let back: TypeSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back.resolve().unwrap(), custom);
        assert!(TypeSpec::Named("Z".into()).resolve().is_err());
    }
}
