//! Mixup agent: a half-plane cut through the two nearest agents' clouds.

use crate::config::{CenterMode, CmagConfig};
use crate::error::{CmagError, Result};
use crate::model::{Agent, CooperativeGroup, FrameId, PointCloud};
use crate::rng::RngStream;

/// Centers closer than this cannot define a split direction.
pub const MIN_CENTER_SEPARATION: f64 = 1e-9;

/// Oriented BEV line through `anchor`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitLine {
    pub anchor: [f64; 2],
    direction: [f64; 2],
}

impl SplitLine {
    /// Normalizes `direction`; `None` if it has zero length.
    pub fn new(anchor: [f64; 2], direction: [f64; 2]) -> Option<Self> {
        let n = direction[0].hypot(direction[1]);
        if !(n > 0.0 && n.is_finite()) {
            return None;
        }
        Some(Self {
            anchor,
            direction: [direction[0] / n, direction[1] / n],
        })
    }

    pub fn direction(&self) -> [f64; 2] {
        self.direction
    }

    /// Same line, opposite orientation.
    pub fn flipped(&self) -> Self {
        Self {
            anchor: self.anchor,
            direction: [-self.direction[0], -self.direction[1]],
        }
    }

    /// `cross2(direction, q - anchor)`: positive to the left of the line.
    pub fn side(&self, q: [f64; 2]) -> f64 {
        let [dx, dy] = self.direction;
        dx * (q[1] - self.anchor[1]) - dy * (q[0] - self.anchor[0])
    }
}

/// Output of [`make_mixup_agent`].
#[derive(Debug, Clone)]
pub struct Mixup {
    pub agent: Agent,
    /// Source agent indices, ascending.
    pub pair: (usize, usize),
    pub line: SplitLine,
    /// Points kept from the first and the second pair member.
    pub contributions: (usize, usize),
}

/// Indices of the two agents whose sensor origins are closest in BEV.
pub fn nearest_pair(group: &CooperativeGroup) -> Result<(usize, usize)> {
    let n = group.len();
    if n < 2 {
        return Err(CmagError::GroupTooSmall(n));
    }
    let centers: Vec<[f64; 2]> = group.agents.iter().map(bev_center).collect();
    let mut best = (0, 1);
    let mut best_d = f64::INFINITY;
    for i in 0..n {
        for j in (i + 1)..n {
            let d = (centers[i][0] - centers[j][0]).hypot(centers[i][1] - centers[j][1]);
            // strict comparison keeps the lexicographically first pair on ties
            if d < best_d {
                best_d = d;
                best = (i, j);
            }
        }
    }
    Ok(best)
}

/// Sensor origin projected onto the ground plane.
pub fn bev_center(agent: &Agent) -> [f64; 2] {
    let t = agent.origin();
    [t.x, t.y]
}

fn split_center(agent: &Agent, mode: CenterMode) -> [f64; 2] {
    match mode {
        CenterMode::SensorOrigin => bev_center(agent),
        CenterMode::CloudCentroid => agent
            .cloud
            .bev_centroid()
            .unwrap_or_else(|| bev_center(agent)),
    }
}

/// Perpendicular bisector of `c1 c2`, turned counter-clockwise by `rotation_rad`.
pub fn split_line(c1: [f64; 2], c2: [f64; 2], rotation_rad: f64) -> Result<SplitLine> {
    let (dx, dy) = (c2[0] - c1[0], c2[1] - c1[1]);
    let len = dx.hypot(dy);
    if !(len >= MIN_CENTER_SEPARATION) {
        return Err(CmagError::DegenerateCenters(len));
    }
    let (bx, by) = (-dy / len, dx / len);
    let (s, c) = rotation_rad.sin_cos();
    let anchor = [0.5 * (c1[0] + c2[0]), 0.5 * (c1[1] + c2[1])];
    Ok(SplitLine::new(anchor, [c * bx - s * by, s * bx + c * by])
        .expect("rotated unit vector is nonzero"))
}

/// Keeps the non-negative side of `p1` and the negative side of `p2`.
pub fn cut_and_combine(p1: &PointCloud, p2: &PointCloud, line: &SplitLine) -> PointCloud {
    cut_and_combine_counted(p1, p2, line).0
}

fn cut_and_combine_counted(
    p1: &PointCloud,
    p2: &PointCloud,
    line: &SplitLine,
) -> (PointCloud, (usize, usize)) {
    let mut points: Vec<_> = p1
        .points
        .iter()
        .filter(|p| line.side(p.bev()) >= 0.0)
        .copied()
        .collect();
    let from_first = points.len();
    points.extend(
        p2.points
            .iter()
            .filter(|p| line.side(p.bev()) < 0.0)
            .copied(),
    );
    let from_second = points.len() - from_first;
    (
        PointCloud::new(points, FrameId::ego()),
        (from_first, from_second),
    )
}

fn fresh_id(group: &CooperativeGroup, a: &str, b: &str) -> String {
    let base = format!("mix({a}+{b})");
    let taken = |id: &str| group.agents.iter().any(|x| x.id == id);
    if !taken(&base) {
        return base;
    }
    (2..)
        .map(|k| format!("{base}#{k}"))
        .find(|id| !taken(id))
        .expect("unbounded search")
}

/// Builds the mixup agent from the nearest pair of `group`.
///
/// The new agent takes pose and LiDAR type from whichever source contributed
/// more points (the first on a tie) and is never the ego.
pub fn make_mixup_agent(
    group: &CooperativeGroup,
    cfg: &CmagConfig,
    rng: &mut RngStream,
) -> Result<Mixup> {
    let (i, j) = nearest_pair(group)?;
    let rotation = rng.symmetric(cfg.split_rotation_range_rad);
    let (a, b) = (&group.agents[i], &group.agents[j]);
    let line = split_line(
        split_center(a, cfg.center_mode),
        split_center(b, cfg.center_mode),
        rotation,
    )?;
    let (cloud, contributions) = cut_and_combine_counted(&a.cloud, &b.cloud, &line);
    let donor = if contributions.0 >= contributions.1 { a } else { b };
    let agent = Agent {
        id: fresh_id(group, &a.id, &b.id),
        pose: donor.pose,
        cloud,
        agent_type: donor.agent_type,
        is_ego: false,
    };
    Ok(Mixup {
        agent,
        pair: (i, j),
        line,
        contributions,
    })
}
