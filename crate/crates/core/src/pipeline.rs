//! Per-iteration orchestration: mixup, point augmentation and gating, plus the
//! occupancy-grid surrogate used to evaluate feature consistency.

use crate::config::CmagConfig;
use crate::error::{CmagError, Result};
use crate::gate::{apply_gate, gate_responses, sample_gate, GateDecision, GateResponses};
use crate::mixup::make_mixup_agent;
use crate::model::{validate_group, CooperativeGroup, CountDistribution, FrameId, PointCloud};
use crate::rangeview::{density_augment_to, pick_density_target};
use crate::rng::RngStream;
use crate::setupaug::{apply_setup_aug, sample_setup_params, SetupAugParams};

/// BEV rectangle and cell size of an occupancy grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub cell_m: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            x_min: -70.4,
            x_max: 70.4,
            y_min: -40.0,
            y_max: 40.0,
            cell_m: 0.4,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = self.x_min < self.x_max
            && self.y_min < self.y_max
            && self.cell_m > 0.0
            && [self.x_min, self.x_max, self.y_min, self.y_max, self.cell_m]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(CmagError::BadConfig(format!("grid {self:?}")))
        }
    }

    /// `(nx, ny)`, each `ceil(extent / cell)`.
    pub fn dims(&self) -> (usize, usize) {
        let nx = ((self.x_max - self.x_min) / self.cell_m).ceil() as usize;
        let ny = ((self.y_max - self.y_min) / self.cell_m).ceil() as usize;
        (nx, ny)
    }

    fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        if !(x >= self.x_min && x < self.x_max && y >= self.y_min && y < self.y_max) {
            return None;
        }
        let (nx, ny) = self.dims();
        let ix = ((x - self.x_min) / self.cell_m).floor() as usize;
        let iy = ((y - self.y_min) / self.cell_m).floor() as usize;
        Some((ix.min(nx - 1), iy.min(ny - 1)))
    }
}

/// Binary BEV occupancy, x-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OccupancyGrid {
    spec: GridSpecKey,
    nx: usize,
    ny: usize,
    cells: Vec<u8>,
}

/// Bit pattern of a [`GridSpec`], so grids can be compared exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct GridSpecKey([u64; 5]);

impl From<&GridSpec> for GridSpecKey {
    fn from(s: &GridSpec) -> Self {
        GridSpecKey([s.x_min, s.x_max, s.y_min, s.y_max, s.cell_m].map(f64::to_bits))
    }
}

impl OccupancyGrid {
    pub fn zeros(spec: &GridSpec) -> Self {
        let (nx, ny) = spec.dims();
        Self {
            spec: spec.into(),
            nx,
            ny,
            cells: vec![0; nx * ny],
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn get(&self, ix: usize, iy: usize) -> u8 {
        self.cells[ix * self.ny + iy]
    }

    pub fn set(&mut self, ix: usize, iy: usize) {
        self.cells[ix * self.ny + iy] = 1;
    }

    pub fn occupied(&self) -> usize {
        self.cells.iter().filter(|&&c| c != 0).count()
    }

    fn same_layout(&self, other: &OccupancyGrid) -> bool {
        self.spec == other.spec && self.nx == other.nx && self.ny == other.ny
    }
}

/// A cell is set when at least one point falls in `[lo, lo + cell)` on both
/// axes; points outside the extent are ignored.
pub fn occupancy(cloud: &PointCloud, spec: &GridSpec) -> Result<OccupancyGrid> {
    spec.validate()?;
    let mut g = OccupancyGrid::zeros(spec);
    for p in &cloud.points {
        if let Some((ix, iy)) = spec.cell_of(p.x, p.y) {
            g.set(ix, iy);
        }
    }
    Ok(g)
}

/// Elementwise maximum.
pub fn fuse_grids(grids: &[OccupancyGrid]) -> Result<OccupancyGrid> {
    let (first, rest) = grids.split_first().ok_or(CmagError::EmptyInput)?;
    let mut out = first.clone();
    for g in rest {
        if !g.same_layout(&out) {
            return Err(CmagError::MismatchedGrids);
        }
        out.cells
            .iter_mut()
            .zip(&g.cells)
            .for_each(|(a, &b)| *a = (*a).max(b));
    }
    Ok(out)
}

/// L1 distance between two grids.
pub fn cfc_l1(fused_generalized: &OccupancyGrid, fused_early: &OccupancyGrid) -> Result<f64> {
    if !fused_generalized.same_layout(fused_early) {
        return Err(CmagError::MismatchedGrids);
    }
    let diff: u64 = fused_generalized
        .cells
        .iter()
        .zip(&fused_early.cells)
        .map(|(&a, &b)| u64::from(a.abs_diff(b)))
        .sum();
    Ok(diff as f64)
}

/// Concatenates every agent's cloud in agent order.
pub fn early_fuse(group: &CooperativeGroup) -> PointCloud {
    let points = group
        .agents
        .iter()
        .flat_map(|a| a.cloud.points.iter().copied())
        .collect();
    PointCloud::new(points, FrameId::ego())
}

/// Max-fused per-agent occupancy of `generalized` against the occupancy of
/// the early-fused `original` group.
pub fn cfc_between(
    generalized: &CooperativeGroup,
    original: &CooperativeGroup,
    spec: &GridSpec,
) -> Result<f64> {
    let per_agent = generalized
        .agents
        .iter()
        .map(|a| occupancy(&a.cloud, spec))
        .collect::<Result<Vec<_>>>()?;
    let fused = fuse_grids(&per_agent)?;
    let early = occupancy(&early_fuse(original), spec)?;
    cfc_l1(&fused, &early)
}

pub fn total_loss(det_loss: f64, cfc_loss: f64, w1: f64, w2: f64) -> f64 {
    w1 * det_loss + w2 * cfc_loss
}

/// What one CMAG step did to a group.
#[derive(Debug, Clone)]
pub struct CmagOutcome {
    pub group: CooperativeGroup,
    /// `None` when the input had a single agent and was returned unchanged.
    pub step: Option<CmagStep>,
}

#[derive(Debug, Clone)]
pub struct CmagStep {
    pub pair: (usize, usize),
    pub density_target: usize,
    pub setup: SetupAugParams,
    pub responses: GateResponses,
    pub decision: GateDecision,
}

/// Runs mixup, density and setup augmentation, and the probabilistic gate.
pub fn cmag(
    group: &CooperativeGroup,
    phi_s: &CountDistribution,
    phi_c: &CountDistribution,
    cfg: &CmagConfig,
    rng: &mut RngStream,
) -> Result<CmagOutcome> {
    run(group, phi_s, phi_c, cfg, rng, None)
}

/// Same as [`cmag`] with the gate decision fixed in advance.
pub fn cmag_forced(
    group: &CooperativeGroup,
    phi_s: &CountDistribution,
    phi_c: &CountDistribution,
    cfg: &CmagConfig,
    rng: &mut RngStream,
    decision: GateDecision,
) -> Result<CmagOutcome> {
    run(group, phi_s, phi_c, cfg, rng, Some(decision))
}

fn run(
    group: &CooperativeGroup,
    phi_s: &CountDistribution,
    phi_c: &CountDistribution,
    cfg: &CmagConfig,
    rng: &mut RngStream,
    forced: Option<GateDecision>,
) -> Result<CmagOutcome> {
    cfg.validate()?;
    validate_group(group)?;
    if group.len() == 1 {
        return Ok(CmagOutcome {
            group: group.clone(),
            step: None,
        });
    }
    let mix = make_mixup_agent(group, cfg, rng)?;
    let mut agent = mix.agent;

    let density_target = pick_density_target(cfg, rng)?;
    let dense = density_augment_to(
        &agent.cloud,
        &agent.agent_type,
        density_target,
        cfg.range_image_width,
    )?;
    let setup = sample_setup_params(cfg, rng);
    agent.cloud = apply_setup_aug(&dense, &setup);

    let n = u32::try_from(group.len()).unwrap_or(u32::MAX);
    let responses = gate_responses(phi_s, phi_c, n, cfg.gate_epsilon);
    let decision = match forced {
        Some(d) => d,
        None => sample_gate(&responses, rng),
    };

    // apply_gate replaces pair.1 when neither member is the ego; pick it at random
    let (i, j) = mix.pair;
    let pair = if rng.coin() { (i, j) } else { (j, i) };
    let out = apply_gate(group, &agent, pair, decision, cfg.keep_mode)?;
    Ok(CmagOutcome {
        group: out,
        step: Some(CmagStep {
            pair: mix.pair,
            density_target,
            setup,
            responses,
            decision,
        }),
    })
}

/// Runs [`cmag`] over many groups, group `k` drawing from stream
/// `"cmag/group/k"`, so the result is the same for either execution policy.
pub fn cmag_batch(
    groups: &[CooperativeGroup],
    phi_s: &CountDistribution,
    phi_c: &CountDistribution,
    cfg: &CmagConfig,
) -> Result<Vec<CmagOutcome>> {
    cfg.execution
        .map_tasks(groups.len(), |k| {
            let mut rng = group_stream(cfg.seed, k);
            cmag(&groups[k], phi_s, phi_c, cfg, &mut rng)
        })
        .into_iter()
        .collect()
}

pub fn group_stream(seed: u64, index: usize) -> RngStream {
    RngStream::new(seed, &format!("cmag/group/{index}"))
}
