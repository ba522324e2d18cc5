//! Probabilistic gate: steers the agent-count distribution of the source
//! domain toward a cross-dataset target by adding, keeping or removing one
//! agent per group.

use std::collections::BTreeMap;

use rand::distr::{weighted::WeightedIndex, Distribution};

use crate::config::KeepMode;
use crate::error::{CmagError, Result};
use crate::model::{validate_group, Agent, CooperativeGroup, CountDistribution};
use crate::par::Execution;
use crate::rng::RngStream;

/// Agent-count frequencies of the four reference datasets (1..=5 agents).
pub mod builtin {
    pub const OPV2V: [(u32, f64); 5] =
        [(1, 0.0787), (2, 0.4846), (3, 0.2657), (4, 0.1620), (5, 0.0090)];
    pub const V2XSET: [(u32, f64); 5] =
        [(1, 0.1275), (2, 0.3900), (3, 0.3315), (4, 0.1341), (5, 0.0169)];
    pub const V2V4REAL: [(u32, f64); 2] = [(1, 0.0980), (2, 0.9020)];
    pub const DAIR_V2X: [(u32, f64); 2] = [(1, 0.0920), (2, 0.9080)];

    /// Unweighted column mean of the four rows above.
    pub const COMPREHENSIVE: [(u32, f64); 5] = [
        (1, 0.09905),
        (2, 0.67115),
        (3, 0.14930),
        (4, 0.074025),
        (5, 0.006475),
    ];
}

/// Named source domains with a built-in count distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dataset {
    Opv2v,
    V2xSet,
    V2v4Real,
    DairV2x,
}

impl Dataset {
    pub const ALL: [Dataset; 4] = [
        Dataset::Opv2v,
        Dataset::V2xSet,
        Dataset::V2v4Real,
        Dataset::DairV2x,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Dataset::Opv2v => "opv2v",
            Dataset::V2xSet => "v2xset",
            Dataset::V2v4Real => "v2v4real",
            Dataset::DairV2x => "dairv2x",
        }
    }

    pub fn from_name(name: &str) -> Option<Dataset> {
        let n = name.to_ascii_lowercase().replace(['-', '_'], "");
        Self::ALL.into_iter().find(|d| d.name() == n)
    }

    pub fn pairs(self) -> &'static [(u32, f64)] {
        match self {
            Dataset::Opv2v => &builtin::OPV2V,
            Dataset::V2xSet => &builtin::V2XSET,
            Dataset::V2v4Real => &builtin::V2V4REAL,
            Dataset::DairV2x => &builtin::DAIR_V2X,
        }
    }

    pub fn distribution(self) -> CountDistribution {
        CountDistribution::from_pairs(self.pairs()).expect("built-in rows are valid pmfs")
    }
}

/// Target distribution built from all four reference datasets.
pub fn builtin_comprehensive() -> CountDistribution {
    let rows: Vec<_> = Dataset::ALL.iter().map(|d| d.distribution()).collect();
    comprehensive_distribution(&rows).expect("four valid rows")
}

/// Empirical pmf of observed group sizes.
pub fn estimate_source_distribution(counts: &[u32]) -> Result<CountDistribution> {
    if counts.is_empty() {
        return Err(CmagError::EmptyInput);
    }
    let mut hist: BTreeMap<u32, usize> = BTreeMap::new();
    for &c in counts {
        *hist.entry(c).or_default() += 1;
    }
    let n = counts.len() as f64;
    CountDistribution::new(hist.into_iter().map(|(k, v)| (k, v as f64 / n)).collect())
}

/// Unweighted mean of several pmfs, renormalized.
pub fn comprehensive_distribution(dists: &[CountDistribution]) -> Result<CountDistribution> {
    let weights = vec![1.0; dists.len()];
    weighted_comprehensive_distribution(dists, &weights)
}

/// Mean of several pmfs weighted, for instance, by dataset frame counts.
pub fn weighted_comprehensive_distribution(
    dists: &[CountDistribution],
    weights: &[f64],
) -> Result<CountDistribution> {
    if dists.is_empty() {
        return Err(CmagError::EmptyInput);
    }
    if weights.len() != dists.len() || weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(CmagError::BadDistribution("one nonnegative weight per distribution".into()));
    }
    let wsum: f64 = weights.iter().sum();
    if !(wsum > 0.0) {
        return Err(CmagError::BadDistribution("weights sum to zero".into()));
    }
    let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
    for (d, w) in dists.iter().zip(weights) {
        for (k, p) in d.iter() {
            *acc.entry(k).or_default() += w * p / wsum;
        }
    }
    let total: f64 = acc.values().sum();
    acc.values_mut().for_each(|p| *p /= total);
    CountDistribution::new(acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GateDecision {
    Plus,
    Keep,
    Minus,
}

impl GateDecision {
    pub fn delta(self) -> i64 {
        match self {
            GateDecision::Plus => 1,
            GateDecision::Keep => 0,
            GateDecision::Minus => -1,
        }
    }
}

/// Raw gate responses and their normalized likelihoods.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateResponses {
    pub r_plus: f64,
    pub r_keep: f64,
    pub r_minus: f64,
    /// `(plus, keep, minus)`, summing to one.
    pub likelihoods: [f64; 3],
}

impl GateResponses {
    pub fn plus(&self) -> f64 {
        self.likelihoods[0]
    }
    pub fn keep(&self) -> f64 {
        self.likelihoods[1]
    }
    pub fn minus(&self) -> f64 {
        self.likelihoods[2]
    }
}

fn response(phi_s: &CountDistribution, phi_c: &CountDistribution, count: u32, epsilon: f64) -> f64 {
    let (s, c) = (phi_s.prob(count), phi_c.prob(count));
    ((c - s) / s.max(epsilon)).max(0.0)
}

/// Responses for a group of `n_s` agents. Counts outside the support
/// (including zero) have probability zero, so their response is zero.
pub fn gate_responses(
    phi_s: &CountDistribution,
    phi_c: &CountDistribution,
    n_s: u32,
    epsilon: f64,
) -> GateResponses {
    let r_plus = response(phi_s, phi_c, n_s + 1, epsilon);
    let r_minus = if n_s >= 1 {
        response(phi_s, phi_c, n_s - 1, epsilon)
    } else {
        0.0
    };
    let r_keep = 1.0;
    let total = r_plus + r_keep + r_minus;
    GateResponses {
        r_plus,
        r_keep,
        r_minus,
        likelihoods: [r_plus / total, r_keep / total, r_minus / total],
    }
}

pub fn sample_gate(responses: &GateResponses, rng: &mut RngStream) -> GateDecision {
    const CHOICES: [GateDecision; 3] = [GateDecision::Plus, GateDecision::Keep, GateDecision::Minus];
    let dist = WeightedIndex::new(responses.likelihoods).expect("keep weight is always positive");
    CHOICES[dist.sample(rng.rng())]
}

/// Applies a gate decision.
///
/// * Plus appends the mixup agent.
/// * Minus drops both pair members and appends the mixup agent, which takes
///   over the ego role and pose if the pair contained the ego.
/// * Keep (in [`KeepMode::Replace`]) puts the mixup agent in place of the
///   non-ego pair member, or of `pair.1` when neither is the ego.
pub fn apply_gate(
    group: &CooperativeGroup,
    mixup: &Agent,
    pair: (usize, usize),
    decision: GateDecision,
    keep_mode: KeepMode,
) -> Result<CooperativeGroup> {
    let n = group.len();
    let (i, j) = pair;
    if i == j || i >= n || j >= n {
        return Err(CmagError::InvalidPair(i, j, n));
    }
    let mut mixup = mixup.clone();
    mixup.is_ego = false;
    let mut agents = group.agents.clone();
    match decision {
        GateDecision::Plus => agents.push(mixup),
        GateDecision::Minus => {
            let ego_in_pair = [i, j].into_iter().find(|&k| agents[k].is_ego);
            if let Some(k) = ego_in_pair {
                mixup.is_ego = true;
                mixup.pose = agents[k].pose;
            }
            let (lo, hi) = (i.min(j), i.max(j));
            agents.remove(hi);
            agents.remove(lo);
            agents.push(mixup);
        }
        GateDecision::Keep => {
            if keep_mode == KeepMode::Replace {
                let target = if agents[j].is_ego { i } else { j };
                agents[target] = mixup;
            }
        }
    }
    let out = CooperativeGroup { agents };
    validate_group(&out)?;
    Ok(out)
}

/// One gate step on a bare group size, as used by the distribution studies.
pub fn gate_step_count(
    count: u32,
    phi_s: &CountDistribution,
    phi_c: &CountDistribution,
    epsilon: f64,
    rng: &mut RngStream,
) -> u32 {
    let responses = gate_responses(phi_s, phi_c, count, epsilon);
    match sample_gate(&responses, rng) {
        GateDecision::Plus => count + 1,
        GateDecision::Keep => count,
        GateDecision::Minus => count.saturating_sub(1),
    }
}

/// Monte-Carlo check of how one gate step moves the count distribution.
#[derive(Debug, Clone)]
pub struct ContractionReport {
    pub samples: usize,
    /// Total variation between the source pmf and the target.
    pub tv_source: f64,
    /// Total variation between the sampled pre-gate counts and the target.
    pub tv_before: f64,
    /// Total variation between the post-gate counts and the target.
    pub tv_after: f64,
    pub before: BTreeMap<u32, f64>,
    pub after: BTreeMap<u32, f64>,
}

impl ContractionReport {
    pub fn contracted(&self) -> bool {
        self.tv_after < self.tv_source
    }
}

const MC_CHUNK: usize = 4096;

fn draw_count(phi: &CountDistribution, rng: &mut RngStream) -> u32 {
    let (counts, probs): (Vec<u32>, Vec<f64>) = phi.iter().unzip();
    counts[WeightedIndex::new(&probs).expect("valid pmf").sample(rng.rng())]
}

/// Draws `samples` group sizes from `phi_s` and applies one gate step to each.
/// Chunks use their own labelled streams, so the result does not depend on
/// `exec`.
pub fn simulate_contraction(
    phi_s: &CountDistribution,
    phi_c: &CountDistribution,
    epsilon: f64,
    samples: usize,
    seed: u64,
    exec: Execution,
) -> ContractionReport {
    let chunks = samples.div_ceil(MC_CHUNK);
    let parts = exec.map_tasks(chunks, |k| {
        let mut rng = RngStream::new(seed, &format!("gate-mc/{k}"));
        let len = MC_CHUNK.min(samples - k * MC_CHUNK);
        let mut before = BTreeMap::<u32, usize>::new();
        let mut after = BTreeMap::<u32, usize>::new();
        for _ in 0..len {
            let n = draw_count(phi_s, &mut rng);
            *before.entry(n).or_default() += 1;
            *after
                .entry(gate_step_count(n, phi_s, phi_c, epsilon, &mut rng))
                .or_default() += 1;
        }
        (before, after)
    });
    let mut before = BTreeMap::<u32, usize>::new();
    let mut after = BTreeMap::<u32, usize>::new();
    for (b, a) in parts {
        b.into_iter().for_each(|(k, v)| *before.entry(k).or_default() += v);
        a.into_iter().for_each(|(k, v)| *after.entry(k).or_default() += v);
    }
    let norm = |m: BTreeMap<u32, usize>| -> BTreeMap<u32, f64> {
        m.into_iter()
            .map(|(k, v)| (k, v as f64 / samples as f64))
            .collect()
    };
    let (before, after) = (norm(before), norm(after));
    let target: BTreeMap<u32, f64> = phi_c.iter().collect();
    ContractionReport {
        samples,
        tv_source: phi_s.total_variation(phi_c),
        tv_before: crate::model::total_variation(&before, &target),
        tv_after: crate::model::total_variation(&after, &target),
        before,
        after,
    }
}
