//! Augmentation settings shared by every pipeline stage.

use std::f64::consts::FRAC_PI_4;

use crate::error::{CmagError, Result};
use crate::par::Execution;
use crate::pipeline::GridSpec;

/// Which BEV point stands for an agent when building the split line.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum CenterMode {
    #[default]
    SensorOrigin,
    /// Mean BEV position of the agent's cloud; falls back to the sensor
    /// origin for an empty cloud.
    CloudCentroid,
}

/// What the Keep gate does with the mixup agent.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum KeepMode {
    /// Swap one pair member for the mixup agent; count unchanged.
    #[default]
    Replace,
    /// Leave the group as it was.
    Discard,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CmagConfig {
    /// Split-vector rotation is drawn from `±split_rotation_range_rad`.
    pub split_rotation_range_rad: f64,
    pub center_mode: CenterMode,
    /// Candidate beam counts for density augmentation.
    pub pa_density_targets: Vec<usize>,
    /// Azimuth bins of the range image used for density augmentation.
    pub range_image_width: usize,
    pub pa_rotation_range_rad: f64,
    pub pa_scale_range: (f64, f64),
    pub pa_translation_bound_m: f64,
    pub gate_epsilon: f64,
    pub keep_mode: KeepMode,
    pub w1: f64,
    pub w2: f64,
    pub grid: GridSpec,
    pub seed: u64,
    pub execution: Execution,
}

impl Default for CmagConfig {
    fn default() -> Self {
        Self {
            split_rotation_range_rad: FRAC_PI_4,
            center_mode: CenterMode::default(),
            pa_density_targets: vec![16, 32, 40, 64, 128],
            range_image_width: 2048,
            pa_rotation_range_rad: 0.0175,
            pa_scale_range: (0.98, 1.02),
            pa_translation_bound_m: 0.05,
            gate_epsilon: 1e-6,
            keep_mode: KeepMode::default(),
            w1: 1.0,
            w2: 1.0,
            grid: GridSpec::default(),
            seed: 0,
            execution: Execution::default(),
        }
    }
}

impl CmagConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("split_rotation_range_rad", self.split_rotation_range_rad),
            ("pa_rotation_range_rad", self.pa_rotation_range_rad),
            ("pa_translation_bound_m", self.pa_translation_bound_m),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(CmagError::BadConfig(format!("{name} = {v}")));
            }
        }
        let (lo, hi) = self.pa_scale_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(CmagError::BadConfig(format!("pa_scale_range [{lo}, {hi}]")));
        }
        if !(self.gate_epsilon > 0.0) {
            return Err(CmagError::BadConfig(format!(
                "gate_epsilon = {}",
                self.gate_epsilon
            )));
        }
        if self.pa_density_targets.is_empty() || self.pa_density_targets.contains(&0) {
            return Err(CmagError::BadConfig(
                "pa_density_targets must be nonempty positive beam counts".into(),
            ));
        }
        if self.range_image_width == 0 {
            return Err(CmagError::BadConfig("range_image_width = 0".into()));
        }
        self.grid.validate()
    }
}
