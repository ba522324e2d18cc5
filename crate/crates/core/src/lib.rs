//! Cooperative mixup augmentation for multi-agent LiDAR point clouds.
//!
//! A cooperative group (agents with poses and ego-frame clouds) goes through:
//!
//! 1. [`mixup`]: the two nearest agents are cut along a randomly rotated
//!    split line and recombined into a mixup agent;
//! 2. [`rangeview`]: the mixup cloud is projected to a range image, its beam
//!    count resampled, and unprojected;
//! 3. [`setupaug`]: a small yaw, scale and translation perturbation;
//! 4. [`gate`]: a probabilistic Plus/Keep/Minus gate that moves the group-size
//!    distribution toward a cross-dataset target.
//!
//! [`pipeline`] chains these steps and evaluates feature consistency on
//! occupancy grids, [`sim`] generates synthetic scenes, and [`io`] / [`cli`]
//! provide the file formats and the `cmag` binary.

pub mod cli;
pub mod config;
pub mod error;
pub mod gate;
pub mod io;
pub mod mixup;
pub mod model;
pub mod par;
pub mod pipeline;
pub mod rangeview;
pub mod rng;
pub mod setupaug;
pub mod sim;

pub use config::{CenterMode, CmagConfig, KeepMode};
pub use error::{CmagError, Result};
pub use gate::{GateDecision, GateResponses};
pub use model::{
    transform_cloud, validate_group, Agent, AgentType, CooperativeGroup, CountDistribution,
    FrameId, Point, PointCloud, RigidTransform,
};
pub use par::Execution;
pub use pipeline::{cmag, CmagOutcome, GridSpec, OccupancyGrid};
pub use rangeview::RangeImage;
pub use rng::RngStream;
