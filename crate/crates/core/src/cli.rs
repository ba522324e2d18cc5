//! Command-line front end. Exit codes: 0 success, 1 usage or validation
//! error, 2 I/O error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::{CmagConfig, KeepMode};
use crate::error::{CmagError, Result};
use crate::gate::{builtin_comprehensive, gate_responses, simulate_contraction, Dataset, GateDecision};
use crate::io;
use crate::model::{AgentType, CountDistribution};
use crate::par::Execution;
use crate::pipeline::{cfc_between, cmag, group_stream};
use crate::rangeview::project;
use crate::rng::RngStream;
use crate::sim::{make_group_with, make_scene, SimOptions, DEFAULT_AZIMUTH_STEPS};

#[derive(Debug, Parser)]
#[command(name = "cmag", version, about = "Cooperative mixup augmentation for multi-agent LiDAR")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a cooperative scene and write its manifest and clouds.
    Simulate(SimulateArgs),
    /// Run one augmentation step on a manifest.
    Augment(AugmentArgs),
    /// Print gate responses and a Monte-Carlo contraction study.
    GateStats(GateStatsArgs),
    /// Write the range image of a cloud as a 16-bit PGM.
    Project(ProjectArgs),
    /// Print the feature-consistency L1 value for a manifest.
    CfcCheck(CfcArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SourceDist {
    Opv2v,
    V2xset,
    V2v4real,
    Dairv2x,
    File,
}

#[derive(Debug, Args)]
struct DistArgs {
    /// Source-domain agent-count distribution.
    #[arg(long = "source-dist", value_enum, default_value = "opv2v")]
    source: SourceDist,
    /// Distribution table used with `--source-dist file`.
    #[arg(long = "dist-file")]
    dist_file: Option<PathBuf>,
}

impl DistArgs {
    fn load(&self) -> Result<CountDistribution> {
        let named = |d: Dataset| Ok(d.distribution());
        match self.source {
            SourceDist::Opv2v => named(Dataset::Opv2v),
            SourceDist::V2xset => named(Dataset::V2xSet),
            SourceDist::V2v4real => named(Dataset::V2v4Real),
            SourceDist::Dairv2x => named(Dataset::DairV2x),
            SourceDist::File => match &self.dist_file {
                Some(p) => io::load_count_distribution(p),
                None => Err(CmagError::BadConfig("--source-dist file needs --dist-file".into())),
            },
        }
    }
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    agents: usize,
    /// Comma-separated agent type letters; a single letter applies to all.
    #[arg(long, default_value = "A")]
    types: String,
    #[arg(long, default_value_t = 10)]
    boxes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    ego: usize,
    #[arg(long = "azimuth-steps", default_value_t = DEFAULT_AZIMUTH_STEPS)]
    azimuth_steps: usize,
    #[arg(long)]
    sequential: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KeepArg {
    Replace,
    Discard,
}

#[derive(Debug, Args)]
struct AugmentArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[command(flatten)]
    dist: DistArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "keep-mode", value_enum, default_value = "replace")]
    keep_mode: KeepArg,
    #[arg(long)]
    sequential: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct GateStatsArgs {
    #[command(flatten)]
    dist: DistArgs,
    #[arg(long, default_value_t = 100_000)]
    iterations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
    #[arg(long)]
    sequential: bool,
}

#[derive(Debug, Args)]
struct ProjectArgs {
    #[arg(long)]
    cloud: PathBuf,
    #[arg(long = "type", default_value = "A")]
    agent_type: String,
    #[arg(long, default_value_t = 2048)]
    width: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CfcArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[command(flatten)]
    dist: DistArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Compare the original group with itself instead of its augmentation.
    #[arg(long = "no-aug")]
    no_aug: bool,
}

fn execution(sequential: bool) -> Execution {
    if sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

fn parse_types(spec: &str, n: usize) -> Result<Vec<AgentType>> {
    let types = spec
        .split(',')
        .map(|s| {
            AgentType::by_letter(s).ok_or_else(|| CmagError::BadConfig(format!("unknown agent type {s:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    match types.len() {
        1 => Ok(vec![types[0]; n]),
        k if k == n => Ok(types),
        k => Err(CmagError::BadConfig(format!("{k} types given for {n} agents"))),
    }
}

fn simulate(a: &SimulateArgs) -> Result<String> {
    let types = parse_types(&a.types, a.agents)?;
    let scene = make_scene(a.boxes, a.agents, &types, &mut RngStream::new(a.seed, "simulate/scene"))?;
    let opts = SimOptions {
        azimuth_steps: a.azimuth_steps,
        execution: execution(a.sequential),
    };
    let group = make_group_with(&scene, a.ego, &mut RngStream::new(a.seed, "simulate/lidar"), &opts)?;
    let path = io::write_scene_group(&a.out, &scene, a.ego, &group)?;
    check_written(&path)?;
    let points: usize = group.agents.iter().map(|g| g.cloud.len()).sum();
    Ok(format!("wrote {} ({} agents, {points} points)\n", path.display(), group.len()))
}

#[derive(Serialize)]
struct StepRecord {
    seed: u64,
    input_agents: usize,
    output_agents: usize,
    decision: Option<&'static str>,
    pair: Option<(usize, usize)>,
    density_target: Option<usize>,
    setup_rotation_rad: Option<f64>,
    setup_scale: Option<f64>,
    setup_translation_m: Option<[f64; 3]>,
    likelihoods: Option<[f64; 3]>,
}

fn decision_name(d: GateDecision) -> &'static str {
    match d {
        GateDecision::Plus => "plus",
        GateDecision::Keep => "keep",
        GateDecision::Minus => "minus",
    }
}

fn check_written(manifest: &Path) -> Result<()> {
    io::load_group(manifest).map(|_| ())
}

fn augment(a: &AugmentArgs) -> Result<String> {
    let (manifest, group) = io::load_group(&a.manifest)?;
    let phi_s = a.dist.load()?;
    let cfg = CmagConfig {
        seed: a.seed,
        keep_mode: match a.keep_mode {
            KeepArg::Replace => KeepMode::Replace,
            KeepArg::Discard => KeepMode::Discard,
        },
        execution: execution(a.sequential),
        ..CmagConfig::default()
    };
    let outcome = cmag(&group, &phi_s, &builtin_comprehensive(), &cfg, &mut group_stream(a.seed, 0))?;
    let ego_pose = manifest.ego_world_pose.as_ref().map(|p| p.to_transform()).transpose()?;
    let path = io::write_group(&a.out, &outcome.group, manifest.ground_z, &manifest.boxes(), ego_pose.as_ref())?;
    check_written(&path)?;
    let step = outcome.step.as_ref();
    let record = StepRecord {
        seed: a.seed,
        input_agents: group.len(),
        output_agents: outcome.group.len(),
        decision: step.map(|s| decision_name(s.decision)),
        pair: step.map(|s| s.pair),
        density_target: step.map(|s| s.density_target),
        setup_rotation_rad: step.map(|s| s.setup.rotation_rad),
        setup_scale: step.map(|s| s.setup.scale),
        setup_translation_m: step.map(|s| s.setup.translation_m),
        likelihoods: step.map(|s| s.responses.likelihoods),
    };
    let rec_path = a.out.join("step.json");
    let mut text = serde_json::to_string_pretty(&record).expect("record serializes");
    text.push('\n');
    std::fs::write(&rec_path, text).map_err(|e| CmagError::io(&rec_path, e))?;
    Ok(format!(
        "wrote {} ({} -> {} agents, gate {})\n",
        path.display(),
        group.len(),
        outcome.group.len(),
        record.decision.unwrap_or("none")
    ))
}

fn gate_stats(a: &GateStatsArgs) -> Result<String> {
    if !(a.epsilon > 0.0) {
        return Err(CmagError::BadConfig(format!("epsilon = {}", a.epsilon)));
    }
    if a.iterations == 0 {
        return Err(CmagError::BadConfig("--iterations must be positive".into()));
    }
    let phi_s = a.dist.load()?;
    let phi_c = builtin_comprehensive();
    let mut out = String::new();
    let max = phi_s.max_count().max(phi_c.max_count());
    writeln!(
        out,
        "{:>5} {:>9} {:>9} {:>12} {:>12} {:>9} {:>9} {:>9}",
        "count", "phi_s", "phi_c", "r_plus", "r_minus", "p_plus", "p_keep", "p_minus"
    )
    .unwrap();
    for n in 1..=max {
        let r = gate_responses(&phi_s, &phi_c, n, a.epsilon);
        writeln!(
            out,
            "{:>5} {:>9.6} {:>9.6} {:>12.6} {:>12.6} {:>9.6} {:>9.6} {:>9.6}",
            n,
            phi_s.prob(n),
            phi_c.prob(n),
            r.r_plus,
            r.r_minus,
            r.plus(),
            r.keep(),
            r.minus()
        )
        .unwrap();
    }
    let rep = simulate_contraction(&phi_s, &phi_c, a.epsilon, a.iterations, a.seed, execution(a.sequential));
    writeln!(out, "samples {}", rep.samples).unwrap();
    writeln!(out, "tv_source_to_target {:.6}", rep.tv_source).unwrap();
    writeln!(out, "tv_before_to_target {:.6}", rep.tv_before).unwrap();
    writeln!(out, "tv_after_to_target {:.6}", rep.tv_after).unwrap();
    writeln!(out, "contracted {}", if rep.contracted() { "yes" } else { "no" }).unwrap();
    Ok(out)
}

fn project_cmd(a: &ProjectArgs) -> Result<String> {
    let t = AgentType::by_letter(&a.agent_type)
        .ok_or_else(|| CmagError::BadConfig(format!("unknown agent type {:?}", a.agent_type)))?;
    let cloud = io::load_cloud(&a.cloud)?;
    let img = project(&cloud, t.fov_deg, t.beams, a.width)?;
    io::save_pgm(&a.out, &img)?;
    Ok(format!(
        "wrote {} ({}x{}, {} returns)\n",
        a.out.display(),
        img.width(),
        img.height(),
        img.valid_count()
    ))
}

fn cfc_check(a: &CfcArgs) -> Result<String> {
    let (_, group) = io::load_group(&a.manifest)?;
    let cfg = CmagConfig::with_seed(a.seed);
    let generalized = if a.no_aug {
        group.clone()
    } else {
        let phi_s = a.dist.load()?;
        cmag(&group, &phi_s, &builtin_comprehensive(), &cfg, &mut group_stream(a.seed, 0))?.group
    };
    let v = cfc_between(&generalized, &group, &cfg.grid)?;
    Ok(format!("{v:?}\n"))
}

fn dispatch(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Augment(a) => augment(a),
        Command::GateStats(a) => gate_stats(a),
        Command::Project(a) => project_cmd(a),
        Command::CfcCheck(a) => cfc_check(a),
    }
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_io() {
                2
            } else {
                1
            }
        }
    }
}
