use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use thiserror::Error;
use vloc_core::geometry::{CameraIntrinsics, DepthRange, Pose};
use vloc_core::imaging::{read_pgm, write_pgm, ImageIoError};
use vloc_core::mapgraph::{self, BuildParams, MapError, SegmentFiles};
use vloc_core::matching::{ClassicalMatcher, MatchError, Matcher, OracleMatcher};
use vloc_core::nav::{self, NavConfig, NavError, NavMatcher, PrimitiveSet};
use vloc_core::pipeline::{replay, Event, Pipeline, PipelineConfig, PipelineError, FRAME_LOG_HEADER};
use vloc_core::relocal::{self, BenchMatcher, DatasetError, PnpParams, RelocGenParams, METRICS_CSV_HEADER};
use vloc_core::simworld::{self, FrameTrigger, GridWorld, OdomNoise, Preset, Rates, SegmentConfig, SimError};
use vloc_core::textio::{fmt_sig, parse_f64_fields, FormatError};
use vloc_core::trajectory::{self, TrajectoryError};

use crate::{LocalizerArgs, MatcherArg, NoiseArg, OracleArgs, PresetArg, RouteArg};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Nav(#[from] NavError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error(transparent)]
    Image(#[from] ImageIoError),
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error("{0}")]
    Format(FormatError),
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Usage(String),
}

pub enum Outcome {
    Done,
    /// Ran to completion but did not achieve the goal (NoPath, Timeout).
    PlannedFailure(String),
}

fn io(path: &Path, source: std::io::Error) -> CliError {
    CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| io(path, e))
}

fn read_world(path: &Path) -> Result<GridWorld, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io(path, e))?;
    Ok(GridWorld::from_text(&text, path)?)
}

fn preset(p: PresetArg) -> Preset {
    match p {
        PresetArg::Corridor => Preset::Corridor,
        PresetArg::Rooms => Preset::Rooms,
        PresetArg::Campus => Preset::Campus,
    }
}

fn noise(n: NoiseArg) -> OdomNoise {
    match n {
        NoiseArg::Zero => OdomNoise::zero(),
        NoiseArg::Drifting => OdomNoise::drifting(),
    }
}

fn waypoints_csv(points: &[(f64, f64)]) -> String {
    let mut s = String::from("x,y\n");
    for (x, y) in points {
        let _ = writeln!(s, "{},{}", fmt_sig(*x, 17), fmt_sig(*y, 17));
    }
    s
}

fn read_waypoints(path: &Path) -> Result<Vec<(f64, f64)>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "x,y" => {}
        _ => return Err(CliError::Format(FormatError::at_line(path, 1, "expected header x,y"))),
    }
    let mut out = Vec::new();
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f = parse_f64_fields(line, ',').map_err(|m| CliError::Format(FormatError::at_line(path, n + 1, m)))?;
        if f.len() != 2 {
            return Err(CliError::Format(FormatError::at_line(path, n + 1, "expected x,y")));
        }
        out.push((f[0], f[1]));
    }
    if out.is_empty() {
        return Err(CliError::Format(FormatError::whole(path, "no waypoints")));
    }
    Ok(out)
}

pub fn gen_world(out: &Path, p: PresetArg, seed: u64, waypoints_out: Option<&Path>, route: RouteArg) -> Result<Outcome, CliError> {
    let preset = preset(p);
    let world = preset.build(seed);
    write_file(out, &world.to_text())?;
    if let Some(wp) = waypoints_out {
        let points = match route {
            RouteArg::Mapping => preset.mapping_route(),
            RouteArg::LongLoop => preset
                .long_loop()
                .ok_or_else(|| CliError::Usage(format!("preset {} has no long loop", preset.name())))?,
        };
        write_file(wp, &waypoints_csv(&points))?;
    }
    Ok(Outcome::Done)
}

#[allow(clippy::too_many_arguments)]
pub fn gen_segment(
    world: &Path,
    waypoints: &Path,
    out: &Path,
    seed: u64,
    odom_noise: NoiseArg,
    camera_rate: f64,
    frame_distance: Option<f64>,
    odom_rate: f64,
) -> Result<Outcome, CliError> {
    let world = read_world(world)?;
    let points = read_waypoints(waypoints)?;
    let camera = match frame_distance {
        Some(d) if d > 0.0 => FrameTrigger::Distance(d),
        Some(d) => return Err(CliError::Usage(format!("--frame-distance must be positive, got {d}"))),
        None if camera_rate > 0.0 => FrameTrigger::Rate(camera_rate),
        None => return Err(CliError::Usage(format!("--camera-rate must be positive, got {camera_rate}"))),
    };
    if !(odom_rate > 0.0) {
        return Err(CliError::Usage(format!("--odom-rate must be positive, got {odom_rate}")));
    }
    let config = SegmentConfig {
        rates: Rates { odom_hz: odom_rate, camera },
        noise: noise(odom_noise),
        ..SegmentConfig::default()
    };
    let run = simworld::generate_segment(&world, &points, &CameraIntrinsics::default_sim(), &config, seed)?;
    info!("{} frames, {} odometry ticks", run.segment.frames.len(), run.odometry.len());
    mapgraph::save_segment(
        &SegmentFiles {
            segment: run.segment,
            odometry: Some(run.odometry),
            ground_truth: Some(run.ground_truth),
        },
        out,
    )?;
    Ok(Outcome::Done)
}

pub struct BuildArgs {
    pub input: PathBuf,
    pub keyframe_budget: usize,
    pub grid_res: f64,
    pub out: PathBuf,
    pub cng_from_cvg: bool,
    pub world: Option<PathBuf>,
    pub matcher: Option<MatcherArg>,
    pub covis_threshold: usize,
    pub nav_radius: f64,
    pub store_depth: bool,
}

pub fn build_map(a: BuildArgs) -> Result<Outcome, CliError> {
    let files = mapgraph::load_segment(&a.input)?;
    let seg = &files.segment;
    let world = a.world.as_deref().map(read_world).transpose()?;
    let annotated = seg.frames.iter().all(|f| f.observation.landmarks.is_some());
    let mut matcher: Box<dyn Matcher> = match a.matcher {
        Some(MatcherArg::Classical) => Box::new(ClassicalMatcher::default()),
        Some(MatcherArg::Oracle) if !annotated => {
            return Err(CliError::Usage("the oracle matcher needs landmark annotations on every frame".into()))
        }
        Some(MatcherArg::Oracle) => Box::new(OracleMatcher::exact()),
        Some(MatcherArg::Ingest) => return Err(CliError::Usage("build-map cannot ingest matches".into())),
        None if annotated => Box::new(OracleMatcher::exact()),
        None => Box::new(ClassicalMatcher::default()),
    };
    let kf = mapgraph::select_keyframes(seg, a.keyframe_budget, a.grid_res, &DepthRange::default())?;
    info!("selected {} keyframes of {}", kf.len(), seg.frames.len());
    let params = BuildParams {
        covis_threshold: a.covis_threshold,
        nav_radius: a.nav_radius,
        cng_from_cvg: a.cng_from_cvg,
        grid_res: a.grid_res,
        store_depth: a.store_depth,
        ..BuildParams::default()
    };
    let report = mapgraph::build_map(seg, &kf, &params, matcher.as_mut(), world.as_ref())?;
    if let Some(d) = &report.disconnected {
        warn!("connectivity graph has {} components", d.components.len());
    }
    let storage = mapgraph::save_map(&report.map, &a.out)?;
    println!(
        "nodes={} cng_edges={} cvg_edges={} storage_bytes={}",
        report.map.len(),
        report.map.cng_edges.len(),
        report.map.cvg_edges.len(),
        storage.total()
    );
    Ok(Outcome::Done)
}

fn pipeline_config(l: &LocalizerArgs) -> PipelineConfig {
    let mut c = PipelineConfig {
        gl_min_sim: l.gl_min_sim,
        max_failures: l.max_failures,
        reference_tries: l.reference_tries,
        fix_gate: l.fix_gate,
        ..PipelineConfig::default()
    };
    c.pnp.reproj_thresh = l.reproj_thresh;
    c.pnp.min_inliers = l.min_inliers;
    c.fusion.window = l.window;
    c
}

#[allow(clippy::too_many_arguments)]
pub fn localize(
    map: &Path,
    seq: &Path,
    out: &Path,
    log: Option<&Path>,
    matcher: MatcherArg,
    oracle: &OracleArgs,
    localizer: &LocalizerArgs,
    seed: u64,
) -> Result<Outcome, CliError> {
    let map = mapgraph::load_map(map)?;
    let files = mapgraph::load_segment(seq)?;
    let k = files.segment.intrinsics;
    let mut m: Box<dyn Matcher> = match matcher {
        MatcherArg::Classical => Box::new(ClassicalMatcher::default()),
        MatcherArg::Oracle => Box::new(OracleMatcher::new(oracle.outlier_rate, oracle.noise_px, seed)?),
        MatcherArg::Ingest => return Err(CliError::Usage("localize supports classical and oracle matchers".into())),
    };
    let mut events: Vec<Event> = files.odometry.iter().flatten().map(|(t, d)| Event::Odometry(*t, *d)).collect();
    events.extend(files.segment.frames.iter().map(|f| Event::Frame(f.timestamp, &f.observation)));
    let mut pipeline = Pipeline::new(pipeline_config(localizer));
    let result = replay(&mut pipeline, events, &k, &map, m.as_mut())?;
    trajectory::write_trajectory(out, &result.trajectory)?;
    if let Some(log) = log {
        let mut text = String::from(FRAME_LOG_HEADER);
        text.push('\n');
        for f in &result.frames {
            text.push_str(&f.csv_row());
            text.push('\n');
        }
        write_file(log, &text)?;
    }
    let ok = result.frames.iter().filter(|f| f.status.as_str() == "Success").count();
    println!("frames={} fixes={} poses={}", result.frames.len(), ok, result.trajectory.len());
    Ok(Outcome::Done)
}

pub struct NavigateArgs {
    pub world: PathBuf,
    pub map: PathBuf,
    pub goal_images: Vec<PathBuf>,
    pub seed: u64,
    pub report: PathBuf,
    pub trajectory: Option<PathBuf>,
    pub estimated: Option<PathBuf>,
    pub start: Option<String>,
    pub matcher: MatcherArg,
    pub oracle: OracleArgs,
    pub localizer: LocalizerArgs,
    pub odom_noise: NoiseArg,
    pub switch_radius: f64,
    pub goal_radius: f64,
    pub arrival_radius: f64,
    pub robot_radius: f64,
    pub curvatures: Vec<f64>,
    pub arc_length: f64,
    pub lambda: f64,
    pub timeout: f64,
}

fn parse_start(s: &str, camera_height: f64) -> Result<Pose, CliError> {
    let f = parse_f64_fields(s, ',').map_err(CliError::Usage)?;
    match f[..] {
        [x, y, yaw] => Ok(Pose::planar(x, y, camera_height, yaw)),
        _ => Err(CliError::Usage(format!("--start expects x,y,yaw, got {s:?}"))),
    }
}

pub fn navigate(a: NavigateArgs) -> Result<Outcome, CliError> {
    let world = read_world(&a.world)?;
    let map = mapgraph::load_map(&a.map)?;
    let goals = a.goal_images.iter().map(|p| read_pgm(p)).collect::<Result<Vec<_>, _>>()?;
    let mut config = NavConfig {
        switch_radius: a.switch_radius,
        goal_radius: a.goal_radius,
        arrival_radius: a.arrival_radius,
        primitives: PrimitiveSet::symmetric(&a.curvatures, a.arc_length, PrimitiveSet::default().ds)?,
        goal_timeout: a.timeout,
        pipeline: pipeline_config(&a.localizer),
        odom_noise: noise(a.odom_noise),
        matcher: match a.matcher {
            MatcherArg::Classical => NavMatcher::Classical,
            MatcherArg::Oracle => NavMatcher::Oracle {
                outlier_rate: a.oracle.outlier_rate,
                noise_px: a.oracle.noise_px,
            },
            MatcherArg::Ingest => return Err(CliError::Usage("navigate supports classical and oracle matchers".into())),
        },
        ..NavConfig::default()
    };
    config.local.robot_radius = a.robot_radius;
    config.local.lambda = a.lambda;
    config.limits.radius = a.robot_radius;
    let start = match &a.start {
        Some(s) => parse_start(s, config.local.camera_height)?,
        None => map.node(0).ok_or_else(|| CliError::Usage("map is empty".into()))?.pose,
    };
    let report = nav::run_navigation(&world, &map, CameraIntrinsics::default_sim(), start, &goals, &config, a.seed)?;
    write_file(&a.report, &report.to_csv())?;
    if let Some(p) = &a.trajectory {
        trajectory::write_trajectory(p, &report.trajectory)?;
    }
    if let Some(p) = &a.estimated {
        trajectory::write_trajectory(p, &report.estimated)?;
    }
    print!("{}", report.to_csv());
    match report.goals.iter().enumerate().find(|(_, g)| !g.success) {
        None => Ok(Outcome::Done),
        Some((i, g)) => Ok(Outcome::PlannedFailure(format!(
            "goal {i} (node {}) not reached: {}, {} m from the goal",
            g.goal_node,
            g.outcome.as_str(),
            fmt_sig(g.final_error, 3)
        ))),
    }
}

pub fn pick_goals(map: &Path, count: usize, min_separation: f64, seed: u64, out: &Path) -> Result<Outcome, CliError> {
    let map = mapgraph::load_map(map)?;
    let goals = nav::pick_goal_nodes(&map, 0, count, min_separation, seed)?;
    fs::create_dir_all(out).map_err(|e| io(out, e))?;
    for (i, g) in goals.iter().enumerate() {
        let img = map.nodes[*g as usize]
            .image
            .as_ref()
            .ok_or_else(|| CliError::Usage(format!("node {g} has no stored image")))?;
        write_pgm(&out.join(format!("goal_{i}.pgm")), img)?;
        println!("goal_{i}.pgm node={g}");
    }
    Ok(Outcome::Done)
}

pub fn gen_reloc(
    world: &Path,
    out: &Path,
    seed: u64,
    references: usize,
    queries_per_reference: usize,
    max_offset: f64,
    export_matches: bool,
) -> Result<Outcome, CliError> {
    let world = read_world(world)?;
    let params = RelocGenParams {
        references,
        queries_per_reference,
        max_offset,
        ..RelocGenParams::default()
    };
    let ds = relocal::generate_reloc_dataset(&world, &CameraIntrinsics::default_sim(), &params, seed)?;
    relocal::save_reloc_dataset(&ds, out)?;
    if export_matches {
        relocal::export_oracle_matches(&ds, out, seed)?;
    }
    Ok(Outcome::Done)
}

#[allow(clippy::too_many_arguments)]
pub fn bench_reloc(
    dataset: &Path,
    matcher: MatcherArg,
    out: &Path,
    min_conf: f64,
    oracle: &OracleArgs,
    reproj_thresh: f64,
    min_inliers: usize,
    seed: u64,
) -> Result<Outcome, CliError> {
    let ds = relocal::load_reloc_dataset(dataset)?;
    let m = match matcher {
        MatcherArg::Classical => BenchMatcher::Classical,
        MatcherArg::Oracle => BenchMatcher::Oracle {
            outlier_rate: oracle.outlier_rate,
            noise_px: oracle.noise_px,
            seed,
        },
        MatcherArg::Ingest => BenchMatcher::Ingest { min_conf },
    };
    let params = PnpParams {
        reproj_thresh,
        min_inliers,
        seed,
        ..PnpParams::default()
    };
    let results = relocal::run_reloc_bench(&ds, dataset, &m, &params, &DepthRange::default())?;
    let metrics = relocal::compute_reloc_metrics(&results).map_err(DatasetError::from)?;
    write_file(out, &format!("{METRICS_CSV_HEADER}\n{}\n", metrics.csv_row()))?;
    println!("{METRICS_CSV_HEADER}\n{}", metrics.csv_row());
    Ok(Outcome::Done)
}

pub fn eval_ate(gt: &Path, est: &Path, max_dt: f64, out: Option<&Path>) -> Result<Outcome, CliError> {
    let g = trajectory::read_trajectory(gt)?;
    let e = trajectory::read_trajectory(est)?;
    let r = nav::compute_ate(&g, &e, max_dt)?;
    if let Some(p) = out {
        let mut text = String::from("timestamp,error_m\n");
        for (t, err) in &r.errors {
            let _ = writeln!(text, "{},{}", fmt_sig(*t, 17), fmt_sig(*err, 9));
        }
        write_file(p, &text)?;
    }
    println!("rmse={} matched={}", fmt_sig(r.rmse, 9), r.matched);
    Ok(Outcome::Done)
}
