//! `vloc`: map building, localization, navigation and evaluation on top of
//! vloc-core.

mod cmd;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "vloc", version, about = "Map-lite visual localization and image-goal navigation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
pub enum PresetArg {
    Corridor,
    Rooms,
    Campus,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
pub enum RouteArg {
    /// Covers every street in both directions.
    Mapping,
    /// A single loop of at least 100 m (campus only).
    LongLoop,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum NoiseArg {
    Zero,
    Drifting,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum MatcherArg {
    Classical,
    Oracle,
    /// Correspondences read from files (bench-reloc only).
    Ingest,
}

#[derive(Args, Debug, Clone)]
pub struct OracleArgs {
    /// Oracle matcher outlier fraction.
    #[arg(long, default_value_t = 0.2)]
    pub outlier_rate: f64,
    /// Oracle matcher pixel noise (standard deviation).
    #[arg(long, default_value_t = 0.5)]
    pub noise_px: f64,
}

#[derive(Args, Debug, Clone)]
pub struct LocalizerArgs {
    /// Retrieval similarity needed to accept a global localization.
    #[arg(long, default_value_t = 0.5)]
    pub gl_min_sim: f64,
    /// Consecutive failed frames before relocalizing globally.
    #[arg(long, default_value_t = 5)]
    pub max_failures: usize,
    /// Candidate nodes tried per frame.
    #[arg(long, default_value_t = 3)]
    pub reference_tries: usize,
    /// RANSAC inlier threshold, pixels.
    #[arg(long, default_value_t = 3.0)]
    pub reproj_thresh: f64,
    #[arg(long, default_value_t = 12)]
    pub min_inliers: usize,
    /// Fusion window, states.
    #[arg(long, default_value_t = 20)]
    pub window: usize,
    /// Fixes further than this from the tracked pose (meters plus radians) are rejected.
    #[arg(long, default_value_t = 1.0)]
    pub fix_gate: f64,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a preset world.
    GenWorld {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        preset: PresetArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write a route through the world as a waypoint CSV.
        #[arg(long)]
        waypoints_out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "mapping")]
        route: RouteArg,
    },
    /// Drive a simulated robot along waypoints and record a segment.
    GenSegment {
        #[arg(long)]
        world: PathBuf,
        /// CSV with header `x,y`.
        #[arg(long)]
        waypoints: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "drifting")]
        odom_noise: NoiseArg,
        /// Camera frames per second.
        #[arg(long, default_value_t = 1.0, conflicts_with = "frame_distance")]
        camera_rate: f64,
        /// Take a frame every this many meters instead of at a fixed rate.
        #[arg(long)]
        frame_distance: Option<f64>,
        #[arg(long, default_value_t = 15.0)]
        odom_rate: f64,
    },
    /// Select keyframes from a segment and build a topo-metric map.
    BuildMap {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        keyframe_budget: usize,
        #[arg(long, default_value_t = 0.1)]
        grid_res: f64,
        #[arg(long)]
        out: PathBuf,
        /// Use covisibility edges as connectivity edges.
        #[arg(long)]
        cng_from_cvg: bool,
        /// World file for line-of-sight checks on connectivity edges.
        #[arg(long)]
        world: Option<PathBuf>,
        /// Matcher for covisibility counts. Defaults to oracle when the
        /// segment carries landmark annotations.
        #[arg(long, value_enum)]
        matcher: Option<MatcherArg>,
        #[arg(long, default_value_t = 50)]
        covis_threshold: usize,
        #[arg(long, default_value_t = 3.0)]
        nav_radius: f64,
        #[arg(long)]
        store_depth: bool,
    },
    /// Localize a recorded segment against a map.
    Localize {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        seq: PathBuf,
        /// Fused trajectory, TUM format.
        #[arg(long)]
        out: PathBuf,
        /// Per-frame log CSV.
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "classical")]
        matcher: MatcherArg,
        #[command(flatten)]
        oracle: OracleArgs,
        #[command(flatten)]
        localizer: LocalizerArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Drive to one or more goal images in a simulated world.
    Navigate {
        #[arg(long)]
        world: PathBuf,
        #[arg(long)]
        map: PathBuf,
        /// Goal image (PGM); repeat for sequential goals.
        #[arg(long = "goal-image", required = true)]
        goal_images: Vec<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        report: PathBuf,
        /// Ground-truth trajectory output, TUM format.
        #[arg(long)]
        trajectory: Option<PathBuf>,
        /// Localizer trajectory output, TUM format.
        #[arg(long)]
        estimated: Option<PathBuf>,
        /// Start `x,y,yaw`; defaults to the pose of node 0.
        #[arg(long, allow_hyphen_values = true)]
        start: Option<String>,
        #[arg(long, value_enum, default_value = "oracle")]
        matcher: MatcherArg,
        #[command(flatten)]
        oracle: OracleArgs,
        #[command(flatten)]
        localizer: LocalizerArgs,
        #[arg(long, value_enum, default_value = "drifting")]
        odom_noise: NoiseArg,
        #[arg(long, default_value_t = 1.0)]
        switch_radius: f64,
        #[arg(long, default_value_t = 0.5)]
        goal_radius: f64,
        #[arg(long, default_value_t = 0.3)]
        arrival_radius: f64,
        #[arg(long, default_value_t = 0.3)]
        robot_radius: f64,
        /// Curvature magnitudes of the primitive fan, 1/m.
        #[arg(long, value_delimiter = ',', default_value = "0.2,0.5,1.0")]
        curvatures: Vec<f64>,
        #[arg(long, default_value_t = 2.0)]
        arc_length: f64,
        #[arg(long, default_value_t = 0.1)]
        lambda: f64,
        /// Model-time budget per goal, seconds.
        #[arg(long, default_value_t = 300.0)]
        timeout: f64,
    },
    /// Pick goal nodes from a map and write their images.
    PickGoals {
        #[arg(long)]
        map: PathBuf,
        #[arg(long, default_value_t = 5)]
        count: usize,
        /// Minimum CnG path length between consecutive goals, meters.
        #[arg(long, default_value_t = 5.0)]
        min_separation: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory for `goal_<i>.pgm`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a relocalization benchmark from a simulated world.
    GenReloc {
        #[arg(long)]
        world: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        references: usize,
        #[arg(long, default_value_t = 5)]
        queries_per_reference: usize,
        #[arg(long, default_value_t = 0.5)]
        max_offset: f64,
        /// Also write exact oracle correspondences to `matches/`.
        #[arg(long)]
        export_matches: bool,
    },
    /// Run the relocalization benchmark.
    BenchReloc {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum)]
        matcher: MatcherArg,
        #[arg(long)]
        out: PathBuf,
        /// Ingested correspondences below this confidence are dropped.
        #[arg(long, default_value_t = 0.0)]
        min_conf: f64,
        #[command(flatten)]
        oracle: OracleArgs,
        #[arg(long, default_value_t = 3.0)]
        reproj_thresh: f64,
        #[arg(long, default_value_t = 12)]
        min_inliers: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Absolute trajectory error between two TUM trajectories.
    EvalAte {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        est: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        max_dt: f64,
        /// Per-pose errors as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // clap exits with 2 on bad usage, which we reserve for planned failures
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(cmd::Outcome::Done) => ExitCode::SUCCESS,
        Ok(cmd::Outcome::PlannedFailure(msg)) => {
            eprintln!("vloc: {msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("vloc: error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> Result<cmd::Outcome, cmd::CliError> {
    match command {
        Command::GenWorld {
            out,
            preset,
            seed,
            waypoints_out,
            route,
        } => cmd::gen_world(&out, preset, seed, waypoints_out.as_deref(), route),
        Command::GenSegment {
            world,
            waypoints,
            out,
            seed,
            odom_noise,
            camera_rate,
            frame_distance,
            odom_rate,
        } => cmd::gen_segment(&world, &waypoints, &out, seed, odom_noise, camera_rate, frame_distance, odom_rate),
        Command::BuildMap {
            input,
            keyframe_budget,
            grid_res,
            out,
            cng_from_cvg,
            world,
            matcher,
            covis_threshold,
            nav_radius,
            store_depth,
        } => cmd::build_map(cmd::BuildArgs {
            input,
            keyframe_budget,
            grid_res,
            out,
            cng_from_cvg,
            world,
            matcher,
            covis_threshold,
            nav_radius,
            store_depth,
        }),
        Command::Localize {
            map,
            seq,
            out,
            log,
            matcher,
            oracle,
            localizer,
            seed,
        } => cmd::localize(&map, &seq, &out, log.as_deref(), matcher, &oracle, &localizer, seed),
        Command::Navigate {
            world,
            map,
            goal_images,
            seed,
            report,
            trajectory,
            estimated,
            start,
            matcher,
            oracle,
            localizer,
            odom_noise,
            switch_radius,
            goal_radius,
            arrival_radius,
            robot_radius,
            curvatures,
            arc_length,
            lambda,
            timeout,
        } => cmd::navigate(cmd::NavigateArgs {
            world,
            map,
            goal_images,
            seed,
            report,
            trajectory,
            estimated,
            start,
            matcher,
            oracle,
            localizer,
            odom_noise,
            switch_radius,
            goal_radius,
            arrival_radius,
            robot_radius,
            curvatures,
            arc_length,
            lambda,
            timeout,
        }),
        Command::PickGoals {
            map,
            count,
            min_separation,
            seed,
            out,
        } => cmd::pick_goals(&map, count, min_separation, seed, &out),
        Command::GenReloc {
            world,
            out,
            seed,
            references,
            queries_per_reference,
            max_offset,
            export_matches,
        } => cmd::gen_reloc(&world, &out, seed, references, queries_per_reference, max_offset, export_matches),
        Command::BenchReloc {
            dataset,
            matcher,
            out,
            min_conf,
            oracle,
            reproj_thresh,
            min_inliers,
            seed,
        } => cmd::bench_reloc(&dataset, matcher, &out, min_conf, &oracle, reproj_thresh, min_inliers, seed),
        Command::EvalAte { gt, est, max_dt, out } => cmd::eval_ate(&gt, &est, max_dt, out.as_deref()),
    }
}
