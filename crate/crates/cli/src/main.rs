use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use primguard::lattice::State;
use primguard::model::MarginKind;
use primguard::pipeline::{Pipeline, PipelineConfig, PlanRequest, ReportKind};
use primguard::Error;

const EXIT_ABNORMAL: u8 = 3;
const EXIT_NO_PLAN: u8 = 4;
const EXIT_MISSING: u8 = 5;

/// Lattice motion planning with learned execution models and abnormality monitoring.
#[derive(Parser, Debug)]
#[command(name = "primguard", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Pipeline configuration (JSON). Defaults apply to omitted fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Artifact root. Defaults to the config file's directory, else the
    /// current directory.
    #[arg(long, global = true)]
    root: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Number of evenly spaced primitives to collect and train on.
    #[arg(long, global = true)]
    primitive_count: Option<usize>,
    /// Triplets executed per primitive.
    #[arg(long, global = true)]
    triplets: Option<usize>,
    /// Also write SVG envelope plots per primitive.
    #[arg(long, global = true)]
    svg: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the motion primitive set.
    GenPrimitives,
    /// Simulate triplet executions and write the dataset.
    Collect,
    /// Fit execution models and baseline margins.
    Train,
    /// Write a CSV report.
    Report {
        #[arg(value_enum)]
        which: Which,
    },
    /// Plan between two lattice states.
    Plan(PlanArgs),
    /// Monitor a JSON-lines observation stream. Exits 3 if it is flagged.
    Monitor {
        #[arg(long)]
        stream: PathBuf,
        /// Verdict output (JSON lines). Printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every stage and all reports.
    All,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Which {
    Rmse,
    Area,
    Detection,
}

#[derive(Args, Debug)]
struct PlanArgs {
    /// Occupancy world (JSON).
    #[arg(long)]
    world: PathBuf,
    /// Start as `x,y,z` (at rest) or `x,y,z,vx,vy,vz`.
    #[arg(long, value_parser = parse_state, allow_hyphen_values = true)]
    start: State,
    #[arg(long, value_parser = parse_state, allow_hyphen_values = true)]
    goal: State,
    #[arg(long, default_value_t = 0.0)]
    t_start: f64,
    /// global_sphere, per_primitive_sphere, time_varying_sphere or learned_model.
    #[arg(long)]
    margin: Option<MarginKind>,
    #[arg(long, default_value_t = 0.0)]
    robot_radius: f64,
    /// Plan output. Defaults to `plan.json` under the artifact root.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_state(s: &str) -> Result<State, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|c| c.trim().parse::<f64>().map_err(|e| format!("'{c}': {e}")))
        .collect::<Result<_, _>>()?;
    match v.len() {
        3 => Ok(State::at_rest([v[0], v[1], v[2]])),
        6 => Ok(State::new([v[0], v[1], v[2]], [v[3], v[4], v[5]])),
        n => Err(format!("expected 3 or 6 comma-separated values, got {n}")),
    }
}

fn load_pipeline(g: &Global) -> primguard::Result<Pipeline> {
    let mut config = match &g.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = g.seed {
        config.seed = seed;
    }
    if let Some(k) = g.primitive_count {
        config.dataset.primitive_count = Some(k);
    }
    if let Some(n) = g.triplets {
        config.dataset.triplets_per_primitive = n;
        config.dataset.train_per_primitive = config.dataset.train_per_primitive.min(n);
    }
    let root = g
        .root
        .clone()
        .or_else(|| g.config.as_deref().and_then(Path::parent).map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from("."));
    Pipeline::new(root, config)
}

fn run(cli: &Cli) -> primguard::Result<u8> {
    if let Some(jobs) = cli.global.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    }
    let p = load_pipeline(&cli.global)?;
    match &cli.command {
        Command::GenPrimitives => {
            println!("{}", p.gen_primitives()?);
        }
        Command::Collect => {
            let m = p.collect()?;
            println!("{} traces over {} primitives", m.total_traces, m.primitives.len());
        }
        Command::Train => {
            let ids = p.train()?;
            if cli.global.svg {
                p.envelopes()?;
            }
            println!("{} models", ids.len());
        }
        Command::Report { which } => {
            let kind = match which {
                Which::Rmse => ReportKind::Rmse,
                Which::Area => ReportKind::Area,
                Which::Detection => ReportKind::Detection,
            };
            if cli.global.svg {
                p.envelopes()?;
            }
            print!("{}", p.report(kind)?);
        }
        Command::Plan(a) => {
            let request = PlanRequest {
                world: a.world.clone(),
                start: a.start,
                goal: a.goal,
                t_s: a.t_start,
                margin: a.margin,
                robot_radius: a.robot_radius,
                output: a.out.clone().unwrap_or_else(|| p.root.join("plan.json")),
            };
            let out = p.plan(&request)?;
            println!("{}", serde_json::to_string(&out)?);
        }
        Command::Monitor { stream, out } => {
            let summary = p.monitor(stream, out.as_deref())?;
            if out.is_none() {
                for v in &summary.verdicts {
                    println!("{}", serde_json::to_string(v)?);
                }
            }
            if let Some(t) = summary.first_flag {
                eprintln!("abnormal execution flagged at t = {t}");
                return Ok(EXIT_ABNORMAL);
            }
        }
        Command::All => {
            for csv in p.run_all(cli.global.svg)? {
                print!("{csv}");
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::MissingArtifacts(_) => EXIT_MISSING,
                Error::NoPlan | Error::InvalidStart(_) | Error::InvalidGoal(_) => EXIT_NO_PLAN,
                Error::InvalidConfig(_) => 2,
                _ => 1,
            })
        }
    }
}
