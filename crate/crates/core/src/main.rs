use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use gfsim::agents::Scheme;
use gfsim::config::{reference_scenario, Overrides, ScenarioFile};
use gfsim::env::FrameLogReader;
use gfsim::metrics::tables::{validate, TableKind};
use gfsim::metrics::PhaseMetrics;
use gfsim::runner::{self, persist, ExperimentSpec, RunError, RunOptions, SweepAxis};
use gfsim::scenario::SharingMode;

#[derive(Parser)]
#[command(name = "gfsim", version, about = "Grant-free IoT and broadband uplink coexistence simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate schemes at one operating point.
    Run(RunArgs),
    /// One full run per point of a sweep axis.
    Sweep(SweepArgs),
    /// Check an output directory and print its summary.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Slicing,
    Sharing,
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    B2,
    J,
    Deadline,
}

#[derive(Args)]
struct Common {
    /// Scenario TOML; the reference configuration when absent.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Scheme(s) to run, comma separated: VI, QL, QLPlusVI, DoQL, DoQLPlusVI, IRSA.
    #[arg(long, value_delimiter = ',', default_value = "DoQL")]
    scheme: Vec<String>,
    /// Number of IoT users.
    #[arg(long)]
    j: Option<usize>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Latency deadline in slots.
    #[arg(long)]
    deadline: Option<u32>,
    /// IoT share of the band under slicing.
    #[arg(long)]
    b2_fraction: Option<f64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    replications: Option<u32>,
    #[arg(long)]
    training_frames: Option<u64>,
    #[arg(long)]
    inference_frames: Option<u64>,
    /// Output directory.
    #[arg(long, short)]
    out: PathBuf,
    /// Write inference frame logs under <out>/logs.
    #[arg(long)]
    frame_logs: bool,
    /// Write learned tables under <out>/qtables.
    #[arg(long)]
    checkpoints: bool,
    /// Worker threads; all cores by default.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum, default_value = "b2")]
    axis: Axis,
    /// Axis values, comma separated; 0.1..0.9 for the bandwidth split.
    #[arg(long, value_delimiter = ',')]
    values: Vec<String>,
}

#[derive(Args)]
struct ReportArgs {
    /// Output directory of a previous run or sweep.
    input: PathBuf,
}

fn build_spec(c: &Common) -> Result<ExperimentSpec> {
    let overrides = Overrides {
        mode: c.mode.map(|m| match m {
            Mode::Slicing => SharingMode::Slicing,
            Mode::Sharing => SharingMode::Sharing,
        }),
        num_iot: c.j,
        latency_deadline: c.deadline,
        b2_fraction: c.b2_fraction,
    };
    let file = match &c.scenario {
        Some(p) => ScenarioFile::load(p)?,
        None => ScenarioFile::from_scenario(&reference_scenario(SharingMode::Slicing, 10)),
    };
    let scenario = file.resolve(&overrides)?;
    let schemes = c
        .scheme
        .iter()
        .map(|s| s.parse::<Scheme>().map_err(anyhow::Error::msg))
        .collect::<Result<Vec<_>>>()?;
    let mut spec = ExperimentSpec::new(scenario, schemes);
    spec.plan.base_seed = c.seed;
    if let Some(r) = c.replications {
        spec.plan.replications = r;
    }
    if let Some(t) = c.training_frames {
        spec.plan.training_frames = t;
    }
    if let Some(i) = c.inference_frames {
        spec.plan.inference_frames = i;
    }
    Ok(spec)
}

fn parse_values<T: std::str::FromStr>(values: &[String]) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    values
        .iter()
        .map(|v| v.trim().parse::<T>().map_err(|e| anyhow::anyhow!("bad axis value '{v}': {e}")))
        .collect()
}

fn execute(c: &Common, spec: &ExperimentSpec, sweep: bool) -> Result<()> {
    if let Some(n) = c.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("thread pool")?;
    }
    for w in spec.warnings() {
        eprintln!("warning: {w}");
    }
    let mut options = RunOptions::default();
    if c.frame_logs {
        let dir = c.out.join("logs");
        persist::create_dir(&dir)?;
        options.frame_log_dir = Some(dir);
    }
    let scenarios = match (&spec.sweep, sweep) {
        (Some(axis), true) => axis.scenarios(&spec.scenario)?,
        _ => vec![spec.scenario.clone()],
    };
    let outputs = runner::run_points(&scenarios, spec, &options)?;
    let points: Vec<_> = outputs.iter().map(|(p, _)| p.clone()).collect();
    persist::write_outputs(&c.out, spec, &points)?;
    if c.checkpoints {
        persist::write_checkpoints(&c.out, &outputs)?;
    }
    for p in &points {
        let s = p.summary();
        println!(
            "{} {} J={} b2={} deadline={}: reward {:.4} (sd {:.4}), delivered {:.4}, S_b {:.4e} bit/s, EE {:.4e} bit/J",
            p.key.scheme,
            p.key.mode,
            p.key.num_iot,
            p.key.b2_fraction.map(|f| f.to_string()).unwrap_or_else(|| "-".into()),
            p.key.deadline,
            s.mean_reward,
            s.std_reward,
            s.delivery_ratio,
            s.throughput,
            s.energy_efficiency
        );
    }
    Ok(())
}

fn report(dir: &Path) -> Result<()> {
    for kind in TableKind::ALL {
        let path = dir.join(kind.file_name());
        let text = std::fs::read_to_string(&path).with_context(|| path.display().to_string())?;
        let rows = validate(kind, &text)?;
        println!("{}: {rows} rows", kind.file_name());
    }
    let logs = dir.join("logs");
    if logs.is_dir() {
        let mut entries: Vec<_> = std::fs::read_dir(&logs)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "log"))
            .collect();
        entries.sort();
        for p in entries {
            let f = std::fs::File::open(&p)?;
            let mut m = PhaseMetrics::new(0, 100);
            for (i, rec) in FrameLogReader::new(std::io::BufReader::new(f)).enumerate() {
                m.observe_record(i as u64, &rec?);
            }
            println!(
                "{}: {} frames, {} packets, mean reward {}",
                p.file_name().unwrap_or_default().to_string_lossy(),
                m.frames,
                m.packets(),
                m.mean_reward()
            );
        }
    }
    print!("{}", std::fs::read_to_string(dir.join(TableKind::Summary.file_name()))?);
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(a) => {
            let spec = build_spec(&a.common)?;
            execute(&a.common, &spec, false)
        }
        Command::Sweep(a) => {
            let mut spec = build_spec(&a.common)?;
            let axis = match a.axis {
                Axis::B2 if a.values.is_empty() => SweepAxis::b2_default(),
                Axis::B2 => SweepAxis::B2Fraction(parse_values(&a.values)?),
                Axis::J => SweepAxis::NumIot(parse_values(&a.values)?),
                Axis::Deadline => SweepAxis::Deadline(parse_values(&a.values)?),
            };
            if !matches!(axis, SweepAxis::B2Fraction(_)) && a.values.is_empty() {
                bail!("axis values required");
            }
            spec.sweep = Some(axis);
            execute(&a.common, &spec, true)
        }
        Command::Report(a) => report(&a.input),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e.downcast_ref::<RunError>().map_or("error", RunError::kind);
            let msg = format!("{e:#}").replace(['\n', '\t'], " ");
            eprintln!("gfsim-error\t{kind}\t{msg}");
            ExitCode::FAILURE
        }
    }
}
