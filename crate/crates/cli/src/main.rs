//! `lanefusion`: simulate, replay and evaluate the lane perception pipeline.
//!
//! Exit codes: 0 success, 2 usage (bad flags, unreadable input path),
//! 3 configuration, 4 log or truth schema, 5 output I/O, 6 pipeline failure.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lanefusion::evaluation::{replay_frames_with, summarize_switches, ScenarioRun};
use lanefusion::frame_log::{read_frames, read_truth, write_frames, write_truth, LogError};
use lanefusion::graph::dump_graph;
use lanefusion::pipeline::Pipeline;
use lanefusion::simulator::{generate, GroundTruthMap, ScenarioConfig, SensorFrame};

const REFERENCE: &str = include_str!("../../core/scenarios/reference.toml");

/// Frames between graph dumps in verbose runs (the last frame is always dumped).
const DUMP_EVERY: usize = 100;

#[derive(Parser)]
#[command(name = "lanefusion", version, about = "Multi-lane perception from fused lane features")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario, run the pipeline and write the evaluation.
    Run(Common),
    /// Run the pipeline over a recorded frame log.
    Replay {
        /// Frame log (one JSON frame per line).
        #[arg(long)]
        log: PathBuf,
        /// Ground truth for the log; `truth.json` next to the log is used when present.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Write the fusion graph after the last processed frame as a text dump.
    DumpGraph {
        /// Use a recorded log instead of simulating.
        #[arg(long)]
        log: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Print every default scenario and pipeline parameter as TOML.
    PrintConfigDefaults,
}

#[derive(Args)]
struct Common {
    /// Scenario file (the bundled reference scenario when omitted).
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, env = "LANEFUSION_OUT", default_value = "lanefusion-out")]
    out: PathBuf,
    /// Pipeline parameter override such as `graph.switch_prior=4` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Process only the first N frames.
    #[arg(long)]
    frames: Option<usize>,
    /// Progress on stderr and periodic graph dumps.
    #[arg(long)]
    verbose: bool,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Config(String),
    Schema(String),
    Output(String),
    Pipeline(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Config(_) => 3,
            Failure::Schema(_) => 4,
            Failure::Output(_) => 5,
            Failure::Pipeline(_) => 6,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m)
            | Failure::Config(m)
            | Failure::Schema(m)
            | Failure::Output(m)
            | Failure::Pipeline(m) => m,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Run(c) => run(&c),
        Command::Replay { log, truth, common } => replay(&log, truth.as_deref(), &common),
        Command::DumpGraph { log, common } => dump_graph_cmd(log.as_deref(), &common),
        Command::PrintConfigDefaults => {
            print!("{}", ScenarioConfig::default().to_toml());
            Ok(())
        }
    }
}

/// Scenario from `--scenario` (or the bundled one) with seed and pipeline
/// overrides applied and validated.
fn load_scenario(c: &Common) -> Result<ScenarioConfig, Failure> {
    let text = match &c.scenario {
        Some(p) => fs::read_to_string(p).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", p.display())))?,
        None => REFERENCE.to_string(),
    };
    let origin = c.scenario.as_ref().map_or("bundled reference scenario".into(), |p| p.display().to_string());
    let mut cfg = ScenarioConfig::from_toml(&text).map_err(|e| Failure::Config(format!("{origin}: {e}")))?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    for kv in &c.set {
        cfg.pipeline.apply_override(kv).map_err(|e| Failure::Config(e.to_string()))?;
    }
    Ok(cfg)
}

fn out_err(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Output(format!("{}: {e}", path.display()))
}

fn create(dir: &Path, name: &str) -> Result<(PathBuf, BufWriter<File>), Failure> {
    let path = dir.join(name);
    let f = File::create(&path).map_err(|e| out_err(&path, e))?;
    Ok((path, BufWriter::new(f)))
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<(), Failure> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| out_err(&path, e))
}

fn write_json(dir: &Path, name: &str, v: &impl serde::Serialize) -> Result<(), Failure> {
    let (path, mut w) = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, v).map_err(|e| out_err(&path, e))?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| out_err(&path, e))
}

fn prepare_out(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| out_err(dir, e))
}

fn simulate(cfg: &ScenarioConfig, frames: Option<usize>) -> Result<(GroundTruthMap, Vec<SensorFrame>), Failure> {
    let (truth, mut log) = generate(cfg).map_err(|e| Failure::Config(e.to_string()))?;
    if let Some(n) = frames {
        log.truncate(n);
    }
    Ok((truth, log))
}

fn run(c: &Common) -> Result<(), Failure> {
    let cfg = load_scenario(c)?;
    let (truth, frames) = simulate(&cfg, c.frames)?;
    prepare_out(&c.out)?;
    write_text(&c.out, "scenario.toml", &cfg.to_toml())?;
    let (path, mut w) = create(&c.out, "frames.jsonl")?;
    write_frames(&mut w, &frames).map_err(|e| out_err(&path, e))?;
    let (path, mut w) = create(&c.out, "truth.json")?;
    write_truth(&mut w, &truth)
        .and_then(|_| w.flush())
        .map_err(|e| out_err(&path, e))?;
    evaluate(&cfg, &frames, Some(truth), c)
}

fn replay(log: &Path, truth: Option<&Path>, c: &Common) -> Result<(), Failure> {
    let frames = load_log(log, c.frames)?;
    let sibling = log.parent().map(|d| d.join("truth.json")).filter(|p| p.is_file());
    let truth = match truth.map(Path::to_path_buf).or(sibling) {
        Some(p) => {
            let f = File::open(&p).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", p.display())))?;
            let t = read_truth(BufReader::new(f)).map_err(|e| Failure::Schema(format!("{}: {e}", p.display())))?;
            Some(t)
        }
        None => {
            eprintln!("notice: no ground truth for {}; deviation report skipped", log.display());
            None
        }
    };
    let cfg = load_scenario(c)?;
    prepare_out(&c.out)?;
    evaluate(&cfg, &frames, truth, c)
}

fn load_log(path: &Path, limit: Option<usize>) -> Result<Vec<SensorFrame>, Failure> {
    let f = File::open(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
    let mut frames = read_frames(BufReader::new(f)).map_err(|e| match e {
        LogError::Io(e) => Failure::Usage(format!("cannot read {}: {e}", path.display())),
        e => Failure::Schema(format!("{}: {e}", path.display())),
    })?;
    if let Some(n) = limit {
        frames.truncate(n);
    }
    Ok(frames)
}

fn evaluate(
    cfg: &ScenarioConfig,
    frames: &[SensorFrame],
    truth: Option<GroundTruthMap>,
    c: &Common,
) -> Result<(), Failure> {
    let graphs = c.out.join("graphs");
    if c.verbose {
        fs::create_dir_all(&graphs).map_err(|e| out_err(&graphs, e))?;
    }
    let mut dump_error = None;
    let last = frames.len().saturating_sub(1);
    let result = replay_frames_with(frames, truth, &cfg.pipeline, cfg.warmup_frames, |k, p| {
        if !c.verbose {
            return;
        }
        if k % DUMP_EVERY == 0 {
            eprintln!("frame {k}/{}", frames.len());
        }
        if (k % DUMP_EVERY == 0 || k == last) && dump_error.is_none() {
            if let Err(e) = write_text(&graphs, &format!("frame_{k:05}.graph"), &dump_graph(p.graph())) {
                dump_error = Some(e);
            }
        }
    })
    .map_err(|e| Failure::Pipeline(e.to_string()))?;
    if let Some(e) = dump_error {
        return Err(e);
    }
    write_reports(cfg, &result, &c.out)
}

fn write_reports(cfg: &ScenarioConfig, r: &ScenarioRun, out: &Path) -> Result<(), Failure> {
    let (path, mut w) = create(out, "lanes.jsonl")?;
    for s in &r.snapshots {
        serde_json::to_writer(&mut w, s).map_err(|e| out_err(&path, e))?;
        w.write_all(b"\n").map_err(|e| out_err(&path, e))?;
    }
    w.flush().map_err(|e| out_err(&path, e))?;
    write_json(out, "runtime.json", &r.runtime_stats())?;

    let mut summary = serde_json::json!({
        "scenario": cfg.name,
        "seed": cfg.seed,
        "frames": r.snapshots.len(),
    });
    if let (Some(table), Some(truth)) = (&r.table, &r.truth) {
        write_text(out, "deviation.csv", &table.to_csv())?;
        summary["evaluation"] = serde_json::to_value(table.summary()).expect("summary serializes");
        summary["ego_tracking"] = serde_json::to_value(r.ego).expect("tracking serializes");
        summary["switches"] =
            serde_json::to_value(summarize_switches(&truth.lane_changes, &r.switches)).expect("switches serialize");
    }
    write_json(out, "summary.json", &summary)
}

fn dump_graph_cmd(log: Option<&Path>, c: &Common) -> Result<(), Failure> {
    let cfg = load_scenario(c)?;
    let frames = match log {
        Some(p) => load_log(p, c.frames)?,
        None => simulate(&cfg, c.frames)?.1,
    };
    let mut p = Pipeline::new(cfg.pipeline.clone());
    for f in &frames {
        p.step(f).map_err(|e| Failure::Pipeline(e.to_string()))?;
    }
    prepare_out(&c.out)?;
    write_text(&c.out, "graph.txt", &dump_graph(p.graph()))?;
    if c.verbose {
        eprintln!("graph after {} frames written to {}", frames.len(), c.out.join("graph.txt").display());
    }
    Ok(())
}
