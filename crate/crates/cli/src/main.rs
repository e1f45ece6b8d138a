use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::Vector3;
use serde_json::json;

use scantrack::eval::io::{self, read_file};
use scantrack::eval::{self as harness, scenarios, AblationAxis, RunConfig};
use scantrack::model::{PointCloud, TargetSpec};
use scantrack::pipeline::{track, PipelineConfig, TrackMode};
use scantrack::range_image::{backproject_detection, render, Detections, RangeImageConfig};

#[derive(Parser)]
#[command(name = "scantrack", version, about = "Simulate LiDAR scans, track a small target, evaluate the result")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scan stream and its ground truth.
    Simulate {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        truth: PathBuf,
    },
    /// Track a target through a scan stream.
    Track {
        #[arg(long)]
        scans: PathBuf,
        /// Initial position "x,y,z".
        #[arg(long, value_parser = parse_vec3)]
        init: Vector3<f64>,
        /// fixed:N, adaptive-ast, adaptive-adt or adaptive-dual.
        #[arg(long, default_value = "adaptive-dual")]
        mode: TrackMode,
        /// Run config whose pipeline and target sections are used.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a trajectory against ground truth; prints a JSON report.
    Eval {
        #[arg(long)]
        traj: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Divergence threshold, meters.
        #[arg(long, default_value_t = 5.0)]
        threshold: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate, track every configured mode and evaluate.
    Experiment {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Weighting or fusion ablation over one or more scenarios.
    Ablate {
        #[arg(long)]
        axis: AblationAxis,
        #[arg(long)]
        config: Vec<PathBuf>,
        /// Bundled scenario names; all of them when no config is given either.
        #[arg(long)]
        scenario: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a range image from scans; with boxes, print the back-projected position.
    RangeImage {
        #[arg(long)]
        scans: PathBuf,
        /// Integrate only the newest N scans.
        #[arg(long)]
        last: Option<usize>,
        /// Run config whose range_image section is used.
        #[arg(long)]
        config: Option<PathBuf>,
        /// 16-bit depth image in millimeters.
        #[arg(long)]
        depth: Option<PathBuf>,
        /// 8-bit combined channel.
        #[arg(long)]
        combined: Option<PathBuf>,
        /// Detection boxes as JSON `{"boxes": [...]}`.
        #[arg(long)]
        boxes: Option<PathBuf>,
    },
    /// List bundled scenarios or print one.
    Scenarios {
        #[arg(long)]
        show: Option<String>,
    },
}

#[derive(Args)]
struct Source {
    #[arg(long, conflicts_with = "scenario")]
    config: Option<PathBuf>,
    /// Name of a bundled scenario.
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    duration: Option<f64>,
}

fn parse_vec3(s: &str) -> Result<Vector3<f64>, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match v.as_slice() {
        [x, y, z] if v.iter().all(|c| c.is_finite()) => Ok(Vector3::new(*x, *y, *z)),
        _ => Err(format!("expected three finite numbers \"x,y,z\", got {s:?}")),
    }
}

/// Failure categories, each with its own exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Runtime,
    Usage,
    MissingFile,
    Schema,
    Format,
    Eval,
}

impl Kind {
    fn code(self) -> u8 {
        match self {
            Kind::Runtime => 1,
            Kind::Usage => 2,
            Kind::MissingFile => 3,
            Kind::Schema => 4,
            Kind::Format => 5,
            Kind::Eval => 6,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Kind::Runtime => "runtime",
            Kind::Usage => "usage",
            Kind::MissingFile => "missing_file",
            Kind::Schema => "schema",
            Kind::Format => "format",
            Kind::Eval => "eval",
        }
    }
}

#[derive(Debug)]
struct Failure {
    kind: Kind,
    message: String,
    path: Option<PathBuf>,
}

impl Failure {
    fn new(kind: Kind, message: impl Into<String>) -> Self {
        Self { kind, message: message.into(), path: None }
    }

    fn at(mut self, path: &Path) -> Self {
        self.path.get_or_insert_with(|| path.to_path_buf());
        self
    }
}

impl From<scantrack::Error> for Failure {
    fn from(e: scantrack::Error) -> Self {
        use scantrack::Error as E;
        let kind = match &e {
            E::Io(io) if io.kind() == std::io::ErrorKind::NotFound => Kind::MissingFile,
            E::Config(_) => Kind::Schema,
            E::Format(_) | E::Sequencing { .. } => Kind::Format,
            E::Eval(_) => Kind::Eval,
            _ => Kind::Runtime,
        };
        Failure::new(kind, e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        scantrack::Error::Io(e).into()
    }
}

type Res<T> = Result<T, Failure>;

fn read(path: &Path) -> Res<String> {
    read_file(path).map_err(|e| Failure::from(e).at(path))
}

fn create(path: &Path) -> Res<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Failure::from(e).at(path))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| Failure::from(e).at(path))?))
}

fn load_config(path: &Path) -> Res<RunConfig> {
    RunConfig::from_toml(&read(path)?).map_err(|e| Failure::from(e).at(path))
}

fn resolve(src: &Source) -> Res<RunConfig> {
    let mut cfg = match (&src.config, &src.scenario) {
        (Some(p), _) => load_config(p)?,
        (None, Some(name)) => scenarios::load(name)?,
        (None, None) => return Err(Failure::new(Kind::Usage, "one of --config or --scenario is required")),
    };
    if let Some(s) = src.seed {
        cfg.seed = s;
    }
    if let Some(d) = src.duration {
        cfg.duration = Some(d);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_json<T: serde::Serialize>(path: Option<&Path>, value: &T) -> Res<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::new(Kind::Runtime, e.to_string()))?;
    match path {
        Some(p) => {
            let mut w = create(p)?;
            writeln!(w, "{text}")?;
            w.flush()?;
        }
        None => println!("{text}"),
    }
    Ok(())
}

fn read_scans(path: &Path) -> Res<Vec<scantrack::model::Scan>> {
    io::read_scans(&read(path)?).map_err(|e| Failure::from(e).at(path))
}

fn simulate(src: &Source, out: &Path, truth: &Path) -> Res<()> {
    let cfg = resolve(src)?;
    let (scans, gt) = harness::simulate(&cfg)?;
    let mut w = create(out)?;
    io::write_scans(&mut w, &scans)?;
    w.flush()?;
    io::write_truth(create(truth)?, &gt)?;
    eprintln!("{} scans, {} truth samples", scans.len(), gt.samples.len());
    Ok(())
}

fn track_cmd(scans: &Path, init: Vector3<f64>, mode: TrackMode, config: Option<&Path>, out: &Path) -> Res<()> {
    let (pipeline, target) = match config {
        Some(p) => {
            let cfg = load_config(p)?;
            (cfg.pipeline, cfg.target)
        }
        None => (PipelineConfig::default(), TargetSpec::cube(0.4)),
    };
    let scans = read_scans(scans)?;
    let rows = io::rows_from_outputs(&track(&scans, init, mode, &pipeline, &target)?);
    io::write_trajectory(create(out)?, &rows)?;
    eprintln!("{} estimates from {} scans", rows.len(), scans.len());
    Ok(())
}

fn eval_cmd(traj: &Path, truth: &Path, threshold: f64, out: Option<&Path>) -> Res<()> {
    let rows = io::read_trajectory(&read(traj)?).map_err(|e| Failure::from(e).at(traj))?;
    let gt = io::read_truth(&read(truth)?).map_err(|e| Failure::from(e).at(truth))?;
    let report = harness::evaluate(&rows, &gt, threshold)?;
    write_json(out, &report)
}

fn mode_file(mode: TrackMode) -> String {
    mode.to_string().replace(':', "-")
}

fn experiment(src: &Source, out_dir: &Path) -> Res<()> {
    let cfg = resolve(src)?;
    let exp = harness::run_experiment(&cfg)?;
    let o = &cfg.output;
    let path = |p: &Option<PathBuf>, default: &str| out_dir.join(p.clone().unwrap_or_else(|| default.into()));
    let mut w = create(&path(&o.scans, "scans.jsonl"))?;
    io::write_scans(&mut w, &exp.scans)?;
    w.flush()?;
    io::write_truth(create(&path(&o.truth, "truth.csv"))?, &exp.truth)?;
    let template = o.trajectory.clone().unwrap_or_else(|| "trajectory-{mode}.csv".into());
    for run in &exp.runs {
        let name = template.to_string_lossy().replace("{mode}", &mode_file(run.report.mode));
        io::write_trajectory(create(&out_dir.join(name))?, &run.rows)?;
    }
    let reports: Vec<_> = exp.runs.iter().map(|r| &r.report).collect();
    write_json(Some(&path(&o.report, "report.json")), &reports)?;
    for r in &reports {
        let e = &r.eval;
        let status = match e.divergence_step {
            Some(k) => format!("N/A at step {k}"),
            None => "completed".to_string(),
        };
        eprintln!("{:>16}  rmse {:.4} m  {status}", r.mode.to_string(), e.rmse);
    }
    Ok(())
}

fn ablate(axis: AblationAxis, configs: &[PathBuf], names: &[String], out: Option<&Path>) -> Res<()> {
    let mut bases = configs.iter().map(|p| load_config(p)).collect::<Res<Vec<_>>>()?;
    for n in names {
        bases.push(scenarios::load(n)?);
    }
    if bases.is_empty() {
        bases = scenarios::names().map(scenarios::load).collect::<scantrack::Result<_>>()?;
    }
    let rows = harness::run_ablation(&bases, axis)?;
    match out {
        Some(p) => {
            let mut w = create(p)?;
            harness::write_ablation(&mut w, &rows)?;
            w.flush()?;
        }
        None => harness::write_ablation(std::io::stdout().lock(), &rows)?,
    }
    Ok(())
}

struct RangeImageArgs<'a> {
    scans: &'a Path,
    last: Option<usize>,
    config: Option<&'a Path>,
    depth: Option<&'a Path>,
    combined: Option<&'a Path>,
    boxes: Option<&'a Path>,
}

fn range_image(a: RangeImageArgs) -> Res<()> {
    let cfg = match a.config {
        Some(p) => load_config(p)?.range_image,
        None => RangeImageConfig::default(),
    };
    let scans = read_scans(a.scans)?;
    if scans.is_empty() {
        return Err(Failure::new(Kind::Format, "scan file is empty").at(a.scans));
    }
    let skip = a.last.map_or(0, |n| scans.len().saturating_sub(n.max(1)));
    let used = &scans[skip..];
    let cloud = PointCloud {
        points: used.iter().flat_map(|s| s.points.iter().copied()).collect(),
        window: (used[0].seq, used[used.len() - 1].seq),
    };
    let img = render(&cloud, &cfg)?;
    for (path, bytes) in [(a.depth, img.depth_pgm()), (a.combined, img.combined_pgm())] {
        if let Some(p) = path {
            let mut w = create(p)?;
            w.write_all(&bytes)?;
            w.flush()?;
        }
    }
    if let Some(p) = a.boxes {
        let det = Detections::from_json(&read(p)?).map_err(|e| Failure::from(e).at(p))?;
        let best = det.best().ok_or_else(|| Failure::new(Kind::Format, "no detection boxes").at(p))?;
        let pos = backproject_detection(&img, best)?;
        write_json(None, &json!({ "init": [pos.x, pos.y, pos.z], "confidence": best.confidence }))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Res<()> {
    match cli.command {
        Command::Simulate { source, out, truth } => simulate(&source, &out, &truth),
        Command::Track { scans, init, mode, config, out } => track_cmd(&scans, init, mode, config.as_deref(), &out),
        Command::Eval { traj, truth, threshold, out } => eval_cmd(&traj, &truth, threshold, out.as_deref()),
        Command::Experiment { source, out_dir } => experiment(&source, &out_dir),
        Command::Ablate { axis, config, scenario, out } => ablate(axis, &config, &scenario, out.as_deref()),
        Command::RangeImage { scans, last, config, depth, combined, boxes } => range_image(RangeImageArgs {
            scans: &scans,
            last,
            config: config.as_deref(),
            depth: depth.as_deref(),
            combined: combined.as_deref(),
            boxes: boxes.as_deref(),
        }),
        Command::Scenarios { show } => {
            match show {
                Some(name) => {
                    let src = scenarios::source(&name)
                        .ok_or_else(|| Failure::new(Kind::Usage, format!("unknown scenario {name:?}")))?;
                    print!("{src}");
                }
                None => scenarios::names().for_each(|n| println!("{n}")),
            }
            Ok(())
        }
    }
}

fn report(f: &Failure) -> ExitCode {
    let mut err = json!({ "kind": f.kind.name(), "code": f.kind.code(), "message": f.message });
    if let Some(p) = &f.path {
        err["path"] = json!(p.display().to_string());
    }
    eprintln!("{}", json!({ "error": err }));
    ExitCode::from(f.kind.code())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return report(&Failure::new(Kind::Usage, e.render().to_string().trim().to_string())),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => report(&f),
    }
}
