use std::fs;
use std::net::IpAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use topostudio::export::{self, DEFAULT_ISO};
use topostudio::klm::{KlmWorkflow, OperatorTable};
use topostudio::sketch::{self, ArrowPoint, SketchError, SketchOptions};
use topostudio::{validate_problem, BackendKind, DensityField, GridDims, ProblemSpec};
use topostudio_cli::{bench, klm_report};
use topostudio_service::artifacts::{self, RunError};
use topostudio_service::config::{self, env};
use topostudio_service::ServiceConfig;
use url::Url;

const DEFAULT_REMOTE: &str = "http://127.0.0.1:8080/api/v1";

#[derive(Parser)]
#[command(name = "topostudio", version, about = "2.5D topology optimization from sketches and problem files")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize one problem and write density.json, preview.png, model.stl
    /// and metrics.json.
    Solve(SolveArgs),
    /// Sample every task/backend pair of a suite and write summary statistics as CSV.
    Bench(BenchArgs),
    /// Keystroke-level-model time of the drawer and geo workflows.
    Klm(KlmArgs),
    /// Extrude a density.json into a binary STL (or OBJ).
    ExportStl(ExportArgs),
    /// Run the HTTP job service.
    Serve(ServeArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum BackendArg {
    Det,
    Stoch,
    Remote,
}

#[derive(Args)]
struct SolveArgs {
    /// Colour-coded sketch PNG.
    #[arg(long, conflicts_with = "spec", required_unless_present = "spec")]
    sketch: Option<PathBuf>,
    /// Problem JSON.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Target volume fraction (overrides the problem file; default 0.5 for sketches).
    #[arg(long)]
    volfrac: Option<f64>,
    /// Noise strength for the stochastic backend, in [0, 1].
    #[arg(long)]
    strength: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "det")]
    backend: BackendArg,
    /// Generation service used by `--backend remote`.
    #[arg(long, env = env::REMOTE_URL, default_value = DEFAULT_REMOTE)]
    remote_url: Url,
    /// Previous density.json to regenerate from (stochastic and remote backends).
    #[arg(long)]
    base: Option<PathBuf>,
    /// Grid size for sketches.
    #[arg(long, default_value_t = 64)]
    nelx: usize,
    #[arg(long, default_value_t = 64)]
    nely: usize,
    /// Which end of a sketched arrow carries the load.
    #[arg(long, value_enum, default_value = "tail")]
    arrow_point: ArrowArg,
    /// Extrusion height of model.stl.
    #[arg(long, default_value_t = config::DEFAULT_STL_HEIGHT)]
    height: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ArrowArg {
    Tail,
    Tip,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    suite: PathBuf,
    #[arg(long, default_value_t = 20)]
    samples: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, env = env::REMOTE_URL)]
    remote_url: Option<Url>,
}

#[derive(Args)]
struct KlmArgs {
    /// `drawer` or `geo`.
    #[arg(long, required_unless_present = "table")]
    workflow: Option<String>,
    /// Design iterations after the first run (upper bound with --table).
    #[arg(long, short = 'n', default_value_t = 0)]
    iterations: u64,
    /// Compare both workflows for 0..=iterations (3 when not given).
    #[arg(long)]
    table: bool,
    /// Show per-step and per-operator times.
    #[arg(long, conflicts_with = "table")]
    breakdown: bool,
    /// JSON file of operator times in seconds, e.g. {"M": 1.2}; missing operators keep their defaults.
    #[arg(long)]
    operators: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum MeshFormat {
    Stl,
    Obj,
}

#[derive(Args)]
struct ExportArgs {
    /// density.json as written by `solve` or the service.
    density: PathBuf,
    #[arg(long, default_value_t = config::DEFAULT_STL_HEIGHT)]
    height: f64,
    /// Density level of the part boundary.
    #[arg(long, default_value_t = DEFAULT_ISO)]
    iso: f64,
    #[arg(long, value_enum, default_value = "stl")]
    format: MeshFormat,
    /// Output file; defaults to the input path with the format's extension.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, env = env::BIND, default_value = "127.0.0.1")]
    bind: IpAddr,
    #[arg(long, env = env::PORT, default_value_t = config::DEFAULT_PORT)]
    port: u16,
    #[arg(long, env = env::DATA_DIR, default_value = "topostudio-data")]
    data_dir: PathBuf,
    /// Concurrent jobs; defaults to the number of CPUs.
    #[arg(long, env = env::WORKERS)]
    workers: Option<usize>,
    /// Generation service behind the `remote` backend.
    #[arg(long, env = env::REMOTE_URL)]
    remote_url: Option<Url>,
    #[arg(long, env = env::MAX_IMAGE_SIDE, default_value_t = config::DEFAULT_MAX_IMAGE_SIDE)]
    max_image_side: u32,
    /// Browser origin allowed by CORS; any origin when absent.
    #[arg(long, env = env::CORS_ORIGIN)]
    cors_origin: Option<String>,
    #[arg(long, default_value_t = config::DEFAULT_STL_HEIGHT)]
    stl_height: f64,
}

/// Failures mapped to the exit-code contract.
enum Failure {
    /// 1: files, arguments the parser could not check.
    Io(String),
    /// 2: the problem or suite is invalid.
    Invalid(Vec<String>),
    /// 3: the engine failed on a valid problem.
    Engine(String),
}

impl Failure {
    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        Self::Io(format!("{}: {e}", path.display()))
    }

    fn report(self) -> ExitCode {
        match self {
            Self::Io(m) => {
                eprintln!("error: {m}");
                ExitCode::from(1)
            }
            Self::Invalid(issues) => {
                eprintln!("invalid problem:");
                for i in issues {
                    eprintln!("  {i}");
                }
                ExitCode::from(2)
            }
            Self::Engine(m) => {
                eprintln!("error: {m}");
                ExitCode::from(3)
            }
        }
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Solve(a) => solve(a),
        Command::Bench(a) => run_bench(a),
        Command::Klm(a) => klm(a),
        Command::ExportStl(a) => export_stl(a),
        Command::Serve(a) => serve(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => f.report(),
    }
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| Failure::io(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    serde_json::from_slice(&read(path)?).map_err(|e| Failure::Invalid(vec![format!("{}: {e}", path.display())]))
}

fn load_problem(a: &SolveArgs) -> Result<ProblemSpec, Failure> {
    if let Some(path) = &a.spec {
        let mut spec: ProblemSpec = read_json(path)?;
        spec.volfrac = a.volfrac.unwrap_or(spec.volfrac);
        spec.strength = a.strength.unwrap_or(spec.strength);
        spec.seed = a.seed.unwrap_or(spec.seed);
        return Ok(spec);
    }
    let path = a.sketch.as_ref().expect("clap requires --sketch or --spec");
    let dims = GridDims::new(a.nelx, a.nely).map_err(|e| Failure::Invalid(vec![e.to_string()]))?;
    let opts = SketchOptions {
        arrow_point: match a.arrow_point {
            ArrowArg::Tail => ArrowPoint::Tail,
            ArrowArg::Tip => ArrowPoint::Tip,
        },
    };
    let parsed = sketch::parse_png(
        &read(path)?,
        dims,
        a.volfrac.unwrap_or(0.5),
        a.strength.unwrap_or(0.0),
        a.seed.unwrap_or(0),
        &opts,
    )
    .map_err(|e| match e {
        SketchError::EmptyShape => Failure::Invalid(vec![topostudio::ValidationIssue::EmptyShape.to_string()]),
        e @ SketchError::DegenerateArrow { .. } => Failure::Invalid(vec![e.to_string()]),
        e => Failure::io(path, e),
    })?;
    Ok(parsed.spec)
}

fn solve(a: SolveArgs) -> CmdResult {
    let spec = load_problem(&a)?;
    let issues = validate_problem(&spec);
    if !issues.is_empty() {
        return Err(Failure::Invalid(issues.iter().map(ToString::to_string).collect()));
    }
    let backend = match a.backend {
        BackendArg::Det => BackendKind::Deterministic,
        BackendArg::Stoch => BackendKind::Stochastic,
        BackendArg::Remote => BackendKind::Remote(a.remote_url.clone()),
    };
    let base: Option<DensityField> = a.base.as_deref().map(read_json).transpose()?;
    let (result, files) = artifacts::run(&spec, &backend, base.as_ref(), a.height).map_err(|e| match e {
        RunError::Backend(topostudio::backends::BackendError::DimensionMismatch { expected, found }) => {
            Failure::Invalid(vec![format!("base grid {found} does not match problem grid {expected}")])
        }
        other => Failure::Engine(other.to_string()),
    })?;
    fs::create_dir_all(&a.out).map_err(|e| Failure::io(&a.out, e))?;
    for f in &files {
        let path = a.out.join(f.name);
        fs::write(&path, &f.bytes).map_err(|e| Failure::io(&path, e))?;
    }
    println!(
        "compliance {:.6}  volfrac {:.4}  iterations {}  converged {}  -> {}",
        result.compliance,
        result.achieved_volfrac,
        result.iterations,
        result.converged,
        a.out.display()
    );
    Ok(())
}

fn run_bench(a: BenchArgs) -> CmdResult {
    let suite: bench::Suite = read_json(&a.suite)?;
    let rows = bench::run(&suite, a.samples, a.remote_url.as_ref()).map_err(|e| match e {
        bench::BenchError::InvalidSuite(m) => Failure::Invalid(vec![m]),
        e => Failure::Engine(e.to_string()),
    })?;
    let file = fs::File::create(&a.out).map_err(|e| Failure::io(&a.out, e))?;
    bench::write_csv(&rows, file).map_err(|e| Failure::io(&a.out, e))?;
    for r in &rows {
        println!(
            "{:<14} {:<6} compliance {:>10.4} ± {:<8.4} volfrac {:.4} ± {:.4}",
            r.task, r.backend, r.mean_compliance, r.std_compliance, r.mean_vf, r.std_vf
        );
    }
    Ok(())
}

fn klm(a: KlmArgs) -> CmdResult {
    let table = match &a.operators {
        Some(path) => read_json::<OperatorTable>(path)?,
        None => OperatorTable::default(),
    };
    let bad = table.non_positive();
    if !bad.is_empty() {
        return Err(Failure::Invalid(
            bad.iter().map(|op| format!("operator {op} must take positive time")).collect(),
        ));
    }
    let invalid = |e: topostudio::klm::KlmError| Failure::Invalid(vec![e.to_string()]);
    if a.table {
        let max_n = if a.iterations == 0 { 3 } else { a.iterations };
        print!("{}", klm_report::comparison(max_n, &table).map_err(invalid)?);
        return Ok(());
    }
    let name = a.workflow.as_deref().expect("clap requires --workflow without --table");
    let workflow = KlmWorkflow::by_name(name).map_err(invalid)?;
    if a.breakdown {
        print!("{}", klm_report::breakdown(&workflow, a.iterations, &table).map_err(invalid)?);
    } else {
        println!("{}", klm_report::total(&workflow, a.iterations, &table).map_err(invalid)?);
    }
    Ok(())
}

fn export_stl(a: ExportArgs) -> CmdResult {
    let density: DensityField = read_json(&a.density)?;
    let mesh = export::density_to_mesh(&density, a.iso, a.height).map_err(|e| Failure::Invalid(vec![e.to_string()]))?;
    let (bytes, ext) = match a.format {
        MeshFormat::Stl => (export::write_stl(&mesh), "stl"),
        MeshFormat::Obj => (export::write_obj(&mesh).into_bytes(), "obj"),
    };
    let out = a.out.unwrap_or_else(|| a.density.with_extension(ext));
    fs::write(&out, bytes).map_err(|e| Failure::io(&out, e))?;
    println!(
        "{} triangles, volume {:.6} -> {}",
        mesh.triangles.len(),
        mesh.volume(),
        out.display()
    );
    Ok(())
}

fn serve(a: ServeArgs) -> CmdResult {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .init();
    let config = ServiceConfig {
        bind: a.bind,
        port: a.port,
        data_dir: a.data_dir,
        workers: a.workers.unwrap_or_else(config::default_workers),
        remote_url: a.remote_url,
        max_image_side: a.max_image_side,
        stl_height: a.stl_height,
        cors_origin: a.cors_origin,
    };
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::Io(e.to_string()))?;
    runtime
        .block_on(topostudio_service::serve(
            config,
            |addr| println!("listening on http://{addr}"),
            async {
                let _ = tokio::signal::ctrl_c().await;
            },
        ))
        .map_err(|e| Failure::Io(e.to_string()))
}
