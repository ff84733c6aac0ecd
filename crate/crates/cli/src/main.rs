//! `stocklink` command line.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 I/O error,
//! 4 infeasible inventory or generation, 5 cancelled.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use stocklink::catalog::{Inventory, PartCatalog};
use stocklink::curves::{Curve, DEFAULT_N_HAT};
use stocklink::generate::ArchiveStats;
use stocklink::mechanism::{MechanismDoc, Topology};
use stocklink::runs::{
    self, GenerateManifest, Manifest, MatchManifest, ProblemSpec, RenderManifest, RunError, RunReport, ScanManifest,
    Solver, TradeoffManifest,
};
use stocklink::search::{self, GaConfig, Silent};
use stocklink_service::ServiceConfig;

#[derive(Parser)]
#[command(name = "stocklink", version, about = "Linkage design from a finite inventory of standard parts")]
struct Cli {
    /// Worker threads; defaults to the number of cores. Outputs do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Catalog and inventory utilities.
    Catalog {
        #[command(subcommand)]
        action: CatalogCommand,
    },
    /// Generate a mechanism archive with normalized coupler curves.
    Generate(GenerateArgs),
    /// Print the statistics of an archive file.
    Stats {
        archive: PathBuf,
    },
    /// Single-objective inverse design against a target curve.
    Match(MatchArgs),
    /// Kinematics vs GHG trade-off with NSGA-II and end-connection enumeration.
    Tradeoff(TradeoffArgs),
    /// Animation frames and an SVG of the coupler curves of one mechanism.
    Render(RenderArgs),
    /// Histogram of the kinematic objective over uniformly sampled designs.
    Scan(ScanArgs),
    /// Write the coupler curve of a random fully turning design as a target.
    Target(TargetArgs),
    /// Serve the HTTP/JSON API.
    Serve(ServeArgs),
}

#[derive(Subcommand)]
enum CatalogCommand {
    /// Check a catalog or inventory document (`builtin:<name>` or a path).
    Validate { source: String },
}

#[derive(Args)]
struct RunArgs {
    /// Output directory.
    #[arg(short, long)]
    out: PathBuf,
    /// Rerun a recorded manifest; other run options are ignored.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, default_value = "builtin:archive")]
    inventory: String,
    #[arg(long, default_value_t = 1000)]
    mechanisms: usize,
    #[arg(long, default_value_t = 2)]
    dyads: usize,
    /// Points per normalized curve.
    #[arg(long, default_value_t = DEFAULT_N_HAT)]
    points: usize,
    /// Sweep step in degrees.
    #[arg(long, default_value_t = 1.0)]
    resolution: f64,
}

#[derive(Args)]
struct ProblemArgs {
    /// Target curve file `{"points": [[x, y], ...], "closed": bool}`.
    #[arg(long)]
    target: Option<PathBuf>,
    /// Sweep step in degrees.
    #[arg(long, default_value_t = 1.0)]
    resolution: f64,
    /// Points per normalized curve.
    #[arg(long, default_value_t = DEFAULT_N_HAT)]
    points: usize,
}

#[derive(Args)]
struct MatchArgs {
    #[command(flatten)]
    run: RunArgs,
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long, default_value = "builtin:reduced")]
    inventory: String,
    /// random, greedy or ga.
    #[arg(long, default_value = "ga")]
    solver: String,
    #[arg(long, default_value_t = 10_000)]
    budget: usize,
    #[arg(long, default_value_t = 1)]
    repeats: usize,
}

#[derive(Args)]
struct TradeoffArgs {
    #[command(flatten)]
    run: RunArgs,
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long, default_value = "builtin:tradeoff")]
    inventory: String,
    #[arg(long, default_value_t = 10_000)]
    budget: usize,
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    /// Skip the end-connection enumeration.
    #[arg(long)]
    no_end_connections: bool,
}

#[derive(Args)]
struct ScanArgs {
    #[command(flatten)]
    run: RunArgs,
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long, default_value = "builtin:reduced")]
    inventory: String,
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long, default_value_t = 10.0)]
    bin_width: f64,
}

#[derive(Args)]
struct RenderArgs {
    /// Output directory.
    #[arg(short, long)]
    out: PathBuf,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Mechanism file; a document with a `mechanism` field also works.
    #[arg(long)]
    mechanism: Option<PathBuf>,
    #[arg(long, default_value = "builtin:reduced")]
    catalog: String,
    #[arg(long, default_value_t = 1.0)]
    resolution: f64,
    #[arg(long, default_value_t = DEFAULT_N_HAT)]
    points: usize,
}

#[derive(Args)]
struct TargetArgs {
    /// Output curve file.
    #[arg(short, long)]
    out: PathBuf,
    #[arg(long, default_value = "builtin:reduced")]
    inventory: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080", env = "STOCKLINK_ADDR")]
    addr: SocketAddr,
    /// Directory for job outputs.
    #[arg(long, default_value = "stocklink-work", env = "STOCKLINK_WORKDIR")]
    workdir: PathBuf,
    #[arg(long, default_value = "builtin:reduced")]
    inventory: String,
    #[arg(long, default_value_t = 1, env = "STOCKLINK_MAX_PARALLEL")]
    max_parallel: usize,
    /// Queued plus running jobs accepted before refusing new ones.
    #[arg(long, default_value_t = 16)]
    max_jobs: usize,
    /// Directory with the studio bundle.
    #[arg(long = "static")]
    static_dir: Option<PathBuf>,
}

fn exit_code(e: &RunError) -> u8 {
    match e {
        RunError::Config(_) => 2,
        RunError::Io { .. } => 3,
        RunError::Infeasible(_) => 4,
        RunError::Cancelled => 5,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(command: Command) -> Result<(), RunError> {
    match command {
        Command::Catalog { action: CatalogCommand::Validate { source } } => validate(&source),
        Command::Generate(a) => {
            let manifest = from_manifest(&a.run, "generate", || {
                Ok(Manifest::Generate(GenerateManifest {
                    inventory: json!(a.inventory),
                    mechanisms: a.mechanisms,
                    dyads: a.dyads,
                    points: a.points,
                    resolution_deg: a.resolution,
                    max_retries: 100,
                    seed: a.run.seed,
                }))
            })?;
            let report = execute(&manifest, &a.run.out)?;
            if let Ok(stats) = serde_json::from_value::<ArchiveStats>(report.summary) {
                print_stats(&stats);
            }
            Ok(())
        }
        Command::Stats { archive } => {
            let stats = runs::archive_file_stats(&archive)?;
            print_stats(&stats);
            Ok(())
        }
        Command::Match(a) => {
            let manifest = from_manifest(&a.run, "match", || {
                Ok(Manifest::Match(MatchManifest {
                    problem: problem(&a.problem, &a.inventory)?,
                    solver: a.solver.parse::<Solver>()?,
                    budget: a.budget,
                    repeats: a.repeats,
                    ga: GaConfig::default(),
                    seed: a.run.seed,
                }))
            })?;
            print_summary(&execute(&manifest, &a.run.out)?);
            Ok(())
        }
        Command::Tradeoff(a) => {
            let manifest = from_manifest(&a.run, "tradeoff", || {
                Ok(Manifest::Tradeoff(TradeoffManifest {
                    problem: problem(&a.problem, &a.inventory)?,
                    budget: a.budget,
                    repeats: a.repeats,
                    ga: GaConfig::default(),
                    seed: a.run.seed,
                    end_connections: !a.no_end_connections,
                }))
            })?;
            print_summary(&execute(&manifest, &a.run.out)?);
            Ok(())
        }
        Command::Scan(a) => {
            let manifest = from_manifest(&a.run, "scan", || {
                Ok(Manifest::Scan(ScanManifest {
                    problem: problem(&a.problem, &a.inventory)?,
                    samples: a.samples,
                    bin_width: a.bin_width,
                    seed: a.run.seed,
                }))
            })?;
            print_summary(&execute(&manifest, &a.run.out)?);
            Ok(())
        }
        Command::Render(a) => {
            let manifest = match &a.manifest {
                Some(path) => expect_command(Manifest::load(path)?, "render")?,
                None => {
                    let path = a.mechanism.as_ref().ok_or_else(|| RunError::Config("--mechanism is required".into()))?;
                    Manifest::Render(RenderManifest {
                        catalog: json!(a.catalog),
                        mechanism: load_mechanism(path)?,
                        resolution_deg: a.resolution,
                        n_hat: a.points,
                    })
                }
            };
            let report = execute(&manifest, &a.out)?;
            if let Some(w) = report.summary.get("warning").and_then(|w| w.as_str()) {
                eprintln!("warning: {w}");
            }
            print_summary(&report);
            Ok(())
        }
        Command::Target(a) => {
            let inventory = Inventory::resolve(&a.inventory)?;
            let topo = std::sync::Arc::new(Topology::four_bar());
            let (design, (part, hole), curve) = search::self_seeded_target(&topo, &inventory, a.seed, 100_000)?;
            runs::write_json(&a.out, &curve)?;
            println!("{}", json!({ "p": design.p, "h": design.h, "part": part, "hole": hole, "points": curve.len() }));
            Ok(())
        }
        Command::Serve(a) => {
            let mut config = ServiceConfig::new(Inventory::resolve(&a.inventory)?, a.workdir);
            config.max_parallel = a.max_parallel;
            config.max_active = a.max_jobs;
            config.static_dir = a.static_dir;
            let runtime = tokio::runtime::Runtime::new().map_err(|e| RunError::Config(e.to_string()))?;
            eprintln!("listening on http://{}", a.addr);
            runtime
                .block_on(stocklink_service::serve(a.addr, config))
                .map_err(|source| RunError::Io { path: PathBuf::from(a.addr.to_string()), source })
        }
    }
}

fn expect_command(m: Manifest, command: &str) -> Result<Manifest, RunError> {
    if m.command() != command {
        return Err(RunError::Config(format!("manifest is for `{}`, not `{command}`", m.command())));
    }
    Ok(m)
}

fn from_manifest(
    run: &RunArgs,
    command: &str,
    build: impl FnOnce() -> Result<Manifest, RunError>,
) -> Result<Manifest, RunError> {
    match &run.manifest {
        Some(path) => expect_command(Manifest::load(path)?, command),
        None => build(),
    }
}

fn problem(args: &ProblemArgs, inventory: &str) -> Result<ProblemSpec, RunError> {
    let path = args.target.as_ref().ok_or_else(|| RunError::Config("--target is required".into()))?;
    let text = std::fs::read_to_string(path).map_err(|source| RunError::Io { path: path.clone(), source })?;
    let target: Curve =
        serde_json::from_str(&text).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
    let mut spec = ProblemSpec::new(&Inventory::resolve(inventory)?, target);
    spec.resolution_deg = args.resolution;
    spec.n_hat = args.points;
    Ok(spec)
}

fn load_mechanism(path: &Path) -> Result<MechanismDoc, RunError> {
    let text = std::fs::read_to_string(path).map_err(|source| RunError::Io { path: path.into(), source })?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
    let doc = value.get("mechanism").cloned().unwrap_or(value);
    serde_json::from_value(doc).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))
}

fn execute(manifest: &Manifest, out: &Path) -> Result<RunReport, RunError> {
    let report = runs::execute(manifest, out, &Silent)?;
    eprintln!("{} finished in {:.2} s; outputs in {}", report.command, report.wall_seconds, out.display());
    for f in &report.files {
        eprintln!("  {f}");
    }
    Ok(report)
}

fn print_summary(report: &RunReport) {
    println!("{}", serde_json::to_string_pretty(&report.summary).expect("summary serializes"));
}

fn print_stats(s: &ArchiveStats) {
    println!("mechanisms                 {}", s.mechanisms);
    println!("curves                     {}", s.curves);
    println!("curves per mechanism       {:.2}", s.avg_curves_per_mechanism);
    println!("mean operating range [deg] {:.1}", s.mean_operating_range_deg);
    println!("closed curves [%]          {:.1}", s.pct_closed);
    println!("circle-part curves [%]     {:.1}", s.pct_circle_part);
}

fn validate(source: &str) -> Result<(), RunError> {
    let text = match source.strip_prefix("builtin:") {
        Some(_) => None,
        None => Some(std::fs::read_to_string(source).map_err(|e| RunError::Io { path: source.into(), source: e })?),
    };
    let is_inventory = match &text {
        Some(t) => serde_json::from_str::<serde_json::Value>(t)
            .map_err(|e| RunError::Config(format!("{source}: {e}")))?
            .get("counts")
            .is_some(),
        None => Inventory::resolve(source).is_ok(),
    };
    let (catalog, counts) = if is_inventory {
        let inv = Inventory::resolve(source)?;
        let counts: Vec<Option<u32>> = inv.counts().iter().map(|&a| a.into()).collect();
        (inv.catalog().clone(), Some(counts))
    } else {
        let catalog = match source.strip_prefix("builtin:") {
            Some(name) => PartCatalog::builtin(name)?,
            None => PartCatalog::load(Path::new(source))?,
        };
        (catalog, None)
    };
    println!("ok: N = {} part types, C = {} holes max", catalog.len(), catalog.max_hole_count());
    for p in catalog.parts() {
        let available = match counts.as_ref().map(|c| c[p.id]) {
            Some(Some(n)) => n.to_string(),
            Some(None) => "unbounded".into(),
            None => "-".into(),
        };
        println!(
            "  {:>2} {} {:<12} holes {:>2}  ghg {:>6.2} g  available {}",
            p.id,
            p.shape,
            p.name,
            p.hole_count(),
            catalog.ghg_of_part(p),
            available
        );
    }
    Ok(())
}
