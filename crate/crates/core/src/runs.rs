//! Run manifests and the files each run writes.
//!
//! A [`Manifest`] fully determines a run: the inventory and target are stored
//! inline, and every repetition seed is derived from the manifest seed.
//! [`execute`] writes the primary outputs into a directory; wall-clock timing
//! goes to a separate `timing.json` so the primary files can be compared
//! byte for byte across reruns.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::catalog::{CatalogError, Inventory, PartCatalog};
use crate::curves::{normalize, Curve, CurveError, NormalizationConfig, DEFAULT_N_HAT};
use crate::generate::{generate_archive, meta_path, Archive, GenerateError, GeneratorConfig};
use crate::geometry::Point;
use crate::kinematics::{extract_trajectories, Frame, KinematicsError, PreparedMechanism, SweepConfig};
use crate::mechanism::{MechanismDoc, MechanismError, MechanismGraph, Topology};
use crate::objective::{normalized_curves, Mode, ObjectiveReport, ObjectiveWeights};
use crate::search::{
    self, enumerate_end_connections, pareto_set, EvaluationRecord, GaConfig, Monitor, ParetoMember, Problem,
    Progress, SearchError, Trace,
};
use crate::seeding;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TIMING_FILE: &str = "timing.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const TRACE_FILE: &str = "trace.jsonl";
pub const MEDIAN_DESIGN_FILE: &str = "median_design.json";
pub const MEDIAN_CURVE_FILE: &str = "median_curve.json";
pub const TARGET_FILE: &str = "target_normalized.json";
pub const PARETO_FILE: &str = "pareto.json";
pub const END_CONNECTIONS_FILE: &str = "end_connections.jsonl";
pub const ARCHIVE_FILE: &str = "archive.jsonl";
pub const STATS_FILE: &str = "stats.json";
pub const SCAN_FILE: &str = "scan.json";
pub const FRAMES_FILE: &str = "frames.json";
pub const SVG_FILE: &str = "curves.svg";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("run cancelled")]
    Cancelled,
}

impl RunError {
    fn io(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
        move |source| RunError::Io { path: path.into(), source }
    }
}

impl From<CatalogError> for RunError {
    fn from(e: CatalogError) -> Self {
        match e {
            CatalogError::Io { path, source } => RunError::Io { path, source },
            other => RunError::Config(other.to_string()),
        }
    }
}

impl From<SearchError> for RunError {
    fn from(e: SearchError) -> Self {
        match e {
            SearchError::Infeasible(m) => RunError::Infeasible(m),
            other => RunError::Config(other.to_string()),
        }
    }
}

impl From<GenerateError> for RunError {
    fn from(e: GenerateError) -> Self {
        match e {
            GenerateError::Io { path, source } => RunError::Io { path, source },
            e @ (GenerateError::Failed { .. } | GenerateError::Exhausted | GenerateError::NoPlacement) => {
                RunError::Infeasible(e.to_string())
            }
            other => RunError::Config(other.to_string()),
        }
    }
}

impl From<CurveError> for RunError {
    fn from(e: CurveError) -> Self {
        RunError::Config(e.to_string())
    }
}

impl From<MechanismError> for RunError {
    fn from(e: MechanismError) -> Self {
        RunError::Config(e.to_string())
    }
}

impl From<KinematicsError> for RunError {
    fn from(e: KinematicsError) -> Self {
        RunError::Config(e.to_string())
    }
}

fn default_resolution() -> f64 {
    1.0
}

fn default_n_hat() -> usize {
    DEFAULT_N_HAT
}

fn default_true() -> bool {
    true
}

fn default_bin_width() -> f64 {
    10.0
}

fn default_retries() -> usize {
    100
}

/// An inventory document inline, or a `builtin:<name>` / path string.
pub fn resolve_inventory(value: &Value) -> Result<Inventory, RunError> {
    match value {
        Value::String(spec) => Ok(Inventory::resolve(spec)?),
        other => Ok(Inventory::from_json_str(&other.to_string(), None)?),
    }
}

/// A catalog document inline, or a `builtin:<name>` / path string.
pub fn resolve_catalog(value: &Value) -> Result<PartCatalog, RunError> {
    match value {
        Value::String(spec) => match spec.strip_prefix("builtin:") {
            Some(name) => Ok(PartCatalog::builtin(name)?),
            None => Ok(PartCatalog::load(Path::new(spec))?),
        },
        other => Ok(PartCatalog::from_json_value(other.clone())?),
    }
}

/// Inverse design problem as stored in manifests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub inventory: Value,
    pub target: Curve,
    #[serde(default)]
    pub weights: ObjectiveWeights,
    #[serde(default = "default_resolution")]
    pub resolution_deg: f64,
    #[serde(default = "default_n_hat")]
    pub n_hat: usize,
}

impl ProblemSpec {
    /// Four-bar problem with default weights, 1 degree sweep and 200 points.
    pub fn new(inventory: &Inventory, target: Curve) -> Self {
        Self {
            inventory: inventory.to_json_value(),
            target,
            weights: ObjectiveWeights::default(),
            resolution_deg: default_resolution(),
            n_hat: default_n_hat(),
        }
    }

    pub fn build(&self, mode: Mode) -> Result<Problem, RunError> {
        let inventory = resolve_inventory(&self.inventory)?;
        let normalization = NormalizationConfig::new(self.n_hat)?;
        Ok(Problem::new(
            Topology::four_bar(),
            inventory,
            &self.target,
            self.weights,
            SweepConfig { resolution_deg: self.resolution_deg },
            normalization,
            mode,
        )?)
    }

    /// Same problem with the inventory inlined, so the manifest is self-contained.
    pub fn inlined(&self) -> Result<Self, RunError> {
        let inventory = resolve_inventory(&self.inventory)?;
        Ok(Self { inventory: inventory.to_json_value(), ..self.clone() })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    Random,
    Greedy,
    Ga,
}

impl std::str::FromStr for Solver {
    type Err = RunError;
    fn from_str(s: &str) -> Result<Self, RunError> {
        match s {
            "random" => Ok(Solver::Random),
            "greedy" => Ok(Solver::Greedy),
            "ga" => Ok(Solver::Ga),
            other => Err(RunError::Config(format!("unknown solver `{other}` (expected random, greedy or ga)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchManifest {
    pub problem: ProblemSpec,
    pub solver: Solver,
    pub budget: usize,
    pub repeats: usize,
    #[serde(default)]
    pub ga: GaConfig,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TradeoffManifest {
    pub problem: ProblemSpec,
    pub budget: usize,
    pub repeats: usize,
    #[serde(default)]
    pub ga: GaConfig,
    pub seed: u64,
    #[serde(default = "default_true")]
    pub end_connections: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerateManifest {
    pub inventory: Value,
    pub mechanisms: usize,
    pub dyads: usize,
    #[serde(default = "default_n_hat")]
    pub points: usize,
    #[serde(default = "default_resolution")]
    pub resolution_deg: f64,
    #[serde(default = "default_retries")]
    pub max_retries: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanManifest {
    pub problem: ProblemSpec,
    pub samples: usize,
    #[serde(default = "default_bin_width")]
    pub bin_width: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderManifest {
    pub catalog: Value,
    pub mechanism: MechanismDoc,
    #[serde(default = "default_resolution")]
    pub resolution_deg: f64,
    #[serde(default = "default_n_hat")]
    pub n_hat: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Manifest {
    Match(MatchManifest),
    Tradeoff(TradeoffManifest),
    Generate(GenerateManifest),
    Scan(ScanManifest),
    Render(RenderManifest),
}

impl Manifest {
    pub fn command(&self) -> &'static str {
        match self {
            Manifest::Match(_) => "match",
            Manifest::Tradeoff(_) => "tradeoff",
            Manifest::Generate(_) => "generate",
            Manifest::Scan(_) => "scan",
            Manifest::Render(_) => "render",
        }
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path).map_err(RunError::io(path))?;
        serde_json::from_str(&text).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))
    }

    /// Copy with every referenced inventory or catalog inlined.
    pub fn inlined(&self) -> Result<Self, RunError> {
        Ok(match self {
            Manifest::Match(m) => Manifest::Match(MatchManifest { problem: m.problem.inlined()?, ..m.clone() }),
            Manifest::Tradeoff(m) => {
                Manifest::Tradeoff(TradeoffManifest { problem: m.problem.inlined()?, ..m.clone() })
            }
            Manifest::Scan(m) => Manifest::Scan(ScanManifest { problem: m.problem.inlined()?, ..m.clone() }),
            Manifest::Generate(m) => Manifest::Generate(GenerateManifest {
                inventory: resolve_inventory(&m.inventory)?.to_json_value(),
                ..m.clone()
            }),
            Manifest::Render(m) => {
                Manifest::Render(RenderManifest { catalog: resolve_catalog(&m.catalog)?.to_json_value(), ..m.clone() })
            }
        })
    }
}

/// What a finished run reports back.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub out_dir: PathBuf,
    /// Primary outputs, relative to `out_dir`.
    pub files: Vec<String>,
    pub summary: Value,
    pub wall_seconds: f64,
}

/// Runs a manifest and writes its outputs, the manifest and the timing file
/// into `out`.
pub fn execute(manifest: &Manifest, out: &Path, monitor: &dyn Monitor) -> Result<RunReport, RunError> {
    let manifest = manifest.inlined()?;
    std::fs::create_dir_all(out).map_err(RunError::io(out))?;
    let start = Instant::now();
    let mut files = vec![MANIFEST_FILE.to_string()];
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    let summary = match &manifest {
        Manifest::Match(m) => run_match(m, out, monitor, &mut files)?,
        Manifest::Tradeoff(m) => run_tradeoff(m, out, monitor, &mut files)?,
        Manifest::Generate(m) => run_generate(m, out, &mut files)?,
        Manifest::Scan(m) => run_scan(m, out, &mut files)?,
        Manifest::Render(m) => run_render(m, out, &mut files)?,
    };
    let wall_seconds = start.elapsed().as_secs_f64();
    write_json(
        &out.join(TIMING_FILE),
        &json!({ "wall_seconds": wall_seconds, "threads": rayon::current_num_threads() }),
    )?;
    Ok(RunReport { command: manifest.command().into(), out_dir: out.into(), files, summary, wall_seconds })
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), RunError> {
    let text = serde_json::to_string_pretty(value).expect("run outputs serialize") + "\n";
    std::fs::write(path, text).map_err(RunError::io(path))
}

fn write_jsonl<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), RunError> {
    let file = File::create(path).map_err(RunError::io(path))?;
    let mut w = BufWriter::new(file);
    for row in rows {
        serde_json::to_writer(&mut w, &row).expect("run outputs serialize");
        w.write_all(b"\n").map_err(RunError::io(path))?;
    }
    w.flush().map_err(RunError::io(path))
}

/// Quantile of sorted data by linear interpolation between closest ranks,
/// inclusive of both ends: position `q * (n - 1)`.
pub fn quantile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() || !(0.0..=1.0).contains(&q) {
        return None;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo]))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seeds: Vec<u64>,
    pub final_best_f_kin: Vec<f64>,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub min: f64,
    pub max: f64,
    /// Repetition whose final best is the (lower) median.
    pub median_repeat: usize,
}

impl RunSummary {
    pub fn from_finals(seeds: Vec<u64>, finals: Vec<f64>) -> Option<Self> {
        let mut order: Vec<usize> = (0..finals.len()).collect();
        order.sort_by(|&a, &b| finals[a].total_cmp(&finals[b]).then(a.cmp(&b)));
        let sorted: Vec<f64> = order.iter().map(|&i| finals[i]).collect();
        let q1 = quantile(&sorted, 0.25)?;
        let q3 = quantile(&sorted, 0.75)?;
        Some(Self {
            median: quantile(&sorted, 0.5)?,
            q1,
            q3,
            iqr: q3 - q1,
            min: sorted[0],
            max: sorted[sorted.len() - 1],
            median_repeat: order[(order.len() - 1) / 2],
            seeds,
            final_best_f_kin: finals,
        })
    }
}

/// Seed of repetition `k`.
pub fn repeat_seed(seed: u64, k: usize) -> u64 {
    seeding::derive_seed(seed, k as u64)
}

/// Combines the progress of parallel repetitions into one stream.
struct Repeats<'a> {
    inner: &'a dyn Monitor,
    budget: usize,
    state: Mutex<(Vec<usize>, f64)>,
}

struct RepeatSlot<'a> {
    shared: &'a Repeats<'a>,
    slot: usize,
}

impl<'a> Repeats<'a> {
    fn new(inner: &'a dyn Monitor, repeats: usize, budget: usize) -> Self {
        Self { inner, budget: budget * repeats, state: Mutex::new((vec![0; repeats], f64::INFINITY)) }
    }

    fn slot(&'a self, slot: usize) -> RepeatSlot<'a> {
        RepeatSlot { shared: self, slot }
    }
}

impl Monitor for RepeatSlot<'_> {
    fn on_progress(&self, p: &Progress) {
        let mut state = self.shared.state.lock().expect("progress lock");
        state.0[self.slot] = p.evaluations;
        state.1 = state.1.min(p.best_f_kin);
        self.shared.inner.on_progress(&Progress {
            evaluations: state.0.iter().sum(),
            budget: self.shared.budget,
            best_f_kin: state.1,
            pareto: p.pareto.clone(),
        });
    }

    fn is_cancelled(&self) -> bool {
        self.shared.inner.is_cancelled()
    }
}

#[derive(Serialize)]
struct TraceLine<'a> {
    repeat: usize,
    seed: u64,
    #[serde(flatten)]
    record: &'a EvaluationRecord,
}

fn trace_lines(traces: &[Trace]) -> impl Iterator<Item = TraceLine<'_>> {
    traces
        .iter()
        .enumerate()
        .flat_map(|(k, t)| t.records.iter().map(move |record| TraceLine { repeat: k, seed: t.seed, record }))
}

fn check_runs(budget: usize, repeats: usize) -> Result<(), RunError> {
    if budget == 0 || repeats == 0 {
        return Err(RunError::Config("budget and repeats must be at least 1".into()));
    }
    Ok(())
}

/// A design, its mechanism and its score, as written for the median run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignReport {
    pub repeat: usize,
    pub seed: u64,
    pub mechanism: MechanismDoc,
    pub report: ObjectiveReport,
}

fn run_match(m: &MatchManifest, out: &Path, monitor: &dyn Monitor, files: &mut Vec<String>) -> Result<Value, RunError> {
    check_runs(m.budget, m.repeats)?;
    let problem = m.problem.build(Mode::Single)?;
    let seeds: Vec<u64> = (0..m.repeats).map(|k| repeat_seed(m.seed, k)).collect();
    let repeats = Repeats::new(monitor, m.repeats, m.budget);
    let traces: Vec<Trace> = seeds
        .par_iter()
        .enumerate()
        .map(|(k, &seed)| {
            let slot = repeats.slot(k);
            match m.solver {
                Solver::Random => search::random_search(&problem, m.budget, seed, &slot),
                Solver::Greedy => search::random_greedy(&problem, m.budget, seed, &slot),
                Solver::Ga => search::ga(&problem, &m.ga, m.budget, seed, &slot),
            }
        })
        .collect::<Result<_, _>>()?;
    if traces.iter().any(|t| t.cancelled) {
        return Err(RunError::Cancelled);
    }

    write_jsonl(&out.join(TRACE_FILE), trace_lines(&traces))?;
    let finals: Vec<f64> = traces.iter().map(|t| t.final_best_f_kin().expect("budget is positive")).collect();
    let summary = RunSummary::from_finals(seeds.clone(), finals).expect("repeats is positive");

    let k = summary.median_repeat;
    let best = traces[k].best().expect("budget is positive");
    let design = problem.design(&best.genes());
    let (report, motion) = problem.evaluator().evaluate_with_motion(&design);
    let catalog = problem.inventory().catalog();
    let mechanism = design.decode(catalog)?.to_doc();
    let median_curve = match (&motion, report.best_curve) {
        (Some((_, mo)), Some(id)) => normalized_curves(mo, problem.evaluator().normalization())
            .into_iter()
            .find(|(part, hole, _)| (*part, *hole) == id)
            .map(|(_, _, c)| c),
        _ => None,
    };
    write_json(&out.join(SUMMARY_FILE), &json!({ "solver": m.solver, "budget": m.budget, "summary": summary }))?;
    write_json(&out.join(MEDIAN_DESIGN_FILE), &DesignReport { repeat: k, seed: seeds[k], mechanism, report })?;
    write_json(&out.join(TARGET_FILE), problem.evaluator().normalized_target())?;
    files.extend([TRACE_FILE, SUMMARY_FILE, MEDIAN_DESIGN_FILE, TARGET_FILE].map(String::from));
    if let Some(c) = median_curve {
        write_json(&out.join(MEDIAN_CURVE_FILE), &c)?;
        files.push(MEDIAN_CURVE_FILE.into());
    }
    Ok(serde_json::to_value(&summary).expect("summary serializes"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EndConnectionRow {
    pub p: Vec<usize>,
    pub h: Vec<usize>,
    pub f_kin: f64,
    pub f_ghg: f64,
    pub admissible: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TradeoffSummary {
    pub seeds: Vec<u64>,
    pub evaluations: usize,
    pub front_size: usize,
    /// Distinct `f_ghg` values over all evaluations, ascending.
    pub ghg_levels: Vec<f64>,
    pub best_f_kin: f64,
    pub end_connections: Option<usize>,
    /// End-connection designs not dominated-or-equalled by the front.
    pub end_connections_undominated: Option<usize>,
}

/// True when some front member is at least as good in both objectives.
pub fn covered_by(front: &[ParetoMember], point: (f64, f64)) -> bool {
    front.iter().any(|m| m.f_kin <= point.0 && m.f_ghg <= point.1)
}

fn run_tradeoff(
    m: &TradeoffManifest,
    out: &Path,
    monitor: &dyn Monitor,
    files: &mut Vec<String>,
) -> Result<Value, RunError> {
    check_runs(m.budget, m.repeats)?;
    let problem = m.problem.build(Mode::Multi)?;
    let seeds: Vec<u64> = (0..m.repeats).map(|k| repeat_seed(m.seed, k)).collect();
    let repeats = Repeats::new(monitor, m.repeats, m.budget);
    let traces: Vec<Trace> = seeds
        .par_iter()
        .enumerate()
        .map(|(k, &seed)| search::nsga2(&problem, &m.ga, m.budget, seed, &repeats.slot(k)).map(|r| r.0))
        .collect::<Result<_, _>>()?;
    if traces.iter().any(|t| t.cancelled) {
        return Err(RunError::Cancelled);
    }
    write_jsonl(&out.join(TRACE_FILE), trace_lines(&traces))?;
    let front = pareto_set(traces.iter().flat_map(|t| &t.records));
    write_json(&out.join(PARETO_FILE), &front)?;
    files.extend([TRACE_FILE, PARETO_FILE].map(String::from));

    let mut ghg_levels: Vec<f64> = traces.iter().flat_map(|t| t.records.iter().map(|r| r.f_ghg)).collect();
    ghg_levels.sort_by(f64::total_cmp);
    ghg_levels.dedup();
    let mut summary = TradeoffSummary {
        seeds,
        evaluations: traces.iter().map(Trace::len).sum(),
        front_size: front.len(),
        ghg_levels,
        best_f_kin: front.iter().map(|p| p.f_kin).fold(f64::INFINITY, f64::min),
        end_connections: None,
        end_connections_undominated: None,
    };
    if m.end_connections {
        let rows: Vec<EndConnectionRow> = enumerate_end_connections(&problem)
            .into_iter()
            .map(|(v, r)| EndConnectionRow { p: v.p, h: v.h, f_kin: r.f_kin, f_ghg: r.f_ghg, admissible: r.admissible })
            .collect();
        summary.end_connections = Some(rows.len());
        summary.end_connections_undominated =
            Some(rows.iter().filter(|r| !covered_by(&front, (r.f_kin, r.f_ghg))).count());
        write_jsonl(&out.join(END_CONNECTIONS_FILE), &rows)?;
        files.push(END_CONNECTIONS_FILE.into());
    }
    write_json(&out.join(SUMMARY_FILE), &summary)?;
    files.push(SUMMARY_FILE.into());
    Ok(serde_json::to_value(&summary).expect("summary serializes"))
}

fn run_generate(m: &GenerateManifest, out: &Path, files: &mut Vec<String>) -> Result<Value, RunError> {
    let mut cfg = GeneratorConfig::new(resolve_inventory(&m.inventory)?, m.mechanisms, m.dyads, m.points, m.seed);
    cfg.sweep = SweepConfig { resolution_deg: m.resolution_deg };
    cfg.max_retries = m.max_retries;
    let path = out.join(ARCHIVE_FILE);
    let archive = match generate_archive(&cfg) {
        Ok(a) => a,
        Err(GenerateError::Failed { index, retries, last, partial }) => {
            partial.save(&path)?;
            return Err(RunError::Infeasible(format!(
                "mechanism {index} failed after {retries} attempts ({last}); partial archive written to {}",
                path.display()
            )));
        }
        Err(e) => return Err(e.into()),
    };
    archive.save(&path)?;
    let stats = archive.stats().ok();
    write_json(&out.join(STATS_FILE), &stats)?;
    let meta = meta_path(Path::new(ARCHIVE_FILE)).to_string_lossy().into_owned();
    files.extend([ARCHIVE_FILE.to_string(), meta, STATS_FILE.to_string()]);
    Ok(serde_json::to_value(stats).expect("stats serialize"))
}

/// Statistics of an archive file.
pub fn archive_file_stats(path: &Path) -> Result<crate::generate::ArchiveStats, RunError> {
    Ok(Archive::load(path)?.stats()?)
}

fn run_scan(m: &ScanManifest, out: &Path, files: &mut Vec<String>) -> Result<Value, RunError> {
    if m.samples == 0 || !(m.bin_width > 0.0) {
        return Err(RunError::Config("samples must be at least 1 and bin_width positive".into()));
    }
    let problem = m.problem.build(Mode::Single)?;
    let report = search::scarcity_scan(&problem, m.samples, m.seed, m.bin_width);
    write_json(&out.join(SCAN_FILE), &report)?;
    files.push(SCAN_FILE.into());
    Ok(json!({
        "samples": report.samples,
        "full_range_fraction": report.full_range_fraction,
        "admissible_fraction": report.admissible_fraction,
        "within_locked_score_fraction": report.within_locked_score_fraction,
    }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RangeSummary {
    pub theta_min: f64,
    pub theta_max: f64,
    pub is_full: bool,
    pub span: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryExport {
    pub part: usize,
    pub hole: usize,
    pub raw: Vec<Point>,
    /// `None` when the raw curve cannot be normalized.
    pub normalized: Option<Vec<Point>>,
}

/// Animation frames and coupler curves of one mechanism.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderOutput {
    pub resolution_deg: f64,
    pub range: RangeSummary,
    pub frames: Vec<Frame>,
    pub trajectories: Vec<TrajectoryExport>,
    pub warning: Option<String>,
}

pub fn render(
    catalog: &PartCatalog,
    doc: &MechanismDoc,
    resolution_deg: f64,
    n_hat: usize,
) -> Result<RenderOutput, RunError> {
    let g = MechanismGraph::from_doc(doc.clone(), catalog)?;
    let sweep = SweepConfig { resolution_deg };
    let normalization = NormalizationConfig::new(n_hat)?;
    let motion = PreparedMechanism::new(&g, catalog)?.sweep(&sweep)?;
    let trajectories = extract_trajectories(&motion)
        .into_iter()
        .map(|(part, hole, raw)| TrajectoryExport {
            part,
            hole,
            normalized: normalize(&raw, &normalization).ok().map(|c| c.points),
            raw: raw.points,
        })
        .collect();
    let range = &motion.range;
    Ok(RenderOutput {
        resolution_deg,
        range: RangeSummary { theta_min: range.theta_min, theta_max: range.theta_max, is_full: range.is_full, span: range.span() },
        warning: motion.frames.is_empty().then(|| "mechanism is locked at every sampled angle".to_string()),
        frames: motion.frames,
        trajectories,
    })
}

/// Normalized coupler curves as SVG polylines, one per curve, all points kept.
pub fn render_svg(r: &RenderOutput) -> String {
    let curves: Vec<(&TrajectoryExport, &Vec<Point>)> =
        r.trajectories.iter().filter_map(|t| t.normalized.as_ref().map(|n| (t, n))).collect();
    let mut extent = 1.0f64;
    for (_, pts) in &curves {
        for p in pts.iter() {
            extent = extent.max(p.x.abs()).max(p.y.abs());
        }
    }
    let half = extent * 1.1;
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"{} {} {} {}\" width=\"600\" height=\"600\">\n",
        -half,
        -half,
        2.0 * half,
        2.0 * half
    );
    svg += "<g transform=\"scale(1,-1)\" fill=\"none\" stroke=\"black\" stroke-width=\"0.02\">\n";
    for (t, pts) in curves {
        let coords: Vec<String> = pts.iter().map(|p| format!("{:.6},{:.6}", p.x, p.y)).collect();
        svg += &format!(
            "<polyline data-part=\"{}\" data-hole=\"{}\" points=\"{}\"/>\n",
            t.part,
            t.hole,
            coords.join(" ")
        );
    }
    svg += "</g>\n</svg>\n";
    svg
}

fn run_render(m: &RenderManifest, out: &Path, files: &mut Vec<String>) -> Result<Value, RunError> {
    let catalog = resolve_catalog(&m.catalog)?;
    let r = render(&catalog, &m.mechanism, m.resolution_deg, m.n_hat)?;
    write_json(&out.join(FRAMES_FILE), &r)?;
    let svg_path = out.join(SVG_FILE);
    std::fs::write(&svg_path, render_svg(&r)).map_err(RunError::io(&svg_path))?;
    files.extend([FRAMES_FILE, SVG_FILE].map(String::from));
    Ok(json!({ "frames": r.frames.len(), "span": r.range.span, "curves": r.trajectories.len(), "warning": r.warning }))
}
