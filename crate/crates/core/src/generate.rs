//! Random assembly of mechanisms from an inventory by repeated dyad
//! addition, and curve archives built from them.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Availability, Inventory, PartCatalog};
use crate::curves::{classify, normalize, CircleFitConfig, NormalizationConfig};
use crate::geometry::Point;
use crate::kinematics::{extract_trajectories, KinematicsError, PreparedMechanism, SweepConfig};
use crate::mechanism::{ActuatorAngle, Branch, Dyad, MechanismDoc, MechanismError, MechanismGraph};
use crate::seeding;

/// Attempts at drawing two parent pins that do not share a part.
const PARENT_DRAWS: usize = 64;

#[derive(Debug, Error)]
pub enum GenerateError {
    #[error("inventory has no part left to place")]
    Exhausted,
    #[error("no pair of parent pins can carry a new dyad")]
    NoPlacement,
    #[error("the new dyad cannot close at the assembly angle")]
    NotAssemblable,
    #[error("invalid generator config: {0}")]
    Config(String),
    #[error("mechanism {index} could not be generated after {retries} attempts: {last}")]
    Failed { index: usize, retries: usize, last: Box<GenerateError>, partial: Box<Archive> },
    #[error("archive is empty")]
    EmptyArchive,
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {source}")]
    Format { path: PathBuf, line: usize, source: serde_json::Error },
}

/// Stock left while one mechanism is being assembled.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InventoryState {
    remaining: Vec<Availability>,
}

impl InventoryState {
    pub fn new(inventory: &Inventory) -> Self {
        Self { remaining: inventory.counts().to_vec() }
    }

    pub fn remaining(&self) -> &[Availability] {
        &self.remaining
    }

    pub fn available_types(&self) -> Vec<usize> {
        (0..self.remaining.len()).filter(|&k| self.remaining[k].allows(1)).collect()
    }

    fn has_units(&self, n: usize) -> bool {
        let mut total = 0;
        for a in &self.remaining {
            match a {
                Availability::Unbounded => return true,
                Availability::Limited(m) => total += *m as usize,
            }
        }
        total >= n
    }

    fn take(&mut self, rng: &mut impl Rng) -> Result<usize, GenerateError> {
        let part = *self.available_types().choose(rng).ok_or(GenerateError::Exhausted)?;
        if let Availability::Limited(n) = &mut self.remaining[part] {
            *n -= 1;
        }
        Ok(part)
    }
}

/// Editable copy of a graph's incidence lists.
struct Draft {
    part_types: Vec<usize>,
    n_pins: usize,
    edges: Vec<(usize, usize, usize)>,
    ground: usize,
    actuator: usize,
    pivot: usize,
    dyads: Vec<Dyad>,
    branches: Vec<Branch>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Parent {
    Existing(usize),
    New { host: usize, hole: usize },
}

impl Draft {
    fn from_graph(g: &MechanismGraph) -> Self {
        let t = g.topology();
        Self {
            part_types: g.part_types().to_vec(),
            n_pins: t.n_pins,
            edges: t.edges.iter().zip(g.holes()).map(|(&(part, pin), &hole)| (part, pin, hole)).collect(),
            ground: t.ground,
            actuator: t.actuator,
            pivot: t.pivot,
            dyads: t.dyads.clone(),
            branches: g.branch_signs().to_vec(),
        }
    }

    fn free_holes(&self, part: usize, catalog: &PartCatalog) -> Vec<usize> {
        let n = catalog.part(self.part_types[part]).hole_count();
        (0..n).filter(|&h| !self.edges.iter().any(|&(p, _, used)| p == part && used == h)).collect()
    }

    fn parts_on(&self, parent: Parent) -> Vec<usize> {
        match parent {
            Parent::Existing(pin) => self.edges.iter().filter(|e| e.1 == pin).map(|e| e.0).collect(),
            Parent::New { host, .. } => vec![host],
        }
    }

    fn draw_parent(&self, catalog: &PartCatalog, rng: &mut impl Rng) -> Option<Parent> {
        let hosts: Vec<(usize, Vec<usize>)> = (0..self.part_types.len())
            .map(|part| (part, self.free_holes(part, catalog)))
            .filter(|(_, free)| !free.is_empty())
            .collect();
        if rng.random_bool(0.5) || hosts.is_empty() {
            return (self.n_pins > 0).then(|| Parent::Existing(rng.random_range(0..self.n_pins)));
        }
        let (host, free) = hosts.choose(rng)?;
        Some(Parent::New { host: *host, hole: *free.choose(rng)? })
    }

    /// Pins carrying a dyad must not lie on a common part, otherwise the new
    /// children form a rigid triangle with that part.
    fn draw_parents(&self, catalog: &PartCatalog, rng: &mut impl Rng) -> Option<(Parent, Parent)> {
        for _ in 0..PARENT_DRAWS {
            let (a, b) = (self.draw_parent(catalog, rng)?, self.draw_parent(catalog, rng)?);
            let on_a = self.parts_on(a);
            if a != b && !self.parts_on(b).iter().any(|p| on_a.contains(p)) {
                return Some((a, b));
            }
        }
        None
    }

    fn attach(&mut self, parent: Parent) -> usize {
        match parent {
            Parent::Existing(pin) => pin,
            Parent::New { host, hole } => {
                let pin = self.new_pin();
                self.edges.push((host, pin, hole));
                pin
            }
        }
    }

    fn new_pin(&mut self) -> usize {
        self.n_pins += 1;
        self.n_pins - 1
    }

    fn build(self, catalog: &PartCatalog) -> Result<MechanismGraph, MechanismError> {
        MechanismGraph::assemble(
            catalog,
            self.part_types,
            self.n_pins,
            &self.edges,
            self.ground,
            self.actuator,
            self.pivot,
            self.dyads,
            self.branches,
        )
    }
}

fn two_holes(catalog: &PartCatalog, part_type: usize, rng: &mut impl Rng) -> (usize, usize) {
    let n = catalog.part(part_type).hole_count();
    let picked = rand::seq::index::sample(rng, n, 2);
    (picked.index(0), picked.index(1))
}

/// Ground and actuator joined by the actuated pivot.
pub fn start_graph(
    catalog: &PartCatalog,
    state: &mut InventoryState,
    rng: &mut impl Rng,
) -> Result<MechanismGraph, GenerateError> {
    if !state.has_units(2) {
        return Err(GenerateError::Exhausted);
    }
    let ground = state.take(rng)?;
    let actuator = state.take(rng)?;
    let g_hole = rng.random_range(0..catalog.part(ground).hole_count());
    let a_hole = rng.random_range(0..catalog.part(actuator).hole_count());
    let g = MechanismGraph::assemble(
        catalog,
        vec![ground, actuator],
        1,
        &[(0, 0, g_hole), (1, 0, a_hole)],
        0,
        1,
        0,
        vec![],
        vec![],
    )?;
    Ok(g)
}

/// Adds two children hanging from two parent pins, each either an existing
/// pin or a new pin on a free hole of a placed part (even odds).
pub fn add_dyad(
    g: &MechanismGraph,
    catalog: &PartCatalog,
    state: &mut InventoryState,
    rng: &mut impl Rng,
) -> Result<MechanismGraph, GenerateError> {
    if !state.has_units(2) {
        return Err(GenerateError::Exhausted);
    }
    let mut draft = Draft::from_graph(g);
    let (a, b) = draft.draw_parents(catalog, rng).ok_or(GenerateError::NoPlacement)?;
    let c1_type = state.take(rng)?;
    let c2_type = state.take(rng)?;
    let (c1_parent_hole, c1_joint_hole) = two_holes(catalog, c1_type, rng);
    let (c2_parent_hole, c2_joint_hole) = two_holes(catalog, c2_type, rng);
    let branch = if rng.random_bool(0.5) { Branch::Positive } else { Branch::Negative };

    let parent_a = draft.attach(a);
    let parent_b = draft.attach(b);
    let joint = draft.new_pin();
    let child1 = draft.part_types.len();
    let child2 = child1 + 1;
    draft.part_types.extend([c1_type, c2_type]);
    draft.edges.extend([
        (child1, parent_a, c1_parent_hole),
        (child1, joint, c1_joint_hole),
        (child2, parent_b, c2_parent_hole),
        (child2, joint, c2_joint_hole),
    ]);
    draft.dyads.push(Dyad { child1, child2, parent_a, parent_b, joint });
    draft.branches.push(branch);
    Ok(draft.build(catalog)?)
}

/// One mechanism with `n_dyads` dyads, retrying from scratch with a fresh
/// inventory on failure.
pub fn random_mechanism(
    inventory: &Inventory,
    n_dyads: usize,
    max_retries: usize,
    rng: &mut impl Rng,
) -> Result<MechanismGraph, GenerateError> {
    let catalog = inventory.catalog();
    let mut last = GenerateError::Exhausted;
    let mut attempts = 0;
    'restart: while attempts < max_retries.max(1) {
        attempts += 1;
        let mut state = InventoryState::new(inventory);
        let mut g = start_graph(catalog, &mut state, rng)?;
        for _ in 0..n_dyads {
            loop {
                let mut trial = state.clone();
                match add_dyad(&g, catalog, &mut trial, rng) {
                    Ok(next) if assembles(&next, catalog) => {
                        g = next;
                        state = trial;
                        break;
                    }
                    Ok(_) => last = GenerateError::NotAssemblable,
                    Err(e) => {
                        last = e;
                        continue 'restart;
                    }
                }
                attempts += 1;
                if attempts >= max_retries.max(1) {
                    break 'restart;
                }
            }
        }
        return Ok(g);
    }
    Err(last)
}

/// Whether every dyad closes at the assembly angle.
fn assembles(g: &MechanismGraph, catalog: &PartCatalog) -> bool {
    let prepared = PreparedMechanism::new(g, catalog).expect("generated graphs are admissible");
    prepared.solve(ActuatorAngle::new(0.0).expect("finite")).frame().is_some()
}

#[derive(Clone, Debug)]
pub struct GeneratorConfig {
    pub n_mechanisms: usize,
    pub n_dyads: usize,
    pub n_points: usize,
    pub seed: u64,
    pub inventory: Inventory,
    pub sweep: SweepConfig,
    pub max_retries: usize,
}

impl GeneratorConfig {
    pub fn new(inventory: Inventory, n_mechanisms: usize, n_dyads: usize, n_points: usize, seed: u64) -> Self {
        Self { n_mechanisms, n_dyads, n_points, seed, inventory, sweep: SweepConfig::default(), max_retries: 100 }
    }

    pub fn validate(&self) -> Result<(), GenerateError> {
        if self.n_dyads < 1 {
            return Err(GenerateError::Config("at least one dyad is required".into()));
        }
        if self.n_points < 8 {
            return Err(GenerateError::Config("curves need at least 8 points".into()));
        }
        self.sweep.samples()?;
        Ok(())
    }

    pub fn settings(&self) -> GeneratorSettings {
        GeneratorSettings {
            n_mechanisms: self.n_mechanisms,
            n_dyads: self.n_dyads,
            n_points: self.n_points,
            seed: self.seed,
            resolution_deg: self.sweep.resolution_deg,
            max_retries: self.max_retries,
        }
    }
}

/// Scalar part of [`GeneratorConfig`], as stored in archive metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSettings {
    pub n_mechanisms: usize,
    pub n_dyads: usize,
    pub n_points: usize,
    pub seed: u64,
    pub resolution_deg: f64,
    pub max_retries: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchiveCurve {
    pub part: usize,
    pub hole: usize,
    pub closed: bool,
    pub circle: bool,
    pub points: Vec<Point>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchiveRecord {
    pub mechanism: MechanismDoc,
    pub range_deg: f64,
    pub curves: Vec<ArchiveCurve>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchiveStats {
    pub mechanisms: usize,
    pub curves: usize,
    pub avg_curves_per_mechanism: f64,
    pub mean_operating_range_deg: f64,
    pub pct_closed: f64,
    pub pct_circle_part: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchiveMeta {
    pub settings: GeneratorSettings,
    pub inventory: serde_json::Value,
    pub catalog_hash: String,
    /// False when generation stopped early.
    pub complete: bool,
    pub stats: Option<ArchiveStats>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Archive {
    pub meta: Option<ArchiveMeta>,
    pub records: Vec<ArchiveRecord>,
}

/// Sweeps a mechanism and stores its normalized, classified coupler curves.
pub fn archive_record(
    g: &MechanismGraph,
    catalog: &PartCatalog,
    sweep: &SweepConfig,
    normalization: &NormalizationConfig,
) -> Result<ArchiveRecord, KinematicsError> {
    let motion = PreparedMechanism::new(g, catalog)?.sweep(sweep)?;
    let circle_cfg = CircleFitConfig::default();
    let curves = extract_trajectories(&motion)
        .into_iter()
        .filter_map(|(part, hole, raw)| {
            let c = normalize(&raw, normalization).ok()?;
            let class = classify(&c, &motion.range, &circle_cfg);
            Some(ArchiveCurve { part, hole, closed: class.is_closed, circle: class.is_circle_part, points: c.points })
        })
        .collect();
    Ok(ArchiveRecord { mechanism: g.to_doc(), range_deg: motion.range.span(), curves })
}

/// Mechanism `i` uses its own RNG stream, so the archive does not depend on
/// the number of worker threads.
pub fn generate_archive(cfg: &GeneratorConfig) -> Result<Archive, GenerateError> {
    cfg.validate()?;
    let catalog = cfg.inventory.catalog();
    let normalization =
        NormalizationConfig::new(cfg.n_points).map_err(|e| GenerateError::Config(e.to_string()))?;
    let results: Vec<Result<ArchiveRecord, GenerateError>> = (0..cfg.n_mechanisms)
        .into_par_iter()
        .map(|i| {
            let mut rng = seeding::stream(cfg.seed, i as u64);
            let g = random_mechanism(&cfg.inventory, cfg.n_dyads, cfg.max_retries, &mut rng)?;
            Ok(archive_record(&g, catalog, &cfg.sweep, &normalization)?)
        })
        .collect();

    let mut records = Vec::with_capacity(results.len());
    let meta = |complete: bool, records: &[ArchiveRecord]| ArchiveMeta {
        settings: cfg.settings(),
        inventory: cfg.inventory.to_json_value(),
        catalog_hash: catalog.content_hash(),
        complete,
        stats: archive_stats(records).ok(),
    };
    for (index, r) in results.into_iter().enumerate() {
        match r {
            Ok(rec) => records.push(rec),
            Err(last) => {
                let partial = Archive { meta: Some(meta(false, &records)), records };
                return Err(GenerateError::Failed {
                    index,
                    retries: cfg.max_retries,
                    last: Box::new(last),
                    partial: Box::new(partial),
                });
            }
        }
    }
    Ok(Archive { meta: Some(meta(true, &records)), records })
}

/// Averages over mechanisms (curves, range) and over curves (percentages).
pub fn archive_stats(records: &[ArchiveRecord]) -> Result<ArchiveStats, GenerateError> {
    if records.is_empty() {
        return Err(GenerateError::EmptyArchive);
    }
    let mechanisms = records.len();
    let curves: usize = records.iter().map(|r| r.curves.len()).sum();
    let count = |f: fn(&ArchiveCurve) -> bool| records.iter().flat_map(|r| &r.curves).filter(|c| f(c)).count();
    let pct = |n: usize| if curves == 0 { 0.0 } else { 100.0 * n as f64 / curves as f64 };
    Ok(ArchiveStats {
        mechanisms,
        curves,
        avg_curves_per_mechanism: curves as f64 / mechanisms as f64,
        mean_operating_range_deg: records.iter().map(|r| r.range_deg).sum::<f64>() / mechanisms as f64,
        pct_closed: pct(count(|c| c.closed)),
        pct_circle_part: pct(count(|c| c.circle)),
    })
}

/// `arch.jsonl` -> `arch.jsonl.meta.json`.
pub fn meta_path(archive: &Path) -> PathBuf {
    let mut name = archive.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> GenerateError + '_ {
    move |source| GenerateError::Io { path: path.into(), source }
}

impl Archive {
    pub fn stats(&self) -> Result<ArchiveStats, GenerateError> {
        archive_stats(&self.records)
    }

    pub fn write_jsonl(&self, out: &mut impl Write) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut *out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Writes the records and, when present, the metadata sidecar.
    pub fn save(&self, path: &Path) -> Result<(), GenerateError> {
        let file = File::create(path).map_err(io_err(path))?;
        let mut out = BufWriter::new(file);
        self.write_jsonl(&mut out).and_then(|_| out.flush()).map_err(io_err(path))?;
        if let Some(meta) = &self.meta {
            let mp = meta_path(path);
            let text = serde_json::to_string_pretty(meta).expect("metadata serializes") + "\n";
            std::fs::write(&mp, text).map_err(io_err(&mp))?;
        }
        Ok(())
    }

    /// Reads records and the sidecar if it exists.
    pub fn load(path: &Path) -> Result<Self, GenerateError> {
        let file = File::open(path).map_err(io_err(path))?;
        let mut records = Vec::new();
        for (k, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(io_err(path))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec = serde_json::from_str(&line)
                .map_err(|source| GenerateError::Format { path: path.into(), line: k + 1, source })?;
            records.push(rec);
        }
        let mp = meta_path(path);
        let meta = match std::fs::read_to_string(&mp) {
            Ok(text) => Some(
                serde_json::from_str(&text)
                    .map_err(|source| GenerateError::Format { path: mp.clone(), line: 0, source })?,
            ),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
            Err(e) => return Err(io_err(&mp)(e)),
        };
        Ok(Self { meta, records })
    }
}
