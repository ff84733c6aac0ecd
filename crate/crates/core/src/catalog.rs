//! Part geometry, part inventories and the GHG cost of new parts.
//!
//! Geometry is expressed in pitch units: one unit is the spacing between two
//! neighbouring holes. Hole coordinates sit on the integer grid and are
//! indexed in document order.

use std::fmt;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geometry::Point;

/// Grams of CO2-equivalent per hole for a newly manufactured part.
pub const DEFAULT_GHG_PER_HOLE: f64 = 0.83;

const DEFAULT_CATALOG: &str = include_str!("../data/default_catalog.json");
const REDUCED_CATALOG: &str = include_str!("../data/reduced_catalog.json");
const ARCHIVE_INVENTORY: &str = include_str!("../data/archive_inventory.json");
const REDUCED_INVENTORY: &str = include_str!("../data/reduced_inventory.json");
const TRADEOFF_INVENTORY: &str = include_str!("../data/tradeoff_inventory.json");

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("malformed document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("catalog has no parts")]
    Empty,
    #[error("part {part}: hole ({x}, {y}) is not on the pitch grid")]
    HoleOffGrid { part: usize, x: f64, y: f64 },
    #[error("part {part}: hole {hole} duplicates an earlier hole")]
    DuplicateHole { part: usize, hole: usize },
    #[error("part {part}: {count} holes, at least 2 are required")]
    TooFewHoles { part: usize, count: usize },
    #[error("part {part}: hole index {index} out of range (part has {count} holes)")]
    HoleIndex { part: usize, index: usize, count: usize },
    #[error("ghg_per_hole must be finite and non-negative, got {0}")]
    GhgConstant(f64),
    #[error("inventory lists {got} counts for a catalog of {expected} part types")]
    CountMismatch { expected: usize, got: usize },
    #[error("unknown built-in `{0}`")]
    UnknownBuiltin(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Shape {
    I,
    L,
    J,
    T,
    U,
    O,
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// One part type: a rigid body with a fixed set of holes.
#[derive(Clone, Debug, PartialEq)]
pub struct PartType {
    pub id: usize,
    pub shape: Shape,
    pub name: String,
    holes: Vec<[i32; 2]>,
}

impl PartType {
    pub fn new(id: usize, shape: Shape, name: impl Into<String>, holes: Vec<[i32; 2]>) -> Result<Self, CatalogError> {
        if holes.len() < 2 {
            return Err(CatalogError::TooFewHoles { part: id, count: holes.len() });
        }
        for (i, h) in holes.iter().enumerate() {
            if holes[..i].contains(h) {
                return Err(CatalogError::DuplicateHole { part: id, hole: i });
            }
        }
        Ok(Self { id, shape, name: name.into(), holes })
    }

    /// A straight beam with `n` holes at `(0,0)..(n-1,0)`.
    pub fn beam(id: usize, n: usize) -> Result<Self, CatalogError> {
        Self::new(id, Shape::I, format!("beam-{n}"), (0..n as i32).map(|x| [x, 0]).collect())
    }

    pub fn hole_count(&self) -> usize {
        self.holes.len()
    }

    pub fn grid_holes(&self) -> &[[i32; 2]] {
        &self.holes
    }

    /// Hole position in the part's local frame. Panics on a bad index.
    pub fn hole(&self, index: usize) -> Point {
        let [x, y] = self.holes[index];
        Point::new(x as f64, y as f64)
    }

    pub fn holes(&self) -> impl Iterator<Item = Point> + '_ {
        (0..self.holes.len()).map(|i| self.hole(i))
    }

    pub fn hole_distance(&self, i: usize, j: usize) -> Result<f64, CatalogError> {
        let count = self.hole_count();
        for index in [i, j] {
            if index >= count {
                return Err(CatalogError::HoleIndex { part: self.id, index, count });
            }
        }
        Ok(self.hole(i).distance(self.hole(j)))
    }
}

#[derive(Serialize, Deserialize)]
struct PartDoc {
    shape: Shape,
    #[serde(default)]
    name: String,
    holes: Vec<[f64; 2]>,
}

#[derive(Serialize, Deserialize)]
struct CatalogDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    description: Option<String>,
    #[serde(default = "default_ghg")]
    ghg_per_hole: f64,
    parts: Vec<PartDoc>,
}

fn default_ghg() -> f64 {
    DEFAULT_GHG_PER_HOLE
}

/// An ordered list of part types. Ids equal list positions.
#[derive(Clone, Debug, PartialEq)]
pub struct PartCatalog {
    parts: Vec<PartType>,
    ghg_per_hole: f64,
    description: Option<String>,
}

impl PartCatalog {
    pub fn new(parts: Vec<PartType>, ghg_per_hole: f64) -> Result<Self, CatalogError> {
        if parts.is_empty() {
            return Err(CatalogError::Empty);
        }
        if !ghg_per_hole.is_finite() || ghg_per_hole < 0.0 {
            return Err(CatalogError::GhgConstant(ghg_per_hole));
        }
        let parts = parts
            .into_iter()
            .enumerate()
            .map(|(id, p)| PartType { id, ..p })
            .collect();
        Ok(Self { parts, ghg_per_hole, description: None })
    }

    /// Straight beams with the given hole counts, in order.
    pub fn beams(hole_counts: &[usize]) -> Result<Self, CatalogError> {
        let parts = hole_counts
            .iter()
            .enumerate()
            .map(|(id, &n)| PartType::beam(id, n))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(parts, DEFAULT_GHG_PER_HOLE)
    }

    pub fn from_reader(source: impl Read) -> Result<Self, CatalogError> {
        let doc: CatalogDoc = serde_json::from_reader(source)?;
        Self::from_doc(doc)
    }

    pub fn from_json_value(value: serde_json::Value) -> Result<Self, CatalogError> {
        Self::from_doc(serde_json::from_value(value)?)
    }

    pub fn load(path: &Path) -> Result<Self, CatalogError> {
        let file = std::fs::File::open(path).map_err(|source| CatalogError::Io { path: path.into(), source })?;
        Self::from_reader(std::io::BufReader::new(file))
    }

    /// `default` (archive catalog) or `reduced` (five types for inverse design).
    pub fn builtin(name: &str) -> Result<Self, CatalogError> {
        let text = match name {
            "default" => DEFAULT_CATALOG,
            "reduced" => REDUCED_CATALOG,
            other => return Err(CatalogError::UnknownBuiltin(other.into())),
        };
        Self::from_str(text)
    }

    fn from_doc(doc: CatalogDoc) -> Result<Self, CatalogError> {
        let mut parts = Vec::with_capacity(doc.parts.len());
        for (id, part) in doc.parts.into_iter().enumerate() {
            let mut holes = Vec::with_capacity(part.holes.len());
            for [x, y] in part.holes {
                if x.fract() != 0.0 || y.fract() != 0.0 || x.abs() > 1e6 || y.abs() > 1e6 {
                    return Err(CatalogError::HoleOffGrid { part: id, x, y });
                }
                holes.push([x as i32, y as i32]);
            }
            parts.push(PartType::new(id, part.shape, part.name, holes)?);
        }
        let mut catalog = Self::new(parts, doc.ghg_per_hole)?;
        catalog.description = doc.description;
        Ok(catalog)
    }

    fn to_doc(&self) -> CatalogDoc {
        CatalogDoc {
            description: self.description.clone(),
            ghg_per_hole: self.ghg_per_hole,
            parts: self
                .parts
                .iter()
                .map(|p| PartDoc {
                    shape: p.shape,
                    name: p.name.clone(),
                    holes: p.holes.iter().map(|&[x, y]| [x as f64, y as f64]).collect(),
                })
                .collect(),
        }
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(self.to_doc()).expect("catalog serializes")
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_doc()).expect("catalog serializes")
    }

    /// SHA-256 over the canonical serialization, hex encoded.
    pub fn content_hash(&self) -> String {
        let compact = serde_json::to_vec(&self.to_doc()).expect("catalog serializes");
        hex::encode(Sha256::digest(&compact))
    }

    pub fn parts(&self) -> &[PartType] {
        &self.parts
    }

    pub fn part(&self, id: usize) -> &PartType {
        &self.parts[id]
    }

    pub fn get(&self, id: usize) -> Option<&PartType> {
        self.parts.get(id)
    }

    /// Number of part types (`N`).
    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    /// Largest hole count over all parts (`C`).
    pub fn max_hole_count(&self) -> usize {
        self.parts.iter().map(PartType::hole_count).max().unwrap_or(0)
    }

    pub fn ghg_per_hole(&self) -> f64 {
        self.ghg_per_hole
    }

    pub fn description(&self) -> Option<&str> {
        self.description.as_deref()
    }

    /// Grams of CO2-eq to manufacture one new part of this type.
    pub fn ghg_of_part(&self, part: &PartType) -> f64 {
        part.hole_count() as f64 * self.ghg_per_hole
    }
}

impl FromStr for PartCatalog {
    type Err = CatalogError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::from_reader(s.as_bytes())
    }
}

/// Available quantity of one part type.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Option<u32>", into = "Option<u32>")]
pub enum Availability {
    Limited(u32),
    Unbounded,
}

impl Availability {
    pub fn allows(self, count: usize) -> bool {
        match self {
            Availability::Limited(n) => count <= n as usize,
            Availability::Unbounded => true,
        }
    }

    /// Units requested beyond availability.
    pub fn excess(self, count: usize) -> usize {
        match self {
            Availability::Limited(n) => count.saturating_sub(n as usize),
            Availability::Unbounded => 0,
        }
    }
}

impl From<Option<u32>> for Availability {
    fn from(v: Option<u32>) -> Self {
        v.map_or(Availability::Unbounded, Availability::Limited)
    }
}

impl From<Availability> for Option<u32> {
    fn from(v: Availability) -> Self {
        match v {
            Availability::Limited(n) => Some(n),
            Availability::Unbounded => None,
        }
    }
}

/// A catalog together with the stock of each part type. Types with zero
/// stock stay listed so that they can still be priced as new parts.
#[derive(Clone, Debug, PartialEq)]
pub struct Inventory {
    catalog: Arc<PartCatalog>,
    counts: Vec<Availability>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum CatalogRef {
    Path(String),
    Inline(serde_json::Value),
}

#[derive(Deserialize)]
struct InventoryDoc {
    catalog: CatalogRef,
    counts: Vec<Option<u32>>,
}

impl Inventory {
    pub fn new(catalog: Arc<PartCatalog>, counts: Vec<Availability>) -> Result<Self, CatalogError> {
        if counts.len() != catalog.len() {
            return Err(CatalogError::CountMismatch { expected: catalog.len(), got: counts.len() });
        }
        Ok(Self { catalog, counts })
    }

    pub fn unbounded(catalog: Arc<PartCatalog>) -> Self {
        let counts = vec![Availability::Unbounded; catalog.len()];
        Self { catalog, counts }
    }

    pub fn limited(catalog: Arc<PartCatalog>, counts: &[u32]) -> Result<Self, CatalogError> {
        Self::new(catalog, counts.iter().map(|&n| Availability::Limited(n)).collect())
    }

    /// Parses an inventory document. A string `catalog` is either
    /// `builtin:<name>` or a path resolved against `base_dir`.
    pub fn from_json_str(text: &str, base_dir: Option<&Path>) -> Result<Self, CatalogError> {
        let doc: InventoryDoc = serde_json::from_str(text)?;
        let catalog = match doc.catalog {
            CatalogRef::Path(p) => match p.strip_prefix("builtin:") {
                Some(name) => PartCatalog::builtin(name)?,
                None => {
                    let path = base_dir.map_or_else(|| PathBuf::from(&p), |d| d.join(&p));
                    PartCatalog::load(&path)?
                }
            },
            CatalogRef::Inline(value) => PartCatalog::from_json_value(value)?,
        };
        Self::new(Arc::new(catalog), doc.counts.into_iter().map(Availability::from).collect())
    }

    pub fn load(path: &Path) -> Result<Self, CatalogError> {
        let text = std::fs::read_to_string(path).map_err(|source| CatalogError::Io { path: path.into(), source })?;
        Self::from_json_str(&text, path.parent())
    }

    /// `archive`, `reduced` or `tradeoff`.
    pub fn builtin(name: &str) -> Result<Self, CatalogError> {
        let text = match name {
            "archive" => ARCHIVE_INVENTORY,
            "reduced" => REDUCED_INVENTORY,
            "tradeoff" => TRADEOFF_INVENTORY,
            other => return Err(CatalogError::UnknownBuiltin(other.into())),
        };
        Self::from_json_str(text, None)
    }

    /// Either `builtin:<name>` or a file path.
    pub fn resolve(spec: &str) -> Result<Self, CatalogError> {
        match spec.strip_prefix("builtin:") {
            Some(name) => Self::builtin(name),
            None => Self::load(Path::new(spec)),
        }
    }

    /// Self-contained document with the catalog inlined.
    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::json!({
            "catalog": self.catalog.to_json_value(),
            "counts": self.counts,
        })
    }

    pub fn catalog(&self) -> &PartCatalog {
        &self.catalog
    }

    pub fn catalog_arc(&self) -> &Arc<PartCatalog> {
        &self.catalog
    }

    pub fn counts(&self) -> &[Availability] {
        &self.counts
    }

    pub fn availability(&self, part: usize) -> Availability {
        self.counts[part]
    }

    pub fn with_counts(&self, counts: Vec<Availability>) -> Result<Self, CatalogError> {
        Self::new(self.catalog.clone(), counts)
    }

    /// Total placeable units, `None` when any type is unbounded.
    pub fn total_units(&self) -> Option<usize> {
        self.counts.iter().try_fold(0usize, |acc, c| match c {
            Availability::Limited(n) => Some(acc + *n as usize),
            Availability::Unbounded => None,
        })
    }
}
