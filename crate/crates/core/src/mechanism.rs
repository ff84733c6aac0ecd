//! Mechanism graphs and their integer encoding.
//!
//! A mechanism is a bipartite graph between part vertices and pin vertices.
//! Every edge carries the index of the part hole the pin passes through.
//! Edges are kept in canonical order, sorted by `(part vertex, pin vertex)`,
//! and the hole vector `h` of a [`DesignVector`] is read in that order.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::PartCatalog;

pub const FOUR_BAR: &str = "four_bar";

#[derive(Debug, Error, PartialEq)]
pub enum MechanismError {
    #[error("expected {expected} part entries, got {got}")]
    PartLength { expected: usize, got: usize },
    #[error("expected {expected} hole entries, got {got}")]
    HoleLength { expected: usize, got: usize },
    #[error("expected {expected} {what}, got {got}")]
    FlagLength { what: &'static str, expected: usize, got: usize },
    #[error("part vertex {vertex} uses part type {part_type} outside a catalog of {catalog} types")]
    PartOutOfCatalog { vertex: usize, part_type: usize, catalog: usize },
    #[error("invalid topology: {0}")]
    Topology(String),
    #[error("graph topology does not match template `{0}`")]
    TemplateMismatch(String),
    #[error("unknown template `{0}`")]
    UnknownTemplate(String),
    #[error("actuator angle must be finite")]
    NonFiniteAngle,
}

/// Elbow choice of a dyad: which of the two circle intersections is used.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub enum Branch {
    #[default]
    Positive,
    Negative,
}

impl Branch {
    pub fn sign(self) -> f64 {
        match self {
            Branch::Positive => 1.0,
            Branch::Negative => -1.0,
        }
    }
}

impl TryFrom<i8> for Branch {
    type Error = String;
    fn try_from(v: i8) -> Result<Self, String> {
        match v {
            1 => Ok(Branch::Positive),
            -1 => Ok(Branch::Negative),
            other => Err(format!("branch sign must be 1 or -1, got {other}")),
        }
    }
}

impl From<Branch> for i8 {
    fn from(b: Branch) -> i8 {
        match b {
            Branch::Positive => 1,
            Branch::Negative => -1,
        }
    }
}

/// Actuator angle in degrees, reduced to `[0, 360)`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct ActuatorAngle(f64);

impl ActuatorAngle {
    pub fn new(degrees: f64) -> Result<Self, MechanismError> {
        if !degrees.is_finite() {
            return Err(MechanismError::NonFiniteAngle);
        }
        let r = degrees.rem_euclid(360.0);
        // rem_euclid can round up to exactly 360 for tiny negative inputs
        Ok(Self(if r >= 360.0 { 0.0 } else { r }))
    }

    pub fn degrees(self) -> f64 {
        self.0
    }

    pub fn radians(self) -> f64 {
        self.0.to_radians()
    }
}

/// Two child parts added together, hanging from two already placed pins.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dyad {
    pub child1: usize,
    pub child2: usize,
    /// Pin joining `child1` to the placed structure.
    pub parent_a: usize,
    /// Pin joining `child2` to the placed structure.
    pub parent_b: usize,
    /// Pin joining the two children.
    pub joint: usize,
}

/// Vertex and edge structure of a mechanism without part or hole assignments.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Topology {
    pub n_parts: usize,
    pub n_pins: usize,
    /// `(part vertex, pin vertex)` in canonical order.
    pub edges: Vec<(usize, usize)>,
    pub ground: usize,
    pub actuator: usize,
    /// The ground-actuator pin.
    pub pivot: usize,
    pub dyads: Vec<Dyad>,
}

impl Topology {
    /// Validates and canonicalizes. Returns the topology together with the
    /// permutation `order[k] = input index of canonical edge k`.
    pub fn new(
        n_parts: usize,
        n_pins: usize,
        edges: &[(usize, usize)],
        ground: usize,
        actuator: usize,
        pivot: usize,
        dyads: Vec<Dyad>,
    ) -> Result<(Self, Vec<usize>), MechanismError> {
        let bad = |msg: String| Err(MechanismError::Topology(msg));
        let mut order: Vec<usize> = (0..edges.len()).collect();
        order.sort_by_key(|&i| edges[i]);
        let sorted: Vec<(usize, usize)> = order.iter().map(|&i| edges[i]).collect();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return bad("repeated part-pin edge".into());
        }
        if let Some(&(part, pin)) = sorted.iter().find(|&&(part, pin)| part >= n_parts || pin >= n_pins) {
            return bad(format!("edge ({part}, {pin}) references a missing vertex"));
        }
        let mut pin_degree = vec![0usize; n_pins];
        for &(_, pin) in &sorted {
            pin_degree[pin] += 1;
        }
        if let Some(pin) = pin_degree.iter().position(|&d| d < 2) {
            return bad(format!("pin {pin} connects fewer than two parts"));
        }
        if ground == actuator || ground >= n_parts || actuator >= n_parts {
            return bad("ground and actuator must be distinct part vertices".into());
        }
        let topo = Self { n_parts, n_pins, edges: sorted, ground, actuator, pivot, dyads };
        if pivot >= n_pins || !topo.connects(ground, pivot) || !topo.connects(actuator, pivot) {
            return bad("pivot pin must join ground and actuator".into());
        }

        let mut placed = vec![false; n_parts];
        placed[ground] = true;
        placed[actuator] = true;
        for (k, d) in topo.dyads.iter().enumerate() {
            let known = |pin: usize| topo.parts_on_pin(pin).any(|part| placed[part]);
            if d.child1 == d.child2 || d.child1 >= n_parts || d.child2 >= n_parts {
                return bad(format!("dyad {k} has invalid children"));
            }
            if placed[d.child1] || placed[d.child2] {
                return bad(format!("dyad {k} re-places an existing part"));
            }
            if d.parent_a == d.parent_b || d.joint == d.parent_a || d.joint == d.parent_b {
                return bad(format!("dyad {k} needs three distinct pins"));
            }
            if d.parent_a >= n_pins || d.parent_b >= n_pins || d.joint >= n_pins {
                return bad(format!("dyad {k} references a missing pin"));
            }
            if !known(d.parent_a) || !known(d.parent_b) || known(d.joint) {
                return bad(format!("dyad {k} is not solvable in order"));
            }
            let links = [(d.child1, d.parent_a), (d.child1, d.joint), (d.child2, d.parent_b), (d.child2, d.joint)];
            if links.iter().any(|&(part, pin)| !topo.connects(part, pin)) {
                return bad(format!("dyad {k} children are not wired to its pins"));
            }
            placed[d.child1] = true;
            placed[d.child2] = true;
        }
        if let Some(part) = placed.iter().position(|p| !p) {
            return bad(format!("part vertex {part} is not placed by any dyad"));
        }
        Ok((topo, order))
    }

    /// Ground 0, actuator 1, child1 2, child2 3; pins ground-actuator 0,
    /// actuator-child1 1, child1-child2 2, child2-ground 3.
    pub fn four_bar() -> Self {
        let edges = [(0, 0), (0, 3), (1, 0), (1, 1), (2, 1), (2, 2), (3, 2), (3, 3)];
        let dyad = Dyad { child1: 2, child2: 3, parent_a: 1, parent_b: 3, joint: 2 };
        Self::new(4, 4, &edges, 0, 1, 0, vec![dyad]).expect("four-bar topology is valid").0
    }

    pub fn named(name: &str) -> Result<Self, MechanismError> {
        match name {
            FOUR_BAR => Ok(Self::four_bar()),
            other => Err(MechanismError::UnknownTemplate(other.into())),
        }
    }

    /// The registered template name for this structure, if any.
    pub fn name(&self) -> Option<&'static str> {
        (*self == Self::four_bar()).then_some(FOUR_BAR)
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edge_index(&self, part: usize, pin: usize) -> Option<usize> {
        self.edges.binary_search(&(part, pin)).ok()
    }

    pub fn connects(&self, part: usize, pin: usize) -> bool {
        self.edge_index(part, pin).is_some()
    }

    /// Canonical edge indices of a part vertex, in pin order.
    pub fn part_edges(&self, part: usize) -> std::ops::Range<usize> {
        let start = self.edges.partition_point(|&(p, _)| p < part);
        let end = self.edges.partition_point(|&(p, _)| p <= part);
        start..end
    }

    pub fn degree(&self, part: usize) -> usize {
        self.part_edges(part).len()
    }

    pub fn parts_on_pin(&self, pin: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().filter(move |&&(_, q)| q == pin).map(|&(p, _)| p)
    }

    pub fn pins_of_part(&self, part: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges[self.part_edges(part)].iter().map(|&(_, pin)| pin)
    }

    /// Parts that share a pin with the ground part (the ground excluded).
    pub fn grounded_neighbours(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .pins_of_part(self.ground)
            .flat_map(|pin| self.parts_on_pin(pin))
            .filter(|&p| p != self.ground)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Part and hole assignment vectors over a fixed topology.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DesignVector {
    pub topology: Arc<Topology>,
    /// Part type per part vertex.
    pub p: Vec<usize>,
    /// Hole index per canonical edge.
    pub h: Vec<usize>,
}

impl DesignVector {
    pub fn new(topology: Arc<Topology>, p: Vec<usize>, h: Vec<usize>) -> Result<Self, MechanismError> {
        if p.len() != topology.n_parts {
            return Err(MechanismError::PartLength { expected: topology.n_parts, got: p.len() });
        }
        if h.len() != topology.n_edges() {
            return Err(MechanismError::HoleLength { expected: topology.n_edges(), got: h.len() });
        }
        Ok(Self { topology, p, h })
    }

    pub fn len(&self) -> usize {
        self.p.len() + self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `p` followed by `h`.
    pub fn genes(&self) -> Vec<usize> {
        self.p.iter().chain(&self.h).copied().collect()
    }

    pub fn from_genes(topology: Arc<Topology>, genes: &[usize]) -> Result<Self, MechanismError> {
        let split = topology.n_parts.min(genes.len());
        let (p, h) = genes.split_at(split);
        Self::new(topology, p.to_vec(), h.to_vec())
    }

    /// Hole assigned to edge `(part, pin)`.
    pub fn hole(&self, part: usize, pin: usize) -> Option<usize> {
        self.topology.edge_index(part, pin).map(|e| self.h[e])
    }

    /// Graph with canonical branch and mirror defaults.
    pub fn decode(&self, catalog: &PartCatalog) -> Result<MechanismGraph, MechanismError> {
        MechanismGraph::new(self.clone(), catalog, None, None)
    }
}

impl fmt::Display for DesignVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p={:?} h={:?}", self.p, self.h)
    }
}

/// A fully specified mechanism: topology, assignments and the branch and
/// mirror attributes that the optimizers leave at their defaults.
#[derive(Clone, Debug, PartialEq)]
pub struct MechanismGraph {
    design: DesignVector,
    branch_signs: Vec<Branch>,
    /// One flag per part vertex other than the ground, in vertex order.
    mirror_flags: Vec<bool>,
}

impl MechanismGraph {
    pub fn new(
        design: DesignVector,
        catalog: &PartCatalog,
        branch_signs: Option<Vec<Branch>>,
        mirror_flags: Option<Vec<bool>>,
    ) -> Result<Self, MechanismError> {
        let topo = &design.topology;
        if let Some((vertex, &part_type)) = design.p.iter().enumerate().find(|(_, &t)| t >= catalog.len()) {
            return Err(MechanismError::PartOutOfCatalog { vertex, part_type, catalog: catalog.len() });
        }
        let branch_signs = branch_signs.unwrap_or_else(|| vec![Branch::Positive; topo.dyads.len()]);
        if branch_signs.len() != topo.dyads.len() {
            return Err(MechanismError::FlagLength {
                what: "branch signs",
                expected: topo.dyads.len(),
                got: branch_signs.len(),
            });
        }
        let mirror_flags = mirror_flags.unwrap_or_else(|| vec![false; topo.n_parts - 1]);
        if mirror_flags.len() != topo.n_parts - 1 {
            return Err(MechanismError::FlagLength {
                what: "mirror flags",
                expected: topo.n_parts - 1,
                got: mirror_flags.len(),
            });
        }
        Ok(Self { design, branch_signs, mirror_flags })
    }

    /// Builds a graph from edges listed in any order; holes follow the edges.
    #[allow(clippy::too_many_arguments)]
    pub fn assemble(
        catalog: &PartCatalog,
        part_types: Vec<usize>,
        n_pins: usize,
        edges: &[(usize, usize, usize)],
        ground: usize,
        actuator: usize,
        pivot: usize,
        dyads: Vec<Dyad>,
        branch_signs: Vec<Branch>,
    ) -> Result<Self, MechanismError> {
        let pairs: Vec<(usize, usize)> = edges.iter().map(|&(a, b, _)| (a, b)).collect();
        let (topo, order) = Topology::new(part_types.len(), n_pins, &pairs, ground, actuator, pivot, dyads)?;
        let h = order.iter().map(|&i| edges[i].2).collect();
        let design = DesignVector::new(Arc::new(topo), part_types, h)?;
        Self::new(design, catalog, Some(branch_signs), None)
    }

    pub fn topology(&self) -> &Topology {
        &self.design.topology
    }

    pub fn design(&self) -> &DesignVector {
        &self.design
    }

    pub fn part_types(&self) -> &[usize] {
        &self.design.p
    }

    pub fn part_type(&self, vertex: usize) -> usize {
        self.design.p[vertex]
    }

    pub fn holes(&self) -> &[usize] {
        &self.design.h
    }

    pub fn hole(&self, part: usize, pin: usize) -> Option<usize> {
        self.design.hole(part, pin)
    }

    pub fn branch_signs(&self) -> &[Branch] {
        &self.branch_signs
    }

    pub fn mirror_flags(&self) -> &[bool] {
        &self.mirror_flags
    }

    pub fn is_mirrored(&self, vertex: usize) -> bool {
        let ground = self.topology().ground;
        match vertex.cmp(&ground) {
            std::cmp::Ordering::Less => self.mirror_flags[vertex],
            std::cmp::Ordering::Equal => false,
            std::cmp::Ordering::Greater => self.mirror_flags[vertex - 1],
        }
    }

    pub fn set_branch(&mut self, dyad: usize, branch: Branch) {
        self.branch_signs[dyad] = branch;
    }

    pub fn set_mirrored(&mut self, vertex: usize, mirrored: bool) {
        let ground = self.topology().ground;
        assert_ne!(vertex, ground, "the ground part has no mirror flag");
        let slot = if vertex < ground { vertex } else { vertex - 1 };
        self.mirror_flags[slot] = mirrored;
    }

    /// The `(p, h)` content; flags are dropped.
    pub fn encode(&self) -> DesignVector {
        self.design.clone()
    }

    pub fn encode_for(&self, template: &Topology) -> Result<DesignVector, MechanismError> {
        if self.topology() != template {
            let name = template.name().unwrap_or("custom");
            return Err(MechanismError::TemplateMismatch(name.into()));
        }
        Ok(self.encode())
    }

    pub fn to_doc(&self) -> MechanismDoc {
        let topo = self.topology();
        MechanismDoc {
            template: match topo.name() {
                Some(name) => TemplateRef::Named(name.into()),
                None => TemplateRef::Inline(topo.clone()),
            },
            p: self.design.p.clone(),
            h: self.design.h.clone(),
            branch_signs: self.branch_signs.clone(),
            mirror_flags: self.mirror_flags.clone(),
        }
    }

    pub fn from_doc(doc: MechanismDoc, catalog: &PartCatalog) -> Result<Self, MechanismError> {
        let topo = match doc.template {
            TemplateRef::Named(name) => Topology::named(&name)?,
            TemplateRef::Inline(t) => {
                Topology::new(t.n_parts, t.n_pins, &t.edges, t.ground, t.actuator, t.pivot, t.dyads)?.0
            }
        };
        let design = DesignVector::new(Arc::new(topo), doc.p, doc.h)?;
        let branches = (!doc.branch_signs.is_empty()).then_some(doc.branch_signs);
        let mirrors = (!doc.mirror_flags.is_empty()).then_some(doc.mirror_flags);
        Self::new(design, catalog, branches, mirrors)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TemplateRef {
    Named(String),
    Inline(Topology),
}

/// Serialized mechanism, shared by archive files, run outputs and the service.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MechanismDoc {
    pub template: TemplateRef,
    pub p: Vec<usize>,
    pub h: Vec<usize>,
    #[serde(default)]
    pub branch_signs: Vec<Branch>,
    #[serde(default)]
    pub mirror_flags: Vec<bool>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn catalog() -> PartCatalog {
        PartCatalog::builtin("reduced").unwrap()
    }

    fn fig10() -> DesignVector {
        DesignVector::new(Arc::new(Topology::four_bar()), vec![1, 0, 4, 0], vec![0, 4, 0, 2, 0, 3, 0, 3]).unwrap()
    }

    #[test]
    fn four_bar_template_shape() {
        let t = Topology::four_bar();
        assert_eq!((t.n_parts, t.n_pins, t.n_edges()), (4, 4, 8));
        let degree_sum: usize = (0..t.n_parts).map(|p| t.degree(p)).sum();
        assert_eq!(degree_sum, 8);
        assert_eq!(t, Topology::four_bar());
        assert_eq!(t.name(), Some(FOUR_BAR));
        assert_eq!(t.grounded_neighbours(), vec![1, 3]);
    }

    #[test]
    fn decode_places_holes_in_canonical_order() {
        let g = fig10().decode(&catalog()).unwrap();
        // ground (type 1) meets the pivot at hole 0 and the rocker at hole 4
        assert_eq!(g.hole(0, 0), Some(0));
        assert_eq!(g.hole(0, 3), Some(4));
        assert_eq!(g.hole(1, 1), Some(2));
        assert_eq!(g.hole(2, 2), Some(3));
        assert_eq!(g.part_types(), &[1, 0, 4, 0]);
        assert_eq!(g.branch_signs(), &[Branch::Positive]);
        assert_eq!(g.mirror_flags(), &[false, false, false]);
    }

    #[test]
    fn encode_inverts_decode() {
        let v = fig10();
        let g = v.decode(&catalog()).unwrap();
        assert_eq!(g.encode(), v);
        assert_eq!(g.encode().p, vec![1, 0, 4, 0]);
        assert_eq!(g.encode().h, vec![0, 4, 0, 2, 0, 3, 0, 3]);
        assert_eq!(g.encode().decode(&catalog()).unwrap(), g);

        let mut other = v.clone();
        other.h[5] = 4;
        assert_ne!(other.decode(&catalog()).unwrap().encode(), g.encode());
    }

    #[test]
    fn out_of_range_holes_decode() {
        let mut v = fig10();
        v.h[3] = 14; // beam-5 has 5 holes
        assert!(v.decode(&catalog()).is_ok());
    }

    #[test]
    fn decode_rejects_length_mismatch() {
        let t = Arc::new(Topology::four_bar());
        assert!(matches!(
            DesignVector::new(t.clone(), vec![0; 3], vec![0; 8]),
            Err(MechanismError::PartLength { expected: 4, got: 3 })
        ));
        assert!(matches!(
            DesignVector::new(t, vec![0; 4], vec![0; 9]),
            Err(MechanismError::HoleLength { expected: 8, got: 9 })
        ));
    }

    #[test]
    fn encode_for_checks_template() {
        let g = fig10().decode(&catalog()).unwrap();
        assert!(g.encode_for(&Topology::four_bar()).is_ok());
        let mut other = Topology::four_bar();
        other.dyads[0].parent_b = 0;
        assert!(matches!(g.encode_for(&other), Err(MechanismError::TemplateMismatch(_))));
    }

    #[test]
    fn topology_validation() {
        // pin 3 only touches one part
        let edges = [(0, 0), (0, 3), (1, 0), (1, 1), (2, 1), (2, 2), (3, 2)];
        let dyad = Dyad { child1: 2, child2: 3, parent_a: 1, parent_b: 3, joint: 2 };
        assert!(Topology::new(4, 4, &edges, 0, 1, 0, vec![dyad]).is_err());
        // dyad left out
        let edges = [(0, 0), (0, 3), (1, 0), (1, 1), (2, 1), (2, 2), (3, 2), (3, 3)];
        assert!(Topology::new(4, 4, &edges, 0, 1, 0, vec![]).is_err());
        // same actuator and ground
        assert!(Topology::new(4, 4, &edges, 0, 0, 0, vec![dyad]).is_err());
    }

    #[test]
    fn doc_round_trip() {
        let mut g = fig10().decode(&catalog()).unwrap();
        g.set_branch(0, Branch::Negative);
        g.set_mirrored(2, true);
        let text = serde_json::to_string(&g.to_doc()).unwrap();
        assert!(text.contains("\"template\":\"four_bar\""));
        assert!(text.contains("\"branch_signs\":[-1]"));
        let back = MechanismGraph::from_doc(serde_json::from_str(&text).unwrap(), &catalog()).unwrap();
        assert_eq!(back, g);
        assert!(back.is_mirrored(2));
    }

    #[test]
    fn actuator_angle_wraps() {
        assert_eq!(ActuatorAngle::new(360.0).unwrap().degrees(), 0.0);
        assert_eq!(ActuatorAngle::new(-90.0).unwrap().degrees(), 270.0);
        assert_eq!(ActuatorAngle::new(-1e-20).unwrap().degrees(), 0.0);
        assert!(ActuatorAngle::new(f64::NAN).is_err());
    }
}
