//! Position analysis by dyadic decomposition.
//!
//! The ground part is fixed with hole 0 at the origin and its hole 0 to hole 1
//! direction along +x. The actuator turns about the pivot pin by the actuator
//! angle. Each dyad is then closed by intersecting two circles centred on its
//! parent pins, in the order the dyads were added.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::PartCatalog;
use crate::curves::Curve;
use crate::geometry::{Point, Pose};
use crate::mechanism::{ActuatorAngle, Branch, MechanismError, MechanismGraph};

/// Why a dyad cannot be closed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Lock {
    /// `|cos phi| >= 1`: the children are too short or too long to meet.
    OutOfReach,
    /// The two parent pins coincide.
    CoincidentParents,
    /// A child uses the same point for both of its pins.
    ZeroLength,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DyadSolution {
    pub cos_phi: f64,
    /// Signed angle from `b - a` to `joint - a`, radians.
    pub phi: f64,
    pub joint: Point,
}

#[derive(Debug, Error, PartialEq)]
pub enum KinematicsError {
    #[error("part vertex {vertex} references hole {hole} of a {count}-hole part")]
    HoleOutOfRange { vertex: usize, hole: usize, count: usize },
    #[error("part vertex {vertex} assigns hole {hole} to more than one pin")]
    HoleReused { vertex: usize, hole: usize },
    #[error("resolution {0} deg does not divide 360")]
    Resolution(f64),
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
}

/// Closes one dyad with the law of cosines.
///
/// `a` and `b` are the parent pins, `d_c1` the hole distance on the child
/// hanging from `a`, `d_c2` the one on the child hanging from `b`. The joint
/// lies at distance `d_c1` from `a`, on the side selected by `branch`.
pub fn solve_dyad(a: Point, b: Point, d_c1: f64, d_c2: f64, branch: Branch) -> Result<DyadSolution, Lock> {
    let base = b - a;
    let d_p = base.norm();
    if d_p == 0.0 {
        return Err(Lock::CoincidentParents);
    }
    if d_c1 <= 0.0 || d_c2 <= 0.0 {
        return Err(Lock::ZeroLength);
    }
    let cos_phi = (d_p * d_p + d_c1 * d_c1 - d_c2 * d_c2) / (2.0 * d_p * d_c1);
    if !(cos_phi.abs() < 1.0) {
        return Err(Lock::OutOfReach);
    }
    let phi = branch.sign() * cos_phi.acos();
    let joint = a + (base * (d_c1 / d_p)).rotate(phi);
    Ok(DyadSolution { cos_phi, phi, joint })
}

/// Placement of every part at one actuator angle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub theta: f64,
    pub poses: Vec<Option<Pose>>,
}

/// Outcome of [`solve_at_angle`].
#[derive(Clone, Debug, PartialEq)]
pub enum AngleSolution {
    Solved(Frame),
    Locked { dyad: usize, lock: Lock },
}

impl AngleSolution {
    pub fn frame(self) -> Option<Frame> {
        match self {
            AngleSolution::Solved(f) => Some(f),
            AngleSolution::Locked { .. } => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub resolution_deg: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { resolution_deg: 1.0 }
    }
}

impl SweepConfig {
    pub fn samples(&self) -> Result<usize, KinematicsError> {
        let res = self.resolution_deg;
        let n = 360.0 / res;
        if !(res > 0.0) || !n.is_finite() || (n - n.round()).abs() > 1e-9 || n.round() < 1.0 {
            return Err(KinematicsError::Resolution(res));
        }
        Ok(n.round() as usize)
    }
}

/// Longest contiguous run of valid samples, with wrap-around at 360.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatingRange {
    pub theta_min: f64,
    pub theta_max: f64,
    pub is_full: bool,
    pub resolution_deg: f64,
    pub valid_mask: Vec<bool>,
}

impl OperatingRange {
    pub fn from_mask(valid_mask: Vec<bool>, resolution_deg: f64) -> Self {
        let (start, len) = longest_circular_run(&valid_mask);
        let n = valid_mask.len();
        let is_full = n > 0 && len == n;
        let (theta_min, theta_max) = if is_full {
            (0.0, 360.0)
        } else if len == 0 {
            (0.0, 0.0)
        } else {
            let lo = start as f64 * resolution_deg;
            (lo, lo + (len - 1) as f64 * resolution_deg)
        };
        Self { theta_min, theta_max, is_full, resolution_deg, valid_mask }
    }

    pub fn span(&self) -> f64 {
        self.theta_max - self.theta_min
    }

    /// Sample indices of the run, in increasing angle from its start.
    pub fn run_indices(&self) -> Vec<usize> {
        let n = self.valid_mask.len();
        let (start, len) = longest_circular_run(&self.valid_mask);
        (0..len).map(|k| (start + k) % n).collect()
    }

    pub fn is_empty(&self) -> bool {
        !self.valid_mask.iter().any(|&v| v)
    }
}

/// `(start, length)` of the first longest run of `true`, wrapping around.
fn longest_circular_run(mask: &[bool]) -> (usize, usize) {
    let n = mask.len();
    if mask.iter().all(|&v| v) {
        return (0, n);
    }
    // start scanning right after a gap so wrapped runs are seen whole
    let gap = mask.iter().position(|&v| !v).expect("mask has a gap");
    let (mut best, mut cur_start, mut cur_len) = ((0, 0), 0, 0);
    for k in 1..=n {
        let i = (gap + k) % n;
        if mask[i] {
            if cur_len == 0 {
                cur_start = i;
            }
            cur_len += 1;
            let better = cur_len > best.1 || (cur_len == best.1 && cur_start < best.0);
            if better {
                best = (cur_start, cur_len);
            }
        } else {
            cur_len = 0;
        }
    }
    best
}

/// One hole followed over the operating range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HoleTrajectory {
    pub part: usize,
    pub hole: usize,
    pub points: Vec<Point>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MotionResult {
    pub frames: Vec<Frame>,
    pub range: OperatingRange,
    pub trajectories: Vec<HoleTrajectory>,
}

/// Where a parent pin is read from: a part placed earlier and its local hole.
#[derive(Clone, Copy, Debug)]
struct PinSource {
    part: usize,
    local: Point,
}

#[derive(Clone, Debug)]
struct PreparedDyad {
    child1: usize,
    child2: usize,
    source_a: PinSource,
    source_b: PinSource,
    c1_at_a: Point,
    c1_at_joint: Point,
    c2_at_b: Point,
    c2_at_joint: Point,
    d_c1: f64,
    d_c2: f64,
    branch: Branch,
    mirror1: bool,
    mirror2: bool,
}

/// A mechanism checked for admissibility with its solve plan precomputed.
#[derive(Clone, Debug)]
pub struct PreparedMechanism {
    n_parts: usize,
    ground: usize,
    actuator: usize,
    ground_pose: Pose,
    pivot_world: Point,
    actuator_pivot_local: Point,
    actuator_mirrored: bool,
    dyads: Vec<PreparedDyad>,
    tracked: Vec<usize>,
    local_holes: Vec<Vec<Point>>,
}

impl PreparedMechanism {
    pub fn new(g: &MechanismGraph, catalog: &PartCatalog) -> Result<Self, KinematicsError> {
        let topo = g.topology();
        for vertex in 0..topo.n_parts {
            let part = catalog.get(g.part_type(vertex)).ok_or(MechanismError::PartOutOfCatalog {
                vertex,
                part_type: g.part_type(vertex),
                catalog: catalog.len(),
            })?;
            let edges = topo.part_edges(vertex);
            let holes = &g.holes()[edges];
            for (k, &hole) in holes.iter().enumerate() {
                if hole >= part.hole_count() {
                    return Err(KinematicsError::HoleOutOfRange { vertex, hole, count: part.hole_count() });
                }
                if holes[..k].contains(&hole) {
                    return Err(KinematicsError::HoleReused { vertex, hole });
                }
            }
        }
        let local_holes: Vec<Vec<Point>> =
            g.part_types().iter().map(|&t| catalog.part(t).holes().collect()).collect();
        let local = |vertex: usize, pin: usize| {
            let hole = g.hole(vertex, pin).expect("edge exists in a validated topology");
            local_holes[vertex][hole]
        };

        let ground_holes = &local_holes[topo.ground];
        let (h0, h1) = (ground_holes[0], ground_holes[1]);
        let ground_pose = Pose::from_anchors(h0, h1, Point::ORIGIN, Point::new(h0.distance(h1), 0.0), false);
        let pivot_world = ground_pose.apply(local(topo.ground, topo.pivot));

        let mut placed = vec![false; topo.n_parts];
        placed[topo.ground] = true;
        placed[topo.actuator] = true;
        let source = |pin: usize, placed: &[bool]| {
            let part = topo.parts_on_pin(pin).find(|&p| placed[p]).expect("parent pin is placed");
            PinSource { part, local: local(part, pin) }
        };
        let mut dyads = Vec::with_capacity(topo.dyads.len());
        for (k, d) in topo.dyads.iter().enumerate() {
            let (c1_at_a, c1_at_joint) = (local(d.child1, d.parent_a), local(d.child1, d.joint));
            let (c2_at_b, c2_at_joint) = (local(d.child2, d.parent_b), local(d.child2, d.joint));
            dyads.push(PreparedDyad {
                child1: d.child1,
                child2: d.child2,
                source_a: source(d.parent_a, &placed),
                source_b: source(d.parent_b, &placed),
                c1_at_a,
                c1_at_joint,
                c2_at_b,
                c2_at_joint,
                d_c1: c1_at_a.distance(c1_at_joint),
                d_c2: c2_at_b.distance(c2_at_joint),
                branch: g.branch_signs()[k],
                mirror1: g.is_mirrored(d.child1),
                mirror2: g.is_mirrored(d.child2),
            });
            placed[d.child1] = true;
            placed[d.child2] = true;
        }

        Ok(Self {
            n_parts: topo.n_parts,
            ground: topo.ground,
            actuator: topo.actuator,
            ground_pose,
            pivot_world,
            actuator_pivot_local: local(topo.actuator, topo.pivot),
            actuator_mirrored: g.is_mirrored(topo.actuator),
            dyads,
            tracked: tracked_parts(g),
            local_holes,
        })
    }

    pub fn solve(&self, theta: ActuatorAngle) -> AngleSolution {
        let mut poses: Vec<Option<Pose>> = vec![None; self.n_parts];
        poses[self.ground] = Some(self.ground_pose);
        let rot = self.ground_pose.rot + theta.radians();
        let mut act = Pose { tx: 0.0, ty: 0.0, rot, mirrored: self.actuator_mirrored };
        let offset = self.pivot_world - act.apply(self.actuator_pivot_local);
        act.tx = offset.x;
        act.ty = offset.y;
        poses[self.actuator] = Some(act);

        let at = |poses: &[Option<Pose>], s: PinSource| poses[s.part].expect("source placed").apply(s.local);
        for (k, d) in self.dyads.iter().enumerate() {
            let a = at(&poses, d.source_a);
            let b = at(&poses, d.source_b);
            let sol = match solve_dyad(a, b, d.d_c1, d.d_c2, d.branch) {
                Ok(s) => s,
                Err(lock) => return AngleSolution::Locked { dyad: k, lock },
            };
            poses[d.child1] = Some(Pose::from_anchors(d.c1_at_a, d.c1_at_joint, a, sol.joint, d.mirror1));
            poses[d.child2] = Some(Pose::from_anchors(d.c2_at_b, d.c2_at_joint, b, sol.joint, d.mirror2));
        }
        AngleSolution::Solved(Frame { theta: theta.degrees(), poses })
    }

    pub fn sweep(&self, cfg: &SweepConfig) -> Result<MotionResult, KinematicsError> {
        let n = cfg.samples()?;
        let solved: Vec<Option<Frame>> = (0..n)
            .map(|i| {
                let theta = ActuatorAngle::new(i as f64 * cfg.resolution_deg).expect("finite");
                self.solve(theta).frame()
            })
            .collect();
        let range = OperatingRange::from_mask(solved.iter().map(Option::is_some).collect(), cfg.resolution_deg);
        let mut solved: Vec<Option<Frame>> = solved;
        let frames: Vec<Frame> = range
            .run_indices()
            .into_iter()
            .map(|i| solved[i].take().expect("run sample is valid"))
            .collect();
        let trajectories = self
            .tracked
            .iter()
            .flat_map(|&part| (0..self.local_holes[part].len()).map(move |hole| (part, hole)))
            .map(|(part, hole)| HoleTrajectory {
                part,
                hole,
                points: frames
                    .iter()
                    .map(|f| f.poses[part].expect("solved frame").apply(self.local_holes[part][hole]))
                    .collect(),
            })
            .collect();
        Ok(MotionResult { frames, range, trajectories })
    }

    pub fn tracked_parts(&self) -> &[usize] {
        &self.tracked
    }

    pub fn local_holes(&self, vertex: usize) -> &[Point] {
        &self.local_holes[vertex]
    }
}

/// Parts whose motion is more than a fixed rotation: everything except the
/// ground and the parts pinned to it.
pub fn tracked_parts(g: &MechanismGraph) -> Vec<usize> {
    let topo = g.topology();
    let excluded = topo.grounded_neighbours();
    (0..topo.n_parts).filter(|&p| p != topo.ground && !excluded.contains(&p)).collect()
}

pub fn solve_at_angle(g: &MechanismGraph, catalog: &PartCatalog, theta: f64) -> Result<AngleSolution, KinematicsError> {
    Ok(PreparedMechanism::new(g, catalog)?.solve(ActuatorAngle::new(theta)?))
}

pub fn sweep(g: &MechanismGraph, catalog: &PartCatalog, cfg: &SweepConfig) -> Result<MotionResult, KinematicsError> {
    PreparedMechanism::new(g, catalog)?.sweep(cfg)
}

/// Raw coupler curves of the tracked parts. Trajectories with fewer than
/// two points are skipped.
pub fn extract_trajectories(m: &MotionResult) -> Vec<(usize, usize, Curve)> {
    m.trajectories
        .iter()
        .filter_map(|t| {
            let curve = Curve::new(t.points.clone(), m.range.is_full).ok()?;
            Some((t.part, t.hole, curve))
        })
        .collect()
}
