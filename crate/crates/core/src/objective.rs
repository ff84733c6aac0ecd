//! Scoring of design vectors: curve match, admissibility penalties, the
//! weighted kinematic objective and the GHG objective.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::catalog::Inventory;
use crate::curves::{chamfer_below, chamfer_lower_bound, normalize, Curve, CurveError, NormalizationConfig};
use crate::kinematics::{extract_trajectories, MotionResult, PreparedMechanism, SweepConfig};
use crate::mechanism::{DesignVector, MechanismGraph};

/// Weights of the kinematic objective. The default range weight of 1 makes a
/// fully locked admissible design score exactly `200 + 360 = 560`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveWeights {
    pub w_cd: f64,
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub w4: f64,
}

impl Default for ObjectiveWeights {
    fn default() -> Self {
        Self { w_cd: 200.0, w1: 10.0, w2: 10.0, w3: 10.0, w4: 1.0 }
    }
}

impl ObjectiveWeights {
    /// Score of an admissible design that never moves.
    pub fn locked_score(&self) -> f64 {
        self.w_cd + 360.0 * self.w4
    }

    pub fn is_valid(&self) -> bool {
        [self.w_cd, self.w1, self.w2, self.w3, self.w4].iter().all(|w| w.is_finite() && *w >= 0.0)
    }
}

/// Single-objective problems must stay inside the inventory; multi-objective
/// problems may buy new parts, which moves part availability out of the
/// kinematic objective and into the GHG objective.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Single,
    Multi,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Penalties {
    /// Units used beyond availability, summed over part types.
    pub p1: usize,
    /// Extra pins on an already used hole.
    pub p2: usize,
    /// Total overshoot of hole indices past the last hole.
    pub p3: usize,
}

impl Penalties {
    pub fn admissible(&self) -> bool {
        self.p1 == 0 && self.p2 == 0 && self.p3 == 0
    }
}

pub fn part_counts(v: &DesignVector, n_types: usize) -> Vec<usize> {
    let mut counts = vec![0usize; n_types];
    for &t in &v.p {
        counts[t] += 1;
    }
    counts
}

/// Admissibility penalties; the range penalty needs a sweep and is computed
/// by [`Evaluator`].
pub fn penalties(v: &DesignVector, inventory: &Inventory) -> Penalties {
    let catalog = inventory.catalog();
    let p1 = part_counts(v, catalog.len())
        .iter()
        .zip(inventory.counts())
        .map(|(&used, avail)| avail.excess(used))
        .sum();

    let topo = &v.topology;
    let (mut p2, mut p3) = (0, 0);
    for vertex in 0..topo.n_parts {
        let holes = &v.h[topo.part_edges(vertex)];
        let last = catalog.part(v.p[vertex]).hole_count() - 1;
        for (k, &hole) in holes.iter().enumerate() {
            p3 += hole.saturating_sub(last);
            // each repeated use after the first adds one
            if holes[..k].contains(&hole) {
                p2 += 1;
            }
        }
    }
    Penalties { p1, p2, p3 }
}

/// Grams CO2-eq of the parts that must be newly made.
pub fn f_ghg(v: &DesignVector, inventory: &Inventory) -> f64 {
    let catalog = inventory.catalog();
    part_counts(v, catalog.len())
        .iter()
        .enumerate()
        .map(|(k, &used)| {
            let excess = inventory.availability(k).excess(used);
            if excess == 0 {
                0.0
            } else {
                catalog.ghg_of_part(catalog.part(k)) * excess as f64
            }
        })
        .sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveReport {
    pub f_cd: f64,
    pub p1: usize,
    pub p2: usize,
    pub p3: usize,
    pub p4: f64,
    pub f_kin: f64,
    pub f_ghg: f64,
    /// `p1 = p2 = p3 = 0`.
    pub admissible: bool,
    /// Whether the kinematic sweep ran: admissible in single mode,
    /// `p2 = p3 = 0` in multi mode.
    pub solved: bool,
    /// `(part vertex, hole)` of the best matching coupler curve.
    pub best_curve: Option<(usize, usize)>,
}

impl ObjectiveReport {
    pub fn is_full_range(&self) -> bool {
        self.solved && self.p4 == 0.0
    }
}

/// Coupler curves of a swept mechanism, normalized; degenerate ones dropped.
pub fn normalized_curves(motion: &MotionResult, cfg: &NormalizationConfig) -> Vec<(usize, usize, Curve)> {
    extract_trajectories(motion)
        .into_iter()
        .filter_map(|(part, hole, c)| normalize(&c, cfg).ok().map(|n| (part, hole, n)))
        .collect()
}

/// `tanh` of the smallest Chamfer distance between the normalized target and
/// the mechanism's normalized coupler curves; 1 when there is no curve.
pub fn match_score(curves: &[(usize, usize, Curve)], target: &Curve) -> (f64, Option<(usize, usize)>) {
    let mut best: Option<(f64, (usize, usize))> = None;
    for (part, hole, c) in curves {
        // ties are computed in full so the first minimum wins
        let bound = best.map_or(f64::INFINITY, |b| b.0);
        if chamfer_lower_bound(&target.points, &c.points) > bound {
            continue;
        }
        if let Some(cd) = chamfer_below(&target.points, &c.points, bound) {
            if best.is_none_or(|b| cd < b.0) {
                best = Some((cd, (*part, *hole)));
            }
        }
    }
    best.map_or((1.0, None), |(cd, id)| (cd.tanh(), Some(id)))
}

/// Everything needed to score designs against one target.
#[derive(Debug)]
pub struct Evaluator {
    inventory: Inventory,
    target: Curve,
    weights: ObjectiveWeights,
    sweep: SweepConfig,
    normalization: NormalizationConfig,
    mode: Mode,
    sweeps: AtomicU64,
}

impl Clone for Evaluator {
    fn clone(&self) -> Self {
        Self {
            inventory: self.inventory.clone(),
            target: self.target.clone(),
            weights: self.weights,
            sweep: self.sweep,
            normalization: self.normalization,
            mode: self.mode,
            sweeps: AtomicU64::new(0),
        }
    }
}

impl Evaluator {
    /// `target` is normalized here once.
    pub fn new(
        inventory: Inventory,
        target: &Curve,
        weights: ObjectiveWeights,
        sweep: SweepConfig,
        normalization: NormalizationConfig,
        mode: Mode,
    ) -> Result<Self, CurveError> {
        let target = normalize(target, &normalization)?;
        Ok(Self { inventory, target, weights, sweep, normalization, mode, sweeps: AtomicU64::new(0) })
    }

    pub fn inventory(&self) -> &Inventory {
        &self.inventory
    }

    pub fn normalized_target(&self) -> &Curve {
        &self.target
    }

    pub fn weights(&self) -> &ObjectiveWeights {
        &self.weights
    }

    pub fn sweep_config(&self) -> &SweepConfig {
        &self.sweep
    }

    pub fn normalization(&self) -> &NormalizationConfig {
        &self.normalization
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Number of kinematic sweeps run so far.
    pub fn sweep_count(&self) -> u64 {
        self.sweeps.load(Ordering::Relaxed)
    }

    /// Whether a design with these penalties is passed to the solver.
    pub fn gate(&self, pen: &Penalties) -> bool {
        match self.mode {
            Mode::Single => pen.admissible(),
            Mode::Multi => pen.p2 == 0 && pen.p3 == 0,
        }
    }

    pub fn evaluate(&self, v: &DesignVector) -> ObjectiveReport {
        self.evaluate_with_motion(v).0
    }

    /// Also returns the graph and motion when the sweep ran.
    pub fn evaluate_with_motion(&self, v: &DesignVector) -> (ObjectiveReport, Option<(MechanismGraph, MotionResult)>) {
        let pen = penalties(v, &self.inventory);
        let f_ghg = f_ghg(v, &self.inventory);
        let w = &self.weights;
        let availability_term = match self.mode {
            Mode::Single => w.w1 * pen.p1 as f64,
            Mode::Multi => 0.0,
        };
        let mut report = ObjectiveReport {
            f_cd: 1.0,
            p1: pen.p1,
            p2: pen.p2,
            p3: pen.p3,
            p4: 360.0,
            f_kin: 0.0,
            f_ghg,
            admissible: pen.admissible(),
            solved: false,
            best_curve: None,
        };
        let mut motion = None;
        if self.gate(&pen) {
            let catalog = self.inventory.catalog();
            let g = v.decode(catalog).expect("design vectors are built over this catalog");
            let prepared = PreparedMechanism::new(&g, catalog).expect("gated designs are admissible");
            let m = prepared.sweep(&self.sweep).expect("sweep resolution validated at construction");
            self.sweeps.fetch_add(1, Ordering::Relaxed);
            let curves = normalized_curves(&m, &self.normalization);
            let (f_cd, best) = match_score(&curves, &self.target);
            report.f_cd = f_cd;
            report.best_curve = best;
            report.p4 = 360.0 - m.range.span();
            report.solved = true;
            motion = Some((g, m));
        }
        report.f_kin = w.w_cd * report.f_cd
            + availability_term
            + w.w2 * pen.p2 as f64
            + w.w3 * pen.p3 as f64
            + w.w4 * report.p4;
        (report, motion)
    }
}
