//! Inverse design solvers over the integer design box: random sampling,
//! random-restart greedy descent, a genetic algorithm, NSGA-II for the
//! kinematics vs GHG trade-off, exhaustive end-hole enumeration and the
//! scarcity scan.

use std::cmp::Ordering;
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Availability, Inventory};
use crate::curves::{Curve, CurveError, NormalizationConfig};
use crate::kinematics::SweepConfig;
use crate::mechanism::{DesignVector, Topology};
use crate::objective::{part_counts, Evaluator, Mode, ObjectiveReport, ObjectiveWeights};
use crate::seeding;

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("inventory cannot fill the template: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Target(#[from] CurveError),
    #[error("invalid solver config: {0}")]
    Config(String),
}

/// A template and an evaluator: everything a solver needs.
#[derive(Clone, Debug)]
pub struct Problem {
    template: Arc<Topology>,
    evaluator: Evaluator,
}

impl Problem {
    pub fn new(
        template: Topology,
        inventory: Inventory,
        target: &Curve,
        weights: ObjectiveWeights,
        sweep: SweepConfig,
        normalization: NormalizationConfig,
        mode: Mode,
    ) -> Result<Self, SearchError> {
        if !weights.is_valid() {
            return Err(SearchError::Config("weights must be finite and non-negative".into()));
        }
        sweep.samples().map_err(|e| SearchError::Config(e.to_string()))?;
        let evaluator = Evaluator::new(inventory, target, weights, sweep, normalization, mode)?;
        Ok(Self { template: Arc::new(template), evaluator })
    }

    /// Four-bar template with default weights, sweep and normalization.
    pub fn four_bar(inventory: Inventory, target: &Curve, mode: Mode) -> Result<Self, SearchError> {
        Self::new(
            Topology::four_bar(),
            inventory,
            target,
            ObjectiveWeights::default(),
            SweepConfig::default(),
            NormalizationConfig::default(),
            mode,
        )
    }

    pub fn template(&self) -> &Arc<Topology> {
        &self.template
    }

    pub fn evaluator(&self) -> &Evaluator {
        &self.evaluator
    }

    pub fn inventory(&self) -> &Inventory {
        self.evaluator.inventory()
    }

    pub fn mode(&self) -> Mode {
        self.evaluator.mode()
    }

    /// Exclusive upper bound of each gene: part types for `p`, the largest
    /// hole count for `h`.
    pub fn gene_bounds(&self) -> Vec<usize> {
        let catalog = self.inventory().catalog();
        let n = self.template.n_parts;
        let mut bounds = vec![catalog.len(); n];
        bounds.resize(n + self.template.n_edges(), catalog.max_hole_count());
        bounds
    }

    pub fn design(&self, genes: &[usize]) -> DesignVector {
        DesignVector::from_genes(self.template.clone(), genes).expect("gene vectors follow the template")
    }

    pub fn evaluate(&self, genes: &[usize]) -> ObjectiveReport {
        self.evaluator.evaluate(&self.design(genes))
    }
}

/// Progress callbacks and cooperative cancellation.
pub trait Monitor: Sync {
    fn on_progress(&self, _progress: &Progress) {}
    fn is_cancelled(&self) -> bool {
        false
    }
}

/// Monitor that ignores everything.
pub struct Silent;

impl Monitor for Silent {}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Progress {
    pub evaluations: usize,
    pub budget: usize,
    pub best_f_kin: f64,
    /// `(f_kin, f_ghg)` front of the current population (multi mode).
    pub pareto: Option<Vec<(f64, f64)>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub index: usize,
    pub f_kin: f64,
    pub f_ghg: f64,
    pub admissible: bool,
    pub p: Vec<usize>,
    pub h: Vec<usize>,
    /// Running minimum of `f_kin` up to and including this evaluation.
    pub best_f_kin: f64,
}

impl EvaluationRecord {
    pub fn genes(&self) -> Vec<usize> {
        [self.p.as_slice(), self.h.as_slice()].concat()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub seed: u64,
    pub records: Vec<EvaluationRecord>,
    pub cancelled: bool,
}

impl Trace {
    /// First evaluation reaching the final best `f_kin`.
    pub fn best(&self) -> Option<&EvaluationRecord> {
        self.records.iter().min_by(|a, b| a.f_kin.total_cmp(&b.f_kin))
    }

    pub fn final_best_f_kin(&self) -> Option<f64> {
        self.records.last().map(|r| r.best_f_kin)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Budgeted evaluation with trace recording.
struct Session<'a> {
    problem: &'a Problem,
    budget: usize,
    monitor: &'a dyn Monitor,
    trace: Trace,
}

impl<'a> Session<'a> {
    fn new(problem: &'a Problem, budget: usize, seed: u64, monitor: &'a dyn Monitor) -> Self {
        Self { problem, budget, monitor, trace: Trace { seed, ..Trace::default() } }
    }

    fn remaining(&self) -> usize {
        self.budget - self.trace.records.len()
    }

    fn stopped(&mut self) -> bool {
        if self.monitor.is_cancelled() {
            self.trace.cancelled = true;
        }
        self.trace.cancelled || self.remaining() == 0
    }

    fn best(&self) -> f64 {
        self.trace.final_best_f_kin().unwrap_or(f64::INFINITY)
    }

    /// Scores as many designs as the budget allows, in parallel, recording
    /// them in input order.
    fn evaluate(&mut self, mut designs: Vec<Vec<usize>>) -> Vec<(Vec<usize>, ObjectiveReport)> {
        designs.truncate(self.remaining());
        let problem = self.problem;
        let reports: Vec<ObjectiveReport> = designs.par_iter().map(|g| problem.evaluate(g)).collect();
        let n_parts = problem.template.n_parts;
        let mut best = self.best();
        for (g, r) in designs.iter().zip(&reports) {
            best = best.min(r.f_kin);
            self.trace.records.push(EvaluationRecord {
                index: self.trace.records.len(),
                f_kin: r.f_kin,
                f_ghg: r.f_ghg,
                admissible: r.admissible,
                p: g[..n_parts].to_vec(),
                h: g[n_parts..].to_vec(),
                best_f_kin: best,
            });
        }
        designs.into_iter().zip(reports).collect()
    }

    fn report(&self, pareto: Option<Vec<(f64, f64)>>) {
        self.monitor.on_progress(&Progress {
            evaluations: self.trace.records.len(),
            budget: self.budget,
            best_f_kin: self.best(),
            pareto,
        });
    }
}

/// Fills `p` from the stock, then gives each part distinct holes for its
/// connections. The result has no availability, hole reuse or hole range
/// violations.
pub fn sample_admissible(problem: &Problem, rng: &mut impl Rng) -> Result<DesignVector, SearchError> {
    sample_design(problem.template(), problem.inventory(), rng)
}

/// [`sample_admissible`] without a problem: only the template and the stock.
pub fn sample_design(
    topo: &Arc<Topology>,
    inventory: &Inventory,
    rng: &mut impl Rng,
) -> Result<DesignVector, SearchError> {
    let catalog = inventory.catalog();
    let mut stock: Vec<Availability> = inventory.counts().to_vec();
    let mut p = Vec::with_capacity(topo.n_parts);
    for vertex in 0..topo.n_parts {
        let degree = topo.degree(vertex);
        let choices: Vec<usize> = (0..catalog.len())
            .filter(|&k| stock[k].allows(1) && catalog.part(k).hole_count() >= degree)
            .collect();
        let &k = choices
            .choose(rng)
            .ok_or_else(|| SearchError::Infeasible(format!("no part left for vertex {vertex}")))?;
        if let Availability::Limited(n) = &mut stock[k] {
            *n -= 1;
        }
        p.push(k);
    }
    let mut h = Vec::with_capacity(topo.n_edges());
    for (vertex, &k) in p.iter().enumerate() {
        let picked = rand::seq::index::sample(rng, catalog.part(k).hole_count(), topo.degree(vertex));
        h.extend(picked.iter());
    }
    Ok(DesignVector::new(topo.clone(), p, h).expect("lengths follow the template"))
}

/// Draws admissible designs until one turns fully and returns it with the
/// raw coupler curve that travels furthest, as `(design, (part, hole), curve)`.
/// Draw `k` uses its own RNG stream of `seed`.
pub fn self_seeded_target(
    topo: &Arc<Topology>,
    inventory: &Inventory,
    seed: u64,
    max_draws: usize,
) -> Result<(DesignVector, (usize, usize), Curve), SearchError> {
    let catalog = inventory.catalog();
    for k in 0..max_draws {
        let v = sample_design(topo, inventory, &mut seeding::stream(seed, k as u64))?;
        let g = v.decode(catalog).expect("sampled designs follow the template");
        let motion = crate::kinematics::sweep(&g, catalog, &SweepConfig::default()).expect("sampled designs are admissible");
        if !motion.range.is_full {
            continue;
        }
        let longest = crate::kinematics::extract_trajectories(&motion)
            .into_iter()
            .max_by(|a, b| a.2.length().total_cmp(&b.2.length()));
        if let Some((part, hole, curve)) = longest {
            if curve.length() > 0.0 {
                return Ok((v, (part, hole), curve));
            }
        }
    }
    Err(SearchError::Infeasible(format!("no fully turning design in {max_draws} draws")))
}

fn check_feasible(problem: &Problem) -> Result<(), SearchError> {
    sample_admissible(problem, &mut seeding::rng(0)).map(|_| ())
}

/// Designs evaluated per parallel batch by the sampling solvers.
const BATCH: usize = 256;

/// Independent admissible samples.
pub fn random_search(problem: &Problem, budget: usize, seed: u64, monitor: &dyn Monitor) -> Result<Trace, SearchError> {
    check_feasible(problem)?;
    let mut rng = seeding::rng(seed);
    let mut s = Session::new(problem, budget, seed, monitor);
    while !s.stopped() {
        let n = s.remaining().min(BATCH);
        let batch = (0..n)
            .map(|_| sample_admissible(problem, &mut rng).map(|v| v.genes()))
            .collect::<Result<Vec<_>, _>>()?;
        s.evaluate(batch);
        s.report(None);
    }
    Ok(s.trace)
}

/// Every design differing from `genes` in exactly one coordinate.
pub fn neighbours(genes: &[usize], bounds: &[usize]) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for (i, &bound) in bounds.iter().enumerate() {
        for value in (0..bound).filter(|&v| v != genes[i]) {
            let mut n = genes.to_vec();
            n[i] = value;
            out.push(n);
        }
    }
    out
}

/// Greedy descent over single-coordinate changes from admissible random
/// starts; restarts at a local minimum (ties stop the descent).
pub fn random_greedy(problem: &Problem, budget: usize, seed: u64, monitor: &dyn Monitor) -> Result<Trace, SearchError> {
    check_feasible(problem)?;
    let bounds = problem.gene_bounds();
    let mut rng = seeding::rng(seed);
    let mut s = Session::new(problem, budget, seed, monitor);
    while !s.stopped() {
        let start = sample_admissible(problem, &mut rng)?.genes();
        let Some((mut x, r)) = s.evaluate(vec![start]).pop() else { break };
        let mut fx = r.f_kin;
        while !s.stopped() {
            let scored = s.evaluate(neighbours(&x, &bounds));
            s.report(None);
            // first best neighbour in scan order
            let best = scored.into_iter().reduce(|a, b| if b.1.f_kin < a.1.f_kin { b } else { a });
            match best {
                Some((n, r)) if r.f_kin < fx => {
                    x = n;
                    fx = r.f_kin;
                }
                _ => break,
            }
        }
    }
    Ok(s.trace)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaConfig {
    pub population: usize,
    pub mating: usize,
    pub crossover: f64,
    pub mutation: f64,
    pub elitism: usize,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self { population: 200, mating: 100, crossover: 0.6, mutation: 0.1, elitism: 3 }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        let bad = |m: &str| Err(SearchError::Config(m.into()));
        if self.population < 2 || self.mating < 1 {
            return bad("population must be at least 2 and the mating pool non-empty");
        }
        if self.elitism > self.population || self.mating > self.population {
            return bad("elitism and mating pool cannot exceed the population");
        }
        if !(0.0..=1.0).contains(&self.crossover) || !(0.0..=1.0).contains(&self.mutation) {
            return bad("probabilities must lie in [0, 1]");
        }
        Ok(())
    }
}

/// Single-point crossover (one child) and per-gene random reset.
fn offspring(pool: &[&Vec<usize>], bounds: &[usize], cfg: &GaConfig, rng: &mut impl Rng) -> Vec<usize> {
    let a = pool.choose(rng).expect("mating pool is non-empty");
    let b = pool.choose(rng).expect("mating pool is non-empty");
    let mut child = if rng.random_bool(cfg.crossover) {
        let cut = rng.random_range(1..a.len());
        [&a[..cut], &b[cut..]].concat()
    } else {
        a.to_vec()
    };
    for (gene, &bound) in child.iter_mut().zip(bounds) {
        if rng.random_bool(cfg.mutation) {
            *gene = rng.random_range(0..bound);
        }
    }
    child
}

fn initial_population(
    problem: &Problem,
    s: &mut Session,
    cfg: &GaConfig,
    rng: &mut impl Rng,
) -> Result<Vec<(Vec<usize>, ObjectiveReport)>, SearchError> {
    let designs = (0..cfg.population)
        .map(|_| sample_admissible(problem, rng).map(|v| v.genes()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(s.evaluate(designs))
}

/// Genetic algorithm minimizing `f_kin`: the best `mating` individuals breed,
/// the best `elitism` survive unchanged, offspring fill the rest.
pub fn ga(problem: &Problem, cfg: &GaConfig, budget: usize, seed: u64, monitor: &dyn Monitor) -> Result<Trace, SearchError> {
    cfg.validate()?;
    check_feasible(problem)?;
    let bounds = problem.gene_bounds();
    let mut rng = seeding::rng(seed);
    let mut s = Session::new(problem, budget, seed, monitor);
    let mut pop = initial_population(problem, &mut s, cfg, &mut rng)?;
    s.report(None);
    while !s.stopped() {
        pop.sort_by(|a, b| a.1.f_kin.total_cmp(&b.1.f_kin));
        let pool: Vec<&Vec<usize>> = pop.iter().take(cfg.mating).map(|(g, _)| g).collect();
        let children: Vec<Vec<usize>> =
            (0..cfg.population - cfg.elitism).map(|_| offspring(&pool, &bounds, cfg, &mut rng)).collect();
        let scored = s.evaluate(children);
        pop.truncate(cfg.elitism);
        pop.extend(scored);
        s.report(None);
    }
    Ok(s.trace)
}

/// `a` is no worse in both objectives and better in one.
pub fn dominates(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 <= b.0 && a.1 <= b.1 && (a.0 < b.0 || a.1 < b.1)
}

/// Indices of the non-dominated points (both objectives minimized), sorted
/// by `f_kin`. Exact duplicates of a front point are kept.
pub fn pareto_front(points: &[(f64, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| {
        let (a, b) = (points[i], points[j]);
        a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)).then(i.cmp(&j))
    });
    let mut front: Vec<usize> = Vec::new();
    for i in order {
        let keep = match front.last() {
            None => true,
            Some(&last) => points[i].1 < points[last].1 || points[i] == points[last],
        };
        if keep {
            front.push(i);
        }
    }
    front
}

/// Non-domination rank of each point, 0 for the first front.
pub fn non_dominated_ranks(points: &[(f64, f64)]) -> Vec<usize> {
    let n = points.len();
    let mut dominated_by = vec![0usize; n];
    let mut dominates_list: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..n {
            if dominates(points[i], points[j]) {
                dominates_list[i].push(j);
            } else if dominates(points[j], points[i]) {
                dominated_by[i] += 1;
            }
        }
    }
    let mut rank = vec![usize::MAX; n];
    let mut current: Vec<usize> = (0..n).filter(|&i| dominated_by[i] == 0).collect();
    let mut r = 0;
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            rank[i] = r;
            for &j in &dominates_list[i] {
                dominated_by[j] -= 1;
                if dominated_by[j] == 0 {
                    next.push(j);
                }
            }
        }
        r += 1;
        current = next;
    }
    rank
}

/// Crowding distance of each point within its own front.
pub fn crowding_distances(points: &[(f64, f64)], ranks: &[usize]) -> Vec<f64> {
    let mut dist = vec![0.0; points.len()];
    let max_rank = ranks.iter().copied().max().unwrap_or(0);
    for r in 0..=max_rank {
        let members: Vec<usize> = (0..points.len()).filter(|&i| ranks[i] == r).collect();
        for objective in [|p: (f64, f64)| p.0, |p: (f64, f64)| p.1] {
            let mut sorted = members.clone();
            sorted.sort_by(|&i, &j| objective(points[i]).total_cmp(&objective(points[j])).then(i.cmp(&j)));
            let (Some(&first), Some(&last)) = (sorted.first(), sorted.last()) else { continue };
            let span = objective(points[last]) - objective(points[first]);
            dist[first] = f64::INFINITY;
            dist[last] = f64::INFINITY;
            if span > 0.0 {
                for w in sorted.windows(3) {
                    dist[w[1]] += (objective(points[w[2]]) - objective(points[w[0]])) / span;
                }
            }
        }
    }
    dist
}

/// Indices ordered best first by (rank, crowding descending, index).
fn nsga_order(points: &[(f64, f64)]) -> Vec<usize> {
    let ranks = non_dominated_ranks(points);
    let crowd = crowding_distances(points, &ranks);
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| {
        ranks[i].cmp(&ranks[j]).then(crowd[j].partial_cmp(&crowd[i]).unwrap_or(Ordering::Equal)).then(i.cmp(&j))
    });
    order
}

fn objectives(pop: &[(Vec<usize>, ObjectiveReport)]) -> Vec<(f64, f64)> {
    pop.iter().map(|(_, r)| (r.f_kin, r.f_ghg)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParetoMember {
    pub f_kin: f64,
    pub f_ghg: f64,
    pub p: Vec<usize>,
    pub h: Vec<usize>,
}

/// Non-dominated members of a set of evaluations.
pub fn pareto_set<'a>(records: impl IntoIterator<Item = &'a EvaluationRecord>) -> Vec<ParetoMember> {
    let records: Vec<&EvaluationRecord> = records.into_iter().collect();
    let points: Vec<(f64, f64)> = records.iter().map(|r| (r.f_kin, r.f_ghg)).collect();
    pareto_front(&points)
        .into_iter()
        .map(|i| {
            let r = records[i];
            ParetoMember { f_kin: r.f_kin, f_ghg: r.f_ghg, p: r.p.clone(), h: r.h.clone() }
        })
        .collect()
}

/// NSGA-II on `(f_kin, f_ghg)`: parents from the best `mating` by rank and
/// crowding, survivors chosen from parents and offspring together. Returns
/// the trace and the front of everything evaluated.
pub fn nsga2(
    problem: &Problem,
    cfg: &GaConfig,
    budget: usize,
    seed: u64,
    monitor: &dyn Monitor,
) -> Result<(Trace, Vec<ParetoMember>), SearchError> {
    cfg.validate()?;
    check_feasible(problem)?;
    let bounds = problem.gene_bounds();
    let mut rng = seeding::rng(seed);
    let mut s = Session::new(problem, budget, seed, monitor);
    let mut pop = initial_population(problem, &mut s, cfg, &mut rng)?;
    let snapshot = |pop: &[(Vec<usize>, ObjectiveReport)]| {
        let pts = objectives(pop);
        Some(pareto_front(&pts).into_iter().map(|i| pts[i]).collect())
    };
    s.report(snapshot(&pop));
    while !s.stopped() {
        let order = nsga_order(&objectives(&pop));
        let pool: Vec<&Vec<usize>> = order.iter().take(cfg.mating).map(|&i| &pop[i].0).collect();
        let children: Vec<Vec<usize>> =
            (0..cfg.population).map(|_| offspring(&pool, &bounds, cfg, &mut rng)).collect();
        let scored = s.evaluate(children);
        pop.extend(scored);
        let order = nsga_order(&objectives(&pop));
        let mut keep: Vec<usize> = order.into_iter().take(cfg.population).collect();
        keep.sort_unstable();
        pop = keep.into_iter().map(|i| pop[i].clone()).collect();
        s.report(snapshot(&pop));
    }
    let front = pareto_set(&s.trace.records);
    Ok((s.trace, front))
}

/// Designs whose connections all use the first or last hole of their part.
/// Single mode enumerates only part assignments within stock; multi mode
/// enumerates every assignment.
pub fn end_connection_designs(problem: &Problem) -> Vec<DesignVector> {
    let topo = problem.template();
    let catalog = problem.inventory().catalog();
    let n_types = catalog.len();
    let mut out = Vec::new();
    let mut p = vec![0usize; topo.n_parts];
    loop {
        let in_stock = part_counts(&DesignVector::new(topo.clone(), p.clone(), vec![0; topo.n_edges()]).unwrap(), n_types)
            .iter()
            .zip(problem.inventory().counts())
            .all(|(&used, a)| a.allows(used));
        if problem.mode() == Mode::Multi || in_stock {
            // per vertex: assignments of distinct end holes to its edges
            let options: Vec<Vec<Vec<usize>>> = (0..topo.n_parts)
                .map(|v| {
                    let last = catalog.part(p[v]).hole_count() - 1;
                    end_hole_assignments(topo.degree(v), last)
                })
                .collect();
            let mut pick = vec![0usize; topo.n_parts];
            if options.iter().all(|o| !o.is_empty()) {
                loop {
                    let h: Vec<usize> = (0..topo.n_parts).flat_map(|v| options[v][pick[v]].clone()).collect();
                    out.push(DesignVector::new(topo.clone(), p.clone(), h).expect("lengths follow the template"));
                    if !odometer(&mut pick, |v| options[v].len()) {
                        break;
                    }
                }
            }
        }
        if !odometer(&mut p, |_| n_types) {
            break;
        }
    }
    out
}

/// Ordered selections of `degree` distinct holes from `{0, last}`.
fn end_hole_assignments(degree: usize, last: usize) -> Vec<Vec<usize>> {
    let ends: Vec<usize> = if last == 0 { vec![0] } else { vec![0, last] };
    match degree {
        0 => vec![vec![]],
        1 => ends.iter().map(|&e| vec![e]).collect(),
        2 if ends.len() == 2 => vec![vec![0, last], vec![last, 0]],
        _ => vec![],
    }
}

/// Advances a mixed-radix counter, last digit fastest. False on wrap-around.
fn odometer(digits: &mut [usize], radix: impl Fn(usize) -> usize) -> bool {
    for i in (0..digits.len()).rev() {
        digits[i] += 1;
        if digits[i] < radix(i) {
            return true;
        }
        digits[i] = 0;
    }
    false
}

/// Scores every end-connection design.
pub fn enumerate_end_connections(problem: &Problem) -> Vec<(DesignVector, ObjectiveReport)> {
    let designs = end_connection_designs(problem);
    let reports: Vec<ObjectiveReport> = designs.par_iter().map(|v| problem.evaluator().evaluate(v)).collect();
    designs.into_iter().zip(reports).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScarcityReport {
    pub samples: usize,
    pub seed: u64,
    pub full_range: usize,
    pub admissible: usize,
    pub within_locked_score: usize,
    pub full_range_fraction: f64,
    pub admissible_fraction: f64,
    pub within_locked_score_fraction: f64,
    pub bin_width: f64,
    /// `histogram[k]` counts `f_kin` in `[k * bin_width, (k + 1) * bin_width)`.
    pub histogram: Vec<usize>,
}

/// Uniform samples over the whole design box, admissible or not. Sample `i`
/// uses its own RNG stream.
pub fn scarcity_scan(problem: &Problem, n_samples: usize, seed: u64, bin_width: f64) -> ScarcityReport {
    let bounds = problem.gene_bounds();
    let locked = problem.evaluator().weights().locked_score();
    let reports: Vec<(f64, bool, bool)> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = seeding::stream(seed, i as u64);
            let genes: Vec<usize> = bounds.iter().map(|&b| rng.random_range(0..b)).collect();
            let r = problem.evaluate(&genes);
            (r.f_kin, r.admissible, r.is_full_range())
        })
        .collect();
    let mut histogram = Vec::new();
    for &(f, _, _) in &reports {
        let bin = (f / bin_width).floor() as usize;
        if histogram.len() <= bin {
            histogram.resize(bin + 1, 0);
        }
        histogram[bin] += 1;
    }
    let full_range = reports.iter().filter(|r| r.2).count();
    let admissible = reports.iter().filter(|r| r.1).count();
    let within = reports.iter().filter(|r| r.0 <= locked).count();
    let frac = |k: usize| if n_samples == 0 { 0.0 } else { k as f64 / n_samples as f64 };
    ScarcityReport {
        samples: n_samples,
        seed,
        full_range,
        admissible,
        within_locked_score: within,
        full_range_fraction: frac(full_range),
        admissible_fraction: frac(admissible),
        within_locked_score_fraction: frac(within),
        bin_width,
        histogram,
    }
}
