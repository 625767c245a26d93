//! Initial plans: population-weighted k-means over unit centroids, then
//! stochastic rebalancing until the plan is admissible.

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geography::Geography;
use crate::geometry::{dissolve_district, polsby_popper, Point};
use crate::plan::{evaluate, Admissibility, Plan};
use crate::rng::substream;

pub const KMEANS_MAX_ITER: usize = 300;
pub const KMEANS_REL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansState {
    pub centers: Vec<Point>,
    pub labels: Vec<u32>,
    /// Weighted within-cluster sum of squares, person * mi^2.
    pub objective: f64,
    /// Objective after each Lloyd iteration.
    pub trace: Vec<f64>,
}

impl KMeansState {
    pub fn to_plan(&self) -> Result<Plan> {
        Plan::new(self.labels.clone(), self.centers.len())
    }
}

fn weighted_objective(points: &[Point], weights: &[f64], centers: &[Point], labels: &[u32]) -> f64 {
    points
        .iter()
        .zip(weights)
        .zip(labels)
        .map(|((p, w), &l)| w * p.distance_sq(centers[l as usize]))
        .sum()
}

/// Draws an index with probability proportional to `mass`; `None` if all zero.
fn sample_proportional<R: Rng>(mass: &[f64], rng: &mut R) -> Option<usize> {
    let total: f64 = mass.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = None;
    for (i, &m) in mass.iter().enumerate() {
        if m > 0.0 {
            acc += m;
            last_positive = Some(i);
            if target < acc {
                return Some(i);
            }
        }
    }
    last_positive
}

/// k-means++ seeding with mass `weight * D^2`.
fn kmeans_pp<R: Rng>(points: &[Point], weights: &[f64], k: usize, rng: &mut R) -> Vec<Point> {
    let n = points.len();
    let mut chosen = vec![false; n];
    let first = sample_proportional(weights, rng).unwrap_or(0);
    chosen[first] = true;
    let mut centers = vec![points[first]];
    let mut d2: Vec<f64> = points.iter().map(|p| p.distance_sq(points[first])).collect();
    while centers.len() < k {
        let mass: Vec<f64> = d2.iter().zip(weights).map(|(d, w)| d * w).collect();
        let next = match sample_proportional(&mass, rng) {
            Some(i) => i,
            None => {
                // every remaining point coincides with a center or weighs nothing
                let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
                *free.choose(rng).expect("k <= n")
            }
        };
        chosen[next] = true;
        centers.push(points[next]);
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(p.distance_sq(points[next]));
        }
    }
    centers
}

fn assign(points: &[Point], centers: &[Point], labels: &mut [u32]) {
    for (label, p) in labels.iter_mut().zip(points) {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (c, center) in centers.iter().enumerate() {
            let d = p.distance_sq(*center);
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        *label = best as u32;
    }
}

/// Gives every empty cluster the member of the largest cluster farthest
/// from its center.
fn repair_empty(points: &[Point], centers: &[Point], labels: &mut [u32]) {
    let k = centers.len();
    loop {
        let mut sizes = vec![0usize; k];
        for &l in labels.iter() {
            sizes[l as usize] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let largest = (0..k).max_by_key(|&c| (sizes[c], std::cmp::Reverse(c))).unwrap();
        let far = (0..points.len())
            .filter(|&i| labels[i] as usize == largest)
            .max_by(|&a, &b| {
                points[a]
                    .distance_sq(centers[largest])
                    .total_cmp(&points[b].distance_sq(centers[largest]))
                    .then(b.cmp(&a))
            })
            .unwrap();
        labels[far] = empty as u32;
    }
}

fn update_centers(points: &[Point], weights: &[f64], labels: &[u32], centers: &mut [Point]) {
    let k = centers.len();
    let mut sx = vec![0.0; k];
    let mut sy = vec![0.0; k];
    let mut sw = vec![0.0; k];
    let mut count = vec![0usize; k];
    let mut ux = vec![0.0; k];
    let mut uy = vec![0.0; k];
    for ((p, &w), &l) in points.iter().zip(weights).zip(labels) {
        let l = l as usize;
        sx[l] += w * p.x;
        sy[l] += w * p.y;
        sw[l] += w;
        count[l] += 1;
        ux[l] += p.x;
        uy[l] += p.y;
    }
    for c in 0..k {
        if sw[c] > 0.0 {
            centers[c] = Point::new(sx[c] / sw[c], sy[c] / sw[c]);
        } else if count[c] > 0 {
            // weightless cluster: its objective term is zero wherever the center sits
            centers[c] = Point::new(ux[c] / count[c] as f64, uy[c] / count[c] as f64);
        }
    }
}

/// Population-weighted Lloyd's algorithm from a k-means++ start.
pub fn weighted_kmeans<R: Rng>(
    points: &[Point],
    weights: &[f64],
    k: usize,
    rng: &mut R,
) -> Result<KMeansState> {
    let n = points.len();
    if weights.len() != n {
        return Err(Error::InvalidParameter("one weight per point required".into()));
    }
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!("cannot make {k} clusters from {n} points")));
    }
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::InvalidParameter("weights must be finite and non-negative".into()));
    }
    if !(weights.iter().sum::<f64>() > 0.0) {
        return Err(Error::InvalidParameter("all weights are zero".into()));
    }

    let mut centers = kmeans_pp(points, weights, k, rng);
    let mut labels = vec![0u32; n];
    let mut trace = Vec::new();
    let mut prev = f64::INFINITY;
    for _ in 0..KMEANS_MAX_ITER {
        assign(points, &centers, &mut labels);
        repair_empty(points, &centers, &mut labels);
        update_centers(points, weights, &labels, &mut centers);
        let obj = weighted_objective(points, weights, &centers, &labels);
        trace.push(obj);
        let converged = prev.is_finite() && (prev - obj) <= KMEANS_REL_TOL * prev;
        prev = obj;
        if converged || obj == 0.0 {
            break;
        }
    }
    Ok(KMeansState {
        objective: prev,
        centers,
        labels,
        trace,
    })
}

/// Weighted k-means over unit centroids, weighted by population.
pub fn kmeans_plan<R: Rng>(geo: &Geography, k: usize, rng: &mut R) -> Result<(Plan, KMeansState)> {
    let points: Vec<Point> = geo.units().iter().map(|u| u.centroid).collect();
    let weights: Vec<f64> = geo.units().iter().map(|u| u.population as f64).collect();
    let state = weighted_kmeans(&points, &weights, k, rng)?;
    Ok((state.to_plan()?, state))
}

/// Minimum Polsby-Popper at least `min_pp_floor` and every district in one piece.
pub fn accept_interim(plan: &Plan, geo: &Geography, min_pp_floor: f64) -> Result<bool> {
    for d in 0..plan.n_districts() {
        let g = dissolve_district(plan, d, geo)?;
        if g.part_count != 1 || polsby_popper(&g)? < min_pp_floor {
            return Ok(false);
        }
    }
    Ok(true)
}

/// How rebalancing picks the unit to move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitSampling {
    /// Prefer donor units that touch the recipient district.
    #[default]
    Boundary,
    /// Any unit of the donor districts, uniformly.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RebalanceConfig {
    pub admissibility: Admissibility,
    pub max_iter: usize,
    pub restarts: usize,
    pub seed: u64,
    pub sampling: UnitSampling,
}

impl RebalanceConfig {
    pub fn new(admissibility: Admissibility, seed: u64) -> Self {
        RebalanceConfig {
            admissibility,
            max_iter: 1000,
            restarts: 3,
            seed,
            sampling: UnitSampling::Boundary,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RebalanceOutcome {
    pub plan: Plan,
    pub converged: bool,
    /// Loop iterations across all attempts.
    pub iterations: usize,
    /// Attempt that produced `plan`.
    pub attempt: usize,
    pub final_deviations: Vec<f64>,
    pub min_pp: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub converged: bool,
    pub iterations: usize,
    pub attempt: usize,
    pub final_deviations: Vec<f64>,
    pub min_pp: f64,
}

impl From<&RebalanceOutcome> for ConvergenceReport {
    fn from(o: &RebalanceOutcome) -> Self {
        ConvergenceReport {
            converged: o.converged,
            iterations: o.iterations,
            attempt: o.attempt,
            final_deviations: o.final_deviations.clone(),
            min_pp: o.min_pp,
        }
    }
}

/// Total population outside `[lo, hi]`, summed over districts.
fn imbalance(pops: &[u64], lo: f64, hi: f64) -> f64 {
    pops.iter()
        .map(|&p| {
            let p = p as f64;
            (lo - p).max(0.0) + (p - hi).max(0.0)
        })
        .sum()
}

struct Attempt<'a, R: Rng> {
    geo: &'a Geography,
    cfg: &'a RebalanceConfig,
    rng: R,
    lo: f64,
    hi: f64,
    target: f64,
}

enum Step {
    Converged,
    Continue,
}

impl<R: Rng> Attempt<'_, R> {
    fn floor(&self) -> f64 {
        self.cfg.admissibility.pp_floor()
    }

    /// Units of `donors` that may move to `recipient`, honoring the sampling mode.
    fn candidates(&self, plan: &Plan, donors: &[usize], recipient: usize) -> Vec<usize> {
        let sizes = plan.district_sizes();
        let movable = |u: usize| {
            let d = plan.district_of(u);
            d != recipient && donors.contains(&d) && sizes[d] > 1
        };
        if self.cfg.sampling == UnitSampling::Boundary {
            let touching: Vec<usize> = (0..plan.len())
                .filter(|&u| movable(u))
                .filter(|&u| {
                    self.geo
                        .adjacency()
                        .neighbors(u)
                        .iter()
                        .any(|&v| plan.district_of(v) == recipient)
                })
                .collect();
            if !touching.is_empty() {
                return touching;
            }
        }
        (0..plan.len()).filter(|&u| movable(u)).collect()
    }

    /// Moves `u` to `to`; keeps the move iff the interim check passes.
    fn try_move(&mut self, plan: &mut Plan, u: usize, to: usize) -> Result<bool> {
        let from = plan.reassign(u, to);
        if accept_interim(plan, self.geo, self.floor())? {
            Ok(true)
        } else {
            plan.reassign(u, from);
            Ok(false)
        }
    }

    fn step(&mut self, plan: &mut Plan) -> Result<Step> {
        let eval = evaluate(plan, self.geo, &self.cfg.admissibility)?;
        let pops = &eval.stats.populations;
        let in_bounds = pops.iter().all(|&p| (p as f64) >= self.lo && (p as f64) <= self.hi);
        if in_bounds && eval.admissible {
            return Ok(Step::Converged);
        }
        let n = plan.n_districts();
        let under: Vec<usize> = (0..n).filter(|&d| (pops[d] as f64) < self.lo).collect();
        let over: Vec<usize> = (0..n).filter(|&d| (pops[d] as f64) > self.hi).collect();

        if !under.is_empty() {
            let recipient = *under.choose(&mut self.rng).unwrap();
            let donors = self.donors_for(plan, pops, &over, recipient);
            let pool = self.candidates(plan, &donors, recipient);
            if let Some(&u) = pool.choose(&mut self.rng) {
                self.try_move(plan, u, recipient)?;
            }
        } else if !over.is_empty() {
            let below: Vec<usize> = (0..n).filter(|&d| (pops[d] as f64) < self.target).collect();
            for &donor in &over {
                let pool = match self.cfg.sampling {
                    UnitSampling::Boundary => {
                        let mut pool: Vec<usize> = below
                            .iter()
                            .flat_map(|&b| self.candidates(plan, &[donor], b))
                            .collect();
                        pool.sort_unstable();
                        pool.dedup();
                        pool
                    }
                    UnitSampling::Uniform => plan.members(donor).collect(),
                };
                if pool.len() < 2 && plan.district_sizes()[donor] < 2 {
                    continue;
                }
                let Some(&u) = pool.choose(&mut self.rng) else {
                    continue;
                };
                let current = plan.populations(self.geo);
                for &b in &below {
                    if b == donor || plan.district_of(u) != donor {
                        continue;
                    }
                    if (current[b] + self.geo.population(u)) as f64 <= self.hi
                        && self.try_move(plan, u, b)?
                    {
                        break;
                    }
                }
            }
        } else {
            // balanced but not contiguous or compact enough: try a boundary shuffle
            let u = self.rng.random_range(0..plan.len());
            let from = plan.district_of(u);
            let mut targets: Vec<usize> = self
                .geo
                .adjacency()
                .neighbors(u)
                .iter()
                .map(|&v| plan.district_of(v))
                .filter(|&d| d != from)
                .collect();
            targets.sort_unstable();
            targets.dedup();
            if plan.district_sizes()[from] > 1 {
                if let Some(&to) = targets.choose(&mut self.rng) {
                    let pop = self.geo.population(u) as f64;
                    let stays_balanced = pops[from] as f64 - pop >= self.lo
                        && pops[to] as f64 + pop <= self.hi;
                    if stays_balanced {
                        self.try_move(plan, u, to)?;
                    }
                }
            }
        }
        Ok(Step::Continue)
    }

    /// Overpopulated districts supply units; with boundary sampling, those
    /// touching the recipient are preferred, then any above-target neighbor.
    fn donors_for(&self, plan: &Plan, pops: &[u64], over: &[usize], recipient: usize) -> Vec<usize> {
        let n = plan.n_districts();
        let above: Vec<usize> = (0..n)
            .filter(|&d| d != recipient && pops[d] as f64 > self.target)
            .collect();
        if self.cfg.sampling == UnitSampling::Uniform {
            return if over.is_empty() { above } else { over.to_vec() };
        }
        let touching = district_neighbors(plan, self.geo, recipient);
        let near_over: Vec<usize> = over.iter().copied().filter(|d| touching[*d]).collect();
        if !near_over.is_empty() {
            return near_over;
        }
        let near_above: Vec<usize> = above.iter().copied().filter(|d| touching[*d]).collect();
        if !near_above.is_empty() {
            return near_above;
        }
        if over.is_empty() {
            above
        } else {
            over.to_vec()
        }
    }
}

/// `touching[d]` is true when district `d` borders district `of`.
fn district_neighbors(plan: &Plan, geo: &Geography, of: usize) -> Vec<bool> {
    let mut touching = vec![false; plan.n_districts()];
    for u in plan.members(of) {
        for &v in geo.adjacency().neighbors(u) {
            touching[plan.district_of(v)] = true;
        }
    }
    touching[of] = false;
    touching
}

/// Stochastic rebalancing of a seed plan.
///
/// Each attempt starts from `initial` with its own derived random stream and
/// runs up to `max_iter` iterations. Underpopulated districts pull a unit
/// from an overpopulated one; otherwise overpopulated districts push a unit
/// to a below-target district without exceeding the upper bound. A move is
/// kept only if every district stays in one piece and the minimum
/// Polsby-Popper stays above the floor. The first converged attempt wins;
/// if none converges, the least imbalanced plan seen is returned unconverged.
pub fn srkmeans(initial: &Plan, geo: &Geography, cfg: &RebalanceConfig) -> Result<RebalanceOutcome> {
    let n = initial.n_districts();
    let (lo, hi) = cfg.admissibility.population_bounds(geo.total_population(), n);
    let target = geo.total_population() as f64 / n as f64;
    let mut total_iterations = 0;
    let mut best: Option<(f64, Plan, usize)> = None;

    for attempt in 0..cfg.restarts.max(1) {
        let mut run = Attempt {
            geo,
            cfg,
            rng: substream(cfg.seed, "srkmeans", attempt as u64),
            lo,
            hi,
            target,
        };
        let mut plan = initial.clone();
        for _ in 0..cfg.max_iter {
            if let Step::Converged = run.step(&mut plan)? {
                return finish(plan, geo, cfg, true, total_iterations, attempt);
            }
            total_iterations += 1;
            let score = imbalance(&plan.populations(geo), lo, hi);
            if best.as_ref().is_none_or(|(s, _, _)| score < *s) {
                best = Some((score, plan.clone(), attempt));
            }
        }
        // the final state of an attempt may already be admissible
        if let Step::Converged = run.step(&mut plan)? {
            return finish(plan, geo, cfg, true, total_iterations, attempt);
        }
    }
    let (_, plan, attempt) = best.expect("at least one iteration");
    finish(plan, geo, cfg, false, total_iterations, attempt)
}

fn finish(
    plan: Plan,
    geo: &Geography,
    cfg: &RebalanceConfig,
    converged: bool,
    iterations: usize,
    attempt: usize,
) -> Result<RebalanceOutcome> {
    let eval = evaluate(&plan, geo, &cfg.admissibility)?;
    Ok(RebalanceOutcome {
        final_deviations: eval.stats.deviations,
        min_pp: eval.stats.min_pp,
        plan,
        converged,
        iterations,
        attempt,
    })
}
