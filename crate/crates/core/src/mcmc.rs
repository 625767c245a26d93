//! Markov chain over admissible plans with single-unit reassignment moves.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geography::Geography;
use crate::geometry::{dissolve_district, polsby_popper};
use crate::plan::{evaluate, is_contiguous, Admissibility, CutEdgeCounter, Plan};
use crate::rng::{substream, StreamRng};

/// Resampling budget for a proposal that would empty its donor district.
pub const MAX_PROPOSAL_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub iterations: u64,
    pub burn_in_rate: f64,
    pub theta: f64,
    pub kappa: f64,
    pub pp_min_ref: f64,
    pub seed: u64,
    /// Selects an independent random stream under `seed`, one per parallel chain.
    #[serde(default)]
    pub chain_index: u64,
    /// Record an empty sample for each rejected post-burn-in iteration.
    pub record_rejections: bool,
    /// Require every district to be connected. Only test harnesses turn this off.
    #[serde(default = "yes")]
    pub enforce_contiguity: bool,
}

fn yes() -> bool {
    true
}

impl ChainConfig {
    pub fn new(iterations: u64, adm: Admissibility, seed: u64) -> Self {
        ChainConfig {
            iterations,
            burn_in_rate: 0.01,
            theta: adm.theta,
            kappa: adm.kappa,
            pp_min_ref: adm.pp_min_ref,
            seed,
            chain_index: 0,
            record_rejections: true,
            enforce_contiguity: true,
        }
    }

    pub fn admissibility(&self) -> Admissibility {
        Admissibility {
            theta: self.theta,
            kappa: self.kappa,
            pp_min_ref: self.pp_min_ref,
        }
    }

    /// First iteration (0-based) whose outcome is recorded.
    pub fn burn_in(&self) -> u64 {
        (self.iterations as f64 * self.burn_in_rate).floor() as u64
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidParameter("iterations must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.burn_in_rate) {
            return Err(Error::InvalidParameter(format!(
                "burn-in rate {} outside [0, 1)",
                self.burn_in_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub iteration: u64,
    /// Cut edges of the adopted proposal; `None` when the proposal was rejected.
    pub cut_edges: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainHistory {
    pub samples: Vec<Sample>,
    pub accepted_count: u64,
    /// Smallest cut-edge count among the seed plan and recorded samples.
    pub min_cut_edges: usize,
    pub best_plan: Plan,
    pub initial_cut_edges: usize,
}

impl ChainHistory {
    pub fn present(&self) -> impl Iterator<Item = usize> + '_ {
        self.samples.iter().filter_map(|s| s.cut_edges)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Move {
    pub unit: usize,
    pub from: usize,
    pub to: usize,
}

/// Picks a unit uniformly and a different district uniformly, resampling
/// moves that would leave the donor district empty.
pub fn propose_move<R: Rng>(plan: &Plan, rng: &mut R) -> Option<Move> {
    let n = plan.n_districts();
    if n < 2 || plan.is_empty() {
        return None;
    }
    let sizes = plan.district_sizes();
    for _ in 0..MAX_PROPOSAL_ATTEMPTS {
        let unit = rng.random_range(0..plan.len());
        let from = plan.district_of(unit);
        let mut to = rng.random_range(0..n - 1);
        if to >= from {
            to += 1;
        }
        if sizes[from] > 1 {
            return Some(Move { unit, from, to });
        }
    }
    None
}

/// The proposed plan, or an unchanged copy when no legal move was found.
pub fn propose<R: Rng>(plan: &Plan, rng: &mut R) -> Plan {
    let mut next = plan.clone();
    if let Some(m) = propose_move(plan, rng) {
        next.reassign(m.unit, m.to);
    }
    next
}

/// Everything needed to continue a chain exactly where it stopped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainCheckpoint {
    pub config: ChainConfig,
    pub n_districts: usize,
    pub iteration: u64,
    pub assignment: Vec<u32>,
    pub best_assignment: Vec<u32>,
    pub accepted_count: u64,
    pub min_cut_edges: usize,
    pub initial_cut_edges: usize,
    pub rng: StreamRng,
}

/// A running chain. Each call to [`Chain::step`] performs one iteration.
pub struct Chain<'a> {
    geo: &'a Geography,
    cut: &'a CutEdgeCounter,
    cfg: ChainConfig,
    adm: Admissibility,
    burn_in: u64,
    avg: f64,
    plan: Plan,
    populations: Vec<u64>,
    pp_scores: Vec<f64>,
    current_cut: usize,
    rng: StreamRng,
    iteration: u64,
    accepted_count: u64,
    min_cut_edges: usize,
    best_plan: Plan,
    initial_cut_edges: usize,
}

impl<'a> Chain<'a> {
    /// Starts a chain at `initial`, which must itself be admissible.
    pub fn new(initial: Plan, cfg: ChainConfig, geo: &'a Geography, cut: &'a CutEdgeCounter) -> Result<Self> {
        cfg.validate()?;
        let adm = cfg.admissibility();
        let eval = evaluate(&initial, geo, &adm)?;
        let contiguous = eval.contiguity.iter().all(|&c| c);
        let admissible = if cfg.enforce_contiguity {
            eval.admissible
        } else {
            crate::plan::accept_proposal(&eval.stats, &vec![true; initial.n_districts()], &adm)
        };
        if !admissible {
            return Err(Error::Inadmissible(format!(
                "initial plan: max |deviation| {:.4}, min PP {:.4}, contiguous {}",
                eval.stats.max_abs_deviation(),
                eval.stats.min_pp,
                contiguous
            )));
        }
        let initial_cut_edges = cut.count(&initial);
        Ok(Chain {
            geo,
            cut,
            adm,
            burn_in: cfg.burn_in(),
            avg: geo.total_population() as f64 / initial.n_districts() as f64,
            populations: eval.stats.populations,
            pp_scores: eval.stats.pp_scores,
            current_cut: initial_cut_edges,
            rng: substream(cfg.seed, "chain", cfg.chain_index),
            iteration: 0,
            accepted_count: 0,
            min_cut_edges: initial_cut_edges,
            best_plan: initial.clone(),
            initial_cut_edges,
            plan: initial,
            cfg,
        })
    }

    pub fn resume(ck: ChainCheckpoint, geo: &'a Geography, cut: &'a CutEdgeCounter) -> Result<Self> {
        let n = ck.n_districts;
        let plan = Plan::new(ck.assignment, n)?;
        let best = Plan::new(ck.best_assignment, n)?;
        let mut chain = Chain::new(plan, ck.config, geo, cut)?;
        chain.rng = ck.rng;
        chain.iteration = ck.iteration;
        chain.accepted_count = ck.accepted_count;
        chain.min_cut_edges = ck.min_cut_edges;
        chain.initial_cut_edges = ck.initial_cut_edges;
        chain.best_plan = best;
        Ok(chain)
    }

    pub fn checkpoint(&self) -> ChainCheckpoint {
        ChainCheckpoint {
            config: self.cfg,
            n_districts: self.plan.n_districts(),
            iteration: self.iteration,
            assignment: self.plan.assignment().to_vec(),
            best_assignment: self.best_plan.assignment().to_vec(),
            accepted_count: self.accepted_count,
            min_cut_edges: self.min_cut_edges,
            initial_cut_edges: self.initial_cut_edges,
            rng: self.rng.clone(),
        }
    }

    pub fn plan(&self) -> &Plan {
        &self.plan
    }

    pub fn current_cut_edges(&self) -> usize {
        self.current_cut
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn is_done(&self) -> bool {
        self.iteration >= self.cfg.iterations
    }

    pub fn accepted_count(&self) -> u64 {
        self.accepted_count
    }

    pub fn min_cut_edges(&self) -> usize {
        self.min_cut_edges
    }

    pub fn best_plan(&self) -> &Plan {
        &self.best_plan
    }

    pub fn initial_cut_edges(&self) -> usize {
        self.initial_cut_edges
    }

    fn within_balance(&self, pop: u64) -> bool {
        let dev = if self.avg > 0.0 { (pop as f64 - self.avg) / self.avg } else { 0.0 };
        dev.abs() <= self.adm.theta
    }

    /// Applies `m` if the resulting plan is admissible. Only the two touched
    /// districts are re-measured; the others are unchanged and already pass.
    fn try_apply(&mut self, m: Move) -> Result<bool> {
        let pop = self.geo.population(m.unit);
        let from_pop = self.populations[m.from] - pop;
        let to_pop = self.populations[m.to] + pop;
        if !self.within_balance(from_pop) || !self.within_balance(to_pop) {
            return Ok(false);
        }
        self.plan.reassign(m.unit, m.to);
        let adjacency = self.geo.adjacency();
        if self.cfg.enforce_contiguity
            && !(is_contiguous(&self.plan, m.from, adjacency) && is_contiguous(&self.plan, m.to, adjacency))
        {
            self.plan.reassign(m.unit, m.from);
            return Ok(false);
        }
        let pp_from = polsby_popper(&dissolve_district(&self.plan, m.from, self.geo)?)?;
        let pp_to = polsby_popper(&dissolve_district(&self.plan, m.to, self.geo)?)?;
        let floor = self.adm.pp_floor();
        let others_min = self
            .pp_scores
            .iter()
            .enumerate()
            .filter(|&(d, _)| d != m.from && d != m.to)
            .fold(f64::INFINITY, |acc, (_, &p)| acc.min(p));
        if pp_from.min(pp_to).min(others_min) < floor {
            self.plan.reassign(m.unit, m.from);
            return Ok(false);
        }
        self.pp_scores[m.from] = pp_from;
        self.pp_scores[m.to] = pp_to;
        self.populations[m.from] = from_pop;
        self.populations[m.to] = to_pop;
        Ok(true)
    }

    /// One iteration. Returns the sample it produced, if any.
    pub fn step(&mut self) -> Result<Option<Sample>> {
        if self.is_done() {
            return Ok(None);
        }
        let i = self.iteration;
        self.iteration += 1;
        let accepted = match propose_move(&self.plan, &mut self.rng) {
            Some(m) => self.try_apply(m)?,
            None => false,
        };
        let recording = i >= self.burn_in;
        if !accepted {
            return Ok((recording && self.cfg.record_rejections).then_some(Sample {
                iteration: i,
                cut_edges: None,
            }));
        }
        self.accepted_count += 1;
        self.current_cut = self.cut.count(&self.plan);
        if !recording {
            return Ok(None);
        }
        if self.current_cut < self.min_cut_edges {
            self.min_cut_edges = self.current_cut;
            self.best_plan = self.plan.clone();
        }
        Ok(Some(Sample {
            iteration: i,
            cut_edges: Some(self.current_cut),
        }))
    }

    /// Runs to completion, passing each sample to `sink`.
    pub fn run_with<F: FnMut(&Sample) -> Result<()>>(&mut self, mut sink: F) -> Result<()> {
        while !self.is_done() {
            if let Some(s) = self.step()? {
                sink(&s)?;
            }
        }
        Ok(())
    }

    pub fn into_history(self, samples: Vec<Sample>) -> ChainHistory {
        ChainHistory {
            samples,
            accepted_count: self.accepted_count,
            min_cut_edges: self.min_cut_edges,
            best_plan: self.best_plan,
            initial_cut_edges: self.initial_cut_edges,
        }
    }
}

/// Runs a full chain from an admissible plan, keeping every sample in memory.
pub fn run_chain(
    initial: Plan,
    cfg: &ChainConfig,
    geo: &Geography,
    cut: &CutEdgeCounter,
) -> Result<ChainHistory> {
    let mut chain = Chain::new(initial, *cfg, geo, cut)?;
    let mut samples = Vec::with_capacity((cfg.iterations - cfg.burn_in()) as usize);
    chain.run_with(|s| {
        samples.push(*s);
        Ok(())
    })?;
    Ok(chain.into_history(samples))
}
