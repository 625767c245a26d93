//! District plans, their statistics, and admissibility.

use std::collections::{BTreeMap, VecDeque};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geography::Geography;
use crate::geometry::{dissolve_district, polsby_popper};
use crate::ingest::{AdjacencyGraph, PostOffice};
use crate::tda::PostalNetwork;

/// Seats in the House of Representatives.
pub const HOUSE_SEATS: f64 = 435.0;

/// Number of districts for a state: `435 * state / us`, rounded to nearest,
/// at least one.
pub fn seats(state_pop: u64, us_pop: u64) -> Result<usize> {
    if state_pop == 0 || us_pop == 0 {
        return Err(Error::InvalidParameter("populations must be positive".into()));
    }
    let share = HOUSE_SEATS * state_pop as f64 / us_pop as f64;
    Ok((share.round() as usize).max(1))
}

/// Assignment of every unit (by index) to a district in `0..n_districts`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Plan {
    assignment: Vec<u32>,
    n_districts: usize,
}

impl Plan {
    /// Validates that labels are in range and every district is occupied.
    pub fn new(assignment: Vec<u32>, n_districts: usize) -> Result<Self> {
        if n_districts == 0 {
            return Err(Error::InvalidPlan("zero districts".into()));
        }
        let mut sizes = vec![0usize; n_districts];
        for (u, &d) in assignment.iter().enumerate() {
            let d = d as usize;
            if d >= n_districts {
                return Err(Error::InvalidPlan(format!(
                    "unit {u} assigned to district {d}, expected < {n_districts}"
                )));
            }
            sizes[d] += 1;
        }
        if let Some(d) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::EmptyDistrict(d));
        }
        Ok(Plan {
            assignment,
            n_districts,
        })
    }

    pub fn n_districts(&self) -> usize {
        self.n_districts
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn assignment(&self) -> &[u32] {
        &self.assignment
    }

    pub fn district_of(&self, u: usize) -> usize {
        self.assignment[u] as usize
    }

    pub fn members(&self, d: usize) -> impl Iterator<Item = usize> + '_ {
        self.assignment
            .iter()
            .enumerate()
            .filter(move |(_, &a)| a as usize == d)
            .map(|(u, _)| u)
    }

    pub fn district_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_districts];
        for &d in &self.assignment {
            sizes[d as usize] += 1;
        }
        sizes
    }

    /// Moves unit `u` to district `d`, returning its previous district.
    /// Callers are responsible for keeping every district occupied.
    pub fn reassign(&mut self, u: usize, d: usize) -> usize {
        debug_assert!(d < self.n_districts);
        std::mem::replace(&mut self.assignment[u], d as u32) as usize
    }

    pub fn populations(&self, geo: &Geography) -> Vec<u64> {
        let mut pops = vec![0u64; self.n_districts];
        for (u, &d) in self.assignment.iter().enumerate() {
            pops[d as usize] += geo.population(u);
        }
        pops
    }

    pub fn to_document(&self, geo: &Geography) -> PlanDocument {
        PlanDocument {
            n_districts: self.n_districts,
            assignment: self
                .assignment
                .iter()
                .enumerate()
                .map(|(u, &d)| (geo.units()[u].id.clone(), d))
                .collect(),
        }
    }

    pub fn from_document(doc: &PlanDocument, geo: &Geography) -> Result<Self> {
        let mut assignment = vec![u32::MAX; geo.len()];
        for (id, &d) in &doc.assignment {
            let u = geo
                .index_of(id)
                .ok_or_else(|| Error::UnknownUnit(id.clone()))?;
            assignment[u] = d;
        }
        if let Some(u) = assignment.iter().position(|&d| d == u32::MAX) {
            return Err(Error::InvalidPlan(format!(
                "unit {} is not assigned",
                geo.units()[u].id
            )));
        }
        Plan::new(assignment, doc.n_districts)
    }

    pub fn write(&self, path: impl AsRef<Path>, geo: &Geography) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(&self.to_document(geo))
            .map_err(|e| Error::parse(path, e))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>, geo: &Geography) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let doc: PlanDocument = serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
        Plan::from_document(&doc, geo)
    }
}

/// Plan exchange format: `{"n_districts": N, "assignment": {unit_id: district}}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanDocument {
    pub n_districts: usize,
    pub assignment: BTreeMap<String, u32>,
}

/// Number of connected pieces of district `d` under `adjacency`.
pub fn component_count(plan: &Plan, d: usize, adjacency: &AdjacencyGraph) -> usize {
    let mut seen = vec![false; plan.len()];
    let mut queue = VecDeque::new();
    let mut parts = 0;
    for start in plan.members(d) {
        if seen[start] {
            continue;
        }
        parts += 1;
        seen[start] = true;
        queue.push_back(start);
        while let Some(u) = queue.pop_front() {
            for &v in adjacency.neighbors(u) {
                if !seen[v] && plan.district_of(v) == d {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
    }
    parts
}

/// True iff the units of district `d` induce a connected subgraph.
pub fn is_contiguous(plan: &Plan, d: usize, adjacency: &AdjacencyGraph) -> bool {
    component_count(plan, d, adjacency) == 1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanStats {
    pub populations: Vec<u64>,
    /// Signed fraction `(P_i - P_avg) / P_avg`.
    pub deviations: Vec<f64>,
    pub pp_scores: Vec<f64>,
    pub min_pp: f64,
    pub cut_edges: Option<usize>,
}

impl PlanStats {
    pub fn max_abs_deviation(&self) -> f64 {
        self.deviations.iter().fold(0.0, |m, d| m.max(d.abs()))
    }
}

pub fn compute_stats(plan: &Plan, geo: &Geography, cut: Option<&CutEdgeCounter>) -> Result<PlanStats> {
    let n = plan.n_districts();
    let populations = plan.populations(geo);
    let avg = geo.total_population() as f64 / n as f64;
    let deviations = populations
        .iter()
        .map(|&p| if avg > 0.0 { (p as f64 - avg) / avg } else { 0.0 })
        .collect();
    let mut pp_scores = Vec::with_capacity(n);
    for d in 0..n {
        let g = dissolve_district(plan, d, geo)?;
        pp_scores.push(polsby_popper(&g)?);
    }
    let min_pp = pp_scores.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(PlanStats {
        populations,
        deviations,
        pp_scores,
        min_pp,
        cut_edges: cut.map(|c| c.count(plan)),
    })
}

/// Thresholds that define an admissible plan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Admissibility {
    /// Largest allowed |deviation| from the mean district population.
    pub theta: f64,
    /// Allowed relative loss of compactness against the reference plan.
    pub kappa: f64,
    /// Minimum Polsby-Popper score over the reference plan's districts.
    pub pp_min_ref: f64,
}

impl Admissibility {
    pub fn pp_floor(&self) -> f64 {
        (1.0 - self.kappa) * self.pp_min_ref
    }

    pub fn population_bounds(&self, total_population: u64, n_districts: usize) -> (f64, f64) {
        let avg = total_population as f64 / n_districts as f64;
        (avg * (1.0 - self.theta), avg * (1.0 + self.theta))
    }
}

/// Balance, contiguity and relative compactness.
pub fn accept_proposal(stats: &PlanStats, contiguity: &[bool], adm: &Admissibility) -> bool {
    stats.deviations.iter().all(|d| d.abs() <= adm.theta)
        && contiguity.iter().all(|&c| c)
        && stats.min_pp >= adm.pp_floor()
}

/// Statistics, contiguity and the admissibility verdict for one plan.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub stats: PlanStats,
    pub contiguity: Vec<bool>,
    pub admissible: bool,
}

pub fn evaluate(plan: &Plan, geo: &Geography, adm: &Admissibility) -> Result<Evaluation> {
    let stats = compute_stats(plan, geo, None)?;
    let contiguity: Vec<bool> = (0..plan.n_districts())
        .map(|d| is_contiguous(plan, d, geo.adjacency()))
        .collect();
    let admissible = accept_proposal(&stats, &contiguity, adm);
    Ok(Evaluation {
        stats,
        contiguity,
        admissible,
    })
}

/// Host units of each network edge's endpoints, resolved once.
///
/// An edge is cut when its endpoints' host units sit in different districts.
#[derive(Debug, Clone)]
pub struct CutEdgeCounter {
    /// Only edges whose endpoints have different hosts; the rest can never be cut.
    host_pairs: Vec<(u32, u32)>,
    total_edges: usize,
}

impl CutEdgeCounter {
    pub fn new(network: &PostalNetwork, offices: &[PostOffice], geo: &Geography) -> Result<Self> {
        let hosts = node_hosts(network, offices, geo)?;
        let host_pairs = network
            .edges
            .iter()
            .map(|e| (hosts[e.a] as u32, hosts[e.b] as u32))
            .filter(|(a, b)| a != b)
            .collect();
        Ok(CutEdgeCounter {
            host_pairs,
            total_edges: network.edges.len(),
        })
    }

    pub fn count(&self, plan: &Plan) -> usize {
        let a = plan.assignment();
        self.host_pairs
            .iter()
            .filter(|&&(u, v)| a[u as usize] != a[v as usize])
            .count()
    }

    pub fn total_edges(&self) -> usize {
        self.total_edges
    }
}

fn node_hosts(network: &PostalNetwork, offices: &[PostOffice], geo: &Geography) -> Result<Vec<usize>> {
    let by_id: BTreeMap<&str, &PostOffice> = offices.iter().map(|o| (o.id.as_str(), o)).collect();
    network
        .nodes
        .iter()
        .map(|node| {
            let office = by_id
                .get(node.id.as_str())
                .ok_or_else(|| Error::InvalidParameter(format!("network node `{}` is not a known office", node.id)))?;
            geo.index_of(&office.host_unit).ok_or_else(|| Error::UnassignedHost {
                office: office.id.clone(),
                unit: office.host_unit.clone(),
            })
        })
        .collect()
}

/// Counts network edges whose endpoints are hosted in different districts.
pub fn count_cut_edges(
    plan: &Plan,
    network: &PostalNetwork,
    offices: &[PostOffice],
    geo: &Geography,
) -> Result<usize> {
    if plan.len() != geo.len() {
        return Err(Error::InvalidPlan(format!(
            "plan covers {} units, geography has {}",
            plan.len(),
            geo.len()
        )));
    }
    let hosts = node_hosts(network, offices, geo)?;
    Ok(network
        .edges
        .iter()
        .filter(|e| plan.district_of(hosts[e.a]) != plan.district_of(hosts[e.b]))
        .count())
}
