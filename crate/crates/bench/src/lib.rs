//! Fixtures shared by the benchmarks.

use postcut_core::plan::{Admissibility, CutEdgeCounter, Plan};
use postcut_core::seeding::{kmeans_plan, srkmeans, RebalanceConfig};
use postcut_core::synthetic::{grid_units, scatter_offices};
use postcut_core::tda::build_network;
use postcut_core::{Geography, Point, PostOffice, PostalNetwork};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct State {
    pub geo: Geography,
    pub offices: Vec<PostOffice>,
    pub network: PostalNetwork,
}

impl State {
    /// A `side x side` grid of 10-mile cells with `per_cell` offices each.
    pub fn grid(side: usize, per_cell: usize, seed: u64) -> State {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pops: Vec<u64> = (0..side * side).map(|_| rng.random_range(800..1200)).collect();
        let set = grid_units(side, side, 10.0, &pops);
        let offices = scatter_offices(&set, per_cell, &mut rng).unwrap();
        let network = build_network(&offices, 10.0).unwrap();
        let geo = Geography::new(set.units, 1e-6).unwrap();
        State { geo, offices, network }
    }

    pub fn counter(&self) -> CutEdgeCounter {
        CutEdgeCounter::new(&self.network, &self.offices, &self.geo).unwrap()
    }

    /// A rebalanced plan that satisfies [`admissibility`].
    pub fn seed_plan(&self, districts: usize) -> Plan {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (plan, _) = kmeans_plan(&self.geo, districts, &mut rng).unwrap();
        let out = srkmeans(&plan, &self.geo, &RebalanceConfig::new(admissibility(), 3)).unwrap();
        assert!(out.converged, "fixture did not converge");
        out.plan
    }
}

pub fn admissibility() -> Admissibility {
    Admissibility {
        theta: 0.05,
        kappa: 0.05,
        pp_min_ref: 0.45,
    }
}

pub fn scatter(n: usize, side: f64, seed: u64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| Point::new(rng.random_range(0.0..side), rng.random_range(0.0..side)))
        .collect()
}

/// Draws from a three-component mixture shaped like a cut-edge sample.
pub fn mixture_draws(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let comps = [(0.4, 500.0, 32.0), (0.2, 605.0, 45.0), (0.4, 430.0, 32.0)];
    (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            let (_, mean, sd) = if u < 0.4 { comps[0] } else if u < 0.6 { comps[1] } else { comps[2] };
            // Box-Muller is enough for a benchmark input
            let (a, b): (f64, f64) = (rng.random::<f64>().max(1e-300), rng.random());
            mean + sd * (-2.0 * a.ln()).sqrt() * (std::f64::consts::TAU * b).cos()
        })
        .collect()
}
