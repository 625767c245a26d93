//! Redistricting analysis around a postal-network measure of community
//! disruption.
//!
//! The pipeline reads county polygons and post offices, builds an
//! epsilon-neighborhood network whose radius comes from H0 persistence,
//! seeds an admissible plan with weighted k-means plus stochastic
//! rebalancing, samples admissible plans with a Markov chain, and fits the
//! distribution of cut edges.

pub mod error;
pub mod geography;
pub mod geometry;
pub mod ingest;
pub mod mcmc;
pub mod plan;
pub mod rng;
pub mod seeding;
pub mod stats;
pub mod synthetic;
pub mod tda;
pub mod union_find;

pub use error::{Error, Result};
pub use geography::Geography;
pub use geometry::{dissolve_district, polsby_popper, DistrictGeometry, Point, Polygon};
pub use ingest::{AdjacencyGraph, GeoUnit, LoadOptions, PostOffice, Projection, UnitSet};
pub use mcmc::{run_chain, Chain, ChainCheckpoint, ChainConfig, ChainHistory, Sample};
pub use plan::{
    accept_proposal, count_cut_edges, evaluate, seats, Admissibility, CutEdgeCounter, Evaluation, Plan,
    PlanDocument, PlanStats,
};
pub use seeding::{accept_interim, kmeans_plan, srkmeans, weighted_kmeans, RebalanceConfig, RebalanceOutcome};
pub use stats::{fit_gmm, fit_normal, gmm_cdf, select_k_bic, trace_and_running_average, GmmModel, NormalFit};
pub use tda::{build_network, epsilon_from_percentile, h0_persistence, PersistenceDiagram, PostalNetwork};
