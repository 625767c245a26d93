use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::ingest::{shared_boundaries, AdjacencyGraph, GeoUnit, SharedBoundaries};

/// Units plus everything derived from their shapes that plan scoring needs:
/// per-unit area and perimeter, shared boundary lengths, and the contiguity
/// graph.
#[derive(Debug, Clone)]
pub struct Geography {
    units: Vec<GeoUnit>,
    index: HashMap<String, usize>,
    areas: Vec<f64>,
    perimeters: Vec<f64>,
    boundaries: SharedBoundaries,
    adjacency: AdjacencyGraph,
    external_adjacency: bool,
    total_population: u64,
}

impl Geography {
    pub fn new(units: Vec<GeoUnit>, tol: f64) -> Result<Self> {
        if units.is_empty() {
            return Err(Error::EmptyInput("no units"));
        }
        let mut index = HashMap::with_capacity(units.len());
        for (i, u) in units.iter().enumerate() {
            if index.insert(u.id.clone(), i).is_some() {
                return Err(Error::DuplicateId(u.id.clone()));
            }
        }
        let boundaries = shared_boundaries(&units, tol);
        let adjacency = boundaries.graph();
        for u in adjacency.isolated() {
            log::warn!("unit {} has no rook neighbors", units[u].id);
        }
        Ok(Geography {
            areas: units.iter().map(GeoUnit::area).collect(),
            perimeters: units.iter().map(GeoUnit::perimeter).collect(),
            total_population: units.iter().map(|u| u.population).sum(),
            units,
            index,
            boundaries,
            adjacency,
            external_adjacency: false,
        })
    }

    /// Replaces the contiguity graph; boundary lengths still come from the shapes.
    pub fn with_adjacency(mut self, adjacency: AdjacencyGraph) -> Result<Self> {
        if adjacency.len() != self.units.len() {
            return Err(Error::InvalidParameter(format!(
                "adjacency has {} nodes for {} units",
                adjacency.len(),
                self.units.len()
            )));
        }
        self.adjacency = adjacency;
        self.external_adjacency = true;
        Ok(self)
    }

    pub fn units(&self) -> &[GeoUnit] {
        &self.units
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn area(&self, u: usize) -> f64 {
        self.areas[u]
    }

    pub fn perimeter(&self, u: usize) -> f64 {
        self.perimeters[u]
    }

    pub fn population(&self, u: usize) -> u64 {
        self.units[u].population
    }

    pub fn total_population(&self) -> u64 {
        self.total_population
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    pub fn boundaries(&self) -> &SharedBoundaries {
        &self.boundaries
    }

    pub fn adjacency(&self) -> &AdjacencyGraph {
        &self.adjacency
    }

    pub fn has_external_adjacency(&self) -> bool {
        self.external_adjacency
    }
}
