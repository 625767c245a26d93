use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use super::GeoUnit;
use crate::error::{Error, Result};
use crate::geometry::{densify_ring, point_segment_distance, Point};

pub const DEFAULT_ADJACENCY_TOL: f64 = 1e-6;
/// Longest boundary piece, in miles, used when matching shared boundaries.
pub const DENSIFY_MAX_SEGMENT: f64 = 0.25;

/// Rook adjacency between units, indexed by position in the unit list.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AdjacencyGraph {
    neighbors: Vec<Vec<usize>>,
}

impl AdjacencyGraph {
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut neighbors = vec![Vec::new(); n];
        for (a, b) in edges {
            if a == b {
                continue;
            }
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
        }
        AdjacencyGraph { neighbors }
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.neighbors[u]
    }

    pub fn are_adjacent(&self, a: usize, b: usize) -> bool {
        self.neighbors[a].binary_search(&b).is_ok()
    }

    /// Undirected edges with `a < b`, sorted.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(a, list)| list.iter().filter(move |&&b| a < b).map(move |&b| (a, b)))
    }

    pub fn edge_count(&self) -> usize {
        self.edges().count()
    }

    pub fn isolated(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&u| self.neighbors[u].is_empty())
    }

    /// Neighbor sets keyed by unit id.
    pub fn by_id(&self, units: &[GeoUnit]) -> BTreeMap<String, Vec<String>> {
        self.neighbors
            .iter()
            .enumerate()
            .map(|(u, list)| {
                (
                    units[u].id.clone(),
                    list.iter().map(|&v| units[v].id.clone()).collect(),
                )
            })
            .collect()
    }
}

/// Length of boundary shared by each adjacent pair of units.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SharedBoundaries {
    shared: Vec<Vec<(usize, f64)>>,
}

impl SharedBoundaries {
    pub fn shared_with(&self, u: usize) -> &[(usize, f64)] {
        &self.shared[u]
    }

    pub fn length(&self, a: usize, b: usize) -> f64 {
        self.shared[a]
            .iter()
            .find(|(v, _)| *v == b)
            .map(|(_, len)| *len)
            .unwrap_or(0.0)
    }

    pub fn graph(&self) -> AdjacencyGraph {
        AdjacencyGraph::from_edges(
            self.shared.len(),
            self.shared
                .iter()
                .enumerate()
                .flat_map(|(a, list)| list.iter().map(move |&(b, _)| (a, b))),
        )
    }
}

/// Uniform grid over segment bounding boxes.
struct SegmentGrid {
    cell: f64,
    cells: HashMap<(i64, i64), Vec<usize>>,
    segments: Vec<(usize, Point, Point)>,
}

impl SegmentGrid {
    fn new(units: &[GeoUnit], cell: f64, pad: f64) -> Self {
        let mut grid = SegmentGrid {
            cell,
            cells: HashMap::new(),
            segments: Vec::new(),
        };
        for (u, unit) in units.iter().enumerate() {
            for ring in unit.rings() {
                for w in ring.windows(2) {
                    let id = grid.segments.len();
                    grid.segments.push((u, w[0], w[1]));
                    let (x0, x1) = (w[0].x.min(w[1].x) - pad, w[0].x.max(w[1].x) + pad);
                    let (y0, y1) = (w[0].y.min(w[1].y) - pad, w[0].y.max(w[1].y) + pad);
                    let (cx0, cy0) = grid.key(Point::new(x0, y0));
                    let (cx1, cy1) = grid.key(Point::new(x1, y1));
                    for cx in cx0..=cx1 {
                        for cy in cy0..=cy1 {
                            grid.cells.entry((cx, cy)).or_default().push(id);
                        }
                    }
                }
            }
        }
        grid
    }

    fn key(&self, p: Point) -> (i64, i64) {
        ((p.x / self.cell).floor() as i64, (p.y / self.cell).floor() as i64)
    }

    fn near(&self, p: Point) -> impl Iterator<Item = &(usize, Point, Point)> + '_ {
        self.cells
            .get(&self.key(p))
            .into_iter()
            .flatten()
            .map(move |&s| &self.segments[s])
    }

    fn on_boundary_of(&self, p: Point, unit: usize, tol: f64) -> bool {
        self.near(p)
            .any(|&(u, a, b)| u == unit && point_segment_distance(p, a, b) <= tol)
    }
}

/// Measures the boundary each pair of units shares.
///
/// Every ring is densified to pieces of at most [`DENSIFY_MAX_SEGMENT`]
/// miles; a piece counts as shared with another unit when both endpoints
/// and its midpoint lie within `tol` of that unit's boundary. The two
/// directional measures are averaged.
pub fn shared_boundaries(units: &[GeoUnit], tol: f64) -> SharedBoundaries {
    let grid = SegmentGrid::new(units, 1.0, tol);
    let mut directed: HashMap<(usize, usize), f64> = HashMap::new();
    for (u, unit) in units.iter().enumerate() {
        for ring in unit.rings() {
            let dense = densify_ring(ring, DENSIFY_MAX_SEGMENT);
            for w in dense.windows(2) {
                let (p, q) = (w[0], w[1]);
                let len = p.distance(q);
                if len == 0.0 {
                    continue;
                }
                let mid = p.lerp(q, 0.5);
                let mut candidates: Vec<usize> = grid
                    .near(mid)
                    .filter(|&&(v, a, b)| v != u && point_segment_distance(mid, a, b) <= tol)
                    .map(|&(v, _, _)| v)
                    .collect();
                candidates.sort_unstable();
                candidates.dedup();
                for v in candidates {
                    if grid.on_boundary_of(p, v, tol) && grid.on_boundary_of(q, v, tol) {
                        *directed.entry((u, v)).or_insert(0.0) += len;
                    }
                }
            }
        }
    }

    let mut shared = vec![Vec::new(); units.len()];
    let mut pairs: Vec<(usize, usize)> = directed
        .keys()
        .map(|&(a, b)| (a.min(b), a.max(b)))
        .collect();
    pairs.sort_unstable();
    pairs.dedup();
    for (a, b) in pairs {
        let ab = directed.get(&(a, b)).copied().unwrap_or(0.0);
        let ba = directed.get(&(b, a)).copied().unwrap_or(0.0);
        let len = (ab + ba) / 2.0;
        shared[a].push((b, len));
        shared[b].push((a, len));
    }
    for list in &mut shared {
        list.sort_by_key(|&(v, _)| v);
    }
    SharedBoundaries { shared }
}

/// Rook adjacency: units are neighbors iff they share a boundary of
/// positive length. Isolated units are logged, not rejected.
pub fn build_adjacency(units: &[GeoUnit], tol: f64) -> AdjacencyGraph {
    let graph = shared_boundaries(units, tol).graph();
    for u in graph.isolated() {
        log::warn!("unit {} has no rook neighbors", units[u].id);
    }
    graph
}

/// Reads an `id_a,id_b` edge list; header row optional.
pub fn load_adjacency_csv(path: impl AsRef<Path>, units: &[GeoUnit]) -> Result<AdjacencyGraph> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_adjacency_csv(&text, units)
}

pub fn parse_adjacency_csv(text: &str, units: &[GeoUnit]) -> Result<AdjacencyGraph> {
    let index: HashMap<&str, usize> = units
        .iter()
        .enumerate()
        .map(|(i, u)| (u.id.as_str(), i))
        .collect();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut edges = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::MalformedRow {
            row,
            message: e.to_string(),
        })?;
        if record.len() != 2 {
            return Err(Error::MalformedRow {
                row,
                message: format!("expected 2 fields, found {}", record.len()),
            });
        }
        if row == 1 && record[0].eq_ignore_ascii_case("id_a") {
            continue;
        }
        let lookup = |id: &str| {
            index
                .get(id)
                .copied()
                .ok_or_else(|| Error::UnknownUnit(id.to_string()))
        };
        let (a, b) = (lookup(&record[0])?, lookup(&record[1])?);
        if a == b {
            return Err(Error::MalformedRow {
                row,
                message: format!("self-loop on `{}`", &record[0]),
            });
        }
        edges.push((a, b));
    }
    Ok(AdjacencyGraph::from_edges(units.len(), edges))
}

pub fn write_adjacency_csv(path: impl AsRef<Path>, graph: &AdjacencyGraph, units: &[GeoUnit]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("id_a,id_b\n");
    for (a, b) in graph.edges() {
        out.push_str(&units[a].id);
        out.push(',');
        out.push_str(&units[b].id);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
