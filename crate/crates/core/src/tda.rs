//! Zero-dimensional persistence of the post-office point cloud and the
//! epsilon-neighborhood network built from it.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::ingest::PostOffice;
use crate::union_find::UnionFind;

/// A (birth, death) pair; `death` is `f64::INFINITY` for the surviving class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PersistencePair {
    pub birth: f64,
    #[serde(with = "infinite_as_null")]
    pub death: f64,
}

impl PersistencePair {
    pub fn persistence(&self) -> f64 {
        self.death - self.birth
    }

    pub fn is_finite(&self) -> bool {
        self.death.is_finite()
    }
}

mod infinite_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersistenceDiagram {
    pub dimension: usize,
    pub pairs: Vec<PersistencePair>,
}

impl PersistenceDiagram {
    pub fn finite_persistence(&self) -> Vec<f64> {
        self.pairs
            .iter()
            .filter(|p| p.is_finite())
            .map(PersistencePair::persistence)
            .collect()
    }
}

/// H0 persistence of the Rips filtration.
///
/// Edges are processed in order of length; every merge of two components
/// at distance `d` closes a class born at 0. The finite deaths are the
/// minimum-spanning-tree edge lengths.
pub fn h0_persistence(points: &[Point]) -> Result<PersistenceDiagram> {
    if points.is_empty() {
        return Err(Error::EmptyInput("no points"));
    }
    let n = points.len();
    let mut edges = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            edges.push((points[i].distance(points[j]), i, j));
        }
    }
    edges.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut uf = UnionFind::new(n);
    let mut pairs = Vec::with_capacity(n);
    for (d, i, j) in edges {
        if uf.union(i, j) {
            pairs.push(PersistencePair { birth: 0.0, death: d });
            if pairs.len() == n - 1 {
                break;
            }
        }
    }
    pairs.push(PersistencePair {
        birth: 0.0,
        death: f64::INFINITY,
    });
    Ok(PersistenceDiagram { dimension: 0, pairs })
}

/// Quantile of the finite persistence values, by linear interpolation at
/// rank `p/100 * (n-1)` of the sorted values. The infinite class is
/// excluded.
pub fn epsilon_from_percentile(diagram: &PersistenceDiagram, p: f64) -> Result<f64> {
    if !(0.0..=100.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("percentile {p} outside [0, 100]")));
    }
    let mut values = diagram.finite_persistence();
    if values.is_empty() {
        return Err(Error::NoFinitePairs);
    }
    values.sort_unstable_by(f64::total_cmp);
    let rank = p / 100.0 * (values.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    if lo == hi {
        return Ok(values[lo]);
    }
    Ok(values[lo] + (values[hi] - values[lo]) * frac)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkNode {
    pub id: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkEdge {
    pub a: usize,
    pub b: usize,
    /// Miles.
    pub length: f64,
}

/// Post offices joined by every pair at distance at most `epsilon`.
#[derive(Debug, Clone, PartialEq)]
pub struct PostalNetwork {
    pub epsilon: f64,
    pub nodes: Vec<NetworkNode>,
    /// Sorted by `(a, b)` with `a < b`.
    pub edges: Vec<NetworkEdge>,
}

impl PostalNetwork {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Number of connected components.
    pub fn components(&self) -> usize {
        let mut uf = UnionFind::new(self.nodes.len());
        for e in &self.edges {
            uf.union(e.a, e.b);
        }
        uf.count()
    }

    /// `{epsilon, nodes: [{id, x, y}], edges: [[id_a, id_b, length]]}` with
    /// edges sorted by id pair.
    pub fn to_json(&self) -> Value {
        let mut edges: Vec<(&str, &str, f64)> = self
            .edges
            .iter()
            .map(|e| {
                let (a, b) = (&self.nodes[e.a].id, &self.nodes[e.b].id);
                if a <= b {
                    (a.as_str(), b.as_str(), e.length)
                } else {
                    (b.as_str(), a.as_str(), e.length)
                }
            })
            .collect();
        edges.sort_by(|x, y| x.0.cmp(y.0).then(x.1.cmp(y.1)));
        json!({
            "epsilon": self.epsilon,
            "nodes": self.nodes,
            "edges": edges.iter().map(|(a, b, l)| json!([a, b, l])).collect::<Vec<_>>(),
        })
    }

    pub fn from_json(doc: &Value) -> std::result::Result<Self, String> {
        let epsilon = doc.get("epsilon").and_then(Value::as_f64).ok_or("missing epsilon")?;
        let nodes: Vec<NetworkNode> =
            serde_json::from_value(doc.get("nodes").cloned().ok_or("missing nodes")?)
                .map_err(|e| e.to_string())?;
        let index: HashMap<&str, usize> = nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.id.as_str(), i))
            .collect();
        let mut edges = Vec::new();
        for e in doc.get("edges").and_then(Value::as_array).ok_or("missing edges")? {
            let lookup = |k: usize| {
                e.get(k)
                    .and_then(Value::as_str)
                    .and_then(|id| index.get(id).copied())
                    .ok_or_else(|| format!("bad edge {e}"))
            };
            let (a, b) = (lookup(0)?, lookup(1)?);
            let length = e.get(2).and_then(Value::as_f64).ok_or_else(|| format!("bad edge {e}"))?;
            edges.push(NetworkEdge {
                a: a.min(b),
                b: a.max(b),
                length,
            });
        }
        edges.sort_by_key(|e| (e.a, e.b));
        Ok(PostalNetwork {
            epsilon,
            nodes,
            edges,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(&self.to_json()).map_err(|e| Error::parse(path, e))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let doc: Value = serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
        Self::from_json(&doc).map_err(|m| Error::parse(path, m))
    }
}

/// Builds the epsilon-neighborhood graph using grid buckets of side
/// `epsilon`, so only pairs in neighboring cells are measured.
pub fn build_network(offices: &[PostOffice], epsilon: f64) -> Result<PostalNetwork> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon must be positive, got {epsilon}")));
    }
    let points: Vec<Point> = offices.iter().map(|o| o.xy).collect();
    let nodes = offices
        .iter()
        .map(|o| NetworkNode {
            id: o.id.clone(),
            x: o.xy.x,
            y: o.xy.y,
        })
        .collect();
    Ok(PostalNetwork {
        epsilon,
        nodes,
        edges: neighborhood_edges(&points, epsilon),
    })
}

fn neighborhood_edges(points: &[Point], epsilon: f64) -> Vec<NetworkEdge> {
    let key = |p: Point| ((p.x / epsilon).floor() as i64, (p.y / epsilon).floor() as i64);
    let mut cells: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, &p) in points.iter().enumerate() {
        cells.entry(key(p)).or_default().push(i);
    }
    let mut edges = Vec::new();
    for (i, &p) in points.iter().enumerate() {
        let (cx, cy) = key(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                let Some(bucket) = cells.get(&(cx + dx, cy + dy)) else {
                    continue;
                };
                for &j in bucket {
                    if j <= i {
                        continue;
                    }
                    let d = p.distance(points[j]);
                    if d <= epsilon {
                        edges.push(NetworkEdge { a: i, b: j, length: d });
                    }
                }
            }
        }
    }
    edges.sort_by_key(|e| (e.a, e.b));
    edges
}
