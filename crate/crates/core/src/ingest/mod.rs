//! Loading geographic units and post offices into the planar frame.

mod adjacency;
mod offices;
mod projection;

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::geometry::{multipolygon_centroid, ring_signed_area, validate_ring, Point, Polygon};

pub use adjacency::{
    build_adjacency, load_adjacency_csv, parse_adjacency_csv, shared_boundaries,
    write_adjacency_csv, AdjacencyGraph, SharedBoundaries, DEFAULT_ADJACENCY_TOL,
    DENSIFY_MAX_SEGMENT,
};
pub use offices::{
    load_post_offices, parse_post_offices, read_offices_json, write_offices_json, PostOffice,
};
pub use projection::{haversine_miles, project_lonlat, Projection, EARTH_RADIUS_MI};

/// Foreign member marking a feature collection whose coordinates are planar miles.
pub const PLANAR_FRAME: &str = "planar_miles";

/// One atomic piece of geography (a county).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoUnit {
    pub id: String,
    pub name: String,
    pub population: u64,
    /// Parts of the unit; single polygons have one entry.
    pub polygons: Vec<Polygon>,
    pub centroid: Point,
}

impl GeoUnit {
    pub fn rings(&self) -> impl Iterator<Item = &Vec<Point>> {
        self.polygons.iter().flat_map(|p| p.rings.iter())
    }

    pub fn contains(&self, p: Point) -> bool {
        self.polygons
            .iter()
            .any(|poly| crate::geometry::point_in_polygon(p, &poly.rings))
    }

    pub fn area(&self) -> f64 {
        self.polygons
            .iter()
            .map(|p| crate::geometry::polygon_area(&p.rings).unwrap_or(0.0))
            .sum()
    }

    pub fn perimeter(&self) -> f64 {
        self.polygons
            .iter()
            .map(|p| crate::geometry::polygon_perimeter(&p.rings).unwrap_or(0.0))
            .sum()
    }
}

/// How to interpret input coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Frame {
    /// Planar if the document carries `"frame": "planar_miles"`, else degrees.
    #[default]
    Auto,
    LonLat,
    Planar,
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub id_key: String,
    pub pop_key: String,
    pub name_key: Option<String>,
    pub frame: Frame,
}

impl LoadOptions {
    pub fn new(id_key: impl Into<String>, pop_key: impl Into<String>) -> Self {
        LoadOptions {
            id_key: id_key.into(),
            pop_key: pop_key.into(),
            name_key: None,
            frame: Frame::Auto,
        }
    }

    pub fn frame(mut self, frame: Frame) -> Self {
        self.frame = frame;
        self
    }
}

/// Units of one dataset and the projection used to bring them into miles.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitSet {
    pub units: Vec<GeoUnit>,
    pub projection: Projection,
}

impl UnitSet {
    pub fn total_population(&self) -> u64 {
        self.units.iter().map(|u| u.population).sum()
    }
}

pub fn load_units(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<UnitSet> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc: Value = serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
    parse_units(&doc, opts).map_err(|e| match e {
        Error::Parse { message, .. } => Error::parse(path, message),
        other => other,
    })
}

/// Raw feature before projection: rings still in source coordinates.
struct RawUnit {
    id: String,
    name: String,
    population: u64,
    polygons: Vec<Vec<Vec<(f64, f64)>>>,
}

pub fn parse_units(doc: &Value, opts: &LoadOptions) -> Result<UnitSet> {
    let features = doc
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::parse("<units>", "expected a feature collection"))?;
    let declared_planar = doc.get("frame").and_then(Value::as_str) == Some(PLANAR_FRAME);
    let planar = match opts.frame {
        Frame::Auto => declared_planar,
        Frame::LonLat => false,
        Frame::Planar => true,
    };

    let mut raw = Vec::with_capacity(features.len());
    let mut seen = HashSet::new();
    for (index, feature) in features.iter().enumerate() {
        let unit = parse_feature(index, feature, opts, planar)?;
        if !seen.insert(unit.id.clone()) {
            return Err(Error::DuplicateId(unit.id));
        }
        raw.push(unit);
    }
    if raw.is_empty() {
        return Err(Error::EmptyInput("feature collection has no features"));
    }

    let projection = if planar {
        Projection::Identity
    } else {
        let ref_lat = match doc.get("ref_lat").and_then(Value::as_f64) {
            Some(lat) => lat,
            None => mean_latitude(&raw),
        };
        Projection::Equirectangular { ref_lat }
    };

    let mut units = Vec::with_capacity(raw.len());
    for (index, r) in raw.into_iter().enumerate() {
        let polygons: Vec<Polygon> = r
            .polygons
            .iter()
            .map(|rings| {
                Polygon::new(
                    rings
                        .iter()
                        .map(|ring| ring.iter().map(|&(x, y)| projection.project(x, y)).collect())
                        .collect(),
                )
            })
            .collect();
        for poly in &polygons {
            if ring_signed_area(poly.exterior()) == 0.0 {
                return Err(Error::InvalidFeature {
                    index,
                    message: "exterior ring has zero area".into(),
                });
            }
        }
        let (centroid, _) =
            multipolygon_centroid(&polygons).map_err(|e| Error::InvalidFeature {
                index,
                message: e.to_string(),
            })?;
        units.push(GeoUnit {
            id: r.id,
            name: r.name,
            population: r.population,
            polygons,
            centroid,
        });
    }
    Ok(UnitSet { units, projection })
}

fn mean_latitude(raw: &[RawUnit]) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for unit in raw {
        for poly in &unit.polygons {
            if let Some(ext) = poly.first() {
                for &(_, lat) in &ext[..ext.len() - 1] {
                    sum += lat;
                    n += 1;
                }
            }
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn property_string(value: &Value) -> Option<String> {
    match value {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn property_population(value: &Value) -> Option<u64> {
    match value {
        Value::Number(n) => n.as_u64().or_else(|| {
            n.as_f64()
                .filter(|f| *f >= 0.0 && f.fract() == 0.0 && *f < 9.0e15)
                .map(|f| f as u64)
        }),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

fn parse_feature(index: usize, feature: &Value, opts: &LoadOptions, planar: bool) -> Result<RawUnit> {
    let invalid = |message: String| Error::InvalidFeature { index, message };
    let props = feature
        .get("properties")
        .and_then(Value::as_object)
        .ok_or_else(|| invalid("feature has no properties".into()))?;
    let id = props
        .get(&opts.id_key)
        .ok_or_else(|| Error::MissingProperty {
            index,
            key: opts.id_key.clone(),
        })
        .and_then(|v| property_string(v).ok_or_else(|| invalid(format!("`{}` is not a string or number", opts.id_key))))?;
    let population = props
        .get(&opts.pop_key)
        .ok_or_else(|| Error::MissingProperty {
            index,
            key: opts.pop_key.clone(),
        })
        .and_then(|v| {
            property_population(v)
                .ok_or_else(|| invalid(format!("`{}` is not a non-negative integer", opts.pop_key)))
        })?;
    let name = opts
        .name_key
        .as_deref()
        .into_iter()
        .chain(["name", "NAME"])
        .find_map(|k| props.get(k).and_then(property_string))
        .unwrap_or_else(|| id.clone());

    let geometry = feature
        .get("geometry")
        .ok_or_else(|| invalid("feature has no geometry".into()))?;
    let kind = geometry.get("type").and_then(Value::as_str).unwrap_or("");
    let coords = geometry
        .get("coordinates")
        .ok_or_else(|| invalid("geometry has no coordinates".into()))?;
    let polygons = match kind {
        "Polygon" => vec![parse_polygon(coords).map_err(invalid)?],
        "MultiPolygon" => coords
            .as_array()
            .ok_or_else(|| invalid("malformed MultiPolygon".into()))?
            .iter()
            .map(parse_polygon)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(invalid)?,
        other => return Err(invalid(format!("unsupported geometry type `{other}`"))),
    };
    if polygons.is_empty() {
        return Err(invalid("geometry has no polygons".into()));
    }
    if !planar {
        for &(lon, lat) in polygons.iter().flatten().flatten() {
            if !(-180.0..=180.0).contains(&lon) || !(-90.0..=90.0).contains(&lat) {
                return Err(invalid(format!("coordinate ({lon}, {lat}) is not in degrees")));
            }
        }
    }
    Ok(RawUnit {
        id,
        name,
        population,
        polygons,
    })
}

fn parse_polygon(value: &Value) -> std::result::Result<Vec<Vec<(f64, f64)>>, String> {
    let rings = value.as_array().ok_or("malformed polygon")?;
    if rings.is_empty() {
        return Err("polygon has no rings".into());
    }
    rings.iter().map(parse_ring).collect()
}

fn parse_ring(value: &Value) -> std::result::Result<Vec<(f64, f64)>, String> {
    let pts = value.as_array().ok_or("malformed ring")?;
    let mut ring = Vec::with_capacity(pts.len() + 1);
    for p in pts {
        let xy = p.as_array().ok_or("malformed position")?;
        let x = xy.first().and_then(Value::as_f64).ok_or("malformed position")?;
        let y = xy.get(1).and_then(Value::as_f64).ok_or("malformed position")?;
        ring.push((x, y));
    }
    // close open rings
    if let (Some(first), Some(last)) = (ring.first().copied(), ring.last().copied()) {
        if first != last {
            ring.push(first);
        }
    }
    let pts: Vec<Point> = ring.iter().map(|&(x, y)| Point::new(x, y)).collect();
    validate_ring(&pts).map_err(|e| e.to_string())?;
    Ok(ring)
}

/// Feature collection of units in the planar frame; reloads bit-exactly.
pub fn units_to_geojson(set: &UnitSet) -> Value {
    let features: Vec<Value> = set
        .units
        .iter()
        .map(|u| {
            let coords: Vec<Value> = u
                .polygons
                .iter()
                .map(|poly| {
                    Value::Array(
                        poly.rings
                            .iter()
                            .map(|ring| {
                                Value::Array(ring.iter().map(|p| json!([p.x, p.y])).collect())
                            })
                            .collect(),
                    )
                })
                .collect();
            let geometry = if coords.len() == 1 {
                json!({"type": "Polygon", "coordinates": coords[0]})
            } else {
                json!({"type": "MultiPolygon", "coordinates": coords})
            };
            json!({
                "type": "Feature",
                "properties": {"id": u.id, "name": u.name, "population": u.population},
                "geometry": geometry,
            })
        })
        .collect();
    let mut doc = Map::new();
    doc.insert("type".into(), json!("FeatureCollection"));
    doc.insert("frame".into(), json!(PLANAR_FRAME));
    if let Projection::Equirectangular { ref_lat } = set.projection {
        doc.insert("source_ref_lat".into(), json!(ref_lat));
    }
    doc.insert("features".into(), Value::Array(features));
    Value::Object(doc)
}

pub fn write_units(path: impl AsRef<Path>, set: &UnitSet) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string(&units_to_geojson(set)).map_err(|e| Error::parse(path, e))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reloads units written by [`write_units`], restoring the original projection.
pub fn read_units(path: impl AsRef<Path>) -> Result<UnitSet> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc: Value = serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
    let mut set = parse_units(&doc, &LoadOptions::new("id", "population").frame(Frame::Planar))?;
    if let Some(ref_lat) = doc.get("source_ref_lat").and_then(Value::as_f64) {
        set.projection = Projection::Equirectangular { ref_lat };
    }
    Ok(set)
}
