use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GeoUnit, UnitSet};
use crate::error::{Error, Result};
use crate::geometry::{BBox, Point};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostOffice {
    pub id: String,
    pub lon: f64,
    pub lat: f64,
    /// Planar miles.
    pub xy: Point,
    /// Id of the unit hosting the office.
    pub host_unit: String,
}

#[derive(Debug, Deserialize)]
struct OfficeRow {
    id: String,
    lon: f64,
    lat: f64,
}

/// Reads `id,lon,lat` rows and assigns each office a host unit.
///
/// Offices outside every polygon go to the unit with the nearest centroid.
/// Offices on a shared boundary go to the lexicographically smallest id.
pub fn load_post_offices(path: impl AsRef<Path>, set: &UnitSet) -> Result<Vec<PostOffice>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_post_offices(&text, set)
}

pub fn parse_post_offices(text: &str, set: &UnitSet) -> Result<Vec<PostOffice>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let geographic = set.projection.is_geographic();
    let locator = HostLocator::new(&set.units);
    let mut offices = Vec::new();
    for (i, row) in reader.deserialize::<OfficeRow>().enumerate() {
        // data rows are numbered from 1, after the header
        let row_no = i + 1;
        let row = row.map_err(|e| Error::MalformedRow {
            row: row_no,
            message: e.to_string(),
        })?;
        if geographic
            && (!(-180.0..=180.0).contains(&row.lon) || !(-90.0..=90.0).contains(&row.lat))
        {
            return Err(Error::MalformedRow {
                row: row_no,
                message: format!("({}, {}) is not a valid lon/lat", row.lon, row.lat),
            });
        }
        let xy = set.projection.project(row.lon, row.lat);
        let host = locator.host(xy);
        offices.push(PostOffice {
            id: row.id,
            lon: row.lon,
            lat: row.lat,
            xy,
            host_unit: set.units[host].id.clone(),
        });
    }
    if offices.is_empty() {
        return Err(Error::EmptyInput("post office file has no rows"));
    }
    Ok(offices)
}

struct HostLocator<'a> {
    units: &'a [GeoUnit],
    boxes: Vec<BBox>,
}

impl<'a> HostLocator<'a> {
    fn new(units: &'a [GeoUnit]) -> Self {
        let boxes = units.iter().map(|u| BBox::of_points(u.rings().flatten())).collect();
        HostLocator { units, boxes }
    }

    fn host(&self, p: Point) -> usize {
        let containing = self
            .units
            .iter()
            .enumerate()
            .filter(|(i, u)| self.boxes[*i].contains(p, 1e-9) && u.contains(p))
            .min_by(|a, b| a.1.id.cmp(&b.1.id));
        if let Some((i, _)) = containing {
            return i;
        }
        nearest_centroid(self.units, p)
    }
}

pub(crate) fn nearest_centroid(units: &[GeoUnit], p: Point) -> usize {
    let mut best = 0;
    for (i, u) in units.iter().enumerate().skip(1) {
        let d = u.centroid.distance_sq(p);
        let db = units[best].centroid.distance_sq(p);
        if d < db || (d == db && u.id < units[best].id) {
            best = i;
        }
    }
    best
}

pub fn write_offices_json(path: impl AsRef<Path>, offices: &[PostOffice]) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(offices).map_err(|e| Error::parse(path, e))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_offices_json(path: impl AsRef<Path>) -> Result<Vec<PostOffice>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
}
