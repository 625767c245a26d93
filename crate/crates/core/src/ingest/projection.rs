use serde::{Deserialize, Serialize};

use crate::geometry::Point;

/// Mean Earth radius in statute miles.
pub const EARTH_RADIUS_MI: f64 = 3958.7613;

/// How a dataset's raw coordinates map to the planar frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Projection {
    /// Longitude/latitude degrees, equirectangular about `ref_lat`.
    Equirectangular { ref_lat: f64 },
    /// Coordinates are already planar miles.
    Identity,
}

impl Projection {
    pub fn project(&self, lon: f64, lat: f64) -> Point {
        match *self {
            Projection::Equirectangular { ref_lat } => project_point(lon, lat, ref_lat),
            Projection::Identity => Point::new(lon, lat),
        }
    }

    pub fn is_geographic(&self) -> bool {
        matches!(self, Projection::Equirectangular { .. })
    }
}

fn project_point(lon: f64, lat: f64, ref_lat: f64) -> Point {
    let cos_ref = ref_lat.to_radians().cos();
    Point::new(
        EARTH_RADIUS_MI * lon.to_radians() * cos_ref,
        EARTH_RADIUS_MI * lat.to_radians(),
    )
}

/// Equirectangular projection of `(lon, lat)` degree pairs to planar miles.
pub fn project_lonlat(points: &[(f64, f64)], ref_lat: f64) -> Vec<Point> {
    points
        .iter()
        .map(|&(lon, lat)| project_point(lon, lat, ref_lat))
        .collect()
}

/// Great-circle distance in miles.
pub fn haversine_miles(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (lon1, lat1) = (a.0.to_radians(), a.1.to_radians());
    let (lon2, lat2) = (b.0.to_radians(), b.1.to_radians());
    let h = ((lat2 - lat1) / 2.0).sin().powi(2)
        + lat1.cos() * lat2.cos() * ((lon2 - lon1) / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_MI * h.sqrt().asin()
}
