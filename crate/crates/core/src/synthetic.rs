//! Small synthetic states: square-grid counties and scattered offices.
//! Used by tests, benches and the CLI demo.

use rand::Rng;

use crate::error::Result;
use crate::geography::Geography;
use crate::geometry::{Point, Polygon};
use crate::ingest::{
    parse_post_offices, GeoUnit, PostOffice, Projection, UnitSet, DEFAULT_ADJACENCY_TOL,
};

/// `cols x rows` square units of side `cell` miles, numbered row-major from
/// the lower-left corner. Ids are zero-padded so they sort in index order.
pub fn grid_units(cols: usize, rows: usize, cell: f64, populations: &[u64]) -> UnitSet {
    assert_eq!(populations.len(), cols * rows, "one population per cell");
    let units = (0..cols * rows)
        .map(|k| {
            let (c, r) = ((k % cols) as f64, (k / cols) as f64);
            let (x0, y0) = (c * cell, r * cell);
            let ring = vec![
                Point::new(x0, y0),
                Point::new(x0 + cell, y0),
                Point::new(x0 + cell, y0 + cell),
                Point::new(x0, y0 + cell),
                Point::new(x0, y0),
            ];
            GeoUnit {
                id: format!("u{k:04}"),
                name: format!("cell {k}"),
                population: populations[k],
                polygons: vec![Polygon::new(vec![ring])],
                centroid: Point::new(x0 + cell / 2.0, y0 + cell / 2.0),
            }
        })
        .collect();
    UnitSet {
        units,
        projection: Projection::Identity,
    }
}

pub fn grid_geography(cols: usize, rows: usize, cell: f64, populations: &[u64]) -> Result<Geography> {
    Geography::new(grid_units(cols, rows, cell, populations).units, DEFAULT_ADJACENCY_TOL)
}

/// Offices at the given planar points, hosted by the containing unit.
pub fn offices_at(points: &[Point], set: &UnitSet) -> Result<Vec<PostOffice>> {
    let mut csv = String::from("id,lon,lat\n");
    for (i, p) in points.iter().enumerate() {
        csv.push_str(&format!("o{i:05},{},{}\n", p.x, p.y));
    }
    parse_post_offices(&csv, set)
}

/// `per_unit` offices scattered uniformly inside each grid cell.
pub fn scatter_offices<R: Rng>(
    set: &UnitSet,
    per_unit: usize,
    rng: &mut R,
) -> Result<Vec<PostOffice>> {
    let mut points = Vec::new();
    for u in &set.units {
        let ext = u.polygons[0].exterior();
        let (x0, y0) = (ext[0].x, ext[0].y);
        let side = ext[0].distance(ext[1]);
        for _ in 0..per_unit {
            // keep clear of the cell boundary so hosting is unambiguous
            let fx = rng.random_range(0.05..0.95);
            let fy = rng.random_range(0.05..0.95);
            points.push(Point::new(x0 + fx * side, y0 + fy * side));
        }
    }
    offices_at(&points, set)
}
