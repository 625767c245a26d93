//! Planar geometry kernel.
//!
//! Coordinates are planar miles, so areas come out in square miles. Rings are
//! closed (first point repeated at the end); the first ring of a polygon is
//! its exterior and any following rings are holes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geography::Geography;
use crate::plan::Plan;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn distance_sq(self, other: Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn lerp(self, other: Point, t: f64) -> Point {
        Point::new(
            self.x + (other.x - self.x) * t,
            self.y + (other.y - self.y) * t,
        )
    }
}

pub type Ring = Vec<Point>;

/// One polygon: exterior ring followed by zero or more holes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub rings: Vec<Ring>,
}

impl Polygon {
    pub fn new(rings: Vec<Ring>) -> Self {
        Polygon { rings }
    }

    pub fn exterior(&self) -> &[Point] {
        self.rings.first().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub min: Point,
    pub max: Point,
}

impl BBox {
    pub fn empty() -> Self {
        BBox {
            min: Point::new(f64::INFINITY, f64::INFINITY),
            max: Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
        }
    }

    pub fn extend(&mut self, p: Point) {
        self.min.x = self.min.x.min(p.x);
        self.min.y = self.min.y.min(p.y);
        self.max.x = self.max.x.max(p.x);
        self.max.y = self.max.y.max(p.y);
    }

    pub fn of_points<'a>(points: impl IntoIterator<Item = &'a Point>) -> Self {
        let mut b = BBox::empty();
        for p in points {
            b.extend(*p);
        }
        b
    }

    pub fn contains(&self, p: Point, tol: f64) -> bool {
        p.x >= self.min.x - tol
            && p.x <= self.max.x + tol
            && p.y >= self.min.y - tol
            && p.y <= self.max.y + tol
    }
}

pub fn validate_ring(ring: &[Point]) -> Result<()> {
    if ring.len() < 4 {
        return Err(Error::ShortRing(ring.len()));
    }
    if ring.first() != ring.last() {
        return Err(Error::OpenRing);
    }
    Ok(())
}

/// Shoelace signed area; positive for counter-clockwise rings.
pub fn ring_signed_area(ring: &[Point]) -> f64 {
    let mut twice = 0.0;
    for w in ring.windows(2) {
        twice += w[0].x * w[1].y - w[1].x * w[0].y;
    }
    twice / 2.0
}

pub fn ring_length(ring: &[Point]) -> f64 {
    ring.windows(2).map(|w| w[0].distance(w[1])).sum()
}

/// Exterior area minus hole areas, never negative.
pub fn polygon_area(rings: &[Ring]) -> Result<f64> {
    let mut area = 0.0;
    for (i, ring) in rings.iter().enumerate() {
        validate_ring(ring)?;
        let a = ring_signed_area(ring).abs();
        if i == 0 {
            area += a;
        } else {
            area -= a;
        }
    }
    Ok(area.max(0.0))
}

/// Total boundary length. Holes contribute to the perimeter.
pub fn polygon_perimeter(rings: &[Ring]) -> Result<f64> {
    let mut length = 0.0;
    for ring in rings {
        validate_ring(ring)?;
        length += ring_length(ring);
    }
    Ok(length)
}

/// Area-weighted centroid of a polygon with holes, returned with its area.
pub fn polygon_centroid(rings: &[Ring]) -> Result<(Point, f64)> {
    let mut cx = 0.0;
    let mut cy = 0.0;
    let mut total = 0.0;
    for (i, ring) in rings.iter().enumerate() {
        validate_ring(ring)?;
        let signed = ring_signed_area(ring);
        if signed == 0.0 {
            continue;
        }
        let mut mx = 0.0;
        let mut my = 0.0;
        for w in ring.windows(2) {
            let cross = w[0].x * w[1].y - w[1].x * w[0].y;
            mx += (w[0].x + w[1].x) * cross;
            my += (w[0].y + w[1].y) * cross;
        }
        // ring centroid is (mx, my) / (6 * signed); holes weigh negatively
        let weight = if i == 0 { signed.abs() } else { -signed.abs() };
        cx += weight * mx / (6.0 * signed);
        cy += weight * my / (6.0 * signed);
        total += weight;
    }
    if total <= 0.0 {
        return Ok((ring_mean(rings.first().map(Vec::as_slice).unwrap_or(&[])), 0.0));
    }
    Ok((Point::new(cx / total, cy / total), total))
}

/// Centroid of a multi-part shape (area-weighted over parts).
pub fn multipolygon_centroid(polygons: &[Polygon]) -> Result<(Point, f64)> {
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut total = 0.0;
    for poly in polygons {
        let (c, a) = polygon_centroid(&poly.rings)?;
        sx += c.x * a;
        sy += c.y * a;
        total += a;
    }
    if total <= 0.0 {
        let first = polygons.first().map(|p| p.exterior()).unwrap_or(&[]);
        return Ok((ring_mean(first), 0.0));
    }
    Ok((Point::new(sx / total, sy / total), total))
}

fn ring_mean(ring: &[Point]) -> Point {
    let pts = if ring.len() > 1 { &ring[..ring.len() - 1] } else { ring };
    if pts.is_empty() {
        return Point::default();
    }
    let n = pts.len() as f64;
    Point::new(
        pts.iter().map(|p| p.x).sum::<f64>() / n,
        pts.iter().map(|p| p.y).sum::<f64>() / n,
    )
}

/// Distance from `p` to the closed segment `a`-`b`.
pub fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let dx = b.x - a.x;
    let dy = b.y - a.y;
    let len_sq = dx * dx + dy * dy;
    if len_sq == 0.0 {
        return p.distance(a);
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len_sq).clamp(0.0, 1.0);
    p.distance(Point::new(a.x + t * dx, a.y + t * dy))
}

const ON_BOUNDARY_EPS: f64 = 1e-12;

/// Even-odd point-in-polygon; points on the boundary count as inside.
pub fn point_in_polygon(p: Point, rings: &[Ring]) -> bool {
    let mut inside = false;
    for ring in rings {
        for w in ring.windows(2) {
            let (a, b) = (w[0], w[1]);
            if point_segment_distance(p, a, b) <= ON_BOUNDARY_EPS {
                return true;
            }
            if (a.y > p.y) != (b.y > p.y) {
                let x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if p.x < x_cross {
                    inside = !inside;
                }
            }
        }
    }
    inside
}

/// Splits every segment of `ring` into pieces no longer than `max_len`.
/// The output ring stays closed.
pub fn densify_ring(ring: &[Point], max_len: f64) -> Ring {
    let mut out = Vec::with_capacity(ring.len());
    if let Some(first) = ring.first() {
        out.push(*first);
    }
    for w in ring.windows(2) {
        let len = w[0].distance(w[1]);
        let pieces = if max_len > 0.0 {
            ((len / max_len).ceil() as usize).max(1)
        } else {
            1
        };
        for k in 1..pieces {
            out.push(w[0].lerp(w[1], k as f64 / pieces as f64));
        }
        out.push(w[1]);
    }
    out
}

/// Measures of one district's dissolved shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistrictGeometry {
    pub district: usize,
    /// Square miles.
    pub area: f64,
    /// Miles, hole boundaries included.
    pub perimeter: f64,
    pub part_count: usize,
}

/// Polsby-Popper compactness, 4*pi*area / perimeter^2.
pub fn polsby_popper(g: &DistrictGeometry) -> Result<f64> {
    if !(g.perimeter > 0.0) {
        return Err(Error::ZeroPerimeter);
    }
    Ok(4.0 * std::f64::consts::PI * g.area / (g.perimeter * g.perimeter))
}

/// Dissolves the units of district `d` into one shape.
///
/// Perimeter is the sum of member perimeters minus twice the boundary they
/// share with each other; part count is the number of components of the
/// member-unit adjacency subgraph.
pub fn dissolve_district(plan: &Plan, d: usize, geo: &Geography) -> Result<DistrictGeometry> {
    let members: Vec<usize> = plan.members(d).collect();
    if members.is_empty() {
        return Err(Error::EmptyDistrict(d));
    }
    let mut area = 0.0;
    let mut perimeter = 0.0;
    let mut shared = 0.0;
    for &u in &members {
        area += geo.area(u);
        perimeter += geo.perimeter(u);
        for &(v, len) in geo.boundaries().shared_with(u) {
            // each internal pair is visited from both sides
            if plan.district_of(v) == d {
                shared += len;
            }
        }
    }
    Ok(DistrictGeometry {
        district: d,
        area,
        perimeter: (perimeter - shared).max(0.0),
        part_count: crate::plan::component_count(plan, d, geo.adjacency()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Ring {
        vec![
            Point::new(x0, y0),
            Point::new(x1, y0),
            Point::new(x1, y1),
            Point::new(x0, y1),
            Point::new(x0, y0),
        ]
    }

    fn square_with_hole() -> Vec<Ring> {
        let mut hole = rect(0.25, 0.25, 0.75, 0.75);
        hole.reverse();
        vec![rect(0.0, 0.0, 1.0, 1.0), hole]
    }

    #[test]
    fn area_cases() {
        assert!((polygon_area(&[rect(0.0, 0.0, 1.0, 1.0)]).unwrap() - 1.0).abs() < 1e-15);
        assert!((polygon_area(&square_with_hole()).unwrap() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn open_ring_is_rejected() {
        let mut r = rect(0.0, 0.0, 1.0, 1.0);
        r.pop();
        r.push(Point::new(0.0, 0.5));
        assert!(matches!(polygon_area(&[r.clone()]), Err(Error::OpenRing)));
        assert!(matches!(polygon_perimeter(&[r]), Err(Error::OpenRing)));
    }

    #[test]
    fn perimeter_cases() {
        assert!((polygon_perimeter(&[rect(0.0, 0.0, 1.0, 1.0)]).unwrap() - 4.0).abs() < 1e-15);
        assert!((polygon_perimeter(&square_with_hole()).unwrap() - 6.0).abs() < 1e-15);
        assert!((polygon_perimeter(&[rect(0.0, 0.0, 1.0, 2.0)]).unwrap() - 6.0).abs() < 1e-15);
    }

    fn geometry(area: f64, perimeter: f64) -> DistrictGeometry {
        DistrictGeometry {
            district: 0,
            area,
            perimeter,
            part_count: 1,
        }
    }

    fn disc(r: f64, n: usize) -> Ring {
        let mut ring: Ring = (0..n)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / n as f64;
                Point::new(r * t.cos(), r * t.sin())
            })
            .collect();
        ring.push(ring[0]);
        ring
    }

    #[test]
    fn polsby_popper_cases() {
        let d = vec![disc(3.0, 10_000)];
        let g = geometry(polygon_area(&d).unwrap(), polygon_perimeter(&d).unwrap());
        assert!((polsby_popper(&g).unwrap() - 1.0).abs() < 1e-3);
        assert!((polsby_popper(&geometry(1.0, 4.0)).unwrap() - PI / 4.0).abs() < 1e-12);
        assert!((polsby_popper(&geometry(2.0, 6.0)).unwrap() - 8.0 * PI / 36.0).abs() < 1e-12);
        assert!(matches!(
            polsby_popper(&geometry(1.0, 0.0)),
            Err(Error::ZeroPerimeter)
        ));
    }

    #[test]
    fn point_in_polygon_cases() {
        let sq = vec![rect(0.0, 0.0, 1.0, 1.0)];
        assert!(point_in_polygon(Point::new(0.5, 0.5), &sq));
        assert!(!point_in_polygon(Point::new(1.5, 0.5), &sq));
        assert!(point_in_polygon(Point::new(1.0, 0.5), &sq));
        assert!(point_in_polygon(Point::new(0.0, 0.0), &sq));
        let holed = square_with_hole();
        assert!(!point_in_polygon(Point::new(0.5, 0.5), &holed));
        assert!(point_in_polygon(Point::new(0.1, 0.5), &holed));
        assert!(point_in_polygon(Point::new(0.25, 0.5), &holed));
    }

    #[test]
    fn centroid_of_square_and_holed_shapes() {
        let (c, a) = polygon_centroid(&[rect(0.0, 0.0, 1.0, 1.0)]).unwrap();
        assert!((c.x - 0.5).abs() < 1e-15 && (c.y - 0.5).abs() < 1e-15);
        assert!((a - 1.0).abs() < 1e-15);
        let (c, a) = polygon_centroid(&square_with_hole()).unwrap();
        assert!((c.x - 0.5).abs() < 1e-12 && (c.y - 0.5).abs() < 1e-12);
        assert!((a - 0.75).abs() < 1e-12);
        // clockwise exterior gives the same answer
        let mut cw = rect(0.0, 0.0, 2.0, 1.0);
        cw.reverse();
        let (c, _) = polygon_centroid(&[cw]).unwrap();
        assert!((c.x - 1.0).abs() < 1e-12 && (c.y - 0.5).abs() < 1e-12);
        // off-centre hole shifts the centroid away from it
        let mut hole = rect(0.5, 0.0, 1.0, 1.0);
        hole.reverse();
        let (c, a) = polygon_centroid(&[rect(0.0, 0.0, 1.0, 1.0), hole]).unwrap();
        assert!((a - 0.5).abs() < 1e-12);
        assert!((c.x - 0.25).abs() < 1e-12, "{c:?}");
    }

    /// Winding-number containment, written independently of the even-odd test.
    fn winding_contains(p: Point, ring: &[Point]) -> bool {
        let mut wn = 0i32;
        for w in ring.windows(2) {
            let (a, b) = (w[0], w[1]);
            let is_left = (b.x - a.x) * (p.y - a.y) - (p.x - a.x) * (b.y - a.y);
            if a.y <= p.y {
                if b.y > p.y && is_left > 0.0 {
                    wn += 1;
                }
            } else if b.y <= p.y && is_left < 0.0 {
                wn -= 1;
            }
        }
        wn != 0
    }

    #[test]
    fn twelve_gon_area_matches_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        // star-shaped about the origin, hence simple
        let mut ring: Ring = (0..12)
            .map(|k| {
                let t = 2.0 * PI * (k as f64 + rng.random_range(-0.3..0.3)) / 12.0;
                let r = rng.random_range(1.0..3.0);
                Point::new(r * t.cos(), r * t.sin())
            })
            .collect();
        ring.push(ring[0]);
        let area = polygon_area(&[ring.clone()]).unwrap();

        let b = BBox::of_points(&ring);
        let box_area = (b.max.x - b.min.x) * (b.max.y - b.min.y);
        let samples = 1_000_000;
        let hits = (0..samples)
            .filter(|_| {
                let p = Point::new(
                    rng.random_range(b.min.x..b.max.x),
                    rng.random_range(b.min.y..b.max.y),
                );
                winding_contains(p, &ring)
            })
            .count();
        let mc = box_area * hits as f64 / samples as f64;
        assert!((area - mc).abs() / mc < 0.01, "shoelace {area} vs mc {mc}");
    }

    #[test]
    fn densify_keeps_endpoints_and_bounds_segments() {
        let r = densify_ring(&rect(0.0, 0.0, 1.0, 1.0), 0.3);
        assert_eq!(r.first(), r.last());
        assert_eq!(r.len(), 4 * 4 + 1);
        assert!(r.windows(2).all(|w| w[0].distance(w[1]) <= 0.3 + 1e-12));
        assert!((ring_length(&r) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn polsby_popper_is_scale_invariant_and_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let n = rng.random_range(3..40);
            let mut ring: Ring = (0..n)
                .map(|k| {
                    let t = 2.0 * PI * k as f64 / n as f64;
                    let r = rng.random_range(0.5..2.0);
                    Point::new(r * t.cos(), r * t.sin())
                })
                .collect();
            ring.push(ring[0]);
            let g = geometry(
                polygon_area(&[ring.clone()]).unwrap(),
                polygon_perimeter(&[ring.clone()]).unwrap(),
            );
            let pp = polsby_popper(&g).unwrap();
            assert!(pp <= 1.0 + 1e-9);
            let s = rng.random_range(0.01..100.0);
            let scaled: Ring = ring.iter().map(|p| Point::new(p.x * s, p.y * s)).collect();
            let gs = geometry(
                polygon_area(std::slice::from_ref(&scaled)).unwrap(),
                polygon_perimeter(&[scaled]).unwrap(),
            );
            assert!((polsby_popper(&gs).unwrap() - pp).abs() < 1e-9);
        }
    }
}
