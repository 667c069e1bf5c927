//! Convex polygons with exact affine images: hull construction, shoelace
//! area, diameter and tolerant point containment.

use crate::affine::{AffineMap, Vec2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolygonError {
    #[error("a polygon needs at least one finite vertex")]
    Empty,
    #[error("polygon is degenerate (zero area)")]
    Degenerate,
}

/// A convex polygon stored as counter-clockwise vertices.
///
/// Degenerate hulls (a segment or a single point) are representable; they
/// arise naturally as deep affine images of triangles collapse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexPolygon {
    vertices: Vec<Vec2>,
}

impl ConvexPolygon {
    /// Convex hull of the given points (Andrew's monotone chain), oriented
    /// counter-clockwise. Only exactly collinear points are dropped, so
    /// arbitrarily thin triangles keep their three vertices and an exact
    /// shoelace area.
    pub fn from_points(points: &[Vec2]) -> Result<Self, PolygonError> {
        if points.is_empty() || points.iter().any(|p| !p.is_finite()) {
            return Err(PolygonError::Empty);
        }
        let mut pts: Vec<Vec2> = points.to_vec();
        pts.sort_by(|a, b| (a.x, a.y).partial_cmp(&(b.x, b.y)).unwrap());
        pts.dedup();
        if pts.len() <= 2 {
            return Ok(ConvexPolygon { vertices: pts });
        }
        let chain = |iter: &mut dyn Iterator<Item = Vec2>| -> Vec<Vec2> {
            let mut h: Vec<Vec2> = Vec::new();
            for p in iter {
                while h.len() >= 2 {
                    let a = h[h.len() - 2];
                    let b = h[h.len() - 1];
                    if (b - a).cross(p - a) <= 0.0 {
                        h.pop();
                    } else {
                        break;
                    }
                }
                h.push(p);
            }
            h
        };
        let mut lower = chain(&mut pts.iter().copied());
        let mut upper = chain(&mut pts.iter().rev().copied());
        lower.pop();
        upper.pop();
        lower.append(&mut upper);
        if lower.len() < 3 {
            // All points collinear: keep the two extremes.
            let mut seg = vec![pts[0], pts[pts.len() - 1]];
            seg.dedup();
            return Ok(ConvexPolygon { vertices: seg });
        }
        Ok(ConvexPolygon { vertices: lower })
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    /// Shoelace area evaluated relative to the first vertex, which keeps the
    /// cancellation error proportional to the polygon size rather than to its
    /// absolute coordinates.
    pub fn area(&self) -> f64 {
        if self.vertices.len() < 3 {
            return 0.0;
        }
        let v0 = self.vertices[0];
        let mut sum = 0.0;
        for i in 1..self.vertices.len() - 1 {
            sum += (self.vertices[i] - v0).cross(self.vertices[i + 1] - v0);
        }
        0.5 * sum.abs()
    }

    /// Largest pairwise vertex distance.
    pub fn diameter(&self) -> f64 {
        let (a, b) = self.farthest_pair();
        a.dist(b)
    }

    /// Vertex pair realising the diameter (brute force; hulls here are tiny).
    pub fn farthest_pair(&self) -> (Vec2, Vec2) {
        let v = &self.vertices;
        let mut best = (v[0], v[0]);
        let mut best_d = -1.0;
        for i in 0..v.len() {
            for j in i..v.len() {
                let d = v[i].dist_sq(v[j]);
                if d > best_d {
                    best_d = d;
                    best = (v[i], v[j]);
                }
            }
        }
        best
    }

    pub fn centroid(&self) -> Vec2 {
        let n = self.vertices.len() as f64;
        let mut c = Vec2::ZERO;
        for &v in &self.vertices {
            c = c + v;
        }
        c * (1.0 / n)
    }

    /// True when `p` lies inside or on the polygon, allowing a signed
    /// distance of `tol` outside each edge.
    pub fn contains(&self, p: Vec2, tol: f64) -> bool {
        match self.vertices.len() {
            1 => p.dist(self.vertices[0]) <= tol,
            2 => dist_to_segment(p, self.vertices[0], self.vertices[1]) <= tol,
            n => {
                for i in 0..n {
                    let a = self.vertices[i];
                    let b = self.vertices[(i + 1) % n];
                    let e = b - a;
                    let len = e.norm();
                    if e.cross(p - a) < -tol * len {
                        return false;
                    }
                }
                true
            }
        }
    }

    /// Image under an affine map: the hull of the vertex images (exact for
    /// affine maps on convex sets), re-oriented counter-clockwise.
    pub fn image(&self, f: &AffineMap) -> ConvexPolygon {
        let mapped: Vec<Vec2> = self.vertices.iter().map(|&v| f.apply(v)).collect();
        ConvexPolygon::from_points(&mapped).expect("image of a nonempty polygon is nonempty")
    }
}

fn dist_to_segment(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len_sq = ab.x * ab.x + ab.y * ab.y;
    if len_sq == 0.0 {
        return p.dist(a);
    }
    let t = ((p - a).x * ab.x + (p - a).y * ab.y) / len_sq;
    let t = t.clamp(0.0, 1.0);
    p.dist(a + ab * t)
}
