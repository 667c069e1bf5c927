//! Markov-operator dynamics on grid-discretised probability measures:
//! push-forward by cell-center transport, fixed-point iteration with a
//! total-variation stopping rule, support extraction, and raster/CSV output.

use crate::affine::Vec2;
use crate::ifs::{IfsError, IfsSystem};
use crate::points::PointSet;
use crate::polygon::ConvexPolygon;
use serde::{Deserialize, Serialize};
use std::io::{self, Write};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("grids differ in bounds or resolution")]
    GridMismatch,
    #[error("polygon is degenerate or lies outside the grid bounds")]
    DegeneratePolygon,
    #[error("point ({0}, {1}) lies outside the grid bounds")]
    OutOfBounds(f64, f64),
    #[error("invalid bounds: xmin < xmax and ymin < ymax required")]
    InvalidBounds,
    #[error(transparent)]
    Ifs(#[from] IfsError),
}

/// Axis-aligned bounding box of a grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridBounds {
    pub xmin: f64,
    pub xmax: f64,
    pub ymin: f64,
    pub ymax: f64,
}

impl GridBounds {
    pub fn new(xmin: f64, xmax: f64, ymin: f64, ymax: f64) -> Result<Self, MeasureError> {
        let b = GridBounds {
            xmin,
            xmax,
            ymin,
            ymax,
        };
        if !(xmin < xmax && ymin < ymax)
            || [xmin, xmax, ymin, ymax].iter().any(|v| !v.is_finite())
        {
            return Err(MeasureError::InvalidBounds);
        }
        Ok(b)
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.xmin && p.x < self.xmax && p.y >= self.ymin && p.y < self.ymax
    }
}

/// Default bounds giving the unit triangle a margin on all sides.
pub const DEFAULT_BOUNDS: GridBounds = GridBounds {
    xmin: -0.25,
    xmax: 1.25,
    ymin: -0.25,
    ymax: 1.25,
};

/// A probability measure discretised on an `m x m` cell grid. Mass deposited
/// outside the bounds accumulates in `escaped_mass` and stays there, so the
/// total is conserved exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMeasure {
    bounds: GridBounds,
    m: usize,
    mass: Vec<f64>,
    escaped: f64,
}

impl GridMeasure {
    fn zero(bounds: GridBounds, m: usize) -> GridMeasure {
        assert!(m >= 2, "grid resolution must be at least 2");
        GridMeasure {
            bounds,
            m,
            mass: vec![0.0; m * m],
            escaped: 0.0,
        }
    }

    /// All mass in the cell containing `p`.
    pub fn point_mass(bounds: GridBounds, m: usize, p: Vec2) -> Result<GridMeasure, MeasureError> {
        let mut g = Self::zero(bounds, m);
        let (i, j) = g.cell_of(p).ok_or(MeasureError::OutOfBounds(p.x, p.y))?;
        let idx = g.idx(i, j);
        g.mass[idx] = 1.0;
        Ok(g)
    }

    /// Uniform mass over all cells.
    pub fn uniform(bounds: GridBounds, m: usize) -> GridMeasure {
        let mut g = Self::zero(bounds, m);
        let w = 1.0 / (m * m) as f64;
        g.mass.fill(w);
        g
    }

    /// Mass proportional to the fraction of each cell inside the polygon.
    /// Cells whose four corners all lie inside are exact (convexity); the
    /// rest are estimated by a 4x4 subsample.
    pub fn uniform_on_polygon(
        poly: &ConvexPolygon,
        bounds: GridBounds,
        m: usize,
    ) -> Result<GridMeasure, MeasureError> {
        if poly.area() <= 0.0 {
            return Err(MeasureError::DegeneratePolygon);
        }
        let mut g = Self::zero(bounds, m);
        let hx = g.cell_width();
        let hy = g.cell_height();
        let mut total = 0.0;
        for i in 0..m {
            for j in 0..m {
                let x0 = bounds.xmin + i as f64 * hx;
                let y0 = bounds.ymin + j as f64 * hy;
                let corners_in = [
                    Vec2::new(x0, y0),
                    Vec2::new(x0 + hx, y0),
                    Vec2::new(x0, y0 + hy),
                    Vec2::new(x0 + hx, y0 + hy),
                ]
                .iter()
                .filter(|&&c| poly.contains(c, 0.0))
                .count();
                let frac = if corners_in == 4 {
                    1.0
                } else {
                    let mut inside = 0;
                    for a in 0..4 {
                        for b in 0..4 {
                            let p = Vec2::new(
                                x0 + hx * (a as f64 + 0.5) / 4.0,
                                y0 + hy * (b as f64 + 0.5) / 4.0,
                            );
                            if poly.contains(p, 0.0) {
                                inside += 1;
                            }
                        }
                    }
                    inside as f64 / 16.0
                };
                let k = g.idx(i, j);
                g.mass[k] = frac;
                total += frac;
            }
        }
        if total <= 0.0 {
            return Err(MeasureError::DegeneratePolygon);
        }
        for v in &mut g.mass {
            *v /= total;
        }
        Ok(g)
    }

    pub fn bounds(&self) -> GridBounds {
        self.bounds
    }

    pub fn resolution(&self) -> usize {
        self.m
    }

    pub fn cell_width(&self) -> f64 {
        (self.bounds.xmax - self.bounds.xmin) / self.m as f64
    }

    pub fn cell_height(&self) -> f64 {
        (self.bounds.ymax - self.bounds.ymin) / self.m as f64
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.m + j
    }

    pub fn cell_mass(&self, i: usize, j: usize) -> f64 {
        self.mass[self.idx(i, j)]
    }

    pub fn escaped_mass(&self) -> f64 {
        self.escaped
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum::<f64>() + self.escaped
    }

    pub fn cell_center(&self, i: usize, j: usize) -> Vec2 {
        Vec2::new(
            self.bounds.xmin + (i as f64 + 0.5) * self.cell_width(),
            self.bounds.ymin + (j as f64 + 0.5) * self.cell_height(),
        )
    }

    pub fn cell_of(&self, p: Vec2) -> Option<(usize, usize)> {
        if !self.bounds.contains(p) {
            return None;
        }
        let i = ((p.x - self.bounds.xmin) / self.cell_width()) as usize;
        let j = ((p.y - self.bounds.ymin) / self.cell_height()) as usize;
        Some((i.min(self.m - 1), j.min(self.m - 1)))
    }

    /// One Markov step: every cell's mass is transported through each map
    /// from the cell center and deposited in the target cell (nearest-cell
    /// deposit); mass landing outside the bounds joins `escaped_mass`.
    pub fn markov_step(&self, s: &IfsSystem) -> Result<GridMeasure, MeasureError> {
        let probs = s.probs().ok_or(IfsError::MissingProbabilities)?.to_vec();
        let mut out = Self::zero(self.bounds, self.m);
        out.escaped = self.escaped;
        for i in 0..self.m {
            for j in 0..self.m {
                let w = self.mass[self.idx(i, j)];
                if w == 0.0 {
                    continue;
                }
                let c = self.cell_center(i, j);
                for (f, &p) in s.maps().iter().zip(&probs) {
                    let img = f.apply(c);
                    match out.cell_of(img) {
                        Some((ti, tj)) => {
                            let k = out.idx(ti, tj);
                            out.mass[k] += p * w;
                        }
                        None => out.escaped += p * w,
                    }
                }
            }
        }
        Ok(out)
    }

    /// Grid total variation: half the L1 distance between the cell masses
    /// plus half the escaped-mass difference.
    pub fn total_variation(&self, other: &GridMeasure) -> Result<f64, MeasureError> {
        if self.bounds != other.bounds || self.m != other.m {
            return Err(MeasureError::GridMismatch);
        }
        let cells: f64 = self
            .mass
            .iter()
            .zip(&other.mass)
            .map(|(a, b)| (a - b).abs())
            .sum();
        Ok(0.5 * cells + 0.5 * (self.escaped - other.escaped).abs())
    }

    /// Rescales retained cell mass to total 1, dropping escaped mass.
    fn renormalized(mut self) -> GridMeasure {
        let retained: f64 = self.mass.iter().sum();
        if retained > 0.0 {
            for v in &mut self.mass {
                *v /= retained;
            }
        }
        self.escaped = 0.0;
        self
    }

    /// Centers of cells holding more than `threshold` times the maximum cell
    /// mass.
    pub fn support(&self, threshold: f64) -> PointSet {
        let max = self.mass.iter().cloned().fold(0.0f64, f64::max);
        let cut = threshold * max;
        let mut pts = Vec::new();
        for i in 0..self.m {
            for j in 0..self.m {
                if self.mass[self.idx(i, j)] > cut {
                    pts.push(self.cell_center(i, j));
                }
            }
        }
        PointSet::new(pts, 0.0)
    }

    /// Total mass of cells whose center lies within `radius` of `center`.
    pub fn mass_within(&self, center: Vec2, radius: f64) -> f64 {
        let r_sq = radius * radius;
        let mut sum = 0.0;
        for i in 0..self.m {
            for j in 0..self.m {
                if self.cell_center(i, j).dist_sq(center) <= r_sq {
                    sum += self.mass[self.idx(i, j)];
                }
            }
        }
        sum
    }

    /// ASCII portable graymap (P2), 8-bit, max-normalised. Row 0 is the top
    /// of the bounds (largest y).
    pub fn write_pgm<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "P2")?;
        writeln!(w, "{} {}", self.m, self.m)?;
        writeln!(w, "255")?;
        let max = self.mass.iter().cloned().fold(0.0f64, f64::max);
        for j in (0..self.m).rev() {
            let mut row = String::with_capacity(self.m * 4);
            for i in 0..self.m {
                let v = if max > 0.0 {
                    (self.mass[self.idx(i, j)] / max * 255.0).round() as u32
                } else {
                    0
                };
                if i > 0 {
                    row.push(' ');
                }
                row.push_str(&v.to_string());
            }
            writeln!(w, "{row}")?;
        }
        Ok(())
    }

    /// CSV `cell_x_index,cell_y_index,mass`, skipping empty cells.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "cell_x_index,cell_y_index,mass")?;
        for i in 0..self.m {
            for j in 0..self.m {
                let v = self.mass[self.idx(i, j)];
                if v > 0.0 {
                    writeln!(w, "{i},{j},{v:.16e}")?;
                }
            }
        }
        Ok(())
    }
}

/// Convergence log of a Markov fixed-point iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovReport {
    pub iterations: usize,
    /// Total variation between successive iterates, one entry per step.
    pub residuals: Vec<f64>,
    pub converged: bool,
    /// Cumulative mass that left the grid bounds over the run.
    pub escaped_total: f64,
}

/// Iterates the Markov operator until the total variation between successive
/// iterates drops below `tol` or `max_iters` is reached.
pub fn iterate_to_invariance(
    s: &IfsSystem,
    initial: &GridMeasure,
    tol: f64,
    max_iters: usize,
) -> Result<(GridMeasure, MarkovReport), MeasureError> {
    iterate_to_invariance_with(s, initial, tol, max_iters, false)
}

/// As [`iterate_to_invariance`], optionally renormalizing the retained mass
/// after every step. Renormalization conditions the iteration on staying
/// inside the bounds; the discarded mass is still reported in
/// `escaped_total`. Useful for initial measures spread beyond the region the
/// dynamics ultimately concentrates on, where the absorbing escape bin would
/// otherwise dominate the limit.
pub fn iterate_to_invariance_with(
    s: &IfsSystem,
    initial: &GridMeasure,
    tol: f64,
    max_iters: usize,
    renormalize: bool,
) -> Result<(GridMeasure, MarkovReport), MeasureError> {
    let mut cur = initial.clone();
    let mut residuals = Vec::new();
    let mut converged = false;
    let mut escaped_total = 0.0;
    for _ in 0..max_iters {
        let mut next = cur.markov_step(s)?;
        escaped_total += next.escaped - cur.escaped;
        if renormalize {
            next = next.renormalized();
        }
        let r = next.total_variation(&cur)?;
        residuals.push(r);
        cur = next;
        if r < tol {
            converged = true;
            break;
        }
    }
    Ok((
        cur,
        MarkovReport {
            iterations: residuals.len(),
            residuals,
            converged,
            escaped_total,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affine::{AffineMap, Mat2};
    use crate::systems::{barnsley_vince, delta_polygon, final_example};

    fn bv() -> IfsSystem {
        barnsley_vince(0.5).unwrap().system
    }

    #[test]
    fn point_mass_markov_step_splits() {
        let g = GridMeasure::point_mass(DEFAULT_BOUNDS, 64, Vec2::new(0.0, 0.0)).unwrap();
        let next = g.markov_step(&bv()).unwrap();
        // Mass of the source cell center c: f1(c) stays near (0,0), f2(c)
        // lands near (0,1).
        let origin = next.cell_of(Vec2::new(0.0, 0.0)).unwrap();
        let top = next.cell_of(Vec2::new(0.0, 1.0)).unwrap();
        assert!((next.cell_mass(origin.0, origin.1) - 0.5).abs() < 1e-12);
        assert!((next.cell_mass(top.0, top.1) - 0.5).abs() < 1e-12);
        assert!((next.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identity_system_preserves_measure() {
        let id = IfsSystem::with_probs(vec![AffineMap::IDENTITY], vec![1.0]).unwrap();
        let g = GridMeasure::uniform(DEFAULT_BOUNDS, 32);
        let next = g.markov_step(&id).unwrap();
        // Cell centers map to themselves, so the grid is reproduced exactly.
        assert_eq!(g, next);
    }

    #[test]
    fn markov_needs_probs() {
        let s = IfsSystem::new(bv().maps().to_vec()).unwrap();
        let g = GridMeasure::uniform(DEFAULT_BOUNDS, 16);
        assert!(matches!(
            g.markov_step(&s),
            Err(MeasureError::Ifs(IfsError::MissingProbabilities))
        ));
    }

    #[test]
    fn total_variation_basics() {
        let a = GridMeasure::point_mass(DEFAULT_BOUNDS, 16, Vec2::new(0.0, 0.0)).unwrap();
        let b = GridMeasure::point_mass(DEFAULT_BOUNDS, 16, Vec2::new(1.0, 1.0)).unwrap();
        assert_eq!(a.total_variation(&a).unwrap(), 0.0);
        assert_eq!(a.total_variation(&b).unwrap(), 1.0);
        let u = GridMeasure::uniform(DEFAULT_BOUNDS, 16);
        // Uniform on the left half against uniform on all cells.
        let mut left = GridMeasure::zero(DEFAULT_BOUNDS, 16);
        for i in 0..8 {
            for j in 0..16 {
                let k = left.idx(i, j);
                left.mass[k] = 1.0 / 128.0;
            }
        }
        assert!((left.total_variation(&u).unwrap() - 0.5).abs() < 1e-12);
        let other = GridMeasure::uniform(DEFAULT_BOUNDS, 32);
        assert!(matches!(
            u.total_variation(&other),
            Err(MeasureError::GridMismatch)
        ));
    }

    #[test]
    fn mass_conservation_under_steps() {
        let g = GridMeasure::uniform(DEFAULT_BOUNDS, 64);
        let mut cur = g;
        for _ in 0..5 {
            cur = cur.markov_step(&bv()).unwrap();
            assert!((cur.total_mass() - 1.0).abs() < 1e-12);
        }
        assert!(cur.escaped_mass() > 0.0);
    }

    #[test]
    fn markov_linearity() {
        let s = bv();
        let a = GridMeasure::point_mass(DEFAULT_BOUNDS, 32, Vec2::new(0.3, 0.3)).unwrap();
        let b = GridMeasure::uniform(DEFAULT_BOUNDS, 32);
        let alpha = 0.3;
        let mut mix = GridMeasure::zero(DEFAULT_BOUNDS, 32);
        for k in 0..mix.mass.len() {
            mix.mass[k] = alpha * a.mass[k] + (1.0 - alpha) * b.mass[k];
        }
        let stepped_mix = mix.markov_step(&s).unwrap();
        let sa = a.markov_step(&s).unwrap();
        let sb = b.markov_step(&s).unwrap();
        for k in 0..mix.mass.len() {
            let expect = alpha * sa.mass[k] + (1.0 - alpha) * sb.mass[k];
            assert!((stepped_mix.mass[k] - expect).abs() < 1e-12);
        }
        let esc = alpha * sa.escaped + (1.0 - alpha) * sb.escaped;
        assert!((stepped_mix.escaped - esc).abs() < 1e-12);
    }

    #[test]
    fn uniform_on_triangle_properties() {
        let delta = delta_polygon();
        let g = GridMeasure::uniform_on_polygon(&delta, DEFAULT_BOUNDS, 64).unwrap();
        assert!((g.total_mass() - 1.0).abs() < 1e-12);
        // Cells fully outside carry nothing.
        let far = g.cell_of(Vec2::new(1.2, 1.2)).unwrap();
        assert_eq!(g.cell_mass(far.0, far.1), 0.0);
        // The f1 image of the triangle holds half the measure.
        let [f1, _] = crate::systems::barnsley_vince_maps();
        let sub = delta.image(&f1);
        let mut inside = 0.0;
        for i in 0..64 {
            for j in 0..64 {
                if sub.contains(g.cell_center(i, j), 0.0) {
                    inside += g.cell_mass(i, j);
                }
            }
        }
        assert!((inside - 0.5).abs() < 0.01, "mass of f1 image = {inside}");
    }

    #[test]
    fn uniform_on_polygon_square_equals_uniform() {
        let square = ConvexPolygon::from_points(&[
            Vec2::new(DEFAULT_BOUNDS.xmin, DEFAULT_BOUNDS.ymin),
            Vec2::new(DEFAULT_BOUNDS.xmax, DEFAULT_BOUNDS.ymin),
            Vec2::new(DEFAULT_BOUNDS.xmax, DEFAULT_BOUNDS.ymax),
            Vec2::new(DEFAULT_BOUNDS.xmin, DEFAULT_BOUNDS.ymax),
        ])
        .unwrap();
        let g = GridMeasure::uniform_on_polygon(&square, DEFAULT_BOUNDS, 16).unwrap();
        let u = GridMeasure::uniform(DEFAULT_BOUNDS, 16);
        assert!(g.total_variation(&u).unwrap() < 1e-12);
    }

    #[test]
    fn uniform_on_degenerate_polygon_rejected() {
        let seg = ConvexPolygon::from_points(&[Vec2::new(0.0, 0.0), Vec2::new(1.0, 1.0)]).unwrap();
        assert!(matches!(
            GridMeasure::uniform_on_polygon(&seg, DEFAULT_BOUNDS, 16),
            Err(MeasureError::DegeneratePolygon)
        ));
    }

    #[test]
    fn invariance_residual_of_uniform_triangle() {
        let delta = delta_polygon();
        let s = bv();
        let mut prev_res = f64::INFINITY;
        for m in [64, 128] {
            let g = GridMeasure::uniform_on_polygon(&delta, DEFAULT_BOUNDS, m).unwrap();
            let next = g.markov_step(&s).unwrap();
            assert!(next.escaped_mass() < 1e-6, "triangle-supported mass escaped");
            let res = next.total_variation(&g).unwrap();
            assert!(res < prev_res);
            prev_res = res;
        }
        assert!(prev_res <= 0.02);
    }

    #[test]
    fn dirac_limit_for_final_example() {
        let s = final_example().system;
        let g = GridMeasure::uniform(DEFAULT_BOUNDS, 64);
        let (limit, report) = iterate_to_invariance(&s, &g, 1e-3, 500).unwrap();
        assert!(report.converged);
        assert!(limit.mass_within(Vec2::new(1.0, 0.0), 0.05) >= 0.99);
    }

    #[test]
    fn single_contraction_concentrates() {
        let c = AffineMap::new(Mat2::new(0.5, 0.0, 0.0, 0.5), Vec2::new(0.25, 0.25));
        let p = c.fixed_point().unwrap();
        let s = IfsSystem::with_probs(vec![c], vec![1.0]).unwrap();
        let g = GridMeasure::uniform(DEFAULT_BOUNDS, 64);
        let (limit, _) = iterate_to_invariance(&s, &g, 1e-6, 500).unwrap();
        assert!(limit.mass_within(p, 0.05) > 0.999);
    }

    #[test]
    fn tol_one_stops_immediately() {
        let s = bv();
        let g = GridMeasure::uniform(DEFAULT_BOUNDS, 32);
        let (_, report) = iterate_to_invariance(&s, &g, 1.0, 500).unwrap();
        assert_eq!(report.iterations, 1);
        assert!(report.converged);
    }

    #[test]
    fn support_extraction() {
        let g = GridMeasure::point_mass(DEFAULT_BOUNDS, 32, Vec2::new(0.3, 0.3)).unwrap();
        let sup = g.support(0.5);
        assert_eq!(sup.len(), 1);
        assert!(sup.points()[0].dist(Vec2::new(0.3, 0.3)) < g.cell_width());
        // Zero threshold on a strictly positive grid keeps every center.
        let u = GridMeasure::uniform(DEFAULT_BOUNDS, 8);
        assert_eq!(u.support(0.0).len(), 64);
    }

    #[test]
    fn pgm_and_csv_shape() {
        let g = GridMeasure::point_mass(DEFAULT_BOUNDS, 4, Vec2::new(0.3, 0.3)).unwrap();
        let mut pgm = Vec::new();
        g.write_pgm(&mut pgm).unwrap();
        let text = String::from_utf8(pgm).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "P2");
        assert_eq!(lines[1], "4 4");
        assert_eq!(lines[2], "255");
        assert_eq!(lines.len(), 7);
        let mut csv = Vec::new();
        g.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("cell_x_index,cell_y_index,mass\n"));
        assert_eq!(text.lines().count(), 2);
    }
}
