//! Planar affine-map algebra: application, composition, determinants,
//! operator (spectral) norms, fixed points and matrix powers.
//!
//! Everything here is a plain `Copy` value in `f64`; the dimension is fixed
//! at 2 so the spectral norm has an exact closed form.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Threshold on `|det(I - A)|` below which a map is treated as having no
/// unique fixed point (eigenvalue 1; the fixed set is empty or a line).
pub const FIXED_POINT_SINGULAR_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AffineError {
    #[error("no unique fixed point: |det(I - A)| = {det:e} is below {FIXED_POINT_SINGULAR_TOL:e}")]
    NoUniqueFixedPoint { det: f64 },
}

/// A point or vector in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    pub fn dist_sq(self, other: Vec2) -> f64 {
        let d = self - other;
        d.x * d.x + d.y * d.y
    }

    /// z-component of the cross product `self x other`.
    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl std::ops::Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl std::ops::Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl std::ops::Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

/// A 2x2 real matrix, row major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat2 {
    pub a11: f64,
    pub a12: f64,
    pub a21: f64,
    pub a22: f64,
}

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2 {
        a11: 1.0,
        a12: 0.0,
        a21: 0.0,
        a22: 1.0,
    };

    pub const fn new(a11: f64, a12: f64, a21: f64, a22: f64) -> Self {
        Mat2 { a11, a12, a21, a22 }
    }

    pub fn mul(self, o: Mat2) -> Mat2 {
        Mat2::new(
            self.a11 * o.a11 + self.a12 * o.a21,
            self.a11 * o.a12 + self.a12 * o.a22,
            self.a21 * o.a11 + self.a22 * o.a21,
            self.a21 * o.a12 + self.a22 * o.a22,
        )
    }

    pub fn mul_vec(self, v: Vec2) -> Vec2 {
        Vec2::new(
            self.a11 * v.x + self.a12 * v.y,
            self.a21 * v.x + self.a22 * v.y,
        )
    }

    pub fn determinant(self) -> f64 {
        self.a11 * self.a22 - self.a12 * self.a21
    }

    /// Largest singular value, i.e. the operator 2-norm.
    ///
    /// Closed form for 2x2: `sigma_max^2 = (T + sqrt(T^2 - 4 D^2)) / 2` with
    /// `T` the sum of squared entries and `D = |det|`. The discriminant is
    /// nonnegative analytically; tiny negative round-off is clamped to 0.
    pub fn spectral_norm(self) -> f64 {
        let t = self.a11 * self.a11
            + self.a12 * self.a12
            + self.a21 * self.a21
            + self.a22 * self.a22;
        let d = self.determinant().abs();
        let disc = (t * t - 4.0 * d * d).max(0.0);
        (0.5 * (t + disc.sqrt())).sqrt()
    }

    /// `n`-th power by repeated product, `n >= 1`.
    pub fn power(self, n: u32) -> Mat2 {
        assert!(n >= 1, "matrix power requires n >= 1");
        let mut acc = self;
        for _ in 1..n {
            acc = acc.mul(self);
        }
        acc
    }

    pub fn is_finite(self) -> bool {
        self.a11.is_finite() && self.a12.is_finite() && self.a21.is_finite() && self.a22.is_finite()
    }
}

/// The affine map `v -> linear * v + offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub linear: Mat2,
    pub offset: Vec2,
}

impl AffineMap {
    pub const IDENTITY: AffineMap = AffineMap {
        linear: Mat2::IDENTITY,
        offset: Vec2::ZERO,
    };

    pub const fn new(linear: Mat2, offset: Vec2) -> Self {
        AffineMap { linear, offset }
    }

    pub fn apply(&self, v: Vec2) -> Vec2 {
        self.linear.mul_vec(v) + self.offset
    }

    /// Composition `self . g`, so `compose(f, g)(v) = f(g(v))`.
    pub fn compose(&self, g: &AffineMap) -> AffineMap {
        AffineMap {
            linear: self.linear.mul(g.linear),
            offset: self.linear.mul_vec(g.offset) + self.offset,
        }
    }

    /// Lipschitz constant with respect to the Euclidean norm: the largest
    /// singular value of the linear part.
    pub fn lipschitz(&self) -> f64 {
        self.linear.spectral_norm()
    }

    /// Solves `(I - linear) p = offset` for the unique fixed point.
    pub fn fixed_point(&self) -> Result<Vec2, AffineError> {
        let m = Mat2::new(
            1.0 - self.linear.a11,
            -self.linear.a12,
            -self.linear.a21,
            1.0 - self.linear.a22,
        );
        let det = m.determinant();
        if det.abs() < FIXED_POINT_SINGULAR_TOL {
            return Err(AffineError::NoUniqueFixedPoint { det });
        }
        let b = self.offset;
        Ok(Vec2::new(
            (m.a22 * b.x - m.a12 * b.y) / det,
            (m.a11 * b.y - m.a21 * b.x) / det,
        ))
    }
}
