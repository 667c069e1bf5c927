//! Built-in example systems and their reference facts.

use crate::affine::{AffineMap, Mat2, Vec2};
use crate::ifs::{IfsError, IfsSystem};
use crate::points::PointSet;
use crate::polygon::ConvexPolygon;
use serde::Serialize;

/// Reference constants stored as exact expressions evaluated on demand, so
/// no decimal transcription can drift.
pub mod constants {
    /// Operator norm of `A_i * A_2` for the triangle system: `1/sqrt(2)`.
    pub fn second_iterate_lip_via_2() -> f64 {
        std::f64::consts::FRAC_1_SQRT_2
    }

    /// Operator norm of `A_i * A_1`: `sqrt(3 sqrt(17) + 13) / 4`.
    pub fn second_iterate_lip_via_1() -> f64 {
        (3.0 * 17f64.sqrt() + 13.0).sqrt() / 4.0
    }

    /// Second-iterate average contractivity at `p = (1/2, 1/2)`.
    pub fn second_iterate_average() -> f64 {
        0.5 * (second_iterate_lip_via_2() + second_iterate_lip_via_1())
    }

    /// Largest `p1` keeping the second iterate contractive on average:
    /// `(4 - 2 sqrt(2)) / (sqrt(3 sqrt(17) + 13) - 2 sqrt(2))`.
    pub fn critical_p1() -> f64 {
        let s2 = 2f64.sqrt();
        (4.0 - 2.0 * s2) / ((3.0 * 17f64.sqrt() + 13.0).sqrt() - 2.0 * s2)
    }
}

/// A numeric fact a named system is expected to reproduce.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferenceFact {
    pub id: &'static str,
    pub description: &'static str,
    pub value: f64,
}

/// A ready-made system bundled with an invariant-region hint and the
/// numbers the verification suite checks it against.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedSystem {
    pub name: String,
    pub system: IfsSystem,
    pub invariant_hint: Option<ConvexPolygon>,
    pub facts: Vec<ReferenceFact>,
}

/// The two linear parts of the triangle system.
pub fn barnsley_vince_maps() -> [AffineMap; 2] {
    [
        AffineMap::new(Mat2::new(1.0, 0.5, 0.0, 0.5), Vec2::new(0.0, 0.0)),
        AffineMap::new(Mat2::new(0.0, 0.5, -1.0, -0.5), Vec2::new(0.0, 1.0)),
    ]
}

/// The filled triangle with vertices (0,0), (1,0), (0,1).
pub fn delta_polygon() -> ConvexPolygon {
    ConvexPolygon::from_points(&[
        Vec2::new(0.0, 0.0),
        Vec2::new(1.0, 0.0),
        Vec2::new(0.0, 1.0),
    ])
    .expect("triangle is a valid polygon")
}

/// Barycentric containment test for the triangle, cheaper than the polygon
/// half-plane walk in hot loops.
pub fn delta_contains(p: Vec2, tol: f64) -> bool {
    p.x >= -tol && p.y >= -tol && p.x + p.y <= 1.0 + tol
}

/// Lattice rasterisation of the triangle at the given step.
pub fn delta_raster(step: f64) -> PointSet {
    assert!(step > 0.0);
    let n = (1.0 / step).round() as i64;
    let mut pts = Vec::new();
    for i in 0..=n {
        for j in 0..=(n - i) {
            pts.push(Vec2::new(i as f64 * step, j as f64 * step));
        }
    }
    PointSet::new(pts, 0.0)
}

/// The Barnsley-Vince triangle system: two non-contractive affine maps
/// whose second iterate is contractive on average for `p1` below the
/// critical threshold, with the triangle as invariant region.
pub fn barnsley_vince(p1: f64) -> Result<NamedSystem, IfsError> {
    if !(0.0..=1.0).contains(&p1) || !p1.is_finite() {
        return Err(IfsError::InvalidProbability {
            reason: format!("p1 = {p1} not in [0, 1]"),
        });
    }
    let system = IfsSystem::with_probs(barnsley_vince_maps().to_vec(), vec![p1, 1.0 - p1])?;
    Ok(NamedSystem {
        name: "barnsley-vince-triangle".into(),
        system,
        invariant_hint: Some(delta_polygon()),
        facts: vec![
            ReferenceFact {
                id: "lip-second-iterate-via-2",
                description: "operator norm of A_i A_2",
                value: constants::second_iterate_lip_via_2(),
            },
            ReferenceFact {
                id: "lip-second-iterate-via-1",
                description: "operator norm of A_i A_1",
                value: constants::second_iterate_lip_via_1(),
            },
            ReferenceFact {
                id: "second-iterate-average",
                description: "average contractivity of the second iterate at p = (1/2, 1/2)",
                value: constants::second_iterate_average(),
            },
            ReferenceFact {
                id: "critical-p1",
                description: "largest p1 with the second iterate contractive on average",
                value: constants::critical_p1(),
            },
            ReferenceFact {
                id: "det",
                description: "determinant of both linear parts",
                value: 0.5,
            },
        ],
    })
}

/// A two-map system whose semiattractor is the single point (1, 0):
/// `f_1(x,y) = (x/2 + 1/2, y)` and `f_2(x,y) = (x, y/2)`, probabilities
/// (1/2, 1/2). Neither map is a contraction but the mixed second-iterate
/// words are.
pub fn final_example() -> NamedSystem {
    let f1 = AffineMap::new(Mat2::new(0.5, 0.0, 0.0, 1.0), Vec2::new(0.5, 0.0));
    let f2 = AffineMap::new(Mat2::new(1.0, 0.0, 0.0, 0.5), Vec2::new(0.0, 0.0));
    let system =
        IfsSystem::with_probs(vec![f1, f2], vec![0.5, 0.5]).expect("probabilities are valid");
    let square = ConvexPolygon::from_points(&[
        Vec2::new(0.0, 0.0),
        Vec2::new(1.0, 0.0),
        Vec2::new(1.0, 1.0),
        Vec2::new(0.0, 1.0),
    ])
    .expect("unit square is a valid polygon");
    NamedSystem {
        name: "axis-collapse-example".into(),
        system,
        invariant_hint: Some(square),
        facts: vec![
            ReferenceFact {
                id: "second-iterate-average",
                description: "average contractivity of the second iterate",
                value: 0.75,
            },
            ReferenceFact {
                id: "semiattractor-x",
                description: "x coordinate of the singleton semiattractor",
                value: 1.0,
            },
            ReferenceFact {
                id: "semiattractor-y",
                description: "y coordinate of the singleton semiattractor",
                value: 0.0,
            },
        ],
    }
}
