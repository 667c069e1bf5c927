//! Toolkit for affine iterated function systems whose individual maps need
//! not be contractions: iterate norms and average contractivity, chaos-game
//! and semiattractor estimation, Markov-operator dynamics on grids, exact
//! fibre geometry, and bundled example systems with a verification suite.

pub mod affine;
pub mod fibres;
pub mod ifs;
pub mod measure;
pub mod points;
pub mod polygon;
pub mod systems;
pub mod verify;

pub use affine::{AffineError, AffineMap, Mat2, Vec2};
pub use fibres::{
    classify_fibre, fibre_sequence, strongly_fibred_report, Address, FibreApprox, FibreClass,
    FibreError, FibredStructureReport, SingletonWitness,
};
pub use ifs::{IfsError, IfsSystem, Word};
pub use measure::{
    iterate_to_invariance, iterate_to_invariance_with, GridBounds, GridMeasure, MarkovReport,
    MeasureError, DEFAULT_BOUNDS,
};
pub use points::{
    chaos_game, estimate_semiattractor, hausdorff_distance, hutchinson_step, OrbitConfig,
    PointSet, SetError,
};
pub use polygon::{ConvexPolygon, PolygonError};
pub use systems::{barnsley_vince, final_example, NamedSystem, ReferenceFact};
pub use verify::{verify_all, verify_all_with_fault, CheckResult, Scale, VerifyReport};
