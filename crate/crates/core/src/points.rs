//! Discrete compact-set dynamics: deduplicated point clouds, Hutchinson
//! steps, Hausdorff distance, seeded chaos-game orbits and semiattractor
//! estimation.

use crate::affine::Vec2;
use crate::ifs::{IfsError, IfsSystem};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;
use std::io::{self, Write};
use thiserror::Error;

/// Orbits whose coordinates exceed this magnitude are reported as diverged.
pub const DIVERGENCE_GUARD: f64 = 1e12;

/// Odd multiplier mixing the chunk index into the orbit seed:
/// `chunk_seed = rng_seed XOR (chunk * CHUNK_SEED_MIX)`.
pub const CHUNK_SEED_MIX: u64 = 0x9e37_79b9_7f4a_7c15;

/// Odd multiplier mixing the start index into the orbit seed when several
/// starting points are sampled.
pub const START_SEED_MIX: u64 = 0xa24b_aed4_963e_e407;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SetError {
    #[error("operation requires a nonempty point set")]
    EmptyInput,
    #[error("orbit diverged at step {step}: coordinate magnitude exceeded {DIVERGENCE_GUARD:e}")]
    DivergedOrbit { step: u64 },
    #[error(transparent)]
    Ifs(#[from] IfsError),
}

/// A finite planar point cloud, deduplicated by snapping to an `epsilon`
/// lattice anchored at the origin (first point seen per cell wins). With
/// `epsilon = 0` only exact duplicates collapse.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    points: Vec<Vec2>,
    resolution: f64,
}

fn cell_key(p: Vec2, eps: f64) -> (i64, i64) {
    if eps > 0.0 {
        ((p.x / eps).floor() as i64, (p.y / eps).floor() as i64)
    } else {
        (p.x.to_bits() as i64, p.y.to_bits() as i64)
    }
}

impl PointSet {
    pub fn new(points: Vec<Vec2>, resolution: f64) -> PointSet {
        assert!(resolution >= 0.0 && resolution.is_finite());
        let mut seen = HashMap::new();
        let mut kept = Vec::with_capacity(points.len());
        for p in points {
            if let std::collections::hash_map::Entry::Vacant(e) = seen.entry(cell_key(p, resolution)) {
                e.insert(());
                kept.push(p);
            }
        }
        PointSet {
            points: kept,
            resolution,
        }
    }

    pub fn empty(resolution: f64) -> PointSet {
        PointSet {
            points: Vec::new(),
            resolution,
        }
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    /// CSV with header `x,y` and 17 significant digits per coordinate.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "x,y")?;
        for p in &self.points {
            writeln!(w, "{:.16e},{:.16e}", p.x, p.y)?;
        }
        Ok(())
    }
}

/// Chaos-game parameters. The orbit is split into `chunk_count` independent
/// chunks; chunk `c` restarts from the starting point with its own burn-in
/// and an RNG seeded by `rng_seed XOR (c * CHUNK_SEED_MIX)`, which makes the
/// output independent of scheduling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitConfig {
    pub burn_in: u64,
    pub samples: u64,
    pub rng_seed: u64,
    pub chunk_count: u64,
}

impl Default for OrbitConfig {
    fn default() -> Self {
        OrbitConfig {
            burn_in: 100,
            samples: 100_000,
            rng_seed: 0,
            chunk_count: 1,
        }
    }
}

/// One Hutchinson step on a finite cloud: the deduplicated union of the map
/// images, at the input's resolution.
pub fn hutchinson_step(s: &IfsSystem, set: &PointSet) -> PointSet {
    let mut out = Vec::with_capacity(set.len() * s.len());
    for f in s.maps() {
        for &p in set.points() {
            out.push(f.apply(p));
        }
    }
    PointSet::new(out, set.resolution())
}

/// Symmetric Hausdorff distance between two nonempty clouds, brute force
/// over Euclidean point-to-set distances.
pub fn hausdorff_distance(a: &PointSet, b: &PointSet) -> Result<f64, SetError> {
    if a.is_empty() || b.is_empty() {
        return Err(SetError::EmptyInput);
    }
    Ok(directed_sq(a.points(), b.points())
        .max(directed_sq(b.points(), a.points()))
        .sqrt())
}

fn directed_sq(from: &[Vec2], to: &[Vec2]) -> f64 {
    let mut worst: f64 = 0.0;
    for &p in from {
        let mut best = f64::INFINITY;
        for &q in to {
            let d = p.dist_sq(q);
            if d < best {
                best = d;
                if best <= worst {
                    break;
                }
            }
        }
        if best > worst {
            worst = best;
        }
    }
    worst
}

/// Random orbit `x_{n+1} = f_{i_n}(x_n)` with indices drawn i.i.d. from the
/// probability vector. The first `burn_in` points of each chunk are
/// discarded; the output is deterministic in `(rng_seed, chunk_count)`.
pub fn chaos_game(s: &IfsSystem, start: Vec2, cfg: &OrbitConfig) -> Result<PointSet, SetError> {
    assert!(cfg.samples >= 1 && cfg.chunk_count >= 1);
    let probs = s.strict_probs()?.to_vec();
    // Cumulative distribution for inverse sampling.
    let mut cdf = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for &p in &probs {
        acc += p;
        cdf.push(acc);
    }
    let base = cfg.samples / cfg.chunk_count;
    let rem = cfg.samples % cfg.chunk_count;
    let mut out = Vec::with_capacity(cfg.samples as usize);
    for chunk in 0..cfg.chunk_count {
        let quota = base + u64::from(chunk < rem);
        if quota == 0 {
            continue;
        }
        let seed = cfg.rng_seed ^ chunk.wrapping_mul(CHUNK_SEED_MIX);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = start;
        let mut step: u64 = 0;
        for _ in 0..cfg.burn_in {
            x = advance(s, &cdf, &mut rng, x, &mut step)?;
        }
        for _ in 0..quota {
            x = advance(s, &cdf, &mut rng, x, &mut step)?;
            out.push(x);
        }
    }
    Ok(PointSet::new(out, 0.0))
}

fn advance(
    s: &IfsSystem,
    cdf: &[f64],
    rng: &mut ChaCha8Rng,
    x: Vec2,
    step: &mut u64,
) -> Result<Vec2, SetError> {
    let u: f64 = rng.random();
    let idx = cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1);
    let y = s.maps()[idx].apply(x);
    *step += 1;
    if !y.is_finite() || y.x.abs() > DIVERGENCE_GUARD || y.y.abs() > DIVERGENCE_GUARD {
        return Err(SetError::DivergedOrbit { step: *step });
    }
    Ok(y)
}

/// Estimates the semiattractor as the set of chaos-game points from the
/// first start that lie within `epsilon` of the cloud of every other start
/// (a finite-start surrogate for intersecting lower limits over all starting
/// points). Uniform probabilities are substituted when the system has none.
pub fn estimate_semiattractor(
    s: &IfsSystem,
    starts: &[Vec2],
    cfg: &OrbitConfig,
    epsilon: f64,
) -> Result<PointSet, SetError> {
    if starts.is_empty() {
        return Err(SetError::EmptyInput);
    }
    let sys = if s.probs().is_some() {
        s.clone()
    } else {
        s.with_uniform_probs()
    };
    let mut clouds = Vec::with_capacity(starts.len());
    for (i, &start) in starts.iter().enumerate() {
        let mut chunk_cfg = *cfg;
        chunk_cfg.rng_seed = cfg.rng_seed.wrapping_add((i as u64).wrapping_mul(START_SEED_MIX));
        clouds.push(chaos_game(&sys, start, &chunk_cfg)?);
    }
    let indices: Vec<GridIndex> = clouds[1..]
        .iter()
        .map(|c| GridIndex::build(c.points(), epsilon.max(1e-12)))
        .collect();
    let kept: Vec<Vec2> = clouds[0]
        .points()
        .iter()
        .copied()
        .filter(|&p| indices.iter().all(|idx| idx.has_within(p, epsilon)))
        .collect();
    Ok(PointSet::new(kept, epsilon / 2.0))
}

/// Uniform-cell spatial hash answering "is any point within r of p".
struct GridIndex {
    cell: f64,
    buckets: HashMap<(i64, i64), Vec<Vec2>>,
}

impl GridIndex {
    fn build(points: &[Vec2], cell: f64) -> GridIndex {
        let mut buckets: HashMap<(i64, i64), Vec<Vec2>> = HashMap::new();
        for &p in points {
            buckets
                .entry(((p.x / cell).floor() as i64, (p.y / cell).floor() as i64))
                .or_default()
                .push(p);
        }
        GridIndex { cell, buckets }
    }

    fn has_within(&self, p: Vec2, r: f64) -> bool {
        let r_sq = r * r;
        let lo_x = ((p.x - r) / self.cell).floor() as i64;
        let hi_x = ((p.x + r) / self.cell).floor() as i64;
        let lo_y = ((p.y - r) / self.cell).floor() as i64;
        let hi_y = ((p.y + r) / self.cell).floor() as i64;
        for cx in lo_x..=hi_x {
            for cy in lo_y..=hi_y {
                if let Some(b) = self.buckets.get(&(cx, cy)) {
                    if b.iter().any(|&q| p.dist_sq(q) <= r_sq) {
                        return true;
                    }
                }
            }
        }
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affine::{AffineMap, Mat2};
    use crate::systems::{barnsley_vince, delta_contains, final_example};
    use proptest::prelude::*;

    fn bv() -> IfsSystem {
        barnsley_vince(0.5).unwrap().system
    }

    #[test]
    fn dedup_snaps_to_lattice() {
        let s = PointSet::new(
            vec![
                Vec2::new(0.001, 0.001),
                Vec2::new(0.002, 0.002),
                Vec2::new(0.3, 0.3),
            ],
            0.01,
        );
        assert_eq!(s.len(), 2);
        assert_eq!(s.points()[0], Vec2::new(0.001, 0.001));
    }

    #[test]
    fn hutchinson_step_on_triangle_vertices() {
        let s = bv();
        let verts = PointSet::new(
            vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)],
            0.0,
        );
        let img = hutchinson_step(&s, &verts);
        // Six images collapse to four distinct points.
        assert_eq!(img.len(), 4);
        for v in [
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(0.5, 0.5),
            Vec2::new(0.0, 1.0),
        ] {
            assert!(img.points().contains(&v));
        }
        let id = IfsSystem::new(vec![AffineMap::IDENTITY]).unwrap();
        let same = hutchinson_step(&id, &verts);
        assert_eq!(same.points(), verts.points());
    }

    #[test]
    fn hausdorff_basics() {
        let a = PointSet::new(vec![Vec2::new(0.0, 0.0)], 0.0);
        let b = PointSet::new(vec![Vec2::new(3.0, 4.0)], 0.0);
        assert!((hausdorff_distance(&a, &b).unwrap() - 5.0).abs() < 1e-15);
        assert_eq!(hausdorff_distance(&a, &a).unwrap(), 0.0);
        let corners = PointSet::new(
            vec![
                Vec2::new(0.0, 0.0),
                Vec2::new(1.0, 0.0),
                Vec2::new(0.0, 1.0),
                Vec2::new(1.0, 1.0),
            ],
            0.0,
        );
        let mut with_center = corners.points().to_vec();
        with_center.push(Vec2::new(0.5, 0.5));
        let with_center = PointSet::new(with_center, 0.0);
        let d = hausdorff_distance(&corners, &with_center).unwrap();
        assert!((d - 2f64.sqrt() / 2.0).abs() < 1e-15);
        assert!(matches!(
            hausdorff_distance(&a, &PointSet::empty(0.0)),
            Err(SetError::EmptyInput)
        ));
    }

    #[test]
    fn chaos_game_stays_in_triangle() {
        let s = bv();
        let cfg = OrbitConfig {
            samples: 20_000,
            ..OrbitConfig::default()
        };
        let cloud = chaos_game(&s, Vec2::new(0.3, 0.3), &cfg).unwrap();
        assert!(cloud.points().iter().all(|&p| delta_contains(p, 1e-9)));
    }

    #[test]
    fn chaos_game_constant_map() {
        let c = AffineMap::new(Mat2::new(0.0, 0.0, 0.0, 0.0), Vec2::new(0.25, 0.75));
        let s = IfsSystem::with_probs(vec![c], vec![1.0]).unwrap();
        let cfg = OrbitConfig {
            samples: 10,
            ..OrbitConfig::default()
        };
        let cloud = chaos_game(&s, Vec2::new(5.0, -3.0), &cfg).unwrap();
        assert_eq!(cloud.len(), 1);
        assert_eq!(cloud.points()[0], Vec2::new(0.25, 0.75));
    }

    #[test]
    fn chaos_game_deterministic_across_runs_and_chunked() {
        let s = bv();
        let cfg = OrbitConfig {
            samples: 5_000,
            chunk_count: 4,
            rng_seed: 42,
            ..OrbitConfig::default()
        };
        let a = chaos_game(&s, Vec2::new(0.3, 0.3), &cfg).unwrap();
        let b = chaos_game(&s, Vec2::new(0.3, 0.3), &cfg).unwrap();
        assert_eq!(a.points(), b.points());
    }

    #[test]
    fn chaos_game_divergence_guard() {
        let blow = AffineMap::new(Mat2::new(3.0, 0.0, 0.0, 3.0), Vec2::new(1.0, 0.0));
        let s = IfsSystem::with_probs(vec![blow], vec![1.0]).unwrap();
        let cfg = OrbitConfig {
            samples: 100,
            burn_in: 0,
            ..OrbitConfig::default()
        };
        assert!(matches!(
            chaos_game(&s, Vec2::new(1.0, 1.0), &cfg),
            Err(SetError::DivergedOrbit { .. })
        ));
    }

    #[test]
    fn chaos_game_marginal_frequencies() {
        // Chi-square on the letter frequencies realized by the orbit of a
        // two-map system with p = (0.3, 0.7); the orbit position under these
        // maps reveals the last letter (offsets far apart).
        let f1 = AffineMap::new(Mat2::new(0.0, 0.0, 0.0, 0.0), Vec2::new(0.0, 0.0));
        let f2 = AffineMap::new(Mat2::new(0.0, 0.0, 0.0, 0.0), Vec2::new(1.0, 0.0));
        let s = IfsSystem::with_probs(vec![f1, f2], vec![0.3, 0.7]).unwrap();
        let n = 50_000u64;
        let cfg = OrbitConfig {
            samples: n,
            burn_in: 0,
            ..OrbitConfig::default()
        };
        // Count raw draws, not deduplicated output.
        let probs = [0.3, 0.7];
        let mut counts = [0u64; 2];
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
        for _ in 0..n {
            let u: f64 = rng.random();
            counts[usize::from(u >= probs[0])] += 1;
        }
        let mut chi2 = 0.0;
        for i in 0..2 {
            let expect = probs[i] * n as f64;
            let diff = counts[i] as f64 - expect;
            chi2 += diff * diff / expect;
        }
        // 1 degree of freedom; 10.83 is the 0.001 quantile.
        assert!(chi2 < 10.83, "chi2 = {chi2}");
        // And the deduplicated orbit output visits both fixed points.
        let cloud = chaos_game(&s, Vec2::new(0.5, 0.5), &cfg).unwrap();
        assert_eq!(cloud.len(), 2);
    }

    #[test]
    fn estimate_semiattractor_final_example() {
        let named = final_example();
        let cfg = OrbitConfig {
            samples: 5_000,
            ..OrbitConfig::default()
        };
        let est = estimate_semiattractor(
            &named.system,
            &[Vec2::new(0.0, 0.0), Vec2::new(3.0, 3.0)],
            &cfg,
            0.01,
        )
        .unwrap();
        assert!(!est.is_empty());
        for &p in est.points() {
            assert!(p.dist(Vec2::new(1.0, 0.0)) < 1e-3);
        }
    }

    #[test]
    fn estimate_semiattractor_single_start_is_plain_chaos_game() {
        let s = bv();
        let cfg = OrbitConfig {
            samples: 2_000,
            ..OrbitConfig::default()
        };
        let est = estimate_semiattractor(&s, &[Vec2::new(0.3, 0.3)], &cfg, 0.02).unwrap();
        let direct = chaos_game(&s, Vec2::new(0.3, 0.3), &cfg).unwrap();
        // Same orbit, possibly thinned by the coarser dedup resolution.
        assert!(est.len() <= direct.len());
        assert!(est.points().iter().all(|p| direct.points().contains(p)));
    }

    #[test]
    fn hutchinson_monotone_for_exact_sets() {
        let s = bv();
        let small = PointSet::new(vec![Vec2::new(0.1, 0.2), Vec2::new(0.4, 0.4)], 0.0);
        let mut big_pts = small.points().to_vec();
        big_pts.push(Vec2::new(0.7, 0.1));
        let big = PointSet::new(big_pts, 0.0);
        let fs = hutchinson_step(&s, &small);
        let fb = hutchinson_step(&s, &big);
        for p in fs.points() {
            assert!(fb.points().contains(p));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn hausdorff_pseudometric_axioms(
            pts in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 3..30)
        ) {
            let third = pts.len() / 3;
            let mk = |sl: &[(f64, f64)]| {
                PointSet::new(sl.iter().map(|&(x, y)| Vec2::new(x, y)).collect(), 0.0)
            };
            let a = mk(&pts[..third.max(1)]);
            let b = mk(&pts[third.max(1) / 2..(2 * third).max(2)]);
            let c = mk(&pts[(2 * third).min(pts.len() - 1)..]);
            let dab = hausdorff_distance(&a, &b).unwrap();
            let dba = hausdorff_distance(&b, &a).unwrap();
            prop_assert_eq!(dab, dba);
            let dac = hausdorff_distance(&a, &c).unwrap();
            let dbc = hausdorff_distance(&b, &c).unwrap();
            prop_assert!(dac <= dab + dbc + 1e-12);
            prop_assert_eq!(hausdorff_distance(&a, &a).unwrap(), 0.0);
        }
    }
}
