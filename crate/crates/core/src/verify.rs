//! Self-checking verification suite: recomputes every headline quantity of
//! the bundled example systems and compares it against its closed-form or
//! independently derived reference at a pinned tolerance.

use crate::affine::{AffineMap, Mat2, Vec2};
use crate::fibres::{
    classify_fibre, fibre_sequence, strongly_fibred_report, Address, FibreClass,
    DEFAULT_COLLINEARITY_TOL, DEFAULT_POINT_TOL,
};
use crate::ifs::IfsSystem;
use crate::measure::{
    iterate_to_invariance, iterate_to_invariance_with, GridMeasure, DEFAULT_BOUNDS,
};
use crate::points::{
    chaos_game, estimate_semiattractor, hausdorff_distance, OrbitConfig, PointSet,
};
use crate::polygon::ConvexPolygon;
use crate::systems::{barnsley_vince, constants, delta_contains, delta_polygon, delta_raster,
    final_example};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Suite scale: `Quick` trims sample counts and grid sizes for fast runs,
/// `Full` runs everything at the sizes the checks are specified at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Quick,
    Full,
}

impl std::str::FromStr for Scale {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "quick" => Ok(Scale::Quick),
            "full" => Ok(Scale::Full),
            other => Err(format!("unknown scale {other:?}, expected quick or full")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub id: String,
    pub description: String,
    pub pass: bool,
    pub details: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub scale: String,
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn write_text<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        for c in &self.checks {
            writeln!(
                w,
                "{} {}: {} ({})",
                if c.pass { "PASS" } else { "FAIL" },
                c.id,
                c.description,
                c.details
            )?;
        }
        let (ok, total) = (
            self.checks.iter().filter(|c| c.pass).count(),
            self.checks.len(),
        );
        writeln!(w, "{ok}/{total} checks passed ({} scale)", self.scale)
    }
}

/// Runs the whole suite.
pub fn verify_all(scale: Scale) -> VerifyReport {
    verify_all_with_fault(scale, None)
}

/// Runs the suite, optionally corrupting the reference constant of the
/// check with the given id. The corrupted check must come out FAIL; this is
/// the negative control proving the comparisons are live.
pub fn verify_all_with_fault(scale: Scale, fault: Option<&str>) -> VerifyReport {
    let v = Verifier {
        scale,
        fault: fault.map(str::to_owned),
    };
    let checks = vec![
        v.check_lipschitz_constants(),
        v.check_second_iterate_average(),
        v.check_critical_probability(),
        v.check_determinant_and_area_law(),
        v.check_matrix_power_closed_form(),
        v.check_fibre_witnesses(),
        v.check_contractive_word_report(),
        v.check_chaos_game_support(),
        v.check_semiattractor_from_outside(),
        v.check_uniform_invariance_residual(),
        v.check_asymptotic_stability(),
        v.check_final_example(),
        v.check_second_iterate_consistency(),
        v.check_property_suites(),
    ];
    VerifyReport {
        scale: match scale {
            Scale::Quick => "quick".into(),
            Scale::Full => "full".into(),
        },
        checks,
    }
}

struct Verifier {
    scale: Scale,
    fault: Option<String>,
}

impl Verifier {
    fn samples(&self) -> u64 {
        match self.scale {
            Scale::Quick => 20_000,
            Scale::Full => 100_000,
        }
    }

    fn big_grid(&self) -> usize {
        match self.scale {
            Scale::Quick => 128,
            Scale::Full => 256,
        }
    }

    fn residual_grids(&self) -> &'static [usize] {
        match self.scale {
            Scale::Quick => &[64, 128],
            Scale::Full => &[64, 128, 256],
        }
    }

    /// Reference constant for a check, perturbed when this check is the
    /// designated fault target.
    fn reference(&self, id: &str, value: f64) -> f64 {
        if self.fault.as_deref() == Some(id) {
            value + 1e-3
        } else {
            value
        }
    }

    fn result(&self, id: &str, description: &str, pass: bool, details: String) -> CheckResult {
        CheckResult {
            id: id.into(),
            description: description.into(),
            pass,
            details,
        }
    }

    fn bv(&self) -> IfsSystem {
        barnsley_vince(0.5).expect("valid probability").system
    }

    fn check_lipschitz_constants(&self) -> CheckResult {
        const ID: &str = "lipschitz-constants";
        let s = self.bv();
        let via2 = self.reference(ID, constants::second_iterate_lip_via_2());
        let via1 = self.reference(ID, constants::second_iterate_lip_via_1());
        let mut worst: f64 = 0.0;
        for f in s.maps() {
            worst = worst.max((f.compose(&s.maps()[1]).lipschitz() - via2).abs());
            worst = worst.max((f.compose(&s.maps()[0]).lipschitz() - via1).abs());
        }
        self.result(
            ID,
            "second-iterate word norms match their closed forms",
            worst <= 1e-12,
            format!("max |measured - exact| = {worst:.3e}, tol 1e-12"),
        )
    }

    fn check_second_iterate_average(&self) -> CheckResult {
        const ID: &str = "second-iterate-average";
        let s = self.bv();
        let avg = s.average_contractivity(2).expect("probs present");
        let expect = self.reference(ID, constants::second_iterate_average());
        let dev = (avg - expect).abs();
        let sum = 4.0 * avg;
        self.result(
            ID,
            "second iterate is contractive on average",
            dev <= 1e-9 && sum < 4.0,
            format!("average = {avg:.12}, closed form dev {dev:.3e} (tol 1e-9), word-norm sum = {sum:.6} < 4"),
        )
    }

    fn check_critical_probability(&self) -> CheckResult {
        const ID: &str = "critical-probability";
        let s = self.bv();
        let p = s
            .critical_probability(2)
            .expect("two maps")
            .expect("threshold exists");
        let expect = self.reference(ID, constants::critical_p1());
        let dev = (p - expect).abs();
        self.result(
            ID,
            "bisection threshold for p1 matches the closed form",
            dev <= 1e-8,
            format!("p1 = {p:.10}, closed form dev {dev:.3e}, tol 1e-8"),
        )
    }

    fn check_determinant_and_area_law(&self) -> CheckResult {
        const ID: &str = "determinant-and-area-law";
        let s = self.bv();
        let expect_det = self.reference(ID, 0.5);
        let dets_ok = s
            .maps()
            .iter()
            .all(|f| f.linear.determinant() == expect_det);
        let mut worst_rel: f64 = 0.0;
        for address in [Address::constant(1), Address::constant(2), Address::parse("12:21").unwrap()] {
            let seq = fibre_sequence(&s, &delta_polygon(), &address, 40).expect("invariant");
            for approx in seq {
                let expect = 0.5f64.powi(approx.depth as i32) * 0.5;
                worst_rel = worst_rel.max((approx.area - expect).abs() / expect);
            }
        }
        self.result(
            ID,
            "determinants are 1/2 and fibre areas halve per depth",
            dets_ok && worst_rel <= 1e-10,
            format!("det exact: {dets_ok}, max relative area error {worst_rel:.3e}, tol 1e-10"),
        )
    }

    fn check_matrix_power_closed_form(&self) -> CheckResult {
        const ID: &str = "matrix-power-closed-form";
        let a1 = self.bv().maps()[0].linear;
        let mut worst: f64 = 0.0;
        for n in 1..=40u32 {
            let p = a1.power(n);
            let sc = self.reference(ID, 0.5f64.powi(n as i32));
            let expect = Mat2::new(1.0, 1.0 - sc, 0.0, sc);
            for (a, b) in [
                (p.a11, expect.a11),
                (p.a12, expect.a12),
                (p.a21, expect.a21),
                (p.a22, expect.a22),
            ] {
                worst = worst.max((a - b).abs());
            }
        }
        self.result(
            ID,
            "powers of the first linear part match the closed form",
            worst <= 1e-12,
            format!("max entry deviation over n = 1..40: {worst:.3e}, tol 1e-12"),
        )
    }

    fn check_fibre_witnesses(&self) -> CheckResult {
        const ID: &str = "fibre-witnesses";
        let s = self.bv();
        let delta = delta_polygon();
        let seg_lo = Vec2::new(self.reference(ID, 0.0), 0.0);
        let seg_hi = Vec2::new(1.0, 0.0);
        let point = Vec2::new(0.25, 0.5);

        let seq1 = fibre_sequence(&s, &delta, &Address::constant(1), 40).expect("invariant");
        let class1 = classify_fibre(&seq1, DEFAULT_POINT_TOL, DEFAULT_COLLINEARITY_TOL);
        let (seg_ok, seg_detail) = match class1 {
            FibreClass::Segment(a, b) => {
                let (lo, hi) = if a.x <= b.x { (a, b) } else { (b, a) };
                let d = lo.dist(seg_lo).max(hi.dist(seg_hi));
                (d <= 1e-6, format!("segment endpoint dev {d:.3e}"))
            }
            ref other => (false, format!("address 1:1 classified {other:?}")),
        };
        let seq2 = fibre_sequence(&s, &delta, &Address::constant(2), 40).expect("invariant");
        let class2 = classify_fibre(&seq2, DEFAULT_POINT_TOL, DEFAULT_COLLINEARITY_TOL);
        let (pt_ok, pt_detail) = match class2 {
            FibreClass::Point(p) => {
                let d = p.dist(point);
                (d <= 1e-6, format!("point dev {d:.3e}"))
            }
            ref other => (false, format!("address 2:2 classified {other:?}")),
        };
        self.result(
            ID,
            "constant addresses classify as the known segment and point",
            seg_ok && pt_ok,
            format!("{seg_detail}; {pt_detail}; tol 1e-6"),
        )
    }

    fn check_contractive_word_report(&self) -> CheckResult {
        const ID: &str = "contractive-word-report";
        let s = self.bv();
        let expect_lip = self.reference(ID, constants::second_iterate_lip_via_2());
        let word_ok = match s.find_contractive_word(2) {
            Some((w, lip)) => w.letters() == [2, 2] && (lip - expect_lip).abs() <= 1e-12,
            None => false,
        };
        let report = strongly_fibred_report(&s, &delta_polygon(), 2).expect("invariant");
        let witness_ok = report
            .strongly_fibred
            .as_ref()
            .is_some_and(|w| w.point.dist(Vec2::new(0.25, 0.5)) <= 1e-9);
        self.result(
            ID,
            "contractive word 22 certifies strong fibredness, segment fibre rules out point fibredness",
            word_ok && witness_ok && report.point_fibred_falsified,
            format!(
                "word found: {word_ok}, singleton witness: {witness_ok}, point-fibred falsified: {}",
                report.point_fibred_falsified
            ),
        )
    }

    fn orbit_cfg(&self) -> OrbitConfig {
        OrbitConfig {
            burn_in: 100,
            samples: self.samples(),
            rng_seed: 0,
            chunk_count: 1,
        }
    }

    fn check_chaos_game_support(&self) -> CheckResult {
        const ID: &str = "chaos-game-support";
        let s = self.bv();
        let cloud = chaos_game(&s, Vec2::new(0.3, 0.3), &self.orbit_cfg()).expect("orbit bounded");
        let inside_tol = self.reference(ID, 0.0) + 1e-9;
        let inside = cloud.points().iter().all(|&p| delta_contains(p, inside_tol));
        let d = hausdorff_distance(&cloud, &delta_raster(0.01)).expect("nonempty");
        self.result(
            ID,
            "chaos-game orbit stays in the triangle and fills it",
            inside && d <= 0.02,
            format!(
                "{} samples, all inside (tol 1e-9): {inside}, Hausdorff to raster = {d:.4} <= 0.02",
                cloud.len()
            ),
        )
    }

    fn outside_starts() -> [Vec2; 3] {
        [Vec2::new(0.3, 0.3), Vec2::new(5.0, 5.0), Vec2::new(-2.0, 1.0)]
    }

    fn check_semiattractor_from_outside(&self) -> CheckResult {
        const ID: &str = "semiattractor-from-outside";
        let s = self.bv();
        let est = estimate_semiattractor(&s, &Self::outside_starts(), &self.orbit_cfg(), 0.02)
            .expect("orbits bounded");
        let d = hausdorff_distance(&est, &delta_raster(0.01)).expect("nonempty");
        let bound = self.reference(ID, 0.05);
        self.result(
            ID,
            "semiattractor estimate from far starting points recovers the triangle",
            d <= bound,
            format!("{} points kept, Hausdorff to raster = {d:.4} <= 0.05", est.len()),
        )
    }

    fn check_uniform_invariance_residual(&self) -> CheckResult {
        const ID: &str = "uniform-invariance-residual";
        let s = self.bv();
        let delta = delta_polygon();
        let mut residuals = Vec::new();
        for &m in self.residual_grids() {
            let mu = GridMeasure::uniform_on_polygon(&delta, DEFAULT_BOUNDS, m).expect("in bounds");
            let stepped = mu.markov_step(&s).expect("probs present");
            residuals.push(stepped.total_variation(&mu).expect("same grid"));
        }
        let last = *residuals.last().expect("grids nonempty");
        let decreasing = residuals.windows(2).all(|w| w[1] < w[0]);
        let halving = residuals.windows(2).all(|w| w[1] <= 0.75 * w[0]);
        let bound = self.reference(ID, 0.02);
        self.result(
            ID,
            "one-step residual of the uniform triangle measure is discretisation error",
            decreasing && halving && last <= bound,
            format!(
                "residuals {residuals:?} on grids {:?}; final <= 0.02, each <= 0.75x previous",
                self.residual_grids()
            ),
        )
    }

    fn check_asymptotic_stability(&self) -> CheckResult {
        const ID: &str = "asymptotic-stability";
        let s = self.bv();
        let m = self.big_grid();
        let reference_measure =
            GridMeasure::uniform_on_polygon(&delta_polygon(), DEFAULT_BOUNDS, m).expect("in bounds");
        let from_point = GridMeasure::point_mass(DEFAULT_BOUNDS, m, Vec2::new(0.3, 0.3))
            .expect("inside bounds");
        let (limit_a, rep_a) =
            iterate_to_invariance(&s, &from_point, 1e-3, 500).expect("valid run");
        let tv_a = limit_a.total_variation(&reference_measure).expect("same grid");
        // Mass spread over the whole box partly leaves it before settling on
        // the triangle, so this run conditions on the retained mass.
        let from_uniform = GridMeasure::uniform(DEFAULT_BOUNDS, m);
        let (limit_b, rep_b) =
            iterate_to_invariance_with(&s, &from_uniform, 1e-3, 500, true).expect("valid run");
        let tv_b = limit_b.total_variation(&reference_measure).expect("same grid");
        let bound = self.reference(ID, 0.05);
        self.result(
            ID,
            "Markov iteration reaches the uniform triangle measure from unrelated starts",
            tv_a <= bound && tv_b <= bound && rep_a.converged && rep_b.converged,
            format!(
                "TV from point mass {tv_a:.4} ({} iters), from uniform-on-bounds {tv_b:.4} ({} iters, escaped {:.3}), bound 0.05",
                rep_a.iterations, rep_b.iterations, rep_b.escaped_total
            ),
        )
    }

    fn check_final_example(&self) -> CheckResult {
        const ID: &str = "final-example";
        let named = final_example();
        let s = &named.system;
        let expect_lips = [1.0, 0.5, 0.5, self.reference(ID, 1.0)];
        let lips: Vec<f64> = s
            .iterate_system(2)
            .expect("small")
            .maps()
            .iter()
            .map(AffineMap::lipschitz)
            .collect();
        let lips_ok = lips
            .iter()
            .zip(expect_lips)
            .all(|(a, b)| (a - b).abs() <= 1e-12);
        let cfg = OrbitConfig {
            samples: 5_000,
            ..self.orbit_cfg()
        };
        let est = estimate_semiattractor(
            s,
            &[Vec2::new(0.0, 0.0), Vec2::new(3.0, 3.0)],
            &cfg,
            0.01,
        )
        .expect("orbits bounded");
        let target = PointSet::new(vec![Vec2::new(1.0, 0.0)], 0.0);
        let d_est = hausdorff_distance(&est, &target).expect("nonempty");
        let square = ConvexPolygon::from_points(&[
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(0.0, 1.0),
        ])
        .expect("valid polygon");
        let m = self.big_grid();
        let mu0 = GridMeasure::uniform_on_polygon(&square, DEFAULT_BOUNDS, m).expect("in bounds");
        let (limit, _) = iterate_to_invariance(s, &mu0, 1e-3, 500).expect("valid run");
        let near_mass = limit.mass_within(Vec2::new(1.0, 0.0), 0.05);
        self.result(
            ID,
            "axis-collapse system: word norms, singleton semiattractor, Dirac limit",
            lips_ok && d_est <= 1e-3 && near_mass >= 0.99,
            format!(
                "second-iterate norms {lips:?}; semiattractor Hausdorff {d_est:.2e} <= 1e-3; mass within 0.05 of (1,0): {near_mass:.4} >= 0.99"
            ),
        )
    }

    fn check_second_iterate_consistency(&self) -> CheckResult {
        const ID: &str = "second-iterate-consistency";
        let s = self.bv();
        let s2 = s.iterate_system(2).expect("small");
        let eps = 0.02;
        let cfg = self.orbit_cfg();
        let est1 = estimate_semiattractor(&s, &Self::outside_starts(), &cfg, eps)
            .expect("orbits bounded");
        let est2 = estimate_semiattractor(&s2, &Self::outside_starts(), &cfg, eps)
            .expect("orbits bounded");
        let d = hausdorff_distance(&est1, &est2).expect("nonempty");
        let bound = self.reference(ID, 3.0 * eps);
        self.result(
            ID,
            "semiattractor estimates of the system and its second iterate coincide",
            d <= bound,
            format!("Hausdorff between estimates = {d:.4} <= {bound}"),
        )
    }

    fn check_property_suites(&self) -> CheckResult {
        const ID: &str = "property-suites";
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rand_mat =
            |r: &mut ChaCha8Rng| Mat2::new(
                r.random_range(-2.0..2.0),
                r.random_range(-2.0..2.0),
                r.random_range(-2.0..2.0),
                r.random_range(-2.0..2.0),
            );

        // Spectral norm against two independent routes: the direction-search
        // supremum (random unit vectors plus local refinement) and adaptive
        // power iteration on A^T A.
        let mut worst_dir: f64 = 0.0;
        let mut worst_pow: f64 = 0.0;
        for _ in 0..1000 {
            let m = rand_mat(&mut rng);
            let norm = m.spectral_norm();
            let denom = norm.max(1e-9);
            worst_dir = worst_dir.max((norm - direction_search_norm(m, &mut rng)).abs() / denom);
            worst_pow = worst_pow.max((norm - power_iteration_norm(m)).abs() / denom);
        }
        let spectral_tol = self.reference(ID, 1e-10);
        let spectral_ok = worst_dir <= spectral_tol && worst_pow <= spectral_tol;

        // Composition homomorphisms.
        let mut comp_ok = true;
        for _ in 0..200 {
            let f = AffineMap::new(rand_mat(&mut rng), Vec2::new(rng.random(), rng.random()));
            let g = AffineMap::new(rand_mat(&mut rng), Vec2::new(rng.random(), rng.random()));
            let v = Vec2::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            comp_ok &= f.compose(&g).apply(v).dist(f.apply(g.apply(v))) <= 1e-12;
            comp_ok &= (f.compose(&g).linear.determinant()
                - f.linear.determinant() * g.linear.determinant())
            .abs()
                <= 1e-12;
            comp_ok &= f.compose(&g).lipschitz() <= f.lipschitz() * g.lipschitz() + 1e-12;
        }

        // Hausdorff pseudometric axioms on random triples.
        let mut haus_ok = true;
        for _ in 0..50 {
            let cloud = |r: &mut ChaCha8Rng| {
                let n = r.random_range(1..12);
                PointSet::new(
                    (0..n)
                        .map(|_| Vec2::new(r.random_range(-5.0..5.0), r.random_range(-5.0..5.0)))
                        .collect(),
                    0.0,
                )
            };
            let (a, b, c) = (cloud(&mut rng), cloud(&mut rng), cloud(&mut rng));
            let dab = hausdorff_distance(&a, &b).expect("nonempty");
            haus_ok &= dab == hausdorff_distance(&b, &a).expect("nonempty");
            haus_ok &= hausdorff_distance(&a, &a).expect("nonempty") == 0.0;
            haus_ok &= hausdorff_distance(&a, &c).expect("nonempty")
                <= dab + hausdorff_distance(&b, &c).expect("nonempty") + 1e-12;
        }

        // Markov mass conservation.
        let s = self.bv();
        let mut mu = GridMeasure::uniform(DEFAULT_BOUNDS, 64);
        let mut mass_ok = true;
        for _ in 0..10 {
            mu = mu.markov_step(&s).expect("probs present");
            mass_ok &= (mu.total_mass() - 1.0).abs() <= 1e-12;
        }

        self.result(
            ID,
            "spectral-norm oracles, Hausdorff axioms, mass conservation, homomorphisms",
            spectral_ok && comp_ok && haus_ok && mass_ok,
            format!(
                "spectral dev: direction {worst_dir:.2e} / power {worst_pow:.2e} (tol 1e-10); composition {comp_ok}, Hausdorff {haus_ok}, mass {mass_ok}"
            ),
        )
    }
}

/// Supremum of `|A u|` over random unit directions, refined by ternary
/// search around the best sample (`|A u(t)|^2` is a sinusoid in `2t`, so the
/// refinement converges to the true maximum).
fn direction_search_norm(m: Mat2, rng: &mut ChaCha8Rng) -> f64 {
    let eval = |t: f64| m.mul_vec(Vec2::new(t.cos(), t.sin())).norm();
    let mut best_t = 0.0;
    let mut best = eval(0.0);
    for _ in 0..10_000 {
        let t = rng.random_range(0.0..std::f64::consts::PI);
        let v = eval(t);
        if v > best {
            best = v;
            best_t = t;
        }
    }
    let mut lo = best_t - 0.01;
    let mut hi = best_t + 0.01;
    for _ in 0..200 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if eval(m1) < eval(m2) {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    eval(0.5 * (lo + hi)).max(best)
}

/// Adaptive power iteration on `A^T A` with a Rayleigh-quotient estimate;
/// runs until the estimate stops moving so that nearly degenerate singular
/// values still converge.
fn power_iteration_norm(m: Mat2) -> f64 {
    let b = Mat2::new(
        m.a11 * m.a11 + m.a21 * m.a21,
        m.a11 * m.a12 + m.a21 * m.a22,
        m.a12 * m.a11 + m.a22 * m.a21,
        m.a12 * m.a12 + m.a22 * m.a22,
    );
    let mut v = Vec2::new(0.6, 0.8);
    let mut prev = 0.0;
    let mut stable = 0;
    for _ in 0..20_000_000u64 {
        let w = b.mul_vec(v);
        let n = w.norm();
        if n == 0.0 {
            return 0.0;
        }
        v = w * (1.0 / n);
        let bv = b.mul_vec(v);
        let rq = v.x * bv.x + v.y * bv.y;
        if (rq - prev).abs() <= f64::EPSILON * rq {
            stable += 1;
            if stable >= 3 {
                return rq.sqrt();
            }
        } else {
            stable = 0;
        }
        prev = rq;
    }
    prev.sqrt()
}
