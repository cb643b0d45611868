//! Invariants over randomized measures, plus brute-force cross-checks of
//! the family-based sweeps against the measure primitives.

mod common;

use common::{close, rng, setup};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::Rng;
use rbmo_core::cauchy::{self, TruncationGrid};
use rbmo_core::coefficients::{doubling_companion, is_doubling, k_coeff, NestedCubePair};
use rbmo_core::cz::{besicovich_cover, cz_decompose};
use rbmo_core::generators::{cantor4, hotspot, segment};
use rbmo_core::maximal;
use rbmo_core::measure::{AnalysisContext, ComplexFunction, Cube, DiscreteMeasure, FunctionOnSupport};
use rbmo_core::norms::{self, validate_block};
use rbmo_core::sweeps::{random_block, random_function, random_measure, random_planar};

fn cfg(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, ..ProptestConfig::default() }
}

fn measure_strategy() -> impl Strategy<Value = DiscreteMeasure> {
    (1usize..=3, 2usize..40).prop_flat_map(|(d, n)| {
        (
            prop::collection::vec(prop::collection::vec(-1.0f64..1.0, d), n),
            prop::collection::vec(0.01f64..2.0, n),
            0.001f64..0.1,
        )
            .prop_filter_map("distinct points", move |(pts, ms, r)| DiscreteMeasure::new(d, pts, ms, r).ok())
    })
}

fn naive_members(mu: &DiscreteMeasure, q: &Cube) -> Vec<usize> {
    (0..mu.len()).filter(|&i| q.contains(mu.point(i))).collect()
}

// ---------------------------------------------------------------- measure

proptest! {
    #![proptest_config(cfg(64))]

    #[test]
    fn cube_members_match_naive(mu in measure_strategy(), i in 0usize..1000, side in 0.01f64..3.0) {
        let x = mu.point(i % mu.len()).to_vec();
        let q = Cube::new(x, side);
        prop_assert_eq!(mu.cube_members(&q), naive_members(&mu, &q));
    }

    #[test]
    fn masses_monotone(mu in measure_strategy(), i in 0usize..1000, r in 0.001f64..2.0, s in 1.0f64..4.0) {
        let x = mu.point(i % mu.len()).to_vec();
        prop_assert!(mu.ball_mass(&x, r) <= mu.ball_mass(&x, r * s));
        let q = Cube::new(x.clone(), r);
        prop_assert!(mu.cube_mass(&q) <= mu.cube_mass(&q.dilate(s)));
        let ball = mu.ball_mass(&x, r * (mu.dim() as f64).sqrt() / 2.0 * (1.0 + 1e-12));
        prop_assert!(mu.cube_mass(&q) <= ball);
    }

    #[test]
    fn growth_certificate(mu in measure_strategy()) {
        let c0 = mu.growth_constant(1).unwrap();
        for i in 0..mu.len() {
            for j in 0..mu.len() {
                let r = rbmo_core::measure::dist(mu.point(i), mu.point(j)).max(mu.r_min());
                prop_assert!(mu.ball_mass(mu.point(i), r) <= c0 * r * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn mean_is_affine(mu in measure_strategy(), a in -3.0f64..3.0, b in -3.0f64..3.0, seed in any::<u64>()) {
        let mut r = rng(seed);
        let f = FunctionOnSupport::new((0..mu.len()).map(|_| r.gen_range(-1.0..1.0)).collect());
        let g = FunctionOnSupport::new((0..mu.len()).map(|_| r.gen_range(-1.0..1.0)).collect());
        let h = FunctionOnSupport::new((0..mu.len()).map(|i| a * f.values[i] + b * g.values[i]).collect());
        let q = Cube::new(mu.point(0).to_vec(), 1.0);
        let lhs = mu.mean(&h, &q).unwrap();
        let rhs = a * mu.mean(&f, &q).unwrap() + b * mu.mean(&g, &q).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + a.abs() + b.abs()));
    }
}

// ---------------------------------------------------------------- coefficients

proptest! {
    #![proptest_config(cfg(48))]

    #[test]
    fn k_laws_on_concentric_triples(seed in any::<u64>(), d in 1usize..=2, n in 20usize..80) {
        let mut r = rng(seed);
        let mu = random_measure(&mut r, d, n);
        let ctx = AnalysisContext::for_measure(&mu, 1).unwrap();
        let x = mu.point(r.gen_range(0..mu.len())).to_vec();
        let l = mu.r_min() * 2f64.powi(r.gen_range(0..5));
        let (a, b) = (r.gen_range(0..4), r.gen_range(0..4));
        let q = Cube::new(x.clone(), l);
        let rr = Cube::new(x.clone(), l * 2f64.powi(a));
        let s = Cube::new(x, l * 2f64.powi(a + b));
        let k = |i: &Cube, o: &Cube| k_coeff(&mu, &ctx, &NestedCubePair::new(i.clone(), o.clone()).unwrap()).unwrap();
        prop_assert_eq!(k(&q, &q), 1.0);
        prop_assert!(k(&q, &rr) >= 1.0);
        prop_assert!(k(&q, &rr) <= k(&q, &s));
        if a <= 1 {
            prop_assert!(k(&q, &rr) <= 1.0 + 2.0 * ctx.c0 * 2.0 * (1.0 + 1e-12));
        }
    }

    #[test]
    fn companion_contains_and_fixes_doubling(seed in any::<u64>(), side in 0.01f64..1.0) {
        let mut r = rng(seed);
        let mu = random_measure(&mut r, 2, 60);
        let ctx = AnalysisContext::for_measure(&mu, 1).unwrap();
        let q = Cube::new(mu.point(r.gen_range(0..60)).to_vec(), side);
        let c = doubling_companion(&mu, &ctx, &q).unwrap();
        prop_assert!(q.inside(&c));
        if is_doubling(&mu, &q, 2.0, ctx.beta_d) {
            prop_assert_eq!(c, q);
        }
    }
}

// ---------------------------------------------------------------- norms

/// rbmo_star straight from the definition over the same family.
fn naive_star(s: &common::Setup) -> f64 {
    let (mu, ctx, fam, f) = (&s.mu, &s.ctx, &s.fam, &s.f);
    let mut best: f64 = 0.0;
    for id in fam.ids() {
        let q = fam.cube(mu, id);
        let tilde = fam.cube(mu, fam.companion(id));
        let m = mu.mean(f, &tilde).unwrap();
        let osc: f64 = mu.cube_members(&q).iter().map(|&i| (f.values[i] - m).abs() * mu.mass(i)).sum();
        best = best.max(osc / mu.cube_mass(&q.dilate(ctx.rho)));
    }
    for (qi, ri) in fam.pairs(mu) {
        if !fam.is_doubling(qi) || !fam.is_doubling(ri) {
            continue;
        }
        let pair = fam.nested_pair(mu, qi, ri).unwrap();
        let k = k_coeff(mu, ctx, &pair).unwrap();
        if k > ctx.p0 {
            continue;
        }
        let d = (mu.mean(f, &pair.inner).unwrap() - mu.mean(f, &pair.outer).unwrap()).abs();
        best = best.max(d / k);
    }
    best
}

fn naive_bmo(s: &common::Setup, rho: f64) -> f64 {
    let (mu, fam, f) = (&s.mu, &s.fam, &s.f);
    let mut best: f64 = 0.0;
    for q in fam.cubes(mu) {
        let m = mu.mean(f, &q).unwrap();
        let osc: f64 = mu.cube_members(&q).iter().map(|&i| (f.values[i] - m).abs() * mu.mass(i)).sum();
        best = best.max(osc / mu.cube_mass(&q.dilate(rho)));
    }
    best
}

proptest! {
    #![proptest_config(cfg(32))]

    #[test]
    fn norms_match_brute_force(seed in any::<u64>(), d in 1usize..=2, n in 5usize..40) {
        let s = setup(seed, d, n);
        let star = norms::rbmo_star(&s.mu, &s.ctx, &s.f, &s.fam).unwrap().value;
        prop_assert!(close(star, naive_star(&s), 1e-9), "{} vs {}", star, naive_star(&s));
        for rho in [2.0, 5.0] {
            let b = norms::bmo_rho(&s.mu, &s.f, &s.fam, rho).unwrap().value;
            prop_assert!(close(b, naive_bmo(&s, rho), 1e-9));
        }
    }

    #[test]
    fn family_companions_agree(seed in any::<u64>(), d in 1usize..=2, n in 5usize..40) {
        let s = setup(seed, d, n);
        for id in s.fam.ids() {
            let q = s.fam.cube(&s.mu, id);
            let c = s.fam.cube(&s.mu, s.fam.companion(id));
            prop_assert!(q.inside(&c));
            prop_assert_eq!(s.fam.is_doubling(id), is_doubling(&s.mu, &q, 2.0, s.ctx.beta_d));
        }
    }

    #[test]
    fn norms_are_seminorms(seed in any::<u64>(), d in 1usize..=2, n in 5usize..40, c in -5.0f64..5.0, t in 0.1f64..10.0) {
        let s = setup(seed, d, n);
        let shifted = s.f.map(|v| v + c);
        let scaled = s.f.map(|v| t * v);
        type Norm = fn(&common::Setup, &FunctionOnSupport) -> f64;
        let all: [Norm; 5] = [
            |s, f| norms::rbmo_star(&s.mu, &s.ctx, f, &s.fam).unwrap().value,
            |s, f| norms::rbmo_doublestar(&s.mu, &s.ctx, f, &s.fam).unwrap().value,
            |s, f| norms::circ_norm(&s.mu, &s.ctx, f, &s.fam).unwrap().value,
            |s, f| norms::rbmo_p(&s.mu, &s.ctx, f, &s.fam, 2.0).unwrap().value,
            |s, f| norms::bmo_rho(&s.mu, f, &s.fam, 2.0).unwrap().value,
        ];
        for norm in all {
            let base = norm(&s, &s.f);
            let tol = 1e-9 * (1.0 + c.abs()) * s.f.sup_norm().max(1.0);
            prop_assert!((norm(&s, &shifted) - base).abs() <= tol);
            prop_assert!(close(norm(&s, &scaled), t * base, 1e-9) || base < 1e-12);
        }
    }

    #[test]
    fn bmo_below_twice_star(seed in any::<u64>(), d in 1usize..=2, n in 5usize..40) {
        let s = setup(seed, d, n);
        let star = norms::rbmo_star(&s.mu, &s.ctx, &s.f, &s.fam).unwrap().value;
        let b = norms::bmo_rho(&s.mu, &s.f, &s.fam, s.ctx.rho).unwrap().value;
        prop_assert!(b <= 2.0 * star * (1.0 + 1e-12) + 1e-15);
    }

    #[test]
    fn jn_tail_shape(seed in any::<u64>(), d in 1usize..=2, n in 5usize..60) {
        let s = setup(seed, d, n);
        let q = s.mu.whole_cube().unwrap();
        let lams: Vec<f64> = (1..30).map(|k| k as f64 * 0.05).collect();
        let tail = norms::jn_tail(&s.mu, &s.ctx, &s.f, &q, &lams).unwrap();
        let zero = norms::jn_tail(&s.mu, &s.ctx, &s.f, &q, &[1e-300]).unwrap()[0].1;
        prop_assert!(zero * s.mu.cube_mass(&q.dilate(s.ctx.rho)) <= s.mu.cube_mass(&q) * (1.0 + 1e-12));
        prop_assert!(tail.iter().all(|t| t.1 <= 1.0));
        prop_assert!(tail.windows(2).all(|w| w[1].1 <= w[0].1));
    }

    #[test]
    fn median_splits_mass(seed in any::<u64>(), d in 1usize..=2, n in 2usize..40) {
        let s = setup(seed, d, n);
        let q = s.mu.whole_cube().unwrap();
        let m = norms::alpha_median(&s.mu, &s.f, &q).unwrap();
        let total = s.mu.total_mass();
        let below: f64 = (0..n).filter(|&i| s.f.values[i] < m).map(|i| s.mu.mass(i)).sum();
        let above: f64 = (0..n).filter(|&i| s.f.values[i] > m).map(|i| s.mu.mass(i)).sum();
        prop_assert!(below <= total / 2.0 * (1.0 + 1e-12));
        prop_assert!(above <= total / 2.0 * (1.0 + 1e-12));
    }

    #[test]
    fn truncation_clamps(v in prop::collection::vec(-10.0f64..10.0, 1..50), q in 0.1f64..5.0) {
        let f = FunctionOnSupport::new(v);
        let t = norms::truncate(&f, q);
        for (a, b) in f.values.iter().zip(&t.values) {
            prop_assert!(b.abs() <= q);
            if a.abs() <= q { prop_assert_eq!(a, b); }
        }
    }

    #[test]
    fn random_blocks_validate(seed in any::<u64>(), d in 1usize..=2, n in 10usize..60, blow in 1.5f64..4.0) {
        let mut r = rng(seed);
        let mu = random_measure(&mut r, d, n);
        let ctx = AnalysisContext::for_measure(&mu, 1).unwrap();
        let mut blk = random_block(&mut r, &mu, &ctx).unwrap();
        let h = validate_block(&mu, &ctx, &blk, 1e-12).unwrap();
        prop_assert!(h > 0.0);
        blk.pieces[0].a = blk.pieces[0].a.map(|v| v * blow);
        prop_assert!(validate_block(&mu, &ctx, &blk, 1e-12).is_err());
    }
}

// ---------------------------------------------------------------- maximal

proptest! {
    #![proptest_config(cfg(32))]

    #[test]
    fn maximal_dominations(seed in any::<u64>(), d in 1usize..=2, n in 5usize..60) {
        let s = setup(seed, d, n);
        let (mu, ctx, fam, f) = (&s.mu, &s.ctx, &s.fam, &s.f);
        let sh = maximal::sharp_maximal_all(mu, ctx, f, fam).unwrap();
        let sha = maximal::sharp_maximal_all(mu, ctx, &f.abs(), fam).unwrap();
        let rad = maximal::radial_maximal_all(mu, f, 1.5, fam).unwrap();
        let nf = maximal::doubling_maximal_all(mu, f, fam).unwrap();
        let m2 = maximal::radial_maximal_all(mu, f, 2.0, fam).unwrap();
        for i in 0..mu.len() {
            let slack = 1.0 + 1e-12;
            prop_assert!(sh[i] <= (rad[i] + 3.0 * nf[i]) * slack);
            prop_assert!(sha[i] <= 5.0 * ctx.beta_d * sh[i] * slack);
            prop_assert!(nf[i] <= ctx.beta_d * m2[i] * slack);
        }
    }

    #[test]
    fn maximal_sublinear(seed in any::<u64>(), d in 1usize..=2, n in 5usize..50, t in 0.1f64..5.0) {
        let s = setup(seed, d, n);
        let (mu, ctx, fam, f) = (&s.mu, &s.ctx, &s.fam, &s.f);
        let g = random_function(&mut rng(seed ^ 1), mu);
        let sum = FunctionOnSupport::new(f.values.iter().zip(&g.values).map(|(a, b)| a + b).collect());
        let scaled = f.map(|v| t * v);
        type Op = fn(&common::Setup, &FunctionOnSupport) -> Vec<f64>;
        let ops: [Op; 4] = [
            |s, f| maximal::sharp_maximal_all(&s.mu, &s.ctx, f, &s.fam).unwrap(),
            |s, f| maximal::doubling_maximal_all(&s.mu, f, &s.fam).unwrap(),
            |s, f| maximal::radial_maximal_all(&s.mu, f, 2.0, &s.fam).unwrap(),
            |s, f| maximal::p_maximal_all(&s.mu, f, 2.0, 1.5, &s.fam).unwrap(),
        ];
        let _ = (ctx, fam);
        for op in ops {
            let (a, b, c, e) = (op(&s, f), op(&s, &g), op(&s, &sum), op(&s, &scaled));
            for i in 0..mu.len() {
                prop_assert!(c[i] <= (a[i] + b[i]) * (1.0 + 1e-9) + 1e-12);
                prop_assert!(close(e[i], t * a[i], 1e-9) || a[i] < 1e-12);
            }
        }
    }
}

// ---------------------------------------------------------------- cz

proptest! {
    #![proptest_config(cfg(24))]

    #[test]
    fn cover_catches_every_center(pts in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0, 0.05f64..0.8), 1..60)) {
        let cands: Vec<(Vec<f64>, Cube)> = pts.iter().map(|&(x, y, s)| (vec![x, y], Cube::new(vec![x, y], s))).collect();
        let cover = besicovich_cover(&cands);
        for (c, _) in &cands {
            prop_assert!(cover.selected.iter().any(|&s| cands[s].1.contains(c)));
        }
        prop_assert!(cover.max_overlap >= 1);
    }

    #[test]
    fn cz_reconstructs(seed in any::<u64>(), p in prop::sample::select(vec![1.0, 2.0]), scale in 1.05f64..4.0) {
        let (mu, n) = cantor4(4).unwrap();
        let ctx = AnalysisContext::for_measure(&mu, n).unwrap();
        let mut r = rng(seed);
        let f = hotspot(&mu, r.gen(), r.gen_range(1..4), r.gen_range(0.05..0.3), r.gen_range(3.0..20.0));
        let norm = |q: f64| f.values.iter().zip(mu.masses()).map(|(v, m)| v.abs().powf(q) * m).sum::<f64>();
        let floor = (ctx.beta_d * norm(1.0) / mu.total_mass()).max((ctx.beta_d * norm(p) / mu.total_mass()).powf(1.0 / p));
        let lambda = scale * floor;
        let dec = cz_decompose(&mu, &ctx, &f, p, lambda).unwrap();
        let b = dec.bad_part(&mu);
        for i in 0..mu.len() {
            prop_assert!((dec.good.values[i] + b.values[i] - f.values[i]).abs() <= 1e-12 * f.sup_norm().max(1.0));
        }
        for blk in &dec.bad_blocks {
            prop_assert!(validate_block(&mu, &ctx, blk, 1e-10).is_ok());
        }
        let phisum: Vec<f64> = (0..mu.len()).map(|i| dec.phis.iter().map(|ph| ph.values[i].abs()).sum()).collect();
        prop_assert!(phisum.iter().all(|&v| v <= dec.b_used * lambda * (1.0 + 1e-12) + 1e-300));
        for w in 0..mu.len() {
            let tot: f64 = dec.weights.iter().map(|wt| wt.values[w]).sum();
            prop_assert!(tot <= 1.0 + 1e-12);
        }
    }
}

// ---------------------------------------------------------------- cauchy

proptest! {
    #![proptest_config(cfg(24))]

    #[test]
    fn melnikov_identity(pts in prop::collection::vec(-10.0f64..10.0, 6)) {
        let (x, y, w) = (&pts[0..2], &pts[2..4], &pts[4..6]);
        if let Ok(c) = cauchy::menger_curvature(x, y, w) {
            if c > 0.0 {
                prop_assert!(cauchy::melnikov_residual(x, y, w).unwrap() <= 1e-10);
                prop_assert!(close(cauchy::melnikov_sum(x, y, w), c * c, 1e-6) || c < 1e-6);
            }
        }
    }

    #[test]
    fn cauchy_linear_and_commutator_constant(seed in any::<u64>(), t in 0usize..4, a in -2.0f64..2.0) {
        let mut r = rng(seed);
        let mu = random_planar(&mut r, t).unwrap();
        let f = ComplexFunction::new((0..mu.len()).map(|_| Complex64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0))).collect());
        let g = ComplexFunction::new((0..mu.len()).map(|_| Complex64::new(r.gen_range(-1.0..1.0), 0.0)).collect());
        let h = ComplexFunction::new(f.values.iter().zip(&g.values).map(|(u, v)| u * a + v).collect());
        let eps = mu.r_min() * 4.0;
        let (cf, cg, ch) = (
            cauchy::cauchy_all(&mu, &f, eps).unwrap(),
            cauchy::cauchy_all(&mu, &g, eps).unwrap(),
            cauchy::cauchy_all(&mu, &h, eps).unwrap(),
        );
        let scale: f64 = cf.iter().chain(&cg).map(|v| v.norm()).fold(1.0, f64::max);
        for i in 0..mu.len() {
            prop_assert!((ch[i] - (cf[i] * a + cg[i])).norm() <= 1e-10 * scale);
        }
        let b = FunctionOnSupport::constant(&mu, a);
        let c = cauchy::commutator_all(&mu, &b, &f, eps).unwrap();
        prop_assert!(c.iter().all(|v| v.norm() <= 1e-10 * scale * (1.0 + a.abs())));
    }

    #[test]
    fn triple_sum_shrinks_with_eps(seed in any::<u64>(), t in 0usize..4) {
        let mut r = rng(seed);
        let mu = random_planar(&mut r, t).unwrap();
        let q = Cube::new(mu.point(r.gen_range(0..mu.len())).to_vec(), r.gen_range(0.1..0.6));
        let mut last = f64::INFINITY;
        for k in 0..5 {
            let s = cauchy::curvature_triple_sum(&mu, &q, mu.r_min() * 2f64.powi(k), None).unwrap();
            prop_assert!(s >= 0.0 && s <= last * (1.0 + 1e-12));
            last = s;
        }
    }
}

#[test]
fn truncation_grid_floors_at_resolution() {
    let (mu, _) = segment(64, 2).unwrap();
    let g = TruncationGrid::dyadic(&mu, 3, 6).unwrap();
    assert!(g.epsilons.iter().all(|&e| e >= mu.r_min()));
    // levels below r_min collapse onto it
    assert!(TruncationGrid::dyadic(&mu, 3, 12).is_err());
}

#[test]
fn parallel_reductions_ignore_thread_count() {
    let mut r = rng(9);
    let mu = random_planar(&mut r, 2).unwrap();
    let q = mu.whole_cube().unwrap();
    let a = random_function(&mut r, &mu).map(|v| v.clamp(-1.0, 1.0));
    let run = |threads| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| {
            (
                cauchy::curvature_identity(&mu, &q, mu.r_min() * 2.0, &a).unwrap(),
                cauchy::curvature_triple_sum(&mu, &q, mu.r_min(), None).unwrap(),
            )
        })
    };
    let base = run(1);
    for t in [2, 3, 8] {
        assert_eq!(run(t), base);
    }
}
