//! Calderón–Zygmund decomposition of a function on a finite measure:
//! stopping cubes, a greedy almost-disjoint selection, doubling companions,
//! correction functions and the good/bad split.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::{k_coeff, NestedCubePair};
use crate::error::{Error, Result};
use crate::measure::{cheb, AnalysisContext, Cube, DiscreteMeasure, FunctionOnSupport};
use crate::norms::{validate_block, AtomicBlock, BlockPiece};

/// Dilations at which the maximality of stopping cubes is verified.
pub const ETA_GRID: [f64; 5] = [2.5, 3.0, 4.0, 8.0, 16.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cover {
    /// indices into the candidate list, in selection order
    pub selected: Vec<usize>,
    /// largest number of selected cubes containing one candidate center
    pub max_overlap: usize,
}

/// Greedy selection by nonincreasing side: a candidate is taken unless its
/// center already lies in a selected cube. Ties keep input order.
pub fn besicovich_cover(candidates: &[(Vec<f64>, Cube)]) -> Cover {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        candidates[b].1.side.partial_cmp(&candidates[a].1.side).unwrap_or(Ordering::Equal)
    });
    let mut selected: Vec<usize> = vec![];
    for i in order {
        let c = &candidates[i].0;
        if !selected.iter().any(|&s| candidates[s].1.contains(c)) {
            selected.push(i);
        }
    }
    let max_overlap = candidates
        .iter()
        .map(|(c, _)| selected.iter().filter(|&&s| candidates[s].1.contains(c)).count())
        .max()
        .unwrap_or(0);
    Cover { selected, max_overlap }
}

fn powp(v: f64, p: f64) -> f64 {
    if p == 1.0 {
        v.abs()
    } else {
        v.abs().powf(p)
    }
}

/// (1/μ(2Q))·∫_Q |f|^p, summed in index order.
pub fn density(mu: &DiscreteMeasure, f: &FunctionOnSupport, q: &Cube, p: f64) -> f64 {
    let num: f64 = mu.cube_members(q).iter().map(|&i| powp(f.values[i], p) * mu.mass(i)).sum();
    num / mu.cube_mass(&q.dilate(2.0))
}

fn check_threshold(mu: &DiscreteMeasure, ctx: &AnalysisContext, f: &FunctionOnSupport, p: f64, lambda: f64) -> Result<()> {
    f.check(mu)?;
    if !(p >= 1.0) {
        return Err(Error::InvalidArgument(format!("p must be at least 1, got {p}")));
    }
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
    }
    if lambda > f.sup_norm() {
        // no cube can reach density λ^p; the decomposition is f = g
        return Ok(());
    }
    let total = mu.total_mass();
    let l1: f64 = f.values.iter().zip(mu.masses()).map(|(v, m)| v.abs() * m).sum();
    let lp: f64 = f.values.iter().zip(mu.masses()).map(|(v, m)| powp(*v, p) * m).sum();
    if lambda <= ctx.beta_d * l1 / total || powp(lambda, p) <= ctx.beta_d * lp / total {
        return Err(Error::InvalidArgument(format!(
            "lambda = {lambda} must exceed beta_d·|f|_1/|mu| and (beta_d·|f|_p^p/|mu|)^(1/p)"
        )));
    }
    Ok(())
}

/// Side of the stopping cube at support point x: the density
/// G(t) = ∫_{Q(x,t)}|f|^p / μ(Q(x,2t)) is a step function of t whose jumps
/// sit at d_i and 2d_i (d_i the sup-distances to x). The last step above
/// the threshold, [a, b), yields the side max(a, b/2): it passes the
/// threshold and every cube of side > 2·max(a, b/2) ≥ b fails it.
fn stopping_side(mu: &DiscreteMeasure, f: &FunctionOnSupport, x: &[f64], p: f64, thr: f64) -> Option<f64> {
    let r_min = mu.r_min();
    let mut dv: Vec<(f64, f64, f64)> = (0..mu.len())
        .map(|i| (cheb(mu.point(i), x), powp(f.values[i], p) * mu.mass(i), mu.mass(i)))
        .collect();
    dv.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut bps: Vec<f64> = vec![r_min];
    for &(d, _, _) in &dv {
        for t in [d, 2.0 * d] {
            if t > r_min {
                bps.push(t);
            }
        }
    }
    bps.sort_by(f64::total_cmp);
    bps.dedup();
    // sweep breakpoints with two cursors
    let (mut num, mut den) = (0.0, 0.0);
    let (mut a, mut b) = (0, 0);
    let mut last: Option<usize> = None;
    for (k, &t) in bps.iter().enumerate() {
        while a < dv.len() && dv[a].0 <= t / 2.0 {
            num += dv[a].1;
            a += 1;
        }
        while b < dv.len() && dv[b].0 <= t {
            den += dv[b].2;
            b += 1;
        }
        if num / den > thr {
            last = Some(k);
        }
    }
    let k = last?;
    let lo = bps[k];
    Some(match bps.get(k + 1) {
        Some(&hi) => lo.max(hi / 2.0),
        None => lo,
    })
}

/// Stopping cubes at level λ, plus the overlap bound of the selection.
pub fn cz_stopping_cubes_with_overlap(
    mu: &DiscreteMeasure,
    ctx: &AnalysisContext,
    f: &FunctionOnSupport,
    p: f64,
    lambda: f64,
) -> Result<(Vec<Cube>, usize)> {
    check_threshold(mu, ctx, f, p, lambda)?;
    let thr = powp(lambda, p) / ctx.beta_d;
    let hot: Vec<usize> = (0..mu.len()).filter(|&i| f.values[i].abs() > lambda).collect();
    let found: Vec<Result<(Vec<f64>, Cube)>> = hot
        .par_iter()
        .map(|&i| {
            let x = mu.point(i);
            let mut s = stopping_side(mu, f, x, p, thr).ok_or_else(|| {
                Error::Certificate(format!("no stopping cube above resolution at point {i}"))
            })?;
            // the sweep used distance-ordered sums; re-check in index order and
            // shrink dyadically if rounding put us on the wrong side
            loop {
                let q = Cube::new(x.to_vec(), s);
                let cc1 = density(mu, f, &q, p) > thr;
                let cc2 = ETA_GRID.iter().all(|&e| density(mu, f, &q.dilate(e), p) <= thr);
                if cc1 && cc2 {
                    return Ok((x.to_vec(), q));
                }
                s /= 2.0;
                if s < mu.r_min() {
                    return Err(Error::Certificate(format!("cc1/cc2 failed at point {i}")));
                }
            }
        })
        .collect();
    let candidates = found.into_iter().collect::<Result<Vec<_>>>()?;
    let cover = besicovich_cover(&candidates);
    let cubes: Vec<Cube> = cover.selected.iter().map(|&k| candidates[k].1.clone()).collect();
    if let Some(i) = hot.iter().find(|&&i| !cubes.iter().any(|q| q.contains(mu.point(i)))) {
        return Err(Error::Certificate(format!("cc3 fails at point {i}")));
    }
    Ok((cubes, cover.max_overlap))
}

/// The stopping cubes alone; empty when |f| ≤ λ everywhere.
pub fn cz_stopping_cubes(
    mu: &DiscreteMeasure,
    ctx: &AnalysisContext,
    f: &FunctionOnSupport,
    p: f64,
    lambda: f64,
) -> Result<Vec<Cube>> {
    Ok(cz_stopping_cubes_with_overlap(mu, ctx, f, p, lambda)?.0)
}

/// For each cube, the first 6^k Q (k ≥ 1) that is (6, 6^{n+1})-doubling.
pub fn cz_companions(mu: &DiscreteMeasure, ctx: &AnalysisContext, cubes: &[Cube]) -> Vec<Cube> {
    let beta = 6f64.powi(ctx.n as i32 + 1);
    cubes
        .iter()
        .map(|q| {
            let mut r = q.dilate(6.0);
            loop {
                if mu.cube_mass(&r.dilate(6.0)) <= beta * mu.cube_mass(&r) {
                    return r;
                }
                r = r.dilate(6.0);
            }
        })
        .collect()
}

fn intersect(a: &Cube, b: &Cube) -> bool {
    let h = (a.side + b.side) / 2.0;
    a.center.iter().zip(&b.center).all(|(x, y)| (x - y).abs() <= h)
}

/// w_i = χ_{Q_i}/Σ_k χ_{Q_k}.
pub fn cz_weights(mu: &DiscreteMeasure, cubes: &[Cube]) -> Vec<FunctionOnSupport> {
    let mut count = vec![0usize; mu.len()];
    let members: Vec<Vec<usize>> = cubes.iter().map(|q| mu.cube_members(q)).collect();
    for m in &members {
        for &i in m {
            count[i] += 1;
        }
    }
    members
        .iter()
        .map(|m| {
            let mut w = vec![0.0; mu.len()];
            for &i in m {
                w[i] = 1.0 / count[i] as f64;
            }
            FunctionOnSupport::new(w)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiResult {
    pub phis: Vec<FunctionOnSupport>,
    /// max over the support of Σ|φ_i| / λ
    pub b_used: f64,
    /// processing order (indices into the input lists)
    pub order: Vec<usize>,
}

/// Correction functions φ_k = α_k·χ_{A_k} built in order of nondecreasing
/// companion side (ties by center, lexicographically). A_k keeps the points
/// of R_k where the running Σ|φ_j| over earlier intersecting R_j is at most
/// 2·Σ∫|φ_j|/μ(R_k); α_k matches ∫φ_k to ∫ f·w_k.
pub fn cz_phi(
    mu: &DiscreteMeasure,
    f: &FunctionOnSupport,
    weights: &[FunctionOnSupport],
    companions: &[Cube],
    lambda: f64,
) -> Result<PhiResult> {
    f.check(mu)?;
    let mut order: Vec<usize> = (0..companions.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (&companions[a], &companions[b]);
        ra.side
            .total_cmp(&rb.side)
            .then_with(|| {
                ra.center
                    .iter()
                    .zip(&rb.center)
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| *o != Ordering::Equal)
                    .unwrap_or(Ordering::Equal)
            })
            .then(a.cmp(&b))
    });
    let mut phis = vec![FunctionOnSupport::new(vec![0.0; mu.len()]); companions.len()];
    let mut l1 = vec![0.0; companions.len()];
    let mut done: Vec<usize> = vec![];
    for &k in &order {
        let r = &companions[k];
        let prior: Vec<usize> = done.iter().copied().filter(|&j| intersect(&companions[j], r)).collect();
        let members = mu.cube_members(r);
        let mr: f64 = members.iter().map(|&i| mu.mass(i)).sum();
        let t = 2.0 * prior.iter().map(|&j| l1[j]).sum::<f64>() / mr;
        let a: Vec<usize> = members
            .into_iter()
            .filter(|&i| prior.iter().map(|&j| phis[j].values[i].abs()).sum::<f64>() <= t)
            .collect();
        let ma: f64 = a.iter().map(|&i| mu.mass(i)).sum();
        if !(ma > 0.0) {
            return Err(Error::DegenerateCompanion(k));
        }
        let target = mu.integral(&FunctionOnSupport::new(
            f.values.iter().zip(&weights[k].values).map(|(x, w)| x * w).collect(),
        ));
        let alpha = target / ma;
        for &i in &a {
            phis[k].values[i] = alpha;
        }
        l1[k] = alpha.abs() * ma;
        done.push(k);
    }
    let b_used = (0..mu.len())
        .map(|i| phis.iter().map(|p| p.values[i].abs()).sum::<f64>())
        .fold(0.0, f64::max)
        / lambda;
    Ok(PhiResult { phis, b_used, order })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CzDecomposition {
    pub lambda: f64,
    pub p: f64,
    pub stopping_cubes: Vec<Cube>,
    pub companions: Vec<Cube>,
    pub weights: Vec<FunctionOnSupport>,
    pub phis: Vec<FunctionOnSupport>,
    pub good: FunctionOnSupport,
    pub bad_blocks: Vec<AtomicBlock>,
    /// Σ over blocks of Σ|λ_j|
    pub h1_upper: f64,
    pub b_used: f64,
    pub max_overlap: usize,
    /// max_i K_{Q_i,R_i}
    pub k_max: f64,
    /// max_i of (∫|φ_i|^p)^{1/p} μ(R_i)^{1/p'} / (λ^{1-p} ∫_{Q_i}|f|^p)
    pub cc6_constant: f64,
    /// h1_upper·λ^{p-1}/‖f‖_p^p
    pub cc7_ratio: f64,
}

impl CzDecomposition {
    /// Σ_i (f·w_i − φ_i).
    pub fn bad_part(&self, mu: &DiscreteMeasure) -> FunctionOnSupport {
        let mut b = vec![0.0; mu.len()];
        for blk in &self.bad_blocks {
            for (x, v) in b.iter_mut().zip(blk.function(mu).values) {
                *x += v;
            }
        }
        FunctionOnSupport::new(b)
    }
}

fn block_piece(mu: &DiscreteMeasure, ctx: &AnalysisContext, piece: Vec<f64>, cube: &Cube, envelope: &Cube, p: f64) -> Result<BlockPiece> {
    let piece = FunctionOnSupport::new(piece);
    let norm = mu.lp_norm(&piece, p);
    let k = k_coeff(mu, ctx, &NestedCubePair::new(cube.clone(), envelope.clone())?)?;
    let big = mu.cube_mass(&cube.dilate(ctx.rho));
    let lambda = norm * big.powf(1.0 - 1.0 / p) * k;
    let a = if lambda > 0.0 { piece.map(|v| v / lambda) } else { piece.map(|_| 0.0) };
    Ok(BlockPiece { lambda, a, cube: cube.clone() })
}

/// Full decomposition f = g + Σ_i (f·w_i − φ_i) at level λ.
pub fn cz_decompose(
    mu: &DiscreteMeasure,
    ctx: &AnalysisContext,
    f: &FunctionOnSupport,
    p: f64,
    lambda: f64,
) -> Result<CzDecomposition> {
    let (cubes, max_overlap) = cz_stopping_cubes_with_overlap(mu, ctx, f, p, lambda)?;
    let companions = cz_companions(mu, ctx, &cubes);
    let weights = cz_weights(mu, &cubes);
    let phi = cz_phi(mu, f, &weights, &companions, lambda)?;
    let mut good = f.values.clone();
    let mut blocks = vec![];
    let mut h1 = 0.0;
    let mut k_max: f64 = 1.0;
    let mut cc6: f64 = 0.0;
    for (i, (q, r)) in cubes.iter().zip(&companions).enumerate() {
        let fw: Vec<f64> = f.values.iter().zip(&weights[i].values).map(|(x, w)| x * w).collect();
        let phi_i = &phi.phis[i].values;
        for x in 0..mu.len() {
            good[x] -= fw[x] - phi_i[x];
        }
        let neg: Vec<f64> = phi_i.iter().map(|v| -v).collect();
        let pieces = vec![block_piece(mu, ctx, fw, q, r, p)?, block_piece(mu, ctx, neg, r, r, p)?];
        let block = AtomicBlock { envelope: r.clone(), pieces, exponent: Some(p) };
        let h = validate_block(mu, ctx, &block, 1e-12)
            .map_err(|v| Error::Certificate(format!("bad block {i} does not validate: {v:?}")))?;
        h1 += h;
        k_max = k_max.max(k_coeff(mu, ctx, &NestedCubePair::new(q.clone(), r.clone())?)?);
        let fq: f64 = mu.cube_members(q).iter().map(|&x| powp(f.values[x], p) * mu.mass(x)).sum();
        let lhs = mu.lp_norm(&phi.phis[i], p) * mu.cube_mass(r).powf(1.0 - 1.0 / p);
        cc6 = cc6.max(lhs / (lambda.powf(1.0 - p) * fq));
        blocks.push(block);
    }
    let fp: f64 = f.values.iter().zip(mu.masses()).map(|(v, m)| powp(*v, p) * m).sum();
    let cc7 = if fp > 0.0 { h1 * lambda.powf(p - 1.0) / fp } else { 0.0 };
    Ok(CzDecomposition {
        lambda,
        p,
        stopping_cubes: cubes,
        companions,
        weights,
        phis: phi.phis,
        good: FunctionOnSupport::new(good),
        bad_blocks: blocks,
        h1_upper: h1,
        b_used: phi.b_used,
        max_overlap,
        k_max,
        cc6_constant: cc6,
        cc7_ratio: cc7,
    })
}
