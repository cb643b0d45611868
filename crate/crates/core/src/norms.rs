//! Oscillation norms over cube families, medians, John–Nirenberg tails and
//! atomic blocks.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::{doubling_companion, k_coeff, NestedCubePair};
use crate::error::{Error, Result};
use crate::family::{CubeFamily, CubeId, PairBest};
use crate::measure::{AnalysisContext, Cube, DiscreteMeasure, FunctionOnSupport};

#[derive(Debug, Clone, PartialEq)]
pub enum Witness {
    None,
    Cube(Cube),
    Pair { inner: Cube, outer: Cube },
}

/// A norm value together with the cube or pair that attains it.
#[derive(Debug, Clone, PartialEq)]
pub struct NormReport {
    pub value: f64,
    pub witness: Witness,
    pub family_size: usize,
}

#[derive(Serialize, Deserialize)]
struct FlatReport {
    value: f64,
    witness_center: Option<Vec<f64>>,
    witness_side: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    witness_outer_center: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    witness_outer_side: Option<f64>,
    family_size: usize,
}

impl Serialize for NormReport {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let (wc, ws, oc, os) = match &self.witness {
            Witness::None => (None, None, None, None),
            Witness::Cube(q) => (Some(q.center.clone()), Some(q.side), None, None),
            Witness::Pair { inner, outer } => (
                Some(inner.center.clone()),
                Some(inner.side),
                Some(outer.center.clone()),
                Some(outer.side),
            ),
        };
        FlatReport {
            value: self.value,
            witness_center: wc,
            witness_side: ws,
            witness_outer_center: oc,
            witness_outer_side: os,
            family_size: self.family_size,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for NormReport {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let f = FlatReport::deserialize(d)?;
        let witness = match (f.witness_center, f.witness_side, f.witness_outer_center, f.witness_outer_side) {
            (Some(c), Some(s), Some(oc), Some(os)) => {
                Witness::Pair { inner: Cube::new(c, s), outer: Cube::new(oc, os) }
            }
            (Some(c), Some(s), _, _) => Witness::Cube(Cube::new(c, s)),
            _ => Witness::None,
        };
        Ok(NormReport { value: f.value, witness, family_size: f.family_size })
    }
}

type PerCube<T> = Vec<Vec<T>>;

fn start(mu: &DiscreteMeasure, f: &FunctionOnSupport, fam: &CubeFamily) -> Result<()> {
    f.check(mu)?;
    if fam.is_empty() {
        return Err(Error::EmptyFamily);
    }
    Ok(())
}

/// m_Q f for every closure cube.
pub(crate) fn means(mu: &DiscreteMeasure, f: &FunctionOnSupport, fam: &CubeFamily) -> PerCube<f64> {
    (0..fam.ladders.len())
        .map(|li| {
            let s = fam.sums(mu, li, |i, _| f.values[i] * mu.mass(i));
            let l = &fam.ladders[li];
            s.iter()
                .enumerate()
                .map(|(k, v)| v / l.mass(k / (l.top + 1), k % (l.top + 1)))
                .collect()
        })
        .collect()
}

/// Replace each cube's value by its companion's.
pub(crate) fn at_companion(fam: &CubeFamily, v: &PerCube<f64>) -> PerCube<f64> {
    fam.ladders
        .iter()
        .zip(v)
        .map(|(l, row)| {
            let stride = l.top + 1;
            (0..row.len()).map(|k| row[(k / stride) * stride + l.comp(k / stride, k % stride)]).collect()
        })
        .collect()
}

fn doubling_only(fam: &CubeFamily, v: &PerCube<f64>) -> PerCube<Option<f64>> {
    fam.ladders
        .iter()
        .zip(v)
        .map(|(l, row)| {
            let stride = l.top + 1;
            row.iter()
                .enumerate()
                .map(|(k, &x)| l.doubling(k / stride, k % stride).then_some(x))
                .collect()
        })
        .collect()
}

fn all_cubes(v: &PerCube<f64>) -> PerCube<Option<f64>> {
    v.iter().map(|row| row.iter().map(|&x| Some(x)).collect()).collect()
}

/// ∫_Q |f − center(Q)|^p dμ for every closure cube.
pub(crate) fn oscillation(
    mu: &DiscreteMeasure,
    f: &FunctionOnSupport,
    fam: &CubeFamily,
    centers: &PerCube<f64>,
    p: f64,
) -> PerCube<f64> {
    (0..fam.ladders.len())
        .map(|li| {
            let stride = fam.ladders[li].top + 1;
            let c = &centers[li];
            fam.sums_by_slot(mu, li, |slot, i, j| {
                let d = (f.values[i] - c[slot * stride + j]).abs();
                let d = if p == 1.0 { d } else { d.powf(p) };
                d * mu.mass(i)
            })
        })
        .collect()
}

/// Max over family cubes of (num/den)^(1/p).
fn sup_ratio(fam: &CubeFamily, mu: &DiscreteMeasure, num: &PerCube<f64>, den: &PerCube<f64>, p: f64) -> (f64, Option<CubeId>) {
    let mut best = (0.0, None);
    for id in fam.ids() {
        let k = id.slot * (fam.ladders[id.ladder].top + 1) + id.level;
        let mut v = num[id.ladder][k] / den[id.ladder][k];
        if p != 1.0 {
            v = v.powf(1.0 / p);
        }
        if best.1.is_none() || v > best.0 {
            best = (v, Some(id));
        }
    }
    let _ = mu;
    best
}

fn report(
    mu: &DiscreteMeasure,
    fam: &CubeFamily,
    osc: (f64, Option<CubeId>),
    pair: Option<PairBest>,
) -> NormReport {
    let family_size = fam.size();
    let mut rep = NormReport {
        value: osc.0,
        witness: osc.1.map_or(Witness::None, |id| Witness::Cube(fam.cube(mu, id))),
        family_size,
    };
    if let Some(pb) = pair {
        if let Some((q, r)) = pb.pair {
            if pb.value > rep.value {
                rep.value = pb.value;
                rep.witness = Witness::Pair { inner: fam.cube(mu, q), outer: fam.cube(mu, r) };
            }
        }
    }
    rep
}

/// max over the family of (1/μ(ρQ))·∫_Q |f − m_Q f| dμ.
pub fn bmo_rho(mu: &DiscreteMeasure, f: &FunctionOnSupport, fam: &CubeFamily, rho: f64) -> Result<NormReport> {
    start(mu, f, fam)?;
    let m = means(mu, f, fam);
    let osc = oscillation(mu, f, fam, &m, 1.0);
    let den = fam.dilated_mass(mu, rho);
    Ok(report(mu, fam, sup_ratio(fam, mu, &osc, &den, 1.0), None))
}

/// The RBMO norm: oscillation around m_{Q̃} f against μ(ρQ), and
/// K-normalized differences of means over doubling pairs with K ≤ P0.
/// Setting `ctx.p0` to infinity sweeps every pair.
pub fn rbmo_star(mu: &DiscreteMeasure, ctx: &AnalysisContext, f: &FunctionOnSupport, fam: &CubeFamily) -> Result<NormReport> {
    rbmo_p(mu, ctx, f, fam, 1.0)
}

/// p-mean version of [`rbmo_star`]'s oscillation term.
pub fn rbmo_p(mu: &DiscreteMeasure, ctx: &AnalysisContext, f: &FunctionOnSupport, fam: &CubeFamily, p: f64) -> Result<NormReport> {
    if !(p >= 1.0) {
        return Err(Error::InvalidArgument(format!("p must be at least 1, got {p}")));
    }
    start(mu, f, fam)?;
    let m = means(mu, f, fam);
    let osc = oscillation(mu, f, fam, &at_companion(fam, &m), p);
    let den = fam.dilated_mass(mu, ctx.rho);
    let d = doubling_only(fam, &m);
    let pair = fam.pair_sup(mu, &d, &d, ctx.p0);
    Ok(report(mu, fam, sup_ratio(fam, mu, &osc, &den, p), Some(pair)))
}

/// Same sweep with f_Q = m_{Q̃} f in both conditions and pairs not
/// restricted to doubling cubes.
pub fn rbmo_doublestar(mu: &DiscreteMeasure, ctx: &AnalysisContext, f: &FunctionOnSupport, fam: &CubeFamily) -> Result<NormReport> {
    start(mu, f, fam)?;
    let m = means(mu, f, fam);
    let fq = at_companion(fam, &m);
    let osc = oscillation(mu, f, fam, &fq, 1.0);
    let den = fam.dilated_mass(mu, ctx.rho);
    let a = all_cubes(&fq);
    let pair = fam.pair_sup(mu, &a, &a, ctx.p0);
    Ok(report(mu, fam, sup_ratio(fam, mu, &osc, &den, 1.0), Some(pair)))
}

/// Lower weighted median of (value, mass) pairs already sorted by value.
fn median_sorted(vm: &[(f64, f64)]) -> f64 {
    let total: f64 = vm.iter().map(|x| x.1).sum();
    let mut cum = 0.0;
    let mut k = 0;
    while k < vm.len() {
        let v = vm[k].0;
        while k < vm.len() && vm[k].0 == v {
            cum += vm[k].1;
            k += 1;
        }
        if total - cum <= total / 2.0 {
            return v;
        }
    }
    vm[vm.len() - 1].0
}

/// The lower weighted median of f on Q.
pub fn alpha_median(mu: &DiscreteMeasure, f: &FunctionOnSupport, q: &Cube) -> Result<f64> {
    f.check(mu)?;
    let mut idx = mu.cube_members(q);
    if idx.is_empty() {
        return Err(Error::EmptyCube);
    }
    idx.sort_by(|&a, &b| f.values[a].total_cmp(&f.values[b]).then(a.cmp(&b)));
    let vm: Vec<(f64, f64)> = idx.iter().map(|&i| (f.values[i], mu.mass(i))).collect();
    Ok(median_sorted(&vm))
}

/// α_Q(f) for every closure cube.
pub(crate) fn medians(mu: &DiscreteMeasure, f: &FunctionOnSupport, fam: &CubeFamily) -> PerCube<f64> {
    (0..fam.ladders.len())
        .map(|li| {
            let levels = fam.ladders[li].top + 1;
            (0..fam.centers.len())
                .into_par_iter()
                .map(|slot| {
                    let mut ml = fam.member_levels(mu, li, slot, 1.0);
                    ml.sort_by(|a, b| f.values[a.0].total_cmp(&f.values[b.0]).then(a.0.cmp(&b.0)));
                    (0..levels)
                        .map(|j| {
                            let vm: Vec<(f64, f64)> = ml
                                .iter()
                                .filter(|x| x.1 <= j)
                                .map(|x| (f.values[x.0], mu.mass(x.0)))
                                .collect();
                            median_sorted(&vm)
                        })
                        .collect::<Vec<f64>>()
                })
                .collect::<Vec<_>>()
                .concat()
        })
        .collect()
}

/// Median-based norm: oscillation around α_{Q̃} against μ(2Q), and
/// K-normalized median differences over doubling pairs.
pub fn circ_norm(mu: &DiscreteMeasure, ctx: &AnalysisContext, f: &FunctionOnSupport, fam: &CubeFamily) -> Result<NormReport> {
    start(mu, f, fam)?;
    let a = medians(mu, f, fam);
    let osc = oscillation(mu, f, fam, &at_companion(fam, &a), 1.0);
    let den = fam.dilated_mass(mu, 2.0);
    let d = doubling_only(fam, &a);
    let pair = fam.pair_sup(mu, &d, &d, ctx.p0);
    Ok(report(mu, fam, sup_ratio(fam, mu, &osc, &den, 1.0), Some(pair)))
}

/// Oscillation around m_Q f against μ(ρQ), and differences of means over
/// all pairs with K ≤ P0 weighted by K·(μ(ρQ)/μ(Q) + μ(ρR)/μ(R)).
/// Enumerates pairs explicitly.
pub fn fifi_b(mu: &DiscreteMeasure, ctx: &AnalysisContext, f: &FunctionOnSupport, fam: &CubeFamily) -> Result<NormReport> {
    start(mu, f, fam)?;
    let m = means(mu, f, fam);
    let osc = oscillation(mu, f, fam, &m, 1.0);
    let den = fam.dilated_mass(mu, ctx.rho);
    let mut rep = report(mu, fam, sup_ratio(fam, mu, &osc, &den, 1.0), None);
    let at = |id: CubeId| id.slot * (fam.ladders[id.ladder].top + 1) + id.level;
    for (q, r) in fam.pairs(mu) {
        let k = fam.k_along(q, r.level);
        if k > ctx.p0 {
            continue;
        }
        let w = den[q.ladder][at(q)] / fam.mass(q) + den[r.ladder][at(r)] / fam.mass(r);
        let v = (m[q.ladder][at(q)] - m[r.ladder][at(r)]).abs() / (k * w);
        if v > rep.value {
            rep.value = v;
            rep.witness = Witness::Pair { inner: fam.cube(mu, q), outer: fam.cube(mu, r) };
        }
    }
    Ok(rep)
}

/// Clamp |f| at level q, keeping the sign.
pub fn truncate(f: &FunctionOnSupport, q: f64) -> FunctionOnSupport {
    f.map(|v| if v.abs() <= q { v } else { q * v.signum() })
}

/// μ{x ∈ Q : |f(x) − m_{Q̃} f| > λ}/μ(ρQ) for each λ.
pub fn jn_tail(
    mu: &DiscreteMeasure,
    ctx: &AnalysisContext,
    f: &FunctionOnSupport,
    q: &Cube,
    lambdas: &[f64],
) -> Result<Vec<(f64, f64)>> {
    f.check(mu)?;
    let idx = mu.cube_members(q);
    if idx.is_empty() {
        return Err(Error::EmptyCube);
    }
    let fq = mu.mean(f, &doubling_companion(mu, ctx, q)?)?;
    let den = mu.cube_mass(&q.dilate(ctx.rho));
    Ok(lambdas
        .iter()
        .map(|&lam| {
            let m: f64 = idx.iter().filter(|&&i| (f.values[i] - fq).abs() > lam).map(|&i| mu.mass(i)).sum();
            (lam, m / den)
        })
        .collect())
}

/// One piece λ·a of an atomic block, with a supported on `cube`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockPiece {
    pub lambda: f64,
    pub a: FunctionOnSupport,
    pub cube: Cube,
}

/// b = Σ λ_j a_j, supported in `envelope`. `exponent` None means the
/// size condition is measured in L^∞, Some(p) in L^p(μ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomicBlock {
    pub envelope: Cube,
    pub pieces: Vec<BlockPiece>,
    #[serde(default)]
    pub exponent: Option<f64>,
}

impl AtomicBlock {
    pub fn function(&self, mu: &DiscreteMeasure) -> FunctionOnSupport {
        let mut b = vec![0.0; mu.len()];
        for p in &self.pieces {
            for (x, a) in b.iter_mut().zip(&p.a.values) {
                *x += p.lambda * a;
            }
        }
        FunctionOnSupport::new(b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BlockViolation {
    CubeOutsideEnvelope { piece: usize },
    SupportOutsideCube { piece: usize, point: usize },
    WrongLength { piece: usize },
    NonzeroIntegral { integral: f64, bound: f64 },
    SizeBound { piece: usize, norm: f64, bound: f64 },
    Coefficient { piece: usize, reason: String },
}

/// Checks the block conditions; on success returns Σ|λ_j|.
pub fn validate_block(
    mu: &DiscreteMeasure,
    ctx: &AnalysisContext,
    block: &AtomicBlock,
    tol: f64,
) -> std::result::Result<f64, Vec<BlockViolation>> {
    let mut bad = vec![];
    let mut scale = 0.0;
    for (j, p) in block.pieces.iter().enumerate() {
        if p.a.values.len() != mu.len() {
            bad.push(BlockViolation::WrongLength { piece: j });
            continue;
        }
        if !p.cube.inside(&block.envelope) {
            bad.push(BlockViolation::CubeOutsideEnvelope { piece: j });
        }
        if let Some(i) = (0..mu.len()).find(|&i| p.a.values[i] != 0.0 && !p.cube.contains(mu.point(i))) {
            bad.push(BlockViolation::SupportOutsideCube { piece: j, point: i });
        }
        scale += p.lambda.abs() * p.a.sup_norm() * mu.cube_mass(&p.cube);
        let k = NestedCubePair::new(p.cube.clone(), block.envelope.clone())
            .and_then(|pair| k_coeff(mu, ctx, &pair));
        let k = match k {
            Ok(k) => k,
            Err(e) => {
                bad.push(BlockViolation::Coefficient { piece: j, reason: e.to_string() });
                continue;
            }
        };
        let big = mu.cube_mass(&p.cube.dilate(ctx.rho));
        let (norm, bound) = match block.exponent {
            None => (p.a.sup_norm(), 1.0 / (big * k)),
            Some(e) => (mu.lp_norm(&p.a, e), big.powf(1.0 / e - 1.0) / k),
        };
        if norm > bound * (1.0 + 1e-12) {
            bad.push(BlockViolation::SizeBound { piece: j, norm, bound });
        }
    }
    if bad.is_empty() {
        let integral = mu.integral(&block.function(mu));
        if integral.abs() > tol * scale {
            bad.push(BlockViolation::NonzeroIntegral { integral, bound: tol * scale });
        }
    }
    if bad.is_empty() {
        Ok(block.pieces.iter().map(|p| p.lambda.abs()).sum())
    } else {
        Err(bad)
    }
}

/// |∫ b·g dμ| / (|b|_{H¹}·‖g‖_*).
pub fn pairing_check(
    mu: &DiscreteMeasure,
    ctx: &AnalysisContext,
    block: &AtomicBlock,
    g: &FunctionOnSupport,
    fam: &CubeFamily,
) -> Result<f64> {
    g.check(mu)?;
    let h = validate_block(mu, ctx, block, 1e-12)
        .map_err(|v| Error::InvalidArgument(format!("invalid atomic block: {v:?}")))?;
    let b = block.function(mu);
    let pairing: f64 = (0..mu.len()).map(|i| b.values[i] * g.values[i] * mu.mass(i)).sum();
    let scale: f64 = (0..mu.len()).map(|i| (b.values[i] * g.values[i]).abs() * mu.mass(i)).sum();
    let norm = rbmo_star(mu, ctx, g, fam)?.value;
    if norm <= 1e-12 * g.sup_norm() {
        if pairing.abs() <= 1e-10 * scale {
            return Ok(0.0);
        }
        return Err(Error::ZeroNorm);
    }
    if h == 0.0 {
        return Ok(0.0);
    }
    Ok(pairing.abs() / (h * norm))
}
