//! Pointwise maximal operators over a cube family, evaluated at every
//! support point at once.

use crate::error::{Error, Result};
use crate::family::CubeFamily;
use crate::measure::{AnalysisContext, DiscreteMeasure, FunctionOnSupport};
use crate::norms::{at_companion, means, oscillation};

type PerCube = Vec<Vec<f64>>;

fn check(mu: &DiscreteMeasure, f: &FunctionOnSupport, fam: &CubeFamily) -> Result<()> {
    f.check(mu)?;
    if fam.is_empty() {
        return Err(Error::EmptyFamily);
    }
    Ok(())
}

fn finish(v: Vec<f64>) -> Vec<f64> {
    v.into_iter().map(|x| if x == f64::NEG_INFINITY { 0.0 } else { x }).collect()
}

fn at(mu: &DiscreteMeasure, all: Vec<f64>, x: usize) -> Result<f64> {
    if x >= mu.len() {
        return Err(Error::NotInSupport(x));
    }
    Ok(all[x])
}

fn ratio(num: &PerCube, den: &PerCube) -> PerCube {
    num.iter().zip(den).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x / y).collect()).collect()
}

/// M^♯ f at every support point: the larger of the oscillation sup
/// (around m_{Q̃} f, against μ(3Q/2)) and the doubling-pair sup with
/// K ≤ P0, both over family cubes containing the point.
pub fn sharp_maximal_all(
    mu: &DiscreteMeasure,
    ctx: &AnalysisContext,
    f: &FunctionOnSupport,
    fam: &CubeFamily,
) -> Result<Vec<f64>> {
    check(mu, f, fam)?;
    let m = means(mu, f, fam);
    let osc = oscillation(mu, f, fam, &at_companion(fam, &m), 1.0);
    let mut vals = ratio(&osc, &fam.dilated_mass(mu, 1.5));
    let d: Vec<Vec<Option<f64>>> = fam
        .ladders
        .iter()
        .zip(&m)
        .map(|(l, row)| {
            let s = l.top + 1;
            row.iter().enumerate().map(|(k, &v)| l.doubling(k / s, k % s).then_some(v)).collect()
        })
        .collect();
    let table = fam.pair_table(mu, &d, &d, ctx.p0);
    for (v, t) in vals.iter_mut().zip(&table) {
        for (x, b) in v.iter_mut().zip(t) {
            if b.pair.is_some() {
                *x = x.max(b.value);
            }
        }
    }
    Ok(finish(fam.pointwise_sup(mu, &vals, 1.0)))
}

pub fn sharp_maximal(
    mu: &DiscreteMeasure,
    ctx: &AnalysisContext,
    f: &FunctionOnSupport,
    x: usize,
    fam: &CubeFamily,
) -> Result<f64> {
    at(mu, sharp_maximal_all(mu, ctx, f, fam)?, x)
}

fn abs_sums(mu: &DiscreteMeasure, f: &FunctionOnSupport, fam: &CubeFamily, p: f64) -> PerCube {
    (0..fam.ladders.len())
        .map(|li| {
            fam.sums(mu, li, |i, _| {
                let a = f.values[i].abs();
                (if p == 1.0 { a } else { a.powf(p) }) * mu.mass(i)
            })
        })
        .collect()
}

/// N f: sup of m_Q |f| over (2, β_d)-doubling family cubes containing the point.
pub fn doubling_maximal_all(
    mu: &DiscreteMeasure,
    f: &FunctionOnSupport,
    fam: &CubeFamily,
) -> Result<Vec<f64>> {
    check(mu, f, fam)?;
    let s = abs_sums(mu, f, fam, 1.0);
    let vals: PerCube = fam
        .ladders
        .iter()
        .zip(&s)
        .map(|(l, row)| {
            let st = l.top + 1;
            row.iter()
                .enumerate()
                .map(|(k, &v)| {
                    let (slot, j) = (k / st, k % st);
                    if l.doubling(slot, j) {
                        v / l.mass(slot, j)
                    } else {
                        f64::NEG_INFINITY
                    }
                })
                .collect()
        })
        .collect();
    Ok(finish(fam.pointwise_sup(mu, &vals, 1.0)))
}

pub fn doubling_maximal(
    mu: &DiscreteMeasure,
    f: &FunctionOnSupport,
    x: usize,
    fam: &CubeFamily,
) -> Result<f64> {
    at(mu, doubling_maximal_all(mu, f, fam)?, x)
}

/// M_(ρ) f: sup over family cubes containing the point of (1/μ(ρQ))∫_Q |f|.
pub fn radial_maximal_all(
    mu: &DiscreteMeasure,
    f: &FunctionOnSupport,
    rho: f64,
    fam: &CubeFamily,
) -> Result<Vec<f64>> {
    p_maximal_all(mu, f, 1.0, rho, fam)
}

pub fn radial_maximal(
    mu: &DiscreteMeasure,
    f: &FunctionOnSupport,
    x: usize,
    rho: f64,
    fam: &CubeFamily,
) -> Result<f64> {
    at(mu, radial_maximal_all(mu, f, rho, fam)?, x)
}

/// M_{p,(η)} f: sup of ((1/μ(ηQ))∫_Q |f|^p)^{1/p}.
pub fn p_maximal_all(
    mu: &DiscreteMeasure,
    f: &FunctionOnSupport,
    p: f64,
    eta: f64,
    fam: &CubeFamily,
) -> Result<Vec<f64>> {
    if !(p >= 1.0) {
        return Err(Error::InvalidArgument(format!("p must be at least 1, got {p}")));
    }
    check(mu, f, fam)?;
    let s = abs_sums(mu, f, fam, p);
    let mut vals = ratio(&s, &fam.dilated_mass(mu, eta));
    if p != 1.0 {
        for row in &mut vals {
            for v in row.iter_mut() {
                *v = v.powf(1.0 / p);
            }
        }
    }
    Ok(finish(fam.pointwise_sup(mu, &vals, 1.0)))
}

pub fn p_maximal(
    mu: &DiscreteMeasure,
    f: &FunctionOnSupport,
    x: usize,
    p: f64,
    eta: f64,
    fam: &CubeFamily,
) -> Result<f64> {
    at(mu, p_maximal_all(mu, f, p, eta, fam)?, x)
}

/// M^(ρ) f: sup of m_Q |f| over family cubes Q with x ∈ ρ^{-1}Q.
pub fn upper_radial_maximal_all(
    mu: &DiscreteMeasure,
    f: &FunctionOnSupport,
    rho: f64,
    fam: &CubeFamily,
) -> Result<Vec<f64>> {
    check(mu, f, fam)?;
    let s = abs_sums(mu, f, fam, 1.0);
    let vals = ratio(&s, &fam.dilated_mass(mu, 1.0));
    Ok(finish(fam.pointwise_sup(mu, &vals, 1.0 / rho)))
}

/// Discrete L^p norm of a per-point vector against μ.
pub fn lp_of(mu: &DiscreteMeasure, v: &[f64], p: f64) -> f64 {
    let s: f64 = v.iter().zip(mu.masses()).map(|(x, m)| x.abs().powf(p) * m).sum();
    s.powf(1.0 / p)
}
