//! The coefficients K_{Q,R}, doubling tests and doubling companions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{dist, AnalysisContext, Cube, DiscreteMeasure};

/// A pair of cubes with `inner` inside `outer`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NestedCubePair {
    pub inner: Cube,
    pub outer: Cube,
}

impl NestedCubePair {
    pub fn new(inner: Cube, outer: Cube) -> Result<Self> {
        if inner.dim() != outer.dim() || !inner.inside(&outer) {
            return Err(Error::NotNested);
        }
        Ok(NestedCubePair { inner, outer })
    }

    /// Smallest k ≥ 0 with 2^k·l(Q) ≥ l(R).
    pub fn n_steps(&self) -> u32 {
        steps(self.inner.side, self.outer.side)
    }
}

pub(crate) fn steps(inner: f64, outer: f64) -> u32 {
    let mut s = inner;
    let mut k = 0;
    while s < outer {
        s *= 2.0;
        k += 1;
    }
    k
}

fn check_resolution(mu: &DiscreteMeasure, q: &Cube) -> Result<()> {
    if q.side < mu.r_min() {
        return Err(Error::BelowResolution { side: q.side, r_min: mu.r_min() });
    }
    Ok(())
}

/// K_{Q,R} = 1 + Σ_{k=1..N} μ(2^k Q)/l(2^k Q)^n.
pub fn k_coeff(mu: &DiscreteMeasure, ctx: &AnalysisContext, pair: &NestedCubePair) -> Result<f64> {
    check_resolution(mu, &pair.inner)?;
    let mut k = 1.0;
    let mut side = pair.inner.side;
    for _ in 0..pair.n_steps() {
        side *= 2.0;
        let q = Cube::new(pair.inner.center.clone(), side);
        k += mu.cube_mass(&q) / side.powi(ctx.n as i32);
    }
    Ok(k)
}

/// Grid-free variant: 1 + Σ mass(y)/|y − x_Q|^n over l(Q) ≤ |y − x_Q| ≤ l(R).
pub fn k_coeff_radial(
    mu: &DiscreteMeasure,
    ctx: &AnalysisContext,
    pair: &NestedCubePair,
) -> Result<f64> {
    check_resolution(mu, &pair.inner)?;
    let x = &pair.inner.center;
    let (lo, hi) = (pair.inner.side, pair.outer.side);
    let mut k = 1.0;
    for i in mu.ball_members(x, hi) {
        let r = dist(mu.point(i), x);
        if r >= lo {
            k += mu.mass(i) / r.powi(ctx.n as i32);
        }
    }
    Ok(k)
}

/// μ(αQ) ≤ β·μ(Q). A massless cube counts as doubling iff αQ is massless too.
pub fn is_doubling(mu: &DiscreteMeasure, q: &Cube, alpha: f64, beta: f64) -> bool {
    mu.cube_mass(&q.dilate(alpha)) <= beta * mu.cube_mass(q)
}

/// The first dyadic dilate 2^N Q (N ≥ 0) that is (2, β_d)-doubling.
pub fn doubling_companion(mu: &DiscreteMeasure, ctx: &AnalysisContext, q: &Cube) -> Result<Cube> {
    if mu.is_empty() {
        return Err(Error::EmptySupport);
    }
    let total = mu.total_mass();
    let mut cur = q.clone();
    loop {
        let m = mu.cube_mass(&cur);
        let m2 = mu.cube_mass(&cur.dilate(2.0));
        if m2 <= ctx.beta_d * m || m == total {
            return Ok(cur);
        }
        cur = cur.dilate(2.0);
    }
}

/// Scans sides scale, scale/2, ... down to r_min and returns the first
/// (2, β_d)-doubling cube centered at `x` accepted by `predicate`.
pub fn largest_doubling_below(
    mu: &DiscreteMeasure,
    ctx: &AnalysisContext,
    x: &[f64],
    scale: f64,
    predicate: Option<&dyn Fn(&Cube) -> bool>,
) -> Option<Cube> {
    let mut side = scale;
    while side >= mu.r_min() {
        let q = Cube::new(x.to_vec(), side);
        if is_doubling(mu, &q, 2.0, ctx.beta_d) && predicate.is_none_or(|p| p(&q)) {
            return Some(q);
        }
        side /= 2.0;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::FunctionOnSupport;

    fn line(xs: &[f64], ms: &[f64], r_min: f64) -> DiscreteMeasure {
        DiscreteMeasure::new(1, xs.iter().map(|&x| vec![x]).collect(), ms.to_vec(), r_min).unwrap()
    }

    fn ctx(mu: &DiscreteMeasure) -> AnalysisContext {
        AnalysisContext::for_measure(mu, 1).unwrap()
    }

    fn pair(c: f64, s: f64, cr: f64, sr: f64) -> NestedCubePair {
        NestedCubePair::new(Cube::new(vec![c], s), Cube::new(vec![cr], sr)).unwrap()
    }

    #[test]
    fn steps_examples() {
        assert_eq!(pair(0.0, 1.0, 0.0, 1.0).n_steps(), 0);
        assert_eq!(pair(0.0, 1.0, 0.0, 4.0).n_steps(), 2);
        assert_eq!(pair(0.0, 1.0, 0.0, 5.0).n_steps(), 3);
        assert!(NestedCubePair::new(Cube::new(vec![0.0], 1.0), Cube::new(vec![3.0], 2.0)).is_err());
    }

    #[test]
    fn k_examples() {
        let mu = line(&[0.0], &[3.0], 0.1);
        let c = ctx(&mu);
        assert_eq!(k_coeff(&mu, &c, &pair(0.0, 1.0, 0.0, 1.0)).unwrap(), 1.0);
        let s = 0.5;
        let k = k_coeff(&mu, &c, &pair(0.0, s, 0.0, 4.0 * s)).unwrap();
        assert_eq!(k, 1.0 + 3.0 / (2.0 * s) + 3.0 / (4.0 * s));
        assert!(matches!(
            k_coeff(&mu, &c, &pair(0.0, 0.05, 0.0, 1.0)),
            Err(Error::BelowResolution { .. })
        ));
    }

    #[test]
    fn radial_examples() {
        let mu = line(&[2.0], &[1.0], 0.1);
        let c = ctx(&mu);
        assert_eq!(k_coeff_radial(&mu, &c, &pair(0.0, 1.0, 0.0, 4.0)).unwrap(), 1.5);
        assert_eq!(k_coeff_radial(&mu, &c, &pair(0.0, 1.0, 0.0, 1.5)).unwrap(), 1.0);
    }

    #[test]
    fn doubling_examples() {
        let mu = line(&[0.0], &[1.0], 0.1);
        assert!(is_doubling(&mu, &Cube::new(vec![0.0], 1.0), 2.0, 2.0));
        let mu = line(&[0.0, 1.0], &[1.0, 1.0], 0.1);
        assert!(!is_doubling(&mu, &Cube::new(vec![0.0], 1.0), 2.0, 1.5));
        assert!(is_doubling(&mu, &Cube::new(vec![0.0], 1.0), 2.0, 2.0));
        assert!(is_doubling(&mu, &Cube::new(vec![9.0], 1.0), 2.0, 1.0));
    }

    #[test]
    fn companion_examples() {
        // every dilate of cube(0, 0.1) is doubling with β = 4: μ goes 1 → 1 → ... → 2
        let mu = line(&[0.0, 1.0], &[1.0, 1.0], 0.05);
        let c = ctx(&mu);
        let q = Cube::new(vec![0.0], 0.1);
        assert_eq!(doubling_companion(&mu, &c, &q).unwrap(), q);
        // a heavy neighbour forces growth until it is inside
        let mu = line(&[0.0, 1.0], &[1.0, 10.0], 0.05);
        let c = ctx(&mu);
        let got = doubling_companion(&mu, &c, &Cube::new(vec![0.0], 1.0)).unwrap();
        assert_eq!(got, Cube::new(vec![0.0], 2.0));
        let single = line(&[0.0], &[1.0], 0.05);
        let q = Cube::new(vec![0.0], 0.2);
        assert_eq!(doubling_companion(&single, &ctx(&single), &q).unwrap(), q);
    }

    #[test]
    fn largest_doubling_examples() {
        let mu = line(&[0.0], &[1.0], 0.1);
        let c = ctx(&mu);
        assert_eq!(largest_doubling_below(&mu, &c, &[0.0], 1.0, None), Some(Cube::new(vec![0.0], 1.0)));
        let never = |_: &Cube| false;
        assert_eq!(largest_doubling_below(&mu, &c, &[0.0], 1.0, Some(&never)), None);
    }

    #[test]
    fn largest_doubling_with_mean_predicate() {
        // density 1 away from the origin, density ε near it, f = 1/ε on [1/4, 1/2]
        let eps = 0.1;
        let h = 1.0 / 64.0;
        let mut xs = vec![];
        let mut ms = vec![];
        let mut x: f64 = -2.0;
        while x <= 2.0 + 1e-12 {
            let dens = if x.abs() <= 0.5 { eps } else if x.abs() >= 1.0 { 1.0 } else { 0.0 };
            if dens > 0.0 {
                xs.push(x);
                ms.push(dens * h);
            }
            x += h;
        }
        let mu = line(&xs, &ms, h);
        let c = ctx(&mu);
        let f = FunctionOnSupport::from_fn(&mu, |p| if (0.25..=0.5).contains(&p[0]) { 1.0 / eps } else { 0.0 });
        let lam = 0.5 / eps;
        let pred = |q: &Cube| mu.mean(&f.abs(), q).is_ok_and(|m| m > lam);
        let got = largest_doubling_below(&mu, &c, &[0.3], 1.0, Some(&pred)).unwrap();
        assert_eq!(got, Cube::new(vec![0.3], 0.5));
    }
}
