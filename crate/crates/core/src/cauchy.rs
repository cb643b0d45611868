//! Planar Cauchy transform, Menger curvature and the T(1)-type checks.
//! Points (a, b) of a two-dimensional measure are read as a + ib.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use twofloat::TwoFloat;

use crate::error::{Error, Result};
use crate::measure::{dist, AnalysisContext, ComplexFunction, Cube, DiscreteMeasure, FunctionOnSupport};

fn z(p: &[f64]) -> Complex64 {
    Complex64::new(p[0], p[1])
}

pub(crate) fn require_plane(mu: &DiscreteMeasure) -> Result<()> {
    if mu.dim() != 2 {
        return Err(Error::InvalidArgument(format!("expected a planar measure, got d = {}", mu.dim())));
    }
    Ok(())
}

/// Pairwise (tree) summation with a sequential base case.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 16 {
        return v.iter().sum();
    }
    let (a, b) = v.split_at(v.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// Truncation levels, strictly decreasing after flooring at r_min.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationGrid {
    pub epsilons: Vec<f64>,
}

impl TruncationGrid {
    pub fn new(mu: &DiscreteMeasure, eps: &[f64]) -> Result<Self> {
        let epsilons: Vec<f64> = eps.iter().map(|&e| e.max(mu.r_min())).collect();
        if epsilons.is_empty() || epsilons.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidArgument(
                "truncation levels must be strictly decreasing and at least r_min".into(),
            ));
        }
        Ok(TruncationGrid { epsilons })
    }

    /// 2^-a, 2^-(a+1), ..., 2^-b
    pub fn dyadic(mu: &DiscreteMeasure, a: i32, b: i32) -> Result<Self> {
        let e: Vec<f64> = (a..=b).map(|k| 2f64.powi(-k)).collect();
        Self::new(mu, &e)
    }
}

/// C_ε f(x) = Σ_{|x−y|>ε} f(y)·μ({y})/(x − y).
pub fn cauchy_truncated(mu: &DiscreteMeasure, f: &ComplexFunction, eps: f64, x: &[f64]) -> Complex64 {
    let eps = eps.max(mu.r_min());
    let zx = z(x);
    let mut s = Complex64::new(0.0, 0.0);
    for i in 0..mu.len() {
        let y = mu.point(i);
        if dist(x, y) > eps {
            s += f.values[i] * mu.mass(i) / (zx - z(y));
        }
    }
    s
}

/// C_ε f at every support point.
pub fn cauchy_all(mu: &DiscreteMeasure, f: &ComplexFunction, eps: f64) -> Result<Vec<Complex64>> {
    require_plane(mu)?;
    f.check(mu)?;
    Ok((0..mu.len()).into_par_iter().map(|i| cauchy_truncated(mu, f, eps, mu.point(i))).collect())
}

/// T_* over a finite grid: max_ε |C_ε f| at every support point.
pub fn maximal_truncation_all(mu: &DiscreteMeasure, f: &ComplexFunction, grid: &TruncationGrid) -> Result<Vec<f64>> {
    let mut best = vec![0.0f64; mu.len()];
    for &e in &grid.epsilons {
        for (b, v) in best.iter_mut().zip(cauchy_all(mu, f, e)?) {
            *b = b.max(v.norm());
        }
    }
    Ok(best)
}

/// Inverse circumradius of the triangle x, y, z.
pub fn menger_curvature(x: &[f64], y: &[f64], w: &[f64]) -> Result<f64> {
    let (a, b, c) = (dist(x, y), dist(y, w), dist(w, x));
    if a == 0.0 || b == 0.0 || c == 0.0 {
        return Err(Error::CoincidentPoints);
    }
    let cross = (y[0] - x[0]) * (w[1] - x[1]) - (y[1] - x[1]) * (w[0] - x[0]);
    Ok(2.0 * cross.abs() / (a * b * c))
}

/// Σ over the six orderings of 1/((z_{σ1} − z_{σ3})·conj(z_{σ2} − z_{σ3})).
pub fn melnikov_sum(x: &[f64], y: &[f64], w: &[f64]) -> f64 {
    let p = [z(x), z(y), z(w)];
    let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    perms
        .iter()
        .map(|s| (1.0 / ((p[s[0]] - p[s[2]]) * (p[s[1]] - p[s[2]]).conj())).re)
        .sum()
}

/// |melnikov_sum − c²|/c² with both sides evaluated in double-double, so
/// that near-collinear triples do not drown the comparison in rounding.
/// Each ordering contributes Re(conj(u)·v)/(|u|²|v|²).
pub fn melnikov_residual(x: &[f64], y: &[f64], w: &[f64]) -> Result<f64> {
    // Cleared of denominators: twofloat's division only keeps f64 accuracy.
    let p = [x, y, w];
    let diff = |a: usize, b: usize| [TwoFloat::new_sub(p[a][0], p[b][0]), TwoFloat::new_sub(p[a][1], p[b][1])];
    let dot = |u: &[TwoFloat; 2], v: &[TwoFloat; 2]| u[0] * v[0] + u[1] * v[1];
    let (a, b, c) = (diff(1, 0), diff(2, 0), diff(2, 1));
    let (la, lb, lc) = (dot(&a, &a), dot(&b, &b), dot(&c, &c));
    if la == 0.0 || lb == 0.0 || lc == 0.0 {
        return Err(Error::CoincidentPoints);
    }
    let (d0, d1, d2) = (dot(&a, &b), -dot(&a, &c), dot(&b, &c));
    // Each unordered pair appears twice among the six orderings.
    let sum = (d0 * lc + d1 * lb + d2 * la) * 2.0;
    let cross = a[0] * b[1] - a[1] * b[0];
    let c2 = cross * cross * 4.0;
    if c2 == 0.0 {
        return Ok(if sum == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok(((sum - c2).hi() / c2.hi()).abs())
}

/// Σ over ordered triples (x, y, z) of support points in Q with pairwise
/// distances > ε of c(x,y,z)²·a(y)·a(z)·μ(x)μ(y)μ(z).
pub fn curvature_triple_sum(
    mu: &DiscreteMeasure,
    q: &Cube,
    eps: f64,
    a: Option<&FunctionOnSupport>,
) -> Result<f64> {
    require_plane(mu)?;
    if let Some(a) = a {
        a.check(mu)?;
    }
    let eps = eps.max(mu.r_min());
    let idx = mu.cube_members(q);
    let n = idx.len();
    let av: Vec<f64> = idx.iter().map(|&i| a.map_or(1.0, |a| a.values[i])).collect();
    let ms: Vec<f64> = idx.iter().map(|&i| mu.mass(i)).collect();
    let pts: Vec<&[f64]> = idx.iter().map(|&i| mu.point(i)).collect();
    let d: Vec<f64> = (0..n * n).map(|k| dist(pts[k / n], pts[k % n])).collect();
    let partial: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut terms = vec![];
            for j in i + 1..n {
                let dij = d[i * n + j];
                if dij <= eps {
                    continue;
                }
                for k in j + 1..n {
                    let (djk, dki) = (d[j * n + k], d[k * n + i]);
                    if djk <= eps || dki <= eps {
                        continue;
                    }
                    let (p, r, s) = (pts[i], pts[j], pts[k]);
                    let cross = (r[0] - p[0]) * (s[1] - p[1]) - (r[1] - p[1]) * (s[0] - p[0]);
                    let c = 2.0 * cross.abs() / (dij * djk * dki);
                    let w = 2.0 * (av[j] * av[k] + av[i] * av[k] + av[i] * av[j]);
                    terms.push(c * c * w * ms[i] * ms[j] * ms[k]);
                }
            }
            pairwise_sum(&terms)
        })
        .collect();
    Ok(pairwise_sum(&partial))
}

/// The two sides of the curvature identity on Q:
/// lhs = 2∫_Q|C_ε a|² + 4 Re ∫_Q a·C_ε a·conj(C_ε χ_Q), and the triple sum.
/// Transforms are taken with respect to μ restricted to Q.
pub fn curvature_identity(
    mu: &DiscreteMeasure,
    q: &Cube,
    eps: f64,
    a: &FunctionOnSupport,
) -> Result<(f64, f64)> {
    require_plane(mu)?;
    a.check(mu)?;
    let eps = eps.max(mu.r_min());
    let idx = mu.cube_members(q);
    let terms: Vec<f64> = idx
        .par_iter()
        .map(|&i| {
            let zx = z(mu.point(i));
            let mut ca = Complex64::new(0.0, 0.0);
            let mut cq = Complex64::new(0.0, 0.0);
            for &j in &idx {
                if dist(mu.point(i), mu.point(j)) > eps {
                    let k = mu.mass(j) / (zx - z(mu.point(j)));
                    ca += a.values[j] * k;
                    cq += k;
                }
            }
            (2.0 * ca.norm_sqr() + 4.0 * (a.values[i] * ca * cq.conj()).re) * mu.mass(i)
        })
        .collect();
    let lhs = pairwise_sum(&terms);
    Ok((lhs, curvature_triple_sum(mu, q, eps, Some(a))?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CauchyWitness {
    pub center: Vec<f64>,
    pub side: f64,
    pub eps: f64,
}

/// {sup, witness, table: [[side, eps, ratio], ...]}
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CauchyReport {
    pub sup: f64,
    pub witness: Option<CauchyWitness>,
    pub table: Vec<[f64; 3]>,
}

impl CauchyReport {
    /// Sup over the table restricted to one truncation level.
    pub fn sup_at(&self, eps: f64) -> f64 {
        self.table.iter().filter(|r| r[1] == eps).map(|r| r[2]).fold(0.0, f64::max)
    }

    fn push(&mut self, q: &Cube, eps: f64, ratio: f64) {
        self.table.push([q.side, eps, ratio]);
        if self.witness.is_none() || ratio > self.sup {
            self.sup = ratio;
            self.witness = Some(CauchyWitness { center: q.center.clone(), side: q.side, eps });
        }
    }
}

/// C_ε g on the members of Q (μ restricted to Q) for every ε of the grid,
/// in one pass over pairs.
fn restricted_transforms(
    mu: &DiscreteMeasure,
    idx: &[usize],
    g: &[f64],
    grid: &TruncationGrid,
) -> Vec<Vec<Complex64>> {
    let e = &grid.epsilons;
    idx.par_iter()
        .map(|&i| {
            let zx = z(mu.point(i));
            let mut bins = vec![Complex64::new(0.0, 0.0); e.len()];
            for (t, &j) in idx.iter().enumerate() {
                let r = dist(mu.point(i), mu.point(j));
                // first level strictly below r; grid is decreasing
                let b = e.partition_point(|&x| x >= r);
                if b < e.len() {
                    bins[b] += g[t] * mu.mass(j) / (zx - z(mu.point(j)));
                }
            }
            let mut acc = Complex64::new(0.0, 0.0);
            bins.iter()
                .map(|v| {
                    acc += v;
                    acc
                })
                .collect()
        })
        .collect()
}

/// ratio(Q, ε) = ∫_Q |C_ε χ_Q|² dμ / μ(2Q) over the given squares and
/// levels. Squares with identical members are evaluated once.
pub fn t1_report(mu: &DiscreteMeasure, squares: &[Cube], grid: &TruncationGrid) -> Result<CauchyReport> {
    require_plane(mu)?;
    if squares.is_empty() {
        return Err(Error::EmptyFamily);
    }
    let mut rep = CauchyReport { sup: 0.0, witness: None, table: vec![] };
    let mut seen: std::collections::HashMap<Vec<usize>, Vec<f64>> = Default::default();
    for q in squares {
        let idx = mu.cube_members(q);
        let den = mu.cube_mass(&q.dilate(2.0));
        let nums = match seen.get(&idx) {
            Some(v) => v.clone(),
            None => {
                let ones = vec![1.0; idx.len()];
                let tr = restricted_transforms(mu, &idx, &ones, grid);
                let v: Vec<f64> = (0..grid.epsilons.len())
                    .map(|k| pairwise_sum(&idx.iter().zip(&tr).map(|(&i, c)| c[k].norm_sqr() * mu.mass(i)).collect::<Vec<_>>()))
                    .collect();
                seen.insert(idx, v.clone());
                v
            }
        };
        for (k, &e) in grid.epsilons.iter().enumerate() {
            rep.push(q, e, if den > 0.0 { nums[k] / den } else { 0.0 });
        }
    }
    Ok(rep)
}

/// sup over (Q, a, ε) of ∫_Q |C_ε a| dμ / (‖a‖_∞·μ(ρQ)), for real test
/// functions a supported on Q with ‖a‖_∞ ≤ 1.
pub fn uniform_l1_check(
    mu: &DiscreteMeasure,
    ctx: &AnalysisContext,
    tests: &[(Cube, FunctionOnSupport)],
    grid: &TruncationGrid,
) -> Result<CauchyReport> {
    require_plane(mu)?;
    if tests.is_empty() {
        return Err(Error::EmptyFamily);
    }
    let mut rep = CauchyReport { sup: 0.0, witness: None, table: vec![] };
    let mut seen: std::collections::HashMap<Vec<u64>, Vec<f64>> = Default::default();
    for (q, a) in tests {
        a.check(mu)?;
        let sup = a.sup_norm();
        if sup > 1.0 || (0..mu.len()).any(|i| a.values[i] != 0.0 && !q.contains(mu.point(i))) {
            return Err(Error::InvalidArgument("test functions need support in Q and |a| <= 1".into()));
        }
        let idx = mu.cube_members(q);
        let den = mu.cube_mass(&q.dilate(ctx.rho));
        let g: Vec<f64> = idx.iter().map(|&i| a.values[i]).collect();
        let key: Vec<u64> = idx.iter().zip(&g).flat_map(|(&i, v)| [i as u64, v.to_bits()]).collect();
        let nums = match seen.get(&key) {
            Some(v) => v.clone(),
            None => {
                let tr = restricted_transforms(mu, &idx, &g, grid);
                let v: Vec<f64> = (0..grid.epsilons.len())
                    .map(|k| pairwise_sum(&idx.iter().zip(&tr).map(|(&i, c)| c[k].norm() * mu.mass(i)).collect::<Vec<_>>()))
                    .collect();
                seen.insert(key, v.clone());
                v
            }
        };
        for (k, &e) in grid.epsilons.iter().enumerate() {
            let r = if sup > 0.0 { nums[k] / (sup * den) } else { 0.0 };
            rep.push(q, e, r);
        }
    }
    Ok(rep)
}

/// [b, C_ε] f at every support point: b·C_ε f − C_ε(b·f).
pub fn commutator_all(
    mu: &DiscreteMeasure,
    b: &FunctionOnSupport,
    f: &ComplexFunction,
    eps: f64,
) -> Result<Vec<Complex64>> {
    b.check(mu)?;
    let bf = ComplexFunction::new(f.values.iter().zip(&b.values).map(|(v, w)| v * w).collect());
    let cf = cauchy_all(mu, f, eps)?;
    let cbf = cauchy_all(mu, &bf, eps)?;
    Ok((0..mu.len()).map(|i| b.values[i] * cf[i] - cbf[i]).collect())
}

pub fn commutator(
    mu: &DiscreteMeasure,
    b: &FunctionOnSupport,
    f: &ComplexFunction,
    eps: f64,
    x: usize,
) -> Result<Complex64> {
    require_plane(mu)?;
    b.check(mu)?;
    f.check(mu)?;
    if x >= mu.len() {
        return Err(Error::NotInSupport(x));
    }
    let p = mu.point(x);
    let bf = ComplexFunction::new(f.values.iter().zip(&b.values).map(|(v, w)| v * w).collect());
    Ok(b.values[x] * cauchy_truncated(mu, f, eps, p) - cauchy_truncated(mu, &bf, eps, p))
}

/// Discrete L² norm of a complex vector against μ.
pub fn l2_of(mu: &DiscreteMeasure, v: &[Complex64]) -> f64 {
    v.iter().zip(mu.masses()).map(|(x, m)| x.norm_sqr() * m).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plane(pts: &[[f64; 2]], ms: &[f64], r_min: f64) -> DiscreteMeasure {
        DiscreteMeasure::new(2, pts.iter().map(|p| p.to_vec()).collect(), ms.to_vec(), r_min).unwrap()
    }

    fn ones(mu: &DiscreteMeasure) -> ComplexFunction {
        ComplexFunction::from_real(&FunctionOnSupport::constant(mu, 1.0))
    }

    #[test]
    fn cauchy_examples() {
        let mu = plane(&[[0.0, 0.0], [1.0, 0.0]], &[1.0, 1.0], 0.1);
        let f = ones(&mu);
        assert_eq!(cauchy_truncated(&mu, &f, 0.5, &[0.0, 0.0]), Complex64::new(-1.0, 0.0));
        assert_eq!(cauchy_truncated(&mu, &f, 5.0, &[0.0, 0.0]), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn antisymmetry_on_a_square() {
        let pts: Vec<[f64; 2]> = (0..40).map(|k| [(k as f64 * 0.37).sin(), (k as f64 * 0.91).cos()]).collect();
        let mu = plane(&pts, &vec![0.025; 40], 1e-3);
        let q = Cube::new(vec![0.0, 0.0], 1.5);
        let idx = mu.cube_members(&q);
        let grid = TruncationGrid::new(&mu, &[0.3, 0.1]).unwrap();
        let tr = restricted_transforms(&mu, &idx, &vec![1.0; idx.len()], &grid);
        for k in 0..2 {
            let re: f64 = idx.iter().zip(&tr).map(|(&i, c)| c[k].re * mu.mass(i)).sum();
            assert!(re.abs() < 1e-12, "{re}");
        }
    }

    #[test]
    fn curvature_examples() {
        assert_eq!(menger_curvature(&[0.0, 0.0], &[1.0, 0.0], &[3.0, 0.0]).unwrap(), 0.0);
        let h = 3f64.sqrt() / 2.0;
        let c = menger_curvature(&[0.0, 0.0], &[1.0, 0.0], &[0.5, h]).unwrap();
        assert!((c - 3f64.sqrt()).abs() < 1e-14);
        let c = menger_curvature(&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert!((c - 2f64.sqrt()).abs() < 1e-14);
        assert_eq!(menger_curvature(&[0.0, 0.0], &[0.0, 0.0], &[1.0, 1.0]), Err(Error::CoincidentPoints));
    }

    #[test]
    fn melnikov_matches_circumradius() {
        let t = [[0.1, 0.2], [1.3, -0.4], [0.7, 2.0]];
        let c = menger_curvature(&t[0], &t[1], &t[2]).unwrap();
        assert!((melnikov_sum(&t[0], &t[1], &t[2]) - c * c).abs() < 1e-12 * c * c);
        let res = melnikov_residual(&t[0], &t[1], &t[2]).unwrap();
        assert!(res < 1e-25, "{res}");
        // nearly collinear: plain f64 loses digits, double-double does not
        let (a, b, z) = ([0.0, 0.0], [1.0, 1e-7], [2.0, 0.0]);
        assert!(melnikov_residual(&a, &b, &z).unwrap() < 1e-12);
    }

    #[test]
    fn triple_sum_examples() {
        let h = 3f64.sqrt() / 2.0;
        let mu = plane(&[[0.0, 0.0], [1.0, 0.0], [0.5, h]], &[1.0; 3], 0.1);
        let q = Cube::new(vec![0.5, 0.5], 4.0);
        let s = curvature_triple_sum(&mu, &q, 0.5, None).unwrap();
        assert!((s - 18.0).abs() < 1e-12);
        let line = plane(&[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]], &[1.0; 3], 0.1);
        assert_eq!(curvature_triple_sum(&line, &q, 0.5, None).unwrap(), 0.0);
        let two = plane(&[[0.0, 0.0], [1.0, 0.0]], &[1.0; 2], 0.1);
        assert_eq!(curvature_triple_sum(&two, &q, 0.5, None).unwrap(), 0.0);
    }

    #[test]
    fn commutator_examples() {
        let mu = plane(&[[0.0, 0.0], [1.0, 0.0]], &[1.0, 1.0], 0.1);
        let f = ones(&mu);
        let c = FunctionOnSupport::constant(&mu, 3.0);
        assert!(commutator_all(&mu, &c, &f, 0.5).unwrap().iter().all(|v| v.norm() == 0.0));
        // b = (0, 1): at 0, 0·(−1) − 1/(0 − 1) = 1; at 1, 1·1 − 0 = 1
        let b = FunctionOnSupport::new(vec![0.0, 1.0]);
        assert_eq!(commutator(&mu, &b, &f, 0.5, 0).unwrap(), Complex64::new(1.0, 0.0));
        assert_eq!(commutator(&mu, &b, &f, 0.5, 1).unwrap(), Complex64::new(1.0, 0.0));
        assert_eq!(commutator(&mu, &b, &f, 0.5, 2), Err(Error::NotInSupport(2)));
    }

    #[test]
    fn single_point_reports_zero() {
        let mu = plane(&[[0.0, 0.0]], &[1.0], 0.1);
        let grid = TruncationGrid::new(&mu, &[0.5, 0.2]).unwrap();
        let rep = t1_report(&mu, &[Cube::new(vec![0.0, 0.0], 1.0)], &grid).unwrap();
        assert_eq!(rep.sup, 0.0);
        let ctx = AnalysisContext::for_measure(&mu, 1).unwrap();
        let tests = vec![(Cube::new(vec![0.0, 0.0], 1.0), FunctionOnSupport::new(vec![1.0]))];
        assert_eq!(uniform_l1_check(&mu, &ctx, &tests, &grid).unwrap().sup, 0.0);
    }

    #[test]
    fn grid_rules() {
        let mu = plane(&[[0.0, 0.0]], &[1.0], 0.1);
        assert!(TruncationGrid::new(&mu, &[0.5, 0.5]).is_err());
        assert!(TruncationGrid::new(&mu, &[0.05, 0.01]).is_err());
        assert_eq!(TruncationGrid::new(&mu, &[0.5, 0.05]).unwrap().epsilons, vec![0.5, 0.1]);
    }
}
