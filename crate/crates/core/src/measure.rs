//! Finitely supported measures, functions on their support and the
//! basic mass queries.

use std::cmp::Ordering;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed axis-parallel cube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cube {
    pub center: Vec<f64>,
    pub side: f64,
}

impl Cube {
    pub fn new(center: Vec<f64>, side: f64) -> Self {
        Cube { center, side }
    }

    pub fn dilate(&self, s: f64) -> Cube {
        Cube { center: self.center.clone(), side: self.side * s }
    }

    pub fn half(&self) -> f64 {
        self.side / 2.0
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn contains(&self, y: &[f64]) -> bool {
        let h = self.half();
        self.center.iter().zip(y).all(|(c, v)| (v - c).abs() <= h)
    }

    /// Whether `self` fits inside `outer`, up to a relative slack of 1e-12
    /// of the outer side.
    pub fn inside(&self, outer: &Cube) -> bool {
        fits(&self.center, self.side, &outer.center, outer.side)
    }
}

pub(crate) fn fits(inner_c: &[f64], inner_s: f64, outer_c: &[f64], outer_s: f64) -> bool {
    let w = fit_width(inner_s, outer_s);
    inner_c.iter().zip(outer_c).all(|(a, b)| (a - b).abs() <= w)
}

pub(crate) fn fit_width(inner_s: f64, outer_s: f64) -> f64 {
    (outer_s - inner_s) / 2.0 + 1e-12 * outer_s
}

/// Euclidean distance, summing squares coordinate by coordinate.
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub(crate) fn cheb(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| f64::max(m, (x - y).abs()))
}

/// A finite weighted point set in R^d, trusted only down to `r_min`.
#[derive(Debug, Clone)]
pub struct DiscreteMeasure {
    dim: usize,
    coords: Vec<f64>,
    masses: Vec<f64>,
    r_min: f64,
    // indices sorted by first coordinate, and those coordinates
    by_x: Vec<usize>,
    xs: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(dim: usize, points: Vec<Vec<f64>>, masses: Vec<f64>, r_min: f64) -> Result<Self> {
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::InvalidMeasure(format!("every point needs {dim} coordinates")));
        }
        Self::from_flat(dim, points.concat(), masses, r_min)
    }

    pub fn from_flat(dim: usize, coords: Vec<f64>, masses: Vec<f64>, r_min: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidMeasure("dimension must be at least 1".into()));
        }
        if coords.len() != dim * masses.len() {
            return Err(Error::LengthMismatch { expected: dim * masses.len(), found: coords.len() });
        }
        if !(r_min > 0.0 && r_min.is_finite()) {
            return Err(Error::InvalidMeasure(format!("r_min must be positive, got {r_min}")));
        }
        if let Some(m) = masses.iter().find(|m| !(**m > 0.0 && m.is_finite())) {
            return Err(Error::InvalidMeasure(format!("masses must be positive, got {m}")));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidMeasure("non-finite coordinate".into()));
        }
        let n = masses.len();
        let mut by_x: Vec<usize> = (0..n).collect();
        let pt = |i: usize| &coords[i * dim..(i + 1) * dim];
        by_x.sort_by(|&a, &b| lex(pt(a), pt(b)).then(a.cmp(&b)));
        if by_x.windows(2).any(|w| pt(w[0]) == pt(w[1])) {
            return Err(Error::InvalidMeasure("points must be pairwise distinct".into()));
        }
        let xs = by_x.iter().map(|&i| coords[i * dim]).collect();
        Ok(DiscreteMeasure { dim, coords, masses, r_min, by_x, xs })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn r_min(&self) -> f64 {
        self.r_min
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn mass(&self, i: usize) -> f64 {
        self.masses[i]
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks(self.dim)
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// Same points and masses, different resolution.
    pub fn with_r_min(&self, r_min: f64) -> Result<Self> {
        Self::from_flat(self.dim, self.coords.clone(), self.masses.clone(), r_min)
    }

    pub fn index_of(&self, y: &[f64]) -> Option<usize> {
        let lo = self.xs.partition_point(|&x| x < y[0]);
        let hi = self.xs.partition_point(|&x| x <= y[0]);
        self.by_x[lo..hi].iter().copied().find(|&i| self.point(i) == y)
    }

    /// Indices (ascending) of points whose first coordinate may lie within
    /// `r` of `x0`; a superset, callers filter exactly.
    fn strip(&self, x0: f64, r: f64) -> Vec<usize> {
        let pad = 1e-9 * (x0.abs() + r);
        let lo = self.xs.partition_point(|&x| x < x0 - r - pad);
        let hi = self.xs.partition_point(|&x| x <= x0 + r + pad);
        let mut v = self.by_x[lo..hi].to_vec();
        v.sort_unstable();
        v
    }

    /// Support indices inside the closed cube, ascending.
    pub fn cube_members(&self, q: &Cube) -> Vec<usize> {
        let mut v = self.strip(q.center[0], q.half());
        v.retain(|&i| q.contains(self.point(i)));
        v
    }

    pub fn ball_members(&self, x: &[f64], r: f64) -> Vec<usize> {
        let mut v = self.strip(x[0], r);
        v.retain(|&i| dist(self.point(i), x) <= r);
        v
    }

    /// Mass of the closed Euclidean ball B(x, r).
    pub fn ball_mass(&self, x: &[f64], r: f64) -> f64 {
        self.ball_members(x, r).iter().map(|&i| self.masses[i]).sum()
    }

    /// Mass of the closed cube.
    pub fn cube_mass(&self, q: &Cube) -> f64 {
        self.cube_members(q).iter().map(|&i| self.masses[i]).sum()
    }

    /// Largest distance between two support points.
    pub fn support_diameter(&self) -> Result<f64> {
        if self.is_empty() {
            return Err(Error::EmptySupport);
        }
        if self.dim == 1 {
            return Ok(self.xs[self.len() - 1] - self.xs[0]);
        }
        Ok((0..self.len())
            .into_par_iter()
            .map(|i| {
                let p = self.point(i);
                (i + 1..self.len()).fold(0.0, |m, j| f64::max(m, dist(p, self.point(j))))
            })
            .reduce(|| 0.0, f64::max))
    }

    /// A cube centered at the first support point that contains the whole
    /// support. Stands in for "the cube R^d" of a finite measure.
    pub fn whole_cube(&self) -> Result<Cube> {
        let d = self.support_diameter()?;
        Ok(Cube::new(self.point(0).to_vec(), f64::max(2.0 * d, self.r_min)))
    }

    /// The growth constant: max of μ(B(x,r))/r^n over support points x and
    /// radii r ≥ r_min.
    pub fn growth_constant(&self, n: u32) -> Result<f64> {
        if self.is_empty() {
            return Err(Error::EmptySupport);
        }
        let c = (0..self.len())
            .into_par_iter()
            .map(|i| self.growth_at(i, n))
            .reduce(|| 0.0, f64::max);
        Ok(c)
    }

    fn growth_at(&self, i: usize, n: u32) -> f64 {
        let x = self.point(i);
        let mut dm: Vec<(f64, f64)> = if self.dim == 1 {
            // merge the two sorted sides of x
            let p = self.xs.partition_point(|&v| v < x[0]);
            let (mut l, mut r) = (p as isize - 1, p);
            let mut out = Vec::with_capacity(self.len());
            while l >= 0 || r < self.len() {
                let dl = if l >= 0 { x[0] - self.xs[l as usize] } else { f64::INFINITY };
                let dr = if r < self.len() { self.xs[r] - x[0] } else { f64::INFINITY };
                if dl <= dr {
                    out.push((dl.abs(), self.masses[self.by_x[l as usize]]));
                    l -= 1;
                } else {
                    out.push((dr.abs(), self.masses[self.by_x[r]]));
                    r += 1;
                }
            }
            out
        } else {
            let mut v: Vec<(f64, f64)> =
                (0..self.len()).map(|j| (dist(x, self.point(j)), self.masses[j])).collect();
            v.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal));
            v
        };
        let r_min = self.r_min;
        let mut best = 0.0f64;
        let mut acc = 0.0;
        let mut at_rmin = None;
        let k = dm.len();
        for idx in 0..k {
            let (d, m) = dm[idx];
            if d > r_min && at_rmin.is_none() {
                at_rmin = Some(acc);
            }
            acc += m;
            let last_of_group = idx + 1 == k || dm[idx + 1].0 > d;
            if last_of_group && d >= r_min {
                best = best.max(acc / d.powi(n as i32));
            }
        }
        let m0 = at_rmin.unwrap_or(acc);
        dm.clear();
        best.max(m0 / r_min.powi(n as i32))
    }

    /// m_Q(f); fails on a cube with no mass.
    pub fn mean(&self, f: &FunctionOnSupport, q: &Cube) -> Result<f64> {
        let idx = self.cube_members(q);
        let m: f64 = idx.iter().map(|&i| self.masses[i]).sum();
        if m <= 0.0 {
            return Err(Error::EmptyCube);
        }
        let s: f64 = idx.iter().map(|&i| f.values[i] * self.masses[i]).sum();
        Ok(s / m)
    }

    pub fn integral(&self, f: &FunctionOnSupport) -> f64 {
        f.values.iter().zip(&self.masses).map(|(v, m)| v * m).sum()
    }

    pub fn lp_norm(&self, f: &FunctionOnSupport, p: f64) -> f64 {
        let s: f64 = f.values.iter().zip(&self.masses).map(|(v, m)| v.abs().powf(p) * m).sum();
        s.powf(1.0 / p)
    }
}

fn lex(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y) {
            Some(Ordering::Equal) | None => continue,
            Some(o) => return o,
        }
    }
    Ordering::Equal
}

/// One real value per support point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionOnSupport {
    pub values: Vec<f64>,
}

impl FunctionOnSupport {
    pub fn new(values: Vec<f64>) -> Self {
        FunctionOnSupport { values }
    }

    pub fn constant(mu: &DiscreteMeasure, c: f64) -> Self {
        FunctionOnSupport { values: vec![c; mu.len()] }
    }

    pub fn from_fn(mu: &DiscreteMeasure, f: impl Fn(&[f64]) -> f64) -> Self {
        FunctionOnSupport { values: mu.points().map(f).collect() }
    }

    pub fn check(&self, mu: &DiscreteMeasure) -> Result<()> {
        if self.values.len() != mu.len() {
            return Err(Error::LengthMismatch { expected: mu.len(), found: self.values.len() });
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, g: impl Fn(f64) -> f64) -> Self {
        FunctionOnSupport { values: self.values.iter().map(|&v| g(v)).collect() }
    }

    pub fn abs(&self) -> Self {
        self.map(f64::abs)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// One complex value per support point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexFunction {
    pub values: Vec<Complex64>,
}

impl ComplexFunction {
    pub fn new(values: Vec<Complex64>) -> Self {
        ComplexFunction { values }
    }

    pub fn from_real(f: &FunctionOnSupport) -> Self {
        ComplexFunction { values: f.values.iter().map(|&v| Complex64::new(v, 0.0)).collect() }
    }

    pub fn check(&self, mu: &DiscreteMeasure) -> Result<()> {
        if self.values.len() != mu.len() {
            return Err(Error::LengthMismatch { expected: mu.len(), found: self.values.len() });
        }
        Ok(())
    }
}

/// Parameters shared by every computation on a measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisContext {
    /// growth exponent
    pub n: u32,
    /// oscillation dilation
    pub rho: f64,
    /// doubling threshold for factor-2 dilations
    pub beta_d: f64,
    /// cap on K for the regularity sweeps
    pub p0: f64,
    /// growth constant of the measure this context was resolved against
    pub c0: f64,
}

/// Optional overrides for [`AnalysisContext`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContextSpec {
    pub n: Option<u32>,
    pub rho: Option<f64>,
    pub beta_d: Option<f64>,
    pub p0: Option<f64>,
}

impl AnalysisContext {
    /// Defaults: rho = 2, beta_d = 2^(d+1), p0 = max(4, 8·C0·2^n).
    pub fn for_measure(mu: &DiscreteMeasure, n: u32) -> Result<Self> {
        ContextSpec { n: Some(n), ..Default::default() }.resolve(mu)
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.n < 1 || self.n as usize > dim {
            return Err(Error::InvalidContext(format!("need 1 <= n <= d, got n = {}", self.n)));
        }
        if !(self.rho > 1.0) {
            return Err(Error::InvalidContext(format!("rho must exceed 1, got {}", self.rho)));
        }
        if !(self.beta_d > 2f64.powi(self.n as i32)) {
            return Err(Error::InvalidContext(format!("beta_d must exceed 2^n, got {}", self.beta_d)));
        }
        if !(self.p0 > 0.0) {
            return Err(Error::InvalidContext(format!("p0 must be positive, got {}", self.p0)));
        }
        Ok(())
    }
}

impl ContextSpec {
    pub fn resolve(&self, mu: &DiscreteMeasure) -> Result<AnalysisContext> {
        let n = self.n.unwrap_or(mu.dim() as u32);
        if n < 1 || n as usize > mu.dim() {
            return Err(Error::InvalidContext(format!("need 1 <= n <= d, got n = {n}")));
        }
        let c0 = mu.growth_constant(n)?;
        let ctx = AnalysisContext {
            n,
            rho: self.rho.unwrap_or(2.0),
            beta_d: self.beta_d.unwrap_or(2f64.powi(mu.dim() as i32 + 1)),
            p0: self.p0.unwrap_or_else(|| f64::max(4.0, 8.0 * c0 * 2f64.powi(n as i32))),
            c0,
        };
        ctx.validate(mu.dim())?;
        Ok(ctx)
    }
}

/// JSON layout of a measure file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureFile {
    pub d: usize,
    pub n: u32,
    pub r_min: f64,
    pub points: Vec<Vec<f64>>,
    pub masses: Vec<f64>,
}

impl MeasureFile {
    pub fn from_measure(mu: &DiscreteMeasure, n: u32) -> Self {
        MeasureFile {
            d: mu.dim(),
            n,
            r_min: mu.r_min(),
            points: mu.points().map(|p| p.to_vec()).collect(),
            masses: mu.masses().to_vec(),
        }
    }

    pub fn into_measure(self) -> Result<(DiscreteMeasure, u32)> {
        let mu = DiscreteMeasure::new(self.d, self.points, self.masses, self.r_min)?;
        Ok((mu, self.n))
    }
}

/// JSON layout of a function file: real values, or split real/imaginary parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FunctionFile {
    Real { values: Vec<f64> },
    Complex { re: Vec<f64>, im: Vec<f64> },
}

impl FunctionFile {
    pub fn real(&self) -> Result<FunctionOnSupport> {
        match self {
            FunctionFile::Real { values } => Ok(FunctionOnSupport::new(values.clone())),
            FunctionFile::Complex { .. } => {
                Err(Error::InvalidArgument("expected a real function".into()))
            }
        }
    }

    pub fn complex(&self) -> Result<ComplexFunction> {
        match self {
            FunctionFile::Real { values } => {
                Ok(ComplexFunction::from_real(&FunctionOnSupport::new(values.clone())))
            }
            FunctionFile::Complex { re, im } => {
                if re.len() != im.len() {
                    return Err(Error::LengthMismatch { expected: re.len(), found: im.len() });
                }
                Ok(ComplexFunction::new(
                    re.iter().zip(im).map(|(a, b)| Complex64::new(*a, *b)).collect(),
                ))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(xs: &[f64], ms: &[f64], r_min: f64) -> DiscreteMeasure {
        DiscreteMeasure::new(1, xs.iter().map(|&x| vec![x]).collect(), ms.to_vec(), r_min).unwrap()
    }

    #[test]
    fn ball_mass_examples() {
        let mu = DiscreteMeasure::new(2, vec![vec![0.0, 0.0]], vec![2.0], 0.1).unwrap();
        assert_eq!(mu.ball_mass(&[0.0, 0.0], 1.0), 2.0);
        assert_eq!(mu.ball_mass(&[10.0, 0.0], 1.0), 0.0);
        let mu = line(&[0.0, 1.0], &[1.0, 1.0], 0.1);
        assert_eq!(mu.ball_mass(&[0.0], 0.5), 1.0);
        assert_eq!(mu.ball_mass(&[0.0], 1.0), 2.0);
    }

    #[test]
    fn cube_mass_examples() {
        let mu = line(&[0.0], &[1.0], 0.01);
        assert_eq!(mu.cube_mass(&Cube::new(vec![0.0], 0.3)), 1.0);
        let mu = line(&[0.0, 1.0], &[1.0, 1.0], 0.1);
        assert_eq!(mu.cube_mass(&Cube::new(vec![0.5], 1.0)), 2.0);
        assert_eq!(mu.cube_mass(&Cube::new(vec![0.0], 1.9)), 1.0);
    }

    #[test]
    fn growth_examples() {
        let mu = line(&[0.0], &[1.0], 1.0);
        assert_eq!(mu.growth_constant(1).unwrap(), 1.0);
        let mu = line(&[0.0], &[8.0], 2.0);
        assert_eq!(mu.growth_constant(1).unwrap(), 4.0);
        let xs: Vec<f64> = (0..=100).map(|k| k as f64 / 100.0).collect();
        let mu = line(&xs, &vec![0.01; 101], 0.01);
        let c = mu.growth_constant(1).unwrap();
        assert!((1.0..=3.0).contains(&c), "{c}");
        // brute force over every (x, r) candidate
        let mut best = 0.0f64;
        for x in &xs {
            for r in xs.iter().map(|y| (y - x).abs()).chain([0.01]) {
                if r >= 0.01 {
                    best = best.max(mu.ball_mass(&[*x], r) / r);
                }
            }
        }
        assert_eq!(c, best);
    }

    #[test]
    fn growth_in_the_plane_matches_brute_force() {
        let pts = vec![vec![0.0, 0.0], vec![0.3, 0.1], vec![0.3, 0.4], vec![1.0, 1.0]];
        let mu = DiscreteMeasure::new(2, pts.clone(), vec![1.0, 2.0, 0.5, 3.0], 0.2).unwrap();
        let mut best = 0.0f64;
        for x in &pts {
            for r in pts.iter().map(|y| dist(x, y)).chain([0.2]) {
                if r >= 0.2 {
                    best = best.max(mu.ball_mass(x, r) / r);
                }
            }
        }
        assert_eq!(mu.growth_constant(1).unwrap(), best);
    }

    #[test]
    fn mean_examples() {
        let mu = line(&[0.0, 1.0], &[1.0, 1.0], 0.1);
        let q = Cube::new(vec![0.5], 2.0);
        assert_eq!(mu.mean(&FunctionOnSupport::new(vec![0.0, 4.0]), &q).unwrap(), 2.0);
        assert_eq!(mu.mean(&FunctionOnSupport::constant(&mu, 3.5), &q).unwrap(), 3.5);
        let mu = line(&[0.0, 1.0], &[1.0, 3.0], 0.1);
        assert_eq!(mu.mean(&FunctionOnSupport::new(vec![0.0, 4.0]), &q).unwrap(), 3.0);
        let far = Cube::new(vec![5.0], 1.0);
        assert_eq!(mu.mean(&FunctionOnSupport::new(vec![0.0, 4.0]), &far), Err(Error::EmptyCube));
    }

    #[test]
    fn diameter_examples() {
        assert_eq!(line(&[2.0], &[1.0], 0.1).support_diameter().unwrap(), 0.0);
        assert_eq!(line(&[0.0, 3.0], &[1.0, 1.0], 0.1).support_diameter().unwrap(), 3.0);
        let sq = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]];
        let mu = DiscreteMeasure::new(2, sq, vec![1.0; 4], 0.1).unwrap();
        assert_eq!(mu.support_diameter().unwrap(), 2f64.sqrt());
        let empty = DiscreteMeasure::new(1, vec![], vec![], 0.1).unwrap();
        assert_eq!(empty.support_diameter(), Err(Error::EmptySupport));
        assert_eq!(empty.growth_constant(1), Err(Error::EmptySupport));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(DiscreteMeasure::new(1, vec![vec![0.0], vec![0.0]], vec![1.0, 1.0], 0.1).is_err());
        assert!(DiscreteMeasure::new(1, vec![vec![0.0]], vec![0.0], 0.1).is_err());
        assert!(DiscreteMeasure::new(1, vec![vec![0.0]], vec![1.0], 0.0).is_err());
        assert!(DiscreteMeasure::new(2, vec![vec![0.0]], vec![1.0], 0.1).is_err());
    }

    #[test]
    fn context_defaults() {
        let mu = line(&[0.0, 1.0], &[1.0, 1.0], 0.5);
        let ctx = AnalysisContext::for_measure(&mu, 1).unwrap();
        assert_eq!(ctx.rho, 2.0);
        assert_eq!(ctx.beta_d, 4.0);
        assert_eq!(ctx.c0, 2.0);
        assert_eq!(ctx.p0, 32.0);
        let bad = ContextSpec { n: Some(1), beta_d: Some(2.0), ..Default::default() };
        assert!(bad.resolve(&mu).is_err());
    }

    #[test]
    fn function_file_roundtrip() {
        let f: FunctionFile = serde_json::from_str(r#"{"re":[1,2],"im":[0,-1]}"#).unwrap();
        assert_eq!(f.complex().unwrap().values[1], Complex64::new(2.0, -1.0));
        let g: FunctionFile = serde_json::from_str(r#"{"values":[1.5]}"#).unwrap();
        assert_eq!(g.real().unwrap().values, vec![1.5]);
    }
}
