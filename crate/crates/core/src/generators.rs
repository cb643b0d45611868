//! Builtin measures and test functions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{dist, Cube, DiscreteMeasure, FunctionFile, FunctionOnSupport, MeasureFile};

pub const GENERATORS: [&str; 4] = ["segment", "square", "eps_weighted", "cantor4"];

fn one() -> usize {
    1
}

/// A builtin generator with its parameters, or a measure file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasureSpec {
    /// n points k/(n−1) on [0, 1], masses 1/n, r_min = 1/n; embedded on the
    /// real axis when dim = 2.
    Segment {
        n: usize,
        #[serde(default = "one")]
        dim: usize,
    },
    /// n×n grid on [0, 1]², masses 1/n², r_min = 1/n.
    Square { n: usize },
    /// density 1 on [−2,−1] ∪ [1,2] sampled at step h, density eps on
    /// [−1/2, 1/2] sampled at step h/eps; every mass is h, r_min = h.
    EpsWeighted {
        h: f64,
        eps: f64,
        #[serde(default = "one")]
        dim: usize,
    },
    /// centers of the 4^G squares of side 4^−G left after G steps of
    /// keeping the four corner quarters; masses 4^−G, r_min = 4^−G.
    Cantor4 { generation: u32 },
    File { path: String },
}

impl MeasureSpec {
    /// Builds the measure and its growth exponent n.
    pub fn build(&self) -> Result<(DiscreteMeasure, u32)> {
        match *self {
            MeasureSpec::Segment { n, dim } => segment(n, dim),
            MeasureSpec::Square { n } => square(n),
            MeasureSpec::EpsWeighted { h, eps, dim } => eps_weighted(h, eps, dim),
            MeasureSpec::Cantor4 { generation } => cantor4(generation),
            MeasureSpec::File { ref path } => {
                let text = std::fs::read_to_string(path)?;
                serde_json::from_str::<MeasureFile>(&text)?.into_measure()
            }
        }
    }
}

/// `generate_measure("segment", {"n": 3})` and so on.
pub fn generate_measure(name: &str, params: &serde_json::Value) -> Result<(DiscreteMeasure, u32)> {
    if !GENERATORS.contains(&name) {
        return Err(Error::UnknownGenerator(name.to_string()));
    }
    let mut obj = match params {
        serde_json::Value::Object(m) => m.clone(),
        serde_json::Value::Null => Default::default(),
        _ => return Err(Error::InvalidArgument("generator parameters must be an object".into())),
    };
    obj.insert("generator".into(), name.into());
    serde_json::from_value::<MeasureSpec>(obj.into())?.build()
}

fn embed(x: f64, dim: usize) -> Vec<f64> {
    let mut p = vec![0.0; dim];
    p[0] = x;
    p
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 1 || dim == 2 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("dim must be 1 or 2, got {dim}")))
    }
}

pub fn segment(n: usize, dim: usize) -> Result<(DiscreteMeasure, u32)> {
    check_dim(dim)?;
    if n == 0 {
        return Err(Error::EmptySupport);
    }
    let step = if n > 1 { 1.0 / (n - 1) as f64 } else { 0.0 };
    let pts = (0..n).map(|k| embed(k as f64 * step, dim)).collect();
    Ok((DiscreteMeasure::new(dim, pts, vec![1.0 / n as f64; n], 1.0 / n as f64)?, 1))
}

pub fn square(n: usize) -> Result<(DiscreteMeasure, u32)> {
    if n == 0 {
        return Err(Error::EmptySupport);
    }
    let step = if n > 1 { 1.0 / (n - 1) as f64 } else { 0.0 };
    let mut pts = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            pts.push(vec![i as f64 * step, j as f64 * step]);
        }
    }
    let m = 1.0 / (n * n) as f64;
    Ok((DiscreteMeasure::new(2, pts, vec![m; n * n], 1.0 / n as f64)?, 1))
}

fn whole(x: f64, what: &str) -> Result<usize> {
    let k = x.round();
    if !(k >= 1.0) || (x - k).abs() > 1e-9 * k {
        return Err(Error::InvalidArgument(format!("{what} must be a positive integer, got {x}")));
    }
    Ok(k as usize)
}

pub fn eps_weighted(h: f64, eps: f64, dim: usize) -> Result<(DiscreteMeasure, u32)> {
    check_dim(dim)?;
    if !(h > 0.0) || !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidArgument("need h > 0 and 0 < eps <= 1".into()));
    }
    let k_unit = whole(1.0 / h, "1/h")?;
    let k_eps = whole(eps / h, "eps/h")?;
    let mut xs: Vec<f64> = (0..=k_unit).map(|k| -2.0 + k as f64 / k_unit as f64).collect();
    xs.extend((0..=k_eps).map(|k| -0.5 + k as f64 / k_eps as f64));
    xs.extend((0..=k_unit).map(|k| 1.0 + k as f64 / k_unit as f64));
    let n = xs.len();
    let pts = xs.into_iter().map(|x| embed(x, dim)).collect();
    Ok((DiscreteMeasure::new(dim, pts, vec![h; n], h)?, 1))
}

pub fn cantor4(generation: u32) -> Result<(DiscreteMeasure, u32)> {
    if generation > 10 {
        return Err(Error::InvalidArgument("cantor4 generation above 10".into()));
    }
    let mut corners = vec![(0.0f64, 0.0f64)];
    let mut side = 1.0;
    for _ in 0..generation {
        side /= 4.0;
        let off = 3.0 * side;
        corners = corners
            .iter()
            .flat_map(|&(x, y)| [(x, y), (x + off, y), (x, y + off), (x + off, y + off)])
            .collect();
    }
    let n = corners.len();
    let pts = corners.iter().map(|&(x, y)| vec![x + side / 2.0, y + side / 2.0]).collect();
    Ok((DiscreteMeasure::new(2, pts, vec![1.0 / n as f64; n], side)?, 1))
}

/// Builtin functions on the support, or a function file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "builtin", rename_all = "snake_case", deny_unknown_fields)]
pub enum FunctionSpec {
    Constant { value: f64 },
    /// eps^−1 (χ_[1/4,1/2] − χ_[−1/2,−1/4]) in the first coordinate
    Ex3 { eps: f64 },
    Indicator { center: Vec<f64>, side: f64 },
    Coordinate { axis: usize },
    /// log of the distance to `center`, floored at r_min
    LogDistance { center: Vec<f64> },
    /// independent standard normal values
    Noise { seed: u64 },
    /// standard normal values times an envelope that is `amplitude` on
    /// `count` random cubes of side `side` and 1 elsewhere
    Hotspot { seed: u64, count: usize, side: f64, amplitude: f64 },
    File { path: String },
}

impl FunctionSpec {
    pub fn build(&self, mu: &DiscreteMeasure) -> Result<FunctionOnSupport> {
        let f = match self {
            FunctionSpec::Constant { value } => FunctionOnSupport::constant(mu, *value),
            FunctionSpec::Ex3 { eps } => FunctionOnSupport::from_fn(mu, |p| {
                let x = p[0];
                if (0.25..=0.5).contains(&x) {
                    1.0 / eps
                } else if (-0.5..=-0.25).contains(&x) {
                    -1.0 / eps
                } else {
                    0.0
                }
            }),
            FunctionSpec::Indicator { center, side } => {
                let q = Cube::new(center.clone(), *side);
                FunctionOnSupport::from_fn(mu, |p| if q.contains(p) { 1.0 } else { 0.0 })
            }
            FunctionSpec::Coordinate { axis } => {
                if *axis >= mu.dim() {
                    return Err(Error::InvalidArgument(format!("axis {axis} out of range")));
                }
                FunctionOnSupport::from_fn(mu, |p| p[*axis])
            }
            FunctionSpec::LogDistance { center } => {
                if center.len() != mu.dim() {
                    return Err(Error::LengthMismatch { expected: mu.dim(), found: center.len() });
                }
                FunctionOnSupport::from_fn(mu, |p| dist(p, center).max(mu.r_min()).ln())
            }
            FunctionSpec::Noise { seed } => noise(mu, *seed),
            FunctionSpec::Hotspot { seed, count, side, amplitude } => hotspot(mu, *seed, *count, *side, *amplitude),
            FunctionSpec::File { path } => {
                let text = std::fs::read_to_string(path)?;
                serde_json::from_str::<FunctionFile>(&text)?.real()?
            }
        };
        f.check(mu)?;
        Ok(f)
    }
}

pub fn noise(mu: &DiscreteMeasure, seed: u64) -> FunctionOnSupport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    FunctionOnSupport::new((0..mu.len()).map(|_| rng.sample(StandardNormal)).collect())
}

pub fn hotspot(mu: &DiscreteMeasure, seed: u64, count: usize, side: f64, amplitude: f64) -> FunctionOnSupport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g: Vec<f64> = (0..mu.len()).map(|_| rng.sample(StandardNormal)).collect();
    let spots: Vec<Cube> = (0..count)
        .map(|_| Cube::new(mu.point(rng.gen_range(0..mu.len().max(1))).to_vec(), side))
        .collect();
    FunctionOnSupport::new(
        (0..mu.len())
            .map(|i| {
                let hot = spots.iter().any(|q| q.contains(mu.point(i)));
                g[i] * if hot { amplitude } else { 1.0 }
            })
            .collect(),
    )
}
