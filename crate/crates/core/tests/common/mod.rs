#![allow(dead_code)]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rbmo_core::family::{CubeFamily, FamilySpec};
use rbmo_core::measure::{AnalysisContext, DiscreteMeasure, FunctionOnSupport};
use rbmo_core::sweeps::{random_function, random_measure};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Small random measure with context and full family.
pub struct Setup {
    pub mu: DiscreteMeasure,
    pub ctx: AnalysisContext,
    pub fam: CubeFamily,
    pub f: FunctionOnSupport,
}

pub fn setup(seed: u64, dim: usize, n: usize) -> Setup {
    let mut r = rng(seed);
    let mu = random_measure(&mut r, dim, n);
    let ctx = AnalysisContext::for_measure(&mu, 1).unwrap();
    let fam = CubeFamily::build(&mu, &ctx, &FamilySpec::default()).unwrap();
    let f = random_function(&mut r, &mu);
    Setup { mu, ctx, fam, f }
}

pub fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
}
