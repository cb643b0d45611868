//! Browser bindings. Every export returns a JSON string; errors come back
//! as {"error": message}.

use rbmo_core::cauchy::{t1_report, TruncationGrid};
use rbmo_core::coefficients::{k_coeff, k_coeff_radial, NestedCubePair};
use rbmo_core::family::{CubeFamily, FamilySpec};
use rbmo_core::generators::MeasureSpec;
use rbmo_core::measure::{AnalysisContext, Cube};
use rbmo_core::sweeps::ex3_separation;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn respond(r: rbmo_core::Result<Value>) -> String {
    match r {
        Ok(v) => v.to_string(),
        Err(e) => json!({"error": e.to_string()}).to_string(),
    }
}

fn measure(spec: &str) -> rbmo_core::Result<(rbmo_core::measure::DiscreteMeasure, u32)> {
    serde_json::from_str::<MeasureSpec>(spec)?.build()
}

/// RBMO vs BMO_ρ on the ε-weighted line at step h = ε/4.
#[wasm_bindgen]
pub fn ex3_row(eps: f64) -> String {
    respond((|| {
        if !(0.005..=0.5).contains(&eps) {
            return Err(rbmo_core::Error::InvalidArgument("eps must lie in [0.005, 0.5]".into()));
        }
        let row = ex3_separation(&[eps])?.remove(0);
        Ok(serde_json::to_value(row)?)
    })())
}

/// K_{Q,2^k Q} and K″ for k = 0..steps, Q the smallest cube at a support point.
#[wasm_bindgen]
pub fn k_profile(measure_spec: &str, point: usize, steps: u32) -> String {
    respond((|| {
        let (mu, n) = measure(measure_spec)?;
        let ctx = AnalysisContext::for_measure(&mu, n)?;
        let x = mu.point(point.min(mu.len() - 1)).to_vec();
        let q = Cube::new(x.clone(), 2.0 * mu.r_min());
        let rows = (0..=steps.min(30))
            .map(|k| {
                let pair = NestedCubePair::new(q.clone(), q.dilate(2f64.powi(k as i32)))?;
                Ok(json!({
                    "k": k,
                    "side": pair.outer.side,
                    "K": k_coeff(&mu, &ctx, &pair)?,
                    "K_radial": k_coeff_radial(&mu, &ctx, &pair)?,
                }))
            })
            .collect::<rbmo_core::Result<Vec<_>>>()?;
        Ok(json!({"center": x, "c0": ctx.c0, "rows": rows}))
    })())
}

/// sup_Q ∫_Q|C_ε χ_Q|²/μ(2Q) for ε = 2^-3 .. 2^-b on a planar measure.
#[wasm_bindgen]
pub fn t1_curve(measure_spec: &str, b: i32) -> String {
    respond((|| {
        let (mu, _) = measure(measure_spec)?;
        let ctx = AnalysisContext::for_measure(&mu, 1)?;
        let fam = CubeFamily::build(&mu, &ctx, &FamilySpec { max_centers: Some(32), ..Default::default() })?;
        let grid = TruncationGrid::dyadic(&mu, 3, b)?;
        let rep = t1_report(&mu, &fam.cubes(&mu), &grid)?;
        let pts: Vec<Value> = grid.epsilons.iter().map(|&e| json!({"eps": e, "sup": rep.sup_at(e)})).collect();
        Ok(json!({"points": mu.len(), "curve": pts}))
    })())
}
