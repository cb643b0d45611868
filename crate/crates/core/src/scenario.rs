//! Scenario files: one measure, an optional function, a context, a cube
//! family and a command. `run` turns a scenario into a JSON report and a
//! CSV series.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::cauchy::{self, TruncationGrid};
use crate::coefficients::{k_coeff, k_coeff_radial};
use crate::cz::cz_decompose;
use crate::error::{Error, Result};
use crate::family::{CubeFamily, FamilySpec};
use crate::generators::{FunctionSpec, MeasureSpec};
use crate::maximal;
use crate::measure::{AnalysisContext, ComplexFunction, ContextSpec, Cube, DiscreteMeasure, FunctionOnSupport};
use crate::norms::{self, AtomicBlock};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub measure: MeasureSpec,
    #[serde(default)]
    pub function: Option<FunctionSpec>,
    #[serde(default)]
    pub context: ContextSpec,
    #[serde(default)]
    pub family: FamilySpec,
    pub command: Command,
    /// drives the random draws of the command
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub outputs: Outputs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    pub report: String,
    pub csv: String,
    pub timings: String,
}

impl Default for Outputs {
    fn default() -> Self {
        Outputs { report: "report.json".into(), csv: "series.csv".into(), timings: "timings.json".into() }
    }
}

fn d_pairs() -> usize {
    200
}
fn d_p() -> Vec<f64> {
    vec![2.0]
}
fn d_rhos() -> Vec<f64> {
    vec![2.0, 5.0]
}
fn d_two() -> f64 {
    2.0
}
fn d_eta() -> f64 {
    1.5
}
fn d_one() -> f64 {
    1.0
}
fn d_ladder() -> [i32; 2] {
    [3, 9]
}
fn d_true() -> bool {
    true
}
fn d_draws() -> usize {
    10
}
fn d_max_points() -> usize {
    400
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Command {
    /// C0 of the growth condition; fails validation above `max_c0`.
    GrowthCheck {
        #[serde(default)]
        max_c0: Option<f64>,
    },
    /// K_{Q,R} and K″ on random nested pairs of the family.
    KSweep {
        #[serde(default = "d_pairs")]
        pairs: usize,
        #[serde(default)]
        max_outer_side: Option<f64>,
    },
    /// all norms of the function
    Rbmo {
        #[serde(default = "d_p")]
        p: Vec<f64>,
        #[serde(default = "d_rhos")]
        rho: Vec<f64>,
    },
    /// tail μ{|f − m_{Q̃}f| > λ}/μ(ρQ); λ defaults to k/4·‖f‖_*, k = 1..20
    JnTail {
        #[serde(default)]
        lambdas: Option<Vec<f64>>,
        #[serde(default)]
        cube: Option<Cube>,
    },
    Maximal {
        #[serde(default = "d_two")]
        p: f64,
        #[serde(default = "d_eta")]
        eta: f64,
    },
    Cz {
        lambda: f64,
        #[serde(default = "d_one")]
        p: f64,
        /// include weights, φ_i, g and the blocks
        #[serde(default)]
        full: bool,
    },
    /// ∫_Q|C_ε χ_Q|²/μ(2Q) on the family squares for ε = 2^−a..2^−b
    T1 {
        #[serde(default)]
        eps: Option<Vec<f64>>,
        #[serde(default = "d_ladder")]
        dyadic: [i32; 2],
        #[serde(default = "d_true")]
        uniform_l1: bool,
    },
    Curvature {
        eps: f64,
        #[serde(default)]
        cube: Option<Cube>,
        #[serde(default)]
        melnikov_triples: usize,
        #[serde(default = "d_max_points")]
        max_points: usize,
    },
    /// ‖[b, C_ε]f‖_2/‖f‖_2 with b the scenario function, f random
    Commutator {
        #[serde(default)]
        eps: Option<Vec<f64>>,
        #[serde(default = "d_ladder")]
        dyadic: [i32; 2],
        #[serde(default = "d_draws")]
        draws: usize,
    },
    EquivalenceSweep {
        #[serde(default = "d_two")]
        p: f64,
    },
    /// validates an atomic block file; pairs it with the function if present
    BlockCheck { block: String },
}

impl Command {
    fn needs_function(&self) -> bool {
        matches!(
            self,
            Command::Rbmo { .. }
                | Command::JnTail { .. }
                | Command::Maximal { .. }
                | Command::Cz { .. }
                | Command::Commutator { .. }
                | Command::EquivalenceSweep { .. }
        )
    }

    fn is_planar(&self) -> bool {
        matches!(self, Command::T1 { .. } | Command::Curvature { .. } | Command::Commutator { .. })
    }
}

/// Result of a run. `valid` is false when a check failed (exit code 2).
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub report: Value,
    pub csv: String,
    pub timings: Value,
    pub valid: bool,
}

impl RunOutput {
    /// Pretty JSON with a trailing newline.
    pub fn report_text(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.report).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, dir: &Path, outputs: &Outputs) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(&outputs.report), self.report_text())?;
        std::fs::write(dir.join(&outputs.csv), &self.csv)?;
        let mut t = serde_json::to_string_pretty(&self.timings)?;
        t.push('\n');
        std::fs::write(dir.join(&outputs.timings), t)?;
        Ok(())
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

struct Timer {
    start: Instant,
    marks: Vec<(String, f64)>,
}

impl Timer {
    fn mark(&mut self, what: &str) {
        self.marks.push((what.into(), self.start.elapsed().as_secs_f64()));
        self.start = Instant::now();
    }
}

struct Setup {
    mu: DiscreteMeasure,
    ctx: AnalysisContext,
    f: Option<FunctionOnSupport>,
    family: FamilySpec,
}

impl Setup {
    fn f(&self) -> Result<&FunctionOnSupport> {
        self.f.as_ref().ok_or_else(|| Error::InvalidArgument("this command needs a function".into()))
    }

    fn fam(&self) -> Result<CubeFamily> {
        CubeFamily::build(&self.mu, &self.ctx, &self.family)
    }
}

fn grid(mu: &DiscreteMeasure, eps: &Option<Vec<f64>>, dyadic: [i32; 2]) -> Result<TruncationGrid> {
    match eps {
        Some(e) => TruncationGrid::new(mu, e),
        None => TruncationGrid::dyadic(mu, dyadic[0], dyadic[1]),
    }
}

/// Least-squares slope of ln(tail) against λ/norm, up to and including the
/// first λ where the tail vanishes (counted at `floor`).
pub fn log_tail_slope(tail: &[(f64, f64)], norm: f64, floor: f64) -> Option<f64> {
    let mut pts = vec![];
    for &(l, t) in tail {
        // a vanishing tail sits below the resolution of the measure
        pts.push((l / norm, t.max(floor).ln()));
        if t <= 0.0 {
            break;
        }
    }
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Smallest positive value a tail on `q` can take.
pub fn tail_floor(mu: &DiscreteMeasure, ctx: &AnalysisContext, q: &Cube) -> f64 {
    let m = mu.cube_members(q).iter().map(|&i| mu.mass(i)).fold(f64::INFINITY, f64::min);
    m / mu.cube_mass(&q.dilate(ctx.rho))
}

fn csv_row(out: &mut String, vals: &[f64]) {
    let row: Vec<String> = vals.iter().map(|v| v.to_string()).collect();
    let _ = writeln!(out, "{}", row.join(","));
}

/// Executes the scenario. Input problems are errors; failed checks give
/// `valid = false`, and certificate failures surface as
/// [`Error::Certificate`].
pub fn run(sc: &Scenario) -> Result<RunOutput> {
    let mut timer = Timer { start: Instant::now(), marks: vec![] };
    let (mu, n) = sc.measure.build()?;
    let ctx_spec = ContextSpec { n: sc.context.n.or(Some(n)), ..sc.context.clone() };
    let ctx = ctx_spec.resolve(&mu)?;
    if sc.command.is_planar() && (mu.dim() != 2 || ctx.n != 1) {
        return Err(Error::InvalidArgument("this command needs a planar measure with n = 1".into()));
    }
    let f = match &sc.function {
        Some(spec) => Some(spec.build(&mu)?),
        None if sc.command.needs_function() => {
            return Err(Error::InvalidArgument("this command needs a function".into()))
        }
        None => None,
    };
    let mut family = sc.family.clone();
    if sc.command.is_planar() && family.max_centers.is_none() {
        family.max_centers = Some(64);
    }
    timer.mark("setup");
    let s = Setup { mu, ctx, f, family };
    let mut csv = String::new();
    let mut valid = true;
    let outputs = command(sc, &s, &mut csv, &mut valid)?;
    timer.mark("command");

    let mut echo = sc.clone();
    echo.context = ContextSpec { n: Some(s.ctx.n), rho: Some(s.ctx.rho), beta_d: Some(s.ctx.beta_d), p0: Some(s.ctx.p0) };
    echo.family = s.family.clone();
    let report = json!({
        "scenario": echo,
        "measure": {
            "d": s.mu.dim(),
            "points": s.mu.len(),
            "r_min": s.mu.r_min(),
            "total_mass": s.mu.total_mass(),
        },
        "calibration": {"c0": s.ctx.c0, "p0": s.ctx.p0, "beta_d": s.ctx.beta_d},
        "outputs": outputs,
        "status": if valid { "ok" } else { "validation_failed" },
    });
    let timings = Value::Object(timer.marks.into_iter().map(|(k, v)| (k, json!(v))).collect());
    Ok(RunOutput { report, csv, timings, valid })
}

fn command(sc: &Scenario, s: &Setup, csv: &mut String, valid: &mut bool) -> Result<Value> {
    let (mu, ctx) = (&s.mu, &s.ctx);
    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
    Ok(match &sc.command {
        Command::GrowthCheck { max_c0 } => {
            if let Some(m) = max_c0 {
                *valid = ctx.c0 <= *m;
            }
            json!({"c0": ctx.c0, "n": ctx.n, "diameter": mu.support_diameter()?})
        }
        Command::KSweep { pairs, max_outer_side } => {
            let fam = s.fam()?;
            let all = fam.sample_pairs(mu, &mut rng, *pairs, max_outer_side.unwrap_or(f64::INFINITY));
            if all.is_empty() {
                return Err(Error::EmptyFamily);
            }
            let rows: Vec<[f64; 5]> = all
                .iter()
                .map(|&(q, r)| {
                    let pair = fam.nested_pair(mu, q, r)?;
                    let kq = k_coeff(mu, ctx, &pair)?;
                    let kr = k_coeff_radial(mu, ctx, &pair)?;
                    let steps = (pair.outer.side / pair.inner.side).log2();
                    Ok([pair.inner.side, pair.outer.side, kq, kr, kq / (1.0 + steps)])
                })
                .collect::<Result<_>>()?;
            csv.push_str("q_side,r_side,k,k_radial,k_over_log\n");
            for r in &rows {
                csv_row(csv, r);
            }
            let col = |j: usize| rows.iter().map(move |r| r[j]);
            json!({
                "pairs": rows.len(),
                "k_max": col(2).fold(f64::MIN, f64::max),
                "k_radial_max": col(3).fold(f64::MIN, f64::max),
                "k_over_log_min": col(4).fold(f64::MAX, f64::min),
                "k_over_log_max": col(4).fold(f64::MIN, f64::max),
            })
        }
        Command::Rbmo { p, rho } => {
            let (f, fam) = (s.f()?, s.fam()?);
            let star = norms::rbmo_star(mu, ctx, f, &fam)?;
            let mut rp = serde_json::Map::new();
            for &q in p {
                rp.insert(q.to_string(), serde_json::to_value(norms::rbmo_p(mu, ctx, f, &fam, q)?)?);
            }
            let mut br = serde_json::Map::new();
            for &r in rho {
                br.insert(r.to_string(), serde_json::to_value(norms::bmo_rho(mu, f, &fam, r)?)?);
            }
            csv.push_str("norm,value\n");
            let _ = writeln!(csv, "rbmo_star,{}", star.value);
            json!({
                "rbmo_star": star,
                "rbmo_doublestar": norms::rbmo_doublestar(mu, ctx, f, &fam)?,
                "circ_norm": norms::circ_norm(mu, ctx, f, &fam)?,
                "rbmo_p": rp,
                "bmo_rho": br,
                "sup_norm": f.sup_norm(),
            })
        }
        Command::JnTail { lambdas, cube } => {
            let (f, fam) = (s.f()?, s.fam()?);
            let norm = norms::rbmo_star(mu, ctx, f, &fam)?.value;
            let q = match cube {
                Some(q) => q.clone(),
                None => mu.whole_cube()?,
            };
            let lams = lambdas.clone().unwrap_or_else(|| (1..=20).map(|k| k as f64 * 0.25 * norm).collect());
            let tail = norms::jn_tail(mu, ctx, f, &q, &lams)?;
            csv.push_str("lambda,tail\n");
            for &(l, t) in &tail {
                csv_row(csv, &[l, t]);
            }
            json!({"rbmo_star": norm, "cube": q, "tail": tail, "slope": if norm > 0.0 { log_tail_slope(&tail, norm, tail_floor(mu, ctx, &q)) } else { None }})
        }
        Command::Maximal { p, eta } => {
            let (f, fam) = (s.f()?, s.fam()?);
            let sharp = maximal::sharp_maximal_all(mu, ctx, f, &fam)?;
            let sharp_abs = maximal::sharp_maximal_all(mu, ctx, &f.abs(), &fam)?;
            let dbl = maximal::doubling_maximal_all(mu, f, &fam)?;
            let rad = maximal::radial_maximal_all(mu, f, 2.0, &fam)?;
            let upper = maximal::upper_radial_maximal_all(mu, f, ctx.rho, &fam)?;
            let pm = maximal::p_maximal_all(mu, f, *p, *eta, &fam)?;
            csv.push_str("point,sharp,doubling,radial_2,upper_radial,p_maximal\n");
            for i in 0..mu.len() {
                csv_row(csv, &[i as f64, sharp[i], dbl[i], rad[i], upper[i], pm[i]]);
            }
            let n_viol = (0..mu.len()).filter(|&i| dbl[i] > ctx.beta_d * rad[i]).count();
            let s_viol = (0..mu.len()).filter(|&i| sharp_abs[i] > 5.0 * ctx.beta_d * sharp[i]).count();
            let summary = |v: &[f64]| json!({"max": v.iter().cloned().fold(0.0, f64::max), "lp": maximal::lp_of(mu, v, *p)});
            json!({
                "sharp": summary(&sharp),
                "doubling": summary(&dbl),
                "radial_2": summary(&rad),
                "upper_radial": summary(&upper),
                "p_maximal": summary(&pm),
                "violations": {"doubling_vs_radial": n_viol, "sharp_of_abs": s_viol},
            })
        }
        Command::Cz { lambda, p, full } => {
            let f = s.f()?;
            let dec = cz_decompose(mu, ctx, f, *p, *lambda)?;
            let b = dec.bad_part(mu);
            let recon = (0..mu.len())
                .map(|i| (dec.good.values[i] + b.values[i] - f.values[i]).abs())
                .fold(0.0, f64::max);
            let cubes: Vec<Value> = dec
                .stopping_cubes
                .iter()
                .zip(&dec.companions)
                .map(|(q, r)| json!({"cube": q, "companion": r}))
                .collect();
            csv.push_str("index,side,companion_side,lambda_q,lambda_r\n");
            for (i, blk) in dec.bad_blocks.iter().enumerate() {
                csv_row(
                    csv,
                    &[i as f64, dec.stopping_cubes[i].side, dec.companions[i].side, blk.pieces[0].lambda, blk.pieces[1].lambda],
                );
            }
            let mut v = json!({
                "blocks": dec.bad_blocks.len(),
                "cubes": cubes,
                "certificates": {
                    "reconstruction_error": recon,
                    "good_sup": dec.good.sup_norm(),
                    "max_overlap": dec.max_overlap,
                    "k_max": dec.k_max,
                    "h1_upper": dec.h1_upper,
                    "b_used": dec.b_used,
                    "cc6_constant": dec.cc6_constant,
                    "cc7_ratio": dec.cc7_ratio,
                },
            });
            if *full {
                v["decomposition"] = serde_json::to_value(&dec)?;
            }
            v
        }
        Command::T1 { eps, dyadic, uniform_l1 } => {
            let g = grid(mu, eps, *dyadic)?;
            let squares = s.fam()?.cubes(mu);
            let rep = cauchy::t1_report(mu, &squares, &g)?;
            csv.push_str("side,eps,ratio\n");
            for r in &rep.table {
                csv_row(csv, r);
            }
            let sups: Vec<f64> = g.epsilons.iter().map(|&e| rep.sup_at(e)).collect();
            let mut v = json!({"epsilons": g.epsilons, "sup_by_eps": sups, "t1": rep});
            if *uniform_l1 {
                let signs: Vec<f64> = (0..mu.len()).map(|_| if rng.gen::<bool>() { -1.0 } else { 1.0 }).collect();
                let tests: Vec<(Cube, FunctionOnSupport)> = squares
                    .iter()
                    .flat_map(|q| {
                        let chi = FunctionOnSupport::from_fn(mu, |x| if q.contains(x) { 1.0 } else { 0.0 });
                        let signed = FunctionOnSupport::new(chi.values.iter().zip(&signs).map(|(c, s)| c * s).collect());
                        [(q.clone(), chi), (q.clone(), signed)]
                    })
                    .collect();
                let u = cauchy::uniform_l1_check(mu, ctx, &tests, &g)?;
                v["uniform_l1"] = json!({"sup": u.sup, "witness": u.witness});
            }
            v
        }
        Command::Curvature { eps, cube, melnikov_triples, max_points } => {
            let q = match cube {
                Some(q) => q.clone(),
                None => mu.whole_cube()?,
            };
            let members = mu.cube_members(&q).len();
            if members > *max_points {
                return Err(Error::InvalidArgument(format!("{members} points in the cube, cap is {max_points}")));
            }
            let a = match &s.f {
                Some(f) => f.clone(),
                None => FunctionOnSupport::from_fn(mu, |x| if q.contains(x) { 1.0 } else { 0.0 }),
            };
            let a = FunctionOnSupport::new((0..mu.len()).map(|i| if q.contains(mu.point(i)) { a.values[i] } else { 0.0 }).collect());
            let (lhs, triple) = cauchy::curvature_identity(mu, &q, *eps, &a)?;
            let m2 = mu.cube_mass(&q.dilate(2.0));
            let sup = a.sup_norm();
            let rem = lhs - triple;
            let mut worst: f64 = 0.0;
            for _ in 0..*melnikov_triples {
                let t: Vec<[f64; 2]> = (0..3).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
                if cauchy::menger_curvature(&t[0], &t[1], &t[2])? > 0.0 {
                    worst = worst.max(cauchy::melnikov_residual(&t[0], &t[1], &t[2])?);
                }
            }
            csv.push_str("lhs,triple_sum,remainder,mu_2q\n");
            csv_row(csv, &[lhs, triple, rem, m2]);
            json!({
                "cube": q,
                "points": members,
                "lhs": lhs,
                "triple_sum": triple,
                "remainder": rem,
                "remainder_ratio": if sup > 0.0 && m2 > 0.0 { rem.abs() / (sup * sup * m2) } else { 0.0 },
                "melnikov_max_rel_error": worst,
            })
        }
        Command::Commutator { eps, dyadic, draws } => {
            let b = s.f()?;
            let g = grid(mu, eps, *dyadic)?;
            let norm = norms::rbmo_star(mu, ctx, b, &s.fam()?)?.value;
            csv.push_str("draw,eps,ratio\n");
            let mut best: f64 = 0.0;
            for d in 0..*draws {
                let f = ComplexFunction::new(
                    (0..mu.len()).map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))).collect(),
                );
                let fl2 = cauchy::l2_of(mu, &f.values);
                for &e in &g.epsilons {
                    let c = cauchy::commutator_all(mu, b, &f, e)?;
                    let r = cauchy::l2_of(mu, &c) / fl2;
                    best = best.max(r);
                    csv_row(csv, &[d as f64, e, r]);
                }
            }
            json!({"rbmo_star_b": norm, "max_ratio": best, "max_ratio_over_norm": if norm > 0.0 { best / norm } else { 0.0 }})
        }
        Command::EquivalenceSweep { p } => {
            let (f, fam) = (s.f()?, s.fam()?);
            let vals = [
                ("rbmo_star", norms::rbmo_star(mu, ctx, f, &fam)?.value),
                ("rbmo_doublestar", norms::rbmo_doublestar(mu, ctx, f, &fam)?.value),
                ("circ_norm", norms::circ_norm(mu, ctx, f, &fam)?.value),
                ("rbmo_p", norms::rbmo_p(mu, ctx, f, &fam, *p)?.value),
            ];
            csv.push_str("a,b,ratio\n");
            let mut ratios = serde_json::Map::new();
            let mut worst: f64 = 1.0;
            for (i, a) in vals.iter().enumerate() {
                for b in &vals[i + 1..] {
                    let r = if b.1 > 0.0 { a.1 / b.1 } else { f64::NAN };
                    let _ = writeln!(csv, "{},{},{}", a.0, b.0, r);
                    worst = worst.max(r.max(1.0 / r));
                    ratios.insert(format!("{}/{}", a.0, b.0), json!(r));
                }
            }
            let norms_v: serde_json::Map<String, Value> = vals.iter().map(|(k, v)| (k.to_string(), json!(v))).collect();
            json!({"norms": norms_v, "ratios": ratios, "worst_ratio": worst})
        }
        Command::BlockCheck { block } => {
            let blk: AtomicBlock = serde_json::from_str(&std::fs::read_to_string(block)?)?;
            match norms::validate_block(mu, ctx, &blk, 1e-12) {
                Err(v) => {
                    *valid = false;
                    json!({"valid": false, "violations": v})
                }
                Ok(h) => {
                    let pairing = match &s.f {
                        Some(g) => Some(norms::pairing_check(mu, ctx, &blk, g, &s.fam()?)?),
                        None => None,
                    };
                    json!({"valid": true, "coefficient_sum": h, "pairing_ratio": pairing})
                }
            }
        }
    })
}
