//! Finite cube families: dyadic ladders of cubes centered at support points.
//!
//! Every center carries a ladder of sides `b·2^j`. Masses along a ladder are
//! accumulated in support-index order, so they agree bit for bit with
//! [`DiscreteMeasure::cube_mass`]. The ladder always reaches a level that
//! contains the whole support, which makes it closed under doubling
//! companions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::NestedCubePair;
use crate::error::{Error, Result};
use crate::measure::{cheb, fit_width, AnalysisContext, Cube, DiscreteMeasure};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    /// smallest side, clamped up to r_min
    pub min_side: Option<f64>,
    /// largest side of a family cube (companions may be larger)
    pub max_side: Option<f64>,
    /// subsample the centers by stride
    pub max_centers: Option<usize>,
    /// extra ladders with sides scaled by a random factor in (1, 2)
    #[serde(default)]
    pub shifts: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CubeId {
    pub ladder: usize,
    pub slot: usize,
    pub level: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct Ladder {
    /// sides of levels 0..=top+1
    pub sides: Vec<f64>,
    /// first level whose cubes contain the whole support
    pub top: usize,
    /// last level that belongs to the family proper; None if no level does
    pub fam_top: Option<usize>,
    /// μ(Q) for levels 0..=top+1, row per slot
    pub mass: Vec<f64>,
    /// companion level for levels 0..=top, row per slot
    pub comp: Vec<usize>,
}

impl Ladder {
    pub fn stride(&self) -> usize {
        self.top + 2
    }

    pub fn mass(&self, slot: usize, level: usize) -> f64 {
        self.mass[slot * self.stride() + level]
    }

    pub fn comp(&self, slot: usize, level: usize) -> usize {
        self.comp[slot * (self.top + 1) + level]
    }

    pub fn doubling(&self, slot: usize, level: usize) -> bool {
        self.comp(slot, level) == level
    }
}

#[derive(Debug, Clone)]
pub struct CubeFamily {
    pub(crate) centers: Vec<usize>,
    pub(crate) ladders: Vec<Ladder>,
    n: u32,
}

impl CubeFamily {
    pub fn build(mu: &DiscreteMeasure, ctx: &AnalysisContext, spec: &FamilySpec) -> Result<Self> {
        if mu.is_empty() {
            return Err(Error::EmptySupport);
        }
        let lo = spec.min_side.map_or(mu.r_min(), |s| s.max(mu.r_min()));
        if let Some(hi) = spec.max_side {
            if hi < lo {
                return Err(Error::InvalidArgument(format!("max_side {hi} is below min_side {lo}")));
            }
        }
        let diam = mu.support_diameter()?;
        let centers: Vec<usize> = match spec.max_centers {
            Some(0) => return Err(Error::InvalidArgument("max_centers must be positive".into())),
            Some(k) if k < mu.len() => (0..k).map(|t| t * mu.len() / k).collect(),
            _ => (0..mu.len()).collect(),
        };
        let mut factors = vec![1.0];
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        for _ in 0..spec.shifts {
            factors.push(2f64.powf(rng.gen_range(0.0..1.0)));
        }
        let mut ladders = Vec::with_capacity(factors.len());
        for f in factors {
            let mut b = 2f64.powi(lo.log2().ceil() as i32) * f;
            while b / 2.0 >= lo {
                b /= 2.0;
            }
            while b < lo {
                b *= 2.0;
            }
            let mut sides = vec![b];
            while sides[sides.len() - 1] < 2.0 * diam {
                let s = sides[sides.len() - 1];
                sides.push(s * 2.0);
            }
            let top = sides.len() - 1;
            sides.push(sides[top] * 2.0);
            let fam_top = match spec.max_side {
                Some(hi) => sides[..=top].iter().rposition(|&s| s <= hi),
                None => Some(top),
            };
            let mut ladder = Ladder { sides, top, fam_top, mass: vec![], comp: vec![] };
            let masses = ladder_sums(mu, &centers, &ladder, 1.0, top + 2, |i, _| mu.mass(i));
            ladder.mass = masses;
            let mut comp = Vec::with_capacity(centers.len() * (top + 1));
            for slot in 0..centers.len() {
                for j in 0..=top {
                    let c = (j..=top)
                        .find(|&k| ladder.mass(slot, k + 1) <= ctx.beta_d * ladder.mass(slot, k))
                        .unwrap_or(top);
                    comp.push(c);
                }
            }
            ladder.comp = comp;
            ladders.push(ladder);
        }
        Ok(CubeFamily { centers, ladders, n: ctx.n })
    }

    /// Number of family cubes (companions above `max_side` not counted).
    pub fn size(&self) -> usize {
        self.ladders.iter().map(|l| l.fam_top.map_or(0, |t| t + 1)).sum::<usize>()
            * self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.size() == 0
    }

    pub fn centers(&self) -> &[usize] {
        &self.centers
    }

    pub fn cube(&self, mu: &DiscreteMeasure, id: CubeId) -> Cube {
        let l = &self.ladders[id.ladder];
        Cube::new(mu.point(self.centers[id.slot]).to_vec(), l.sides[id.level])
    }

    /// All family cubes.
    pub fn ids(&self) -> Vec<CubeId> {
        let mut v = vec![];
        for (li, l) in self.ladders.iter().enumerate() {
            let Some(ft) = l.fam_top else { continue };
            for slot in 0..self.centers.len() {
                for level in 0..=ft {
                    v.push(CubeId { ladder: li, slot, level });
                }
            }
        }
        v
    }

    pub fn cubes(&self, mu: &DiscreteMeasure) -> Vec<Cube> {
        self.ids().into_iter().map(|id| self.cube(mu, id)).collect()
    }

    pub fn mass(&self, id: CubeId) -> f64 {
        self.ladders[id.ladder].mass(id.slot, id.level)
    }

    pub fn companion(&self, id: CubeId) -> CubeId {
        CubeId { level: self.ladders[id.ladder].comp(id.slot, id.level), ..id }
    }

    pub fn is_doubling(&self, id: CubeId) -> bool {
        self.ladders[id.ladder].doubling(id.slot, id.level)
    }

    /// K between a cube and a concentric-ladder level above it.
    pub fn k_along(&self, id: CubeId, outer_level: usize) -> f64 {
        let l = &self.ladders[id.ladder];
        let mut k = 1.0;
        for j in id.level + 1..=outer_level {
            k += l.mass(id.slot, j) / l.sides[j].powi(self.n as i32);
        }
        k
    }

    /// Every nested pair (Q, R) with Q a family cube and R a strictly
    /// larger cube of the same ladder, up to the level containing the
    /// support. Quadratic; meant for small measures and cross-checks.
    pub fn pairs(&self, mu: &DiscreteMeasure) -> Vec<(CubeId, CubeId)> {
        let mut out = vec![];
        for q in self.ids() {
            for level in q.level + 1..=self.ladders[q.ladder].top {
                out.extend(self.partners(mu, q, level).into_iter().map(|r| (q, r)));
            }
        }
        out
    }

    /// Cubes of `level` in the ladder of q that contain q.
    pub fn partners(&self, mu: &DiscreteMeasure, q: CubeId, level: usize) -> Vec<CubeId> {
        let l = &self.ladders[q.ladder];
        let qc = mu.point(self.centers[q.slot]);
        let w = fit_width(l.sides[q.level], l.sides[level]);
        (0..self.centers.len())
            .filter(|&slot| qc.iter().zip(mu.point(self.centers[slot])).all(|(a, b)| (a - b).abs() <= w))
            .map(|slot| CubeId { ladder: q.ladder, slot, level })
            .collect()
    }

    /// `count` random pairs from [`Self::pairs`] with outer side at most
    /// `max_outer`: a random family cube, a random higher level, then a
    /// random containing cube of that level. Sorted, may repeat.
    pub fn sample_pairs(&self, mu: &DiscreteMeasure, rng: &mut impl Rng, count: usize, max_outer: f64) -> Vec<(CubeId, CubeId)> {
        let ids: Vec<CubeId> = self
            .ids()
            .into_iter()
            .filter(|q| {
                let l = &self.ladders[q.ladder];
                q.level < l.top && l.sides[q.level + 1] <= max_outer
            })
            .collect();
        let mut out = vec![];
        if ids.is_empty() {
            return out;
        }
        while out.len() < count {
            let q = ids[rng.gen_range(0..ids.len())];
            let l = &self.ladders[q.ladder];
            let hi = (q.level + 1..=l.top).take_while(|&k| l.sides[k] <= max_outer).last().unwrap_or(q.level + 1);
            let level = rng.gen_range(q.level + 1..=hi);
            let p = self.partners(mu, q, level);
            out.push((q, p[rng.gen_range(0..p.len())]));
        }
        out.sort();
        out
    }

    pub fn nested_pair(&self, mu: &DiscreteMeasure, q: CubeId, r: CubeId) -> Result<NestedCubePair> {
        NestedCubePair::new(self.cube(mu, q), self.cube(mu, r))
    }

    /// μ(sQ) for every closure cube, laid out like the ladder masses
    /// (levels 0..=top).
    pub fn dilated_mass(&self, mu: &DiscreteMeasure, s: f64) -> Vec<Vec<f64>> {
        self.ladders
            .iter()
            .map(|l| {
                let stride = l.top + 1;
                if s == 2.0 {
                    let mut v = Vec::with_capacity(self.centers.len() * stride);
                    for slot in 0..self.centers.len() {
                        v.extend((0..stride).map(|j| l.mass(slot, j + 1)));
                    }
                    v
                } else if s == 1.0 {
                    let mut v = Vec::with_capacity(self.centers.len() * stride);
                    for slot in 0..self.centers.len() {
                        v.extend((0..stride).map(|j| l.mass(slot, j)));
                    }
                    v
                } else {
                    ladder_sums(mu, &self.centers, l, s, stride, |i, _| mu.mass(i))
                }
            })
            .collect()
    }

    /// Per-level sums of `val(i, level)` over the members of each closure
    /// cube (levels 0..=top), in support-index order.
    pub(crate) fn sums<F>(&self, mu: &DiscreteMeasure, ladder: usize, val: F) -> Vec<f64>
    where
        F: Fn(usize, usize) -> f64 + Sync,
    {
        let l = &self.ladders[ladder];
        ladder_sums(mu, &self.centers, l, 1.0, l.top + 1, val)
    }

    /// Like [`Self::sums`] but with a per-slot value function.
    pub(crate) fn sums_by_slot<F>(&self, mu: &DiscreteMeasure, ladder: usize, val: F) -> Vec<f64>
    where
        F: Fn(usize, usize, usize) -> f64 + Sync,
    {
        let l = &self.ladders[ladder];
        let levels = l.top + 1;
        let th = thresholds(&l.sides, 1.0, levels);
        self.centers
            .par_iter()
            .enumerate()
            .map(|(slot, &c)| {
                let x = mu.point(c);
                let mut acc = vec![0.0; levels];
                for i in 0..mu.len() {
                    let d = cheb(mu.point(i), x);
                    let lvl = th.partition_point(|&t| t < d);
                    for (j, a) in acc.iter_mut().enumerate().skip(lvl) {
                        *a += val(slot, i, j);
                    }
                }
                acc
            })
            .collect::<Vec<_>>()
            .concat()
    }

    /// For each slot, the support indices of the top cube tagged with the
    /// first level containing them.
    pub(crate) fn member_levels(&self, mu: &DiscreteMeasure, ladder: usize, slot: usize, scale: f64) -> Vec<(usize, usize)> {
        let l = &self.ladders[ladder];
        let th = thresholds(&l.sides, scale, l.top + 1);
        let x = mu.point(self.centers[slot]);
        (0..mu.len())
            .filter_map(|i| {
                let lvl = th.partition_point(|&t| t < cheb(mu.point(i), x));
                (lvl <= l.top).then_some((i, lvl))
            })
            .collect()
    }

    /// Pointwise sup over family cubes containing each support point of the
    /// given per-cube values (rows per slot, levels 0..=top, NEG_INFINITY to
    /// skip). With `scale` ≠ 1 the membership test is x ∈ scale·Q.
    pub fn pointwise_sup(&self, mu: &DiscreteMeasure, values: &[Vec<f64>], scale: f64) -> Vec<f64> {
        // suffix maxima over levels, restricted to family levels
        let suffix: Vec<Vec<f64>> = self
            .ladders
            .iter()
            .zip(values)
            .map(|(l, v)| {
                let stride = l.top + 1;
                let mut s = vec![f64::NEG_INFINITY; v.len()];
                if let Some(ft) = l.fam_top {
                    for slot in 0..self.centers.len() {
                        let mut m = f64::NEG_INFINITY;
                        for j in (0..=ft).rev() {
                            m = m.max(v[slot * stride + j]);
                            s[slot * stride + j] = m;
                        }
                    }
                }
                s
            })
            .collect();
        let ths: Vec<Vec<f64>> =
            self.ladders.iter().map(|l| thresholds(&l.sides, scale, l.top + 1)).collect();
        (0..mu.len())
            .into_par_iter()
            .map(|i| {
                let y = mu.point(i);
                let mut best = f64::NEG_INFINITY;
                for ((l, th), suf) in self.ladders.iter().zip(&ths).zip(&suffix) {
                    let Some(ft) = l.fam_top else { continue };
                    for (slot, &c) in self.centers.iter().enumerate() {
                        let lvl = th.partition_point(|&t| t < cheb(y, mu.point(c)));
                        if lvl <= ft {
                            best = best.max(suf[slot * (l.top + 1) + lvl]);
                        }
                    }
                }
                best
            })
            .collect()
    }

    /// For every family cube Q, the sup over closure cubes R of the same
    /// ladder at a strictly higher level containing Q with K_{Q,R} ≤ cap of
    /// |q(Q) − r(R)|/K_{Q,R}. `q`/`r` are per-cube values (rows per slot,
    /// levels 0..=top); None excludes the cube.
    pub(crate) fn pair_table(
        &self,
        mu: &DiscreteMeasure,
        q: &[Vec<Option<f64>>],
        r: &[Vec<Option<f64>>],
        cap: f64,
    ) -> Vec<Vec<PairBest>> {
        let mut out = Vec::with_capacity(self.ladders.len());
        for (li, l) in self.ladders.iter().enumerate() {
            let stride = l.top + 1;
            let Some(ft) = l.fam_top else {
                out.push(vec![PairBest::none(); self.centers.len() * stride]);
                continue;
            };
            let index = RangeIndex::new(mu, &self.centers, l, &r[li]);
            let rows: Vec<Vec<PairBest>> = (0..self.centers.len())
                .into_par_iter()
                .map(|slot| {
                    let mut row = vec![PairBest::none(); stride];
                    let qc = mu.point(self.centers[slot]);
                    for level in 0..=ft {
                        let Some(qv) = q[li][slot * stride + level] else { continue };
                        let b = &mut row[level];
                        let mut k = 1.0;
                        for outer in level + 1..=l.top {
                            k += l.mass(slot, outer) / l.sides[outer].powi(self.n as i32);
                            if k > cap {
                                break;
                            }
                            let w = fit_width(l.sides[level], l.sides[outer]);
                            if let Some((hi, hi_s, lo, lo_s)) = index.extremes(mu, outer, qc, w) {
                                let qid = CubeId { ladder: li, slot, level };
                                for (v, s) in [(hi, hi_s), (lo, lo_s)] {
                                    let val = (qv - v).abs() / k;
                                    b.offer(val, qid, CubeId { ladder: li, slot: s, level: outer }, k);
                                }
                            }
                        }
                    }
                    row
                })
                .collect();
            out.push(rows.concat());
        }
        out
    }

    /// Overall best of [`Self::pair_table`], first in id order on ties.
    pub(crate) fn pair_sup(
        &self,
        mu: &DiscreteMeasure,
        q: &[Vec<Option<f64>>],
        r: &[Vec<Option<f64>>],
        cap: f64,
    ) -> PairBest {
        let mut best = PairBest::none();
        for row in self.pair_table(mu, q, r, cap) {
            for b in row {
                best.merge(b);
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct PairBest {
    pub value: f64,
    pub pair: Option<(CubeId, CubeId)>,
    pub k: f64,
}

impl PairBest {
    pub fn none() -> Self {
        PairBest { value: 0.0, pair: None, k: 1.0 }
    }

    fn offer(&mut self, value: f64, q: CubeId, r: CubeId, k: f64) {
        if self.pair.is_none() || value > self.value {
            *self = PairBest { value, pair: Some((q, r)), k };
        }
    }

    fn merge(&mut self, o: PairBest) {
        if let Some((q, r)) = o.pair {
            self.offer(o.value, q, r, o.k);
        }
    }
}

pub(crate) fn thresholds(sides: &[f64], scale: f64, levels: usize) -> Vec<f64> {
    sides[..levels].iter().map(|s| (s * scale) / 2.0).collect()
}

fn ladder_sums<F>(
    mu: &DiscreteMeasure,
    centers: &[usize],
    l: &Ladder,
    scale: f64,
    levels: usize,
    val: F,
) -> Vec<f64>
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    let th = thresholds(&l.sides, scale, levels);
    centers
        .par_iter()
        .map(|&c| {
            let x = mu.point(c);
            let mut acc = vec![0.0; levels];
            for i in 0..mu.len() {
                let d = cheb(mu.point(i), x);
                let lvl = th.partition_point(|&t| t < d);
                for (j, a) in acc.iter_mut().enumerate().skip(lvl) {
                    *a += val(i, j);
                }
            }
            acc
        })
        .collect::<Vec<_>>()
        .concat()
}

/// Range max/min of per-center values at one ladder level, over centers
/// inside a box around a query point.
struct RangeIndex<'a> {
    /// slots sorted by first coordinate, and those coordinates
    order: Vec<usize>,
    xs: Vec<f64>,
    centers: &'a [usize],
    stride: usize,
    vals: &'a [Option<f64>],
    /// sparse tables per level (d = 1 only): (max slot, min slot) per span
    tables: Vec<Vec<Vec<(Option<usize>, Option<usize>)>>>,
}

impl<'a> RangeIndex<'a> {
    fn new(mu: &DiscreteMeasure, centers: &'a [usize], l: &Ladder, vals: &'a [Option<f64>]) -> Self {
        let mut order: Vec<usize> = (0..centers.len()).collect();
        order.sort_by(|&a, &b| {
            mu.point(centers[a])[0].total_cmp(&mu.point(centers[b])[0]).then(a.cmp(&b))
        });
        let xs = order.iter().map(|&s| mu.point(centers[s])[0]).collect();
        let stride = l.top + 1;
        let mut idx = RangeIndex { order, xs, centers, stride, vals, tables: vec![] };
        if mu.dim() == 1 {
            idx.tables = (0..stride).map(|lvl| idx.sparse(lvl)).collect();
        }
        idx
    }

    fn val(&self, slot: usize, level: usize) -> Option<f64> {
        self.vals[slot * self.stride + level]
    }

    fn pick(&self, level: usize, a: Option<usize>, b: Option<usize>, want_max: bool) -> Option<usize> {
        match (a, b) {
            (None, x) | (x, None) => x,
            (Some(a), Some(b)) => {
                let (va, vb) = (self.val(a, level).unwrap(), self.val(b, level).unwrap());
                let better = if want_max { vb > va } else { vb < va };
                if better || (vb == va && b < a) {
                    Some(b)
                } else {
                    Some(a)
                }
            }
        }
    }

    fn sparse(&self, level: usize) -> Vec<Vec<(Option<usize>, Option<usize>)>> {
        let n = self.order.len();
        let base: Vec<_> = self
            .order
            .iter()
            .map(|&s| {
                let v = self.val(s, level).map(|_| s);
                (v, v)
            })
            .collect();
        let mut t = vec![base];
        let mut w = 1;
        while 2 * w <= n {
            let prev = &t[t.len() - 1];
            let row = (0..=n - 2 * w)
                .map(|i| {
                    let (a, b) = (prev[i], prev[i + w]);
                    (self.pick(level, a.0, b.0, true), self.pick(level, a.1, b.1, false))
                })
                .collect();
            t.push(row);
            w *= 2;
        }
        t
    }

    /// (max value, its slot, min value, its slot) over centers c' with
    /// |c'_i − c_i| ≤ w in every coordinate and a value at `level`.
    fn extremes(&self, mu: &DiscreteMeasure, level: usize, c: &[f64], w: f64) -> Option<(f64, usize, f64, usize)> {
        let x = c[0];
        let a = self.xs.partition_point(|&v| v < x && !((v - x).abs() <= w));
        let b = self.xs.partition_point(|&v| v <= x || (v - x).abs() <= w);
        if a >= b {
            return None;
        }
        let (hi, lo) = if !self.tables.is_empty() {
            let t = &self.tables[level];
            let k = usize::BITS - 1 - (b - a).leading_zeros();
            let (r1, r2) = (t[k as usize][a], t[k as usize][b - (1 << k)]);
            (self.pick(level, r1.0, r2.0, true), self.pick(level, r1.1, r2.1, false))
        } else {
            let mut hi = None;
            let mut lo = None;
            for &s in &self.order[a..b] {
                if self.val(s, level).is_none() {
                    continue;
                }
                let p = mu.point(self.centers[s]);
                if p.iter().zip(c).skip(1).all(|(u, v)| (u - v).abs() <= w) {
                    hi = self.pick(level, hi, Some(s), true);
                    lo = self.pick(level, lo, Some(s), false);
                }
            }
            (hi, lo)
        };
        let (hi, lo) = (hi?, lo?);
        Some((self.val(hi, level).unwrap(), hi, self.val(lo, level).unwrap(), lo))
    }
}
