//! The circle conjugacy between two expansive coverings with matched Markov
//! partitions, its distortion profile and the Beurling–Ahlfors extension.

use std::collections::BTreeMap;
use std::sync::{Arc as Shared, Mutex};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::geometry::{chord, CirclePoint};
use crate::markov::{ExpansivityVerdict, MarkovPartition, RefinementLevelSet};
use crate::{Error, Result};

/// Maximal number of letters followed by [`Conjugacy::eval_h`].
pub const DEPTH_CAP: usize = 20_000;
/// A forward iterate this close to a cached refinement point is taken to hit it.
const SNAP_TOL: f64 = 1e-14;
/// Level of the expansivity check run when a conjugacy is built.
const EXPANSIVITY_LEVEL: usize = 8;
/// Relative accuracy of the chord lengths entering `ρ_h`.
const CHORD_ACCURACY: f64 = 0.01;

/// `h(F_n[i]) = G_n[i]`.
#[derive(Debug, Clone)]
pub struct MatchedLevel {
    pub source: RefinementLevelSet,
    pub target: RefinementLevelSet,
}

/// Order and equivariance of `h` on a cached level.
#[derive(Debug, Clone, Serialize)]
pub struct LevelCheck {
    pub n: usize,
    pub points: usize,
    pub order_preserving: bool,
    /// max |g(h(x)) − h(f(x))| over `x ∈ F_n`, in turns.
    pub equivariance_defect: f64,
    pub anchored: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct EquivarianceReport {
    pub samples: usize,
    pub max_residual: f64,
    /// Largest target arc diameter met at the evaluation depth.
    pub max_arc_diameter: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct MonotonicityReport {
    pub samples: usize,
    pub violations: usize,
    pub ties: usize,
}

/// Source arc `[start, start + len]` and the matching target arc.
#[derive(Debug, Clone, Copy)]
struct Enclosure {
    start: CirclePoint,
    len: f64,
    depth: usize,
}

impl Enclosure {
    fn exact(p: CirclePoint, depth: usize) -> Self {
        Enclosure { start: p, len: 0.0, depth }
    }

    fn midpoint(&self) -> CirclePoint {
        self.start.rotate(self.len / 2.0)
    }

    fn diam(&self) -> f64 {
        if self.len >= 0.5 {
            2.0
        } else {
            chord(self.start, self.start.rotate(self.len))
        }
    }
}

/// Orientation-preserving conjugacy `h` with `h ∘ f = g ∘ h` and
/// `h(a_k) = b_k`.
#[derive(Debug)]
pub struct Conjugacy {
    source: MarkovPartition,
    target: MarkovPartition,
    levels: Mutex<BTreeMap<usize, Shared<MatchedLevel>>>,
}

/// Builds the conjugacy pairing `a_k` with `b_{pairing[k]}`. The pairing must
/// preserve cyclic order and commute with the maps on the partition points.
pub fn build_conjugacy(pf: &MarkovPartition, pg: &MarkovPartition, pairing: &[usize]) -> Result<Conjugacy> {
    let n = pf.points().len();
    if pg.points().len() != n || pairing.len() != n {
        return Err(Error::Conjugacy(format!(
            "partitions have {} and {} points, pairing has {}",
            n,
            pg.points().len(),
            pairing.len()
        )));
    }
    if pf.map().orientation() != pg.map().orientation() {
        return Err(Error::Conjugacy("orientation mismatch".into()));
    }
    if pf.map().degree() != pg.map().degree() {
        return Err(Error::Conjugacy(format!(
            "degree mismatch ({} vs {}): covering counts cannot match",
            pf.map().degree(),
            pg.map().degree()
        )));
    }
    let shift = pairing[0];
    if shift >= n || (0..n).any(|k| pairing[k] != (shift + k) % n) {
        return Err(Error::Conjugacy("pairing does not preserve the cyclic order".into()));
    }
    let rotated: Vec<CirclePoint> = (0..n).map(|k| pg.points()[(shift + k) % n]).collect();
    let target = MarkovPartition::new(pg.map().clone(), &rotated)?.with_budget(pg.budget());
    for k in 0..n {
        if pf.image_index(k) != target.image_index(k) {
            return Err(Error::Conjugacy(format!(
                "pairing does not commute on F_1: f(a_{k}) = a_{} but g(b_{k}) = b_{}",
                pf.image_index(k),
                target.image_index(k)
            )));
        }
    }
    if pf.transition() != target.transition() {
        return Err(Error::Conjugacy("transition matrices differ under the pairing".into()));
    }
    for (name, p) in [("source", pf), ("target", &target)] {
        if p.expansivity_profile(EXPANSIVITY_LEVEL)?.verdict != ExpansivityVerdict::Expansive {
            return Err(Error::Hypothesis(format!("{name} map is not numerically expansive")));
        }
    }
    let c = Conjugacy { source: pf.clone(), target, levels: Mutex::new(BTreeMap::new()) };
    c.matched_level(1)?;
    Ok(c)
}

impl Conjugacy {
    pub fn source(&self) -> &MarkovPartition {
        &self.source
    }

    /// Target partition, relabelled so that `b_k` is paired with `a_k`.
    pub fn target(&self) -> &MarkovPartition {
        &self.target
    }

    /// The inverse conjugacy `g → f`.
    pub fn inverse(&self) -> Result<Conjugacy> {
        let id: Vec<usize> = (0..self.source.points().len()).collect();
        build_conjugacy(&self.target, &self.source, &id)
    }

    /// True when both maps are rational, so that the planar neighbourhood
    /// conditions hold automatically and the distortion test decides the
    /// extension class.
    pub fn analytic_assumption(&self) -> bool {
        self.source.map().is_analytic() && self.target.map().is_analytic()
    }

    /// Deepest level currently cached.
    pub fn cached_depth(&self) -> usize {
        self.levels.lock().expect("cache lock").keys().next_back().copied().unwrap_or(0)
    }

    pub fn matched_level(&self, n: usize) -> Result<Shared<MatchedLevel>> {
        if let Some(l) = self.levels.lock().expect("cache lock").get(&n) {
            return Ok(l.clone());
        }
        let source = self.source.refine(n)?;
        let target = self.target.refine(n)?;
        if source.len() != target.len() || source.levels != target.levels {
            return Err(Error::Conjugacy(format!("refinements F_{n} and G_{n} do not match")));
        }
        let level = Shared::new(MatchedLevel { source, target });
        self.levels.lock().expect("cache lock").entry(n).or_insert_with(|| level.clone());
        Ok(level)
    }

    /// Checks order, anchoring and equivariance of `h` on `F_n`.
    pub fn verify_level(&self, n: usize) -> Result<LevelCheck> {
        let m = self.matched_level(n)?;
        let b0 = self.target.points()[0];
        let offsets: Vec<f64> = m.target.points.iter().map(|&p| b0.ccw_to(p)).collect();
        let order_preserving = offsets.windows(2).all(|w| w[1] > w[0]);
        let anchored = (0..self.source.points().len()).all(|k| {
            let i = m.source.index_of(self.source.points()[k], 1e-12);
            i.is_some_and(|i| m.target.points[i].approx_eq(self.target.points()[k], 1e-12))
        });
        let mut defect: f64 = 0.0;
        if n >= 2 {
            let prev = self.matched_level(n - 1)?;
            for (i, &x) in m.source.points.iter().enumerate() {
                let fx = self.source.map().eval(x);
                let j = prev
                    .source
                    .index_of(fx, 1e-9)
                    .ok_or_else(|| Error::Inconsistent(format!("f({x}) is not in F_{}", n - 1)))?;
                let ghx = self.target.map().eval(m.target.points[i]);
                defect = defect.max(ghx.dist(prev.target.points[j]));
            }
        }
        Ok(LevelCheck { n, points: m.source.len(), order_preserving, equivariance_defect: defect, anchored })
    }

    fn letter(&self, prev: Option<usize>, x: CirclePoint) -> Result<usize> {
        let k = self.source.arc_index(x);
        let Some(p) = prev else { return Ok(k) };
        let b = self.source.transition();
        if b[p][k] == 1 {
            return Ok(k);
        }
        let n = b.len();
        [(k + 1) % n, (k + n - 1) % n]
            .into_iter()
            .find(|&j| b[p][j] == 1 && self.source.arc(j).contains(x, 1e-9))
            .ok_or_else(|| Error::Numeric(format!("itinerary of {x} left the admissible words")))
    }

    fn deepest_level(&self) -> Shared<MatchedLevel> {
        self.levels.lock().expect("cache lock").values().next_back().expect("level 1 is cached").clone()
    }

    /// Pulls the target point `y` back along `letters`. `prev` is the
    /// iterate before the last one; it decides which end of a full-turn arc
    /// a point at the start of its image comes from.
    fn pull_back_exact(&self, letters: &[usize], prev: CirclePoint, y: CirclePoint) -> Result<CirclePoint> {
        let Some((&k, rest)) = letters.split_last() else {
            return Ok(y);
        };
        let (f, g) = (&self.source, &self.target);
        let mut pos = g.position(k, y);
        if pos >= 1.0 - SNAP_TOL {
            pos = 0.0;
        }
        let full_turn = (g.turning(k) - 1.0).abs() < 1e-9;
        let near_end = f.arc(k).offset_of(prev) > 0.5 * f.arc(k).length();
        if pos <= SNAP_TOL && full_turn && near_end {
            pos = g.turning(k);
        }
        let mut y = CirclePoint::new(g.branch(k, pos.min(g.turning(k)))?);
        for &k in rest.iter().rev() {
            y = g.pull_back_point(k, y)?;
        }
        Ok(y)
    }

    /// Follows the forward itinerary of `x` until the target arc of the word
    /// has diameter below `tol`, or an iterate lands on a cached refinement
    /// point, whose image is known exactly.
    fn enclose(&self, x: CirclePoint, tol: f64) -> Result<Enclosure> {
        if !(tol > 0.0) {
            return Err(Error::Degenerate(format!("tolerance must be positive, got {tol}")));
        }
        let level = self.deepest_level();
        let mut letters: Vec<usize> = Vec::new();
        let mut xi = x;
        let mut prev = x;
        let mut check = 16;
        let mut last_check = 0;
        loop {
            if let Some(i) = level.source.index_of(xi, SNAP_TOL) {
                let y = self.pull_back_exact(&letters, prev, level.target.points[i])?;
                return Ok(Enclosure::exact(y, letters.len()));
            }
            if letters.len() >= DEPTH_CAP {
                return Err(Error::Tolerance { tol, depth: DEPTH_CAP });
            }
            let k = self.letter(letters.last().copied(), xi)?;
            letters.push(k);
            prev = xi;
            xi = self.source.map().eval(xi);
            if letters.len() == check {
                if let Some(e) = self.first_resolved(&letters, last_check, tol)? {
                    return Ok(e);
                }
                last_check = check;
                check = (check * 2).min(DEPTH_CAP);
            }
        }
    }

    /// Target arc of `letters[..n]`, or `None` once it falls below
    /// floating-point resolution.
    fn target_arc(&self, letters: &[usize]) -> Result<Option<Enclosure>> {
        match self.target.arc_of_word(letters).expect("itinerary is admissible") {
            Ok(b) => Ok(Some(Enclosure { start: b.start(), len: b.length(), depth: letters.len() })),
            Err(Error::Numeric(_)) => Ok(None),
            Err(e) => Err(e),
        }
    }

    /// A prefix longer than `lo` whose target arc has diameter below `tol`,
    /// if the full word gets there. Prefixes of at most `lo` letters are
    /// known to be too coarse; when the full word's arc is below resolution
    /// the shortest resolved prefix is searched for.
    fn first_resolved(&self, letters: &[usize], lo: usize, tol: f64) -> Result<Option<Enclosure>> {
        let done = |e: &Option<Enclosure>| e.map_or(true, |e| e.diam() < tol);
        let full = self.target_arc(letters)?;
        match full {
            Some(e) if e.diam() < tol => return Ok(Some(e)),
            Some(_) => return Ok(None),
            None => {}
        }
        let (mut lo, mut hi, mut best) = (lo, letters.len(), full);
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            let e = self.target_arc(&letters[..mid])?;
            if done(&e) {
                hi = mid;
                best = e;
            } else {
                lo = mid;
            }
        }
        // The arc collapsed before reaching the tolerance.
        best.map(Some).ok_or(Error::Tolerance { tol, depth: hi })
    }

    /// `h(x)` as the midpoint of a target arc of diameter below `tol`,
    /// together with that diameter. Iterates landing on partition points are
    /// resolved exactly and report a zero bound.
    pub fn eval_h(&self, x: CirclePoint, tol: f64) -> Result<(CirclePoint, f64)> {
        let e = self.enclose(x, tol)?;
        Ok((e.midpoint(), e.diam()))
    }

    /// Number of letters `eval_h` followed for `x`.
    pub fn eval_depth(&self, x: CirclePoint, tol: f64) -> Result<usize> {
        Ok(self.enclose(x, tol)?.depth)
    }

    /// Compares `h(f(x))` with `g(h(x))` at `samples` uniform angles.
    pub fn equivariance_residual(&self, samples: usize, tol: f64) -> Result<EquivarianceReport> {
        let rows: Vec<(f64, f64)> = (0..samples)
            .into_par_iter()
            .map(|i| {
                let x = CirclePoint::new(i as f64 / samples as f64);
                let e = self.enclose(x, tol)?;
                let efx = self.enclose(self.source.map().eval(x), tol)?;
                let g = self.target.map();
                let s = e.start.turns();
                let image_len = (g.lift(s + e.len) - g.lift(s)).abs();
                let image = Enclosure { start: g.eval(e.start), len: image_len, depth: 0 };
                let residual = chord(g.eval(e.midpoint()), efx.midpoint());
                Ok((residual, image.diam().max(efx.diam())))
            })
            .collect::<Result<_>>()?;
        let max_residual = rows.iter().map(|r| r.0).fold(0.0, f64::max);
        let max_arc_diameter = rows.iter().map(|r| r.1).fold(0.0, f64::max);
        Ok(EquivarianceReport {
            samples,
            max_residual,
            max_arc_diameter,
            pass: max_residual <= 4.0 * max_arc_diameter.max(1e-12),
        })
    }

    /// Evaluates `h` on sorted inputs starting at `a_0` and counts order
    /// violations.
    pub fn monotonicity(&self, samples: usize, tol: f64) -> Result<MonotonicityReport> {
        let a0 = self.source.points()[0];
        let b0 = self.target.points()[0];
        let offsets: Vec<f64> = (0..samples)
            .into_par_iter()
            .map(|i| {
                let (y, _) = self.eval_h(a0.rotate(i as f64 / samples as f64), tol)?;
                let o = b0.ccw_to(y);
                Ok(if i == 0 && o > 0.5 { 0.0 } else { o })
            })
            .collect::<Result<_>>()?;
        let mut violations = 0;
        let mut ties = 0;
        for w in offsets.windows(2) {
            if w[1] < w[0] - 1e-12 {
                violations += 1;
            } else if w[1] <= w[0] + 1e-12 {
                ties += 1;
            }
        }
        Ok(MonotonicityReport { samples, violations, ties })
    }

    /// `ρ_h(z, t)`, the larger of the ratio of the image chords of
    /// `[z, z+t]` and `[z−t, z]` and its reciprocal. Both chords are resolved
    /// to 1% relative accuracy.
    pub fn symmetric_distortion(&self, z: CirclePoint, t: f64) -> Result<f64> {
        if !(t > 0.0 && t < 0.5) {
            return Err(Error::Degenerate(format!("scale must lie in (0, 1/2), got {t}")));
        }
        let xs = [z, z.rotate(t), z.rotate(-t)];
        let mut tol = 1e-3_f64.min(t);
        for _ in 0..8 {
            let e: Vec<Enclosure> = xs.iter().map(|&x| self.enclose(x, tol)).collect::<Result<_>>()?;
            let (h0, hp, hm) = (e[0].midpoint(), e[1].midpoint(), e[2].midpoint());
            let (plus, minus) = (chord(hp, h0), chord(hm, h0));
            let short = plus.min(minus);
            let err_plus = e[0].diam() + e[1].diam();
            let err_minus = e[0].diam() + e[2].diam();
            if short > 0.0 && err_plus <= CHORD_ACCURACY * plus && err_minus <= CHORD_ACCURACY * minus {
                return Ok((plus / minus).max(minus / plus));
            }
            let next = 0.4 * CHORD_ACCURACY * short;
            tol = if next > 0.0 && next < tol { next } else { tol / 16.0 };
        }
        Err(Error::Tolerance { tol, depth: DEPTH_CAP })
    }

    fn base_points(&self, t: f64, plan: &SamplePlan) -> Result<Vec<CirclePoint>> {
        let mut base = if plan.refinement_level > 0 {
            self.matched_level(plan.refinement_level)?.source.points.clone()
        } else {
            Vec::new()
        };
        base.extend((0..plan.uniform).map(|i| CirclePoint::new(i as f64 / plan.uniform as f64)));
        if plan.anchor_level > 0 {
            let anchors = self.matched_level(plan.anchor_level)?.source.points.clone();
            for a in anchors {
                for kappa in ANCHOR_OFFSETS {
                    base.push(a.rotate(kappa * t));
                    base.push(a.rotate(-kappa * t));
                }
            }
        }
        Ok(base)
    }

    /// Sampled lower bound for `ϱ_h(t) = sup_z ρ_h(z, t)` with the
    /// maximising base point. Samples whose descent hits the depth cap are
    /// skipped and counted.
    pub fn scalewise_distortion(&self, t: f64, plan: &SamplePlan) -> Result<ScaleSample> {
        let base = self.base_points(t, plan)?;
        let values: Vec<Result<f64>> = base.par_iter().map(|&z| self.symmetric_distortion(z, t)).collect();
        let mut best: Option<(f64, CirclePoint)> = None;
        let mut skipped = 0;
        let mut last_err = None;
        for (v, &z) in values.into_iter().zip(&base) {
            match v {
                Ok(rho) => {
                    if best.map_or(true, |b| rho > b.0) {
                        best = Some((rho, z));
                    }
                }
                Err(e @ Error::Tolerance { .. }) => {
                    skipped += 1;
                    last_err = Some(e);
                }
                Err(e) => return Err(e),
            }
        }
        let (rho_max, argmax) = match best {
            Some(b) => b,
            None => return Err(last_err.unwrap_or_else(|| Error::Degenerate("empty sample plan".into()))),
        };
        Ok(ScaleSample { t, rho_max, argmax, evaluated: base.len() - skipped, skipped })
    }

    /// `ϱ_h(2⁻ʲ)` for every `j` in the range, with running verdicts.
    pub fn distortion_profile(&self, js: std::ops::RangeInclusive<u32>, plan: &SamplePlan) -> Result<DistortionProfile> {
        let mut rows: Vec<ProfileRow> = Vec::new();
        for j in js {
            let s = self.scalewise_distortion((-(j as f64)).exp2(), plan)?;
            rows.push(ProfileRow {
                j,
                t: s.t,
                rho_max: s.rho_max,
                argmax: s.argmax.turns(),
                skipped: s.skipped,
                class_running: None,
            });
            let samples: Vec<(u32, f64)> = rows.iter().map(|r| (r.j, r.rho_max)).collect();
            if samples.len() >= MIN_CLASS_SAMPLES {
                rows.last_mut().unwrap().class_running = Some(extension_class(&samples));
            }
        }
        let samples: Vec<(u32, f64)> = rows.iter().map(|r| (r.j, r.rho_max)).collect();
        Ok(DistortionProfile {
            verdict: extension_class(&samples),
            rows,
            analytic_assumption: self.analytic_assumption(),
        })
    }
}

const ANCHOR_OFFSETS: [f64; 8] = [0.125, 0.25, 0.375, 0.5, 0.625, 0.75, 0.875, 1.0];

/// Base points of the scalewise distortion: all points of `F_n`, uniform
/// angles, and the points `c ± κt`, `κ ∈ {1/8, 2/8, …, 1}`, next to every
/// point `c` of `F_m`. Level 0 switches a group off.
#[derive(Debug, Clone, Serialize)]
pub struct SamplePlan {
    pub refinement_level: usize,
    pub uniform: usize,
    pub anchor_level: usize,
}

impl Default for SamplePlan {
    fn default() -> Self {
        SamplePlan { refinement_level: 6, uniform: 512, anchor_level: 3 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScaleSample {
    pub t: f64,
    pub rho_max: f64,
    pub argmax: CirclePoint,
    pub evaluated: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ExtensionClass {
    Bounded,
    Logarithmic,
    Faster,
}

impl std::fmt::Display for ExtensionClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ExtensionClass::Bounded => "bounded",
            ExtensionClass::Logarithmic => "logarithmic",
            ExtensionClass::Faster => "faster",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ProfileRow {
    pub j: u32,
    pub t: f64,
    pub rho_max: f64,
    /// Base point (turns) attaining `rho_max`.
    pub argmax: f64,
    pub skipped: usize,
    /// Verdict on the rows up to this one, once enough rows exist.
    pub class_running: Option<ExtensionClass>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DistortionProfile {
    pub rows: Vec<ProfileRow>,
    pub verdict: ExtensionClass,
    /// Set when both maps are rational; otherwise the planar conditions the
    /// verdict relies on are assumed, not checked.
    pub analytic_assumption: bool,
}

/// Number of deepest samples the growth test looks at.
pub const MIN_CLASS_SAMPLES: usize = 8;

/// Growth class of `j ↦ ϱ(2⁻ʲ)`.
///
/// Bounded: over the deepest eight samples max/min < 2, and the deepest
/// value is at most twice the value at the scale nearest `j_max/3`.
/// Logarithmic: otherwise, if `ϱ(2⁻ʲ)/j` has max/min < 3 over the deepest
/// eight. Faster in all other cases.
pub fn extension_class(samples: &[(u32, f64)]) -> ExtensionClass {
    if samples.is_empty() {
        return ExtensionClass::Bounded;
    }
    let mut s = samples.to_vec();
    s.sort_by_key(|p| p.0);
    let deep = &s[s.len().saturating_sub(MIN_CLASS_SAMPLES)..];
    let spread = |v: &mut dyn Iterator<Item = f64>| {
        let (lo, hi) = v.fold((f64::INFINITY, 0.0_f64), |(lo, hi), x| (lo.min(x), hi.max(x)));
        hi / lo
    };
    let (j_max, rho_deep) = *s.last().unwrap();
    let third = j_max as f64 / 3.0;
    let reference = s
        .iter()
        .min_by(|a, b| (a.0 as f64 - third).abs().total_cmp(&(b.0 as f64 - third).abs()))
        .unwrap()
        .1;
    if spread(&mut deep.iter().map(|p| p.1)) < 2.0 && rho_deep <= 2.0 * reference {
        return ExtensionClass::Bounded;
    }
    if spread(&mut deep.iter().map(|p| p.1 / p.0.max(1) as f64)) < 3.0 {
        return ExtensionClass::Logarithmic;
    }
    ExtensionClass::Faster
}

/// Lift `H: ℝ → ℝ` of an orientation-preserving circle homeomorphism,
/// `H(x + 1) = H(x) + 1`, in turns.
pub trait PeriodicLift: Sync {
    fn value(&self, x: f64) -> Result<f64>;
    /// `∫_a^b H`.
    fn integral(&self, a: f64, b: f64) -> Result<f64>;
}

/// Lift given by a function, integrated by adaptive Simpson.
pub struct FnLift<F> {
    f: F,
    tol: f64,
}

impl<F: Fn(f64) -> Result<f64> + Sync> FnLift<F> {
    pub fn new(f: F, tol: f64) -> Self {
        FnLift { f, tol }
    }

    fn simpson(&self, a: f64, b: f64) -> Result<f64> {
        let fa = (self.f)(a)?;
        let fb = (self.f)(b)?;
        let m = 0.5 * (a + b);
        let fm = (self.f)(m)?;
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        self.refine(a, b, fa, fm, fb, whole, self.tol, 48)
    }

    #[allow(clippy::too_many_arguments)]
    fn refine(&self, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> Result<f64> {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = ((self.f)(lm)?, (self.f)(rm)?);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if delta.abs() <= 15.0 * tol {
            return Ok(left + right + delta / 15.0);
        }
        if depth == 0 {
            return Err(Error::Numeric(format!("adaptive quadrature did not converge on [{a}, {b}]")));
        }
        Ok(self.refine(a, m, fa, flm, fm, left, tol / 2.0, depth - 1)?
            + self.refine(m, b, fm, frm, fb, right, tol / 2.0, depth - 1)?)
    }
}

impl<F: Fn(f64) -> Result<f64> + Sync> PeriodicLift for FnLift<F> {
    fn value(&self, x: f64) -> Result<f64> {
        (self.f)(x)
    }

    fn integral(&self, a: f64, b: f64) -> Result<f64> {
        // Whole periods contribute ∫_a^{a+1} H plus a linear drift.
        let periods = (b - a).floor();
        let rest = self.simpson(a + periods, b)?;
        if periods == 0.0 {
            return Ok(rest);
        }
        let one = self.simpson(a, a + 1.0)?;
        Ok(periods * one + periods * (periods - 1.0) / 2.0 + rest)
    }
}

/// Piecewise-linear lift through `H(i/N)`, integrated exactly.
#[derive(Debug, Clone)]
pub struct TabulatedLift {
    // H(x) = x + p(x) with p periodic, tabulated at i/N.
    p: Vec<f64>,
    prefix: Vec<f64>,
}

impl TabulatedLift {
    /// `values[i] = H(i/N)`, strictly increasing with `H(1) = H(0) + 1`
    /// implied.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        if n < 2 {
            return Err(Error::Degenerate("need at least two samples".into()));
        }
        let mut p: Vec<f64> = values.iter().enumerate().map(|(i, v)| v - i as f64 / n as f64).collect();
        p.push(p[0]);
        let h = 1.0 / n as f64;
        let mut prefix = vec![0.0; n + 1];
        for i in 0..n {
            prefix[i + 1] = prefix[i] + 0.5 * h * (p[i] + p[i + 1]);
        }
        Ok(TabulatedLift { p, prefix })
    }

    /// Samples `h` at `n` uniform angles from `a_0`'s angle 0.
    pub fn from_conjugacy(c: &Conjugacy, n: usize, tol: f64) -> Result<Self> {
        let lift = conjugacy_lift(c, tol);
        let values: Vec<f64> = (0..n).into_par_iter().map(|i| lift(i as f64 / n as f64)).collect::<Result<_>>()?;
        TabulatedLift::new(values)
    }

    fn n(&self) -> usize {
        self.p.len() - 1
    }

    fn periodic_part(&self, x: f64) -> f64 {
        let n = self.n() as f64;
        let s = (x - x.floor()) * n;
        let i = (s.floor() as usize).min(self.n() - 1);
        let u = s - i as f64;
        self.p[i] * (1.0 - u) + self.p[i + 1] * u
    }

    // ∫_0^x p for x in [0, 1].
    fn partial(&self, x: f64) -> f64 {
        let n = self.n() as f64;
        let s = x * n;
        let i = (s.floor() as usize).min(self.n() - 1);
        let u = s - i as f64;
        let pu = self.p[i] * (1.0 - u) + self.p[i + 1] * u;
        self.prefix[i] + 0.5 * (u / n) * (self.p[i] + pu)
    }

    fn antiderivative(&self, x: f64) -> f64 {
        let k = x.floor();
        k * self.prefix[self.n()] + self.partial(x - k) + 0.5 * x * x
    }
}

impl PeriodicLift for TabulatedLift {
    fn value(&self, x: f64) -> Result<f64> {
        Ok(x + self.periodic_part(x))
    }

    fn integral(&self, a: f64, b: f64) -> Result<f64> {
        Ok(self.antiderivative(b) - self.antiderivative(a))
    }
}

/// `x ↦ H(x)` for the conjugacy, with `H(0)` the angle of `h(0)`.
pub fn conjugacy_lift(c: &Conjugacy, tol: f64) -> impl Fn(f64) -> Result<f64> + Sync + '_ {
    move |x: f64| {
        let (h0, _) = c.eval_h(CirclePoint::ZERO, tol)?;
        let k = x.floor();
        let frac = x - k;
        let (hx, _) = c.eval_h(CirclePoint::new(frac), tol)?;
        let mut o = h0.ccw_to(hx);
        if frac < 0.5 && o > 1.0 - 1e-9 {
            o -= 1.0;
        }
        Ok(k + h0.turns() + o)
    }
}

/// The extension `u + iv` at `x + iy`, `y > 0`, in periodic half-plane
/// coordinates: `u` is the mean of `H` over `[x−y, x+y]` and `v` the
/// difference of the means over the two halves.
pub fn beurling_ahlfors_half_plane(h: &impl PeriodicLift, x: f64, y: f64) -> Result<(f64, f64)> {
    if !(y > 0.0) {
        return Err(Error::Degenerate(format!("height must be positive, got {y}")));
    }
    let left = h.integral(x - y, x)?;
    let right = h.integral(x, x + y)?;
    Ok(((left + right) / (2.0 * y), (right - left) / (2.0 * y)))
}

/// Minimal distance to the unit circle for [`beurling_ahlfors_extend`].
pub const BOUNDARY_MARGIN: f64 = 1e-6;

/// The extension at a point of the unit disk, through the chart
/// `ζ = exp(2πi(x + iy))`.
pub fn beurling_ahlfors_extend(h: &impl PeriodicLift, w: Complex64) -> Result<Complex64> {
    let r = w.norm();
    if r >= 1.0 - BOUNDARY_MARGIN {
        return Err(Error::Degenerate(format!("|w| = {r} is too close to the unit circle")));
    }
    if r == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let x = w.arg() / std::f64::consts::TAU;
    let y = -r.ln() / std::f64::consts::TAU;
    let (u, v) = beurling_ahlfors_half_plane(h, x, y)?;
    Ok(Complex64::from_polar((-std::f64::consts::TAU * v).exp(), std::f64::consts::TAU * u))
}

#[derive(Debug, Clone, Serialize)]
pub struct JacobianReport {
    pub grid: usize,
    pub min_jacobian: f64,
    pub nonpositive: usize,
}

/// Finite-difference Jacobian of the disk extension on an `n × n` polar grid.
pub fn jacobian_on_polar_grid(h: &impl PeriodicLift, n: usize) -> Result<JacobianReport> {
    let step = 1e-6;
    let cells: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let jac: Vec<f64> = cells
        .par_iter()
        .map(|&(i, j)| {
            let r = 0.02 + 0.96 * (i as f64 + 0.5) / n as f64;
            let th = std::f64::consts::TAU * j as f64 / n as f64;
            let at = |r: f64, th: f64| beurling_ahlfors_extend(h, Complex64::from_polar(r, th));
            let dr = (at(r + step, th)? - at(r - step, th)?) / (2.0 * step);
            let dth = (at(r, th + step)? - at(r, th - step)?) / (2.0 * step);
            // Polar coordinates are positively oriented for r > 0.
            Ok((dr.re * dth.im - dr.im * dth.re) / r)
        })
        .collect::<Result<_>>()?;
    Ok(JacobianReport {
        grid: n,
        min_jacobian: jac.iter().copied().fold(f64::INFINITY, f64::min),
        nonpositive: jac.iter().filter(|&&v| !(v > 0.0)).count(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundaryReport {
    pub samples: usize,
    /// max over samples of |u − H(x)| + v near the boundary, in turns.
    pub max_defect: f64,
    /// Largest allowed defect: the oscillation of `H` over the averaging
    /// window plus the evaluation tolerance.
    pub max_allowed: f64,
    pub pass: bool,
}

/// Compares the extension just inside the circle with `h` itself.
pub fn boundary_check(h: &impl PeriodicLift, samples: usize, eval_tol: f64) -> Result<BoundaryReport> {
    // |ζ| = exp(−2πy) stays inside the admissible disk.
    let y = 2.0 * BOUNDARY_MARGIN / std::f64::consts::TAU;
    let rows: Vec<(f64, f64, bool)> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let x = (i as f64 + 0.5) / samples as f64;
            let (u, v) = beurling_ahlfors_half_plane(h, x, y)?;
            let hx = h.value(x)?;
            let osc = h.value(x + y)? - h.value(x - y)?;
            let defect = (u - hx).abs() + v.abs();
            let allowed = 1.5 * osc + 2.0 * eval_tol;
            Ok((defect, allowed, defect <= allowed))
        })
        .collect::<Result<_>>()?;
    Ok(BoundaryReport {
        samples,
        max_defect: rows.iter().map(|r| r.0).fold(0.0, f64::max),
        max_allowed: rows.iter().map(|r| r.1).fold(0.0, f64::max),
        pass: rows.iter().all(|r| r.2),
    })
}

/// `(x, y, u, v)` on an `nx × ny` grid of the periodic half-plane with
/// heights up to `y_max`.
pub fn extension_grid(h: &impl PeriodicLift, nx: usize, ny: usize, y_max: f64) -> Result<Vec<[f64; 4]>> {
    let cells: Vec<(usize, usize)> = (0..ny).flat_map(|j| (0..nx).map(move |i| (i, j))).collect();
    cells
        .par_iter()
        .map(|&(i, j)| {
            let x = i as f64 / nx as f64;
            let y = y_max * (j as f64 + 1.0) / ny as f64;
            let (u, v) = beurling_ahlfors_half_plane(h, x, y)?;
            Ok([x, y, u, v])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circle_maps::CoveringMap;

    fn pt(x: f64) -> CirclePoint {
        CirclePoint::new(x)
    }

    fn doubling() -> MarkovPartition {
        MarkovPartition::new(CoveringMap::power(2).unwrap(), &[pt(0.0), pt(0.5)]).unwrap()
    }

    fn b2() -> MarkovPartition {
        let map = CoveringMap::blaschke(vec![0.0.into(), (-0.5).into()], 1.0.into()).unwrap();
        MarkovPartition::new(map, &[pt(0.0), pt(0.5)]).unwrap()
    }

    #[test]
    fn identity_conjugacy() {
        let c = build_conjugacy(&doubling(), &doubling(), &[0, 1]).unwrap();
        let (y, bound) = c.eval_h(pt(0.3), 1e-10).unwrap();
        assert!(y.dist(pt(0.3)) < 1e-10 && bound < 1e-10);
        let rho = c.symmetric_distortion(pt(0.3), 0.01).unwrap();
        assert!((rho - 1.0).abs() < 3.0 * CHORD_ACCURACY, "{rho}");
    }

    #[test]
    fn doubling_to_b2_quarter() {
        let c = build_conjugacy(&doubling(), &b2(), &[0, 1]).unwrap();
        let (y, _) = c.eval_h(pt(0.25), 1e-12).unwrap();
        assert!(y.dist(pt(1.0 / 3.0)) < 1e-12, "{y}");
        let l = c.verify_level(5).unwrap();
        assert!(l.order_preserving && l.anchored && l.equivariance_defect < 1e-12);
    }

    #[test]
    fn rejections() {
        let cube = MarkovPartition::new(CoveringMap::power(3).unwrap(), &[pt(0.0), pt(1.0 / 3.0), pt(2.0 / 3.0)]).unwrap();
        assert!(matches!(build_conjugacy(&doubling(), &cube, &[0, 1, 2]), Err(Error::Conjugacy(_))));
        assert!(matches!(build_conjugacy(&doubling(), &doubling(), &[1, 0]), Err(Error::Conjugacy(_))));
    }

    #[test]
    fn classes_of_synthetic_profiles() {
        let js = 3..=18u32;
        let id: Vec<(u32, f64)> = js.clone().map(|j| (j, 1.0)).collect();
        let lin: Vec<(u32, f64)> = js.clone().map(|j| (j, j as f64)).collect();
        let exp: Vec<(u32, f64)> = js.map(|j| (j, (j as f64 / 2.0).exp2())).collect();
        assert_eq!(extension_class(&id), ExtensionClass::Bounded);
        assert_eq!(extension_class(&lin), ExtensionClass::Logarithmic);
        assert_eq!(extension_class(&exp), ExtensionClass::Faster);
    }

    #[test]
    fn identity_extension_closed_form() {
        let id = FnLift::new(|x: f64| Ok(x), 1e-10);
        for (x, y) in [(0.1, 0.2), (0.7, 1.3), (-0.4, 0.01)] {
            let (u, v) = beurling_ahlfors_half_plane(&id, x, y).unwrap();
            assert!((u - x).abs() < 1e-12 && (v - y / 2.0).abs() < 1e-12);
        }
        let tab = TabulatedLift::new((0..64).map(|i| i as f64 / 64.0).collect()).unwrap();
        let (u, v) = beurling_ahlfors_half_plane(&tab, 0.3, 2.7).unwrap();
        assert!((u - 0.3).abs() < 1e-12 && (v - 1.35).abs() < 1e-12);
    }
}
