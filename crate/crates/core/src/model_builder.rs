//! Piecewise-Möbius models with prescribed behaviour at periodic points.
//!
//! Given a Markov partition of an expanding covering `f`, [`build_model`]
//! places target points `b_k` at equal spacing and defines `g` on each arc
//! `B_k = [b_k, b_{k+1}]` as a disk automorphism sending `B_k` onto the arc
//! that `f` assigns to `A_k`. A hyperbolic prescription fixes the one-sided
//! derivative at the periodic endpoint to the multiplier (2 by default), a
//! parabolic one fixes it to 1.
//!
//! [`build_neighborhoods`] produces the regions `U_k`, `V_k` of the extension
//! condition and checks disjointness and the inclusions on boundary samples.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::circle_maps::{CoveringMap, Orientation};
use crate::classify::{classify_point, Depths, SymmetryReport, Verdict};
use crate::geometry::{disk_moebius_from_constraints, orthogonal_disk, Arc, CirclePoint, Extended, MoebiusTransform};
use crate::markov::{ExpansivityVerdict, MarkovPartition};
use crate::viz::{MapSpec, MoebiusSpec};
use crate::{Error, Result};

/// Default one-sided derivative at hyperbolic points.
pub const DEFAULT_MULTIPLIER: f64 = 2.0;
/// Lens half-angle as a fraction of a right angle; the retry uses the second.
pub const MARGINS: [f64; 2] = [0.95, 0.85];
/// Total number of boundary samples used by the (M2) checks.
pub const DEFAULT_SAMPLES: usize = 10_000;

const DERIVATIVE_TOL: f64 = 1e-10;
const CONTINUITY_TOL: f64 = 1e-10;
const INCLUSION_TOL: f64 = 1e-9;
const CUTOFF_FACTOR: f64 = 1.05;
// Lens boundary parameter range, in log scale of the chart S_k.
const LENS_SPAN: f64 = 12.0;
const REPEL_START: f64 = 1e-3;
const REPEL_STEPS: usize = 50;
const LAMBDA_TOL: f64 = 0.05;
const PARABOLIC_EXPONENT_TOL: f64 = 0.2;
const EXPANSIVITY_DEPTH: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointKind {
    Hyperbolic,
    Parabolic,
}

/// Point types indexed like the partition points; `None` leaves a point free.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prescription {
    pub kinds: Vec<Option<PointKind>>,
    pub multiplier: f64,
}

impl Prescription {
    pub fn new(kinds: Vec<Option<PointKind>>) -> Self {
        Prescription { kinds, multiplier: DEFAULT_MULTIPLIER }
    }

    /// Prescribes `kind` at every periodic point of `p`.
    pub fn uniform(p: &MarkovPartition, kind: PointKind) -> Self {
        let kinds = (0..p.points().len()).map(|k| period(p, k).map(|_| kind)).collect();
        Prescription::new(kinds)
    }

    /// Overrides the hyperbolic multiplier; it must exceed 1.
    pub fn with_multiplier(mut self, m: f64) -> Result<Self> {
        if !(m.is_finite() && m > 1.0) {
            return Err(Error::Infeasible(format!("hyperbolic multiplier {m} must exceed 1")));
        }
        self.multiplier = m;
        Ok(self)
    }

    fn target_derivative(&self, kind: PointKind) -> f64 {
        match kind {
            PointKind::Hyperbolic => self.multiplier,
            PointKind::Parabolic => 1.0,
        }
    }
}

/// Period of the partition point `a_k` under `k ↦ image_index(k)`, if periodic.
pub fn period(p: &MarkovPartition, k: usize) -> Option<usize> {
    let n = p.points().len();
    let mut j = k;
    for q in 1..=n {
        j = p.image_index(j);
        if j == k {
            return Some(q);
        }
    }
    None
}

/// A synthesized map `g` together with its partition.
#[derive(Debug, Clone)]
pub struct Model {
    map: CoveringMap,
    partition: MarkovPartition,
    pieces: Vec<MoebiusTransform>,
    source_transition: Vec<Vec<u8>>,
    prescription: Prescription,
}

impl Model {
    pub fn map(&self) -> &CoveringMap {
        &self.map
    }

    pub fn partition(&self) -> &MarkovPartition {
        &self.partition
    }

    pub fn pieces(&self) -> &[MoebiusTransform] {
        &self.pieces
    }

    pub fn targets(&self) -> &[CirclePoint] {
        self.partition.points()
    }

    pub fn source_transition(&self) -> &[Vec<u8>] {
        &self.source_transition
    }

    pub fn prescription(&self) -> &Prescription {
        &self.prescription
    }

    /// The same model with piece `k` replaced; used for negative controls.
    pub fn with_piece(&self, k: usize, piece: MoebiusTransform) -> Result<Model> {
        let mut pieces = self.pieces.clone();
        *pieces
            .get_mut(k)
            .ok_or_else(|| Error::Spec(format!("no piece {k} among {}", self.pieces.len())))? = piece;
        assemble(self.targets().to_vec(), pieces, self.source_transition.clone(), self.prescription.clone())
    }

    /// The model in the piecewise-Möbius map-spec format.
    pub fn export_spec(&self) -> MapSpec {
        MapSpec::PiecewiseMoebius {
            points: self.targets().iter().map(|p| p.turns()).collect(),
            pieces: self.pieces.iter().map(MoebiusSpec::from).collect(),
        }
    }
}

fn assemble(
    targets: Vec<CirclePoint>,
    pieces: Vec<MoebiusTransform>,
    source_transition: Vec<Vec<u8>>,
    prescription: Prescription,
) -> Result<Model> {
    let map = CoveringMap::piecewise_moebius(targets.clone(), pieces.clone())?;
    let partition = MarkovPartition::new(map.clone(), &targets)?;
    Ok(Model { map, partition, pieces, source_transition, prescription })
}

/// Builds `g` and its partition from the partition of `f`.
pub fn build_model(pf: &MarkovPartition, prescription: &Prescription) -> Result<Model> {
    let n = pf.points().len();
    if n < 3 {
        return Err(Error::Hypothesis(format!("at least 3 partition points are needed, got {n}")));
    }
    if pf.map().orientation() != Orientation::Preserving {
        return Err(Error::Hypothesis("orientation-reversing models are not supported".into()));
    }
    if prescription.kinds.len() != n {
        return Err(Error::Spec(format!("{} prescriptions for {n} partition points", prescription.kinds.len())));
    }
    let periodic: Vec<bool> = (0..n).map(|k| period(pf, k).is_some()).collect();
    for (k, kind) in prescription.kinds.iter().enumerate() {
        if kind.is_some() && !periodic[k] {
            return Err(Error::Hypothesis(format!("point {k} is not periodic and cannot carry a prescription")));
        }
    }
    for k in 0..n {
        if periodic[k] && periodic[(k + 1) % n] {
            return Err(Error::Hypothesis(format!("both endpoints of arc {k} are periodic")));
        }
        if pf.turning(k) >= 1.0 - 1e-9 {
            return Err(Error::Infeasible(format!("arc {k} covers the whole circle; no Möbius piece can")));
        }
    }
    let targets: Vec<CirclePoint> = (0..n).map(|k| CirclePoint::new(k as f64 / n as f64)).collect();
    let mut pieces = Vec::with_capacity(n);
    for k in 0..n {
        let (s, e) = (k, (k + 1) % n);
        let (img_s, img_e) = (targets[pf.image_index(s)], targets[pf.image_index(e)]);
        let at_start = prescription.kinds[s].map(|t| prescription.target_derivative(t));
        let at_end = prescription.kinds[e].map(|t| prescription.target_derivative(t));
        let piece = match (at_start, at_end) {
            (_, Some(d)) => disk_moebius_from_constraints(targets[e], targets[s], img_e, img_s, Some(d))?,
            (d, None) => disk_moebius_from_constraints(targets[s], targets[e], img_s, img_e, d)?,
        };
        pieces.push(piece);
    }
    let model = assemble(targets, pieces, pf.transition().to_vec(), prescription.clone())?;
    if model.partition.transition() != pf.transition() {
        return Err(Error::Inconsistent("model transition matrix differs from the source".into()));
    }
    Ok(model)
}

/// One of the circles bounding a region, for export.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundaryCircle {
    pub center: [f64; 2],
    pub radius: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Region {
    pub arc: usize,
    /// The two circles through `b_k`, `b_{k+1}` bounding the lens.
    pub lens: [BoundaryCircle; 2],
    /// `M_k⁻¹(∂D)`, or `None` when it is a line.
    pub cutoff: Option<BoundaryCircle>,
}

#[derive(Debug, Clone, Serialize)]
pub struct NeighborhoodSystem {
    /// Lens half-angle as a fraction of a right angle.
    pub margin: f64,
    /// Radius of the disk `D` centred at 0.
    pub cutoff_radius: f64,
    pub regions: Vec<Region>,
    pub samples: usize,
    /// Largest excursion of a `∂U_j` sample outside the required `V_k`.
    pub max_inclusion_defect: f64,
    pub disjoint: bool,
    pub included: bool,
    pub attempts: usize,
}

/// The chart `S(z) = e^{iφ}(z − b_k)/(z − b_{k+1})` sending `B_k` to the
/// positive axis; the lens is `|arg S| < θ`.
#[derive(Debug, Clone, Copy)]
struct Lens {
    chart: MoebiusTransform,
    inv: MoebiusTransform,
    theta: f64,
}

impl Lens {
    fn new(a: CirclePoint, b: CirclePoint, theta: f64) -> Result<Self> {
        let (za, zb) = (a.to_complex(), b.to_complex());
        let m = Arc::new(a, b).midpoint().to_complex();
        let rot = Complex64::from_polar(1.0, -((m - za) / (m - zb)).arg());
        let chart = MoebiusTransform::new(rot, -rot * za, Complex64::new(1.0, 0.0), -zb)?;
        Ok(Lens { chart, inv: chart.inverse(), theta })
    }

    /// `θ − |arg S(z)|`: positive inside.
    fn depth(&self, z: Complex64) -> f64 {
        match self.chart.apply(z) {
            Extended::Finite(s) if s.norm() > 0.0 => self.theta - s.arg().abs(),
            _ => 0.0,
        }
    }

    fn point(&self, u: f64, sign: f64) -> Complex64 {
        self.inv
            .apply(Complex64::from_polar(u.exp(), sign * self.theta))
            .finite()
            .expect("lens boundary point is finite")
    }

    fn circle(&self, sign: f64) -> Result<BoundaryCircle> {
        circumcircle(self.point(-1.0, sign), self.point(0.0, sign), self.point(1.0, sign))
    }
}

fn circumcircle(p: Complex64, q: Complex64, r: Complex64) -> Result<BoundaryCircle> {
    let d = 2.0 * (p.re * (q.im - r.im) + q.re * (r.im - p.im) + r.re * (p.im - q.im));
    if d.abs() < 1e-14 {
        return Err(Error::Degenerate("collinear points have no circumcircle".into()));
    }
    let (p2, q2, r2) = (p.norm_sqr(), q.norm_sqr(), r.norm_sqr());
    let cx = (p2 * (q.im - r.im) + q2 * (r.im - p.im) + r2 * (p.im - q.im)) / d;
    let cy = (p2 * (r.re - q.re) + q2 * (p.re - r.re) + r2 * (q.re - p.re)) / d;
    let c = Complex64::new(cx, cy);
    Ok(BoundaryCircle { center: [cx, cy], radius: (p - c).norm() })
}

struct Piece {
    lens: Lens,
    m: MoebiusTransform,
    m_inv: MoebiusTransform,
}

impl Piece {
    /// Positive inside `U_k = lens ∩ M_k⁻¹(D)`.
    fn in_u(&self, z: Complex64, radius: f64) -> f64 {
        let inside_d = match self.m.apply(z) {
            Extended::Finite(w) => radius - w.norm(),
            Extended::Infinity => -1.0,
        };
        self.lens.depth(z).min(inside_d)
    }

    /// Positive inside `V_k = D ∩ M_k(lens)`.
    fn in_v(&self, z: Complex64, radius: f64) -> f64 {
        let lens = match self.m_inv.apply(z) {
            Extended::Finite(w) => self.lens.depth(w),
            Extended::Infinity => -1.0,
        };
        lens.min(radius - z.norm())
    }

    /// At least `count` points of `∂U_k`, oversampling the parametrisation
    /// when parts of it fall outside the region.
    fn boundary_samples(&self, count: usize, radius: f64) -> Vec<Complex64> {
        let mut asked = count;
        loop {
            let out = self.boundary_grid(asked, radius);
            if out.len() >= count || asked > 64 * count {
                return out;
            }
            asked = asked * count.div_ceil(out.len().max(1)) + 3;
        }
    }

    fn boundary_grid(&self, count: usize, radius: f64) -> Vec<Complex64> {
        let per_side = count / 3;
        let mut out = Vec::with_capacity(count);
        for sign in [-1.0, 1.0] {
            for i in 0..per_side {
                let u = -LENS_SPAN + 2.0 * LENS_SPAN * (i as f64 + 0.5) / per_side as f64;
                let z = self.lens.point(u, sign);
                if let Extended::Finite(w) = self.m.apply(z) {
                    if w.norm() <= radius {
                        out.push(z);
                    }
                }
            }
        }
        let rest = count - 2 * per_side;
        for i in 0..rest {
            let w = Complex64::from_polar(radius, 2.0 * PI * (i as f64 + 0.5) / rest as f64);
            if let Extended::Finite(z) = self.m_inv.apply(w) {
                if self.lens.depth(z) >= 0.0 {
                    out.push(z);
                }
            }
        }
        out
    }
}

/// Builds `U_k`, `V_k` with the default margin, retrying once with the tighter one.
pub fn build_neighborhoods(model: &Model, samples: usize) -> Result<NeighborhoodSystem> {
    let mut last = None;
    for (i, &margin) in MARGINS.iter().enumerate() {
        let mut sys = neighborhoods_with_margin(model, margin, samples)?;
        sys.attempts = i + 1;
        if sys.disjoint && sys.included {
            return Ok(sys);
        }
        last = Some(sys);
    }
    let sys = last.expect("at least one margin");
    Err(Error::Hypothesis(format!(
        "neighbourhood checks failed at margin {} (disjoint: {}, inclusion defect {:.3e})",
        sys.margin, sys.disjoint, sys.max_inclusion_defect
    )))
}

/// One construction attempt; the report carries the check outcomes.
pub fn neighborhoods_with_margin(model: &Model, margin: f64, samples: usize) -> Result<NeighborhoodSystem> {
    if !(margin > 0.0 && margin < 1.0) {
        return Err(Error::Spec(format!("margin {margin} must lie in (0, 1)")));
    }
    let p = &model.partition;
    let n = p.points().len();
    let arcs = p.arcs();
    if let Some(k) = arcs.iter().position(|a| a.length() >= 0.5) {
        return Err(Error::Hypothesis(format!("arc {k} is at least half a turn long")));
    }
    let mut radius: f64 = 0.0;
    for a in &arcs {
        let d = orthogonal_disk(a.start(), a.end())?;
        radius = radius.max(d.center.norm() + d.radius);
    }
    radius *= CUTOFF_FACTOR;
    let theta = margin * PI / 2.0;
    let pieces: Vec<Piece> = (0..n)
        .map(|k| {
            Ok(Piece {
                lens: Lens::new(arcs[k].start(), arcs[k].end(), theta)?,
                m: model.pieces[k],
                m_inv: model.pieces[k].inverse(),
            })
        })
        .collect::<Result<_>>()?;
    let per_region = samples.div_ceil(n).max(3);
    let boundaries: Vec<Vec<Complex64>> = pieces.iter().map(|pc| pc.boundary_samples(per_region, radius)).collect();
    let total: usize = boundaries.iter().map(Vec::len).sum();

    let disjoint = (0..n).into_par_iter().all(|k| {
        boundaries[k]
            .iter()
            .all(|&z| (0..n).filter(|&j| j != k).all(|j| pieces[j].in_u(z, radius) <= INCLUSION_TOL))
    });
    let transition = p.transition();
    let max_inclusion_defect = (0..n)
        .into_par_iter()
        .map(|k| {
            let mut worst: f64 = 0.0;
            for j in (0..n).filter(|&j| transition[k][j] == 1) {
                for &z in &boundaries[j] {
                    worst = worst.max(-pieces[k].in_v(z, radius));
                }
            }
            worst
        })
        .reduce(|| 0.0, f64::max);

    let regions = pieces
        .iter()
        .enumerate()
        .map(|(k, pc)| {
            let cutoff = match pc.m_inv.apply(Complex64::new(radius, 0.0)) {
                Extended::Finite(a) => [PI / 2.0, PI]
                    .iter()
                    .map(|&t| pc.m_inv.apply(Complex64::from_polar(radius, t)).finite())
                    .collect::<Option<Vec<_>>>()
                    .and_then(|v| circumcircle(a, v[0], v[1]).ok()),
                Extended::Infinity => None,
            };
            Ok(Region { arc: k, lens: [pc.lens.circle(-1.0)?, pc.lens.circle(1.0)?], cutoff })
        })
        .collect::<Result<_>>()?;
    Ok(NeighborhoodSystem {
        margin,
        cutoff_radius: radius,
        regions,
        samples: total,
        max_inclusion_defect,
        disjoint,
        included: max_inclusion_defect <= INCLUSION_TOL,
        attempts: 1,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PointCheck {
    pub index: usize,
    pub point: CirclePoint,
    pub kind: PointKind,
    pub period: usize,
    /// Largest deviation of the two one-sided derivatives from the target.
    pub derivative_residual: f64,
    /// Cycle multipliers on the plus and minus sides, from the pieces.
    pub cycle_multipliers: [f64; 2],
    pub classification: SymmetryReport,
    pub verdict_matches: bool,
    /// Nearby points on both sides move away under iteration.
    pub repelling: bool,
    pub ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelReport {
    pub transition_preserved: bool,
    pub primitive: bool,
    pub expansive: bool,
    pub continuity_defect: f64,
    pub points: Vec<PointCheck>,
    pub pass: bool,
}

/// Re-derives the partition of `g` and checks every prescription.
pub fn verify_model(model: &Model, depths: Depths) -> Result<ModelReport> {
    let targets = model.targets().to_vec();
    let n = targets.len();
    let pg = MarkovPartition::new(model.map.clone(), &targets)?;
    let transition_preserved = pg.transition() == model.source_transition.as_slice();
    let primitive = pg.is_primitive()?.primitive;
    let expansive = pg.expansivity_profile(EXPANSIVITY_DEPTH)?.verdict == ExpansivityVerdict::Expansive;
    let continuity_defect = (0..n)
        .map(|k| {
            let b = targets[(k + 1) % n];
            model.pieces[k].apply_circle(b).dist(model.pieces[(k + 1) % n].apply_circle(b))
        })
        .fold(0.0, f64::max);

    let prescribed: Vec<(usize, PointKind)> =
        model.prescription.kinds.iter().enumerate().filter_map(|(k, t)| t.map(|t| (k, t))).collect();
    let points = prescribed
        .par_iter()
        .map(|&(k, kind)| check_point(model, &pg, k, kind, depths))
        .collect::<Result<Vec<_>>>()?;
    let pass = transition_preserved
        && primitive
        && expansive
        && continuity_defect < CONTINUITY_TOL
        && points.iter().all(|p| p.ok);
    Ok(ModelReport { transition_preserved, primitive, expansive, continuity_defect, points, pass })
}

/// One-sided derivatives of `g` at `b_k`: `(plus, minus)`.
fn one_sided(model: &Model, k: usize) -> (f64, f64) {
    let n = model.pieces.len();
    let z = model.targets()[k].to_complex();
    (model.pieces[k].derivative_modulus(z), model.pieces[(k + n - 1) % n].derivative_modulus(z))
}

fn check_point(model: &Model, pg: &MarkovPartition, k: usize, kind: PointKind, depths: Depths) -> Result<PointCheck> {
    let q = period(pg, k).ok_or_else(|| Error::Hypothesis(format!("prescribed point {k} is not periodic")))?;
    let target = model.prescription.target_derivative(kind);
    let (dp, dm) = one_sided(model, k);
    let derivative_residual = (dp - target).abs().max((dm - target).abs());
    let mut cycle = [1.0, 1.0];
    let mut j = k;
    for _ in 0..q {
        let (p, m) = one_sided(model, j);
        cycle[0] *= p;
        cycle[1] *= m;
        j = pg.image_index(j);
    }
    let point = model.targets()[k];
    let classification = classify_point(pg, point, depths)?;
    let side_ok = |v: Verdict, expected: f64| match (kind, v) {
        (PointKind::Hyperbolic, Verdict::Hyperbolic { lambda }) => {
            (lambda.powi(q as i32) - expected).abs() / expected < LAMBDA_TOL
        }
        (PointKind::Parabolic, Verdict::Parabolic { n, exponent }) => {
            n == 1 && (exponent + 1.0).abs() <= PARABOLIC_EXPONENT_TOL
        }
        _ => false,
    };
    let verdict_matches =
        side_ok(classification.plus.verdict, cycle[0]) && side_ok(classification.minus.verdict, cycle[1]);
    let repelling = repels(model, k, 1.0) && repels(model, k, -1.0);
    let ok = derivative_residual < DERIVATIVE_TOL && verdict_matches && repelling;
    Ok(PointCheck {
        index: k,
        point,
        kind,
        period: q,
        derivative_residual,
        cycle_multipliers: cycle,
        classification,
        verdict_matches,
        repelling,
        ok,
    })
}

/// Iterates `g^q` from `b_k ± 10⁻³`; the orbit must move away monotonically
/// until it leaves the adjacent arc.
fn repels(model: &Model, k: usize, side: f64) -> bool {
    let b = model.targets()[k];
    let q = period(&model.partition, k).unwrap_or(1);
    let adjacent = if side > 0.0 {
        model.partition.arc(k)
    } else {
        let n = model.pieces.len();
        model.partition.arc((k + n - 1) % n)
    };
    let mut x = b.rotate(side * REPEL_START);
    let mut dist = REPEL_START;
    for _ in 0..REPEL_STEPS {
        for _ in 0..q {
            x = model.map.eval(x);
        }
        if !adjacent.contains_interior(x, 0.0) {
            return true;
        }
        let d = b.dist(x);
        if d <= dist {
            return false;
        }
        dist = d;
    }
    true
}
