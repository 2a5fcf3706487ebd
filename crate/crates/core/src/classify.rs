//! Hyperbolic and parabolic behaviour of partition points, read off from the
//! decay of the refinement arcs next to them.

use serde::Serialize;

use crate::circle_maps::RationalMap;
use crate::geometry::{Arc, CirclePoint};
use crate::markov::MarkovPartition;
use crate::{Error, Result};
use num_complex::Complex64;

/// Arcs below this diameter are beyond double-precision resolution.
pub const RESOLUTION: f64 = 1e-12;
const WINDOW: usize = 3;
const MIN_ROWS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Side {
    Plus,
    Minus,
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Side::Plus => "+",
            Side::Minus => "-",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SideRow {
    pub n: usize,
    pub diam_i1: f64,
    pub diam_i2: f64,
}

/// Depth window for the asymptotic fits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Depths {
    pub n_min: usize,
    pub n_max: usize,
}

impl Default for Depths {
    fn default() -> Self {
        Depths { n_min: 8, n_max: 20 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Verdict {
    Hyperbolic { lambda: f64 },
    Parabolic { n: u32, exponent: f64 },
    Undetermined,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EndpointClass {
    pub side: Side,
    pub verdict: Verdict,
    pub fit_quality: f64,
    /// Depths actually used by the fit.
    pub depth_range: (usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SymmetryReport {
    pub point: CirclePoint,
    pub plus: EndpointClass,
    pub minus: EndpointClass,
    pub symmetric: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct M1Report {
    pub points: Vec<SymmetryReport>,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum PairCase {
    /// Same type on each side with a common exponent `μ`.
    Matched { mu: f64 },
    /// Symmetrically hyperbolic source, symmetrically parabolic target.
    HyperbolicToParabolic,
    Mismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ExtensionPrediction {
    Quasisymmetric,
    David,
    Unknown,
}

#[derive(Debug, Clone, Serialize)]
pub struct CorrespondenceReport {
    pub pairs: Vec<(CirclePoint, CirclePoint, PairCase)>,
    pub prediction: ExtensionPrediction,
    /// The David prediction presumes the target is analytic near the circle;
    /// it is not verified from circle data.
    pub analytic_assumption: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrbitRate {
    pub exponent: f64,
    pub fit_quality: f64,
    /// Difference between the exponents fitted on the two halves of the range.
    pub drift: f64,
    /// Set when the decay is not of power-law type.
    pub non_parabolic: bool,
}

/// Least-squares line through `(x, y)`: slope, intercept and R².
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    (slope, my - slope * mx, r2)
}

fn partition_index(p: &MarkovPartition, a: CirclePoint) -> Result<usize> {
    p.points()
        .iter()
        .position(|q| q.approx_eq(a, 1e-12))
        .ok_or_else(|| Error::Degenerate(format!("{a} is not a partition point")))
}

/// Diameters of the two consecutive `F_n` arcs on one side of `a`, innermost
/// first. Rows stop once the inner arc drops below [`RESOLUTION`].
pub fn side_diameters(p: &MarkovPartition, a: CirclePoint, side: Side, depths: Depths) -> Result<Vec<SideRow>> {
    let k = partition_index(p, a)?;
    let np = p.points().len();
    let k_window = WINDOW.min(np);
    let mut window: Vec<(Vec<usize>, Arc)> = (0..k_window)
        .map(|i| {
            let j = match side {
                Side::Plus => (k + i) % np,
                Side::Minus => (k + np - 1 - i) % np,
            };
            (vec![j], p.arc(j))
        })
        .collect();
    let mut rows = Vec::new();
    for n in 1..=depths.n_max {
        if n > 1 {
            let mut next = Vec::new();
            for (w, _) in &window {
                let mut kids = p.children(w)?;
                if side == Side::Minus {
                    kids.reverse();
                }
                for (j, arc) in kids {
                    let mut child = w.clone();
                    child.push(j);
                    next.push((child, arc));
                    if next.len() == WINDOW {
                        break;
                    }
                }
                if next.len() == WINDOW {
                    break;
                }
            }
            window = next;
        }
        let i1 = window[0].1;
        let touches = match side {
            Side::Plus => i1.start().approx_eq(a, 1e-12),
            Side::Minus => i1.end().approx_eq(a, 1e-12),
        };
        if !touches {
            return Err(Error::Numeric(format!("lost track of the arcs at {a} on level {n}")));
        }
        if i1.diam() < RESOLUTION || window.len() < 2 {
            break;
        }
        if n >= depths.n_min {
            rows.push(SideRow { n, diam_i1: i1.diam(), diam_i2: window[1].1.diam() });
        }
    }
    Ok(rows)
}

struct Fit {
    slope1: f64,
    slope2: f64,
    r2: f64,
    residual: f64,
}

fn fit_rows(rows: &[SideRow], x_of: impl Fn(usize) -> f64) -> Fit {
    let x: Vec<f64> = rows.iter().map(|r| x_of(r.n)).collect();
    let y1: Vec<f64> = rows.iter().map(|r| r.diam_i1.ln()).collect();
    let y2: Vec<f64> = rows.iter().map(|r| r.diam_i2.ln()).collect();
    let (slope1, c1, r1) = linear_fit(&x, &y1);
    let (slope2, c2, r2) = linear_fit(&x, &y2);
    let residual: f64 = x
        .iter()
        .zip(y1.iter().zip(&y2))
        .map(|(&t, (&a, &b))| (a - slope1 * t - c1).powi(2) + (b - slope2 * t - c2).powi(2))
        .sum();
    Fit { slope1, slope2, r2: r1.min(r2), residual }
}

/// Power-law fit against `n + n0`, with the index shift `n0` shared by both
/// arcs and chosen by least squares. The shift is absorbed by the constants
/// of the two-sided bounds, and removes most of the slow transient.
fn power_fit(rows: &[SideRow]) -> Fit {
    let first = rows[0].n as f64;
    let steps = (2.0 * first / 0.25) as usize;
    (1..steps)
        .map(|i| -first + 0.25 * i as f64)
        .map(|n0| fit_rows(rows, |n| (n as f64 + n0).ln()))
        .min_by(|a, b| a.residual.total_cmp(&b.residual))
        .expect("nonempty shift grid")
}

/// Decides between geometric and power-law decay from the side rows.
pub fn classify_rows(side: Side, rows: &[SideRow]) -> EndpointClass {
    let depth_range = (rows.first().map_or(0, |r| r.n), rows.last().map_or(0, |r| r.n));
    let undetermined = |q: f64| EndpointClass { side, verdict: Verdict::Undetermined, fit_quality: q, depth_range };
    if rows.len() < MIN_ROWS {
        return undetermined(0.0);
    }
    let geo = fit_rows(rows, |n| n as f64);
    let lambda1 = (-geo.slope1).exp();
    let lambda2 = (-geo.slope2).exp();
    let consistent = (geo.slope1 - geo.slope2).abs() <= 0.1 * geo.slope1.abs();
    let hyperbolic = geo.r2 >= 0.995 && lambda1 > 1.02 && lambda2 > 1.02 && consistent;

    let pow = power_fit(rows);
    let nn = (1.0 / pow.slope1.abs()).round().max(1.0);
    let parabolic = pow.slope1 < 0.0
        && pow.r2 >= 0.99
        && (pow.slope1 + 1.0 / nn).abs() <= 0.15
        && (pow.slope2 + 1.0 / nn + 1.0).abs() <= 0.15;

    let pick_hyperbolic = match (hyperbolic, parabolic) {
        (true, true) => geo.r2 >= pow.r2,
        (h, _) => h,
    };
    if pick_hyperbolic {
        EndpointClass { side, verdict: Verdict::Hyperbolic { lambda: lambda1 }, fit_quality: geo.r2, depth_range }
    } else if parabolic {
        EndpointClass {
            side,
            verdict: Verdict::Parabolic { n: nn as u32, exponent: pow.slope1 },
            fit_quality: pow.r2,
            depth_range,
        }
    } else {
        undetermined(geo.r2.max(pow.r2))
    }
}

pub fn classify_endpoint(p: &MarkovPartition, a: CirclePoint, side: Side, depths: Depths) -> Result<EndpointClass> {
    Ok(classify_rows(side, &side_diameters(p, a, side, depths)?))
}

fn symmetric(plus: &EndpointClass, minus: &EndpointClass) -> bool {
    match (plus.verdict, minus.verdict) {
        (Verdict::Hyperbolic { lambda: lp }, Verdict::Hyperbolic { lambda: lm }) => (lp - lm).abs() / lp < 0.05,
        (Verdict::Parabolic { n: np, .. }, Verdict::Parabolic { n: nm, .. }) => np == nm,
        _ => false,
    }
}

pub fn classify_point(p: &MarkovPartition, a: CirclePoint, depths: Depths) -> Result<SymmetryReport> {
    let plus = classify_endpoint(p, a, Side::Plus, depths)?;
    let minus = classify_endpoint(p, a, Side::Minus, depths)?;
    Ok(SymmetryReport { point: a, plus, minus, symmetric: symmetric(&plus, &minus) })
}

/// Condition (M1): every side of every partition point is classified.
pub fn check_m1(p: &MarkovPartition, depths: Depths) -> Result<M1Report> {
    let points = p.points().iter().map(|&a| classify_point(p, a, depths)).collect::<Result<Vec<_>>>()?;
    let pass = points.iter().all(|r| {
        !matches!(r.plus.verdict, Verdict::Undetermined) && !matches!(r.minus.verdict, Verdict::Undetermined)
    });
    Ok(M1Report { points, pass })
}

fn side_mu(a: Verdict, b: Verdict) -> Option<f64> {
    match (a, b) {
        (Verdict::Hyperbolic { lambda: la }, Verdict::Hyperbolic { lambda: lb }) => Some(lb.ln() / la.ln()),
        (Verdict::Parabolic { n: na, .. }, Verdict::Parabolic { n: nb, .. }) => Some(na as f64 / nb as f64),
        _ => None,
    }
}

fn pair_case(a: &SymmetryReport, b: &SymmetryReport) -> PairCase {
    let is_h = |v: Verdict| matches!(v, Verdict::Hyperbolic { .. });
    let is_p = |v: Verdict| matches!(v, Verdict::Parabolic { .. });
    if let (Some(mp), Some(mm)) = (side_mu(a.plus.verdict, b.plus.verdict), side_mu(a.minus.verdict, b.minus.verdict)) {
        let parabolic_side = is_p(a.plus.verdict) || is_p(a.minus.verdict);
        let agree = if parabolic_side { mp == mm } else { (mp - mm).abs() <= 0.05 * mp.abs() };
        // A parabolic side pins μ exactly; a hyperbolic side only up to 5%.
        let agree = agree
            || (is_p(a.plus.verdict) != is_p(a.minus.verdict) && (mp - mm).abs() <= 0.05 * mp.abs().max(mm.abs()));
        if agree {
            return PairCase::Matched { mu: 0.5 * (mp + mm) };
        }
        return PairCase::Mismatch;
    }
    if a.symmetric && b.symmetric && is_h(a.plus.verdict) && is_p(b.plus.verdict) {
        return PairCase::HyperbolicToParabolic;
    }
    PairCase::Mismatch
}

/// Compares the classification of paired points of two partitions.
pub fn correspondence_check(
    report_f: &[SymmetryReport],
    report_g: &[SymmetryReport],
    pairing: &[(usize, usize)],
) -> Result<CorrespondenceReport> {
    let mut pairs = Vec::with_capacity(pairing.len());
    for &(i, j) in pairing {
        let (Some(a), Some(b)) = (report_f.get(i), report_g.get(j)) else {
            return Err(Error::Degenerate(format!("pairing ({i}, {j}) out of range")));
        };
        pairs.push((a.point, b.point, pair_case(a, b)));
    }
    let all_matched = pairs.iter().all(|p| matches!(p.2, PairCase::Matched { .. }));
    let any_mismatch = pairs.iter().any(|p| matches!(p.2, PairCase::Mismatch));
    let prediction = if all_matched {
        ExtensionPrediction::Quasisymmetric
    } else if !any_mismatch {
        ExtensionPrediction::David
    } else {
        ExtensionPrediction::Unknown
    };
    Ok(CorrespondenceReport { pairs, prediction, analytic_assumption: prediction == ExtensionPrediction::David })
}

/// Power-law rate of `|R^k(seed) - a|` over `k_range`.
pub fn parabolic_orbit_rate(r: &RationalMap, a: Complex64, seed: Complex64, k_range: (usize, usize)) -> Result<OrbitRate> {
    let (k_lo, k_hi) = k_range;
    if !(k_lo >= 1 && k_hi > k_lo) {
        return Err(Error::Degenerate(format!("bad iteration range {k_lo}..{k_hi}")));
    }
    let mut z = seed;
    let mut prev = (z - a).norm();
    // Sample points spaced evenly in log k.
    let samples = 200.min(k_hi - k_lo + 1);
    let ratio = (k_hi as f64 / k_lo as f64).powf(1.0 / (samples - 1) as f64);
    let mut targets: Vec<usize> = (0..samples).map(|i| (k_lo as f64 * ratio.powi(i as i32)).round() as usize).collect();
    targets.dedup();
    let mut xs = Vec::with_capacity(targets.len());
    let mut ys = Vec::with_capacity(targets.len());
    let mut next = 0;
    let mut underflow = false;
    for k in 1..=k_hi {
        z = r.eval(z).ok_or_else(|| Error::NotInPetal(format!("orbit hit a pole at step {k}")))?;
        let dist = (z - a).norm();
        if !dist.is_finite() {
            return Err(Error::NotInPetal(format!("orbit diverged at step {k}")));
        }
        if k <= 100 && dist >= prev {
            return Err(Error::NotInPetal(format!("distance to {a} did not decrease at step {k}")));
        }
        prev = dist;
        if next < targets.len() && k == targets[next] {
            if dist > 0.0 {
                xs.push((k as f64).ln());
                ys.push(dist.ln());
            } else {
                underflow = true;
            }
            next += 1;
        }
    }
    if xs.len() < 4 {
        return Ok(OrbitRate { exponent: f64::NEG_INFINITY, fit_quality: 0.0, drift: f64::INFINITY, non_parabolic: true });
    }
    let (exponent, _, fit_quality) = linear_fit(&xs, &ys);
    let h = xs.len() / 2;
    let (e1, _, _) = linear_fit(&xs[..h], &ys[..h]);
    let (e2, _, _) = linear_fit(&xs[h..], &ys[h..]);
    let drift = (e2 - e1).abs();
    Ok(OrbitRate { exponent, fit_quality, drift, non_parabolic: underflow || drift > 0.1 || fit_quality < 0.99 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circle_maps::CoveringMap;
    use std::f64::consts::PI;

    fn pt(x: f64) -> CirclePoint {
        CirclePoint::new(x)
    }

    #[test]
    fn doubling_side_diameters_closed_form() {
        let p = MarkovPartition::new(CoveringMap::power(2).unwrap(), &[pt(0.0), pt(0.5)]).unwrap();
        let rows = side_diameters(&p, pt(0.0), Side::Plus, Depths { n_min: 1, n_max: 20 }).unwrap();
        assert_eq!(rows.len(), 20);
        for r in rows {
            let t = 0.5f64.powi(r.n as i32);
            assert!((r.diam_i1 - 2.0 * (PI * t).sin()).abs() < 1e-14);
            assert!((r.diam_i2 - 2.0 * (PI * t).sin()).abs() < 1e-14);
        }
    }

    #[test]
    fn fits_distinguish_decay_types() {
        let geo: Vec<SideRow> =
            (8..=20).map(|n| SideRow { n, diam_i1: 3.0f64.powi(-(n as i32)), diam_i2: 3.0f64.powi(-(n as i32)) }).collect();
        match classify_rows(Side::Plus, &geo).verdict {
            Verdict::Hyperbolic { lambda } => assert!((lambda - 3.0).abs() < 1e-9),
            v => panic!("{v:?}"),
        }
        let par: Vec<SideRow> = (8..=20)
            .map(|n| SideRow { n, diam_i1: (n as f64).powf(-0.5), diam_i2: (n as f64).powf(-1.5) })
            .collect();
        assert!(matches!(classify_rows(Side::Plus, &par).verdict, Verdict::Parabolic { n: 2, .. }));
        let short = &geo[..3];
        assert_eq!(classify_rows(Side::Plus, short).verdict, Verdict::Undetermined);
    }

    #[test]
    fn orbit_rate_of_normal_form() {
        let r = RationalMap::polynomial(vec![0.0.into(), 1.0.into(), 1.0.into()]).unwrap();
        let rate = parabolic_orbit_rate(&r, 0.0.into(), Complex64::new(-0.1, 0.0), (1000, 100_000)).unwrap();
        assert!((rate.exponent + 1.0).abs() < 0.05, "{rate:?}");
        assert!(!rate.non_parabolic);
        let half = RationalMap::polynomial(vec![0.0.into(), 0.5.into()]).unwrap();
        let rate = parabolic_orbit_rate(&half, 0.0.into(), Complex64::new(0.3, 0.0), (10, 100)).unwrap();
        assert!(rate.non_parabolic);
        let repel = RationalMap::polynomial(vec![0.0.into(), 2.0.into()]).unwrap();
        assert!(matches!(
            parabolic_orbit_rate(&repel, 0.0.into(), Complex64::new(0.1, 0.0), (10, 100)),
            Err(Error::NotInPetal(_))
        ));
    }
}
