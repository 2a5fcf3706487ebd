//! Points, arcs and Möbius maps of the unit circle.
//!
//! Angles are measured in turns and kept in `[0, 1)`. Dyadic partition
//! points of the power maps are therefore exact in binary floating point.

use std::f64::consts::{PI, TAU};
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Tolerance used when comparing two circle points.
pub const POINT_EQ_TOL: f64 = 1e-14;

/// A point of S¹ stored as an angle in turns.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CirclePoint(f64);

impl CirclePoint {
    pub const ZERO: CirclePoint = CirclePoint(0.0);

    pub fn new(turns: f64) -> Self {
        let mut a = turns.rem_euclid(1.0);
        if a >= 1.0 {
            a = 0.0;
        }
        CirclePoint(a)
    }

    pub fn from_complex(z: Complex64) -> Self {
        Self::new(z.arg() / TAU)
    }

    #[inline]
    pub fn turns(self) -> f64 {
        self.0
    }

    #[inline]
    pub fn to_complex(self) -> Complex64 {
        Complex64::from_polar(1.0, TAU * self.0)
    }

    /// Positive displacement from `self` to `other`, in `[0, 1)`.
    #[inline]
    pub fn ccw_to(self, other: CirclePoint) -> f64 {
        let d = (other.0 - self.0).rem_euclid(1.0);
        if d >= 1.0 {
            0.0
        } else {
            d
        }
    }

    /// Shortest angular distance in turns, in `[0, 1/2]`.
    #[inline]
    pub fn dist(self, other: CirclePoint) -> f64 {
        let d = self.ccw_to(other);
        d.min(1.0 - d)
    }

    pub fn rotate(self, turns: f64) -> Self {
        Self::new(self.0 + turns)
    }

    pub fn approx_eq(self, other: CirclePoint, tol: f64) -> bool {
        self.dist(other) <= tol
    }
}

impl PartialEq for CirclePoint {
    fn eq(&self, other: &Self) -> bool {
        self.approx_eq(*other, POINT_EQ_TOL)
    }
}

impl fmt::Display for CirclePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Chord length between two points of the circle.
#[inline]
pub fn chord(a: CirclePoint, b: CirclePoint) -> f64 {
    2.0 * (PI * a.dist(b)).sin()
}

/// Closed arc from `start` running counterclockwise for `len` turns.
///
/// `len` lies in `(0, 1]`; `len == 1` is the whole circle cut at `start`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arc {
    start: CirclePoint,
    len: f64,
}

impl Arc {
    /// Arc `[start, end]`; coinciding endpoints describe the full circle.
    pub fn new(start: CirclePoint, end: CirclePoint) -> Self {
        let len = start.ccw_to(end);
        if len == 0.0 {
            Arc { start, len: 1.0 }
        } else {
            Arc { start, len }
        }
    }

    /// Arc `[start, end]`, rejecting coinciding endpoints.
    pub fn proper(start: CirclePoint, end: CirclePoint) -> Result<Self> {
        let len = start.ccw_to(end);
        if len <= POINT_EQ_TOL || len >= 1.0 - POINT_EQ_TOL {
            return Err(Error::Degenerate("arc endpoints coincide".into()));
        }
        Ok(Arc { start, len })
    }

    pub fn from_start_len(start: CirclePoint, len: f64) -> Result<Self> {
        if !(len > 0.0 && len <= 1.0) {
            return Err(Error::Degenerate(format!("arc length {len} outside (0,1]")));
        }
        Ok(Arc { start, len })
    }

    pub fn full(start: CirclePoint) -> Self {
        Arc { start, len: 1.0 }
    }

    #[inline]
    pub fn start(&self) -> CirclePoint {
        self.start
    }

    #[inline]
    pub fn end(&self) -> CirclePoint {
        self.start.rotate(self.len)
    }

    #[inline]
    pub fn length(&self) -> f64 {
        self.len
    }

    pub fn is_full(&self) -> bool {
        self.len >= 1.0
    }

    /// Chordal diameter.
    pub fn diam(&self) -> f64 {
        if self.len >= 0.5 {
            2.0
        } else {
            2.0 * (PI * self.len).sin()
        }
    }

    pub fn midpoint(&self) -> CirclePoint {
        self.start.rotate(0.5 * self.len)
    }

    /// Position of `x` measured from the start, in `[0, 1)`.
    #[inline]
    pub fn offset_of(&self, x: CirclePoint) -> f64 {
        self.start.ccw_to(x)
    }

    pub fn contains(&self, x: CirclePoint, tol: f64) -> bool {
        let o = self.offset_of(x);
        o <= self.len + tol || o >= 1.0 - tol
    }

    pub fn contains_interior(&self, x: CirclePoint, tol: f64) -> bool {
        let o = self.offset_of(x);
        o > tol && o < self.len - tol
    }

    /// Whether `other` lies inside `self` up to `tol` turns at each end.
    pub fn contains_arc(&self, other: &Arc, tol: f64) -> bool {
        if self.is_full() {
            return true;
        }
        let mut o = self.offset_of(other.start);
        if o >= 1.0 - tol {
            o -= 1.0;
        }
        o >= -tol && o + other.len <= self.len + tol
    }

    /// Strict containment away from both endpoints of `self`.
    pub fn contains_arc_in_interior(&self, other: &Arc, tol: f64) -> bool {
        if self.is_full() {
            return !other.start.approx_eq(self.start, tol) && !other.end().approx_eq(self.start, tol)
                && other.len < 1.0;
        }
        let o = self.offset_of(other.start);
        o > tol && o + other.len < self.len - tol
    }

    /// Split at `c`, which must be interior.
    pub fn split_at(&self, c: CirclePoint) -> Result<(Arc, Arc)> {
        let o = self.offset_of(c);
        if !(o > 0.0 && o < self.len) {
            return Err(Error::Degenerate("split point not interior".into()));
        }
        Ok((
            Arc { start: self.start, len: o },
            Arc { start: c, len: self.len - o },
        ))
    }
}

impl fmt::Display for Arc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.start, self.end())
    }
}

/// A point of the Riemann sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Extended {
    Finite(Complex64),
    Infinity,
}

impl Extended {
    pub fn finite(self) -> Option<Complex64> {
        match self {
            Extended::Finite(z) => Some(z),
            Extended::Infinity => None,
        }
    }
}

/// `z ↦ (az+b)/(cz+d)`, optionally precomposed with `z ↦ z̄`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MoebiusTransform {
    pub a: Complex64,
    pub b: Complex64,
    pub c: Complex64,
    pub d: Complex64,
    #[serde(default)]
    pub anti: bool,
}

impl MoebiusTransform {
    /// Normalizes the coefficients to determinant one.
    pub fn new(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> Result<Self> {
        Self::with_anti(a, b, c, d, false)
    }

    pub fn with_anti(a: Complex64, b: Complex64, c: Complex64, d: Complex64, anti: bool) -> Result<Self> {
        let det = a * d - b * c;
        let scale = a.norm().max(b.norm()).max(c.norm()).max(d.norm());
        if !det.is_finite() || det.norm() <= 1e-14 * scale * scale {
            return Err(Error::Degenerate("Moebius determinant vanishes".into()));
        }
        let s = det.sqrt().inv();
        Ok(MoebiusTransform { a: a * s, b: b * s, c: c * s, d: d * s, anti })
    }

    pub fn real(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        Self::new(a.into(), b.into(), c.into(), d.into())
    }

    pub fn identity() -> Self {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        MoebiusTransform { a: one, b: zero, c: zero, d: one, anti: false }
    }

    /// Rotation by `turns`.
    pub fn rotation(turns: f64) -> Self {
        let h = Complex64::from_polar(1.0, PI * turns);
        MoebiusTransform { a: h, b: 0.0.into(), c: 0.0.into(), d: h.conj(), anti: false }
    }

    pub fn apply(&self, z: Complex64) -> Extended {
        let z = if self.anti { z.conj() } else { z };
        let den = self.c * z + self.d;
        if den.norm() == 0.0 {
            return Extended::Infinity;
        }
        Extended::Finite((self.a * z + self.b) / den)
    }

    pub fn apply_ext(&self, z: Extended) -> Extended {
        match z {
            Extended::Finite(z) => self.apply(z),
            // Conjugation fixes ∞.
            Extended::Infinity => {
                if self.c.norm() == 0.0 {
                    Extended::Infinity
                } else {
                    Extended::Finite(self.a / self.c)
                }
            }
        }
    }

    /// Evaluation on the circle; only meaningful for disk-preserving maps.
    pub fn apply_circle(&self, x: CirclePoint) -> CirclePoint {
        match self.apply(x.to_complex()) {
            Extended::Finite(w) => CirclePoint::from_complex(w),
            Extended::Infinity => CirclePoint::ZERO,
        }
    }

    /// `|M'(z)|`; infinite at the pole.
    pub fn derivative_modulus(&self, z: Complex64) -> f64 {
        let z = if self.anti { z.conj() } else { z };
        let den = self.c * z + self.d;
        (self.a * self.d - self.b * self.c).norm() / den.norm_sqr()
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &MoebiusTransform) -> MoebiusTransform {
        // Conjugation commutes past a Möbius map by conjugating its coefficients.
        let (oa, ob, oc, od) = if self.anti {
            (other.a.conj(), other.b.conj(), other.c.conj(), other.d.conj())
        } else {
            (other.a, other.b, other.c, other.d)
        };
        let a = self.a * oa + self.b * oc;
        let b = self.a * ob + self.b * od;
        let c = self.c * oa + self.d * oc;
        let d = self.c * ob + self.d * od;
        MoebiusTransform::with_anti(a, b, c, d, self.anti ^ other.anti)
            .expect("composition of invertible maps is invertible")
    }

    pub fn inverse(&self) -> MoebiusTransform {
        let (a, b, c, d) = (self.d, -self.b, -self.c, self.a);
        if self.anti {
            // (M∘conj)^{-1} = conj∘M^{-1} = (conj coefficients)∘conj
            MoebiusTransform::with_anti(a.conj(), b.conj(), c.conj(), d.conj(), true)
                .expect("invertible")
        } else {
            MoebiusTransform::with_anti(a, b, c, d, false).expect("invertible")
        }
    }

    /// Projective equality of the coefficient vectors.
    pub fn approx_eq(&self, other: &MoebiusTransform, tol: f64) -> bool {
        if self.anti != other.anti {
            return false;
        }
        let s = [self.a, self.b, self.c, self.d];
        let o = [other.a, other.b, other.c, other.d];
        [1.0, -1.0].iter().any(|&sign| {
            s.iter().zip(o.iter()).all(|(x, y)| (x - y * sign).norm() <= tol)
        })
    }

    /// Checks `|M(e^{2πiθ})| = 1` on 64 equally spaced angles.
    pub fn is_disk_preserving(&self, tol: f64) -> bool {
        let maps_circle = (0..64).all(|k| {
            let z = CirclePoint::new(k as f64 / 64.0).to_complex();
            match self.apply(z) {
                Extended::Finite(w) => (w.norm() - 1.0).abs() < tol,
                Extended::Infinity => false,
            }
        });
        maps_circle
            && matches!(self.apply(Complex64::new(0.0, 0.0)), Extended::Finite(w) if w.norm() < 1.0)
    }

    /// Continuous lift of a disk-preserving map, in turns.
    ///
    /// Writes the map as `λ(z-α)/(1-ᾱz)` and uses
    /// `arg = θ + arg λ + 2 arg(1 - α e^{-iθ})`.
    pub fn disk_lift(&self, x: f64) -> f64 {
        let alpha = -self.b / self.a;
        let lambda = self.a / self.d;
        let y = if self.anti { -x } else { x };
        let e = Complex64::from_polar(1.0, -TAU * y);
        y + lambda.arg() / TAU + (Complex64::new(1.0, 0.0) - alpha * e).arg() / PI
    }
}

/// Möbius map sending `z1, z2, z3` to `0, 1, ∞`.
fn to_zero_one_infinity(z1: Complex64, z2: Complex64, z3: Complex64) -> Result<MoebiusTransform> {
    MoebiusTransform::new(z2 - z3, -z1 * (z2 - z3), z2 - z1, -z3 * (z2 - z1))
}

/// Möbius map sending the triple `from` to the triple `to`.
pub fn moebius_from_triples(from: [Complex64; 3], to: [Complex64; 3]) -> Result<MoebiusTransform> {
    let s = to_zero_one_infinity(from[0], from[1], from[2])?;
    let t = to_zero_one_infinity(to[0], to[1], to[2])?;
    Ok(t.inverse().compose(&s))
}

/// Disk automorphism with `M(p) = P`, `M(q) = Q`.
///
/// Without `deriv_at_p` the midpoint of `[p, q]` goes to the midpoint of
/// `[P, Q]`. With it, `|M'(p)|` is prescribed instead.
pub fn disk_moebius_from_constraints(
    p: CirclePoint,
    q: CirclePoint,
    big_p: CirclePoint,
    big_q: CirclePoint,
    deriv_at_p: Option<f64>,
) -> Result<MoebiusTransform> {
    let src = Arc::proper(p, q)?;
    let dst = Arc::proper(big_p, big_q)?;
    let i = Complex64::new(0.0, 1.0);
    let one = Complex64::new(1.0, 0.0);
    let std_triple = [one, i, -one];
    let t1 = moebius_from_triples([p.to_complex(), src.midpoint().to_complex(), q.to_complex()], std_triple)?;
    let t2 = moebius_from_triples(
        [big_p.to_complex(), dst.midpoint().to_complex(), big_q.to_complex()],
        std_triple,
    )?;
    let t2_inv = t2.inverse();
    let base = t2_inv.compose(&t1);
    let Some(s) = deriv_at_p else {
        return Ok(base);
    };
    if !(s.is_finite() && s > 0.0) {
        return Err(Error::Infeasible(format!("derivative {s} must be a positive real")));
    }
    let k = base.derivative_modulus(p.to_complex());
    if !(k.is_finite() && k > 0.0) {
        return Err(Error::Infeasible("singular point placement".into()));
    }
    // (z - a)/(1 - a z) fixes ±1 and has derivative (1+a)/(1-a) at 1.
    let ratio = s / k;
    let a = (ratio - 1.0) / (ratio + 1.0);
    if !(a.abs() < 1.0) {
        return Err(Error::Infeasible("derivative constraint unreachable".into()));
    }
    let shift = MoebiusTransform::real(1.0, -a, -a, 1.0)?;
    Ok(t2_inv.compose(&shift).compose(&t1))
}

/// A disk orthogonal to the unit circle.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OrthoDisk {
    pub center: Complex64,
    pub radius: f64,
}

impl OrthoDisk {
    pub fn contains(&self, z: Complex64) -> bool {
        (z - self.center).norm() < self.radius
    }

    /// `|c|² - r² - 1`, zero for an orthogonal disk.
    pub fn orthogonality_defect(&self) -> f64 {
        self.center.norm_sqr() - self.radius * self.radius - 1.0
    }
}

/// The disk bounded by the circle through `a` and `b` orthogonal to S¹.
pub fn orthogonal_disk(a: CirclePoint, b: CirclePoint) -> Result<OrthoDisk> {
    let d = a.dist(b);
    if d <= POINT_EQ_TOL {
        return Err(Error::Degenerate("orthogonal disk through a single point".into()));
    }
    if (d - 0.5).abs() <= 1e-12 {
        return Err(Error::Antipodal);
    }
    // Centre lies on the bisecting ray at distance sec(half-angle).
    let half = PI * d;
    let mid_dir = if a.ccw_to(b) <= 0.5 { Arc::new(a, b).midpoint() } else { Arc::new(b, a).midpoint() };
    let center = mid_dir.to_complex() / half.cos();
    Ok(OrthoDisk { center, radius: half.tan() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn apply_examples() {
        let id = MoebiusTransform::identity();
        assert_eq!(id.apply(c(0.5, 0.0)), Extended::Finite(c(0.5, 0.0)));
        let m = MoebiusTransform::real(3.0, -1.0, -1.0, 3.0).unwrap();
        let w = m.apply(c(1.0, 0.0)).finite().unwrap();
        assert!((w - c(1.0, 0.0)).norm() < 1e-15);
        let w = m.apply(c(-1.0, 0.0)).finite().unwrap();
        assert!((w - c(-1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn pole_is_reported() {
        let m = MoebiusTransform::real(3.0, -1.0, -1.0, 3.0).unwrap();
        assert_eq!(m.apply(c(3.0, 0.0)), Extended::Infinity);
    }

    #[test]
    fn constraint_solve_with_derivative_two() {
        let p = CirclePoint::new(0.0);
        let q = CirclePoint::new(0.5);
        let m = disk_moebius_from_constraints(p, q, p, q, Some(2.0)).unwrap();
        let expected = MoebiusTransform::real(3.0, -1.0, -1.0, 3.0).unwrap();
        assert!(m.approx_eq(&expected, 1e-12), "{m:?}");
        let id = disk_moebius_from_constraints(p, q, p, q, Some(1.0)).unwrap();
        assert!(id.approx_eq(&MoebiusTransform::identity(), 1e-12));
    }

    #[test]
    fn constraint_solve_midpoint_normalization() {
        let m = disk_moebius_from_constraints(
            CirclePoint::new(0.0),
            CirclePoint::new(0.25),
            CirclePoint::new(0.25),
            CirclePoint::new(0.5),
            None,
        )
        .unwrap();
        assert!((m.apply(c(1.0, 0.0)).finite().unwrap() - c(0.0, 1.0)).norm() < 1e-12);
        assert!((m.apply(c(0.0, 1.0)).finite().unwrap() - c(-1.0, 0.0)).norm() < 1e-12);
        assert!(m.is_disk_preserving(1e-12));
    }

    #[test]
    fn constraint_rejects_degenerate() {
        let p = CirclePoint::new(0.1);
        assert!(disk_moebius_from_constraints(p, p, p, CirclePoint::new(0.2), None).is_err());
        let q = CirclePoint::new(0.3);
        assert!(matches!(
            disk_moebius_from_constraints(p, q, p, q, Some(-1.0)),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn orthogonal_disk_examples() {
        let d = orthogonal_disk(CirclePoint::new(0.0), CirclePoint::new(0.25)).unwrap();
        assert!((d.center - c(1.0, 1.0)).norm() < 1e-12);
        assert!((d.radius - 1.0).abs() < 1e-12);
        assert!(matches!(
            orthogonal_disk(CirclePoint::new(0.0), CirclePoint::new(0.5)),
            Err(Error::Antipodal)
        ));
        let d = orthogonal_disk(CirclePoint::new(0.125), CirclePoint::new(0.375)).unwrap();
        assert!(d.center.re.abs() < 1e-12);
        assert!(d.orthogonality_defect().abs() < 1e-12);
    }

    #[test]
    fn arc_basics() {
        let a = Arc::new(CirclePoint::new(0.75), CirclePoint::new(0.25));
        assert!((a.length() - 0.5).abs() < 1e-15);
        assert!(a.contains(CirclePoint::new(0.9), 0.0));
        assert!(!a.contains(CirclePoint::new(0.5), 0.0));
        assert_eq!(a.diam(), 2.0);
        let full = Arc::new(CirclePoint::new(0.3), CirclePoint::new(0.3));
        assert!(full.is_full());
        assert!(Arc::proper(CirclePoint::new(0.3), CirclePoint::new(0.3)).is_err());
        let small = Arc::new(CirclePoint::new(0.0), CirclePoint::new(0.125));
        assert!((small.diam() - 2.0 * (PI / 8.0).sin()).abs() < 1e-15);
    }

    #[test]
    fn lift_matches_evaluation() {
        let m = disk_moebius_from_constraints(
            CirclePoint::new(0.1),
            CirclePoint::new(0.3),
            CirclePoint::new(0.6),
            CirclePoint::new(0.2),
            Some(1.7),
        )
        .unwrap();
        let mut prev = m.disk_lift(0.0);
        for k in 1..=256 {
            let x = k as f64 / 256.0;
            let l = m.disk_lift(x);
            assert!(l > prev);
            prev = l;
            let img = m.apply_circle(CirclePoint::new(x));
            assert!(img.approx_eq(CirclePoint::new(l), 1e-12));
        }
        assert!((m.disk_lift(1.0) - m.disk_lift(0.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn anti_moebius_inverse_and_compose() {
        let m = MoebiusTransform::with_anti(c(2.0, 0.5), c(0.3, -0.1), c(0.3, 0.1), c(2.0, -0.5), true).unwrap();
        let z = c(0.2, 0.7);
        let back = m.inverse().apply(m.apply(z).finite().unwrap()).finite().unwrap();
        assert!((back - z).norm() < 1e-12);
        let mm = m.compose(&m);
        assert!(!mm.anti);
        let direct = m.apply(m.apply(z).finite().unwrap()).finite().unwrap();
        assert!((mm.apply(z).finite().unwrap() - direct).norm() < 1e-12);
    }
}
