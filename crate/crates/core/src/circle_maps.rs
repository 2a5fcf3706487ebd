//! Covering maps of the circle and planar rational maps.
//!
//! Every covering map carries a continuous lift `F: ℝ → ℝ` in turns with
//! `F(x + 1) = F(x) ± d`. Preimages and inverse branches are found by
//! safeguarded Newton iteration on the lift, which works the same way for
//! analytic and piecewise maps.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;

use crate::geometry::{CirclePoint, Extended, MoebiusTransform, POINT_EQ_TOL};
use crate::poly;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Orientation {
    Preserving,
    Reversing,
}

impl Orientation {
    pub fn from_sign(s: i64) -> Result<Self> {
        match s {
            1 => Ok(Orientation::Preserving),
            -1 => Ok(Orientation::Reversing),
            _ => Err(Error::Spec(format!("orientation must be +1 or -1, got {s}"))),
        }
    }

    #[inline]
    pub fn sign(self) -> f64 {
        match self {
            Orientation::Preserving => 1.0,
            Orientation::Reversing => -1.0,
        }
    }
}

/// Derivative modulus on the circle, with both one-sided values at corners.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Derivative {
    Smooth(f64),
    Break { left: f64, right: f64 },
}

impl Derivative {
    pub fn left(self) -> f64 {
        match self {
            Derivative::Smooth(v) => v,
            Derivative::Break { left, .. } => left,
        }
    }

    pub fn right(self) -> f64 {
        match self {
            Derivative::Smooth(v) => v,
            Derivative::Break { right, .. } => right,
        }
    }

    pub fn smooth(self) -> Option<f64> {
        match self {
            Derivative::Smooth(v) => Some(v),
            Derivative::Break { .. } => None,
        }
    }

    fn scale(self, l: f64, r: f64) -> Derivative {
        match self {
            Derivative::Smooth(v) if (l - r).abs() <= 1e-12 * l.abs().max(1.0) => Derivative::Smooth(v * l),
            d => Derivative::Break { left: d.left() * l, right: d.right() * r },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPoint {
    pub point: CirclePoint,
    pub multiplier: Derivative,
}

/// A finite Blaschke product `ρ ∏ (z - aᵢ)/(1 - āᵢ z)`.
#[derive(Debug, Clone)]
pub struct Blaschke {
    zeros: Vec<Complex64>,
    rotation: Complex64,
    // Published coefficients, kept for exact evaluation when available.
    rational: Option<RationalMap>,
}

impl Blaschke {
    pub fn new(zeros: Vec<Complex64>, rotation: Complex64) -> Result<Self> {
        if zeros.is_empty() {
            return Err(Error::Spec("Blaschke product needs at least one zero".into()));
        }
        if let Some(a) = zeros.iter().find(|a| !(a.norm() < 1.0)) {
            return Err(Error::Spec(format!("Blaschke zero {a} is not inside the unit disk")));
        }
        if !((rotation.norm() - 1.0).abs() < 1e-9) {
            return Err(Error::Spec(format!("Blaschke rotation {rotation} is not unimodular")));
        }
        Ok(Blaschke { zeros, rotation: rotation / rotation.norm(), rational: None })
    }

    /// Normalizes a quotient `num/den` to factored form, keeping the quotient
    /// for evaluation.
    pub fn from_rational(num: Vec<Complex64>, den: Vec<Complex64>) -> Result<Self> {
        let rational = RationalMap::new(num, den)?;
        let zeros = poly::roots(&rational.num);
        if zeros.len() != rational.degree() {
            return Err(Error::Spec("numerator degree must equal the map degree".into()));
        }
        let one = Complex64::new(1.0, 0.0);
        let mut b = Blaschke::new(zeros, one)?;
        let Some(v) = rational.eval(one) else {
            return Err(Error::Spec("quotient has a pole on the unit circle".into()));
        };
        let rho = v / b.eval_factored(one);
        b = Blaschke::new(b.zeros, rho)?;
        for k in 0..64 {
            let z = CirclePoint::new(k as f64 / 64.0 + 0.003).to_complex();
            let Some(w) = rational.eval(z) else {
                return Err(Error::Spec("quotient has a pole on the unit circle".into()));
            };
            if (w - b.eval_factored(z)).norm() > 1e-9 {
                return Err(Error::Spec("quotient is not a Blaschke product".into()));
            }
        }
        b.rational = Some(rational);
        Ok(b)
    }

    pub fn zeros(&self) -> &[Complex64] {
        &self.zeros
    }

    pub fn rotation(&self) -> Complex64 {
        self.rotation
    }

    pub fn degree(&self) -> usize {
        self.zeros.len()
    }

    fn eval_factored(&self, z: Complex64) -> Complex64 {
        self.zeros
            .iter()
            .fold(self.rotation, |acc, &a| acc * (z - a) / (Complex64::new(1.0, 0.0) - a.conj() * z))
    }

    pub fn eval_planar(&self, z: Complex64) -> Option<Complex64> {
        match &self.rational {
            Some(r) => r.eval(z),
            None => {
                let w = self.eval_factored(z);
                w.is_finite().then_some(w)
            }
        }
    }

    fn lift(&self, x: f64) -> f64 {
        let e = Complex64::from_polar(1.0, -TAU * x);
        let one = Complex64::new(1.0, 0.0);
        self.degree() as f64 * x
            + self.rotation.arg() / TAU
            + self.zeros.iter().map(|&a| (one - a * e).arg()).sum::<f64>() / PI
    }

    fn lift_derivative(&self, x: f64) -> f64 {
        let z = Complex64::from_polar(1.0, TAU * x);
        self.zeros.iter().map(|&a| (1.0 - a.norm_sqr()) / (z - a).norm_sqr()).sum()
    }

    fn derivative_modulus(&self, x: CirclePoint) -> f64 {
        match &self.rational {
            Some(r) => match r.eval_and_derivative(x.to_complex()) {
                RationalValue::Finite { derivative, .. } => derivative.norm(),
                RationalValue::Pole => f64::INFINITY,
            },
            None => self.lift_derivative(x.turns()),
        }
    }

    pub fn to_rational(&self) -> RationalMap {
        if let Some(r) = &self.rational {
            return r.clone();
        }
        let one = Complex64::new(1.0, 0.0);
        let mut num = vec![self.rotation];
        let mut den = vec![one];
        for &a in &self.zeros {
            num = poly::mul(&num, &[-a, one]);
            den = poly::mul(&den, &[one, -a.conj()]);
        }
        RationalMap { num, den }
    }
}

/// A circle map given by Möbius pieces on the arcs `[p_k, p_{k+1})`.
#[derive(Debug, Clone)]
pub struct PiecewiseMoebius {
    points: Vec<CirclePoint>,
    pieces: Vec<MoebiusTransform>,
    // Offsets of the points from points[0], increasing in [0, 1).
    cum: Vec<f64>,
    // Integer corrections making the piecewise lift continuous.
    offsets: Vec<f64>,
    degree: usize,
    orientation: Orientation,
}

impl PiecewiseMoebius {
    /// `points` must be listed in positive cyclic order; `pieces[k]` acts on
    /// the arc from `points[k]` to the next point.
    pub fn new(points: Vec<CirclePoint>, pieces: Vec<MoebiusTransform>) -> Result<Self> {
        let n = points.len();
        if n < 2 || pieces.len() != n {
            return Err(Error::Spec(format!(
                "piecewise map needs as many pieces as points (≥ 2), got {} points and {} pieces",
                n,
                pieces.len()
            )));
        }
        let cum: Vec<f64> = points.iter().map(|&p| points[0].ccw_to(p)).collect();
        if cum.windows(2).any(|w| !(w[1] > w[0] + POINT_EQ_TOL)) {
            return Err(Error::Spec("break points must be distinct and in positive cyclic order".into()));
        }
        let anti = pieces[0].anti;
        if pieces.iter().any(|m| m.anti != anti) {
            return Err(Error::Spec("pieces must share one orientation".into()));
        }
        if let Some(k) = pieces.iter().position(|m| !m.is_disk_preserving(1e-10)) {
            return Err(Error::Spec(format!("piece {k} does not preserve the unit disk")));
        }
        let base = points[0].turns();
        let mut offsets = vec![0.0; n];
        for k in 1..n {
            let x = base + cum[k];
            let jump = pieces[k - 1].disk_lift(x) + offsets[k - 1] - pieces[k].disk_lift(x);
            let rounded = jump.round();
            if (jump - rounded).abs() > 1e-10 {
                return Err(Error::Degenerate(format!(
                    "pieces {} and {k} disagree at {} by {:.3e} turns",
                    k - 1,
                    points[k],
                    jump - rounded
                )));
            }
            offsets[k] = rounded;
        }
        let total = pieces[n - 1].disk_lift(base + 1.0) + offsets[n - 1] - pieces[0].disk_lift(base);
        let rounded = total.round();
        if (total - rounded).abs() > 1e-10 {
            return Err(Error::Degenerate(format!(
                "pieces {} and 0 disagree at {} by {:.3e} turns",
                n - 1,
                points[0],
                total - rounded
            )));
        }
        let orientation = if anti { Orientation::Reversing } else { Orientation::Preserving };
        Ok(PiecewiseMoebius {
            points,
            pieces,
            cum,
            offsets,
            degree: rounded.abs() as usize,
            orientation,
        })
    }

    pub fn points(&self) -> &[CirclePoint] {
        &self.points
    }

    pub fn pieces(&self) -> &[MoebiusTransform] {
        &self.pieces
    }

    /// Index of the half-open arc `[p_k, p_{k+1})` containing the offset `o`.
    fn piece_at_offset(&self, o: f64) -> usize {
        self.cum.partition_point(|&c| c <= o).saturating_sub(1)
    }

    pub fn piece_index(&self, x: CirclePoint) -> usize {
        let mut o = self.points[0].ccw_to(x);
        if o >= 1.0 - POINT_EQ_TOL {
            o = 0.0;
        }
        self.piece_at_offset(self.snap(o))
    }

    fn snap(&self, o: f64) -> f64 {
        for &c in &self.cum {
            if (o - c).abs() <= POINT_EQ_TOL {
                return c;
            }
        }
        o
    }

    fn lift(&self, x: f64) -> f64 {
        let base = self.points[0].turns();
        let t = x - base;
        let wraps = t.floor();
        let o = t - wraps;
        let k = self.piece_at_offset(o);
        let s = self.orientation.sign();
        self.pieces[k].disk_lift(base + o) + self.offsets[k] + s * wraps * self.degree as f64
    }

    fn lift_derivative(&self, x: f64) -> f64 {
        let p = CirclePoint::new(x);
        let k = self.piece_index(p);
        self.orientation.sign() * self.pieces[k].derivative_modulus(p.to_complex())
    }

    fn derivative(&self, x: CirclePoint) -> Derivative {
        let n = self.points.len();
        let z = x.to_complex();
        if let Some(k) = self.points.iter().position(|&p| p.approx_eq(x, POINT_EQ_TOL)) {
            let left = self.pieces[(k + n - 1) % n].derivative_modulus(z);
            let right = self.pieces[k].derivative_modulus(z);
            if (left - right).abs() <= 1e-12 * right.max(1.0) {
                return Derivative::Smooth(right);
            }
            return Derivative::Break { left, right };
        }
        Derivative::Smooth(self.pieces[self.piece_index(x)].derivative_modulus(z))
    }
}

/// A degree `d ≥ 2` covering of the circle.
#[derive(Debug, Clone)]
pub enum CoveringMap {
    /// `z ↦ z^d` or `z ↦ z̄^d`.
    Power { degree: usize, orientation: Orientation },
    Blaschke(Blaschke),
    PiecewiseMoebius(PiecewiseMoebius),
    /// `M ∘ base ∘ M⁻¹` for a disk automorphism `M`.
    Conjugated { base: Box<CoveringMap>, by: MoebiusTransform, by_inv: MoebiusTransform },
}

impl CoveringMap {
    pub fn power(degree: usize) -> Result<Self> {
        Self::power_oriented(degree, Orientation::Preserving)
    }

    pub fn power_oriented(degree: usize, orientation: Orientation) -> Result<Self> {
        if degree < 2 {
            return Err(Error::Spec(format!("degree must be at least 2, got {degree}")));
        }
        Ok(CoveringMap::Power { degree, orientation })
    }

    pub fn blaschke(zeros: Vec<Complex64>, rotation: Complex64) -> Result<Self> {
        Self::from_blaschke(Blaschke::new(zeros, rotation)?)
    }

    pub fn blaschke_rational(num: Vec<Complex64>, den: Vec<Complex64>) -> Result<Self> {
        Self::from_blaschke(Blaschke::from_rational(num, den)?)
    }

    fn from_blaschke(b: Blaschke) -> Result<Self> {
        if b.degree() < 2 {
            return Err(Error::Spec("Blaschke covering needs degree at least 2".into()));
        }
        Ok(CoveringMap::Blaschke(b))
    }

    pub fn piecewise_moebius(points: Vec<CirclePoint>, pieces: Vec<MoebiusTransform>) -> Result<Self> {
        let pm = PiecewiseMoebius::new(points, pieces)?;
        if pm.degree < 2 {
            return Err(Error::Spec(format!("piecewise map has degree {}, need at least 2", pm.degree)));
        }
        Ok(CoveringMap::PiecewiseMoebius(pm))
    }

    pub fn conjugated(base: CoveringMap, by: MoebiusTransform) -> Result<Self> {
        if !by.is_disk_preserving(1e-10) {
            return Err(Error::Spec("conjugating map must preserve the unit disk".into()));
        }
        Ok(CoveringMap::Conjugated { base: Box::new(base), by, by_inv: by.inverse() })
    }

    pub fn degree(&self) -> usize {
        match self {
            CoveringMap::Power { degree, .. } => *degree,
            CoveringMap::Blaschke(b) => b.degree(),
            CoveringMap::PiecewiseMoebius(p) => p.degree,
            CoveringMap::Conjugated { base, .. } => base.degree(),
        }
    }

    /// Whether the map is the restriction of a rational map.
    pub fn is_analytic(&self) -> bool {
        match self {
            CoveringMap::PiecewiseMoebius(_) => false,
            CoveringMap::Conjugated { base, .. } => base.is_analytic(),
            _ => true,
        }
    }

    pub fn orientation(&self) -> Orientation {
        match self {
            CoveringMap::Power { orientation, .. } => *orientation,
            CoveringMap::Blaschke(_) => Orientation::Preserving,
            CoveringMap::PiecewiseMoebius(p) => p.orientation,
            CoveringMap::Conjugated { base, .. } => base.orientation(),
        }
    }

    pub fn eval(&self, x: CirclePoint) -> CirclePoint {
        match self {
            CoveringMap::Power { degree, orientation } => {
                // Exact for dyadic and other short binary angles.
                CirclePoint::new(orientation.sign() * (*degree as f64) * x.turns())
            }
            CoveringMap::Blaschke(b) => match b.eval_planar(x.to_complex()) {
                Some(w) => CirclePoint::from_complex(w),
                None => CirclePoint::new(b.lift(x.turns())),
            },
            CoveringMap::PiecewiseMoebius(p) => p.pieces[p.piece_index(x)].apply_circle(x),
            CoveringMap::Conjugated { base, by, by_inv } => by.apply_circle(base.eval(by_inv.apply_circle(x))),
        }
    }

    /// Continuous lift in turns.
    pub fn lift(&self, x: f64) -> f64 {
        match self {
            CoveringMap::Power { degree, orientation } => orientation.sign() * (*degree as f64) * x,
            CoveringMap::Blaschke(b) => b.lift(x),
            CoveringMap::PiecewiseMoebius(p) => p.lift(x),
            CoveringMap::Conjugated { base, by, by_inv } => by.disk_lift(base.lift(by_inv.disk_lift(x))),
        }
    }

    /// Signed derivative of the lift (right-sided at corners).
    pub fn lift_derivative(&self, x: f64) -> f64 {
        match self {
            CoveringMap::Power { degree, orientation } => orientation.sign() * *degree as f64,
            CoveringMap::Blaschke(b) => b.lift_derivative(x),
            CoveringMap::PiecewiseMoebius(p) => p.lift_derivative(x),
            CoveringMap::Conjugated { base, by, by_inv } => {
                let y = by_inv.disk_lift(x);
                let u = base.lift(y);
                let s_by = if by.anti { -1.0 } else { 1.0 };
                s_by * by.derivative_modulus(CirclePoint::new(u).to_complex())
                    * base.lift_derivative(y)
                    * s_by
                    * by_inv.derivative_modulus(CirclePoint::new(x).to_complex())
            }
        }
    }

    pub fn derivative_modulus(&self, x: CirclePoint) -> Derivative {
        match self {
            CoveringMap::Power { degree, .. } => Derivative::Smooth(*degree as f64),
            CoveringMap::Blaschke(b) => Derivative::Smooth(b.derivative_modulus(x)),
            CoveringMap::PiecewiseMoebius(p) => p.derivative(x),
            CoveringMap::Conjugated { base, by, by_inv } => {
                let y = by_inv.apply_circle(x);
                let u = base.eval(y);
                let outer = by.derivative_modulus(u.to_complex());
                let inner = by_inv.derivative_modulus(x.to_complex());
                let d = base.derivative_modulus(y);
                // An anti-Möbius conjugacy swaps the two sides of a corner.
                let d = if by.anti { Derivative::Break { left: d.right(), right: d.left() } } else { d };
                match d {
                    Derivative::Smooth(v) => Derivative::Smooth(outer * v * inner),
                    d => d.scale(outer * inner, outer * inner),
                }
            }
        }
    }

    /// Solves `F(x) = target` for `x ∈ [lo, hi]`, where the lift is monotone.
    pub fn solve_lift(&self, lo: f64, hi: f64, target: f64) -> Result<f64> {
        let s = self.orientation().sign();
        if let CoveringMap::Power { degree, .. } = self {
            return Ok((target / (s * *degree as f64)).clamp(lo, hi));
        }
        let g = |x: f64| s * (self.lift(x) - target);
        let (mut a, mut b) = (lo, hi);
        let (ga, gb) = (g(a), g(b));
        if ga >= 0.0 {
            return if ga <= 1e-11 { Ok(a) } else { Err(Error::Numeric(format!("target {target} below branch"))) };
        }
        if gb <= 0.0 {
            return if gb >= -1e-11 { Ok(b) } else { Err(Error::Numeric(format!("target {target} above branch"))) };
        }
        let mut x = 0.5 * (a + b);
        let mut width = b - a;
        for it in 0..200 {
            let gx = g(x);
            if gx == 0.0 {
                return Ok(x);
            }
            if gx < 0.0 {
                a = x;
            } else {
                b = x;
            }
            if b - a <= 4.0 * f64::EPSILON * x.abs().max(1.0) {
                return Ok(0.5 * (a + b));
            }
            let d = s * self.lift_derivative(x);
            let newton = x - gx / d;
            let stalled = it % 2 == 1 && b - a > 0.5 * width;
            if it % 2 == 1 {
                width = b - a;
            }
            let next = if d > 0.0 && newton > a && newton < b && !stalled { newton } else { 0.5 * (a + b) };
            if (next - x).abs() <= 2.0 * f64::EPSILON * x.abs().max(1.0) {
                return Ok(next);
            }
            x = next;
        }
        Err(Error::Numeric(format!("lift inversion did not converge for target {target}")))
    }

    /// The `d` preimages of `y` in increasing angle order.
    pub fn preimages(&self, y: CirclePoint) -> Result<Vec<CirclePoint>> {
        let d = self.degree();
        if let CoveringMap::Power { orientation, .. } = self {
            let mut out: Vec<CirclePoint> = (0..d)
                .map(|k| match orientation {
                    Orientation::Preserving => CirclePoint::new((y.turns() + k as f64) / d as f64),
                    Orientation::Reversing => CirclePoint::new((k as f64 - y.turns()) / d as f64),
                })
                .collect();
            out.sort_by(|a, b| a.turns().total_cmp(&b.turns()));
            return Ok(out);
        }
        let s = self.orientation().sign();
        let f0 = self.lift(0.0);
        let mut frac = (s * (y.turns() - f0)).rem_euclid(1.0);
        if frac >= 1.0 - 1e-15 {
            frac = 0.0;
        }
        let mut out = Vec::with_capacity(d);
        for k in 0..d {
            let target = f0 + s * (frac + k as f64);
            let x = if k == 0 && frac == 0.0 { 0.0 } else { self.solve_lift(0.0, 1.0, target)? };
            out.push(CirclePoint::new(x));
        }
        out.sort_by(|a, b| a.turns().total_cmp(&b.turns()));
        Ok(out)
    }

    /// Fixed points on the circle with their multipliers.
    pub fn fixed_points_on_circle(&self) -> Vec<FixedPoint> {
        let d = self.degree();
        if let CoveringMap::Power { orientation, .. } = self {
            // d θ ≡ θ or -d θ ≡ θ (mod 1).
            let m = match orientation {
                Orientation::Preserving => d - 1,
                Orientation::Reversing => d + 1,
            };
            return (0..m)
                .map(|k| FixedPoint {
                    point: CirclePoint::new(k as f64 / m as f64),
                    multiplier: Derivative::Smooth(d as f64),
                })
                .collect();
        }
        const GRID: usize = 4096;
        let xs: Vec<f64> = (0..=GRID).map(|i| i as f64 / GRID as f64).collect();
        let disp: Vec<f64> = xs.iter().map(|&x| self.lift(x) - x).collect();
        let mut found: Vec<f64> = Vec::new();
        let push = |x: f64, found: &mut Vec<f64>| {
            let p = CirclePoint::new(x);
            if !found.iter().any(|&q| CirclePoint::new(q).dist(p) < 1e-10) {
                found.push(p.turns());
            }
        };
        for i in 0..GRID {
            let (d0, d1) = (disp[i], disp[i + 1]);
            let (lo, hi) = (d0.min(d1), d0.max(d1));
            let k_lo = (lo - 1e-15).ceil() as i64;
            let k_hi = (hi + 1e-15).floor() as i64;
            for k in k_lo..=k_hi {
                let kf = k as f64;
                if (d0 - kf).abs() <= 1e-15 {
                    push(xs[i], &mut found);
                    continue;
                }
                if (d1 - kf).abs() <= 1e-15 {
                    push(xs[i + 1], &mut found);
                    continue;
                }
                let (mut a, mut b) = (xs[i], xs[i + 1]);
                let ga = d0 - kf;
                for _ in 0..80 {
                    let m = 0.5 * (a + b);
                    let gm = self.lift(m) - m - kf;
                    if gm == 0.0 {
                        a = m;
                        b = m;
                        break;
                    }
                    if (gm < 0.0) == (ga < 0.0) {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                push(0.5 * (a + b), &mut found);
            }
        }
        found.sort_by(|a, b| a.total_cmp(b));
        found
            .into_iter()
            .map(|x| {
                let point = CirclePoint::new(x);
                FixedPoint { point, multiplier: self.derivative_modulus(point) }
            })
            .collect()
    }

    /// The planar rational map extending this covering, when one exists.
    pub fn to_rational(&self) -> Option<RationalMap> {
        match self {
            CoveringMap::Power { degree, orientation: Orientation::Preserving } => {
                let mut num = vec![Complex64::new(0.0, 0.0); degree + 1];
                num[*degree] = Complex64::new(1.0, 0.0);
                Some(RationalMap { num, den: vec![Complex64::new(1.0, 0.0)] })
            }
            CoveringMap::Blaschke(b) => Some(b.to_rational()),
            _ => None,
        }
    }
}

/// Result of evaluating a rational map with its derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RationalValue {
    Finite { value: Complex64, derivative: Complex64 },
    Pole,
}

/// `N(z)/D(z)` with coefficient lists in ascending degree.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalMap {
    num: Vec<Complex64>,
    den: Vec<Complex64>,
}

impl RationalMap {
    pub fn new(num: Vec<Complex64>, den: Vec<Complex64>) -> Result<Self> {
        let num = poly::trim(num);
        let den = poly::trim(den);
        if den.iter().all(|c| c.norm() == 0.0) {
            return Err(Error::Spec("denominator is identically zero".into()));
        }
        if num.iter().chain(den.iter()).any(|c| !c.is_finite()) {
            return Err(Error::Spec("coefficients must be finite".into()));
        }
        let scale: f64 = num.iter().map(|c| c.norm()).sum::<f64>().max(1e-300);
        for r in poly::roots(&den) {
            let size = r.norm().max(1.0).powi(num.len() as i32);
            if poly::eval(&num, r).norm() <= 1e-10 * scale * size {
                return Err(Error::Spec(format!("numerator and denominator share the root {r}")));
            }
        }
        Ok(RationalMap { num, den })
    }

    pub fn polynomial(coeffs: Vec<Complex64>) -> Result<Self> {
        Self::new(coeffs, vec![Complex64::new(1.0, 0.0)])
    }

    pub fn numerator(&self) -> &[Complex64] {
        &self.num
    }

    pub fn denominator(&self) -> &[Complex64] {
        &self.den
    }

    pub fn degree(&self) -> usize {
        poly::degree(&self.num).max(poly::degree(&self.den))
    }

    pub fn is_polynomial(&self) -> bool {
        poly::degree(&self.den) == 0
    }

    pub fn eval_and_derivative(&self, z: Complex64) -> RationalValue {
        let (n, dn) = poly::eval_d(&self.num, z);
        let (d, dd) = poly::eval_d(&self.den, z);
        if d.norm() == 0.0 {
            return RationalValue::Pole;
        }
        let value = n / d;
        let derivative = (dn * d - n * dd) / (d * d);
        if !value.is_finite() {
            return RationalValue::Pole;
        }
        RationalValue::Finite { value, derivative }
    }

    pub fn eval(&self, z: Complex64) -> Option<Complex64> {
        let d = poly::eval(&self.den, z);
        if d.norm() == 0.0 {
            return None;
        }
        let v = poly::eval(&self.num, z) / d;
        v.is_finite().then_some(v)
    }

    pub fn eval_ext(&self, z: Extended) -> Extended {
        match z {
            Extended::Finite(z) => self.eval(z).map_or(Extended::Infinity, Extended::Finite),
            Extended::Infinity => {
                let (dn, dd) = (poly::degree(&self.num), poly::degree(&self.den));
                if dn > dd {
                    Extended::Infinity
                } else if dn < dd {
                    Extended::Finite(Complex64::new(0.0, 0.0))
                } else {
                    Extended::Finite(self.num[dn] / self.den[dd])
                }
            }
        }
    }

    /// All finite solutions of `R(z) = w`, with multiplicity.
    pub fn preimages(&self, w: Complex64) -> Vec<Complex64> {
        let scaled: Vec<Complex64> = self.den.iter().map(|c| c * w).collect();
        poly::roots(&poly::sub(&self.num, &scaled))
    }

    /// Finite fixed points paired with their multipliers `R'(z)`.
    pub fn fixed_points(&self) -> Vec<(Complex64, Complex64)> {
        let mut zden = vec![Complex64::new(0.0, 0.0)];
        zden.extend_from_slice(&self.den);
        poly::roots(&poly::sub(&self.num, &zden))
            .into_iter()
            .filter_map(|z| match self.eval_and_derivative(z) {
                RationalValue::Finite { derivative, .. } => Some((z, derivative)),
                RationalValue::Pole => None,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn pine_tree() -> CoveringMap {
        CoveringMap::blaschke_rational(vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(2.0, 0.0)], vec![
            c(2.0, 0.0),
            c(0.0, 0.0),
            c(0.0, 0.0),
            c(1.0, 0.0),
        ])
        .unwrap()
    }

    fn b2() -> CoveringMap {
        CoveringMap::blaschke(vec![c(0.0, 0.0), c(-0.5, 0.0)], c(1.0, 0.0)).unwrap()
    }

    #[test]
    fn doubling_eval_and_preimages() {
        let f = CoveringMap::power(2).unwrap();
        assert_eq!(f.eval(CirclePoint::new(0.25)).turns(), 0.5);
        let pre = f.preimages(CirclePoint::new(0.5)).unwrap();
        assert_eq!(pre.iter().map(|p| p.turns()).collect::<Vec<_>>(), vec![0.25, 0.75]);
        assert_eq!(f.derivative_modulus(CirclePoint::new(0.1)), Derivative::Smooth(2.0));
    }

    #[test]
    fn pine_tree_values() {
        let b = pine_tree();
        assert_eq!(b.degree(), 3);
        assert!(b.eval(CirclePoint::ZERO).approx_eq(CirclePoint::ZERO, 1e-15));
        assert!(b.eval(CirclePoint::new(0.5)).approx_eq(CirclePoint::new(0.5), 1e-15));
        let d1 = b.derivative_modulus(CirclePoint::ZERO).smooth().unwrap();
        let dm1 = b.derivative_modulus(CirclePoint::new(0.5)).smooth().unwrap();
        assert!((d1 - 1.0).abs() < 1e-12);
        assert!((dm1 - 9.0).abs() < 1e-12);
        let pre = b.preimages(CirclePoint::ZERO).unwrap();
        for (p, e) in pre.iter().zip([0.0, 1.0 / 3.0, 2.0 / 3.0]) {
            assert!(p.approx_eq(CirclePoint::new(e), 1e-12), "{p}");
        }
    }

    #[test]
    fn pine_tree_lift_agrees_with_quotient() {
        let b = pine_tree();
        for k in 0..256 {
            let x = k as f64 / 256.0 + 1e-3;
            assert!(CirclePoint::new(b.lift(x)).approx_eq(b.eval(CirclePoint::new(x)), 1e-12));
            assert!((b.lift(x + 1.0) - b.lift(x) - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn b2_values() {
        let f = b2();
        let pre = f.preimages(CirclePoint::new(0.5)).unwrap();
        assert!(pre[0].approx_eq(CirclePoint::new(1.0 / 3.0), 1e-12));
        assert!(pre[1].approx_eq(CirclePoint::new(2.0 / 3.0), 1e-12));
        let fp = f.fixed_points_on_circle();
        assert_eq!(fp.len(), 1);
        assert!(fp[0].point.approx_eq(CirclePoint::ZERO, 1e-12));
        assert!((fp[0].multiplier.smooth().unwrap() - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn power_fixed_points() {
        let f = CoveringMap::power(3).unwrap();
        let fp = f.fixed_points_on_circle();
        assert_eq!(fp.len(), 2);
        assert_eq!(fp[1].point.turns(), 0.5);
        let g = CoveringMap::power_oriented(2, Orientation::Reversing).unwrap();
        assert_eq!(g.fixed_points_on_circle().len(), 3);
    }

    #[test]
    fn pine_tree_fixed_points() {
        let fp = pine_tree().fixed_points_on_circle();
        assert_eq!(fp.len(), 2, "{fp:?}");
        assert!(fp[0].point.approx_eq(CirclePoint::ZERO, 1e-12));
        assert!(fp[1].point.approx_eq(CirclePoint::new(0.5), 1e-12));
        assert!((fp[1].multiplier.smooth().unwrap() - 9.0).abs() < 1e-9);
    }

    #[test]
    fn rational_square() {
        let r = RationalMap::polynomial(vec![c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]).unwrap();
        assert_eq!(r.eval_and_derivative(c(2.0, 0.0)), RationalValue::Finite { value: c(4.0, 0.0), derivative: c(4.0, 0.0) });
        let pole = RationalMap::new(vec![c(1.0, 0.0)], vec![c(0.0, 0.0), c(1.0, 0.0)]).unwrap();
        assert_eq!(pole.eval_and_derivative(c(0.0, 0.0)), RationalValue::Pole);
        assert!(RationalMap::new(vec![c(-1.0, 0.0), c(1.0, 0.0)], vec![c(-1.0, 0.0), c(1.0, 0.0)]).is_err());
    }

    #[test]
    fn conjugated_matches_composition() {
        let m = crate::geometry::disk_moebius_from_constraints(
            CirclePoint::new(0.0),
            CirclePoint::new(0.3),
            CirclePoint::new(0.1),
            CirclePoint::new(0.5),
            None,
        )
        .unwrap();
        let f = CoveringMap::conjugated(b2(), m).unwrap();
        let inv = m.inverse();
        for k in 0..256 {
            let x = CirclePoint::new(k as f64 / 256.0);
            let direct = m.apply_circle(b2().eval(inv.apply_circle(x)));
            assert!(f.eval(x).approx_eq(direct, 1e-12));
            assert!(CirclePoint::new(f.lift(x.turns())).approx_eq(direct, 1e-11));
        }
        for y in [0.0, 0.2, 0.77] {
            for p in f.preimages(CirclePoint::new(y)).unwrap() {
                assert!(f.eval(p).approx_eq(CirclePoint::new(y), 1e-11));
            }
        }
    }

    #[test]
    fn piecewise_doubling_from_pieces() {
        // Two rotations-free pieces realizing a degree-2 map through the
        // points 0 and 1/2: both halves map onto the full circle.
        let h = MoebiusTransform::real(3.0, -1.0, -1.0, 3.0).unwrap();
        let r = MoebiusTransform::rotation(0.5);
        let pieces = vec![h, r.compose(&h).compose(&r.inverse())];
        // Piece 0 fixes 0 and 1/2: image of [0,1/2) is [0,1/2), not a cover.
        let pm = PiecewiseMoebius::new(vec![CirclePoint::new(0.0), CirclePoint::new(0.5)], pieces);
        assert!(pm.is_ok());
        assert_eq!(pm.unwrap().degree, 1);
    }
}
