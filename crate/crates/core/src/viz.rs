//! Map-spec documents, binary PPM images and point-cloud renderers.
//!
//! A map spec is a JSON object tagged by `"type"`. Complex numbers are
//! written `[re, im]`, angles in turns, coefficient lists in ascending
//! degree. Unknown fields are rejected.
//!
//! ```
//! use circdyn::viz::MapSpec;
//! let spec = MapSpec::from_json(r#"{"type": "power", "degree": 2}"#).unwrap();
//! assert_eq!(spec.covering().unwrap().degree(), 2);
//! ```

use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circle_maps::{CoveringMap, Orientation, RationalMap};
use crate::geometry::{CirclePoint, MoebiusTransform};
use crate::{Error, Result};

type C = [f64; 2];

fn cx(c: C) -> Complex64 {
    Complex64::new(c[0], c[1])
}

fn pair(z: Complex64) -> C {
    [z.re, z.im]
}

fn unit() -> C {
    [1.0, 0.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MoebiusSpec {
    pub a: C,
    pub b: C,
    pub c: C,
    pub d: C,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub anti: bool,
}

impl MoebiusSpec {
    pub fn to_transform(&self) -> Result<MoebiusTransform> {
        MoebiusTransform::with_anti(cx(self.a), cx(self.b), cx(self.c), cx(self.d), self.anti)
    }
}

impl From<&MoebiusTransform> for MoebiusSpec {
    fn from(m: &MoebiusTransform) -> Self {
        MoebiusSpec { a: pair(m.a), b: pair(m.b), c: pair(m.c), d: pair(m.d), anti: m.anti }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapSpec {
    Power {
        degree: usize,
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        reversing: bool,
    },
    Blaschke {
        zeros: Vec<C>,
        #[serde(default = "unit")]
        rotation: C,
    },
    BlaschkeRational {
        numerator: Vec<C>,
        denominator: Vec<C>,
    },
    PiecewiseMoebius {
        points: Vec<f64>,
        pieces: Vec<MoebiusSpec>,
    },
    Conjugated {
        base: Box<MapSpec>,
        by: MoebiusSpec,
    },
    Rational {
        numerator: Vec<C>,
        denominator: Vec<C>,
    },
}

fn coeffs(c: &[C]) -> Vec<Complex64> {
    c.iter().copied().map(cx).collect()
}

impl MapSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Spec(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("map specs serialize")
    }

    /// The circle covering described by the spec.
    pub fn covering(&self) -> Result<CoveringMap> {
        match self {
            MapSpec::Power { degree, reversing } => {
                let o = if *reversing { Orientation::Reversing } else { Orientation::Preserving };
                CoveringMap::power_oriented(*degree, o)
            }
            MapSpec::Blaschke { zeros, rotation } => CoveringMap::blaschke(coeffs(zeros), cx(*rotation)),
            MapSpec::BlaschkeRational { numerator, denominator } => {
                CoveringMap::blaschke_rational(coeffs(numerator), coeffs(denominator))
            }
            MapSpec::PiecewiseMoebius { points, pieces } => CoveringMap::piecewise_moebius(
                points.iter().map(|&t| CirclePoint::new(t)).collect(),
                pieces.iter().map(MoebiusSpec::to_transform).collect::<Result<_>>()?,
            ),
            MapSpec::Conjugated { base, by } => CoveringMap::conjugated(base.covering()?, by.to_transform()?),
            MapSpec::Rational { .. } => {
                Err(Error::Spec("a general rational map does not define a circle covering".into()))
            }
        }
    }

    /// The planar rational map, when the spec has one.
    pub fn rational(&self) -> Result<RationalMap> {
        match self {
            MapSpec::Rational { numerator, denominator } => RationalMap::new(coeffs(numerator), coeffs(denominator)),
            other => other
                .covering()?
                .to_rational()
                .ok_or_else(|| Error::Spec("this map has no planar rational form".into())),
        }
    }

    /// Planar form when available, circle map otherwise.
    pub fn dynamics(&self) -> Result<Dynamics> {
        match self.rational() {
            Ok(r) => Ok(Dynamics::Planar(r)),
            Err(_) => Ok(Dynamics::Circle(self.covering()?)),
        }
    }
}

/// What a renderer iterates.
#[derive(Debug, Clone)]
pub enum Dynamics {
    Planar(RationalMap),
    Circle(CoveringMap),
}

/// An RGB raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, background: [u8; 3]) -> Self {
        let data = background.iter().copied().cycle().take(3 * width * height).collect();
        ImageBuffer { width, height, data }
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = 3 * (y * self.width + x);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Binary PPM (P6), maximum value 255.
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    pub fn write_ppm(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_ppm())?;
        Ok(())
    }
}

/// A square window of the plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct View {
    pub center: C,
    pub half_width: f64,
}

impl View {
    /// Smallest square containing the points, padded by 5%.
    pub fn fit(points: &[Complex64]) -> View {
        if points.is_empty() {
            return View { center: [0.0, 0.0], half_width: 1.0 };
        }
        let (mut lo, mut hi) = (points[0], points[0]);
        for z in points {
            lo = Complex64::new(lo.re.min(z.re), lo.im.min(z.im));
            hi = Complex64::new(hi.re.max(z.re), hi.im.max(z.im));
        }
        let half = 0.5 * (hi.re - lo.re).max(hi.im - lo.im) * 1.05;
        View { center: pair((lo + hi) / 2.0), half_width: half.max(1e-9) }
    }

    fn to_pixel(&self, z: Complex64, w: usize, h: usize) -> Option<(usize, usize)> {
        let u = (z.re - self.center[0] + self.half_width) / (2.0 * self.half_width);
        let v = (self.center[1] + self.half_width - z.im) / (2.0 * self.half_width);
        let (x, y) = ((u * w as f64).floor(), (v * h as f64).floor());
        (x >= 0.0 && y >= 0.0 && x < w as f64 && y < h as f64).then_some((x as usize, y as usize))
    }

    fn to_plane(&self, x: usize, y: usize, w: usize, h: usize) -> Complex64 {
        let u = (x as f64 + 0.5) / w as f64;
        let v = (y as f64 + 0.5) / h as f64;
        Complex64::new(
            self.center[0] - self.half_width + 2.0 * self.half_width * u,
            self.center[1] + self.half_width - 2.0 * self.half_width * v,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JuliaParams {
    pub points: usize,
    pub seed: u64,
    /// Points produced from one seed before restarting; fixes the work split.
    pub chunk: usize,
}

impl Default for JuliaParams {
    fn default() -> Self {
        JuliaParams { points: 1_000_000, seed: 1, chunk: 4096 }
    }
}

const CLUSTER: f64 = 1e-3;
const PARABOLIC_TOL: f64 = 1e-6;

/// Finite fixed points that lie on the Julia set: repelling ones and those
/// with multiplier 1. Multiple roots are merged by averaging.
pub fn julia_seeds(r: &RationalMap) -> Vec<(Complex64, Complex64)> {
    let mut clusters: Vec<Vec<Complex64>> = Vec::new();
    for (z, _) in r.fixed_points() {
        match clusters.iter_mut().find(|c| (c[0] - z).norm() < CLUSTER) {
            Some(c) => c.push(z),
            None => clusters.push(vec![z]),
        }
    }
    clusters
        .into_iter()
        .filter_map(|c| {
            let z = c.iter().sum::<Complex64>() / c.len() as f64;
            match r.eval_and_derivative(z) {
                crate::circle_maps::RationalValue::Finite { derivative, .. } => Some((z, derivative)),
                _ => None,
            }
        })
        .filter(|(_, m)| m.norm() > 1.0 + PARABOLIC_TOL || (m - 1.0).norm() < PARABOLIC_TOL)
        .collect()
}

/// Random backward orbits. Chunk `i` starts at seed `i mod s` with its own
/// ChaCha stream, so the cloud depends only on the parameters.
pub fn julia_backward(dynamics: &Dynamics, params: JuliaParams) -> Result<Vec<Complex64>> {
    let chunk = params.chunk.max(1);
    let n_chunks = params.points.div_ceil(chunk);
    let seeds: Vec<Complex64> = match dynamics {
        Dynamics::Planar(r) => julia_seeds(r).into_iter().map(|(z, _)| z).collect(),
        Dynamics::Circle(f) => f
            .fixed_points_on_circle()
            .into_iter()
            .filter(|p| p.multiplier.left().min(p.multiplier.right()) >= 1.0 - PARABOLIC_TOL)
            .map(|p| p.point.to_complex())
            .collect(),
    };
    if seeds.is_empty() {
        return Err(Error::Numeric("no repelling or parabolic fixed point to seed from".into()));
    }
    let chunks: Vec<Result<Vec<Complex64>>> = (0..n_chunks)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(i as u64);
            let len = chunk.min(params.points - i * chunk);
            let mut z = seeds[i % seeds.len()];
            let mut out = Vec::with_capacity(len);
            for _ in 0..len {
                z = match dynamics {
                    Dynamics::Planar(r) => {
                        let pre = r.preimages(z);
                        if pre.is_empty() {
                            return Err(Error::Numeric(format!("{z} has no finite preimage")));
                        }
                        pre[rng.gen_range(0..pre.len())]
                    }
                    Dynamics::Circle(f) => {
                        let pre = f.preimages(CirclePoint::from_complex(z))?;
                        pre[rng.gen_range(0..pre.len())].to_complex()
                    }
                };
                out.push(z);
            }
            Ok(out)
        })
        .collect();
    let mut cloud = Vec::with_capacity(params.points);
    for c in chunks {
        cloud.extend(c?);
    }
    Ok(cloud)
}

/// Hit counts on a log scale, dark on white.
pub fn rasterize(points: &[Complex64], width: usize, height: usize, view: View) -> ImageBuffer {
    let mut hits = vec![0u32; width * height];
    for &z in points {
        if let Some((x, y)) = view.to_pixel(z, width, height) {
            hits[y * width + x] += 1;
        }
    }
    let max = hits.iter().copied().max().unwrap_or(0).max(1) as f64;
    let mut img = ImageBuffer::new(width, height, [255, 255, 255]);
    for (i, &h) in hits.iter().enumerate() {
        if h > 0 {
            let s = (1.0 + h as f64).ln() / (1.0 + max).ln();
            let g = (200.0 * (1.0 - s)) as u8;
            img.set(i % width, i / width, [g, g, g / 2 + 60]);
        }
    }
    img
}

const ESCAPE: f64 = 1e6;
const SETTLE: f64 = 1e-6;

/// Forward orbits per pixel: escaping points are shaded by escape time,
/// others by the attracting or parabolic fixed point they approach.
pub fn boundary_orbit(r: &RationalMap, width: usize, height: usize, view: View, iterations: usize) -> ImageBuffer {
    let targets: Vec<Complex64> = {
        let mut t: Vec<Complex64> = Vec::new();
        for (z, m) in r.fixed_points() {
            if m.norm() <= 1.0 + PARABOLIC_TOL && t.iter().all(|w| (w - z).norm() > CLUSTER) {
                t.push(z);
            }
        }
        t
    };
    let palette = [[40u8, 90, 200], [200, 80, 40], [60, 160, 80], [160, 60, 170], [200, 170, 40]];
    let rows: Vec<Vec<[u8; 3]>> = (0..height)
        .into_par_iter()
        .map(|y| {
            (0..width)
                .map(|x| {
                    let mut z = view.to_plane(x, y, width, height);
                    for i in 0..iterations {
                        match r.eval(z) {
                            Some(w) if w.norm() < ESCAPE => z = w,
                            _ => {
                                let s = (255.0 * (1.0 - (i as f64 / iterations as f64).sqrt())) as u8;
                                return [s, s, s];
                            }
                        }
                        if let Some(k) = targets.iter().position(|t| (t - z).norm() < SETTLE) {
                            return palette[k % palette.len()];
                        }
                    }
                    let nearest = targets
                        .iter()
                        .enumerate()
                        .min_by(|a, b| (a.1 - z).norm().total_cmp(&(b.1 - z).norm()))
                        .map(|(k, _)| k);
                    match nearest {
                        Some(k) => palette[k % palette.len()].map(|c| c / 2),
                        None => [0, 0, 0],
                    }
                })
                .collect()
        })
        .collect();
    let mut img = ImageBuffer::new(width, height, [0, 0, 0]);
    for (y, row) in rows.into_iter().enumerate() {
        for (x, rgb) in row.into_iter().enumerate() {
            img.set(x, y, rgb);
        }
    }
    img
}

/// A polyline plot of `(x, y)` samples with both axes scaled to fit.
pub fn plot_curve(samples: &[(f64, f64)], width: usize, height: usize) -> ImageBuffer {
    let mut img = ImageBuffer::new(width, height, [255, 255, 255]);
    let finite: Vec<(f64, f64)> = samples.iter().copied().filter(|(x, y)| x.is_finite() && y.is_finite()).collect();
    if finite.len() < 2 || width < 3 || height < 3 {
        return img;
    }
    let (x0, x1) = finite.iter().fold((f64::MAX, f64::MIN), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let (y0, y1) = finite.iter().fold((f64::MAX, f64::MIN), |(a, b), p| (a.min(p.1), b.max(p.1)));
    let sx = (width - 1) as f64 / (x1 - x0).max(1e-300);
    let sy = (height - 1) as f64 / (y1 - y0).max(1e-300);
    let to_px = |(x, y): (f64, f64)| ((x - x0) * sx, (height - 1) as f64 - (y - y0) * sy);
    for w in finite.windows(2) {
        let (a, b) = (to_px(w[0]), to_px(w[1]));
        let steps = ((b.0 - a.0).abs().max((b.1 - a.1).abs()).ceil() as usize).max(1);
        for s in 0..=steps {
            let t = s as f64 / steps as f64;
            let (x, y) = (a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1));
            img.set(x.round() as usize, y.round() as usize, [20, 20, 160]);
        }
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unknown_fields() {
        assert!(MapSpec::from_json(r#"{"type": "power", "degree": 2, "colour": 1}"#).is_err());
        assert!(MapSpec::from_json(r#"{"type": "spiral"}"#).is_err());
    }

    #[test]
    fn round_trip() {
        let spec = MapSpec::Blaschke { zeros: vec![[0.0, 0.0], [-0.5, 0.0]], rotation: [1.0, 0.0] };
        assert_eq!(MapSpec::from_json(&spec.to_json()).unwrap(), spec);
    }

    #[test]
    fn ppm_header() {
        let img = ImageBuffer::new(2, 1, [1, 2, 3]);
        assert_eq!(img.to_ppm(), b"P6\n2 1\n255\n\x01\x02\x03\x01\x02\x03".to_vec());
    }

    #[test]
    fn doubling_cloud_on_circle() {
        let d = MapSpec::Power { degree: 2, reversing: false }.dynamics().unwrap();
        let cloud = julia_backward(&d, JuliaParams { points: 5000, seed: 7, chunk: 1000 }).unwrap();
        assert_eq!(cloud.len(), 5000);
        assert!(cloud.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
    }
}
