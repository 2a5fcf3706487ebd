//! Markov partitions, refinements and the arc tree of admissible words.

use serde::Serialize;

use crate::circle_maps::{CoveringMap, Orientation};
use crate::geometry::{Arc, CirclePoint};
use crate::{Error, Result};

/// Default cap on the number of arcs a refinement may produce.
pub const DEFAULT_BUDGET: u64 = 1 << 22;
/// Distinct refinement points closer than this are considered unresolvable.
pub const DEDUP_TOL: f64 = 1e-13;
/// Tolerance for deciding that a partition point maps onto the point set.
const INVARIANCE_TOL: f64 = 1e-10;
/// Positions this close to the end of an image arc snap to the endpoint.
const SNAP: f64 = 1e-15;
/// Containment slack used when tracking arcs forward.
const ARC_TOL: f64 = 1e-12;
/// Default letter budget for forward descent.
pub const DEFAULT_DESCENT_BUDGET: usize = 10_000_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PartitionViolation {
    #[error("need at least two points, got {0}")]
    TooFewPoints(usize),
    #[error("points {0} and {1} coincide")]
    Duplicate(usize, usize),
    #[error("invariance: image {image} of point {index} is not a partition point")]
    Invariance { index: usize, image: f64 },
    #[error("injectivity: arc {arc} turns {turning} times under the map")]
    Injectivity { arc: usize, turning: f64 },
    #[error("covering: image of arc {arc} is not a union of partition arcs")]
    Covering { arc: usize },
}

/// A word over the arc alphabet together with its admissibility.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Word {
    pub letters: Vec<usize>,
    pub admissible: bool,
}

impl Word {
    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }
}

#[derive(Debug, Clone)]
struct ArcData {
    arc: Arc,
    // Start of the arc in lift coordinates and the lift value there.
    t: f64,
    lift0: f64,
    // Partition point f(a_k); positions in the image are measured from it.
    image_ref: usize,
    turning: f64,
}

#[derive(Debug, Clone)]
pub struct MarkovPartition {
    map: CoveringMap,
    points: Vec<CirclePoint>,
    data: Vec<ArcData>,
    transition: Vec<Vec<u8>>,
    budget: u64,
}

/// The refined point set `F_n` with the level of every point.
#[derive(Debug, Clone)]
pub struct RefinementLevelSet {
    pub n: usize,
    /// Points in cyclic order starting at `a_0`.
    pub points: Vec<CirclePoint>,
    pub levels: Vec<u32>,
    origin: CirclePoint,
}

impl RefinementLevelSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Points of `F_m` for `m ≤ n`, in cyclic order.
    pub fn points_at_level(&self, m: usize) -> Vec<CirclePoint> {
        self.points
            .iter()
            .zip(&self.levels)
            .filter(|(_, &l)| (l as usize) <= m)
            .map(|(&p, _)| p)
            .collect()
    }

    /// Complementary arcs of `F_m`, in cyclic order.
    pub fn arcs_at_level(&self, m: usize) -> Vec<Arc> {
        arcs_between(&self.points_at_level(m))
    }

    pub fn arcs(&self) -> Vec<Arc> {
        arcs_between(&self.points)
    }

    pub fn index_of(&self, p: CirclePoint, tol: f64) -> Option<usize> {
        let o = self.origin.ccw_to(p);
        let i = self.points.partition_point(|q| self.origin.ccw_to(*q) < o);
        let candidates = [i.wrapping_sub(1), i, i + 1, 0, self.points.len() - 1];
        candidates
            .into_iter()
            .filter(|&j| j < self.points.len())
            .find(|&j| self.points[j].approx_eq(p, tol))
    }

    pub fn level_of(&self, p: CirclePoint) -> Option<u32> {
        self.index_of(p, DEDUP_TOL).map(|i| self.levels[i])
    }
}

fn arcs_between(points: &[CirclePoint]) -> Vec<Arc> {
    let n = points.len();
    (0..n).map(|i| Arc::new(points[i], points[(i + 1) % n])).collect()
}

/// Outcome of the two primitivity tests.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrimitivityReport {
    pub primitive: bool,
    /// Smallest `n` with `Bⁿ` positive.
    pub witness_exponent: Option<usize>,
    /// Number of complementary arcs of `F_{r+1}` inside each `A_k`.
    pub subdivision_counts: Vec<u64>,
    /// An arc containing fewer than two such arcs.
    pub offending_arc: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ExpansivityVerdict {
    Expansive,
    Inconclusive,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExpansivityProfile {
    pub rows: Vec<(usize, f64)>,
    pub verdict: ExpansivityVerdict,
}

#[derive(Debug, Clone, Serialize)]
pub struct PartitionExport {
    pub points: Vec<f64>,
    pub transition: Vec<Vec<u8>>,
    pub profile: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub enum ElevatorCase {
    /// `I` contains a complementary arc of `F_{l+r+1}`.
    Contains {
        /// The complementary arcs of `F_{l+r+1}` tiling `A_w`, in order.
        cover: Vec<Arc>,
        /// Index into `cover` of an arc inside `I`.
        contained_index: usize,
        split: (Word, Word),
        m: usize,
    },
    /// `I` is split by a unique point of `F_{l+1}`.
    Splits {
        c: CirclePoint,
        minus: Arc,
        plus: Arc,
        w_minus: Word,
        w_plus: Word,
        split_minus: (Word, Word),
        split_plus: (Word, Word),
        m: usize,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct ElevatorReport {
    pub word: Word,
    pub case: ElevatorCase,
    /// `f^m(I)`.
    pub elevated: Arc,
}

impl MarkovPartition {
    /// Checks injectivity, invariance and the covering property and builds
    /// the transition matrix. Points are taken in cyclic order starting at
    /// the first listed one.
    pub fn new(map: CoveringMap, points: &[CirclePoint]) -> Result<Self> {
        if points.len() < 2 {
            return Err(PartitionViolation::TooFewPoints(points.len()).into());
        }
        let origin = points[0];
        let mut pts = points.to_vec();
        pts.sort_by(|a, b| origin.ccw_to(*a).total_cmp(&origin.ccw_to(*b)));
        for i in 0..pts.len() {
            let j = (i + 1) % pts.len();
            if pts[i].dist(pts[j]) <= DEDUP_TOL {
                return Err(PartitionViolation::Duplicate(i, j).into());
            }
        }
        let n = pts.len();
        let find = |p: CirclePoint| pts.iter().position(|q| q.approx_eq(p, INVARIANCE_TOL));
        let mut images = Vec::with_capacity(n);
        for (index, &p) in pts.iter().enumerate() {
            let image = map.eval(p);
            match find(image) {
                Some(j) => images.push(j),
                None => return Err(PartitionViolation::Invariance { index, image: image.turns() }.into()),
            }
        }
        let s = map.orientation().sign();
        let mut data = Vec::with_capacity(n);
        let mut transition = vec![vec![0u8; n]; n];
        for k in 0..n {
            let arc = Arc::new(pts[k], pts[(k + 1) % n]);
            let t = pts[k].turns();
            let lift0 = map.lift(t);
            let turning = s * (map.lift(t + arc.length()) - lift0);
            if !(turning > 0.0 && turning <= 1.0 + INVARIANCE_TOL) {
                return Err(PartitionViolation::Injectivity { arc: k, turning }.into());
            }
            // Strict monotonicity on samples.
            let mut prev = lift0;
            for i in 1..=64 {
                let v = map.lift(t + arc.length() * i as f64 / 64.0);
                if s * (v - prev) <= 0.0 {
                    return Err(PartitionViolation::Injectivity { arc: k, turning }.into());
                }
                prev = v;
            }
            let turning = turning.min(1.0);
            // Walk the covered arcs from f(a_k) in the direction of travel.
            let mut covered = 0.0;
            let mut j = images[k];
            let mut count = 0;
            while covered < turning - INVARIANCE_TOL {
                let idx = match map.orientation() {
                    Orientation::Preserving => j,
                    Orientation::Reversing => (j + n - 1) % n,
                };
                if count >= n {
                    return Err(PartitionViolation::Covering { arc: k }.into());
                }
                transition[k][idx] = 1;
                covered += pts[idx].ccw_to(pts[(idx + 1) % n]);
                j = match map.orientation() {
                    Orientation::Preserving => (j + 1) % n,
                    Orientation::Reversing => (j + n - 1) % n,
                };
                count += 1;
            }
            let end_image = images[(k + 1) % n];
            if (covered - turning).abs() > 1e-8 || (count < n && j != end_image) {
                return Err(PartitionViolation::Covering { arc: k }.into());
            }
            data.push(ArcData { arc, t, lift0, image_ref: images[k], turning });
        }
        Ok(MarkovPartition { map, points: pts, data, transition, budget: DEFAULT_BUDGET })
    }

    pub fn with_budget(mut self, budget: u64) -> Self {
        self.budget = budget;
        self
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    pub fn map(&self) -> &CoveringMap {
        &self.map
    }

    pub fn points(&self) -> &[CirclePoint] {
        &self.points
    }

    /// `r`, so that the points are `a_0..a_r`.
    pub fn r(&self) -> usize {
        self.points.len() - 1
    }

    pub fn arc(&self, k: usize) -> Arc {
        self.data[k].arc
    }

    pub fn arcs(&self) -> Vec<Arc> {
        self.data.iter().map(|d| d.arc).collect()
    }

    pub fn transition(&self) -> &[Vec<u8>] {
        &self.transition
    }

    /// Index `j` with `f(a_k) = a_j`.
    pub fn image_index(&self, k: usize) -> usize {
        self.data[k].image_ref
    }

    /// Length in turns of `f(A_k)`.
    pub fn turning(&self, k: usize) -> f64 {
        self.data[k].turning
    }

    pub fn is_admissible(&self, w: &[usize]) -> bool {
        w.iter().all(|&k| k < self.points.len()) && w.windows(2).all(|p| self.transition[p[0]][p[1]] == 1)
    }

    pub fn word(&self, letters: Vec<usize>) -> Word {
        let admissible = self.is_admissible(&letters);
        Word { letters, admissible }
    }

    /// Index of the arc `[a_k, a_{k+1})` containing `x`.
    pub fn arc_index(&self, x: CirclePoint) -> usize {
        let o = self.points[0].ccw_to(x);
        let i = self.points.partition_point(|p| self.points[0].ccw_to(*p) <= o);
        i.saturating_sub(1)
    }

    /// Offset of `y` from `f(a_k)` in the direction `f` travels along `A_k`.
    pub(crate) fn position(&self, k: usize, y: CirclePoint) -> f64 {
        let r = self.points[self.data[k].image_ref];
        match self.map.orientation() {
            Orientation::Preserving => r.ccw_to(y),
            Orientation::Reversing => y.ccw_to(r),
        }
    }

    /// Lift coordinate in `A_k` of the point at position `pos` of `f(A_k)`.
    pub(crate) fn branch(&self, k: usize, pos: f64) -> Result<f64> {
        let d = &self.data[k];
        if pos <= SNAP {
            return Ok(d.t);
        }
        if pos >= d.turning - SNAP {
            return Ok(d.t + d.arc.length());
        }
        let s = self.map.orientation().sign();
        self.map.solve_lift(d.t, d.t + d.arc.length(), d.lift0 + s * pos)
    }

    /// `f_k⁻¹(y)` for `y ∈ f(A_k)`.
    pub fn pull_back_point(&self, k: usize, y: CirclePoint) -> Result<CirclePoint> {
        let mut pos = self.position(k, y);
        if pos > self.data[k].turning && pos >= 1.0 - 1e-9 {
            pos = 0.0;
        }
        Ok(CirclePoint::new(self.branch(k, pos.min(self.data[k].turning))?))
    }

    /// `f_k⁻¹(J)` for an arc `J ⊂ f(A_k)`, with levels of the endpoints
    /// carried along.
    fn pull_back_arc(&self, k: usize, j: &Arc, levels: [u32; 2]) -> Result<(Arc, [u32; 2])> {
        let d = &self.data[k];
        let (from, lv) = match self.map.orientation() {
            Orientation::Preserving => (j.start(), levels),
            Orientation::Reversing => (j.end(), [levels[1], levels[0]]),
        };
        let mut lo = self.position(k, from);
        if lo > d.turning - j.length() + 1e-9 && lo >= 1.0 - 1e-9 {
            lo = (lo - 1.0).max(0.0);
        }
        let hi = (lo + j.length()).min(d.turning);
        let x_lo = self.branch(k, lo)?;
        let x_hi = self.branch(k, hi)?;
        let l_lo = if lo <= SNAP { 1 } else { lv[0] + 1 };
        let l_hi = if hi >= d.turning - SNAP { 1 } else { lv[1] + 1 };
        let len = x_hi - x_lo;
        if !(len > 0.0) {
            return Err(Error::Numeric(format!("pulled-back arc collapsed in A_{k}")));
        }
        Ok((Arc::from_start_len(CirclePoint::new(x_lo), len.min(1.0))?, [l_lo, l_hi]))
    }

    /// `A_w`, or `None` for an inadmissible word. The empty word gives the
    /// whole circle cut at `a_0`.
    pub fn arc_of_word(&self, w: &[usize]) -> Option<Result<Arc>> {
        self.arc_of_word_with_levels(w).map(|r| r.map(|(a, _)| a))
    }

    /// `A_w` together with the levels of its endpoints.
    pub fn arc_of_word_with_levels(&self, w: &[usize]) -> Option<Result<(Arc, [u32; 2])>> {
        if !self.is_admissible(w) {
            return None;
        }
        let Some((&last, rest)) = w.split_last() else {
            return Some(Ok((Arc::full(self.points[0]), [0, 0])));
        };
        let mut cur = (self.data[last].arc, [1, 1]);
        for &k in rest.iter().rev() {
            cur = match self.pull_back_arc(k, &cur.0, cur.1) {
                Ok(c) => c,
                Err(e) => return Some(Err(e)),
            };
        }
        Some(Ok(cur))
    }

    /// Children `A_{wj}` of an admissible `A_w`, in cyclic order.
    pub fn children(&self, w: &[usize]) -> Result<Vec<(usize, Arc)>> {
        if !self.is_admissible(w) {
            return Err(Error::Inadmissible(w.to_vec()));
        }
        let mut out = Vec::new();
        let candidates: Vec<usize> = match w.last() {
            None => (0..self.points.len()).collect(),
            Some(&k) => self.image_order(k),
        };
        let mut ext = w.to_vec();
        ext.push(0);
        for j in candidates {
            *ext.last_mut().unwrap() = j;
            let arc = self.arc_of_word(&ext).expect("admissible extension")?;
            out.push((j, arc));
        }
        if w.is_empty() {
            return Ok(out);
        }
        let a_w = self.arc_of_word(w).expect("admissible")?;
        // The child starting at the start of A_w may have offset near 1.
        out.sort_by(|a, b| {
            let oa = wrap_small(a_w.offset_of(a.1.start()));
            let ob = wrap_small(a_w.offset_of(b.1.start()));
            oa.total_cmp(&ob)
        });
        Ok(out)
    }

    /// Arcs covered by `f(A_k)` in the order they are traversed.
    pub fn image_order(&self, k: usize) -> Vec<usize> {
        let n = self.points.len();
        let mut out = Vec::new();
        let mut j = self.data[k].image_ref;
        for _ in 0..n {
            let idx = match self.map.orientation() {
                Orientation::Preserving => j,
                Orientation::Reversing => (j + n - 1) % n,
            };
            if self.transition[k][idx] == 0 || out.contains(&idx) {
                break;
            }
            out.push(idx);
            j = match self.map.orientation() {
                Orientation::Preserving => (j + 1) % n,
                Orientation::Reversing => (j + n - 1) % n,
            };
        }
        out
    }

    /// Number of points in `F_n`.
    pub fn refinement_size(&self, n: usize) -> Result<u64> {
        let d = self.map.degree() as u64;
        let mut size = self.points.len() as u64;
        for _ in 1..n {
            size = size.checked_mul(d).ok_or(Error::Budget { requested: u64::MAX, budget: self.budget })?;
        }
        Ok(size)
    }

    /// `F_n = F_1 ∪ f⁻¹(F_{n-1})` with levels.
    pub fn refine(&self, n: usize) -> Result<RefinementLevelSet> {
        if n == 0 {
            return Err(Error::Degenerate("refinement level starts at 1".into()));
        }
        let requested = self.refinement_size(n)?;
        if requested > self.budget {
            return Err(Error::Budget { requested, budget: self.budget });
        }
        let np = self.points.len();
        let mut points = self.points.clone();
        let mut levels = vec![1u32; np];
        let mut anchors: Vec<usize> = (0..np).collect();
        for level in 2..=n {
            let m = points.len();
            let mut next = Vec::with_capacity(m * self.map.degree());
            let mut next_levels = Vec::with_capacity(m * self.map.degree());
            let mut next_anchors = Vec::with_capacity(np);
            for k in 0..np {
                next_anchors.push(next.len());
                next.push(self.points[k]);
                next_levels.push(1);
                let d = &self.data[k];
                let start = anchors[d.image_ref];
                let forward = self.map.orientation() == Orientation::Preserving;
                for step in 1..m {
                    let i = if forward { (start + step) % m } else { (start + m - step) % m };
                    let pos = self.position(k, points[i]);
                    if pos >= d.turning - SNAP || pos <= SNAP {
                        break;
                    }
                    let x = self.branch(k, pos)?;
                    next.push(CirclePoint::new(x));
                    next_levels.push(levels[i] + 1);
                }
            }
            for i in 0..next.len() {
                let j = (i + 1) % next.len();
                if next[i].dist(next[j]) <= DEDUP_TOL {
                    return Err(Error::Numeric(format!(
                        "refinement level {level} has points closer than {DEDUP_TOL} near {}",
                        next[i]
                    )));
                }
            }
            points = next;
            levels = next_levels;
            anchors = next_anchors;
        }
        Ok(RefinementLevelSet { n, points, levels, origin: self.points[0] })
    }

    /// Splits an admissible nonempty word at `|v| + 1 = ` the minimal level of
    /// the endpoints of `A_w`.
    pub fn canonical_split(&self, w: &[usize]) -> Result<(Word, Word)> {
        if w.is_empty() {
            return Err(Error::Degenerate("canonical splitting needs a nonempty word".into()));
        }
        let (_, levels) = self.arc_of_word_with_levels(w).ok_or_else(|| Error::Inadmissible(w.to_vec()))??;
        let m = levels[0].min(levels[1]) as usize - 1;
        Ok((self.word(w[..m].to_vec()), self.word(w[m..].to_vec())))
    }

    /// Runs the matrix-power test and the subdivision count and checks that
    /// they agree.
    pub fn is_primitive(&self) -> Result<PrimitivityReport> {
        let witness = primitive_by_powers(&self.transition);
        let r = self.r();
        let refined = self.refine(r + 1)?;
        let arcs = refined.arcs();
        let counts: Vec<u64> = self
            .data
            .iter()
            .map(|d| arcs.iter().filter(|a| d.arc.contains_arc(a, 1e-12)).count() as u64)
            .collect();
        let offending = counts.iter().position(|&c| c < 2);
        let symbolic = primitive_by_subdivision(&self.transition, r);
        if symbolic.is_ok() != offending.is_none() {
            return Err(Error::Inconsistent("geometric and symbolic subdivision counts disagree".into()));
        }
        if witness.is_some() != offending.is_none() {
            return Err(Error::Inconsistent("matrix-power and subdivision primitivity tests disagree".into()));
        }
        Ok(PrimitivityReport {
            primitive: witness.is_some(),
            witness_exponent: witness,
            subdivision_counts: counts,
            offending_arc: offending,
        })
    }

    /// The admissible word `w` with `I ⊂ A_w` and no child of `A_w`
    /// containing `I`, found by following `I` forward.
    pub fn word_associated_to_arc(&self, i: &Arc) -> Result<Word> {
        self.word_associated_to_arc_with_budget(i, DEFAULT_DESCENT_BUDGET)
    }

    pub fn word_associated_to_arc_with_budget(&self, i: &Arc, budget: usize) -> Result<Word> {
        let mut letters = Vec::new();
        let mut j = *i;
        loop {
            let Some(k) = (0..self.points.len()).find(|&k| self.data[k].arc.contains_arc(&j, ARC_TOL)) else {
                break;
            };
            if letters.len() >= budget {
                return Err(Error::ExpansivitySuspect(budget));
            }
            letters.push(k);
            j = self.forward_arc(k, &j);
        }
        Ok(self.word(letters))
    }

    /// `f(J)` for `J ⊂ A_k`.
    fn forward_arc(&self, k: usize, j: &Arc) -> Arc {
        let d = &self.data[k];
        let mut o = d.arc.offset_of(j.start());
        if o >= 1.0 - ARC_TOL {
            o -= 1.0;
        }
        let x0 = d.t + o.max(0.0);
        let x1 = x0 + j.length();
        let (f0, f1) = (self.map.lift(x0), self.map.lift(x1));
        let (start, len) = match self.map.orientation() {
            Orientation::Preserving => (f0, f1 - f0),
            Orientation::Reversing => (f1, f0 - f1),
        };
        if len >= 1.0 - ARC_TOL {
            Arc::full(CirclePoint::new(start))
        } else {
            Arc::from_start_len(CirclePoint::new(start), len.max(f64::MIN_POSITIVE)).expect("positive length")
        }
    }

    /// `f^m(I)` along the letters of `w`, which must satisfy `I ⊂ A_w`.
    pub fn elevate(&self, i: &Arc, w: &[usize], m: usize) -> Arc {
        w.iter().take(m).fold(*i, |j, &k| self.forward_arc(k, &j))
    }

    /// The combinatorial dichotomy of the quasiconformal elevator.
    pub fn elevator_split(&self, i: &Arc) -> Result<ElevatorReport> {
        let w = self.word_associated_to_arc(i)?;
        let l = w.len();
        let r = self.r();
        let a_w = self.arc_of_word(&w.letters).expect("associated word is admissible")?;
        // Complementary arcs of F_{l+r+1} inside A_w.
        let mut cover = Vec::new();
        self.descendants(&w.letters, r + 1, &mut cover)?;
        cover.sort_by(|a, b| {
            wrap_small(a_w.offset_of(a.start())).total_cmp(&wrap_small(a_w.offset_of(b.start())))
        });
        let inside: Vec<usize> = (0..cover.len()).filter(|&c| i.contains_arc(&cover[c], ARC_TOL)).collect();
        if let Some(&first) = inside.iter().find(|&&c| c > 0 && c + 1 < cover.len()).or(inside.first()) {
            let (split, m) = if w.is_empty() {
                ((self.word(vec![]), self.word(vec![])), 0)
            } else {
                let s = self.canonical_split(&w.letters)?;
                let m = s.0.len();
                (s, m)
            };
            let elevated = self.elevate(i, &w.letters, m);
            return Ok(ElevatorReport {
                word: w,
                case: ElevatorCase::Contains { cover, contained_index: first, split, m },
                elevated,
            });
        }
        // Split points of A_w into children, i.e. points of F_{l+1}.
        let children = self.children(&w.letters)?;
        let mut cuts: Vec<CirclePoint> = children.iter().map(|c| c.1.start()).collect();
        cuts.extend(children.iter().map(|c| c.1.end()));
        cuts.retain(|&p| i.contains_interior(p, ARC_TOL));
        cuts.dedup_by(|a, b| a.approx_eq(*b, DEDUP_TOL));
        cuts.sort_by(|a, b| i.offset_of(*a).total_cmp(&i.offset_of(*b)));
        cuts.dedup_by(|a, b| a.approx_eq(*b, DEDUP_TOL));
        if cuts.len() != 1 {
            return Err(Error::Numeric(format!("expected one split point of F_{} in the arc, found {}", l + 1, cuts.len())));
        }
        let c = cuts[0];
        let (minus, plus) = i.split_at(c)?;
        let w_minus = self.word_associated_to_arc(&minus)?;
        let w_plus = self.word_associated_to_arc(&plus)?;
        let split_minus = self.canonical_split(&w_minus.letters)?;
        let split_plus = self.canonical_split(&w_plus.letters)?;
        let elevated = self.elevate(i, &w.letters, l);
        Ok(ElevatorReport {
            word: w,
            case: ElevatorCase::Splits { c, minus, plus, w_minus, w_plus, split_minus, split_plus, m: l },
            elevated,
        })
    }

    fn descendants(&self, w: &[usize], depth: usize, out: &mut Vec<Arc>) -> Result<()> {
        if depth == 0 {
            out.push(self.arc_of_word(w).expect("admissible")?);
            return Ok(());
        }
        let next: Vec<usize> = match w.last() {
            None => (0..self.points.len()).collect(),
            Some(&k) => self.image_order(k),
        };
        let mut ext = w.to_vec();
        ext.push(0);
        for j in next {
            *ext.last_mut().unwrap() = j;
            self.descendants(&ext, depth - 1, out)?;
        }
        Ok(())
    }

    /// Maximal chordal diameter of the level-`n` arcs for `n = 1..=n_max`.
    pub fn expansivity_profile(&self, n_max: usize) -> Result<ExpansivityProfile> {
        let refined = self.refine(n_max.max(1))?;
        let rows: Vec<(usize, f64)> = (1..=n_max)
            .map(|n| {
                let diam = refined.arcs_at_level(n).iter().map(|a| a.diam()).fold(0.0, f64::max);
                (n, diam)
            })
            .collect();
        let monotone = rows.windows(2).all(|p| p[1].1 <= p[0].1 * (1.0 + 1e-9));
        let half = rows[(n_max / 2).saturating_sub(1).min(rows.len() - 1)].1;
        let last = rows.last().map(|r| r.1).unwrap_or(2.0);
        let verdict = if n_max >= 4 && monotone && last < 0.75 * half {
            ExpansivityVerdict::Expansive
        } else {
            ExpansivityVerdict::Inconclusive
        };
        Ok(ExpansivityProfile { rows, verdict })
    }

    pub fn export(&self, profile_depth: usize) -> Result<PartitionExport> {
        let profile = if profile_depth > 0 { self.expansivity_profile(profile_depth)?.rows } else { Vec::new() };
        Ok(PartitionExport {
            points: self.points.iter().map(|p| p.turns()).collect(),
            transition: self.transition.clone(),
            profile,
        })
    }
}

fn wrap_small(o: f64) -> f64 {
    if o >= 1.0 - ARC_TOL {
        o - 1.0
    } else {
        o
    }
}

fn bool_mul(a: &[Vec<u8>], b: &[Vec<u8>]) -> Vec<Vec<u8>> {
    let n = a.len();
    (0..n)
        .map(|i| (0..n).map(|j| u8::from((0..n).any(|k| a[i][k] == 1 && b[k][j] == 1))).collect())
        .collect()
}

/// Smallest `n ≤ (r+1)²` with every entry of `Bⁿ` positive.
pub fn primitive_by_powers(b: &[Vec<u8>]) -> Option<usize> {
    let n = b.len();
    let mut p = b.to_vec();
    for e in 1..=n * n {
        if p.iter().all(|row| row.iter().all(|&x| x == 1)) {
            return Some(e);
        }
        p = bool_mul(&p, b);
    }
    None
}

/// Every row of `B^p` sums to at least 2, i.e. each `A_k` contains at least
/// two complementary arcs of `F_{p+1}`. Returns the first failing row.
pub fn primitive_by_subdivision(b: &[Vec<u8>], p: usize) -> std::result::Result<(), usize> {
    let n = b.len();
    let mut counts = vec![vec![0u64; n]; n];
    for (i, row) in counts.iter_mut().enumerate() {
        row[i] = 1;
    }
    // Counts saturate at 2; only the threshold matters and powers overflow.
    for _ in 0..p {
        counts = (0..n)
            .map(|i| (0..n).map(|j| (0..n).map(|k| counts[i][k] * b[k][j] as u64).sum::<u64>().min(2)).collect())
            .collect();
    }
    match counts.iter().position(|row| row.iter().sum::<u64>() < 2) {
        Some(k) => Err(k),
        None => Ok(()),
    }
}

/// Whether `B` is the transition matrix of some Markov partition of a
/// covering of degree at least 2: every row is a nonempty cyclic interval and
/// the image of `A_{k+1}` continues where the image of `A_k` stops.
pub fn is_covering_realizable(b: &[Vec<u8>]) -> bool {
    let n = b.len();
    let lens: Vec<usize> = b.iter().map(|row| row.iter().filter(|&&x| x == 1).count()).collect();
    let total: usize = lens.iter().sum();
    if lens.contains(&0) || total % n != 0 || total / n < 2 {
        return false;
    }
    let row_is = |k: usize, start: usize| (0..n).all(|j| (b[k][j] == 1) == ((j + n - start) % n < lens[k]));
    // Orientation preserving: row k starts at s_k, s_{k+1} = s_k + len_k.
    let preserving = (0..n).any(|s0| {
        let mut s = s0;
        (0..n).all(|k| {
            let ok = row_is(k, s);
            s = (s + lens[k]) % n;
            ok
        })
    });
    // Orientation reversing: row k ends at e_k, e_{k+1} = e_k - len_k.
    let reversing = (0..n).any(|e0| {
        let mut e = e0;
        (0..n).all(|k| {
            let start = (e + n * n + 1 - lens[k]) % n;
            let ok = row_is(k, start);
            e = (e + n * n - lens[k]) % n;
            ok
        })
    });
    preserving || reversing
}
