//! Loops in the once-punctured torus and their words in `F(a, b)`.
//!
//! The puncture sits at the lattice points `Z^2`. The cut circles are
//! `B = {x = 0}` and `A = {y = 0}`; their complement is the open square
//! cell `(0, 1)^2` with basepoint `x* = (1/2, 1/2)`. A loop is read by
//! lifting it to the plane and listing the lattice lines it crosses.
//!
//! Connectors from `x*` to a point `v` are straight segments inside the cell
//! containing `v`. They never cross a cut, so a closed difference path reads
//! the same word as the path itself.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fgword::{Letter, Word};
use crate::hamflow::{FlowSettings, Hamiltonian, Point};

pub const BASEPOINT: Point = [0.5, 0.5];
pub const DEFAULT_DELTA_PUNCT: f64 = 1e-3;
pub const DEFAULT_H_LOOP: f64 = 1e-3;

/// Orientation of the cut crossings.
///
/// The default reads a `+x` crossing of `B` as `a` and a `+y` crossing of
/// `A` as `b^-1`. With this choice a small clockwise loop around the
/// puncture reads a conjugate of `[a, b]`, which is the loop traced by
/// pairs of points turned by a positive bump, so `u~ = 2 mu([a,b]) Cal`
/// holds with a plus sign. Other orientations differ by an automorphism
/// of `F(a, b)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CutSystem {
    /// Crossing `x = k` in the `+x` direction emits `a` (otherwise `a^-1`).
    pub a_on_plus_x: bool,
    /// Crossing `y = k` in the `+y` direction emits `b` (otherwise `b^-1`).
    pub b_on_plus_y: bool,
}

impl Default for CutSystem {
    fn default() -> Self {
        CutSystem {
            a_on_plus_x: true,
            b_on_plus_y: false,
        }
    }
}

impl CutSystem {
    pub fn new(a_on_plus_x: bool, b_on_plus_y: bool) -> CutSystem {
        CutSystem {
            a_on_plus_x,
            b_on_plus_y,
        }
    }

    fn x_letter(&self, forward: bool) -> Letter {
        if forward == self.a_on_plus_x {
            Letter::A
        } else {
            Letter::A_INV
        }
    }

    fn y_letter(&self, forward: bool) -> Letter {
        if forward == self.b_on_plus_y {
            Letter::B
        } else {
            Letter::B_INV
        }
    }

    /// Pushes the crossings of the lifted segment `d0 -> d1` onto `word`.
    pub fn read_segment(&self, d0: Point, d1: Point, word: &mut Word) {
        let (cx0, cx1) = (d0[0].floor(), d1[0].floor());
        let (cy0, cy1) = (d0[1].floor(), d1[1].floor());
        if cx0 == cx1 && cy0 == cy1 {
            return;
        }
        let mut hits: Vec<(f64, Letter)> = Vec::new();
        let mut collect = |c0: f64, c1: f64, a: f64, b: f64, letter: &dyn Fn(bool) -> Letter| {
            if c0 == c1 {
                return;
            }
            let forward = c1 > c0;
            let (lo, hi) = if forward { (c0 + 1.0, c1) } else { (c1 + 1.0, c0) };
            let mut k = lo;
            while k <= hi {
                hits.push(((k - a) / (b - a), letter(forward)));
                k += 1.0;
            }
        };
        collect(cx0, cx1, d0[0], d1[0], &|f| self.x_letter(f));
        collect(cy0, cy1, d0[1], d1[1], &|f| self.y_letter(f));
        hits.sort_by(|p, q| p.0.total_cmp(&q.0));
        for (_, l) in hits {
            word.push(l);
        }
    }
}

/// Distance from `p` to the nearest lattice point.
pub fn puncture_distance(p: Point) -> f64 {
    let d = [p[0] - p[0].round(), p[1] - p[1].round()];
    d[0].hypot(d[1])
}

/// Distance from the segment `a -> b` to the lattice `Z^2`.
pub fn segment_puncture_distance(a: Point, b: Point) -> f64 {
    let lo = [a[0].min(b[0]).floor(), a[1].min(b[1]).floor()];
    let hi = [a[0].max(b[0]).ceil(), a[1].max(b[1]).ceil()];
    let d = [b[0] - a[0], b[1] - a[1]];
    let dd = d[0] * d[0] + d[1] * d[1];
    let mut best = f64::INFINITY;
    let mut i = lo[0];
    while i <= hi[0] {
        let mut j = lo[1];
        while j <= hi[1] {
            let w = [i - a[0], j - a[1]];
            let s = if dd > 0.0 {
                ((w[0] * d[0] + w[1] * d[1]) / dd).clamp(0.0, 1.0)
            } else {
                0.0
            };
            best = best.min((w[0] - s * d[0]).hypot(w[1] - s * d[1]));
            j += 1.0;
        }
        i += 1.0;
    }
    best
}

/// A closed polyline in the punctured torus, stored as a continuous lift.
/// The last point equals the first modulo `Z^2`.
#[derive(Clone, Debug, PartialEq)]
pub struct PuncturedLoop {
    points: Vec<Point>,
    pub min_puncture_dist: f64,
}

impl PuncturedLoop {
    /// From a continuous lift whose endpoints agree modulo `Z^2`.
    pub fn from_lift(points: Vec<Point>, delta_punct: f64) -> Result<PuncturedLoop> {
        if points.len() < 2 {
            return Err(Error::NotEmbedded("a loop needs at least two points".into()));
        }
        let (f, l) = (points[0], points[points.len() - 1]);
        let gap = [l[0] - f[0], l[1] - f[1]];
        if (gap[0] - gap[0].round()).abs() > 1e-9 || (gap[1] - gap[1].round()).abs() > 1e-9 {
            return Err(Error::NotEmbedded("polyline is not closed in the torus".into()));
        }
        let mut min_d = f64::INFINITY;
        for w in points.windows(2) {
            min_d = min_d.min(segment_puncture_distance(w[0], w[1]));
        }
        if min_d < delta_punct {
            return Err(Error::NearPuncture {
                distance: min_d,
                threshold: delta_punct,
            });
        }
        Ok(PuncturedLoop {
            points,
            min_puncture_dist: min_d,
        })
    }

    /// From points in `[0, 1)^2`, unwrapped by nearest image; consecutive
    /// points must be less than 1/2 apart in the flat metric.
    pub fn from_wrapped(points: &[Point], delta_punct: f64) -> Result<PuncturedLoop> {
        PuncturedLoop::from_lift(unwrap_polyline(points), delta_punct)
    }

    pub fn lift(&self) -> &[Point] {
        &self.points
    }

    pub fn wrapped(&self) -> Vec<Point> {
        self.points
            .iter()
            .map(|p| crate::hamflow::Domain::Torus.wrap(*p))
            .collect()
    }

    /// The same loop traversed backwards.
    pub fn reversed(&self) -> PuncturedLoop {
        let mut pts = self.points.clone();
        pts.reverse();
        PuncturedLoop {
            points: pts,
            min_puncture_dist: self.min_puncture_dist,
        }
    }

    /// Concatenation of two loops through their common basepoint (mod `Z^2`).
    pub fn concat(&self, other: &PuncturedLoop) -> Result<PuncturedLoop> {
        let end = self.points[self.points.len() - 1];
        let start = other.points[0];
        let shift = [end[0] - start[0], end[1] - start[1]];
        if (shift[0] - shift[0].round()).abs() > 1e-9 || (shift[1] - shift[1].round()).abs() > 1e-9 {
            return Err(Error::NotEmbedded("loops do not share a basepoint".into()));
        }
        let mut pts = self.points.clone();
        pts.extend(
            other.points[1..]
                .iter()
                .map(|p| [p[0] + shift[0].round(), p[1] + shift[1].round()]),
        );
        Ok(PuncturedLoop {
            points: pts,
            min_puncture_dist: self.min_puncture_dist.min(other.min_puncture_dist),
        })
    }

    /// Plain-text dump: one vertex per line, with the letters each segment emits.
    pub fn debug_dump(&self, cuts: &CutSystem) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# loop with {} vertices, min puncture distance {:e}", self.points.len(), self.min_puncture_dist);
        for (i, p) in self.points.iter().enumerate() {
            let _ = write!(out, "{i} {:.12} {:.12}", p[0], p[1]);
            if i + 1 < self.points.len() {
                let mut w = Word::identity();
                cuts.read_segment(*p, self.points[i + 1], &mut w);
                if !w.is_empty() {
                    let _ = write!(out, " -> {w}");
                }
            }
            out.push('\n');
        }
        let _ = writeln!(out, "# word {}", word_of_loop(self, cuts));
        out
    }
}

/// Lifts a polyline on the torus by nearest-image steps.
pub fn unwrap_polyline(points: &[Point]) -> Vec<Point> {
    let mut out: Vec<Point> = Vec::with_capacity(points.len());
    for &p in points {
        match out.last() {
            None => out.push(p),
            Some(&q) => {
                let d = crate::hamflow::torus_delta([p[0] - q[0], p[1] - q[1]]);
                out.push([q[0] + d[0], q[1] + d[1]]);
            }
        }
    }
    out
}

/// Reduced word of a loop.
pub fn word_of_loop(l: &PuncturedLoop, cuts: &CutSystem) -> Word {
    let mut w = Word::identity();
    for seg in l.points.windows(2) {
        cuts.read_segment(seg[0], seg[1], &mut w);
    }
    w
}

/// Straight connector from `x*` (in the cell of `v`) to `v`, sampled at
/// spacing `h`.
pub fn connector(v: Point, h: f64, delta_punct: f64) -> Result<Vec<Point>> {
    let dist = puncture_distance(v);
    if dist < delta_punct {
        return Err(Error::NearPuncture {
            distance: dist,
            threshold: delta_punct,
        });
    }
    let base = [v[0].floor() + BASEPOINT[0], v[1].floor() + BASEPOINT[1]];
    let len = (v[0] - base[0]).hypot(v[1] - base[1]);
    let n = ((len / h).ceil() as usize).max(1);
    Ok((0..=n)
        .map(|k| {
            let s = k as f64 / n as f64;
            [base[0] + s * (v[0] - base[0]), base[1] + s * (v[1] - base[1])]
        })
        .collect())
}

/// Closes an open lifted path with connectors through `x*`.
pub fn close_loop(path: &[Point], settings: &LoopSettings) -> Result<PuncturedLoop> {
    if path.is_empty() {
        return Err(Error::NotEmbedded("empty path".into()));
    }
    let mut pts = connector(path[0], settings.h_loop, settings.delta_punct)?;
    pts.pop();
    pts.extend_from_slice(path);
    let mut back = connector(path[path.len() - 1], settings.h_loop, settings.delta_punct)?;
    back.reverse();
    pts.extend_from_slice(&back[1..]);
    PuncturedLoop::from_lift(pts, settings.delta_punct)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoopSettings {
    /// Largest accepted spatial step of a difference path.
    pub h_loop: f64,
    /// Minimum allowed distance to the puncture.
    pub delta_punct: f64,
    /// Step budget per path.
    pub max_steps: usize,
    pub cuts: CutSystem,
}

impl Default for LoopSettings {
    fn default() -> Self {
        LoopSettings {
            h_loop: DEFAULT_H_LOOP,
            delta_punct: DEFAULT_DELTA_PUNCT,
            max_steps: 1 << 24,
            cuts: CutSystem::default(),
        }
    }
}

/// One leg of an isotopy: flow `hamiltonian` from `t0` to `t1`.
#[derive(Clone, Copy, Debug)]
pub struct Leg<'a> {
    pub hamiltonian: &'a Hamiltonian,
    pub t0: f64,
    pub t1: f64,
    /// Base step count; refined adaptively.
    pub steps: usize,
}

impl<'a> Leg<'a> {
    pub fn new(hamiltonian: &'a Hamiltonian, t0: f64, t1: f64, flow: &FlowSettings) -> Leg<'a> {
        Leg {
            hamiltonian,
            t0,
            t1,
            steps: flow.steps_for(hamiltonian, t1 - t0),
        }
    }
}

/// Result of tracing a pair of points along an isotopy.
#[derive(Clone, Debug, PartialEq)]
pub struct PairTrace {
    /// Lifted end positions of the two points.
    pub x: Point,
    pub y: Point,
    pub word: Word,
    /// The word after each leg.
    pub leg_words: Vec<Word>,
    pub steps: usize,
    pub min_puncture_dist: f64,
}

/// Follows `x` and `y` along the legs and streams the cut crossings of
/// `x_t - y_t` into a reduced word. Each accepted step moves the difference
/// by at most `h_loop` and by at most half its distance to the puncture, so
/// the chord and the true path are homotopic rel endpoints. `visit` sees
/// every accepted difference point.
pub fn trace_pair<V: FnMut(f64, Point)>(
    legs: &[Leg<'_>],
    x: Point,
    y: Point,
    flow: &FlowSettings,
    settings: &LoopSettings,
    mut visit: V,
) -> Result<PairTrace> {
    let diff0 = [x[0] - y[0], x[1] - y[1]];
    let start = [
        crate::hamflow::wrap_unit(diff0[0]),
        crate::hamflow::wrap_unit(diff0[1]),
    ];
    // Keep x lifted and adjust y so that x - y starts in [0, 1)^2.
    let mut zx = x;
    let mut zy = [x[0] - start[0], x[1] - start[1]];
    let mut d = start;
    let mut dist = puncture_distance(d);
    let mut min_dist = dist;
    if dist < settings.delta_punct {
        return Err(Error::NearPuncture {
            distance: dist,
            threshold: settings.delta_punct,
        });
    }
    let mut word = Word::identity();
    let mut steps = 0usize;
    visit(legs.first().map_or(0.0, |l| l.t0), d);
    let mut leg_words = Vec::with_capacity(legs.len());
    for leg in legs {
        let f = leg.hamiltonian;
        if f.is_zero() || leg.t1 == leg.t0 {
            leg_words.push(word.clone());
            continue;
        }
        let span = leg.t1 - leg.t0;
        let h_base = span / leg.steps.max(1) as f64;
        let h_min = h_base.abs() * 1e-9;
        let fixed_x = f.support().excludes(f.domain, zx);
        let fixed_y = f.support().excludes(f.domain, zy);
        if fixed_x && fixed_y {
            leg_words.push(word.clone());
            continue;
        }
        let mut t = leg.t0;
        let mut h = h_base;
        while (leg.t1 - t) * span.signum() > 1e-15 * span.abs() {
            if (t + h - leg.t1) * span.signum() > 0.0 {
                h = leg.t1 - t;
            }
            let nx = if fixed_x { zx } else { flow.advance(f, zx, t, h)? };
            let ny = if fixed_y { zy } else { flow.advance(f, zy, t, h)? };
            let nd = [nx[0] - ny[0], nx[1] - ny[1]];
            let nd_dist = puncture_distance(nd);
            let step = (nd[0] - d[0]).hypot(nd[1] - d[1]);
            let limit = settings.h_loop.min(0.5 * dist.min(nd_dist));
            if step > limit && nd_dist >= settings.delta_punct {
                h *= 0.5;
                if h.abs() < h_min {
                    return Err(Error::StepUnderflow {
                        max_steps: settings.max_steps,
                    });
                }
                continue;
            }
            if nd_dist < settings.delta_punct || step > limit {
                return Err(Error::NearPuncture {
                    distance: nd_dist,
                    threshold: settings.delta_punct,
                });
            }
            settings.cuts.read_segment(d, nd, &mut word);
            t += h;
            zx = nx;
            zy = ny;
            d = nd;
            dist = nd_dist;
            min_dist = min_dist.min(dist);
            visit(t, d);
            steps += 1;
            if steps > settings.max_steps {
                return Err(Error::StepUnderflow {
                    max_steps: settings.max_steps,
                });
            }
            if h.abs() < h_base.abs() {
                h = (2.0 * h).clamp(-h_base.abs(), h_base.abs());
            }
        }
        leg_words.push(word.clone());
    }
    Ok(PairTrace {
        x: zx,
        y: zy,
        word,
        leg_words,
        steps,
        min_puncture_dist: min_dist,
    })
}

/// Sampled difference path `f_t(x) - f_t(y)`, `t in [0, T]`, as a lift
/// starting in `[0, 1)^2`.
#[derive(Clone, Debug, PartialEq)]
pub struct DifferencePath {
    pub times: Vec<f64>,
    pub points: Vec<Point>,
}

impl DifferencePath {
    pub fn wrapped(&self) -> Vec<Point> {
        self.points
            .iter()
            .map(|p| crate::hamflow::Domain::Torus.wrap(*p))
            .collect()
    }
}

/// Difference path over `[0, horizon]` with `n_samples` base steps, refined
/// adaptively.
pub fn difference_path(
    f: &Hamiltonian,
    x: Point,
    y: Point,
    horizon: f64,
    n_samples: usize,
    flow: &FlowSettings,
    settings: &LoopSettings,
) -> Result<DifferencePath> {
    if f.domain != crate::hamflow::Domain::Torus {
        return Err(Error::UnsupportedDomain("difference paths live on the torus".into()));
    }
    let leg = Leg {
        hamiltonian: f,
        t0: 0.0,
        t1: horizon,
        steps: n_samples.max(1),
    };
    let mut times = Vec::new();
    let mut points = Vec::new();
    trace_pair(&[leg], x, y, flow, settings, |t, d| {
        times.push(t);
        points.push(d);
    })?;
    if points.len() == 1 {
        times.push(horizon);
        points.push(points[0]);
    }
    Ok(DifferencePath { times, points })
}
