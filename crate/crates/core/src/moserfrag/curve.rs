//! Extending a curve near the core circle of the annulus `S^1 x [-1, 1]`
//! to a diffeomorphism: `psi(L) = target` for `L = S^1 x {0}`.
//!
//! Every step is a column map (x is preserved), built as the time-1 flow
//! of a vertical field:
//!
//! 1. shift everything near `L` up by `3 d`, where `d <= eps` is the
//!    distance of the target from `L`, so the curve lies in `2 d <= y <= 4 d`;
//! 2. around each marker `x_i` (spacing at most `eps`) push the curve
//!    down onto `L` inside a rectangle of width `eps / 3`;
//! 3. between consecutive markers push the remaining arc down onto `L`.
//!
//! The composite takes the target to `L`; its inverse is `psi`.
//!
//! Only targets that are graphs over `L` are handled; a target that folds
//! back is rejected with [`Error::NotGraphNearMarkers`].

use crate::error::{Error, Result};
use crate::hamflow::{smoothstep, Point};

use super::grid::{GridDiffeo, Rect, Region};

/// Default bound on `max |psi(x_v, 0) - v|` over target vertices.
pub const DEFAULT_TOL_CURVE: f64 = 1e-4;

/// Steps for each column flow.
const COLUMN_STEPS: usize = 64;

#[derive(Clone, Debug)]
pub struct CurveExtension {
    pub eps: f64,
    pub markers: Vec<f64>,
    pub diffeo: GridDiffeo,
    /// `max |psi(x_v, 0) - v|` over vertices.
    pub vertex_residual: f64,
    /// `max |psi(z) - z| / eps` over grid nodes.
    pub c_prime: f64,
    /// `psi` is exactly the identity on `|y| >= 0.95`.
    pub boundary_identity: bool,
}

/// The target as a periodic piecewise-linear graph `y = g(x)`.
pub struct CurveExtender {
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// Distance of the target from `L`; the moves scale with it.
    rise: f64,
    markers: Vec<f64>,
    width: f64,
}

fn wrap_dx(d: f64) -> f64 {
    d - d.round()
}

/// Periodic distance on the circle of length 1.
fn circ_dist(a: f64, b: f64) -> f64 {
    wrap_dx(a - b).abs()
}

fn segments_cross(a: Point, b: Point, c: Point, d: Point) -> bool {
    let orient = |p: Point, q: Point, r: Point| (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0]);
    let (d1, d2) = (orient(c, d, a), orient(c, d, b));
    let (d3, d4) = (orient(a, b, c), orient(a, b, d));
    if d1 * d2 < 0.0 && d3 * d4 < 0.0 {
        return true;
    }
    let on = |p: Point, q: Point, r: Point| {
        r[0] >= p[0].min(q[0]) && r[0] <= p[0].max(q[0]) && r[1] >= p[1].min(q[1]) && r[1] <= p[1].max(q[1])
    };
    (d1 == 0.0 && on(c, d, a)) || (d2 == 0.0 && on(c, d, b)) || (d3 == 0.0 && on(a, b, c)) || (d4 == 0.0 && on(a, b, d))
}

/// Lifts a closed polyline to the strip, returning the lift and its net
/// x-advance.
fn lift(vertices: &[Point]) -> (Vec<Point>, f64) {
    let mut out = Vec::with_capacity(vertices.len() + 1);
    let mut x = vertices[0][0];
    out.push([x, vertices[0][1]]);
    for w in vertices.windows(2) {
        x += wrap_dx(w[1][0] - w[0][0]);
        out.push([x, w[1][1]]);
    }
    let last = vertices[vertices.len() - 1];
    x += wrap_dx(vertices[0][0] - last[0]);
    (out, x - vertices[0][0])
}

fn check_embedded(lifted: &[Point]) -> Result<()> {
    // closed lift: segment k joins lifted[k] and lifted[k+1], the last one
    // wraps to the first vertex shifted by the advance (+1)
    let n = lifted.len();
    let seg = |k: usize| -> (Point, Point) {
        let a = lifted[k];
        let b = if k + 1 < n {
            lifted[k + 1]
        } else {
            [lifted[0][0] + 1.0, lifted[0][1]]
        };
        (a, b)
    };
    for i in 0..n {
        let (a, b) = seg(i);
        for j in i + 1..n {
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            let (c, d) = seg(j);
            for s in [-2.0, -1.0, 0.0, 1.0, 2.0] {
                let (cs, ds) = ([c[0] + s, c[1]], [d[0] + s, d[1]]);
                if a[0].max(b[0]) < cs[0].min(ds[0]) || a[0].min(b[0]) > cs[0].max(ds[0]) {
                    continue;
                }
                if segments_cross(a, b, cs, ds) {
                    return Err(Error::NotEmbedded(format!("segments {i} and {j} intersect")));
                }
            }
        }
    }
    Ok(())
}

impl CurveExtender {
    /// Validates the target and lays out the markers.
    pub fn new(vertices: &[Point], eps: f64) -> Result<CurveExtender> {
        if !(eps > 0.0 && eps <= 0.1) {
            return Err(Error::ConfigInvalid(format!("epsilon {eps} outside (0, 0.1]")));
        }
        let mut v: Vec<Point> = vertices.to_vec();
        if v.len() >= 2 {
            let (f, l) = (v[0], v[v.len() - 1]);
            if circ_dist(f[0], l[0]) == 0.0 && f[1] == l[1] {
                v.pop();
            }
        }
        if v.len() < 3 {
            return Err(Error::NotEmbedded("need at least three vertices".into()));
        }
        let (mut lifted, advance) = lift(&v);
        let turns = advance.round();
        if (advance - turns).abs() > 1e-9 || turns.abs() != 1.0 {
            return Err(Error::NotEmbedded(format!(
                "curve winds {turns} times around the annulus, expected once"
            )));
        }
        if turns < 0.0 {
            v.reverse();
            lifted = lift(&v).0;
        }
        let distance = v.iter().fold(0.0f64, |m, p| m.max(p[1].abs()));
        if distance > eps {
            return Err(Error::CurveTooFar { distance, epsilon: eps });
        }
        check_embedded(&lifted)?;
        let n_markers = (1.0 / eps).ceil() as usize;
        let markers: Vec<f64> = (0..n_markers).map(|i| i as f64 / n_markers as f64).collect();
        let width = 1.0 / (3.0 * n_markers as f64);
        // graph check: x strictly increasing along the lift
        let n = lifted.len();
        for k in 0..n {
            let x0 = lifted[k][0];
            let x1 = if k + 1 < n { lifted[k + 1][0] } else { lifted[0][0] + 1.0 };
            if !(x1 > x0) {
                let xm = x0.rem_euclid(1.0);
                let marker = (0..n_markers)
                    .min_by(|&a, &b| circ_dist(markers[a], xm).total_cmp(&circ_dist(markers[b], xm)))
                    .unwrap_or(0);
                return Err(Error::NotGraphNearMarkers { marker });
            }
        }
        // sort by x in [0, 1) for lookup
        let mut pts: Vec<Point> = v.iter().map(|p| [p[0].rem_euclid(1.0), p[1]]).collect();
        pts.sort_by(|a, b| a[0].total_cmp(&b[0]));
        Ok(CurveExtender {
            xs: pts.iter().map(|p| p[0]).collect(),
            ys: pts.iter().map(|p| p[1]).collect(),
            rise: distance,
            markers,
            width,
        })
    }

    /// Height of the target above `x`.
    pub fn graph(&self, x: f64) -> f64 {
        let x = x.rem_euclid(1.0);
        let n = self.xs.len();
        let k = self.xs.partition_point(|&v| v <= x);
        let (i0, i1) = if k == 0 || k == n { (n - 1, 0) } else { (k - 1, k) };
        let (x0, x1) = (self.xs[i0], self.xs[i1]);
        let span = (x1 - x0).rem_euclid(1.0);
        if span == 0.0 {
            return self.ys[i0];
        }
        let s = (x - x0).rem_euclid(1.0) / span;
        self.ys[i0] + s * (self.ys[i1] - self.ys[i0])
    }

    /// `sum_i k_i(x)`: 1 within `width / 6` of a marker, 0 beyond `width / 2`.
    fn marker_window(&self, x: f64) -> f64 {
        let w = self.width;
        self.markers
            .iter()
            .map(|&m| smoothstep((0.5 * w - circ_dist(x, m)) / (w / 3.0)))
            .sum()
    }

    /// 1 away from markers, 0 within `width / 12` of one; vanishes only
    /// where the marker window is 1.
    fn arc_window(&self, x: f64) -> f64 {
        let w = self.width;
        1.0 - self
            .markers
            .iter()
            .map(|&m| smoothstep((w / 6.0 - circ_dist(x, m)) / (w / 12.0)))
            .sum::<f64>()
    }

    /// 1 on `|y| <= 1/2`, 0 on `|y| >= 0.9`.
    fn lift_band(y: f64) -> f64 {
        smoothstep((0.9 - y.abs()) / 0.4)
    }

    /// 1 on `[0, 4 d]`, 0 outside `(-d, 5 d)`.
    fn move_band(&self, y: f64) -> f64 {
        let e = self.rise;
        smoothstep((y + e) / e) * smoothstep((5.0 * e - y) / e)
    }

    fn column_flow<B: Fn(f64) -> f64>(y: f64, speed: f64, band: B, dir: f64) -> f64 {
        if speed == 0.0 {
            return y;
        }
        let h = dir / COLUMN_STEPS as f64;
        let v = |y: f64| speed * band(y);
        let mut y = y;
        for _ in 0..COLUMN_STEPS {
            let k1 = v(y);
            let k2 = v(y + 0.5 * h * k1);
            let k3 = v(y + 0.5 * h * k2);
            let k4 = v(y + h * k3);
            y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        y
    }

    fn speeds(&self, x: f64) -> (f64, f64, f64) {
        if self.rise == 0.0 {
            return (0.0, 0.0, 0.0);
        }
        let lifted = self.graph(x) + 3.0 * self.rise;
        let k = self.marker_window(x);
        (3.0 * self.rise, -k * lifted, -self.arc_window(x) * lifted * (1.0 - k))
    }

    /// The composite that takes the target onto `L`.
    pub fn straighten(&self, p: Point) -> Point {
        let (s1, s2, s3) = self.speeds(p[0]);
        let mut y = CurveExtender::column_flow(p[1], s1, CurveExtender::lift_band, 1.0);
        y = CurveExtender::column_flow(y, s2, |y| self.move_band(y), 1.0);
        y = CurveExtender::column_flow(y, s3, |y| self.move_band(y), 1.0);
        [p[0], y]
    }

    /// `psi`, the inverse of [`CurveExtender::straighten`].
    pub fn psi(&self, p: Point) -> Point {
        let (s1, s2, s3) = self.speeds(p[0]);
        let mut y = CurveExtender::column_flow(p[1], s3, |y| self.move_band(y), -1.0);
        y = CurveExtender::column_flow(y, s2, |y| self.move_band(y), -1.0);
        y = CurveExtender::column_flow(y, s1, CurveExtender::lift_band, -1.0);
        [p[0], y]
    }

    pub fn vertex_residual(&self) -> f64 {
        self.xs
            .iter()
            .zip(&self.ys)
            .map(|(&x, &y)| (self.psi([x, 0.0])[1] - y).abs())
            .fold(0.0, f64::max)
    }
}

/// Builds `psi` on an `n x n` grid of the chart `[0, 1] x [-1, 1]`.
pub fn curve_extend(vertices: &[Point], eps: f64, n: usize) -> Result<CurveExtension> {
    let ext = CurveExtender::new(vertices, eps)?;
    let rect = Rect::new(0.0, 1.0, -1.0, 1.0);
    let diffeo = GridDiffeo::from_maps(
        rect,
        n,
        n,
        Region::Rect {
            rect: Rect::new(0.0, 1.0, -0.95, 0.95),
        },
        |p| Ok(ext.psi(p)),
        |p| Ok(ext.straighten(p)),
    )?;
    let c_prime = diffeo.c0_norm() / eps;
    let boundary_identity = diffeo.identity_outside(&Region::Rect {
        rect: Rect::new(0.0, 1.0, -0.9499, 0.9499),
    });
    Ok(CurveExtension {
        eps,
        vertex_residual: ext.vertex_residual(),
        markers: ext.markers,
        diffeo,
        c_prime,
        boundary_identity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    fn graph_curve<G: Fn(f64) -> f64>(g: G, n: usize) -> Vec<Point> {
        (0..n).map(|i| {
            let x = i as f64 / n as f64;
            [x, g(x)]
        }).collect()
    }

    #[test]
    fn core_circle_gives_identity() {
        let c = graph_curve(|_| 0.0, 50);
        let r = curve_extend(&c, 0.05, 33).unwrap();
        assert!(r.diffeo.c0_norm() < DEFAULT_TOL_CURVE);
        assert!(r.vertex_residual < 1e-12);
    }

    #[test]
    fn sine_target_is_matched() {
        let d = 0.05;
        let c = graph_curve(|x| d * (TAU * x).sin(), 400);
        let r = curve_extend(&c, d, 65).unwrap();
        assert!(r.vertex_residual < DEFAULT_TOL_CURVE, "{}", r.vertex_residual);
        assert!(r.boundary_identity);
        assert!(r.c_prime > 0.5 && r.c_prime < 10.0, "{}", r.c_prime);
        assert!(r.diffeo.min_jacobian() > 0.0);
        // the image of L passes through the target at arbitrary x too
        let ext = CurveExtender::new(&c, d).unwrap();
        for x in [0.013, 0.5, 0.777] {
            assert!((ext.psi([x, 0.0])[1] - ext.graph(x)).abs() < 1e-12);
            let back = ext.straighten(ext.psi([x, 0.3]));
            assert!((back[1] - 0.3).abs() < 1e-9);
        }
    }

    #[test]
    fn double_winding_is_rejected() {
        let c: Vec<Point> = (0..80)
            .map(|i| {
                let x = 2.0 * i as f64 / 80.0;
                [x.rem_euclid(1.0), 0.01 * (TAU * x / 2.0).sin()]
            })
            .collect();
        assert!(matches!(curve_extend(&c, 0.05, 17), Err(Error::NotEmbedded(_))));
    }

    #[test]
    fn self_crossing_and_far_curves_are_rejected() {
        let far = graph_curve(|x| 0.2 * (TAU * x).sin(), 40);
        assert!(matches!(curve_extend(&far, 0.05, 17), Err(Error::CurveTooFar { .. })));
        // a small loop-de-loop that crosses itself
        let mut c = graph_curve(|_| 0.0, 20);
        c.splice(10..10, [[0.52, 0.01], [0.49, 0.02], [0.47, -0.01], [0.53, -0.01]]);
        assert!(matches!(curve_extend(&c, 0.05, 17), Err(Error::NotEmbedded(_))));
    }

    #[test]
    fn folded_curve_is_not_a_graph() {
        let mut c = graph_curve(|_| 0.0, 20);
        c.splice(10..10, [[0.47, 0.01], [0.46, 0.02], [0.48, 0.03]]);
        assert!(matches!(curve_extend(&c, 0.05, 17), Err(Error::NotGraphNearMarkers { .. })));
    }

    #[test]
    fn reversed_orientation_is_accepted() {
        let mut c = graph_curve(|x| 0.01 * (2.0 * TAU * x).cos(), 100);
        c.reverse();
        let r = curve_extend(&c, 0.02, 33).unwrap();
        assert!(r.vertex_residual < DEFAULT_TOL_CURVE);
    }
}
