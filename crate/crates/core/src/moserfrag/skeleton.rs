//! Making two area forms agree along a segment by a normal rescaling.
//!
//! In edge coordinates `(s, r)` the map moves points along the normal by
//! the flow of `-chi(r) log(beta(s)) r d/dr`, where `beta = Omega / omega`
//! on the edge. Near the edge `r -> r / beta(s)`, so the normal stretch is
//! `1 / beta` and the pulled-back form agrees with `omega` on the edge.

use crate::error::{Error, Result};
use crate::hamflow::{smoothstep, Point};

use super::grid::{edge_coords, GridDiffeo, GridForm, Region};

/// Ratio tolerance `|log beta|` accepted near the edge ends.
pub const DEFAULT_TOL_BETA: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct SkeletonAdjust {
    pub diffeo: GridDiffeo,
    /// `max |Omega(h(z)) det Dh(z) - omega(z)|` over edge samples.
    pub edge_residual: f64,
    pub max_log_beta: f64,
}

/// `1` on `|r| <= delta / 2`, `0` on `|r| >= delta`.
fn chi(r: f64, delta: f64) -> f64 {
    smoothstep((delta - r.abs()) / (0.5 * delta))
}

struct EdgeFlow<'a> {
    big: &'a GridForm,
    small: &'a GridForm,
    start: Point,
    end: Point,
    delta: f64,
    steps: usize,
}

impl EdgeFlow<'_> {
    fn point(&self, s: f64, r: f64) -> Point {
        let d = [self.end[0] - self.start[0], self.end[1] - self.start[1]];
        let l = d[0].hypot(d[1]);
        let (u, n) = ([d[0] / l, d[1] / l], [-d[1] / l, d[0] / l]);
        [
            self.start[0] + s * u[0] + r * n[0],
            self.start[1] + s * u[1] + r * n[1],
        ]
    }

    fn log_beta(&self, s: f64, len: f64) -> f64 {
        if !(0.0..=len).contains(&s) {
            return 0.0;
        }
        let e = self.point(s, 0.0);
        (self.big.at(e) / self.small.at(e)).ln()
    }

    /// Time-`sign` map of `r' = -chi(r) L r`.
    fn map(&self, p: Point, sign: f64) -> Point {
        let (s, r, len) = edge_coords(self.start, self.end, p);
        if r.abs() >= self.delta || !(0.0..=len).contains(&s) {
            return p;
        }
        let l = self.log_beta(s, len);
        if l == 0.0 {
            return p;
        }
        let vel = |r: f64| -sign * chi(r, self.delta) * l * r;
        let h = 1.0 / self.steps as f64;
        let mut y = r;
        for _ in 0..self.steps {
            let k1 = vel(y);
            let k2 = vel(y + 0.5 * h * k1);
            let k3 = vel(y + 0.5 * h * k2);
            let k4 = vel(y + h * k3);
            y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        self.point(s, y)
    }
}

/// Adjusts `omega_big` near the segment so that the adjusted map `h`
/// satisfies `h^* omega_big = omega_small` on the segment. The map is the
/// identity outside the `delta`-band around the segment.
pub fn skeleton_adjust(
    omega_big: &GridForm,
    omega_small: &GridForm,
    start: Point,
    end: Point,
    delta: f64,
) -> Result<SkeletonAdjust> {
    omega_big.density.same_shape(&omega_small.density)?;
    let len = (end[0] - start[0]).hypot(end[1] - start[1]);
    if !(delta > 0.0) || !(len > 2.0 * delta) {
        return Err(Error::ConfigInvalid(format!(
            "edge of length {len} too short for band width {delta}"
        )));
    }
    let flow = EdgeFlow {
        big: omega_big,
        small: omega_small,
        start,
        end,
        delta,
        steps: 64,
    };
    let n_edge = 512;
    let mut max_log_beta = 0.0f64;
    let mut end_log_beta = 0.0f64;
    for k in 0..=n_edge {
        let s = len * k as f64 / n_edge as f64;
        let l = flow.log_beta(s, len).abs();
        max_log_beta = max_log_beta.max(l);
        if s <= delta || s >= len - delta {
            end_log_beta = end_log_beta.max(l);
        }
    }
    if end_log_beta > DEFAULT_TOL_BETA {
        return Err(Error::BetaNotOne {
            max_log_beta: end_log_beta,
        });
    }
    let rect = omega_big.rect();
    let (nx, ny) = (omega_big.density.nx, omega_big.density.ny);
    let diffeo = GridDiffeo::from_maps(
        rect,
        nx,
        ny,
        Region::EdgeBand {
            start,
            end,
            half_width: delta,
        },
        |p| Ok(flow.map(p, 1.0)),
        |p| Ok(flow.map(p, -1.0)),
    )?;
    // residual along the edge with a central-difference Jacobian of the exact map
    let hh = 1e-5;
    let mut edge_residual = 0.0f64;
    for k in 1..n_edge {
        let s = len * k as f64 / n_edge as f64;
        let z = flow.point(s, 0.0);
        let fx0 = flow.map([z[0] - hh, z[1]], 1.0);
        let fx1 = flow.map([z[0] + hh, z[1]], 1.0);
        let fy0 = flow.map([z[0], z[1] - hh], 1.0);
        let fy1 = flow.map([z[0], z[1] + hh], 1.0);
        let det = ((fx1[0] - fx0[0]) * (fy1[1] - fy0[1]) - (fx1[1] - fx0[1]) * (fy1[0] - fy0[0])) / (4.0 * hh * hh);
        let hz = flow.map(z, 1.0);
        edge_residual = edge_residual.max((omega_big.at(hz) * det - omega_small.at(z)).abs());
    }
    Ok(SkeletonAdjust {
        diffeo,
        edge_residual,
        max_log_beta,
    })
}
