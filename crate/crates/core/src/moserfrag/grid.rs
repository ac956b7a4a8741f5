//! Node grids on rectangles: scalar fields, area forms, one-forms and
//! sampled diffeomorphisms, with piecewise-bicubic interpolation and a
//! small binary/CSV serialization.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamflow::Point;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Rect {
        Rect { x0, x1, y0, y1 }
    }

    pub fn unit() -> Rect {
        Rect::new(0.0, 1.0, 0.0, 1.0)
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn diameter(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn contains(&self, p: Point) -> bool {
        p[0] >= self.x0 && p[0] <= self.x1 && p[1] >= self.y0 && p[1] <= self.y1
    }
}

/// Weights of the cubic Lagrange interpolant through nodes `-1, 0, 1, 2`
/// evaluated at `t`.
pub(crate) fn lagrange4(t: f64) -> [f64; 4] {
    let (a, b, c, d) = (t + 1.0, t, t - 1.0, t - 2.0);
    [-b * c * d / 6.0, a * c * d / 2.0, -a * b * d / 2.0, a * b * c / 6.0]
}

/// Derivatives of [`lagrange4`] in `t`.
pub(crate) fn lagrange4_deriv(t: f64) -> [f64; 4] {
    let (a, b, c, d) = (t + 1.0, t, t - 1.0, t - 2.0);
    [
        -(c * d + b * d + b * c) / 6.0,
        (c * d + a * d + a * c) / 2.0,
        -(b * d + a * d + a * b) / 2.0,
        (b * c + a * c + a * b) / 6.0,
    ]
}

/// `int` of the cubic through four consecutive samples over interval `k`
/// of `n - 1`, as weights on `values[start..start + 4]` (unit spacing).
pub(crate) fn interval_weights(k: usize, n: usize) -> (usize, [f64; 4]) {
    debug_assert!(n >= 4 && k + 1 < n);
    if k == 0 {
        (0, [9.0 / 24.0, 19.0 / 24.0, -5.0 / 24.0, 1.0 / 24.0])
    } else if k == n - 2 {
        (n - 4, [1.0 / 24.0, -5.0 / 24.0, 19.0 / 24.0, 9.0 / 24.0])
    } else {
        (k - 1, [-1.0 / 24.0, 13.0 / 24.0, 13.0 / 24.0, -1.0 / 24.0])
    }
}

/// Mean of the local cubic over interval `k` (the interval integral over `h`).
pub(crate) fn interval_mean(values: &[f64], k: usize) -> f64 {
    let (s, w) = interval_weights(k, values.len());
    w[0] * values[s] + w[1] * values[s + 1] + w[2] * values[s + 2] + w[3] * values[s + 3]
}

/// Running integral from the first node, fourth order.
pub(crate) fn cumulative(values: &[f64], h: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    out.push(0.0);
    let mut acc = 0.0;
    for k in 0..values.len() - 1 {
        acc += h * interval_mean(values, k);
        out.push(acc);
    }
    out
}

/// Quadrature weights matching [`cumulative`]: `sum w_i v_i = int v`.
pub(crate) fn quadrature_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![0.0; n];
    for k in 0..n - 1 {
        let (s, iw) = interval_weights(k, n);
        for j in 0..4 {
            w[s + j] += h * iw[j];
        }
    }
    w
}

/// Scalar field on an `nx x ny` node grid, row-major (`y` outer).
#[derive(Clone, Debug, PartialEq)]
pub struct Grid2 {
    pub rect: Rect,
    pub nx: usize,
    pub ny: usize,
    pub data: Vec<f64>,
}

impl Grid2 {
    pub fn zeros(rect: Rect, nx: usize, ny: usize) -> Grid2 {
        Grid2 {
            rect,
            nx,
            ny,
            data: vec![0.0; nx * ny],
        }
    }

    pub fn from_fn<F: Fn(Point) -> f64>(rect: Rect, nx: usize, ny: usize, f: F) -> Grid2 {
        let mut g = Grid2::zeros(rect, nx, ny);
        for j in 0..ny {
            for i in 0..nx {
                g.data[j * nx + i] = f(g.node(i, j));
            }
        }
        g
    }

    pub fn hx(&self) -> f64 {
        self.rect.width() / (self.nx - 1) as f64
    }

    pub fn hy(&self) -> f64 {
        self.rect.height() / (self.ny - 1) as f64
    }

    pub fn node(&self, i: usize, j: usize) -> Point {
        [
            self.rect.x0 + i as f64 * self.hx(),
            self.rect.y0 + j as f64 * self.hy(),
        ]
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.nx + i]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[j * self.nx + i] = v;
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.data[j * self.nx..(j + 1) * self.nx]
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        (0..self.ny).map(|j| self.at(i, j)).collect()
    }

    pub fn same_shape(&self, other: &Grid2) -> Result<()> {
        if self.nx != other.nx || self.ny != other.ny || self.rect != other.rect {
            return Err(Error::GridMismatch(format!(
                "{}x{} on {:?} vs {}x{} on {:?}",
                self.nx, self.ny, self.rect, other.nx, other.ny, other.rect
            )));
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    fn locate(x: f64, x0: f64, h: f64, n: usize) -> (usize, f64) {
        let u = (x - x0) / h;
        let k = (u.floor() as isize).clamp(1, n as isize - 3) as usize;
        (k - 1, u - k as f64)
    }

    /// Piecewise-bicubic value; points outside are extrapolated from the
    /// nearest stencil.
    pub fn interp(&self, p: Point) -> f64 {
        let (i0, tx) = Grid2::locate(p[0], self.rect.x0, self.hx(), self.nx);
        let (j0, ty) = Grid2::locate(p[1], self.rect.y0, self.hy(), self.ny);
        let wx = lagrange4(tx);
        let wy = lagrange4(ty);
        let mut acc = 0.0;
        for (b, wyb) in wy.iter().enumerate() {
            let row = &self.data[(j0 + b) * self.nx + i0..(j0 + b) * self.nx + i0 + 4];
            acc += wyb * (wx[0] * row[0] + wx[1] * row[1] + wx[2] * row[2] + wx[3] * row[3]);
        }
        acc
    }

    /// Value and gradient of the interpolant.
    pub fn interp_grad(&self, p: Point) -> (f64, Point) {
        let (i0, tx) = Grid2::locate(p[0], self.rect.x0, self.hx(), self.nx);
        let (j0, ty) = Grid2::locate(p[1], self.rect.y0, self.hy(), self.ny);
        let (wx, dx) = (lagrange4(tx), lagrange4_deriv(tx));
        let (wy, dy) = (lagrange4(ty), lagrange4_deriv(ty));
        let (mut v, mut gx, mut gy) = (0.0, 0.0, 0.0);
        for b in 0..4 {
            let row = &self.data[(j0 + b) * self.nx + i0..(j0 + b) * self.nx + i0 + 4];
            let rv = wx[0] * row[0] + wx[1] * row[1] + wx[2] * row[2] + wx[3] * row[3];
            let rd = dx[0] * row[0] + dx[1] * row[1] + dx[2] * row[2] + dx[3] * row[3];
            v += wy[b] * rv;
            gx += wy[b] * rd;
            gy += dy[b] * rv;
        }
        (v, [gx / self.hx(), gy / self.hy()])
    }

    /// Fourth-order integral over the rectangle.
    pub fn integral(&self) -> f64 {
        let wx = quadrature_weights(self.nx, self.hx());
        let wy = quadrature_weights(self.ny, self.hy());
        let mut acc = 0.0;
        for j in 0..self.ny {
            let r: f64 = self.row(j).iter().zip(&wx).map(|(v, w)| v * w).sum();
            acc += wy[j] * r;
        }
        acc
    }
}

/// Positive area form `rho dx ^ dy` sampled on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridForm {
    pub density: Grid2,
    total: f64,
}

impl GridForm {
    pub fn new(density: Grid2) -> Result<GridForm> {
        let min = density.min();
        if !(min > 0.0) {
            return Err(Error::DegenerateInterpolant { min_density: min });
        }
        let total = density.integral();
        Ok(GridForm { density, total })
    }

    pub fn from_fn<F: Fn(Point) -> f64>(rect: Rect, nx: usize, ny: usize, f: F) -> Result<GridForm> {
        GridForm::new(Grid2::from_fn(rect, nx, ny, f))
    }

    pub fn uniform(rect: Rect, nx: usize, ny: usize) -> GridForm {
        GridForm::new(Grid2::from_fn(rect, nx, ny, |_| 1.0)).expect("positive")
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn rect(&self) -> Rect {
        self.density.rect
    }

    pub fn at(&self, p: Point) -> f64 {
        self.density.interp(p)
    }

    pub fn write_binary(&self, path: &Path) -> Result<()> {
        write_grids(path, GridKind::Form, &[&self.density])
    }

    pub fn read_binary(path: &Path) -> Result<GridForm> {
        match read_grids(path)? {
            (GridKind::Form, mut g) if g.len() == 1 => GridForm::new(g.remove(0)),
            _ => Err(Error::GridMismatch("file does not hold an area form".into())),
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_csv(path, &["density"], &[&self.density])
    }
}

/// `sigma_x dx + sigma_y dy` sampled on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct OneForm {
    pub sx: Grid2,
    pub sy: Grid2,
}

impl OneForm {
    pub fn zeros(rect: Rect, nx: usize, ny: usize) -> OneForm {
        OneForm {
            sx: Grid2::zeros(rect, nx, ny),
            sy: Grid2::zeros(rect, nx, ny),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.sx.max_abs().max(self.sy.max_abs())
    }

    /// Cell-wise discrete exterior derivative, `(nx - 1) x (ny - 1)` values:
    /// `A_y[D_x sigma_y] - A_x[D_y sigma_x]` with the fourth-order interval
    /// means `A`.
    pub fn exterior_derivative(&self) -> Vec<f64> {
        let (nx, ny) = (self.sx.nx, self.sx.ny);
        let (hx, hy) = (self.sx.hx(), self.sx.hy());
        let mut out = vec![0.0; (nx - 1) * (ny - 1)];
        // D_x sigma_y at every (interval i, node j), then A_y across j.
        let mut dxsy = vec![0.0; ny];
        let mut dysx = vec![0.0; nx];
        for i in 0..nx - 1 {
            for j in 0..ny {
                dxsy[j] = (self.sy.at(i + 1, j) - self.sy.at(i, j)) / hx;
            }
            for j in 0..ny - 1 {
                out[j * (nx - 1) + i] += interval_mean(&dxsy, j);
            }
        }
        for j in 0..ny - 1 {
            for i in 0..nx {
                dysx[i] = (self.sx.at(i, j + 1) - self.sx.at(i, j)) / hy;
            }
            for i in 0..nx - 1 {
                out[j * (nx - 1) + i] -= interval_mean(&dysx, i);
            }
        }
        out
    }
}

/// Cell means `A_x A_y eta` matching [`OneForm::exterior_derivative`].
pub fn cell_means(eta: &Grid2) -> Vec<f64> {
    let (nx, ny) = (eta.nx, eta.ny);
    let mut tmp = Grid2::zeros(eta.rect, nx - 1, ny);
    for j in 0..ny {
        for i in 0..nx - 1 {
            tmp.data[j * (nx - 1) + i] = interval_mean(eta.row(j), i);
        }
    }
    let mut out = vec![0.0; (nx - 1) * (ny - 1)];
    let mut col = vec![0.0; ny];
    for i in 0..nx - 1 {
        for (j, c) in col.iter_mut().enumerate() {
            *c = tmp.data[j * (nx - 1) + i];
        }
        for j in 0..ny - 1 {
            out[j * (nx - 1) + i] = interval_mean(&col, j);
        }
    }
    out
}

/// Named region used to state where a map may differ from the identity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Region {
    Everywhere,
    Rect { rect: Rect },
    /// `{|q| < half_width}` intersected with the unit disc.
    DiscStrip { half_width: f64 },
    /// `{+q > 0}` (upper) or `{-q > 0}` (lower) intersected with the unit disc.
    HalfDisc { upper: bool },
    /// Rectangle in edge coordinates `(s, r)`: `0 <= s <= len`, `|r| < half_width`.
    EdgeBand {
        start: Point,
        end: Point,
        half_width: f64,
    },
}

impl Region {
    pub fn contains(&self, p: Point) -> bool {
        match self {
            Region::Everywhere => true,
            Region::Rect { rect } => rect.contains(p),
            Region::DiscStrip { half_width } => p[1].abs() < *half_width && p[0].hypot(p[1]) < 1.0,
            Region::HalfDisc { upper } => {
                let q = if *upper { p[1] } else { -p[1] };
                q > 0.0 && p[0].hypot(p[1]) < 1.0
            }
            Region::EdgeBand {
                start,
                end,
                half_width,
            } => {
                let (s, r, len) = edge_coords(*start, *end, p);
                (0.0..=len).contains(&s) && r.abs() < *half_width
            }
        }
    }
}

/// Coordinates of `p` along (`s`) and across (`r`) the segment, and its length.
pub(crate) fn edge_coords(start: Point, end: Point, p: Point) -> (f64, f64, f64) {
    let d = [end[0] - start[0], end[1] - start[1]];
    let len = d[0].hypot(d[1]);
    let u = [d[0] / len, d[1] / len];
    let w = [p[0] - start[0], p[1] - start[1]];
    (w[0] * u[0] + w[1] * u[1], -w[0] * u[1] + w[1] * u[0], len)
}

/// A diffeomorphism sampled at grid nodes: images of nodes under the map
/// and under its inverse. Off the grid rectangle it is the identity.
#[derive(Clone, Debug, PartialEq)]
pub struct GridDiffeo {
    pub rect: Rect,
    pub nx: usize,
    pub ny: usize,
    /// Node displacements `f(z) - z`, channels x and y.
    pub forward: [Grid2; 2],
    /// Node displacements `f^-1(z) - z`.
    pub inverse: [Grid2; 2],
    pub support: Region,
}

impl GridDiffeo {
    pub fn identity(rect: Rect, nx: usize, ny: usize) -> GridDiffeo {
        let z = Grid2::zeros(rect, nx, ny);
        GridDiffeo {
            rect,
            nx,
            ny,
            forward: [z.clone(), z.clone()],
            inverse: [z.clone(), z],
            support: Region::Everywhere,
        }
    }

    /// Samples `map` and `inverse` at the nodes.
    pub fn from_maps<F, G>(rect: Rect, nx: usize, ny: usize, support: Region, map: F, inverse: G) -> Result<GridDiffeo>
    where
        F: Fn(Point) -> Result<Point> + Sync,
        G: Fn(Point) -> Result<Point> + Sync,
    {
        use rayon::prelude::*;
        let sample = |m: &(dyn Fn(Point) -> Result<Point> + Sync)| -> Result<[Grid2; 2]> {
            let proto = Grid2::zeros(rect, nx, ny);
            let vals: Vec<Result<Point>> = (0..nx * ny)
                .into_par_iter()
                .map(|k| {
                    let z = proto.node(k % nx, k / nx);
                    m(z).map(|w| [w[0] - z[0], w[1] - z[1]])
                })
                .collect();
            let mut gx = proto.clone();
            let mut gy = proto;
            for (k, v) in vals.into_iter().enumerate() {
                let v = v?;
                gx.data[k] = v[0];
                gy.data[k] = v[1];
            }
            Ok([gx, gy])
        };
        Ok(GridDiffeo {
            rect,
            nx,
            ny,
            forward: sample(&map)?,
            inverse: sample(&inverse)?,
            support,
        })
    }

    pub fn node(&self, i: usize, j: usize) -> Point {
        self.forward[0].node(i, j)
    }

    pub fn node_image(&self, i: usize, j: usize) -> Point {
        let z = self.node(i, j);
        [z[0] + self.forward[0].at(i, j), z[1] + self.forward[1].at(i, j)]
    }

    pub fn apply(&self, p: Point) -> Point {
        if !self.rect.contains(p) {
            return p;
        }
        [p[0] + self.forward[0].interp(p), p[1] + self.forward[1].interp(p)]
    }

    pub fn apply_inverse(&self, p: Point) -> Point {
        if !self.rect.contains(p) {
            return p;
        }
        [p[0] + self.inverse[0].interp(p), p[1] + self.inverse[1].interp(p)]
    }

    /// `max |f(z) - z|` over nodes.
    pub fn c0_norm(&self) -> f64 {
        self.forward[0]
            .data
            .iter()
            .zip(&self.forward[1].data)
            .fold(0.0f64, |m, (a, b)| m.max(a.hypot(*b)))
    }

    /// `max |f(f^-1(z)) - z|` over nodes.
    pub fn roundtrip_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for j in 0..self.ny {
            for i in 0..self.nx {
                let z = self.node(i, j);
                let w = [z[0] + self.inverse[0].at(i, j), z[1] + self.inverse[1].at(i, j)];
                let back = self.apply(w);
                worst = worst.max((back[0] - z[0]).hypot(back[1] - z[1]));
            }
        }
        worst
    }

    /// Whether every node outside `region` has exactly zero displacement.
    pub fn identity_outside(&self, region: &Region) -> bool {
        (0..self.ny).all(|j| {
            (0..self.nx).all(|i| {
                region.contains(self.node(i, j))
                    || (self.forward[0].at(i, j) == 0.0 && self.forward[1].at(i, j) == 0.0)
            })
        })
    }

    /// Smallest Jacobian determinant of the node map (central differences).
    pub fn min_jacobian(&self) -> f64 {
        let (hx, hy) = (self.forward[0].hx(), self.forward[0].hy());
        let mut worst = f64::INFINITY;
        for j in 1..self.ny - 1 {
            for i in 1..self.nx - 1 {
                let px = self.node_image(i + 1, j);
                let mx = self.node_image(i - 1, j);
                let py = self.node_image(i, j + 1);
                let my = self.node_image(i, j - 1);
                let a = (px[0] - mx[0]) / (2.0 * hx);
                let c = (px[1] - mx[1]) / (2.0 * hx);
                let b = (py[0] - my[0]) / (2.0 * hy);
                let d = (py[1] - my[1]) / (2.0 * hy);
                worst = worst.min(a * d - b * c);
            }
        }
        worst
    }

    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let chans = [&self.forward[0], &self.forward[1], &self.inverse[0], &self.inverse[1]];
        write_grids(path, GridKind::Diffeo, &chans)
    }

    pub fn read_binary(path: &Path) -> Result<GridDiffeo> {
        let (kind, mut grids) = read_grids(path)?;
        if kind != GridKind::Diffeo || grids.len() != 4 {
            return Err(Error::GridMismatch("file does not hold a diffeomorphism".into()));
        }
        let iy = grids.pop().unwrap();
        let ix = grids.pop().unwrap();
        let fy = grids.pop().unwrap();
        let fx = grids.pop().unwrap();
        Ok(GridDiffeo {
            rect: fx.rect,
            nx: fx.nx,
            ny: fx.ny,
            forward: [fx, fy],
            inverse: [ix, iy],
            support: Region::Everywhere,
        })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let chans = [&self.forward[0], &self.forward[1], &self.inverse[0], &self.inverse[1]];
        write_csv(path, &["fwd_dx", "fwd_dy", "inv_dx", "inv_dy"], &chans)
    }
}

const MAGIC: &[u8; 4] = b"SQGR";
const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridKind {
    Scalar = 1,
    Form = 2,
    OneForm = 3,
    Diffeo = 4,
}

impl GridKind {
    fn from_u32(v: u32) -> Result<GridKind> {
        Ok(match v {
            1 => GridKind::Scalar,
            2 => GridKind::Form,
            3 => GridKind::OneForm,
            4 => GridKind::Diffeo,
            _ => return Err(Error::GridMismatch(format!("unknown grid kind {v}"))),
        })
    }
}

/// Binary layout (little endian): magic `SQGR`, version u32, kind u32,
/// nx u64, ny u64, channels u64, x0 x1 y0 y1 f64, then each channel
/// row-major as f64.
pub fn write_grids(path: &Path, kind: GridKind, grids: &[&Grid2]) -> Result<()> {
    let g0 = grids.first().ok_or_else(|| Error::GridMismatch("no channels".into()))?;
    for g in grids {
        g0.same_shape(g)?;
    }
    let mut buf = Vec::with_capacity(64 + grids.len() * g0.data.len() * 8);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(kind as u32).to_le_bytes());
    buf.extend_from_slice(&(g0.nx as u64).to_le_bytes());
    buf.extend_from_slice(&(g0.ny as u64).to_le_bytes());
    buf.extend_from_slice(&(grids.len() as u64).to_le_bytes());
    for v in [g0.rect.x0, g0.rect.x1, g0.rect.y0, g0.rect.y1] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for g in grids {
        for v in &g.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

pub fn read_grids(path: &Path) -> Result<(GridKind, Vec<Grid2>)> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    let bad = || Error::GridMismatch("truncated or malformed grid file".into());
    if buf.len() < 68 || &buf[0..4] != MAGIC {
        return Err(bad());
    }
    let u32_at = |o: usize| u32::from_le_bytes(buf[o..o + 4].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(buf[o..o + 8].try_into().unwrap()) as usize;
    let f64_at = |o: usize| f64::from_le_bytes(buf[o..o + 8].try_into().unwrap());
    if u32_at(4) != VERSION {
        return Err(Error::GridMismatch(format!("unsupported version {}", u32_at(4))));
    }
    let kind = GridKind::from_u32(u32_at(8))?;
    let (nx, ny, ch) = (u64_at(12), u64_at(20), u64_at(28));
    let rect = Rect::new(f64_at(36), f64_at(44), f64_at(52), f64_at(60));
    let n = nx.checked_mul(ny).ok_or_else(bad)?;
    if buf.len() != 68 + ch * n * 8 {
        return Err(bad());
    }
    let mut grids = Vec::with_capacity(ch);
    for c in 0..ch {
        let base = 68 + c * n * 8;
        let data = (0..n).map(|k| f64_at(base + 8 * k)).collect();
        grids.push(Grid2 { rect, nx, ny, data });
    }
    Ok((kind, grids))
}

/// CSV with columns `x, y` followed by one column per channel.
pub fn write_csv(path: &Path, names: &[&str], grids: &[&Grid2]) -> Result<()> {
    let g0 = grids.first().ok_or_else(|| Error::GridMismatch("no channels".into()))?;
    let mut out = String::from("x,y");
    for n in names {
        out.push(',');
        out.push_str(n);
    }
    out.push('\n');
    for j in 0..g0.ny {
        for i in 0..g0.nx {
            let z = g0.node(i, j);
            out.push_str(&format!("{:.17e},{:.17e}", z[0], z[1]));
            for g in grids {
                out.push_str(&format!(",{:.17e}", g.at(i, j)));
            }
            out.push('\n');
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}
