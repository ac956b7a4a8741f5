//! Fragmentation of a C0-small disc map `f = theta phi_+ phi_-` with
//! `theta` supported in the strip `{|q| < 2 eps}` and `phi_+-` in the half
//! discs `{+-q > 0}`.
//!
//! The isotopy `h_t = R_{1/c(t)} f_t R_{c(t)}` is generated by
//!
//! `K(u, t) = tau' F(c u, tau) / c^2 + 2 c' B(c u) / c^3`,
//!
//! where `B = A o f^-1` and `A(w) = int_0^1 (lambda(X) - F)(phi_r w, r) dr`
//! with `lambda = (p dq - q dp) / 2` measures how far `f` is from
//! preserving the Liouville form. The dilation only moves while `tau` is 0 or
//! 1, so one table of `B` suffices.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamflow::{
    flow_with, norm, smoothstep, smoothstep_deriv, Domain, FlowSettings, Hamiltonian, Method, Point, Support,
};

use super::grid::{Grid2, GridDiffeo, Rect, Region};

/// Default bound on `max |theta phi_+ phi_- (z) - f(z)|`.
pub const DEFAULT_TOL_FRAG: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FragmentSettings {
    /// `f_t` is the identity on `[0, delta]` and `f` on `[1 - delta, 1]`.
    pub delta: f64,
    /// `c = margin / (2 eps)` on the middle interval.
    pub c_margin: f64,
    /// RK4 steps over `[delta, 1]`.
    pub time_steps: usize,
    /// Nodes per side of the `B` table.
    pub table_n: usize,
    /// RK4 steps for each `B` node.
    pub table_steps: usize,
    pub kappa_iters: usize,
    /// Lower end of the kappa search.
    pub kappa_min: f64,
    /// Samples along each boundary line of the strip.
    pub line_samples: usize,
    /// The cutoff is 1 on `|q| <= inner * eps` and 0 on `|q| >= outer * eps`.
    pub cutoff_inner: f64,
    pub cutoff_outer: f64,
    /// Nodes per side of the output grids on `[-1, 1]^2`.
    pub grid_n: usize,
}

impl Default for FragmentSettings {
    fn default() -> Self {
        FragmentSettings {
            delta: 0.1,
            c_margin: 1.25,
            time_steps: 2000,
            table_n: 161,
            table_steps: 200,
            kappa_iters: 40,
            kappa_min: 1e-4,
            line_samples: 129,
            cutoff_inner: 1.0,
            cutoff_outer: 1.95,
            grid_n: 129,
        }
    }
}

/// The exact (non-gridded) factor maps.
pub struct Fragmenter {
    f: Hamiltonian,
    f_flow: FlowSettings,
    f_steps: usize,
    eps: f64,
    settings: FragmentSettings,
    table: Option<Grid2>,
    kappa: f64,
    c_max: f64,
}

#[derive(Clone, Debug)]
pub struct DiscFragment {
    pub theta: GridDiffeo,
    pub phi_plus: GridDiffeo,
    pub phi_minus: GridDiffeo,
    pub eps: f64,
    pub kappa: f64,
    pub c_max: f64,
    /// `max |f(z) - z|` on the check grid.
    pub displacement: f64,
    /// `max |theta phi_+ phi_- (z) - f(z)|` over grid nodes.
    pub residual: f64,
    /// `max |h_1(z) - f(z)|`, a check on the generating Hamiltonian.
    pub h1_error: f64,
    pub theta_in_strip: bool,
    pub plus_in_half_disc: bool,
    pub minus_in_half_disc: bool,
    /// `phi_+ phi_- = phi_- phi_+` bitwise at every node.
    pub commute: bool,
}

impl DiscFragment {
    pub fn supports_ok(&self) -> bool {
        self.theta_in_strip && self.plus_in_half_disc && self.minus_in_half_disc
    }
}

impl Fragmenter {
    fn tau(&self, t: f64) -> (f64, f64) {
        let d = self.settings.delta;
        let u = (t - d) / (1.0 - 2.0 * d);
        (smoothstep(u), smoothstep_deriv(u) / (1.0 - 2.0 * d))
    }

    /// `c(t)` and `c'(t)`: 1 near both ends, `c_max` on `[0.9 delta, 1 - 0.9 delta]`.
    fn dilation(&self, t: f64) -> (f64, f64) {
        let d = self.settings.delta;
        let w = 0.8 * d;
        let (r, dr) = if t < 0.5 {
            let u = (t - 0.1 * d) / w;
            (smoothstep(u), smoothstep_deriv(u) / w)
        } else {
            let u = (1.0 - 0.1 * d - t) / w;
            (smoothstep(u), -smoothstep_deriv(u) / w)
        };
        (1.0 + (self.c_max - 1.0) * r, (self.c_max - 1.0) * dr)
    }

    /// `K(u, t)` and its gradient.
    fn hamiltonian(&self, u: Point, t: f64) -> (f64, Point) {
        let (tau, dtau) = self.tau(t);
        let (c, dc) = self.dilation(t);
        let cu = [c * u[0], c * u[1]];
        let mut k = 0.0;
        let mut g = [0.0, 0.0];
        if dtau != 0.0 {
            let v = self.f.value(cu, tau);
            let gr = self.f.gradient(cu, tau);
            k += dtau * v / (c * c);
            g = [dtau * gr[0] / c, dtau * gr[1] / c];
        }
        if dc != 0.0 && tau >= 1.0 {
            if let Some(table) = &self.table {
                let (b, gb) = table.interp_grad(cu);
                k += 2.0 * dc * b / (c * c * c);
                g[0] += 2.0 * dc * gb[0] / (c * c);
                g[1] += 2.0 * dc * gb[1] / (c * c);
            }
        }
        (k, g)
    }

    fn cutoff(&self, q: f64) -> (f64, f64) {
        let a = self.settings.cutoff_inner * self.eps;
        let b = self.settings.cutoff_outer * self.eps;
        let u = (b - q.abs()) / (b - a);
        (smoothstep(u), -q.signum() * smoothstep_deriv(u) / (b - a))
    }

    fn velocity(&self, u: Point, t: f64, cut: bool) -> Point {
        let (k, g) = self.hamiltonian(u, t);
        if !cut {
            return [-g[1], g[0]];
        }
        let (x, dx) = self.cutoff(u[1]);
        // sgrad(chi K) with chi depending on q only
        [-(x * g[1] + dx * k), x * g[0]]
    }

    fn t_start(&self) -> f64 {
        self.settings.delta
    }

    /// Integrates the (cut-off) field from `t0` to `t1`, calling `visit`
    /// after every step; `visit` returning false stops early.
    fn integrate<V: FnMut(Point) -> bool>(&self, z: Point, forward: bool, cut: bool, mut visit: V) -> Point {
        let t0 = self.t_start();
        let n = self.settings.time_steps;
        let h = (1.0 - t0) / n as f64;
        let (h, mut t) = if forward { (h, t0) } else { (-h, 1.0) };
        let mut z = z;
        for _ in 0..n {
            let k1 = self.velocity(z, t, cut);
            let k2 = self.velocity([z[0] + 0.5 * h * k1[0], z[1] + 0.5 * h * k1[1]], t + 0.5 * h, cut);
            let k3 = self.velocity([z[0] + 0.5 * h * k2[0], z[1] + 0.5 * h * k2[1]], t + 0.5 * h, cut);
            let k4 = self.velocity([z[0] + h * k3[0], z[1] + h * k3[1]], t + h, cut);
            z = [
                z[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
                z[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
            ];
            t += h;
            if !visit(z) {
                break;
            }
        }
        z
    }

    fn inactive(&self, z: Point, cut: bool) -> bool {
        self.table.is_none() || norm(z) >= 1.0 || (cut && z[1].abs() >= self.settings.cutoff_outer * self.eps)
    }

    /// `h_t` at `t`: `f_tau(c z) / c`, evaluated with the true flow.
    pub fn isotopy(&self, z: Point, t: f64) -> Result<Point> {
        let (tau, _) = self.tau(t);
        let (c, _) = self.dilation(t);
        let w = self.f_time(tau).map_or(Ok([c * z[0], c * z[1]]), |fl| fl([c * z[0], c * z[1]]))?;
        Ok([w[0] / c, w[1] / c])
    }

    fn f_time(&self, tau: f64) -> Option<impl Fn(Point) -> Result<Point> + '_> {
        if tau <= 0.0 || self.f.is_zero() {
            return None;
        }
        let steps = ((self.f_steps as f64 * tau).ceil() as usize).max(1);
        Some(move |z: Point| {
            if norm(z) >= 1.0 {
                Ok(z)
            } else {
                flow_with(&self.f, z, 0.0, tau, steps, &self.f_flow)
            }
        })
    }

    pub fn f(&self, z: Point) -> Result<Point> {
        self.f_time(1.0).map_or(Ok(z), |fl| fl(z))
    }

    pub fn f_inverse(&self, z: Point) -> Result<Point> {
        if self.f.is_zero() || norm(z) >= 1.0 {
            return Ok(z);
        }
        flow_with(&self.f, z, 1.0, 0.0, self.f_steps, &self.f_flow)
    }

    /// Time-1 map of the generating field without the cutoff.
    pub fn h1(&self, z: Point) -> Point {
        if self.inactive(z, false) {
            return z;
        }
        self.integrate(z, true, false, |_| true)
    }

    pub fn theta(&self, z: Point) -> Point {
        if self.inactive(z, true) {
            return z;
        }
        self.integrate(z, true, true, |_| true)
    }

    pub fn theta_inverse(&self, z: Point) -> Point {
        if self.inactive(z, true) {
            return z;
        }
        self.integrate(z, false, true, |_| true)
    }

    pub fn psi(&self, z: Point) -> Result<Point> {
        Ok(self.theta_inverse(self.f(z)?))
    }

    pub fn psi_inverse(&self, z: Point) -> Result<Point> {
        self.f_inverse(self.theta(z))
    }

    fn side(&self, z: Point, upper: bool) -> bool {
        let q = if upper { z[1] } else { -z[1] };
        q > 0.5 * self.kappa && norm(z) < 1.0
    }

    pub fn phi(&self, z: Point, upper: bool) -> Result<Point> {
        if self.side(z, upper) {
            self.psi(z)
        } else {
            Ok(z)
        }
    }

    pub fn phi_inverse(&self, z: Point, upper: bool) -> Result<Point> {
        if self.side(z, upper) {
            self.psi_inverse(z)
        } else {
            Ok(z)
        }
    }

    /// `theta phi_+ phi_-`.
    pub fn composite(&self, z: Point) -> Result<Point> {
        Ok(self.theta(self.phi(self.phi(z, false)?, true)?))
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Whether the images of the lines `q = +-kappa` stay in `|q| < bound`
    /// for all times.
    fn lines_stay(&self, kappa: f64, bound: f64) -> bool {
        let n = self.settings.line_samples;
        let pts: Vec<Point> = [-1.0, 1.0]
            .iter()
            .flat_map(|s| {
                (0..n).map(move |i| {
                    let p = -1.0 + 2.0 * (i as f64 + 0.5) / n as f64;
                    [p, s * kappa]
                })
            })
            .filter(|z| norm(*z) < 1.0)
            .collect();
        pts.par_iter().all(|z| {
            let mut ok = true;
            self.integrate(*z, true, false, |w| {
                ok = w[1].abs() < bound;
                ok
            });
            ok
        })
    }
}

/// `c(t)` target on the middle interval.
fn c_target(eps: f64, margin: f64) -> f64 {
    (margin / (2.0 * eps)).max(1.0)
}

/// Tabulates `B(v) = A(f^-1 v)` on a box around the support of `f`.
fn liouville_table(f: &Hamiltonian, center: Point, radius: f64, settings: &FragmentSettings) -> Grid2 {
    let n = settings.table_n;
    // four empty cells beyond the support so interpolation vanishes exactly outside
    let half = radius * (1.0 + 8.0 / n as f64) + 4.0 * (2.0 * radius) / (n as f64 - 9.0);
    let rect = Rect::new(center[0] - half, center[0] + half, center[1] - half, center[1] + half);
    let proto = Grid2::zeros(rect, n, n);
    let steps = settings.table_steps;
    let g = |z: Point, r: f64| -> f64 {
        let gr = f.gradient(z, r);
        0.5 * (z[0] * gr[0] + z[1] * gr[1]) - f.value(z, r)
    };
    let x = |z: Point, r: f64| -> Point {
        let gr = f.gradient(z, r);
        [-gr[1], gr[0]]
    };
    let data: Vec<f64> = (0..n * n)
        .into_par_iter()
        .map(|k| {
            let v = proto.node(k % n, k / n);
            if norm([v[0] - center[0], v[1] - center[1]]) >= radius {
                return 0.0;
            }
            // integrate (z, a) backward from r = 1; A = -a(0)
            let h = -1.0 / steps as f64;
            let (mut z, mut a, mut r) = (v, 0.0, 1.0);
            for _ in 0..steps {
                let k1 = x(z, r);
                let a1 = g(z, r);
                let z2 = [z[0] + 0.5 * h * k1[0], z[1] + 0.5 * h * k1[1]];
                let k2 = x(z2, r + 0.5 * h);
                let a2 = g(z2, r + 0.5 * h);
                let z3 = [z[0] + 0.5 * h * k2[0], z[1] + 0.5 * h * k2[1]];
                let k3 = x(z3, r + 0.5 * h);
                let a3 = g(z3, r + 0.5 * h);
                let z4 = [z[0] + h * k3[0], z[1] + h * k3[1]];
                let k4 = x(z4, r + h);
                let a4 = g(z4, r + h);
                z = [
                    z[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
                    z[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
                ];
                a += h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
                r += h;
            }
            -a
        })
        .collect();
    Grid2 { data, ..proto }
}

impl Fragmenter {
    /// Checks the preconditions and finds kappa.
    pub fn new(f: &Hamiltonian, eps: f64, settings: &FragmentSettings) -> Result<Fragmenter> {
        if f.domain != Domain::Disc {
            return Err(Error::UnsupportedDomain("fragmentation is defined on the disc".into()));
        }
        if !(eps > 0.0 && eps < 0.25) {
            return Err(Error::ConfigInvalid(format!("epsilon {eps} outside (0, 0.25)")));
        }
        let mut fr = Fragmenter::shell(f, eps, settings);
        if f.is_zero() {
            return Ok(fr);
        }
        let (center, radius) = match f.support() {
            Support::Disc { center, radius } if norm(center) + radius < 1.0 => (center, radius),
            _ => {
                return Err(Error::ConfigInvalid(
                    "the Hamiltonian must be compactly supported in the open disc".into(),
                ))
            }
        };
        fr.table = Some(liouville_table(f, center, radius, settings));
        fr.find_kappa()?;
        Ok(fr)
    }

    fn find_kappa(&mut self) -> Result<()> {
        let inner = self.settings.cutoff_inner * self.eps;
        if !self.lines_stay(0.0, 2.0 * self.eps) || !self.lines_stay(self.settings.kappa_min, inner) {
            return Err(Error::KappaNotFound);
        }
        let (mut lo, mut hi) = (self.settings.kappa_min, 2.0 * self.eps);
        for _ in 0..self.settings.kappa_iters {
            let mid = 0.5 * (lo + hi);
            if self.lines_stay(mid, inner) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        self.kappa = lo;
        Ok(())
    }
}

/// Decomposes the time-1 map of `f` as `theta phi_+ phi_-`.
pub fn disc_fragment(f: &Hamiltonian, eps: f64, settings: &FragmentSettings) -> Result<DiscFragment> {
    let rect = Rect::new(-1.0, 1.0, -1.0, 1.0);
    let n = settings.grid_n;
    let nodes: Vec<Point> = {
        let g = Grid2::zeros(rect, n, n);
        (0..n * n).map(|k| g.node(k % n, k / n)).collect()
    };
    // displacement precondition, checked before any heavy work
    let mut check = crate::hamflow::evaluation_grid(Domain::Disc, 128);
    check.extend(nodes.iter().copied().filter(|z| norm(*z) < 1.0));
    let quick = Fragmenter::shell(f, eps, settings);
    let displacement = check
        .par_iter()
        .map(|z| quick.f(*z).map(|w| (w[0] - z[0]).hypot(w[1] - z[1])))
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))?;
    if displacement >= eps {
        return Err(Error::DisplacementTooLarge {
            displacement,
            epsilon: eps,
        });
    }
    let fr = Fragmenter::new(f, eps, settings)?;
    let theta = GridDiffeo::from_maps(
        rect,
        n,
        n,
        Region::DiscStrip { half_width: 2.0 * eps },
        |z| Ok(fr.theta(z)),
        |z| Ok(fr.theta_inverse(z)),
    )?;
    let phi_plus = GridDiffeo::from_maps(
        rect,
        n,
        n,
        Region::HalfDisc { upper: true },
        |z| fr.phi(z, true),
        |z| fr.phi_inverse(z, true),
    )?;
    let phi_minus = GridDiffeo::from_maps(
        rect,
        n,
        n,
        Region::HalfDisc { upper: false },
        |z| fr.phi(z, false),
        |z| fr.phi_inverse(z, false),
    )?;
    let residual = nodes
        .par_iter()
        .map(|z| -> Result<f64> {
            let a = fr.composite(*z)?;
            let b = fr.f(*z)?;
            Ok((a[0] - b[0]).hypot(a[1] - b[1]))
        })
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))?;
    let h1_error = nodes
        .par_iter()
        .map(|z| -> Result<f64> {
            let a = fr.h1(*z);
            let b = fr.f(*z)?;
            Ok((a[0] - b[0]).hypot(a[1] - b[1]))
        })
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))?;
    let commute = nodes.par_iter().all(|z| {
        let ab = fr.phi(*z, false).and_then(|w| fr.phi(w, true));
        let ba = fr.phi(*z, true).and_then(|w| fr.phi(w, false));
        matches!((ab, ba), (Ok(x), Ok(y)) if x == y)
    });
    Ok(DiscFragment {
        theta_in_strip: theta.identity_outside(&Region::DiscStrip { half_width: 2.0 * eps }),
        plus_in_half_disc: phi_plus.identity_outside(&Region::HalfDisc { upper: true }),
        minus_in_half_disc: phi_minus.identity_outside(&Region::HalfDisc { upper: false }),
        theta,
        phi_plus,
        phi_minus,
        eps,
        kappa: fr.kappa,
        c_max: fr.c_max,
        displacement,
        residual,
        h1_error,
        commute,
    })
}

impl Fragmenter {
    /// A fragmenter that can only evaluate `f` (no table, no kappa).
    fn shell(f: &Hamiltonian, eps: f64, settings: &FragmentSettings) -> Fragmenter {
        let method = if f.is_radial() {
            Method::ExactRadial
        } else {
            Method::MidpointSymplectic
        };
        let mut f_flow = FlowSettings::default().with_method(method);
        if method == Method::ExactRadial {
            f_flow.min_steps_per_unit = 1;
        }
        Fragmenter {
            f: f.clone(),
            f_steps: f_flow.steps_for(f, 1.0),
            f_flow,
            eps,
            settings: settings.clone(),
            table: None,
            kappa: 0.0,
            c_max: c_target(eps, settings.c_margin),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> FragmentSettings {
        FragmentSettings {
            grid_n: 41,
            table_n: 129,
            time_steps: 1800,
            kappa_iters: 12,
            line_samples: 33,
            ..FragmentSettings::default()
        }
    }

    #[test]
    fn zero_hamiltonian_gives_identities() {
        let r = disc_fragment(&Hamiltonian::zero(Domain::Disc), 0.05, &quick()).unwrap();
        assert_eq!(r.theta.c0_norm(), 0.0);
        assert_eq!(r.phi_plus.c0_norm(), 0.0);
        assert_eq!(r.phi_minus.c0_norm(), 0.0);
        assert_eq!(r.residual, 0.0);
    }

    #[test]
    fn large_displacement_is_rejected() {
        let f = Hamiltonian::bump(Domain::Disc, [0.0, 0.0], 0.6, 0.5).unwrap();
        let r = disc_fragment(&f, 0.1, &quick());
        assert!(matches!(r, Err(Error::DisplacementTooLarge { .. })), "{r:?}");
    }

    #[test]
    fn liouville_table_matches_radial_closed_form() {
        // for a bump centred at the origin lambda(X) - F is constant on orbits
        let f = Hamiltonian::bump(Domain::Disc, [0.0, 0.0], 0.4, 0.002).unwrap();
        let t = liouville_table(&f, [0.0, 0.0], 0.4, &quick());
        for v in [[0.1, 0.05], [-0.2, 0.15], [0.0, -0.33]] {
            let gr = f.gradient(v, 0.0);
            let ex = 0.5 * (v[0] * gr[0] + v[1] * gr[1]) - f.value(v, 0.0);
            assert!((t.interp(v) - ex).abs() < 2e-4 * ex.abs().max(1e-3), "{} vs {ex}", t.interp(v));
        }
        assert_eq!(t.interp([0.9, 0.0]), 0.0);
    }

    #[test]
    fn generating_field_matches_isotopy_derivative() {
        let f = Hamiltonian::bump(Domain::Disc, [0.15, -0.1], 0.35, 0.0004).unwrap();
        let fr = Fragmenter::new(&f, 0.05, &quick()).unwrap();
        for &t in &[0.3, 0.5, 0.93, 0.96] {
            for z in [[0.01, 0.005], [-0.02, 0.01]] {
                let h = 1e-6;
                let a = fr.isotopy(z, t - h).unwrap();
                let b = fr.isotopy(z, t + h).unwrap();
                let fd = [(b[0] - a[0]) / (2.0 * h), (b[1] - a[1]) / (2.0 * h)];
                let w = fr.isotopy(z, t).unwrap();
                let v = fr.velocity(w, t, false);
                let scale = fd[0].hypot(fd[1]).max(1e-3);
                assert!(
                    (fd[0] - v[0]).hypot(fd[1] - v[1]) < 1e-3 * scale,
                    "t={t} z={z:?}: fd {fd:?} vs field {v:?}"
                );
            }
        }
    }

    #[test]
    fn off_centre_bump_decomposes() {
        let f = Hamiltonian::bump(Domain::Disc, [0.1, 0.05], 0.3, 0.0004).unwrap();
        let r = disc_fragment(&f, 0.05, &quick()).unwrap();
        assert!(r.displacement < 0.05);
        assert!(r.supports_ok());
        assert!(r.commute);
        assert!(r.kappa > 0.0);
        assert!(r.residual < DEFAULT_TOL_FRAG, "residual {} h1 {} kappa {} disp {}", r.residual, r.h1_error, r.kappa, r.displacement);
        assert!(r.h1_error < DEFAULT_TOL_FRAG, "h1 {}", r.h1_error);
    }
}
