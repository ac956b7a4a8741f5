//! Hamiltonian vector fields, their flows, the C0 distance and the Calabi
//! integral on the flat torus `R^2 / Z^2` and on the closed unit disc.
//!
//! Coordinates are `(p, q)` with `omega = dp ^ dq`. The symplectic gradient
//! of `F` is `(-dF/dq, dF/dp)`.

use std::f64::consts::PI;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    /// `R^2 / Z^2` with `dx ^ dy`, total area 1.
    Torus,
    /// Closed unit disc with `dp ^ dq`.
    Disc,
}

impl Domain {
    /// Canonical representative: `[0, 1)^2` on the torus, identity on the disc.
    pub fn wrap(self, p: Point) -> Point {
        match self {
            Domain::Torus => [wrap_unit(p[0]), wrap_unit(p[1])],
            Domain::Disc => p,
        }
    }

    /// Flat distance; on the torus the minimum over the 9 nearest translates.
    pub fn distance(self, a: Point, b: Point) -> f64 {
        match self {
            Domain::Disc => norm([a[0] - b[0], a[1] - b[1]]),
            Domain::Torus => {
                let a = self.wrap(a);
                let b = self.wrap(b);
                let mut best = f64::INFINITY;
                for i in -1..=1 {
                    for j in -1..=1 {
                        let d = norm([a[0] - b[0] + i as f64, a[1] - b[1] + j as f64]);
                        best = best.min(d);
                    }
                }
                best
            }
        }
    }

    pub fn contains(self, p: Point) -> bool {
        match self {
            Domain::Torus => true,
            Domain::Disc => norm(p) <= 1.0,
        }
    }

    /// Whether the closed disc `(center, radius)` sits in the domain interior
    /// (and embeds, on the torus).
    pub fn holds_disc(self, center: Point, radius: f64) -> bool {
        match self {
            Domain::Torus => radius > 0.0 && radius <= 0.5,
            Domain::Disc => radius > 0.0 && norm(center) + radius < 1.0,
        }
    }
}

pub(crate) fn wrap_unit(x: f64) -> f64 {
    let y = x.rem_euclid(1.0);
    if y >= 1.0 {
        0.0
    } else {
        y
    }
}

/// Nearest-image representative of a torus displacement, in `[-1/2, 1/2)^2`.
pub(crate) fn torus_delta(d: Point) -> Point {
    [d[0] - d[0].round(), d[1] - d[1].round()]
}

pub(crate) fn norm(v: Point) -> f64 {
    v[0].hypot(v[1])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Support {
    Full,
    Disc { center: Point, radius: f64 },
}

impl Support {
    /// True when `p` lies strictly outside the support (so the field is 0).
    pub fn excludes(&self, domain: Domain, p: Point) -> bool {
        match *self {
            Support::Full => false,
            Support::Disc { center, radius } => {
                let d = match domain {
                    Domain::Torus => torus_delta([p[0] - center[0], p[1] - center[1]]),
                    Domain::Disc => [p[0] - center[0], p[1] - center[1]],
                };
                d[0] * d[0] + d[1] * d[1] >= radius * radius
            }
        }
    }

    pub fn area(&self, domain: Domain) -> f64 {
        match *self {
            Support::Disc { radius, .. } => PI * radius * radius,
            Support::Full => match domain {
                Domain::Torus => 1.0,
                Domain::Disc => PI,
            },
        }
    }
}

/// Time modulation `rho(t)` of an autonomous spatial profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TimeSchedule {
    Constant,
    /// `1 - cos(2 pi t)`: vanishes at integer times, unit integral per period.
    Pulse,
    /// Smooth plateau, zero on `[0, delta]` and `[1 - delta, 1]`, unit integral.
    Cutoff { delta: f64 },
}

impl TimeSchedule {
    pub fn rate(&self, t: f64) -> f64 {
        match *self {
            TimeSchedule::Constant => 1.0,
            TimeSchedule::Pulse => 1.0 - (2.0 * PI * t).cos(),
            TimeSchedule::Cutoff { delta } => {
                let s = t.rem_euclid(1.0);
                cutoff_window(s, delta) / cutoff_norm(delta)
            }
        }
    }

    /// `int_{t0}^{t1} rho(t) dt`.
    pub fn integral(&self, t0: f64, t1: f64) -> f64 {
        match *self {
            TimeSchedule::Constant => t1 - t0,
            TimeSchedule::Pulse => {
                let g = |t: f64| t - (2.0 * PI * t).sin() / (2.0 * PI);
                g(t1) - g(t0)
            }
            TimeSchedule::Cutoff { .. } => {
                let n = (((t1 - t0).abs() * 4096.0).ceil() as usize).clamp(8, 1 << 20);
                let h = (t1 - t0) / n as f64;
                simpson(|t| self.rate(t), t0, h, n)
            }
        }
    }

    pub fn max_rate(&self) -> f64 {
        match *self {
            TimeSchedule::Constant => 1.0,
            TimeSchedule::Pulse => 2.0,
            TimeSchedule::Cutoff { delta } => 1.0 / cutoff_norm(delta),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, TimeSchedule::Constant)
    }
}

fn cutoff_window(s: f64, delta: f64) -> f64 {
    let ramp = (0.5 - delta).max(1e-6) * 0.5;
    smoothstep((s - delta) / ramp) * smoothstep((1.0 - delta - s) / ramp)
}

fn cutoff_norm(delta: f64) -> f64 {
    let n = 8192;
    simpson(|s| cutoff_window(s, delta), 0.0, 1.0 / n as f64, n)
}

fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, h: f64, n: usize) -> f64 {
    let n = n + (n & 1);
    let mut acc = f(a) + f(a + n as f64 * h);
    for i in 1..n {
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

fn bump_h(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        (-1.0 / t).exp()
    }
}

/// C-infinity step: 0 for `u <= 0`, 1 for `u >= 1`.
pub fn smoothstep(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else if u >= 1.0 {
        1.0
    } else {
        let a = bump_h(u);
        a / (a + bump_h(1.0 - u))
    }
}

/// Derivative of [`smoothstep`].
pub fn smoothstep_deriv(u: f64) -> f64 {
    if u <= 0.0 || u >= 1.0 {
        return 0.0;
    }
    let a = bump_h(u);
    let b = bump_h(1.0 - u);
    a * b * (1.0 / (u * u) + 1.0 / ((1.0 - u) * (1.0 - u))) / ((a + b) * (a + b))
}

/// Radius fraction below which the bump profile is flat.
pub const BUMP_PLATEAU: f64 = 0.25;

/// Radial bump profile `P(s)`: 1 on `[0, BUMP_PLATEAU]`, 0 for `s >= 1`.
pub fn bump_profile(s: f64) -> f64 {
    1.0 - smoothstep((s - BUMP_PLATEAU) / (1.0 - BUMP_PLATEAU))
}

pub fn bump_profile_deriv(s: f64) -> f64 {
    -smoothstep_deriv((s - BUMP_PLATEAU) / (1.0 - BUMP_PLATEAU)) / (1.0 - BUMP_PLATEAU)
}

struct ProfileConstants {
    /// `int_0^1 P(s) s ds`
    moment: f64,
    /// `max |P'(s) / s|`
    max_angular: f64,
    /// `max |P''(s)|`
    max_curvature: f64,
}

fn profile_constants() -> &'static ProfileConstants {
    static CONSTS: OnceLock<ProfileConstants> = OnceLock::new();
    CONSTS.get_or_init(|| {
        let n = 20_000;
        let moment = BUMP_PLATEAU * BUMP_PLATEAU / 2.0
            + simpson(
                |s| bump_profile(s) * s,
                BUMP_PLATEAU,
                (1.0 - BUMP_PLATEAU) / n as f64,
                n,
            );
        let mut max_angular = 0.0f64;
        let mut max_curvature = 0.0f64;
        let m = 20_000;
        for i in 1..m {
            let s = BUMP_PLATEAU + (1.0 - BUMP_PLATEAU) * i as f64 / m as f64;
            max_angular = max_angular.max((bump_profile_deriv(s) / s).abs());
            let h = 1e-6;
            let c = (bump_profile_deriv(s + h) - bump_profile_deriv(s - h)) / (2.0 * h);
            max_curvature = max_curvature.max(c.abs());
        }
        ProfileConstants {
            moment,
            max_angular,
            max_curvature,
        }
    })
}

/// Spatial profile of a Hamiltonian.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Field {
    Zero,
    Constant { value: f64 },
    /// `F = c_p p + c_q q`
    Linear { coeff: [f64; 2] },
    /// `F = scale |z - center|^2 / 2`
    Quadratic { center: Point, scale: f64 },
    /// Smooth plateau bump with `int F dp dq = mass`.
    Bump { center: Point, radius: f64, mass: f64 },
    Sum { parts: Vec<Field> },
}

impl Field {
    fn bump_amplitude(radius: f64, mass: f64) -> f64 {
        mass / (2.0 * PI * radius * radius * profile_constants().moment)
    }

    fn offset(domain: Domain, p: Point, c: Point) -> Point {
        let d = [p[0] - c[0], p[1] - c[1]];
        match domain {
            Domain::Torus => torus_delta(d),
            Domain::Disc => d,
        }
    }

    fn value(&self, domain: Domain, p: Point) -> f64 {
        match self {
            Field::Zero => 0.0,
            Field::Constant { value } => *value,
            Field::Linear { coeff } => coeff[0] * p[0] + coeff[1] * p[1],
            Field::Quadratic { center, scale } => {
                let d = Field::offset(domain, p, *center);
                0.5 * scale * (d[0] * d[0] + d[1] * d[1])
            }
            Field::Bump { center, radius, mass } => {
                let d = Field::offset(domain, p, *center);
                let r2 = d[0] * d[0] + d[1] * d[1];
                if r2 >= radius * radius {
                    return 0.0;
                }
                Field::bump_amplitude(*radius, *mass) * bump_profile(r2.sqrt() / radius)
            }
            Field::Sum { parts } => parts.iter().map(|f| f.value(domain, p)).sum(),
        }
    }

    fn gradient(&self, domain: Domain, p: Point) -> Point {
        match self {
            Field::Zero | Field::Constant { .. } => [0.0, 0.0],
            Field::Linear { coeff } => *coeff,
            Field::Quadratic { center, scale } => {
                let d = Field::offset(domain, p, *center);
                [scale * d[0], scale * d[1]]
            }
            Field::Bump { center, radius, mass } => {
                let d = Field::offset(domain, p, *center);
                let r2 = d[0] * d[0] + d[1] * d[1];
                let s0 = BUMP_PLATEAU * radius;
                if r2 >= radius * radius || r2 <= s0 * s0 {
                    return [0.0, 0.0];
                }
                let r = r2.sqrt();
                let g = Field::bump_amplitude(*radius, *mass) * bump_profile_deriv(r / radius) / (radius * r);
                [g * d[0], g * d[1]]
            }
            Field::Sum { parts } => parts.iter().fold([0.0, 0.0], |acc, f| {
                let g = f.gradient(domain, p);
                [acc[0] + g[0], acc[1] + g[1]]
            }),
        }
    }

    /// Center of a radial field.
    fn radial_center(&self) -> Option<Point> {
        match self {
            Field::Zero | Field::Constant { .. } => Some([0.0, 0.0]),
            Field::Quadratic { center, .. } | Field::Bump { center, .. } => Some(*center),
            _ => None,
        }
    }

    /// Angular velocity `phi'(r)/r` of a radial field at distance `r`.
    fn angular_velocity(&self, r: f64) -> f64 {
        match self {
            Field::Quadratic { scale, .. } => *scale,
            Field::Bump { radius, mass, .. } => {
                if r >= *radius || r <= BUMP_PLATEAU * radius {
                    0.0
                } else {
                    Field::bump_amplitude(*radius, *mass) * bump_profile_deriv(r / radius) / (radius * r)
                }
            }
            _ => 0.0,
        }
    }

    fn rate_bound(&self) -> f64 {
        match self {
            Field::Zero | Field::Constant { .. } | Field::Linear { .. } => 0.0,
            Field::Quadratic { scale, .. } => scale.abs(),
            Field::Bump { radius, mass, .. } => {
                let c = profile_constants();
                Field::bump_amplitude(*radius, *mass).abs() / (radius * radius)
                    * c.max_angular.max(c.max_curvature)
            }
            Field::Sum { parts } => parts.iter().map(Field::rate_bound).sum(),
        }
    }

    fn support(&self) -> Support {
        match self {
            Field::Zero => Support::Disc {
                center: [0.0, 0.0],
                radius: 0.0,
            },
            Field::Constant { .. } | Field::Linear { .. } | Field::Quadratic { .. } => Support::Full,
            Field::Bump { center, radius, .. } => Support::Disc {
                center: *center,
                radius: *radius,
            },
            Field::Sum { parts } => {
                let discs: Vec<(Point, f64)> = parts
                    .iter()
                    .filter_map(|f| match f.support() {
                        Support::Disc { center, radius } if radius > 0.0 => Some((center, radius)),
                        Support::Disc { .. } => None,
                        Support::Full => Some(([f64::NAN, f64::NAN], f64::INFINITY)),
                    })
                    .collect();
                if discs.iter().any(|(_, r)| r.is_infinite()) {
                    return Support::Full;
                }
                if discs.is_empty() {
                    return Field::Zero.support();
                }
                let n = discs.len() as f64;
                let c = [
                    discs.iter().map(|d| d.0[0]).sum::<f64>() / n,
                    discs.iter().map(|d| d.0[1]).sum::<f64>() / n,
                ];
                let r = discs
                    .iter()
                    .map(|(dc, dr)| norm([dc[0] - c[0], dc[1] - c[1]]) + dr)
                    .fold(0.0, f64::max);
                Support::Disc { center: c, radius: r }
            }
        }
    }
}

/// A (possibly time-dependent) Hamiltonian `F(z, t) = factor * rho(t) * field(z)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hamiltonian {
    pub domain: Domain,
    pub field: Field,
    #[serde(default = "one")]
    pub factor: f64,
    #[serde(default = "constant_schedule")]
    pub schedule: TimeSchedule,
}

fn one() -> f64 {
    1.0
}

fn constant_schedule() -> TimeSchedule {
    TimeSchedule::Constant
}

impl Hamiltonian {
    pub fn new(domain: Domain, field: Field) -> Result<Hamiltonian> {
        let h = Hamiltonian {
            domain,
            field,
            factor: 1.0,
            schedule: TimeSchedule::Constant,
        };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        fn check(domain: Domain, f: &Field) -> Result<()> {
            match f {
                Field::Bump { center, radius, .. } => {
                    if !domain.holds_disc(*center, *radius) {
                        return Err(Error::SupportEscapesDomain {
                            center: *center,
                            radius: *radius,
                        });
                    }
                    Ok(())
                }
                Field::Linear { .. } | Field::Quadratic { .. } if domain == Domain::Torus => Err(
                    Error::UnsupportedDomain("linear and quadratic profiles are not periodic".into()),
                ),
                Field::Sum { parts } => parts.iter().try_for_each(|p| check(domain, p)),
                _ => Ok(()),
            }
        }
        check(self.domain, &self.field)?;
        if let (Domain::Torus, Support::Disc { radius, .. }) = (self.domain, self.field.support()) {
            if radius > 0.5 {
                return Err(Error::UnsupportedDomain(
                    "summed support does not fit in an embedded torus disc".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn zero(domain: Domain) -> Hamiltonian {
        Hamiltonian::new(domain, Field::Zero).expect("zero field is valid")
    }

    pub fn bump(domain: Domain, center: Point, radius: f64, mass: f64) -> Result<Hamiltonian> {
        if mass == 0.0 {
            if !domain.holds_disc(center, radius) {
                return Err(Error::SupportEscapesDomain { center, radius });
            }
            return Ok(Hamiltonian::zero(domain));
        }
        Hamiltonian::new(domain, Field::Bump { center, radius, mass })
    }

    /// `F = (|z - center|^2) / 2`, the rigid counterclockwise rotation.
    pub fn rotation(center: Point) -> Hamiltonian {
        Hamiltonian::new(Domain::Disc, Field::Quadratic { center, scale: 1.0 }).expect("disc rotation")
    }

    pub fn scaled(mut self, c: f64) -> Hamiltonian {
        self.factor *= c;
        self
    }

    pub fn with_schedule(mut self, schedule: TimeSchedule) -> Hamiltonian {
        self.schedule = schedule;
        self
    }

    /// Conjugate by the translation `z -> z + offset`.
    pub fn translated(&self, offset: Point) -> Hamiltonian {
        fn shift(f: &Field, o: Point) -> Field {
            let mv = |c: &Point| [c[0] + o[0], c[1] + o[1]];
            match f {
                Field::Quadratic { center, scale } => Field::Quadratic {
                    center: mv(center),
                    scale: *scale,
                },
                Field::Bump { center, radius, mass } => Field::Bump {
                    center: mv(center),
                    radius: *radius,
                    mass: *mass,
                },
                Field::Linear { coeff } => Field::Linear { coeff: *coeff },
                Field::Sum { parts } => Field::Sum {
                    parts: parts.iter().map(|p| shift(p, o)).collect(),
                },
                other => other.clone(),
            }
        }
        Hamiltonian {
            field: shift(&self.field, offset),
            ..self.clone()
        }
    }

    pub fn is_zero(&self) -> bool {
        self.factor == 0.0 || matches!(self.field, Field::Zero)
    }

    pub fn is_autonomous(&self) -> bool {
        self.schedule.is_constant()
    }

    pub fn value(&self, p: Point, t: f64) -> f64 {
        self.factor * self.schedule.rate(t) * self.field.value(self.domain, p)
    }

    pub fn gradient(&self, p: Point, t: f64) -> Point {
        let k = self.factor * self.schedule.rate(t);
        if k == 0.0 {
            return [0.0, 0.0];
        }
        let g = self.field.gradient(self.domain, p);
        [k * g[0], k * g[1]]
    }

    pub fn support(&self) -> Support {
        self.field.support()
    }

    /// Upper bound for the Lipschitz constant of the symplectic gradient.
    pub fn rate_bound(&self) -> f64 {
        self.factor.abs() * self.schedule.max_rate() * self.field.rate_bound()
    }

    pub fn is_radial(&self) -> bool {
        self.field.radial_center().is_some()
    }

    /// Exact flow of a radial Hamiltonian: rotation about its center by
    /// `omega(r) * int rho`.
    pub fn exact_radial_flow(&self, p: Point, t0: f64, t1: f64) -> Result<Point> {
        let c = self.field.radial_center().ok_or(Error::NoExactFlow)?;
        let d = match self.domain {
            Domain::Torus => torus_delta([p[0] - c[0], p[1] - c[1]]),
            Domain::Disc => [p[0] - c[0], p[1] - c[1]],
        };
        let w = self.field.angular_velocity(norm(d)) * self.factor;
        if w == 0.0 {
            return Ok(p);
        }
        let angle = w * self.schedule.integral(t0, t1);
        let (s, co) = angle.sin_cos();
        let base = [p[0] - d[0], p[1] - d[1]];
        Ok([base[0] + co * d[0] - s * d[1], base[1] + s * d[0] + co * d[1]])
    }
}

/// `sgrad F = (-dF/dq, dF/dp)` with the analytic gradient.
pub fn sgrad(f: &Hamiltonian, p: Point, t: f64) -> Point {
    let g = f.gradient(p, t);
    [-g[1], g[0]]
}

/// `sgrad F` by central finite differences of step `h`.
pub fn sgrad_fd(f: &Hamiltonian, p: Point, t: f64, h: f64) -> Point {
    let fp = (f.value([p[0] + h, p[1]], t) - f.value([p[0] - h, p[1]], t)) / (2.0 * h);
    let fq = (f.value([p[0], p[1] + h], t) - f.value([p[0], p[1] - h], t)) / (2.0 * h);
    [-fq, fp]
}

pub const DEFAULT_H_FD: f64 = 1e-5;
pub const DEFAULT_TOL_FLOW: f64 = 1e-6;
pub const DEFAULT_TOL_AREA: f64 = 1e-4;
pub const DEFAULT_N_QUAD: usize = 512;
pub const DEFAULT_N_C0: usize = 256;
pub const DEFAULT_MAX_STEPS: usize = 1 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    MidpointSymplectic,
    Rk4Projected,
    /// Closed-form rotation; radial Hamiltonians only.
    ExactRadial,
}

/// Step control shared by every flow evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowSettings {
    pub method: Method,
    /// Target `rate_bound * dt` when steps are chosen automatically.
    pub max_rotation_per_step: f64,
    pub min_steps_per_unit: usize,
    pub max_steps: usize,
    pub fixed_point_tol: f64,
    pub fixed_point_iters: usize,
}

impl Default for FlowSettings {
    fn default() -> Self {
        FlowSettings {
            method: Method::MidpointSymplectic,
            max_rotation_per_step: 0.05,
            min_steps_per_unit: 16,
            max_steps: DEFAULT_MAX_STEPS,
            fixed_point_tol: 1e-14,
            fixed_point_iters: 60,
        }
    }
}

impl FlowSettings {
    pub fn with_method(mut self, m: Method) -> Self {
        self.method = m;
        self
    }

    /// Step count for integrating `f` over a time span of length `duration`.
    pub fn steps_for(&self, f: &Hamiltonian, duration: f64) -> usize {
        let duration = duration.abs();
        let by_rate = (duration * f.rate_bound() / self.max_rotation_per_step).ceil();
        let by_floor = (duration * self.min_steps_per_unit as f64).ceil();
        (by_rate.max(by_floor).max(1.0)) as usize
    }

    /// One step from `(z, t)` of size `h` (negative `h` integrates backward).
    pub fn advance(&self, f: &Hamiltonian, z: Point, t: f64, h: f64) -> Result<Point> {
        match self.method {
            Method::ExactRadial => f.exact_radial_flow(z, t, t + h),
            Method::Rk4Projected => {
                let k1 = sgrad(f, z, t);
                let k2 = sgrad(f, [z[0] + 0.5 * h * k1[0], z[1] + 0.5 * h * k1[1]], t + 0.5 * h);
                let k3 = sgrad(f, [z[0] + 0.5 * h * k2[0], z[1] + 0.5 * h * k2[1]], t + 0.5 * h);
                let k4 = sgrad(f, [z[0] + h * k3[0], z[1] + h * k3[1]], t + h);
                let mut out = [
                    z[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
                    z[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
                ];
                if f.domain == Domain::Disc {
                    let r = norm(out);
                    if r > 1.0 {
                        out = [out[0] / r, out[1] / r];
                    }
                }
                Ok(out)
            }
            Method::MidpointSymplectic => self.midpoint(f, z, t, h, 0),
        }
    }

    fn midpoint(&self, f: &Hamiltonian, z: Point, t: f64, h: f64, depth: u32) -> Result<Point> {
        let tm = t + 0.5 * h;
        let v0 = sgrad(f, z, t);
        if v0 == [0.0, 0.0] && f.support().excludes(f.domain, z) {
            return Ok(z);
        }
        let mut z1 = [z[0] + h * v0[0], z[1] + h * v0[1]];
        for _ in 0..self.fixed_point_iters {
            let v = sgrad(f, [0.5 * (z[0] + z1[0]), 0.5 * (z[1] + z1[1])], tm);
            let next = [z[0] + h * v[0], z[1] + h * v[1]];
            let delta = (next[0] - z1[0]).abs().max((next[1] - z1[1]).abs());
            z1 = next;
            if delta <= self.fixed_point_tol {
                return Ok(z1);
            }
        }
        // Not contracting at this step size: split the step.
        if depth >= 12 {
            return Err(Error::StepUnderflow {
                max_steps: self.max_steps,
            });
        }
        let half = self.midpoint(f, z, t, 0.5 * h, depth + 1)?;
        self.midpoint(f, half, tm, 0.5 * h, depth + 1)
    }
}

/// Integrates from `t0` to `t1` in `steps` equal steps without wrapping.
pub fn flow_lifted(
    f: &Hamiltonian,
    x0: Point,
    t0: f64,
    t1: f64,
    steps: usize,
    settings: &FlowSettings,
) -> Result<Point> {
    if steps == 0 {
        return Err(Error::StepUnderflow { max_steps: 0 });
    }
    if steps > settings.max_steps {
        return Err(Error::StepUnderflow {
            max_steps: settings.max_steps,
        });
    }
    if f.is_zero() || f.support().excludes(f.domain, x0) && settings.method != Method::Rk4Projected {
        return Ok(x0);
    }
    if settings.method == Method::ExactRadial {
        return f.exact_radial_flow(x0, t0, t1);
    }
    let h = (t1 - t0) / steps as f64;
    let mut z = x0;
    for k in 0..steps {
        z = settings.advance(f, z, t0 + k as f64 * h, h)?;
    }
    Ok(z)
}

/// Time-`(t1 - t0)` map of `f` applied to `x0`, wrapped into the domain.
pub fn flow(f: &Hamiltonian, x0: Point, t0: f64, t1: f64, steps: usize) -> Result<Point> {
    flow_with(f, x0, t0, t1, steps, &FlowSettings::default())
}

pub fn flow_with(
    f: &Hamiltonian,
    x0: Point,
    t0: f64,
    t1: f64,
    steps: usize,
    settings: &FlowSettings,
) -> Result<Point> {
    Ok(f.domain.wrap(flow_lifted(f, x0, t0, t1, steps, settings)?))
}

/// Sampled `(time, point)` trajectory, unwrapped.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub points: Vec<(f64, Point)>,
    pub refinements: usize,
}

pub fn flow_trajectory(
    f: &Hamiltonian,
    x0: Point,
    t0: f64,
    t1: f64,
    steps: usize,
    settings: &FlowSettings,
) -> Result<Trajectory> {
    if steps == 0 || steps > settings.max_steps {
        return Err(Error::StepUnderflow {
            max_steps: settings.max_steps,
        });
    }
    let h = (t1 - t0) / steps as f64;
    let mut points = Vec::with_capacity(steps + 1);
    let mut z = x0;
    points.push((t0, z));
    for k in 0..steps {
        let t = t0 + k as f64 * h;
        z = settings.advance(f, z, t, h)?;
        points.push((t + h, z));
    }
    Ok(Trajectory { points, refinements: 0 })
}

/// A time-`t0 -> t1` map of a Hamiltonian flow.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowMap {
    pub hamiltonian: Hamiltonian,
    pub t0: f64,
    pub t1: f64,
    pub steps: usize,
    pub settings: FlowSettings,
}

impl FlowMap {
    pub fn new(hamiltonian: Hamiltonian, t0: f64, t1: f64, steps: usize) -> FlowMap {
        FlowMap {
            hamiltonian,
            t0,
            t1,
            steps,
            settings: FlowSettings::default(),
        }
    }

    /// Time-1 map with automatically chosen steps.
    pub fn time_one(hamiltonian: Hamiltonian) -> FlowMap {
        let settings = FlowSettings::default();
        let steps = settings.steps_for(&hamiltonian, 1.0);
        FlowMap {
            hamiltonian,
            t0: 0.0,
            t1: 1.0,
            steps,
            settings,
        }
    }

    pub fn with_settings(mut self, settings: FlowSettings) -> FlowMap {
        self.settings = settings;
        self
    }

    pub fn domain(&self) -> Domain {
        self.hamiltonian.domain
    }

    pub fn apply(&self, x: Point) -> Result<Point> {
        flow_with(&self.hamiltonian, x, self.t0, self.t1, self.steps, &self.settings)
    }

    pub fn inverse(&self) -> FlowMap {
        FlowMap {
            t0: self.t1,
            t1: self.t0,
            ..self.clone()
        }
    }
}

/// Deterministic evaluation grid of resolution `n` per axis.
pub fn evaluation_grid(domain: Domain, n: usize) -> Vec<Point> {
    let mut pts = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            let u = (i as f64 + 0.5) / n as f64;
            let v = (j as f64 + 0.5) / n as f64;
            match domain {
                Domain::Torus => pts.push([u, v]),
                Domain::Disc => {
                    let p = [2.0 * u - 1.0, 2.0 * v - 1.0];
                    if norm(p) < 1.0 {
                        pts.push(p);
                    }
                }
            }
        }
    }
    pts
}

/// `max_x d(x, g^-1 f(x))` over the evaluation grid; `g = None` is the identity.
pub fn c0_distance(f: &FlowMap, g: Option<&FlowMap>, n: usize) -> Result<f64> {
    if g == Some(f) {
        return Ok(0.0);
    }
    let domain = f.domain();
    let g_inv = g.map(FlowMap::inverse);
    let mut worst = 0.0f64;
    for x in evaluation_grid(domain, n) {
        let mut y = f.apply(x)?;
        if let Some(gi) = &g_inv {
            y = gi.apply(y)?;
        }
        worst = worst.max(domain.distance(x, y));
    }
    Ok(worst)
}

/// `max(dist(f, g), dist(g, f))`, the symmetrized grid distance.
pub fn c0_distance_sym(f: &FlowMap, g: &FlowMap, n: usize) -> Result<f64> {
    Ok(c0_distance(f, Some(g), n)?.max(c0_distance(g, Some(f), n)?))
}

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub(crate) fn gauss_legendre_unit(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pn1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((0.5 * (1.0 - x), 0.5 * w));
    }
    out
}

/// `int_0^1 int F(p, q, t) dp dq dt`: midpoint quadrature with `n_quad`
/// points per axis over the support (polar Gauss for full-disc support).
pub fn calabi(f: &Hamiltonian, n_quad: usize) -> Result<f64> {
    let value = |p: Point| f.factor * f.field.value(f.domain, p);
    let spatial = || -> Result<f64> {
        match f.support() {
            Support::Disc { radius, .. } if radius == 0.0 => Ok(0.0),
            Support::Disc { center, radius } => {
                let h = 2.0 * radius / n_quad as f64;
                let mut acc = 0.0;
                for j in 0..n_quad {
                    let y = center[1] - radius + (j as f64 + 0.5) * h;
                    let mut row = 0.0;
                    for i in 0..n_quad {
                        let x = center[0] - radius + (i as f64 + 0.5) * h;
                        row += value([x, y]);
                    }
                    acc += row;
                }
                Ok(acc * h * h)
            }
            Support::Full => match f.domain {
                Domain::Torus => Err(Error::UnsupportedDomain(
                    "Calabi invariant needs a disc-supported Hamiltonian on the torus".into(),
                )),
                Domain::Disc => {
                    let radial = gauss_legendre_unit(n_quad.clamp(8, 256));
                    let n_theta = n_quad.max(8);
                    let mut acc = 0.0;
                    for &(r, wr) in &radial {
                        let mut ring = 0.0;
                        for k in 0..n_theta {
                            let th = 2.0 * PI * k as f64 / n_theta as f64;
                            ring += value([r * th.cos(), r * th.sin()]);
                        }
                        acc += wr * r * ring * 2.0 * PI / n_theta as f64;
                    }
                    Ok(acc)
                }
            },
        }
    };
    // F is separable in time, so the time factor integrates exactly.
    Ok(spatial()? * f.schedule.integral(0.0, 1.0))
}

/// Jacobian determinant of a planar map by central differences.
pub fn jacobian_det<M: Fn(Point) -> Result<Point>>(map: M, x: Point, h: f64) -> Result<f64> {
    let px = map([x[0] + h, x[1]])?;
    let mx = map([x[0] - h, x[1]])?;
    let py = map([x[0], x[1] + h])?;
    let my = map([x[0], x[1] - h])?;
    let a = (px[0] - mx[0]) / (2.0 * h);
    let c = (px[1] - mx[1]) / (2.0 * h);
    let b = (py[0] - my[0]) / (2.0 * h);
    let d = (py[1] - my[1]) / (2.0 * h);
    Ok(a * d - b * c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: Point, b: Point, tol: f64) -> bool {
        (a[0] - b[0]).abs() <= tol && (a[1] - b[1]).abs() <= tol
    }

    #[test]
    fn sgrad_examples() {
        let c = Hamiltonian::new(Domain::Disc, Field::Constant { value: 3.0 }).unwrap();
        assert_eq!(sgrad(&c, [0.2, 0.1], 0.0), [0.0, 0.0]);
        let lin = Hamiltonian::new(Domain::Disc, Field::Linear { coeff: [1.0, 0.0] }).unwrap();
        assert_eq!(sgrad(&lin, [0.3, -0.4], 0.0), [0.0, 1.0]);
        let rot = Hamiltonian::rotation([0.0, 0.0]);
        for p in [[0.3, 0.2], [-0.5, 0.1], [0.0, -0.7]] {
            assert!(close(sgrad(&rot, p, 0.0), [-p[1], p[0]], 1e-15));
            assert!(close(sgrad_fd(&rot, p, 0.0, DEFAULT_H_FD), [-p[1], p[0]], 1e-9));
        }
    }

    #[test]
    fn analytic_gradient_matches_finite_differences_for_bumps() {
        let f = Hamiltonian::bump(Domain::Torus, [0.9, 0.1], 0.3, 0.02).unwrap();
        for p in [[0.8, 0.05], [0.05, 0.2], [0.95, 0.95], [0.7, 0.1]] {
            let a = sgrad(&f, p, 0.0);
            let n = sgrad_fd(&f, p, 0.0, 1e-6);
            assert!(close(a, n, 1e-6 * (1.0 + norm(a))), "{a:?} vs {n:?}");
        }
    }

    #[test]
    fn zero_field_flow_is_identity() {
        let z = Hamiltonian::zero(Domain::Torus);
        assert_eq!(flow(&z, [0.3, 0.7], 0.0, 1.0, 10).unwrap(), [0.3, 0.7]);
    }

    #[test]
    fn rotation_quarter_turn() {
        let rot = Hamiltonian::rotation([0.0, 0.0]);
        let r = 0.6;
        let out = flow(&rot, [r, 0.0], 0.0, PI / 2.0, 4000).unwrap();
        assert!(close(out, [0.0, r], DEFAULT_TOL_FLOW), "{out:?}");
        let rk = flow_with(
            &rot,
            [r, 0.0],
            0.0,
            PI / 2.0,
            400,
            &FlowSettings::default().with_method(Method::Rk4Projected),
        )
        .unwrap();
        assert!(close(rk, [0.0, r], DEFAULT_TOL_FLOW));
        let ex = flow_with(
            &rot,
            [r, 0.0],
            0.0,
            PI / 2.0,
            1,
            &FlowSettings::default().with_method(Method::ExactRadial),
        )
        .unwrap();
        assert!(close(ex, [0.0, r], 1e-14));
    }

    #[test]
    fn midpoint_converges_at_second_order() {
        let rot = Hamiltonian::rotation([0.0, 0.0]);
        let exact = [0.5 * 1.0f64.cos(), 0.5 * 1.0f64.sin()];
        let err = |n| {
            let out = flow(&rot, [0.5, 0.0], 0.0, 1.0, n).unwrap();
            norm([out[0] - exact[0], out[1] - exact[1]])
        };
        let (e1, e2, e3) = (err(20), err(40), err(80));
        let o1 = (e1 / e2).log2();
        let o2 = (e2 / e3).log2();
        assert!((o1 - 2.0).abs() < 0.1 && (o2 - 2.0).abs() < 0.1, "{o1} {o2}");
    }

    #[test]
    fn flow_composition_and_inverse() {
        let f = Hamiltonian::bump(Domain::Disc, [0.1, -0.2], 0.4, 0.05).unwrap();
        let s = FlowSettings::default();
        let n = s.steps_for(&f, 1.0);
        let x0 = [0.2, -0.1];
        let two = flow(&f, x0, 0.0, 2.0, 2 * n).unwrap();
        let once = flow(&f, x0, 0.0, 1.0, n).unwrap();
        let twice = flow(&f, once, 1.0, 2.0, n).unwrap();
        assert!(close(two, twice, 2.0 * DEFAULT_TOL_FLOW));
        let back = flow(&f, once, 1.0, 0.0, n).unwrap();
        assert!(close(back, x0, DEFAULT_TOL_FLOW));
    }

    #[test]
    fn points_outside_support_are_fixed_exactly() {
        let f = Hamiltonian::bump(Domain::Torus, [0.5, 0.5], 0.2, 0.1).unwrap();
        for p in [[0.1, 0.1], [0.5, 0.71], [0.99, 0.5]] {
            assert_eq!(flow(&f, p, 0.0, 1.0, 100).unwrap(), p);
        }
    }

    #[test]
    fn time_one_map_preserves_area() {
        let hams = [
            Hamiltonian::bump(Domain::Disc, [0.0, 0.0], 0.5, 0.05).unwrap(),
            Hamiltonian::bump(Domain::Torus, [0.3, 0.6], 0.25, 0.01)
                .unwrap()
                .with_schedule(TimeSchedule::Pulse),
            Hamiltonian::new(
                Domain::Disc,
                Field::Sum {
                    parts: vec![
                        Field::Bump { center: [0.2, 0.0], radius: 0.3, mass: 0.005 },
                        Field::Bump { center: [-0.1, 0.1], radius: 0.3, mass: -0.003 },
                    ],
                },
            )
            .unwrap(),
        ];
        for f in hams {
            let fm = FlowMap::time_one(f.clone());
            let map = |x: Point| flow_lifted(&f, x, 0.0, 1.0, fm.steps, &fm.settings);
            for j in 0..9 {
                for i in 0..9 {
                    let x = match f.domain {
                        Domain::Torus => [(i as f64 + 0.5) / 9.0, (j as f64 + 0.5) / 9.0],
                        Domain::Disc => [(i as f64 - 4.0) / 7.0, (j as f64 - 4.0) / 7.0],
                    };
                    if !f.domain.contains(x) {
                        continue;
                    }
                    let det = jacobian_det(map, x, 1e-6).unwrap();
                    assert!((det - 1.0).abs() <= DEFAULT_TOL_AREA, "{det} at {x:?}");
                }
            }
        }
    }

    #[test]
    fn bump_mass_and_calabi() {
        let zero = Hamiltonian::zero(Domain::Disc);
        assert_eq!(calabi(&zero, 64).unwrap(), 0.0);
        let b = Hamiltonian::bump(Domain::Disc, [0.1, 0.2], 0.3, 1.0).unwrap();
        assert!((calabi(&b, DEFAULT_N_QUAD).unwrap() - 1.0).abs() < 1e-3);
        let c3 = calabi(&b.clone().scaled(3.0), 256).unwrap();
        assert!((c3 - 3.0 * calabi(&b, 256).unwrap()).abs() < 1e-12);
        let pulsed = b.clone().with_schedule(TimeSchedule::Pulse);
        assert!((calabi(&pulsed, 256).unwrap() - 1.0).abs() < 1e-3);
        let cut = b.with_schedule(TimeSchedule::Cutoff { delta: 0.1 });
        assert!((calabi(&cut, 256).unwrap() - 1.0).abs() < 1e-3);
        assert!(Hamiltonian::bump(Domain::Disc, [0.0, 0.0], 0.0, 0.0).is_err());
        assert!(matches!(
            Hamiltonian::bump(Domain::Disc, [0.8, 0.0], 0.3, 1.0),
            Err(Error::SupportEscapesDomain { .. })
        ));
        let full = Hamiltonian::new(Domain::Torus, Field::Constant { value: 1.0 }).unwrap();
        assert!(matches!(calabi(&full, 16), Err(Error::UnsupportedDomain(_))));
    }

    #[test]
    fn calabi_of_disc_rotation() {
        // int_D (p^2 + q^2)/2 = pi / 4
        let rot = Hamiltonian::rotation([0.0, 0.0]);
        assert!((calabi(&rot, 128).unwrap() - PI / 4.0).abs() < 1e-9);
    }

    #[test]
    fn halving_radius_quadruples_peak() {
        let a = Hamiltonian::bump(Domain::Disc, [0.0, 0.0], 0.4, 1.0).unwrap();
        let b = Hamiltonian::bump(Domain::Disc, [0.0, 0.0], 0.2, 1.0).unwrap();
        let ratio = b.value([0.0, 0.0], 0.0) / a.value([0.0, 0.0], 0.0);
        assert!((ratio - 4.0).abs() < 1e-12);
        assert_eq!(Hamiltonian::bump(Domain::Disc, [0.0, 0.0], 0.4, 0.0).unwrap().value([0.0, 0.0], 0.0), 0.0);
    }

    #[test]
    fn c0_distance_bounds() {
        let f = Hamiltonian::bump(Domain::Disc, [0.0, 0.0], 0.25, 0.05).unwrap();
        let fm = FlowMap::time_one(f);
        assert_eq!(c0_distance(&fm, Some(&fm), 32).unwrap(), 0.0);
        let d = c0_distance(&fm, None, 64).unwrap();
        assert!(d > 0.0 && d <= 0.5);
        let g = FlowMap::time_one(Hamiltonian::bump(Domain::Disc, [0.1, 0.0], 0.3, -0.03).unwrap());
        let h = FlowMap::time_one(Hamiltonian::zero(Domain::Disc));
        let dfg = c0_distance(&fm, Some(&g), 48).unwrap();
        let dgh = c0_distance(&g, Some(&h), 48).unwrap();
        let dfh = c0_distance(&fm, Some(&h), 48).unwrap();
        assert!(dfh <= dfg + dgh + 1e-9);
        let sym = c0_distance_sym(&fm, &g, 48).unwrap();
        assert!(sym >= dfg);
    }

    #[test]
    fn torus_distance_wraps() {
        assert!((Domain::Torus.distance([0.05, 0.5], [0.95, 0.5]) - 0.1).abs() < 1e-12);
        assert!((Domain::Torus.distance([0.02, 0.02], [0.98, 0.98]) - 0.04f64.hypot(0.04)).abs() < 1e-12);
        assert_eq!(Domain::Torus.wrap([-0.25, 1.5]), [0.75, 0.5]);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let q = gauss_legendre_unit(8);
        let s: f64 = q.iter().map(|(x, w)| w * x.powi(7)).sum();
        assert!((s - 1.0 / 8.0).abs() < 1e-14);
    }
}
