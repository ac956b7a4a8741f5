//! Moser's trick on a rectangle: with `omega_t = omega_1 + t * eta` and
//! `d sigma = eta`, the time-1 map of `v_t = (-sigma_y, sigma_x) / rho_t`
//! pulls `omega_2` back to `omega_1`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hamflow::Point;

use super::grid::{Grid2, GridDiffeo, GridForm, Region};
use super::primitive::{primitive_on_rectangle, unit_profile, BoundaryMode, DEFAULT_TOL_QUAD};
use super::grid::OneForm;

/// Default bound on `max |f^* omega_2 - omega_1|`.
pub const DEFAULT_TOL_PULLBACK: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct MoserSettings {
    pub time_steps: usize,
    pub tol_quad: f64,
}

impl Default for MoserSettings {
    fn default() -> Self {
        MoserSettings {
            time_steps: 32,
            tol_quad: DEFAULT_TOL_QUAD,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MoserResult {
    pub diffeo: GridDiffeo,
    pub sigma: OneForm,
    /// Discrete mass difference projected out before solving.
    pub mass_defect: f64,
}

struct Field<'a> {
    rho1: &'a Grid2,
    eta: &'a Grid2,
    sigma: &'a OneForm,
}

impl Field<'_> {
    fn velocity(&self, z: Point, t: f64) -> Point {
        let rho = self.rho1.interp(z) + t * self.eta.interp(z);
        [-self.sigma.sy.interp(z) / rho, self.sigma.sx.interp(z) / rho]
    }

    fn flow(&self, z: Point, t0: f64, t1: f64, steps: usize) -> Point {
        let h = (t1 - t0) / steps as f64;
        let mut z = z;
        for k in 0..steps {
            let t = t0 + k as f64 * h;
            let k1 = self.velocity(z, t);
            let k2 = self.velocity([z[0] + 0.5 * h * k1[0], z[1] + 0.5 * h * k1[1]], t + 0.5 * h);
            let k3 = self.velocity([z[0] + 0.5 * h * k2[0], z[1] + 0.5 * h * k2[1]], t + 0.5 * h);
            let k4 = self.velocity([z[0] + h * k3[0], z[1] + h * k3[1]], t + h);
            z = [
                z[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
                z[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
            ];
        }
        z
    }
}

/// A diffeomorphism `f` of the rectangle with `f^* omega_2 = omega_1`.
pub fn moser_equalize(
    omega1: &GridForm,
    omega2: &GridForm,
    mode: &BoundaryMode,
    settings: &MoserSettings,
) -> Result<MoserResult> {
    omega1.density.same_shape(&omega2.density)?;
    if matches!(mode, BoundaryMode::Free) {
        return Err(Error::ConfigInvalid(
            "free boundary mode does not keep the rectangle invariant".into(),
        ));
    }
    let (m1, m2) = (omega1.total(), omega2.total());
    if (m1 - m2).abs() > settings.tol_quad * m1.abs().max(m2.abs()) {
        return Err(Error::UnequalMass { left: m1, right: m2 });
    }
    let rho1 = &omega1.density;
    let (nx, ny) = (rho1.nx, rho1.ny);
    let mut eta = Grid2 {
        data: omega2.density.data.iter().zip(&rho1.data).map(|(a, b)| a - b).collect(),
        ..rho1.clone()
    };
    let mass_defect = eta.integral();
    // The skeleton mode checks mass cell by cell and needs eta untouched on
    // the skeleton lines, so the defect is not spread out there.
    let skeleton = matches!(mode, BoundaryMode::VanishOnSkeleton { .. });
    if mass_defect != 0.0 && !skeleton {
        let px = unit_profile(nx, rho1.hx());
        let py = unit_profile(ny, rho1.hy());
        for j in 0..ny {
            for i in 0..nx {
                eta.data[j * nx + i] -= mass_defect * px[i] * py[j];
            }
        }
    }
    let sigma = if eta.data.iter().all(|v| *v == 0.0) {
        OneForm::zeros(rho1.rect, nx, ny)
    } else {
        primitive_on_rectangle(&eta, mode, settings.tol_quad)?
    };
    let field = Field {
        rho1,
        eta: &eta,
        sigma: &sigma,
    };
    let steps = settings.time_steps.max(1);
    let moving = sigma.max_abs() > 0.0;
    let diffeo = GridDiffeo::from_maps(
        rho1.rect,
        nx,
        ny,
        Region::Rect { rect: rho1.rect },
        |z| Ok(if moving { field.flow(z, 0.0, 1.0, steps) } else { z }),
        |z| Ok(if moving { field.flow(z, 1.0, 0.0, steps) } else { z }),
    )?;
    Ok(MoserResult {
        diffeo,
        sigma,
        mass_defect,
    })
}

/// `max |rho_2(f(z)) det Df(z) - rho_1(z)|` over nodes at least two cells
/// from the boundary, with fourth-order differences of the node map.
pub fn pullback_residual(f: &GridDiffeo, omega1: &GridForm, omega2: &GridForm) -> f64 {
    let (nx, ny) = (f.nx, f.ny);
    let (hx, hy) = (f.forward[0].hx(), f.forward[0].hy());
    let d = |a: Point, b: Point, c: Point, e: Point, h: f64| -> Point {
        // (-f(+2) + 8 f(+1) - 8 f(-1) + f(-2)) / 12h with a = +2, b = +1, c = -1, e = -2
        [
            (-a[0] + 8.0 * b[0] - 8.0 * c[0] + e[0]) / (12.0 * h),
            (-a[1] + 8.0 * b[1] - 8.0 * c[1] + e[1]) / (12.0 * h),
        ]
    };
    (2..ny - 2)
        .into_par_iter()
        .map(|j| {
            let mut worst = 0.0f64;
            for i in 2..nx - 2 {
                let fx = d(
                    f.node_image(i + 2, j),
                    f.node_image(i + 1, j),
                    f.node_image(i - 1, j),
                    f.node_image(i - 2, j),
                    hx,
                );
                let fy = d(
                    f.node_image(i, j + 2),
                    f.node_image(i, j + 1),
                    f.node_image(i, j - 1),
                    f.node_image(i, j - 2),
                    hy,
                );
                let det = fx[0] * fy[1] - fx[1] * fy[0];
                let pulled = omega2.at(f.node_image(i, j)) * det;
                worst = worst.max((pulled - omega1.density.at(i, j)).abs());
            }
            worst
        })
        .reduce(|| 0.0, f64::max)
}

/// Observed order `log2(r_k / r_{k+1})` between consecutive resolutions.
pub fn observed_orders(residuals: &[f64]) -> Vec<f64> {
    residuals.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moserfrag::grid::Rect;

    fn bump(p: Point, c: Point, r: f64) -> f64 {
        let d2 = ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)) / (r * r);
        if d2 >= 1.0 {
            0.0
        } else {
            (-1.0 / (1.0 - d2)).exp()
        }
    }

    fn forms(n: usize, s: f64) -> (GridForm, GridForm) {
        let rect = Rect::unit();
        let w1 = GridForm::from_fn(rect, n, n, |p| 1.0 + 0.2 * (p[0] * 3.0).sin() * p[1]).unwrap();
        let w2 = GridForm::from_fn(rect, n, n, |p| {
            1.0 + 0.2 * (p[0] * 3.0).sin() * p[1] + s * (bump(p, [0.35, 0.4], 0.25) - bump(p, [0.65, 0.6], 0.25))
        })
        .unwrap();
        (w1, w2)
    }

    #[test]
    fn equal_forms_give_identity() {
        let (w1, _) = forms(17, 0.0);
        let r = moser_equalize(&w1, &w1, &BoundaryMode::VanishNearBoundary, &MoserSettings::default()).unwrap();
        assert_eq!(r.diffeo.c0_norm(), 0.0);
        assert_eq!(r.sigma.max_abs(), 0.0);
    }

    #[test]
    fn unequal_mass_is_rejected() {
        let rect = Rect::unit();
        let w1 = GridForm::uniform(rect, 17, 17);
        let w2 = GridForm::from_fn(rect, 17, 17, |_| 1.1).unwrap();
        let r = moser_equalize(&w1, &w2, &BoundaryMode::VanishNearBoundary, &MoserSettings::default());
        assert!(matches!(r, Err(Error::UnequalMass { .. })));
        let r = moser_equalize(&w1, &w1, &BoundaryMode::Free, &MoserSettings::default());
        assert!(matches!(r, Err(Error::ConfigInvalid(_))));
    }

    #[test]
    fn pullback_residual_small_and_boundary_fixed() {
        let (w1, w2) = forms(65, 0.3);
        let r = moser_equalize(&w1, &w2, &BoundaryMode::VanishNearBoundary, &MoserSettings::default()).unwrap();
        let res = pullback_residual(&r.diffeo, &w1, &w2);
        assert!(res < DEFAULT_TOL_PULLBACK, "residual {res}");
        assert!(r.diffeo.roundtrip_error() < 1e-4, "{}", r.diffeo.roundtrip_error());
        assert!(r.diffeo.min_jacobian() > 0.0);
        let d = &r.diffeo;
        for k in 0..65 {
            for (i, j) in [(0, k), (64, k), (k, 0), (k, 64)] {
                assert_eq!((d.forward[0].at(i, j), d.forward[1].at(i, j)), (0.0, 0.0));
            }
        }
    }

    #[test]
    fn c0_norm_grows_with_perturbation() {
        let norms: Vec<f64> = [0.0, 0.05, 0.1, 0.2]
            .iter()
            .map(|&s| {
                let (w1, w2) = forms(33, s);
                moser_equalize(&w1, &w2, &BoundaryMode::VanishNearBoundary, &MoserSettings::default())
                    .unwrap()
                    .diffeo
                    .c0_norm()
            })
            .collect();
        assert_eq!(norms[0], 0.0);
        assert!(norms.windows(2).all(|w| w[0] < w[1]), "{norms:?}");
    }
}
