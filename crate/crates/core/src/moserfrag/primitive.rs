//! Explicit primitives of 2-forms on a rectangle: integrate along rows,
//! then correct with a separable term so the boundary conditions hold.
//!
//! Discretely, `sigma_y` is the fourth-order running integral of a row and
//! `sigma_x` a product `phi(x) * C_y(G)(y)`, which makes
//! [`OneForm::exterior_derivative`] reproduce the cell means of `eta` up to
//! rounding.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamflow::smoothstep;

use super::grid::{cell_means, cumulative, quadrature_weights, Grid2, OneForm, Rect};

/// Default relative tolerance on the total-mass precondition.
pub const DEFAULT_TOL_QUAD: f64 = 1e-9;
/// Default bound on the discrete exterior-derivative residual.
pub const DEFAULT_TOL_DISC: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum BoundaryMode {
    /// `sigma_x = 0`, `sigma_y` vanishes on the left edge only.
    Free,
    /// `sigma` vanishes on the boundary, and wherever `eta` vanishes near it.
    VanishNearBoundary,
    /// Cells cut along node columns `x_cuts` and node rows `y_cuts`;
    /// `sigma` vanishes on every cell boundary.
    VanishOnSkeleton { x_cuts: Vec<usize>, y_cuts: Vec<usize> },
}

/// Interior profile on `n` nodes, zero on the outer quarters, with unit
/// discrete integral over spacing `h`.
pub(crate) fn unit_profile(n: usize, h: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..n)
        .map(|i| {
            let u = i as f64 / (n - 1) as f64;
            smoothstep((u - 0.2) / 0.2) * smoothstep((0.8 - u) / 0.2)
        })
        .collect();
    let w = quadrature_weights(n, h);
    let total: f64 = raw.iter().zip(&w).map(|(a, b)| a * b).sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Running integral whose trailing stretch of zero input is pinned to
/// exactly zero. Only valid when the full integral vanishes.
fn cumulative_closed(values: &[f64], h: f64) -> Vec<f64> {
    let mut c = cumulative(values, h);
    // intervals k..n-1 read stencils within [k-1, k+2] (clamped at the ends)
    let n = values.len();
    let mut first_zero = n;
    while first_zero > 0 && values[first_zero - 1] == 0.0 {
        first_zero -= 1;
    }
    // node i has all later intervals zero once i >= first_zero + 2
    for ci in c.iter_mut().skip(first_zero + 2) {
        *ci = 0.0;
    }
    if first_zero == 0 {
        c.iter_mut().for_each(|v| *v = 0.0);
    }
    c
}

/// Row totals `G(y_j) = int eta(x, y_j) dx`.
fn row_totals(eta: &Grid2) -> Vec<f64> {
    let w = quadrature_weights(eta.nx, eta.hx());
    (0..eta.ny)
        .map(|j| eta.row(j).iter().zip(&w).map(|(a, b)| a * b).sum())
        .collect()
}

fn free(eta: &Grid2) -> OneForm {
    let mut s = OneForm::zeros(eta.rect, eta.nx, eta.ny);
    let hx = eta.hx();
    for j in 0..eta.ny {
        let c = cumulative(eta.row(j), hx);
        s.sy.data[j * eta.nx..(j + 1) * eta.nx].copy_from_slice(&c);
    }
    s
}

/// The vanishing construction on one (sub)grid; mass must be zero.
fn vanish(eta: &Grid2) -> OneForm {
    let (nx, ny, hx, hy) = (eta.nx, eta.ny, eta.hx(), eta.hy());
    let phi = unit_profile(nx, hx);
    let g = row_totals(eta);
    let mut s = OneForm::zeros(eta.rect, nx, ny);
    let mut row = vec![0.0; nx];
    for j in 0..ny {
        for i in 0..nx {
            row[i] = eta.at(i, j) - g[j] * phi[i];
        }
        let c = cumulative_closed(&row, hx);
        s.sy.data[j * nx..(j + 1) * nx].copy_from_slice(&c);
    }
    let cg = cumulative_closed(&g, hy);
    for j in 0..ny {
        for i in 0..nx {
            s.sx.data[j * nx + i] = -phi[i] * cg[j];
        }
    }
    s
}

fn mass_check(eta: &Grid2, tol: f64) -> Result<()> {
    let mass = eta.integral();
    let abs_mass = Grid2 {
        data: eta.data.iter().map(|v| v.abs()).collect(),
        ..eta.clone()
    }
    .integral();
    if mass.abs() > tol * abs_mass.max(f64::MIN_POSITIVE) && mass.abs() > 1e-300 {
        return Err(Error::NonzeroTotalMass { mass });
    }
    Ok(())
}

fn sub_grid(g: &Grid2, i0: usize, i1: usize, j0: usize, j1: usize) -> Grid2 {
    let n0 = g.node(i0, j0);
    let n1 = g.node(i1, j1);
    let mut out = Grid2::zeros(Rect::new(n0[0], n1[0], n0[1], n1[1]), i1 - i0 + 1, j1 - j0 + 1);
    for j in j0..=j1 {
        for i in i0..=i1 {
            out.set(i - i0, j - j0, g.at(i, j));
        }
    }
    out
}

fn cut_list(cuts: &[usize], n: usize) -> Result<Vec<usize>> {
    let mut v: Vec<usize> = std::iter::once(0)
        .chain(cuts.iter().copied())
        .chain(std::iter::once(n - 1))
        .collect();
    v.sort_unstable();
    v.dedup();
    if v.windows(2).any(|w| w[1] - w[0] < 3) {
        return Err(Error::ConfigInvalid(
            "skeleton cells need at least four nodes per side".into(),
        ));
    }
    Ok(v)
}

/// A 1-form `sigma` with discrete `d sigma = eta`.
///
/// The vanishing modes need zero total mass (per cell for the skeleton).
/// The skeleton mode also needs `eta` to vanish on the horizontal skeleton
/// lines, which is what makes the cell boundaries exactly fixed.
pub fn primitive_on_rectangle(eta: &Grid2, mode: &BoundaryMode, tol_quad: f64) -> Result<OneForm> {
    if eta.nx < 4 || eta.ny < 4 {
        return Err(Error::GridMismatch("need at least 4x4 nodes".into()));
    }
    match mode {
        BoundaryMode::Free => Ok(free(eta)),
        BoundaryMode::VanishNearBoundary => {
            mass_check(eta, tol_quad)?;
            Ok(vanish(eta))
        }
        BoundaryMode::VanishOnSkeleton { x_cuts, y_cuts } => {
            let xs = cut_list(x_cuts, eta.nx)?;
            let ys = cut_list(y_cuts, eta.ny)?;
            for &j in &ys {
                if eta.row(j).iter().any(|v| *v != 0.0) {
                    return Err(Error::ConfigInvalid(format!(
                        "eta must vanish on the horizontal skeleton line at node row {j}"
                    )));
                }
            }
            let mut s = OneForm::zeros(eta.rect, eta.nx, eta.ny);
            for yw in ys.windows(2) {
                for xw in xs.windows(2) {
                    let cell = sub_grid(eta, xw[0], xw[1], yw[0], yw[1]);
                    mass_check(&cell, tol_quad).map_err(|e| {
                        e.context(format!("skeleton cell x[{}..{}] y[{}..{}]", xw[0], xw[1], yw[0], yw[1]))
                    })?;
                    let cs = vanish(&cell);
                    for j in yw[0]..=yw[1] {
                        for i in xw[0]..=xw[1] {
                            let on_edge = i == xw[0] || i == xw[1] || j == yw[0] || j == yw[1];
                            let (a, b) = if on_edge {
                                (0.0, 0.0)
                            } else {
                                (cs.sx.at(i - xw[0], j - yw[0]), cs.sy.at(i - xw[0], j - yw[0]))
                            };
                            s.sx.set(i, j, a);
                            s.sy.set(i, j, b);
                        }
                    }
                }
            }
            Ok(s)
        }
    }
}

/// `max |d sigma - A_x A_y eta|` over cells.
pub fn discrete_residual(sigma: &OneForm, eta: &Grid2) -> f64 {
    let d = sigma.exterior_derivative();
    let m = cell_means(eta);
    d.iter().zip(&m).fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()))
}

/// `max|sigma| / (max|eta| * diam)`, the constant in the C0 bound.
pub fn primitive_bound_ratio(sigma: &OneForm, eta: &Grid2) -> f64 {
    let scale = eta.max_abs() * eta.rect.diameter();
    if scale == 0.0 {
        0.0
    } else {
        sigma.max_abs() / scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamflow::Point;
    use proptest::prelude::*;

    fn bump(p: Point, c: Point, r: f64) -> f64 {
        let d = ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)).sqrt() / r;
        if d >= 1.0 {
            0.0
        } else {
            (-1.0 / (1.0 - d * d)).exp()
        }
    }

    /// Zero-mass eta vanishing near the boundary: difference of two bumps
    /// balanced by discrete quadrature.
    fn dipole(rect: Rect, n: usize, c1: Point, c2: Point, r: f64) -> Grid2 {
        let b1 = Grid2::from_fn(rect, n, n, |p| bump(p, c1, r));
        let b2 = Grid2::from_fn(rect, n, n, |p| bump(p, c2, r));
        let k = b1.integral() / b2.integral();
        Grid2 {
            data: b1.data.iter().zip(&b2.data).map(|(a, b)| a - k * b).collect(),
            ..b1
        }
    }

    #[test]
    fn zero_eta_gives_zero_sigma() {
        let eta = Grid2::zeros(Rect::unit(), 17, 17);
        for mode in [BoundaryMode::Free, BoundaryMode::VanishNearBoundary] {
            let s = primitive_on_rectangle(&eta, &mode, DEFAULT_TOL_QUAD).unwrap();
            assert_eq!(s.max_abs(), 0.0);
        }
    }

    #[test]
    fn free_mode_constant_density() {
        let eta = Grid2::from_fn(Rect::new(0.0, 2.0, -1.0, 1.0), 33, 21, |_| 0.7);
        let s = primitive_on_rectangle(&eta, &BoundaryMode::Free, DEFAULT_TOL_QUAD).unwrap();
        assert!(discrete_residual(&s, &eta) < 1e-12);
        for c in s.exterior_derivative() {
            assert!((c - 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn vanish_mode_is_exact_and_zero_on_boundary() {
        let rect = Rect::new(-1.0, 1.0, 0.0, 1.5);
        let eta = dipole(rect, 65, [-0.3, 0.6], [0.4, 0.9], 0.3);
        let s = primitive_on_rectangle(&eta, &BoundaryMode::VanishNearBoundary, DEFAULT_TOL_QUAD).unwrap();
        assert!(discrete_residual(&s, &eta) < 1e-12);
        for k in 0..65 {
            for (i, j) in [(0, k), (64, k), (k, 0), (k, 64), (2, k), (k, 3)] {
                assert_eq!(s.sx.at(i, j), 0.0);
                assert_eq!(s.sy.at(i, j), 0.0);
            }
        }
        assert!(primitive_bound_ratio(&s, &eta) < 4.0);
    }

    #[test]
    fn vanish_mode_rejects_mass() {
        let eta = Grid2::from_fn(Rect::unit(), 17, 17, |p| bump(p, [0.5, 0.5], 0.3));
        let r = primitive_on_rectangle(&eta, &BoundaryMode::VanishNearBoundary, DEFAULT_TOL_QUAD);
        assert!(matches!(r, Err(Error::NonzeroTotalMass { .. })));
    }

    #[test]
    fn skeleton_mode_vanishes_on_cells() {
        let rect = Rect::unit();
        let n = 65;
        // one zero-mass dipole per cell of a 2x2 partition at node 32
        let mut eta = Grid2::zeros(rect, n, n);
        for (c1, c2) in [
            ([0.2, 0.2], [0.3, 0.3]),
            ([0.7, 0.2], [0.8, 0.3]),
            ([0.2, 0.7], [0.3, 0.8]),
            ([0.7, 0.7], [0.8, 0.8]),
        ] {
            let d = dipole(rect, n, c1, c2, 0.12);
            for (e, v) in eta.data.iter_mut().zip(&d.data) {
                *e += v;
            }
        }
        let mode = BoundaryMode::VanishOnSkeleton {
            x_cuts: vec![32],
            y_cuts: vec![32],
        };
        let s = primitive_on_rectangle(&eta, &mode, DEFAULT_TOL_QUAD).unwrap();
        assert!(discrete_residual(&s, &eta) < 1e-12);
        for k in 0..n {
            for (i, j) in [(32, k), (k, 32), (0, k), (k, n - 1)] {
                assert_eq!((s.sx.at(i, j), s.sy.at(i, j)), (0.0, 0.0));
            }
        }
        let lopsided = Grid2::from_fn(rect, n, n, |p| bump(p, [0.25, 0.25], 0.1) - bump(p, [0.75, 0.75], 0.1));
        let r = primitive_on_rectangle(&lopsided, &mode, DEFAULT_TOL_QUAD);
        assert!(matches!(r.unwrap_err().root(), Error::NonzeroTotalMass { .. }));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn random_zero_mass_eta_residual(
            coeffs in proptest::collection::vec(-1.0f64..1.0, 6),
            n in 8usize..40,
        ) {
            let rect = Rect::new(0.0, 1.0, 0.0, 0.8);
            let raw = Grid2::from_fn(rect, n, n, |p| {
                let s = (std::f64::consts::PI * p[0]).sin() * (std::f64::consts::PI * p[1] / 0.8).sin();
                s * s * (coeffs[0] + coeffs[1] * p[0] + coeffs[2] * p[1]
                    + coeffs[3] * (5.0 * p[0] * p[1]).cos() + coeffs[4] * p[0] * p[0] + coeffs[5])
            });
            let w = Grid2::from_fn(rect, n, n, |p| {
                let s = (std::f64::consts::PI * p[0]).sin() * (std::f64::consts::PI * p[1] / 0.8).sin();
                s * s
            });
            let k = raw.integral() / w.integral();
            let eta = Grid2 { data: raw.data.iter().zip(&w.data).map(|(a, b)| a - k * b).collect(), ..raw };
            let s = primitive_on_rectangle(&eta, &BoundaryMode::VanishNearBoundary, DEFAULT_TOL_QUAD).unwrap();
            prop_assert!(discrete_residual(&s, &eta) < DEFAULT_TOL_DISC);
            let f = primitive_on_rectangle(&eta, &BoundaryMode::Free, DEFAULT_TOL_QUAD).unwrap();
            prop_assert!(discrete_residual(&f, &eta) < DEFAULT_TOL_DISC);
        }
    }
}
