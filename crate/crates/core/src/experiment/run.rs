//! The seven presets. Each turns a validated config into result rows,
//! embedded acceptance predicates and, for the demos, grid artifacts.
//!
//! All randomness comes from the config seed through indexed ChaCha
//! streams, and every parallel sweep collects in index order, so the rows
//! do not depend on the worker count.

use std::f64::consts::{PI, TAU};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fgword::{defect_estimate, defect_exhaustive, CountingQM, Word};
use crate::ggqm::{
    cocycle_residuals, gg_estimate_many, richardson, scale_probe, Estimator, GGEstimate, GGSettings, Sampling,
    ScaleProbeConfig,
};
use crate::hamflow::{calabi, c0_distance, Domain, FlowMap, Hamiltonian, Method, Point, DEFAULT_N_C0, DEFAULT_N_QUAD};
use crate::moserfrag::{
    curve_extend, disc_fragment, moser_equalize, pullback_residual, BoundaryMode, FragmentSettings, GridForm,
    MoserSettings, Rect,
};
use crate::moserfrag::moser::observed_orders;

use super::config::{Experiment, ExperimentConfig, Params};
use super::report::{num, Artifact, Predicate, RunReport, Table};

struct Run {
    table: Table,
    predicates: Vec<Predicate>,
    notes: Vec<String>,
    timings: Vec<(String, f64)>,
    artifacts: Vec<Artifact>,
    clock: Instant,
}

impl Run {
    fn new(columns: &[&str]) -> Run {
        Run {
            table: Table::new(columns),
            predicates: Vec::new(),
            notes: Vec::new(),
            timings: Vec::new(),
            artifacts: Vec::new(),
            clock: Instant::now(),
        }
    }

    fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.predicates.push(Predicate {
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }

    fn lap(&mut self, stage: impl Into<String>) {
        let now = Instant::now();
        self.timings.push((stage.into(), (now - self.clock).as_secs_f64()));
        self.clock = now;
    }
}

/// Seed of substream `index` of `seed`.
pub fn substream_seed(seed: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng.random()
}

/// Runs the configured preset. Module errors come back wrapped with the
/// experiment name; failed predicates are reported, not raised.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    let run = match cfg.experiment {
        Experiment::CalabiDiscontinuity => calabi_discontinuity(cfg),
        Experiment::GgProposition => gg_proposition(cfg),
        Experiment::ContinuityProbe => continuity_probe(cfg),
        Experiment::CocycleAudit => cocycle_audit(cfg),
        Experiment::FragmentDemo => fragment_demo(cfg),
        Experiment::MoserDemo => moser_demo(cfg),
        Experiment::CurveDemo => curve_demo(cfg),
    }
    .map_err(|e| e.context(format!("experiment {}", cfg.experiment)))?;
    Ok(RunReport {
        experiment: cfg.experiment,
        config_hash: cfg.hash.clone(),
        seed: cfg.seed,
        version: env!("CARGO_PKG_VERSION"),
        table: run.table,
        predicates: run.predicates,
        notes: run.notes,
        timings: run.timings,
        artifacts: run.artifacts,
    })
}

/// Bump of radius `1/i` and mass 1 centered on the torus.
pub fn shrinking_bump(i: u32) -> Result<Hamiltonian> {
    Hamiltonian::bump(Domain::Torus, [0.5, 0.5], 1.0 / i as f64, 1.0)
}

fn sorted_i(p: &Params) -> Vec<u32> {
    let mut v = p.i_values.clone().unwrap_or_else(|| vec![2, 4, 8, 16]);
    v.sort_unstable();
    v.dedup();
    v
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

fn calabi_discontinuity(cfg: &ExperimentConfig) -> Result<Run> {
    let p = &cfg.params;
    let n_quad = p.n_quad.unwrap_or(DEFAULT_N_QUAD);
    let n_c0 = p.n_c0.unwrap_or(DEFAULT_N_C0);
    let is = sorted_i(p);
    let mut run = Run::new(&["i", "radius", "mass", "calabi", "calabi_error", "c0_distance", "c0_bound"]);
    let rows = is
        .par_iter()
        .map(|&i| {
            let f = shrinking_bump(i)?;
            let cal = calabi(&f, n_quad)?;
            let flow = GGSettings::default().flow_for(&f);
            // the closed-form radial flow is exact in one step
            let steps = if flow.method == Method::ExactRadial { 1 } else { flow.steps_for(&f, 1.0) };
            let map = FlowMap::new(f.clone(), 0.0, 1.0, steps).with_settings(flow);
            Ok((i, cal, c0_distance(&map, None, n_c0)?))
        })
        .collect::<Result<Vec<_>>>()?;
    run.lap("calabi and c0 sweep");
    let tol = cfg.tolerances.tol_cal;
    for &(i, cal, c0) in &rows {
        let radius = 1.0 / i as f64;
        run.table.push(vec![
            i.to_string(),
            num(radius),
            num(1.0),
            num(cal),
            num(cal - 1.0),
            num(c0),
            num(2.0 * radius),
        ]);
        run.check(format!("Cal(f_{i}) = 1"), (cal - 1.0).abs() <= tol, format!("|{cal} - 1| <= {tol}"));
        run.check(format!("d(f_{i}, id) <= 2/i"), c0 <= 2.0 * radius, format!("{c0} <= {}", 2.0 * radius));
    }
    let c0s: Vec<f64> = rows.iter().map(|r| r.2).collect();
    run.check("c0 distance strictly decreasing", strictly_decreasing(&c0s), format!("{c0s:?}"));
    Ok(run)
}

fn settings_from(p: &Params, sampling: Sampling, estimator: Estimator) -> GGSettings {
    GGSettings::default()
        .with_sampling(p.sampling.unwrap_or(sampling))
        .with_estimator(p.estimator.unwrap_or(estimator))
}

fn powers(p: &Params, default: &[u32]) -> Vec<u32> {
    let mut v = p.p_schedule.clone().unwrap_or_else(|| default.to_vec());
    v.sort_unstable();
    v.dedup();
    v
}

fn commutator_value(mu: &CountingQM) -> f64 {
    mu.eval(&Word::commutator())
}

fn z_score(value: f64, target: f64, se: f64) -> f64 {
    if se > 0.0 {
        (value - target) / se
    } else if value == target {
        0.0
    } else {
        f64::INFINITY.copysign(value - target)
    }
}

/// `|value - target| <= max(rel |target|, z se)`.
fn matches_target(value: f64, se: f64, target: f64, rel: f64, z: f64) -> bool {
    (value - target).abs() <= (rel * target.abs()).max(z * se)
}

const GG_COLUMNS: [&str; 13] = [
    "hamiltonian",
    "kernel",
    "kind",
    "p",
    "calabi",
    "mu_commutator",
    "scale",
    "estimate",
    "std_error",
    "target",
    "z_score",
    "n_samples",
    "n_rejected",
];

#[allow(clippy::too_many_arguments)]
fn gg_row(
    ham: &str,
    kernel: &str,
    kind: &str,
    p: u32,
    cal: f64,
    mu_c: f64,
    scale: f64,
    value: f64,
    se: f64,
    n: usize,
    rejected: usize,
) -> Vec<String> {
    let target = 2.0 * mu_c * cal;
    vec![
        ham.into(),
        kernel.into(),
        kind.into(),
        p.to_string(),
        num(cal),
        num(mu_c),
        num(scale),
        num(value),
        num(se),
        num(target),
        num(z_score(value, target, se)),
        n.to_string(),
        rejected.to_string(),
    ]
}

fn gg_proposition(cfg: &ExperimentConfig) -> Result<Run> {
    let p = &cfg.params;
    let tol = &cfg.tolerances;
    let ps = powers(p, &[1, 2, 4, 8, 16]);
    let n = p.n_samples.unwrap_or(100_000);
    let n_quad = p.n_quad.unwrap_or(DEFAULT_N_QUAD);
    let settings = settings_from(p, Sampling::Uniform, Estimator::Plain);
    let kernels: Vec<&CountingQM> = cfg.kernels.iter().collect();
    let mut run = Run::new(&GG_COLUMNS);
    for (hi, (name, f)) in cfg.hamiltonians.iter().enumerate() {
        let cal = calabi(f, n_quad)?;
        let seed = substream_seed(cfg.seed, hi as u64);
        let mut by_p: Vec<Vec<GGEstimate>> = Vec::with_capacity(ps.len());
        for &pw in &ps {
            by_p.push(gg_estimate_many(&kernels, f, pw, n, seed, &settings).map_err(|e| e.context(name.clone()))?);
            run.lap(format!("{name} p={pw}"));
        }
        for (ki, mu) in kernels.iter().enumerate() {
            let mu_c = commutator_value(mu);
            for est in by_p.iter().map(|v| &v[ki]) {
                run.table.push(gg_row(
                    name,
                    &mu.name,
                    "raw",
                    est.p,
                    cal,
                    mu_c,
                    1.0,
                    est.value,
                    est.std_error,
                    est.n_samples,
                    est.n_rejected,
                ));
                let rate = est.rejection_rate();
                run.check(
                    format!("{name}/{} p={} rejection rate", mu.name, est.p),
                    rate < tol.max_rejection_rate,
                    format!("{rate} < {}", tol.max_rejection_rate),
                );
            }
            let hi = &by_p[ps.len() - 1][ki];
            if let Some(lo) = by_p.iter().map(|v| &v[ki]).find(|e| 2 * e.p == hi.p) {
                let (v, se) = richardson(lo, hi);
                run.table.push(gg_row(name, &mu.name, "richardson", hi.p, cal, mu_c, 1.0, v, se, n, 0));
            }
            let target = 2.0 * mu_c * cal;
            run.check(
                format!("{name}/{} u~ = 2 mu([a,b]) Cal at p={}", mu.name, hi.p),
                matches_target(hi.value, hi.std_error, target, tol.rel_tol, tol.z_max),
                format!(
                    "|{} - {target}| <= max({} |target|, {} * {})",
                    hi.value, tol.rel_tol, tol.z_max, hi.std_error
                ),
            );
        }
    }
    Ok(run)
}

const PROBE_COLUMNS: [&str; 14] = [
    "section",
    "label",
    "kernel",
    "area",
    "calabi",
    "mu_commutator",
    "scale",
    "p",
    "estimate",
    "std_error",
    "target",
    "z_score",
    "n_samples",
    "n_rejected",
];

#[allow(clippy::too_many_arguments)]
fn probe_row(section: &str, label: &str, mu: &CountingQM, area: f64, cal: f64, scale: f64, est: &GGEstimate) -> Vec<String> {
    let mu_c = commutator_value(mu);
    let target = 2.0 * mu_c * cal;
    vec![
        section.into(),
        label.into(),
        mu.name.clone(),
        num(area),
        num(cal),
        num(mu_c),
        num(scale),
        est.p.to_string(),
        num(est.value),
        num(est.std_error),
        num(target),
        num(z_score(est.value, target, est.std_error)),
        est.n_samples.to_string(),
        est.n_rejected.to_string(),
    ]
}

fn continuity_probe(cfg: &ExperimentConfig) -> Result<Run> {
    let p = &cfg.params;
    let tol = &cfg.tolerances;
    let pw = *powers(p, &[16]).last().expect("nonempty schedule");
    let n = p.n_samples.unwrap_or(100_000);
    let n_quad = p.n_quad.unwrap_or(DEFAULT_N_QUAD);
    let settings = settings_from(p, Sampling::Uniform, Estimator::Increment);
    let kernels: Vec<&CountingQM> = cfg.kernels.iter().collect();
    let vanishing: Vec<&CountingQM> = kernels.iter().copied().filter(|k| commutator_value(k) == 0.0).collect();
    let mut run = Run::new(&PROBE_COLUMNS);
    let check_est = |run: &mut Run, label: String, mu: &CountingQM, cal: f64, est: &GGEstimate| {
        let target = 2.0 * commutator_value(mu) * cal;
        run.check(
            label,
            matches_target(est.value, est.std_error, target, tol.rel_tol, tol.z_max),
            format!("estimate {} +- {}, target {target}", est.value, est.std_error),
        );
    };

    // Fixed Hamiltonians: vanishing kernels give 0, the others 2 mu([a,b]) Cal.
    for (hi, (name, f)) in cfg.hamiltonians.iter().enumerate() {
        let cal = calabi(f, n_quad)?;
        let area = f.support().area(f.domain);
        let ests = gg_estimate_many(&kernels, f, pw, n, substream_seed(cfg.seed, hi as u64), &settings)
            .map_err(|e| e.context(name.clone()))?;
        for (mu, est) in kernels.iter().zip(&ests) {
            run.table.push(probe_row("fixed", name, mu, area, cal, 1.0, est));
            check_est(&mut run, format!("fixed {name}/{}", mu.name), mu, cal, est);
        }
        run.lap(format!("fixed {name}"));
    }

    // Random bumps of each support area, vanishing kernels only.
    let areas = p.areas.clone().unwrap_or_else(|| vec![0.01, 0.03, 0.07, 0.13]);
    let probe_cfg = ScaleProbeConfig {
        trials: p.trials.unwrap_or(2),
        n_samples: p.probe_samples.unwrap_or(20_000),
        p: pw,
        seed: substream_seed(cfg.seed, 1 << 20),
        calabi_range: (0.002, 0.01),
    };
    for mu in &vanishing {
        let probe = scale_probe(mu, &areas, &probe_cfg, &settings)?;
        for row in &probe.rows {
            run.table
                .push(probe_row("area", &format!("trial-{}", row.trial), mu, row.area, row.calabi, 1.0, &row.estimate));
            let e = &row.estimate;
            run.check(
                format!("area {} trial {} {} vanishes", row.area, row.trial, mu.name),
                e.value.abs() <= tol.z_max * e.std_error,
                format!("|{}| <= {} * {}", e.value, tol.z_max, e.std_error),
            );
        }
        run.notes.push(format!(
            "{}: largest probed area with all estimates within 3 se of 0: {:?}",
            mu.name, probe.estimated_scale
        ));
        run.lap(format!("area probe {}", mu.name));
    }

    // The shrinking sequence, through the time-s subgroup. The peak angular
    // speed of a mass-1 bump grows like r^-4, so s shrinks like r^4: every
    // phi^s then turns its disc by the same profile and costs the same.
    let s0 = p.subgroup_scale.unwrap_or(0.05);
    let n_shrink = p.shrink_samples.unwrap_or(20_000);
    let shrink_settings = settings_from(p, Sampling::SupportStratified, Estimator::Increment);
    for i in sorted_i(p) {
        let f = shrinking_bump(i)?;
        let cal = calabi(&f, n_quad)?;
        let area = f.support().area(f.domain);
        let s = s0 * (2.0 / i as f64).powi(4);
        let seed = substream_seed(cfg.seed, (1 << 21) + i as u64);
        let ests = gg_estimate_many(&kernels, &f.clone().scaled(s), pw, n_shrink, seed, &shrink_settings)?;
        for (mu, est) in kernels.iter().zip(ests) {
            let scaled = GGEstimate {
                value: est.value / s,
                std_error: est.std_error / s,
                rejection_bias_bound: est.rejection_bias_bound / s,
                ..est
            };
            run.table.push(probe_row("shrinking", &format!("i={i}"), mu, area, cal, s, &scaled));
            check_est(&mut run, format!("shrinking i={i} {}", mu.name), mu, cal, &scaled);
        }
        run.lap(format!("shrinking i={i}"));
    }
    Ok(run)
}

fn random_bump<R: Rng>(rng: &mut R) -> Result<(Hamiltonian, Point, f64)> {
    let center = [rng.random::<f64>(), rng.random::<f64>()];
    let radius = rng.random_range(0.1..0.3);
    let mass = rng.random_range(0.01..0.05) * if rng.random::<bool>() { 1.0 } else { -1.0 };
    Ok((Hamiltonian::bump(Domain::Torus, center, radius, mass)?, center, radius))
}

/// Uniform point of the disc, wrapped to the torus.
fn point_in<R: Rng>(rng: &mut R, center: Point, radius: f64) -> Point {
    let r = radius * rng.random::<f64>().sqrt();
    let th = TAU * rng.random::<f64>();
    [(center[0] + r * th.cos()).rem_euclid(1.0), (center[1] + r * th.sin()).rem_euclid(1.0)]
}

fn cocycle_audit(cfg: &ExperimentConfig) -> Result<Run> {
    let p = &cfg.params;
    let pairs = p.pairs.unwrap_or(1000);
    let budget = p.defect_budget.unwrap_or(20_000);
    let settings = GGSettings::default();
    let kernels: Vec<&CountingQM> = cfg.kernels.iter().collect();
    let mut run = Run::new(&[
        "trial",
        "kernel",
        "residual",
        "defect",
        "closure_slack",
        "u_fg",
        "u_g",
        "u_f_at_g",
        "redraws",
    ]);
    // Empirical defect: random long pairs plus every pair of words up to length 5.
    let defects: Vec<f64> = kernels
        .iter()
        .map(|mu| defect_estimate(mu, budget, 12, cfg.seed).max(defect_exhaustive(mu, 5)))
        .collect();
    run.lap("defect estimates");
    let base = substream_seed(cfg.seed, 3);
    let results = (0..pairs)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(base);
            rng.set_stream(t as u64);
            let (f, cf, rf) = random_bump(&mut rng)?;
            let (g, cg, rg) = random_bump(&mut rng)?;
            for redraws in 0..settings.max_redraws {
                // one point in each support so that most loops are nontrivial
                let x = point_in(&mut rng, cg, rg);
                let y = point_in(&mut rng, cf, rf);
                match cocycle_residuals(&kernels, &f, &g, x, y, &settings) {
                    Ok(r) => return Ok((r, redraws)),
                    Err(e) if matches!(e.root(), Error::NearPuncture { .. } | Error::TangentialCrossing) => {}
                    Err(e) => return Err(e),
                }
            }
            Err(Error::ExcessiveRejection {
                rate: 1.0,
                limit: settings.max_rejection_rate,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    run.lap("cocycle residuals");
    let mut ok = vec![0usize; kernels.len()];
    let mut worst = vec![0.0f64; kernels.len()];
    for (t, (res, redraws)) in results.iter().enumerate() {
        for (k, r) in res.iter().enumerate() {
            run.table.push(vec![
                t.to_string(),
                kernels[k].name.clone(),
                num(r.residual),
                num(defects[k]),
                num(r.closure_slack),
                num(r.u_fg),
                num(r.u_g),
                num(r.u_f_at_g),
                redraws.to_string(),
            ]);
            if r.residual <= defects[k] + r.closure_slack {
                ok[k] += 1;
            }
            worst[k] = worst[k].max(r.residual);
        }
    }
    for (k, mu) in kernels.iter().enumerate() {
        run.check(
            format!("{} residual <= defect + slack", mu.name),
            ok[k] == pairs,
            format!("{}/{pairs} trials, worst residual {}, defect {}", ok[k], worst[k], defects[k]),
        );
    }
    Ok(run)
}

fn fragment_demo(cfg: &ExperimentConfig) -> Result<Run> {
    let p = &cfg.params;
    let tol = cfg.tolerances.tol_frag;
    let eps_list = p.eps.clone().unwrap_or_else(|| vec![0.05]);
    let settings = FragmentSettings {
        grid_n: p.grid_n.unwrap_or(FragmentSettings::default().grid_n),
        ..FragmentSettings::default()
    };
    let write = p.write_grids.unwrap_or(true);
    let mut run = Run::new(&[
        "hamiltonian",
        "eps",
        "calabi",
        "displacement",
        "kappa",
        "c_max",
        "residual",
        "h1_error",
        "theta_in_strip",
        "plus_in_half_disc",
        "minus_in_half_disc",
        "commute",
    ]);
    for (name, f) in &cfg.hamiltonians {
        for &eps in &eps_list {
            let d = disc_fragment(f, eps, &settings).map_err(|e| e.context(name.clone()))?;
            run.table.push(vec![
                name.clone(),
                num(eps),
                num(calabi(f, 256)?),
                num(d.displacement),
                num(d.kappa),
                num(d.c_max),
                num(d.residual),
                num(d.h1_error),
                d.theta_in_strip.to_string(),
                d.plus_in_half_disc.to_string(),
                d.minus_in_half_disc.to_string(),
                d.commute.to_string(),
            ]);
            run.check(
                format!("{name} eps={eps} supports"),
                d.supports_ok(),
                format!(
                    "theta in strip {}, phi+ in upper half {}, phi- in lower half {}",
                    d.theta_in_strip, d.plus_in_half_disc, d.minus_in_half_disc
                ),
            );
            run.check(
                format!("{name} eps={eps} composition residual"),
                d.residual <= tol,
                format!("{} <= {tol}", d.residual),
            );
            if write {
                let tag = if eps_list.len() > 1 { format!("{name}-eps{eps}") } else { name.clone() };
                for (part, g) in [("theta", d.theta), ("phi-plus", d.phi_plus), ("phi-minus", d.phi_minus)] {
                    run.artifacts.push(Artifact::Diffeo {
                        name: format!("{tag}-{part}"),
                        diffeo: g,
                    });
                }
            }
            run.lap(format!("{name} eps={eps}"));
        }
    }
    Ok(run)
}

/// Number of cases in the Moser suite.
pub const MOSER_CASES: usize = 10;

fn bump(p: Point, c: Point, r: f64) -> f64 {
    let d2 = ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)) / (r * r);
    if d2 >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - d2)).exp()
    }
}

fn tilted(p: Point) -> f64 {
    1.0 + 0.2 * (3.0 * p[0]).sin() * p[1]
}

fn dipole(p: Point, s: f64) -> f64 {
    s * (bump(p, [0.35, 0.4], 0.25) - bump(p, [0.65, 0.6], 0.25))
}

/// Density of `g_* omega` for `g(x, y) = (x, y + a b(x) b(y))` with
/// `b = sin^2(pi t)`, which fixes the boundary of the unit square.
pub fn pushforward_density<W: Fn(Point) -> f64>(omega: W, a: f64, z: Point) -> f64 {
    let b = |t: f64| (PI * t).sin().powi(2);
    let db = |t: f64| PI * (TAU * t).sin();
    let bx = b(z[0]);
    // invert y + a bx b(y) = z_y by Newton
    let mut y = z[1];
    for _ in 0..50 {
        let r = y + a * bx * b(y) - z[1];
        let step = r / (1.0 + a * bx * db(y));
        y -= step;
        if step.abs() < 1e-15 {
            break;
        }
    }
    omega([z[0], y]) / (1.0 + a * bx * db(y))
}

/// Case `k` of the suite on an `n x n` grid: `(name, omega_1, omega_2, mode)`
/// with `omega_2` rescaled to the discrete mass of `omega_1`.
pub fn moser_case(k: usize, n: usize) -> Result<(String, GridForm, GridForm, BoundaryMode)> {
    let unit = Rect::unit();
    let vanish = BoundaryMode::VanishNearBoundary;
    let (name, rect, w1, w2, mode): (&str, Rect, Box<dyn Fn(Point) -> f64>, Box<dyn Fn(Point) -> f64>, BoundaryMode) =
        match k {
            0 => ("dipole-uniform", unit, Box::new(|_| 1.0), Box::new(|p| 1.0 + dipole(p, 0.2)), vanish),
            1 => ("dipole-tilted", unit, Box::new(tilted), Box::new(|p| tilted(p) + dipole(p, 0.3)), vanish),
            2 => (
                "cosine",
                unit,
                Box::new(|_| 1.0),
                Box::new(|p| 1.0 + 0.3 * (TAU * p[0]).cos() * (TAU * p[1]).cos()),
                vanish,
            ),
            3 => (
                "pushforward-uniform",
                unit,
                Box::new(|_| 1.0),
                Box::new(|p| pushforward_density(|_| 1.0, 0.05, p)),
                vanish,
            ),
            4 => (
                "pushforward-tilted",
                unit,
                Box::new(tilted),
                Box::new(|p| pushforward_density(tilted, 0.1, p)),
                vanish,
            ),
            5 => (
                "ramp-swap",
                unit,
                Box::new(|p| 1.0 + 0.5 * p[0]),
                Box::new(|p| 1.0 + 0.5 * p[1]),
                vanish,
            ),
            6 => (
                "moving-gaussian",
                unit,
                Box::new(|p| 1.0 + 0.4 * (-((p[0] - 0.4).powi(2) + (p[1] - 0.5).powi(2)) / 0.02).exp()),
                Box::new(|p| 1.0 + 0.4 * (-((p[0] - 0.6).powi(2) + (p[1] - 0.45).powi(2)) / 0.02).exp()),
                vanish,
            ),
            7 => (
                "wide-rectangle",
                Rect::new(0.0, 2.0, 0.0, 1.0),
                Box::new(|p| 1.0 + 0.1 * p[0]),
                Box::new(|p| 1.0 + 0.1 * p[0] + 0.25 * (PI * p[0]).sin() * (TAU * p[1]).sin()),
                vanish,
            ),
            8 => {
                let c = (n - 1) / 2;
                if 2 * c != n - 1 {
                    return Err(Error::ConfigInvalid("skeleton case needs an odd node count".into()));
                }
                (
                    "skeleton-cells",
                    unit,
                    Box::new(|_| 1.0),
                    // zero mass on each quarter cell and zero on the lines y = 0, 1/2, 1
                    Box::new(|p| 1.0 + 3.0 * (2.0 * TAU * p[0]).sin() * p[1] * (p[1] - 0.5) * (p[1] - 1.0)),
                    BoundaryMode::VanishOnSkeleton {
                        x_cuts: vec![c],
                        y_cuts: vec![c],
                    },
                )
            }
            9 => (
                "strong-dipole",
                unit,
                Box::new(|p| 0.8 + 0.4 * p[0] * p[1]),
                Box::new(|p| 0.8 + 0.4 * p[0] * p[1] + dipole(p, 0.5)),
                vanish,
            ),
            _ => return Err(Error::ConfigInvalid(format!("no Moser case {k}"))),
        };
    let omega1 = GridForm::from_fn(rect, n, n, w1)?;
    let raw = GridForm::from_fn(rect, n, n, w2)?;
    let scale = omega1.total() / raw.total();
    let omega2 = if matches!(mode, BoundaryMode::VanishOnSkeleton { .. }) {
        raw
    } else {
        GridForm::new(crate::moserfrag::Grid2 {
            data: raw.density.data.iter().map(|v| v * scale).collect(),
            ..raw.density.clone()
        })?
    };
    Ok((name.to_string(), omega1, omega2, mode))
}

/// The `dipole-tilted` pair with perturbation amplitude `s`.
pub fn moser_scaled_pair(n: usize, s: f64) -> Result<(GridForm, GridForm)> {
    let rect = Rect::unit();
    Ok((
        GridForm::from_fn(rect, n, n, tilted)?,
        GridForm::from_fn(rect, n, n, |p| tilted(p) + dipole(p, s))?,
    ))
}

fn moser_demo(cfg: &ExperimentConfig) -> Result<Run> {
    let p = &cfg.params;
    let tol = cfg.tolerances.tol_pullback;
    let n = p.grid_n.unwrap_or(129);
    let settings = MoserSettings::default();
    let mut run = Run::new(&[
        "section",
        "case",
        "n",
        "perturbation",
        "residual",
        "c0_norm",
        "roundtrip",
        "min_jacobian",
        "mass_defect",
    ]);
    let push = |run: &mut Run, section: &str, case: &str, n: usize, s: f64, res: f64, r: &crate::moserfrag::MoserResult| {
        run.table.push(vec![
            section.into(),
            case.into(),
            n.to_string(),
            num(s),
            num(res),
            num(r.diffeo.c0_norm()),
            num(r.diffeo.roundtrip_error()),
            num(r.diffeo.min_jacobian()),
            num(r.mass_defect),
        ]);
    };
    let cases = (0..MOSER_CASES)
        .into_par_iter()
        .map(|k| {
            let (name, w1, w2, mode) = moser_case(k, n)?;
            let r = moser_equalize(&w1, &w2, &mode, &settings).map_err(|e| e.context(name.clone()))?;
            let res = pullback_residual(&r.diffeo, &w1, &w2);
            Ok((name, w1, w2, r, res))
        })
        .collect::<Result<Vec<_>>>()?;
    run.lap("suite");
    for (name, w1, w2, r, res) in cases {
        push(&mut run, "suite", &name, n, f64::NAN, res, &r);
        run.check(format!("{name} pullback residual"), res <= tol, format!("{res} <= {tol}"));
        run.check(format!("{name} orientation"), r.diffeo.min_jacobian() > 0.0, "min Jacobian > 0");
        if name == "dipole-tilted" && p.write_grids.unwrap_or(true) {
            run.artifacts.push(Artifact::Form { name: "omega1".into(), form: w1 });
            run.artifacts.push(Artifact::Form { name: "omega2".into(), form: w2 });
            run.artifacts.push(Artifact::Diffeo { name: "moser-map".into(), diffeo: r.diffeo });
        }
    }

    let levels = p.grid_levels.clone().unwrap_or_else(|| vec![65, 129, 257]);
    let mut residuals = Vec::with_capacity(levels.len());
    for &m in &levels {
        let (w1, w2) = moser_scaled_pair(m, 0.3)?;
        let r = moser_equalize(&w1, &w2, &BoundaryMode::VanishNearBoundary, &settings)?;
        let res = pullback_residual(&r.diffeo, &w1, &w2);
        push(&mut run, "order", "dipole-tilted", m, 0.3, res, &r);
        residuals.push(res);
    }
    run.lap("grid doubling");
    let orders = observed_orders(&residuals);
    let min_order = orders.iter().copied().fold(f64::INFINITY, f64::min);
    run.notes.push(format!("observed orders under grid doubling: {orders:?}"));
    run.check(
        "residual improves at interpolation order",
        strictly_decreasing(&residuals) && min_order >= 2.5,
        format!("residuals {residuals:?}, orders {orders:?}, need >= 2.5"),
    );

    let amps = p.perturbations.clone().unwrap_or_else(|| vec![0.2, 0.1, 0.05, 0.025, 0.0125]);
    let mut norms = Vec::with_capacity(amps.len());
    for &s in &amps {
        let (w1, w2) = moser_scaled_pair(n, s)?;
        let r = moser_equalize(&w1, &w2, &BoundaryMode::VanishNearBoundary, &settings)?;
        let res = pullback_residual(&r.diffeo, &w1, &w2);
        norms.push(r.diffeo.c0_norm());
        push(&mut run, "shrinking", "dipole-tilted", n, s, res, &r);
    }
    run.lap("shrinking perturbations");
    let ratios: Vec<f64> = norms.iter().zip(&amps).map(|(c, s)| c / s).collect();
    run.notes.push(format!("c0 norm / perturbation: {ratios:?}"));
    run.check(
        "c0 norm decreases with the perturbation",
        strictly_decreasing(&norms),
        format!("amplitudes {amps:?}, c0 norms {norms:?}"),
    );
    Ok(run)
}

/// Curve `k` of the perturbed family: a random smooth periodic graph with
/// jittered vertices and `max |y| = amplitude * eps`, amplitude in
/// `[0.3, 0.9]` drawn with the shape so the family scales with `eps`.
pub fn perturbed_curve(seed: u64, k: usize, eps: f64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k as u64);
    let nv = 96 + rng.random_range(0..64usize);
    let modes: Vec<(f64, f64)> = (1..=4)
        .map(|m| (rng.random_range(-1.0..1.0) / m as f64, rng.random_range(0.0..TAU)))
        .collect();
    let amplitude = rng.random_range(0.3..0.9);
    let xs: Vec<f64> = (0..nv)
        .map(|i| (i as f64 + rng.random_range(-0.3..0.3)).rem_euclid(nv as f64) / nv as f64)
        .collect();
    let shape = |x: f64| {
        modes
            .iter()
            .enumerate()
            .map(|(m, (a, ph))| a * (TAU * (m + 1) as f64 * x + ph).sin())
            .sum::<f64>()
    };
    let peak = xs.iter().map(|&x| shape(x).abs()).fold(0.0, f64::max).max(1e-12);
    xs.iter().map(|&x| [x, amplitude * eps * shape(x) / peak]).collect()
}

fn curve_demo(cfg: &ExperimentConfig) -> Result<Run> {
    let p = &cfg.params;
    let tol = cfg.tolerances.tol_curve;
    let eps_list = p.eps.clone().unwrap_or_else(|| vec![0.01, 0.02, 0.05]);
    let curves = p.curves.unwrap_or(10);
    let n = p.grid_n.unwrap_or(65);
    let seed = substream_seed(cfg.seed, 5);
    let mut run = Run::new(&[
        "curve",
        "eps",
        "vertices",
        "rise",
        "vertex_residual",
        "c0_norm",
        "c_prime",
        "boundary_identity",
    ]);
    let jobs: Vec<(usize, f64)> = (0..curves).flat_map(|k| eps_list.iter().map(move |&e| (k, e))).collect();
    let results = jobs
        .par_iter()
        .map(|&(k, eps)| {
            let v = perturbed_curve(seed, k, eps);
            let rise = v.iter().map(|q| q[1].abs()).fold(0.0, f64::max);
            let ext = curve_extend(&v, eps, n).map_err(|e| e.context(format!("curve {k} eps {eps}")))?;
            Ok((k, eps, v.len(), rise, ext))
        })
        .collect::<Result<Vec<_>>>()?;
    run.lap("extensions");
    let mut c_prime = 0.0f64;
    for (k, eps, nv, rise, ext) in &results {
        run.table.push(vec![
            k.to_string(),
            num(*eps),
            nv.to_string(),
            num(*rise),
            num(ext.vertex_residual),
            num(ext.diffeo.c0_norm()),
            num(ext.c_prime),
            ext.boundary_identity.to_string(),
        ]);
        run.check(
            format!("curve {k} eps={eps} psi(L) = target"),
            ext.vertex_residual <= tol,
            format!("{} <= {tol}", ext.vertex_residual),
        );
        run.check(
            format!("curve {k} eps={eps} identity near the boundary"),
            ext.boundary_identity,
            "psi = id on |y| >= 0.95",
        );
        c_prime = c_prime.max(ext.c_prime);
    }
    for &eps in &eps_list {
        let m = results.iter().filter(|r| r.1 == eps).map(|r| r.4.c_prime).fold(0.0, f64::max);
        run.notes.push(format!("eps = {eps}: max |psi - id| / eps = {m}"));
    }
    run.notes.push(format!("C' = {c_prime}"));
    run.check("C' finite across the suite", c_prime.is_finite(), format!("C' = {c_prime}"));
    Ok(run)
}
