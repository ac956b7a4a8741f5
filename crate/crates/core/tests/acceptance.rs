//! Acceptance suite. Each criterion runs at its stated tolerance and prints
//! one PASS/FAIL line; numbers on the command line select a subset, e.g.
//! `cargo test --test acceptance -- 5 6`.
//!
//! Expected values come from oracles written here: midpoint quadrature of
//! the Hamiltonian, the closed-form radial rotation, a hand-rolled RK4 flow,
//! string-based subword counting and fourth-order differences of node maps.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use symqm::experiment::run::{moser_case, moser_scaled_pair, perturbed_curve, MOSER_CASES};
use symqm::experiment::{run_experiment, substream_seed, Experiment, ExperimentConfig, RunReport, Table};
use symqm::fgword::{count_subwords, kernel_library, CountingQM, Word};
use symqm::hamflow::{Domain, Hamiltonian, Point};
use symqm::moserfrag::curve::CurveExtender;
use symqm::moserfrag::fragment::Fragmenter;
use symqm::moserfrag::{disc_fragment, moser_equalize, BoundaryMode, FragmentSettings, GridDiffeo, GridForm, MoserSettings};
use symqm::punctured::{word_of_loop, CutSystem, PuncturedLoop, DEFAULT_DELTA_PUNCT};
use symqm::Result;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Result<Outcome> {
    Ok(Outcome {
        passed,
        detail: detail.into(),
    })
}

type Criterion = (u32, &'static str, fn() -> Result<Outcome>);

const CRITERIA: &[Criterion] = &[
    (1, "calabi discontinuity", calabi_discontinuity),
    (2, "averaged qm equals 2 mu([a,b]) Cal", gg_calabi_identity),
    (3, "vanishing-kernel continuity probe", continuity_probe),
    (4, "cocycle audit", cocycle_audit),
    (5, "free-group exactness", free_group_exactness),
    (6, "winding correctness", winding),
    (7, "moser equalization", moser),
    (8, "disc fragmentation", fragmentation),
    (9, "curve extension", curve_extension),
    (10, "reproducibility", reproducibility),
];

fn config(name: &str) -> Result<ExperimentConfig> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(format!("{name}.toml"));
    ExperimentConfig::load(&path)
}

fn cell<'a>(t: &'a Table, row: &'a [String], col: &str) -> &'a str {
    &row[t.column(col).unwrap_or_else(|| panic!("no column {col}"))]
}

fn cell_f(t: &Table, row: &[String], col: &str) -> f64 {
    cell(t, row, col).parse().unwrap_or(f64::NAN)
}

fn torus_dist(a: Point, b: Point) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1]];
    (d[0] - d[0].round()).hypot(d[1] - d[1].round())
}

/// Midpoint rule for `int F(., 0)` over the unit square.
fn quad_integral(f: &Hamiltonian, n: usize) -> f64 {
    let h = 1.0 / n as f64;
    (0..n)
        .into_par_iter()
        .map(|j| {
            let y = (j as f64 + 0.5) * h;
            (0..n).map(|i| f.value([(i as f64 + 0.5) * h, y], 0.0)).sum::<f64>()
        })
        .sum::<f64>()
        * h
        * h
}

/// Sup displacement of the time-one map of a radial bump: the flow turns
/// the circle of radius `r` by `phi'(r) / r`.
fn radial_c0(f: &Hamiltonian, c: Point, radius: f64) -> f64 {
    let phi = |r: f64| f.value([c[0] + r, c[1]], 0.0);
    let mut best = 0.0f64;
    for k in 1..2000 {
        let r = radius * k as f64 / 2000.0;
        let h = 1e-6 * radius;
        let turn = (phi(r + h) - phi(r - h)) / (2.0 * h) / r;
        for m in 0..64 {
            let a = TAU * m as f64 / 64.0;
            let p = [c[0] + r * a.cos(), c[1] + r * a.sin()];
            let q = [c[0] + r * (a + turn).cos(), c[1] + r * (a + turn).sin()];
            best = best.max(torus_dist(p, q));
        }
    }
    best
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

fn calabi_discontinuity() -> Result<Outcome> {
    let cfg = config("calabi-discontinuity")?;
    let start = Instant::now();
    let report = run_experiment(&cfg)?;
    let secs = start.elapsed().as_secs_f64();
    let t = &report.table;
    let mut ok = secs < 60.0 && t.numbers("i") == [2.0, 4.0, 8.0, 16.0];
    let mut parts = Vec::new();
    let mut c0s = Vec::new();
    for row in &t.rows {
        let i = cell_f(t, row, "i");
        let f = Hamiltonian::bump(Domain::Torus, [0.5, 0.5], 1.0 / i, 1.0)?;
        let cal = cell_f(t, row, "calabi");
        let cal_oracle = quad_integral(&f, 2048);
        let c0 = cell_f(t, row, "c0_distance");
        let c0_oracle = radial_c0(&f, [0.5, 0.5], 1.0 / i);
        ok &= (cal - 1.0).abs() <= 1e-3 && (cal_oracle - 1.0).abs() <= 1e-3;
        // both sides are sups over finite samples
        ok &= c0 <= 2.0 / i && (c0 - c0_oracle).abs() <= 0.02 * c0_oracle;
        c0s.push(c0);
        parts.push(format!("i={i}: Cal {cal:.6} (quadrature {cal_oracle:.6}), d0 {c0:.4} (radial {c0_oracle:.4})"));
    }
    ok &= strictly_decreasing(&c0s);
    outcome(ok, format!("{}; {secs:.1}s", parts.join("; ")))
}

fn gg_calabi_identity() -> Result<Outcome> {
    // Only p = 16 is needed; per-Hamiltonian seeds make it match the full run.
    let cfg = config("gg-proposition")?.with_params(|p| p.p_schedule = Some(vec![16]));
    let report = run_experiment(&cfg)?;
    let t = &report.table;
    let mut ok = report.passed();
    let mut parts = Vec::new();
    let expected_cal = [0.005, 0.01, 0.02];
    for ((name, f), want) in cfg.hamiltonians.iter().zip(expected_cal) {
        let cal = quad_integral(f, 2048);
        ok &= (cal - want).abs() <= 1e-6 * want;
        let row = t
            .rows
            .iter()
            .find(|r| cell(t, r, "hamiltonian") == name && cell(t, r, "kind") == "raw" && cell(t, r, "p") == "16")
            .expect("p = 16 row");
        let (v, se) = (cell_f(t, row, "estimate"), cell_f(t, row, "std_error"));
        let target = 2.0 * cal;
        let pass = (v - target).abs() <= (0.1 * target.abs()).max(4.0 * se);
        ok &= pass && cell_f(t, row, "n_samples") == 1e5;
        parts.push(format!("{name}: {v:.6} +- {se:.6} vs 2 Cal = {target:.6}"));
    }
    outcome(ok, parts.join("; "))
}

fn continuity_probe() -> Result<Outcome> {
    let cfg = config("continuity-probe")?;
    let report = run_experiment(&cfg)?;
    let t = &report.table;
    let mut fixed_ok = true;
    let mut area_ok = true;
    let mut shrink = Vec::new();
    let mut shrink_ok = true;
    let mut areas = Vec::new();
    for row in &t.rows {
        let (v, se) = (cell_f(t, row, "estimate"), cell_f(t, row, "std_error"));
        let kernel = cell(t, row, "kernel");
        match (cell(t, row, "section"), kernel) {
            ("fixed", "aab") => fixed_ok &= v.abs() <= 4.0 * se,
            ("area", "aab") => {
                area_ok &= v.abs() <= 4.0 * se;
                areas.push(cell_f(t, row, "area"));
            }
            ("shrinking", k) => {
                let i: f64 = cell(t, row, "label").trim_start_matches("i=").parse().unwrap_or(f64::NAN);
                let cal = quad_integral(&Hamiltonian::bump(Domain::Torus, [0.5, 0.5], 1.0 / i, 1.0)?, 2048);
                let pass = if k == "ab" {
                    (v - 2.0 * cal).abs() <= (0.1 * 2.0 * cal).max(4.0 * se)
                } else {
                    v.abs() <= 4.0 * se
                };
                shrink_ok &= pass;
                shrink.push(format!("i={i} {k} {v:.3}+-{se:.3}"));
            }
            _ => {}
        }
    }
    areas.dedup();
    let n_fixed = t.rows.iter().filter(|r| cell(t, r, "section") == "fixed").count();
    let ok = fixed_ok && area_ok && shrink_ok && n_fixed == 6 && shrink.len() == 8 && report.passed();
    outcome(
        ok,
        format!(
            "fixed aab within 4 se: {fixed_ok}; areas {areas:?} within 4 se: {area_ok}; shrinking: {}",
            shrink.join(", ")
        ),
    )
}

/// Every reduced word over `a, b, A, B` of length `1..=max_len`, as text.
fn reduced_strings(max_len: usize) -> Vec<String> {
    fn inv(c: u8) -> u8 {
        c ^ 0x20
    }
    let mut out = Vec::new();
    let mut layer: Vec<Vec<u8>> = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::with_capacity(layer.len() * 3);
        for w in &layer {
            for c in *b"abAB" {
                if w.last().is_some_and(|&l| l == inv(c)) {
                    continue;
                }
                let mut v = w.clone();
                v.push(c);
                next.push(v);
            }
        }
        out.extend(next.iter().map(|v| String::from_utf8(v.clone()).expect("ascii")));
        layer = next;
    }
    out
}

fn invert_text(s: &str) -> String {
    s.bytes().rev().map(|c| (c ^ 0x20) as char).collect()
}

fn cocycle_audit() -> Result<Outcome> {
    let cfg = config("cocycle-audit")?;
    let report = run_experiment(&cfg)?;
    let t = &report.table;
    let pairs = cfg.params.pairs.unwrap_or(1000);
    let mut held = 0usize;
    let mut nonzero = 0usize;
    for row in &t.rows {
        let r = cell_f(t, row, "residual");
        if r <= cell_f(t, row, "defect") + cell_f(t, row, "closure_slack") {
            held += 1;
        }
        if r > 0.0 {
            nonzero += 1;
        }
    }
    // The defect used must dominate every product of short words.
    let words: Vec<Word> = reduced_strings(4).iter().map(|s| Word::parse(s)).collect::<Result<_>>()?;
    let mut defects_ok = true;
    for mu in &cfg.kernels {
        let lower = words
            .par_iter()
            .map(|g| {
                let mg = mu.eval(g);
                words.iter().map(|h| (mu.eval(&g.concat(h)) - mg - mu.eval(h)).abs()).fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max);
        let used = t
            .rows
            .iter()
            .find(|r| cell(t, r, "kernel") == mu.name)
            .map_or(f64::NAN, |r| cell_f(t, r, "defect"));
        defects_ok &= used >= lower;
    }
    let total = t.rows.len();
    let ok = total == pairs * cfg.kernels.len() && held == total && nonzero > 0 && defects_ok;
    outcome(
        ok,
        format!("{held}/{total} residuals within defect + slack ({pairs} pairs, {nonzero} nonzero); defects dominate length-4 products: {defects_ok}"),
    )
}

fn naive_count(pattern: &str, g: &str, cyclic: bool) -> usize {
    let (n, k) = (g.len(), pattern.len());
    if n == 0 || k == 0 {
        return 0;
    }
    if cyclic {
        let unrolled = g.repeat(k / n + 2);
        (0..n).filter(|&i| unrolled[i..].starts_with(pattern)).count()
    } else {
        (0..n).filter(|&i| g[i..].starts_with(pattern)).count()
    }
}

fn free_group_exactness() -> Result<Outcome> {
    let mut kernels = kernel_library();
    kernels.push(CountingQM::from_strings("mixed", &[("ab", 1.0), ("aab", -0.5), ("abAB", 0.25)])?);
    let short = reduced_strings(8);
    let conjugators = reduced_strings(3);
    let bad_homog = short
        .par_iter()
        .map(|s| -> Result<usize> {
            let w = Word::parse(s)?;
            let mut bad = usize::from(w.to_string() != *s);
            for mu in &kernels {
                let m = mu.eval(&w);
                bad += usize::from(mu.eval(&Word::parse(&invert_text(s))?) != -m);
                for n in 2..=32 {
                    bad += usize::from(mu.eval(&Word::parse(&s.repeat(n))?) != n as f64 * m);
                }
                for c in &conjugators {
                    let conj = Word::parse(&format!("{c}{s}{}", invert_text(c)))?;
                    bad += usize::from(mu.eval(&conj) != m);
                }
            }
            Ok(bad)
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;

    // Subword counts: every pattern up to length 3 on words up to length 8,
    // and a fixed pattern set on every word up to length 12.
    let patterns_short = reduced_strings(3);
    let patterns_long = ["a", "B", "ab", "aab", "abb", "abAB", "aa"];
    let long = reduced_strings(12);
    let check = |patterns: &[&str], words: &[String]| -> Result<usize> {
        let pw: Vec<(String, Word)> = patterns
            .iter()
            .map(|p| Ok((p.to_string(), Word::parse(p)?)))
            .collect::<Result<_>>()?;
        words
            .par_iter()
            .map(|s| -> Result<usize> {
                let g = Word::parse(s)?;
                let mut bad = 0;
                for (pt, p) in &pw {
                    for cyclic in [false, true] {
                        bad += usize::from(count_subwords(p, &g, cyclic) != naive_count(pt, s, cyclic));
                    }
                }
                Ok(bad)
            })
            .try_reduce(|| 0, |a, b| Ok(a + b))
    };
    let short_refs: Vec<&str> = patterns_short.iter().map(String::as_str).collect();
    let bad_count = check(&short_refs, &short)? + check(&patterns_long, &long)?;
    outcome(
        bad_homog == 0 && bad_count == 0,
        format!(
            "{} words <= 8 x powers <= 32 x {} conjugators x {} kernels: {bad_homog} mismatches; counts on {} words <= 12: {bad_count} mismatches",
            short.len(),
            conjugators.len(),
            kernels.len(),
            long.len()
        ),
    )
}

fn circle(center: Point, r: f64, n: usize, ccw: bool) -> Vec<Point> {
    let sign = if ccw { 1.0 } else { -1.0 };
    (0..=n)
        .map(|k| {
            let a = sign * TAU * (k % n) as f64 / n as f64 + 0.3;
            [(center[0] + r * a.cos()).rem_euclid(1.0), (center[1] + r * a.sin()).rem_euclid(1.0)]
        })
        .collect()
}

fn segment_loop(start: Point, step: Point, n: usize) -> Vec<Point> {
    (0..=n)
        .map(|k| {
            let k = (k % n) as f64;
            [(start[0] + k * step[0]).rem_euclid(1.0), (start[1] + k * step[1]).rem_euclid(1.0)]
        })
        .collect()
}

fn loop_word(points: &[Point]) -> Result<Word> {
    let l = PuncturedLoop::from_wrapped(points, DEFAULT_DELTA_PUNCT)?;
    Ok(word_of_loop(&l, &CutSystem::default()))
}

fn is_rotation(s: &str, of: &str) -> bool {
    s.len() == of.len() && format!("{of}{of}").contains(s)
}

fn winding() -> Result<Outcome> {
    let ab = CountingQM::from_strings("ab", &[("ab", 1.0)])?;
    let mut ok = true;
    let mut parts = Vec::new();
    for (ccw, center) in [(true, [0.0, 0.0]), (false, [0.0, 0.0]), (true, [1.0, 1.0])] {
        let w = loop_word(&circle(center, 0.05, 64, ccw))?;
        let core = w.cyclic_reduce().0.to_string();
        let conj = is_rotation(&core, "abAB") || is_rotation(&core, "baBA");
        ok &= conj && ab.eval(&w).abs() == 1.0;
        parts.push(format!("{} circle: {w} (mu = {})", if ccw { "ccw" } else { "cw" }, ab.eval(&w)));
    }

    let loops: Vec<(&str, Vec<Point>)> = vec![
        ("ccw circle", circle([0.0, 0.0], 0.05, 64, true)),
        ("cw circle", circle([0.0, 0.0], 0.1, 48, false)),
        ("off-puncture circle", circle([0.5, 0.5], 0.2, 48, true)),
        ("horizontal", segment_loop([0.03, 0.3], [1.0 / 16.0, 0.0], 16)),
        ("vertical", segment_loop([0.7, 0.03], [0.0, 1.0 / 16.0], 16)),
        ("diagonal", segment_loop([0.03, 0.47], [1.0 / 20.0, 1.0 / 20.0], 20)),
        ("slope 2", segment_loop([0.31, 0.02], [1.0 / 24.0, 2.0 / 24.0], 24)),
    ];
    let delta = DEFAULT_DELTA_PUNCT;
    let mut stable = 0usize;
    let mut words = Vec::new();
    for (li, (name, pts)) in loops.iter().enumerate() {
        let base = loop_word(pts)?;
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        rng.set_stream(li as u64);
        let mut same = 0;
        for _ in 0..1000 {
            let mut q: Vec<Point> = pts[..pts.len() - 1]
                .iter()
                .map(|p| {
                    let (r, a) = (0.5 * delta * rng.random::<f64>().sqrt(), TAU * rng.random::<f64>());
                    [(p[0] + r * a.cos()).rem_euclid(1.0), (p[1] + r * a.sin()).rem_euclid(1.0)]
                })
                .collect();
            q.push(q[0]);
            if loop_word(&q)? == base {
                same += 1;
            }
        }
        ok &= same == 1000;
        stable += same;
        words.push(format!("{name} {base}"));
        if *name == "off-puncture circle" {
            ok &= base.is_empty();
        }
        if *name == "horizontal" || *name == "vertical" {
            ok &= base.len() == 1;
        }
    }
    parts.push(format!("loops: {}", words.join(", ")));
    parts.push(format!("{stable}/{} perturbed loops keep their word", loops.len() * 1000));
    outcome(ok, parts.join("; "))
}

/// `max |rho_2(f(z)) det Df(z) - rho_1(z)|` over nodes two cells inside,
/// with fourth-order central differences of the node images.
fn pullback_oracle(f: &GridDiffeo, w1: &GridForm, w2: &GridForm) -> f64 {
    let (nx, ny) = (f.nx, f.ny);
    let hx = f.rect.width() / (nx - 1) as f64;
    let hy = f.rect.height() / (ny - 1) as f64;
    let d = |a: Point, b: Point, c: Point, e: Point, h: f64, k: usize| (-a[k] + 8.0 * b[k] - 8.0 * c[k] + e[k]) / (12.0 * h);
    let mut worst = 0.0f64;
    for j in 2..ny - 2 {
        for i in 2..nx - 2 {
            let img = |i: usize, j: usize| f.node_image(i, j);
            let (xp2, xp1, xm1, xm2) = (img(i + 2, j), img(i + 1, j), img(i - 1, j), img(i - 2, j));
            let (yp2, yp1, ym1, ym2) = (img(i, j + 2), img(i, j + 1), img(i, j - 1), img(i, j - 2));
            let det = d(xp2, xp1, xm1, xm2, hx, 0) * d(yp2, yp1, ym1, ym2, hy, 1)
                - d(xp2, xp1, xm1, xm2, hx, 1) * d(yp2, yp1, ym1, ym2, hy, 0);
            let r = w2.at(img(i, j)) * det - w1.density.at(i, j);
            worst = worst.max(r.abs());
        }
    }
    worst
}

fn node_c0(f: &GridDiffeo) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..f.ny {
        for i in 0..f.nx {
            let (a, b) = (f.node(i, j), f.node_image(i, j));
            worst = worst.max((a[0] - b[0]).hypot(a[1] - b[1]));
        }
    }
    worst
}

fn moser() -> Result<Outcome> {
    let cfg = config("moser-demo")?;
    let n = cfg.params.grid_n.unwrap_or(129);
    let settings = MoserSettings::default();
    let suite = (0..MOSER_CASES)
        .into_par_iter()
        .map(|k| {
            let (name, w1, w2, mode) = moser_case(k, n)?;
            let r = moser_equalize(&w1, &w2, &mode, &settings)?;
            Ok((name, pullback_oracle(&r.diffeo, &w1, &w2)))
        })
        .collect::<Result<Vec<_>>>()?;
    let worst = suite.iter().map(|c| c.1).fold(0.0, f64::max);
    let suite_ok = suite.len() == 10 && suite.iter().all(|c| c.1 <= 1e-3);

    let levels = cfg.params.grid_levels.clone().unwrap_or_else(|| vec![65, 129, 257]);
    let mut residuals = Vec::new();
    for &m in &levels {
        let (w1, w2) = moser_scaled_pair(m, 0.3)?;
        let r = moser_equalize(&w1, &w2, &BoundaryMode::VanishNearBoundary, &settings)?;
        residuals.push(pullback_oracle(&r.diffeo, &w1, &w2));
    }
    let orders: Vec<f64> = residuals.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    // The residual is a derivative of a cubic interpolant: order 3 expected.
    let order_ok = strictly_decreasing(&residuals) && orders.iter().all(|&o| o >= 2.5);

    let amps = cfg.params.perturbations.clone().unwrap_or_else(|| vec![0.2, 0.1, 0.05, 0.025, 0.0125]);
    let mut norms = Vec::new();
    for &s in &amps {
        let (w1, w2) = moser_scaled_pair(n, s)?;
        let r = moser_equalize(&w1, &w2, &BoundaryMode::VanishNearBoundary, &settings)?;
        norms.push(node_c0(&r.diffeo));
    }
    let c0_ok = strictly_decreasing(&norms);
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.2e}")).collect::<Vec<_>>().join(", ");
    outcome(
        suite_ok && order_ok && c0_ok,
        format!(
            "worst suite residual {worst:.2e} over {} cases; residuals on {levels:?}: [{}], orders [{}]; c0 norms [{}] for amplitudes {amps:?}",
            suite.len(),
            fmt(&residuals),
            orders.iter().map(|o| format!("{o:.2}")).collect::<Vec<_>>().join(", "),
            fmt(&norms)
        ),
    )
}

/// Time-one map of `F` by classical RK4 on `sgrad F = (-F_q, F_p)` with
/// central differences of `F`.
fn rk4_time_one(f: &Hamiltonian, z: Point, steps: usize) -> Point {
    let h = 1e-6;
    let field = |p: Point, t: f64| {
        let fp = (f.value([p[0] + h, p[1]], t) - f.value([p[0] - h, p[1]], t)) / (2.0 * h);
        let fq = (f.value([p[0], p[1] + h], t) - f.value([p[0], p[1] - h], t)) / (2.0 * h);
        [-fq, fp]
    };
    let dt = 1.0 / steps as f64;
    let mut z = z;
    for k in 0..steps {
        let t = k as f64 * dt;
        let k1 = field(z, t);
        let k2 = field([z[0] + 0.5 * dt * k1[0], z[1] + 0.5 * dt * k1[1]], t + 0.5 * dt);
        let k3 = field([z[0] + 0.5 * dt * k2[0], z[1] + 0.5 * dt * k2[1]], t + 0.5 * dt);
        let k4 = field([z[0] + dt * k3[0], z[1] + dt * k3[1]], t + dt);
        z = [
            z[0] + dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            z[1] + dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        ];
    }
    z
}

/// Whether every node outside `inside` has an exactly unmoved image.
fn fixed_outside(f: &GridDiffeo, inside: impl Fn(Point) -> bool) -> bool {
    (0..f.ny).all(|j| (0..f.nx).all(|i| inside(f.node(i, j)) || f.node_image(i, j) == f.node(i, j)))
}

fn fragmentation() -> Result<Outcome> {
    let cfg = config("fragment-demo")?;
    let eps = 0.05;
    let settings = FragmentSettings {
        grid_n: cfg.params.grid_n.unwrap_or(129),
        ..FragmentSettings::default()
    };
    let mut ok = cfg.hamiltonians.len() == 5;
    let mut parts = Vec::new();
    for (name, f) in &cfg.hamiltonians {
        let d = disc_fragment(f, eps, &settings)?;
        let in_disc = |p: Point| p[0].hypot(p[1]) < 1.0;
        let supports = fixed_outside(&d.theta, |p| in_disc(p) && p[1].abs() < 2.0 * eps)
            && fixed_outside(&d.phi_plus, |p| in_disc(p) && p[1] > 0.0)
            && fixed_outside(&d.phi_minus, |p| in_disc(p) && p[1] < 0.0);
        // theta phi_+ phi_- at the grid nodes against an independent flow of f;
        // the interpolated composite is reported but carries the steep shear
        // of theta across the cutoff band
        let fr = Fragmenter::new(f, eps, &settings)?;
        let n = d.theta.nx;
        let nodes: Vec<(usize, usize)> = (0..n).flat_map(|j| (0..n).map(move |i| (i, j))).collect();
        let (residual, interpolated, displacement) = nodes
            .par_iter()
            .filter(|&&(i, j)| in_disc(d.theta.node(i, j)))
            .map(|&(i, j)| {
                let z = d.theta.node(i, j);
                let fz = rk4_time_one(f, z, 400);
                let w = fr.theta(fr.phi(fr.phi(z, false).unwrap(), true).unwrap());
                let g = d.theta.apply(d.phi_plus.apply(d.phi_minus.node_image(i, j)));
                (
                    (w[0] - fz[0]).hypot(w[1] - fz[1]),
                    (g[0] - fz[0]).hypot(g[1] - fz[1]),
                    (fz[0] - z[0]).hypot(fz[1] - z[1]),
                )
            })
            .reduce(|| (0.0, 0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1), a.2.max(b.2)));
        ok &= supports && d.supports_ok() && displacement < eps && residual <= 1e-3 && d.residual <= 1e-3;
        parts.push(format!(
            "{name}: |f - id| {displacement:.4}, supports {supports}, node residual {residual:.2e} (library {:.2e}, interpolated {interpolated:.2e})",
            d.residual
        ));
    }
    outcome(ok, parts.join("; "))
}

/// The periodic piecewise-linear graph through the vertices.
fn polyline_height(v: &[Point], x: f64) -> f64 {
    let mut pts: Vec<Point> = v.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]));
    let n = pts.len();
    let x = x.rem_euclid(1.0);
    let k = pts.iter().position(|p| p[0] > x).unwrap_or(n);
    // across the seam the left end moves down by one period, or the right end up
    let (a, b) = match k {
        0 => ([pts[n - 1][0] - 1.0, pts[n - 1][1]], pts[0]),
        k if k == n => (pts[n - 1], [pts[0][0] + 1.0, pts[0][1]]),
        _ => (pts[k - 1], pts[k]),
    };
    let s = (x - a[0]) / (b[0] - a[0]);
    a[1] + s * (b[1] - a[1])
}

fn curve_extension() -> Result<Outcome> {
    let cfg = config("curve-demo")?;
    let seed = substream_seed(cfg.seed, 5);
    let eps_list = [0.01, 0.02, 0.05];
    let mut ok = true;
    let mut worst_vertex = 0.0f64;
    let mut worst_curve = 0.0f64;
    let mut c_prime = 0.0f64;
    let mut per_eps = Vec::new();
    for &eps in &eps_list {
        let mut c_eps = 0.0f64;
        for k in 0..10 {
            let v = perturbed_curve(seed, k, eps);
            let ext = CurveExtender::new(&v, eps)?;
            for q in &v {
                let p = ext.psi([q[0], 0.0]);
                worst_vertex = worst_vertex.max((p[0] - q[0]).hypot(p[1] - q[1]));
            }
            for s in 0..2000 {
                let x = (s as f64 + 0.5) / 2000.0;
                let p = ext.psi([x, 0.0]);
                worst_curve = worst_curve.max((p[1] - polyline_height(&v, x)).abs());
            }
            let mut sup = 0.0f64;
            for j in 0..=64 {
                for i in 0..=64 {
                    let z = [i as f64 / 64.0, -1.0 + 2.0 * j as f64 / 64.0];
                    let p = ext.psi(z);
                    let d = (p[0] - z[0]).hypot(p[1] - z[1]);
                    if z[1].abs() >= 0.95 {
                        ok &= d == 0.0;
                    }
                    sup = sup.max(d);
                }
            }
            c_eps = c_eps.max(sup / eps);
        }
        per_eps.push(format!("eps {eps}: {c_eps:.3}"));
        c_prime = c_prime.max(c_eps);
    }
    ok &= worst_vertex <= 1e-4 && worst_curve <= 1e-4 && c_prime.is_finite();
    outcome(
        ok,
        format!(
            "vertex error {worst_vertex:.2e}, max error along L {worst_curve:.2e}; |psi - id| / eps: {}; C' = {c_prime:.3}",
            per_eps.join(", ")
        ),
    )
}

/// Small versions of every preset, so the reruns stay short.
const SMALL_CONFIGS: &[&str] = &[
    "experiment = \"calabi-discontinuity\"\nseed = 1\n[params]\ni_values = [2, 4]\nn_c0 = 64\n",
    "experiment = \"gg-proposition\"\nseed = 2\n[params]\np_schedule = [1, 2]\nn_samples = 3000\n",
    "experiment = \"continuity-probe\"\nseed = 3\n[params]\np_schedule = [2]\nn_samples = 1000\nareas = [0.03]\ntrials = 1\nprobe_samples = 500\ni_values = [4]\nshrink_samples = 500\n",
    "experiment = \"cocycle-audit\"\nseed = 4\n[params]\npairs = 40\ndefect_budget = 500\n",
    "experiment = \"fragment-demo\"\nseed = 5\nhamiltonians = [\"frag-2\"]\n[params]\ngrid_n = 33\n",
    "experiment = \"moser-demo\"\nseed = 6\n[params]\ngrid_n = 33\ngrid_levels = [17, 33]\nperturbations = [0.2, 0.1]\n",
    "experiment = \"curve-demo\"\nseed = 7\n[params]\ncurves = 2\neps = [0.02]\ngrid_n = 17\n",
];

/// Files that must agree bitwise: the result CSV and every grid.
fn result_files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).expect("output dir").flatten() {
            let p = e.path();
            if p.is_dir() {
                stack.push(p);
            } else if !matches!(p.file_name().and_then(|s| s.to_str()), Some("report.txt" | "timings.csv")) {
                let rel = p.strip_prefix(dir).expect("under dir").to_path_buf();
                out.push((rel, std::fs::read(&p).expect("readable")));
            }
        }
    }
    out.sort();
    out
}

fn run_in_pool(cfg: &ExperimentConfig, workers: usize, dir: &Path) -> Result<RunReport> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("thread pool");
    let report = pool.install(|| run_experiment(cfg))?;
    report.write(dir)?;
    Ok(report)
}

fn reproducibility() -> Result<Outcome> {
    let tmp = tempfile::tempdir().map_err(|e| symqm::Error::Io(e.to_string()))?;
    let mut covered = Vec::new();
    let mut ok = true;
    for text in SMALL_CONFIGS {
        let cfg = ExperimentConfig::parse(text)?;
        let name = cfg.experiment.name();
        let runs: Vec<Vec<(PathBuf, Vec<u8>)>> = [(1, "a"), (3, "b"), (1, "c")]
            .iter()
            .map(|&(w, tag)| {
                let dir = tmp.path().join(format!("{name}-{tag}"));
                run_in_pool(&cfg, w, &dir)?;
                Ok(result_files(&dir))
            })
            .collect::<Result<_>>()?;
        let same = runs[0] == runs[1] && runs[0] == runs[2] && !runs[0].is_empty();
        ok &= same;
        covered.push(format!("{name} ({} files) {}", runs[0].len(), if same { "identical" } else { "DIFFER" }));
    }
    ok &= covered.len() == Experiment::ALL.len();
    outcome(ok, format!("1, 3 and 1 workers: {}", covered.join(", ")))
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        for (n, _, _) in CRITERIA {
            println!("criterion_{n}: test");
        }
        return ExitCode::SUCCESS;
    }
    let only: Vec<u32> = args.iter().filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for &(n, name, run) in CRITERIA {
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let (passed, detail) = match run() {
            Ok(o) => (o.passed, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        println!(
            "criterion {n:>2} {} {name} [{:.1}s]: {detail}",
            if passed { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
        if !passed {
            failed.push(n);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all selected criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
