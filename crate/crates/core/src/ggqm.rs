//! Monte-Carlo estimation of the averaged quasi-morphism
//! `u~(f) = lim (1/p) int u_{f^p}(x, y) dx dy` on Hamiltonian maps of the
//! torus, where `u_f(x, y) = mu(word of the closed difference loop)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fgword::{qm_eval, CountingQM};
use crate::hamflow::{Domain, FlowSettings, Hamiltonian, Method, Point, Support};
use crate::punctured::{trace_pair, Leg, LoopSettings};

/// How sample pairs are drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampling {
    /// i.i.d. uniform pairs on `T^2 x T^2`.
    Uniform,
    /// Pairs split by how many points lie in the support disc `D`. Pairs
    /// with both points outside `D` contribute exactly zero and are skipped;
    /// the other strata are weighted by their measure.
    SupportStratified,
}

/// Per-pair statistic whose mean estimates `u~`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    /// `u_{f^p}(x, y) / p`; carries an `O(1/p)` bias.
    Plain,
    /// `(u_{f^{2p}}(x, y) - u_{f^p}(x, y)) / p`, read from one trace over
    /// `[0, 2p]`. Its mean is the two-point extrapolation `2 v(2p) - v(p)`,
    /// which cancels the `1/p` term.
    Increment,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GGSettings {
    /// Integrator; `None` picks the closed-form rotation for radial
    /// Hamiltonians and implicit midpoint otherwise.
    pub method: Option<Method>,
    pub flow: FlowSettings,
    pub loops: LoopSettings,
    pub sampling: Sampling,
    pub estimator: Estimator,
    pub max_rejection_rate: f64,
    pub max_redraws: usize,
}

impl Default for GGSettings {
    fn default() -> Self {
        GGSettings {
            method: None,
            flow: FlowSettings::default(),
            loops: LoopSettings {
                h_loop: 0.1,
                ..LoopSettings::default()
            },
            sampling: Sampling::Uniform,
            estimator: Estimator::Plain,
            max_rejection_rate: 0.1,
            max_redraws: 1000,
        }
    }
}

impl GGSettings {
    pub fn flow_for(&self, f: &Hamiltonian) -> FlowSettings {
        let method = self.method.unwrap_or(if f.is_radial() {
            Method::ExactRadial
        } else {
            Method::MidpointSymplectic
        });
        let mut flow = self.flow.with_method(method);
        if method == Method::ExactRadial {
            // Steps are exact; they only need to keep each chord short
            // relative to the arc it replaces.
            flow.max_rotation_per_step = 0.5;
            flow.min_steps_per_unit = 1;
        }
        flow
    }

    pub fn with_sampling(mut self, s: Sampling) -> Self {
        self.sampling = s;
        self
    }

    pub fn with_estimator(mut self, e: Estimator) -> Self {
        self.estimator = e;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GGEstimate {
    pub value: f64,
    pub std_error: f64,
    pub p: u32,
    pub n_samples: usize,
    pub n_rejected: usize,
    pub seed: u64,
    pub sampling: Sampling,
    pub estimator: Estimator,
    /// `rejected fraction * max |per-sample value|`.
    pub rejection_bias_bound: f64,
}

impl GGEstimate {
    pub fn rejection_rate(&self) -> f64 {
        self.n_rejected as f64 / self.n_samples.max(1) as f64
    }

    /// Whether `|value - target| <= k * std_error`.
    pub fn consistent_with(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.std_error
    }
}

/// `u_{f^p}(x, y)` for the time-`[0, p]` flow of `F`.
pub fn u_value(mu: &CountingQM, f: &Hamiltonian, x: Point, y: Point, p: u32) -> Result<f64> {
    u_value_with(mu, f, x, y, p, &GGSettings::default())
}

pub fn u_value_with(
    mu: &CountingQM,
    f: &Hamiltonian,
    x: Point,
    y: Point,
    p: u32,
    settings: &GGSettings,
) -> Result<f64> {
    Ok(u_values(&[mu], f, x, y, p, settings)?[0])
}

/// `u_{f^p}(x, y)` for several kernels from a single traced loop.
pub fn u_values(
    mus: &[&CountingQM],
    f: &Hamiltonian,
    x: Point,
    y: Point,
    p: u32,
    settings: &GGSettings,
) -> Result<Vec<f64>> {
    if f.domain != Domain::Torus {
        return Err(Error::UnsupportedDomain("the estimator works on the torus".into()));
    }
    let support = f.support();
    if f.is_zero() || (support.excludes(f.domain, x) && support.excludes(f.domain, y)) {
        return Ok(vec![0.0; mus.len()]);
    }
    let flow = settings.flow_for(f);
    let leg = Leg::new(f, 0.0, p as f64, &flow);
    let trace = trace_pair(&[leg], x, y, &flow, &settings.loops, |_, _| {})?;
    Ok(mus.iter().map(|mu| qm_eval(mu, &trace.word)).collect())
}

fn statistic(
    mus: &[&CountingQM],
    f: &Hamiltonian,
    x: Point,
    y: Point,
    p: u32,
    settings: &GGSettings,
) -> Result<Vec<f64>> {
    let support = f.support();
    if f.is_zero() || (support.excludes(f.domain, x) && support.excludes(f.domain, y)) {
        return Ok(vec![0.0; mus.len()]);
    }
    let pf = p as f64;
    match settings.estimator {
        Estimator::Plain => Ok(u_values(mus, f, x, y, p, settings)?
            .into_iter()
            .map(|u| u / pf)
            .collect()),
        Estimator::Increment => {
            let flow = settings.flow_for(f);
            let legs = [Leg::new(f, 0.0, pf, &flow), Leg::new(f, pf, 2.0 * pf, &flow)];
            let trace = trace_pair(&legs, x, y, &flow, &settings.loops, |_, _| {})?;
            Ok(mus
                .iter()
                .map(|mu| (qm_eval(mu, &trace.leg_words[1]) - qm_eval(mu, &trace.leg_words[0])) / pf)
                .collect())
        }
    }
}

fn uniform_point<R: Rng>(rng: &mut R) -> Point {
    [rng.random::<f64>(), rng.random::<f64>()]
}

fn disc_point<R: Rng>(rng: &mut R, center: Point, radius: f64) -> Point {
    let r = radius * rng.random::<f64>().sqrt();
    let th = std::f64::consts::TAU * rng.random::<f64>();
    Domain::Torus.wrap([center[0] + r * th.cos(), center[1] + r * th.sin()])
}

fn outside_point<R: Rng>(rng: &mut R, support: &Support) -> Point {
    loop {
        let p = uniform_point(rng);
        if support.excludes(Domain::Torus, p) {
            return p;
        }
    }
}

/// Stratum of sample `i` under stratified sampling: 0 = both in, 1 = x in,
/// 2 = y in.
fn stratum(i: usize) -> usize {
    match i % 4 {
        0 | 1 => 0,
        2 => 1,
        _ => 2,
    }
}

struct Sample {
    values: Vec<f64>,
    rejected: usize,
}

/// `(1/p) * mean u_{f^p}` over `n_samples` pairs with per-sample ChaCha
/// streams derived from `seed`.
pub fn gg_estimate(mu: &CountingQM, f: &Hamiltonian, p: u32, n_samples: usize, seed: u64) -> Result<GGEstimate> {
    gg_estimate_with(mu, f, p, n_samples, seed, &GGSettings::default())
}

pub fn gg_estimate_with(
    mu: &CountingQM,
    f: &Hamiltonian,
    p: u32,
    n_samples: usize,
    seed: u64,
    settings: &GGSettings,
) -> Result<GGEstimate> {
    Ok(gg_estimate_many(&[mu], f, p, n_samples, seed, settings)?.remove(0))
}

/// One estimate per kernel, all from the same sampled loops.
pub fn gg_estimate_many(
    mus: &[&CountingQM],
    f: &Hamiltonian,
    p: u32,
    n_samples: usize,
    seed: u64,
    settings: &GGSettings,
) -> Result<Vec<GGEstimate>> {
    if p == 0 || n_samples == 0 {
        return Err(Error::ConfigInvalid("p and n_samples must be positive".into()));
    }
    let support = f.support();
    let disc = match (settings.sampling, &support) {
        (Sampling::SupportStratified, Support::Disc { center, radius }) if *radius > 0.0 => {
            Some((*center, *radius))
        }
        _ => None,
    };
    let sampling = if disc.is_some() {
        Sampling::SupportStratified
    } else {
        Sampling::Uniform
    };
    let draw = |rng: &mut ChaCha8Rng, i: usize| -> (Point, Point) {
        match disc {
            None => (uniform_point(rng), uniform_point(rng)),
            Some((c, r)) => match stratum(i) {
                0 => (disc_point(rng, c, r), disc_point(rng, c, r)),
                1 => (disc_point(rng, c, r), outside_point(rng, &support)),
                _ => (outside_point(rng, &support), disc_point(rng, c, r)),
            },
        }
    };
    let one = |i: usize| -> Result<Sample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let mut rejected = 0;
        loop {
            let (x, y) = draw(&mut rng, i);
            match statistic(mus, f, x, y, p, settings) {
                Ok(values) => return Ok(Sample { values, rejected }),
                Err(Error::NearPuncture { .. }) if rejected < settings.max_redraws => rejected += 1,
                Err(e) => return Err(e),
            }
        }
    };
    let samples: Vec<Result<Sample>> = (0..n_samples).into_par_iter().map(one).collect();
    let mut values = vec![Vec::with_capacity(n_samples); mus.len()];
    let mut n_rejected = 0;
    for s in samples {
        let s = s?;
        n_rejected += s.rejected;
        for (k, v) in s.values.into_iter().enumerate() {
            values[k].push(v);
        }
    }
    let rate = n_rejected as f64 / n_samples as f64;
    if rate > settings.max_rejection_rate {
        return Err(Error::ExcessiveRejection {
            rate,
            limit: settings.max_rejection_rate,
        });
    }
    Ok(values
        .iter()
        .map(|vals| {
            let max_abs = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let (value, std_error) = match disc {
                None => mean_and_se(vals),
                Some((_, r)) => stratified_mean(vals, std::f64::consts::PI * r * r),
            };
            GGEstimate {
                value,
                std_error,
                p,
                n_samples,
                n_rejected,
                seed,
                sampling,
                estimator: settings.estimator,
                rejection_bias_bound: rate * max_abs,
            }
        })
        .collect())
}

fn stratified_mean(values: &[f64], a: f64) -> (f64, f64) {
    let weights = [a * a, a * (1.0 - a), a * (1.0 - a)];
    let mut value = 0.0;
    let mut var = 0.0;
    for (s, w) in weights.iter().enumerate() {
        let group: Vec<f64> = values
            .iter()
            .enumerate()
            .filter(|(i, _)| stratum(*i) == s)
            .map(|(_, v)| *v)
            .collect();
        if group.is_empty() {
            continue;
        }
        let (m, se) = mean_and_se(&group);
        value += w * m;
        var += w * w * se * se;
    }
    (value, var.sqrt())
}

/// Sample mean and `sd / sqrt(n)`, summed in index order.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1) as f64).sqrt() / (n as f64).sqrt())
}

/// Estimate of `u~` for the time-1 map via the time-`s` map:
/// `u~(phi^1) = u~(phi^s) / s` for an autonomous flow.
pub fn gg_estimate_subgroup(
    mu: &CountingQM,
    f: &Hamiltonian,
    s: f64,
    p: u32,
    n_samples: usize,
    seed: u64,
    settings: &GGSettings,
) -> Result<GGEstimate> {
    if !f.is_autonomous() || s <= 0.0 {
        return Err(Error::ConfigInvalid(
            "time rescaling needs an autonomous Hamiltonian and s > 0".into(),
        ));
    }
    let mut est = gg_estimate_with(mu, &f.clone().scaled(s), p, n_samples, seed, settings)?;
    est.value /= s;
    est.std_error /= s;
    est.rejection_bias_bound /= s;
    Ok(est)
}

/// Estimates for several homogenization powers and the two-point
/// extrapolation `2 v(p_max) - v(p_max / 2)` when both are present.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerSweep {
    pub estimates: Vec<GGEstimate>,
    pub extrapolated: Option<(f64, f64)>,
}

pub fn gg_sweep(
    mu: &CountingQM,
    f: &Hamiltonian,
    powers: &[u32],
    n_samples: usize,
    seed: u64,
    settings: &GGSettings,
) -> Result<PowerSweep> {
    let estimates = powers
        .iter()
        .map(|&p| gg_estimate_with(mu, f, p, n_samples, seed, settings))
        .collect::<Result<Vec<_>>>()?;
    let extrapolated = estimates.iter().max_by_key(|e| e.p).and_then(|hi| {
        estimates
            .iter()
            .find(|e| 2 * e.p == hi.p)
            .map(|lo| richardson(lo, hi))
    });
    Ok(PowerSweep {
        estimates,
        extrapolated,
    })
}

/// `(2 v(2p) - v(p), combined std error)` for a `1/p` bias.
pub fn richardson(lo: &GGEstimate, hi: &GGEstimate) -> (f64, f64) {
    (
        2.0 * hi.value - lo.value,
        (4.0 * hi.std_error * hi.std_error + lo.std_error * lo.std_error).sqrt(),
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CocycleResidual {
    pub residual: f64,
    pub u_fg: f64,
    pub u_g: f64,
    pub u_f_at_g: f64,
    /// Always 0: connectors never cross a cut, so loop closure adds no letters.
    pub closure_slack: f64,
}

/// `|u_{fg}(x,y) - u_g(x,y) - u_f(g x, g y)|` for the time-1 maps of `F` and
/// `G`, with `fg` realized by running `G` and then `F`.
pub fn cocycle_residual(
    mu: &CountingQM,
    f: &Hamiltonian,
    g: &Hamiltonian,
    x: Point,
    y: Point,
    settings: &GGSettings,
) -> Result<CocycleResidual> {
    Ok(cocycle_residuals(&[mu], f, g, x, y, settings)?.remove(0))
}

/// [`cocycle_residual`] for several kernels from one set of traced loops.
pub fn cocycle_residuals(
    mus: &[&CountingQM],
    f: &Hamiltonian,
    g: &Hamiltonian,
    x: Point,
    y: Point,
    settings: &GGSettings,
) -> Result<Vec<CocycleResidual>> {
    let ff = settings.flow_for(f);
    let fg = settings.flow_for(g);
    // One integrator for the concatenated run keeps the legs consistent.
    let flow = if ff.method == fg.method { ff } else { settings.flow.with_method(Method::MidpointSymplectic) };
    let leg_g = Leg::new(g, 0.0, 1.0, &flow);
    let leg_f = Leg::new(f, 0.0, 1.0, &flow);
    let both = trace_pair(&[leg_g, leg_f], x, y, &flow, &settings.loops, |_, _| {})?;
    let first = trace_pair(&[leg_g], x, y, &flow, &settings.loops, |_, _| {})?;
    let second = trace_pair(&[leg_f], first.x, first.y, &flow, &settings.loops, |_, _| {})?;
    Ok(mus
        .iter()
        .map(|mu| {
            let u_fg = qm_eval(mu, &both.word);
            let u_g = qm_eval(mu, &first.word);
            let u_f_at_g = qm_eval(mu, &second.word);
            CocycleResidual {
                residual: (u_fg - u_g - u_f_at_g).abs(),
                u_fg,
                u_g,
                u_f_at_g,
                closure_slack: 0.0,
            }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleRow {
    pub area: f64,
    pub kernel: String,
    pub trial: usize,
    pub calabi: f64,
    pub estimate: GGEstimate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleProbe {
    pub rows: Vec<ScaleRow>,
    /// Largest probed area up to which every estimate is zero within three
    /// standard errors; `None` when nothing was probed.
    pub estimated_scale: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleProbeConfig {
    pub trials: usize,
    pub n_samples: usize,
    pub p: u32,
    pub seed: u64,
    /// Range of `|Cal|` for the random bumps.
    pub calabi_range: (f64, f64),
}

/// Estimates on random bump Hamiltonians of each support area.
pub fn scale_probe(
    mu: &CountingQM,
    areas: &[f64],
    cfg: &ScaleProbeConfig,
    settings: &GGSettings,
) -> Result<ScaleProbe> {
    let mut sorted: Vec<f64> = areas.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let mut rows = Vec::new();
    for (ai, &area) in sorted.iter().enumerate() {
        if !(area > 0.0 && area < 1.0) {
            return Err(Error::ConfigInvalid(format!("probe area {area} outside (0, 1)")));
        }
        let radius = (area / std::f64::consts::PI).sqrt();
        for trial in 0..cfg.trials {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(((ai as u64) << 32) | trial as u64);
            let center = uniform_point(&mut rng);
            let mass = rng.random_range(cfg.calabi_range.0..=cfg.calabi_range.1)
                * if rng.random::<bool>() { 1.0 } else { -1.0 };
            let f = Hamiltonian::bump(Domain::Torus, center, radius, mass)?;
            let sub_seed = cfg.seed ^ rng.random::<u64>();
            let estimate = gg_estimate_with(mu, &f, cfg.p, cfg.n_samples, sub_seed, settings)?;
            rows.push(ScaleRow {
                area,
                kernel: mu.name.clone(),
                trial,
                calabi: crate::hamflow::calabi(&f, 256)?,
                estimate,
            });
        }
    }
    let mut estimated_scale = if sorted.is_empty() { None } else { Some(0.0) };
    for &area in &sorted {
        let zero = rows
            .iter()
            .filter(|r| r.area == area)
            .all(|r| r.estimate.value.abs() <= 3.0 * r.estimate.std_error);
        if !zero {
            break;
        }
        estimated_scale = Some(area);
    }
    Ok(ScaleProbe { rows, estimated_scale })
}
