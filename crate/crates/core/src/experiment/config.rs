//! Experiment configuration: one TOML file per run.
//!
//! A config names an experiment preset, a mandatory seed and optional
//! kernels, Hamiltonians, parameters and tolerances. Anything left out falls
//! back to the preset defaults, so `experiment` plus `seed` is a valid config.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fgword::{kernel, CountingQM, Word, KERNEL_NAMES};
use crate::ggqm::{Estimator, Sampling};
use crate::hamflow::{Domain, Hamiltonian, Point, TimeSchedule};
use crate::moserfrag::curve::DEFAULT_TOL_CURVE;
use crate::moserfrag::fragment::DEFAULT_TOL_FRAG;
use crate::moserfrag::moser::DEFAULT_TOL_PULLBACK;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    CalabiDiscontinuity,
    GgProposition,
    ContinuityProbe,
    CocycleAudit,
    FragmentDemo,
    MoserDemo,
    CurveDemo,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::CalabiDiscontinuity,
        Experiment::GgProposition,
        Experiment::ContinuityProbe,
        Experiment::CocycleAudit,
        Experiment::FragmentDemo,
        Experiment::MoserDemo,
        Experiment::CurveDemo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::CalabiDiscontinuity => "calabi-discontinuity",
            Experiment::GgProposition => "gg-proposition",
            Experiment::ContinuityProbe => "continuity-probe",
            Experiment::CocycleAudit => "cocycle-audit",
            Experiment::FragmentDemo => "fragment-demo",
            Experiment::MoserDemo => "moser-demo",
            Experiment::CurveDemo => "curve-demo",
        }
    }

    pub fn from_name(s: &str) -> Option<Experiment> {
        Experiment::ALL.into_iter().find(|e| e.name() == s)
    }

    pub fn summary(self) -> &'static str {
        match self {
            Experiment::CalabiDiscontinuity => {
                "bumps of radius 1/i and mass 1: Cal stays 1 while the C0 distance to id shrinks"
            }
            Experiment::GgProposition => "u~ against 2 mu([a,b]) Cal for disc-supported bumps over a p-schedule",
            Experiment::ContinuityProbe => {
                "kernels vanishing on [a,b]: zero on every support area, contrasted with (ab,1) on shrinking bumps"
            }
            Experiment::CocycleAudit => "cocycle residual against the kernel defect on random bump pairs",
            Experiment::FragmentDemo => "disc maps split as theta phi_+ phi_- with support checks",
            Experiment::MoserDemo => "Moser equalization suite, grid-doubling order and shrinking perturbations",
            Experiment::CurveDemo => "extensions of perturbed core curves with the measured constant C'",
        }
    }

    pub fn default_kernels(self) -> &'static [&'static str] {
        match self {
            Experiment::GgProposition => &["ab"],
            Experiment::ContinuityProbe => &["aab", "ab"],
            Experiment::CocycleAudit => &["ab", "aab", "abb", "exp-a"],
            _ => &[],
        }
    }

    pub fn default_hamiltonians(self) -> &'static [&'static str] {
        match self {
            Experiment::GgProposition | Experiment::ContinuityProbe => &["bump-small", "bump-medium", "bump-large"],
            Experiment::FragmentDemo => &["frag-1", "frag-2", "frag-3", "frag-4", "frag-5"],
            _ => &[],
        }
    }

    fn domain(self) -> Option<Domain> {
        match self {
            Experiment::GgProposition | Experiment::ContinuityProbe => Some(Domain::Torus),
            Experiment::FragmentDemo => Some(Domain::Disc),
            _ => None,
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HamiltonianKind {
    Bump,
    Rotation,
    Zero,
}

/// An inline Hamiltonian: a bump, the disc rotation or zero, with an
/// optional time schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HamiltonianSpec {
    pub name: String,
    pub kind: HamiltonianKind,
    #[serde(default = "torus")]
    pub domain: Domain,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Point>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<TimeSchedule>,
}

fn torus() -> Domain {
    Domain::Torus
}

impl HamiltonianSpec {
    fn bump(name: &str, domain: Domain, center: Point, radius: f64, mass: f64) -> HamiltonianSpec {
        HamiltonianSpec {
            name: name.into(),
            kind: HamiltonianKind::Bump,
            domain,
            center: Some(center),
            radius: Some(radius),
            mass: Some(mass),
            schedule: None,
        }
    }

    pub fn build(&self) -> Result<Hamiltonian> {
        let h = match self.kind {
            HamiltonianKind::Zero => Hamiltonian::zero(self.domain),
            HamiltonianKind::Rotation => {
                if self.domain != Domain::Disc {
                    return Err(Error::UnsupportedDomain("the rotation lives on the disc".into()));
                }
                Hamiltonian::rotation(self.center.unwrap_or([0.0, 0.0]))
            }
            HamiltonianKind::Bump => {
                let (Some(center), Some(radius), Some(mass)) = (self.center, self.radius, self.mass) else {
                    return Err(Error::ConfigInvalid("a bump needs center, radius and mass".into()));
                };
                if !(radius > 0.0) {
                    return Err(Error::ConfigInvalid(format!("bump radius {radius} must be positive")));
                }
                Hamiltonian::bump(self.domain, center, radius, mass)?
            }
        };
        Ok(match &self.schedule {
            Some(s) => h.with_schedule(s.clone()),
            None => h,
        })
    }
}

/// Named Hamiltonians usable by reference in a config.
pub fn hamiltonian_presets() -> Vec<(HamiltonianSpec, &'static str)> {
    let c = [0.5, 0.5];
    let t = Domain::Torus;
    let d = Domain::Disc;
    let mut pulse = HamiltonianSpec::bump("bump-pulse", t, c, 0.2, 0.01);
    pulse.schedule = Some(TimeSchedule::Pulse);
    let mut cutoff = HamiltonianSpec::bump("bump-cutoff", t, c, 0.2, 0.01);
    cutoff.schedule = Some(TimeSchedule::Cutoff { delta: 0.1 });
    vec![
        (HamiltonianSpec::bump("bump-small", t, c, 0.15, 0.005), "torus bump, radius 0.15, Cal 0.005"),
        (HamiltonianSpec::bump("bump-medium", t, c, 0.2, 0.01), "torus bump, radius 0.2, Cal 0.01"),
        (HamiltonianSpec::bump("bump-large", t, c, 0.25, 0.02), "torus bump, radius 0.25, Cal 0.02"),
        (pulse, "torus bump, radius 0.2, Cal 0.01, pulsed in time"),
        (cutoff, "torus bump, radius 0.2, Cal 0.01, switched off near t = 0 and t = 1"),
        (
            HamiltonianSpec {
                name: "rotation".into(),
                kind: HamiltonianKind::Rotation,
                domain: d,
                center: Some([0.0, 0.0]),
                radius: None,
                mass: None,
                schedule: None,
            },
            "rigid rotation of the disc",
        ),
        (HamiltonianSpec::bump("frag-1", d, [0.0, 0.0], 0.3, 2e-4), "disc bump at the origin, radius 0.3"),
        (HamiltonianSpec::bump("frag-2", d, [0.1, 0.05], 0.3, 4e-4), "off-center disc bump, radius 0.3"),
        (HamiltonianSpec::bump("frag-3", d, [-0.15, 0.1], 0.35, 3e-4), "disc bump, radius 0.35"),
        (HamiltonianSpec::bump("frag-4", d, [0.2, -0.2], 0.25, 1e-4), "disc bump below the axis, radius 0.25"),
        (HamiltonianSpec::bump("frag-5", d, [0.0, 0.1], 0.3, -3e-4), "disc bump with negative mass"),
    ]
}

pub fn hamiltonian_preset(name: &str) -> Option<HamiltonianSpec> {
    hamiltonian_presets().into_iter().map(|(h, _)| h).find(|h| h.name == name)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KernelRef {
    Named(String),
    Inline { name: String, terms: Vec<(String, f64)> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HamiltonianRef {
    Named(String),
    Inline(HamiltonianSpec),
}

/// Experiment parameters. Every field is optional; unset fields take the
/// preset default listed by `list-presets`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub i_values: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_schedule: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampling: Option<Sampling>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimator: Option<Estimator>,
    /// Time rescaling `s` of the shrinking sequence at `i = 2`; bump `i` runs
    /// the time-`s (2/i)^4` map.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subgroup_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shrink_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub areas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub defect_budget: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_levels: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbations: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curves: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_quad: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_c0: Option<usize>,
    /// Write the grid artifacts of the demos.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub write_grids: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Allowed `|Cal - 1|` in the discontinuity table.
    pub tol_cal: f64,
    /// Relative slack on `u~ = 2 mu([a,b]) Cal`.
    pub rel_tol: f64,
    /// Number of standard errors accepted.
    pub z_max: f64,
    pub max_rejection_rate: f64,
    pub tol_pullback: f64,
    pub tol_frag: f64,
    pub tol_curve: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            tol_cal: 1e-3,
            rel_tol: 0.1,
            z_max: 4.0,
            max_rejection_rate: 0.01,
            tol_pullback: DEFAULT_TOL_PULLBACK,
            tol_frag: DEFAULT_TOL_FRAG,
            tol_curve: DEFAULT_TOL_CURVE,
        }
    }
}

/// The config file as written.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub kernels: Vec<KernelRef>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub hamiltonians: Vec<HamiltonianRef>,
    #[serde(default)]
    pub params: Params,
    #[serde(default)]
    pub tolerances: Tolerances,
}

/// One problem found in a config, tied to the offending field.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub field: String,
    pub message: String,
}

impl Diagnostic {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Diagnostic {
        Diagnostic {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// A validated config with kernels and Hamiltonians resolved.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub kernels: Vec<CountingQM>,
    pub hamiltonians: Vec<(String, Hamiltonian)>,
    pub params: Params,
    pub tolerances: Tolerances,
    /// SHA-256 of the normalized config, without the output directory.
    pub hash: String,
    pub raw: RawConfig,
}

fn resolve_kernel(r: &KernelRef, field: &str, diags: &mut Vec<Diagnostic>) -> Option<CountingQM> {
    match r {
        KernelRef::Named(name) => {
            let k = kernel(name);
            if k.is_none() {
                diags.push(Diagnostic::new(
                    field,
                    format!("unknown kernel {name:?} (library: {})", KERNEL_NAMES.join(", ")),
                ));
            }
            k
        }
        KernelRef::Inline { name, terms } => {
            if terms.is_empty() {
                diags.push(Diagnostic::new(format!("{field}.terms"), "a kernel needs at least one term"));
                return None;
            }
            let mut parsed = Vec::with_capacity(terms.len());
            let before = diags.len();
            for (j, (word, weight)) in terms.iter().enumerate() {
                let at = format!("{field}.terms[{j}]");
                match Word::parse(word) {
                    Ok(w) if w.is_empty() => diags.push(Diagnostic::new(at, "pattern reduces to the empty word")),
                    Ok(w) => parsed.push((w, *weight)),
                    Err(e) => diags.push(Diagnostic::new(at, e.to_string())),
                }
                if !weight.is_finite() {
                    diags.push(Diagnostic::new(format!("{field}.terms[{j}]"), "weight must be finite"));
                }
            }
            if diags.len() > before {
                return None;
            }
            CountingQM::new(name.clone(), parsed).ok()
        }
    }
}

fn resolve_hamiltonian(
    r: &HamiltonianRef,
    field: &str,
    domain: Option<Domain>,
    diags: &mut Vec<Diagnostic>,
) -> Option<(String, Hamiltonian)> {
    let spec = match r {
        HamiltonianRef::Named(name) => match hamiltonian_preset(name) {
            Some(s) => s,
            None => {
                diags.push(Diagnostic::new(field, format!("unknown Hamiltonian preset {name:?}")));
                return None;
            }
        },
        HamiltonianRef::Inline(s) => s.clone(),
    };
    if let Some(d) = domain {
        if spec.domain != d {
            diags.push(Diagnostic::new(
                field,
                format!("{:?} needs a {d:?} Hamiltonian, got {:?}", spec.name, spec.domain),
            ));
            return None;
        }
    }
    match spec.build() {
        Ok(h) => Some((spec.name, h)),
        Err(e) => {
            diags.push(Diagnostic::new(field, e.to_string()));
            None
        }
    }
}

fn check_params(p: &Params, diags: &mut Vec<Diagnostic>) {
    let mut bad = |field: &str, msg: &str| diags.push(Diagnostic::new(format!("params.{field}"), msg));
    if p.i_values.as_ref().is_some_and(|v| v.is_empty() || v.iter().any(|&i| i < 2)) {
        bad("i_values", "need a nonempty list of integers >= 2");
    }
    if p.p_schedule.as_ref().is_some_and(|v| v.is_empty() || v.contains(&0)) {
        bad("p_schedule", "need a nonempty list of positive powers");
    }
    for (name, v) in [
        ("n_samples", p.n_samples),
        ("shrink_samples", p.shrink_samples),
        ("probe_samples", p.probe_samples),
        ("trials", p.trials),
        ("pairs", p.pairs),
        ("defect_budget", p.defect_budget),
        ("curves", p.curves),
        ("n_quad", p.n_quad),
        ("n_c0", p.n_c0),
    ] {
        if v == Some(0) {
            bad(name, "must be positive");
        }
    }
    if p.subgroup_scale.is_some_and(|s| !(s > 0.0 && s <= 1.0)) {
        bad("subgroup_scale", "must lie in (0, 1]");
    }
    if p.areas.as_ref().is_some_and(|v| v.iter().any(|a| !(*a > 0.0 && *a < 0.75))) {
        bad("areas", "areas must lie in (0, 0.75)");
    }
    if p.eps.as_ref().is_some_and(|v| v.is_empty() || v.iter().any(|e| !(*e > 0.0 && *e <= 0.1))) {
        bad("eps", "need a nonempty list in (0, 0.1]");
    }
    if p.grid_n.is_some_and(|n| n < 17) {
        bad("grid_n", "need at least 17 nodes per side");
    }
    if p.grid_levels.as_ref().is_some_and(|v| v.len() < 2 || v.iter().any(|&n| n < 17)) {
        bad("grid_levels", "need at least two levels of at least 17 nodes");
    }
    if p.perturbations.as_ref().is_some_and(|v| v.len() < 2 || v.iter().any(|s| !(*s >= 0.0 && *s < 0.5))) {
        bad("perturbations", "need at least two amplitudes in [0, 0.5)");
    }
}

/// Checks the config text and returns every problem found; an empty list
/// means the config is valid.
pub fn validate_str(text: &str) -> Vec<Diagnostic> {
    check(text).1
}

/// [`validate_str`] on a file.
pub fn validate_config(path: &Path) -> Result<Vec<Diagnostic>> {
    Ok(validate_str(&read_config(path)?))
}

fn read_config(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::FileNotFound(path.display().to_string()),
        _ => Error::Io(format!("{}: {e}", path.display())),
    })
}

fn check(text: &str) -> (Option<ExperimentConfig>, Vec<Diagnostic>) {
    let mut diags = Vec::new();
    let table: toml::Table = match text.parse() {
        Ok(t) => t,
        Err(e) => return (None, vec![Diagnostic::new("config", e.message().to_string())]),
    };
    if table.is_empty() {
        return (None, vec![Diagnostic::new("config", "empty configuration")]);
    }
    let raw: RawConfig = match RawConfig::deserialize(toml::Value::Table(table)) {
        Ok(r) => r,
        Err(e) => return (None, vec![Diagnostic::new("config", e.message().to_string())]),
    };
    let experiment = match &raw.experiment {
        None => {
            diags.push(Diagnostic::new("experiment", "missing experiment name"));
            None
        }
        Some(name) => {
            let e = Experiment::from_name(name);
            if e.is_none() {
                diags.push(Diagnostic::new("experiment", format!("unknown experiment {name:?}")));
            }
            e
        }
    };
    if raw.seed.is_none() {
        diags.push(Diagnostic::new("seed", "missing seed; every run needs an explicit seed"));
    }
    let kernel_refs: Vec<KernelRef> = if raw.kernels.is_empty() {
        experiment
            .map(|e| e.default_kernels().iter().map(|s| KernelRef::Named(s.to_string())).collect())
            .unwrap_or_default()
    } else {
        raw.kernels.clone()
    };
    let kernels: Vec<CountingQM> = kernel_refs
        .iter()
        .enumerate()
        .filter_map(|(i, k)| resolve_kernel(k, &format!("kernels[{i}]"), &mut diags))
        .collect();
    let ham_refs: Vec<HamiltonianRef> = if raw.hamiltonians.is_empty() {
        experiment
            .map(|e| e.default_hamiltonians().iter().map(|s| HamiltonianRef::Named(s.to_string())).collect())
            .unwrap_or_default()
    } else {
        raw.hamiltonians.clone()
    };
    let domain = experiment.and_then(Experiment::domain);
    let hamiltonians: Vec<(String, Hamiltonian)> = ham_refs
        .iter()
        .enumerate()
        .filter_map(|(i, h)| resolve_hamiltonian(h, &format!("hamiltonians[{i}]"), domain, &mut diags))
        .collect();
    check_params(&raw.params, &mut diags);
    let t = &raw.tolerances;
    for (name, v) in [
        ("tol_cal", t.tol_cal),
        ("rel_tol", t.rel_tol),
        ("z_max", t.z_max),
        ("max_rejection_rate", t.max_rejection_rate),
        ("tol_pullback", t.tol_pullback),
        ("tol_frag", t.tol_frag),
        ("tol_curve", t.tol_curve),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            diags.push(Diagnostic::new(format!("tolerances.{name}"), "must be positive and finite"));
        }
    }
    if !diags.is_empty() {
        return (None, diags);
    }
    let (Some(experiment), Some(seed)) = (experiment, raw.seed) else {
        unreachable!("missing fields produce diagnostics");
    };
    let cfg = ExperimentConfig {
        experiment,
        seed,
        output_dir: raw
            .output_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("symqm-out").join(experiment.name())),
        kernels,
        hamiltonians,
        params: raw.params.clone(),
        tolerances: raw.tolerances.clone(),
        hash: config_hash(&raw),
        raw,
    };
    (Some(cfg), diags)
}

/// Hash of the config with the output directory removed, so the same run
/// written to two places carries the same hash.
fn config_hash(raw: &RawConfig) -> String {
    let normalized = RawConfig {
        output_dir: None,
        ..raw.clone()
    };
    let text = toml::to_string(&normalized).expect("config serializes");
    hex::encode(Sha256::digest(text.as_bytes()))
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<ExperimentConfig> {
        match check(text) {
            (Some(cfg), _) => Ok(cfg),
            (None, diags) => Err(Error::ConfigInvalid(
                diags.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "),
            )),
        }
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        ExperimentConfig::parse(&read_config(path)?)
    }

    /// The minimal config for a preset.
    pub fn preset(experiment: Experiment, seed: u64) -> ExperimentConfig {
        ExperimentConfig::parse(&format!("experiment = \"{experiment}\"\nseed = {seed}\n"))
            .expect("preset defaults are valid")
    }

    /// Same config with `params` edited; the hash follows the edit.
    pub fn with_params(mut self, edit: impl FnOnce(&mut Params)) -> ExperimentConfig {
        edit(&mut self.raw.params);
        check_params(&self.raw.params, &mut Vec::new());
        self.params = self.raw.params.clone();
        self.hash = config_hash(&self.raw);
        self
    }

    pub fn with_output_dir(mut self, dir: impl Into<PathBuf>) -> ExperimentConfig {
        self.output_dir = dir.into();
        self.raw.output_dir = Some(self.output_dir.clone());
        self
    }
}
