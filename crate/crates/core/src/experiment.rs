//! JSON-configured experiment batches and their reports.
//!
//! Randomised members are drawn from `ChaCha8Rng::seed_from_u64(seed)` with
//! the stream set to the family's position in the config, one member after
//! another, so a config and seed fix every generated profile.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ballstats::{empirical_lambda_star, profile, BallProfile, Geometry, LambdaStar, Source};
use crate::bounds::{lambda_formula, BoundMode, RadiiTriple, ThreeSpheresBound};
use crate::error::{Error, Result};
use crate::fdm2d::{solve_dirichlet, Domain, GridFunction2D, SolverConfig};
use crate::params::{Drift, EnvelopeMode, EquationSpec, Preset, Regime, StructuralParams};
use crate::radial::{extremal_drift_solution, fundamental_solution, solve_radial_bvp, DriftSign};
use crate::verify::{calibrate_constant, check_three_spheres, validate_calibration, CalibrationMember, CalibrationResult};

pub const SCHEMA_VERSION: u32 = 1;
pub const OUTPUT_DIR_ENV: &str = "THREE_SPHERES_OUT";
const HOLDOUT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    pub name: String,
    pub preset: Preset,
    pub regime: Regime,
    pub params: StructuralParams,
    #[serde(default = "default_envelope")]
    pub envelope: EnvelopeMode,
    #[serde(default)]
    pub seed: u64,
    pub geometry: GeometryConfig,
    pub families: Vec<FamilyConfig>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default = "default_radial_steps")]
    pub radial_steps: usize,
    pub bound: BoundConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_envelope() -> EnvelopeMode {
    EnvelopeMode::GlobalDecay
}

fn default_radial_steps() -> usize {
    512
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    /// Ball centre for grid families; radial families sit at the origin.
    #[serde(default)]
    pub center: Option<Vec<f64>>,
    pub radii: Vec<f64>,
    pub triples: Vec<[f64; 3]>,
    #[serde(default = "default_geometry")]
    pub geometry: Geometry,
}

fn default_geometry() -> Geometry {
    Geometry::BallMax
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Fit,
    Holdout,
    Check,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum FamilyConfig {
    /// Increasing fundamental solutions with random `a`, `|b|`.
    Fundamental {
        role: Role,
        count: usize,
        #[serde(default = "one")]
        radius_scale: f64,
    },
    /// Extremal-drift solutions, `count` random scales per sign.
    Extremal {
        role: Role,
        count: usize,
        #[serde(default = "both_signs")]
        signs: Vec<DriftSign>,
        #[serde(default = "one")]
        radius_scale: f64,
    },
    /// Shooting solutions for a random drift coefficient `c(r) ∈ [-1, 1]`.
    RadialBvp {
        role: Role,
        count: usize,
        #[serde(default = "one")]
        radius_scale: f64,
    },
    /// Grid solutions on the disk of the largest radius with random
    /// trigonometric boundary data of degree at most `modes`.
    Grid {
        role: Role,
        count: usize,
        h: f64,
        #[serde(default = "three")]
        modes: usize,
        #[serde(default = "one")]
        radius_scale: f64,
    },
}

fn one() -> f64 {
    1.0
}
fn three() -> usize {
    3
}
fn both_signs() -> Vec<DriftSign> {
    vec![DriftSign::Plus, DriftSign::Minus]
}

impl FamilyConfig {
    pub fn role(&self) -> Role {
        match self {
            FamilyConfig::Fundamental { role, .. }
            | FamilyConfig::Extremal { role, .. }
            | FamilyConfig::RadialBvp { role, .. }
            | FamilyConfig::Grid { role, .. } => *role,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            FamilyConfig::Fundamental { .. } => "fundamental",
            FamilyConfig::Extremal { .. } => "extremal",
            FamilyConfig::RadialBvp { .. } => "radial_bvp",
            FamilyConfig::Grid { .. } => "grid",
        }
    }

    fn radius_scale(&self) -> f64 {
        match self {
            FamilyConfig::Fundamental { radius_scale, .. }
            | FamilyConfig::Extremal { radius_scale, .. }
            | FamilyConfig::RadialBvp { radius_scale, .. }
            | FamilyConfig::Grid { radius_scale, .. } => *radius_scale,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ConstantSpec {
    Value(f64),
    Named(Calibrate),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Calibrate {
    Calibrate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundConfig {
    pub mode: BoundMode,
    #[serde(default)]
    pub c: Option<ConstantSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
    Table,
}

impl std::str::FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            "table" => Ok(Format::Table),
            other => Err(Error::UnsupportedFormat(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default = "all_formats")]
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: None,
            formats: all_formats(),
        }
    }
}

fn all_formats() -> Vec<Format> {
    vec![Format::Json, Format::Csv, Format::Table]
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        ExperimentConfig::from_json(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.schema != SCHEMA_VERSION {
            return bad(format!("schema {} unsupported, expected {SCHEMA_VERSION}", self.schema));
        }
        if self.name.is_empty() || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
            return bad(format!("name `{}` must be a nonempty [A-Za-z0-9_-] identifier", self.name));
        }
        if self.params.regime() != self.regime {
            return bad(format!("params are in regime {}, config says {}", self.params.regime(), self.regime));
        }
        self.bound.mode.check_regime(&self.params).map_err(|e| Error::Config(e.to_string()))?;
        let radii = &self.geometry.radii;
        if radii.is_empty() || radii[0] <= 0.0 || radii.windows(2).any(|w| !(w[1] > w[0])) {
            return bad(format!("radii must be positive and strictly increasing, got {radii:?}"));
        }
        if self.geometry.triples.is_empty() {
            return bad("triples list is empty".into());
        }
        for t in &self.geometry.triples {
            let triple = RadiiTriple::new(t[0], t[1], t[2]).map_err(|e| Error::Config(e.to_string()))?;
            if t.iter().any(|r| !radii.contains(r)) {
                return bad(format!("triple {t:?} uses radii outside {radii:?}"));
            }
            if self.regime == Regime::SubN && !triple.ratios_ordered() {
                return bad(format!("triple {t:?} violates r1/r2 < r2/r3"));
            }
        }
        if self.families.is_empty() {
            return bad("no families".into());
        }
        if self.radial_steps < 16 {
            return bad(format!("radial_steps {} below 16", self.radial_steps));
        }
        let calibrating = matches!(self.bound.c, Some(ConstantSpec::Named(Calibrate::Calibrate)));
        match (self.bound.mode.is_classical(), self.bound.c) {
            (true, Some(_)) => return bad(format!("classical mode {} takes no constant", self.bound.mode)),
            (false, None) => return bad(format!("mode {} needs `c` (a number or \"calibrate\")", self.bound.mode)),
            (false, Some(ConstantSpec::Value(c))) if !(c > 0.0 && c.is_finite()) => {
                return bad(format!("constant {c} must be positive"))
            }
            _ => {}
        }
        if calibrating && !self.families.iter().any(|f| f.role() == Role::Fit) {
            return bad("calibration needs at least one `fit` family".into());
        }
        for f in &self.families {
            let scale = f.radius_scale();
            if !(scale > 0.0 && scale.is_finite()) {
                return bad(format!("radius_scale {scale} must be positive"));
            }
            if !calibrating && f.role() != Role::Check {
                return bad(format!("role {:?} only makes sense when calibrating", f.role()));
            }
            let count = match f {
                FamilyConfig::Fundamental { count, .. }
                | FamilyConfig::RadialBvp { count, .. }
                | FamilyConfig::Extremal { count, .. }
                | FamilyConfig::Grid { count, .. } => *count,
            };
            if count == 0 {
                return bad(format!("{} family has count 0", f.label()));
            }
            let r_max = radii[radii.len() - 1] * scale;
            if self.envelope == EnvelopeMode::Constant && r_max > 1.0 {
                return bad(format!("constant envelope needs radii <= 1, {} family reaches {r_max}", f.label()));
            }
            match f {
                FamilyConfig::Extremal { signs, .. } => {
                    if signs.is_empty() {
                        return bad("extremal family lists no signs".into());
                    }
                    if self.envelope != EnvelopeMode::GlobalDecay || radii[0] * scale < 1.0 {
                        return bad("extremal family needs the global-decay envelope and radii >= 1".into());
                    }
                }
                FamilyConfig::Grid { h, modes, .. } => {
                    if self.params.n() != 2 {
                        return bad("grid families are planar (n = 2)".into());
                    }
                    if *modes == 0 {
                        return bad("grid family needs modes >= 1".into());
                    }
                    if !(*h > 0.0 && 2.0 * h <= radii[0] * scale) {
                        return bad(format!("grid h = {h} must satisfy 2h <= smallest radius"));
                    }
                    if let Some(c) = &self.geometry.center {
                        if c.len() != 2 {
                            return bad(format!("grid centre {c:?} must be planar"));
                        }
                    }
                }
                _ => {}
            }
        }
        self.solver.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.output.formats.is_empty() {
            return bad("output formats list is empty".into());
        }
        Ok(())
    }

    fn triples_for(&self, scale: f64) -> Result<Vec<RadiiTriple>> {
        self.geometry
            .triples
            .iter()
            .map(|t| RadiiTriple::new(t[0] * scale, t[1] * scale, t[2] * scale))
            .collect()
    }

    fn spec(&self) -> Result<EquationSpec> {
        EquationSpec::preset(self.preset, self.params, self.envelope)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Member {
    Fundamental { a: f64, b: f64 },
    Extremal { sign: DriftSign, u0: f64, scale: f64 },
    RadialBvp { u_out: f64, mean: f64, amp: f64, freq: f64, phase: f64 },
    Grid { seed: u64 },
}

fn draw_members(cfg: &ExperimentConfig, idx: usize, fam: &FamilyConfig) -> Vec<Member> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(idx as u64);
    let params = &cfg.params;
    match fam {
        FamilyConfig::Fundamental { count, .. } => (0..*count)
            .map(|_| {
                let a = rng.random_range(-1.0..1.0);
                let mag = rng.random_range(0.5..2.0);
                let b = match params.regime() {
                    Regime::GtN => mag,
                    _ => -mag,
                };
                Member::Fundamental { a, b }
            })
            .collect(),
        FamilyConfig::Extremal { count, signs, .. } => signs
            .iter()
            .flat_map(|&sign| {
                (0..*count)
                    .map(|_| Member::Extremal {
                        sign,
                        u0: rng.random_range(-1.0..1.0),
                        scale: rng.random_range(0.5..2.0),
                    })
                    .collect::<Vec<_>>()
            })
            .collect(),
        FamilyConfig::RadialBvp { count, .. } => (0..*count)
            .map(|_| {
                let mean: f64 = rng.random_range(-1.0..1.0);
                Member::RadialBvp {
                    u_out: rng.random_range(0.5..2.0),
                    mean,
                    amp: rng.random_range(0.0..=(1.0 - mean.abs())),
                    freq: rng.random_range(0.5..4.0),
                    phase: rng.random_range(0.0..std::f64::consts::TAU),
                }
            })
            .collect(),
        FamilyConfig::Grid { count, .. } => (0..*count).map(|_| Member::Grid { seed: rng.random() }).collect(),
    }
}

fn grid_data(seed: u64, modes: usize, center: [f64; 2], radius: f64) -> impl Fn(f64, f64) -> f64 + Send + Sync {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeffs: Vec<(f64, f64)> = (0..modes)
        .map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    move |x: f64, y: f64| {
        let (dx, dy) = ((x - center[0]) / radius, (y - center[1]) / radius);
        let th = dy.atan2(dx);
        let rho = dx.hypot(dy);
        coeffs
            .iter()
            .enumerate()
            .map(|(k, (a, b))| {
                let k = (k + 1) as f64;
                rho.powf(k) * (a * (k * th).cos() + b * (k * th).sin())
            })
            .sum()
    }
}

fn build_profile(cfg: &ExperimentConfig, fam: &FamilyConfig, member: &Member) -> Result<BallProfile> {
    let scale = fam.radius_scale();
    let radii: Vec<f64> = cfg.geometry.radii.iter().map(|r| r * scale).collect();
    let (r_in, r_out) = (radii[0], radii[radii.len() - 1]);
    let origin = vec![0.0; cfg.params.n()];
    let geom = cfg.geometry.geometry;
    match *member {
        Member::Fundamental { a, b } => {
            let f = fundamental_solution(&cfg.params, a, b);
            profile(Source::Exact { solution: &f, r_in, r_out }, &origin, &radii, geom)
        }
        Member::Extremal { sign, u0, scale: s } => {
            let e = extremal_drift_solution(&cfg.params, sign, u0, r_in)?.scaled(s)?;
            profile(Source::Exact { solution: &e, r_in, r_out }, &origin, &radii, geom)
        }
        Member::RadialBvp {
            u_out,
            mean,
            amp,
            freq,
            phase,
        } => {
            let c = move |x: &[f64], _: f64| {
                let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                mean + amp * (freq * r.ln() + phase).sin()
            };
            let spec = cfg.spec()?.with_drift("perturbed", Drift::Envelope(Arc::new(c)));
            let prof = solve_radial_bvp(&spec, r_in, 0.0, r_out, u_out, cfg.radial_steps, 1e-12)?;
            profile(Source::Radial(&prof), &origin, &radii, geom)
        }
        Member::Grid { seed } => {
            let (h, modes) = match fam {
                FamilyConfig::Grid { h, modes, .. } => (*h, *modes),
                _ => unreachable!("grid members come from grid families"),
            };
            let center = match &cfg.geometry.center {
                Some(c) => [c[0], c[1]],
                None => [0.0, 0.0],
            };
            let template = GridFunction2D::new(Domain::disk(center, r_out)?, h)?;
            let data = grid_data(seed, modes, center, r_out);
            let (sol, _) = solve_dirichlet(&cfg.spec()?, &data, &template, &cfg.solver)?;
            profile(
                Source::Grid {
                    grid: &sol,
                    params: cfg.params,
                    envelope: cfg.envelope,
                },
                &center,
                &radii,
                geom,
            )
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub family: usize,
    pub kind: String,
    pub role: Role,
    pub member: usize,
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    pub lambda: f64,
    /// `None` when every λ works.
    pub lambda_star: Option<f64>,
    pub margin: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRecord {
    pub family: usize,
    pub kind: String,
    pub member: usize,
    pub profile: BallProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldoutSummary {
    pub passed: bool,
    pub rows: usize,
    /// Smallest `λ* - λ`, over constrained rows.
    pub worst_slack: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub seed: u64,
    pub mode: BoundMode,
    pub c: Option<f64>,
    pub calibration: Option<CalibrationResult>,
    pub holdout: Option<HoldoutSummary>,
    pub rows: usize,
    pub failed: usize,
    pub min_margin: f64,
    pub min_lambda_star: Option<f64>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub schema: u32,
    pub summary: Summary,
    pub rows: Vec<ReportRow>,
    pub profiles: Vec<ProfileRecord>,
}

impl ReportBundle {
    /// `Err(GateFailed)` when any row or the hold-out failed.
    pub fn gate(&self) -> Result<()> {
        if self.summary.passed {
            Ok(())
        } else {
            Err(Error::GateFailed(format!(
                "{}: {} of {} rows failed{}",
                self.summary.name,
                self.summary.failed,
                self.summary.rows,
                match &self.summary.holdout {
                    Some(h) if !h.passed => ", hold-out failed",
                    _ => "",
                }
            )))
        }
    }
}

/// Runs every family and check; deterministic for a given config.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ReportBundle> {
    cfg.validate()?;
    let mut jobs = Vec::new();
    for (fi, fam) in cfg.families.iter().enumerate() {
        for (mi, m) in draw_members(cfg, fi, fam).into_iter().enumerate() {
            jobs.push((fi, mi, m));
        }
    }
    let profiles: Vec<ProfileRecord> = jobs
        .par_iter()
        .map(|(fi, mi, m)| {
            let fam = &cfg.families[*fi];
            Ok(ProfileRecord {
                family: *fi,
                kind: fam.label().to_string(),
                member: *mi,
                profile: build_profile(cfg, fam, m)?,
            })
        })
        .collect::<Result<_>>()?;

    let members_for = |role: Role| -> Result<Vec<CalibrationMember>> {
        profiles
            .iter()
            .filter(|p| cfg.families[p.family].role() == role)
            .map(|p| {
                Ok(CalibrationMember {
                    profile: p.profile.clone(),
                    triples: cfg.triples_for(cfg.families[p.family].radius_scale())?,
                })
            })
            .collect()
    };
    let mode = cfg.bound.mode;
    let (c, calibration, holdout) = match cfg.bound.c {
        None => (None, None, None),
        Some(ConstantSpec::Value(c)) => (Some(c), None, None),
        Some(ConstantSpec::Named(Calibrate::Calibrate)) => {
            let cal = calibrate_constant(&members_for(Role::Fit)?, mode)?;
            let hold = members_for(Role::Holdout)?;
            let summary = if hold.is_empty() {
                None
            } else {
                let rep = validate_calibration(&hold, mode, cal.c_min, HOLDOUT_TOL)?;
                let worst = rep
                    .rows
                    .iter()
                    .filter_map(|r| r.lambda_star.map(|s| s - r.lambda))
                    .reduce(f64::min);
                Some(HoldoutSummary {
                    passed: rep.passed,
                    rows: rep.rows.len(),
                    worst_slack: worst,
                })
            };
            (Some(cal.c_min), Some(cal), summary)
        }
    };

    let mut rows = Vec::new();
    for rec in &profiles {
        let fam = &cfg.families[rec.family];
        for t in cfg.triples_for(fam.radius_scale())? {
            let bound = match c {
                None => ThreeSpheresBound::classical(&cfg.params, t)?,
                Some(c) => ThreeSpheresBound::with_lambda(mode, t, lambda_formula(mode, &cfg.params, &t, c)?)?,
            };
            let rep = check_three_spheres(&rec.profile, &bound, false)?;
            let star = empirical_lambda_star(&rec.profile, &t)?;
            rows.push(ReportRow {
                family: rec.family,
                kind: rec.kind.clone(),
                role: fam.role(),
                member: rec.member,
                r1: t.r1(),
                r2: t.r2(),
                r3: t.r3(),
                lambda: bound.lambda,
                lambda_star: match star {
                    LambdaStar::Value(v) => Some(v),
                    LambdaStar::All => None,
                },
                margin: rep.margin,
                pass: rep.passed,
            });
        }
    }
    let failed = rows.iter().filter(|r| !r.pass).count();
    let summary = Summary {
        name: cfg.name.clone(),
        seed: cfg.seed,
        mode,
        c,
        calibration,
        holdout: holdout.clone(),
        rows: rows.len(),
        failed,
        min_margin: rows.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min),
        min_lambda_star: rows.iter().filter_map(|r| r.lambda_star).reduce(f64::min),
        passed: failed == 0 && holdout.is_none_or(|h| h.passed),
    };
    Ok(ReportBundle {
        schema: SCHEMA_VERSION,
        summary,
        rows,
        profiles,
    })
}

/// `%.6g`-style rendering: six significant digits, trailing zeros dropped.
pub fn sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.5e}");
    let (mant, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: String| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    };
    if (-5..6).contains(&exp) {
        trim(format!("{x:.*}", (5 - exp) as usize))
    } else {
        format!("{}e{exp}", trim(mant.to_string()))
    }
}

/// Serialises a bundle; output is a pure function of the bundle.
pub fn emit_report(bundle: &ReportBundle, format: Format) -> Result<String> {
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(bundle)?;
            s.push('\n');
            Ok(s)
        }
        Format::Csv => {
            let mut wtr = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(Vec::new());
            wtr.write_record(["r1", "r2", "r3", "lambda", "lambda_star", "margin", "pass"])?;
            for r in &bundle.rows {
                wtr.write_record([
                    r.r1.to_string(),
                    r.r2.to_string(),
                    r.r3.to_string(),
                    r.lambda.to_string(),
                    r.lambda_star.map_or_else(|| "all".to_string(), |v| v.to_string()),
                    r.margin.to_string(),
                    r.pass.to_string(),
                ])?;
            }
            let bytes = wtr.into_inner().map_err(|e| Error::Io(e.into_error()))?;
            Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
        }
        Format::Table => {
            let s = &bundle.summary;
            let mut out = String::new();
            let _ = writeln!(out, "experiment {} (seed {}, mode {})", s.name, s.seed, s.mode);
            if let Some(c) = s.c {
                let _ = writeln!(out, "C = {}", sig6(c));
            }
            if let Some(cal) = &s.calibration {
                let t = cal.binding_triple;
                let _ = writeln!(
                    out,
                    "calibration: C_min = {} from {} evaluations, binding triple ({}, {}, {})",
                    sig6(cal.c_min),
                    cal.evaluations,
                    sig6(t.r1()),
                    sig6(t.r2()),
                    sig6(t.r3())
                );
            }
            if let Some(h) = &s.holdout {
                let _ = writeln!(
                    out,
                    "hold-out: {} over {} rows, worst slack {}",
                    if h.passed { "pass" } else { "FAIL" },
                    h.rows,
                    h.worst_slack.map_or_else(|| "n/a".into(), sig6)
                );
            }
            let _ = writeln!(
                out,
                "{:<12} {:>4} {:>12} {:>12} {:>12} {:>12} {:>12} {:>13} pass",
                "family", "mem", "r1", "r2", "r3", "lambda", "lambda*", "margin"
            );
            for r in &bundle.rows {
                let _ = writeln!(
                    out,
                    "{:<12} {:>4} {:>12} {:>12} {:>12} {:>12} {:>12} {:>13} {}",
                    r.kind,
                    r.member,
                    sig6(r.r1),
                    sig6(r.r2),
                    sig6(r.r3),
                    sig6(r.lambda),
                    r.lambda_star.map_or_else(|| "all".into(), sig6),
                    sig6(r.margin),
                    if r.pass { "yes" } else { "NO" }
                );
            }
            let _ = writeln!(
                out,
                "{} rows, {} failed, min margin {}: {}",
                s.rows,
                s.failed,
                sig6(s.min_margin),
                if s.passed { "PASS" } else { "FAIL" }
            );
            Ok(out)
        }
    }
}

/// `r,M,m` rows for every profile, keyed by family and member.
pub fn emit_profiles_csv(bundle: &ReportBundle) -> Result<String> {
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    wtr.write_record(["family", "kind", "member", "r", "M", "m"])?;
    for rec in &bundle.profiles {
        let p = &rec.profile;
        for i in 0..p.radii().len() {
            wtr.write_record([
                rec.family.to_string(),
                rec.kind.clone(),
                rec.member.to_string(),
                p.radii()[i].to_string(),
                p.max()[i].to_string(),
                p.min()[i].to_string(),
            ])?;
        }
    }
    let bytes = wtr.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Writes `path` through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("{} has no file name", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", file_name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Output directory: the environment override, then the config, then `out`.
pub fn output_dir(cfg: &ExperimentConfig) -> PathBuf {
    match std::env::var_os(OUTPUT_DIR_ENV) {
        Some(d) if !d.is_empty() => PathBuf::from(d),
        _ => cfg.output.dir.clone().unwrap_or_else(|| PathBuf::from("out")),
    }
}

/// Writes the configured formats plus the profile CSV; returns the paths.
pub fn write_reports(cfg: &ExperimentConfig, bundle: &ReportBundle, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for &f in &cfg.output.formats {
        let ext = match f {
            Format::Json => "json",
            Format::Csv => "csv",
            Format::Table => "txt",
        };
        let path = dir.join(format!("{}.{ext}", cfg.name));
        write_atomic(&path, &emit_report(bundle, f)?)?;
        written.push(path);
    }
    let path = dir.join(format!("{}-profiles.csv", cfg.name));
    write_atomic(&path, &emit_profiles_csv(bundle)?)?;
    written.push(path);
    Ok(written)
}

/// Runs independent configs concurrently; results keep the input order.
pub fn run_batch(configs: &[ExperimentConfig]) -> Vec<Result<ReportBundle>> {
    configs.par_iter().map(run_experiment).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn classical_json() -> String {
        r#"{
            "schema": 1,
            "name": "unit",
            "preset": "p-laplace",
            "regime": "border_n",
            "params": {"n": 2, "p": 2.0, "a0": 1.0, "a1": 1.0, "b1": 0.0},
            "seed": 3,
            "geometry": {"radii": [1.0, 2.0, 4.0], "triples": [[1.0, 2.0, 4.0]]},
            "families": [{"kind": "fundamental", "role": "check", "count": 3}],
            "bound": {"mode": "classical_n"}
        }"#
        .to_string()
    }

    #[test]
    fn classical_run_has_equality_rows() {
        let cfg = ExperimentConfig::from_json(&classical_json()).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(b.rows.len(), 3);
        assert!(b.rows.iter().all(|r| r.pass && r.margin.abs() < 1e-12));
        assert!(b.gate().is_ok());
    }

    #[test]
    fn validation_rejects_before_solving() {
        let base = classical_json();
        let cases = [
            base.replace("\"triples\": [[1.0, 2.0, 4.0]]", "\"triples\": []"),
            base.replace("\"schema\": 1", "\"schema\": 2"),
            base.replace("\"seed\": 3", "\"seed\": 3, \"extra\": true"),
            base.replace("\"regime\": \"border_n\"", "\"regime\": \"sub_n\""),
            base.replace("[[1.0, 2.0, 4.0]]", "[[1.0, 3.0, 4.0]]"),
            base.replace("\"classical_n\"}", "\"classical_n\", \"c\": 1.0}"),
            base.replace("\"p-laplace\"", "\"nope\""),
            base.replace("\"role\": \"check\"", "\"role\": \"fit\""),
        ];
        for (i, c) in cases.iter().enumerate() {
            assert!(ExperimentConfig::from_json(c).is_err(), "case {i} accepted");
        }
    }

    #[test]
    fn emission_is_stable() {
        let cfg = ExperimentConfig::from_json(&classical_json()).unwrap();
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        for f in [Format::Json, Format::Csv, Format::Table] {
            assert_eq!(emit_report(&a, f).unwrap(), emit_report(&b, f).unwrap());
        }
        let csv = emit_report(&a, Format::Csv).unwrap();
        assert!(csv.starts_with("r1,r2,r3,lambda,lambda_star,margin,pass\n"));
        let back: ReportBundle = serde_json::from_str(&emit_report(&a, Format::Json).unwrap()).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn sig6_formatting() {
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(0.5), "0.5");
        assert_eq!(sig6(2.0f64.ln()), "0.693147");
        assert_eq!(sig6(123456789.0), "1.23457e8");
        assert_eq!(sig6(-1.0e-7), "-1e-7");
        assert_eq!(sig6(1234.5678), "1234.57");
        assert_eq!(sig6(1.0 / 3.0), "0.333333");
    }

    #[test]
    fn format_parsing() {
        assert_eq!("csv".parse::<Format>().unwrap(), Format::Csv);
        assert!(matches!("xml".parse::<Format>(), Err(Error::UnsupportedFormat(_))));
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.txt");
        write_atomic(&p, "one").unwrap();
        write_atomic(&p, "two").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}

#[cfg(test)]
mod bundled {
    use super::*;

    fn load(name: &str) -> ExperimentConfig {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name);
        ExperimentConfig::load(&path).unwrap()
    }

    #[test]
    fn hadamard_classical_is_equality() {
        let b = run_experiment(&load("hadamard-classical.json")).unwrap();
        assert!(b.summary.passed);
        assert!(b.rows.iter().all(|r| r.margin >= -1e-10));
        assert!(b.rows.iter().filter(|r| r.kind == "fundamental").all(|r| r.margin.abs() <= 1e-10));
    }

    #[test]
    fn riccati_border_calibrates() {
        let b = run_experiment(&load("riccati-border-calibrate.json")).unwrap();
        let c = b.summary.c.unwrap();
        print!("{}", emit_report(&b, Format::Table).unwrap());
        assert!(c > 0.0);
        assert!(b.summary.holdout.as_ref().unwrap().passed);
        assert!(b.summary.passed);
    }
}
