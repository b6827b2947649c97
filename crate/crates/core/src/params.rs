//! Structural data of the equation class and the evaluable operators.
//!
//! An equation is `-div A(x,u,∇u) + B(x,u,∇u) = 0` where `A` satisfies
//! `A·h ≥ a0|h|^p`, `|A| ≤ a1|h|^(p-1)` and the drift obeys
//! `|B| ≤ g(x)|h|^(p-1)` for a growth envelope `g`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The quintuple `(n, p, a0, a1, b1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct StructuralParams {
    n: usize,
    p: f64,
    a0: f64,
    a1: f64,
    b1: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    n: usize,
    p: f64,
    a0: f64,
    a1: f64,
    b1: f64,
}

impl TryFrom<RawParams> for StructuralParams {
    type Error = Error;
    fn try_from(raw: RawParams) -> Result<Self> {
        StructuralParams::new(raw.n, raw.p, raw.a0, raw.a1, raw.b1)
    }
}

impl From<StructuralParams> for RawParams {
    fn from(s: StructuralParams) -> Self {
        RawParams {
            n: s.n,
            p: s.p,
            a0: s.a0,
            a1: s.a1,
            b1: s.b1,
        }
    }
}

/// Which side of the critical exponent `p = n` we are on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `1 < p < n`
    SubN,
    /// `p = n`
    BorderN,
    /// `p > n`
    GtN,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::SubN => "sub_n",
            Regime::BorderN => "border_n",
            Regime::GtN => "gt_n",
        })
    }
}

impl StructuralParams {
    pub fn new(n: usize, p: f64, a0: f64, a1: f64, b1: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParams(format!("dimension n = {n} < 2")));
        }
        if !(p.is_finite() && p > 1.0) {
            return Err(Error::InvalidParams(format!("exponent p = {p} must satisfy 1 < p < inf")));
        }
        if !(a0.is_finite() && a1.is_finite() && a0 > 0.0 && a0 <= a1) {
            return Err(Error::InvalidParams(format!(
                "need 0 < a0 <= a1 < inf, got a0 = {a0}, a1 = {a1}"
            )));
        }
        if !(b1.is_finite() && b1 >= 0.0) {
            return Err(Error::InvalidParams(format!("drift constant b1 = {b1} must be >= 0")));
        }
        Ok(StructuralParams { n, p, a0, a1, b1 })
    }

    /// Unit ellipticity and growth constants, `a0 = a1 = 1`.
    pub fn unit(n: usize, p: f64, b1: f64) -> Result<Self> {
        Self::new(n, p, 1.0, 1.0, b1)
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn p(&self) -> f64 {
        self.p
    }
    pub fn a0(&self) -> f64 {
        self.a0
    }
    pub fn a1(&self) -> f64 {
        self.a1
    }
    pub fn b1(&self) -> f64 {
        self.b1
    }

    pub fn with_b1(&self, b1: f64) -> Result<Self> {
        Self::new(self.n, self.p, self.a0, self.a1, b1)
    }

    pub fn regime(&self) -> Regime {
        let n = self.n as f64;
        if self.p < n {
            Regime::SubN
        } else if self.p == n {
            Regime::BorderN
        } else {
            Regime::GtN
        }
    }

    /// The fundamental-solution exponent `(p - n)/(p - 1)`.
    pub fn alpha(&self) -> f64 {
        (self.p - self.n as f64) / (self.p - 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeMode {
    /// `g = b1` on the unit ball and `b1/|x|` outside.
    GlobalDecay,
    /// `g = b1` everywhere (local theory, radii at most one).
    Constant,
}

impl FromStr for EnvelopeMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global_decay" | "global-decay" => Ok(EnvelopeMode::GlobalDecay),
            "constant" => Ok(EnvelopeMode::Constant),
            other => Err(Error::InvalidArgument(format!("unknown envelope mode `{other}`"))),
        }
    }
}

/// The drift growth envelope `g`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthEnvelope {
    pub mode: EnvelopeMode,
    pub b1: f64,
}

impl GrowthEnvelope {
    pub fn new(mode: EnvelopeMode, b1: f64) -> Result<Self> {
        if !(b1.is_finite() && b1 >= 0.0) {
            return Err(Error::InvalidParams(format!("envelope b1 = {b1} must be >= 0")));
        }
        Ok(GrowthEnvelope { mode, b1 })
    }

    pub fn eval(&self, radius: f64) -> f64 {
        envelope_eval(self, radius)
    }

    pub fn eval_at(&self, x: &[f64]) -> f64 {
        envelope_eval(self, norm(x))
    }
}

/// Evaluates the envelope at `|x| = radius`.
pub fn envelope_eval(env: &GrowthEnvelope, radius: f64) -> f64 {
    match env.mode {
        EnvelopeMode::Constant => env.b1,
        EnvelopeMode::GlobalDecay => {
            if radius <= 1.0 {
                env.b1
            } else {
                env.b1 / radius
            }
        }
    }
}

pub type FluxFn = dyn Fn(&[f64], f64, &[f64], &mut [f64]) + Send + Sync;
pub type WeightFn = dyn Fn(&[f64], f64) -> f64 + Send + Sync;
pub type DriftFn = dyn Fn(&[f64], f64, &[f64]) -> f64 + Send + Sync;

/// The principal part `A`.
#[derive(Clone)]
pub enum Flux {
    /// `A(x,t,h) = a(x,t) |h|^(p-2) h`; the grid and radial solvers need this form.
    Isotropic(Arc<WeightFn>),
    /// Any evaluable map writing `A(x,t,h)` into the output slice.
    General(Arc<FluxFn>),
}

/// The lower-order term `B`.
#[derive(Clone)]
pub enum Drift {
    Zero,
    /// `B(x,t,h) = c(x,t) g(x) |h|^(p-1)` with `c` valued in `[-1, 1]`.
    Envelope(Arc<WeightFn>),
    General(Arc<DriftFn>),
}

/// Evaluable operator pair with its structural constants.
#[derive(Clone)]
pub struct EquationSpec {
    name: String,
    params: StructuralParams,
    envelope: GrowthEnvelope,
    flux: Flux,
    drift: Drift,
}

impl fmt::Debug for EquationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EquationSpec")
            .field("name", &self.name)
            .field("params", &self.params)
            .field("envelope", &self.envelope)
            .finish_non_exhaustive()
    }
}

impl EquationSpec {
    /// The envelope inherits `b1` from `params`.
    pub fn new(
        name: impl Into<String>,
        params: StructuralParams,
        envelope_mode: EnvelopeMode,
        flux: Flux,
        drift: Drift,
    ) -> Self {
        EquationSpec {
            name: name.into(),
            params,
            envelope: GrowthEnvelope {
                mode: envelope_mode,
                b1: params.b1(),
            },
            flux,
            drift,
        }
    }

    pub fn preset(preset: Preset, params: StructuralParams, envelope_mode: EnvelopeMode) -> Result<Self> {
        preset.build(params, envelope_mode)
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn params(&self) -> &StructuralParams {
        &self.params
    }
    pub fn envelope(&self) -> &GrowthEnvelope {
        &self.envelope
    }
    pub fn flux_law(&self) -> &Flux {
        &self.flux
    }
    pub fn drift_law(&self) -> &Drift {
        &self.drift
    }

    /// Writes `A(x,t,h)` into `out`.
    pub fn flux(&self, x: &[f64], t: f64, h: &[f64], out: &mut [f64]) {
        match &self.flux {
            Flux::Isotropic(weight) => {
                let mag = norm(h);
                let k = if mag == 0.0 {
                    0.0
                } else {
                    weight(x, t) * mag.powf(self.params.p - 2.0)
                };
                for (o, hi) in out.iter_mut().zip(h) {
                    *o = k * hi;
                }
            }
            Flux::General(f) => f(x, t, h, out),
        }
    }

    /// `B(x,t,h)`.
    pub fn drift(&self, x: &[f64], t: f64, h: &[f64]) -> f64 {
        self.drift_with_magnitude(x, t, h, norm(h))
    }

    /// `B` with the gradient magnitude supplied by the caller; envelope drifts
    /// use `magnitude` in place of `|h|` so a discretisation can pass a
    /// regularised value. General drifts ignore it.
    pub fn drift_with_magnitude(&self, x: &[f64], t: f64, h: &[f64], magnitude: f64) -> f64 {
        match &self.drift {
            Drift::Zero => 0.0,
            Drift::Envelope(c) => {
                let g = self.envelope.eval_at(x);
                if g == 0.0 || magnitude == 0.0 {
                    0.0
                } else {
                    c(x, t) * g * magnitude.powf(self.params.p - 1.0)
                }
            }
            Drift::General(b) => b(x, t, h),
        }
    }

    /// Replaces the drift, keeping everything else.
    pub fn with_drift(&self, name: impl Into<String>, drift: Drift) -> Self {
        EquationSpec {
            name: name.into(),
            drift,
            ..self.clone()
        }
    }
}

/// Named operator presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    PLaplace,
    WeightedPLaplace,
    RiccatiExtremalPlus,
    RiccatiExtremalMinus,
}

impl Preset {
    pub const ALL: [Preset; 4] = [
        Preset::PLaplace,
        Preset::WeightedPLaplace,
        Preset::RiccatiExtremalPlus,
        Preset::RiccatiExtremalMinus,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Preset::PLaplace => "p-laplace",
            Preset::WeightedPLaplace => "weighted-p-laplace",
            Preset::RiccatiExtremalPlus => "riccati-extremal-plus",
            Preset::RiccatiExtremalMinus => "riccati-extremal-minus",
        }
    }

    /// Sign of the saturated drift, if any.
    pub fn drift_sign(&self) -> Option<f64> {
        match self {
            Preset::RiccatiExtremalPlus => Some(1.0),
            Preset::RiccatiExtremalMinus => Some(-1.0),
            _ => None,
        }
    }

    fn build(self, params: StructuralParams, envelope_mode: EnvelopeMode) -> Result<EquationSpec> {
        let unit_weight = || -> Result<Flux> {
            if params.a0() > 1.0 || params.a1() < 1.0 {
                return Err(Error::InvalidParams(format!(
                    "preset `{}` uses a unit weight and needs a0 <= 1 <= a1",
                    self.as_str()
                )));
            }
            Ok(Flux::Isotropic(Arc::new(|_: &[f64], _: f64| 1.0)))
        };
        let spec = match self {
            Preset::PLaplace => EquationSpec::new(self.as_str(), params, envelope_mode, unit_weight()?, Drift::Zero),
            Preset::WeightedPLaplace => {
                let mid = 0.5 * (params.a0() + params.a1());
                let amp = 0.5 * (params.a1() - params.a0());
                let weight = move |x: &[f64], _: f64| {
                    let tau = std::f64::consts::TAU;
                    mid + amp * (tau * x[0]).cos() * (tau * x[1]).cos()
                };
                EquationSpec::new(
                    self.as_str(),
                    params,
                    envelope_mode,
                    Flux::Isotropic(Arc::new(weight)),
                    Drift::Zero,
                )
            }
            Preset::RiccatiExtremalPlus | Preset::RiccatiExtremalMinus => {
                let sign = self.drift_sign().unwrap_or(1.0);
                EquationSpec::new(
                    self.as_str(),
                    params,
                    envelope_mode,
                    unit_weight()?,
                    Drift::Envelope(Arc::new(move |_: &[f64], _: f64| sign)),
                )
            }
        };
        Ok(spec)
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::UnknownPreset(s.to_string()))
    }
}

/// One structure-check sample `(x, t, h)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    pub t: f64,
    pub h: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StructureReport {
    pub passed: bool,
    /// min of `A·h - a0|h|^p`
    pub ellipticity_margin: f64,
    /// min of `a1|h|^(p-1) - |A|`
    pub growth_margin: f64,
    /// min of `g(x)|h|^(p-1) - |B|`
    pub drift_margin: f64,
    /// Index of the sample with the worst relative violation.
    pub worst_sample: usize,
}

pub const DEFAULT_STRUCTURE_TOL: f64 = 1e-12;

/// Sample-based check of the structural inequalities.
///
/// Margins are absolute; the pass test compares every margin against
/// `-tol` times the size of the two sides being compared. Zero-gradient
/// samples contribute margin 0.
pub fn check_structure(spec: &EquationSpec, samples: &[Sample], tol: f64) -> Result<StructureReport> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("structure check needs at least one sample".into()));
    }
    let params = spec.params();
    let n = params.n();
    let p = params.p();
    let mut ell = f64::INFINITY;
    let mut growth = f64::INFINITY;
    let mut drift = f64::INFINITY;
    let mut passed = true;
    let mut worst = (0usize, f64::INFINITY);
    let mut a = vec![0.0; n];

    for (idx, s) in samples.iter().enumerate() {
        if s.x.len() != n || s.h.len() != n {
            return Err(Error::InvalidArgument(format!(
                "sample {idx} has dimension ({}, {}) but n = {n}",
                s.x.len(),
                s.h.len()
            )));
        }
        if !(s.t.is_finite() && s.x.iter().chain(&s.h).all(|v| v.is_finite())) {
            return Err(Error::NonFinite(format!("sample {idx}")));
        }
        let hmag = norm(&s.h);
        let (m_ell, m_growth, m_drift, rel) = if hmag == 0.0 {
            (0.0, 0.0, 0.0, 0.0)
        } else {
            spec.flux(&s.x, s.t, &s.h, &mut a);
            let b = spec.drift(&s.x, s.t, &s.h);
            if !(a.iter().all(|v| v.is_finite()) && b.is_finite()) {
                return Err(Error::NonFinite(format!("operator output at sample {idx}")));
            }
            let a_dot_h: f64 = a.iter().zip(&s.h).map(|(ai, hi)| ai * hi).sum();
            let amag = norm(&a);
            let lower = params.a0() * hmag.powf(p);
            let upper = params.a1() * hmag.powf(p - 1.0);
            let env = spec.envelope().eval_at(&s.x) * hmag.powf(p - 1.0);
            let me = a_dot_h - lower;
            let mg = upper - amag;
            let md = env - b.abs();
            let rel = [
                me / (a_dot_h.abs() + lower).max(f64::MIN_POSITIVE),
                mg / (upper + amag).max(f64::MIN_POSITIVE),
                if env + b.abs() == 0.0 { 0.0 } else { md / (env + b.abs()) },
            ]
            .into_iter()
            .fold(f64::INFINITY, f64::min);
            (me, mg, md, rel)
        };
        ell = ell.min(m_ell);
        growth = growth.min(m_growth);
        drift = drift.min(m_drift);
        if rel < -tol {
            passed = false;
        }
        if rel < worst.1 {
            worst = (idx, rel);
        }
    }

    Ok(StructureReport {
        passed,
        ellipticity_margin: ell,
        growth_margin: growth,
        drift_margin: drift,
        worst_sample: worst.0,
    })
}

/// Deterministic quasi-random samples from a Halton sequence.
///
/// Points fill the ball of radius `x_max`, values `[-t_max, t_max]`, and
/// gradients the ball of radius `h_max`. The first sample has a zero gradient.
pub fn halton_samples(n: usize, count: usize, x_max: f64, t_max: f64, h_max: f64) -> Vec<Sample> {
    const PRIMES: [u64; 24] = [
        2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
    ];
    let dims = 2 * n + 1;
    assert!(dims <= PRIMES.len(), "halton_samples supports n <= 11");
    (0..count)
        .map(|k| {
            let coords: Vec<f64> = (0..dims).map(|d| radical_inverse(k as u64 + 1, PRIMES[d])).collect();
            let x: Vec<f64> = coords[..n].iter().map(|c| x_max * (2.0 * c - 1.0)).collect();
            let t = t_max * (2.0 * coords[n] - 1.0);
            let h: Vec<f64> = if k == 0 {
                vec![0.0; n]
            } else {
                coords[n + 1..].iter().map(|c| h_max * (2.0 * c - 1.0)).collect()
            };
            Sample { x, t, h }
        })
        .collect()
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut out = 0.0;
    while i > 0 {
        out += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    out
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
