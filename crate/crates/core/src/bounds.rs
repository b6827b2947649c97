//! Closed-form convexity parameters and condenser capacities.
//!
//! Every `lambda` here is an interpolation weight for
//! `M(r2) <= lambda M(r1) + (1 - lambda) M(r3)`. The explicit formulas carry
//! an unknown constant `C` and have the shape `lambda = exp(-C K)` where the
//! exponent `K` depends only on the radii ratios; [`lambda_exponent`] returns
//! `K` so callers can calibrate `C`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{Regime, StructuralParams};

/// Concentric radii `0 < r1 < r2 < r3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct RadiiTriple {
    r1: f64,
    r2: f64,
    r3: f64,
}

impl RadiiTriple {
    pub fn new(r1: f64, r2: f64, r3: f64) -> Result<Self> {
        if !(r1.is_finite() && r2.is_finite() && r3.is_finite()) {
            return Err(Error::InvalidTriple(format!("non-finite radii ({r1}, {r2}, {r3})")));
        }
        if !(0.0 < r1 && r1 < r2 && r2 < r3) {
            return Err(Error::InvalidTriple(format!("need 0 < r1 < r2 < r3, got ({r1}, {r2}, {r3})")));
        }
        Ok(RadiiTriple { r1, r2, r3 })
    }

    pub fn r1(&self) -> f64 {
        self.r1
    }
    pub fn r2(&self) -> f64 {
        self.r2
    }
    pub fn r3(&self) -> f64 {
        self.r3
    }
    pub fn as_array(&self) -> [f64; 3] {
        [self.r1, self.r2, self.r3]
    }

    pub fn scaled(&self, k: f64) -> Result<Self> {
        RadiiTriple::new(k * self.r1, k * self.r2, k * self.r3)
    }

    /// `r1/r2 < r2/r3`, the ordering required by the `1 < p < n` theory.
    pub fn ratios_ordered(&self) -> bool {
        self.r1 / self.r2 < self.r2 / self.r3
    }
}

impl TryFrom<[f64; 3]> for RadiiTriple {
    type Error = Error;
    fn try_from(r: [f64; 3]) -> Result<Self> {
        RadiiTriple::new(r[0], r[1], r[2])
    }
}

impl From<RadiiTriple> for [f64; 3] {
    fn from(t: RadiiTriple) -> Self {
        t.as_array()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundMode {
    /// Fundamental-solution interpolation, `1 < p < n`.
    ClassicalSubN,
    /// Fundamental-solution interpolation, `p = n`.
    ClassicalN,
    /// Explicit `lambda` for solutions with drift, `p = n`.
    BorderN,
    /// Explicit `lambda` without drift, `p = n`.
    AHarmonicN,
    /// Explicit `lambda` through the capacity expression, `p > n`.
    PGtN,
}

impl BoundMode {
    pub fn is_classical(&self) -> bool {
        matches!(self, BoundMode::ClassicalSubN | BoundMode::ClassicalN)
    }

    pub fn regime(&self) -> Regime {
        match self {
            BoundMode::ClassicalSubN => Regime::SubN,
            BoundMode::ClassicalN | BoundMode::BorderN | BoundMode::AHarmonicN => Regime::BorderN,
            BoundMode::PGtN => Regime::GtN,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            BoundMode::ClassicalSubN => "classical_sub_n",
            BoundMode::ClassicalN => "classical_n",
            BoundMode::BorderN => "border_n",
            BoundMode::AHarmonicN => "a_harmonic_n",
            BoundMode::PGtN => "p_gt_n",
        }
    }

    /// Classical mode for the regime of `params`, if there is one.
    pub fn classical_for(params: &StructuralParams) -> Result<Self> {
        match params.regime() {
            Regime::SubN => Ok(BoundMode::ClassicalSubN),
            Regime::BorderN => Ok(BoundMode::ClassicalN),
            Regime::GtN => Err(Error::RegimeMismatch("no classical weight for p > n".into())),
        }
    }

    pub fn check_regime(&self, params: &StructuralParams) -> Result<()> {
        if self.regime() == params.regime() {
            Ok(())
        } else {
            Err(Error::RegimeMismatch(format!(
                "mode {} needs regime {}, parameters are in regime {} (p = {}, n = {})",
                self.as_str(),
                self.regime(),
                params.regime(),
                params.p(),
                params.n()
            )))
        }
    }
}

impl fmt::Display for BoundMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BoundMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.replace('-', "_");
        [
            BoundMode::ClassicalSubN,
            BoundMode::ClassicalN,
            BoundMode::BorderN,
            BoundMode::AHarmonicN,
            BoundMode::PGtN,
        ]
        .into_iter()
        .find(|m| m.as_str() == norm)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown bound mode `{s}`")))
    }
}

/// A convexity parameter attached to its radii and provenance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThreeSpheresBound {
    pub triple: RadiiTriple,
    pub lambda: f64,
    pub mode: BoundMode,
    /// Calibration constant; `None` for the classical modes.
    pub c: Option<f64>,
}

impl ThreeSpheresBound {
    pub fn classical(params: &StructuralParams, triple: RadiiTriple) -> Result<Self> {
        let mode = BoundMode::classical_for(params)?;
        Ok(ThreeSpheresBound {
            triple,
            lambda: classical_weight(params, &triple)?,
            mode,
            c: None,
        })
    }

    pub fn explicit(mode: BoundMode, params: &StructuralParams, triple: RadiiTriple, c: f64) -> Result<Self> {
        Ok(ThreeSpheresBound {
            triple,
            lambda: lambda_formula(mode, params, &triple, c)?,
            mode,
            c: Some(c),
        })
    }

    /// A bound with a caller-chosen `lambda` (e.g. an observed minimum).
    pub fn with_lambda(mode: BoundMode, triple: RadiiTriple, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(Error::InvalidArgument(format!("lambda = {lambda} outside (0, 1]")));
        }
        Ok(ThreeSpheresBound {
            triple,
            lambda,
            mode,
            c: None,
        })
    }
}

/// Normalisation multiplying the condenser capacity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacityConvention {
    pub normalization: f64,
}

impl CapacityConvention {
    pub fn new(normalization: f64) -> Result<Self> {
        if !(normalization.is_finite() && normalization > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "capacity normalization {normalization} must be positive"
            )));
        }
        Ok(CapacityConvention { normalization })
    }

    /// `ω_{n-1} |α|^(p-1)` for `p != n` and `ω_{n-1}` for `p = n`.
    pub fn standard(params: &StructuralParams) -> Self {
        let omega = unit_sphere_area(params.n());
        let normalization = match params.regime() {
            Regime::BorderN => omega,
            _ => omega * params.alpha().abs().powf(params.p() - 1.0),
        };
        CapacityConvention { normalization }
    }
}

/// Surface area of the unit sphere in `R^n`.
pub fn unit_sphere_area(n: usize) -> f64 {
    // A(1) = 2, A(2) = 2π, A(d + 2) = 2π A(d) / d
    let (mut d, mut area) = if n % 2 == 1 { (1usize, 2.0) } else { (2usize, 2.0 * PI) };
    while d < n {
        area *= 2.0 * PI / d as f64;
        d += 2;
    }
    area
}

/// Interpolation weight from the radial fundamental solutions (`p <= n`).
pub fn classical_weight(params: &StructuralParams, triple: &RadiiTriple) -> Result<f64> {
    let (r1, r2, r3) = (triple.r1, triple.r2, triple.r3);
    match params.regime() {
        Regime::BorderN => Ok((r3 / r2).ln() / (r3 / r1).ln()),
        Regime::SubN => {
            let a = params.alpha();
            // ratios keep the powers O(1) for extreme scales
            let q2 = (r2 / r3).powf(a);
            let q1 = (r1 / r3).powf(a);
            Ok((q2 - 1.0) / (q1 - 1.0))
        }
        Regime::GtN => Err(Error::RegimeMismatch("classical weight needs p <= n".into())),
    }
}

/// Convexity coordinate `σ(r)`: `log r` for `p = n` and `-r^α` for `p < n`.
pub fn transformed_radius(params: &StructuralParams, r: f64) -> Result<f64> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::InvalidArgument(format!("radius {r} must be positive")));
    }
    match params.regime() {
        Regime::BorderN => Ok(r.ln()),
        Regime::SubN => Ok(-r.powf(params.alpha())),
        Regime::GtN => Err(Error::RegimeMismatch("no convexity coordinate for p > n".into())),
    }
}

/// Variational p-capacity of the condenser `(B_r, B_R)`.
pub fn pcapacity(params: &StructuralParams, r: f64, big_r: f64, conv: &CapacityConvention) -> Result<f64> {
    if !(r > 0.0 && r < big_r && big_r.is_finite()) {
        return Err(Error::InvalidArgument(format!("capacity needs 0 < r < R, got r = {r}, R = {big_r}")));
    }
    let p = params.p();
    let base = match params.regime() {
        Regime::BorderN => (big_r / r).ln(),
        Regime::GtN => {
            let a = params.alpha();
            big_r.powf(a) - r.powf(a)
        }
        Regime::SubN => {
            let a = params.alpha();
            r.powf(a) - big_r.powf(a)
        }
    };
    Ok(conv.normalization * base.powf(1.0 - p))
}

/// `ln(1/λ∞)`-type exponent `K` such that `lambda = exp(-C K)`.
pub fn lambda_exponent(mode: BoundMode, params: &StructuralParams, triple: &RadiiTriple) -> Result<f64> {
    lambda_exponent_with(mode, params, triple, &CapacityConvention::standard(params))
}

pub fn lambda_exponent_with(
    mode: BoundMode,
    params: &StructuralParams,
    triple: &RadiiTriple,
    conv: &CapacityConvention,
) -> Result<f64> {
    mode.check_regime(params)?;
    let (r1, r2, r3) = (triple.r1, triple.r2, triple.r3);
    let n = params.n() as f64;
    let mid = 0.5 * (r2 + r3);
    // T = log((r2 + r3) / (2 r2)) > 0 for every valid triple
    let t = (mid / r2).ln();
    let outer = (r3 / mid).ln();
    match mode {
        BoundMode::BorderN => {
            let s = outer.powf(1.0 - n) + (r2 / r1).ln().powf(1.0 - n) + (r3 / r1).ln();
            Ok(s.powf(1.0 / n) * t.powf(-1.0 / n))
        }
        BoundMode::AHarmonicN => Ok(outer.powf((1.0 - n) / n) * t.powf(-1.0 / n)),
        BoundMode::PGtN => capacity_lambda(params, triple, conv),
        BoundMode::ClassicalSubN | BoundMode::ClassicalN => Err(Error::InvalidArgument(format!(
            "mode {} has no calibrated exponent; use classical_weight",
            mode.as_str()
        ))),
    }
}

/// The capacity expression `Λ` of the `p > n` theory, evaluated verbatim.
pub fn capacity_lambda(params: &StructuralParams, triple: &RadiiTriple, conv: &CapacityConvention) -> Result<f64> {
    if params.regime() != Regime::GtN {
        return Err(Error::RegimeMismatch("capacity Λ needs p > n".into()));
    }
    let (r1, r2, r3) = (triple.r1, triple.r2, triple.r3);
    let n = params.n() as f64;
    let p = params.p();
    let mid = 0.5 * (r2 + r3);
    let t = (mid / r2).ln();
    let bracket = pcapacity(params, mid, r3, conv)? + pcapacity(params, r1, r2, conv)? + r1.powf(n - p) - r3.powf(n - p);
    Ok(t.powf(-1.0 / p) * mid.powf(1.0 - n / p) * bracket.powf(1.0 / p))
}

/// Explicit convexity parameter `exp(-C K)`.
pub fn lambda_formula(mode: BoundMode, params: &StructuralParams, triple: &RadiiTriple, c: f64) -> Result<f64> {
    lambda_formula_with(mode, params, triple, c, &CapacityConvention::standard(params))
}

pub fn lambda_formula_with(
    mode: BoundMode,
    params: &StructuralParams,
    triple: &RadiiTriple,
    c: f64,
    conv: &CapacityConvention,
) -> Result<f64> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidArgument(format!("constant C = {c} must be positive")));
    }
    let k = lambda_exponent_with(mode, params, triple, conv)?;
    Ok((-c * k).exp())
}

/// Limit of the borderline `lambda` as `r3 → ∞`.
pub fn lambda_infinity(c: f64) -> Result<f64> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidArgument(format!("constant C = {c} must be positive")));
    }
    Ok((-c).exp())
}
