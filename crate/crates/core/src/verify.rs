//! Three-spheres margins, calibration of the free constant, energy-ratio
//! diagnostics and the Liouville contradiction step.

use serde::{Deserialize, Serialize};

use crate::ballstats::{empirical_lambda_star, profile, BallProfile, Geometry, LambdaStar, Source};
use crate::bounds::{
    lambda_exponent, lambda_formula, pcapacity, unit_sphere_area, BoundMode, CapacityConvention, RadiiTriple,
    ThreeSpheresBound,
};
use crate::error::{Error, Result};
use crate::params::{EnvelopeMode, Regime, StructuralParams};

/// Relative tolerance applied to the profile's oscillation scale.
pub const DEFAULT_RELATIVE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub triple: RadiiTriple,
    pub lambda_used: f64,
    pub margin: f64,
    pub tol: f64,
    pub passed: bool,
    pub dual: bool,
}

pub fn check_three_spheres(prof: &BallProfile, bound: &ThreeSpheresBound, dual: bool) -> Result<VerificationReport> {
    check_three_spheres_with_tol(prof, bound, dual, DEFAULT_RELATIVE_TOL * prof.scale())
}

/// `margin = λ M(r1) + (1-λ) M(r3) - M(r2)`, or `m(r2) - λ m(r1) - (1-λ) m(r3)`
/// when `dual`; evaluated as `(M3 - M2) - λ (M3 - M1)` so constant profiles
/// give exactly 0.
pub fn check_three_spheres_with_tol(
    prof: &BallProfile,
    bound: &ThreeSpheresBound,
    dual: bool,
    tol: f64,
) -> Result<VerificationReport> {
    if !(tol >= 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance {tol} must be nonnegative")));
    }
    bound.mode.check_regime(prof.params())?;
    let t = bound.triple;
    if prof.envelope() == EnvelopeMode::Constant && t.r3() > 1.0 {
        return Err(Error::InvalidArgument(format!(
            "the local inequality for a constant envelope needs r3 <= 1, got {}",
            t.r3()
        )));
    }
    let lambda = bound.lambda;
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::InvalidArgument(format!("lambda {lambda} outside (0, 1]")));
    }
    let (m1, n1) = prof.extrema_at(t.r1())?;
    let (m2, n2) = prof.extrema_at(t.r2())?;
    let (m3, n3) = prof.extrema_at(t.r3())?;
    let margin = if dual {
        (n2 - n3) - lambda * (n1 - n3)
    } else {
        (m3 - m2) - lambda * (m3 - m1)
    };
    Ok(VerificationReport {
        triple: t,
        lambda_used: lambda,
        margin,
        tol,
        passed: margin >= -tol,
        dual,
    })
}

/// One profile with the triples it contributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationMember {
    pub profile: BallProfile,
    pub triples: Vec<RadiiTriple>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub c_min: f64,
    pub family_size: usize,
    pub evaluations: usize,
    pub binding_triple: RadiiTriple,
    pub binding_member: usize,
    pub binding_lambda_star: f64,
}

/// `C_min = max -ln(λ*) / K` over every member and triple, where the
/// formula is `λ = exp(-C K)`.
pub fn calibrate_constant(members: &[CalibrationMember], mode: BoundMode) -> Result<CalibrationResult> {
    if mode.is_classical() {
        return Err(Error::InvalidArgument(format!("mode {mode} has no free constant")));
    }
    if members.iter().all(|m| m.triples.is_empty()) {
        return Err(Error::EmptyFamily);
    }
    let mut best: Option<(f64, RadiiTriple, usize, f64)> = None;
    let mut evaluations = 0;
    for (idx, member) in members.iter().enumerate() {
        mode.check_regime(member.profile.params())?;
        for t in &member.triples {
            let star = match empirical_lambda_star(&member.profile, t)? {
                LambdaStar::Value(v) => v,
                LambdaStar::All => {
                    return Err(Error::UnconstrainedLambda(format!(
                        "member {idx} has M(r3) = M(r1) at {:?}",
                        t.as_array()
                    )))
                }
            };
            if !(star > 0.0) {
                return Err(Error::Degenerate(format!(
                    "member {idx} has λ* = 0 at {:?}; no finite constant works",
                    t.as_array()
                )));
            }
            let k = lambda_exponent(mode, member.profile.params(), t)?;
            let c = -star.ln() / k;
            evaluations += 1;
            if best.is_none_or(|b| c > b.0) {
                best = Some((c, *t, idx, star));
            }
        }
    }
    let (c_min, binding_triple, binding_member, binding_lambda_star) = best.ok_or(Error::EmptyFamily)?;
    if !(c_min > 0.0) {
        return Err(Error::Degenerate("every λ* equals 1; the constant is unconstrained".into()));
    }
    Ok(CalibrationResult {
        c_min,
        family_size: members.len(),
        evaluations,
        binding_triple,
        binding_member,
        binding_lambda_star,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoldoutRow {
    pub member: usize,
    pub triple: RadiiTriple,
    pub lambda: f64,
    pub lambda_star: Option<f64>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldoutReport {
    pub c: f64,
    pub tol: f64,
    pub rows: Vec<HoldoutRow>,
    pub passed: bool,
}

/// Checks `lambda_formula(c) <= λ* + tol` on every member and triple.
pub fn validate_calibration(members: &[CalibrationMember], mode: BoundMode, c: f64, tol: f64) -> Result<HoldoutReport> {
    let mut rows = Vec::new();
    for (idx, member) in members.iter().enumerate() {
        for t in &member.triples {
            let lambda = lambda_formula(mode, member.profile.params(), t, c)?;
            let star = empirical_lambda_star(&member.profile, t)?;
            rows.push(HoldoutRow {
                member: idx,
                triple: *t,
                lambda,
                lambda_star: star.value(),
                passed: star.admits(lambda - tol),
            });
        }
    }
    if rows.is_empty() {
        return Err(Error::EmptyFamily);
    }
    let passed = rows.iter().all(|r| r.passed);
    Ok(HoldoutReport { c, tol, rows, passed })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiMode {
    /// `φ(t) = -log((M(r3) - t + ε) / (M(r3) - M(r1) + ε))`
    LogSub,
    /// `φ(t) = -log((t - m(r3) + ε) / (m(r1) - m(r3) + ε))`
    LogSuper,
}

impl std::str::FromStr for PhiMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "log_sub" => Ok(PhiMode::LogSub),
            "log_super" => Ok(PhiMode::LogSuper),
            other => Err(Error::InvalidArgument(format!("unknown phi mode `{other}`"))),
        }
    }
}

const GL5: [(f64, f64); 5] = [
    (-0.906_179_845_938_664, 0.236_926_885_056_189),
    (-0.538_469_310_105_683, 0.478_628_670_499_366),
    (0.0, 0.568_888_888_888_889),
    (0.538_469_310_105_683, 0.478_628_670_499_366),
    (0.906_179_845_938_664, 0.236_926_885_056_189),
];

fn radial_integral(lo: f64, hi: f64, breaks: &[f64], mut f: impl FnMut(f64) -> f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    let mut pts: Vec<f64> = std::iter::once(lo)
        .chain(breaks.iter().copied().filter(|&b| b > lo && b < hi))
        .chain(std::iter::once(hi))
        .collect();
    pts.dedup();
    let mut total = 0.0;
    for w in pts.windows(2) {
        let (c, h) = (0.5 * (w[0] + w[1]), 0.5 * (w[1] - w[0]));
        for (x, wt) in GL5 {
            total += wt * f(c + h * x) * h;
        }
    }
    total
}

/// Ratio of `∫ |∇φ(u)|^p` to the bracket of the matching energy estimate.
///
/// * `p < n`: `∫_{B_m} / (δ^{-p} r3^{n-p})` with `m = (r2+r3)/2`, `δ = 1 - m/r3`;
/// * `p = n`: `∫_{B_m \ B_r2}` over the sum of the three logarithmic terms;
/// * `p > n`: `∫_{B_m \ B_r2}` over the capacity bracket.
///
/// Unit weights: `Cap` uses the standard normalisation. `epsilon` defaults
/// to `1e-8` of the oscillation entering `φ`.
pub fn energy_ratio_diagnostic(
    source: Source<'_>,
    center: &[f64],
    params: &StructuralParams,
    phi_mode: PhiMode,
    triple: &RadiiTriple,
    epsilon: Option<f64>,
) -> Result<f64> {
    let (r1, r2, r3) = (triple.r1(), triple.r2(), triple.r3());
    let balls = profile(source, center, &[r1, r3], Geometry::BallMax)?;
    let (top, osc) = match phi_mode {
        PhiMode::LogSub => (balls.max()[1], balls.max()[1] - balls.max()[0]),
        PhiMode::LogSuper => (balls.min()[1], balls.min()[0] - balls.min()[1]),
    };
    let eps = match epsilon {
        Some(e) if e >= 0.0 => e,
        Some(e) => return Err(Error::InvalidArgument(format!("epsilon {e} must be nonnegative"))),
        None if osc > 0.0 => 1e-8 * osc,
        None => 1e-8 * top.abs().max(1.0),
    };
    if osc == 0.0 && eps == 0.0 {
        return Err(Error::Degenerate("φ needs M(r3) > M(r1) or a positive epsilon".into()));
    }
    // |∇φ(u)| = |∇u| / gap(u)
    let gap = |u: f64| match phi_mode {
        PhiMode::LogSub => top - u + eps,
        PhiMode::LogSuper => u - top + eps,
    };
    let p = params.p();
    let n = params.n();
    let m = 0.5 * (r2 + r3);
    let (inner, bracket) = match params.regime() {
        Regime::SubN => {
            let delta = 1.0 - m / r3;
            (0.0, delta.powf(-p) * r3.powf(n as f64 - p))
        }
        Regime::BorderN => {
            let nf = n as f64;
            let s = (r3 / m).ln().powf(1.0 - nf) + (r2 / r1).ln().powf(1.0 - nf) + (r3 / r1).ln();
            (r2, s)
        }
        Regime::GtN => {
            let conv = CapacityConvention::standard(params);
            let nf = n as f64;
            let s = pcapacity(params, m, r3, &conv)? + pcapacity(params, r1, r2, &conv)? + r1.powf(nf - p)
                - r3.powf(nf - p);
            (r2, s)
        }
    };
    let density = |du: f64, u: f64| {
        let g = gap(u);
        if du == 0.0 {
            0.0
        } else {
            (du.abs() / g).powf(p)
        }
    };
    let energy = match source {
        Source::Radial(prof) => {
            let lo = inner.max(prof.r_in());
            let hi = m.min(prof.r_out());
            let mut err = None;
            let val = radial_integral(lo, hi, prof.mesh(), |r| {
                match (prof.derivative_at(r), prof.value_at(r)) {
                    (Ok(du), Ok(u)) => density(du, u) * r.powi(n as i32 - 1),
                    (Err(e), _) | (_, Err(e)) => {
                        err = Some(e);
                        0.0
                    }
                }
            });
            if let Some(e) = err {
                return Err(e);
            }
            val * unit_sphere_area(n)
        }
        Source::Exact { solution, r_in, r_out } => {
            let lo = inner.max(r_in);
            let hi = m.min(r_out);
            let cells = 512;
            let breaks: Vec<f64> = (1..cells).map(|i| lo + (hi - lo) * i as f64 / cells as f64).collect();
            radial_integral(lo, hi, &breaks, |r| {
                density(solution.derivative(r), solution.value(r)) * r.powi(n as i32 - 1)
            }) * unit_sphere_area(n)
        }
        Source::Grid { grid, .. } => {
            let h2 = grid.h() * grid.h();
            grid.interior_gradients()
                .into_iter()
                .filter(|(x, _, _)| {
                    let d = (x[0] - center[0]).hypot(x[1] - center[1]);
                    d < m && d >= inner
                })
                .map(|(_, u, g)| density(g[0].hypot(g[1]), u) * h2)
                .sum()
        }
        Source::Nodes { .. } => {
            return Err(Error::UnsupportedFormat(
                "node clouds carry no gradient; use a radial or grid source".into(),
            ))
        }
    };
    let ratio = energy / bracket;
    if !ratio.is_finite() {
        return Err(Error::NonFinite(format!("energy ratio {energy} / {bracket}")));
    }
    Ok(ratio)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiouvilleOutcome {
    pub contradiction: bool,
    /// `M(r2) - (1 - λ∞) M`
    pub lhs: f64,
    /// `λ∞ M(r1)`
    pub rhs: f64,
}

/// Contradiction iff `M(r2) - (1 - λ∞) M > λ∞ M(r1) + tol`, `tol = 1e-12 M`.
pub fn liouville_check(m_bound: f64, lambda_inf: f64, m_r1: f64, m_r2: f64) -> Result<LiouvilleOutcome> {
    if !(m_bound >= 0.0 && m_bound.is_finite()) {
        return Err(Error::InvalidArgument(format!("bound M = {m_bound} must be finite and nonnegative")));
    }
    if !(lambda_inf > 0.0 && lambda_inf < 1.0) {
        return Err(Error::InvalidArgument(format!("λ∞ = {lambda_inf} outside (0, 1)")));
    }
    for (name, v) in [("M(r1)", m_r1), ("M(r2)", m_r2)] {
        if !(0.0..=m_bound).contains(&v) {
            return Err(Error::InvalidArgument(format!("{name} = {v} outside [0, {m_bound}]")));
        }
    }
    let lhs = m_r2 - (1.0 - lambda_inf) * m_bound;
    let rhs = lambda_inf * m_r1;
    Ok(LiouvilleOutcome {
        contradiction: lhs > rhs + 1e-12 * m_bound,
        lhs,
        rhs,
    })
}
