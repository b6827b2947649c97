//! Radial solutions of `-(r^(n-1) a Φ(u'))' + r^(n-1) B = 0` on annuli,
//! `Φ(s) = |s|^(p-2) s`.
//!
//! Two closed-form families serve as ground truth: the fundamental
//! solutions of the drift-free equation and the extremal-drift family where
//! `B = ±(b1/r)|u'|^(p-1)` saturates the global-decay envelope. The numeric
//! solvers integrate the first-order system for `(u, w)` with
//! `w = r^(n-1) a Φ(u')` using classical RK4 on a mesh uniform in `log r`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{EnvelopeMode, EquationSpec, Flux, Regime, StructuralParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    ExactFundamental,
    ExactExtremalDrift,
    NumericIvp,
    NumericBvp,
}

impl Provenance {
    pub fn is_exact(&self) -> bool {
        matches!(self, Provenance::ExactFundamental | Provenance::ExactExtremalDrift)
    }
}

/// `Φ(s) = |s|^(p-2) s`.
pub fn phi(s: f64, p: f64) -> f64 {
    if s == 0.0 {
        0.0
    } else {
        s.abs().powf(p - 2.0) * s
    }
}

/// `Φ^{-1}(t) = |t|^(1/(p-1) - 1) t`, extended by 0 at `t = 0`.
pub fn phi_inv(t: f64, p: f64) -> f64 {
    if t == 0.0 {
        0.0
    } else {
        t.abs().powf(1.0 / (p - 1.0) - 1.0) * t
    }
}

/// Values of `u` and `u'` on a strictly increasing positive mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    mesh: Vec<f64>,
    values: Vec<f64>,
    derivative_values: Vec<f64>,
    params: StructuralParams,
    envelope: EnvelopeMode,
    provenance: Provenance,
}

impl RadialProfile {
    pub fn new(
        mesh: Vec<f64>,
        values: Vec<f64>,
        derivative_values: Vec<f64>,
        params: StructuralParams,
        envelope: EnvelopeMode,
        provenance: Provenance,
    ) -> Result<Self> {
        if mesh.len() < 2 || mesh.len() != values.len() || mesh.len() != derivative_values.len() {
            return Err(Error::InvalidArgument(format!(
                "profile arrays must share a length >= 2 (mesh {}, values {}, derivatives {})",
                mesh.len(),
                values.len(),
                derivative_values.len()
            )));
        }
        if !(mesh[0] > 0.0) || mesh.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("mesh must be positive and strictly increasing".into()));
        }
        if values.iter().chain(&derivative_values).chain(&mesh).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("radial profile entries".into()));
        }
        Ok(RadialProfile {
            mesh,
            values,
            derivative_values,
            params,
            envelope,
            provenance,
        })
    }

    pub fn mesh(&self) -> &[f64] {
        &self.mesh
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn derivative_values(&self) -> &[f64] {
        &self.derivative_values
    }
    pub fn params(&self) -> &StructuralParams {
        &self.params
    }
    pub fn envelope(&self) -> EnvelopeMode {
        self.envelope
    }
    pub fn provenance(&self) -> Provenance {
        self.provenance
    }
    pub fn r_in(&self) -> f64 {
        self.mesh[0]
    }
    pub fn r_out(&self) -> f64 {
        self.mesh[self.mesh.len() - 1]
    }

    pub fn with_envelope(mut self, envelope: EnvelopeMode) -> Self {
        self.envelope = envelope;
        self
    }

    /// `s u + c`; `s < 0` turns a subsolution profile into the mirrored one.
    pub fn affine(&self, s: f64, c: f64) -> RadialProfile {
        RadialProfile {
            values: self.values.iter().map(|u| s * u + c).collect(),
            derivative_values: self.derivative_values.iter().map(|d| s * d).collect(),
            ..self.clone()
        }
    }

    pub fn negated(&self) -> RadialProfile {
        self.affine(-1.0, 0.0)
    }

    fn locate(&self, r: f64) -> Result<usize> {
        let (lo, hi) = (self.r_in(), self.r_out());
        let slack = 1e-12 * hi;
        if !(r >= lo - slack && r <= hi + slack) {
            return Err(Error::OutsideDomain(format!("r = {r} outside [{lo}, {hi}]")));
        }
        let k = self.mesh.partition_point(|&m| m <= r);
        Ok(k.clamp(1, self.mesh.len() - 1) - 1)
    }

    /// Cubic Hermite interpolation of `u` using the stored derivatives.
    pub fn value_at(&self, r: f64) -> Result<f64> {
        let i = self.locate(r)?;
        let (a, b) = (self.mesh[i], self.mesh[i + 1]);
        let h = b - a;
        let t = ((r - a) / h).clamp(0.0, 1.0);
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        Ok(h00 * self.values[i]
            + h10 * h * self.derivative_values[i]
            + h01 * self.values[i + 1]
            + h11 * h * self.derivative_values[i + 1])
    }

    /// Linear interpolation of `u'`.
    pub fn derivative_at(&self, r: f64) -> Result<f64> {
        let i = self.locate(r)?;
        let (a, b) = (self.mesh[i], self.mesh[i + 1]);
        let t = ((r - a) / (b - a)).clamp(0.0, 1.0);
        Ok((1.0 - t) * self.derivative_values[i] + t * self.derivative_values[i + 1])
    }

    /// CSV with header `r,u,du`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        wtr.write_record(["r", "u", "du"])?;
        for ((r, u), du) in self.mesh.iter().zip(&self.values).zip(&self.derivative_values) {
            wtr.write_record([r.to_string(), u.to_string(), du.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Mesh uniform in `log r` with `steps` intervals; endpoints are exact.
pub fn geometric_mesh(r_in: f64, r_out: f64, steps: usize) -> Result<Vec<f64>> {
    if !(r_in > 0.0 && r_in < r_out && r_out.is_finite()) || steps == 0 {
        return Err(Error::InvalidArgument(format!(
            "mesh needs 0 < r_in < r_out and steps >= 1, got [{r_in}, {r_out}] with {steps} steps"
        )));
    }
    let ds = (r_out / r_in).ln() / steps as f64;
    let mut mesh: Vec<f64> = (0..=steps).map(|k| r_in * (k as f64 * ds).exp()).collect();
    mesh[0] = r_in;
    mesh[steps] = r_out;
    Ok(mesh)
}

/// Closed-form radial solution evaluable at any `r > 0`.
pub trait RadialSolution: Send + Sync {
    fn params(&self) -> &StructuralParams;
    fn value(&self, r: f64) -> f64;
    fn derivative(&self, r: f64) -> f64;
    fn provenance(&self) -> Provenance;

    /// Envelope mode under which the drift (if any) is defined.
    fn envelope(&self) -> EnvelopeMode {
        EnvelopeMode::GlobalDecay
    }

    fn sample(&self, mesh: &[f64]) -> Result<RadialProfile> {
        RadialProfile::new(
            mesh.to_vec(),
            mesh.iter().map(|&r| self.value(r)).collect(),
            mesh.iter().map(|&r| self.derivative(r)).collect(),
            *self.params(),
            self.envelope(),
            self.provenance(),
        )
    }

    /// `w(r) = r^(n-1) Φ(u'(r))` (unit weight).
    fn flux_density(&self, r: f64) -> f64 {
        let p = self.params();
        r.powi(p.n() as i32 - 1) * phi(self.derivative(r), p.p())
    }
}

/// `u = a + b r^α` for `p != n`, `u = a - b log r` for `p = n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FundamentalSolution {
    params: StructuralParams,
    a: f64,
    b: f64,
}

pub fn fundamental_solution(params: &StructuralParams, a: f64, b: f64) -> FundamentalSolution {
    FundamentalSolution { params: *params, a, b }
}

impl RadialSolution for FundamentalSolution {
    fn params(&self) -> &StructuralParams {
        &self.params
    }
    fn value(&self, r: f64) -> f64 {
        match self.params.regime() {
            Regime::BorderN => self.a - self.b * r.ln(),
            _ => self.a + self.b * r.powf(self.params.alpha()),
        }
    }
    fn derivative(&self, r: f64) -> f64 {
        match self.params.regime() {
            Regime::BorderN => 0.0 - self.b / r,
            _ => {
                let al = self.params.alpha();
                0.0 + self.b * al * r.powf(al - 1.0)
            }
        }
    }
    fn provenance(&self) -> Provenance {
        Provenance::ExactFundamental
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftSign {
    Plus,
    Minus,
}

impl DriftSign {
    pub fn value(&self) -> f64 {
        match self {
            DriftSign::Plus => 1.0,
            DriftSign::Minus => -1.0,
        }
    }

    pub fn flipped(&self) -> DriftSign {
        match self {
            DriftSign::Plus => DriftSign::Minus,
            DriftSign::Minus => DriftSign::Plus,
        }
    }
}

impl std::str::FromStr for DriftSign {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plus" | "+" => Ok(DriftSign::Plus),
            "minus" | "-" => Ok(DriftSign::Minus),
            other => Err(Error::InvalidArgument(format!("unknown drift sign `{other}`"))),
        }
    }
}

/// Solution of `(r^(n-1) u'^(p-1))' = ±(b1/r) r^(n-1) u'^(p-1)` with
/// `u' = s r^β`, `β = (±b1 + 1 - n)/(p - 1)`, for `r >= r_in >= 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtremalDriftSolution {
    params: StructuralParams,
    sign: DriftSign,
    u0: f64,
    r_in: f64,
    scale: f64,
    beta: f64,
}

pub fn extremal_drift_solution(
    params: &StructuralParams,
    sign: DriftSign,
    u0: f64,
    r_in: f64,
) -> Result<ExtremalDriftSolution> {
    if !(r_in >= 1.0 && r_in.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "extremal drift family needs r_in >= 1 (envelope is b1/r there), got {r_in}"
        )));
    }
    let beta = (sign.value() * params.b1() + 1.0 - params.n() as f64) / (params.p() - 1.0);
    Ok(ExtremalDriftSolution {
        params: *params,
        sign,
        u0,
        r_in,
        scale: 1.0,
        beta,
    })
}

impl ExtremalDriftSolution {
    /// Multiplies `u'` by `s > 0`; the equation is homogeneous in `u'`.
    pub fn scaled(mut self, s: f64) -> Result<Self> {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::InvalidArgument(format!("scale {s} must be positive")));
        }
        self.scale = s;
        Ok(self)
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn sign(&self) -> DriftSign {
        self.sign
    }
    pub fn r_in(&self) -> f64 {
        self.r_in
    }
}

impl RadialSolution for ExtremalDriftSolution {
    fn params(&self) -> &StructuralParams {
        &self.params
    }
    fn value(&self, r: f64) -> f64 {
        let e = self.beta + 1.0;
        if e.abs() < 1e-300 {
            self.u0 + self.scale * (r / self.r_in).ln()
        } else {
            // (r^e - r_in^e)/e written to stay accurate for small |e|
            let base = self.r_in.powf(e);
            self.u0 + self.scale * base * ((e * (r / self.r_in).ln()).exp_m1()) / e
        }
    }
    fn derivative(&self, r: f64) -> f64 {
        self.scale * r.powf(self.beta)
    }
    fn provenance(&self) -> Provenance {
        Provenance::ExactExtremalDrift
    }
}

const GL5_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683,
    0.0,
    0.538_469_310_105_683,
    0.906_179_845_938_664,
];
const GL5_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189,
    0.478_628_670_499_366,
    0.568_888_888_888_889,
    0.478_628_670_499_366,
    0.236_926_885_056_189,
];

fn gauss5(a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    GL5_NODES.iter().zip(GL5_WEIGHTS).map(|(x, w)| w * f(c + h * x)).sum::<f64>() * h
}

fn radial_weight(spec: &EquationSpec, x: &[f64], u: f64) -> Result<f64> {
    match spec.flux_law() {
        Flux::Isotropic(a) => Ok(a(x, u)),
        Flux::General(_) => Err(Error::UnsupportedOperator(
            "radial reduction needs an isotropic flux a(x,t)|h|^(p-2)h".into(),
        )),
    }
}

/// Max over mesh cells of the integrated residual
/// `|w(b) - w(a) - ∫_a^b r^(n-1) B dr| / (b - a)`, with 5-point Gauss quadrature.
pub fn integrated_residual(sol: &dyn RadialSolution, spec: &EquationSpec, mesh: &[f64]) -> Result<f64> {
    let n = spec.params().n();
    let p = spec.params().p();
    let mut x = vec![0.0; n];
    let w_at = |r: f64, x: &mut Vec<f64>| -> Result<f64> {
        x[0] = r;
        let a = radial_weight(spec, x, sol.value(r))?;
        Ok(r.powi(n as i32 - 1) * a * phi(sol.derivative(r), p))
    };
    let mut worst: f64 = 0.0;
    for cell in mesh.windows(2) {
        let (a, b) = (cell[0], cell[1]);
        let dw = w_at(b, &mut x)? - w_at(a, &mut x)?;
        let src = gauss5(a, b, |r| {
            let mut xr = vec![0.0; n];
            xr[0] = r;
            let mut gr = vec![0.0; n];
            gr[0] = sol.derivative(r);
            r.powi(n as i32 - 1) * spec.drift(&xr, sol.value(r), &gr)
        });
        worst = worst.max((dw - src).abs() / (b - a));
    }
    Ok(worst)
}

/// Weak-form pairing `ω ∫ (a Φ(u') η' + B η) r^(n-1) dr` against the
/// nonnegative bump `η = sin²(π (r-lo)/(hi-lo))` on `[lo, hi]`.
///
/// Nonpositive for subsolutions and nonnegative for supersolutions of `spec`.
pub fn weak_form_pairing(sol: &dyn RadialSolution, spec: &EquationSpec, lo: f64, hi: f64) -> Result<f64> {
    if !(lo > 0.0 && lo < hi) {
        return Err(Error::InvalidArgument(format!("bump support [{lo}, {hi}] invalid")));
    }
    let n = spec.params().n();
    let p = spec.params().p();
    let len = hi - lo;
    let cells = 64;
    let mut total = 0.0;
    let mut err = None;
    for k in 0..cells {
        let a = lo + len * k as f64 / cells as f64;
        let b = lo + len * (k + 1) as f64 / cells as f64;
        total += gauss5(a, b, |r| {
            let mut x = vec![0.0; n];
            x[0] = r;
            let u = sol.value(r);
            let du = sol.derivative(r);
            let mut h = vec![0.0; n];
            h[0] = du;
            let th = std::f64::consts::PI * (r - lo) / len;
            let eta = th.sin().powi(2);
            let deta = 2.0 * th.sin() * th.cos() * std::f64::consts::PI / len;
            let weight = match radial_weight(spec, &x, u) {
                Ok(w) => w,
                Err(e) => {
                    err = Some(e);
                    0.0
                }
            };
            (weight * phi(du, p) * deta + spec.drift(&x, u, &h) * eta) * r.powi(n as i32 - 1)
        });
    }
    if let Some(e) = err {
        return Err(e);
    }
    Ok(total * crate::bounds::unit_sphere_area(n))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IvpOptions {
    /// Blow-up threshold for `|u|` and `|u'|`.
    pub cap: f64,
}

impl Default for IvpOptions {
    fn default() -> Self {
        IvpOptions { cap: 1e12 }
    }
}

pub fn solve_radial_ivp(
    spec: &EquationSpec,
    r_in: f64,
    u_in: f64,
    du_in: f64,
    r_out: f64,
    steps: usize,
) -> Result<RadialProfile> {
    solve_radial_ivp_with(spec, r_in, u_in, du_in, r_out, steps, &IvpOptions::default())
}

/// RK4 for `(u, w)` in the variable `s = log r`:
/// `u_s = r Φ^{-1}(w r^(1-n) / a)`, `w_s = r^n B`.
pub fn solve_radial_ivp_with(
    spec: &EquationSpec,
    r_in: f64,
    u_in: f64,
    du_in: f64,
    r_out: f64,
    steps: usize,
    opts: &IvpOptions,
) -> Result<RadialProfile> {
    if steps < 16 {
        return Err(Error::InvalidArgument(format!("need at least 16 steps, got {steps}")));
    }
    if !(u_in.is_finite() && du_in.is_finite()) {
        return Err(Error::NonFinite("initial data".into()));
    }
    let mesh = geometric_mesh(r_in, r_out, steps)?;
    let params = spec.params();
    let n = params.n();
    let p = params.p();
    let ds = (r_out / r_in).ln() / steps as f64;
    let s0 = r_in.ln();

    let mut x = vec![0.0; n];
    let mut h = vec![0.0; n];
    // returns (u_s, w_s, u')
    let mut rhs = |s: f64, u: f64, w: f64| -> Result<(f64, f64, f64)> {
        let r = s.exp();
        x[0] = r;
        let a = radial_weight(spec, &x, u)?;
        let arg = w * r.powi(1 - n as i32) / a;
        if !arg.is_finite() {
            return Err(Error::NonFinite(format!("flux w = {w} at r = {r}")));
        }
        let du = phi_inv(arg, p);
        h[0] = du;
        let b = spec.drift(&x, u, &h);
        Ok((r * du, r.powi(n as i32) * b, du))
    };

    let mut x0 = vec![0.0; n];
    x0[0] = r_in;
    let w0 = r_in.powi(n as i32 - 1) * radial_weight(spec, &x0, u_in)? * phi(du_in, p);
    let mut values = Vec::with_capacity(steps + 1);
    let mut derivs = Vec::with_capacity(steps + 1);
    values.push(u_in);
    derivs.push(du_in);
    let (mut u, mut w) = (u_in, w0);
    for k in 0..steps {
        let s = s0 + k as f64 * ds;
        let (k1u, k1w, _) = rhs(s, u, w)?;
        let (k2u, k2w, _) = rhs(s + 0.5 * ds, u + 0.5 * ds * k1u, w + 0.5 * ds * k1w)?;
        let (k3u, k3w, _) = rhs(s + 0.5 * ds, u + 0.5 * ds * k2u, w + 0.5 * ds * k2w)?;
        let (k4u, k4w, _) = rhs(s + ds, u + ds * k3u, w + ds * k3w)?;
        u += ds / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
        w += ds / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w);
        let r = mesh[k + 1];
        let (_, _, du) = rhs(r.ln(), u, w)?;
        if !(u.is_finite() && du.is_finite()) || u.abs() > opts.cap || du.abs() > opts.cap {
            return Err(Error::BlowUp {
                r,
                u: u.abs(),
                du: du.abs(),
            });
        }
        values.push(u);
        derivs.push(du);
    }
    RadialProfile::new(mesh, values, derivs, *params, spec.envelope().mode, Provenance::NumericIvp)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BvpOptions {
    /// Largest `|u'(r_in)|` tried while bracketing.
    pub derivative_cap: f64,
    pub max_iter: usize,
    pub ivp: IvpOptions,
}

impl Default for BvpOptions {
    fn default() -> Self {
        BvpOptions {
            derivative_cap: 1e8,
            max_iter: 200,
            ivp: IvpOptions::default(),
        }
    }
}

pub fn solve_radial_bvp(
    spec: &EquationSpec,
    r_in: f64,
    u_in: f64,
    r_out: f64,
    u_out: f64,
    steps: usize,
    tol: f64,
) -> Result<RadialProfile> {
    solve_radial_bvp_with(spec, r_in, u_in, r_out, u_out, steps, tol, &BvpOptions::default())
}

/// Shooting on `u'(r_in)`: geometric bracketing then Illinois regula falsi,
/// bisecting whenever a bracket end blew up.
#[allow(clippy::too_many_arguments)]
pub fn solve_radial_bvp_with(
    spec: &EquationSpec,
    r_in: f64,
    u_in: f64,
    r_out: f64,
    u_out: f64,
    steps: usize,
    tol: f64,
    opts: &BvpOptions,
) -> Result<RadialProfile> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance {tol} must be positive")));
    }
    if !u_out.is_finite() {
        return Err(Error::NonFinite("u_out".into()));
    }
    let shoot = |d: f64| -> Result<(f64, Option<RadialProfile>)> {
        match solve_radial_ivp_with(spec, r_in, u_in, d, r_out, steps, &opts.ivp) {
            Ok(prof) => {
                let miss = prof.values()[prof.values().len() - 1] - u_out;
                Ok((miss, Some(prof)))
            }
            // overshoot in the direction of d (monotone shooting map)
            Err(Error::BlowUp { .. }) => Ok((d.signum() * f64::INFINITY, None)),
            Err(e) => Err(e),
        }
    };
    let finish = |prof: RadialProfile| RadialProfile {
        provenance: Provenance::NumericBvp,
        ..prof
    };

    let (f0, p0) = shoot(0.0)?;
    if f0.abs() <= tol {
        if let Some(p) = p0 {
            return Ok(finish(p));
        }
    }
    let mut guess = (u_out - u_in) / (r_out - r_in);
    if guess == 0.0 || !guess.is_finite() {
        guess = if f0 > 0.0 { -1.0 } else { 1.0 };
    }
    // bracket
    let (mut lo, mut flo) = (0.0, f0);
    let (mut hi, mut fhi) = (guess, shoot(guess)?.0);
    while fhi.signum() == flo.signum() && fhi != 0.0 {
        lo = hi;
        flo = fhi;
        hi *= 2.0;
        if hi.abs() > opts.derivative_cap {
            return Err(Error::NoBracket(format!(
                "u(r_out) - u_out keeps sign {} up to |u'(r_in)| = {:e}",
                flo.signum(),
                opts.derivative_cap
            )));
        }
        fhi = shoot(hi)?.0;
    }
    let mut side = 0i8;
    let mut history = Vec::new();
    for _ in 0..opts.max_iter {
        let mid = if flo.is_finite() && fhi.is_finite() && fhi != flo {
            (lo * fhi - hi * flo) / (fhi - flo)
        } else {
            0.5 * (lo + hi)
        };
        let (fm, prof) = shoot(mid)?;
        history.push(fm.abs());
        if fm.abs() <= tol {
            if let Some(p) = prof {
                return Ok(finish(p));
            }
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
            if side == -1 {
                fhi *= 0.5;
            }
            side = -1;
        } else {
            hi = mid;
            fhi = fm;
            if side == 1 {
                flo *= 0.5;
            }
            side = 1;
        }
        if (hi - lo).abs() <= f64::EPSILON * lo.abs().max(hi.abs()) {
            break;
        }
    }
    Err(Error::NonConvergence {
        iterations: history.len(),
        residual: history.last().copied().unwrap_or(f64::INFINITY),
        history,
    })
}
