//! Finite differences for the regularised equation on planar disks and annuli.
//!
//! The lattice is square with spacing `h` and a node at the domain centre.
//! Nodes strictly inside the domain (level set below `-h/20`) are unknowns;
//! their non-interior 4-neighbours form the boundary band. Stencil arms that
//! reach a band node end at the boundary crossing instead (Shortley–Weller),
//! where the Dirichlet data is sampled, so quadratics are reproduced exactly.
//!
//! The discrete operator at an interior node `P` with arms of length `l_k` is
//!
//! ```text
//! R_P = -Σ_d 2/(l_d+ + l_d-) [F_d+ - F_d-] + B(x_P, u_P, ∇u_P)
//! F   = a(x_f, u_f) (|g_f|² + ε²)^((p-2)/2) (u_k - u_P)/l_k
//! ```
//!
//! with `g_f` the face gradient (arm difference plus the averaged tangential
//! nodal derivative). Envelope drifts use `(|∇u|² + ε²)^((p-2)/2) |∇u|` in
//! place of `|∇u|^(p-1)`.

use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{Drift, EquationSpec, Flux};

const INTERIOR_GAP: f64 = 0.05;
const MAX_NODES: usize = 50_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Domain {
    Disk { center: [f64; 2], radius: f64 },
    Annulus { center: [f64; 2], inner: f64, outer: f64 },
}

impl Domain {
    pub fn disk(center: [f64; 2], radius: f64) -> Result<Self> {
        let d = Domain::Disk { center, radius };
        d.validate()?;
        Ok(d)
    }

    pub fn annulus(center: [f64; 2], inner: f64, outer: f64) -> Result<Self> {
        let d = Domain::Annulus { center, inner, outer };
        d.validate()?;
        Ok(d)
    }

    fn validate(&self) -> Result<()> {
        let c = self.center();
        if !(c[0].is_finite() && c[1].is_finite()) {
            return Err(Error::InvalidArgument("domain center must be finite".into()));
        }
        match *self {
            Domain::Disk { radius, .. } if radius > 0.0 && radius.is_finite() => Ok(()),
            Domain::Annulus { inner, outer, .. } if inner > 0.0 && inner < outer && outer.is_finite() => Ok(()),
            _ => Err(Error::InvalidArgument(format!("invalid domain {self:?}"))),
        }
    }

    pub fn center(&self) -> [f64; 2] {
        match *self {
            Domain::Disk { center, .. } | Domain::Annulus { center, .. } => center,
        }
    }

    pub fn outer_radius(&self) -> f64 {
        match *self {
            Domain::Disk { radius, .. } => radius,
            Domain::Annulus { outer, .. } => outer,
        }
    }

    pub fn inner_radius(&self) -> f64 {
        match *self {
            Domain::Disk { .. } => 0.0,
            Domain::Annulus { inner, .. } => inner,
        }
    }

    /// Signed distance, negative inside.
    pub fn level(&self, x: [f64; 2]) -> f64 {
        let c = self.center();
        let d = (x[0] - c[0]).hypot(x[1] - c[1]);
        match *self {
            Domain::Disk { radius, .. } => d - radius,
            Domain::Annulus { inner, outer, .. } => (d - outer).max(inner - d),
        }
    }

    /// Radial projection onto the nearer boundary circle.
    pub fn project(&self, x: [f64; 2]) -> [f64; 2] {
        let c = self.center();
        let (dx, dy) = (x[0] - c[0], x[1] - c[1]);
        let d = dx.hypot(dy);
        let target = match *self {
            Domain::Disk { radius, .. } => radius,
            Domain::Annulus { inner, outer, .. } => {
                if d - outer >= inner - d {
                    outer
                } else {
                    inner
                }
            }
        };
        if d == 0.0 {
            [c[0] + target, c[1]]
        } else {
            [c[0] + dx * target / d, c[1] + dy * target / d]
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Interior,
    Band,
    Exterior,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Target {
    Node(usize),
    Crossing(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Arm {
    len: f64,
    target: Target,
}

/// Grid values on the lattice covering a domain, with the boundary
/// crossings used by the shortened stencil arms.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction2D {
    domain: Domain,
    h: f64,
    half: usize,
    width: usize,
    kinds: Vec<NodeKind>,
    values: Vec<f64>,
    interior: Vec<usize>,
    slot: Vec<usize>,
    // arms in order +x, -x, +y, -y
    arms: Vec<[Arm; 4]>,
    crossings: Vec<[f64; 2]>,
    crossing_values: Vec<f64>,
}

impl GridFunction2D {
    pub fn new(domain: Domain, h: f64) -> Result<Self> {
        domain.validate()?;
        let big_r = domain.outer_radius();
        if !(h > 0.0 && h.is_finite() && h < big_r) {
            return Err(Error::InvalidArgument(format!("mesh spacing {h} must lie in (0, {big_r})")));
        }
        let half = (big_r / h).ceil() as usize + 2;
        let width = 2 * half + 1;
        if width.saturating_mul(width) > MAX_NODES {
            return Err(Error::InvalidArgument(format!("lattice of {width}x{width} nodes is too large")));
        }
        let c = domain.center();
        let pos = |i: usize, j: usize| [c[0] + (i as f64 - half as f64) * h, c[1] + (j as f64 - half as f64) * h];
        let total = width * width;
        let mut kinds = vec![NodeKind::Exterior; total];
        for j in 0..width {
            for i in 0..width {
                if domain.level(pos(i, j)) < -INTERIOR_GAP * h {
                    kinds[j * width + i] = NodeKind::Interior;
                }
            }
        }
        let interior: Vec<usize> = (0..total).filter(|&k| kinds[k] == NodeKind::Interior).collect();
        if interior.is_empty() {
            return Err(Error::Degenerate(format!("no interior nodes at h = {h}")));
        }
        let mut slot = vec![usize::MAX; total];
        for (s, &k) in interior.iter().enumerate() {
            slot[k] = s;
        }
        let mut arms = Vec::with_capacity(interior.len());
        let mut crossings = Vec::new();
        for &k in &interior {
            let (i, j) = (k % width, k / width);
            let p = pos(i, j);
            let nbrs = [(i + 1, j), (i - 1, j), (i, j + 1), (i, j - 1)];
            let mut a = [Arm {
                len: h,
                target: Target::Node(0),
            }; 4];
            for (d, &(ni, nj)) in nbrs.iter().enumerate() {
                let q_idx = nj * width + ni;
                let q = pos(ni, nj);
                if kinds[q_idx] == NodeKind::Interior {
                    a[d].target = Target::Node(q_idx);
                    continue;
                }
                kinds[q_idx] = NodeKind::Band;
                let reach = if domain.level(q) <= 0.0 { 2.0 } else { 1.0 };
                let at = |t: f64| [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])];
                if domain.level(at(reach)) < 0.0 {
                    a[d].target = Target::Node(q_idx);
                    continue;
                }
                let (mut lo, mut hi) = (reach - 1.0, reach);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if domain.level(at(mid)) < 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let t = 0.5 * (lo + hi);
                crossings.push(domain.project(at(t)));
                a[d] = Arm {
                    len: t * h,
                    target: Target::Crossing(crossings.len() - 1),
                };
            }
            arms.push(a);
        }
        let crossing_values = vec![0.0; crossings.len()];
        Ok(GridFunction2D {
            domain,
            h,
            half,
            width,
            kinds,
            values: vec![0.0; total],
            interior,
            slot,
            arms,
            crossings,
            crossing_values,
        })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn len(&self) -> usize {
        self.kinds.len()
    }
    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }
    pub fn kind(&self, idx: usize) -> NodeKind {
        self.kinds[idx]
    }
    pub fn value(&self, idx: usize) -> f64 {
        self.values[idx]
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn interior_count(&self) -> usize {
        self.interior.len()
    }

    pub fn position(&self, idx: usize) -> [f64; 2] {
        let c = self.domain.center();
        let (i, j) = (idx % self.width, idx / self.width);
        [
            c[0] + (i as f64 - self.half as f64) * self.h,
            c[1] + (j as f64 - self.half as f64) * self.h,
        ]
    }

    /// Interior and band nodes as `(position, kind, value)`.
    pub fn nodes(&self) -> impl Iterator<Item = ([f64; 2], NodeKind, f64)> + '_ {
        (0..self.kinds.len())
            .filter(|&k| self.kinds[k] != NodeKind::Exterior)
            .map(|k| (self.position(k), self.kinds[k], self.values[k]))
    }

    /// Boundary points sampled by shortened arms, with their data values.
    pub fn crossings(&self) -> impl Iterator<Item = ([f64; 2], f64)> + '_ {
        self.crossings.iter().copied().zip(self.crossing_values.iter().copied())
    }

    /// Sets band nodes (from the radial projection) and crossings from `data`.
    pub fn apply_boundary(&mut self, data: &dyn Fn(f64, f64) -> f64) -> Result<()> {
        for k in 0..self.kinds.len() {
            if self.kinds[k] == NodeKind::Band {
                let x = self.domain.project(self.position(k));
                self.values[k] = data(x[0], x[1]);
            }
        }
        for (v, x) in self.crossing_values.iter_mut().zip(&self.crossings) {
            *v = data(x[0], x[1]);
        }
        if self.boundary_values().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("boundary data".into()));
        }
        Ok(())
    }

    /// Sets every non-exterior node and every crossing from `f`.
    pub fn fill(&mut self, f: &dyn Fn(f64, f64) -> f64) {
        for k in 0..self.kinds.len() {
            if self.kinds[k] != NodeKind::Exterior {
                let x = self.position(k);
                self.values[k] = f(x[0], x[1]);
            }
        }
        for (v, x) in self.crossing_values.iter_mut().zip(&self.crossings) {
            *v = f(x[0], x[1]);
        }
    }

    fn boundary_values(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.kinds.len())
            .filter(|&k| self.kinds[k] == NodeKind::Band)
            .map(|k| self.values[k])
            .chain(self.crossing_values.iter().copied())
    }

    /// `(min, max)` over interior nodes.
    pub fn interior_extrema(&self) -> (f64, f64) {
        extrema(self.interior.iter().map(|&k| self.values[k]))
    }

    /// `(min, max)` over the boundary band: band nodes and arm crossings.
    pub fn band_extrema(&self) -> (f64, f64) {
        extrema(self.boundary_values())
    }

    /// Max interior deviation from `exact`.
    pub fn max_interior_error(&self, exact: &dyn Fn(f64, f64) -> f64) -> f64 {
        self.interior
            .iter()
            .map(|&k| {
                let x = self.position(k);
                (self.values[k] - exact(x[0], x[1])).abs()
            })
            .fold(0.0, f64::max)
    }

    /// CSV with header `x,y,u` over interior and band nodes.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        wtr.write_record(["x", "y", "u"])?;
        for (x, _, u) in self.nodes() {
            wtr.write_record([x[0].to_string(), x[1].to_string(), u.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// `(position, value, gradient)` at each interior node, from the
    /// three-point stencil derivatives.
    pub fn interior_gradients(&self) -> Vec<([f64; 2], f64, [f64; 2])> {
        self.interior
            .iter()
            .enumerate()
            .map(|(s, &k)| {
                let v: Vec<(f64, f64)> = self.arms[s]
                    .iter()
                    .map(|arm| (arm.len, self.arm_value(arm, &self.values)))
                    .collect();
                let up = self.values[k];
                let g = [
                    axis_derivative(up, v[0], v[1]),
                    axis_derivative(up, v[2], v[3]),
                ];
                (self.position(k), up, g)
            })
            .collect()
    }

    fn arm_value(&self, arm: &Arm, u: &[f64]) -> f64 {
        match arm.target {
            Target::Node(q) => u[q],
            Target::Crossing(c) => self.crossing_values[c],
        }
    }
}

/// Three-point derivative along one axis from `(arm length, value)` pairs.
fn axis_derivative(up: f64, plus: (f64, f64), minus: (f64, f64)) -> f64 {
    let (lp, vp) = plus;
    let (lm, vm) = minus;
    (lm * lm * (vp - up) + lp * lp * (up - vm)) / (lp * lm * (lp + lm))
}

fn extrema(it: impl Iterator<Item = f64>) -> (f64, f64) {
    it.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Picard,
    DampedNewton,
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "picard" => Ok(Scheme::Picard),
            "damped_newton" | "newton" => Ok(Scheme::DampedNewton),
            other => Err(Error::InvalidArgument(format!("unknown scheme `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub epsilon: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub scheme: Scheme,
    pub damping: f64,
    /// SOR relaxation; `None` picks `2/(1 + sin(π h / (2R)))`.
    pub omega: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            epsilon: 1e-6,
            tol: 1e-8,
            max_iter: 200,
            scheme: Scheme::Picard,
            damping: 1.0,
            omega: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidArgument(format!("epsilon {} must be positive", self.epsilon)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tol {} must be positive", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidArgument(format!("damping {} must lie in (0, 1]", self.damping)));
        }
        if let Some(w) = self.omega {
            if !(w > 0.0 && w < 2.0) {
                return Err(Error::InvalidArgument(format!("omega {w} must lie in (0, 2)")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub warnings: Vec<String>,
}

struct Operator<'a> {
    spec: &'a EquationSpec,
    grid: &'a GridFunction2D,
    eps: f64,
    p: f64,
}

impl<'a> Operator<'a> {
    fn new(spec: &'a EquationSpec, grid: &'a GridFunction2D, eps: f64) -> Result<Self> {
        if spec.params().n() != 2 {
            return Err(Error::InvalidArgument(format!(
                "grid solver is planar, spec has n = {}",
                spec.params().n()
            )));
        }
        if let Flux::General(_) = spec.flux_law() {
            return Err(Error::UnsupportedOperator(
                "grid solver needs an isotropic flux a(x,t)|h|^(p-2)h".into(),
            ));
        }
        Ok(Operator {
            spec,
            grid,
            eps,
            p: spec.params().p(),
        })
    }

    fn weight(&self, x: [f64; 2], t: f64) -> f64 {
        match self.spec.flux_law() {
            Flux::Isotropic(a) => a(&x, t),
            Flux::General(_) => unreachable!("rejected in Operator::new"),
        }
    }

    fn nodal_gradient(&self, s: usize, up: f64, u: &[f64]) -> [f64; 2] {
        let a = &self.grid.arms[s];
        let v: Vec<(f64, f64)> = a.iter().map(|arm| (arm.len, self.grid.arm_value(arm, u))).collect();
        [
            axis_derivative(up, v[0], v[1]),
            axis_derivative(up, v[2], v[3]),
        ]
    }

    fn gradients(&self, u: &[f64]) -> Vec<[f64; 2]> {
        self.grid
            .interior
            .iter()
            .enumerate()
            .map(|(s, &k)| self.nodal_gradient(s, u[k], u))
            .collect()
    }

    fn reg(&self, g2: f64) -> f64 {
        let base = g2 + self.eps * self.eps;
        if base == 0.0 {
            0.0
        } else {
            base.powf(0.5 * (self.p - 2.0))
        }
    }

    /// Face data for arm `d` of slot `s`: `(weight · reg, tangent slope, face gradient)`.
    fn face(&self, s: usize, d: usize, up: f64, gp: [f64; 2], u: &[f64], grads: &[[f64; 2]]) -> (f64, f64, f64) {
        let g = self.grid;
        let arm = &g.arms[s][d];
        let uq = g.arm_value(arm, u);
        let axis = d / 2;
        let dir = if d % 2 == 0 { 1.0 } else { -1.0 };
        let normal = dir * (uq - up) / arm.len;
        let other = match arm.target {
            Target::Node(q) if g.kinds[q] == NodeKind::Interior => grads[g.slot[q]][1 - axis],
            _ => gp[1 - axis],
        };
        let tangential = 0.5 * (gp[1 - axis] + other);
        let xp = g.position(g.interior[s]);
        let mut xf = xp;
        xf[axis] += dir * 0.5 * arm.len;
        let w = self.weight(xf, 0.5 * (up + uq));
        let g2 = normal * normal + tangential * tangential;
        let coef = w * self.reg(g2);
        let base = g2 + self.eps * self.eps;
        let tangent = if base == 0.0 {
            coef
        } else {
            w * base.powf(0.5 * (self.p - 4.0)) * (base + (self.p - 2.0) * normal * normal)
        };
        (coef, tangent, normal)
    }

    fn drift(&self, s: usize, up: f64, gp: [f64; 2]) -> f64 {
        let x = self.grid.position(self.grid.interior[s]);
        match self.spec.drift_law() {
            Drift::Zero => 0.0,
            Drift::Envelope(_) => {
                let g2 = gp[0] * gp[0] + gp[1] * gp[1];
                let eff = self.reg(g2) * g2.sqrt();
                let mag = if eff == 0.0 { 0.0 } else { eff.powf(1.0 / (self.p - 1.0)) };
                self.spec.drift_with_magnitude(&x, up, &gp, mag)
            }
            Drift::General(_) => self.spec.drift(&x, up, &gp),
        }
    }

    fn node_residual(&self, s: usize, up: f64, u: &[f64], grads: &[[f64; 2]]) -> f64 {
        let gp = self.nodal_gradient(s, up, u);
        self.node_residual_with(s, up, gp, u, grads)
    }

    fn node_residual_with(&self, s: usize, up: f64, gp: [f64; 2], u: &[f64], grads: &[[f64; 2]]) -> f64 {
        let a = &self.grid.arms[s];
        let mut div = 0.0;
        for axis in 0..2 {
            let (cp, _, np) = self.face(s, 2 * axis, up, gp, u, grads);
            let (cm, _, nm) = self.face(s, 2 * axis + 1, up, gp, u, grads);
            let span = a[2 * axis].len + a[2 * axis + 1].len;
            div += 2.0 / span * (cp * np - cm * nm);
        }
        -div + self.drift(s, up, gp)
    }

    fn residual(&self, u: &[f64]) -> Vec<f64> {
        let grads = self.gradients(u);
        self.grid
            .interior
            .iter()
            .enumerate()
            .map(|(s, &k)| self.node_residual_with(s, u[k], grads[s], u, &grads))
            .collect()
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| if x.is_nan() { f64::NAN } else { m.max(x.abs()) })
}

/// Max over interior nodes of the discrete residual at regularisation `epsilon`.
pub fn residual_norm(spec: &EquationSpec, grid: &GridFunction2D, epsilon: f64) -> Result<f64> {
    if !(epsilon >= 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon {epsilon} must be nonnegative")));
    }
    let op = Operator::new(spec, grid, epsilon)?;
    Ok(max_abs(&op.residual(&grid.values)))
}

struct Linear {
    diag: Vec<f64>,
    // off-diagonal coefficients per arm; zero for crossing arms
    off: Vec<[f64; 4]>,
}

fn assemble(op: &Operator, u: &[f64], scheme: Scheme, lost: &mut usize) -> Linear {
    let g = op.grid;
    let grads = op.gradients(u);
    let mut diag = Vec::with_capacity(g.interior.len());
    let mut off = Vec::with_capacity(g.interior.len());
    for (s, &k) in g.interior.iter().enumerate() {
        let a = &g.arms[s];
        let up = u[k];
        let gp = grads[s];
        let mut o = [0.0; 4];
        let mut frozen_diag = 0.0;
        for d in 0..4 {
            let (coef, tangent, _) = op.face(s, d, up, gp, u, &grads);
            let span = a[d & !1].len + a[d | 1].len;
            let w = 2.0 / (span * a[d].len);
            frozen_diag += w * coef;
            let c = match scheme {
                Scheme::Picard => coef,
                Scheme::DampedNewton => tangent,
            };
            if let Target::Node(q) = a[d].target {
                if g.kinds[q] == NodeKind::Interior {
                    o[d] = -w * c;
                }
            }
        }
        let dg = match scheme {
            Scheme::Picard => frozen_diag,
            Scheme::DampedNewton => {
                let eta = 1e-7 * (1.0 + up.abs());
                let hi = op.node_residual(s, up + eta, u, &grads);
                let lo = op.node_residual(s, up - eta, u, &grads);
                let fd = (hi - lo) / (2.0 * eta);
                let offsum: f64 = o.iter().map(|v| v.abs()).sum();
                if !(fd > 0.0) || !fd.is_finite() {
                    *lost += 1;
                    frozen_diag
                } else {
                    if fd < offsum * (1.0 - 1e-9) {
                        *lost += 1;
                    }
                    fd
                }
            }
        };
        diag.push(dg);
        off.push(o);
    }
    Linear { diag, off }
}

fn sor(g: &GridFunction2D, lin: &Linear, rhs: &[f64], omega: f64, reduction: f64, max_sweeps: usize) -> Vec<f64> {
    let m = g.interior.len();
    let mut x = vec![0.0; m];
    let nbr = |s: usize, d: usize| -> Option<usize> {
        match g.arms[s][d].target {
            Target::Node(q) if g.kinds[q] == NodeKind::Interior => Some(g.slot[q]),
            _ => None,
        }
    };
    let lin_res = |x: &[f64]| -> f64 {
        (0..m)
            .map(|s| {
                let mut r = rhs[s] - lin.diag[s] * x[s];
                for d in 0..4 {
                    if let Some(t) = nbr(s, d) {
                        r -= lin.off[s][d] * x[t];
                    }
                }
                r.abs()
            })
            .fold(0.0, f64::max)
    };
    let r0 = max_abs(rhs);
    if r0 == 0.0 {
        return x;
    }
    for sweep in 1..=max_sweeps {
        for s in 0..m {
            let mut acc = rhs[s];
            for d in 0..4 {
                if let Some(t) = nbr(s, d) {
                    acc -= lin.off[s][d] * x[t];
                }
            }
            x[s] += omega * (acc / lin.diag[s] - x[s]);
        }
        if sweep % 5 == 0 && lin_res(&x) <= reduction * r0 {
            break;
        }
    }
    x
}

/// Replaces the interior by an approximate discrete harmonic extension.
fn harmonic_start(grid: &mut GridFunction2D, omega: f64, max_sweeps: usize) {
    let m = grid.interior.len();
    let mut diag = vec![0.0; m];
    let mut off = vec![[0.0; 4]; m];
    let mut rhs = vec![0.0; m];
    for s in 0..m {
        let a = &grid.arms[s];
        for d in 0..4 {
            let w = 2.0 / ((a[d & !1].len + a[d | 1].len) * a[d].len);
            diag[s] += w;
            match a[d].target {
                Target::Node(q) if grid.kinds[q] == NodeKind::Interior => off[s][d] = -w,
                _ => rhs[s] += w * grid.arm_value(&a[d], &grid.values),
            }
        }
    }
    let start: Vec<f64> = grid.interior.iter().map(|&k| grid.values[k]).collect();
    for (r, (s, x)) in rhs.iter_mut().zip(start.iter().enumerate()) {
        *r -= diag[s] * x;
        for d in 0..4 {
            if let Target::Node(q) = grid.arms[s][d].target {
                if grid.kinds[q] == NodeKind::Interior {
                    *r -= off[s][d] * grid.values[q];
                }
            }
        }
    }
    let delta = sor(grid, &Linear { diag, off }, &rhs, omega, 1e-6, max_sweeps);
    for (s, &k) in grid.interior.iter().enumerate() {
        grid.values[k] = start[s] + delta[s];
    }
}

/// Solves the Dirichlet problem with boundary values `data` on `template`.
///
/// The interior starts from the discrete harmonic extension of the data
/// (or the constant, for constant data). Each outer step solves a
/// linearised correction by SOR to a 1e-2 reduction, then backtracks from
/// `cfg.damping` until the residual max-norm drops.
pub fn solve_dirichlet(
    spec: &EquationSpec,
    data: &dyn Fn(f64, f64) -> f64,
    template: &GridFunction2D,
    cfg: &SolverConfig,
) -> Result<(GridFunction2D, SolveReport)> {
    cfg.validate()?;
    let mut grid = template.clone();
    grid.apply_boundary(data)?;
    let (lo, hi) = grid.band_extrema();
    let start = 0.5 * (lo + hi);
    for &k in &grid.interior {
        grid.values[k] = start;
    }
    let omega = cfg
        .omega
        .unwrap_or_else(|| 2.0 / (1.0 + (std::f64::consts::PI * grid.h / (2.0 * grid.domain.outer_radius())).sin()));
    let max_sweeps = 40 * grid.width;
    if hi > lo {
        harmonic_start(&mut grid, omega, max_sweeps);
    }
    let mut u = grid.values.clone();
    let mut warnings = Vec::new();
    let (iterations, history) = {
        let op = Operator::new(spec, &grid, cfg.epsilon)?;
        let mut res = op.residual(&u);
        let mut norm = max_abs(&res);
        let mut history = vec![norm];
        let mut done = None;
        if norm <= cfg.tol {
            done = Some(0);
        }
        let mut it = 0;
        while done.is_none() && it < cfg.max_iter {
            it += 1;
            let mut lost = 0;
            let lin = assemble(&op, &u, cfg.scheme, &mut lost);
            if lost > 0 {
                warnings.push(format!("iteration {it}: diagonal dominance lost at {lost} nodes"));
            }
            let rhs: Vec<f64> = res.iter().map(|r| -r).collect();
            let delta = sor(&grid, &lin, &rhs, omega, 1e-2, max_sweeps);
            let mut theta = cfg.damping;
            loop {
                let mut trial = u.clone();
                for (s, &k) in grid.interior.iter().enumerate() {
                    trial[k] += theta * delta[s];
                }
                let tres = op.residual(&trial);
                let tnorm = max_abs(&tres);
                if tnorm < norm || theta < 1e-3 {
                    u = trial;
                    res = tres;
                    norm = tnorm;
                    break;
                }
                theta *= 0.5;
            }
            history.push(norm);
            if !norm.is_finite() {
                return Err(Error::NonConvergence {
                    iterations: it,
                    residual: norm,
                    history,
                });
            }
            if norm <= cfg.tol {
                done = Some(it);
            }
        }
        match done {
            Some(i) => (i, history),
            None => {
                return Err(Error::NonConvergence {
                    iterations: it,
                    residual: norm,
                    history,
                })
            }
        }
    };
    grid.values = u;
    Ok((
        grid,
        SolveReport {
            iterations,
            residual_history: history,
            warnings,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{EnvelopeMode, Preset, StructuralParams};

    fn spec(preset: Preset, p: f64, b1: f64) -> EquationSpec {
        EquationSpec::preset(preset, StructuralParams::unit(2, p, b1).unwrap(), EnvelopeMode::GlobalDecay).unwrap()
    }

    fn unit_disk(h: f64) -> GridFunction2D {
        GridFunction2D::new(Domain::disk([0.0, 0.0], 1.0).unwrap(), h).unwrap()
    }

    #[test]
    fn quadratic_is_exact_for_five_point_stencil() {
        let mut g = unit_disk(1.0 / 16.0);
        g.fill(&|x, y| x * x - y * y);
        assert!(residual_norm(&spec(Preset::PLaplace, 2.0, 0.0), &g, 0.0).unwrap() <= 1e-12);
        let mut off = GridFunction2D::new(Domain::disk([0.13, -0.2], 0.77).unwrap(), 0.05).unwrap();
        off.fill(&|x, y| 3.0 * x * y + x - 2.0 * y);
        assert!(residual_norm(&spec(Preset::PLaplace, 2.0, 0.0), &off, 0.0).unwrap() <= 1e-10);
    }

    #[test]
    fn zero_grid_has_zero_residual() {
        let g = unit_disk(0.1);
        for preset in Preset::ALL {
            assert_eq!(residual_norm(&spec(preset, 3.0, 1.0), &g, 1e-6).unwrap(), 0.0);
        }
    }

    #[test]
    fn constant_data_needs_no_iterations() {
        let g = unit_disk(1.0 / 16.0);
        for preset in Preset::ALL {
            for scheme in [Scheme::Picard, Scheme::DampedNewton] {
                let cfg = SolverConfig {
                    scheme,
                    ..Default::default()
                };
                let (sol, rep) = solve_dirichlet(&spec(preset, 3.0, 1.0), &|_, _| 1.25, &g, &cfg).unwrap();
                assert_eq!(rep.iterations, 0);
                assert!(sol.nodes().all(|(_, _, v)| v == 1.25));
            }
        }
    }

    #[test]
    fn harmonic_quadratic_is_recovered() {
        let g = unit_disk(1.0 / 32.0);
        let exact = |x: f64, y: f64| x * x - y * y;
        let (sol, rep) = solve_dirichlet(&spec(Preset::PLaplace, 2.0, 0.0), &exact, &g, &SolverConfig::default()).unwrap();
        assert!(rep.residual_history.last().unwrap() <= &1e-8);
        assert!(sol.max_interior_error(&exact) < 1e-2);
        let (imin, imax) = sol.interior_extrema();
        let (bmin, bmax) = sol.band_extrema();
        assert!(imax <= bmax && imin >= bmin);
    }

    #[test]
    fn mesh_refinement_reduces_error() {
        let exact = |x: f64, y: f64| x * x * x - 3.0 * x * y * y;
        let s = spec(Preset::PLaplace, 2.0, 0.0);
        let errs: Vec<f64> = [8.0, 16.0, 32.0]
            .iter()
            .map(|&k| {
                let (sol, _) = solve_dirichlet(&s, &exact, &unit_disk(1.0 / k), &SolverConfig::default()).unwrap();
                sol.max_interior_error(&exact)
            })
            .collect();
        assert!(errs[1] < errs[0] && errs[2] < errs[1], "{errs:?}");
    }

    #[test]
    fn p4_annulus_matches_fundamental() {
        let g = GridFunction2D::new(Domain::annulus([0.0, 0.0], 0.25, 1.0).unwrap(), 1.0 / 32.0).unwrap();
        let exact = |x: f64, y: f64| x.hypot(y).powf(2.0 / 3.0);
        for scheme in [Scheme::Picard, Scheme::DampedNewton] {
            let cfg = SolverConfig {
                scheme,
                ..Default::default()
            };
            let (sol, _) = solve_dirichlet(&spec(Preset::PLaplace, 4.0, 0.0), &exact, &g, &cfg).unwrap();
            assert!(sol.max_interior_error(&exact) <= 2e-2, "{scheme:?}");
        }
    }

    #[test]
    fn epsilon_halving_is_harmless() {
        let g = GridFunction2D::new(Domain::annulus([0.0, 0.0], 0.25, 1.0).unwrap(), 1.0 / 16.0).unwrap();
        let data = |x: f64, y: f64| x.hypot(y).powf(2.0 / 3.0) + 0.1 * x;
        let s = spec(Preset::PLaplace, 4.0, 0.0);
        let cfg = SolverConfig {
            epsilon: 1e-3 / 256.0,
            tol: 1e-10,
            ..Default::default()
        };
        let (a, _) = solve_dirichlet(&s, &data, &g, &cfg).unwrap();
        let half = SolverConfig {
            epsilon: cfg.epsilon / 2.0,
            ..cfg
        };
        let (b, _) = solve_dirichlet(&s, &data, &g, &half).unwrap();
        let diff = a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(diff <= 1e-8, "{diff}");
    }

    #[test]
    fn drift_presets_converge() {
        let g = unit_disk(1.0 / 16.0);
        for preset in [Preset::RiccatiExtremalPlus, Preset::RiccatiExtremalMinus, Preset::WeightedPLaplace] {
            for scheme in [Scheme::Picard, Scheme::DampedNewton] {
                let cfg = SolverConfig {
                    scheme,
                    ..Default::default()
                };
                let s = EquationSpec::preset(
                    preset,
                    StructuralParams::new(2, 2.0, 0.5, 1.5, 1.0).unwrap(),
                    EnvelopeMode::GlobalDecay,
                )
                .unwrap();
                let (sol, rep) = solve_dirichlet(&s, &|x, y| x + 0.5 * y * y, &g, &cfg).unwrap();
                assert!(residual_norm(&s, &sol, cfg.epsilon).unwrap() <= cfg.tol, "{preset} {scheme:?}");
                assert!(rep.iterations >= 1);
            }
        }
    }

    #[test]
    fn non_convergence_carries_history() {
        let g = unit_disk(1.0 / 16.0);
        let cfg = SolverConfig {
            max_iter: 1,
            tol: 1e-14,
            ..Default::default()
        };
        match solve_dirichlet(&spec(Preset::PLaplace, 3.0, 0.0), &|x, _| x, &g, &cfg) {
            Err(Error::NonConvergence { history, .. }) => assert_eq!(history.len(), 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn grid_covers_disk() {
        let g = GridFunction2D::new(Domain::disk([0.3, 0.1], 0.9).unwrap(), 0.07).unwrap();
        let live: Vec<[f64; 2]> = g.nodes().map(|(x, _, _)| x).collect();
        for k in 0..400 {
            let t = k as f64 * 0.618_033_988_749_895 * std::f64::consts::TAU;
            let rho = 0.9 * ((k as f64 + 0.5) / 400.0).sqrt();
            let pt = [0.3 + rho * t.cos(), 0.1 + rho * t.sin()];
            let near = live.iter().map(|x| (x[0] - pt[0]).hypot(x[1] - pt[1])).fold(f64::INFINITY, f64::min);
            assert!(near <= 0.07, "{pt:?}");
        }
    }

    #[test]
    fn rejects_bad_configs_and_operators() {
        let g = unit_disk(0.25);
        let bad = SolverConfig {
            epsilon: 0.0,
            ..Default::default()
        };
        assert!(solve_dirichlet(&spec(Preset::PLaplace, 2.0, 0.0), &|_, _| 0.0, &g, &bad).is_err());
        let s3 = EquationSpec::preset(Preset::PLaplace, StructuralParams::unit(3, 2.0, 0.0).unwrap(), EnvelopeMode::GlobalDecay).unwrap();
        assert!(residual_norm(&s3, &g, 1e-6).is_err());
        assert!(GridFunction2D::new(Domain::disk([0.0, 0.0], 1.0).unwrap(), 2.0).is_err());
        assert!(Domain::annulus([0.0, 0.0], 1.0, 0.5).is_err());
        assert_eq!("damped-newton".parse::<Scheme>().unwrap(), Scheme::DampedNewton);
    }

    #[test]
    fn csv_has_header() {
        let mut g = unit_disk(0.5);
        g.fill(&|_, _| 2.0);
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x,y,u\n"));
        assert!(text.lines().skip(1).all(|l| l.ends_with(",2")));
    }
}
