//! C ABI for the `three-spheres` crate.
//!
//! Every function returns a [`TsStatus`]; results go through out-pointers.
//! On failure the message is kept per thread and read with
//! [`ts_last_error_message`]. Handles are opaque and owned by the caller,
//! who releases them with the matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, c_void};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use three_spheres::ballstats::{empirical_lambda_star, profile, BallProfile, Geometry, LambdaStar, Source};
use three_spheres::bounds::{classical_weight, lambda_formula, lambda_infinity, BoundMode, RadiiTriple, ThreeSpheresBound};
use three_spheres::fdm2d::{solve_dirichlet, Domain, GridFunction2D, NodeKind, Scheme, SolverConfig};
use three_spheres::params::{EnvelopeMode, EquationSpec, Preset, StructuralParams};
use three_spheres::radial::{
    extremal_drift_solution, fundamental_solution, geometric_mesh, solve_radial_bvp, solve_radial_ivp, DriftSign,
    RadialProfile, RadialSolution,
};
use three_spheres::verify::{check_three_spheres, liouville_check};
use three_spheres::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    RegimeMismatch = 3,
    NonConvergence = 4,
    BlowUp = 5,
    OutsideDomain = 6,
    Degenerate = 7,
    BufferTooSmall = 8,
    Panic = 9,
    Other = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct TsParams {
    pub n: u32,
    pub p: f64,
    pub a0: f64,
    pub a1: f64,
    pub b1: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsBoundMode {
    ClassicalSubN = 0,
    ClassicalN = 1,
    BorderN = 2,
    AHarmonicN = 3,
    PGtN = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsPreset {
    PLaplace = 0,
    WeightedPLaplace = 1,
    RiccatiExtremalPlus = 2,
    RiccatiExtremalMinus = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsEnvelope {
    GlobalDecay = 0,
    Constant = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsGeometry {
    BallMax = 0,
    SphereMax = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsScheme {
    Picard = 0,
    DampedNewton = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsNodeKind {
    Interior = 0,
    Band = 1,
    Exterior = 2,
}

/// Radial profile `(r, u, u')` on a mesh.
pub struct TsRadialProfile(RadialProfile);

/// Planar grid solution.
pub struct TsGrid {
    grid: GridFunction2D,
    params: StructuralParams,
    envelope: EnvelopeMode,
}

/// Ball extrema `M(r)`, `m(r)`.
pub struct TsBallProfile(BallProfile);

/// Boundary data callback for [`ts_fdm_solve`].
pub type TsBoundaryFn = Option<extern "C" fn(x: f64, y: f64, user: *mut c_void) -> f64>;

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> TsStatus {
    match e {
        Error::InvalidParams(_)
        | Error::InvalidTriple(_)
        | Error::InvalidArgument(_)
        | Error::NonFinite(_)
        | Error::UnknownPreset(_)
        | Error::UnsupportedOperator(_)
        | Error::Config(_)
        | Error::UnsupportedFormat(_) => TsStatus::InvalidArgument,
        Error::RegimeMismatch(_) => TsStatus::RegimeMismatch,
        Error::NonConvergence { .. } | Error::NoBracket(_) => TsStatus::NonConvergence,
        Error::BlowUp { .. } => TsStatus::BlowUp,
        Error::OutsideDomain(_) | Error::EmptyNodeSet(_) => TsStatus::OutsideDomain,
        Error::NonMonotone(_) | Error::Degenerate(_) | Error::EmptyFamily | Error::UnconstrainedLambda(_) => {
            TsStatus::Degenerate
        }
        _ => TsStatus::Other,
    }
}

fn guard(f: impl FnOnce() -> Result<(), TsStatus>) -> TsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            TsStatus::Ok
        }
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("panic inside three-spheres".into());
            TsStatus::Panic
        }
    }
}

trait IntoStatus<T> {
    fn st(self) -> Result<T, TsStatus>;
}

impl<T> IntoStatus<T> for three_spheres::Result<T> {
    fn st(self) -> Result<T, TsStatus> {
        self.map_err(|e| {
            set_error(e.to_string());
            status_of(&e)
        })
    }
}

fn null(what: &str) -> TsStatus {
    set_error(format!("{what} is null"));
    TsStatus::NullPointer
}

unsafe fn write<T>(out: *mut T, v: T) -> Result<(), TsStatus> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    out.write(v);
    Ok(())
}

unsafe fn get<'a, T>(h: *const T, what: &str) -> Result<&'a T, TsStatus> {
    h.as_ref().ok_or_else(|| null(what))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], TsStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn params_of(p: &TsParams) -> Result<StructuralParams, TsStatus> {
    StructuralParams::new(p.n as usize, p.p, p.a0, p.a1, p.b1).st()
}

fn triple(r1: f64, r2: f64, r3: f64) -> Result<RadiiTriple, TsStatus> {
    RadiiTriple::new(r1, r2, r3).st()
}

impl From<TsBoundMode> for BoundMode {
    fn from(m: TsBoundMode) -> Self {
        match m {
            TsBoundMode::ClassicalSubN => BoundMode::ClassicalSubN,
            TsBoundMode::ClassicalN => BoundMode::ClassicalN,
            TsBoundMode::BorderN => BoundMode::BorderN,
            TsBoundMode::AHarmonicN => BoundMode::AHarmonicN,
            TsBoundMode::PGtN => BoundMode::PGtN,
        }
    }
}

impl From<TsPreset> for Preset {
    fn from(p: TsPreset) -> Self {
        match p {
            TsPreset::PLaplace => Preset::PLaplace,
            TsPreset::WeightedPLaplace => Preset::WeightedPLaplace,
            TsPreset::RiccatiExtremalPlus => Preset::RiccatiExtremalPlus,
            TsPreset::RiccatiExtremalMinus => Preset::RiccatiExtremalMinus,
        }
    }
}

impl From<TsEnvelope> for EnvelopeMode {
    fn from(e: TsEnvelope) -> Self {
        match e {
            TsEnvelope::GlobalDecay => EnvelopeMode::GlobalDecay,
            TsEnvelope::Constant => EnvelopeMode::Constant,
        }
    }
}

impl From<TsGeometry> for Geometry {
    fn from(g: TsGeometry) -> Self {
        match g {
            TsGeometry::BallMax => Geometry::BallMax,
            TsGeometry::SphereMax => Geometry::SphereMax,
        }
    }
}

/// Copies the calling thread's last error message, NUL-terminated, into
/// `buf` and stores the full message length (without NUL) in `len_out`.
///
/// # Safety
/// `buf` must be valid for `cap` bytes or null with `cap == 0`.
#[no_mangle]
pub unsafe extern "C" fn ts_last_error_message(buf: *mut c_char, cap: usize, len_out: *mut usize) -> TsStatus {
    let msg = LAST_ERROR.with(|e| e.borrow().clone());
    if !len_out.is_null() {
        *len_out = msg.len();
    }
    if cap == 0 {
        return if msg.is_empty() { TsStatus::Ok } else { TsStatus::BufferTooSmall };
    }
    if buf.is_null() {
        return TsStatus::NullPointer;
    }
    let n = msg.len().min(cap - 1);
    ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, n);
    *buf.add(n) = 0;
    if n < msg.len() {
        TsStatus::BufferTooSmall
    } else {
        TsStatus::Ok
    }
}

/// Classical weight for `p <= n`.
///
/// # Safety
/// `params` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn ts_classical_weight(params: *const TsParams, r1: f64, r2: f64, r3: f64, out: *mut f64) -> TsStatus {
    guard(|| {
        let p = params_of(get(params, "params")?)?;
        write(out, classical_weight(&p, &triple(r1, r2, r3)?).st()?)
    })
}

/// `exp(-C K)` for the formula modes.
///
/// # Safety
/// `params` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn ts_lambda_formula(
    mode: TsBoundMode,
    params: *const TsParams,
    r1: f64,
    r2: f64,
    r3: f64,
    c: f64,
    out: *mut f64,
) -> TsStatus {
    guard(|| {
        let p = params_of(get(params, "params")?)?;
        write(out, lambda_formula(mode.into(), &p, &triple(r1, r2, r3)?, c).st()?)
    })
}

/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ts_lambda_infinity(c: f64, out: *mut f64) -> TsStatus {
    guard(|| write(out, lambda_infinity(c).st()?))
}

/// # Safety
/// `contradiction` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ts_liouville_check(
    m_bound: f64,
    lambda_inf: f64,
    m_r1: f64,
    m_r2: f64,
    contradiction: *mut bool,
) -> TsStatus {
    guard(|| write(contradiction, liouville_check(m_bound, lambda_inf, m_r1, m_r2).st()?.contradiction))
}

fn boxed<T>(out: *mut *mut T, v: T) -> Result<(), TsStatus> {
    if out.is_null() {
        return Err(null("handle output"));
    }
    unsafe { *out = Box::into_raw(Box::new(v)) };
    Ok(())
}

/// Samples `a + b r^α` (or `a - b log r`) on a geometric mesh.
///
/// # Safety
/// `params` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn ts_radial_fundamental(
    params: *const TsParams,
    a: f64,
    b: f64,
    r_in: f64,
    r_out: f64,
    steps: usize,
    out: *mut *mut TsRadialProfile,
) -> TsStatus {
    guard(|| {
        let p = params_of(get(params, "params")?)?;
        let mesh = geometric_mesh(r_in, r_out, steps).st()?;
        boxed(out, TsRadialProfile(fundamental_solution(&p, a, b).sample(&mesh).st()?))
    })
}

/// Samples the extremal-drift solution; `sign` is +1 or -1.
///
/// # Safety
/// `params` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn ts_radial_extremal(
    params: *const TsParams,
    sign: i32,
    u0: f64,
    scale: f64,
    r_in: f64,
    r_out: f64,
    steps: usize,
    out: *mut *mut TsRadialProfile,
) -> TsStatus {
    guard(|| {
        let p = params_of(get(params, "params")?)?;
        let sign = match sign {
            1 => DriftSign::Plus,
            -1 => DriftSign::Minus,
            s => return Err::<(), _>(Error::InvalidArgument(format!("sign {s}, expected 1 or -1"))).st(),
        };
        let mesh = geometric_mesh(r_in, r_out, steps).st()?;
        let e = extremal_drift_solution(&p, sign, u0, r_in).st()?.scaled(scale).st()?;
        boxed(out, TsRadialProfile(e.sample(&mesh).st()?))
    })
}

/// Integrates the radial equation of a preset from `(u_in, du_in)` at `r_in`.
///
/// # Safety
/// `params` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn ts_radial_ivp(
    params: *const TsParams,
    preset: TsPreset,
    envelope: TsEnvelope,
    r_in: f64,
    u_in: f64,
    du_in: f64,
    r_out: f64,
    steps: usize,
    out: *mut *mut TsRadialProfile,
) -> TsStatus {
    guard(|| {
        let p = params_of(get(params, "params")?)?;
        let spec = EquationSpec::preset(preset.into(), p, envelope.into()).st()?;
        boxed(out, TsRadialProfile(solve_radial_ivp(&spec, r_in, u_in, du_in, r_out, steps).st()?))
    })
}

/// Shooting solve with `u(r_in) = u_in`, `u(r_out) = u_out`.
///
/// # Safety
/// `params` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn ts_radial_bvp(
    params: *const TsParams,
    preset: TsPreset,
    envelope: TsEnvelope,
    r_in: f64,
    u_in: f64,
    r_out: f64,
    u_out: f64,
    steps: usize,
    tol: f64,
    out: *mut *mut TsRadialProfile,
) -> TsStatus {
    guard(|| {
        let p = params_of(get(params, "params")?)?;
        let spec = EquationSpec::preset(preset.into(), p, envelope.into()).st()?;
        boxed(out, TsRadialProfile(solve_radial_bvp(&spec, r_in, u_in, r_out, u_out, steps, tol).st()?))
    })
}

/// # Safety
/// `h` must be a live handle and `len` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ts_radial_len(h: *const TsRadialProfile, len: *mut usize) -> TsStatus {
    guard(|| write(len, get(h, "profile")?.0.mesh().len()))
}

/// Copies up to `cap` mesh points; any of `r`, `u`, `du` may be null.
///
/// # Safety
/// Non-null arrays must hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn ts_radial_copy(
    h: *const TsRadialProfile,
    r: *mut f64,
    u: *mut f64,
    du: *mut f64,
    cap: usize,
) -> TsStatus {
    guard(|| {
        let prof = &get(h, "profile")?.0;
        let n = prof.mesh().len();
        if cap < n {
            set_error(format!("buffer holds {cap} of {n} points"));
            return Err(TsStatus::BufferTooSmall);
        }
        for (dst, src) in [(r, prof.mesh()), (u, prof.values()), (du, prof.derivative_values())] {
            if !dst.is_null() {
                ptr::copy_nonoverlapping(src.as_ptr(), dst, n);
            }
        }
        Ok(())
    })
}

/// # Safety
/// `h` must come from a `ts_radial_*` constructor and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ts_radial_free(h: *mut TsRadialProfile) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Solves the Dirichlet problem on a disk for a planar preset.
///
/// # Safety
/// `params` and `out` must be valid; `data` must be callable with `user`
/// from the calling thread.
#[no_mangle]
pub unsafe extern "C" fn ts_fdm_solve(
    params: *const TsParams,
    preset: TsPreset,
    envelope: TsEnvelope,
    cx: f64,
    cy: f64,
    radius: f64,
    h: f64,
    epsilon: f64,
    tol: f64,
    max_iter: usize,
    scheme: TsScheme,
    data: TsBoundaryFn,
    user: *mut c_void,
    iterations: *mut usize,
    out: *mut *mut TsGrid,
) -> TsStatus {
    guard(|| {
        let p = params_of(get(params, "params")?)?;
        let data = data.ok_or_else(|| null("boundary callback"))?;
        let spec = EquationSpec::preset(preset.into(), p, envelope.into()).st()?;
        let template = GridFunction2D::new(Domain::disk([cx, cy], radius).st()?, h).st()?;
        let cfg = SolverConfig {
            epsilon,
            tol,
            max_iter,
            scheme: match scheme {
                TsScheme::Picard => Scheme::Picard,
                TsScheme::DampedNewton => Scheme::DampedNewton,
            },
            ..SolverConfig::default()
        };
        let f = |x: f64, y: f64| data(x, y, user);
        let (grid, report) = solve_dirichlet(&spec, &f, &template, &cfg).st()?;
        if !iterations.is_null() {
            *iterations = report.iterations;
        }
        boxed(
            out,
            TsGrid {
                grid,
                params: p,
                envelope: envelope.into(),
            },
        )
    })
}

/// # Safety
/// `g` must be a live handle and `len` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ts_grid_len(g: *const TsGrid, len: *mut usize) -> TsStatus {
    guard(|| write(len, get(g, "grid")?.grid.len()))
}

/// Position, value and kind of node `idx`.
///
/// # Safety
/// `g` must be live; the out-pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ts_grid_node(
    g: *const TsGrid,
    idx: usize,
    x: *mut f64,
    y: *mut f64,
    u: *mut f64,
    kind: *mut TsNodeKind,
) -> TsStatus {
    guard(|| {
        let grid = &get(g, "grid")?.grid;
        if idx >= grid.len() {
            set_error(format!("node {idx} out of {}", grid.len()));
            return Err(TsStatus::InvalidArgument);
        }
        let [px, py] = grid.position(idx);
        write(x, px)?;
        write(y, py)?;
        write(u, grid.value(idx))?;
        write(
            kind,
            match grid.kind(idx) {
                NodeKind::Interior => TsNodeKind::Interior,
                NodeKind::Band => TsNodeKind::Band,
                NodeKind::Exterior => TsNodeKind::Exterior,
            },
        )
    })
}

/// # Safety
/// `g` must come from [`ts_fdm_solve`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ts_grid_free(g: *mut TsGrid) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Ball extrema of a radial profile about the origin.
///
/// # Safety
/// `h` must be live, `radii` must hold `n_radii` doubles, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn ts_ball_profile_from_radial(
    h: *const TsRadialProfile,
    radii: *const f64,
    n_radii: usize,
    geometry: TsGeometry,
    out: *mut *mut TsBallProfile,
) -> TsStatus {
    guard(|| {
        let prof = &get(h, "profile")?.0;
        let radii = slice(radii, n_radii, "radii")?;
        let center = vec![0.0; prof.params().n()];
        boxed(out, TsBallProfile(profile(Source::Radial(prof), &center, radii, geometry.into()).st()?))
    })
}

/// Ball extrema of a grid solution about `(cx, cy)`.
///
/// # Safety
/// `g` must be live, `radii` must hold `n_radii` doubles, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn ts_ball_profile_from_grid(
    g: *const TsGrid,
    cx: f64,
    cy: f64,
    radii: *const f64,
    n_radii: usize,
    geometry: TsGeometry,
    out: *mut *mut TsBallProfile,
) -> TsStatus {
    guard(|| {
        let g = get(g, "grid")?;
        let radii = slice(radii, n_radii, "radii")?;
        let src = Source::Grid {
            grid: &g.grid,
            params: g.params,
            envelope: g.envelope,
        };
        boxed(out, TsBallProfile(profile(src, &[cx, cy], radii, geometry.into()).st()?))
    })
}

/// `M(r)` and `m(r)` at a listed radius.
///
/// # Safety
/// `b` must be live; out-pointers valid.
#[no_mangle]
pub unsafe extern "C" fn ts_ball_profile_extrema(b: *const TsBallProfile, r: f64, max: *mut f64, min: *mut f64) -> TsStatus {
    guard(|| {
        let (hi, lo) = get(b, "ball profile")?.0.extrema_at(r).st()?;
        write(max, hi)?;
        write(min, lo)
    })
}

/// Empirical λ*; `all` is set when every λ works and `value` is then 1.
///
/// # Safety
/// `b` must be live; out-pointers valid.
#[no_mangle]
pub unsafe extern "C" fn ts_lambda_star(
    b: *const TsBallProfile,
    r1: f64,
    r2: f64,
    r3: f64,
    value: *mut f64,
    all: *mut bool,
) -> TsStatus {
    guard(|| {
        let star = empirical_lambda_star(&get(b, "ball profile")?.0, &triple(r1, r2, r3)?).st()?;
        let (v, a) = match star {
            LambdaStar::Value(v) => (v, false),
            LambdaStar::All => (1.0, true),
        };
        write(value, v)?;
        write(all, a)
    })
}

/// Three-spheres check. Classical modes ignore `c`; formula modes use
/// `lambda_formula(c)`. `dual` checks the minimum form on `m`.
///
/// # Safety
/// `b` must be live; out-pointers valid.
#[no_mangle]
pub unsafe extern "C" fn ts_check_three_spheres(
    b: *const TsBallProfile,
    mode: TsBoundMode,
    c: f64,
    r1: f64,
    r2: f64,
    r3: f64,
    dual: bool,
    margin: *mut f64,
    passed: *mut bool,
) -> TsStatus {
    guard(|| {
        let prof = &get(b, "ball profile")?.0;
        let t = triple(r1, r2, r3)?;
        let mode: BoundMode = mode.into();
        let bound = if mode.is_classical() {
            mode.check_regime(prof.params()).st()?;
            ThreeSpheresBound::classical(prof.params(), t).st()?
        } else {
            ThreeSpheresBound::explicit(mode, prof.params(), t, c).st()?
        };
        let rep = check_three_spheres(prof, &bound, dual).st()?;
        write(margin, rep.margin)?;
        write(passed, rep.passed)
    })
}

/// # Safety
/// `b` must come from a `ts_ball_profile_*` constructor and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ts_ball_profile_free(b: *mut TsBallProfile) {
    if !b.is_null() {
        drop(Box::from_raw(b));
    }
}
