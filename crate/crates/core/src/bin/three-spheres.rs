use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use three_spheres::ballstats::{
    empirical_lambda_star, empirical_lambda_star_dual, profile, BallProfile, Geometry, NodeCloud, Source,
};
use three_spheres::bounds::{
    capacity_lambda, classical_weight, lambda_exponent_with, lambda_formula_with, lambda_infinity, pcapacity,
    transformed_radius, BoundMode, CapacityConvention, RadiiTriple, ThreeSpheresBound,
};
use three_spheres::experiment::{self, ExperimentConfig, Format};
use three_spheres::fdm2d::{solve_dirichlet, Domain, GridFunction2D, Scheme, SolverConfig};
use three_spheres::params::{EnvelopeMode, EquationSpec, Preset, StructuralParams};
use three_spheres::radial::{
    extremal_drift_solution, fundamental_solution, geometric_mesh, solve_radial_bvp, solve_radial_ivp, DriftSign,
    RadialProfile, RadialSolution,
};
use three_spheres::verify::{
    calibrate_constant, check_three_spheres, validate_calibration, CalibrationMember, VerificationReport,
};
use three_spheres::{Error, Result};

#[derive(Parser)]
#[command(name = "three-spheres", version, about = "Three-spheres bounds, radial and planar solvers, and verification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate λ for one triple as JSON.
    Bounds(BoundsArgs),
    /// Closed-form or shooting radial profile: CSV (r,u,du) and JSON metadata.
    Radial(RadialArgs),
    /// Planar Dirichlet solve on a disk: node CSV (x,y,u) and JSON solve report.
    Fdm(FdmArgs),
    /// Ball extrema (r,M,m) of a node CSV.
    Profile(ProfileArgs),
    /// Check the three-spheres inequality on a profile.
    Verify(VerifyArgs),
    /// Fit the constant of a formula mode on a family of profiles.
    Calibrate(CalibrateArgs),
    /// Run experiment configs.
    Run(RunArgs),
}

#[derive(Args, Clone)]
struct ParamArgs {
    #[arg(long, default_value_t = 2)]
    n: usize,
    #[arg(long, default_value_t = 2.0, allow_negative_numbers = true)]
    p: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    a0: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    a1: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    b1: f64,
    #[arg(long, default_value = "global_decay", value_parser = parse::<EnvelopeMode>)]
    envelope: EnvelopeMode,
}

impl ParamArgs {
    fn params(&self) -> Result<StructuralParams> {
        StructuralParams::new(self.n, self.p, self.a0, self.a1, self.b1)
    }
}

#[derive(Args)]
struct BoundsArgs {
    #[command(flatten)]
    params: ParamArgs,
    /// classical_sub_n, classical_n, border_n, a_harmonic_n or p_gt_n; defaults to the classical mode.
    #[arg(long, value_parser = parse::<BoundMode>)]
    mode: Option<BoundMode>,
    /// r1,r2,r3
    #[arg(long, value_parser = parse_triple)]
    radii: RadiiTriple,
    #[arg(long)]
    c: Option<f64>,
    /// Capacity normalisation; defaults to the standard condenser constant.
    #[arg(long)]
    convention: Option<f64>,
}

#[derive(Copy, Clone, ValueEnum)]
enum RadialKind {
    Fundamental,
    Extremal,
    Ivp,
    Bvp,
}

#[derive(Args)]
struct RadialArgs {
    #[command(flatten)]
    params: ParamArgs,
    #[arg(long, value_enum, default_value = "fundamental")]
    kind: RadialKind,
    #[arg(long, default_value = "p-laplace", value_parser = parse::<Preset>)]
    preset: Preset,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    r_in: f64,
    #[arg(long, default_value_t = 4.0, allow_negative_numbers = true)]
    r_out: f64,
    #[arg(long, default_value_t = 512)]
    steps: usize,
    /// Fundamental `a`; IVP/BVP inner value.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    a: f64,
    /// Fundamental `b`; IVP inner slope; BVP outer value; extremal scale.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    b: f64,
    #[arg(long, value_parser = parse::<DriftSign>, default_value = "plus")]
    sign: DriftSign,
    #[arg(long, default_value = "radial")]
    name: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, ValueEnum)]
enum BoundaryData {
    /// x² − y² about the centre
    Saddle,
    /// x − cx
    Linear,
    /// (x − cx)(y − cy)
    Product,
    /// Re (z − c)³
    Cubic,
    Constant,
}

impl BoundaryData {
    fn eval(self, c: [f64; 2], x: f64, y: f64) -> f64 {
        let (dx, dy) = (x - c[0], y - c[1]);
        match self {
            BoundaryData::Saddle => dx * dx - dy * dy,
            BoundaryData::Linear => dx,
            BoundaryData::Product => dx * dy,
            BoundaryData::Cubic => dx * dx * dx - 3.0 * dx * dy * dy,
            BoundaryData::Constant => 1.0,
        }
    }
}

#[derive(Args)]
struct FdmArgs {
    #[arg(long, default_value_t = 2.0, allow_negative_numbers = true)]
    p: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    b1: f64,
    #[arg(long, default_value = "p-laplace", value_parser = parse::<Preset>)]
    preset: Preset,
    #[arg(long, value_delimiter = ',', num_args = 2, default_values_t = [0.0, 0.0], allow_negative_numbers = true)]
    center: Vec<f64>,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    radius: f64,
    #[arg(long, default_value_t = 1.0 / 32.0, allow_negative_numbers = true)]
    h: f64,
    #[arg(long, default_value_t = 1e-6, allow_negative_numbers = true)]
    epsilon: f64,
    #[arg(long, default_value_t = 1e-8, allow_negative_numbers = true)]
    tol: f64,
    #[arg(long, default_value = "picard", value_parser = parse::<Scheme>)]
    scheme: Scheme,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    damping: f64,
    #[arg(long, value_enum, default_value = "saddle")]
    data: BoundaryData,
    #[arg(long, default_value = "global_decay", value_parser = parse::<EnvelopeMode>)]
    envelope: EnvelopeMode,
    #[arg(long, default_value = "fdm")]
    name: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ProfileArgs {
    #[command(flatten)]
    params: ParamArgs,
    /// Node CSV: coordinate columns followed by `u`.
    #[arg(long)]
    from: PathBuf,
    /// Defaults to the origin.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    center: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', required = true)]
    radii: Vec<f64>,
    #[arg(long, default_value = "ball_max", value_parser = parse::<Geometry>)]
    geometry: Geometry,
    /// Write here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ProfileInput {
    /// Profile CSV with header r,M,m.
    #[arg(long)]
    profile: Vec<PathBuf>,
    #[arg(long, default_value = "ball_max", value_parser = parse::<Geometry>)]
    geometry: Geometry,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    params: ParamArgs,
    #[command(flatten)]
    input: ProfileInput,
    /// Triples as r1,r2,r3; repeat the flag for more.
    #[arg(long = "triple", value_parser = parse_triple, required = true)]
    triples: Vec<RadiiTriple>,
    #[arg(long, value_parser = parse::<BoundMode>)]
    mode: Option<BoundMode>,
    #[arg(long)]
    c: Option<f64>,
    /// Check the minimum form on m(r).
    #[arg(long)]
    dual: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    #[command(flatten)]
    params: ParamArgs,
    #[command(flatten)]
    input: ProfileInput,
    /// Hold-out profile CSVs with header r,M,m.
    #[arg(long)]
    holdout: Vec<PathBuf>,
    #[arg(long = "triple", value_parser = parse_triple, required = true)]
    triples: Vec<RadiiTriple>,
    #[arg(long, value_parser = parse::<BoundMode>, required = true)]
    mode: BoundMode,
    #[arg(long, default_value_t = 1e-8, allow_negative_numbers = true)]
    holdout_tol: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long = "config", required = true)]
    configs: Vec<PathBuf>,
    /// Overrides the config's output directory (as does THREE_SPHERES_OUT).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print this format to stdout.
    #[arg(long, default_value = "table", value_parser = parse::<Format>)]
    print: Format,
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> std::result::Result<T, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_triple(s: &str) -> std::result::Result<RadiiTriple, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("bad radius `{t}`: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    if v.len() != 3 {
        return Err(format!("triple `{s}` needs three radii"));
    }
    RadiiTriple::new(v[0], v[1], v[2]).map_err(|e| e.to_string())
}

fn out_dir(flag: &Option<PathBuf>) -> PathBuf {
    match (flag, std::env::var_os(experiment::OUTPUT_DIR_ENV)) {
        (Some(d), _) => d.clone(),
        (None, Some(d)) if !d.is_empty() => PathBuf::from(d),
        _ => PathBuf::from("out"),
    }
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => experiment::write_atomic(p, text),
        None => {
            io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn bounds(args: BoundsArgs) -> Result<()> {
    let params = args.params.params()?;
    let triple = args.radii;
    let mode = match args.mode {
        Some(m) => m,
        None => BoundMode::classical_for(&params)?,
    };
    mode.check_regime(&params)?;
    let conv = match args.convention {
        Some(k) => CapacityConvention::new(k)?,
        None => CapacityConvention::standard(&params),
    };
    let mut report = json!({
        "mode": mode,
        "params": params,
        "triple": triple,
        "convention": conv,
    });
    let lambda = if mode.is_classical() {
        Some(classical_weight(&params, &triple)?)
    } else {
        report["exponent"] = json!(lambda_exponent_with(mode, &params, &triple, &conv)?);
        match args.c {
            Some(c) => {
                report["c"] = json!(c);
                report["lambda_infinity"] = json!(lambda_infinity(c)?);
                Some(lambda_formula_with(mode, &params, &triple, c, &conv)?)
            }
            None => None,
        }
    };
    if mode != BoundMode::PGtN {
        report["transformed_radii"] = json!(triple
            .as_array()
            .iter()
            .map(|&r| transformed_radius(&params, r))
            .collect::<Result<Vec<_>>>()?);
    } else {
        report["capacities"] = json!({
            "r2_r3": pcapacity(&params, triple.r2(), triple.r3(), &conv)?,
            "r1_r2": pcapacity(&params, triple.r1(), triple.r2(), &conv)?,
        });
        report["capacity_lambda"] = json!(capacity_lambda(&params, &triple, &conv)?);
    }
    report["lambda"] = json!(lambda);
    emit(&None, &to_json(&report)?)
}

fn radial(args: RadialArgs) -> Result<()> {
    let params = args.params.params()?;
    let envelope = args.params.envelope;
    let mesh = geometric_mesh(args.r_in, args.r_out, args.steps)?;
    let (prof, extra): (RadialProfile, serde_json::Value) = match args.kind {
        RadialKind::Fundamental => {
            let f = fundamental_solution(&params, args.a, args.b);
            (f.sample(&mesh)?, json!({ "a": args.a, "b": args.b }))
        }
        RadialKind::Extremal => {
            let e = extremal_drift_solution(&params, args.sign, args.a, args.r_in)?.scaled(args.b)?;
            let beta = e.beta();
            (e.sample(&mesh)?, json!({ "u0": args.a, "scale": args.b, "sign": args.sign, "beta": beta }))
        }
        RadialKind::Ivp | RadialKind::Bvp => {
            let spec = EquationSpec::preset(args.preset, params, envelope)?;
            let prof = match args.kind {
                RadialKind::Ivp => solve_radial_ivp(&spec, args.r_in, args.a, args.b, args.r_out, args.steps)?,
                _ => solve_radial_bvp(&spec, args.r_in, args.a, args.r_out, args.b, args.steps, 1e-12)?,
            };
            (prof, json!({ "preset": args.preset, "u_in": args.a, "second": args.b }))
        }
    };
    let dir = out_dir(&args.out);
    let mut csv = Vec::new();
    prof.write_csv(&mut csv)?;
    let csv_path = dir.join(format!("{}.csv", args.name));
    experiment::write_atomic(&csv_path, std::str::from_utf8(&csv).expect("csv output is utf-8"))?;
    let meta = json!({
        "provenance": prof.provenance(),
        "params": params,
        "envelope": prof.envelope(),
        "r_in": prof.r_in(),
        "r_out": prof.r_out(),
        "steps": args.steps,
        "inputs": extra,
        "csv": csv_path,
    });
    let meta_text = to_json(&meta)?;
    experiment::write_atomic(&dir.join(format!("{}.json", args.name)), &meta_text)?;
    emit(&None, &meta_text)
}

fn fdm(args: FdmArgs) -> Result<()> {
    let params = StructuralParams::new(2, args.p, 1.0, 1.0, args.b1)?;
    let spec = EquationSpec::preset(args.preset, params, args.envelope)?;
    let center = [args.center[0], args.center[1]];
    let template = GridFunction2D::new(Domain::disk(center, args.radius)?, args.h)?;
    let cfg = SolverConfig {
        epsilon: args.epsilon,
        tol: args.tol,
        max_iter: args.max_iter,
        scheme: args.scheme,
        damping: args.damping,
        omega: None,
    };
    let data = args.data;
    let (grid, report) = solve_dirichlet(&spec, &|x, y| data.eval(center, x, y), &template, &cfg)?;
    let dir = out_dir(&args.out);
    let mut csv = Vec::new();
    grid.write_csv(&mut csv)?;
    experiment::write_atomic(
        &dir.join(format!("{}.csv", args.name)),
        std::str::from_utf8(&csv).expect("csv output is utf-8"),
    )?;
    let text = to_json(&json!({
        "preset": args.preset,
        "params": params,
        "center": center,
        "radius": args.radius,
        "h": args.h,
        "solver": cfg,
        "nodes": grid.len(),
        "interior": grid.interior_count(),
        "report": report,
    }))?;
    experiment::write_atomic(&dir.join(format!("{}.json", args.name)), &text)?;
    emit(&None, &text)
}

fn profile_cmd(args: ProfileArgs) -> Result<()> {
    let params = args.params.params()?;
    let cloud = NodeCloud::read_csv(BufReader::new(File::open(&args.from)?))?;
    let center = args.center.unwrap_or_else(|| vec![0.0; cloud.dim()]);
    let prof = profile(
        Source::Nodes {
            cloud: &cloud,
            params,
            envelope: args.params.envelope,
        },
        &center,
        &args.radii,
        args.geometry,
    )?;
    let mut buf = Vec::new();
    prof.write_csv(&mut buf)?;
    emit(&args.out, std::str::from_utf8(&buf).expect("csv output is utf-8"))
}

fn read_profiles(paths: &[PathBuf], params: StructuralParams, envelope: EnvelopeMode, g: Geometry) -> Result<Vec<BallProfile>> {
    paths
        .iter()
        .map(|p: &PathBuf| BallProfile::read_csv(BufReader::new(File::open(p)?), params, envelope, g))
        .collect()
}

fn bound_for(mode: Option<BoundMode>, c: Option<f64>, params: &StructuralParams, t: RadiiTriple) -> Result<ThreeSpheresBound> {
    match mode {
        None => ThreeSpheresBound::classical(params, t),
        Some(m) if m.is_classical() => {
            m.check_regime(params)?;
            ThreeSpheresBound::classical(params, t)
        }
        Some(m) => {
            let c = c.ok_or_else(|| Error::InvalidArgument(format!("mode {m} needs --c")))?;
            ThreeSpheresBound::explicit(m, params, t, c)
        }
    }
}

#[derive(Serialize)]
struct VerifyRow {
    profile: PathBuf,
    #[serde(flatten)]
    report: VerificationReport,
    lambda_star: Option<f64>,
}

fn verify_cmd(args: VerifyArgs) -> Result<()> {
    let params = args.params.params()?;
    if args.input.profile.is_empty() {
        return Err(Error::InvalidArgument("give at least one --profile".into()));
    }
    let profiles = read_profiles(&args.input.profile, params, args.params.envelope, args.input.geometry)?;
    let mut rows = Vec::new();
    for (path, prof) in args.input.profile.iter().zip(&profiles) {
        for &t in &args.triples {
            let bound = bound_for(args.mode, args.c, &params, t)?;
            let star = if args.dual {
                empirical_lambda_star_dual(prof, &t)?
            } else {
                empirical_lambda_star(prof, &t)?
            };
            rows.push(VerifyRow {
                profile: path.clone(),
                report: check_three_spheres(prof, &bound, args.dual)?,
                lambda_star: star.value(),
            });
        }
    }
    let passed = rows.iter().all(|r| r.report.passed);
    emit(&args.out, &to_json(&json!({ "passed": passed, "rows": rows }))?)?;
    if passed {
        Ok(())
    } else {
        let failed = rows.iter().filter(|r| !r.report.passed).count();
        Err(Error::GateFailed(format!("{failed} of {} checks failed", rows.len())))
    }
}

fn calibrate_cmd(args: CalibrateArgs) -> Result<()> {
    let params = args.params.params()?;
    args.mode.check_regime(&params)?;
    let load = |paths: &[PathBuf]| -> Result<Vec<CalibrationMember>> {
        Ok(read_profiles(paths, params, args.params.envelope, args.input.geometry)?
            .into_iter()
            .map(|profile| CalibrationMember {
                profile,
                triples: args.triples.clone(),
            })
            .collect())
    };
    let fit = load(&args.input.profile)?;
    let cal = calibrate_constant(&fit, args.mode)?;
    let holdout = if args.holdout.is_empty() {
        None
    } else {
        Some(validate_calibration(&load(&args.holdout)?, args.mode, cal.c_min, args.holdout_tol)?)
    };
    emit(&args.out, &to_json(&json!({ "calibration": cal, "holdout": holdout }))?)?;
    match holdout {
        Some(h) if !h.passed => Err(Error::GateFailed(format!("hold-out failed at C = {}", cal.c_min))),
        _ => Ok(()),
    }
}

fn run(args: RunArgs) -> Result<()> {
    let configs = args
        .configs
        .iter()
        .map(|p| ExperimentConfig::load(p).map_err(|e| Error::Config(format!("{}: {e}", p.display()))))
        .collect::<Result<Vec<_>>>()?;
    let results = experiment::run_batch(&configs);
    let mut gate = Ok(());
    for (cfg, res) in configs.iter().zip(results) {
        let bundle = res?;
        let dir = match &args.out {
            Some(d) => d.clone(),
            None => experiment::output_dir(cfg),
        };
        for p in experiment::write_reports(cfg, &bundle, &dir)? {
            eprintln!("wrote {}", p.display());
        }
        emit(&None, &experiment::emit_report(&bundle, args.print)?)?;
        if gate.is_ok() {
            gate = bundle.gate();
        }
    }
    gate
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Bounds(a) => bounds(a),
        Command::Radial(a) => radial(a),
        Command::Fdm(a) => fdm(a),
        Command::Profile(a) => profile_cmd(a),
        Command::Verify(a) => verify_cmd(a),
        Command::Calibrate(a) => calibrate_cmd(a),
        Command::Run(a) => run(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::GateFailed(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
