//! Ball and sphere extrema `M(r)`, `m(r)` and the empirical convexity
//! parameter they imply.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::bounds::{classical_weight, RadiiTriple};
use crate::error::{Error, Result};
use crate::fdm2d::GridFunction2D;
use crate::params::{EnvelopeMode, StructuralParams};
use crate::radial::{Provenance, RadialProfile, RadialSolution};

const RADIUS_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Geometry {
    BallMax,
    SphereMax,
}

impl std::str::FromStr for Geometry {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "ball_max" | "ball" => Ok(Geometry::BallMax),
            "sphere_max" | "sphere" => Ok(Geometry::SphereMax),
            other => Err(Error::InvalidArgument(format!("unknown geometry `{other}`"))),
        }
    }
}

/// Scattered samples `(x, u)`, e.g. read back from a node CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeCloud {
    dim: usize,
    points: Vec<Vec<f64>>,
    values: Vec<f64>,
}

impl NodeCloud {
    pub fn new(dim: usize, points: Vec<Vec<f64>>, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || points.len() != values.len() || points.iter().any(|p| p.len() != dim) {
            return Err(Error::InvalidArgument("node cloud points and values disagree".into()));
        }
        if points.iter().flatten().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("node cloud entries".into()));
        }
        Ok(NodeCloud { dim, points, values })
    }

    /// Reads CSV whose last column is `u` and whose other columns are coordinates.
    pub fn read_csv<R: Read>(rdr: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(rdr);
        let headers = r.headers()?.clone();
        if headers.len() < 2 || headers.get(headers.len() - 1) != Some("u") {
            return Err(Error::InvalidArgument(format!(
                "node CSV needs coordinate columns followed by `u`, got {:?}",
                headers.iter().collect::<Vec<_>>()
            )));
        }
        let dim = headers.len() - 1;
        let (mut points, mut values) = (Vec::new(), Vec::new());
        for rec in r.records() {
            let rec = rec?;
            let nums: Vec<f64> = rec
                .iter()
                .map(|f| f.trim().parse::<f64>().map_err(|e| Error::InvalidArgument(format!("bad number `{f}`: {e}"))))
                .collect::<Result<_>>()?;
            values.push(nums[dim]);
            points.push(nums[..dim].to_vec());
        }
        NodeCloud::new(dim, points, values)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn len(&self) -> usize {
        self.values.len()
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Where the profile values come from.
#[derive(Clone, Copy)]
pub enum Source<'a> {
    Radial(&'a RadialProfile),
    /// Closed form restricted to the annulus `r_in <= |x| <= r_out`.
    Exact {
        solution: &'a dyn RadialSolution,
        r_in: f64,
        r_out: f64,
    },
    Grid {
        grid: &'a GridFunction2D,
        params: StructuralParams,
        envelope: EnvelopeMode,
    },
    Nodes {
        cloud: &'a NodeCloud,
        params: StructuralParams,
        envelope: EnvelopeMode,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "provenance")]
pub enum SourceKind {
    Radial(Provenance),
    Grid,
    Nodes,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallProfile {
    center: Vec<f64>,
    radii: Vec<f64>,
    #[serde(rename = "M")]
    max: Vec<f64>,
    #[serde(rename = "m")]
    min: Vec<f64>,
    geometry: Geometry,
    params: StructuralParams,
    envelope: EnvelopeMode,
    source: SourceKind,
}

impl BallProfile {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        center: Vec<f64>,
        radii: Vec<f64>,
        max: Vec<f64>,
        min: Vec<f64>,
        geometry: Geometry,
        params: StructuralParams,
        envelope: EnvelopeMode,
        source: SourceKind,
    ) -> Result<Self> {
        check_radii(&radii)?;
        if max.len() != radii.len() || min.len() != radii.len() {
            return Err(Error::InvalidArgument("M and m need one entry per radius".into()));
        }
        if max.iter().chain(&min).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("ball extrema".into()));
        }
        if let Some(i) = (0..radii.len()).find(|&i| max[i] < min[i]) {
            return Err(Error::InvalidArgument(format!(
                "M({}) = {} below m = {}",
                radii[i], max[i], min[i]
            )));
        }
        Ok(BallProfile {
            center,
            radii,
            max,
            min,
            geometry,
            params,
            envelope,
            source,
        })
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }
    pub fn radii(&self) -> &[f64] {
        &self.radii
    }
    /// `M(r)` per radius.
    pub fn max(&self) -> &[f64] {
        &self.max
    }
    /// `m(r)` per radius.
    pub fn min(&self) -> &[f64] {
        &self.min
    }
    pub fn geometry(&self) -> Geometry {
        self.geometry
    }
    pub fn params(&self) -> &StructuralParams {
        &self.params
    }
    pub fn envelope(&self) -> EnvelopeMode {
        self.envelope
    }
    pub fn source(&self) -> SourceKind {
        self.source
    }

    /// Index of `r` in the radii list (relative match 1e-12).
    pub fn index_of(&self, r: f64) -> Result<usize> {
        self.radii
            .iter()
            .position(|&q| (q - r).abs() <= RADIUS_SLACK * q.max(r))
            .ok_or_else(|| Error::InvalidArgument(format!("radius {r} not in profile radii {:?}", self.radii)))
    }

    pub fn extrema_at(&self, r: f64) -> Result<(f64, f64)> {
        let i = self.index_of(r)?;
        Ok((self.max[i], self.min[i]))
    }

    /// Largest oscillation `M - m` over the radii, or `max|M|` when that is 0.
    pub fn scale(&self) -> f64 {
        let osc = self.max.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - self.min.iter().cloned().fold(f64::INFINITY, f64::min);
        if osc > 0.0 {
            osc
        } else {
            self.max.iter().map(|v| v.abs()).fold(0.0, f64::max)
        }
    }

    /// Profile of `s u + c` for `s != 0`; a negative `s` swaps `M` and `m`.
    pub fn affine(&self, s: f64, c: f64) -> Result<BallProfile> {
        if !(s != 0.0 && s.is_finite() && c.is_finite()) {
            return Err(Error::InvalidArgument(format!("affine map {s} u + {c} is degenerate")));
        }
        let (max, min) = if s > 0.0 {
            (
                self.max.iter().map(|v| s * v + c).collect(),
                self.min.iter().map(|v| s * v + c).collect(),
            )
        } else {
            (
                self.min.iter().map(|v| s * v + c).collect(),
                self.max.iter().map(|v| s * v + c).collect(),
            )
        };
        Ok(BallProfile {
            max,
            min,
            ..self.clone()
        })
    }

    pub fn negated(&self) -> BallProfile {
        self.affine(-1.0, 0.0).expect("negation is nondegenerate")
    }

    /// CSV with header `r,M,m`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        wtr.write_record(["r", "M", "m"])?;
        for i in 0..self.radii.len() {
            wtr.write_record([self.radii[i].to_string(), self.max[i].to_string(), self.min[i].to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads the `r,M,m` layout written by [`BallProfile::write_csv`].
    pub fn read_csv<R: Read>(
        rdr: R,
        params: StructuralParams,
        envelope: EnvelopeMode,
        geometry: Geometry,
    ) -> Result<Self> {
        let mut r = csv::Reader::from_reader(rdr);
        let headers = r.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["r", "M", "m"] {
            return Err(Error::InvalidArgument(format!(
                "profile CSV needs header r,M,m, got {:?}",
                headers.iter().collect::<Vec<_>>()
            )));
        }
        let (mut radii, mut max, mut min) = (Vec::new(), Vec::new(), Vec::new());
        for rec in r.records() {
            let rec = rec?;
            let num = |i: usize| -> Result<f64> {
                let f = rec.get(i).unwrap_or("");
                f.trim().parse::<f64>().map_err(|e| Error::InvalidArgument(format!("bad number `{f}`: {e}")))
            };
            radii.push(num(0)?);
            max.push(num(1)?);
            min.push(num(2)?);
        }
        BallProfile::new(
            vec![0.0; params.n()],
            radii,
            max,
            min,
            geometry,
            params,
            envelope,
            SourceKind::Synthetic,
        )
    }
}

fn check_radii(radii: &[f64]) -> Result<()> {
    if radii.is_empty() {
        return Err(Error::InvalidArgument("radii list is empty".into()));
    }
    if !(radii[0] > 0.0) || radii.windows(2).any(|w| !(w[1] > w[0])) || radii.iter().any(|r| !r.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "radii must be positive and strictly increasing, got {radii:?}"
        )));
    }
    Ok(())
}

fn fold_extrema(it: impl Iterator<Item = f64>, r: f64) -> Result<(f64, f64)> {
    let mut any = false;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in it {
        any = true;
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if any {
        Ok((hi, lo))
    } else {
        Err(Error::EmptyNodeSet(r))
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn radial_bounds_check(center: &[f64], n: usize, r: f64, r_in: f64, r_out: f64) -> Result<()> {
    if center.len() != n || center.iter().any(|&c| c != 0.0) {
        return Err(Error::InvalidArgument(format!(
            "radial sources are centred at the origin of R^{n}, got {center:?}"
        )));
    }
    let slack = RADIUS_SLACK * r_out;
    if r < r_in - slack || r > r_out + slack {
        return Err(Error::OutsideDomain(format!("radius {r} outside the annulus [{r_in}, {r_out}]")));
    }
    Ok(())
}

/// `M(r)` and `m(r)` at each radius.
///
/// Radial sources live on an annulus about the origin, so the "ball" there
/// is `r_in <= |x| <= r`. Grid balls must lie in the closed domain and have
/// radius at least `2h`; grid spheres are the shell `[r - h, r]`.
pub fn profile(source: Source<'_>, center: &[f64], radii: &[f64], geometry: Geometry) -> Result<BallProfile> {
    check_radii(radii)?;
    let mut max = Vec::with_capacity(radii.len());
    let mut min = Vec::with_capacity(radii.len());
    let (params, envelope, kind) = match source {
        Source::Radial(prof) => {
            for &r in radii {
                radial_bounds_check(center, prof.params().n(), r, prof.r_in(), prof.r_out())?;
                let (hi, lo) = match geometry {
                    Geometry::SphereMax => {
                        let v = prof.value_at(r)?;
                        (v, v)
                    }
                    Geometry::BallMax => {
                        let inside = prof
                            .mesh()
                            .iter()
                            .zip(prof.values())
                            .filter(|(&q, _)| q <= r)
                            .map(|(_, &v)| v);
                        fold_extrema(inside.chain(std::iter::once(prof.value_at(r)?)), r)?
                    }
                };
                max.push(hi);
                min.push(lo);
            }
            (*prof.params(), prof.envelope(), SourceKind::Radial(prof.provenance()))
        }
        Source::Exact { solution, r_in, r_out } => {
            if !(r_in > 0.0 && r_in < r_out) {
                return Err(Error::InvalidArgument(format!("annulus [{r_in}, {r_out}] invalid")));
            }
            for &r in radii {
                radial_bounds_check(center, solution.params().n(), r, r_in, r_out)?;
                let (hi, lo) = match geometry {
                    Geometry::SphereMax => {
                        let v = solution.value(r);
                        (v, v)
                    }
                    Geometry::BallMax => {
                        let r = r.clamp(r_in, r_out);
                        let k = 256;
                        let samples = (0..=k).map(|i| solution.value(r_in * (r / r_in).powf(i as f64 / k as f64)));
                        fold_extrema(samples.chain([solution.value(r_in), solution.value(r)]), r)?
                    }
                };
                max.push(hi);
                min.push(lo);
            }
            (*solution.params(), solution.envelope(), SourceKind::Radial(solution.provenance()))
        }
        Source::Grid { grid, params, envelope } => {
            if center.len() != 2 {
                return Err(Error::InvalidArgument("grid centres are planar points".into()));
            }
            let dom = grid.domain();
            let dc = dist(center, &dom.center());
            let h = grid.h();
            for &r in radii {
                if r < 2.0 * h * (1.0 - RADIUS_SLACK) {
                    return Err(Error::InvalidArgument(format!("radius {r} below 2h = {}", 2.0 * h)));
                }
                let slack = RADIUS_SLACK * dom.outer_radius();
                let inner = dom.inner_radius();
                if dc + r > dom.outer_radius() + slack || (inner > 0.0 && dc - r < inner - slack) {
                    return Err(Error::OutsideDomain(format!("ball B({center:?}, {r}) leaves {dom:?}")));
                }
                let lo_r = match geometry {
                    Geometry::BallMax => f64::NEG_INFINITY,
                    Geometry::SphereMax => r - h,
                };
                let vals = grid.nodes().filter_map(|(x, _, v)| {
                    let d = dist(&x, center);
                    (d <= r * (1.0 + RADIUS_SLACK) && d >= lo_r - RADIUS_SLACK * r).then_some(v)
                });
                let (hi, lo) = fold_extrema(vals, r)?;
                max.push(hi);
                min.push(lo);
            }
            (params, envelope, SourceKind::Grid)
        }
        Source::Nodes { cloud, params, envelope } => {
            if center.len() != cloud.dim() {
                return Err(Error::InvalidArgument(format!(
                    "centre has {} coordinates, cloud has {}",
                    center.len(),
                    cloud.dim()
                )));
            }
            let reach = cloud.points.iter().map(|x| dist(x, center)).fold(0.0, f64::max);
            for &r in radii {
                if r > reach * (1.0 + RADIUS_SLACK) {
                    return Err(Error::OutsideDomain(format!("radius {r} exceeds the node cloud extent {reach}")));
                }
                let vals = cloud.points.iter().zip(&cloud.values).filter_map(|(x, &v)| {
                    let d = dist(x, center);
                    let keep = match geometry {
                        Geometry::BallMax => d <= r * (1.0 + RADIUS_SLACK),
                        Geometry::SphereMax => {
                            let shell = nearest_spacing(cloud).max(RADIUS_SLACK * r);
                            d <= r * (1.0 + RADIUS_SLACK) && d >= r - shell
                        }
                    };
                    keep.then_some(v)
                });
                let (hi, lo) = fold_extrema(vals, r)?;
                max.push(hi);
                min.push(lo);
            }
            (params, envelope, SourceKind::Nodes)
        }
    };
    BallProfile::new(center.to_vec(), radii.to_vec(), max, min, geometry, params, envelope, kind)
}

fn nearest_spacing(cloud: &NodeCloud) -> f64 {
    // spacing of a lattice export, estimated from the first point
    let first = match cloud.points.first() {
        Some(p) => p,
        None => return 0.0,
    };
    cloud
        .points
        .iter()
        .skip(1)
        .map(|x| dist(x, first))
        .filter(|&d| d > 0.0)
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaStar {
    Value(f64),
    /// `M(r3) = M(r1)`: every λ satisfies the inequality.
    All,
}

impl LambdaStar {
    pub fn value(&self) -> Option<f64> {
        match self {
            LambdaStar::Value(v) => Some(*v),
            LambdaStar::All => None,
        }
    }

    /// Whether a given `λ` satisfies the inequality.
    pub fn admits(&self, lambda: f64) -> bool {
        match self {
            LambdaStar::Value(v) => lambda <= *v,
            LambdaStar::All => true,
        }
    }
}

/// `λ* = (M(r3) - M(r2)) / (M(r3) - M(r1))`.
pub fn empirical_lambda_star(prof: &BallProfile, triple: &RadiiTriple) -> Result<LambdaStar> {
    let m = [
        prof.extrema_at(triple.r1())?.0,
        prof.extrema_at(triple.r2())?.0,
        prof.extrema_at(triple.r3())?.0,
    ];
    if !(m[0] <= m[1] && m[1] <= m[2]) {
        return Err(Error::NonMonotone(format!("M = {m:?} at radii {:?}", triple.as_array())));
    }
    if m[2] == m[0] {
        return Ok(LambdaStar::All);
    }
    Ok(LambdaStar::Value((m[2] - m[1]) / (m[2] - m[0])))
}

/// `λ* = (m(r2) - m(r3)) / (m(r1) - m(r3))`, the threshold for the minimum form.
pub fn empirical_lambda_star_dual(prof: &BallProfile, triple: &RadiiTriple) -> Result<LambdaStar> {
    let m = [
        prof.extrema_at(triple.r1())?.1,
        prof.extrema_at(triple.r2())?.1,
        prof.extrema_at(triple.r3())?.1,
    ];
    if !(m[0] >= m[1] && m[1] >= m[2]) {
        return Err(Error::NonMonotone(format!("m = {m:?} at radii {:?}", triple.as_array())));
    }
    if m[2] == m[0] {
        return Ok(LambdaStar::All);
    }
    Ok(LambdaStar::Value((m[1] - m[2]) / (m[0] - m[2])))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityReport {
    /// `λ_c M(r_i) + (1 - λ_c) M(r_{i+2}) - M(r_{i+1})` per consecutive triple.
    pub margins: Vec<f64>,
    pub worst_margin: f64,
    pub worst_triple: RadiiTriple,
    pub tol: f64,
    pub convex: bool,
}

/// Convexity of `M` in the transformed radius across consecutive radii.
pub fn convexity_check(prof: &BallProfile, params: &StructuralParams) -> Result<ConvexityReport> {
    if params.p() > params.n() as f64 {
        return Err(Error::RegimeMismatch("convexity in the transformed radius needs p <= n".into()));
    }
    let r = prof.radii();
    if r.len() < 3 {
        return Err(Error::InvalidArgument(format!("need at least 3 radii, got {}", r.len())));
    }
    let m = prof.max();
    let mut margins = Vec::with_capacity(r.len() - 2);
    let mut worst = (f64::INFINITY, None);
    for i in 0..r.len() - 2 {
        let t = RadiiTriple::new(r[i], r[i + 1], r[i + 2])?;
        let lc = classical_weight(params, &t)?;
        let margin = lc * m[i] + (1.0 - lc) * m[i + 2] - m[i + 1];
        if margin < worst.0 {
            worst = (margin, Some(t));
        }
        margins.push(margin);
    }
    let tol = 1e-9 * prof.scale();
    let (worst_margin, worst_triple) = (worst.0, worst.1.expect("at least one triple"));
    Ok(ConvexityReport {
        margins,
        worst_margin,
        worst_triple,
        tol,
        convex: worst_margin >= -tol,
    })
}
