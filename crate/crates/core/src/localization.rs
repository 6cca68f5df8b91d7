//! Comparison of a measured `(beta_eff, phi_T)` with gridded coupling maps
//! for an x-polarized dipole: iso-phase contours, the coupling range along
//! them, and the dipole tilt implied by `beta_eff ∝ cos^2(theta)`.
//!
//! Maps are two-dimensional cross-sections; positions along the guide axis
//! are not resolved.
//!
//! Map CSV: header `y_nm,z_nm,beta_eff,phi_t_deg`, one row per grid node,
//! `y` varying fastest. Empty or `NaN` cells lie outside the valid region.
//! Lines `# key: value` are stored as metadata.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{deg, rad, wrap_angle};

pub const MAP_HEADER: [&str; 4] = ["y_nm", "z_nm", "beta_eff", "phi_t_deg"];
pub const CONTOUR_HEADER: [&str; 4] = ["branch_id", "y_nm", "z_nm", "beta_eff"];

/// Samples per contour segment in [`beta_range_on_contour`].
const SAMPLES_PER_SEGMENT: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMap {
    y: Vec<f64>,
    z: Vec<f64>,
    /// `NaN` outside the valid region. Index `j * ny + i`.
    beta: Vec<f64>,
    /// Radians.
    phi: Vec<f64>,
    pub meta: BTreeMap<String, String>,
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] < w[1])
}

impl CouplingMap {
    /// Builds a map from axes (nm) and node values (`phi` in radians),
    /// `y` fastest. `NaN` marks nodes outside the valid region.
    pub fn new(y: Vec<f64>, z: Vec<f64>, beta: Vec<f64>, phi: Vec<f64>) -> Result<Self> {
        if y.len() < 2 || z.len() < 2 {
            return Err(Error::param("axes", "need at least 2 nodes per axis"));
        }
        if !strictly_increasing(&y) || !y.iter().all(|v| v.is_finite()) {
            return Err(Error::param(
                "y",
                "axis must be finite and strictly increasing",
            ));
        }
        if !strictly_increasing(&z) || !z.iter().all(|v| v.is_finite()) {
            return Err(Error::param(
                "z",
                "axis must be finite and strictly increasing",
            ));
        }
        let n = y.len() * z.len();
        if beta.len() != n || phi.len() != n {
            return Err(Error::param(
                "grid",
                format!(
                    "expected {n} nodes, got beta {} and phi {}",
                    beta.len(),
                    phi.len()
                ),
            ));
        }
        let mut beta = beta;
        let mut phi = phi;
        for k in 0..n {
            let (i, j) = (k % y.len(), k / y.len());
            if beta[k].is_nan() || phi[k].is_nan() {
                beta[k] = f64::NAN;
                phi[k] = f64::NAN;
                continue;
            }
            if !(0.0..=1.0).contains(&beta[k]) {
                return Err(Error::param(
                    "beta_eff",
                    format!(
                        "{} outside [0, 1] at y = {} nm, z = {} nm",
                        beta[k], y[i], z[j]
                    ),
                ));
            }
            if !(phi[k] > -PI && phi[k] <= PI) {
                return Err(Error::param(
                    "phi_t",
                    format!(
                        "{} rad outside (-pi, pi] at y = {} nm, z = {} nm",
                        phi[k], y[i], z[j]
                    ),
                ));
            }
        }
        Ok(CouplingMap {
            y,
            z,
            beta,
            phi,
            meta: BTreeMap::new(),
        })
    }

    /// Samples analytic fields `f(y, z) -> (beta, phi)` on a grid.
    pub fn from_fn(y: Vec<f64>, z: Vec<f64>, f: impl Fn(f64, f64) -> (f64, f64)) -> Result<Self> {
        let mut beta = Vec::with_capacity(y.len() * z.len());
        let mut phi = Vec::with_capacity(y.len() * z.len());
        for &zj in &z {
            for &yi in &y {
                let (b, p) = f(yi, zj);
                beta.push(b);
                phi.push(p);
            }
        }
        Self::new(y, z, beta, phi)
    }

    pub fn y_axis(&self) -> &[f64] {
        &self.y
    }

    pub fn z_axis(&self) -> &[f64] {
        &self.z
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        j * self.y.len() + i
    }

    /// Node values `(beta, phi)`, `None` outside the valid region.
    pub fn node(&self, i: usize, j: usize) -> Option<(f64, f64)> {
        let k = self.idx(i, j);
        (!self.beta[k].is_nan()).then(|| (self.beta[k], self.phi[k]))
    }

    /// Largest `beta_eff` on the map.
    pub fn beta_max(&self) -> f64 {
        self.beta
            .iter()
            .filter(|b| !b.is_nan())
            .fold(f64::NEG_INFINITY, |a, &b| a.max(b))
    }

    fn locate(axis: &[f64], x: f64) -> Option<(usize, f64)> {
        if !(x >= axis[0] && x <= axis[axis.len() - 1]) {
            return None;
        }
        let k = axis.partition_point(|&a| a <= x).clamp(1, axis.len() - 1) - 1;
        Some((k, (x - axis[k]) / (axis[k + 1] - axis[k])))
    }

    fn cell(&self, i: usize, j: usize) -> Option<[(f64, f64); 4]> {
        Some([
            self.node(i, j)?,
            self.node(i + 1, j)?,
            self.node(i + 1, j + 1)?,
            self.node(i, j + 1)?,
        ])
    }

    /// Bilinear `(beta, phi)` at `(y, z)` nm. The phase is unwrapped within
    /// the cell before interpolating. `None` outside the valid region.
    pub fn interpolate(&self, y: f64, z: f64) -> Option<(f64, f64)> {
        let (i, ty) = Self::locate(&self.y, y)?;
        let (j, tz) = Self::locate(&self.z, z)?;
        let c = self.cell(i, j)?;
        let w = [
            (1.0 - ty) * (1.0 - tz),
            ty * (1.0 - tz),
            ty * tz,
            (1.0 - ty) * tz,
        ];
        let p0 = c[0].1;
        let mut b = 0.0;
        let mut p = 0.0;
        for k in 0..4 {
            b += w[k] * c[k].0;
            p += w[k] * (p0 + wrap_angle(c[k].1 - p0));
        }
        Some((b, wrap_angle(p)))
    }

    /// Map with axes transformed as `y -> a y + dy`, `z -> a z + dz` (`a > 0`).
    pub fn transformed(&self, a: f64, dy: f64, dz: f64) -> Result<Self> {
        let mut m = Self::new(
            self.y.iter().map(|v| a * v + dy).collect(),
            self.z.iter().map(|v| a * v + dz).collect(),
            self.beta.clone(),
            self.phi.clone(),
        )?;
        m.meta = self.meta.clone();
        Ok(m)
    }
}

/// Reads a map CSV from `path`.
pub fn load_map(path: impl AsRef<Path>) -> Result<CouplingMap> {
    parse_map(std::fs::File::open(path)?)
}

fn parse_cell(s: &str, line: usize, col: &str) -> Result<f64> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(f64::NAN);
    }
    s.parse::<f64>().map_err(|_| Error::MapFormat {
        line,
        message: format!("column `{col}`: cannot parse `{s}`"),
    })
}

/// Parses a map CSV. Errors carry the 1-based line number.
pub fn parse_map(mut reader: impl Read) -> Result<CouplingMap> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    let mut meta = BTreeMap::new();
    for l in text.lines() {
        if let Some(rest) = l.trim_start().strip_prefix('#') {
            if let Some((k, v)) = rest.split_once(':') {
                meta.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
    }
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != MAP_HEADER {
        let line = text
            .lines()
            .position(|l| !l.trim_start().starts_with('#'))
            .map_or(1, |k| k + 1);
        return Err(Error::MapFormat {
            line,
            message: format!("expected header `{}`", MAP_HEADER.join(",")),
        });
    }

    struct Row {
        line: usize,
        y: f64,
        z: f64,
        beta: f64,
        phi_deg: f64,
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() != 4 {
            return Err(Error::MapFormat {
                line,
                message: format!("expected 4 fields, got {}", rec.len()),
            });
        }
        let y = parse_cell(&rec[0], line, "y_nm")?;
        let z = parse_cell(&rec[1], line, "z_nm")?;
        if !(y.is_finite() && z.is_finite()) {
            return Err(Error::MapFormat {
                line,
                message: "coordinates must be finite".into(),
            });
        }
        rows.push(Row {
            line,
            y,
            z,
            beta: parse_cell(&rec[2], line, "beta_eff")?,
            phi_deg: parse_cell(&rec[3], line, "phi_t_deg")?,
        });
    }
    if rows.is_empty() {
        return Err(Error::MapFormat {
            line: 1,
            message: "no grid rows".into(),
        });
    }
    let ny = rows.iter().take_while(|r| r.z == rows[0].z).count();
    let y_axis: Vec<f64> = rows[..ny].iter().map(|r| r.y).collect();
    for w in rows[..ny].windows(2) {
        if w[1].y <= w[0].y {
            return Err(Error::MapFormat {
                line: w[1].line,
                message: format!("y axis not strictly increasing at y = {} nm", w[1].y),
            });
        }
    }
    if rows.len() % ny != 0 {
        return Err(Error::MapFormat {
            line: rows[rows.len() - 1].line,
            message: format!("{} rows is not a multiple of the {ny} y nodes", rows.len()),
        });
    }
    let mut z_axis = Vec::new();
    let mut beta = Vec::with_capacity(rows.len());
    let mut phi = Vec::with_capacity(rows.len());
    for (k, r) in rows.iter().enumerate() {
        let (i, j) = (k % ny, k / ny);
        if i == 0 {
            if let Some(&zl) = z_axis.last() {
                if r.z <= zl {
                    return Err(Error::MapFormat {
                        line: r.line,
                        message: format!("z axis not strictly increasing at z = {} nm", r.z),
                    });
                }
            }
            z_axis.push(r.z);
        }
        if r.y != y_axis[i] || r.z != z_axis[j] {
            return Err(Error::MapFormat {
                line: r.line,
                message: format!(
                    "shape mismatch: expected node (y = {} nm, z = {} nm), got ({}, {})",
                    y_axis[i], z_axis[j], r.y, r.z
                ),
            });
        }
        let valid = !(r.beta.is_nan() || r.phi_deg.is_nan());
        if valid && !(0.0..=1.0).contains(&r.beta) {
            return Err(Error::MapFormat {
                line: r.line,
                message: format!(
                    "beta_eff = {} outside [0, 1] at cell (y = {} nm, z = {} nm)",
                    r.beta, r.y, r.z
                ),
            });
        }
        if valid && !(r.phi_deg > -180.0 && r.phi_deg <= 180.0) {
            return Err(Error::MapFormat {
                line: r.line,
                message: format!(
                    "phi_t_deg = {} outside (-180, 180] at cell (y = {} nm, z = {} nm)",
                    r.phi_deg, r.y, r.z
                ),
            });
        }
        beta.push(if valid { r.beta } else { f64::NAN });
        // Degrees to radians can round 180 to just above pi.
        phi.push(if valid {
            rad(r.phi_deg).min(PI)
        } else {
            f64::NAN
        });
    }
    if z_axis.len() < 2 || ny < 2 {
        return Err(Error::MapFormat {
            line: rows[rows.len() - 1].line,
            message: "need at least 2 nodes per axis".into(),
        });
    }
    let mut m = CouplingMap::new(y_axis, z_axis, beta, phi)?;
    m.meta = meta;
    Ok(m)
}

/// Writes a map in the CSV format read by [`parse_map`].
pub fn write_map(map: &CouplingMap, mut out: impl Write) -> Result<()> {
    for (k, v) in &map.meta {
        writeln!(out, "# {k}: {v}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(MAP_HEADER)?;
    for j in 0..map.z.len() {
        for i in 0..map.y.len() {
            let (b, p) = match map.node(i, j) {
                Some((b, p)) => (b.to_string(), deg(p).to_string()),
                None => (String::new(), String::new()),
            };
            w.write_record([map.y[i].to_string(), map.z[j].to_string(), b, p])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One connected piece of an iso-phase line, `(y, z)` in nm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    pub points: Vec<(f64, f64)>,
    pub closed: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Contour {
    pub phi_target: f64,
    pub branches: Vec<Polyline>,
}

impl Contour {
    pub fn is_empty(&self) -> bool {
        self.branches.iter().all(|b| b.points.is_empty())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Edge {
    /// Between nodes `(i, j)` and `(i + 1, j)`.
    H(usize, usize),
    /// Between nodes `(i, j)` and `(i, j + 1)`.
    V(usize, usize),
}

/// Level set `phi = phi_target` (rad) by marching squares on the wrapped
/// difference `wrap(phi - phi_target)`. Cells outside the valid region or
/// straddling the branch cut of that difference are skipped. Points whose
/// interpolated phase misses the target by more than `tolerance` (rad) are
/// dropped.
pub fn phase_contour(map: &CouplingMap, phi_target: f64, tolerance: f64) -> Result<Contour> {
    if !(tolerance.is_finite() && tolerance > 0.0) {
        return Err(Error::param("tolerance", "must be finite and > 0"));
    }
    let (ny, nz) = (map.y.len(), map.z.len());
    let f = |i: usize, j: usize| map.node(i, j).map(|(_, p)| wrap_angle(p - phi_target));
    let point_on = |e: Edge| -> (f64, f64) {
        let ((i0, j0), (i1, j1)) = match e {
            Edge::H(i, j) => ((i, j), (i + 1, j)),
            Edge::V(i, j) => ((i, j), (i, j + 1)),
        };
        let (a, b) = (f(i0, j0).unwrap(), f(i1, j1).unwrap());
        let t = a / (a - b);
        (
            map.y[i0] + t * (map.y[i1] - map.y[i0]),
            map.z[j0] + t * (map.z[j1] - map.z[j0]),
        )
    };

    let mut segments: Vec<(Edge, Edge)> = Vec::new();
    for j in 0..nz - 1 {
        for i in 0..ny - 1 {
            let (Some(a), Some(b), Some(c), Some(d)) =
                (f(i, j), f(i + 1, j), f(i + 1, j + 1), f(i, j + 1))
            else {
                continue;
            };
            let v = [a, b, c, d];
            if (0..4).any(|k| (v[k] - v[(k + 1) % 4]).abs() > PI) {
                continue;
            }
            // Edges in corner order: bottom, right, top, left.
            let edges = [
                Edge::H(i, j),
                Edge::V(i + 1, j),
                Edge::H(i, j + 1),
                Edge::V(i, j),
            ];
            let above = v.map(|x| x >= 0.0);
            let crossing: Vec<usize> = (0..4).filter(|&k| above[k] != above[(k + 1) % 4]).collect();
            match crossing.len() {
                2 => segments.push((edges[crossing[0]], edges[crossing[1]])),
                4 => {
                    // Saddle: the cell average decides which corners connect.
                    let centre_above = (a + b + c + d) / 4.0 >= 0.0;
                    if centre_above == above[0] {
                        segments.push((edges[0], edges[1]));
                        segments.push((edges[2], edges[3]));
                    } else {
                        segments.push((edges[3], edges[0]));
                        segments.push((edges[1], edges[2]));
                    }
                }
                _ => {}
            }
        }
    }

    let mut branches = Vec::new();
    for chain in join_segments(&segments) {
        let mut points: Vec<(f64, f64)> = chain.edges.iter().map(|&e| point_on(e)).collect();
        points.retain(|&(y, z)| {
            map.interpolate(y, z)
                .is_some_and(|(_, p)| wrap_angle(p - phi_target).abs() <= tolerance)
        });
        if !points.is_empty() {
            branches.push(Polyline {
                points,
                closed: chain.closed,
            });
        }
    }
    Ok(Contour {
        phi_target,
        branches,
    })
}

struct Chain {
    edges: Vec<Edge>,
    closed: bool,
}

fn join_segments(segments: &[(Edge, Edge)]) -> Vec<Chain> {
    let mut by_edge: HashMap<Edge, Vec<usize>> = HashMap::new();
    for (k, &(a, b)) in segments.iter().enumerate() {
        by_edge.entry(a).or_default().push(k);
        by_edge.entry(b).or_default().push(k);
    }
    let mut used = vec![false; segments.len()];
    let next = |edge: Edge, used: &[bool]| -> Option<usize> {
        by_edge[&edge].iter().copied().find(|&s| !used[s])
    };
    let other = |s: usize, e: Edge| {
        let (a, b) = segments[s];
        if a == e {
            b
        } else {
            a
        }
    };
    let mut chains = Vec::new();
    // Open chains start at an edge touched by one segment only; sorted for
    // a deterministic order.
    let mut starts: Vec<Edge> = by_edge
        .iter()
        .filter(|(_, v)| v.len() == 1)
        .map(|(e, _)| *e)
        .collect();
    starts.sort();
    let mut remaining: Vec<Edge> = segments.iter().map(|s| s.0).collect();
    remaining.sort();
    for start in starts.into_iter().chain(remaining) {
        let Some(mut s) = next(start, &used) else {
            continue;
        };
        let mut edges = vec![start];
        let mut cur = start;
        loop {
            used[s] = true;
            cur = other(s, cur);
            edges.push(cur);
            match next(cur, &used) {
                Some(n) => s = n,
                None => break,
            }
        }
        let closed = edges.len() > 2 && edges.first() == edges.last();
        if closed {
            edges.pop();
        }
        chains.push(Chain { edges, closed });
    }
    chains
}

/// Extremes of the interpolated `beta_eff` along the contour, sampled at
/// eight points per segment.
pub fn beta_range_on_contour(map: &CouplingMap, contour: &Contour) -> Result<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for b in &contour.branches {
        let pts = &b.points;
        let mut seg: Vec<((f64, f64), (f64, f64))> = pts.windows(2).map(|w| (w[0], w[1])).collect();
        if b.closed && pts.len() > 2 {
            seg.push((pts[pts.len() - 1], pts[0]));
        }
        if pts.len() == 1 {
            seg.push((pts[0], pts[0]));
        }
        for (p, q) in seg {
            for k in 0..SAMPLES_PER_SEGMENT {
                let t = k as f64 / (SAMPLES_PER_SEGMENT - 1) as f64;
                if let Some((beta, _)) =
                    map.interpolate(p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1))
                {
                    lo = lo.min(beta);
                    hi = hi.max(beta);
                }
            }
        }
    }
    if lo > hi {
        return Err(Error::NoSolution("contour is empty".into()));
    }
    Ok((lo, hi))
}

/// Tilt of the dipole from the x axis given the measured coupling and the
/// aligned-dipole map value, `theta = arccos(sqrt(measured / map))`.
pub fn dipole_angle(beta_measured: f64, beta_map: f64) -> Result<f64> {
    if !(beta_measured.is_finite() && beta_measured > 0.0) {
        return Err(Error::param("beta_measured", "must be finite and > 0"));
    }
    if !(beta_map.is_finite() && beta_map > 0.0) {
        return Err(Error::param("beta_map", "must be finite and > 0"));
    }
    if beta_measured > beta_map {
        return Err(Error::NoSolution(format!(
            "measured beta_eff {beta_measured} exceeds the aligned-dipole value {beta_map}"
        )));
    }
    Ok((beta_measured / beta_map).sqrt().acos())
}

/// Writes contour branches as `branch_id,y_nm,z_nm,beta_eff`.
pub fn write_contour_csv(map: &CouplingMap, contour: &Contour, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CONTOUR_HEADER)?;
    for (id, b) in contour.branches.iter().enumerate() {
        for &(y, z) in &b.points {
            let beta = map.interpolate(y, z).map(|(b, _)| b).unwrap_or(f64::NAN);
            w.write_record([
                id.to_string(),
                y.to_string(),
                z.to_string(),
                beta.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn axis(lo: f64, hi: f64, step: f64) -> Vec<f64> {
        let n = ((hi - lo) / step).round() as usize;
        (0..=n).map(|k| lo + k as f64 * step).collect()
    }

    fn ramp_map() -> CouplingMap {
        // phi = 1 deg per 4 nm along y, centred on 60 deg at y = 0.
        CouplingMap::from_fn(
            axis(-200.0, 200.0, 16.0),
            axis(-100.0, 100.0, 16.0),
            |y, _| (0.2, rad(60.0 + y / 4.0)),
        )
        .unwrap()
    }

    /// Two horizontal iso-phase lines at z = ±100 sqrt(31/60) nm for 61 deg,
    /// beta falling from 0.21 at y = 0 to 0.11 at |y| = 240 nm.
    fn two_branch_map() -> CouplingMap {
        CouplingMap::from_fn(
            axis(-240.0, 240.0, 16.0),
            axis(-128.0, 128.0, 16.0),
            |y, z| {
                (
                    0.21 - 0.10 * (y / 240.0).powi(2),
                    rad(30.0 + 60.0 * (z / 100.0).powi(2)),
                )
            },
        )
        .unwrap()
    }

    fn to_csv(m: &CouplingMap) -> String {
        let mut buf = Vec::new();
        write_map(m, &mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn load_well_formed_file() {
        let text = "# gap_nm: 100\ny_nm,z_nm,beta_eff,phi_t_deg\n0,0,0.1,10\n10,0,0.2,20\n20,0,0.3,30\n0,5,0.1,10\n10,5,,\n20,5,0.3,180\n";
        let m = parse_map(text.as_bytes()).unwrap();
        assert_eq!(m.y_axis(), &[0.0, 10.0, 20.0]);
        assert_eq!(m.z_axis(), &[0.0, 5.0]);
        assert_eq!(m.meta["gap_nm"], "100");
        assert!(m.node(1, 1).is_none());
        assert_eq!(m.node(2, 1).unwrap().1, PI);
        let back = parse_map(to_csv(&m).as_bytes()).unwrap();
        assert_eq!(back.y_axis(), m.y_axis());
        assert_eq!(back.node(0, 0), m.node(0, 0));
    }

    #[test]
    fn format_errors_carry_location() {
        let bad_beta =
            "y_nm,z_nm,beta_eff,phi_t_deg\n0,0,0.1,10\n10,0,1.2,20\n0,5,0.1,10\n10,5,0.1,10\n";
        match parse_map(bad_beta.as_bytes()) {
            Err(Error::MapFormat { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("y = 10 nm, z = 0 nm"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        let non_monotone =
            "y_nm,z_nm,beta_eff,phi_t_deg\n0,0,0.1,10\n10,0,0.1,20\n0,-5,0.1,10\n10,-5,0.1,10\n";
        assert!(matches!(
            parse_map(non_monotone.as_bytes()),
            Err(Error::MapFormat { line: 4, .. })
        ));
        let shape = "y_nm,z_nm,beta_eff,phi_t_deg\n0,0,0.1,10\n10,0,0.1,20\n0,5,0.1,10\n";
        assert!(matches!(
            parse_map(shape.as_bytes()),
            Err(Error::MapFormat { .. })
        ));
        let phase =
            "y_nm,z_nm,beta_eff,phi_t_deg\n0,0,0.1,-180\n10,0,0.1,20\n0,5,0.1,10\n10,5,0.1,10\n";
        assert!(matches!(
            parse_map(phase.as_bytes()),
            Err(Error::MapFormat { line: 2, .. })
        ));
        let header = "y,z,b,p\n0,0,0.1,10\n";
        assert!(matches!(
            parse_map(header.as_bytes()),
            Err(Error::MapFormat { line: 1, .. })
        ));
    }

    #[test]
    fn interpolation_matches_analytic_fields() {
        let gauss = |y: f64, z: f64| 0.2 * (-(y * y + z * z) / (2.0 * 200.0f64.powi(2))).exp();
        let ramp = |y: f64, z: f64| rad(20.0 + 0.1 * y - 0.05 * z);
        let m = CouplingMap::from_fn(
            axis(-480.0, 480.0, 16.0),
            axis(-320.0, 320.0, 16.0),
            |y, z| (gauss(y, z), ramp(y, z)),
        )
        .unwrap();
        for k in 0..200 {
            let y = -470.0 + 4.7 * k as f64 + 0.37;
            let z = -310.0 + 3.1 * k as f64 + 0.11;
            let (b, p) = m.interpolate(y, z).unwrap();
            assert!((b - gauss(y, z)).abs() < 1e-3);
            assert!((p - ramp(y, z)).abs() < 1e-3);
        }
        assert!(m.interpolate(-500.0, 0.0).is_none());
    }

    #[test]
    fn interpolation_unwraps_phase() {
        let m = CouplingMap::new(
            vec![0.0, 1.0],
            vec![0.0, 1.0],
            vec![0.1; 4],
            vec![rad(170.0), rad(-170.0), rad(-170.0), rad(170.0)],
        )
        .unwrap();
        let (_, p) = m.interpolate(0.5, 0.5).unwrap();
        assert!((p.abs() - PI).abs() < 1e-12);
    }

    #[test]
    fn ramp_contour_is_a_straight_line() {
        let m = ramp_map();
        let c = phase_contour(&m, rad(61.0), 1e-6).unwrap();
        assert_eq!(c.branches.len(), 1);
        let pts = &c.branches[0].points;
        assert_eq!(pts.len(), m.z_axis().len());
        for &(y, _) in pts {
            assert!((y - 4.0).abs() < 1e-9);
        }
        assert!(phase_contour(&m, rad(150.0), 1e-6).unwrap().is_empty());
        assert!(phase_contour(&m, 0.0, 0.0).is_err());
    }

    #[test]
    fn two_disjoint_branches() {
        let m = two_branch_map();
        let target = rad(61.0);
        let c = phase_contour(&m, target, rad(0.5)).unwrap();
        assert_eq!(c.branches.len(), 2);
        let z0 = 100.0 * (31.0f64 / 60.0).sqrt();
        let mut signs: Vec<f64> = c
            .branches
            .iter()
            .map(|b| b.points.iter().map(|p| p.1).sum::<f64>().signum())
            .collect();
        signs.sort_by(f64::total_cmp);
        assert_eq!(signs, vec![-1.0, 1.0]);
        for b in &c.branches {
            for &(y, z) in &b.points {
                // Bilinear level set sits within a fraction of a cell of the analytic line.
                assert!((z.abs() - z0).abs() < 2.0);
                let (_, p) = m.interpolate(y, z).unwrap();
                assert!(wrap_angle(p - target).abs() < 1e-9);
            }
        }
        let (lo, hi) = beta_range_on_contour(&m, &c).unwrap();
        assert!(
            (lo - 0.11).abs() < 1e-3 && (hi - 0.21).abs() < 1e-3,
            "{lo} {hi}"
        );
    }

    #[test]
    fn closed_contour_and_saddle() {
        let m = CouplingMap::from_fn(
            axis(-100.0, 100.0, 10.0),
            axis(-100.0, 100.0, 10.0),
            |y, z| (0.1, rad(90.0 - 60.0 * ((y * y + z * z) / 1e4))),
        )
        .unwrap();
        let c = phase_contour(&m, rad(60.0), 1e-6).unwrap();
        assert_eq!(c.branches.len(), 1);
        assert!(c.branches[0].closed);

        let s = CouplingMap::from_fn(
            axis(-100.0, 100.0, 10.0),
            axis(-100.0, 100.0, 10.0),
            |y, z| (0.1, rad(30.0 * (y * z) / 1e4)),
        )
        .unwrap();
        let c = phase_contour(&s, rad(0.5), 1e-6).unwrap();
        assert_eq!(c.branches.len(), 2);
    }

    #[test]
    fn beta_range_examples() {
        let m = ramp_map();
        let c = phase_contour(&m, rad(61.0), 1e-6).unwrap();
        let (lo, hi) = beta_range_on_contour(&m, &c).unwrap();
        assert!((lo - 0.2).abs() < 1e-15 && (hi - 0.2).abs() < 1e-15);
        assert!(matches!(
            beta_range_on_contour(&m, &Contour::default()),
            Err(Error::NoSolution(_))
        ));

        // beta = 0.1 + 0.2 (z / 100)^2 on y = 4: extremes 0.1 at z = 0 and
        // 0.1 + 0.2 (100 / 100)^2 at the map edge z = ±96.
        let m = CouplingMap::from_fn(axis(-200.0, 200.0, 16.0), axis(-96.0, 96.0, 4.0), |y, z| {
            (0.1 + 0.2 * (z / 100.0).powi(2), rad(60.0 + y / 4.0))
        })
        .unwrap();
        let c = phase_contour(&m, rad(61.0), 1e-6).unwrap();
        let (lo, hi) = beta_range_on_contour(&m, &c).unwrap();
        assert!((lo - 0.1).abs() < 1e-3);
        assert!((hi - (0.1 + 0.2 * 0.96f64.powi(2))).abs() < 1e-3);
    }

    #[test]
    fn dipole_angle_examples() {
        assert_eq!(dipole_angle(0.2, 0.2).unwrap(), 0.0);
        assert!((deg(dipole_angle(0.09, 0.21).unwrap()) - 49.1).abs() < 0.1);
        assert!((deg(dipole_angle(0.09, 0.11).unwrap()) - 25.2).abs() < 0.1);
        assert!(matches!(dipole_angle(0.3, 0.2), Err(Error::NoSolution(_))));
        assert!(dipole_angle(0.0, 0.2).is_err());
    }

    #[test]
    fn contour_csv_format() {
        let m = ramp_map();
        let c = phase_contour(&m, rad(61.0), 1e-6).unwrap();
        let mut buf = Vec::new();
        write_contour_csv(&m, &c, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "branch_id,y_nm,z_nm,beta_eff");
        assert_eq!(lines.count(), m.z_axis().len());
    }

    proptest! {
        #[test]
        fn dipole_angle_is_monotone(b in 0.01f64..0.5, db in 1e-6f64..0.01) {
            let map = 0.6;
            prop_assert!(dipole_angle(b, map).unwrap() > dipole_angle(b + db, map).unwrap());
        }

        #[test]
        fn contour_covariant_under_affine_axes(
            a in 0.2f64..5.0, dy in -500.0f64..500.0, dz in -500.0f64..500.0
        ) {
            let m = two_branch_map();
            let t = m.transformed(a, dy, dz).unwrap();
            let target = rad(61.0);
            let c0 = phase_contour(&m, target, rad(0.5)).unwrap();
            let c1 = phase_contour(&t, target, rad(0.5)).unwrap();
            prop_assert_eq!(c0.branches.len(), c1.branches.len());
            for (b0, b1) in c0.branches.iter().zip(&c1.branches) {
                prop_assert_eq!(b0.points.len(), b1.points.len());
                for (p, q) in b0.points.iter().zip(&b1.points) {
                    prop_assert!((a * p.0 + dy - q.0).abs() < 1e-9 * (1.0 + q.0.abs()));
                    prop_assert!((a * p.1 + dz - q.1).abs() < 1e-9 * (1.0 + q.1.abs()));
                }
            }
            let r0 = beta_range_on_contour(&m, &c0).unwrap();
            let r1 = beta_range_on_contour(&t, &c1).unwrap();
            prop_assert!((r0.0 - r1.0).abs() < 1e-9 && (r0.1 - r1.1).abs() < 1e-9);
        }
    }
}
