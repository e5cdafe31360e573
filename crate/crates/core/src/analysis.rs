//! Checks on a (converged) flow state: constancy of `F(D²u)`, the image of
//! `∂Ω` under `Du`, Jacobian positivity, comparison modulo constants, and
//! CSV export of the graph `{(x, Du(x))}` and of the raw fields.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::geometry::{distance, Domain, Point};
use crate::operator::SpectralOperator;
use crate::solver::{FlowState, NodeKind};
use crate::{Error, Result};

/// Largest boundary sample count used for Hausdorff distances.
pub const MAX_IMAGE_SAMPLES: usize = 4096;

/// Tolerance on `|h(x)|` marking an exported row as a boundary sample.
const ON_BOUNDARY: f64 = 1e-12;

/// `sup |F(D²u) − c|` over interior nodes.
pub fn residual_sup<O: SpectralOperator>(state: &FlowState<O>, c: f64) -> f64 {
    state
        .grid()
        .interior()
        .par_iter()
        .map(|&k| {
            let (lo, hi) = state.hessian_eigenvalues(k);
            (state.operator().value(&[lo, hi]) - c).abs()
        })
        .reduce(|| 0.0, f64::max)
}

/// `m` samples `x` of ∂Ω paired with `Du(x)`, the gradient extrapolated from
/// the boundary node whose foot point is nearest to `x`.
pub fn boundary_image<O: SpectralOperator>(state: &FlowState<O>, m: usize) -> Result<Vec<(Point, Point)>> {
    let m = m.min(MAX_IMAGE_SAMPLES);
    let nodes = state.grid().boundary();
    if nodes.is_empty() {
        return Err(Error::Precondition("grid has no boundary nodes".into()));
    }
    Ok(state
        .omega()
        .sample_boundary(m)?
        .par_iter()
        .map(|s| {
            let node = nodes
                .iter()
                .min_by(|a, b| distance(a.foot, s.point).total_cmp(&distance(b.foot, s.point)))
                .expect("non-empty");
            (s.point, state.boundary_gradient(node, s.point))
        })
        .collect())
}

/// Symmetric Hausdorff distance between `Du(∂Ω)` and `∂Ω̃`, both sampled
/// with `m` points.
pub fn image_check<O: SpectralOperator>(state: &FlowState<O>, m: usize) -> Result<f64> {
    image_check_against(state, state.omega_tilde(), m)
}

/// As [`image_check`] but against an arbitrary target domain.
pub fn image_check_against<O: SpectralOperator>(state: &FlowState<O>, target: &Domain, m: usize) -> Result<f64> {
    let image: Vec<Point> = boundary_image(state, m)?.into_iter().map(|(_, g)| g).collect();
    target_distance(&image, target, m)
}

fn target_distance(image: &[Point], target: &Domain, m: usize) -> Result<f64> {
    let samples: Vec<Point> = target
        .sample_boundary(m.min(MAX_IMAGE_SAMPLES))?
        .into_iter()
        .map(|b| b.point)
        .collect();
    Ok(hausdorff(image, &samples))
}

/// Brute-force symmetric Hausdorff distance between two point sets.
pub fn hausdorff(a: &[Point], b: &[Point]) -> f64 {
    let one_sided = |from: &[Point], to: &[Point]| {
        from.par_iter()
            .map(|p| to.iter().map(|q| distance(*p, *q)).fold(f64::INFINITY, f64::min))
            .reduce(|| 0.0, f64::max)
    };
    one_sided(a, b).max(one_sided(b, a))
}

/// `min det D²u` over interior nodes.
pub fn jacobian_min<O: SpectralOperator>(state: &FlowState<O>) -> f64 {
    state
        .grid()
        .interior()
        .par_iter()
        .map(|&k| {
            let (lo, hi) = state.hessian_eigenvalues(k);
            lo * hi
        })
        .reduce(|| f64::INFINITY, f64::min)
}

/// `sup |(u₁ − u₂) − mean(u₁ − u₂)|` over matching node lists.
pub fn compare_mod_constant(u1: &[f64], u2: &[f64]) -> Result<f64> {
    if u1.len() != u2.len() {
        return Err(Error::GridMismatch {
            left: u1.len(),
            right: u2.len(),
        });
    }
    if u1.is_empty() {
        return Ok(0.0);
    }
    let diff: Vec<f64> = u1.iter().zip(u2).map(|(a, b)| a - b).collect();
    let mean = diff.iter().sum::<f64>() / diff.len() as f64;
    Ok(diff.iter().map(|d| (d - mean).abs()).fold(0.0, f64::max))
}

/// A row of the exported graph.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphRow {
    pub x: Point,
    pub du: Point,
}

/// Writes `x,y,Du_x,Du_y` for every active node followed by `m` samples of
/// ∂Ω. Floats use the shortest representation that parses back exactly.
pub fn graph_export<O: SpectralOperator>(state: &FlowState<O>, path: &Path, m: usize) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "x,y,Du_x,Du_y")?;
    for &k in state.grid().active() {
        let x = state.grid().position(k);
        let g = state.gradient_at(k);
        writeln!(w, "{},{},{},{}", x[0], x[1], g[0], g[1])?;
    }
    for (x, g) in boundary_image(state, m)? {
        writeln!(w, "{},{},{},{}", x[0], x[1], g[0], g[1])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_graph(path: &Path) -> Result<Vec<GraphRow>> {
    let reader = BufReader::new(File::open(path)?);
    let mut rows = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if n == 0 {
            if line.trim() != "x,y,Du_x,Du_y" {
                return Err(Error::Precondition(format!("unexpected graph header {line:?}")));
            }
            continue;
        }
        let v: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Precondition(format!("graph line {}: {e}", n + 1)))?;
        if v.len() != 4 {
            return Err(Error::Precondition(format!(
                "graph line {} has {} fields",
                n + 1,
                v.len()
            )));
        }
        rows.push(GraphRow {
            x: [v[0], v[1]],
            du: [v[2], v[3]],
        });
    }
    Ok(rows)
}

/// Image check recomputed from exported rows: rows lying on ∂Ω supply the
/// image points.
pub fn image_check_graph(rows: &[GraphRow], omega: &Domain, omega_tilde: &Domain, m: usize) -> Result<f64> {
    let image: Vec<Point> = rows
        .iter()
        .filter(|r| omega.defining_value(r.x).abs() <= ON_BOUNDARY)
        .map(|r| r.du)
        .collect();
    if image.is_empty() {
        return Err(Error::Precondition("graph has no boundary rows".into()));
    }
    target_distance(&image, omega_tilde, m)
}

/// Field dump with header `x,y,u,ut,du_x,du_y,f_value`; `f_value` is left
/// empty at boundary nodes.
pub fn write_fields<O: SpectralOperator>(state: &FlowState<O>, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "x,y,u,ut,du_x,du_y,f_value")?;
    let u = state.values();
    let ut = state.time_derivative();
    for &k in state.grid().active() {
        let x = state.grid().position(k);
        let g = state.gradient_at(k);
        write!(w, "{},{},{},{},{},{},", x[0], x[1], u[k], ut[k], g[0], g[1])?;
        if state.grid().kind(k) == NodeKind::Interior {
            let (lo, hi) = state.hessian_eigenvalues(k);
            write!(w, "{}", state.operator().value(&[lo, hi]))?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}
