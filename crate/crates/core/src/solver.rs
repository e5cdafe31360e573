//! Explicit finite-difference flow `u_t = F(D²u)` on a masked Cartesian grid
//! over Ω, with the second boundary condition imposed as `h̃(Du) = 0` at the
//! boundary nodes.
//!
//! One step is a Jacobi update of the interior nodes followed by Gauss–Seidel
//! sweeps over the boundary nodes. Each boundary node solves a scalar convex
//! equation for its own value so that the gradient, extrapolated to the
//! nearest point of ∂Ω, lands on ∂Ω̃.

use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis;
use crate::config::FlowConfig;
use crate::geometry::{BoundingBox, Domain, DomainKind, Point};
use crate::linalg::{eigenvalues_2x2, inverse_spd, sqrt_psd, SymMatrix};
use crate::operator::{OperatorTau, SpectralOperator};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeKind {
    Exterior,
    Interior,
    Boundary,
}

/// One component of the boundary gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
enum AxisStencil {
    /// `s·(3u₀ − 4u₁ + u₂)/(2h)`, where `u₁, u₂` step against `s`.
    OneSided2 { sign: f64, near: usize, far: usize },
    /// `s·(u₀ − u₁)/h`.
    OneSided1 { sign: f64, near: usize },
}

impl AxisStencil {
    fn own_coefficient(self, h: f64) -> f64 {
        match self {
            AxisStencil::OneSided2 { sign, .. } => 1.5 * sign / h,
            AxisStencil::OneSided1 { sign, .. } => sign / h,
        }
    }

    /// The stencil applied with the node's own value set to zero.
    fn rest(self, u: &[f64], h: f64) -> f64 {
        match self {
            AxisStencil::OneSided2 { sign, near, far } => sign * (u[far] - 4.0 * u[near]) / (2.0 * h),
            AxisStencil::OneSided1 { sign, near } => -sign * u[near] / h,
        }
    }
}

/// A boundary node with its foot point on ∂Ω and its gradient stencils.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryNode {
    pub index: usize,
    pub position: Point,
    pub foot: Point,
    pub normal: Point,
    /// Defining value of Ω at the node; more negative is deeper.
    pub depth: f64,
    stencils: [AxisStencil; 2],
    /// Nearest node whose whole stencil is interior; supplies the Hessian
    /// used to carry the gradient from the node to its foot point.
    anchor: usize,
}

/// Cartesian grid over a box with nodes classified against Ω.
#[derive(Debug, Clone)]
pub struct GridSpec {
    bounds: BoundingBox,
    h: f64,
    nx: usize,
    ny: usize,
    kinds: Vec<NodeKind>,
    active: Vec<usize>,
    interior: Vec<usize>,
    boundary: Vec<BoundaryNode>,
}

impl GridSpec {
    /// Nodes at `bounds.min + (i, j)·h`; `bounds` defaults to the bounding box
    /// of Ω.
    pub fn new(omega: &Domain, h: f64, bounds: Option<BoundingBox>) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Precondition(format!("grid spacing {h} must be positive")));
        }
        let bounds = bounds.unwrap_or_else(|| omega.bounding_box());
        let count = |w: f64| (w / h + 1e-9).floor() as usize + 1;
        let nx = count(bounds.max[0] - bounds.min[0]);
        let ny = count(bounds.max[1] - bounds.min[1]);
        if nx < 5 || ny < 5 {
            return Err(Error::Precondition(format!("grid of {nx}×{ny} nodes is too coarse")));
        }
        let mut grid = Self {
            bounds,
            h,
            nx,
            ny,
            kinds: vec![NodeKind::Exterior; nx * ny],
            active: Vec::new(),
            interior: Vec::new(),
            boundary: Vec::new(),
        };
        let inside: Vec<bool> = (0..nx * ny).map(|k| omega.contains(grid.position(k))).collect();
        for k in 0..nx * ny {
            if !inside[k] {
                continue;
            }
            let full = grid.neighbours(k).is_some_and(|nb| nb.iter().all(|&m| inside[m]));
            grid.kinds[k] = if full { NodeKind::Interior } else { NodeKind::Boundary };
            grid.active.push(k);
            if full {
                grid.interior.push(k);
            }
        }
        let deep: Vec<usize> = grid
            .interior
            .iter()
            .copied()
            .filter(|&k| {
                grid.neighbours(k)
                    .is_some_and(|nb| nb.iter().all(|&m| grid.kinds[m] == NodeKind::Interior))
            })
            .collect();
        if deep.is_empty() {
            return Err(Error::Precondition(
                "grid has no node with a fully interior stencil".into(),
            ));
        }
        let mut boundary = Vec::new();
        for &k in &grid.active {
            if grid.kinds[k] == NodeKind::Boundary {
                boundary.push(grid.boundary_node(omega, k, &deep)?);
            }
        }
        boundary.sort_by(|a, b| a.depth.total_cmp(&b.depth).then(a.index.cmp(&b.index)));
        grid.boundary = boundary;
        Ok(grid)
    }

    /// Grid with `cells` intervals across the longer side of Ω's bounding box.
    pub fn with_cells(omega: &Domain, cells: usize) -> Result<Self> {
        let b = omega.bounding_box();
        let span = (b.max[0] - b.min[0]).max(b.max[1] - b.min[1]);
        Self::new(omega, span / cells as f64, Some(b))
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn bounds(&self) -> BoundingBox {
        self.bounds
    }

    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    pub fn kind(&self, k: usize) -> NodeKind {
        self.kinds[k]
    }

    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    /// Boundary nodes, deepest first.
    pub fn boundary(&self) -> &[BoundaryNode] {
        &self.boundary
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn position(&self, k: usize) -> Point {
        let (i, j) = (k % self.nx, k / self.nx);
        [
            self.bounds.min[0] + i as f64 * self.h,
            self.bounds.min[1] + j as f64 * self.h,
        ]
    }

    /// Node nearest to `x` (clamped to the grid).
    pub fn nearest(&self, x: Point) -> usize {
        let i = ((x[0] - self.bounds.min[0]) / self.h)
            .round()
            .clamp(0.0, (self.nx - 1) as f64);
        let j = ((x[1] - self.bounds.min[1]) / self.h)
            .round()
            .clamp(0.0, (self.ny - 1) as f64);
        self.index(i as usize, j as usize)
    }

    fn offset(&self, k: usize, di: isize, dj: isize) -> Option<usize> {
        let (i, j) = ((k % self.nx) as isize + di, (k / self.nx) as isize + dj);
        ((0..self.nx as isize).contains(&i) && (0..self.ny as isize).contains(&j))
            .then(|| self.index(i as usize, j as usize))
    }

    fn neighbours(&self, k: usize) -> Option<[usize; 8]> {
        let mut out = [0; 8];
        let mut n = 0;
        for dj in -1..=1 {
            for di in -1..=1 {
                if di == 0 && dj == 0 {
                    continue;
                }
                out[n] = self.offset(k, di, dj)?;
                n += 1;
            }
        }
        Some(out)
    }

    fn is_active(&self, k: Option<usize>) -> Option<usize> {
        k.filter(|&m| self.kinds[m] != NodeKind::Exterior)
    }

    fn axis_stencil(&self, k: usize, axis: usize, normal: f64) -> Option<AxisStencil> {
        let step = |s: isize| {
            if axis == 0 {
                self.offset(k, s, 0)
            } else {
                self.offset(k, 0, s)
            }
        };
        let upwind = if normal >= 0.0 { 1.0 } else { -1.0 };
        for sign in [upwind, -upwind] {
            let s = -sign as isize;
            if let (Some(near), Some(far)) = (self.is_active(step(s)), self.is_active(step(2 * s))) {
                return Some(AxisStencil::OneSided2 { sign, near, far });
            }
        }
        for sign in [upwind, -upwind] {
            if let Some(near) = self.is_active(step(-sign as isize)) {
                return Some(AxisStencil::OneSided1 { sign, near });
            }
        }
        None
    }

    fn boundary_node(&self, omega: &Domain, k: usize, deep: &[usize]) -> Result<BoundaryNode> {
        let position = self.position(k);
        let foot = omega.project_to_boundary(position);
        let normal = omega.outward_normal(foot);
        let sx = self.axis_stencil(k, 0, normal[0]);
        let sy = self.axis_stencil(k, 1, normal[1]);
        let stencils = match (sx, sy) {
            (Some(x), Some(y)) => [x, y],
            _ => {
                return Err(Error::Precondition(format!(
                    "boundary node at {position:?} has no inward stencil; refine the grid"
                )))
            }
        };
        let anchor = deep
            .iter()
            .copied()
            .min_by(|&a, &b| {
                let (pa, pb) = (self.position(a), self.position(b));
                let da = (pa[0] - position[0]).powi(2) + (pa[1] - position[1]).powi(2);
                let db = (pb[0] - position[0]).powi(2) + (pb[1] - position[1]).powi(2);
                da.total_cmp(&db)
            })
            .expect("deep set is non-empty");
        Ok(BoundaryNode {
            index: k,
            position,
            foot,
            normal,
            depth: omega.defining_value(position),
            stencils,
            anchor,
        })
    }
}

/// Central-difference Hessian `(u_xx, u_xy, u_yy)` at a node with a full
/// 9-point neighbourhood.
#[inline]
fn hessian_parts(u: &[f64], k: usize, nx: usize, h: f64) -> (f64, f64, f64) {
    let h2 = h * h;
    let c = u[k];
    let xx = (u[k + 1] - 2.0 * c + u[k - 1]) / h2;
    let yy = (u[k + nx] - 2.0 * c + u[k - nx]) / h2;
    let xy = (u[k + nx + 1] - u[k + nx - 1] - u[k - nx + 1] + u[k - nx - 1]) / (4.0 * h2);
    (xx, xy, yy)
}

/// Initial potential `u₀`.
#[derive(Clone)]
pub enum InitialData {
    /// Quadratic whose gradient maps the moment ellipse of Ω affinely onto
    /// that of Ω̃.
    Auto,
    /// `½xᵀMx + bᵀx`.
    Quadratic {
        m: [[f64; 2]; 2],
        b: Point,
    },
    /// Radial potential for a pair of disks whose gradient maps Ω onto Ω̃
    /// exactly but is not a steady state unless `alpha = 0`.
    Radial {
        alpha: f64,
    },
    /// The `Auto` quadratic plus `amplitude·(q − 1)²`, where `q` is the
    /// quadratic form of Ω's moment ellipse. The added term has zero
    /// gradient on the boundary of that ellipse.
    Bump {
        amplitude: f64,
    },
    Custom(Arc<dyn Fn(Point) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for InitialData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InitialData::Auto => write!(f, "Auto"),
            InitialData::Quadratic { m, b } => write!(f, "Quadratic({m:?}, {b:?})"),
            InitialData::Radial { alpha } => write!(f, "Radial({alpha})"),
            InitialData::Bump { amplitude } => write!(f, "Bump({amplitude})"),
            InitialData::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// The affine map between the moment ellipses of Ω and Ω̃: the unique
/// symmetric positive definite `M` with `M·S·M = S̃`, and `b = c̃ − M·c`.
pub fn auto_quadratic(omega: &Domain, omega_tilde: &Domain) -> ([[f64; 2]; 2], Point) {
    let (c, m) = omega.moments();
    let (ct, mt) = omega_tilde.moments();
    let s = SymMatrix::from_2x2(m[0], m[1], m[2]);
    let st = SymMatrix::from_2x2(mt[0], mt[1], mt[2]);
    let root = sqrt_psd(&s);
    let inv_root = inverse_spd(&root);
    let middle = sqrt_psd(&st.congruent(&rows(&root)));
    let map = middle.congruent(&rows(&inv_root));
    let mm = [[map.get(0, 0), map.get(0, 1)], [map.get(1, 0), map.get(1, 1)]];
    let b = [
        ct[0] - mm[0][0] * c[0] - mm[0][1] * c[1],
        ct[1] - mm[1][0] * c[0] - mm[1][1] * c[1],
    ];
    (mm, b)
}

fn rows(m: &SymMatrix) -> Vec<Vec<f64>> {
    (0..m.dim())
        .map(|i| (0..m.dim()).map(|j| m.get(i, j)).collect())
        .collect()
}

impl InitialData {
    fn sampler(&self, omega: &Domain, omega_tilde: &Domain) -> Result<Arc<dyn Fn(Point) -> f64 + Send + Sync>> {
        match self {
            InitialData::Auto => {
                let (m, b) = auto_quadratic(omega, omega_tilde);
                quadratic(m, b)
            }
            InitialData::Quadratic { m, b } => quadratic(*m, *b),
            InitialData::Radial { alpha } => match (omega.kind(), omega_tilde.kind()) {
                (DomainKind::Disk { center, radius }, DomainKind::Disk { center: ct, radius: rt }) => {
                    if !(0.0..1.0).contains(alpha) {
                        return Err(Error::InitialData(format!("radial alpha {alpha} must lie in [0, 1)")));
                    }
                    let (c, r, ct, rt, alpha) = (*center, *radius, *ct, *rt, *alpha);
                    Ok(Arc::new(move |x: Point| {
                        let s2 = ((x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2)) / (r * r);
                        r * rt * ((1.0 - alpha) * s2 / 2.0 + alpha * s2 * s2 / 4.0) + ct[0] * x[0] + ct[1] * x[1]
                    }))
                }
                _ => Err(Error::InitialData("radial initial data needs two disks".into())),
            },
            InitialData::Bump { amplitude } => {
                let (m, b) = auto_quadratic(omega, omega_tilde);
                let base = quadratic(m, b)?;
                let (c, mom) = omega.moments();
                let inv = inverse_spd(&SymMatrix::from_2x2(4.0 * mom[0], 4.0 * mom[1], 4.0 * mom[2]));
                let (ixx, ixy, iyy) = (inv.get(0, 0), inv.get(0, 1), inv.get(1, 1));
                let a = *amplitude;
                Ok(Arc::new(move |x: Point| {
                    let (dx, dy) = (x[0] - c[0], x[1] - c[1]);
                    let q = ixx * dx * dx + 2.0 * ixy * dx * dy + iyy * dy * dy;
                    base(x) + a * (q - 1.0).powi(2)
                }))
            }
            InitialData::Custom(f) => Ok(f.clone()),
        }
    }
}

fn quadratic(m: [[f64; 2]; 2], b: Point) -> Result<Arc<dyn Fn(Point) -> f64 + Send + Sync>> {
    if m[0][1] != m[1][0] {
        return Err(Error::InitialData(format!("M = {m:?} is not symmetric")));
    }
    let (lo, _) = eigenvalues_2x2(m[0][0], m[0][1], m[1][1]);
    if !(lo > 0.0) {
        return Err(Error::InitialData(format!("M = {m:?} is not positive definite")));
    }
    Ok(Arc::new(move |x: Point| {
        0.5 * (m[0][0] * x[0] * x[0] + 2.0 * m[0][1] * x[0] * x[1] + m[1][1] * x[1] * x[1]) + b[0] * x[0] + b[1] * x[1]
    }))
}

/// Numerical parameters of the flow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowParams {
    pub cfl: f64,
    pub tol_osc: f64,
    pub tol_bc: f64,
    pub max_steps: usize,
    pub max_newton: usize,
    pub max_sweeps: usize,
    pub image_samples: usize,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self {
            cfl: 0.5,
            tol_osc: 1e-6,
            tol_bc: 1e-10,
            max_steps: 1_000_000,
            max_newton: 50,
            max_sweeps: 500,
            image_samples: 1024,
        }
    }
}

/// Summary of a run.
#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowReport {
    pub C_inf: f64,
    pub osc_ut: f64,
    pub steps: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub wall_time: Option<f64>,
    pub residual_sup: f64,
    pub image_hausdorff: f64,
    pub converged: bool,
    pub jacobian_min: f64,
    pub initial_image_mismatch: f64,
    pub final_time: f64,
    pub dt_last: f64,
    pub boundary_residual: f64,
    pub spacing: f64,
}

/// What a single step did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub dt: f64,
    pub osc: f64,
    pub boundary_residual: f64,
}

/// Grid function `u` with the operator and domains it evolves under.
#[derive(Clone)]
pub struct FlowState<O = OperatorTau> {
    grid: Arc<GridSpec>,
    omega: Domain,
    omega_tilde: Domain,
    op: O,
    u: Vec<f64>,
    ut: Vec<f64>,
    f_interior: Vec<f64>,
    t: f64,
    dt_last: f64,
    steps: usize,
    initial_mismatch: f64,
    boundary_residual: f64,
}

/// Builds the initial state: samples `u₀`, measures how far `Du₀(∂Ω)` is
/// from `∂Ω̃`, imposes the boundary condition once and checks discrete
/// convexity of the result.
pub fn init_state<O: SpectralOperator>(
    grid: Arc<GridSpec>,
    omega: Domain,
    omega_tilde: Domain,
    op: O,
    u0: &InitialData,
    params: &FlowParams,
) -> Result<FlowState<O>> {
    let f = u0.sampler(&omega, &omega_tilde)?;
    let mut u = vec![f64::NAN; grid.len()];
    for &k in grid.active() {
        u[k] = f(grid.position(k));
    }
    let mut state = FlowState {
        ut: vec![0.0; grid.len()],
        f_interior: vec![0.0; grid.interior().len()],
        grid,
        omega,
        omega_tilde,
        op,
        u,
        t: 0.0,
        dt_last: 0.0,
        steps: 0,
        initial_mismatch: 0.0,
        boundary_residual: 0.0,
    };
    let mismatch = analysis::image_check(&state, params.image_samples)?;
    if !(mismatch <= state.omega_tilde.diameter()) {
        return Err(Error::InitialData(format!(
            "initial gradient image is {mismatch} away from the target boundary"
        )));
    }
    state.initial_mismatch = mismatch;
    state.boundary_residual = state.enforce_boundary(params)?;
    let eps = state.cone_epsilon();
    for &k in state.grid.interior() {
        let (lo, _) = state.hessian_eigenvalues(k);
        if !(lo > eps) {
            return Err(Error::ConvexityLoss {
                node: k,
                eigenvalue: lo,
                step: 0,
            });
        }
    }
    Ok(state)
}

impl<O: SpectralOperator> FlowState<O> {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn omega(&self) -> &Domain {
        &self.omega
    }

    pub fn omega_tilde(&self) -> &Domain {
        &self.omega_tilde
    }

    pub fn operator(&self) -> &O {
        &self.op
    }

    /// Values on the full grid; exterior entries are NaN.
    pub fn values(&self) -> &[f64] {
        &self.u
    }

    /// Values at active nodes, in grid order.
    pub fn active_values(&self) -> Vec<f64> {
        self.grid.active().iter().map(|&k| self.u[k]).collect()
    }

    /// Discrete `u_t` of the last step on the full grid.
    pub fn time_derivative(&self) -> &[f64] {
        &self.ut
    }

    /// `F(D²u)` at interior nodes as applied in the last step.
    pub fn last_interior_rates(&self) -> &[f64] {
        &self.f_interior
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt_last(&self) -> f64 {
        self.dt_last
    }

    pub fn initial_mismatch(&self) -> f64 {
        self.initial_mismatch
    }

    /// Adds `c` to every active value.
    pub fn add_constant(&mut self, c: f64) {
        for &k in self.grid.active() {
            self.u[k] += c;
        }
    }

    pub fn hessian_at(&self, node: usize) -> Result<SymMatrix> {
        if self.grid.kind(node) != NodeKind::Interior {
            return Err(Error::Precondition(format!("node {node} is not interior")));
        }
        let (xx, xy, yy) = hessian_parts(&self.u, node, self.grid.nx, self.grid.h);
        Ok(SymMatrix::from_2x2(xx, xy, yy))
    }

    /// Eigenvalues `(λ₁, λ₂)` of the discrete Hessian at an interior node.
    pub fn hessian_eigenvalues(&self, node: usize) -> (f64, f64) {
        let (xx, xy, yy) = hessian_parts(&self.u, node, self.grid.nx, self.grid.h);
        eigenvalues_2x2(xx, xy, yy)
    }

    /// Central-difference gradient at an interior node, one-sided stencil
    /// gradient at a boundary node.
    pub fn gradient_at(&self, node: usize) -> Point {
        let h = self.grid.h;
        match self.grid.kind(node) {
            NodeKind::Interior => {
                let nx = self.grid.nx;
                [
                    (self.u[node + 1] - self.u[node - 1]) / (2.0 * h),
                    (self.u[node + nx] - self.u[node - nx]) / (2.0 * h),
                ]
            }
            NodeKind::Boundary => {
                let b = self
                    .grid
                    .boundary
                    .iter()
                    .find(|b| b.index == node)
                    .expect("boundary node is listed");
                let (y, c) = self.affine_gradient(b, (0.0, 0.0, 0.0), b.position);
                [y[0] + c[0] * self.u[node], y[1] + c[1] * self.u[node]]
            }
            NodeKind::Exterior => [f64::NAN, f64::NAN],
        }
    }

    /// Gradient extrapolated from boundary node `b` to the point `at`, using
    /// the current Hessian at the node's anchor.
    pub fn boundary_gradient(&self, b: &BoundaryNode, at: Point) -> Point {
        let hess = hessian_parts(&self.u, b.anchor, self.grid.nx, self.grid.h);
        let (y, c) = self.affine_gradient(b, hess, at);
        let v = self.u[b.index];
        [y[0] + c[0] * v, y[1] + c[1] * v]
    }

    /// `Du(at) = y + u_b·c`, split into the part independent of the node's
    /// value and the coefficient of that value.
    fn affine_gradient(&self, b: &BoundaryNode, hess: (f64, f64, f64), at: Point) -> (Point, Point) {
        let h = self.grid.h;
        let (xx, xy, yy) = hess;
        let d = [at[0] - b.position[0], at[1] - b.position[1]];
        let y = [
            b.stencils[0].rest(&self.u, h) + xx * d[0] + xy * d[1],
            b.stencils[1].rest(&self.u, h) + xy * d[0] + yy * d[1],
        ];
        let c = [b.stencils[0].own_coefficient(h), b.stencils[1].own_coefficient(h)];
        (y, c)
    }

    /// Convexity floor `10⁻¹⁰·(1 + max|u|/h²)`.
    pub fn cone_epsilon(&self) -> f64 {
        let max_u = self.grid.active().iter().map(|&k| self.u[k].abs()).fold(0.0, f64::max);
        1e-10 * (1.0 + max_u / (self.grid.h * self.grid.h))
    }

    /// `cfl·h² / (4·max trace dF/dA)` over interior nodes.
    pub fn stability_dt(&self, cfl: f64) -> f64 {
        let max_trace = self
            .grid
            .interior()
            .par_iter()
            .map(|&k| {
                let (lo, hi) = self.hessian_eigenvalues(k);
                self.op.derivative_sum(&[lo, hi])
            })
            .reduce(|| 0.0, f64::max);
        cfl * self.grid.h * self.grid.h / (4.0 * max_trace)
    }

    /// One explicit Euler step of the interior followed by boundary
    /// enforcement.
    pub fn step(&mut self, params: &FlowParams) -> Result<StepInfo> {
        let grid = self.grid.clone();
        let (nx, h) = (grid.nx, grid.h);
        let eps = self.cone_epsilon();
        let u = &self.u;
        let op = &self.op;
        let local: Vec<(f64, f64, f64)> = grid
            .interior()
            .par_iter()
            .map(|&k| {
                let (xx, xy, yy) = hessian_parts(u, k, nx, h);
                let (lo, hi) = eigenvalues_2x2(xx, xy, yy);
                (op.value(&[lo, hi]), op.derivative_sum(&[lo, hi]), lo)
            })
            .collect();

        let mut max_trace: f64 = 0.0;
        for (pos, &(_, trace, lo)) in local.iter().enumerate() {
            if !(lo > eps) {
                return Err(Error::ConvexityLoss {
                    node: grid.interior()[pos],
                    eigenvalue: lo,
                    step: self.steps + 1,
                });
            }
            max_trace = max_trace.max(trace);
        }
        let dt = params.cfl * h * h / (4.0 * max_trace);

        let previous = self.u.clone();
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (pos, &k) in grid.interior().iter().enumerate() {
            let f = local[pos].0;
            self.u[k] += dt * f;
            self.ut[k] = f;
            self.f_interior[pos] = f;
            lo = lo.min(f);
            hi = hi.max(f);
        }
        let residual = self.enforce_boundary(params)?;
        for b in grid.boundary() {
            self.ut[b.index] = (self.u[b.index] - previous[b.index]) / dt;
        }
        self.t += dt;
        self.dt_last = dt;
        self.steps += 1;
        self.boundary_residual = residual;
        Ok(StepInfo {
            dt,
            osc: hi - lo,
            boundary_residual: residual,
        })
    }

    /// Gauss–Seidel sweeps over the boundary nodes, deepest first, until
    /// `max |h̃(Du(foot))| ≤ tol_bc`. The Hessians carrying the gradient to
    /// the foot points are frozen for the duration.
    pub fn enforce_boundary(&mut self, params: &FlowParams) -> Result<f64> {
        let grid = self.grid.clone();
        let (nx, h) = (grid.nx, grid.h);
        let hess: Vec<(f64, f64, f64)> = grid
            .boundary()
            .iter()
            .map(|b| hessian_parts(&self.u, b.anchor, nx, h))
            .collect();
        let mut worst = (0, f64::INFINITY);
        for _ in 0..params.max_sweeps {
            for (b, &hb) in grid.boundary().iter().zip(&hess) {
                self.solve_node(b, hb, params)?;
            }
            worst = (0, 0.0);
            for (b, &hb) in grid.boundary().iter().zip(&hess) {
                let (y, c) = self.affine_gradient(b, hb, b.foot);
                let v = self.u[b.index];
                let r = self
                    .omega_tilde
                    .defining_value([y[0] + c[0] * v, y[1] + c[1] * v])
                    .abs();
                if r > worst.1 {
                    worst = (b.index, r);
                }
            }
            if worst.1 <= params.tol_bc {
                return Ok(worst.1);
            }
        }
        Err(Error::BoundaryNonConvergence {
            node: worst.0,
            residual: worst.1,
            iterations: params.max_sweeps,
        })
    }

    /// Solves `φ(v) = h̃(y + v·c) = 0` for the node value `v`. `φ` is convex,
    /// so Newton started to the right of the larger root decreases
    /// monotonically onto it; that root is the one that keeps `u` convex.
    fn solve_node(&mut self, b: &BoundaryNode, hess: (f64, f64, f64), params: &FlowParams) -> Result<()> {
        let (y, c) = self.affine_gradient(b, hess, b.foot);
        let target = &self.omega_tilde;
        let phi = |v: f64| {
            let p = [y[0] + v * c[0], y[1] + v * c[1]];
            let (value, g) = target.value_and_gradient(p);
            (value, g[0] * c[0] + g[1] * c[1])
        };
        let scale = c[0].hypot(c[1]);
        let mut v = self.u[b.index];
        let (mut f, mut df) = phi(v);
        let mut step = (f.abs() + self.grid.h) / scale;
        let mut guard = 0;
        while f < 0.0 || df <= 0.0 {
            v += step;
            step *= 2.0;
            (f, df) = phi(v);
            guard += 1;
            if guard > 200 || !v.is_finite() {
                return Err(Error::BoundaryNonConvergence {
                    node: b.index,
                    residual: f.abs(),
                    iterations: guard,
                });
            }
        }
        for _ in 0..params.max_newton {
            if f <= 1e-3 * params.tol_bc {
                break;
            }
            let next = v - f / df;
            if !(next < v) {
                break;
            }
            let (nf, ndf) = phi(next);
            v = next;
            (f, df) = (nf, ndf);
            if df <= 0.0 {
                break;
            }
        }
        self.u[b.index] = v;
        Ok(())
    }

    /// Steps until `osc(u_t) ≤ tol_osc` or `max_steps`; `observer` runs after
    /// every step.
    pub fn run<F>(&mut self, params: &FlowParams, mut observer: F) -> Result<FlowReport>
    where
        F: FnMut(&Self) -> Result<()>,
    {
        let start = Instant::now();
        let mut converged = false;
        let mut osc = f64::INFINITY;
        while self.steps < params.max_steps {
            osc = self.step(params)?.osc;
            observer(self)?;
            if osc <= params.tol_osc {
                converged = true;
                break;
            }
        }
        let c_inf = median(&self.f_interior);
        Ok(FlowReport {
            C_inf: c_inf,
            osc_ut: osc,
            steps: self.steps,
            wall_time: Some(start.elapsed().as_secs_f64()),
            residual_sup: analysis::residual_sup(self, c_inf),
            image_hausdorff: analysis::image_check(self, params.image_samples)?,
            converged,
            jacobian_min: analysis::jacobian_min(self),
            initial_image_mismatch: self.initial_mismatch,
            final_time: self.t,
            dt_last: self.dt_last,
            boundary_residual: self.boundary_residual,
            spacing: self.grid.h,
        })
    }
}

/// Median, averaging the two middle entries for even lengths.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Everything a run needs, resolved from a [`FlowConfig`].
#[derive(Debug, Clone)]
pub struct FlowSetup {
    pub grid: Arc<GridSpec>,
    pub omega: Domain,
    pub omega_tilde: Domain,
    pub op: OperatorTau,
    pub u0: InitialData,
    pub params: FlowParams,
}

impl FlowSetup {
    pub fn from_config(config: &FlowConfig) -> Result<Self> {
        let op = OperatorTau::new(config.tau()?)?;
        let omega = Domain::from_spec(&config.domain)?;
        let omega_tilde = Domain::from_spec(&config.domain_tilde)?;
        let grid = Arc::new(config.grid.build(&omega)?);
        Ok(Self {
            grid,
            omega,
            omega_tilde,
            op,
            u0: config.u0.to_initial_data()?,
            params: config.params(),
        })
    }

    pub fn init(&self) -> Result<FlowState> {
        init_state(
            self.grid.clone(),
            self.omega.clone(),
            self.omega_tilde.clone(),
            self.op,
            &self.u0,
            &self.params,
        )
    }
}

/// Builds the state described by `config` and runs it to completion.
pub fn run_flow(config: &FlowConfig) -> Result<(FlowState, FlowReport)> {
    run_flow_with(config, |_| Ok(()))
}

pub fn run_flow_with<F>(config: &FlowConfig, observer: F) -> Result<(FlowState, FlowReport)>
where
    F: FnMut(&FlowState) -> Result<()>,
{
    let setup = FlowSetup::from_config(config)?;
    let mut state = setup.init()?;
    let mut report = state.run(&setup.params, observer)?;
    if !config.record_wall_time {
        report.wall_time = None;
    }
    Ok((state, report))
}
