//! Uniformly convex planar domains described by a defining function that is
//! negative inside, zero on the boundary and positive outside.
//!
//! Disks and ellipses use their exact signed distance, which is convex and
//! globally defined, so it can be evaluated at gradient values that have left
//! the target domain. Level-set domains wrap a user callback on a bounding
//! box and are extended outside the box by the distance to it.

use std::f64::consts::TAU;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub type Point = [f64; 2];

/// Axis-aligned box `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min: Point,
    pub max: Point,
}

pub type LevelSetFn = Arc<dyn Fn(Point) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum DomainKind {
    Disk {
        center: Point,
        radius: f64,
    },
    /// Semi-axis `p` along the rotated x axis and `q` along the rotated y axis.
    Ellipse {
        center: Point,
        semi_axes: [f64; 2],
        rotation: f64,
    },
    LevelSet {
        func: LevelSetFn,
        bounds: BoundingBox,
    },
}

#[derive(Clone)]
pub struct Domain {
    kind: DomainKind,
    convexity_modulus: f64,
}

/// A point on the boundary with its outward unit normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryPoint {
    pub point: Point,
    pub normal: Point,
}

/// Serializable form used in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DomainSpec {
    Disk {
        center: Point,
        radius: f64,
    },
    Ellipse {
        center: Point,
        semi_axes: [f64; 2],
        #[serde(default)]
        rotation: f64,
    },
}

impl fmt::Debug for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            DomainKind::Disk { center, radius } => {
                write!(f, "Disk({center:?}, {radius})")
            }
            DomainKind::Ellipse {
                center,
                semi_axes,
                rotation,
            } => write!(f, "Ellipse({center:?}, {semi_axes:?}, {rotation})"),
            DomainKind::LevelSet { bounds, .. } => write!(f, "LevelSet({bounds:?})"),
        }
    }
}

#[inline]
fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
fn add(a: Point, b: Point) -> Point {
    [a[0] + b[0], a[1] + b[1]]
}

#[inline]
fn norm(a: Point) -> f64 {
    a[0].hypot(a[1])
}

#[inline]
fn unit(a: Point) -> Point {
    let n = norm(a);
    if n > 0.0 {
        [a[0] / n, a[1] / n]
    } else {
        [1.0, 0.0]
    }
}

pub fn distance(a: Point, b: Point) -> f64 {
    norm(sub(a, b))
}

/// Rotates `v` by `angle` (or by `−angle` when `inverse`).
#[inline]
fn rotate(v: Point, angle: f64, inverse: bool) -> Point {
    if angle == 0.0 {
        return v;
    }
    let (s, c) = angle.sin_cos();
    let s = if inverse { -s } else { s };
    [c * v[0] - s * v[1], s * v[0] + c * v[1]]
}

impl Domain {
    pub fn disk(center: Point, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Precondition(format!("disk radius {radius} must be positive")));
        }
        Ok(Self {
            kind: DomainKind::Disk { center, radius },
            convexity_modulus: 1.0 / radius,
        })
    }

    pub fn ellipse(center: Point, semi_axes: [f64; 2], rotation: f64) -> Result<Self> {
        let [p, q] = semi_axes;
        if !(p > 0.0 && q > 0.0 && p.is_finite() && q.is_finite()) {
            return Err(Error::Precondition(format!(
                "ellipse semi-axes {semi_axes:?} must be positive"
            )));
        }
        let (short, long) = (p.min(q), p.max(q));
        Ok(Self {
            kind: DomainKind::Ellipse {
                center,
                semi_axes,
                rotation,
            },
            convexity_modulus: short / (long * long),
        })
    }

    /// A domain given by a pure callback on `bounds`, with a caller-supplied
    /// lower bound on boundary curvature.
    pub fn level_set(func: LevelSetFn, bounds: BoundingBox, convexity_modulus: f64) -> Result<Self> {
        if !(convexity_modulus > 0.0) {
            return Err(Error::Precondition(
                "level-set domains need a positive convexity modulus".into(),
            ));
        }
        if !(bounds.min[0] < bounds.max[0] && bounds.min[1] < bounds.max[1]) {
            return Err(Error::Precondition(format!("degenerate bounding box {bounds:?}")));
        }
        Ok(Self {
            kind: DomainKind::LevelSet { func, bounds },
            convexity_modulus,
        })
    }

    pub fn from_spec(spec: &DomainSpec) -> Result<Self> {
        match *spec {
            DomainSpec::Disk { center, radius } => Self::disk(center, radius),
            DomainSpec::Ellipse {
                center,
                semi_axes,
                rotation,
            } => Self::ellipse(center, semi_axes, rotation),
        }
    }

    pub fn kind(&self) -> &DomainKind {
        &self.kind
    }

    pub fn convexity_modulus(&self) -> f64 {
        self.convexity_modulus
    }

    pub fn defining_value(&self, x: Point) -> f64 {
        match &self.kind {
            DomainKind::Disk { center, radius } => distance(x, *center) - radius,
            DomainKind::Ellipse {
                center,
                semi_axes,
                rotation,
            } => {
                let local = rotate(sub(x, *center), *rotation, true);
                ellipse_signed_distance(semi_axes[0], semi_axes[1], local).0
            }
            DomainKind::LevelSet { func, bounds } => {
                let clamped = clamp(x, bounds);
                func(clamped) + distance(x, clamped)
            }
        }
    }

    pub fn contains(&self, x: Point) -> bool {
        self.defining_value(x) < 0.0
    }

    pub fn gradient(&self, x: Point) -> Point {
        match &self.kind {
            DomainKind::Disk { center, .. } => unit(sub(x, *center)),
            DomainKind::Ellipse {
                center,
                semi_axes,
                rotation,
            } => {
                let local = rotate(sub(x, *center), *rotation, true);
                let (_, foot) = ellipse_signed_distance(semi_axes[0], semi_axes[1], local);
                let n = ellipse_normal(semi_axes[0], semi_axes[1], foot);
                rotate(n, *rotation, false)
            }
            DomainKind::LevelSet { .. } => {
                let step = 1e-6 * self.diameter();
                let dx = self.defining_value([x[0] + step, x[1]]) - self.defining_value([x[0] - step, x[1]]);
                let dy = self.defining_value([x[0], x[1] + step]) - self.defining_value([x[0], x[1] - step]);
                [dx / (2.0 * step), dy / (2.0 * step)]
            }
        }
    }

    /// `(h(x), ∇h(x))` sharing one closest-point computation where possible.
    pub fn value_and_gradient(&self, x: Point) -> (f64, Point) {
        match &self.kind {
            DomainKind::Ellipse {
                center,
                semi_axes,
                rotation,
            } => {
                let local = rotate(sub(x, *center), *rotation, true);
                let (d, foot) = ellipse_signed_distance(semi_axes[0], semi_axes[1], local);
                let n = ellipse_normal(semi_axes[0], semi_axes[1], foot);
                (d, rotate(n, *rotation, false))
            }
            _ => (self.defining_value(x), self.gradient(x)),
        }
    }

    /// Outward unit normal; meant for boundary points but defined everywhere.
    pub fn outward_normal(&self, x: Point) -> Point {
        unit(self.gradient(x))
    }

    /// Nearest boundary point for disks and ellipses; Newton projection along
    /// the gradient for level sets.
    pub fn project_to_boundary(&self, x: Point) -> Point {
        match &self.kind {
            DomainKind::Disk { center, radius } => {
                let d = unit(sub(x, *center));
                [center[0] + radius * d[0], center[1] + radius * d[1]]
            }
            DomainKind::Ellipse {
                center,
                semi_axes,
                rotation,
            } => {
                let local = rotate(sub(x, *center), *rotation, true);
                let (_, foot) = ellipse_signed_distance(semi_axes[0], semi_axes[1], local);
                add(*center, rotate(foot, *rotation, false))
            }
            DomainKind::LevelSet { .. } => {
                let mut y = x;
                for _ in 0..100 {
                    let v = self.defining_value(y);
                    if v.abs() <= 1e-13 {
                        break;
                    }
                    let g = self.gradient(y);
                    let g2 = g[0] * g[0] + g[1] * g[1];
                    if g2 == 0.0 {
                        break;
                    }
                    y = [y[0] - v * g[0] / g2, y[1] - v * g[1] / g2];
                }
                y
            }
        }
    }

    pub fn bounding_box(&self) -> BoundingBox {
        match &self.kind {
            DomainKind::Disk { center, radius } => BoundingBox {
                min: [center[0] - radius, center[1] - radius],
                max: [center[0] + radius, center[1] + radius],
            },
            DomainKind::Ellipse {
                center,
                semi_axes,
                rotation,
            } => {
                let (s, c) = rotation.sin_cos();
                let [p, q] = *semi_axes;
                let ex = (p * c).hypot(q * s);
                let ey = (p * s).hypot(q * c);
                BoundingBox {
                    min: [center[0] - ex, center[1] - ey],
                    max: [center[0] + ex, center[1] + ey],
                }
            }
            DomainKind::LevelSet { bounds, .. } => *bounds,
        }
    }

    pub fn diameter(&self) -> f64 {
        match &self.kind {
            DomainKind::Disk { radius, .. } => 2.0 * radius,
            DomainKind::Ellipse { semi_axes, .. } => 2.0 * semi_axes[0].max(semi_axes[1]),
            DomainKind::LevelSet { bounds, .. } => distance(bounds.min, bounds.max),
        }
    }

    /// Centroid and second-moment matrix `[[xx, xy], [xy, yy]]` of the region.
    pub fn moments(&self) -> (Point, [f64; 3]) {
        match &self.kind {
            DomainKind::Disk { center, radius } => {
                let m = radius * radius / 4.0;
                (*center, [m, 0.0, m])
            }
            DomainKind::Ellipse {
                center,
                semi_axes,
                rotation,
            } => {
                let (s, c) = rotation.sin_cos();
                let (a2, b2) = (semi_axes[0].powi(2) / 4.0, semi_axes[1].powi(2) / 4.0);
                (
                    *center,
                    [c * c * a2 + s * s * b2, c * s * (a2 - b2), s * s * a2 + c * c * b2],
                )
            }
            DomainKind::LevelSet { bounds, .. } => {
                let cells = 400;
                let dx = (bounds.max[0] - bounds.min[0]) / cells as f64;
                let dy = (bounds.max[1] - bounds.min[1]) / cells as f64;
                let mut pts = Vec::new();
                for j in 0..cells {
                    for i in 0..cells {
                        let x = [
                            bounds.min[0] + (i as f64 + 0.5) * dx,
                            bounds.min[1] + (j as f64 + 0.5) * dy,
                        ];
                        if self.contains(x) {
                            pts.push(x);
                        }
                    }
                }
                let n = pts.len().max(1) as f64;
                let cx = pts.iter().map(|p| p[0]).sum::<f64>() / n;
                let cy = pts.iter().map(|p| p[1]).sum::<f64>() / n;
                let mut m = [0.0; 3];
                for p in &pts {
                    let (u, v) = (p[0] - cx, p[1] - cy);
                    m[0] += u * u / n;
                    m[1] += u * v / n;
                    m[2] += v * v / n;
                }
                ([cx, cy], m)
            }
        }
    }

    /// `m` boundary points, quasi-uniform in arc length, with outward normals.
    pub fn sample_boundary(&self, m: usize) -> Result<Vec<BoundaryPoint>> {
        if m < MIN_BOUNDARY_SAMPLES {
            return Err(Error::Precondition(format!(
                "need at least {MIN_BOUNDARY_SAMPLES} boundary samples, got {m}"
            )));
        }
        let points: Vec<Point> = match &self.kind {
            DomainKind::Disk { center, radius } => (0..m)
                .map(|k| {
                    let t = TAU * k as f64 / m as f64;
                    [center[0] + radius * t.cos(), center[1] + radius * t.sin()]
                })
                .collect(),
            DomainKind::Ellipse {
                center,
                semi_axes,
                rotation,
            } => ellipse_arc_length_params(semi_axes[0], semi_axes[1], m)
                .into_iter()
                .map(|t| {
                    let local = [semi_axes[0] * t.cos(), semi_axes[1] * t.sin()];
                    add(*center, rotate(local, *rotation, false))
                })
                .collect(),
            DomainKind::LevelSet { .. } => self.level_set_boundary(m),
        };
        Ok(points
            .into_iter()
            .map(|p| BoundaryPoint {
                point: p,
                normal: self.boundary_normal(p),
            })
            .collect())
    }

    fn boundary_normal(&self, p: Point) -> Point {
        match &self.kind {
            DomainKind::Ellipse {
                center,
                semi_axes,
                rotation,
            } => {
                let local = rotate(sub(p, *center), *rotation, true);
                rotate(ellipse_normal(semi_axes[0], semi_axes[1], local), *rotation, false)
            }
            _ => self.outward_normal(p),
        }
    }

    /// Boundary curvature at a boundary point.
    pub fn curvature(&self, p: Point) -> f64 {
        match &self.kind {
            DomainKind::Disk { radius, .. } => 1.0 / radius,
            DomainKind::Ellipse {
                center,
                semi_axes,
                rotation,
            } => {
                let [a, b] = *semi_axes;
                let local = rotate(sub(p, *center), *rotation, true);
                let t = (local[1] / b).atan2(local[0] / a);
                a * b / ((a * t.sin()).powi(2) + (b * t.cos()).powi(2)).powf(1.5)
            }
            DomainKind::LevelSet { .. } => {
                // Curvature of the level line: div(∇h/|∇h|).
                let s = 1e-4 * self.diameter();
                let h = |dx: f64, dy: f64| self.defining_value([p[0] + dx, p[1] + dy]);
                let hx = (h(s, 0.0) - h(-s, 0.0)) / (2.0 * s);
                let hy = (h(0.0, s) - h(0.0, -s)) / (2.0 * s);
                let hxx = (h(s, 0.0) - 2.0 * h(0.0, 0.0) + h(-s, 0.0)) / (s * s);
                let hyy = (h(0.0, s) - 2.0 * h(0.0, 0.0) + h(0.0, -s)) / (s * s);
                let hxy = (h(s, s) - h(s, -s) - h(-s, s) + h(-s, -s)) / (4.0 * s * s);
                (hxx * hy * hy - 2.0 * hx * hy * hxy + hyy * hx * hx) / (hx * hx + hy * hy).powf(1.5)
            }
        }
    }

    /// Smallest sampled boundary curvature and whether it clears the
    /// declared convexity modulus (relative slack `1e-6`).
    pub fn check_uniform_convexity(&self, m: usize) -> Result<(f64, bool)> {
        let min = self
            .sample_boundary(m)?
            .iter()
            .map(|b| self.curvature(b.point))
            .fold(f64::INFINITY, f64::min);
        Ok((min, min >= self.convexity_modulus * (1.0 - 1e-6)))
    }

    /// Range of `|∇h|` over boundary-collar points; the collar has width
    /// `0.2·diameter` on each side of the boundary.
    pub fn collar_gradient_range(&self, m: usize) -> Result<(f64, f64)> {
        let width = 0.2 * self.diameter();
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for b in self.sample_boundary(m)? {
            for k in -4..=4 {
                let off = width * k as f64 / 4.0;
                let x = [b.point[0] + off * b.normal[0], b.point[1] + off * b.normal[1]];
                let g = norm(self.gradient(x));
                lo = lo.min(g);
                hi = hi.max(g);
            }
        }
        Ok((lo, hi))
    }

    fn level_set_boundary(&self, m: usize) -> Vec<Point> {
        let (centre, _) = self.moments();
        let reach = self.diameter() * 2.0;
        let rays = 4096.max(8 * m);
        let mut poly = Vec::with_capacity(rays);
        for k in 0..rays {
            let t = TAU * k as f64 / rays as f64;
            let d = [t.cos(), t.sin()];
            let (mut lo, mut hi) = (0.0, reach);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if self.contains([centre[0] + mid * d[0], centre[1] + mid * d[1]]) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            poly.push([centre[0] + lo * d[0], centre[1] + lo * d[1]]);
        }
        let mut cumulative = vec![0.0];
        for k in 0..rays {
            let next = poly[(k + 1) % rays];
            let last = *cumulative.last().unwrap();
            cumulative.push(last + distance(poly[k], next));
        }
        let total = cumulative[rays];
        let mut out = Vec::with_capacity(m);
        let mut seg = 0;
        for j in 0..m {
            let target = total * j as f64 / m as f64;
            while cumulative[seg + 1] < target {
                seg += 1;
            }
            let frac = (target - cumulative[seg]) / (cumulative[seg + 1] - cumulative[seg]);
            let (a, b) = (poly[seg], poly[(seg + 1) % rays]);
            let x = [a[0] + frac * (b[0] - a[0]), a[1] + frac * (b[1] - a[1])];
            out.push(self.project_to_boundary(x));
        }
        out
    }
}

pub const MIN_BOUNDARY_SAMPLES: usize = 3;

fn clamp(x: Point, b: &BoundingBox) -> Point {
    [x[0].clamp(b.min[0], b.max[0]), x[1].clamp(b.min[1], b.max[1])]
}

fn ellipse_normal(a: f64, b: f64, foot: Point) -> Point {
    unit([foot[0] / (a * a), foot[1] / (b * b)])
}

/// Signed distance from `y` to the axis-aligned ellipse with semi-axes
/// `(a, b)` centred at the origin, and the nearest boundary point.
///
/// Reduces to the first quadrant and solves the closest-point condition by
/// bisection on the Lagrange multiplier, which converges for every input.
fn ellipse_signed_distance(a: f64, b: f64, y: Point) -> (f64, Point) {
    let swap = a < b;
    let (e0, e1) = if swap { (b, a) } else { (a, b) };
    let (y0, y1) = if swap { (y[1], y[0]) } else { (y[0], y[1]) };
    let (s0, s1) = (y0.signum(), y1.signum());
    let (z0, z1) = (y0.abs(), y1.abs());
    let (x0, x1) = closest_first_quadrant(e0, e1, z0, z1);
    let (x0, x1) = (s0 * x0, s1 * x1);
    let foot = if swap { [x1, x0] } else { [x0, x1] };
    let d = distance(y, foot);
    let inside = (y[0] / a).powi(2) + (y[1] / b).powi(2) < 1.0;
    (if inside { -d } else { d }, foot)
}

/// Closest point on `x²/e0² + y²/e1² = 1` (with `e0 ≥ e1`) to `(y0, y1)` in
/// the closed first quadrant.
fn closest_first_quadrant(e0: f64, e1: f64, y0: f64, y1: f64) -> (f64, f64) {
    if y1 > 0.0 {
        if y0 > 0.0 {
            let z0 = y0 / e0;
            let z1 = y1 / e1;
            let g = z0 * z0 + z1 * z1 - 1.0;
            if g != 0.0 {
                let r0 = (e0 / e1).powi(2);
                let sigma = multiplier_root(r0, z0, z1, g);
                (r0 * y0 / (sigma - 1.0 + r0), y1 / sigma)
            } else {
                (y0, y1)
            }
        } else {
            (0.0, e1)
        }
    } else {
        let numer0 = e0 * y0;
        let denom0 = e0 * e0 - e1 * e1;
        if numer0 < denom0 {
            let xde0 = numer0 / denom0;
            (e0 * xde0, e1 * (1.0 - xde0 * xde0).max(0.0).sqrt())
        } else {
            (e0, 0.0)
        }
    }
}

/// Root `σ` of `G(σ) = (n0/(σ − 1 + r0))² + (z1/σ)² − 1`, the shifted
/// Lagrange multiplier. `G` is convex and decreasing on the bracket, so
/// Newton steps are taken whenever they stay inside it and bisection
/// otherwise. Working with `σ` instead of `σ − 1` keeps full relative
/// precision when the query point is close to the major axis.
fn multiplier_root(r0: f64, z0: f64, z1: f64, g: f64) -> f64 {
    let n0 = r0 * z0;
    let mut lo = z1;
    let mut hi = if g < 0.0 { 1.0 } else { n0.hypot(z1) };
    let mut s = hi;
    for _ in 0..200 {
        let (d0, d1) = (n0 / (s - 1.0 + r0), z1 / s);
        let gs = d0 * d0 + d1 * d1 - 1.0;
        if gs > 0.0 {
            lo = s;
        } else if gs < 0.0 {
            hi = s;
        } else {
            break;
        }
        let slope = -2.0 * (d0 * d0 / (s - 1.0 + r0) + d1 * d1 / s);
        let mut next = s - gs / slope;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if next == s || next == lo || next == hi {
            break;
        }
        s = next;
    }
    s
}

/// Parameters `t_k` of the ellipse `(a cos t, b sin t)` at equal arc-length
/// spacing, starting from `t = 0`.
fn ellipse_arc_length_params(a: f64, b: f64, m: usize) -> Vec<f64> {
    let speed = |t: f64| (a * t.sin()).hypot(b * t.cos());
    let cells = 64 * m.max(64);
    let dt = TAU / cells as f64;
    // Composite Simpson per cell.
    let mut cumulative = Vec::with_capacity(cells + 1);
    cumulative.push(0.0);
    for k in 0..cells {
        let t0 = k as f64 * dt;
        let seg = dt / 6.0 * (speed(t0) + 4.0 * speed(t0 + 0.5 * dt) + speed(t0 + dt));
        let last = cumulative[k];
        cumulative.push(last + seg);
    }
    let total = cumulative[cells];
    let mut out = Vec::with_capacity(m);
    let mut cell = 0;
    for j in 0..m {
        let target = total * j as f64 / m as f64;
        while cell + 1 < cells && cumulative[cell + 1] < target {
            cell += 1;
        }
        // Newton on the arc length within the cell.
        let mut t = cell as f64 * dt + (target - cumulative[cell]) / speed(cell as f64 * dt).max(1e-300);
        for _ in 0..8 {
            let t0 = cell as f64 * dt;
            let h = t - t0;
            let partial = h / 6.0 * (speed(t0) + 4.0 * speed(t0 + 0.5 * h) + speed(t));
            t -= (cumulative[cell] + partial - target) / speed(t);
        }
        out.push(t.rem_euclid(TAU));
    }
    out
}
