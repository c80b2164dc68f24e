use std::collections::HashMap;

use crate::geodesic::{integrate, GeodesicError, Integration};

use super::{ManifoldError, ManifoldScenario, Point};

const NORMAL_STEP: f64 = 1e-3;
const NORMAL_LENGTH_CAP: f64 = 20.0;
const MESH_TOL: f64 = 1e-4;
const BISECTION_ITERS: usize = 40;

/// Smooth cutoff: identically one on `[0, r_c/3]`, identically zero on
/// `[2 r_c/3, inf)`, and a C2 quintic smoothstep in between.
pub fn cutoff(s: f64, r_c: f64) -> f64 {
    let a = 3.0 * s / r_c - 1.0;
    if a <= 0.0 {
        1.0
    } else if a >= 1.0 {
        0.0
    } else {
        1.0 - a * a * a * (10.0 + a * (-15.0 + 6.0 * a))
    }
}

fn geo(e: GeodesicError) -> ManifoldError {
    match e {
        GeodesicError::Manifold(m) => m,
        other => ManifoldError::Geodesic(Box::new(other)),
    }
}

struct NormalFan {
    /// `(component start, component end)` index ranges into `traces`.
    components: Vec<(usize, usize)>,
    traces: Vec<Integration>,
    /// Shortest normal exit time (or covered length when trapped).
    reach: f64,
}

impl NormalFan {
    fn new(scenario: &ManifoldScenario, n_u: usize) -> Result<Self, ManifoldError> {
        let period = scenario.boundary_period();
        let mut traces = Vec::with_capacity(n_u);
        let mut components = Vec::new();
        for (a, b) in scenario.boundary_components() {
            let start = traces.len();
            for i in 0..n_u {
                let u = period * i as f64 / n_u as f64;
                if u >= a && u < b {
                    let (x, nu) = scenario.boundary_geometry(u)?;
                    traces.push(
                        integrate(scenario, x, nu, NORMAL_STEP, NORMAL_LENGTH_CAP).map_err(geo)?,
                    );
                }
            }
            if traces.len() > start {
                components.push((start, traces.len()));
            }
        }
        let reach = traces
            .iter()
            .map(|t| t.samples.last().map_or(0.0, |s| s.t))
            .fold(f64::INFINITY, f64::min);
        Ok(Self {
            components,
            traces,
            reach,
        })
    }

    fn point(&self, i: usize, t: f64) -> Point {
        let samples = &self.traces[i].samples;
        let k = ((t / NORMAL_STEP).floor().max(0.0) as usize).min(samples.len().saturating_sub(2));
        if samples.len() < 2 {
            return samples[0].x;
        }
        let (a, b) = (&samples[k], &samples[k + 1]);
        let dt = b.t - a.t;
        let u = (t - a.t) / dt;
        let (u2, u3) = (u * u, u * u * u);
        a.x * (2.0 * u3 - 3.0 * u2 + 1.0)
            + a.v * ((u3 - 2.0 * u2 + u) * dt)
            + b.x * (-2.0 * u3 + 3.0 * u2)
            + b.v * ((u3 - u2) * dt)
    }

    /// Whether the sampled normal map on `[0, r]` is injective and keeps its
    /// orientation.
    fn passes(&self, r: f64, n_t: usize) -> bool {
        let dt = self.reach / n_t as f64;
        let mut levels: Vec<f64> = (0..=n_t)
            .map(|k| k as f64 * dt)
            .take_while(|&t| t < r)
            .collect();
        levels.push(r);
        let nl = levels.len();
        let n = self.traces.len();
        let verts: Vec<Point> = (0..n)
            .flat_map(|i| levels.iter().map(move |&t| (i, t)))
            .map(|(i, t)| self.point(i, t))
            .collect();
        let vid = |i: usize, k: usize| i * nl + k;

        let mut edges: Vec<(usize, usize)> = Vec::new();
        for &(start, end) in &self.components {
            let mut sign = 0.0;
            for i in start..end {
                let next = if i + 1 == end { start } else { i + 1 };
                for k in 0..nl {
                    edges.push((vid(i, k), vid(next, k)));
                    if k + 1 < nl {
                        edges.push((vid(i, k), vid(i, k + 1)));
                        let a = verts[vid(next, k)] - verts[vid(i, k)];
                        let b = verts[vid(i, k + 1)] - verts[vid(i, k)];
                        let cross = a[0] * b[1] - a[1] * b[0];
                        if sign == 0.0 {
                            sign = cross.signum();
                        }
                        if cross * sign <= 0.0 {
                            return false;
                        }
                    }
                }
            }
        }
        !mesh_self_intersects(&verts, &edges, MESH_TOL)
    }
}

fn mesh_self_intersects(verts: &[Point], edges: &[(usize, usize)], tol: f64) -> bool {
    let mut lengths: Vec<f64> = edges
        .iter()
        .map(|&(a, b)| (verts[a] - verts[b]).norm())
        .collect();
    lengths.sort_by(f64::total_cmp);
    let cell = lengths[lengths.len() / 2].max(tol) * 2.0;
    let key = |p: &Point| ((p[0] / cell).floor() as i64, (p[1] / cell).floor() as i64);
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (e, &(a, b)) in edges.iter().enumerate() {
        let lo = verts[a].inf(&verts[b]).add_scalar(-tol);
        let hi = verts[a].sup(&verts[b]).add_scalar(tol);
        let (x0, y0) = key(&lo);
        let (x1, y1) = key(&hi);
        for gx in x0..=x1 {
            for gy in y0..=y1 {
                grid.entry((gx, gy)).or_default().push(e);
            }
        }
    }
    for list in grid.values() {
        for (i, &e) in list.iter().enumerate() {
            for &f in &list[i + 1..] {
                let (a, b) = edges[e];
                let (c, d) = edges[f];
                if a == c || a == d || b == c || b == d {
                    continue;
                }
                if segment_distance(&verts[a], &verts[b], &verts[c], &verts[d]) < tol {
                    return true;
                }
            }
        }
    }
    false
}

pub(crate) fn point_segment_distance(p: &Point, a: &Point, b: &Point) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let s = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * s)).norm()
}

pub(crate) fn segment_distance(a: &Point, b: &Point, c: &Point, d: &Point) -> f64 {
    let cross = |u: nalgebra::Vector2<f64>, v: nalgebra::Vector2<f64>| u[0] * v[1] - u[1] * v[0];
    let d1 = cross(b - a, c - a);
    let d2 = cross(b - a, d - a);
    let d3 = cross(d - c, a - c);
    let d4 = cross(d - c, b - c);
    if d1 * d2 < 0.0 && d3 * d4 < 0.0 {
        return 0.0;
    }
    point_segment_distance(a, c, d)
        .min(point_segment_distance(b, c, d))
        .min(point_segment_distance(c, a, b))
        .min(point_segment_distance(d, a, b))
}

/// Result of the sampled collar test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollarEstimate {
    /// Largest tested radius at which the sampled normal map stayed
    /// injective and orientation-consistent.
    pub radius: f64,
    /// First tested radius at which it failed.
    pub failed_at: f64,
}

/// Conservative estimate of a collar radius from an `n_u x n_t` sample of
/// the normal map `(x, t) -> exp_x(t nu_x)`: a coarse scan over `n_t`
/// levels followed by bisection on the first failing level.
pub fn collar_radius_estimate(
    scenario: &ManifoldScenario,
    n_u: usize,
    n_t: usize,
) -> Result<CollarEstimate, ManifoldError> {
    if n_u < 16 || n_t < 16 {
        return Err(ManifoldError::InvalidParameter(format!(
            "collar sampling needs n_u, n_t >= 16 (got {n_u}, {n_t})"
        )));
    }
    let fan = NormalFan::new(scenario, n_u)?;
    let dt = fan.reach / n_t as f64;
    let mut lo = 0.0;
    let mut hi = None;
    for k in 1..=n_t {
        let r = k as f64 * dt;
        if fan.passes(r, n_t) {
            lo = r;
        } else {
            hi = Some(r);
            break;
        }
    }
    let Some(mut hi) = hi else {
        return Ok(CollarEstimate {
            radius: lo,
            failed_at: f64::INFINITY,
        });
    };
    for _ in 0..BISECTION_ITERS {
        let mid = 0.5 * (lo + hi);
        if fan.passes(mid, n_t) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if lo <= dt * 1e-6 {
        return Err(ManifoldError::NoCollar { r: hi });
    }
    Ok(CollarEstimate {
        radius: lo,
        failed_at: hi,
    })
}

/// The flow `phi_t` pushing points off the boundary along normal geodesics,
/// with speed `cutoff(depth)`.
#[derive(Debug, Clone)]
pub struct CollarFlow<'a> {
    scenario: &'a ManifoldScenario,
    r_c: f64,
}

impl<'a> CollarFlow<'a> {
    pub fn new(
        scenario: &'a ManifoldScenario,
        r_c: f64,
        estimate: &CollarEstimate,
    ) -> Result<Self, ManifoldError> {
        if !(r_c > 0.0) || r_c > estimate.radius {
            return Err(ManifoldError::InvalidCollar {
                requested: r_c,
                estimate: estimate.radius,
            });
        }
        Ok(Self { scenario, r_c })
    }

    pub fn collar_radius(&self) -> f64 {
        self.r_c
    }

    /// Point at depth `d` along the normal geodesic from boundary parameter `u`.
    pub fn normal_point(&self, u: f64, d: f64) -> Result<Point, ManifoldError> {
        let (x, nu) = self.scenario.boundary_geometry(u)?;
        if d <= 0.0 {
            return Ok(x);
        }
        let run = integrate(self.scenario, x, nu, NORMAL_STEP, d).map_err(geo)?;
        Ok(run.samples.last().expect("nonempty").x)
    }

    fn normal_velocity(&self, u: f64, d: f64) -> Result<nalgebra::Vector2<f64>, ManifoldError> {
        let (x, nu) = self.scenario.boundary_geometry(u)?;
        if d <= 0.0 {
            return Ok(nu);
        }
        let run = integrate(self.scenario, x, nu, NORMAL_STEP, d).map_err(geo)?;
        Ok(run.samples.last().expect("nonempty").v)
    }

    /// Boundary normal coordinates `(u, depth)` of `x`, or `None` when `x`
    /// is at least `r_c` away from the boundary.
    pub fn normal_coordinates(&self, x: &Point) -> Result<Option<(f64, f64)>, ManifoldError> {
        let s = self.scenario;
        if s.boundary_fn(x).abs() < 1e-14 {
            return Ok(Some((s.boundary_coord(x), 0.0)));
        }
        let period = s.boundary_period();
        let n = 2048;
        let (mut u, mut best) = (0.0, f64::INFINITY);
        for k in 0..n {
            let uk = period * k as f64 / n as f64;
            let b = s.boundary_param(uk);
            let d = (b - x).norm();
            if d < best {
                best = d;
                u = uk;
            }
        }
        let bp = s.boundary_param(u);
        let mut depth = s.norm(&((bp + x) * 0.5), &(x - bp));
        if depth >= self.r_c * 1.5 {
            return Ok(None);
        }
        let du = 1e-6;
        for _ in 0..40 {
            let k = self.normal_point(u, depth)?;
            let f = k - x;
            if f.norm() < 1e-13 {
                break;
            }
            let ku = (self.normal_point(u + du, depth)? - self.normal_point(u - du, depth)?)
                / (2.0 * du);
            let kd = self.normal_velocity(u, depth)?;
            let jac = nalgebra::Matrix2::from_columns(&[ku, kd]);
            let step = jac
                .try_inverse()
                .ok_or(ManifoldError::NormalCoordinates { x: x[0], y: x[1] })?
                * f;
            u -= step[0];
            depth = (depth - step[1]).max(0.0);
        }
        if (self.normal_point(u, depth)? - x).norm() > 1e-9 {
            return Err(ManifoldError::NormalCoordinates { x: x[0], y: x[1] });
        }
        Ok(Some((u.rem_euclid(period), depth)))
    }

    /// Depth reached after flowing for time `t` from depth `d`
    /// (`f' = cutoff(f)`, `f(0) = d`), by RK4 with a fine fixed step.
    pub fn depth_after(&self, d: f64, t: f64) -> f64 {
        if t <= 0.0 || cutoff(d, self.r_c) == 0.0 {
            return d;
        }
        let n = ((t / 1e-5).ceil() as usize).max(1);
        let h = t / n as f64;
        let chi = |f: f64| cutoff(f, self.r_c);
        let mut f = d;
        for _ in 0..n {
            let k1 = chi(f);
            let k2 = chi(f + 0.5 * h * k1);
            let k3 = chi(f + 0.5 * h * k2);
            let k4 = chi(f + h * k3);
            f += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        f
    }

    /// `phi_t(x)`.
    pub fn push(&self, x: &Point, t: f64) -> Result<Point, ManifoldError> {
        if t == 0.0 {
            return Ok(*x);
        }
        let Some((u, d)) = self.normal_coordinates(x)? else {
            return Ok(*x);
        };
        if d >= 2.0 * self.r_c / 3.0 {
            return Ok(*x);
        }
        self.normal_point(u, self.depth_after(d, t))
    }
}
