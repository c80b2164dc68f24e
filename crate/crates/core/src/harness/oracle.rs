//! Ground-truth Riemannian distances: closed forms where they exist and a
//! fast-marching eikonal solve otherwise.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::Serialize;

use crate::manifold::{ManifoldError, ManifoldScenario, Point, ScenarioKind, EPS_BOUNDARY};

/// Default fast-marching grid resolution (nodes per side).
pub const FMM_GRID: usize = 512;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OracleError {
    #[error("point ({x}, {y}) lies outside the manifold")]
    OutsideManifold { x: f64, y: f64 },
    #[error("fast marching did not reach ({x}, {y})")]
    Unreached { x: f64, y: f64 },
    #[error(transparent)]
    Manifold(#[from] ManifoldError),
}

/// How an oracle value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMethod {
    Euclidean,
    TangentSegments,
    GreatCircle,
    FastMarching,
}

pub fn oracle_method(scenario: &ManifoldScenario) -> OracleMethod {
    match scenario.kind {
        ScenarioKind::FlatDisk => OracleMethod::Euclidean,
        ScenarioKind::FlatAnnulus { .. } => OracleMethod::TangentSegments,
        ScenarioKind::SphereCap { .. } => OracleMethod::GreatCircle,
        ScenarioKind::PerturbedDisk { .. } | ScenarioKind::PerturbedCap { .. } => {
            OracleMethod::FastMarching
        }
    }
}

fn check_inside(scenario: &ManifoldScenario, x: &Point) -> Result<(), OracleError> {
    // boundary points carry a relative error of the boundary tolerance
    let scale = scenario.boundary_grad(x).norm().max(1.0);
    if !x.iter().all(|c| c.is_finite()) || scenario.boundary_fn(x) < -EPS_BOUNDARY * scale {
        return Err(OracleError::OutsideManifold { x: x[0], y: x[1] });
    }
    Ok(())
}

/// Riemannian distance between two points of `M`. Closed-form scenarios
/// are exact; the others run a fast-marching solve on a
/// [`FMM_GRID`]-node grid.
pub fn oracle_distance(scenario: &ManifoldScenario, x: &Point, y: &Point) -> Result<f64, OracleError> {
    DistanceOracle::new(scenario, FMM_GRID).distance(x, y)
}

/// Shortest path in the plane minus the open disk of radius `a` about the
/// origin: straight when the segment clears the disk, otherwise two tangent
/// segments joined by an arc of the circle.
pub fn annulus_distance(a: f64, x: &Point, y: &Point) -> f64 {
    let d = y - x;
    let len2 = d.norm_squared();
    let t = if len2 > 0.0 { (-x.dot(&d) / len2).clamp(0.0, 1.0) } else { 0.0 };
    if (x + d * t).norm() >= a {
        return len2.sqrt();
    }
    let (rx, ry) = (x.norm().max(a), y.norm().max(a));
    let angle = (x.dot(y) / (rx * ry)).clamp(-1.0, 1.0).acos();
    let arc = angle - (a / rx).acos() - (a / ry).acos();
    (rx * rx - a * a).sqrt() + (ry * ry - a * a).sqrt() + a * arc.max(0.0)
}

/// Inverse stereographic lift of the chart point to the unit sphere; the
/// chart origin maps to the south pole.
pub fn stereographic_lift(x: &Point) -> Vector3<f64> {
    let r2 = x.norm_squared();
    Vector3::new(2.0 * x[0], 2.0 * x[1], r2 - 1.0) / (1.0 + r2)
}

fn angle_between(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    // atan2 form keeps full precision for nearly parallel vectors
    a.cross(b).norm().atan2(a.dot(b))
}

/// Distance on the unit sphere minus the open polar cap of angular radius
/// `rho` about the north pole. Minor great-circle arcs that enter the cap
/// are replaced by tangent arcs joined along the cap boundary.
pub fn capped_sphere_distance(rho: f64, p: &Vector3<f64>, q: &Vector3<f64>) -> f64 {
    let direct = angle_between(p, q);
    if rho <= 0.0 || rho >= PI / 2.0 {
        // the remaining region lies within a closed hemisphere and is convex
        return direct;
    }
    let north = Vector3::new(0.0, 0.0, 1.0);
    let (dp, dq) = (angle_between(&north, p), angle_between(&north, q));
    let n = p.cross(q);
    let min_dist = if n.norm() < 1e-14 {
        dp.min(dq)
    } else {
        let n = n.normalize();
        let c = north - n * north.dot(&n);
        let on_arc = c.norm() > 0.0 && p.cross(&c).dot(&n) >= 0.0 && c.cross(q).dot(&n) >= 0.0;
        if on_arc {
            angle_between(&north, &c)
        } else {
            dp.min(dq)
        }
    };
    if min_dist >= rho {
        return direct;
    }
    // right spherical triangles pole / point / tangency point
    let tangent_len = |d: f64| (d.cos() / rho.cos()).clamp(-1.0, 1.0).acos();
    let tangent_az = |d: f64| (rho.tan() / d.tan()).clamp(-1.0, 1.0).acos();
    let azimuth = {
        let (a, b) = (p.xy(), q.xy());
        a.perp(&b).abs().atan2(a.dot(&b))
    };
    let arc = azimuth - tangent_az(dp) - tangent_az(dq);
    if arc <= 0.0 {
        return direct;
    }
    tangent_len(dp) + tangent_len(dq) + rho.sin() * arc
}

/// Outer chart radius of the scenario's boundary.
fn outer_radius(scenario: &ManifoldScenario) -> f64 {
    match scenario.kind {
        ScenarioKind::SphereCap { radius } | ScenarioKind::PerturbedCap { radius, .. } => radius,
        _ => 1.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeapItem {
    t: f64,
    idx: usize,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other.t.total_cmp(&self.t).then_with(|| other.idx.cmp(&self.idx))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// A square node grid over the chart with the slowness `sqrt(c)` of the
/// conformal factor and the set of active nodes: `M` padded by a band of
/// three cells so that interpolation near the boundary stays defined.
#[derive(Debug, Clone)]
pub struct FmmGrid {
    pub n: usize,
    pub lo: f64,
    pub spacing: f64,
    slowness: Vec<f64>,
    active: Vec<bool>,
}

impl FmmGrid {
    pub fn new(scenario: &ManifoldScenario, n: usize) -> Self {
        let n = n.max(8);
        let half = outer_radius(scenario) * 1.02;
        let spacing = 2.0 * half / (n - 1) as f64;
        let lo = -half;
        let pad = 3.0 * spacing;
        let mut slowness = vec![0.0; n * n];
        let mut active = vec![false; n * n];
        for j in 0..n {
            for i in 0..n {
                let x = Point::new(lo + i as f64 * spacing, lo + j as f64 * spacing);
                let psi = scenario.boundary_fn(&x);
                let grad = scenario.boundary_grad(&x).norm();
                // first-order distance to the level set in chart units
                let inside = psi >= 0.0 || (grad > 0.0 && -psi / grad <= pad);
                let k = j * n + i;
                if inside && scenario.in_chart(&x) {
                    active[k] = true;
                    slowness[k] = scenario.conformal(&x).0.sqrt();
                }
            }
        }
        Self {
            n,
            lo,
            spacing,
            slowness,
            active,
        }
    }

    fn node(&self, k: usize) -> Point {
        let (i, j) = (k % self.n, k / self.n);
        Point::new(self.lo + i as f64 * self.spacing, self.lo + j as f64 * self.spacing)
    }

    fn neighbor(&self, k: usize, axis: usize, dir: isize, step: isize) -> Option<usize> {
        let (i, j) = ((k % self.n) as isize, (k / self.n) as isize);
        let (ni, nj) = if axis == 0 { (i + dir * step, j) } else { (i, j + dir * step) };
        let n = self.n as isize;
        if ni < 0 || nj < 0 || ni >= n || nj >= n {
            return None;
        }
        let idx = (nj * n + ni) as usize;
        self.active[idx].then_some(idx)
    }

    /// Travel-time field from `source` by second-order fast marching.
    pub fn solve(&self, source: &Point) -> Vec<f64> {
        let n = self.n;
        let h = self.spacing;
        let mut t = vec![f64::INFINITY; n * n];
        let mut known = vec![false; n * n];
        let mut heap = BinaryHeap::new();
        let src_slow = {
            let fi = ((source[0] - self.lo) / h).round().clamp(0.0, (n - 1) as f64) as usize;
            let fj = ((source[1] - self.lo) / h).round().clamp(0.0, (n - 1) as f64) as usize;
            self.slowness[fj * n + fi]
        };
        // exact-slope initialization in a small disk about the source
        let ci = ((source[0] - self.lo) / h).floor() as isize;
        let cj = ((source[1] - self.lo) / h).floor() as isize;
        for dj in -3..=4isize {
            for di in -3..=4isize {
                let (i, j) = (ci + di, cj + dj);
                if i < 0 || j < 0 || i >= n as isize || j >= n as isize {
                    continue;
                }
                let k = j as usize * n + i as usize;
                if !self.active[k] {
                    continue;
                }
                let r = (self.node(k) - source).norm();
                if r <= 2.5 * h {
                    t[k] = r * 0.5 * (self.slowness[k] + src_slow);
                    known[k] = true;
                }
            }
        }
        for k in 0..n * n {
            if known[k] {
                self.relax_neighbors(k, &mut t, &known, &mut heap);
            }
        }
        while let Some(HeapItem { t: tk, idx }) = heap.pop() {
            if known[idx] || tk > t[idx] {
                continue;
            }
            known[idx] = true;
            self.relax_neighbors(idx, &mut t, &known, &mut heap);
        }
        t
    }

    fn relax_neighbors(&self, k: usize, t: &mut [f64], known: &[bool], heap: &mut BinaryHeap<HeapItem>) {
        for axis in 0..2 {
            for dir in [-1, 1] {
                if let Some(m) = self.neighbor(k, axis, dir, 1) {
                    if !known[m] {
                        let cand = self.update(m, t, known);
                        if cand < t[m] {
                            t[m] = cand;
                            heap.push(HeapItem { t: cand, idx: m });
                        }
                    }
                }
            }
        }
    }

    /// Upwind update of node `k` from its known neighbours, second order
    /// where two upwind nodes are available.
    fn update(&self, k: usize, t: &[f64], known: &[bool]) -> f64 {
        let h = self.spacing;
        let f = self.slowness[k];
        // per axis: (coefficient, offset) for a * (T - b)^2 and the first-order value
        let mut terms: Vec<(f64, f64, f64)> = Vec::with_capacity(2);
        for axis in 0..2 {
            let mut best: Option<(f64, f64, f64)> = None;
            for dir in [-1, 1] {
                let Some(m1) = self.neighbor(k, axis, dir, 1) else { continue };
                if !known[m1] {
                    continue;
                }
                let t1 = t[m1];
                let second = self
                    .neighbor(k, axis, dir, 2)
                    .filter(|&m2| known[m2] && t[m2] <= t1)
                    .map(|m2| t[m2]);
                let term = match second {
                    Some(t2) => (9.0 / (4.0 * h * h), (4.0 * t1 - t2) / 3.0, t1),
                    None => (1.0 / (h * h), t1, t1),
                };
                if best.is_none_or(|b| t1 < b.2) {
                    best = Some(term);
                }
            }
            if let Some(b) = best {
                terms.push(b);
            }
        }
        let one_d = |&(_, _, t1): &(f64, f64, f64)| t1 + f * h;
        let fallback = terms.iter().map(one_d).fold(f64::INFINITY, f64::min);
        let solve = |ts: &[(f64, f64, f64)]| -> Option<f64> {
            let a: f64 = ts.iter().map(|x| x.0).sum();
            let b: f64 = ts.iter().map(|x| x.0 * x.1).sum();
            let c: f64 = ts.iter().map(|x| x.0 * x.1 * x.1).sum::<f64>() - f * f;
            let disc = b * b - a * c;
            if disc < 0.0 {
                return None;
            }
            let root = (b + disc.sqrt()) / a;
            let upwind = ts.iter().map(|x| x.2).fold(f64::NEG_INFINITY, f64::max);
            (root >= upwind).then_some(root)
        };
        if terms.len() == 2 {
            if let Some(r) = solve(&terms) {
                return r;
            }
            // retry with first-order stencils before giving up on the 2-D update
            let first: Vec<(f64, f64, f64)> =
                terms.iter().map(|&(_, _, t1)| (1.0 / (h * h), t1, t1)).collect();
            if let Some(r) = solve(&first) {
                return r;
            }
        }
        if terms.len() == 1 {
            if let Some(r) = solve(&terms) {
                return r;
            }
        }
        fallback
    }

    /// Bilinear interpolation of a field at a chart point; `None` when a
    /// surrounding node is inactive or unreached.
    pub fn interpolate(&self, field: &[f64], x: &Point) -> Option<f64> {
        let n = self.n;
        let fx = (x[0] - self.lo) / self.spacing;
        let fy = (x[1] - self.lo) / self.spacing;
        if fx < 0.0 || fy < 0.0 {
            return None;
        }
        let (i, j) = ((fx.floor() as usize).min(n - 2), (fy.floor() as usize).min(n - 2));
        let (a, b) = (fx - i as f64, fy - j as f64);
        let at = |ii: usize, jj: usize| {
            let k = jj * n + ii;
            (self.active[k] && field[k].is_finite()).then(|| field[k])
        };
        let (v00, v10, v01, v11) = (at(i, j)?, at(i + 1, j)?, at(i, j + 1)?, at(i + 1, j + 1)?);
        Some((1.0 - a) * (1.0 - b) * v00 + a * (1.0 - b) * v10 + (1.0 - a) * b * v01 + a * b * v11)
    }
}

/// Distance oracle for one scenario. Fast-marching fields are cached per
/// source point.
pub struct DistanceOracle<'a> {
    scenario: &'a ManifoldScenario,
    grid: Option<FmmGrid>,
    fields: HashMap<(u64, u64), Vec<f64>>,
}

impl<'a> DistanceOracle<'a> {
    pub fn new(scenario: &'a ManifoldScenario, fmm_grid: usize) -> Self {
        let grid = (oracle_method(scenario) == OracleMethod::FastMarching)
            .then(|| FmmGrid::new(scenario, fmm_grid));
        Self {
            scenario,
            grid,
            fields: HashMap::new(),
        }
    }

    pub fn method(&self) -> OracleMethod {
        oracle_method(self.scenario)
    }

    pub fn distance(&mut self, x: &Point, y: &Point) -> Result<f64, OracleError> {
        check_inside(self.scenario, x)?;
        check_inside(self.scenario, y)?;
        match self.scenario.kind {
            ScenarioKind::FlatDisk => Ok((x - y).norm()),
            ScenarioKind::FlatAnnulus { inner } => Ok(annulus_distance(inner, x, y)),
            ScenarioKind::SphereCap { radius } => {
                let rho = PI - 2.0 * radius.atan();
                Ok(capped_sphere_distance(rho, &stereographic_lift(x), &stereographic_lift(y)))
            }
            ScenarioKind::PerturbedDisk { .. } | ScenarioKind::PerturbedCap { .. } => {
                let grid = self.grid.as_ref().expect("fast-marching grid");
                let key = (x[0].to_bits(), x[1].to_bits());
                let field = self.fields.entry(key).or_insert_with(|| grid.solve(x));
                grid.interpolate(field, y)
                    .ok_or(OracleError::Unreached { x: y[0], y: y[1] })
            }
        }
    }
}
