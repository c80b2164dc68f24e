use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2};
use serde::Serialize;

use super::{ManifoldError, Point, Tangent};

/// Step used for central-difference metric derivatives.
pub const FD_STEP: f64 = 1e-5;

/// Exterior tolerance accepted by checked metric evaluation.
pub const EPS_BOUNDARY: f64 = 1e-6;

/// The built-in metric/boundary families.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScenarioKind {
    /// Euclidean unit disk.
    FlatDisk,
    /// Stereographic chart of the round unit sphere, cut at chart radius `radius`.
    SphereCap { radius: f64 },
    /// Unit disk with conformal factor `exp(2 amplitude exp(-|x|^2 / width))`.
    PerturbedDisk { amplitude: f64, width: f64 },
    /// Sphere cap whose conformal factor is multiplied by `1 + tilt * x0`.
    PerturbedCap { radius: f64, tilt: f64 },
    /// Euclidean annulus `inner <= |x| <= 1`.
    FlatAnnulus { inner: f64 },
}

/// Metric value, its chart derivatives and the Christoffel symbols at a point.
#[derive(Debug, Clone, Copy)]
pub struct MetricPack {
    pub g: Matrix2<f64>,
    /// `gamma[k][(i, j)]` is the symbol with upper index `k`.
    pub gamma: [Matrix2<f64>; 2],
}

/// A 2-D Riemannian manifold with boundary, given in a single global chart.
#[derive(Debug, Clone, Serialize)]
pub struct ManifoldScenario {
    pub name: String,
    pub kind: ScenarioKind,
    /// Force central-difference metric derivatives instead of the closed form.
    #[serde(skip)]
    pub fd_derivatives: bool,
}

pub struct BuiltinInfo {
    pub name: &'static str,
    pub params: &'static [(&'static str, f64)],
    pub summary: &'static str,
}

pub const BUILTINS: &[BuiltinInfo] = &[
    BuiltinInfo {
        name: "flat_disk",
        params: &[],
        summary: "Euclidean unit disk, psi = 1 - |x|^2",
    },
    BuiltinInfo {
        name: "sphere_cap",
        params: &[("R", 1.0)],
        summary: "round sphere in stereographic chart, g = 4/(1+|x|^2)^2, psi = R^2 - |x|^2",
    },
    BuiltinInfo {
        name: "perturbed_disk",
        params: &[("amplitude", 0.1), ("width", 0.32)],
        summary: "unit disk, g = exp(2 a exp(-|x|^2/w)) delta",
    },
    BuiltinInfo {
        name: "perturbed_cap",
        params: &[("R", 2.5), ("tilt", 0.05)],
        summary: "sphere cap with conformal factor times (1 + tilt x0)",
    },
    BuiltinInfo {
        name: "flat_annulus",
        params: &[("r_in", 0.5)],
        summary: "Euclidean annulus r_in <= |x| <= 1",
    },
];

impl ManifoldScenario {
    pub fn new(kind: ScenarioKind) -> Self {
        let name = match kind {
            ScenarioKind::FlatDisk => "flat_disk",
            ScenarioKind::SphereCap { .. } => "sphere_cap",
            ScenarioKind::PerturbedDisk { .. } => "perturbed_disk",
            ScenarioKind::PerturbedCap { .. } => "perturbed_cap",
            ScenarioKind::FlatAnnulus { .. } => "flat_annulus",
        };
        Self {
            name: name.to_string(),
            kind,
            fd_derivatives: false,
        }
    }

    pub fn flat_disk() -> Self {
        Self::new(ScenarioKind::FlatDisk)
    }

    pub fn sphere_cap(radius: f64) -> Self {
        Self::new(ScenarioKind::SphereCap { radius })
    }

    pub fn perturbed_disk() -> Self {
        Self::new(ScenarioKind::PerturbedDisk {
            amplitude: 0.1,
            width: 0.32,
        })
    }

    pub fn perturbed_cap(radius: f64, tilt: f64) -> Self {
        Self::new(ScenarioKind::PerturbedCap { radius, tilt })
    }

    pub fn flat_annulus(inner: f64) -> Self {
        Self::new(ScenarioKind::FlatAnnulus { inner })
    }

    /// Use central differences for the metric derivatives.
    pub fn with_fd_derivatives(mut self) -> Self {
        self.fd_derivatives = true;
        self
    }

    /// Build a scenario from its registered name and numeric parameters.
    /// Missing parameters take their defaults; unknown ones are rejected.
    pub fn from_name(name: &str, params: &BTreeMap<String, f64>) -> Result<Self, ManifoldError> {
        let info = BUILTINS
            .iter()
            .find(|b| b.name == name)
            .ok_or_else(|| ManifoldError::UnknownScenario(name.to_string()))?;
        for key in params.keys() {
            if !info.params.iter().any(|(p, _)| p == key) {
                return Err(ManifoldError::UnknownParameter {
                    scenario: name.to_string(),
                    param: key.clone(),
                });
            }
        }
        let get = |key: &str| {
            params.get(key).copied().unwrap_or_else(|| {
                info.params
                    .iter()
                    .find(|(p, _)| *p == key)
                    .map(|(_, v)| *v)
                    .unwrap_or(f64::NAN)
            })
        };
        let kind = match name {
            "flat_disk" => ScenarioKind::FlatDisk,
            "sphere_cap" => ScenarioKind::SphereCap { radius: get("R") },
            "perturbed_disk" => ScenarioKind::PerturbedDisk {
                amplitude: get("amplitude"),
                width: get("width"),
            },
            "perturbed_cap" => ScenarioKind::PerturbedCap {
                radius: get("R"),
                tilt: get("tilt"),
            },
            "flat_annulus" => ScenarioKind::FlatAnnulus { inner: get("r_in") },
            _ => unreachable!(),
        };
        let scenario = Self::new(kind);
        scenario.check_params()?;
        Ok(scenario)
    }

    fn check_params(&self) -> Result<(), ManifoldError> {
        let bad = |msg: &str| Err(ManifoldError::InvalidParameter(msg.to_string()));
        match self.kind {
            ScenarioKind::FlatDisk => Ok(()),
            ScenarioKind::SphereCap { radius } if !(radius > 0.0 && radius.is_finite()) => {
                bad("sphere_cap requires R > 0")
            }
            ScenarioKind::PerturbedDisk { width, .. } if !(width > 0.0) => {
                bad("perturbed_disk requires width > 0")
            }
            ScenarioKind::PerturbedCap { radius, tilt }
                if !(radius > 0.0 && (tilt * radius).abs() < 1.0) =>
            {
                bad("perturbed_cap requires R > 0 and |tilt| R < 1")
            }
            ScenarioKind::FlatAnnulus { inner } if !(inner > 0.0 && inner < 1.0) => {
                bad("flat_annulus requires 0 < r_in < 1")
            }
            _ => Ok(()),
        }
    }

    /// Scenario parameters as reported in configs and reports.
    pub fn params(&self) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        match self.kind {
            ScenarioKind::FlatDisk => {}
            ScenarioKind::SphereCap { radius } => {
                out.insert("R".into(), radius);
            }
            ScenarioKind::PerturbedDisk { amplitude, width } => {
                out.insert("amplitude".into(), amplitude);
                out.insert("width".into(), width);
            }
            ScenarioKind::PerturbedCap { radius, tilt } => {
                out.insert("R".into(), radius);
                out.insert("tilt".into(), tilt);
            }
            ScenarioKind::FlatAnnulus { inner } => {
                out.insert("r_in".into(), inner);
            }
        }
        out
    }

    pub fn dim(&self) -> usize {
        2
    }

    /// Conformal factor `c` (with `g = c I`) and its chart gradient.
    pub fn conformal(&self, x: &Point) -> (f64, Vector2<f64>) {
        let r2 = x.norm_squared();
        match self.kind {
            ScenarioKind::FlatDisk | ScenarioKind::FlatAnnulus { .. } => (1.0, Vector2::zeros()),
            ScenarioKind::SphereCap { .. } => sphere_factor(x, r2),
            ScenarioKind::PerturbedDisk { amplitude, width } => {
                let bump = amplitude * (-r2 / width).exp();
                let c = (2.0 * bump).exp();
                // d/dx exp(2 bump) = c * 2 * bump * (-2 x / width)
                (c, x * (-4.0 * bump * c / width))
            }
            ScenarioKind::PerturbedCap { tilt, .. } => {
                let (s, ds) = sphere_factor(x, r2);
                let m = 1.0 + tilt * x[0];
                (s * m, ds * m + Vector2::new(s * tilt, 0.0))
            }
        }
    }

    pub fn metric(&self, x: &Point) -> Matrix2<f64> {
        Matrix2::identity() * self.conformal(x).0
    }

    /// Closed-form `d_k g_ij` for `k = 0, 1`, or `None` when central
    /// differences are requested.
    pub fn metric_derivs(&self, x: &Point) -> Option<[Matrix2<f64>; 2]> {
        if self.fd_derivatives {
            return None;
        }
        let (_, grad) = self.conformal(x);
        Some([
            Matrix2::identity() * grad[0],
            Matrix2::identity() * grad[1],
        ])
    }

    fn metric_derivs_fd(&self, x: &Point) -> [Matrix2<f64>; 2] {
        let mut out = [Matrix2::zeros(); 2];
        for (k, slot) in out.iter_mut().enumerate() {
            let mut e = Vector2::zeros();
            e[k] = FD_STEP;
            *slot = (self.metric(&(x + e)) - self.metric(&(x - e))) / (2.0 * FD_STEP);
        }
        out
    }

    /// Christoffel symbols from the standard formula
    /// `G^k_ij = 1/2 g^kl (d_i g_jl + d_j g_il - d_l g_ij)`, without any
    /// domain checks. The metric is defined on the whole chart, which plays
    /// the role of the extension past the boundary.
    pub fn christoffel(&self, x: &Point) -> [Matrix2<f64>; 2] {
        let g = self.metric(x);
        let dg = self
            .metric_derivs(x)
            .unwrap_or_else(|| self.metric_derivs_fd(x));
        let ginv = g.try_inverse().unwrap_or_else(Matrix2::zeros);
        let mut gamma = [Matrix2::zeros(); 2];
        for (k, gk) in gamma.iter_mut().enumerate() {
            for i in 0..2 {
                for j in 0..2 {
                    let mut acc = 0.0;
                    for l in 0..2 {
                        acc += ginv[(k, l)] * (dg[i][(j, l)] + dg[j][(i, l)] - dg[l][(i, j)]);
                    }
                    gk[(i, j)] = 0.5 * acc;
                }
            }
        }
        gamma
    }

    /// Checked metric evaluation: `g` and Christoffel symbols at `x`.
    pub fn metric_pack(&self, x: &Point) -> Result<MetricPack, ManifoldError> {
        if !self.in_chart(x) {
            return Err(ManifoldError::OutOfChart { x: x[0], y: x[1] });
        }
        if self.boundary_fn(x) < -EPS_BOUNDARY {
            return Err(ManifoldError::OutsideManifold { x: x[0], y: x[1] });
        }
        let g = self.metric(x);
        let min_eig = g.symmetric_eigenvalues().min();
        if !(min_eig > 0.0) {
            return Err(ManifoldError::NonSpd {
                x: x[0],
                y: x[1],
                min_eigenvalue: min_eig,
            });
        }
        Ok(MetricPack {
            g,
            gamma: self.christoffel(x),
        })
    }

    pub fn inner(&self, x: &Point, a: &Tangent, b: &Tangent) -> f64 {
        (a.transpose() * self.metric(x) * b)[(0, 0)]
    }

    pub fn norm(&self, x: &Point, a: &Tangent) -> f64 {
        self.inner(x, a, a).max(0.0).sqrt()
    }

    /// Boundary defining function: positive inside, zero on the boundary.
    pub fn boundary_fn(&self, x: &Point) -> f64 {
        let r2 = x.norm_squared();
        match self.kind {
            ScenarioKind::FlatDisk | ScenarioKind::PerturbedDisk { .. } => 1.0 - r2,
            ScenarioKind::SphereCap { radius } | ScenarioKind::PerturbedCap { radius, .. } => {
                radius * radius - r2
            }
            ScenarioKind::FlatAnnulus { inner } => (r2 - inner * inner) * (1.0 - r2),
        }
    }

    pub fn boundary_grad(&self, x: &Point) -> Vector2<f64> {
        let r2 = x.norm_squared();
        match self.kind {
            ScenarioKind::FlatAnnulus { inner } => {
                // d/dx [(r2 - a)(1 - r2)] = 2x (1 - r2) - 2x (r2 - a)
                x * (2.0 * (1.0 - r2) - 2.0 * (r2 - inner * inner))
            }
            _ => -2.0 * x,
        }
    }

    /// Connected boundary components as half-open parameter ranges,
    /// each traversed once.
    pub fn boundary_components(&self) -> Vec<(f64, f64)> {
        match self.kind {
            ScenarioKind::FlatAnnulus { .. } => vec![(0.0, 2.0 * PI), (2.0 * PI, 4.0 * PI)],
            _ => vec![(0.0, 2.0 * PI)],
        }
    }

    /// Total boundary parameter length `U`.
    pub fn boundary_period(&self) -> f64 {
        self.boundary_components().iter().map(|(a, b)| b - a).sum()
    }

    fn component_of(&self, u: f64) -> (f64, f64, f64) {
        let u = u.rem_euclid(self.boundary_period());
        match self.kind {
            ScenarioKind::FlatAnnulus { inner } => {
                if u < 2.0 * PI {
                    (u, 1.0, 0.0)
                } else {
                    (u - 2.0 * PI, inner, 2.0 * PI)
                }
            }
            ScenarioKind::SphereCap { radius } | ScenarioKind::PerturbedCap { radius, .. } => {
                (u, radius, 0.0)
            }
            _ => (u, 1.0, 0.0),
        }
    }

    /// Point on `{psi = 0}` at boundary parameter `u` (an angle on each circle).
    pub fn boundary_param(&self, u: f64) -> Point {
        let (phi, rho, _) = self.component_of(u);
        Point::new(rho * phi.cos(), rho * phi.sin())
    }

    /// Chart derivative of `boundary_param` with respect to `u`.
    pub fn boundary_param_deriv(&self, u: f64) -> Tangent {
        let (phi, rho, _) = self.component_of(u);
        Tangent::new(-rho * phi.sin(), rho * phi.cos())
    }

    /// Inverse of `boundary_param` for a point on (or near) the boundary.
    pub fn boundary_coord(&self, x: &Point) -> f64 {
        let phi = x[1].atan2(x[0]).rem_euclid(2.0 * PI);
        match self.kind {
            ScenarioKind::FlatAnnulus { inner } => {
                let r = x.norm();
                if (r - inner).abs() < (1.0 - r).abs() {
                    2.0 * PI + phi
                } else {
                    phi
                }
            }
            _ => phi,
        }
    }

    /// Half-width of the chart bounding box `[-b, b]^2`.
    pub fn chart_bound(&self) -> f64 {
        match self.kind {
            ScenarioKind::SphereCap { radius } | ScenarioKind::PerturbedCap { radius, .. } => {
                1.5 * radius
            }
            _ => 1.5,
        }
    }

    pub fn in_chart(&self, x: &Point) -> bool {
        let b = self.chart_bound();
        x.iter().all(|c| c.is_finite() && c.abs() <= b)
    }

    /// Boundary point and g-unit inward normal at parameter `u`.
    pub fn boundary_geometry(&self, u: f64) -> Result<(Point, Tangent), ManifoldError> {
        let x = self.boundary_param(u);
        let dpsi = self.boundary_grad(&x);
        if dpsi.norm() < 1e-9 {
            return Err(ManifoldError::DegenerateBoundary { u });
        }
        let ginv = self.metric(&x).try_inverse().ok_or(ManifoldError::NonSpd {
            x: x[0],
            y: x[1],
            min_eigenvalue: 0.0,
        })?;
        // g-gradient of psi, normalized in the metric.
        let grad = ginv * dpsi;
        let nu = grad / self.norm(&x, &grad);
        Ok((x, nu))
    }

    /// g-orthonormal frame (inward normal, boundary tangent) at `u`; the
    /// tangent points towards increasing `u`.
    pub fn boundary_frame(&self, u: f64) -> Result<(Point, Tangent, Tangent), ManifoldError> {
        let (x, nu) = self.boundary_geometry(u)?;
        let d = self.boundary_param_deriv(u);
        // remove any normal component, then normalize
        let d = d - nu * self.inner(&x, &d, &nu);
        let tangent = d / self.norm(&x, &d);
        Ok((x, nu, tangent))
    }

    /// Sampled check of the scenario invariants: SPD metric on a grid of
    /// interior points, boundary parameterization on the level set, and a
    /// nonvanishing boundary gradient.
    pub fn validate(&self) -> Result<(), ManifoldError> {
        let b = self.chart_bound();
        let n = 41;
        for i in 0..n {
            for j in 0..n {
                let x = Point::new(
                    -b + 2.0 * b * i as f64 / (n - 1) as f64,
                    -b + 2.0 * b * j as f64 / (n - 1) as f64,
                );
                if self.boundary_fn(&x) < 0.0 {
                    continue;
                }
                let g = self.metric(&x);
                let min_eig = g.symmetric_eigenvalues().min();
                if !(min_eig > 0.0) || (g - g.transpose()).norm() > 0.0 {
                    return Err(ManifoldError::NonSpd {
                        x: x[0],
                        y: x[1],
                        min_eigenvalue: min_eig,
                    });
                }
            }
        }
        let period = self.boundary_period();
        for k in 0..256 {
            let u = period * k as f64 / 256.0;
            let x = self.boundary_param(u);
            if self.boundary_fn(&x).abs() > 1e-9 {
                return Err(ManifoldError::BoundaryParamOffLevelSet {
                    u,
                    psi: self.boundary_fn(&x),
                });
            }
            self.boundary_geometry(u)?;
        }
        Ok(())
    }
}

fn sphere_factor(x: &Point, r2: f64) -> (f64, Vector2<f64>) {
    let q = 1.0 + r2;
    let c = 4.0 / (q * q);
    // d/dx 4 q^-2 = -8 q^-3 * 2x
    (c, x * (-16.0 / (q * q * q)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn fd_christoffel(s: &ManifoldScenario, x: &Point) -> [Matrix2<f64>; 2] {
        s.clone().with_fd_derivatives().christoffel(x)
    }

    #[test]
    fn flat_disk_pack_is_trivial() {
        let s = ManifoldScenario::flat_disk();
        let pack = s.metric_pack(&Point::new(0.3, -0.2)).unwrap();
        assert_eq!(pack.g, Matrix2::identity());
        assert_eq!(pack.gamma[0], Matrix2::zeros());
        assert_eq!(pack.gamma[1], Matrix2::zeros());
    }

    #[test]
    fn sphere_chart_origin() {
        let s = ManifoldScenario::sphere_cap(1.0);
        let pack = s.metric_pack(&Point::zeros()).unwrap();
        assert_abs_diff_eq!(pack.g, Matrix2::identity() * 4.0, epsilon = 1e-15);
        for k in 0..2 {
            assert_abs_diff_eq!(pack.gamma[k], Matrix2::zeros(), epsilon = 1e-15);
        }
    }

    /// Christoffels of a conformal metric `e^{2 phi} delta` are
    /// `G^k_ij = d_i phi delta_jk + d_j phi delta_ik - d_k phi delta_ij`;
    /// here `phi` is differentiated numerically from the conformal factor.
    #[test]
    fn sphere_christoffel_matches_conformal_fd() {
        let s = ManifoldScenario::sphere_cap(2.5);
        let x = Point::new(0.5, 0.0);
        let phi = |p: Point| 0.5 * (4.0 / (1.0 + p.norm_squared()).powi(2)).ln();
        let h = 1e-5;
        let dphi = [
            (phi(x + Vector2::new(h, 0.0)) - phi(x - Vector2::new(h, 0.0))) / (2.0 * h),
            (phi(x + Vector2::new(0.0, h)) - phi(x - Vector2::new(0.0, h))) / (2.0 * h),
        ];
        let gamma = s.metric_pack(&x).unwrap().gamma;
        let delta = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
        for k in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    let expect =
                        dphi[i] * delta(j, k) + dphi[j] * delta(i, k) - dphi[k] * delta(i, j);
                    assert!((gamma[k][(i, j)] - expect).abs() <= 1e-6);
                }
            }
        }
    }

    #[test]
    fn closed_form_christoffels_match_central_differences() {
        let scenarios = [
            ManifoldScenario::sphere_cap(2.5),
            ManifoldScenario::perturbed_disk(),
            ManifoldScenario::perturbed_cap(2.5, 0.05),
        ];
        for s in &scenarios {
            for &(a, b) in &[(0.1, 0.2), (-0.7, 0.3), (0.0, -0.9), (0.45, 0.45)] {
                let x = Point::new(a, b);
                let exact = s.christoffel(&x);
                let fd = fd_christoffel(s, &x);
                for k in 0..2 {
                    assert!(
                        (exact[k] - fd[k]).abs().max() < 1e-5,
                        "{} at {:?}",
                        s.name,
                        x
                    );
                    assert_abs_diff_eq!(exact[k], exact[k].transpose(), epsilon = 1e-15);
                }
            }
        }
    }

    #[test]
    fn disk_boundary_normals() {
        let s = ManifoldScenario::flat_disk();
        let (x, nu) = s.boundary_geometry(0.0).unwrap();
        assert_abs_diff_eq!(x, Point::new(1.0, 0.0), epsilon = 1e-15);
        assert_abs_diff_eq!(nu, Tangent::new(-1.0, 0.0), epsilon = 1e-15);
        let (x, nu) = s.boundary_geometry(PI / 2.0).unwrap();
        assert_abs_diff_eq!(x, Point::new(0.0, 1.0), epsilon = 1e-15);
        assert_abs_diff_eq!(nu, Tangent::new(0.0, -1.0), epsilon = 1e-15);
    }

    #[test]
    fn hemisphere_normal_is_g_unit() {
        let s = ManifoldScenario::sphere_cap(1.0);
        let (x, nu) = s.boundary_geometry(0.0).unwrap();
        assert_abs_diff_eq!(x, Point::new(1.0, 0.0), epsilon = 1e-15);
        // conformal factor at |x| = 1 is 1, so Euclidean length (1 + R^2)/2 = 1
        assert_abs_diff_eq!(nu.norm(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.norm(&x, &nu), 1.0, epsilon = 1e-10);
        assert!(nu[0] < 0.0);
    }

    #[test]
    fn cap_normal_scaled_by_conformal_factor() {
        let s = ManifoldScenario::sphere_cap(2.5);
        let (x, nu) = s.boundary_geometry(1.0).unwrap();
        assert_abs_diff_eq!(s.norm(&x, &nu), 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(nu.norm(), (1.0 + 6.25) / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn normals_point_inward_everywhere() {
        for s in [
            ManifoldScenario::flat_disk(),
            ManifoldScenario::sphere_cap(2.5),
            ManifoldScenario::perturbed_disk(),
            ManifoldScenario::flat_annulus(0.5),
        ] {
            s.validate().unwrap();
            let period = s.boundary_period();
            for k in 0..97 {
                let u = period * k as f64 / 97.0;
                let (x, nu) = s.boundary_geometry(u).unwrap();
                assert!(s.boundary_fn(&x).abs() <= 1e-9);
                assert!(nu.dot(&s.boundary_grad(&x)) > 0.0);
                assert!(s.boundary_fn(&(x + nu * 1e-4)) > 0.0);
                assert_abs_diff_eq!(s.norm(&x, &nu), 1.0, epsilon = 1e-10);
                let u_back = s.boundary_coord(&x);
                assert_abs_diff_eq!(s.boundary_param(u_back), x, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn checked_pack_rejects_bad_points() {
        let s = ManifoldScenario::flat_disk();
        assert!(matches!(
            s.metric_pack(&Point::new(5.0, 0.0)),
            Err(ManifoldError::OutOfChart { .. })
        ));
        assert!(matches!(
            s.metric_pack(&Point::new(1.1, 0.0)),
            Err(ManifoldError::OutsideManifold { .. })
        ));
        assert!(s.metric_pack(&Point::new(1.0 + 1e-7, 0.0)).is_ok());
    }

    #[test]
    fn scenario_registry() {
        let mut p = BTreeMap::new();
        p.insert("R".to_string(), 2.5);
        let s = ManifoldScenario::from_name("sphere_cap", &p).unwrap();
        assert_eq!(s.kind, ScenarioKind::SphereCap { radius: 2.5 });
        p.insert("bogus".to_string(), 1.0);
        assert!(ManifoldScenario::from_name("sphere_cap", &p).is_err());
        assert!(ManifoldScenario::from_name("torus", &BTreeMap::new()).is_err());
        let a = ManifoldScenario::from_name("flat_annulus", &BTreeMap::new()).unwrap();
        assert_eq!(a.kind, ScenarioKind::FlatAnnulus { inner: 0.5 });
    }
}
