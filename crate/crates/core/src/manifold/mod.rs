//! Manifold scenarios: a single chart, a conformal metric on it and a
//! boundary given as the zero set of a defining function.
//!
//! Also hosts the collar utilities (normal map injectivity estimate and
//! the interior-push flow).

mod collar;
mod scenario;

use nalgebra::Vector2;
use serde::Serialize;

pub use collar::{collar_radius_estimate, cutoff, CollarFlow, CollarEstimate};
pub use scenario::{
    BuiltinInfo, ManifoldScenario, MetricPack, ScenarioKind, BUILTINS, EPS_BOUNDARY, FD_STEP,
};

/// A point in chart coordinates.
pub type Point = Vector2<f64>;
/// A tangent vector in chart components.
pub type Tangent = Vector2<f64>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ManifoldError {
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("scenario `{scenario}` has no parameter `{param}`")]
    UnknownParameter { scenario: String, param: String },
    #[error("invalid scenario parameter: {0}")]
    InvalidParameter(String),
    #[error("metric not positive definite at ({x}, {y}): min eigenvalue {min_eigenvalue}")]
    NonSpd { x: f64, y: f64, min_eigenvalue: f64 },
    #[error("point ({x}, {y}) outside the chart bounding box")]
    OutOfChart { x: f64, y: f64 },
    #[error("point ({x}, {y}) lies outside the manifold")]
    OutsideManifold { x: f64, y: f64 },
    #[error("boundary gradient vanishes at u = {u}")]
    DegenerateBoundary { u: f64 },
    #[error("boundary parameterization leaves the level set at u = {u} (psi = {psi})")]
    BoundaryParamOffLevelSet { u: f64, psi: f64 },
    #[error("angle {theta} is not in the closed inward half-plane [-pi/2, pi/2]")]
    NotInward { theta: f64 },
    #[error("no collar radius found: normal map fails already at r = {r}")]
    NoCollar { r: f64 },
    #[error("collar radius {requested} exceeds the estimated collar radius {estimate}")]
    InvalidCollar { requested: f64, estimate: f64 },
    #[error("could not locate boundary normal coordinates of ({x}, {y})")]
    NormalCoordinates { x: f64, y: f64 },
    #[error(transparent)]
    Geodesic(#[from] Box<crate::geodesic::GeodesicError>),
}

/// An element of the inward boundary sphere bundle, indexed within a fan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryVector {
    pub id: u32,
    /// Boundary parameter of the base point.
    pub u: f64,
    /// Angle from the inward normal, positive towards increasing `u`.
    pub theta: f64,
    pub base_point: Point,
    /// Chart components of the g-unit direction.
    pub direction: Tangent,
}

impl BoundaryVector {
    pub fn new(
        scenario: &ManifoldScenario,
        id: u32,
        u: f64,
        theta: f64,
    ) -> Result<Self, ManifoldError> {
        if !(theta.abs() <= std::f64::consts::FRAC_PI_2) {
            return Err(ManifoldError::NotInward { theta });
        }
        let u = u.rem_euclid(scenario.boundary_period());
        let (base_point, nu, tangent) = scenario.boundary_frame(u)?;
        let direction = nu * theta.cos() + tangent * theta.sin();
        Ok(Self {
            id,
            u,
            theta,
            base_point,
            direction,
        })
    }

    /// True when the vector is tangent to the boundary (zero-length geodesic).
    pub fn is_tangent(&self) -> bool {
        self.theta.abs() >= std::f64::consts::FRAC_PI_2 - 1e-12
    }
}

/// Boundary coordinates `(u, theta)` of an inward vector `w` based at the
/// boundary point `x`, with `theta` measured from the inward normal.
pub fn inward_coordinates(
    scenario: &ManifoldScenario,
    x: &Point,
    w: &Tangent,
) -> Result<(f64, f64), ManifoldError> {
    let u = scenario.boundary_coord(x);
    let (base, nu, tangent) = scenario.boundary_frame(u)?;
    let c = scenario.inner(&base, w, &nu);
    let s = scenario.inner(&base, w, &tangent);
    Ok((u, s.atan2(c)))
}
