//! Unit-speed geodesics fired from the boundary.
//!
//! Integration is fixed-step classical RK4 in `(x, v)` phase space with the
//! velocity renormalized to unit metric norm after every step. The first
//! boundary crossing is located by bisection on the defining function.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::FRAC_PI_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::manifold::{
    inward_coordinates, BoundaryVector, ManifoldError, ManifoldScenario, Point, Tangent,
};

/// Angular guard keeping fan directions away from the boundary tangent.
pub const ANGLE_GUARD: f64 = 0.05;
/// Maximum metric-norm drift of the velocity tolerated over a single step.
pub const MAX_STEP_DRIFT: f64 = 1e-6;
/// Bisection target for the exit location.
pub const EXIT_PSI_TOL: f64 = 1e-10;
/// Two boundary vectors closer than this in `(u, theta)` are the same vector.
pub const FAN_DEDUP_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeodesicError {
    #[error("step {0} outside (0, 1e-2]")]
    InvalidStep(f64),
    #[error("length cutoff {0} must be positive")]
    InvalidLength(f64),
    #[error("integration left the chart at t = {t}")]
    IntegrationBlowup { t: f64 },
    #[error("velocity norm drifted by {drift:e} in one step at t = {t}; reduce the step")]
    StepTooLarge { t: f64, drift: f64 },
    #[error(transparent)]
    Manifold(#[from] ManifoldError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    /// Arc-length parameter.
    pub t: f64,
    pub x: Point,
    /// g-unit tangent, equal to `dx/dt`.
    pub v: Tangent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExitEvent {
    Boundary { tau: f64, vector: Tangent },
    /// No exit before the length cutoff.
    Trapped,
}

/// A discretized geodesic with its parameter interval `[0, tau]` (or
/// `[0, L_max]` when trapped).
#[derive(Debug, Clone)]
pub struct GeodesicTrace {
    pub source: BoundaryVector,
    pub samples: Vec<Sample>,
    pub exit: ExitEvent,
    pub step: f64,
}

impl GeodesicTrace {
    pub fn id(&self) -> u32 {
        self.source.id
    }

    pub fn tau(&self) -> Option<f64> {
        match self.exit {
            ExitEvent::Boundary { tau, .. } => Some(tau),
            ExitEvent::Trapped => None,
        }
    }

    pub fn exit_vector(&self) -> Option<Tangent> {
        match self.exit {
            ExitEvent::Boundary { vector, .. } => Some(vector),
            ExitEvent::Trapped => None,
        }
    }

    /// Last parameter value covered by the samples.
    pub fn param_end(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.t)
    }

    pub fn end_point(&self) -> Point {
        self.samples.last().map_or(self.source.base_point, |s| s.x)
    }

    /// Index `k` of the segment `[t_k, t_{k+1}]` containing `s` (clamped).
    pub fn segment_of(&self, s: f64) -> usize {
        let n = self.samples.len();
        if n < 2 {
            return 0;
        }
        let k = (s / self.step).floor();
        let k = if k.is_finite() && k > 0.0 {
            k as usize
        } else {
            0
        };
        k.min(n - 2)
    }

    /// Cubic Hermite interpolation of position and velocity at parameter `s`.
    /// Values outside the sampled range extrapolate the end segments.
    pub fn eval(&self, s: f64) -> (Point, Tangent) {
        if self.samples.len() < 2 {
            return (self.source.base_point, self.source.direction);
        }
        let k = self.segment_of(s);
        hermite(&self.samples[k], &self.samples[k + 1], s)
    }

    pub fn position(&self, s: f64) -> Point {
        self.eval(s).0
    }
}

fn hermite(a: &Sample, b: &Sample, s: f64) -> (Point, Tangent) {
    let dt = b.t - a.t;
    if dt <= 0.0 {
        return (a.x, a.v);
    }
    let u = (s - a.t) / dt;
    let u2 = u * u;
    let u3 = u2 * u;
    let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
    let h10 = u3 - 2.0 * u2 + u;
    let h01 = -2.0 * u3 + 3.0 * u2;
    let h11 = u3 - u2;
    let x = a.x * h00 + a.v * (h10 * dt) + b.x * h01 + b.v * (h11 * dt);
    let d00 = (6.0 * u2 - 6.0 * u) / dt;
    let d10 = 3.0 * u2 - 4.0 * u + 1.0;
    let d01 = (-6.0 * u2 + 6.0 * u) / dt;
    let d11 = 3.0 * u2 - 2.0 * u;
    let v = a.x * d00 + a.v * d10 + b.x * d01 + b.v * d11;
    (x, v)
}

type State = (Point, Tangent);

fn rhs(scenario: &ManifoldScenario, x: &Point, v: &Tangent) -> State {
    let gamma = scenario.christoffel(x);
    let acc = Tangent::new(
        -(v.transpose() * gamma[0] * v)[(0, 0)],
        -(v.transpose() * gamma[1] * v)[(0, 0)],
    );
    (*v, acc)
}

fn rk4(scenario: &ManifoldScenario, (x, v): &State, h: f64) -> State {
    let (k1x, k1v) = rhs(scenario, x, v);
    let (k2x, k2v) = rhs(scenario, &(x + k1x * (h / 2.0)), &(v + k1v * (h / 2.0)));
    let (k3x, k3v) = rhs(scenario, &(x + k2x * (h / 2.0)), &(v + k2v * (h / 2.0)));
    let (k4x, k4v) = rhs(scenario, &(x + k3x * h), &(v + k3v * h));
    (
        x + (k1x + k2x * 2.0 + k3x * 2.0 + k4x) * (h / 6.0),
        v + (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (h / 6.0),
    )
}

/// One renormalized step; returns the new state and the pre-renormalization drift.
fn step(scenario: &ManifoldScenario, state: &State, h: f64) -> (State, f64) {
    let (x, v) = rk4(scenario, state, h);
    let n = scenario.norm(&x, &v);
    ((x, v / n), (n - 1.0).abs())
}

/// Raw integration result from an arbitrary start.
#[derive(Debug, Clone)]
pub struct Integration {
    pub samples: Vec<Sample>,
    pub exit: ExitEvent,
}

/// Integrate the unit-speed geodesic from `(x0, v0)` until it leaves
/// `{psi >= 0}` or reaches arc length `l_max`.
pub fn integrate(
    scenario: &ManifoldScenario,
    x0: Point,
    v0: Tangent,
    h: f64,
    l_max: f64,
) -> Result<Integration, GeodesicError> {
    if !(h > 0.0 && h <= 1e-2) {
        return Err(GeodesicError::InvalidStep(h));
    }
    if !(l_max > 0.0) {
        return Err(GeodesicError::InvalidLength(l_max));
    }
    let v0 = v0 / scenario.norm(&x0, &v0);
    let mut samples = Vec::with_capacity((l_max.min(8.0) / h) as usize + 2);
    samples.push(Sample {
        t: 0.0,
        x: x0,
        v: v0,
    });
    let mut state = (x0, v0);
    let mut k: u64 = 0;
    loop {
        let t = k as f64 * h;
        let dt = h.min(l_max - t);
        if dt <= 1e-15 {
            return Ok(Integration {
                samples,
                exit: ExitEvent::Trapped,
            });
        }
        let (next, drift) = step(scenario, &state, dt);
        if !scenario.in_chart(&next.0) {
            return Err(GeodesicError::IntegrationBlowup { t: t + dt });
        }
        if drift > MAX_STEP_DRIFT {
            return Err(GeodesicError::StepTooLarge { t, drift });
        }
        if scenario.boundary_fn(&next.0) < 0.0 {
            let (delta, exit_state) = locate_exit(scenario, &state, dt);
            let tau = t + delta;
            if delta > 0.0 {
                samples.push(Sample {
                    t: tau,
                    x: exit_state.0,
                    v: exit_state.1,
                });
            }
            return Ok(Integration {
                samples,
                exit: ExitEvent::Boundary {
                    tau,
                    vector: exit_state.1,
                },
            });
        }
        k += 1;
        let t_next = if dt < h { t + dt } else { k as f64 * h };
        samples.push(Sample {
            t: t_next,
            x: next.0,
            v: next.1,
        });
        state = next;
        if dt < h {
            return Ok(Integration {
                samples,
                exit: ExitEvent::Trapped,
            });
        }
    }
}

fn locate_exit(scenario: &ManifoldScenario, state: &State, dt: f64) -> (f64, State) {
    let mut lo = 0.0;
    let mut hi = dt;
    let mut best = (hi, step(scenario, state, hi).0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let (s, _) = step(scenario, state, mid);
        let psi = scenario.boundary_fn(&s.0);
        best = (mid, s);
        if psi.abs() <= EXIT_PSI_TOL || hi - lo < 1e-16 {
            break;
        }
        if psi > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    best
}

/// Fire the geodesic of a boundary vector.
pub fn shoot(
    scenario: &ManifoldScenario,
    v: &BoundaryVector,
    h: f64,
    l_max: f64,
) -> Result<GeodesicTrace, GeodesicError> {
    if !(h > 0.0 && h <= 1e-2) {
        return Err(GeodesicError::InvalidStep(h));
    }
    if v.is_tangent() {
        // immediate exit: tau = 0 and the scattering relation fixes v
        return Ok(GeodesicTrace {
            source: v.clone(),
            samples: vec![Sample {
                t: 0.0,
                x: v.base_point,
                v: v.direction,
            }],
            exit: ExitEvent::Boundary {
                tau: 0.0,
                vector: v.direction,
            },
            step: h,
        });
    }
    let run = integrate(scenario, v.base_point, v.direction, h, l_max)?;
    Ok(GeodesicTrace {
        source: v.clone(),
        samples: run.samples,
        exit: run.exit,
        step: h,
    })
}

/// Shoot every vector of a fan; output order follows the input.
pub fn shoot_all(
    scenario: &ManifoldScenario,
    fan: &[BoundaryVector],
    h: f64,
    l_max: f64,
) -> Result<Vec<GeodesicTrace>, GeodesicError> {
    fan.par_iter()
        .map(|v| shoot(scenario, v, h, l_max))
        .collect()
}

/// `n_u` equispaced base points times `n_theta` equispaced angles in the
/// guarded open interval `(-pi/2 + guard, pi/2 - guard)`. Ids follow
/// `(u index, theta index)` order. A seed adds a deterministic jitter of at
/// most a quarter spacing to every coordinate.
pub fn sample_fan(
    scenario: &ManifoldScenario,
    n_u: usize,
    n_theta: usize,
    jitter_seed: Option<u64>,
) -> Result<Vec<BoundaryVector>, ManifoldError> {
    let period = scenario.boundary_period();
    let half = FRAC_PI_2 - ANGLE_GUARD;
    let du = period / n_u as f64;
    let dtheta = 2.0 * half / n_theta as f64;
    let mut rng = jitter_seed.map(ChaCha8Rng::seed_from_u64);
    let mut fan = Vec::with_capacity(n_u * n_theta);
    for i in 0..n_u {
        for j in 0..n_theta {
            let mut u = du * i as f64;
            let mut theta = -half + dtheta * (j as f64 + 0.5);
            if let Some(rng) = rng.as_mut() {
                u += du * rng.gen_range(-0.25..0.25);
                theta += dtheta * rng.gen_range(-0.25..0.25);
            }
            fan.push(BoundaryVector::new(scenario, fan.len() as u32, u, theta)?);
        }
    }
    Ok(fan)
}

/// Boundary coordinates `(u, theta)` of the reversed exit vector `-Sigma(v)`.
pub fn reversed_exit(
    scenario: &ManifoldScenario,
    trace: &GeodesicTrace,
) -> Result<Option<(f64, f64)>, ManifoldError> {
    match trace.exit {
        ExitEvent::Boundary { tau, vector } if tau > 0.0 => {
            inward_coordinates(scenario, &trace.end_point(), &(-vector)).map(Some)
        }
        _ => Ok(None),
    }
}

struct FanIndex {
    period: f64,
    buckets: HashMap<i64, Vec<(f64, f64)>>,
    nbins: i64,
}

impl FanIndex {
    fn new(period: f64) -> Self {
        let nbins = (period / 1e-5).ceil() as i64;
        Self {
            period,
            buckets: HashMap::new(),
            nbins,
        }
    }

    fn bin(&self, u: f64) -> i64 {
        ((u.rem_euclid(self.period) / self.period) * self.nbins as f64).floor() as i64
    }

    fn insert(&mut self, u: f64, theta: f64) {
        let b = self.bin(u);
        self.buckets.entry(b).or_default().push((u, theta));
    }

    fn contains(&self, u: f64, theta: f64) -> bool {
        let b = self.bin(u);
        (b - 1..=b + 1).any(|k| {
            self.buckets
                .get(&k.rem_euclid(self.nbins))
                .is_some_and(|list| {
                    list.iter().any(|&(u2, t2)| {
                        let d = (u - u2).rem_euclid(self.period);
                        d.min(self.period - d) <= FAN_DEDUP_TOL
                            && (theta - t2).abs() <= FAN_DEDUP_TOL
                    })
                })
        })
    }
}

/// Append the reversed exit vector of every trace that is not already in
/// the fan, and shoot the new vectors. Returns the extended fan and traces.
pub fn augment_exits(
    scenario: &ManifoldScenario,
    mut fan: Vec<BoundaryVector>,
    mut traces: Vec<GeodesicTrace>,
    h: f64,
    l_max: f64,
) -> Result<(Vec<BoundaryVector>, Vec<GeodesicTrace>), GeodesicError> {
    let mut index = FanIndex::new(scenario.boundary_period());
    for v in &fan {
        index.insert(v.u, v.theta);
    }
    let mut added = Vec::new();
    for trace in &traces {
        if let Some((u, theta)) = reversed_exit(scenario, trace)? {
            if !index.contains(u, theta) {
                index.insert(u, theta);
                let v = BoundaryVector::new(scenario, (fan.len() + added.len()) as u32, u, theta)?;
                added.push(v);
            }
        }
    }
    let new_traces = shoot_all(scenario, &added, h, l_max)?;
    fan.extend(added);
    traces.extend(new_traces);
    Ok((fan, traces))
}

/// Exit time of a lens entry; `Trapped` stands for an infinite exit time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExitTime {
    Finite(f64),
    Trapped,
}

impl ExitTime {
    pub fn finite(self) -> Option<f64> {
        match self {
            ExitTime::Finite(t) => Some(t),
            ExitTime::Trapped => None,
        }
    }
}

impl Serialize for ExitTime {
    fn serialize<S: Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        match self {
            ExitTime::Finite(t) => ser.serialize_f64(*t),
            ExitTime::Trapped => ser.serialize_str("trapped"),
        }
    }
}

impl<'de> Deserialize<'de> for ExitTime {
    fn deserialize<D: Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(de)? {
            Repr::Num(t) => Ok(ExitTime::Finite(t)),
            Repr::Text(s) if s == "trapped" => Ok(ExitTime::Trapped),
            Repr::Text(s) => Err(serde::de::Error::custom(format!(
                "expected a number or \"trapped\", got {s:?}"
            ))),
        }
    }
}

/// One lens entry. `u_out`/`theta_out` describe the exit vector `Sigma(v)`:
/// `theta_out` is its angle from the outward normal, so that the reversed
/// vector `-Sigma(v)` has inward angle `-theta_out`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LensEntry {
    pub tau: ExitTime,
    pub u_out: Option<f64>,
    pub theta_out: Option<f64>,
}

impl LensEntry {
    pub fn trapped() -> Self {
        Self {
            tau: ExitTime::Trapped,
            u_out: None,
            theta_out: None,
        }
    }
}

/// Exit times and scattering relation keyed by boundary vector id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LensData {
    pub entries: BTreeMap<u32, LensEntry>,
}

impl LensData {
    pub fn get(&self, id: u32) -> Option<&LensEntry> {
        self.entries.get(&id)
    }
}

/// Ground-truth lens data read off the traces.
pub fn lens_forward(
    scenario: &ManifoldScenario,
    traces: &[GeodesicTrace],
) -> Result<LensData, ManifoldError> {
    let mut entries = BTreeMap::new();
    for trace in traces {
        let entry = match trace.exit {
            ExitEvent::Trapped => LensEntry::trapped(),
            ExitEvent::Boundary { tau: 0.0, .. } => LensEntry {
                tau: ExitTime::Finite(0.0),
                u_out: Some(trace.source.u),
                // Sigma(v) = v; a tangent vector has the same angle from
                // the outward normal as from the inward one
                theta_out: Some(trace.source.theta),
            },
            ExitEvent::Boundary { tau, .. } => {
                let (u, theta_rev) = reversed_exit(scenario, trace)?.expect("finite exit");
                LensEntry {
                    tau: ExitTime::Finite(tau),
                    u_out: Some(u),
                    theta_out: Some(-theta_rev),
                }
            }
        };
        entries.insert(trace.id(), entry);
    }
    Ok(LensData { entries })
}

/// Error in boundary coordinates between two scattering records; `u` is
/// compared on the circle of circumference `period`.
pub fn sigma_distance(period: f64, a: &LensEntry, b: &LensEntry) -> Option<f64> {
    let du = (a.u_out? - b.u_out?).rem_euclid(period);
    let du = du.min(period - du);
    let dt = (a.theta_out? - b.theta_out?).abs();
    Some(du.max(dt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{PI, SQRT_2};

    fn disk() -> ManifoldScenario {
        ManifoldScenario::flat_disk()
    }

    #[test]
    fn disk_diameter() {
        let s = disk();
        let v = BoundaryVector::new(&s, 0, 0.0, 0.0).unwrap();
        let tr = shoot(&s, &v, 1e-3, 20.0).unwrap();
        assert_abs_diff_eq!(tr.tau().unwrap(), 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(tr.end_point(), Point::new(-1.0, 0.0), epsilon = 1e-9);
        assert_abs_diff_eq!(tr.exit_vector().unwrap(), Tangent::new(-1.0, 0.0), epsilon = 1e-12);
        assert_eq!(tr.samples[0].t, 0.0);
        assert_eq!(tr.samples[0].x, v.base_point);
    }

    #[test]
    fn disk_chord() {
        let s = disk();
        let v = BoundaryVector::new(&s, 0, 0.0, PI / 4.0).unwrap();
        let tr = shoot(&s, &v, 1e-3, 20.0).unwrap();
        assert_abs_diff_eq!(tr.tau().unwrap(), SQRT_2, epsilon = 1e-9);
        assert_abs_diff_eq!(tr.end_point(), Point::new(0.0, 1.0), epsilon = 1e-9);
    }

    #[test]
    fn hemisphere_meridian() {
        let s = ManifoldScenario::sphere_cap(1.0);
        let v = BoundaryVector::new(&s, 0, 0.0, 0.0).unwrap();
        let tr = shoot(&s, &v, 1e-3, 20.0).unwrap();
        assert!((tr.tau().unwrap() - PI).abs() <= 1e-5);
    }

    #[test]
    fn trace_invariants() {
        let s = ManifoldScenario::sphere_cap(2.5);
        let v = BoundaryVector::new(&s, 3, 1.1, 0.4).unwrap();
        let h = 1e-3;
        let tr = shoot(&s, &v, h, 20.0).unwrap();
        let n = tr.samples.len();
        for (k, w) in tr.samples.windows(2).enumerate() {
            if k + 2 < n {
                assert_abs_diff_eq!(w[1].t - w[0].t, h, epsilon = 1e-12);
            } else {
                assert!(w[1].t - w[0].t <= h + 1e-15);
            }
        }
        for smp in &tr.samples {
            assert!((s.norm(&smp.x, &smp.v) - 1.0).abs() <= 1e-6);
        }
        assert!(s.boundary_fn(&tr.end_point()) <= 1e-8);
        // re-measure the polyline in the metric: matches the parameter to O(h^2)
        let mut len = 0.0;
        for w in tr.samples.windows(2) {
            let mid = (w[0].x + w[1].x) * 0.5;
            len += s.norm(&mid, &(w[1].x - w[0].x));
        }
        assert!((len - tr.param_end()).abs() < 1e-4, "{len} vs {}", tr.param_end());
    }

    #[test]
    fn trapped_when_cutoff_short() {
        let s = disk();
        let v = BoundaryVector::new(&s, 0, 0.0, 0.0).unwrap();
        let tr = shoot(&s, &v, 1e-3, 0.5).unwrap();
        assert_eq!(tr.exit, ExitEvent::Trapped);
        assert_abs_diff_eq!(tr.param_end(), 0.5, epsilon = 1e-12);
        let lens = lens_forward(&s, &[tr]).unwrap();
        assert_eq!(lens.entries[&0], LensEntry::trapped());
    }

    #[test]
    fn tangent_vector_exits_immediately() {
        let s = disk();
        let v = BoundaryVector::new(&s, 0, 0.5, FRAC_PI_2).unwrap();
        let tr = shoot(&s, &v, 1e-3, 20.0).unwrap();
        assert_eq!(tr.tau(), Some(0.0));
        let lens = lens_forward(&s, &[tr]).unwrap();
        assert_eq!(lens.entries[&0].tau, ExitTime::Finite(0.0));
        assert_eq!(lens.entries[&0].u_out, Some(0.5));
    }

    #[test]
    fn rejects_bad_steps() {
        let s = disk();
        let v = BoundaryVector::new(&s, 0, 0.0, 0.0).unwrap();
        assert!(matches!(
            shoot(&s, &v, 0.1, 20.0),
            Err(GeodesicError::InvalidStep(_))
        ));
        assert!(matches!(
            shoot(&s, &v, 1e-3, -1.0),
            Err(GeodesicError::InvalidLength(_))
        ));
    }

    #[test]
    fn fan_layout() {
        let s = disk();
        let fan = sample_fan(&s, 4, 1, None).unwrap();
        assert_eq!(fan.len(), 4);
        for (k, v) in fan.iter().enumerate() {
            assert_abs_diff_eq!(v.u, k as f64 * PI / 2.0, epsilon = 1e-15);
            assert_eq!(v.theta, 0.0);
        }
        let fan = sample_fan(&s, 2, 3, None).unwrap();
        assert_eq!(fan.len(), 6);
        for v in &fan {
            let (_, nu) = s.boundary_geometry(v.u).unwrap();
            assert!(s.inner(&v.base_point, &v.direction, &nu) > 0.0);
            assert!(v.theta.abs() < FRAC_PI_2 - ANGLE_GUARD);
        }
    }

    #[test]
    fn jitter_is_seeded() {
        let s = disk();
        let a = sample_fan(&s, 8, 4, Some(7)).unwrap();
        let b = sample_fan(&s, 8, 4, Some(7)).unwrap();
        let c = sample_fan(&s, 8, 4, None).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn augmenting_diameters_adds_nothing() {
        let s = disk();
        let fan = sample_fan(&s, 4, 1, None).unwrap();
        let traces = shoot_all(&s, &fan, 1e-3, 20.0).unwrap();
        let mut candidates = 0;
        for tr in &traces {
            let (u, theta) = reversed_exit(&s, tr).unwrap().unwrap();
            candidates += 1;
            assert!(fan.iter().any(|v| {
                let d = (v.u - u).rem_euclid(2.0 * PI);
                d.min(2.0 * PI - d) < 1e-9 && (v.theta - theta).abs() < 1e-9
            }));
        }
        assert_eq!(fan.len() + candidates, 8);
        let (fan, traces) = augment_exits(&s, fan, traces, 1e-3, 20.0).unwrap();
        assert_eq!(fan.len(), 4);
        assert_eq!(traces.len(), 4);
    }

    #[test]
    fn lens_of_disk_chords() {
        let s = disk();
        let fan = vec![
            BoundaryVector::new(&s, 0, 0.0, 0.0).unwrap(),
            BoundaryVector::new(&s, 1, 0.0, PI / 4.0).unwrap(),
        ];
        let traces = shoot_all(&s, &fan, 1e-3, 20.0).unwrap();
        let lens = lens_forward(&s, &traces).unwrap();
        let d = lens.entries[&0];
        assert_abs_diff_eq!(d.tau.finite().unwrap(), 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(d.u_out.unwrap(), PI, epsilon = 1e-9);
        assert_abs_diff_eq!(d.theta_out.unwrap(), 0.0, epsilon = 1e-9);
        let c = lens.entries[&1];
        assert_abs_diff_eq!(c.tau.finite().unwrap(), SQRT_2, epsilon = 1e-9);
        assert_abs_diff_eq!(c.u_out.unwrap(), PI / 2.0, epsilon = 1e-9);
    }

    #[test]
    fn cap_lens_self_converges() {
        let s = ManifoldScenario::sphere_cap(2.5);
        let v = BoundaryVector::new(&s, 0, 0.7, 0.3).unwrap();
        let a = lens_forward(&s, &[shoot(&s, &v, 1e-3, 20.0).unwrap()]).unwrap();
        let b = lens_forward(&s, &[shoot(&s, &v, 1e-4, 20.0).unwrap()]).unwrap();
        let (ea, eb) = (a.entries[&0], b.entries[&0]);
        assert!((ea.tau.finite().unwrap() - eb.tau.finite().unwrap()).abs() <= 1e-4);
        assert!(sigma_distance(2.0 * PI, &ea, &eb).unwrap() <= 1e-4);
    }

    #[test]
    fn reversal_returns_to_source() {
        for s in [
            ManifoldScenario::sphere_cap(2.5),
            ManifoldScenario::perturbed_disk(),
        ] {
            let v = BoundaryVector::new(&s, 0, 2.0, -0.6).unwrap();
            let tr = shoot(&s, &v, 1e-3, 20.0).unwrap();
            let (u, theta) = reversed_exit(&s, &tr).unwrap().unwrap();
            let back = BoundaryVector::new(&s, 1, u, theta).unwrap();
            let tr2 = shoot(&s, &back, 1e-3, 20.0).unwrap();
            assert!((tr2.end_point() - v.base_point).norm() <= 1e-5);
            let (u2, theta2) = reversed_exit(&s, &tr2).unwrap().unwrap();
            assert!((u2 - v.u).abs() <= 1e-5 && (theta2 - v.theta).abs() <= 1e-5);
        }
    }

    #[test]
    fn hermite_reproduces_samples() {
        let s = ManifoldScenario::sphere_cap(1.0);
        let v = BoundaryVector::new(&s, 0, 0.0, 0.2).unwrap();
        let tr = shoot(&s, &v, 1e-3, 20.0).unwrap();
        for smp in tr.samples.iter().step_by(97) {
            let (x, w) = tr.eval(smp.t);
            assert_abs_diff_eq!(x, smp.x, epsilon = 1e-13);
            assert_abs_diff_eq!(w, smp.v, epsilon = 1e-9);
        }
    }

    #[test]
    fn exit_time_json() {
        let mut lens = LensData::default();
        lens.entries.insert(
            0,
            LensEntry {
                tau: ExitTime::Finite(2.0),
                u_out: Some(PI),
                theta_out: Some(0.0),
            },
        );
        lens.entries.insert(1, LensEntry::trapped());
        let text = serde_json::to_string(&lens).unwrap();
        assert!(text.contains("\"tau\":\"trapped\""));
        assert!(text.contains("\"u_out\":null"));
        let back: LensData = serde_json::from_str(&text).unwrap();
        assert_eq!(back, lens);
    }
}
