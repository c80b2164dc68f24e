//! The validation report and its pass/fail thresholds.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::collision::HiddenIntersection;
use crate::inversion::{RecoveryStats, RelationScores};

use super::oracle::OracleMethod;

/// Acceptance thresholds applied by `validate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Thresholds {
    pub max_dtau: f64,
    pub max_dsigma: f64,
    pub min_precision: f64,
    pub min_recall: f64,
    pub max_median_rel_err: f64,
    /// Reported for every run; not part of the pass/fail verdict.
    pub max_rel_err: f64,
    /// Fraction of intersections confirmed by a third geodesic.
    pub min_confirmation: f64,
    /// `d_graph >= d_oracle - lower_bound_slack * eps_int` for every query.
    pub lower_bound_slack: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            max_dtau: 1e-4,
            max_dsigma: 1e-3,
            min_precision: 0.99,
            min_recall: 0.99,
            max_median_rel_err: 0.02,
            max_rel_err: 0.05,
            min_confirmation: 1.0,
            lower_bound_slack: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioInfo {
    pub name: String,
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FanInfo {
    pub n_u: usize,
    pub n_theta: usize,
    pub augment_exits: bool,
    pub seed: Option<u64>,
    /// Fan size after augmentation.
    pub vectors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForwardStats {
    pub traces: usize,
    pub trapped: usize,
    pub samples: usize,
    /// `max | |dγ/dt|_g - 1 |` over all samples.
    pub max_speed_drift: f64,
    pub intersection_records: usize,
    pub tangential_records: usize,
    pub collision_entries: usize,
    pub relation_entries: usize,
}

/// SHA-256 of the inputs the blind stages consumed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlindnessAudit {
    pub collisions_sha256: String,
    pub fan_sha256: String,
    /// True when the inputs were read back from the persisted artifacts.
    pub read_from_disk: bool,
    /// The consumed bytes hash-match the serialized forward output.
    pub hashes_match: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LensErrors {
    pub max_dtau: f64,
    pub max_dsigma: f64,
    pub compared: usize,
    /// Vectors whose recovered exit status disagrees with the forward one.
    pub mismatched: usize,
    /// Vectors outside the angle guard, excluded from the comparison.
    pub guarded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Soundness {
    /// Largest chart distance `|γ_v(s) - γ_w(t)|` over recovered entries.
    pub max_residual: f64,
    pub checked: usize,
    /// Entries with residual above `3 eps_int`.
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenericDelaySummary {
    pub confirmation_fraction: f64,
    pub confirmed: usize,
    pub total: usize,
    pub non_generic_pairs: usize,
    pub hidden_intersections: usize,
    /// Hidden intersections whose gap to the hiding collision is `pi +/- 1e-3`.
    pub hidden_antipodal: usize,
    pub hidden_examples: Vec<HiddenIntersection>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CollarStatus {
    pub estimate: Option<f64>,
    pub requested: Option<f64>,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphSummary {
    pub nodes: usize,
    pub marks: usize,
    pub edges: usize,
    pub components: usize,
    /// Largest chart spread of the positions merged into one node.
    pub max_class_spread: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceRow {
    pub node_a: usize,
    pub node_b: usize,
    pub pos_a: [f64; 2],
    pub pos_b: [f64; 2],
    pub d_graph: f64,
    pub d_oracle: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceSummary {
    pub oracle: OracleMethod,
    pub median_rel_err: f64,
    pub max_rel_err: f64,
    /// Smallest `d_graph - d_oracle`.
    pub min_excess: f64,
    pub lower_bound_holds: bool,
    /// Largest change of the oracle value under grid refinement.
    pub grid_error_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
    /// Whether the check enters the overall verdict.
    pub gating: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub stage: String,
    pub scenario: ScenarioInfo,
    pub fan: FanInfo,
    pub forward: Option<ForwardStats>,
    pub blindness: Option<BlindnessAudit>,
    pub lens_errors: Option<LensErrors>,
    pub recovery: Option<RecoveryStats>,
    pub relation_scores: Option<RelationScores>,
    pub soundness: Option<Soundness>,
    pub confirmation_fraction: Option<f64>,
    pub generic_delay: Option<GenericDelaySummary>,
    pub collar: Option<CollarStatus>,
    pub graph: Option<GraphSummary>,
    pub distance_table: Vec<DistanceRow>,
    pub distance_summary: Option<DistanceSummary>,
    pub flags: Vec<String>,
    pub checks: Vec<Check>,
    /// Set by `validate`: all checks passed.
    pub passed: Option<bool>,
}

fn check(name: &str, value: f64, threshold: f64, passed: bool) -> Check {
    Check {
        name: name.to_string(),
        value,
        threshold,
        passed,
        gating: true,
    }
}

impl ValidationReport {
    /// Evaluate the thresholds on every measured quantity and set `passed`
    /// from the gating checks. A quantity that was not measured fails its
    /// check.
    pub fn apply_thresholds(&mut self, th: &Thresholds, eps_int: f64) {
        let mut checks = Vec::new();
        let le = |v: Option<f64>, t: f64| v.is_some_and(|v| v <= t);
        let ge = |v: Option<f64>, t: f64| v.is_some_and(|v| v >= t);
        let nan = f64::NAN;
        let lens = self.lens_errors.as_ref();
        let dtau = lens.map(|l| l.max_dtau);
        let dsigma = lens.map(|l| l.max_dsigma);
        checks.push(check("lens_max_dtau", dtau.unwrap_or(nan), th.max_dtau, le(dtau, th.max_dtau)));
        checks.push(check(
            "lens_max_dsigma",
            dsigma.unwrap_or(nan),
            th.max_dsigma,
            le(dsigma, th.max_dsigma),
        ));
        let mism = lens.map(|l| l.mismatched as f64);
        checks.push(check("lens_mismatched", mism.unwrap_or(nan), 0.0, le(mism, 0.0)));
        let prec = self.relation_scores.map(|r| r.precision);
        let rec = self.relation_scores.map(|r| r.recall);
        checks.push(check(
            "relation_precision",
            prec.unwrap_or(nan),
            th.min_precision,
            ge(prec, th.min_precision),
        ));
        checks.push(check("relation_recall", rec.unwrap_or(nan), th.min_recall, ge(rec, th.min_recall)));
        let ds = self.distance_summary.as_ref();
        let med = ds.map(|d| d.median_rel_err);
        let max = ds.map(|d| d.max_rel_err);
        checks.push(check(
            "distance_median_rel_err",
            med.unwrap_or(nan),
            th.max_median_rel_err,
            le(med, th.max_median_rel_err),
        ));
        checks.push(Check {
            gating: false,
            ..check("distance_max_rel_err", max.unwrap_or(nan), th.max_rel_err, le(max, th.max_rel_err))
        });
        let excess = ds.map(|d| d.min_excess);
        let slack = -th.lower_bound_slack * eps_int;
        checks.push(check("distance_lower_bound", excess.unwrap_or(nan), slack, ge(excess, slack)));
        let conf = self.confirmation_fraction;
        checks.push(check(
            "confirmation_fraction",
            conf.unwrap_or(nan),
            th.min_confirmation,
            ge(conf, th.min_confirmation),
        ));
        self.passed = Some(checks.iter().filter(|c| c.gating).all(|c| c.passed));
        self.checks = checks;
    }
}

/// Median of a sample; `NaN` when empty.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
