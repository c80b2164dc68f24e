//! The end-to-end pipeline: forward simulation, blind inversion, quotient
//! reconstruction and comparison against the oracles.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::collision::{
    build_boundary_relation_forward, build_collision_data, confirms_intersections_report, intersect_all,
    BoundaryRelation, CollisionError, DelayedCollisionSet,
};
use crate::geodesic::{
    augment_exits, lens_forward, sample_fan, shoot_all, sigma_distance, ExitEvent, GeodesicError,
    GeodesicTrace, LensData, ANGLE_GUARD,
};
use crate::inversion::{
    assemble_stitching, lens_from_collisions, recover_boundary_relation, relation_scores, InversionError,
    LensSettings, RecoverySettings,
};
use crate::manifold::{collar_radius_estimate, BoundaryVector, ManifoldError, ManifoldScenario, Point};
use crate::stitchspace::{build_quotient, StitchError, StitchGraph};

use super::config::{Config, ConfigError};
use super::oracle::{DistanceOracle, OracleError};
use super::report::*;

/// Pipeline stages; each runs all earlier ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Forward,
    Lens,
    Invert,
    Reconstruct,
    Validate,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Forward => "forward",
            Stage::Lens => "lens",
            Stage::Invert => "invert",
            Stage::Reconstruct => "reconstruct",
            Stage::Validate => "validate",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StageError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Manifold(#[from] ManifoldError),
    #[error(transparent)]
    Geodesic(#[from] GeodesicError),
    #[error(transparent)]
    Collision(#[from] CollisionError),
    #[error(transparent)]
    Inversion(#[from] InversionError),
    #[error(transparent)]
    Stitch(#[from] StitchError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("writing {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Query(String),
}

/// A module error labelled with the stage that raised it.
#[derive(Debug, thiserror::Error)]
#[error("{stage} stage failed")]
pub struct PipelineError {
    pub stage: &'static str,
    #[source]
    pub source: StageError,
}

trait Label<T> {
    fn at(self, stage: &'static str) -> Result<T, PipelineError>;
}

impl<T, E: Into<StageError>> Label<T> for Result<T, E> {
    fn at(self, stage: &'static str) -> Result<T, PipelineError> {
        self.map_err(|e| PipelineError {
            stage,
            source: e.into(),
        })
    }
}

/// Which node pairs enter the distance table.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum QueryPlan {
    /// Farthest-point sampling of `2 n_pairs` node positions, pairing
    /// sample `i` with sample `i + n_pairs`.
    #[default]
    FarthestPoint,
    /// The nodes nearest to the given chart positions.
    Positions(Vec<(Point, Point)>),
}

#[derive(Debug, Clone, Default)]
pub struct PipelineOptions {
    /// Artifact directory; blind stages read their inputs back from it.
    pub out_dir: Option<PathBuf>,
    /// Jitter seed for the fan sample.
    pub seed: Option<u64>,
    /// Positional cross-checks against the traces.
    pub verify: bool,
    pub queries: QueryPlan,
}

/// Everything a run produced besides the report.
pub struct PipelineOutput {
    pub report: ValidationReport,
    pub graph: Option<StitchGraph>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FanRow {
    id: u32,
    u: f64,
    theta: f64,
}

#[derive(Debug, Clone, Serialize)]
struct TraceRow {
    trace: u32,
    t: f64,
    x0: f64,
    x1: f64,
    v0: f64,
    v1: f64,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StageError + '_ {
    move |source| StageError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn fan_csv(fan: &[BoundaryVector]) -> Result<Vec<u8>, StageError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for v in fan {
        w.serialize(FanRow {
            id: v.id,
            u: v.u,
            theta: v.theta,
        })?;
    }
    w.into_inner().map_err(|e| StageError::Csv(e.into_error().into()))
}

fn read_fan(scenario: &ManifoldScenario, bytes: &[u8]) -> Result<Vec<BoundaryVector>, StageError> {
    let mut r = csv::Reader::from_reader(bytes);
    let mut fan = Vec::new();
    for row in r.deserialize() {
        let row: FanRow = row?;
        fan.push(BoundaryVector::new(scenario, row.id, row.u, row.theta)?);
    }
    Ok(fan)
}

fn write_traces(path: &Path, traces: &[GeodesicTrace]) -> Result<(), StageError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    for tr in traces {
        for s in &tr.samples {
            w.serialize(TraceRow {
                trace: tr.id(),
                t: s.t,
                x0: s.x[0],
                x1: s.x[1],
                v0: s.v[0],
                v1: s.v[1],
            })?;
        }
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

/// Artifact sink; a no-op without an output directory.
struct Artifacts {
    dir: Option<PathBuf>,
}

impl Artifacts {
    fn new(dir: Option<&Path>) -> Result<Self, StageError> {
        if let Some(d) = dir {
            fs::create_dir_all(d).map_err(io_err(d))?;
        }
        Ok(Self {
            dir: dir.map(Path::to_path_buf),
        })
    }

    fn path(&self, name: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(name))
    }

    fn bytes(&self, name: &str, bytes: &[u8]) -> Result<(), StageError> {
        if let Some(p) = self.path(name) {
            fs::write(&p, bytes).map_err(io_err(&p))?;
        }
        Ok(())
    }

    fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), StageError> {
        if let Some(p) = self.path(name) {
            let mut bytes = serde_json::to_vec_pretty(value)?;
            bytes.push(b'\n');
            fs::write(&p, bytes).map_err(io_err(&p))?;
        }
        Ok(())
    }

    fn with_writer(
        &self,
        name: &str,
        f: impl FnOnce(&mut std::io::BufWriter<fs::File>) -> Result<(), StageError>,
    ) -> Result<(), StageError> {
        if let Some(p) = self.path(name) {
            let file = fs::File::create(&p).map_err(io_err(&p))?;
            let mut w = std::io::BufWriter::new(file);
            f(&mut w)?;
            w.flush().map_err(io_err(&p))?;
        }
        Ok(())
    }
}

fn max_speed_drift(scenario: &ManifoldScenario, traces: &[GeodesicTrace]) -> f64 {
    traces
        .par_iter()
        .map(|tr| {
            tr.samples
                .iter()
                .map(|s| (scenario.norm(&s.x, &s.v) - 1.0).abs())
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max)
}

fn compare_lens(scenario: &ManifoldScenario, fan: &[BoundaryVector], truth: &LensData, rec: &LensData) -> LensErrors {
    let period = scenario.boundary_period();
    let limit = std::f64::consts::FRAC_PI_2 - ANGLE_GUARD;
    let mut out = LensErrors {
        max_dtau: 0.0,
        max_dsigma: 0.0,
        compared: 0,
        mismatched: 0,
        guarded: 0,
    };
    for v in fan {
        if v.theta.abs() > limit + 1e-12 {
            out.guarded += 1;
            continue;
        }
        let (Some(t), Some(r)) = (truth.get(v.id), rec.get(v.id)) else {
            out.mismatched += 1;
            continue;
        };
        match (t.tau.finite(), r.tau.finite()) {
            (Some(a), Some(b)) => {
                out.compared += 1;
                out.max_dtau = out.max_dtau.max((a - b).abs());
                match sigma_distance(period, t, r) {
                    Some(d) => out.max_dsigma = out.max_dsigma.max(d),
                    None => out.mismatched += 1,
                }
            }
            (None, None) => {}
            _ => out.mismatched += 1,
        }
    }
    out
}

/// Farthest-point sample of `k` nodes of the component of the first pick,
/// seeded at the node closest to the centroid.
fn farthest_points(graph: &StitchGraph, positions: &[Point], k: usize) -> Vec<usize> {
    if positions.is_empty() || k == 0 {
        return Vec::new();
    }
    let centroid = positions.iter().fold(Point::zeros(), |a, p| a + p) / positions.len() as f64;
    let nearest = |target: &Point, allowed: &dyn Fn(usize) -> bool| {
        (0..positions.len())
            .filter(|&i| allowed(i))
            .min_by(|&a, &b| {
                (positions[a] - target)
                    .norm_squared()
                    .total_cmp(&(positions[b] - target).norm_squared())
            })
    };
    // start inside the largest component
    let mut sizes = std::collections::HashMap::new();
    for i in 0..positions.len() {
        *sizes.entry(graph.component(i)).or_insert(0usize) += 1;
    }
    let main = sizes
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .and_then(|(c, _)| c);
    let in_main = |i: usize| graph.component(i) == main;
    let Some(first) = nearest(&centroid, &in_main) else {
        return Vec::new();
    };
    let mut picks = vec![first];
    let mut dist: Vec<f64> = positions.iter().map(|p| (p - positions[first]).norm()).collect();
    while picks.len() < k {
        let next = (0..positions.len())
            .filter(|&i| in_main(i))
            .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)));
        let Some(next) = next else { break };
        if dist[next] <= 0.0 {
            break;
        }
        picks.push(next);
        for (d, p) in dist.iter_mut().zip(positions) {
            *d = d.min((p - positions[next]).norm());
        }
    }
    picks
}

fn nearest_node(positions: &[Point], target: &Point) -> Option<usize> {
    (0..positions.len()).min_by(|&a, &b| {
        (positions[a] - target)
            .norm_squared()
            .total_cmp(&(positions[b] - target).norm_squared())
    })
}

fn distance_table(
    scenario: &ManifoldScenario,
    config: &Config,
    graph: &StitchGraph,
    plan: &QueryPlan,
) -> Result<(Vec<DistanceRow>, Option<DistanceSummary>), StageError> {
    let Some(positions) = graph.positions() else {
        return Ok((Vec::new(), None));
    };
    let n_pairs = config.queries.n_pairs;
    let pairs: Vec<(usize, usize)> = match plan {
        QueryPlan::FarthestPoint => {
            let picks = farthest_points(graph, positions, 2 * n_pairs);
            let half = picks.len() / 2;
            (0..half).map(|i| (picks[i], picks[i + half])).collect()
        }
        QueryPlan::Positions(list) => list
            .iter()
            .map(|(a, b)| {
                let na = nearest_node(positions, a);
                let nb = nearest_node(positions, b);
                na.zip(nb)
                    .ok_or_else(|| StageError::Query("graph has no positioned nodes".to_string()))
            })
            .collect::<Result<_, _>>()?,
    };
    let mut oracle = DistanceOracle::new(scenario, config.queries.fmm_grid);
    let mut fine = None;
    let mut rows = Vec::with_capacity(pairs.len());
    let mut grid_err: Option<f64> = None;
    for &(a, b) in &pairs {
        let d_graph = graph.distances_from(a)?[b];
        let (pa, pb) = (positions[a], positions[b]);
        let d_oracle = oracle.distance(&pa, &pb)?;
        if oracle.method() == super::oracle::OracleMethod::FastMarching {
            let fine = fine.get_or_insert_with(|| DistanceOracle::new(scenario, 2 * config.queries.fmm_grid));
            let d_fine = fine.distance(&pa, &pb)?;
            grid_err = Some(grid_err.unwrap_or(0.0).max((d_fine - d_oracle).abs()));
        }
        let rel_err = if d_oracle > 0.0 {
            (d_graph - d_oracle).abs() / d_oracle
        } else if d_graph == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        rows.push(DistanceRow {
            node_a: a,
            node_b: b,
            pos_a: [pa[0], pa[1]],
            pos_b: [pb[0], pb[1]],
            d_graph,
            d_oracle,
            rel_err,
        });
    }
    if rows.is_empty() {
        return Ok((rows, None));
    }
    let errs: Vec<f64> = rows.iter().map(|r| r.rel_err).collect();
    let min_excess = rows
        .iter()
        .map(|r| r.d_graph - r.d_oracle)
        .fold(f64::INFINITY, f64::min);
    let slack = 5.0 * config.tolerances.eps_int;
    let summary = DistanceSummary {
        oracle: oracle.method(),
        median_rel_err: median(&errs),
        max_rel_err: errs.iter().cloned().fold(0.0, f64::max),
        min_excess,
        lower_bound_holds: min_excess >= -slack,
        grid_error_bound: grid_err,
    };
    Ok((rows, Some(summary)))
}

fn relation_soundness(traces: &[GeodesicTrace], relation: &BoundaryRelation, eps_int: f64) -> Soundness {
    let index: std::collections::HashMap<u32, &GeodesicTrace> = traces.iter().map(|t| (t.id(), t)).collect();
    let residuals: Vec<f64> = relation
        .canonical_entries()
        .par_iter()
        .filter_map(|e| {
            let (a, b) = (index.get(&e.v)?, index.get(&e.w)?);
            Some((a.position(e.s) - b.position(e.t)).norm())
        })
        .collect();
    Soundness {
        max_residual: residuals.iter().cloned().fold(0.0, f64::max),
        checked: residuals.len(),
        violations: residuals.iter().filter(|&&r| r > 3.0 * eps_int).count(),
    }
}

/// Passes reads through while hashing the consumed bytes.
struct HashingReader<R> {
    inner: R,
    hasher: Sha256,
}

impl<R: Read> Read for HashingReader<R> {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.hasher.update(&buf[..n]);
        Ok(n)
    }
}

fn collisions_sha256(collisions: &DelayedCollisionSet) -> Result<String, StageError> {
    let mut hasher = Sha256::new();
    collisions.write_csv(&mut hasher)?;
    Ok(hex::encode(hasher.finalize()))
}

/// Run the pipeline through `stage`, writing the artifacts of every stage
/// reached and `report.json`.
pub fn run_stage(config: &Config, opts: &PipelineOptions, stage: Stage) -> Result<PipelineOutput, PipelineError> {
    config.validate().at("config")?;
    let scenario = ManifoldScenario::from_name(&config.scenario, &config.params).at("config")?;
    scenario.validate().at("config")?;
    let art = Artifacts::new(opts.out_dir.as_deref()).at("config")?;
    let tol = config.tolerances.collision();
    let (h, l_max) = (config.integrator.h, config.integrator.l_max);
    let checks_on = opts.verify || stage == Stage::Validate;
    let mut flags = Vec::new();

    // forward
    let fwd = "forward";
    let fan = sample_fan(&scenario, config.fan.n_u, config.fan.n_theta, opts.seed).at(fwd)?;
    let traces = shoot_all(&scenario, &fan, h, l_max).at(fwd)?;
    let (fan, traces) = if config.fan.augment_exits {
        augment_exits(&scenario, fan, traces, h, l_max).at(fwd)?
    } else {
        (fan, traces)
    };
    let trapped = traces.iter().filter(|t| matches!(t.exit, ExitEvent::Trapped)).count();
    let records = intersect_all(&traces, tol.eps_int);
    let tangential = records.iter().filter(|r| r.tangential).count();
    let collisions = build_collision_data(&records, &tol);
    let relation = build_boundary_relation_forward(&records, tol.eps_int);
    let n_records = records.len();
    drop(records);
    let lens_true = lens_forward(&scenario, &traces).at(fwd)?;
    flags.push(format!("TRAPPED: {trapped}"));
    flags.push(format!("tangential: {tangential}"));

    let fan_bytes = fan_csv(&fan).at(fwd)?;
    let coll_sha = collisions_sha256(&collisions).at(fwd)?;
    art.bytes("fan.csv", &fan_bytes).at(fwd)?;
    if config.output.traces {
        if let Some(p) = art.path("traces.csv") {
            write_traces(&p, &traces).at(fwd)?;
        }
    }
    art.json("lens.json", &lens_true).at(fwd)?;
    art.with_writer("collisions.csv", |w| Ok(collisions.write_csv(w)?)).at(fwd)?;
    art.with_writer("relation.csv", |w| Ok(relation.write_csv(w)?)).at(fwd)?;

    let mut report = ValidationReport {
        stage: stage.name().to_string(),
        scenario: ScenarioInfo {
            name: scenario.name.clone(),
            params: scenario.params(),
        },
        fan: FanInfo {
            n_u: config.fan.n_u,
            n_theta: config.fan.n_theta,
            augment_exits: config.fan.augment_exits,
            seed: opts.seed,
            vectors: fan.len(),
        },
        forward: Some(ForwardStats {
            traces: traces.len(),
            trapped,
            samples: traces.iter().map(|t| t.samples.len()).sum(),
            max_speed_drift: max_speed_drift(&scenario, &traces),
            intersection_records: n_records,
            tangential_records: tangential,
            collision_entries: collisions.len(),
            relation_entries: relation.len(),
        }),
        blindness: None,
        lens_errors: None,
        recovery: None,
        relation_scores: None,
        soundness: None,
        confirmation_fraction: None,
        generic_delay: None,
        collar: None,
        graph: None,
        distance_table: Vec::new(),
        distance_summary: None,
        flags: Vec::new(),
        checks: Vec::new(),
        passed: None,
    };
    let finish = |mut report: ValidationReport, flags: Vec<String>, graph: Option<StitchGraph>| {
        report.flags = flags;
        art.json("report.json", &report).at("report")?;
        Ok(PipelineOutput { report, graph })
    };
    if stage == Stage::Forward {
        return finish(report, flags, None);
    }

    // the confirming-geodesic check needs the forward data, so it runs
    // before the forward collision set is released
    if checks_on {
        let confirm = confirms_intersections_report(&traces, &relation, &collisions, &tol);
        let antipodal = confirm
            .hidden
            .iter()
            .filter(|x| x.gap().is_some_and(|g| (g - std::f64::consts::PI).abs() <= 1e-3))
            .count();
        if let Some(first) = confirm.hidden.first() {
            flags.push(format!(
                "hidden intersections: {} on {} non-generically delayed pairs, {} antipodal \
                 (parameter gap pi); first ({}, {}, {:.6}, {:.6}) hidden at gap {:.6}",
                confirm.hidden.len(),
                confirm.non_generic_pairs,
                antipodal,
                first.v,
                first.w,
                first.s,
                first.t,
                first.gap().unwrap_or(f64::NAN),
            ));
        }
        if confirm.fraction < 1.0 {
            flags.push(format!(
                "confirms-intersections hypothesis fails: fraction {:.6} ({} of {} intersections)",
                confirm.fraction, confirm.confirmed, confirm.total
            ));
        }
        report.confirmation_fraction = Some(confirm.fraction);
        report.generic_delay = Some(GenericDelaySummary {
            confirmation_fraction: confirm.fraction,
            confirmed: confirm.confirmed,
            total: confirm.total,
            non_generic_pairs: confirm.non_generic_pairs,
            hidden_intersections: confirm.hidden.len(),
            hidden_antipodal: antipodal,
            hidden_examples: confirm.hidden.iter().take(20).cloned().collect(),
        });
    }

    // blind inputs: the persisted collision data and fan, nothing else
    let lens_stage = "lens";
    let (blind_collisions, blind_fan_bytes, blind_sha, from_disk) =
        match (art.path("collisions.csv"), art.path("fan.csv")) {
            (Some(c), Some(f)) => {
                drop(collisions);
                let file = fs::File::open(&c).map_err(io_err(&c)).at(lens_stage)?;
                let mut reader = HashingReader {
                    inner: std::io::BufReader::new(file),
                    hasher: Sha256::new(),
                };
                let set = DelayedCollisionSet::read_csv(&mut reader).at(lens_stage)?;
                let sha = hex::encode(reader.hasher.finalize());
                let fan_bytes = fs::read(&f).map_err(io_err(&f)).at(lens_stage)?;
                (set, fan_bytes, sha, true)
            }
            _ => (collisions, fan_bytes.clone(), coll_sha.clone(), false),
        };
    let audit = BlindnessAudit {
        collisions_sha256: blind_sha.clone(),
        fan_sha256: sha256_hex(&blind_fan_bytes),
        read_from_disk: from_disk,
        hashes_match: blind_sha == coll_sha && sha256_hex(&blind_fan_bytes) == sha256_hex(&fan_bytes),
    };
    if !audit.hashes_match {
        flags.push("blindness: persisted inputs differ from the forward output".to_string());
    }
    report.blindness = Some(audit);
    let blind_fan = read_fan(&scenario, &blind_fan_bytes).at(lens_stage)?;
    let lens_rec = lens_from_collisions(
        &blind_collisions,
        &blind_fan,
        &LensSettings {
            h,
            k_interval: config.tolerances.k_interval,
            eps_int: tol.eps_int,
        },
    )
    .at(lens_stage)?;
    art.json("lens.recovered.json", &lens_rec).at(lens_stage)?;
    report.lens_errors = Some(compare_lens(&scenario, &fan, &lens_true, &lens_rec));
    if stage == Stage::Lens {
        return finish(report, flags, None);
    }

    // relation recovery and stitching data
    let inv = "invert";
    let (recovered, stats) = recover_boundary_relation(
        &blind_collisions,
        &RecoverySettings {
            tol,
            eps_join: config.tolerances.eps_join,
            iterate: config.inversion.iterate,
        },
    );
    drop(blind_collisions);
    if !stats.converged {
        flags.push("relation closure: no fixpoint within the iteration cap".to_string());
    }
    report.recovery = Some(stats);
    art.with_writer("relation.recovered.csv", |w| Ok(recovered.write_csv(w)?)).at(inv)?;
    report.relation_scores = Some(relation_scores(&recovered, &relation, tol.eps_int, 2.0 * h));
    drop(relation);
    if checks_on {
        let sound = relation_soundness(&traces, &recovered, tol.eps_int);
        if sound.violations > 0 {
            flags.push(format!(
                "soundness: {} recovered entries are more than 3 eps_int apart",
                sound.violations
            ));
        }
        report.soundness = Some(sound);
    }
    let stitching = assemble_stitching(recovered, &lens_rec).at(inv)?;
    art.with_writer("stitching.json", |w| Ok(stitching.write_json(w)?)).at(inv)?;
    if stage == Stage::Invert {
        return finish(report, flags, None);
    }

    // quotient reconstruction
    let rec = "reconstruct";
    let collar = match collar_radius_estimate(&scenario, config.collar.n_u, config.collar.n_t) {
        Ok(est) => {
            let status = match config.collar.r_c {
                Some(r) if r > est.radius => format!("requested r_C = {r} exceeds estimate {:.6}", est.radius),
                Some(r) => format!("r_C = {r} within estimate {:.6}", est.radius),
                None => format!("estimated r_C = {:.6}", est.radius),
            };
            CollarStatus {
                estimate: Some(est.radius),
                requested: config.collar.r_c,
                status,
            }
        }
        Err(e) => CollarStatus {
            estimate: None,
            requested: config.collar.r_c,
            status: format!("unverified: {e}"),
        },
    };
    flags.push(format!("collar: {}", collar.status));
    report.collar = Some(collar);
    let mut graph = build_quotient(&stitching, tol.eps_int).at(rec)?;
    drop(stitching);
    let spread = checks_on.then(|| graph.attach_positions(&traces));
    drop(traces);
    art.with_writer("graph.json", |w| Ok(graph.write_json(w)?)).at(rec)?;
    report.graph = Some(GraphSummary {
        nodes: graph.node_count(),
        marks: graph.mark_count(),
        edges: graph.edges().len(),
        components: graph.component_count(),
        max_class_spread: spread,
    });
    if graph.component_count() > 1 {
        flags.push(format!("quotient graph has {} components", graph.component_count()));
    }
    let (rows, summary) = distance_table(&scenario, config, &graph, &opts.queries).at(rec)?;
    report.distance_table = rows;
    report.distance_summary = summary;
    if stage == Stage::Validate {
        report.apply_thresholds(&Thresholds::default(), tol.eps_int);
    }
    finish(report, flags, Some(graph))
}

/// Full validation run.
pub fn run_pipeline(config: &Config, opts: &PipelineOptions) -> Result<ValidationReport, PipelineError> {
    run_stage(config, opts, Stage::Validate).map(|o| o.report)
}
