//! Blind inversion: recover lens data, the stitching boundary relation and
//! a stitching data from delayed collision data alone.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::collision::{BoundaryRelation, DelayedCollisionSet, RelationEntry, Tolerances};
use crate::geodesic::{ExitTime, LensData, LensEntry};
use crate::manifold::BoundaryVector;

/// Default minimal length of a dense run of collision parameters.
pub const DEFAULT_K_INTERVAL: usize = 50;
/// Default parameter gap for joining relation entries through a common geodesic.
pub const DEFAULT_EPS_JOIN: f64 = 1e-7;
const MAX_CLOSURE_ITERATIONS: usize = 10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum InversionError {
    #[error("vector {v} has several scattering candidates: {candidates:?}")]
    AmbiguousScattering { v: u32, candidates: Vec<u32> },
    #[error("the boundary relation is empty")]
    EmptyRelation,
}

/// Settings for lens recovery.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LensSettings {
    /// Integrator step of the forward data; dense runs have gaps at most `2h`.
    pub h: f64,
    pub k_interval: usize,
    pub eps_int: f64,
}

/// Longest run of sorted values whose consecutive gaps are at most `gap`.
fn longest_dense_run(sorted: &[f64], gap: f64) -> usize {
    if sorted.is_empty() {
        return 0;
    }
    let (mut best, mut cur) = (1, 1);
    for w in sorted.windows(2) {
        if w[1] - w[0] <= gap {
            cur += 1;
            best = best.max(cur);
        } else {
            cur = 1;
        }
    }
    best
}

/// Recover exit times and the scattering relation from the collision data.
///
/// `Sigma(v) = w` when the collision parameters of `v` against the fan
/// vector `-w` contain a dense run, and `tau(v)` is the delay of the entry
/// `(v, -w, 0, D)`. A vector without positive collisions exits immediately.
pub fn lens_from_collisions(
    collisions: &DelayedCollisionSet,
    fan: &[BoundaryVector],
    settings: &LensSettings,
) -> Result<LensData, InversionError> {
    // parameters on v per partner, from (v, p, s, D) and (p, v, s', D),
    // sorted by (v, p, parameter)
    let mut flat: Vec<(u32, u32, f64)> = Vec::with_capacity(2 * collisions.len());
    for e in collisions.entries() {
        flat.push((e.v, e.w, e.s));
        if e.v != e.w {
            flat.push((e.w, e.v, e.s + e.d));
        }
    }
    flat.par_sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)).then(a.2.total_cmp(&b.2)));
    let mut ranges: HashMap<u32, (usize, usize)> = HashMap::new();
    let mut start = 0;
    for i in 1..=flat.len() {
        if i == flat.len() || flat[i].0 != flat[start].0 {
            ranges.insert(flat[start].0, (start, i));
            start = i;
        }
    }
    let by_id: HashMap<u32, &BoundaryVector> = fan.iter().map(|v| (v.id, v)).collect();
    let results: Vec<Result<(u32, LensEntry), InversionError>> = fan
        .par_iter()
        .map(|v| {
            let rows = ranges.get(&v.id).map_or(&flat[0..0], |&(a, b)| &flat[a..b]);
            let positive = rows.iter().any(|r| r.2 > settings.eps_int);
            if !positive {
                return Ok((
                    v.id,
                    LensEntry {
                        tau: ExitTime::Finite(0.0),
                        u_out: Some(v.u),
                        theta_out: Some(v.theta),
                    },
                ));
            }
            let mut candidates: Vec<u32> = Vec::new();
            for group in rows.chunk_by(|a, b| a.1 == b.1) {
                let p = group[0].1;
                if p == v.id {
                    continue;
                }
                let sorted: Vec<f64> = group.iter().map(|r| r.2).collect();
                if longest_dense_run(&sorted, 2.0 * settings.h) >= settings.k_interval {
                    candidates.push(p);
                }
            }
            match candidates.as_slice() {
                [] => Ok((v.id, LensEntry::trapped())),
                [p] => {
                    let tau = collisions
                        .pair(v.id, *p)
                        .iter()
                        .filter(|e| e.s <= settings.eps_int)
                        .min_by(|a, b| a.s.total_cmp(&b.s))
                        .map(|e| e.d);
                    let reversed = by_id.get(p);
                    Ok((
                        v.id,
                        match (tau, reversed) {
                            (Some(tau), Some(w)) => LensEntry {
                                tau: ExitTime::Finite(tau),
                                u_out: Some(w.u),
                                theta_out: Some(-w.theta),
                            },
                            _ => LensEntry::trapped(),
                        },
                    ))
                }
                _ => Err(InversionError::AmbiguousScattering {
                    v: v.id,
                    candidates,
                }),
            }
        })
        .collect();
    let mut entries = BTreeMap::new();
    for r in results {
        let (id, entry) = r?;
        entries.insert(id, entry);
    }
    Ok(LensData { entries })
}

/// Bookkeeping of the relation recovery.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryStats {
    /// Canonical entries after the direct stage.
    pub stage1: usize,
    /// New canonical entries per closure iteration.
    pub added: Vec<usize>,
    /// Whether the closure reached a fixpoint.
    pub converged: bool,
}

/// Settings for relation recovery.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoverySettings {
    pub tol: Tolerances,
    /// Maximal parameter gap for two entries to share a point of `z`.
    pub eps_join: f64,
    /// Repeat the confirmation stage until nothing new is found.
    pub iterate: bool,
}

/// Stage 2 join over one chunk of geodesics `z`: entries of `z` that share
/// a parameter (within `eps_join`) identify points of the other geodesics.
fn confirmation_pass(relation: &BoundaryRelation, settings: &RecoverySettings) -> Vec<RelationEntry> {
    let entries = relation.canonical_entries();
    let Some(max_id) = entries.iter().map(|e| e.v.max(e.w)).max() else {
        return Vec::new();
    };
    let chunk = 1024u32;
    let mut fresh = Vec::new();
    let mut lo = 0u32;
    while lo <= max_id {
        let hi = lo.saturating_add(chunk);
        // (z, r, other, other param)
        let mut inc: Vec<(u32, f64, u32, f64)> = Vec::new();
        for e in entries {
            if (lo..hi).contains(&e.v) {
                inc.push((e.v, e.s, e.w, e.t));
            }
            if (lo..hi).contains(&e.w) {
                inc.push((e.w, e.t, e.v, e.s));
            }
        }
        inc.par_sort_unstable_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut groups = Vec::new();
        let mut start = 0;
        for k in 1..=inc.len() {
            if k == inc.len()
                || inc[k].0 != inc[start].0
                || inc[k].1 - inc[k - 1].1 > settings.eps_join
            {
                if k - start >= 2 {
                    groups.push((start, k));
                }
                start = k;
            }
        }
        let found: Vec<RelationEntry> = groups
            .par_iter()
            .flat_map_iter(|&(a, b)| {
                let members = &inc[a..b];
                let mut out = Vec::new();
                for (i, x) in members.iter().enumerate() {
                    for y in &members[i + 1..] {
                        if x.2 == y.2 && (x.3 - y.3).abs() <= settings.tol.eps_int {
                            continue;
                        }
                        let cand = RelationEntry {
                            v: x.2,
                            w: y.2,
                            s: x.3,
                            t: y.3,
                        };
                        if !relation.contains(cand.v, cand.w, cand.s, cand.t, settings.tol.eps_int) {
                            out.push(cand.canonical());
                        }
                    }
                }
                out
            })
            .collect();
        fresh.extend(found);
        lo = hi;
        if hi == u32::MAX {
            break;
        }
    }
    fresh
}

/// Recover the stitching boundary relation from the collision data.
///
/// Stage 1 reads `(v, w, s, s + D)` off every collision entry. Stage 2
/// joins two entries `(z, v, r, s)` and `(z, w, r', t)` with `|r - r'|`
/// at most `eps_join` into `(v, w, s, t)`; with `iterate` it is repeated
/// until no new entry appears.
pub fn recover_boundary_relation(
    collisions: &DelayedCollisionSet,
    settings: &RecoverySettings,
) -> (BoundaryRelation, RecoveryStats) {
    let stage1: Vec<RelationEntry> = collisions
        .entries()
        .iter()
        .map(|e| RelationEntry {
            v: e.v,
            w: e.w,
            s: e.s,
            t: e.s + e.d,
        })
        .collect();
    let mut relation = BoundaryRelation::from_entries(stage1, settings.tol.eps_int);
    let mut stats = RecoveryStats {
        stage1: relation.len(),
        added: Vec::new(),
        converged: false,
    };
    let rounds = if settings.iterate { MAX_CLOSURE_ITERATIONS } else { 1 };
    for _ in 0..rounds {
        let fresh = confirmation_pass(&relation, settings);
        if fresh.is_empty() {
            stats.converged = true;
            break;
        }
        let before = relation.len();
        let mut all = relation.into_canonical();
        all.extend(fresh);
        relation = BoundaryRelation::from_entries(all, settings.tol.eps_int);
        stats.added.push(relation.len() - before);
    }
    if !settings.iterate && !stats.converged {
        stats.converged = confirmation_pass(&relation, settings).is_empty();
    }
    (relation, stats)
}

/// Precision and recall of a recovered relation against a reference, on
/// canonical entries matched within `eps` in both parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RelationScores {
    pub precision: f64,
    pub recall: f64,
    pub recovered: usize,
    pub reference: usize,
    pub true_positive: usize,
    pub missed: usize,
}

///
/// Same-geodesic pairs intersect along a continuum that either side only
/// samples, so an entry lying on a dense run of the other side (consecutive
/// entries at most `run_gap` apart) also counts as matched.
pub fn relation_scores(
    recovered: &BoundaryRelation,
    reference: &BoundaryRelation,
    eps: f64,
    run_gap: f64,
) -> RelationScores {
    let hit = |a: &BoundaryRelation, b: &BoundaryRelation| {
        a.canonical_entries()
            .par_iter()
            .filter(|e| b.contains_on_run(e.v, e.w, e.s, e.t, eps, run_gap))
            .count()
    };
    let tp_rec = hit(recovered, reference);
    let tp_ref = hit(reference, recovered);
    let ratio = |n: usize, d: usize| if d == 0 { 1.0 } else { n as f64 / d as f64 };
    RelationScores {
        precision: ratio(tp_rec, recovered.len()),
        recall: ratio(tp_ref, reference.len()),
        recovered: recovered.len(),
        reference: reference.len(),
        true_positive: tp_rec,
        missed: reference.len() - tp_ref,
    }
}

/// A stitching data `(G, m, C)`: geodesic indices, parameter intervals
/// `[0, m_end]` and the correspondences, held as a boundary relation.
#[derive(Debug, Clone, PartialEq)]
pub struct StitchingData {
    pub indices: Vec<u32>,
    /// Right endpoint of each interval; intervals start at 0.
    pub intervals: BTreeMap<u32, f64>,
    pub corr: BoundaryRelation,
}

impl StitchingData {
    /// Correspondence `C_{alpha, beta}` as sorted `(s, t)` pairs.
    pub fn corr_pairs(&self, alpha: u32, beta: u32) -> Vec<(f64, f64)> {
        self.corr.pair(alpha, beta)
    }

    pub fn interval(&self, alpha: u32) -> Option<(f64, f64)> {
        self.intervals.get(&alpha).map(|&m| (0.0, m))
    }

    /// JSON layout: `{"indices": [..], "intervals": {"id": [0, m]},
    /// "corr": [[alpha, beta, [[s, t], ..]], ..]}` with both orders of every pair.
    pub fn write_json<W: Write>(&self, writer: W) -> serde_json::Result<()> {
        #[derive(Serialize)]
        struct Doc<'a> {
            indices: &'a [u32],
            intervals: BTreeMap<u32, [f64; 2]>,
            corr: Vec<(u32, u32, Vec<[f64; 2]>)>,
        }
        let mut corr: Vec<(u32, u32, Vec<[f64; 2]>)> = Vec::new();
        for e in self.corr.ordered_entries() {
            match corr.last_mut() {
                Some(last) if (last.0, last.1) == (e.v, e.w) => last.2.push([e.s, e.t]),
                _ => corr.push((e.v, e.w, vec![[e.s, e.t]])),
            }
        }
        let doc = Doc {
            indices: &self.indices,
            intervals: self.intervals.iter().map(|(&k, &m)| (k, [0.0, m])).collect(),
            corr,
        };
        serde_json::to_writer(writer, &doc)
    }
}

/// Assemble a stitching data: the indices are the geodesics seen in the
/// relation and each interval is `[0, max(tau, largest witnessed parameter)]`.
pub fn assemble_stitching(relation: BoundaryRelation, lens: &LensData) -> Result<StitchingData, InversionError> {
    if relation.is_empty() {
        return Err(InversionError::EmptyRelation);
    }
    let mut intervals: BTreeMap<u32, f64> = BTreeMap::new();
    for e in relation.canonical_entries() {
        for (id, p) in [(e.v, e.s), (e.w, e.t)] {
            let m = intervals.entry(id).or_insert(0.0);
            *m = m.max(p);
        }
    }
    for (id, m) in intervals.iter_mut() {
        if let Some(tau) = lens.get(*id).and_then(|l| l.tau.finite()) {
            *m = m.max(tau);
        }
    }
    Ok(StitchingData {
        indices: intervals.keys().copied().collect(),
        intervals,
        corr: relation,
    })
}
