//! Pairwise geodesic intersections and the forward data sets built from
//! them: delayed collision data and the stitching boundary relation.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geodesic::GeodesicTrace;
use crate::manifold::Point;

/// Default chart tolerance for intersection refinement and parameter matching.
pub const DEFAULT_EPS_INT: f64 = 1e-4;
/// Default delay clustering width.
pub const DEFAULT_EPS_D: f64 = 1e-4;
/// Crossings whose unit tangents have `|sin angle|` below this are tangential.
pub const TANGENTIAL_SINE: f64 = 1e-3;
/// Chart tolerance for recognising a trace as the reverse of another.
const SAME_GEODESIC_TOL: f64 = 1e-6;
/// Parameter tolerance below which two refined intersections are one.
pub const EPS_COINCIDE: f64 = 1e-7;

#[derive(Debug, thiserror::Error)]
pub enum CollisionError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Numerical tolerances shared by the forward and inverse stages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Chart distance / parameter tolerance for intersections.
    pub eps_int: f64,
    /// Delay clustering width.
    pub eps_d: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            eps_int: DEFAULT_EPS_INT,
            eps_d: DEFAULT_EPS_D,
        }
    }
}

/// A refined intersection `gamma_a(s) = gamma_b(t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntersectionRecord {
    pub a: u32,
    pub b: u32,
    pub s: f64,
    pub t: f64,
    pub point: Point,
    pub tangential: bool,
}

#[derive(Debug, Clone, Copy)]
struct Raw {
    /// Indices into the trace slice.
    i: u32,
    j: u32,
    s: f64,
    t: f64,
    residual: f64,
    tangential: bool,
}

fn cross(a: &Point, b: &Point) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn sine_between(a: &Point, b: &Point) -> f64 {
    let n = a.norm() * b.norm();
    if n == 0.0 {
        0.0
    } else {
        (cross(a, b) / n).abs()
    }
}

/// Newton refinement of `gamma_a(s) = gamma_b(t)` on the Hermite interpolants.
fn refine_crossing(a: &GeodesicTrace, b: &GeodesicTrace, s0: f64, t0: f64) -> (f64, f64, f64) {
    let (ea, eb) = (a.param_end(), b.param_end());
    let (mut s, mut t) = (s0, t0);
    for _ in 0..30 {
        let (xa, va) = a.eval(s);
        let (xb, vb) = b.eval(t);
        let f = xa - xb;
        let det = cross(&va, &(-vb));
        if det.abs() < 1e-300 {
            break;
        }
        // solve [va, -vb] (ds, dt)^T = -f
        let ds = -cross(&f, &(-vb)) / det;
        let dt = -cross(&va, &f) / det;
        let (s1, t1) = ((s + ds).clamp(0.0, ea), (t + dt).clamp(0.0, eb));
        let moved = (s1 - s).abs().max((t1 - t).abs());
        s = s1;
        t = t1;
        if moved < 1e-15 {
            break;
        }
    }
    let residual = (a.position(s) - b.position(t)).norm();
    (s, t, residual)
}

/// Gauss-Newton projection of `p` onto `b` starting from parameter `t0`.
fn project(b: &GeodesicTrace, p: &Point, t0: f64) -> (f64, f64) {
    let end = b.param_end();
    let mut t = t0.clamp(0.0, end);
    for _ in 0..30 {
        let (x, v) = b.eval(t);
        let n2 = v.norm_squared();
        if n2 == 0.0 {
            break;
        }
        let t1 = (t + (p - x).dot(&v) / n2).clamp(0.0, end);
        let moved = (t1 - t).abs();
        t = t1;
        if moved < 1e-15 {
            break;
        }
    }
    (t, (b.position(t) - p).norm())
}

fn seg_point_distance(p: &Point, a: &Point, b: &Point) -> (f64, f64) {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let lam = if len2 == 0.0 {
        0.0
    } else {
        ((p - a).dot(&ab) / len2).clamp(0.0, 1.0)
    };
    ((p - (a + ab * lam)).norm(), lam)
}

struct Finder<'a> {
    traces: Vec<&'a GeodesicTrace>,
    eps: f64,
    cell: f64,
    /// `(cell key, trace index, segment index)`, sorted.
    grid: Vec<(u64, u32, u32)>,
    /// Normalized index pairs `(i, j)`, `i <= j`, lying on one geodesic
    /// with opposite orientations.
    reversed: HashMap<(u32, u32), ()>,
}

impl<'a> Finder<'a> {
    fn new(traces: Vec<&'a GeodesicTrace>, eps: f64) -> Self {
        let mut max_seg: f64 = 0.0;
        let mut step: f64 = 0.0;
        for tr in &traces {
            step = step.max(tr.step);
            for w in tr.samples.windows(2) {
                max_seg = max_seg.max((w[1].x - w[0].x).norm());
            }
        }
        let cell = (2.0 * step).max(1.01 * max_seg).max(4.0 * eps);
        let mut finder = Self {
            traces,
            eps,
            cell,
            grid: Vec::new(),
            reversed: HashMap::new(),
        };
        finder.build_grid();
        finder.find_reversed();
        finder
    }

    fn cell_of(&self, p: &Point) -> (i64, i64) {
        ((p[0] / self.cell).floor() as i64, (p[1] / self.cell).floor() as i64)
    }

    fn key(ix: i64, iy: i64) -> u64 {
        ((ix as i32 as u32 as u64) << 32) | (iy as i32 as u32 as u64)
    }

    fn build_grid(&mut self) {
        let mut grid = Vec::new();
        for (i, tr) in self.traces.iter().enumerate() {
            for (k, w) in tr.samples.windows(2).enumerate() {
                let lo = w[0].x.inf(&w[1].x);
                let hi = w[0].x.sup(&w[1].x);
                let (x0, y0) = self.cell_of(&lo);
                let (x1, y1) = self.cell_of(&hi);
                for ix in x0..=x1 {
                    for iy in y0..=y1 {
                        grid.push((Self::key(ix, iy), i as u32, k as u32));
                    }
                }
            }
        }
        grid.par_sort_unstable();
        self.grid = grid;
    }

    fn find_reversed(&mut self) {
        // index trace starts by quantized chart position
        let q = SAME_GEODESIC_TOL * 10.0;
        let qkey = |p: &Point| ((p[0] / q).round() as i64, (p[1] / q).round() as i64);
        let mut starts: HashMap<(i64, i64), Vec<u32>> = HashMap::new();
        for (j, tr) in self.traces.iter().enumerate() {
            starts
                .entry(qkey(&tr.source.base_point))
                .or_default()
                .push(j as u32);
        }
        for (i, tr) in self.traces.iter().enumerate() {
            let Some(exit) = tr.exit_vector() else {
                continue;
            };
            if tr.samples.len() < 2 {
                continue;
            }
            let end = tr.end_point();
            let (kx, ky) = qkey(&end);
            for dx in -1..=1 {
                for dy in -1..=1 {
                    let Some(list) = starts.get(&(kx + dx, ky + dy)) else {
                        continue;
                    };
                    for &j in list {
                        let other = self.traces[j as usize];
                        if j as usize == i || other.samples.len() < 2 {
                            continue;
                        }
                        if (other.source.base_point - end).norm() <= SAME_GEODESIC_TOL
                            && (other.source.direction + exit).norm() <= SAME_GEODESIC_TOL
                        {
                            let pair = (i.min(j as usize) as u32, i.max(j as usize) as u32);
                            self.reversed.insert(pair, ());
                        }
                    }
                }
            }
        }
    }

    fn is_reversed(&self, i: u32, j: u32) -> bool {
        self.reversed.contains_key(&(i.min(j), i.max(j)))
    }

    /// On a reversed pair, whether `(s, t)` lies on the shared overlap.
    fn on_overlap(&self, r: &Raw) -> bool {
        if !self.is_reversed(r.i, r.j) {
            return false;
        }
        let tb = self.traces[r.j as usize];
        let h = tb.step;
        (r.t - (tb.param_end() - r.s)).abs() <= 10.0 * h
    }

    fn crossings(&self) -> Vec<Raw> {
        let mut groups = Vec::new();
        let mut start = 0;
        for k in 1..=self.grid.len() {
            if k == self.grid.len() || self.grid[k].0 != self.grid[start].0 {
                groups.push((start, k));
                start = k;
            }
        }
        groups
            .par_iter()
            .flat_map_iter(|&(lo, hi)| {
                let mut out = Vec::new();
                let cell_key = self.grid[lo].0;
                let list = &self.grid[lo..hi];
                for (x, &(_, ti, si)) in list.iter().enumerate() {
                    for &(_, tj, sj) in &list[x + 1..] {
                        if ti == tj && si.abs_diff(sj) <= 1 {
                            continue;
                        }
                        if let Some(r) = self.test_segments(cell_key, (ti, si), (tj, sj)) {
                            out.push(r);
                        }
                    }
                }
                out
            })
            .collect()
    }

    fn test_segments(&self, cell_key: u64, (ti, si): (u32, u32), (tj, sj): (u32, u32)) -> Option<Raw> {
        let a = self.traces[ti as usize];
        let b = self.traces[tj as usize];
        let (p0, p1) = (&a.samples[si as usize], &a.samples[si as usize + 1]);
        let (q0, q1) = (&b.samples[sj as usize], &b.samples[sj as usize + 1]);
        let d1 = p1.x - p0.x;
        let d2 = q1.x - q0.x;
        let denom = cross(&d1, &d2);
        if denom.abs() <= 1e-300 {
            return None;
        }
        let w = q0.x - p0.x;
        let lam = cross(&w, &d2) / denom;
        let mu = cross(&w, &d1) / denom;
        let slack = 1e-9;
        if !(-slack..=1.0 + slack).contains(&lam) || !(-slack..=1.0 + slack).contains(&mu) {
            return None;
        }
        let hit = p0.x + d1 * lam;
        let (cx, cy) = self.cell_of(&hit);
        if Self::key(cx, cy) != cell_key {
            return None;
        }
        if self.is_reversed(ti, tj) && sine_between(&d1, &d2) < TANGENTIAL_SINE {
            return None;
        }
        let s0 = p0.t + lam * (p1.t - p0.t);
        let t0 = q0.t + mu * (q1.t - q0.t);
        let (s, t, residual) = refine_crossing(a, b, s0, t0);
        if residual > self.eps / 10.0 {
            return None;
        }
        if ti == tj && (s - t).abs() <= self.eps {
            return None;
        }
        let tangential = sine_between(&a.eval(s).1, &b.eval(t).1) < TANGENTIAL_SINE;
        let raw = Raw {
            i: ti,
            j: tj,
            s,
            t,
            residual,
            tangential,
        };
        (!self.on_overlap(&raw)).then_some(raw)
    }

    fn cell_entries(&self, key: u64) -> &[(u64, u32, u32)] {
        let lo = self.grid.partition_point(|e| e.0 < key);
        let hi = self.grid.partition_point(|e| e.0 <= key);
        &self.grid[lo..hi]
    }

    /// Intersections at trace endpoints, where polyline crossing tests are
    /// unreliable (shared boundary points).
    fn endpoint_hits(&self) -> Vec<Raw> {
        (0..self.traces.len())
            .into_par_iter()
            .flat_map_iter(|i| {
                let mut out = Vec::new();
                let tr = self.traces[i];
                if tr.samples.len() < 2 {
                    return out;
                }
                for (s_end, p) in [(0.0, tr.source.base_point), (tr.param_end(), tr.end_point())] {
                    let (cx, cy) = self.cell_of(&p);
                    let mut seen: Vec<(u32, u32)> = Vec::new();
                    for dx in -1..=1 {
                        for dy in -1..=1 {
                            for &(_, j, k) in self.cell_entries(Self::key(cx + dx, cy + dy)) {
                                if seen.contains(&(j, k)) {
                                    continue;
                                }
                                seen.push((j, k));
                                let other = self.traces[j as usize];
                                let (q0, q1) = (&other.samples[k as usize], &other.samples[k as usize + 1]);
                                if j as usize == i && (q0.t - s_end).abs().min((q1.t - s_end).abs()) <= 10.0 * tr.step {
                                    continue;
                                }
                                let (dist, lam) = seg_point_distance(&p, &q0.x, &q1.x);
                                if dist > self.eps {
                                    continue;
                                }
                                let (t, residual) = project(other, &p, q0.t + lam * (q1.t - q0.t));
                                if residual > self.eps / 10.0 {
                                    continue;
                                }
                                let tangential =
                                    sine_between(&tr.eval(s_end).1, &other.eval(t).1) < TANGENTIAL_SINE;
                                let raw = Raw {
                                    i: i as u32,
                                    j,
                                    s: s_end,
                                    t,
                                    residual,
                                    tangential,
                                };
                                if !self.on_overlap(&raw) {
                                    out.push(raw);
                                }
                            }
                        }
                    }
                }
                out
            })
            .collect()
    }

    /// Collinear overlap of reversed pairs: one record per sample of the
    /// lower-index trace.
    fn overlap_runs(&self) -> Vec<Raw> {
        let mut pairs: Vec<(u32, u32)> = self.reversed.keys().copied().collect();
        pairs.sort_unstable();
        pairs
            .par_iter()
            .flat_map_iter(|&(i, j)| {
                let a = self.traces[i as usize];
                let b = self.traces[j as usize];
                let tb = b.param_end();
                a.samples
                    .iter()
                    .map(|smp| {
                        let (t, residual) = project(b, &smp.x, tb - smp.t);
                        Raw {
                            i,
                            j,
                            s: smp.t,
                            t,
                            residual,
                            tangential: true,
                        }
                    })
                    .filter(|r| r.residual <= self.eps / 10.0)
                    .collect::<Vec<_>>()
            })
            .collect()
    }

    fn run(&self) -> Vec<IntersectionRecord> {
        let mut raw = self.crossings();
        raw.extend(self.endpoint_hits());
        raw.extend(self.overlap_runs());
        // canonical orientation by trace id
        let mut recs: Vec<(u32, u32, Raw)> = raw
            .into_iter()
            .map(|r| {
                let (ia, ib) = (self.traces[r.i as usize].id(), self.traces[r.j as usize].id());
                if ia < ib || (ia == ib && r.s <= r.t) {
                    (ia, ib, r)
                } else {
                    let r = Raw {
                        i: r.j,
                        j: r.i,
                        s: r.t,
                        t: r.s,
                        ..r
                    };
                    (ib, ia, r)
                }
            })
            .collect();
        recs.par_sort_unstable_by(|x, y| {
            (x.0, x.1)
                .cmp(&(y.0, y.1))
                .then(x.2.s.total_cmp(&y.2.s))
                .then(x.2.t.total_cmp(&y.2.t))
        });
        let mut kept: Vec<(u32, u32, Raw)> = Vec::with_capacity(recs.len());
        let mut pair_start = 0;
        for rec in recs {
            if kept
                .last()
                .is_none_or(|last| (last.0, last.1) != (rec.0, rec.1))
            {
                pair_start = kept.len();
            }
            let mut merged = false;
            for prev in kept[pair_start..].iter_mut().rev() {
                if rec.2.s - prev.2.s > EPS_COINCIDE {
                    break;
                }
                if (rec.2.t - prev.2.t).abs() <= EPS_COINCIDE {
                    if rec.2.residual < prev.2.residual {
                        let tangential = prev.2.tangential || rec.2.tangential;
                        *prev = rec;
                        prev.2.tangential = tangential;
                    } else {
                        prev.2.tangential |= rec.2.tangential;
                    }
                    merged = true;
                    break;
                }
            }
            if !merged {
                kept.push(rec);
            }
        }
        let mut out: Vec<IntersectionRecord> = kept
            .into_iter()
            .map(|(a, b, r)| IntersectionRecord {
                a,
                b,
                s: r.s,
                t: r.t,
                point: self.traces[r.i as usize].position(r.s),
                tangential: r.tangential,
            })
            .collect();
        out.sort_by(|x, y| {
            (x.a, x.b)
                .cmp(&(y.a, y.b))
                .then(x.s.total_cmp(&y.s))
                .then(x.t.total_cmp(&y.t))
        });
        out
    }
}

/// All intersections between two traces, oriented as `(a, b)`. Passing the
/// same trace twice returns its self-intersections.
pub fn intersect_traces(a: &GeodesicTrace, b: &GeodesicTrace, eps_int: f64) -> Vec<IntersectionRecord> {
    if a.id() == b.id() {
        return Finder::new(vec![a], eps_int).run();
    }
    Finder::new(vec![a, b], eps_int)
        .run()
        .into_iter()
        .filter(|r| r.a != r.b)
        .map(|r| {
            if r.a == a.id() {
                r
            } else {
                IntersectionRecord {
                    a: r.b,
                    b: r.a,
                    s: r.t,
                    t: r.s,
                    ..r
                }
            }
        })
        .collect()
}

/// All intersections among a set of traces with distinct ids, in canonical
/// orientation (`a < b`, or `a == b` with `s < t`) sorted by `(a, b, s, t)`.
pub fn intersect_all(traces: &[GeodesicTrace], eps_int: f64) -> Vec<IntersectionRecord> {
    Finder::new(traces.iter().collect(), eps_int).run()
}

/// One tuple `(v, w, s, D)` of the delayed collision data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionEntry {
    pub v: u32,
    pub w: u32,
    pub s: f64,
    #[serde(rename = "D")]
    pub d: f64,
}

fn io_err(path: &Path, source: std::io::Error) -> CollisionError {
    CollisionError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn cmp_entry(a: &CollisionEntry, b: &CollisionEntry) -> std::cmp::Ordering {
    (a.v, a.w)
        .cmp(&(b.v, b.w))
        .then(a.s.total_cmp(&b.s))
        .then(a.d.total_cmp(&b.d))
}

/// Finite delayed collision data, sorted by `(v, w, s, D)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DelayedCollisionSet {
    entries: Vec<CollisionEntry>,
}

impl DelayedCollisionSet {
    pub fn from_entries(mut entries: Vec<CollisionEntry>) -> Self {
        entries.par_sort_unstable_by(cmp_entry);
        Self { entries }
    }

    pub fn entries(&self) -> &[CollisionEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries of the ordered pair `(v, w)`, sorted by `s`.
    pub fn pair(&self, v: u32, w: u32) -> &[CollisionEntry] {
        let lo = self.entries.partition_point(|e| (e.v, e.w) < (v, w));
        let hi = self.entries.partition_point(|e| (e.v, e.w) <= (v, w));
        &self.entries[lo..hi]
    }

    /// Entries with first index `v`, sorted by `(w, s)`.
    pub fn from_vector(&self, v: u32) -> &[CollisionEntry] {
        let lo = self.entries.partition_point(|e| e.v < v);
        let hi = self.entries.partition_point(|e| e.v <= v);
        &self.entries[lo..hi]
    }

    /// `D(v, w, d)`: the first-collision parameter for delay `d`.
    pub fn first_collision(&self, v: u32, w: u32, d: f64, eps_d: f64) -> Option<f64> {
        self.pair(v, w)
            .iter()
            .filter(|e| (e.d - d).abs() <= eps_d)
            .map(|e| e.s)
            .min_by(f64::total_cmp)
    }

    pub fn contains(&self, v: u32, w: u32, s: f64, d: f64, tol: &Tolerances) -> bool {
        let pair = self.pair(v, w);
        let lo = pair.partition_point(|e| e.s < s - tol.eps_int);
        pair[lo..]
            .iter()
            .take_while(|e| e.s <= s + tol.eps_int)
            .any(|e| (e.d - d).abs() <= tol.eps_d)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), CollisionError> {
        let mut w = csv::Writer::from_writer(writer);
        for e in &self.entries {
            w.serialize(e)?;
        }
        w.flush().map_err(|e| CollisionError::Csv(e.into()))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, CollisionError> {
        let mut r = csv::Reader::from_reader(reader);
        let entries = r.deserialize().collect::<Result<Vec<CollisionEntry>, _>>()?;
        Ok(Self::from_entries(entries))
    }

    pub fn save(&self, path: &Path) -> Result<(), CollisionError> {
        let file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn load(path: &Path) -> Result<Self, CollisionError> {
        let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
        Self::read_csv(std::io::BufReader::new(file))
    }
}

/// Build the delayed collision data from intersection records: every
/// intersection `(s, t)` of the ordered pair `(v, w)` with `t >= s` is a
/// candidate of delay `t - s`; candidates are clustered by delay (gap at
/// most `eps_d`) and each cluster keeps only its smallest `s`.
pub fn build_collision_data(records: &[IntersectionRecord], tol: &Tolerances) -> DelayedCollisionSet {
    let order_slack = tol.eps_int / 10.0;
    let mut cands: Vec<CollisionEntry> = Vec::with_capacity(records.len() * 2);
    for r in records {
        let gap = r.t - r.s;
        if gap >= -order_slack {
            cands.push(CollisionEntry {
                v: r.a,
                w: r.b,
                s: r.s,
                d: gap.max(0.0),
            });
        }
        if -gap >= -order_slack && r.a != r.b {
            cands.push(CollisionEntry {
                v: r.b,
                w: r.a,
                s: r.t,
                d: (-gap).max(0.0),
            });
        }
    }
    cands.par_sort_unstable_by(|a, b| {
        (a.v, a.w)
            .cmp(&(b.v, b.w))
            .then(a.d.total_cmp(&b.d))
            .then(a.s.total_cmp(&b.s))
    });
    let mut out = Vec::with_capacity(cands.len());
    let mut k = 0;
    while k < cands.len() {
        let mut best = cands[k];
        let mut m = k + 1;
        while m < cands.len()
            && (cands[m].v, cands[m].w) == (best.v, best.w)
            && cands[m].d - cands[m - 1].d <= tol.eps_d
        {
            if cands[m].s < best.s {
                best = cands[m];
            }
            m += 1;
        }
        out.push(best);
        k = m;
    }
    DelayedCollisionSet::from_entries(out)
}

/// One tuple `(v, w, s, t)` of the stitching boundary relation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelationEntry {
    pub v: u32,
    pub w: u32,
    pub s: f64,
    pub t: f64,
}

impl RelationEntry {
    pub fn swapped(&self) -> Self {
        Self {
            v: self.w,
            w: self.v,
            s: self.t,
            t: self.s,
        }
    }

    /// Orientation with `v < w`, or `v == w` and `s <= t`.
    pub fn canonical(&self) -> Self {
        if self.v < self.w || (self.v == self.w && self.s <= self.t) {
            *self
        } else {
            self.swapped()
        }
    }
}

fn cmp_relation(a: &RelationEntry, b: &RelationEntry) -> std::cmp::Ordering {
    (a.v, a.w)
        .cmp(&(b.v, b.w))
        .then(a.s.total_cmp(&b.s))
        .then(a.t.total_cmp(&b.t))
}

/// Stitching boundary relation. Stored once per unordered intersection in
/// canonical orientation; the symmetric twin and the diagonal are implied.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BoundaryRelation {
    entries: Vec<RelationEntry>,
}

impl BoundaryRelation {
    /// Build from entries in any orientation; entries within `eps` in both
    /// parameters are merged and diagonal entries `(v, v, s, s)` dropped.
    pub fn from_entries(entries: Vec<RelationEntry>, eps: f64) -> Self {
        let mut entries: Vec<RelationEntry> = entries
            .into_iter()
            .map(|e| e.canonical())
            .filter(|e| !(e.v == e.w && (e.s - e.t).abs() <= eps))
            .collect();
        entries.par_sort_unstable_by(cmp_relation);
        let mut kept: Vec<RelationEntry> = Vec::with_capacity(entries.len());
        let mut pair_start = 0;
        for e in entries {
            if kept.last().is_none_or(|l| (l.v, l.w) != (e.v, e.w)) {
                pair_start = kept.len();
            }
            let dup = kept[pair_start..]
                .iter()
                .rev()
                .take_while(|p| e.s - p.s <= eps)
                .any(|p| (e.t - p.t).abs() <= eps);
            if !dup {
                kept.push(e);
            }
        }
        Self { entries: kept }
    }

    /// Canonical entries, sorted by `(v, w, s, t)`.
    pub fn canonical_entries(&self) -> &[RelationEntry] {
        &self.entries
    }

    pub fn into_canonical(self) -> Vec<RelationEntry> {
        self.entries
    }

    /// Number of stored (canonical) entries.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Every entry in both orientations, sorted by `(v, w, s, t)`.
    pub fn ordered_entries(&self) -> Vec<RelationEntry> {
        let mut all: Vec<RelationEntry> = Vec::with_capacity(self.entries.len() * 2);
        for e in &self.entries {
            all.push(*e);
            all.push(e.swapped());
        }
        all.par_sort_unstable_by(cmp_relation);
        all
    }

    fn canonical_pair(&self, v: u32, w: u32) -> &[RelationEntry] {
        let key = (v.min(w), v.max(w));
        let lo = self.entries.partition_point(|e| (e.v, e.w) < key);
        let hi = self.entries.partition_point(|e| (e.v, e.w) <= key);
        &self.entries[lo..hi]
    }

    /// Entries of the ordered pair `(v, w)` as `(s, t)` with
    /// `gamma_v(s) = gamma_w(t)`, sorted by `s`. For `v == w` both
    /// orientations of each self-intersection are listed.
    pub fn pair(&self, v: u32, w: u32) -> Vec<(f64, f64)> {
        let raw = self.canonical_pair(v, w);
        let mut out: Vec<(f64, f64)> = if v == w {
            raw.iter().flat_map(|e| [(e.s, e.t), (e.t, e.s)]).collect()
        } else if v < w {
            raw.iter().map(|e| (e.s, e.t)).collect()
        } else {
            raw.iter().map(|e| (e.t, e.s)).collect()
        };
        out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        out
    }

    /// Whether `(v, w, s, t)` is present (diagonal included) within `eps`.
    pub fn contains(&self, v: u32, w: u32, s: f64, t: f64, eps: f64) -> bool {
        if v == w && (s - t).abs() <= eps {
            return true;
        }
        let e = RelationEntry { v, w, s, t }.canonical();
        let pair = self.canonical_pair(e.v, e.w);
        let lo = pair.partition_point(|p| p.s < e.s - eps);
        pair[lo..]
            .iter()
            .take_while(|p| p.s <= e.s + eps)
            .any(|p| (p.t - e.t).abs() <= eps)
    }

    /// Like [`contains`](Self::contains), but also accepts `(s, t)` on the
    /// chord between two consecutive entries of the pair at most `run_gap`
    /// apart in `s`: a dense run samples a continuum of intersections.
    pub fn contains_on_run(&self, v: u32, w: u32, s: f64, t: f64, eps: f64, run_gap: f64) -> bool {
        if self.contains(v, w, s, t, eps) {
            return true;
        }
        let e = RelationEntry { v, w, s, t }.canonical();
        let pair = self.canonical_pair(e.v, e.w);
        let k = pair.partition_point(|p| p.s <= e.s);
        if k == 0 || k == pair.len() {
            return false;
        }
        let (a, b) = (&pair[k - 1], &pair[k]);
        let gap = b.s - a.s;
        if gap > run_gap || gap <= 0.0 {
            return false;
        }
        let t_lerp = a.t + (b.t - a.t) * (e.s - a.s) / gap;
        (t_lerp - e.t).abs() <= eps
    }

    /// Unordered trace pairs `(v, w)`, `v <= w`, with at least one entry.
    pub fn pairs(&self) -> Vec<(u32, u32)> {
        let mut out: Vec<(u32, u32)> = self.entries.iter().map(|e| (e.v, e.w)).collect();
        out.dedup();
        out
    }

    /// Writes both orientations, sorted.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), CollisionError> {
        let mut w = csv::Writer::from_writer(writer);
        for e in self.ordered_entries() {
            w.serialize(e)?;
        }
        w.flush().map_err(|e| CollisionError::Csv(e.into()))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R, eps: f64) -> Result<Self, CollisionError> {
        let mut r = csv::Reader::from_reader(reader);
        let entries = r.deserialize().collect::<Result<Vec<RelationEntry>, _>>()?;
        Ok(Self::from_entries(entries, eps))
    }

    pub fn save(&self, path: &Path) -> Result<(), CollisionError> {
        let file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn load(path: &Path, eps: f64) -> Result<Self, CollisionError> {
        let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
        Self::read_csv(std::io::BufReader::new(file), eps)
    }
}

/// Ground-truth stitching boundary relation from intersection records.
pub fn build_boundary_relation_forward(records: &[IntersectionRecord], eps_int: f64) -> BoundaryRelation {
    BoundaryRelation::from_entries(
        records
            .iter()
            .map(|r| RelationEntry {
                v: r.a,
                w: r.b,
                s: r.s,
                t: r.t,
            })
            .collect(),
        eps_int,
    )
}

/// Whether every intersection of `(v, w)` is witnessed as a first collision
/// in one of the two orders; also returns the unwitnessed `(s, t)`.
pub fn is_generically_delayed(
    v: u32,
    w: u32,
    relation: &BoundaryRelation,
    collisions: &DelayedCollisionSet,
    tol: &Tolerances,
) -> (bool, Vec<(f64, f64)>) {
    let slack = tol.eps_int / 10.0;
    let mut hidden = Vec::new();
    for (s, t) in relation.pair(v, w) {
        let fwd = t - s >= -slack && collisions.contains(v, w, s, (t - s).max(0.0), tol);
        let bwd = !fwd && s - t >= -slack && collisions.contains(w, v, t, (s - t).max(0.0), tol);
        if !(fwd || bwd) {
            hidden.push((s, t));
        }
    }
    (hidden.is_empty(), hidden)
}

/// An intersection missing from the collision data together with the
/// first collision of the same delay that hides it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HiddenIntersection {
    pub v: u32,
    pub w: u32,
    pub s: f64,
    pub t: f64,
    /// Parameters `(s', t')` of the hiding entry, with `s - s' = t - t'`.
    pub witness: Option<(f64, f64)>,
}

impl HiddenIntersection {
    /// Parameter gap `s - s'` to the hiding intersection.
    pub fn gap(&self) -> Option<f64> {
        self.witness.map(|(s0, _)| self.s - s0)
    }
}

/// The first-collision entry that hides the intersection `(v, w, s, t)`.
pub fn hiding_witness(
    v: u32,
    w: u32,
    s: f64,
    t: f64,
    collisions: &DelayedCollisionSet,
    tol: &Tolerances,
) -> Option<(f64, f64)> {
    let (a, b, sa, sb) = if t >= s { (v, w, s, t) } else { (w, v, t, s) };
    let d = sb - sa;
    collisions
        .pair(a, b)
        .iter()
        .filter(|e| (e.d - d).abs() <= tol.eps_d && e.s < sa)
        .min_by(|x, y| x.s.total_cmp(&y.s))
        .map(|e| if a == v { (e.s, e.s + e.d) } else { (e.s + e.d, e.s) })
}

/// Empirical check of the confirming-geodesic hypothesis over a relation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfirmationReport {
    /// Canonical relation entries examined.
    pub total: usize,
    pub confirmed: usize,
    pub fraction: f64,
    /// Unconfirmed entries in canonical orientation.
    pub unconfirmed: Vec<RelationEntry>,
    /// Unordered pairs that are not generically delayed.
    pub non_generic_pairs: usize,
    /// Every intersection of a non-generically delayed pair that the
    /// collision data does not witness.
    pub hidden: Vec<HiddenIntersection>,
}

/// For every relation entry `(v, w, s, t)`, look for a fan geodesic `z`
/// through the intersection point that crosses both transversally with
/// `(v, z)` and `(w, z)` generically delayed. A generically delayed pair
/// `(v, w)` confirms itself.
pub fn confirms_intersections_report(
    traces: &[GeodesicTrace],
    relation: &BoundaryRelation,
    collisions: &DelayedCollisionSet,
    tol: &Tolerances,
) -> ConfirmationReport {
    let by_id: HashMap<u32, &GeodesicTrace> = traces.iter().map(|t| (t.id(), t)).collect();
    // incidence: trace id -> (param, other id, other param), sorted by param
    let mut incidence: HashMap<u32, Vec<(f64, u32, f64)>> = HashMap::new();
    for e in relation.canonical_entries() {
        incidence.entry(e.v).or_default().push((e.s, e.w, e.t));
        incidence.entry(e.w).or_default().push((e.t, e.v, e.s));
    }
    for list in incidence.values_mut() {
        list.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    }
    let pairs = relation.pairs();
    type Verdict = ((u32, u32), Vec<(f64, f64)>);
    let verdicts: Vec<Verdict> = pairs
        .par_iter()
        .map(|&(v, w)| ((v, w), is_generically_delayed(v, w, relation, collisions, tol).1))
        .collect();
    let generic: HashMap<(u32, u32), bool> =
        verdicts.iter().map(|(p, h)| (*p, h.is_empty())).collect();
    let hidden: Vec<HiddenIntersection> = verdicts
        .iter()
        .flat_map(|&((v, w), ref list)| {
            list.iter().map(move |&(s, t)| HiddenIntersection {
                v,
                w,
                s,
                t,
                witness: hiding_witness(v, w, s, t, collisions, tol),
            })
        })
        .collect();
    let is_generic = |a: u32, b: u32| generic.get(&(a.min(b), a.max(b))).copied().unwrap_or(true);
    let near = |id: u32, p: f64| -> Vec<(u32, f64)> {
        let Some(list) = incidence.get(&id) else {
            return Vec::new();
        };
        let lo = list.partition_point(|x| x.0 < p - tol.eps_int);
        list[lo..]
            .iter()
            .take_while(|x| x.0 <= p + tol.eps_int)
            .map(|x| (x.1, x.2))
            .collect()
    };
    let transversal = |a: u32, pa: f64, b: u32, pb: f64| -> bool {
        match (by_id.get(&a), by_id.get(&b)) {
            (Some(ta), Some(tb)) => sine_between(&ta.eval(pa).1, &tb.eval(pb).1) >= TANGENTIAL_SINE,
            _ => false,
        }
    };
    let unconfirmed: Vec<RelationEntry> = relation
        .canonical_entries()
        .par_iter()
        .filter(|e| {
            if is_generic(e.v, e.w) {
                return false;
            }
            let at_w = near(e.w, e.t);
            let confirmed = near(e.v, e.s).into_iter().any(|(z, r)| {
                z != e.v
                    && z != e.w
                    && at_w.iter().any(|&(z2, r2)| z2 == z && (r2 - r).abs() <= tol.eps_int)
                    && transversal(e.v, e.s, z, r)
                    && transversal(e.w, e.t, z, r)
                    && is_generic(e.v, z)
                    && is_generic(e.w, z)
            });
            !confirmed
        })
        .copied()
        .collect();
    let total = relation.len();
    let confirmed = total - unconfirmed.len();
    ConfirmationReport {
        total,
        confirmed,
        fraction: if total == 0 {
            1.0
        } else {
            confirmed as f64 / total as f64
        },
        unconfirmed,
        non_generic_pairs: generic.values().filter(|g| !**g).count(),
        hidden,
    }
}
