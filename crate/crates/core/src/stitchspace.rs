//! The quotient space of a stitching data: marked parameter points glued
//! along the correspondences, joined by geodesic arcs weighted by their
//! parameter length, with the induced path metric.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::io::Write;

use serde::Serialize;

use crate::collision::EPS_COINCIDE;
use crate::geodesic::GeodesicTrace;
use crate::inversion::StitchingData;
use crate::manifold::Point;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StitchError {
    #[error("correspondence of geodesic {alpha} at parameter {s} lies outside its interval [0, {end}]")]
    InconsistentCorrespondence { alpha: u32, s: f64, end: f64 },
    #[error("nodes {a} and {b} lie in different components ({comp_a} and {comp_b})")]
    Disconnected {
        a: usize,
        b: usize,
        comp_a: usize,
        comp_b: usize,
    },
    #[error("geodesic {alpha} has no marked point within {eps} of {s}")]
    NoMark { alpha: u32, s: f64, eps: f64 },
    #[error("unknown node {0}")]
    UnknownNode(usize),
}

/// Disjoint sets with path compression and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
        }
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] as usize != root {
            root = self.parent[root] as usize;
        }
        let mut cur = x;
        while self.parent[cur] as usize != root {
            let next = self.parent[cur] as usize;
            self.parent[cur] = root as u32;
            cur = next;
        }
        root
    }

    /// Merge the classes of `a` and `b`; returns whether they were distinct.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (big, small) = if self.size[ra] >= self.size[rb] {
            (ra, rb)
        } else {
            (rb, ra)
        };
        self.parent[small] = big as u32;
        self.size[big] += self.size[small];
        true
    }

    pub fn same(&mut self, a: usize, b: usize) -> bool {
        self.find(a) == self.find(b)
    }
}

/// Marked parameters of one geodesic, sorted and clustered.
#[derive(Debug, Clone)]
struct TraceMarks {
    alpha: u32,
    /// Index of the first mark of this trace in the global mark arrays.
    offset: usize,
    params: Vec<f64>,
}

/// The quotient graph `X = S / ~`.
#[derive(Debug, Clone)]
pub struct StitchGraph {
    traces: Vec<TraceMarks>,
    trace_index: BTreeMap<u32, usize>,
    /// Node of every global mark.
    mark_node: Vec<u32>,
    node_count: usize,
    /// Adjacency in CSR form: `adj[adj_start[n]..adj_start[n + 1]]`.
    adj_start: Vec<usize>,
    adj: Vec<(u32, f64)>,
    edges: Vec<(u32, u32, f64)>,
    component: Vec<u32>,
    boundary: Vec<bool>,
    positions: Option<Vec<Point>>,
    /// Tolerance used by `node_lookup`.
    lookup_eps: f64,
}

fn cluster(mut params: Vec<f64>, end: f64) -> Vec<f64> {
    params.sort_by(f64::total_cmp);
    let mut out = Vec::new();
    let mut k = 0;
    while k < params.len() {
        let mut m = k + 1;
        while m < params.len() && params[m] - params[m - 1] <= EPS_COINCIDE {
            m += 1;
        }
        let group = &params[k..m];
        let c = if group[0] <= EPS_COINCIDE {
            0.0
        } else if group[group.len() - 1] >= end - EPS_COINCIDE {
            end
        } else {
            group.iter().sum::<f64>() / group.len() as f64
        };
        out.push(c);
        k = m;
    }
    out.dedup();
    out
}

fn nearest(params: &[f64], s: f64) -> (usize, f64) {
    let k = params.partition_point(|&p| p < s);
    let mut best = (0, f64::INFINITY);
    for i in [k.wrapping_sub(1), k] {
        if let Some(&p) = params.get(i) {
            let d = (p - s).abs();
            if d < best.1 {
                best = (i, d);
            }
        }
    }
    best
}

/// Build the quotient graph. Marked points of each geodesic are `0`, the
/// interval end and every corresponding parameter (clustered within a
/// coincidence tolerance); corresponding marks are identified and
/// consecutive marks along a geodesic joined by an edge of their parameter gap.
pub fn build_quotient(sd: &StitchingData, lookup_eps: f64) -> Result<StitchGraph, StitchError> {
    let mut per: BTreeMap<u32, Vec<f64>> = sd.indices.iter().map(|&a| (a, Vec::new())).collect();
    let check = |alpha: u32, s: f64| -> Result<f64, StitchError> {
        let end = sd.intervals.get(&alpha).copied().unwrap_or(0.0);
        if s < -EPS_COINCIDE || s > end + EPS_COINCIDE || !s.is_finite() {
            return Err(StitchError::InconsistentCorrespondence { alpha, s, end });
        }
        Ok(s.clamp(0.0, end))
    };
    for e in sd.corr.canonical_entries() {
        let s = check(e.v, e.s)?;
        let t = check(e.w, e.t)?;
        per.entry(e.v).or_default().push(s);
        per.entry(e.w).or_default().push(t);
    }
    let mut traces = Vec::with_capacity(per.len());
    let mut trace_index = BTreeMap::new();
    let mut offset = 0;
    for (alpha, mut params) in per {
        let end = sd.intervals.get(&alpha).copied().unwrap_or(0.0);
        params.push(0.0);
        params.push(end);
        let params = cluster(params, end);
        trace_index.insert(alpha, traces.len());
        let n = params.len();
        traces.push(TraceMarks {
            alpha,
            offset,
            params,
        });
        offset += n;
    }
    let total = offset;
    let mark_of = |alpha: u32, s: f64| -> usize {
        let tm = &traces[trace_index[&alpha]];
        tm.offset + nearest(&tm.params, s).0
    };
    let mut uf = UnionFind::new(total);
    for e in sd.corr.canonical_entries() {
        uf.union(mark_of(e.v, e.s), mark_of(e.w, e.t));
    }
    // node ids in lexicographic (alpha, s) order of the first mark of each class
    let mut root_node: Vec<u32> = vec![u32::MAX; total];
    let mut mark_node = vec![0u32; total];
    let mut node_count = 0usize;
    for (m, node) in mark_node.iter_mut().enumerate() {
        let r = uf.find(m);
        if root_node[r] == u32::MAX {
            root_node[r] = node_count as u32;
            node_count += 1;
        }
        *node = root_node[r];
    }
    let mut boundary = vec![false; node_count];
    let mut edges = Vec::new();
    for tm in &traces {
        let n = tm.params.len();
        boundary[mark_node[tm.offset] as usize] = true;
        boundary[mark_node[tm.offset + n - 1] as usize] = true;
        for k in 0..n.saturating_sub(1) {
            let (a, b) = (mark_node[tm.offset + k], mark_node[tm.offset + k + 1]);
            let w = tm.params[k + 1] - tm.params[k];
            if a != b {
                edges.push((a, b, w));
            }
        }
    }
    let mut degree = vec![0usize; node_count + 1];
    for &(a, b, _) in &edges {
        degree[a as usize] += 1;
        degree[b as usize] += 1;
    }
    let mut adj_start = vec![0usize; node_count + 1];
    for n in 0..node_count {
        adj_start[n + 1] = adj_start[n] + degree[n];
    }
    let mut fill = adj_start.clone();
    let mut adj = vec![(0u32, 0.0f64); adj_start[node_count]];
    for &(a, b, w) in &edges {
        adj[fill[a as usize]] = (b, w);
        fill[a as usize] += 1;
        adj[fill[b as usize]] = (a, w);
        fill[b as usize] += 1;
    }
    let mut comp_uf = UnionFind::new(node_count);
    for &(a, b, _) in &edges {
        comp_uf.union(a as usize, b as usize);
    }
    let mut comp_id = vec![u32::MAX; node_count];
    let mut component = vec![0u32; node_count];
    let mut next = 0;
    for (n, comp) in component.iter_mut().enumerate() {
        let r = comp_uf.find(n);
        if comp_id[r] == u32::MAX {
            comp_id[r] = next;
            next += 1;
        }
        *comp = comp_id[r];
    }
    Ok(StitchGraph {
        traces,
        trace_index,
        mark_node,
        node_count,
        adj_start,
        adj,
        edges,
        component,
        boundary,
        positions: None,
        lookup_eps,
    })
}

#[derive(Copy, Clone, PartialEq)]
struct HeapItem(f64, u32);

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// One graph node with its marked representatives `(alpha, s)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeInfo {
    pub id: usize,
    pub reps: Vec<(u32, f64)>,
}

impl StitchGraph {
    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn mark_count(&self) -> usize {
        self.mark_node.len()
    }

    /// Edges `(a, b, weight)` between distinct nodes.
    pub fn edges(&self) -> &[(u32, u32, f64)] {
        &self.edges
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.boundary.get(node).copied().unwrap_or(false)
    }

    pub fn component(&self, node: usize) -> Option<usize> {
        self.component.get(node).map(|&c| c as usize)
    }

    pub fn component_count(&self) -> usize {
        self.component.iter().max().map_or(0, |&c| c as usize + 1)
    }

    /// Marked parameters of `alpha`, sorted.
    pub fn marks(&self, alpha: u32) -> Option<&[f64]> {
        self.trace_index
            .get(&alpha)
            .map(|&i| self.traces[i].params.as_slice())
    }

    /// Node of the marked point of `alpha` nearest to `s`, if it is
    /// within the lookup tolerance.
    pub fn node_lookup(&self, alpha: u32, s: f64) -> Result<usize, StitchError> {
        let no_mark = StitchError::NoMark {
            alpha,
            s,
            eps: self.lookup_eps,
        };
        let Some(&i) = self.trace_index.get(&alpha) else {
            return Err(no_mark);
        };
        let tm = &self.traces[i];
        let (k, d) = nearest(&tm.params, s);
        if d > self.lookup_eps {
            return Err(no_mark);
        }
        Ok(self.mark_node[tm.offset + k] as usize)
    }

    /// Representatives of every node, in node order.
    pub fn nodes(&self) -> Vec<NodeInfo> {
        let mut reps: Vec<Vec<(u32, f64)>> = vec![Vec::new(); self.node_count];
        for tm in &self.traces {
            for (k, &s) in tm.params.iter().enumerate() {
                reps[self.mark_node[tm.offset + k] as usize].push((tm.alpha, s));
            }
        }
        reps.into_iter()
            .enumerate()
            .map(|(id, reps)| NodeInfo { id, reps })
            .collect()
    }

    /// Single-source shortest path lengths (infinite when unreachable).
    pub fn distances_from(&self, source: usize) -> Result<Vec<f64>, StitchError> {
        if source >= self.node_count {
            return Err(StitchError::UnknownNode(source));
        }
        let mut dist = vec![f64::INFINITY; self.node_count];
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        heap.push(HeapItem(0.0, source as u32));
        while let Some(HeapItem(d, n)) = heap.pop() {
            let n = n as usize;
            if d > dist[n] {
                continue;
            }
            for &(m, w) in &self.adj[self.adj_start[n]..self.adj_start[n + 1]] {
                let nd = d + w;
                if nd < dist[m as usize] {
                    dist[m as usize] = nd;
                    heap.push(HeapItem(nd, m));
                }
            }
        }
        Ok(dist)
    }

    /// Attach chart positions from the traces (verification only; never
    /// used for distances). Returns the largest chart spread of any class.
    pub fn attach_positions(&mut self, traces: &[GeodesicTrace]) -> f64 {
        let by_id: BTreeMap<u32, &GeodesicTrace> = traces.iter().map(|t| (t.id(), t)).collect();
        let mut pos: Vec<Option<Point>> = vec![None; self.node_count];
        let mut spread: f64 = 0.0;
        for tm in &self.traces {
            let Some(tr) = by_id.get(&tm.alpha) else {
                continue;
            };
            for (k, &s) in tm.params.iter().enumerate() {
                let node = self.mark_node[tm.offset + k] as usize;
                let p = tr.position(s.min(tr.param_end()));
                match pos[node] {
                    None => pos[node] = Some(p),
                    Some(q) => spread = spread.max((p - q).norm()),
                }
            }
        }
        self.positions = Some(pos.into_iter().map(|p| p.unwrap_or(Point::new(f64::NAN, f64::NAN))).collect());
        spread
    }

    pub fn positions(&self) -> Option<&[Point]> {
        self.positions.as_deref()
    }

    /// JSON layout `{"nodes": [{"id", "reps": [[alpha, s], ..]}], "edges": [[a, b, w], ..]}`.
    pub fn write_json<W: Write>(&self, writer: W) -> serde_json::Result<()> {
        #[derive(Serialize)]
        struct Doc<'a> {
            nodes: Vec<NodeInfo>,
            edges: &'a [(u32, u32, f64)],
        }
        serde_json::to_writer(
            writer,
            &Doc {
                nodes: self.nodes(),
                edges: &self.edges,
            },
        )
    }
}

/// Length of the shortest graph path between two nodes.
pub fn quotient_distance(g: &StitchGraph, a: usize, b: usize) -> Result<f64, StitchError> {
    if b >= g.node_count {
        return Err(StitchError::UnknownNode(b));
    }
    let d = g.distances_from(a)?[b];
    if d.is_finite() {
        Ok(d)
    } else {
        Err(StitchError::Disconnected {
            a,
            b,
            comp_a: g.component[a] as usize,
            comp_b: g.component[b] as usize,
        })
    }
}

/// Free-function form of [`StitchGraph::node_lookup`].
pub fn node_lookup(g: &StitchGraph, alpha: u32, s: f64) -> Result<usize, StitchError> {
    g.node_lookup(alpha, s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collision::{BoundaryRelation, RelationEntry};
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn plus_sign() -> StitchGraph {
        let sd = StitchingData {
            indices: vec![0, 1],
            intervals: [(0, 2.0), (1, 2.0)].into_iter().collect(),
            corr: BoundaryRelation::from_entries(vec![RelationEntry { v: 0, w: 1, s: 1.0, t: 1.0 }], 1e-4),
        };
        build_quotient(&sd, 1e-4).unwrap()
    }

    #[test]
    fn plus_sign_graph() {
        let g = plus_sign();
        assert_eq!(g.node_count(), 5);
        assert_eq!(g.edges().len(), 4);
        assert!(g.edges().iter().all(|e| e.2 == 1.0));
        let center = g.node_lookup(0, 1.0).unwrap();
        assert_eq!(g.node_lookup(1, 1.0).unwrap(), center);
        assert!(!g.is_boundary(center));
        let start = g.node_lookup(0, 0.0).unwrap();
        assert!(g.is_boundary(start));
        let other = g.node_lookup(1, 0.0).unwrap();
        assert_eq!(quotient_distance(&g, start, other).unwrap(), 2.0);
        assert_eq!(quotient_distance(&g, center, start).unwrap(), 1.0);
        assert!(matches!(g.node_lookup(0, 0.5), Err(StitchError::NoMark { .. })));
    }

    #[test]
    fn single_trace_graph() {
        let sd = StitchingData {
            indices: vec![3],
            intervals: [(3, 1.25)].into_iter().collect(),
            corr: BoundaryRelation::default(),
        };
        let g = build_quotient(&sd, 1e-4).unwrap();
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.edges(), &[(0, 1, 1.25)]);
    }

    #[test]
    fn out_of_interval_correspondence_rejected() {
        let sd = StitchingData {
            indices: vec![0, 1],
            intervals: [(0, 1.0), (1, 1.0)].into_iter().collect(),
            corr: BoundaryRelation::from_entries(vec![RelationEntry { v: 0, w: 1, s: 1.5, t: 0.5 }], 1e-4),
        };
        assert!(matches!(
            build_quotient(&sd, 1e-4),
            Err(StitchError::InconsistentCorrespondence { alpha: 0, .. })
        ));
    }

    #[test]
    fn disconnected_nodes_reported() {
        let sd = StitchingData {
            indices: vec![0, 1],
            intervals: [(0, 1.0), (1, 1.0)].into_iter().collect(),
            corr: BoundaryRelation::default(),
        };
        let g = build_quotient(&sd, 1e-4).unwrap();
        let a = g.node_lookup(0, 0.0).unwrap();
        let b = g.node_lookup(1, 0.0).unwrap();
        assert!(matches!(quotient_distance(&g, a, b), Err(StitchError::Disconnected { .. })));
    }

    #[test]
    fn graph_json_layout() {
        let mut buf = Vec::new();
        plus_sign().write_json(&mut buf).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(v["nodes"].as_array().unwrap().len(), 5);
        assert_eq!(v["nodes"][1]["reps"], serde_json::json!([[0, 1.0], [1, 1.0]]));
        assert_eq!(v["edges"][0], serde_json::json!([0, 1, 1.0]));
    }

    /// Synthetic table: marks on `n_traces` geodesics are assigned to
    /// abstract points; `links` picks pairs of marks of the same point.
    fn synthetic(
        n_traces: usize,
        marks_per: usize,
        n_points: usize,
        assign: &[usize],
        links: &[(usize, usize)],
    ) -> (StitchingData, Vec<(u32, f64, usize)>) {
        let mut marks = Vec::new();
        for a in 0..n_traces {
            for k in 0..marks_per {
                let idx = a * marks_per + k;
                marks.push((a as u32, 0.01 * (k + 1) as f64, assign[idx] % n_points));
            }
        }
        let mut entries = Vec::new();
        for &(x, y) in links {
            let (mx, my) = (marks[x % marks.len()], marks[y % marks.len()]);
            if mx.2 == my.2 && (mx.0, mx.1) != (my.0, my.1) {
                entries.push(RelationEntry { v: mx.0, w: my.0, s: mx.1, t: my.1 });
            }
        }
        let end = 0.01 * (marks_per + 1) as f64;
        let sd = StitchingData {
            indices: (0..n_traces as u32).collect(),
            intervals: (0..n_traces as u32).map(|a| (a, end)).collect(),
            corr: BoundaryRelation::from_entries(entries, 1e-9),
        };
        (sd, marks)
    }

    /// Classes of marks by breadth-first closure over the correspondences.
    fn bfs_classes(sd: &StitchingData, marks: &[(u32, f64, usize)]) -> Vec<usize> {
        let idx = |a: u32, s: f64| {
            marks
                .iter()
                .position(|m| m.0 == a && (m.1 - s).abs() < 1e-12)
                .unwrap()
        };
        let mut adj = vec![Vec::new(); marks.len()];
        for e in sd.corr.canonical_entries() {
            let (x, y) = (idx(e.v, e.s), idx(e.w, e.t));
            adj[x].push(y);
            adj[y].push(x);
        }
        let mut class = vec![usize::MAX; marks.len()];
        for start in 0..marks.len() {
            if class[start] != usize::MAX {
                continue;
            }
            let mut queue = std::collections::VecDeque::from([start]);
            class[start] = start;
            while let Some(x) = queue.pop_front() {
                for &y in &adj[x] {
                    if class[y] == usize::MAX {
                        class[y] = start;
                        queue.push_back(y);
                    }
                }
            }
        }
        class
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn union_find_matches_bfs_closure(
            n_traces in 1usize..12,
            marks_per in 1usize..20,
            n_points in 1usize..40,
            assign in proptest::collection::vec(0usize..1000, 240),
            links in proptest::collection::vec((0usize..240, 0usize..240), 0..300),
        ) {
            let (sd, marks) = synthetic(n_traces, marks_per, n_points, &assign, &links);
            let g = build_quotient(&sd, 1e-6).unwrap();
            let bfs = bfs_classes(&sd, &marks);
            // marks outside every correspondence are not marked points
            let used: BTreeSet<(u32, u64)> = sd
                .corr
                .canonical_entries()
                .iter()
                .flat_map(|e| [(e.v, e.s.to_bits()), (e.w, e.t.to_bits())])
                .collect();
            let present: Vec<usize> = (0..marks.len())
                .filter(|&x| used.contains(&(marks[x].0, marks[x].1.to_bits())))
                .collect();
            let nodes: Vec<usize> = marks
                .iter()
                .map(|m| g.node_lookup(m.0, m.1).unwrap_or(usize::MAX))
                .collect();
            for &x in &present {
                prop_assert!(nodes[x] != usize::MAX);
                for &y in &present {
                    prop_assert_eq!(nodes[x] == nodes[y], bfs[x] == bfs[y]);
                }
            }
        }

        #[test]
        fn edge_weights_are_parameter_gaps(
            assign in proptest::collection::vec(0usize..5, 60),
            links in proptest::collection::vec((0usize..60, 0usize..60), 0..80),
        ) {
            let (sd, _) = synthetic(6, 10, 5, &assign, &links);
            let g = build_quotient(&sd, 1e-6).unwrap();
            for &(_, _, w) in g.edges() {
                prop_assert!(w > 0.0);
                prop_assert!(((w / 0.01).round() * 0.01 - w).abs() < 1e-9);
            }
            // path length additivity along one geodesic
            let a = g.node_lookup(0, 0.0).unwrap();
            let d = g.distances_from(a).unwrap();
            let end = g.node_lookup(0, 0.11).unwrap();
            prop_assert!(d[end] <= 0.11 + 1e-12);
        }
    }
}
