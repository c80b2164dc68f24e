//! Helpers for the acceptance suite: criterion bookkeeping and synthetic
//! stitching tables with a brute-force closure oracle.

use std::collections::{BTreeMap, VecDeque};
use std::panic::{self, AssertUnwindSafe};
use std::time::Instant;

use geostitch::collision::{BoundaryRelation, RelationEntry};
use geostitch::inversion::StitchingData;
use rand::Rng;

/// Outcome of one acceptance criterion.
#[derive(Debug, Clone)]
pub struct Criterion {
    pub id: u32,
    pub title: &'static str,
    pub checks: Vec<(String, bool)>,
    pub seconds: f64,
}

impl Criterion {
    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|(_, ok)| *ok)
    }

    /// One summary line followed by an indented line per failing check.
    pub fn render(&self) -> String {
        let mut out = format!(
            "{} criterion {}: {} ({:.1} s)",
            if self.passed() { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.seconds
        );
        for (text, ok) in &self.checks {
            out.push_str(&format!("\n    [{}] {}", if *ok { "ok" } else { "FAILED" }, text));
        }
        out
    }
}

/// Collects the checks of one criterion.
#[derive(Debug, Default)]
pub struct Checks(Vec<(String, bool)>);

impl Checks {
    pub fn check(&mut self, ok: bool, text: impl Into<String>) -> bool {
        self.0.push((text.into(), ok));
        ok
    }
}

/// Run a criterion body; a panic or error becomes a failing check.
pub fn run_criterion<F>(id: u32, title: &'static str, body: F) -> Criterion
where
    F: FnOnce(&mut Checks) -> Result<(), Box<dyn std::error::Error>>,
{
    let start = Instant::now();
    let mut checks = Checks::default();
    let result = panic::catch_unwind(AssertUnwindSafe(|| body(&mut checks)));
    let mut checks = checks.0;
    match result {
        Ok(Ok(())) => {}
        Ok(Err(e)) => checks.push((format!("error: {e}"), false)),
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            checks.push((format!("panicked: {msg}"), false));
        }
    }
    Criterion {
        id,
        title,
        checks,
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// A random stitching table together with its marks and the links that
/// generated the correspondences.
#[derive(Debug, Clone)]
pub struct SyntheticTable {
    pub data: StitchingData,
    /// `(geodesic, parameter)` of every mark that occurs in a link.
    pub marks: Vec<(u32, f64)>,
    /// Index pairs into `marks`.
    pub links: Vec<(usize, usize)>,
}

/// Random table with at most `max_marks` marks on geodesics of length 1,
/// parameters on a grid of spacing 1e-3 including both endpoints.
pub fn synthetic_table<R: Rng>(rng: &mut R, max_marks: usize) -> SyntheticTable {
    let n_traces = rng.gen_range(1..=40u32);
    let n_marks = rng.gen_range(2..=max_marks.max(2));
    let mut pool: BTreeMap<(u32, u32), usize> = BTreeMap::new();
    let mut marks = Vec::new();
    while marks.len() < n_marks {
        let key = (rng.gen_range(0..n_traces), rng.gen_range(0..=1000u32));
        pool.entry(key).or_insert_with(|| {
            marks.push((key.0, key.1 as f64 * 1e-3));
            marks.len() - 1
        });
    }
    let n_links = rng.gen_range(n_marks / 2..=n_marks + n_marks / 4);
    let mut links = Vec::with_capacity(n_links);
    let mut used = vec![false; n_marks];
    while links.len() < n_links {
        let (x, y) = (rng.gen_range(0..n_marks), rng.gen_range(0..n_marks));
        if x != y {
            links.push((x, y));
            used[x] = true;
            used[y] = true;
        }
    }
    // keep only marks that occur in a link, reindexing the links
    let mut remap = vec![usize::MAX; n_marks];
    let mut kept = Vec::new();
    for (i, m) in marks.iter().enumerate() {
        if used[i] {
            remap[i] = kept.len();
            kept.push(*m);
        }
    }
    let links: Vec<(usize, usize)> = links.iter().map(|&(x, y)| (remap[x], remap[y])).collect();
    let entries = links
        .iter()
        .map(|&(x, y)| RelationEntry {
            v: kept[x].0,
            w: kept[y].0,
            s: kept[x].1,
            t: kept[y].1,
        })
        .collect();
    let data = StitchingData {
        indices: (0..n_traces).collect(),
        intervals: (0..n_traces).map(|a| (a, 1.0)).collect(),
        corr: BoundaryRelation::from_entries(entries, 1e-9),
    };
    SyntheticTable {
        data,
        marks: kept,
        links,
    }
}

/// Component label of every mark under the symmetric closure of `links`,
/// by breadth-first search.
pub fn closure_classes(n: usize, links: &[(usize, usize)]) -> Vec<usize> {
    let mut adj = vec![Vec::new(); n];
    for &(x, y) in links {
        adj[x].push(y);
        adj[y].push(x);
    }
    let mut class = vec![usize::MAX; n];
    for start in 0..n {
        if class[start] != usize::MAX {
            continue;
        }
        class[start] = start;
        let mut queue = VecDeque::from([start]);
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
