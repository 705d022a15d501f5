//! Path enumeration and the shortest-path separation oracle.
//!
//! A path from `sources` to `targets` starts at a source, ends at the first
//! target it reaches, and never revisits a point or passes through another
//! source. Longer walks only dominate these, so nothing is lost for modulus.

use std::collections::BinaryHeap;

use crate::space::{HeapItem, MetricMeasureSpace};

fn membership(n: usize, ids: &[usize]) -> Vec<bool> {
    let mut out = vec![false; n];
    for &x in ids {
        out[x] = true;
    }
    out
}

/// Simple source-target paths in lexicographic order of point sequences.
/// Returns at most `limit` paths and whether more exist.
pub fn simple_paths(
    space: &MetricMeasureSpace,
    sources: &[usize],
    targets: &[usize],
    max_hops: Option<usize>,
    limit: usize,
) -> (Vec<Vec<usize>>, bool) {
    let n = space.num_points();
    let is_source = membership(n, sources);
    let is_target = membership(n, targets);
    let mut starts: Vec<usize> = sources.to_vec();
    starts.sort_unstable();
    starts.dedup();

    let mut out = Vec::new();
    let mut on_path = vec![false; n];
    let mut path = Vec::new();
    let mut truncated = false;

    struct Ctx<'a> {
        space: &'a MetricMeasureSpace,
        is_source: &'a [bool],
        is_target: &'a [bool],
        max_hops: usize,
        limit: usize,
    }

    fn dfs(
        ctx: &Ctx,
        node: usize,
        path: &mut Vec<usize>,
        on_path: &mut [bool],
        out: &mut Vec<Vec<usize>>,
        truncated: &mut bool,
    ) {
        if *truncated {
            return;
        }
        if ctx.is_target[node] {
            if out.len() == ctx.limit {
                *truncated = true;
            } else {
                out.push(path.clone());
            }
            return;
        }
        if path.len() > ctx.max_hops {
            return;
        }
        for &(y, _) in ctx.space.neighbors(node) {
            if on_path[y] || ctx.is_source[y] {
                continue;
            }
            on_path[y] = true;
            path.push(y);
            dfs(ctx, y, path, on_path, out, truncated);
            path.pop();
            on_path[y] = false;
        }
    }

    let ctx = Ctx {
        space,
        is_source: &is_source,
        is_target: &is_target,
        max_hops: max_hops.unwrap_or(usize::MAX),
        limit,
    };
    for s in starts {
        on_path[s] = true;
        path.push(s);
        dfs(&ctx, s, &mut path, &mut on_path, &mut out, &mut truncated);
        path.pop();
        on_path[s] = false;
        if truncated {
            break;
        }
    }
    (out, truncated)
}

/// Finds the source-target path of least total edge weight.
pub struct PathOracle<'a> {
    space: &'a MetricMeasureSpace,
    sources: Vec<usize>,
    is_source: Vec<bool>,
    is_target: Vec<bool>,
    max_hops: Option<usize>,
}

impl<'a> PathOracle<'a> {
    pub fn new(
        space: &'a MetricMeasureSpace,
        sources: &[usize],
        targets: &[usize],
        max_hops: Option<usize>,
    ) -> Self {
        let n = space.num_points();
        let mut srcs = sources.to_vec();
        srcs.sort_unstable();
        srcs.dedup();
        Self {
            space,
            sources: srcs,
            is_source: membership(n, sources),
            is_target: membership(n, targets),
            max_hops,
        }
    }

    /// Minimum-weight path under per-edge `weights` (nonnegative, `inf` marks
    /// edges that cannot be used). Ties resolve to the lexicographically
    /// smallest point sequence. `None` when no target is reachable.
    pub fn shortest(&self, weights: &[f64]) -> Option<(Vec<usize>, f64)> {
        match self.max_hops {
            None => self.dijkstra(weights),
            Some(h) => self.layered(weights, h),
        }
    }

    fn dijkstra(&self, weights: &[f64]) -> Option<(Vec<usize>, f64)> {
        let n = self.space.num_points();
        let mut dist = vec![f64::INFINITY; n];
        let mut pred: Vec<Option<usize>> = vec![None; n];
        let mut done = vec![false; n];
        let mut heap = BinaryHeap::new();
        for &s in &self.sources {
            dist[s] = 0.0;
            heap.push(HeapItem { dist: 0.0, node: s });
        }
        let path_to = |pred: &[Option<usize>], mut x: usize| {
            let mut p = vec![x];
            while let Some(y) = pred[x] {
                p.push(y);
                x = y;
            }
            p.reverse();
            p
        };
        while let Some(HeapItem { dist: d, node: u }) = heap.pop() {
            if done[u] || d > dist[u] {
                continue;
            }
            done[u] = true;
            if self.is_target[u] {
                continue;
            }
            for &(v, k) in self.space.neighbors(u) {
                if done[v] || self.is_source[v] || !weights[k].is_finite() {
                    continue;
                }
                let nd = d + weights[k];
                let tol = 1e-12 * nd.abs().max(1.0);
                if nd < dist[v] - tol {
                    dist[v] = nd;
                    pred[v] = Some(u);
                    heap.push(HeapItem { dist: nd, node: v });
                } else if (nd - dist[v]).abs() <= tol {
                    let mut cand = path_to(&pred, u);
                    cand.push(v);
                    if cand < path_to(&pred, v) {
                        pred[v] = Some(u);
                    }
                }
            }
        }
        let best = (0..n)
            .filter(|&x| self.is_target[x] && dist[x].is_finite())
            .map(|x| dist[x])
            .fold(f64::INFINITY, f64::min);
        if !best.is_finite() {
            return None;
        }
        let tol = 1e-12 * best.abs().max(1.0);
        (0..n)
            .filter(|&x| self.is_target[x] && dist[x] <= best + tol)
            .map(|x| (path_to(&pred, x), dist[x]))
            .min_by(|a, b| a.0.cmp(&b.0))
    }

    // Bellman-Ford over hop layers, then loop removal.
    fn layered(&self, weights: &[f64], max_hops: usize) -> Option<(Vec<usize>, f64)> {
        let n = self.space.num_points();
        let mut layers = vec![vec![f64::INFINITY; n]];
        let mut preds: Vec<Vec<Option<usize>>> = vec![vec![None; n]];
        for &s in &self.sources {
            layers[0][s] = 0.0;
        }
        for h in 1..=max_hops {
            let mut next = vec![f64::INFINITY; n];
            let mut pred = vec![None; n];
            for u in 0..n {
                let d = layers[h - 1][u];
                if !d.is_finite() || self.is_target[u] {
                    continue;
                }
                for &(v, k) in self.space.neighbors(u) {
                    if self.is_source[v] || !weights[k].is_finite() {
                        continue;
                    }
                    let nd = d + weights[k];
                    if nd < next[v] {
                        next[v] = nd;
                        pred[v] = Some(u);
                    }
                }
            }
            layers.push(next);
            preds.push(pred);
        }
        let mut best: Option<(usize, usize, f64)> = None;
        for (h, layer) in layers.iter().enumerate() {
            for x in (0..n).filter(|&x| self.is_target[x]) {
                if layer[x].is_finite() && best.is_none_or(|(_, _, d)| layer[x] < d) {
                    best = Some((h, x, layer[x]));
                }
            }
        }
        let (h, x, _) = best?;
        let mut walk = vec![x];
        let mut cur = x;
        for layer in (1..=h).rev() {
            cur = preds[layer][cur].expect("layer predecessor");
            walk.push(cur);
        }
        walk.reverse();
        // cut loops
        let mut path: Vec<usize> = Vec::with_capacity(walk.len());
        for y in walk {
            if let Some(pos) = path.iter().position(|&z| z == y) {
                path.truncate(pos);
            }
            path.push(y);
        }
        let total = path
            .windows(2)
            .map(|w| weights[self.space.edge_between(w[0], w[1]).expect("adjacent")])
            .sum();
        Some((path, total))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{build_grid_space, CellMeasure};

    #[test]
    fn lexicographic_enumeration() {
        let s = build_grid_space(3, 2, CellMeasure::Uniform).unwrap();
        // sources: left column {0,3}, targets: right column {2,5}
        let (paths, truncated) = simple_paths(&s, &[0, 3], &[2, 5], None, 100);
        assert!(!truncated);
        let mut sorted = paths.clone();
        sorted.sort();
        assert_eq!(paths, sorted);
        assert!(paths.contains(&vec![0, 1, 2]));
        assert!(paths.contains(&vec![3, 4, 1, 2]));
        assert!(paths.iter().all(|p| p[1..].iter().all(|x| *x != 0 && *x != 3)));
    }

    #[test]
    fn hop_bound_and_truncation() {
        let s = build_grid_space(3, 3, CellMeasure::Uniform).unwrap();
        let (all, _) = simple_paths(&s, &[0, 3, 6], &[2, 5, 8], None, 10_000);
        let (short, _) = simple_paths(&s, &[0, 3, 6], &[2, 5, 8], Some(2), 10_000);
        assert_eq!(short.len(), 3);
        assert!(all.len() > short.len());
        let (few, truncated) = simple_paths(&s, &[0, 3, 6], &[2, 5, 8], None, 2);
        assert!(truncated);
        assert_eq!(few, all[..2].to_vec());
    }

    #[test]
    fn oracle_prefers_lexicographic_ties() {
        let s = build_grid_space(3, 3, CellMeasure::Uniform).unwrap();
        let oracle = PathOracle::new(&s, &[0, 3, 6], &[2, 5, 8], None);
        let w = vec![1.0; s.num_edges()];
        let (p, d) = oracle.shortest(&w).unwrap();
        assert_eq!(p, vec![0, 1, 2]);
        assert_eq!(d, 2.0);
        let bounded = PathOracle::new(&s, &[0, 3, 6], &[2, 5, 8], Some(4));
        let (p2, d2) = bounded.shortest(&w).unwrap();
        assert_eq!(d2, 2.0);
        assert_eq!(p2.len(), 3);
    }

    #[test]
    fn oracle_avoids_blocked_edges() {
        let s = build_grid_space(3, 1, CellMeasure::Uniform).unwrap();
        let oracle = PathOracle::new(&s, &[0], &[2], None);
        let w = vec![1.0, f64::INFINITY];
        assert!(oracle.shortest(&w).is_none());
    }
}
