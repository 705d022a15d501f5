//! Finite metric measure spaces: a weighted graph with a reference measure.
//!
//! The metric is the shortest-path metric of the edge graph. The reference
//! measure lives on points; every space also carries an edge measure, used
//! when densities are taken on edges instead of points (see [`Support`]).

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub length: f64,
}

impl Edge {
    pub fn other(&self, x: usize) -> usize {
        if x == self.u {
            self.v
        } else {
            self.u
        }
    }
}

/// Where densities and measures are indexed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Support {
    /// Indexed by points; reference measure `m`.
    #[default]
    Nodes,
    /// Indexed by edges; reference measure is the edge measure.
    Edges,
}

/// How a grid space distributes its point measure.
#[derive(Clone, Debug, PartialEq)]
pub enum CellMeasure {
    /// `m_x = 1/(nx*ny)`, total mass one.
    Uniform,
    /// Per-point weights in row-major order.
    Custom(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricMeasureSpace {
    measure: Vec<f64>,
    edges: Vec<Edge>,
    edge_measure: Vec<f64>,
    coords: Option<Vec<[f64; 2]>>,
    // sorted by neighbor id: (neighbor, edge index)
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl MetricMeasureSpace {
    /// Builds and validates a space. When `edge_measure` is `None` each edge
    /// receives the mean of its endpoint masses.
    pub fn new(
        measure: Vec<f64>,
        edges: Vec<Edge>,
        edge_measure: Option<Vec<f64>>,
        coords: Option<Vec<[f64; 2]>>,
    ) -> Result<Self> {
        let n = measure.len();
        for (x, &w) in measure.iter().enumerate() {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::InvalidSpace(format!(
                    "measure entry of point {x} must be finite and nonnegative (got {w})"
                )));
            }
        }
        let mut seen = HashSet::new();
        let mut adjacency = vec![Vec::new(); n];
        for (k, e) in edges.iter().enumerate() {
            if e.u >= n || e.v >= n {
                return Err(Error::InvalidSpace(format!(
                    "edge {k} ({}, {}) references a point outside [0, {n})",
                    e.u, e.v
                )));
            }
            if e.u == e.v {
                return Err(Error::InvalidSpace(format!("edge {k} is a self-loop at {}", e.u)));
            }
            if !(e.length.is_finite() && e.length > 0.0) {
                return Err(Error::InvalidSpace(format!(
                    "edge {k} ({}, {}) must have positive finite length (got {})",
                    e.u, e.v, e.length
                )));
            }
            if !seen.insert((e.u.min(e.v), e.u.max(e.v))) {
                return Err(Error::InvalidSpace(format!(
                    "duplicate edge ({}, {})",
                    e.u, e.v
                )));
            }
            adjacency[e.u].push((e.v, k));
            adjacency[e.v].push((e.u, k));
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        let edge_measure = match edge_measure {
            Some(em) => {
                if em.len() != edges.len() {
                    return Err(Error::InvalidSpace(format!(
                        "edge measure has {} entries for {} edges",
                        em.len(),
                        edges.len()
                    )));
                }
                if let Some(k) = em.iter().position(|w| !(w.is_finite() && *w >= 0.0)) {
                    return Err(Error::InvalidSpace(format!(
                        "edge measure entry {k} must be finite and nonnegative"
                    )));
                }
                em
            }
            None => edges.iter().map(|e| 0.5 * (measure[e.u] + measure[e.v])).collect(),
        };
        if let Some(c) = &coords {
            if c.len() != n {
                return Err(Error::InvalidSpace(format!(
                    "{} coordinates given for {n} points",
                    c.len()
                )));
            }
        }
        Ok(Self { measure, edges, edge_measure, coords, adjacency })
    }

    pub fn num_points(&self) -> usize {
        self.measure.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn measure(&self) -> &[f64] {
        &self.measure
    }

    pub fn edge_measure(&self) -> &[f64] {
        &self.edge_measure
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, k: usize) -> &Edge {
        &self.edges[k]
    }

    pub fn coords(&self) -> Option<&[[f64; 2]]> {
        self.coords.as_deref()
    }

    pub fn total_mass(&self) -> f64 {
        self.measure.iter().sum()
    }

    /// Reference masses for densities indexed by `support`.
    pub fn reference(&self, support: Support) -> &[f64] {
        match support {
            Support::Nodes => &self.measure,
            Support::Edges => &self.edge_measure,
        }
    }

    pub fn support_len(&self, support: Support) -> usize {
        self.reference(support).len()
    }

    /// `(neighbor, edge index)` pairs sorted by neighbor.
    pub fn neighbors(&self, x: usize) -> &[(usize, usize)] {
        &self.adjacency[x]
    }

    pub fn edge_between(&self, a: usize, b: usize) -> Option<usize> {
        let list = self.adjacency.get(a)?;
        list.binary_search_by_key(&b, |&(y, _)| y).ok().map(|i| list[i].1)
    }

    /// Same space with both reference measures multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.measure.iter_mut().for_each(|w| *w *= c);
        out.edge_measure.iter_mut().for_each(|w| *w *= c);
        out
    }

    /// Same graph with a different point measure (edge measure kept).
    pub fn with_measure(&self, measure: Vec<f64>) -> Result<Self> {
        Self::new(measure, self.edges.clone(), Some(self.edge_measure.clone()), self.coords.clone())
    }

    /// Shortest-path distances from `source`; unreachable points are `inf`.
    pub fn distances_from(&self, source: usize) -> Vec<f64> {
        let mut dist = vec![f64::INFINITY; self.num_points()];
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        heap.push(HeapItem { dist: 0.0, node: source });
        while let Some(HeapItem { dist: d, node }) = heap.pop() {
            if d > dist[node] {
                continue;
            }
            for &(y, k) in &self.adjacency[node] {
                let nd = d + self.edges[k].length;
                if nd < dist[y] {
                    dist[y] = nd;
                    heap.push(HeapItem { dist: nd, node: y });
                }
            }
        }
        dist
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        self.distances_from(a)[b]
    }
}

/// Min-heap entry ordered by distance, then node id.
#[derive(Clone, Copy, Debug)]
pub(crate) struct HeapItem {
    pub dist: f64,
    pub node: usize,
}

impl PartialEq for HeapItem {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for HeapItem {}
impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

/// 4-neighbor grid embedded in the unit square, points in row-major order
/// (`id = j*nx + i`).
///
/// Horizontal edges have length `1/max(nx-1,1)`, vertical ones
/// `1/max(ny-1,1)`. The edge measure tiles the square once per direction: a
/// horizontal edge carries `length/ny`, a vertical one `length/nx`.
pub fn build_grid_space(nx: usize, ny: usize, cells: CellMeasure) -> Result<MetricMeasureSpace> {
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidSpace(format!("grid dimensions must be positive (got {nx}x{ny})")));
    }
    let n = nx * ny;
    let hx = 1.0 / (nx.saturating_sub(1).max(1)) as f64;
    let hy = 1.0 / (ny.saturating_sub(1).max(1)) as f64;
    let measure = match cells {
        CellMeasure::Uniform => vec![1.0 / n as f64; n],
        CellMeasure::Custom(w) => {
            if w.len() != n {
                return Err(Error::InvalidSpace(format!(
                    "custom grid weights have {} entries, expected {n}",
                    w.len()
                )));
            }
            w
        }
    };
    let mut edges = Vec::with_capacity(2 * n);
    let mut edge_measure = Vec::with_capacity(2 * n);
    let mut coords = Vec::with_capacity(n);
    for j in 0..ny {
        for i in 0..nx {
            let id = j * nx + i;
            let x = if nx > 1 { i as f64 * hx } else { 0.0 };
            let y = if ny > 1 { j as f64 * hy } else { 0.0 };
            coords.push([x, y]);
            if i + 1 < nx {
                edges.push(Edge { u: id, v: id + 1, length: hx });
                edge_measure.push(hx / ny as f64);
            }
            if j + 1 < ny {
                edges.push(Edge { u: id, v: id + nx, length: hy });
                edge_measure.push(hy / nx as f64);
            }
        }
    }
    MetricMeasureSpace::new(measure, edges, Some(edge_measure), Some(coords))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_segment() {
        let s = build_grid_space(2, 1, CellMeasure::Uniform).unwrap();
        assert_eq!(s.num_points(), 2);
        assert_eq!(s.num_edges(), 1);
        assert_eq!(s.edge(0).length, 1.0);
        assert_eq!(s.measure(), &[0.5, 0.5]);
    }

    #[test]
    fn three_point_segment() {
        let s = build_grid_space(3, 1, CellMeasure::Uniform).unwrap();
        assert_eq!(s.num_edges(), 2);
        assert!(s.edges().iter().all(|e| e.length == 0.5));
        assert!((s.total_mass() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn edge_count_matches_enumeration() {
        for (nx, ny) in [(4, 4), (1, 5), (3, 7), (1, 1)] {
            let s = build_grid_space(nx, ny, CellMeasure::Uniform).unwrap();
            // brute force: count ordered neighbor pairs at L1 grid distance one
            let mut count = 0;
            for a in 0..nx * ny {
                for b in a + 1..nx * ny {
                    let (ia, ja) = (a % nx, a / nx);
                    let (ib, jb) = (b % nx, b / nx);
                    if ia.abs_diff(ib) + ja.abs_diff(jb) == 1 {
                        count += 1;
                    }
                }
            }
            assert_eq!(s.num_edges(), count);
            assert_eq!(s.num_edges(), 2 * nx * ny - nx - ny);
        }
        let s = build_grid_space(4, 4, CellMeasure::Uniform).unwrap();
        assert!(s.measure().iter().all(|&w| w == 1.0 / 16.0));
    }

    #[test]
    fn edge_measure_tiles_each_direction() {
        let s = build_grid_space(5, 3, CellMeasure::Uniform).unwrap();
        let (mut h, mut v) = (0.0, 0.0);
        for (e, w) in s.edges().iter().zip(s.edge_measure()) {
            if e.v == e.u + 1 {
                h += w;
            } else {
                v += w;
            }
        }
        assert!((h - 1.0).abs() < 1e-12 && (v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(build_grid_space(0, 3, CellMeasure::Uniform).is_err());
        let e = |u, v, length| Edge { u, v, length };
        assert!(MetricMeasureSpace::new(vec![1.0; 2], vec![e(0, 1, 0.0)], None, None).is_err());
        assert!(MetricMeasureSpace::new(vec![1.0; 2], vec![e(0, 0, 1.0)], None, None).is_err());
        assert!(
            MetricMeasureSpace::new(vec![1.0; 2], vec![e(0, 1, 1.0), e(1, 0, 2.0)], None, None).is_err()
        );
        let err = MetricMeasureSpace::new(vec![1.0, -0.5], vec![], None, None).unwrap_err();
        assert!(err.to_string().contains("point 1"));
    }

    #[test]
    fn shortest_path_metric() {
        let s = build_grid_space(3, 3, CellMeasure::Uniform).unwrap();
        assert!((s.distance(0, 8) - 2.0).abs() < 1e-15);
        assert_eq!(s.edge_between(4, 5), s.edge_between(5, 4));
        assert!(s.edge_between(0, 4).is_none());
    }
}
