//! Parametric curves on the metric graph of a space.
//!
//! A curve visits a finite sequence of [`Location`]s at strictly increasing
//! times on `[0, 1]` and moves linearly in between. Consecutive locations
//! either coincide (the curve rests) or lie on a common edge. Locations may
//! sit inside an edge, which is what restrictions to sub-intervals produce.
//!
//! Point-indexed measures use the hat-function quadrature: a position at
//! fraction `θ` of edge `(u, v)` counts with weight `1-θ` at `u` and `θ` at
//! `v`. For whole-edge traversals this puts half of the edge on each
//! endpoint, both for arc length ([`ParametricCurve::j_map`]) and for time
//! ([`ParametricCurve::m_map`]).

use std::cmp::Ordering;
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;
use crate::space::{MetricMeasureSpace, Support};

/// Default tolerance on time grids when comparing canonical representatives.
pub const EQUIVALENCE_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Location {
    Node(usize),
    /// Fraction `t ∈ (0, 1)` along edge `edge`, measured from `u` towards `v`.
    OnEdge { edge: usize, u: usize, v: usize, t: f64 },
}

impl Location {
    /// Point at fraction `frac` of the way from `a` to `b` along their edge.
    pub fn between(space: &MetricMeasureSpace, a: usize, b: usize, frac: f64) -> Result<Self> {
        let edge = space.edge_between(a, b).ok_or_else(|| {
            Error::InvalidCurve(format!("points {a} and {b} are not adjacent"))
        })?;
        if !(0.0..=1.0).contains(&frac) {
            return Err(Error::InvalidCurve(format!("edge fraction {frac} outside [0, 1]")));
        }
        let e = space.edge(edge);
        let t = if a == e.u { frac } else { 1.0 - frac };
        Ok(Self::on_edge(edge, e.u, e.v, t))
    }

    fn on_edge(edge: usize, u: usize, v: usize, t: f64) -> Self {
        if t <= 0.0 {
            Location::Node(u)
        } else if t >= 1.0 {
            Location::Node(v)
        } else {
            Location::OnEdge { edge, u, v, t }
        }
    }

    /// Interpolation weights on at most two points.
    pub fn weights(&self) -> [(usize, f64); 2] {
        match *self {
            Location::Node(x) => [(x, 1.0), (x, 0.0)],
            Location::OnEdge { u, v, t, .. } => [(u, 1.0 - t), (v, t)],
        }
    }

    /// Linear interpolation of a point-indexed function.
    pub fn interpolate(&self, values: &[f64]) -> f64 {
        match *self {
            Location::Node(x) => values[x],
            Location::OnEdge { u, v, t, .. } => (1.0 - t) * values[u] + t * values[v],
        }
    }

    pub fn node(&self) -> Option<usize> {
        match *self {
            Location::Node(x) => Some(x),
            Location::OnEdge { .. } => None,
        }
    }

    /// Parameter along `edge`, if the location lies on its closure.
    fn param_on(&self, edge: usize, u: usize, v: usize) -> Option<f64> {
        match *self {
            Location::Node(x) if x == u => Some(0.0),
            Location::Node(x) if x == v => Some(1.0),
            Location::OnEdge { edge: e, t, .. } if e == edge => Some(t),
            _ => None,
        }
    }

    fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        match (self, other) {
            (Location::Node(a), Location::Node(b)) => a == b,
            (Location::OnEdge { edge: e1, t: t1, .. }, Location::OnEdge { edge: e2, t: t2, .. }) => {
                e1 == e2 && (t1 - t2).abs() <= tol
            }
            _ => false,
        }
    }

    fn sort_key(&self) -> (u8, usize, u64) {
        match *self {
            Location::Node(x) => (0, x, 0),
            Location::OnEdge { edge, t, .. } => (1, edge, t.to_bits()),
        }
    }
}

/// What the curve does between two consecutive breakpoints.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Motion {
    Rest(Location),
    /// Linear motion along an edge from parameter `from` to `to`.
    Move { edge: usize, u: usize, v: usize, from: f64, to: f64, length: f64 },
}

impl Motion {
    fn between(space: &MetricMeasureSpace, a: &Location, b: &Location) -> Result<Self> {
        if a == b {
            return Ok(Motion::Rest(*a));
        }
        let edge = match (a, b) {
            (Location::OnEdge { edge, .. }, _) | (_, Location::OnEdge { edge, .. }) => *edge,
            (Location::Node(x), Location::Node(y)) => space.edge_between(*x, *y).ok_or_else(|| {
                Error::InvalidCurve(format!("consecutive nodes {x} and {y} are not adjacent"))
            })?,
        };
        let e = space.edge(edge);
        match (a.param_on(edge, e.u, e.v), b.param_on(edge, e.u, e.v)) {
            (Some(from), Some(to)) if from == to => Ok(Motion::Rest(*a)),
            (Some(from), Some(to)) => Ok(Motion::Move {
                edge,
                u: e.u,
                v: e.v,
                from,
                to,
                length: (to - from).abs() * e.length,
            }),
            _ => Err(Error::InvalidCurve(format!(
                "consecutive locations {a:?} and {b:?} do not share an edge"
            ))),
        }
    }

    pub fn length(&self) -> f64 {
        match *self {
            Motion::Rest(_) => 0.0,
            Motion::Move { length, .. } => length,
        }
    }

    /// Location at fraction `s ∈ [0, 1]` of the segment.
    pub fn at(&self, s: f64) -> Location {
        match *self {
            Motion::Rest(loc) => loc,
            Motion::Move { edge, u, v, from, to, .. } => {
                if s <= 0.0 {
                    Location::on_edge(edge, u, v, from)
                } else if s >= 1.0 {
                    Location::on_edge(edge, u, v, to)
                } else {
                    Location::on_edge(edge, u, v, from + (to - from) * s)
                }
            }
        }
    }

    fn sub(&self, s0: f64, s1: f64) -> Motion {
        match *self {
            Motion::Rest(loc) => Motion::Rest(loc),
            Motion::Move { edge, u, v, from, to, length } => Motion::Move {
                edge,
                u,
                v,
                from: from + (to - from) * s0,
                to: from + (to - from) * s1,
                length: length * (s1 - s0),
            },
        }
    }

    fn reversed(&self) -> Motion {
        match *self {
            Motion::Rest(loc) => Motion::Rest(loc),
            Motion::Move { edge, u, v, from, to, length } => {
                Motion::Move { edge, u, v, from: to, to: from, length }
            }
        }
    }

    /// Splits `mass` between the two edge endpoints according to the mean
    /// edge parameter of the segment.
    fn split(&self, mass: f64, out: &mut BTreeMap<usize, f64>) {
        let mut add = |x: usize, w: f64| {
            if w > 0.0 {
                *out.entry(x).or_insert(0.0) += w;
            }
        };
        match *self {
            Motion::Rest(loc) => {
                for (x, w) in loc.weights() {
                    add(x, w * mass);
                }
            }
            Motion::Move { u, v, from, to, .. } => {
                let mean = 0.5 * (from + to);
                add(u, mass * (1.0 - mean));
                add(v, mass * mean);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParametricCurve {
    points: Vec<Location>,
    times: Vec<f64>,
    motions: Vec<Motion>,
}

impl ParametricCurve {
    /// Validates a curve: at least two breakpoints, times strictly increasing
    /// from 0 to 1, consecutive locations on a common edge or equal.
    pub fn new(space: &MetricMeasureSpace, points: Vec<Location>, times: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidCurve(
                "a curve needs at least two breakpoints (times 0 and 1)".into(),
            ));
        }
        if points.len() != times.len() {
            return Err(Error::InvalidCurve(format!(
                "{} locations but {} times",
                points.len(),
                times.len()
            )));
        }
        if times[0] != 0.0 || *times.last().unwrap() != 1.0 {
            return Err(Error::InvalidCurve("times must start at 0 and end at 1".into()));
        }
        if let Some(k) = times.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidCurve(format!(
                "times must be strictly increasing (times[{}] = {}, times[{}] = {})",
                k,
                times[k],
                k + 1,
                times[k + 1]
            )));
        }
        let n = space.num_points();
        for loc in &points {
            match *loc {
                Location::Node(x) if x >= n => {
                    return Err(Error::InvalidCurve(format!("node {x} is not a point of the space")))
                }
                Location::OnEdge { edge, u, v, t } => {
                    let ok = edge < space.num_edges()
                        && space.edge(edge).u == u
                        && space.edge(edge).v == v
                        && t > 0.0
                        && t < 1.0;
                    if !ok {
                        return Err(Error::InvalidCurve(format!("malformed edge location {loc:?}")));
                    }
                }
                _ => {}
            }
        }
        let motions = points
            .windows(2)
            .map(|w| Motion::between(space, &w[0], &w[1]))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { points, times, motions })
    }

    /// Assembles a curve from consecutive motions with positive durations;
    /// times are normalized to end at 1.
    pub(crate) fn from_motions(motions: Vec<Motion>, durations: &[f64]) -> Self {
        debug_assert!(!motions.is_empty() && motions.len() == durations.len());
        let total: f64 = durations.iter().sum();
        let mut points = vec![motions[0].at(0.0)];
        let mut times = vec![0.0];
        let mut acc = 0.0;
        for (i, (m, dt)) in motions.iter().zip(durations).enumerate() {
            acc += dt;
            points.push(m.at(1.0));
            times.push(if i + 1 == motions.len() { 1.0 } else { acc / total });
        }
        Self { points, times, motions }
    }

    /// Node sequence with the given times.
    pub fn from_nodes(space: &MetricMeasureSpace, nodes: &[usize], times: Vec<f64>) -> Result<Self> {
        Self::new(space, nodes.iter().map(|&x| Location::Node(x)).collect(), times)
    }

    /// Node sequence on the uniform time grid.
    pub fn through_nodes(space: &MetricMeasureSpace, nodes: &[usize]) -> Result<Self> {
        let k = nodes.len().max(2) - 1;
        let times = (0..=k).map(|i| if i == k { 1.0 } else { i as f64 / k as f64 }).collect();
        Self::from_nodes(space, nodes, times)
    }

    /// Constant curve sitting at `x`.
    pub fn constant(space: &MetricMeasureSpace, x: usize) -> Result<Self> {
        Self::from_nodes(space, &[x, x], vec![0.0, 1.0])
    }

    pub fn points(&self) -> &[Location] {
        &self.points
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn motions(&self) -> &[Motion] {
        &self.motions
    }

    /// Point ids when every breakpoint is a node.
    pub fn node_sequence(&self) -> Option<Vec<usize>> {
        self.points.iter().map(Location::node).collect()
    }

    pub fn start(&self) -> Location {
        self.points[0]
    }

    pub fn end(&self) -> Location {
        *self.points.last().unwrap()
    }

    fn durations(&self) -> impl Iterator<Item = f64> + '_ {
        self.times.windows(2).map(|w| w[1] - w[0])
    }

    /// Speed on each segment: traversed distance over duration.
    pub fn metric_speed(&self) -> Vec<f64> {
        self.motions.iter().zip(self.durations()).map(|(m, dt)| m.length() / dt).collect()
    }

    pub fn length(&self) -> f64 {
        self.motions.iter().map(Motion::length).sum()
    }

    /// `∫ |γ'|^q dt`.
    pub fn energy(&self, q: f64) -> f64 {
        self.motions
            .iter()
            .zip(self.durations())
            .map(|(m, dt)| {
                let l = m.length();
                if l == 0.0 {
                    0.0
                } else {
                    l.powf(q) / dt.powf(q - 1.0)
                }
            })
            .sum()
    }

    /// Largest segment speed.
    pub fn lipschitz(&self) -> f64 {
        self.metric_speed().into_iter().fold(0.0, f64::max)
    }

    pub fn is_constant(&self) -> bool {
        self.length() == 0.0
    }

    fn segment_at(&self, t: f64) -> usize {
        let k = self.times.partition_point(|&s| s <= t);
        k.clamp(1, self.motions.len()) - 1
    }

    /// `γ(t)` for `t ∈ [0, 1]`.
    pub fn eval(&self, t: f64) -> Location {
        if t <= 0.0 {
            return self.points[0];
        }
        if t >= 1.0 {
            return self.end();
        }
        let k = self.segment_at(t);
        let s = (t - self.times[k]) / (self.times[k + 1] - self.times[k]);
        self.motions[k].at(s)
    }

    /// Arc-length measure on points (hat-function split).
    pub fn j_map(&self) -> DiscreteMeasure {
        let mut acc = BTreeMap::new();
        for m in &self.motions {
            if let Motion::Move { length, .. } = m {
                m.split(*length, &mut acc);
            }
        }
        DiscreteMeasure::from_pairs(acc).expect("lengths are nonnegative")
    }

    /// Arc-length measure on edges: each edge receives the length traversed on it.
    pub fn j_edge_map(&self) -> DiscreteMeasure {
        DiscreteMeasure::from_pairs(self.motions.iter().filter_map(|m| match *m {
            Motion::Move { edge, length, .. } => Some((edge, length)),
            Motion::Rest(_) => None,
        }))
        .expect("lengths are nonnegative")
    }

    pub fn j_measure(&self, support: Support) -> DiscreteMeasure {
        match support {
            Support::Nodes => self.j_map(),
            Support::Edges => self.j_edge_map(),
        }
    }

    /// Time-occupation probability on points.
    pub fn m_map(&self) -> DiscreteMeasure {
        let mut acc = BTreeMap::new();
        for (m, dt) in self.motions.iter().zip(self.durations()) {
            m.split(dt, &mut acc);
        }
        DiscreteMeasure::from_pairs(acc).expect("durations are positive")
    }

    /// `∫_0^1 f(γ_t) dt` for a point-indexed `f`, under the occupation quadrature.
    pub fn time_average(&self, f: &[f64]) -> f64 {
        self.m_map().integrate(f)
    }

    /// `∫_γ g` for a point-indexed `g`, under the arc-length quadrature.
    pub fn line_integral(&self, g: &[f64]) -> f64 {
        self.j_map().integrate(g)
    }

    /// Traversal count per edge. Whole-edge traversals count one each; a
    /// partial traversal counts the fraction of the edge it covers.
    pub fn multiplicity(&self) -> BTreeMap<usize, f64> {
        let mut out = BTreeMap::new();
        for m in &self.motions {
            if let Motion::Move { edge, from, to, .. } = *m {
                *out.entry(edge).or_insert(0.0) += (to - from).abs();
            }
        }
        out
    }

    pub fn reversed(&self) -> Self {
        let points = self.points.iter().rev().copied().collect();
        let mut times: Vec<f64> = self.times.iter().rev().map(|t| 1.0 - t).collect();
        times[0] = 0.0;
        *times.last_mut().unwrap() = 1.0;
        let motions = self.motions.iter().rev().map(Motion::reversed).collect();
        Self { points, times, motions }
    }

    /// The curve `t ↦ γ(a + t(b - a))`.
    pub fn stretch(&self, a: f64, b: f64) -> Result<Self> {
        if !(0.0 <= a && a < b && b <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "stretch needs 0 <= a < b <= 1 (got a = {a}, b = {b})"
            )));
        }
        if a == 0.0 && b == 1.0 {
            return Ok(self.clone());
        }
        let width = b - a;
        let tol = 1e-12 * width;
        // (lo, hi, segment index) pieces of [a, b]
        let mut pieces = Vec::new();
        for k in 0..self.motions.len() {
            let (t0, t1) = (self.times[k], self.times[k + 1]);
            let lo = t0.max(a);
            let hi = t1.min(b);
            if hi > lo {
                pieces.push((lo, hi, k));
            }
        }
        // drop slivers at the ends produced by rounding
        if pieces.len() > 1 && pieces[0].1 - pieces[0].0 <= tol {
            pieces.remove(0);
        }
        if pieces.len() > 1 && pieces[pieces.len() - 1].1 - pieces[pieces.len() - 1].0 <= tol {
            pieces.pop();
        }
        let mut points = Vec::with_capacity(pieces.len() + 1);
        let mut times = Vec::with_capacity(pieces.len() + 1);
        let mut motions = Vec::with_capacity(pieces.len());
        for (i, &(lo, hi, k)) in pieces.iter().enumerate() {
            let (t0, t1) = (self.times[k], self.times[k + 1]);
            let s0 = (lo - t0) / (t1 - t0);
            let s1 = (hi - t0) / (t1 - t0);
            let m = self.motions[k];
            if i == 0 {
                points.push(m.at(s0));
                times.push(0.0);
            }
            motions.push(m.sub(s0, s1));
            points.push(m.at(s1));
            times.push(if i + 1 == pieces.len() { 1.0 } else { (hi - a) / width });
        }
        Ok(Self { points, times, motions })
    }

    /// Constant-speed representative: rests removed, collinear pieces on one
    /// edge merged, times proportional to arc length.
    pub fn constant_speed_reparam(&self) -> Result<NonParamCurve> {
        let total = self.length();
        if total == 0.0 {
            return Err(Error::ConstantCurve);
        }
        let mut merged: Vec<Motion> = Vec::new();
        for m in self.motions.iter().filter(|m| m.length() > 0.0) {
            if let (
                Some(Motion::Move { edge: e0, from: f0, to: t0, length: l0, .. }),
                Motion::Move { edge: e1, from: f1, to: t1, length: l1, .. },
            ) = (merged.last_mut(), m)
            {
                if *e0 == *e1 && (*t0 - *f0).signum() == (t1 - f1).signum() {
                    *t0 = *t1;
                    *l0 += l1;
                    continue;
                }
            }
            merged.push(*m);
        }
        let mut points = vec![merged[0].at(0.0)];
        let mut times = vec![0.0];
        let mut acc = 0.0;
        for (i, m) in merged.iter().enumerate() {
            acc += m.length();
            points.push(m.at(1.0));
            times.push(if i + 1 == merged.len() { 1.0 } else { acc / total });
        }
        Ok(NonParamCurve(Self { points, times, motions: merged }))
    }

    /// Total order on curves: locations first, then times.
    pub fn canonical_cmp(&self, other: &Self) -> Ordering {
        let ka = self.points.iter().map(Location::sort_key);
        let kb = other.points.iter().map(Location::sort_key);
        ka.cmp(kb).then_with(|| {
            self.times
                .iter()
                .map(|t| t.to_bits())
                .cmp(other.times.iter().map(|t| t.to_bits()))
        })
    }

    fn approx_same(&self, other: &Self, tol: f64) -> bool {
        self.points.len() == other.points.len()
            && self.points.iter().zip(&other.points).all(|(a, b)| a.approx_eq(b, tol))
            && self.times.iter().zip(&other.times).all(|(a, b)| (a - b).abs() <= tol)
    }
}

/// A nonconstant curve in its constant-speed form; stands for its
/// equivalence class under increasing reparameterizations.
#[derive(Clone, Debug, PartialEq)]
pub struct NonParamCurve(ParametricCurve);

impl NonParamCurve {
    pub fn curve(&self) -> &ParametricCurve {
        &self.0
    }

    pub fn into_curve(self) -> ParametricCurve {
        self.0
    }

    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.0.approx_same(&other.0, tol)
    }
}

/// Whether two curves differ by an increasing change of time.
/// Constant curves are equivalent only to constant curves at the same place.
pub fn curves_equivalent(a: &ParametricCurve, b: &ParametricCurve, tol: f64) -> bool {
    match (a.constant_speed_reparam(), b.constant_speed_reparam()) {
        (Ok(ka), Ok(kb)) => ka.approx_eq(&kb, tol),
        (Err(_), Err(_)) => a.start().approx_eq(&b.start(), tol),
        _ => false,
    }
}
