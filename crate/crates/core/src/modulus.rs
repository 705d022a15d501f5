//! The p-modulus of a finite family of measures.
//!
//! `Mod_p(Σ) = min Σ_x m_x f_x^p` over `f >= 0` with `∫ f dμ >= 1` for all
//! `μ ∈ Σ`. The solver maximizes the concave dual
//!
//! ```text
//! g(λ) = Σ λ_i - (p-1) Σ_x m_x (a_x / (p m_x))^q,   a = Σ λ_i μ_i,  q = p/(p-1)
//! ```
//!
//! over `λ >= 0` and recovers `f_x = (a_x / (p m_x))^(1/(p-1))`. Every
//! returned density is rescaled to be exactly feasible, so `value` is an
//! upper bound and `dual_value` a lower bound on the modulus.
//!
//! On a finite space continuous densities are all densities, so the
//! modulus restricted to continuous `f` is the same number.

use nalgebra::DMatrix;

use crate::curves::ParametricCurve;
use crate::error::{Error, Result};
use crate::graph::PathOracle;
use crate::measure::{enumerate_family, CurveMap, DiscreteMeasure, FamilyKind, MeasureFamily};
use crate::optim::{self, Smooth};
use crate::space::{MetricMeasureSpace, Support};

/// Ratio of largest to smallest member mass above which a warning is issued.
pub const ILL_SCALED_RATIO: f64 = 1e12;

#[derive(Clone, Debug, PartialEq)]
pub struct SolverOptions {
    pub feas_tol: f64,
    pub kkt_tol: f64,
    /// Relative gap between the feasible primal value and the dual value.
    pub gap_tol: f64,
    pub max_iter: usize,
    /// Cap on explicit path enumeration.
    pub path_limit: usize,
    /// Cap on constraint-generation rounds.
    pub max_rounds: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            feas_tol: 1e-8,
            kkt_tol: 1e-8,
            gap_tol: 1e-9,
            max_iter: 100_000,
            path_limit: 100_000,
            max_rounds: 10_000,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("feas_tol", self.feas_tol), ("kkt_tol", self.kkt_tol), ("gap_tol", self.gap_tol)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive (got {v})")));
            }
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be positive".into()));
        }
        Ok(())
    }
}

pub fn check_exponent(p: f64) -> Result<()> {
    if p > 1.0 && p.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidExponent(p))
    }
}

/// `q = p / (p - 1)`.
pub fn conjugate(p: f64) -> f64 {
    p / (p - 1.0)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolveFlags {
    /// No member at all (for path families: no admissible path).
    pub empty_family: bool,
    /// Some member is the zero measure, so the modulus is infinite.
    pub zero_measure: bool,
    /// Members charging points of zero reference mass. Their constraint is
    /// met at no cost, so they are left out of the optimization.
    pub vanishing_support: Vec<usize>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModulusSolution {
    pub p: f64,
    /// `Σ m_x f_x^p` for the returned `f`; `inf` when the family is not admissible.
    pub value: f64,
    /// Dual objective at the returned multipliers.
    pub dual_value: f64,
    /// Density indexed like the reference measure (points or edges).
    pub f: Vec<f64>,
    /// One multiplier per member; dropped members get 0.
    pub multipliers: Vec<f64>,
    pub active_set: Vec<usize>,
    pub iterations: usize,
    /// `(value - dual_value) / value`.
    pub gap: f64,
    pub flags: SolveFlags,
}

impl ModulusSolution {
    fn trivial(p: f64, len: usize, members: usize, value: f64) -> Self {
        Self {
            p,
            value,
            dual_value: value,
            f: vec![0.0; len],
            multipliers: vec![0.0; members],
            active_set: Vec::new(),
            iterations: 0,
            gap: 0.0,
            flags: SolveFlags::default(),
        }
    }

    /// `∫ f dμ_i` for each member.
    pub fn integrals(&self, measures: &[DiscreteMeasure]) -> Vec<f64> {
        measures.iter().map(|mu| mu.integrate(&self.f)).collect()
    }

    /// Max-norm of `p m_x f_x^(p-1) - Σ λ_i μ_i(x)` over points with `m_x > 0`,
    /// relative to the largest multiplier mass on a point.
    pub fn stationarity_residual(&self, reference: &[f64], measures: &[DiscreteMeasure]) -> f64 {
        let a = combine(reference.len(), measures, &self.multipliers);
        let scale = a.iter().copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        reference
            .iter()
            .zip(&a)
            .zip(&self.f)
            .filter(|((r, _), _)| **r > 0.0)
            .map(|((r, ax), fx)| (self.p * r * fx.powf(self.p - 1.0) - ax).abs() / scale)
            .fold(0.0, f64::max)
    }

    /// `max_i λ_i (∫ f dμ_i - 1)`.
    pub fn complementary_slackness(&self, measures: &[DiscreteMeasure]) -> f64 {
        self.integrals(measures)
            .iter()
            .zip(&self.multipliers)
            .map(|(s, l)| l * (s - 1.0))
            .fold(0.0, f64::max)
    }
}

/// `Σ λ_i μ_i` as a dense vector.
pub fn combine(len: usize, measures: &[DiscreteMeasure], weights: &[f64]) -> Vec<f64> {
    let mut a = vec![0.0; len];
    for (mu, &l) in measures.iter().zip(weights) {
        if l != 0.0 {
            for (x, w) in mu.iter() {
                a[x] += l * w;
            }
        }
    }
    a
}

/// A family restricted to the points it charges, with both incidence directions.
pub(crate) struct Incidence {
    pub points: Vec<usize>,
    pub reference: Vec<f64>,
    pub cols: Vec<Vec<(usize, f64)>>,
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl Incidence {
    pub fn new(reference: &[f64], measures: &[&DiscreteMeasure]) -> Self {
        let mut local = vec![usize::MAX; reference.len()];
        let mut points = Vec::new();
        for mu in measures {
            for (x, _) in mu.iter() {
                if local[x] == usize::MAX {
                    local[x] = 0;
                    points.push(x);
                }
            }
        }
        points.sort_unstable();
        for (k, &x) in points.iter().enumerate() {
            local[x] = k;
        }
        let cols: Vec<Vec<(usize, f64)>> =
            measures.iter().map(|mu| mu.iter().map(|(x, w)| (local[x], w)).collect()).collect();
        let mut rows = vec![Vec::new(); points.len()];
        for (i, col) in cols.iter().enumerate() {
            for &(k, w) in col {
                rows[k].push((i, w));
            }
        }
        let reference = points.iter().map(|&x| reference[x]).collect();
        Self { points, reference, cols, rows }
    }

    pub fn len(&self) -> usize {
        self.cols.len()
    }

    pub fn combine(&self, lambda: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|row| row.iter().map(|&(i, w)| lambda[i] * w).sum()).collect()
    }

    pub fn integrals(&self, f: &[f64]) -> Vec<f64> {
        self.cols.iter().map(|col| col.iter().map(|&(k, w)| w * f[k]).sum()).collect()
    }

    /// `Σ_x d_x μ_i(x) μ_j(x)` for `i, j` in `face`.
    pub fn gram(&self, d: &[f64], face: &[usize]) -> DMatrix<f64> {
        let mut pos = vec![usize::MAX; self.len()];
        for (k, &i) in face.iter().enumerate() {
            pos[i] = k;
        }
        let mut h = DMatrix::zeros(face.len(), face.len());
        let mut local: Vec<(usize, f64)> = Vec::new();
        for (row, &dx) in self.rows.iter().zip(d) {
            if dx == 0.0 {
                continue;
            }
            local.clear();
            local.extend(row.iter().filter(|(i, _)| pos[*i] != usize::MAX).map(|&(i, w)| (pos[i], w)));
            for &(a, wa) in &local {
                for &(b, wb) in &local {
                    h[(a, b)] += dx * wa * wb;
                }
            }
        }
        h
    }

    pub fn expand(&self, local: &[f64], len: usize) -> Vec<f64> {
        let mut out = vec![0.0; len];
        for (k, &x) in self.points.iter().enumerate() {
            out[x] = local[k];
        }
        out
    }
}

/// Negated dual, to be minimized over `λ >= 0`.
struct NegDual<'a> {
    inc: &'a Incidence,
    p: f64,
}

impl NegDual<'_> {
    fn density(&self, a: &[f64]) -> Vec<f64> {
        let e = 1.0 / (self.p - 1.0);
        a.iter()
            .zip(&self.inc.reference)
            .map(|(&ax, &r)| if ax > 0.0 { (ax / (self.p * r)).powf(e) } else { 0.0 })
            .collect()
    }

    fn energy(&self, f: &[f64]) -> f64 {
        f.iter().zip(&self.inc.reference).map(|(fx, r)| r * fx.powf(self.p)).sum()
    }

    /// Feasible primal value, dual value and their relative gap at `λ`.
    fn certificate(&self, lambda: &[f64]) -> (f64, f64, f64) {
        let f = self.density(&self.inc.combine(lambda));
        let energy = self.energy(&f);
        let smin = self.inc.integrals(&f).into_iter().fold(f64::INFINITY, f64::min);
        let dual = lambda.iter().sum::<f64>() - (self.p - 1.0) * energy;
        if !(smin > 0.0) {
            return (f64::INFINITY, dual, f64::INFINITY);
        }
        let primal = energy / smin.powf(self.p);
        (primal, dual, (primal - dual) / primal)
    }
}

impl Smooth for NegDual<'_> {
    fn eval(&self, lambda: &[f64]) -> (f64, Vec<f64>) {
        let f = self.density(&self.inc.combine(lambda));
        let value = (self.p - 1.0) * self.energy(&f) - lambda.iter().sum::<f64>();
        let grad = self.inc.integrals(&f).into_iter().map(|s| s - 1.0).collect();
        (value, grad)
    }

    fn hessian(&self, lambda: &[f64], face: &[usize]) -> DMatrix<f64> {
        let a = self.inc.combine(lambda);
        let f = self.density(&a);
        let d: Vec<f64> = a
            .iter()
            .zip(&f)
            .map(|(&ax, &fx)| if ax > 0.0 { fx / ((self.p - 1.0) * ax) } else { 0.0 })
            .collect();
        self.inc.gram(&d, face)
    }
}

fn validate_members(reference: &[f64], measures: &[DiscreteMeasure]) -> Result<()> {
    for (i, mu) in measures.iter().enumerate() {
        if let Some(x) = mu.max_index().filter(|&x| x >= reference.len()) {
            return Err(Error::InvalidMeasure(format!(
                "member {i} charges index {x} outside [0, {})",
                reference.len()
            )));
        }
    }
    Ok(())
}

pub(crate) fn scale_warnings(measures: &[DiscreteMeasure]) -> Vec<String> {
    let totals = measures.iter().map(DiscreteMeasure::total).filter(|t| *t > 0.0);
    let (lo, hi) = totals.fold((f64::INFINITY, 0.0_f64), |(lo, hi), t| (lo.min(t), hi.max(t)));
    if hi > 0.0 && hi / lo > ILL_SCALED_RATIO {
        vec![format!("ill-scaled family: member masses range over a factor {:.3e}", hi / lo)]
    } else {
        Vec::new()
    }
}

/// Members kept for optimization and members charging null points.
pub(crate) fn split_vanishing(reference: &[f64], measures: &[DiscreteMeasure]) -> (Vec<usize>, Vec<usize>) {
    (0..measures.len()).partition(|&i| measures[i].charges_null_point(reference).is_none())
}

/// Modulus with densities on the points of `space`.
pub fn solve_modulus_explicit(
    space: &MetricMeasureSpace,
    measures: &[DiscreteMeasure],
    p: f64,
    opts: &SolverOptions,
) -> Result<ModulusSolution> {
    solve_modulus_with_reference(space.measure(), measures, p, opts, None)
}

/// Modulus against an arbitrary reference measure, optionally warm-started
/// from multipliers `warm` (one per member).
pub fn solve_modulus_with_reference(
    reference: &[f64],
    measures: &[DiscreteMeasure],
    p: f64,
    opts: &SolverOptions,
    warm: Option<&[f64]>,
) -> Result<ModulusSolution> {
    check_exponent(p)?;
    opts.validate()?;
    validate_members(reference, measures)?;
    let n = reference.len();
    let k = measures.len();
    if k == 0 {
        let mut sol = ModulusSolution::trivial(p, n, 0, 0.0);
        sol.flags.empty_family = true;
        return Ok(sol);
    }
    if measures.iter().any(DiscreteMeasure::is_zero) {
        let mut sol = ModulusSolution::trivial(p, n, k, f64::INFINITY);
        sol.flags.zero_measure = true;
        return Ok(sol);
    }
    let (kept, vanishing) = split_vanishing(reference, measures);
    let mut sol = ModulusSolution::trivial(p, n, k, 0.0);
    sol.flags.vanishing_support = vanishing;
    sol.flags.warnings = scale_warnings(measures);
    if kept.is_empty() {
        return Ok(sol);
    }

    let members: Vec<&DiscreteMeasure> = kept.iter().map(|&i| &measures[i]).collect();
    let inc = Incidence::new(reference, &members);
    let dual = NegDual { inc: &inc, p };
    let default = vec![1.0 / k as f64; kept.len()];
    let x0 = match warm {
        Some(w) if w.len() == k => {
            let x: Vec<f64> = kept.iter().map(|&i| w[i]).collect();
            if x.iter().all(|v| v.is_finite() && *v >= 0.0) && x.iter().any(|v| *v > 0.0) {
                x
            } else {
                default
            }
        }
        _ => default,
    };
    let mut last_gap = f64::INFINITY;
    let out = optim::minimize(&dual, x0, opts.max_iter, |lambda, _, grad| {
        let (_, _, gap) = dual.certificate(lambda);
        last_gap = gap;
        gap <= opts.gap_tol && optim::projected_gradient_norm(lambda, grad) <= opts.kkt_tol
    });
    if !out.converged {
        return Err(Error::NotConverged { iterations: out.iterations, gap: last_gap });
    }
    let lambda = out.x;
    let f_local = dual.density(&inc.combine(&lambda));
    let smin = inc.integrals(&f_local).into_iter().fold(f64::INFINITY, f64::min);
    let f_local: Vec<f64> = f_local.iter().map(|v| v / smin).collect();
    let value = dual.energy(&f_local);
    let dual_value = lambda.iter().sum::<f64>() - (p - 1.0) * dual.energy(&dual.density(&inc.combine(&lambda)));
    sol.value = value;
    sol.dual_value = dual_value;
    sol.gap = (value - dual_value) / value;
    sol.f = inc.expand(&f_local, n);
    for (j, &i) in kept.iter().enumerate() {
        sol.multipliers[i] = lambda[j];
    }
    sol.active_set = (0..k).filter(|&i| sol.multipliers[i] > 0.0).collect();
    sol.iterations = out.iterations;
    Ok(sol)
}

/// A solved family together with the explicit members behind it.
#[derive(Clone, Debug)]
pub struct FamilySolution {
    pub solution: ModulusSolution,
    pub measures: Vec<DiscreteMeasure>,
    pub curves: Option<Vec<ParametricCurve>>,
    pub support: Support,
}

/// Per-edge weights `∫ f dJ` of single edge traversals; edges touching
/// points of zero reference mass are closed.
pub fn traversal_weights(space: &MetricMeasureSpace, f: &[f64], support: Support) -> Vec<f64> {
    let m = space.measure();
    let em = space.edge_measure();
    space
        .edges()
        .iter()
        .enumerate()
        .map(|(k, e)| match support {
            Support::Nodes if m[e.u] == 0.0 || m[e.v] == 0.0 => f64::INFINITY,
            Support::Nodes => e.length * 0.5 * (f[e.u] + f[e.v]),
            Support::Edges if em[k] == 0.0 => f64::INFINITY,
            Support::Edges => e.length * f[k],
        })
        .collect()
}

/// Modulus of all simple source-target paths by constraint generation: the
/// restricted problem is re-solved after adding the path minimizing `∫ f dJγ`
/// until that minimum reaches `1 - feas_tol`.
pub fn solve_modulus_paths(
    space: &MetricMeasureSpace,
    family: &MeasureFamily,
    p: f64,
    opts: &SolverOptions,
) -> Result<FamilySolution> {
    check_exponent(p)?;
    opts.validate()?;
    family.validate(space)?;
    let FamilyKind::Paths { sources, targets, max_hops, support } = &family.kind else {
        return Err(Error::InvalidFamily(format!("family '{}' is not a path family", family.name)));
    };
    let support = *support;
    let reference = space.reference(support);
    let oracle = PathOracle::new(space, sources, targets, *max_hops);
    let uniform = vec![1.0; reference.len()];
    let mut paths: Vec<Vec<usize>> = Vec::new();
    let mut measures: Vec<DiscreteMeasure> = Vec::new();
    let mut curves: Vec<ParametricCurve> = Vec::new();
    let Some((first, _)) = oracle.shortest(&traversal_weights(space, &uniform, support)) else {
        let mut sol = ModulusSolution::trivial(p, reference.len(), 0, 0.0);
        sol.flags.empty_family = true;
        return Ok(FamilySolution { solution: sol, measures, curves: Some(curves), support });
    };
    let mut push = |path: Vec<usize>, measures: &mut Vec<DiscreteMeasure>, curves: &mut Vec<ParametricCurve>| -> Result<()> {
        let c = ParametricCurve::through_nodes(space, &path)?;
        measures.push(c.j_measure(support));
        curves.push(c);
        paths.push(path);
        Ok(())
    };
    push(first, &mut measures, &mut curves)?;
    let mut lambda = vec![1.0];
    let mut iterations = 0;
    for _ in 0..opts.max_rounds {
        let mut sol = solve_modulus_with_reference(reference, &measures, p, opts, Some(&lambda))?;
        iterations += sol.iterations;
        let weights = traversal_weights(space, &sol.f, support);
        let (path, len) = oracle.shortest(&weights).expect("a path was found before");
        let known = curves.iter().any(|c| c.node_sequence().as_deref() == Some(&path[..]));
        if len >= 1.0 - opts.feas_tol || known {
            if !(len >= 1.0 - opts.feas_tol) {
                sol.flags.warnings.push(format!(
                    "separation stalled: shortest path integral {len} repeats a known path"
                ));
            }
            sol.iterations = iterations;
            return Ok(FamilySolution { solution: sol, measures, curves: Some(curves), support });
        }
        lambda = sol.multipliers;
        lambda.push(0.0);
        push(path, &mut measures, &mut curves)?;
    }
    Err(Error::NotConverged { iterations, gap: f64::NAN })
}

/// Solves any family kind, expanding curves through `J` or `M`.
pub fn solve_family(
    space: &MetricMeasureSpace,
    family: &MeasureFamily,
    p: f64,
    opts: &SolverOptions,
) -> Result<FamilySolution> {
    family.validate(space)?;
    match &family.kind {
        FamilyKind::Paths { .. } => solve_modulus_paths(space, family, p, opts),
        FamilyKind::Explicit { measures, support } => {
            let solution = solve_modulus_with_reference(space.reference(*support), measures, p, opts, None)?;
            Ok(FamilySolution { solution, measures: measures.clone(), curves: None, support: *support })
        }
        FamilyKind::Curves { support, map, .. } => {
            let e = enumerate_family(family, space, usize::MAX)?;
            let reference = space.reference(match map {
                CurveMap::J => *support,
                CurveMap::M => Support::Nodes,
            });
            let solution = solve_modulus_with_reference(reference, &e.measures, p, opts, None)?;
            Ok(FamilySolution { solution, measures: e.measures, curves: e.curves, support: *support })
        }
    }
}

/// Members whose constraint is saturated, `|∫ f dμ_i - 1| <= sat_tol`.
/// Members charging null points are never reported.
pub fn saturated_subfamily(solution: &ModulusSolution, measures: &[DiscreteMeasure], sat_tol: f64) -> Vec<usize> {
    let skip = &solution.flags.vanishing_support;
    solution
        .integrals(measures)
        .iter()
        .enumerate()
        .filter(|(i, s)| !skip.contains(i) && (*s - 1.0).abs() <= sat_tol)
        .map(|(i, _)| i)
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct PropertiesReport {
    pub mod_a: f64,
    pub mod_b: f64,
    pub mod_union: f64,
    pub chain: Vec<f64>,
    pub violations: Vec<String>,
}

impl PropertiesReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Numerical check of monotonicity, subadditivity of `Mod^(1/p)`,
/// continuity along a nested chain ending at `A ∪ B`, and stability of
/// null families under scaling.
pub fn mod_properties_check(
    space: &MetricMeasureSpace,
    a: &[DiscreteMeasure],
    b: &[DiscreteMeasure],
    p: f64,
    opts: &SolverOptions,
) -> Result<PropertiesReport> {
    const TOL: f64 = 1e-7;
    let solve = |ms: &[DiscreteMeasure]| solve_modulus_explicit(space, ms, p, opts).map(|s| s.value);
    let union: Vec<DiscreteMeasure> = a.iter().chain(b).cloned().collect();
    let mod_a = solve(a)?;
    let mod_b = solve(b)?;
    let mod_union = solve(&union)?;
    let le = |x: f64, y: f64| x <= y || x - y <= TOL * y.abs().max(1.0);
    let mut violations = Vec::new();
    if !le(mod_a, mod_union) || !le(mod_b, mod_union) {
        violations.push(format!("monotonicity: Mod(A) = {mod_a}, Mod(B) = {mod_b}, Mod(A∪B) = {mod_union}"));
    }
    let root = |v: f64| v.powf(1.0 / p);
    if !le(root(mod_union), root(mod_a) + root(mod_b)) {
        violations.push(format!(
            "subadditivity: Mod(A∪B)^(1/p) = {} > {} + {}",
            root(mod_union),
            root(mod_a),
            root(mod_b)
        ));
    }
    let n = union.len();
    let cuts: Vec<usize> = [n.div_ceil(3), (2 * n).div_ceil(3), n].into_iter().filter(|&c| c > 0).collect();
    let chain = cuts.iter().map(|&c| solve(&union[..c])).collect::<Result<Vec<_>>>()?;
    if chain.windows(2).any(|w| !le(w[0], w[1])) {
        violations.push(format!("nested chain not monotone: {chain:?}"));
    }
    if let Some(&last) = chain.last() {
        if !(last == mod_union || (last - mod_union).abs() <= TOL * mod_union.abs().max(1.0)) {
            violations.push(format!("chain limit {last} differs from Mod(A∪B) = {mod_union}"));
        }
    }
    if mod_a <= 1e-10 {
        for c in [0.5, 2.0] {
            let scaled = a.iter().map(|mu| mu.scaled(c)).collect::<Result<Vec<_>>>()?;
            let v = solve(&scaled)?;
            if v > 1e-10 {
                violations.push(format!("null family scaled by {c} has modulus {v}"));
            }
        }
    }
    Ok(PropertiesReport { mod_a, mod_b, mod_union, chain, violations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{build_grid_space, CellMeasure, Edge};

    /// Uniform `n`-cell discretization of [0, 1] with the three measures of
    /// the saturated example: both halves and the whole interval.
    pub(crate) fn halves(n: usize) -> (MetricMeasureSpace, Vec<DiscreteMeasure>) {
        let s = build_grid_space(n, 1, CellMeasure::Uniform).unwrap();
        let m = s.measure().to_vec();
        let left = DiscreteMeasure::from_pairs((0..n / 2).map(|x| (x, m[x]))).unwrap();
        let right = DiscreteMeasure::from_pairs((n / 2..n).map(|x| (x, m[x]))).unwrap();
        let full = DiscreteMeasure::from_dense(&m).unwrap();
        (s, vec![left, right, full])
    }

    #[test]
    fn saturated_example() {
        let (s, ms) = halves(200);
        for p in [1.5, 2.0, 3.0] {
            let sol = solve_modulus_explicit(&s, &ms, p, &SolverOptions::default()).unwrap();
            let want = 2f64.powf(p);
            assert!((sol.value - want).abs() <= 1e-9 * want, "p={p}: {}", sol.value);
            assert!(sol.f.iter().all(|v| (v - 2.0).abs() < 1e-8));
            assert_eq!(saturated_subfamily(&sol, &ms, 1e-6), vec![0, 1]);
            let lam = p * 2f64.powf(p - 1.0);
            assert!((sol.multipliers[0] - lam).abs() < 1e-6 * lam);
            assert!(sol.multipliers[2].abs() < 1e-9);
        }
    }

    #[test]
    fn trivial_families() {
        let s = build_grid_space(4, 1, CellMeasure::Uniform).unwrap();
        let o = SolverOptions::default();
        let e = solve_modulus_explicit(&s, &[], 2.0, &o).unwrap();
        assert_eq!(e.value, 0.0);
        assert!(e.flags.empty_family && e.f.iter().all(|v| *v == 0.0));
        let z = solve_modulus_explicit(&s, &[DiscreteMeasure::dirac(0), DiscreteMeasure::zero()], 2.0, &o).unwrap();
        assert_eq!(z.value, f64::INFINITY);
        assert!(z.flags.zero_measure);
        let m = DiscreteMeasure::from_dense(s.measure()).unwrap();
        let one = solve_modulus_explicit(&s, &[m], 2.0, &o).unwrap();
        assert!((one.value - 1.0).abs() < 1e-12);
        assert!(one.f.iter().all(|v| (v - 1.0).abs() < 1e-10));
        assert!(matches!(solve_modulus_explicit(&s, &[], 1.0, &o), Err(Error::InvalidExponent(_))));
    }

    #[test]
    fn null_point_members_are_free() {
        let s = MetricMeasureSpace::new(
            vec![0.5, 0.5, 0.0],
            vec![Edge { u: 0, v: 1, length: 1.0 }, Edge { u: 1, v: 2, length: 1.0 }],
            None,
            None,
        )
        .unwrap();
        let o = SolverOptions::default();
        let null = vec![DiscreteMeasure::dirac(2)];
        let sol = solve_modulus_explicit(&s, &null, 2.0, &o).unwrap();
        assert_eq!(sol.value, 0.0);
        assert_eq!(sol.flags.vanishing_support, vec![0]);
        let rep = mod_properties_check(&s, &null, &[DiscreteMeasure::dirac(0)], 2.0, &o).unwrap();
        assert!(rep.passed(), "{:?}", rep.violations);
        assert_eq!(rep.mod_a, 0.0);
    }

    #[test]
    fn stationarity_and_slackness() {
        let (s, ms) = halves(20);
        let sol = solve_modulus_explicit(&s, &ms, 3.0, &SolverOptions::default()).unwrap();
        assert!(sol.stationarity_residual(s.measure(), &ms) < 1e-8);
        assert!(sol.complementary_slackness(&ms) < 1e-8);
    }

    #[test]
    fn single_edge_path_family() {
        let s = build_grid_space(2, 1, CellMeasure::Uniform).unwrap();
        let fam = MeasureFamily::paths("lr", vec![0], vec![1], None, Support::Nodes).unwrap();
        let sol = solve_modulus_paths(&s, &fam, 2.0, &SolverOptions::default()).unwrap();
        assert!((sol.solution.value - 1.0).abs() < 1e-12);
        assert!(sol.solution.f.iter().all(|v| (v - 1.0).abs() < 1e-10));
    }

    #[test]
    fn generation_matches_enumeration() {
        let s = build_grid_space(3, 3, CellMeasure::Uniform).unwrap();
        let o = SolverOptions::default();
        for support in [Support::Nodes, Support::Edges] {
            let fam = MeasureFamily::paths("lr", vec![0, 3, 6], vec![2, 5, 8], None, support).unwrap();
            let generated = solve_modulus_paths(&s, &fam, 2.0, &o).unwrap().solution.value;
            let all = enumerate_family(&fam, &s, 10_000).unwrap();
            assert!(!all.truncated);
            let full = solve_modulus_with_reference(s.reference(support), &all.measures, 2.0, &o, None).unwrap();
            assert!((generated - full.value).abs() <= 1e-8 * full.value, "{generated} vs {}", full.value);
        }
    }

    #[test]
    fn disconnected_paths() {
        let s = MetricMeasureSpace::new(
            vec![0.25; 4],
            vec![Edge { u: 0, v: 1, length: 1.0 }, Edge { u: 2, v: 3, length: 1.0 }],
            None,
            None,
        )
        .unwrap();
        let fam = MeasureFamily::paths("x", vec![0], vec![3], None, Support::Nodes).unwrap();
        let sol = solve_modulus_paths(&s, &fam, 2.0, &SolverOptions::default()).unwrap();
        assert_eq!(sol.solution.value, 0.0);
        assert!(sol.solution.flags.empty_family);
    }

    #[test]
    fn duplicated_members() {
        let (s, ms) = halves(10);
        let o = SolverOptions::default();
        let single = solve_modulus_explicit(&s, &ms[..1], 2.0, &o).unwrap();
        let twice = vec![ms[0].clone(), ms[0].clone()];
        let both = solve_modulus_explicit(&s, &twice, 2.0, &o).unwrap();
        assert!((single.value - both.value).abs() < 1e-10);
        assert_eq!(saturated_subfamily(&both, &twice, 1e-6), vec![0, 1]);
        // closed form for one member: f = μ/m normalized, value = 1/∫(μ/m)^p dm... at p = 2: 1/Σ μ²/m
        let closed = 1.0 / ms[0].iter().map(|(x, w)| w * w / s.measure()[x]).sum::<f64>();
        assert!((single.value - closed).abs() < 1e-10 * closed);
    }

    #[test]
    fn non_convergence_is_reported() {
        let (s, ms) = halves(50);
        let o = SolverOptions { max_iter: 1, gap_tol: 1e-15, kkt_tol: 1e-15, ..Default::default() };
        assert!(matches!(solve_modulus_explicit(&s, &ms, 3.0, &o), Err(Error::NotConverged { .. })));
    }
}
