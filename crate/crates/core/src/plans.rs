//! Probability measures on parametric curves.
//!
//! Occupation and time marginals use the same hat-function weights as
//! [`ParametricCurve::m_map`], so `Σ_γ ρ(γ) ∫_0^1 f(γ_t) dt = Σ_x f_x h_x m_x`
//! holds as an identity between the two quadratures.

use std::collections::BTreeMap;

use crate::curves::{Location, Motion, ParametricCurve, EQUIVALENCE_TOL};
use crate::duality::{check_probabilities, lq_norm, plan_barycenter, Barycenter, MeasurePlan};
use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;
use crate::modulus::{check_exponent, conjugate};
use crate::space::Support;

#[derive(Clone, Debug, PartialEq)]
pub struct CurvePlan {
    curves: Vec<ParametricCurve>,
    probabilities: Vec<f64>,
}

impl CurvePlan {
    pub fn new(curves: Vec<ParametricCurve>, probabilities: Vec<f64>) -> Result<Self> {
        check_probabilities(&probabilities)?;
        if curves.len() != probabilities.len() {
            return Err(Error::InvalidPlan(format!(
                "{} curves but {} probabilities",
                curves.len(),
                probabilities.len()
            )));
        }
        Ok(Self { curves, probabilities })
    }

    /// Equal weights on the given curves.
    pub fn uniform(curves: Vec<ParametricCurve>) -> Result<Self> {
        let n = curves.len();
        Self::new(curves, vec![1.0 / n.max(1) as f64; n])
    }

    pub fn curves(&self) -> &[ParametricCurve] {
        &self.curves
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn len(&self) -> usize {
        self.curves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curves.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ParametricCurve, f64)> {
        self.curves.iter().zip(self.probabilities.iter().copied())
    }

    pub fn energies(&self, q: f64) -> Vec<f64> {
        self.curves.iter().map(|c| c.energy(q)).collect()
    }

    pub fn lengths(&self) -> Vec<f64> {
        self.curves.iter().map(ParametricCurve::length).collect()
    }

    /// Largest segment speed over the support.
    pub fn lipschitz(&self) -> f64 {
        self.curves.iter().map(ParametricCurve::lipschitz).fold(0.0, f64::max)
    }

    /// `Σ ρ(γ) M(γ)`.
    pub fn occupation(&self) -> DiscreteMeasure {
        let mut acc = BTreeMap::new();
        for (c, w) in self.iter() {
            for (x, v) in c.m_map().iter() {
                *acc.entry(x).or_insert(0.0) += w * v;
            }
        }
        DiscreteMeasure::from_pairs(acc).expect("occupation is nonnegative")
    }

    /// The plan on `J`-images, i.e. the nonparametric plan seen as a plan on measures.
    pub fn j_plan(&self, support: Support) -> MeasurePlan {
        MeasurePlan {
            measures: self.curves.iter().map(|c| c.j_measure(support)).collect(),
            probabilities: self.probabilities.clone(),
        }
    }

    // Sorts atoms canonically and merges exact duplicates.
    fn merged(pairs: Vec<(ParametricCurve, f64)>) -> Self {
        let mut pairs = pairs;
        pairs.sort_by(|a, b| a.0.canonical_cmp(&b.0));
        let mut curves: Vec<ParametricCurve> = Vec::with_capacity(pairs.len());
        let mut probabilities: Vec<f64> = Vec::with_capacity(pairs.len());
        for (c, w) in pairs {
            if curves.last() == Some(&c) {
                *probabilities.last_mut().unwrap() += w;
            } else {
                curves.push(c);
                probabilities.push(w);
            }
        }
        let total: f64 = probabilities.iter().sum();
        probabilities.iter_mut().for_each(|w| *w /= total);
        Self { curves, probabilities }
    }
}

/// Density `h` of the averaged occupation with respect to `m`, with `‖h‖_q`.
pub fn parametric_barycenter(plan: &CurvePlan, reference: &[f64], q: f64) -> Result<Barycenter> {
    plan_barycenter(&MeasurePlan::dirac(plan.occupation()), reference, q)
}

/// `∫ E_q dρ`.
pub fn q_energy(plan: &CurvePlan, q: f64) -> f64 {
    plan.iter().map(|(c, w)| w * c.energy(q)).sum()
}

fn weight_at(loc: &Location, x: usize) -> f64 {
    loc.weights().iter().filter(|(y, _)| *y == x).map(|(_, w)| w).sum()
}

fn motion_points(m: &Motion) -> [usize; 2] {
    match *m {
        Motion::Rest(loc) => {
            let [(a, _), (b, _)] = loc.weights();
            [a, b]
        }
        Motion::Move { u, v, .. } => [u, v],
    }
}

/// Time marginal `t ↦ (e_t)_♯ρ(x)` of one point, sampled at every time
/// where it can change slope (it is linear in between), including 0 and 1.
struct Profile {
    point: usize,
    samples: Vec<(f64, f64)>,
}

fn marginal_profiles(plan: &CurvePlan) -> Vec<Profile> {
    let mut touch: BTreeMap<usize, (Vec<usize>, Vec<f64>)> = BTreeMap::new();
    for (i, c) in plan.curves.iter().enumerate() {
        let t = c.times();
        for (k, m) in c.motions().iter().enumerate() {
            for x in motion_points(m) {
                let entry = touch.entry(x).or_default();
                if entry.0.last() != Some(&i) {
                    entry.0.push(i);
                }
                entry.1.push(t[k]);
                entry.1.push(t[k + 1]);
            }
        }
    }
    touch
        .into_iter()
        .map(|(x, (curves, mut times))| {
            times.push(0.0);
            times.push(1.0);
            times.sort_by(f64::total_cmp);
            times.dedup();
            let samples = times
                .into_iter()
                .map(|t| {
                    let mass = curves
                        .iter()
                        .map(|&i| plan.probabilities[i] * weight_at(&plan.curves[i].eval(t), x))
                        .sum();
                    (t, mass)
                })
                .collect();
            Profile { point: x, samples }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct TestPlanReport {
    pub is_test_plan: bool,
    /// Smallest `C` with `(e_t)_♯ρ <= C m` for all `t`.
    pub c_min: f64,
    /// Where the supremum is attained.
    pub time: f64,
    pub point: usize,
}

/// Evaluates the time marginals exactly (they are piecewise linear in `t`).
pub fn testplan_check(plan: &CurvePlan, reference: &[f64]) -> TestPlanReport {
    let mut best = TestPlanReport { is_test_plan: true, c_min: 0.0, time: 0.0, point: 0 };
    for prof in marginal_profiles(plan) {
        let m = reference[prof.point];
        for &(t, mass) in &prof.samples {
            let ratio = if mass <= 0.0 {
                0.0
            } else if m == 0.0 {
                f64::INFINITY
            } else {
                mass / m
            };
            if ratio > best.c_min {
                best = TestPlanReport { is_test_plan: true, c_min: ratio, time: t, point: prof.point };
            }
        }
    }
    best.is_test_plan = best.c_min.is_finite();
    best
}

/// Largest total variation in `t` of the marginal densities `(e_t)_♯ρ(x)/m_x`.
pub fn marginal_variation(plan: &CurvePlan, reference: &[f64]) -> f64 {
    marginal_profiles(plan)
        .into_iter()
        .map(|prof| {
            let tv: f64 = prof.samples.windows(2).map(|w| (w[1].1 - w[0].1).abs()).sum();
            match reference[prof.point] {
                m if m > 0.0 => tv / m,
                _ if tv > 0.0 => f64::INFINITY,
                _ => 0.0,
            }
        })
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImprovedPlan {
    pub plan: CurvePlan,
    /// Normalization `z = ∫ G dσ`, in `(0, 1/ε]`.
    pub z: f64,
    /// The weight `h = 1/(ε ∨ g)` per point.
    pub weight: Vec<f64>,
    /// Supremum over `m`-positive points of the new parametric barycenter.
    pub barycenter_sup: f64,
    pub energy: f64,
    /// `(L^q/(z ε^q)) Σ_x g_x (ε ∨ g_x)^(q-1) m_x`, the continuum bound.
    pub energy_bound: f64,
    /// Same bound with `h^(1-q)` taken at the worse endpoint of every
    /// traversed edge; this is the one the discrete time change satisfies.
    pub energy_bound_discrete: f64,
    /// False when some segment ends inside an edge and the requested
    /// occupation could not be matched exactly.
    pub exact: bool,
}

/// Slows every curve down where the barycenter `g` of `σ` is large:
/// `h = 1/(ε ∨ g)`, curves are reweighted by `G(σ) = ∫ h(σ_r) dr` and
/// reparameterized so that their occupation becomes `h M(σ)/G(σ)`.
/// The new barycenter is then `g h / z <= 1/z`.
///
/// Within a segment the occupation can only be redistributed between its
/// endpoints by resting at them, so each segment becomes
/// rest, move, rest with durations solving for the target occupation.
pub fn improve_barycenter(sigma: &CurvePlan, reference: &[f64], q: f64, eps: f64) -> Result<ImprovedPlan> {
    check_exponent(q)?;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!("eps must be positive (got {eps})")));
    }
    let g = parametric_barycenter(sigma, reference, q)?.density;
    let weight: Vec<f64> = g.iter().map(|gx| 1.0 / gx.max(eps)).collect();
    let lip = sigma.lipschitz();
    let mut pairs = Vec::with_capacity(sigma.len());
    let mut z = 0.0;
    let mut exact = true;
    let mut discrete_sum = 0.0;
    for (c, w) in sigma.iter() {
        let big_g = c.time_average(&weight);
        z += w * big_g;
        let (curve, ok) = time_change(c, &weight, big_g);
        exact &= ok;
        pairs.push((curve, w * big_g));
        let times = c.times();
        for (k, m) in c.motions().iter().enumerate() {
            if let Motion::Move { u, v, .. } = *m {
                let worst = weight[u].min(weight[v]).powf(1.0 - q);
                discrete_sum += w * (times[k + 1] - times[k]) * worst;
            }
        }
    }
    let pairs = pairs.into_iter().map(|(c, w)| (c, w / z)).collect();
    let plan = CurvePlan::new_unchecked(pairs);
    let h_new = parametric_barycenter(&plan, reference, q)?.density;
    let barycenter_sup = sup_on_support(&h_new, reference);
    let energy = q_energy(&plan, q);
    let factor = lip.powf(q) / (z * eps.powf(q));
    let continuum: f64 = g
        .iter()
        .zip(reference)
        .map(|(gx, m)| gx * gx.max(eps).powf(q - 1.0) * m)
        .sum();
    Ok(ImprovedPlan {
        plan,
        z,
        weight,
        barycenter_sup,
        energy,
        energy_bound: factor * continuum,
        energy_bound_discrete: factor * discrete_sum,
        exact,
    })
}

impl CurvePlan {
    fn new_unchecked(pairs: Vec<(ParametricCurve, f64)>) -> Self {
        let (curves, probabilities) = pairs.into_iter().unzip();
        Self { curves, probabilities }
    }
}

fn sup_on_support(density: &[f64], reference: &[f64]) -> f64 {
    density
        .iter()
        .zip(reference)
        .filter(|(_, m)| **m > 0.0)
        .map(|(h, _)| *h)
        .fold(0.0, f64::max)
}

// Reparameterization of one curve with occupation h M(c) / G.
fn time_change(c: &ParametricCurve, weight: &[f64], big_g: f64) -> (ParametricCurve, bool) {
    let times = c.times();
    let mut motions = Vec::new();
    let mut durations = Vec::new();
    let mut exact = true;
    let push = |m: Motion, d: f64, motions: &mut Vec<Motion>, durations: &mut Vec<f64>| {
        if d > 0.0 {
            motions.push(m);
            durations.push(d);
        }
    };
    for (k, m) in c.motions().iter().enumerate() {
        let dt = times[k + 1] - times[k];
        match *m {
            Motion::Rest(loc) => {
                let [(a, wa), (b, wb)] = loc.weights();
                if wb > 0.0 && weight[a] != weight[b] {
                    exact = false;
                }
                let target = dt * (wa * weight[a] + wb * weight[b]) / big_g;
                push(Motion::Rest(loc), target, &mut motions, &mut durations);
            }
            Motion::Move { u, v, from, to, .. } => {
                let mean = 0.5 * (from + to);
                let at_u = weight[u] * dt * (1.0 - mean) / big_g;
                let at_v = weight[v] * dt * mean / big_g;
                let total = at_u + at_v;
                // fraction of the occupation that should sit at the far end, in segment coordinates
                let target = at_v / total;
                let mut phi = (target - from) / (to - from);
                if !(0.0..=1.0).contains(&phi) {
                    exact = false;
                    phi = phi.clamp(0.0, 1.0);
                }
                let travel = 2.0 * phi.min(1.0 - phi) * total;
                let rest_end = phi * total - 0.5 * travel;
                let rest_start = total - travel - rest_end;
                push(Motion::Rest(m.at(0.0)), rest_start, &mut motions, &mut durations);
                push(*m, travel, &mut motions, &mut durations);
                push(Motion::Rest(m.at(1.0)), rest_end, &mut motions, &mut durations);
            }
        }
    }
    (ParametricCurve::from_motions(motions, &durations), exact)
}

/// The bound `c_q(i_♯ρ) <= (∫E_q dρ)^(1/q) ‖h‖_∞^(1/p)` evaluated on both sides.
#[derive(Clone, Debug, PartialEq)]
pub struct NonparametricBound {
    pub c_q: f64,
    pub bound: f64,
}

pub fn nonparametric_bound(plan: &CurvePlan, reference: &[f64], q: f64) -> Result<NonparametricBound> {
    check_exponent(q)?;
    let h = parametric_barycenter(plan, reference, q)?.density;
    let j = plan_barycenter(&plan.j_plan(Support::Nodes), reference, q)?;
    let p = conjugate(q);
    let bound = q_energy(plan, q).powf(1.0 / q) * sup_on_support(&h, reference).powf(1.0 / p);
    Ok(NonparametricBound { c_q: j.c_q, bound })
}

#[derive(Clone, Debug, PartialEq)]
pub struct StretchAverage {
    pub plan: CurvePlan,
    /// `‖h‖_∞` of the input plan.
    pub c_input: f64,
    /// `C (1 + ε) / ε`.
    pub bound: f64,
    /// Quadrature allowance `TV / n_τ`, where `TV` bounds the variation in
    /// time of the input marginal densities.
    pub correction: f64,
    /// Test-plan constant of the output.
    pub c_min: f64,
}

/// Averages `γ ↦ γ((t + τ)/(1 + ε))` over the midpoints `τ_j = ε (j + 1/2)/n_τ`.
pub fn stretch_average(rho: &CurvePlan, reference: &[f64], eps: f64, n_tau: usize) -> Result<StretchAverage> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::InvalidArgument(format!("eps must lie in (0, 1/2) (got {eps})")));
    }
    if n_tau == 0 {
        return Err(Error::InvalidArgument("n_tau must be positive".into()));
    }
    let h = parametric_barycenter(rho, reference, 2.0)?.density;
    let c_input = sup_on_support(&h, reference);
    let mut pairs = Vec::with_capacity(rho.len() * n_tau);
    for (c, w) in rho.iter() {
        for j in 0..n_tau {
            let tau = eps * (j as f64 + 0.5) / n_tau as f64;
            let a = tau / (1.0 + eps);
            let b = (1.0 + tau) / (1.0 + eps);
            pairs.push((c.stretch(a, b)?, w / n_tau as f64));
        }
    }
    let plan = CurvePlan::merged(pairs);
    let c_min = testplan_check(&plan, reference).c_min;
    Ok(StretchAverage {
        plan,
        c_input,
        bound: c_input * (1.0 + eps) / eps,
        correction: marginal_variation(rho, reference) / n_tau as f64,
        c_min,
    })
}

/// Replaces every curve by its constant-speed form and merges equivalent curves.
pub fn constant_speed_pushforward(rho: &CurvePlan) -> Result<CurvePlan> {
    let mut groups: Vec<(ParametricCurve, f64)> = Vec::new();
    for (c, w) in rho.iter() {
        let k = c.constant_speed_reparam()?;
        match groups.iter_mut().find(|(g, _)| {
            crate::curves::curves_equivalent(g, k.curve(), EQUIVALENCE_TOL)
        }) {
            Some(entry) => entry.1 += w,
            None => groups.push((k.into_curve(), w)),
        }
    }
    Ok(CurvePlan::merged(groups))
}

/// `‖h‖_q` of a plan's parametric barycenter.
pub fn barycenter_norm(plan: &CurvePlan, reference: &[f64], q: f64) -> Result<f64> {
    let b = parametric_barycenter(plan, reference, q)?;
    Ok(lq_norm(&b.density, reference, q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{build_grid_space, CellMeasure, Edge, MetricMeasureSpace};

    fn path_space(n: usize) -> MetricMeasureSpace {
        let edges = (0..n - 1).map(|i| Edge { u: i, v: i + 1, length: 1.0 }).collect();
        MetricMeasureSpace::new(vec![1.0 / n as f64; n], edges, None, None).unwrap()
    }

    fn columns(k: usize) -> (MetricMeasureSpace, CurvePlan) {
        let s = build_grid_space(k, k, CellMeasure::Uniform).unwrap();
        let curves = (0..k)
            .map(|i| {
                let nodes: Vec<usize> = (0..k).map(|j| j * k + i).collect();
                ParametricCurve::through_nodes(&s, &nodes).unwrap()
            })
            .collect();
        (s, CurvePlan::uniform(curves).unwrap())
    }

    #[test]
    fn barycenter_of_constant_curve() {
        let s = build_grid_space(2, 2, CellMeasure::Uniform).unwrap();
        let plan = CurvePlan::uniform(vec![ParametricCurve::constant(&s, 2).unwrap()]).unwrap();
        let b = parametric_barycenter(&plan, s.measure(), 3.0).unwrap();
        assert_eq!(b.density, vec![0.0, 0.0, 4.0, 0.0]);
        assert!((b.c_q - 4.0 * 0.25f64.powf(1.0 / 3.0)).abs() < 1e-14);
        let rep = testplan_check(&plan, s.measure());
        assert_eq!(rep.c_min, 4.0);
        assert!(rep.is_test_plan);
    }

    #[test]
    fn column_plan() {
        for k in [2, 3, 5] {
            let (s, plan) = columns(k);
            let b = parametric_barycenter(&plan, s.measure(), 2.0).unwrap();
            // brute force recount of the occupation: each column spends 1/(k-1) per
            // edge split evenly, so interior rows get 1/(k-1), end rows half that
            for (x, h) in b.density.iter().enumerate() {
                let row = x / k;
                let occ = if row == 0 || row == k - 1 { 0.5 } else { 1.0 } / (k - 1) as f64;
                assert!((h - occ / k as f64 * (k * k) as f64).abs() < 1e-12);
            }
            assert_eq!(testplan_check(&plan, s.measure()).c_min, k as f64);
        }
    }

    #[test]
    fn marginal_identity() {
        let s = path_space(4);
        let a = ParametricCurve::from_nodes(&s, &[0, 1, 2, 3], vec![0.0, 0.1, 0.7, 1.0]).unwrap();
        let b = ParametricCurve::from_nodes(&s, &[3, 3, 2], vec![0.0, 0.4, 1.0]).unwrap();
        let plan = CurvePlan::new(vec![a, b], vec![0.3, 0.7]).unwrap();
        let h = parametric_barycenter(&plan, s.measure(), 2.0).unwrap().density;
        let f = [0.3, 1.7, 0.2, 5.0];
        let lhs: f64 = plan.iter().map(|(c, w)| w * c.time_average(&f)).sum();
        let rhs: f64 = (0..4).map(|x| f[x] * h[x] * s.measure()[x]).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn energies() {
        let s = path_space(3);
        let one = ParametricCurve::through_nodes(&s, &[0, 1]).unwrap();
        let three = ParametricCurve::from_nodes(&s, &[0, 1, 2], vec![0.0, 0.5, 1.0]).unwrap();
        assert_eq!(q_energy(&CurvePlan::uniform(vec![one.clone()]).unwrap(), 2.0), 1.0);
        // `three` has speed 2 on both halves: E_2 = 2 · 4 · 0.5 = 4
        let mixed = CurvePlan::uniform(vec![one, three]).unwrap();
        assert!((q_energy(&mixed, 2.0) - 2.5).abs() < 1e-14);
        let rest = CurvePlan::uniform(vec![ParametricCurve::constant(&s, 1).unwrap()]).unwrap();
        assert_eq!(q_energy(&rest, 2.0), 0.0);
    }

    #[test]
    fn null_marginal() {
        let s = MetricMeasureSpace::new(
            vec![1.0, 0.0],
            vec![Edge { u: 0, v: 1, length: 1.0 }],
            None,
            None,
        )
        .unwrap();
        let plan = CurvePlan::uniform(vec![ParametricCurve::through_nodes(&s, &[0, 1]).unwrap()]).unwrap();
        let rep = testplan_check(&plan, s.measure());
        assert!(!rep.is_test_plan && rep.c_min.is_infinite());
    }

    #[test]
    fn refinement_does_not_change_cmin() {
        let s = path_space(3);
        let a = ParametricCurve::from_nodes(&s, &[0, 1, 2], vec![0.0, 0.25, 1.0]).unwrap();
        let mid = Location::between(&s, 1, 2, 0.5).unwrap();
        let b = ParametricCurve::new(
            &s,
            vec![Location::Node(0), Location::Node(1), mid, Location::Node(2)],
            vec![0.0, 0.25, 0.625, 1.0],
        )
        .unwrap();
        let ca = testplan_check(&CurvePlan::uniform(vec![a]).unwrap(), s.measure()).c_min;
        let cb = testplan_check(&CurvePlan::uniform(vec![b]).unwrap(), s.measure()).c_min;
        assert!((ca - cb).abs() < 1e-12);
    }

    #[test]
    fn improve_identity_when_eps_dominates() {
        let s = path_space(4);
        let c = ParametricCurve::from_nodes(&s, &[0, 1, 2, 3], vec![0.0, 0.2, 0.5, 1.0]).unwrap();
        let plan = CurvePlan::uniform(vec![c.clone()]).unwrap();
        let g = parametric_barycenter(&plan, s.measure(), 2.0).unwrap().density;
        let eps = g.iter().copied().fold(0.0, f64::max);
        let out = improve_barycenter(&plan, s.measure(), 2.0, eps).unwrap();
        assert!((out.z - 1.0 / eps).abs() < 1e-12);
        assert!(out.exact);
        let d = &out.plan.curves()[0];
        assert_eq!(d.points(), c.points());
        for (a, b) in d.times().iter().zip(c.times()) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(out.barycenter_sup <= 1.0 / out.z + 1e-12);
    }

    #[test]
    fn improve_flattens_barycenter() {
        let s = path_space(5);
        let a = ParametricCurve::from_nodes(&s, &[0, 1, 2, 3, 4], vec![0.0, 0.05, 0.1, 0.9, 1.0]).unwrap();
        let b = ParametricCurve::from_nodes(&s, &[4, 3, 3, 2], vec![0.0, 0.3, 0.8, 1.0]).unwrap();
        let plan = CurvePlan::new(vec![a, b], vec![0.6, 0.4]).unwrap();
        let out = improve_barycenter(&plan, s.measure(), 2.0, 0.5).unwrap();
        assert!(out.exact);
        assert!(out.z <= 1.0 / 0.5 + 1e-12);
        let h = parametric_barycenter(&out.plan, s.measure(), 2.0).unwrap().density;
        // the new barycenter is g h / z exactly
        let g = parametric_barycenter(&plan, s.measure(), 2.0).unwrap().density;
        for x in 0..5 {
            assert!((h[x] - g[x] * out.weight[x] / out.z).abs() < 1e-12);
        }
        assert!(out.barycenter_sup <= 1.0 / out.z + 1e-8);
        assert!(out.energy <= out.energy_bound_discrete + 1e-9);
        let nb = nonparametric_bound(&out.plan, s.measure(), 2.0).unwrap();
        assert!(nb.c_q <= nb.bound + 1e-9);
    }

    #[test]
    fn stretch_average_cases() {
        let s = path_space(3);
        let k = CurvePlan::uniform(vec![ParametricCurve::constant(&s, 1).unwrap()]).unwrap();
        let out = stretch_average(&k, s.measure(), 0.25, 8).unwrap();
        assert_eq!(out.plan, k);
        let line = ParametricCurve::through_nodes(&s, &[0, 1, 2]).unwrap();
        let plan = CurvePlan::uniform(vec![line.clone()]).unwrap();
        let out = stretch_average(&plan, s.measure(), 0.25, 16).unwrap();
        assert_eq!(out.plan.len(), 16);
        // each copy evaluates γ((t+τ)/(1+ε))
        let pos = |l: Location| l.interpolate(&[0.0, 1.0, 2.0]);
        for (j, c) in out.plan.curves().iter().enumerate() {
            let tau = 0.25 * (j as f64 + 0.5) / 16.0;
            for i in 0..=50 {
                let t = i as f64 / 50.0;
                assert!((pos(c.eval(t)) - pos(line.eval((t + tau) / 1.25))).abs() < 1e-12);
            }
        }
        assert!(out.c_min <= out.bound + out.correction + 1e-12);
        assert!(stretch_average(&plan, s.measure(), 0.5, 4).is_err());
    }

    #[test]
    fn pushforward_merges_reparameterizations() {
        let s = path_space(3);
        let a = ParametricCurve::through_nodes(&s, &[0, 1, 2]).unwrap();
        let b = ParametricCurve::from_nodes(&s, &[0, 1, 2], vec![0.0, 0.8, 1.0]).unwrap();
        let plan = CurvePlan::uniform(vec![a.clone(), b]).unwrap();
        let out = constant_speed_pushforward(&plan).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out.probabilities(), &[1.0]);
        let before = plan_barycenter(&plan.j_plan(Support::Nodes), s.measure(), 2.0).unwrap();
        let after = plan_barycenter(&out.j_plan(Support::Nodes), s.measure(), 2.0).unwrap();
        for (x, y) in before.density.iter().zip(&after.density) {
            assert!((x - y).abs() < 1e-12);
        }
        let canon = CurvePlan::uniform(vec![a]).unwrap();
        assert_eq!(constant_speed_pushforward(&canon).unwrap(), canon);
        let k = CurvePlan::uniform(vec![ParametricCurve::constant(&s, 0).unwrap()]).unwrap();
        assert!(constant_speed_pushforward(&k).is_err());
    }
}
