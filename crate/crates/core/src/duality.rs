//! Plans on a family of measures and the content `C_p(Σ)`.
//!
//! A plan is a probability vector `η` over members. Its barycenter
//! `Σ η_i μ_i` has density `g` with respect to the reference measure and
//! `c_q(η) = ‖g‖_q`. The content is `1 / min_η c_q(η)`, and for `p > 1` it
//! equals `Mod_p^(1/p)`.

use nalgebra::DMatrix;

use crate::curves::ParametricCurve;
use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;
use crate::modulus::{check_exponent, conjugate, split_vanishing, Incidence, ModulusSolution, SolverOptions};
use crate::optim::{self, Smooth};
use crate::space::{MetricMeasureSpace, Support};

/// Probability below which a member counts as not charged by a plan.
pub const CHARGE_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct MeasurePlan {
    pub measures: Vec<DiscreteMeasure>,
    pub probabilities: Vec<f64>,
}

impl MeasurePlan {
    pub fn new(measures: Vec<DiscreteMeasure>, probabilities: Vec<f64>) -> Result<Self> {
        check_probabilities(&probabilities)?;
        if measures.len() != probabilities.len() {
            return Err(Error::InvalidPlan(format!(
                "{} measures but {} probabilities",
                measures.len(),
                probabilities.len()
            )));
        }
        Ok(Self { measures, probabilities })
    }

    pub fn dirac(mu: DiscreteMeasure) -> Self {
        Self { measures: vec![mu], probabilities: vec![1.0] }
    }
}

pub(crate) fn check_probabilities(probs: &[f64]) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::InvalidPlan("a plan needs at least one atom".into()));
    }
    if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
        return Err(Error::InvalidPlan(format!("probability {p} is not in [0, 1]")));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidPlan(format!("probabilities sum to {total}, not 1")));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Barycenter {
    /// Density of the averaged measure; zero where the reference vanishes.
    pub density: Vec<f64>,
    pub c_q: f64,
}

/// `L^q` norm of a density against a reference measure.
pub fn lq_norm(density: &[f64], reference: &[f64], q: f64) -> f64 {
    density.iter().zip(reference).map(|(g, r)| r * g.powf(q)).sum::<f64>().powf(1.0 / q)
}

/// Barycenter density of a plan and its `c_q`.
pub fn plan_barycenter(plan: &MeasurePlan, reference: &[f64], q: f64) -> Result<Barycenter> {
    check_exponent(q)?;
    let mut mass = vec![0.0; reference.len()];
    for (mu, &w) in plan.measures.iter().zip(&plan.probabilities) {
        for (x, v) in mu.iter() {
            if x >= reference.len() {
                return Err(Error::InvalidMeasure(format!("plan charges index {x} outside the space")));
            }
            mass[x] += w * v;
        }
    }
    let mut density = vec![0.0; reference.len()];
    for (x, (&a, &r)) in mass.iter().zip(reference).enumerate() {
        if a > 0.0 && r == 0.0 {
            return Err(Error::NoBarycenter { point: x, mass: a });
        }
        if a > 0.0 {
            density[x] = a / r;
        }
    }
    let c_q = lq_norm(&density, reference, q);
    Ok(Barycenter { density, c_q })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContentSolution {
    pub q: f64,
    /// `C_p(Σ) = 1 / c_q` of the optimal plan.
    pub value: f64,
    /// Upper bound on the content from the dual density.
    pub upper_bound: f64,
    /// `(upper_bound - value) / upper_bound`.
    pub gap: f64,
    /// Optimal plan as one probability per member.
    pub probabilities: Vec<f64>,
    pub barycenter: Vec<f64>,
    pub c_q: f64,
    pub iterations: usize,
    pub zero_measure: bool,
    pub vanishing_support: Vec<usize>,
}

impl ContentSolution {
    fn trivial(q: f64, len: usize, members: usize, value: f64) -> Self {
        Self {
            q,
            value,
            upper_bound: value,
            gap: 0.0,
            probabilities: vec![0.0; members],
            barycenter: vec![0.0; len],
            c_q: 1.0 / value,
            iterations: 0,
            zero_measure: false,
            vanishing_support: Vec::new(),
        }
    }

    /// Members charged by the optimal plan.
    pub fn charged(&self) -> Vec<usize> {
        (0..self.probabilities.len()).filter(|&i| self.probabilities[i] > CHARGE_TOL).collect()
    }

    /// The optimal plan restricted to charged members.
    pub fn plan(&self, measures: &[DiscreteMeasure]) -> Result<MeasurePlan> {
        let idx = self.charged();
        let total: f64 = idx.iter().map(|&i| self.probabilities[i]).sum();
        MeasurePlan::new(
            idx.iter().map(|&i| measures[i].clone()).collect(),
            idx.iter().map(|&i| self.probabilities[i] / total).collect(),
        )
    }
}

struct ContentObjective<'a> {
    inc: &'a Incidence,
    q: f64,
}

impl ContentObjective<'_> {
    fn weighted(&self, a: &[f64], power: f64) -> Vec<f64> {
        a.iter()
            .zip(&self.inc.reference)
            .map(|(&ax, &r)| if ax > 0.0 { r.powf(1.0 - self.q) * ax.powf(power) } else { 0.0 })
            .collect()
    }

    /// `(value, upper bound, relative gap)` at a point of the simplex.
    fn certificate(&self, lambda: &[f64]) -> (f64, f64, f64) {
        let a = self.inc.combine(lambda);
        let phi: f64 = self.weighted(&a, self.q).iter().sum();
        let c_q = phi.powf(1.0 / self.q);
        let lower = 1.0 / c_q;
        // f = g^(q-1) with g = a/m; scaled to be feasible it bounds the content from above
        let f: Vec<f64> = a
            .iter()
            .zip(&self.inc.reference)
            .map(|(&ax, &r)| (ax / r).powf(self.q - 1.0))
            .collect();
        let smin = self.inc.integrals(&f).into_iter().fold(f64::INFINITY, f64::min);
        if !(smin > 0.0) {
            return (lower, f64::INFINITY, f64::INFINITY);
        }
        let p = conjugate(self.q);
        let norm = f.iter().zip(&self.inc.reference).map(|(v, r)| r * v.powf(p)).sum::<f64>().powf(1.0 / p);
        let upper = norm / smin;
        (lower, upper, (upper - lower) / upper)
    }
}

// Minimized over the orthant as `Φ/q - Σλ`; its minimizer, normalized to
// total one, is the optimal plan because `Φ` is `q`-homogeneous.
impl Smooth for ContentObjective<'_> {
    fn eval(&self, lambda: &[f64]) -> (f64, Vec<f64>) {
        let a = self.inc.combine(lambda);
        let phi: f64 = self.weighted(&a, self.q).iter().sum();
        let w = self.weighted(&a, self.q - 1.0);
        let grad = self.inc.integrals(&w).into_iter().map(|v| v - 1.0).collect();
        (phi / self.q - lambda.iter().sum::<f64>(), grad)
    }

    fn hessian(&self, lambda: &[f64], face: &[usize]) -> DMatrix<f64> {
        let a = self.inc.combine(lambda);
        let d: Vec<f64> = self.weighted(&a, self.q - 2.0).into_iter().map(|v| (self.q - 1.0) * v).collect();
        self.inc.gram(&d, face)
    }
}

fn normalized(lambda: &[f64]) -> Vec<f64> {
    let s: f64 = lambda.iter().sum();
    if s > 0.0 {
        lambda.iter().map(|v| v / s).collect()
    } else {
        vec![1.0 / lambda.len() as f64; lambda.len()]
    }
}

/// Minimizes `c_q(η)` over plans on the members and returns `1 / min`.
/// Members charging null points have no barycenter in `L^q` and are left out.
pub fn solve_content(
    reference: &[f64],
    measures: &[DiscreteMeasure],
    q: f64,
    opts: &SolverOptions,
) -> Result<ContentSolution> {
    check_exponent(q)?;
    opts.validate()?;
    let n = reference.len();
    let k = measures.len();
    if let Some((i, x)) = measures
        .iter()
        .enumerate()
        .find_map(|(i, mu)| mu.max_index().filter(|&x| x >= n).map(|x| (i, x)))
    {
        return Err(Error::InvalidMeasure(format!("member {i} charges index {x} outside [0, {n})")));
    }
    if k == 0 {
        return Ok(ContentSolution::trivial(q, n, 0, 0.0));
    }
    if measures.iter().any(DiscreteMeasure::is_zero) {
        let mut sol = ContentSolution::trivial(q, n, k, f64::INFINITY);
        sol.zero_measure = true;
        return Ok(sol);
    }
    let (kept, vanishing) = split_vanishing(reference, measures);
    let mut sol = ContentSolution::trivial(q, n, k, 0.0);
    sol.vanishing_support = vanishing;
    if kept.is_empty() {
        return Ok(sol);
    }
    let members: Vec<&DiscreteMeasure> = kept.iter().map(|&i| &measures[i]).collect();
    let inc = Incidence::new(reference, &members);
    let obj = ContentObjective { inc: &inc, q };
    let uniform = vec![1.0 / kept.len() as f64; kept.len()];
    let phi0: f64 = obj.weighted(&inc.combine(&uniform), q).iter().sum();
    // best multiple of the uniform plan
    let c = (1.0 / phi0).powf(1.0 / (q - 1.0));
    let x0 = uniform.iter().map(|v| c * v).collect();
    let mut last_gap = f64::INFINITY;
    let out = optim::minimize(&obj, x0, opts.max_iter, |lambda, _, grad| {
        let (_, _, gap) = obj.certificate(&normalized(lambda));
        last_gap = gap;
        gap <= opts.gap_tol && optim::projected_gradient_norm(lambda, grad) <= opts.kkt_tol
    });
    if !out.converged {
        return Err(Error::NotConverged { iterations: out.iterations, gap: last_gap });
    }
    let lambda = normalized(&out.x);
    let (lower, upper, gap) = obj.certificate(&lambda);
    let a = inc.combine(&lambda);
    let g_local: Vec<f64> = a.iter().zip(&inc.reference).map(|(ax, r)| ax / r).collect();
    sol.value = lower;
    sol.upper_bound = upper;
    sol.gap = gap;
    sol.c_q = 1.0 / lower;
    sol.barycenter = inc.expand(&g_local, n);
    for (j, &i) in kept.iter().enumerate() {
        sol.probabilities[i] = lambda[j];
    }
    sol.iterations = out.iterations;
    Ok(sol)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DualityCertificate {
    /// `Mod^(1/p)`.
    pub modulus_root: f64,
    pub content: f64,
    pub difference: f64,
    pub tolerance: f64,
    /// `η(Σ)/c_q(η) <= ‖f‖_p` for the returned plan and density.
    pub weak_duality: bool,
}

/// Checks `Mod_p(Σ)^(1/p) = C_p(Σ)` within `1e-6 max(1, Mod^(1/p))`.
pub fn check_duality(primal: &ModulusSolution, dual: &ContentSolution, p: f64) -> Result<DualityCertificate> {
    check_exponent(p)?;
    let modulus_root = primal.value.powf(1.0 / p);
    let content = dual.value;
    let tolerance = 1e-6 * modulus_root.max(1.0);
    let difference = if modulus_root == content { 0.0 } else { (modulus_root - content).abs() };
    let weak_duality = content <= modulus_root * (1.0 + 1e-12) || modulus_root.is_infinite();
    let cert = DualityCertificate { modulus_root, content, difference, tolerance, weak_duality };
    if difference <= tolerance && weak_duality {
        Ok(cert)
    } else {
        Err(Error::CertificateFailed(format!(
            "Mod^(1/p) = {modulus_root}, content = {content}, difference {difference:e} (tolerance {tolerance:e}), weak duality {}",
            if weak_duality { "holds" } else { "violated" }
        )))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimalityReport {
    /// `max |∫ f dμ - 1|` over charged members.
    pub saturation: f64,
    /// `max |g - f^(p-1)/‖f‖_p^p|` over points of positive reference mass.
    pub barycenter: f64,
    /// `‖f‖_p^p - C^p`, nonnegative by weak duality.
    pub converse: f64,
    pub violations: Vec<String>,
}

impl OptimalityReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Saturation of charged members, the barycenter identity
/// `g = f^(p-1)/‖f‖_p^p`, and optimality of `f` against the plan.
pub fn check_optimality_conditions(
    reference: &[f64],
    measures: &[DiscreteMeasure],
    f: &[f64],
    dual: &ContentSolution,
    p: f64,
    tol: f64,
) -> Result<OptimalityReport> {
    check_exponent(p)?;
    let mut violations = Vec::new();
    let saturation = dual
        .charged()
        .into_iter()
        .map(|i| (measures[i].integrate(f) - 1.0).abs())
        .fold(0.0, f64::max);
    if saturation > tol {
        violations.push(format!("charged member not saturated: max |∫f dμ - 1| = {saturation:e}"));
    }
    let norm_p: f64 = f.iter().zip(reference).map(|(v, r)| r * v.powf(p)).sum();
    let barycenter = reference
        .iter()
        .enumerate()
        .filter(|(_, r)| **r > 0.0)
        .map(|(x, _)| (dual.barycenter[x] - f[x].powf(p - 1.0) / norm_p).abs())
        .fold(0.0, f64::max);
    if barycenter > tol {
        violations.push(format!("barycenter differs from f^(p-1)/‖f‖_p^p by {barycenter:e}"));
    }
    let converse = norm_p - dual.value.powf(p);
    if converse < -tol {
        violations.push(format!("‖f‖_p^p = {norm_p} is below the content bound {}", dual.value.powf(p)));
    }
    Ok(OptimalityReport { saturation, barycenter, converse, violations })
}

/// `η(Σ) / c_q(η) <= ‖f‖_p` for any `f` feasible on the charged members.
pub fn weak_duality_holds(plan: &MeasurePlan, f: &[f64], reference: &[f64], p: f64) -> Result<bool> {
    let bc = plan_barycenter(plan, reference, conjugate(p))?;
    let norm = f.iter().zip(reference).map(|(v, r)| r * v.powf(p)).sum::<f64>().powf(1.0 / p);
    let feasible = plan.measures.iter().all(|mu| mu.integrate(f) >= 1.0 - 1e-12);
    Ok(!feasible || 1.0 / bc.c_q <= norm * (1.0 + 1e-10))
}

/// Content of a curve family through `J`, with the plan read as a
/// probability on the curves.
#[derive(Clone, Debug, PartialEq)]
pub struct CurveContent {
    pub content: ContentSolution,
    pub measures: Vec<DiscreteMeasure>,
}

pub fn content_of_curve_family(
    space: &MetricMeasureSpace,
    curves: &[ParametricCurve],
    p: f64,
    support: Support,
    opts: &SolverOptions,
) -> Result<CurveContent> {
    check_exponent(p)?;
    if let Some(i) = curves.iter().position(ParametricCurve::is_constant) {
        return Err(Error::InvalidCurve(format!("curve {i} is constant")));
    }
    let measures: Vec<DiscreteMeasure> = curves.iter().map(|c| c.j_measure(support)).collect();
    let content = solve_content(space.reference(support), &measures, conjugate(p), opts)?;
    Ok(CurveContent { content, measures })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modulus::{solve_modulus_explicit, solve_modulus_with_reference};
    use crate::space::{build_grid_space, CellMeasure};

    fn halves(n: usize) -> (MetricMeasureSpace, Vec<DiscreteMeasure>) {
        let s = build_grid_space(n, 1, CellMeasure::Uniform).unwrap();
        let m = s.measure().to_vec();
        let left = DiscreteMeasure::from_pairs((0..n / 2).map(|x| (x, m[x]))).unwrap();
        let right = DiscreteMeasure::from_pairs((n / 2..n).map(|x| (x, m[x]))).unwrap();
        (s, vec![left, right, DiscreteMeasure::from_dense(&m).unwrap()])
    }

    #[test]
    fn barycenters() {
        let s = build_grid_space(2, 2, CellMeasure::Uniform).unwrap();
        let m = DiscreteMeasure::from_dense(s.measure()).unwrap();
        let b = plan_barycenter(&MeasurePlan::dirac(m), s.measure(), 2.0).unwrap();
        assert!(b.density.iter().all(|g| (g - 1.0).abs() < 1e-15));
        assert!((b.c_q - 1.0).abs() < 1e-15);

        let (s, ms) = halves(200);
        let plan = MeasurePlan::new(ms[..2].to_vec(), vec![0.5, 0.5]).unwrap();
        let b = plan_barycenter(&plan, s.measure(), 2.0).unwrap();
        assert!(b.density.iter().all(|g| (g - 0.5).abs() < 1e-14));
        assert!((b.c_q - 0.5).abs() < 1e-14);

        let reference = vec![0.5, 0.0];
        let err = plan_barycenter(&MeasurePlan::dirac(DiscreteMeasure::dirac(1)), &reference, 2.0).unwrap_err();
        assert!(matches!(err, Error::NoBarycenter { point: 1, .. }));
    }

    #[test]
    fn saturated_example_content() {
        let (s, ms) = halves(200);
        let o = SolverOptions::default();
        for p in [1.5, 2.0, 3.0] {
            let c = solve_content(s.measure(), &ms, conjugate(p), &o).unwrap();
            assert!((c.value - 2.0).abs() < 1e-9, "p={p}: {}", c.value);
            assert!((c.probabilities[0] - 0.5).abs() < 1e-8);
            assert!((c.probabilities[1] - 0.5).abs() < 1e-8);
            assert!(c.probabilities[2] < 1e-9);
            let primal = solve_modulus_explicit(&s, &ms, p, &o).unwrap();
            let cert = check_duality(&primal, &c, p).unwrap();
            assert!(cert.weak_duality);
            let rep = check_optimality_conditions(s.measure(), &ms, &primal.f, &c, p, 1e-6).unwrap();
            assert!(rep.passed(), "{:?}", rep.violations);
        }
    }

    #[test]
    fn broken_certificates() {
        let (s, ms) = halves(20);
        let o = SolverOptions::default();
        let p = 2.0;
        let primal = solve_modulus_explicit(&s, &ms, p, &o).unwrap();
        let c = solve_content(s.measure(), &ms, 2.0, &o).unwrap();
        let mut f = primal.f.clone();
        f[3] += 0.1;
        let rep = check_optimality_conditions(s.measure(), &ms, &f, &c, p, 1e-6).unwrap();
        assert!(rep.barycenter > 1e-6 && !rep.passed());
        // a plan charging the unsaturated full measure
        let mut bad = c.clone();
        bad.probabilities = vec![0.0, 0.0, 1.0];
        let rep = check_optimality_conditions(s.measure(), &ms, &primal.f, &bad, p, 1e-6).unwrap();
        assert!(rep.saturation > 0.5);
        // dual stopped at its starting point, the uniform plan
        let start = MeasurePlan::new(ms.clone(), vec![1.0 / 3.0; 3]).unwrap();
        let mut early = c.clone();
        early.value = 1.0 / plan_barycenter(&start, s.measure(), 2.0).unwrap().c_q;
        assert!((early.value - 1.5).abs() < 1e-12);
        assert!(matches!(check_duality(&primal, &early, p), Err(Error::CertificateFailed(_))));
    }

    #[test]
    fn singleton_and_zero() {
        let s = build_grid_space(3, 1, CellMeasure::Uniform).unwrap();
        let mu = DiscreteMeasure::from_pairs([(0, 0.2), (1, 0.5)]).unwrap();
        let q = 3.0;
        let c = solve_content(s.measure(), std::slice::from_ref(&mu), q, &SolverOptions::default()).unwrap();
        let g: Vec<f64> = (0..3).map(|x| mu.weight(x) / s.measure()[x]).collect();
        assert!((c.value - 1.0 / lq_norm(&g, s.measure(), q)).abs() < 1e-12);
        assert_eq!(c.probabilities, vec![1.0]);
        let z = solve_content(s.measure(), &[mu, DiscreteMeasure::zero()], q, &SolverOptions::default()).unwrap();
        assert_eq!(z.value, f64::INFINITY);
    }

    #[test]
    fn duplicated_curves() {
        let s = build_grid_space(3, 1, CellMeasure::Uniform).unwrap();
        let c = ParametricCurve::through_nodes(&s, &[0, 1, 2]).unwrap();
        let o = SolverOptions::default();
        let one = content_of_curve_family(&s, std::slice::from_ref(&c), 2.0, Support::Nodes, &o).unwrap();
        let two = content_of_curve_family(&s, &[c.clone(), c], 2.0, Support::Nodes, &o).unwrap();
        assert!((one.content.value - two.content.value).abs() < 1e-12);
        // brute force over the 1-simplex: every split gives the same barycenter
        for t in [0.0, 0.3, 1.0] {
            let plan = MeasurePlan::new(two.measures.clone(), vec![t, 1.0 - t]).unwrap();
            let b = plan_barycenter(&plan, s.measure(), 2.0).unwrap();
            assert!((1.0 / b.c_q - two.content.value).abs() < 1e-12);
        }
    }

    #[test]
    fn scaling_the_reference() {
        let (s, ms) = halves(10);
        let o = SolverOptions::default();
        let p = 3.0;
        let base = solve_modulus_explicit(&s, &ms[..2], p, &o).unwrap();
        let scaled_ref: Vec<f64> = s.measure().iter().map(|v| 4.0 * v).collect();
        let scaled = solve_modulus_with_reference(&scaled_ref, &ms[..2], p, &o, None).unwrap();
        assert!((scaled.value - 4.0 * base.value).abs() < 1e-9 * base.value);
        let c0 = solve_content(s.measure(), &ms[..2], conjugate(p), &o).unwrap();
        let c1 = solve_content(&scaled_ref, &ms[..2], conjugate(p), &o).unwrap();
        assert!((c1.value - 4f64.powf(1.0 / p) * c0.value).abs() < 1e-9);
        assert_eq!(c0.charged(), c1.charged());
        for (a, b) in c0.probabilities.iter().zip(&c1.probabilities) {
            assert!((a - b).abs() < 1e-8);
        }
    }
}
