//! Upper-gradient inequality `|f(γ_1) - f(γ_0)| <= ∫_γ g` along curves, and
//! how large the set of curves violating it is, measured by modulus and by
//! test plans.

use crate::curves::ParametricCurve;
use crate::error::{Error, Result};
use crate::measure::{enumerate_family, MeasureFamily};
use crate::modulus::{check_exponent, solve_modulus_with_reference, SolverOptions};
use crate::plans::{testplan_check, CurvePlan, TestPlanReport};
use crate::space::MetricMeasureSpace;

pub const RESIDUAL_TOL: f64 = 1e-10;

/// Modulus below this certifies the violating family as negligible.
pub const NEGLIGIBLE_MODULUS: f64 = 1e-10;

/// Plan probability below this counts as zero.
pub const NEGLIGIBLE_PROBABILITY: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct GradientCheckReport {
    pub n_curves: usize,
    pub n_violations: usize,
    pub violating: Vec<usize>,
    /// `|f(end) - f(start)| - ∫_γ g` per curve.
    pub residuals: Vec<f64>,
    pub worst_residual: f64,
    /// Filled in by [`modulus_of_violating_family`].
    pub modulus_of_violations: Option<f64>,
}

/// `|f(end) - f(start)| - ∫ g dJγ`, with `f` interpolated at the endpoints.
pub fn residual(f: &[f64], g: &[f64], curve: &ParametricCurve) -> f64 {
    let jump = (curve.end().interpolate(f) - curve.start().interpolate(f)).abs();
    jump - curve.line_integral(g)
}

pub fn check_upper_gradient(f: &[f64], g: &[f64], curves: &[ParametricCurve], tol: f64) -> GradientCheckReport {
    let residuals: Vec<f64> = curves.iter().map(|c| residual(f, g, c)).collect();
    let violating: Vec<usize> = (0..curves.len()).filter(|&i| residuals[i] > tol).collect();
    GradientCheckReport {
        n_curves: curves.len(),
        n_violations: violating.len(),
        violating,
        worst_residual: residuals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        residuals,
        modulus_of_violations: None,
    }
}

/// Largest difference quotient over incident edges, an upper gradient of `f`
/// for every curve under the arc-length quadrature.
pub fn local_slope(space: &MetricMeasureSpace, f: &[f64]) -> Vec<f64> {
    (0..space.num_points())
        .map(|x| {
            space
                .neighbors(x)
                .iter()
                .map(|&(y, e)| (f[x] - f[y]).abs() / space.edge(e).length)
                .fold(0.0, f64::max)
        })
        .collect()
}

fn family_curves(space: &MetricMeasureSpace, family: &MeasureFamily, opts: &SolverOptions) -> Result<Vec<ParametricCurve>> {
    let e = enumerate_family(family, space, opts.path_limit)?;
    if e.truncated {
        return Err(Error::InvalidFamily(format!(
            "family '{}' has more than {} members",
            family.name, opts.path_limit
        )));
    }
    e.curves.ok_or_else(|| {
        Error::InvalidFamily(format!("family '{}' is given by measures, not curves", family.name))
    })
}

/// Checks every curve of `family` and solves for the modulus of the violators
/// (through `J` on the family's support). Zero means the pair satisfies the
/// inequality on all curves but a modulus-negligible set.
pub fn modulus_of_violating_family(
    space: &MetricMeasureSpace,
    f: &[f64],
    g: &[f64],
    family: &MeasureFamily,
    p: f64,
    opts: &SolverOptions,
) -> Result<GradientCheckReport> {
    check_exponent(p)?;
    let curves = family_curves(space, family, opts)?;
    let mut report = check_upper_gradient(f, g, &curves, RESIDUAL_TOL);
    let support = family.support();
    let measures: Vec<_> = report.violating.iter().map(|&i| curves[i].j_measure(support)).collect();
    let value = if measures.is_empty() {
        0.0
    } else {
        solve_modulus_with_reference(space.reference(support), &measures, p, opts, None)?.value
    };
    report.modulus_of_violations = Some(value);
    Ok(report)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlanViolation {
    /// `ρ` of the violating curves.
    pub probability: f64,
    pub test_plan: TestPlanReport,
}

#[derive(Clone, Debug, PartialEq)]
pub struct W1pReport {
    pub plans: Vec<PlanViolation>,
    /// Indices of inputs that are not test plans; they make the check fail.
    pub not_test_plans: Vec<usize>,
    pub passed: bool,
    pub warnings: Vec<String>,
}

/// For every plan, the probability of the curves violating the inequality.
/// Passes when all inputs are test plans and every probability is at most `tol`.
pub fn check_w1p_pair(f: &[f64], g: &[f64], plans: &[CurvePlan], reference: &[f64], tol: f64) -> W1pReport {
    let mut warnings = Vec::new();
    if plans.is_empty() {
        warnings.push("no plans given; the check is vacuous".to_string());
    }
    let mut not_test_plans = Vec::new();
    let mut out = Vec::with_capacity(plans.len());
    for (k, plan) in plans.iter().enumerate() {
        let test_plan = testplan_check(plan, reference);
        if !test_plan.is_test_plan {
            not_test_plans.push(k);
            warnings.push(format!("plan {k} charges an m-null point and is not a test plan"));
        }
        let probability = plan
            .iter()
            .filter(|(c, _)| residual(f, g, c) > RESIDUAL_TOL)
            .map(|(_, w)| w)
            .sum();
        out.push(PlanViolation { probability, test_plan });
    }
    let passed = not_test_plans.is_empty() && out.iter().all(|v| v.probability <= tol);
    W1pReport { plans: out, not_test_plans, passed, warnings }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EquivalenceRecord {
    pub modulus_of_violations: f64,
    pub n_violations: usize,
    /// Violating probability of each test plan; other plans are skipped.
    pub plan_probabilities: Vec<f64>,
    pub skipped_plans: Vec<usize>,
    /// Negligible modulus implies negligible probability under every test plan.
    pub implication_holds: bool,
}

/// Compares the modulus-based and plan-based notions of "almost every curve"
/// for one pair `(f, g)`.
pub fn equivalence_experiment(
    space: &MetricMeasureSpace,
    f: &[f64],
    g: &[f64],
    family: &MeasureFamily,
    plans: &[CurvePlan],
    p: f64,
    opts: &SolverOptions,
) -> Result<EquivalenceRecord> {
    let report = modulus_of_violating_family(space, f, g, family, p, opts)?;
    let modulus = report.modulus_of_violations.unwrap_or(f64::NAN);
    let w = check_w1p_pair(f, g, plans, space.measure(), NEGLIGIBLE_PROBABILITY);
    let mut plan_probabilities = Vec::new();
    for (k, v) in w.plans.iter().enumerate() {
        if !w.not_test_plans.contains(&k) {
            plan_probabilities.push(v.probability);
        }
    }
    let implication_holds = modulus > NEGLIGIBLE_MODULUS
        || plan_probabilities.iter().all(|&pr| pr <= NEGLIGIBLE_PROBABILITY);
    Ok(EquivalenceRecord {
        modulus_of_violations: modulus,
        n_violations: report.n_violations,
        plan_probabilities,
        skipped_plans: w.not_test_plans,
        implication_holds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modulus::solve_modulus_paths;
    use crate::space::{build_grid_space, CellMeasure, Support};

    fn grid(k: usize) -> MetricMeasureSpace {
        build_grid_space(k, k, CellMeasure::Uniform).unwrap()
    }

    fn xcoord(s: &MetricMeasureSpace) -> Vec<f64> {
        s.coords().unwrap().iter().map(|c| c[0]).collect()
    }

    fn left_right(k: usize) -> MeasureFamily {
        let left = (0..k).map(|r| r * k).collect();
        let right = (0..k).map(|r| r * k + k - 1).collect();
        MeasureFamily::paths("lr", left, right, None, Support::Nodes).unwrap()
    }

    #[test]
    fn constant_pair() {
        let s = grid(3);
        let c = ParametricCurve::through_nodes(&s, &[0, 1, 4, 5]).unwrap();
        let r = check_upper_gradient(&[2.0; 9], &[0.0; 9], &[c], RESIDUAL_TOL);
        assert_eq!(r.n_violations, 0);
        assert_eq!(r.worst_residual, 0.0);
    }

    #[test]
    fn calibrated_pair() {
        let s = grid(4);
        let f = xcoord(&s);
        let r = modulus_of_violating_family(&s, &f, &[1.0; 16], &left_right(4), 2.0, &SolverOptions::default()).unwrap();
        assert!(r.n_curves > 10);
        assert_eq!(r.n_violations, 0);
        assert_eq!(r.modulus_of_violations, Some(0.0));
        // monotone paths are tight
        let straight = ParametricCurve::through_nodes(&s, &[4, 5, 6, 7]).unwrap();
        assert!(residual(&f, &[1.0; 16], &straight).abs() < 1e-12);
    }

    #[test]
    fn step_pair_violates_every_crossing() {
        let k = 4;
        let s = grid(k);
        let f: Vec<f64> = xcoord(&s).iter().map(|&x| if x > 0.5 { 1.0 } else { 0.0 }).collect();
        let g = vec![0.0; k * k];
        let opts = SolverOptions::default();
        let fam = left_right(k);
        let r = modulus_of_violating_family(&s, &f, &g, &fam, 2.0, &opts).unwrap();
        assert_eq!(r.n_violations, r.n_curves);
        let direct = solve_modulus_paths(&s, &fam, 2.0, &opts).unwrap().solution.value;
        let v = r.modulus_of_violations.unwrap();
        assert!((v - direct).abs() <= 1e-6 * direct, "{v} vs {direct}");
        // enlarging g never adds violations
        let r2 = modulus_of_violating_family(&s, &f, &vec![10.0; k * k], &fam, 2.0, &opts).unwrap();
        assert_eq!(r2.n_violations, 0);
    }

    #[test]
    fn reparameterization_invariance() {
        let s = grid(3);
        let f = [0.0, 1.0, 3.0, 0.5, 2.0, 1.0, 0.0, 0.2, 4.0];
        let g = [1.0, 0.3, 0.0, 2.0, 1.0, 0.7, 0.1, 0.0, 0.5];
        let c = ParametricCurve::from_nodes(&s, &[0, 1, 1, 4, 7, 8], vec![0.0, 0.1, 0.3, 0.35, 0.9, 1.0]).unwrap();
        let k = c.constant_speed_reparam().unwrap();
        assert!((residual(&f, &g, &c) - residual(&f, &g, k.curve())).abs() < 1e-10);
    }

    #[test]
    fn plans() {
        let k = 3;
        let s = grid(k);
        let f = xcoord(&s);
        let rows: Vec<ParametricCurve> = (0..k)
            .map(|r| ParametricCurve::through_nodes(&s, &[r * k, r * k + 1, r * k + 2]).unwrap())
            .collect();
        let plan = CurvePlan::uniform(rows).unwrap();
        let ok = check_w1p_pair(&f, &[1.0; 9], std::slice::from_ref(&plan), s.measure(), 1e-8);
        assert!(ok.passed);
        assert_eq!(ok.plans[0].probability, 0.0);
        let bad = check_w1p_pair(&f, &[0.0; 9], &[plan], s.measure(), 1e-8);
        assert!(!bad.passed);
        assert!((bad.plans[0].probability - 1.0).abs() < 1e-12);
        let empty = check_w1p_pair(&f, &[0.0; 9], &[], s.measure(), 1e-8);
        assert!(empty.passed && !empty.warnings.is_empty());
    }

    #[test]
    fn local_slope_is_an_upper_gradient() {
        let s = grid(4);
        let f: Vec<f64> = (0..16).map(|x| ((x * 7919) % 13) as f64 / 5.0).collect();
        let g = local_slope(&s, &f);
        let r = modulus_of_violating_family(&s, &f, &g, &left_right(4), 3.0, &SolverOptions::default()).unwrap();
        assert_eq!(r.n_violations, 0);
        assert!(r.worst_residual <= 1e-12);
    }
}
