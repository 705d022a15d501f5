use modcap::curves::ParametricCurve;
use modcap::duality::{check_duality, solve_content};
use modcap::gradients::residual;
use modcap::io::{generate_random_instance, Instance};
use modcap::measure::{DiscreteMeasure, FamilyKind};
use modcap::modulus::{conjugate, solve_modulus_with_reference, SolverOptions};
use modcap::space::{Edge, MetricMeasureSpace, Support};
use proptest::prelude::*;

fn explicit(inst: &Instance) -> Vec<DiscreteMeasure> {
    match &inst.families[0].kind {
        FamilyKind::Explicit { measures, .. } => measures.clone(),
        _ => unreachable!("generated instances carry one explicit family"),
    }
}

fn modulus(reference: &[f64], measures: &[DiscreteMeasure], p: f64) -> f64 {
    solve_modulus_with_reference(reference, measures, p, &SolverOptions::default(), None)
        .unwrap()
        .value
}

fn path_space(lengths: &[f64], masses: &[f64]) -> MetricMeasureSpace {
    let edges = lengths.iter().enumerate().map(|(i, &l)| Edge { u: i, v: i + 1, length: l }).collect();
    MetricMeasureSpace::new(masses.to_vec(), edges, None, None).unwrap()
}

fn walk(n: usize, steps: &[bool]) -> Vec<usize> {
    let mut x = 0usize;
    let mut nodes = vec![0];
    for &right in steps {
        x = if right { (x + 1).min(n - 1) } else { x.saturating_sub(1) };
        if Some(&x) != nodes.last() {
            nodes.push(x);
        }
    }
    if nodes.len() == 1 {
        nodes.push(1);
    }
    nodes
}

// Random increasing times for a node sequence of length k.
fn times_from(gaps: &[f64], k: usize) -> Vec<f64> {
    let gaps: Vec<f64> = gaps.iter().cycle().take(k - 1).copied().collect();
    let total: f64 = gaps.iter().sum();
    let mut t = vec![0.0];
    let mut acc = 0.0;
    for g in &gaps {
        acc += g;
        t.push(acc / total);
    }
    t[k - 1] = 1.0;
    t
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn modulus_scales_with_measures_and_reference(seed in 0u64..1000, p in 1.2f64..4.0, c in 0.2f64..5.0) {
        let inst = generate_random_instance(seed, 15, 6, 0.4).unwrap();
        let ms = explicit(&inst);
        let m = inst.space.measure();
        let base = modulus(m, &ms, p);
        let scaled: Vec<DiscreteMeasure> = ms.iter().map(|mu| mu.scaled(c).unwrap()).collect();
        let by_measures = modulus(m, &scaled, p);
        prop_assert!((by_measures - c.powf(-p) * base).abs() <= 1e-7 * base);
        let heavier: Vec<f64> = m.iter().map(|v| v * c).collect();
        let by_reference = modulus(&heavier, &ms, p);
        prop_assert!((by_reference - c * base).abs() <= 1e-7 * by_reference.max(base));
    }

    #[test]
    fn modulus_is_monotone_in_the_family(seed in 0u64..1000, p in 1.2f64..4.0, keep in 1usize..6) {
        let inst = generate_random_instance(seed, 15, 6, 0.4).unwrap();
        let ms = explicit(&inst);
        let m = inst.space.measure();
        let sub = modulus(m, &ms[..keep], p);
        let full = modulus(m, &ms, p);
        prop_assert!(sub <= full * (1.0 + 1e-8));
    }

    #[test]
    fn content_certifies_the_modulus(seed in 0u64..1000, p in 1.3f64..4.0) {
        let inst = generate_random_instance(seed, 20, 8, 0.3).unwrap();
        let ms = explicit(&inst);
        let opts = SolverOptions::default();
        let m = inst.space.measure();
        let sol = solve_modulus_with_reference(m, &ms, p, &opts, None).unwrap();
        let content = solve_content(m, &ms, conjugate(p), &opts).unwrap();
        prop_assert!(check_duality(&sol, &content, p).is_ok());
        prop_assert!((content.value.powf(p) - sol.value).abs() <= 1e-7 * sol.value);
    }

    #[test]
    fn curve_measures_ignore_the_time_law(
        lengths in prop::collection::vec(0.1f64..3.0, 5),
        steps in prop::collection::vec(any::<bool>(), 2..30),
        gaps in prop::collection::vec(0.01f64..1.0, 1..10),
    ) {
        let space = path_space(&lengths, &[1.0; 6]);
        let nodes = walk(6, &steps);
        let uniform = ParametricCurve::through_nodes(&space, &nodes).unwrap();
        let warped = ParametricCurve::from_nodes(&space, &nodes, times_from(&gaps, nodes.len())).unwrap();
        for support in [Support::Nodes, Support::Edges] {
            prop_assert!(uniform.j_measure(support).max_abs_diff(&warped.j_measure(support)) <= 1e-12);
        }
        prop_assert!((uniform.length() - warped.length()).abs() <= 1e-12);
    }

    #[test]
    fn residuals_survive_reparameterization(
        lengths in prop::collection::vec(0.1f64..3.0, 5),
        steps in prop::collection::vec(any::<bool>(), 2..30),
        gaps in prop::collection::vec(0.01f64..1.0, 1..10),
        f in prop::collection::vec(-3.0f64..3.0, 6),
        g in prop::collection::vec(0.0f64..2.0, 6),
    ) {
        let space = path_space(&lengths, &[1.0; 6]);
        let nodes = walk(6, &steps);
        let curve = ParametricCurve::from_nodes(&space, &nodes, times_from(&gaps, nodes.len())).unwrap();
        let resampled = curve.constant_speed_reparam().unwrap().into_curve();
        prop_assert!((residual(&f, &g, &curve) - residual(&f, &g, &resampled)).abs() <= 1e-10);
    }

    #[test]
    fn generated_instances_round_trip(seed in 0u64..10_000, points in 2usize..60, measures in 1usize..30) {
        let inst = generate_random_instance(seed, points, measures, 0.5).unwrap();
        let text = inst.to_json();
        let again = Instance::from_json(&text).unwrap();
        prop_assert_eq!(text, again.to_json());
    }
}

#[test]
fn generation_is_deterministic_per_seed() {
    let a = generate_random_instance(0, 40, 10, 0.3).unwrap().to_json();
    let b = generate_random_instance(0, 40, 10, 0.3).unwrap().to_json();
    let c = generate_random_instance(1, 40, 10, 0.3).unwrap().to_json();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn shipped_instances_round_trip() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/../../instances");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            let first = Instance::load(&path).unwrap();
            let second = Instance::from_json(&first.to_json()).unwrap();
            assert_eq!(first.to_json(), second.to_json(), "{}", path.display());
            seen += 1;
        }
    }
    assert!(seen >= 2);
}
