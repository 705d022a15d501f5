//! Independent primal solver for the modulus: a log-barrier interior point
//! method on the density itself. It shares no code path with the dual
//! solver beyond preprocessing and is used to cross-check it.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;
use crate::modulus::{check_exponent, split_vanishing, Incidence};

#[derive(Clone, Debug, PartialEq)]
pub struct PrimalSolution {
    pub value: f64,
    pub f: Vec<f64>,
    /// Newton steps over all barrier stages.
    pub iterations: usize,
    /// Upper bound on `value - Mod` from the last barrier parameter.
    pub gap_bound: f64,
}

struct Barrier<'a> {
    inc: &'a Incidence,
    p: f64,
}

impl Barrier<'_> {
    fn slacks(&self, f: &[f64]) -> Vec<f64> {
        self.inc.integrals(f).into_iter().map(|s| s - 1.0).collect()
    }

    fn energy(&self, f: &[f64]) -> f64 {
        f.iter().zip(&self.inc.reference).map(|(v, r)| r * v.abs().powf(self.p)).sum()
    }

    fn phi(&self, t: f64, f: &[f64]) -> f64 {
        let s = self.slacks(f);
        if s.iter().any(|v| !(*v > 0.0)) {
            return f64::INFINITY;
        }
        t * self.energy(f) - s.iter().map(|v| v.ln()).sum::<f64>()
    }

    fn newton_direction(&self, t: f64, f: &[f64]) -> Option<(DVector<f64>, DVector<f64>)> {
        let n = f.len();
        let p = self.p;
        let s = self.slacks(f);
        let mut grad = DVector::zeros(n);
        let mut h = DMatrix::zeros(n, n);
        for k in 0..n {
            let a = f[k].abs().max(1e-300);
            grad[k] = t * p * self.inc.reference[k] * a.powf(p - 1.0) * f[k].signum();
            h[(k, k)] = t * p * (p - 1.0) * self.inc.reference[k] * a.powf(p - 2.0);
        }
        for (col, si) in self.inc.cols.iter().zip(&s) {
            for &(a, wa) in col {
                grad[a] -= wa / si;
                for &(b, wb) in col {
                    h[(a, b)] += wa * wb / (si * si);
                }
            }
        }
        let scale = (0..n).map(|k| h[(k, k)]).fold(0.0, f64::max);
        let mut tau = 0.0;
        for _ in 0..6 {
            let mut reg = h.clone();
            for k in 0..n {
                reg[(k, k)] += tau;
            }
            if let Some(ch) = reg.cholesky() {
                let d = -ch.solve(&grad);
                if d.iter().all(|v| v.is_finite()) {
                    return Some((d, grad));
                }
            }
            tau = if tau == 0.0 { 1e-14 * scale } else { tau * 1e3 };
        }
        None
    }
}

/// Minimizes `Σ m_x f_x^p` subject to `∫ f dμ_i >= 1` with the barrier
/// `t Σ m_x |f_x|^p - Σ_i log(∫ f dμ_i - 1)`, increasing `t` until the
/// duality bound `k/t` falls below `rel_tol` times the current value.
pub fn solve_modulus_primal(
    reference: &[f64],
    measures: &[DiscreteMeasure],
    p: f64,
    rel_tol: f64,
) -> Result<PrimalSolution> {
    check_exponent(p)?;
    let n = reference.len();
    if measures.is_empty() {
        return Ok(PrimalSolution { value: 0.0, f: vec![0.0; n], iterations: 0, gap_bound: 0.0 });
    }
    if measures.iter().any(DiscreteMeasure::is_zero) {
        return Ok(PrimalSolution { value: f64::INFINITY, f: vec![0.0; n], iterations: 0, gap_bound: 0.0 });
    }
    let (kept, _) = split_vanishing(reference, measures);
    if kept.is_empty() {
        return Ok(PrimalSolution { value: 0.0, f: vec![0.0; n], iterations: 0, gap_bound: 0.0 });
    }
    let members: Vec<&DiscreteMeasure> = kept.iter().map(|&i| &measures[i]).collect();
    let inc = Incidence::new(reference, &members);
    let bar = Barrier { inc: &inc, p };
    let k = members.len() as f64;
    let smallest = members.iter().map(|mu| mu.total()).fold(f64::INFINITY, f64::min);
    let mut f = vec![2.0 / smallest; inc.points.len()];
    let mut t = k / bar.energy(&f);
    let mut iterations = 0;
    loop {
        // centering
        for _ in 0..200 {
            let Some((d, grad)) = bar.newton_direction(t, &f) else { break };
            let decrement = -grad.dot(&d);
            if !(decrement > 1e-14) {
                break;
            }
            let current = bar.phi(t, &f);
            let mut alpha = 1.0;
            let mut moved = false;
            for _ in 0..60 {
                let trial: Vec<f64> = f.iter().zip(d.iter()).map(|(v, dv)| v + alpha * dv).collect();
                let val = bar.phi(t, &trial);
                if val <= current - 0.25 * alpha * decrement {
                    f = trial;
                    moved = true;
                    break;
                }
                alpha *= 0.5;
            }
            iterations += 1;
            if !moved {
                break;
            }
        }
        let energy = bar.energy(&f);
        if k / t <= rel_tol * energy || t > 1e300 {
            break;
        }
        t *= 8.0;
    }
    let f: Vec<f64> = f.iter().map(|v| v.max(0.0)).collect();
    let smin = inc.integrals(&f).into_iter().fold(f64::INFINITY, f64::min);
    if !(smin > 0.0) {
        return Err(Error::NotConverged { iterations, gap: f64::INFINITY });
    }
    let f: Vec<f64> = f.iter().map(|v| v / smin).collect();
    let value = bar.energy(&f);
    Ok(PrimalSolution { value, f: inc.expand(&f, n), iterations, gap_bound: k / t })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modulus::{solve_modulus_with_reference, SolverOptions};

    #[test]
    fn saturated_example() {
        let n = 40;
        let m = vec![1.0 / n as f64; n];
        let left = DiscreteMeasure::from_pairs((0..n / 2).map(|x| (x, m[x]))).unwrap();
        let right = DiscreteMeasure::from_pairs((n / 2..n).map(|x| (x, m[x]))).unwrap();
        let full = DiscreteMeasure::from_dense(&m).unwrap();
        for p in [1.5, 2.0, 3.0] {
            let sol = solve_modulus_primal(&m, &[left.clone(), right.clone(), full.clone()], p, 1e-12).unwrap();
            assert!((sol.value - 2f64.powf(p)).abs() < 1e-9, "p={p}: {}", sol.value);
            assert!(sol.f.iter().all(|v| (v - 2.0).abs() < 1e-6));
        }
    }

    #[test]
    fn agrees_with_dual_on_uneven_members() {
        let m = vec![0.1, 0.2, 0.3, 0.4];
        let ms = vec![
            DiscreteMeasure::from_pairs([(0, 1.0), (1, 0.5)]).unwrap(),
            DiscreteMeasure::from_pairs([(1, 0.2), (2, 0.7)]).unwrap(),
            DiscreteMeasure::from_pairs([(3, 0.3), (0, 0.1)]).unwrap(),
        ];
        for p in [1.5, 2.0, 3.0] {
            let primal = solve_modulus_primal(&m, &ms, p, 1e-12).unwrap();
            let dual = solve_modulus_with_reference(&m, &ms, p, &SolverOptions::default(), None).unwrap();
            assert!((primal.value - dual.value).abs() < 1e-8 * dual.value);
            for (a, b) in primal.f.iter().zip(&dual.f) {
                assert!((a - b).abs() < 1e-6, "{a} vs {b}");
            }
        }
    }
}
