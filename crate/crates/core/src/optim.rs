//! Smooth convex minimization over the nonnegative orthant.
//!
//! Each iteration takes a spectral projected gradient step (Barzilai-Borwein
//! length, nonmonotone Armijo search) followed by a Newton step restricted to
//! the face of currently positive coordinates. The gradient steps identify
//! the active set; the Newton steps supply the final digits.

use nalgebra::{DMatrix, DVector};

pub(crate) trait Smooth {
    fn eval(&self, x: &[f64]) -> (f64, Vec<f64>);
    /// Hessian restricted to the coordinates in `face`.
    fn hessian(&self, x: &[f64], face: &[usize]) -> DMatrix<f64>;
}

pub(crate) struct Outcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

const GLL_MEMORY: usize = 10;
const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACK: usize = 60;

fn project(x: &mut [f64]) {
    x.iter_mut().for_each(|v| *v = v.max(0.0));
}

/// Infinity norm of `x - P(x - grad)`.
pub(crate) fn projected_gradient_norm(x: &[f64], grad: &[f64]) -> f64 {
    let mut y: Vec<f64> = x.iter().zip(grad).map(|(a, g)| a - g).collect();
    project(&mut y);
    x.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct State {
    x: Vec<f64>,
    value: f64,
    grad: Vec<f64>,
}

/// Minimizes `obj` starting from `x0` (projected first). `stop` is consulted
/// after every iteration with the current point, value and gradient.
pub(crate) fn minimize<F: Smooth>(
    obj: &F,
    x0: Vec<f64>,
    max_iter: usize,
    mut stop: impl FnMut(&[f64], f64, &[f64]) -> bool,
) -> Outcome {
    let mut x = x0;
    project(&mut x);
    let (value, grad) = obj.eval(&x);
    let mut st = State { x, value, grad };
    let mut history = vec![st.value];
    let mut alpha = 1.0;
    let mut stalled = 0;
    for it in 0..max_iter {
        if stop(&st.x, st.value, &st.grad) {
            polish(obj, &mut st, &mut stop);
            return Outcome { x: st.x, iterations: it, converged: true };
        }
        let before = st.value;
        let moved_spg = spg_step(obj, &mut st, &mut alpha, &history);
        history.push(st.value);
        if history.len() > GLL_MEMORY {
            history.remove(0);
        }
        let moved_newton = newton_step(obj, &mut st);
        if moved_newton {
            *history.last_mut().unwrap() = st.value;
        }
        if !(moved_spg || moved_newton) || st.value == before {
            stalled += 1;
            if stalled >= 5 {
                let converged = stop(&st.x, st.value, &st.grad);
                return Outcome { x: st.x, iterations: it + 1, converged };
            }
        } else {
            stalled = 0;
        }
    }
    let converged = stop(&st.x, st.value, &st.grad);
    Outcome { x: st.x, iterations: max_iter, converged }
}

// A couple of extra Newton steps after the stopping test passes, kept only
// when they keep the test satisfied.
fn polish<F: Smooth>(
    obj: &F,
    st: &mut State,
    stop: &mut impl FnMut(&[f64], f64, &[f64]) -> bool,
) {
    for _ in 0..2 {
        let saved = State { x: st.x.clone(), value: st.value, grad: st.grad.clone() };
        if !newton_step(obj, st) {
            return;
        }
        if !stop(&st.x, st.value, &st.grad) {
            *st = saved;
            return;
        }
    }
}

fn spg_step<F: Smooth>(
    obj: &F,
    st: &mut State,
    alpha: &mut f64,
    history: &[f64],
) -> bool {
    let mut trial: Vec<f64> = st.x.iter().zip(&st.grad).map(|(x, g)| x - *alpha * g).collect();
    project(&mut trial);
    let d: Vec<f64> = trial.iter().zip(&st.x).map(|(a, b)| a - b).collect();
    let gd = dot(&st.grad, &d);
    if !(gd < 0.0) {
        return false;
    }
    let reference = history.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut theta = 1.0;
    for _ in 0..MAX_BACKTRACK {
        let xn: Vec<f64> = st.x.iter().zip(&d).map(|(x, di)| x + theta * di).collect();
        let (vn, gn) = obj.eval(&xn);
        if vn.is_finite() && vn <= reference + ARMIJO * theta * gd {
            let s: Vec<f64> = xn.iter().zip(&st.x).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = gn.iter().zip(&st.grad).map(|(a, b)| a - b).collect();
            let sy = dot(&s, &y);
            *alpha = if sy > 0.0 { (dot(&s, &s) / sy).clamp(1e-30, 1e30) } else { 1e30_f64.min(*alpha * 10.0) };
            *st = State { x: xn, value: vn, grad: gn };
            return true;
        }
        theta *= 0.5;
    }
    *alpha *= 0.5;
    false
}

fn newton_step<F: Smooth>(obj: &F, st: &mut State) -> bool {
    let face: Vec<usize> = (0..st.x.len())
        .filter(|&i| st.x[i] > 0.0 || st.grad[i] < 0.0)
        .collect();
    if face.is_empty() {
        return false;
    }
    let h = obj.hessian(&st.x, &face);
    let g = DVector::from_iterator(face.len(), face.iter().map(|&i| st.grad[i]));
    let scale = (0..face.len()).map(|i| h[(i, i)].abs()).fold(0.0, f64::max);
    if !(scale > 0.0 && scale.is_finite()) {
        return false;
    }
    // Damped pseudo-inverse step -(H+τ)⁻¹ H (H+τ)⁻¹ g: on directions where H
    // is singular (redundant members) it vanishes instead of blowing up.
    let mut tau = 1e-10 * scale;
    let mut dir = None;
    for _ in 0..6 {
        let mut reg = h.clone();
        for i in 0..face.len() {
            reg[(i, i)] += tau;
        }
        if let Some(ch) = reg.cholesky() {
            let d = -ch.solve(&(&h * ch.solve(&g)));
            if d.iter().all(|v| v.is_finite()) {
                dir = Some(d);
                break;
            }
        }
        tau *= 1e3;
    }
    let Some(d) = dir else { return false };
    let gd = g.dot(&d);
    if !(gd < 0.0) {
        return false;
    }
    // projected Newton arc: clip at the bounds instead of stopping at the first one
    let mut a = 1.0;
    for _ in 0..20 {
        let mut xn = st.x.clone();
        for (k, &i) in face.iter().enumerate() {
            xn[i] = (st.x[i] + a * d[k]).max(0.0);
        }
        let step: Vec<f64> = xn.iter().zip(&st.x).map(|(u, v)| u - v).collect();
        let decrease = dot(&st.grad, &step);
        if decrease < 0.0 {
            let (vn, gn) = obj.eval(&xn);
            if vn.is_finite() && vn <= st.value + ARMIJO * decrease {
                *st = State { x: xn, value: vn, grad: gn };
                return true;
            }
        }
        a *= 0.5;
    }
    let mut alpha_max = f64::INFINITY;
    for (k, &i) in face.iter().enumerate() {
        if d[k] < 0.0 {
            alpha_max = alpha_max.min(st.x[i] / -d[k]);
        }
    }
    let trial = |a: f64| {
        let mut xn = st.x.clone();
        for (k, &i) in face.iter().enumerate() {
            xn[i] = if a == alpha_max && d[k] < 0.0 && st.x[i] / -d[k] == alpha_max {
                0.0
            } else {
                (st.x[i] + a * d[k]).max(0.0)
            };
        }
        xn
    };
    let pg_before = projected_gradient_norm(&st.x, &st.grad);
    let mut a = alpha_max.min(1.0);
    let full = a;
    for _ in 0..MAX_BACKTRACK {
        let xn = trial(a);
        let (vn, gn) = obj.eval(&xn);
        if vn.is_finite() && vn <= st.value + ARMIJO * a * gd {
            *st = State { x: xn, value: vn, grad: gn };
            return true;
        }
        a *= 0.5;
    }
    // Near the optimum the Armijo test drowns in rounding; fall back to the
    // projected gradient as the merit function.
    let xn = trial(full);
    let (vn, gn) = obj.eval(&xn);
    if vn.is_finite()
        && vn <= st.value + 1e-14 * st.value.abs().max(f64::MIN_POSITIVE)
        && projected_gradient_norm(&xn, &gn) < pg_before
    {
        *st = State { x: xn, value: vn, grad: gn };
        return true;
    }
    false
}
