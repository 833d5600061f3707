use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeight {
    /// Weight `n / (2 n_c)` per class.
    Balanced,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    /// Inverse regularisation strength.
    pub c: f64,
    pub class_weight: ClassWeight,
    /// Stop once the gradient's max-norm falls to this.
    pub tol: f64,
    pub max_iter: usize,
    pub memory: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            c: 0.01,
            class_weight: ClassWeight::Balanced,
            tol: 1e-6,
            max_iter: 2000,
            memory: 10,
        }
    }
}

/// A fitted L2-penalised logistic classifier; the intercept is unpenalised.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeModel<F: Scalar> {
    pub weights: Array1<F>,
    pub bias: F,
    pub c: f64,
    /// `[negative, positive]`.
    pub class_weights: [f64; 2],
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: f64,
}

impl<F: Scalar> ProbeModel<F> {
    pub fn width(&self) -> usize {
        self.weights.len()
    }

    /// Decision values `x w + b`.
    pub fn decision(&self, x: ArrayView2<F>) -> Result<Vec<F>> {
        if x.ncols() != self.width() {
            return Err(Error::Dimension(format!(
                "probe expects {} features, got {}",
                self.width(),
                x.ncols()
            )));
        }
        Ok(x.rows().into_iter().map(|r| r.dot(&self.weights) + self.bias).collect())
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus<F: Scalar>(x: F) -> F {
    if x > F::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `1 / (1 + e^{-x})` without overflow.
pub(crate) fn sigmoid<F: Scalar>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

/// The training problem with labels as signs and per-row weights.
pub struct Objective<'a, F: Scalar> {
    x: ArrayView2<'a, F>,
    signs: Vec<F>,
    sample_weight: Vec<F>,
    inv_c: F,
}

impl<'a, F: Scalar> Objective<'a, F> {
    pub fn new(x: ArrayView2<'a, F>, labels: &[bool], cfg: &ProbeConfig) -> Result<(Self, [f64; 2])> {
        if x.nrows() != labels.len() {
            return Err(Error::Dimension(format!(
                "{} rows but {} labels",
                x.nrows(),
                labels.len()
            )));
        }
        if !(cfg.c > 0.0) {
            return Err(Error::Invalid(format!("C must be positive, got {}", cfg.c)));
        }
        let n_pos = labels.iter().filter(|&&y| y).count();
        let n_neg = labels.len() - n_pos;
        if n_pos == 0 || n_neg == 0 {
            return Err(Error::SingleClass);
        }
        let n = labels.len() as f64;
        let cw = match cfg.class_weight {
            ClassWeight::Balanced => [n / (2.0 * n_neg as f64), n / (2.0 * n_pos as f64)],
            ClassWeight::Uniform => [1.0, 1.0],
        };
        let signs = labels.iter().map(|&y| if y { F::one() } else { -F::one() }).collect();
        let sample_weight = labels.iter().map(|&y| F::lit(cw[y as usize])).collect();
        Ok((
            Objective {
                x,
                signs,
                sample_weight,
                inv_c: F::lit(1.0 / cfg.c),
            },
            cw,
        ))
    }

    pub fn dim(&self) -> usize {
        self.x.ncols() + 1
    }

    /// Value and gradient at `theta = [w, b]`.
    pub fn eval(&self, theta: &[F], grad: &mut [F]) -> F {
        let d = self.x.ncols();
        let (w, b) = (&theta[..d], theta[d]);
        grad.iter_mut().for_each(|g| *g = F::zero());
        let mut f = F::zero();
        let wv = ArrayView1::from(w);
        for ((row, &s), &sw) in self.x.rows().into_iter().zip(&self.signs).zip(&self.sample_weight) {
            let m = s * (row.dot(&wv) + b);
            f += sw * softplus(-m);
            let coef = -s * sw * sigmoid(-m);
            match row.as_slice() {
                Some(r) => grad[..d].iter_mut().zip(r).for_each(|(g, &xi)| *g += coef * xi),
                None => grad[..d].iter_mut().zip(row.iter()).for_each(|(g, &xi)| *g += coef * xi),
            }
            grad[d] += coef;
        }
        let mut penalty = F::zero();
        for (g, &wi) in grad[..d].iter_mut().zip(w) {
            *g += self.inv_c * wi;
            penalty += wi * wi;
        }
        f + F::lit(0.5) * self.inv_c * penalty
    }
}

fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).fold(F::zero(), |acc, (&x, &y)| acc + x * y)
}

fn max_abs<F: Scalar>(a: &[F]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs().to_f64_value()))
}

/// Fixed curvature bound `A' W A / 4 + diag(1/C, .., 1/C, 0)` of the
/// objective, with `A` the design plus an intercept column. It dominates
/// the Hessian everywhere, and one factorisation serves every fit on
/// similar rows (folds, permuted labels with the same class counts).
#[derive(Debug, Clone)]
pub struct Preconditioner {
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl Preconditioner {
    pub fn bohning<F: Scalar>(x: ArrayView2<F>, labels: &[bool], cfg: &ProbeConfig) -> Result<Self> {
        let (obj, _) = Objective::new(x, labels, cfg)?;
        let (n, d) = x.dim();
        let a = DMatrix::from_fn(n, d + 1, |r, c| {
            let v = if c < d { x[[r, c]].to_f64_value() } else { 1.0 };
            v * (0.25 * obj.sample_weight[r].to_f64_value()).sqrt()
        });
        let mut m = a.tr_mul(&a);
        let inv_c = 1.0 / cfg.c;
        for k in 0..d {
            m[(k, k)] += inv_c;
        }
        let chol = m
            .cholesky()
            .ok_or_else(|| Error::Invalid("curvature bound is not positive definite".into()))?;
        Ok(Preconditioner { chol })
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    /// `v <- M^{-1} v`.
    fn apply<F: Scalar>(&self, v: &mut [F]) {
        let mut b = DVector::from_iterator(v.len(), v.iter().map(|x| x.to_f64_value()));
        self.chol.solve_mut(&mut b);
        for (x, &y) in v.iter_mut().zip(b.iter()) {
            *x = F::lit(y);
        }
    }
}

/// Limited-memory BFGS with backtracking; returns the minimiser and stats.
fn lbfgs<F: Scalar>(
    obj: &Objective<F>,
    cfg: &ProbeConfig,
    init: Option<&[F]>,
    precond: Option<&Preconditioner>,
) -> (Vec<F>, bool, usize, f64) {
    let dim = obj.dim();
    let precond = precond.filter(|p| p.dim() == dim);
    let mut theta = match init {
        Some(t) if t.len() == dim && t.iter().all(|v| v.is_finite()) => t.to_vec(),
        _ => vec![F::zero(); dim],
    };
    let mut grad = vec![F::zero(); dim];
    let mut f = obj.eval(&theta, &mut grad);
    let mut history: VecDeque<(Vec<F>, Vec<F>, F)> = VecDeque::with_capacity(cfg.memory);
    let mut trial = vec![F::zero(); dim];
    let mut trial_grad = vec![F::zero(); dim];
    let c1 = F::lit(1e-4);
    let slack = F::lit(64.0) * F::epsilon();
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        let gnorm = max_abs(&grad);
        if gnorm <= cfg.tol {
            return (theta, true, iterations, gnorm);
        }
        // Two-loop recursion.
        let mut dir: Vec<F> = grad.iter().map(|&g| -g).collect();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = *rho * dot(s, &dir);
            for (d, &yi) in dir.iter_mut().zip(y) {
                *d -= a * yi;
            }
            alphas.push(a);
        }
        match (precond, history.back()) {
            (Some(p), _) => p.apply(&mut dir),
            (None, Some((s, y, _))) => {
                let gamma = dot(s, y) / dot(y, y);
                dir.iter_mut().for_each(|d| *d *= gamma);
            }
            (None, None) => {
                let norm = dot(&grad, &grad).sqrt();
                dir.iter_mut().for_each(|d| *d /= norm);
            }
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.into_iter().rev()) {
            let bcoef = *rho * dot(y, &dir);
            for (d, &si) in dir.iter_mut().zip(s) {
                *d += (a - bcoef) * si;
            }
        }
        let mut slope = dot(&grad, &dir);
        if slope >= F::zero() {
            history.clear();
            dir = grad.iter().map(|&g| -g).collect();
            if let Some(p) = precond {
                p.apply(&mut dir);
            }
            slope = dot(&grad, &dir);
        }

        let mut step = F::one();
        let mut accepted = false;
        for _ in 0..60 {
            for ((t, &x), &d) in trial.iter_mut().zip(&theta).zip(&dir) {
                *t = x + step * d;
            }
            let f_new = obj.eval(&trial, &mut trial_grad);
            let armijo = f_new <= f + c1 * step * slope;
            // Near the optimum the decrease drops below the resolution of `f`;
            // accept steps that stay level and still shrink the gradient.
            let level = f_new <= f + slack * f.abs() && max_abs(&trial_grad) < gnorm;
            if armijo || level {
                accepted = true;
                let s: Vec<F> = trial.iter().zip(&theta).map(|(&a, &b)| a - b).collect();
                let y: Vec<F> = trial_grad.iter().zip(&grad).map(|(&a, &b)| a - b).collect();
                let sy = dot(&s, &y);
                if sy > F::epsilon() * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
                    if history.len() == cfg.memory {
                        history.pop_front();
                    }
                    history.push_back((s, y, F::one() / sy));
                }
                std::mem::swap(&mut theta, &mut trial);
                std::mem::swap(&mut grad, &mut trial_grad);
                f = f_new;
                break;
            }
            step *= F::lit(0.5);
        }
        iterations += 1;
        if !accepted {
            break;
        }
    }
    let gnorm = max_abs(&grad);
    (theta, gnorm <= cfg.tol, iterations, gnorm)
}

/// Fit on rows of `x` (already standardised) against binary `labels`.
pub fn fit_logistic<F: Scalar>(x: ArrayView2<F>, labels: &[bool], cfg: &ProbeConfig) -> Result<ProbeModel<F>> {
    fit_logistic_from(x, labels, cfg, None)
}

/// As [`fit_logistic`], starting the solver at `init = [w, b]` when its
/// length matches. The objective is strictly convex, so the start only
/// changes how many iterations are spent, not the optimum.
pub fn fit_logistic_from<F: Scalar>(
    x: ArrayView2<F>,
    labels: &[bool],
    cfg: &ProbeConfig,
    init: Option<&[F]>,
) -> Result<ProbeModel<F>> {
    fit_logistic_with(x, labels, cfg, init, None)
}

/// As [`fit_logistic_from`], with `precond` as the solver's initial inverse
/// curvature. A preconditioner of the wrong size is ignored.
pub fn fit_logistic_with<F: Scalar>(
    x: ArrayView2<F>,
    labels: &[bool],
    cfg: &ProbeConfig,
    init: Option<&[F]>,
    precond: Option<&Preconditioner>,
) -> Result<ProbeModel<F>> {
    let (obj, class_weights) = Objective::new(x, labels, cfg)?;
    let (theta, converged, iterations, grad_norm) = lbfgs(&obj, cfg, init, precond);
    let d = x.ncols();
    Ok(ProbeModel {
        weights: Array1::from(theta[..d].to_vec()),
        bias: theta[d],
        c: cfg.c,
        class_weights,
        converged,
        iterations,
        grad_norm,
    })
}
