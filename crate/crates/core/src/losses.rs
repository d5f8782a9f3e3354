//! Generalized linear model losses `f_i(w) = φ_i(x_iᵀw) + σ/2‖w‖²`.
//!
//! Every per-sample gradient has the form `φ_i'(x_iᵀw)·x_i + σw`, so methods
//! can work with the scalar derivative and the sparse row instead of
//! materializing dense gradients.

use nalgebra::{DMatrix, DVector};

use crate::data::Dataset;
use crate::error::{argument, Error, Result};
use crate::linalg;

/// Loss family together with any per-sample parameters it needs.
#[derive(Debug, Clone, PartialEq)]
pub enum LossFamily {
    /// `φ_i(t) = ln(1 + exp(−y_i t))`, labels in {−1, +1}.
    Logistic,
    /// `φ_i(t) = ½(t − y_i)²`.
    Squared,
    /// `φ_i(t) = a_i |t − b_i|^{2r}`.
    Monomial {
        power_r: f64,
        offsets: Vec<f64>,
        scales: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossSpec {
    pub family: LossFamily,
    /// L2 regularization weight σ ≥ 0.
    pub sigma: f64,
}

impl LossSpec {
    pub fn logistic(sigma: f64) -> Self {
        Self {
            family: LossFamily::Logistic,
            sigma,
        }
    }

    pub fn squared(sigma: f64) -> Self {
        Self {
            family: LossFamily::Squared,
            sigma,
        }
    }

    pub fn monomial(power_r: f64, offsets: Vec<f64>, scales: Vec<f64>, sigma: f64) -> Self {
        Self {
            family: LossFamily::Monomial {
                power_r,
                offsets,
                scales,
            },
            sigma,
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self.family {
            LossFamily::Logistic => "logistic",
            LossFamily::Squared => "squared",
            LossFamily::Monomial { .. } => "monomial",
        }
    }

    fn validate(&self, data: &Dataset) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(argument(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        match &self.family {
            LossFamily::Logistic => {
                if !data.is_binary() {
                    return Err(argument("logistic loss needs labels in {-1, +1}"));
                }
            }
            LossFamily::Squared => {}
            LossFamily::Monomial {
                power_r,
                offsets,
                scales,
            } => {
                if !(power_r.is_finite() && *power_r > 0.0) {
                    return Err(argument(format!(
                        "monomial power must be > 0, got {power_r}"
                    )));
                }
                if offsets.len() != data.n() || scales.len() != data.n() {
                    return Err(Error::Dimension(format!(
                        "monomial needs {} offsets and scales, got {} and {}",
                        data.n(),
                        offsets.len(),
                        scales.len()
                    )));
                }
                if scales.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
                    return Err(argument("monomial scales must be strictly positive"));
                }
            }
        }
        Ok(())
    }
}

/// Per-sample evaluation at a point: loss value, scalar derivative `φ_i'(x_iᵀw)`
/// and squared gradient norm `‖∇f_i(w)‖²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleEval {
    pub loss: f64,
    pub dphi: f64,
    pub grad_sq_norm: f64,
}

/// A loss specification bound to a dataset.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    spec: &'a LossSpec,
    data: &'a Dataset,
}

#[inline]
fn log1p_exp_neg(t: f64) -> f64 {
    // ln(1 + e^{-t}) = ln(1 + e^{-|t|}) + max(0, -t)
    (-t.abs()).exp().ln_1p() + (-t).max(0.0)
}

#[inline]
fn sigmoid_neg(t: f64) -> f64 {
    // 1 / (1 + e^{t})
    if t >= 0.0 {
        let e = (-t).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + t.exp())
    }
}

impl<'a> Problem<'a> {
    pub fn new(spec: &'a LossSpec, data: &'a Dataset) -> Result<Self> {
        spec.validate(data)?;
        Ok(Self { spec, data })
    }

    pub fn spec(&self) -> &'a LossSpec {
        self.spec
    }

    pub fn data(&self) -> &'a Dataset {
        self.data
    }

    pub fn n(&self) -> usize {
        self.data.n()
    }

    pub fn dim(&self) -> usize {
        self.data.dim()
    }

    pub fn sigma(&self) -> f64 {
        self.spec.sigma
    }

    fn check(&self, w: &[f64], i: usize) -> Result<()> {
        if i >= self.n() {
            return Err(Error::Index {
                index: i,
                n: self.n(),
            });
        }
        if w.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "parameter length {} but dataset dim {}",
                w.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// `(φ_i(t), φ_i'(t))` for the unregularized link.
    pub fn link(&self, i: usize, t: f64) -> (f64, f64) {
        match &self.spec.family {
            LossFamily::Logistic => {
                let y = self.data.label(i);
                let m = y * t;
                (log1p_exp_neg(m), -y * sigmoid_neg(m))
            }
            LossFamily::Squared => {
                let r = t - self.data.label(i);
                (0.5 * r * r, r)
            }
            LossFamily::Monomial {
                power_r,
                offsets,
                scales,
            } => {
                let a = scales[i];
                let r = t - offsets[i];
                let p = 2.0 * power_r;
                let ar = r.abs();
                let value = a * ar.powf(p);
                let deriv = if r == 0.0 {
                    0.0
                } else {
                    a * p * ar.powf(p - 1.0) * r.signum()
                };
                (value, deriv)
            }
        }
    }

    /// Loss, scalar derivative and gradient norm of sample `i` at `w`.
    pub fn eval(&self, w: &[f64], i: usize) -> Result<SampleEval> {
        self.check(w, i)?;
        let x = self.data.sample(i);
        let (phi, dphi) = self.link(i, x.dot_unchecked(w));
        let sigma = self.spec.sigma;
        let (loss, grad_sq_norm) = if sigma == 0.0 {
            (phi, dphi * dphi * self.data.sq_norm(i))
        } else {
            let wsq = linalg::norm_sq(w);
            // ‖dphi·x + σw‖², merging the sparse support into a dense sweep
            let (idx, vals) = (x.indices(), x.values());
            let mut k = 0;
            let mut g2 = 0.0;
            for (j, wj) in w.iter().enumerate() {
                let mut g = sigma * wj;
                if k < idx.len() && idx[k] == j {
                    g += dphi * vals[k];
                    k += 1;
                }
                g2 += g * g;
            }
            (phi + 0.5 * sigma * wsq, g2)
        };
        if !(loss.is_finite() && dphi.is_finite() && grad_sq_norm.is_finite()) {
            return Err(Error::Numeric {
                index: i,
                what: format!("loss={loss} dphi={dphi} |grad|^2={grad_sq_norm}"),
            });
        }
        Ok(SampleEval {
            loss,
            dphi,
            grad_sq_norm,
        })
    }

    pub fn loss_i(&self, w: &[f64], i: usize) -> Result<f64> {
        self.check(w, i)?;
        let (phi, _) = self.link(i, self.data.sample(i).dot_unchecked(w));
        Ok(phi + 0.5 * self.spec.sigma * linalg::norm_sq(w))
    }

    /// Dense gradient `φ_i'(x_iᵀw)·x_i + σw`.
    pub fn grad_i(&self, w: &[f64], i: usize) -> Result<Vec<f64>> {
        self.check(w, i)?;
        let x = self.data.sample(i);
        let (_, dphi) = self.link(i, x.dot_unchecked(w));
        let mut g: Vec<f64> = w.iter().map(|v| self.spec.sigma * v).collect();
        x.axpy_into(dphi, &mut g);
        Ok(g)
    }

    pub fn full_loss(&self, w: &[f64]) -> Result<f64> {
        if self.n() == 0 {
            return Err(Error::EmptyDataset);
        }
        self.check(w, 0)?;
        let data_term: f64 = (0..self.n())
            .map(|i| self.link(i, self.data.sample(i).dot_unchecked(w)).0)
            .sum::<f64>()
            / self.n() as f64;
        Ok(data_term + 0.5 * self.spec.sigma * linalg::norm_sq(w))
    }

    pub fn full_grad(&self, w: &[f64]) -> Result<Vec<f64>> {
        if self.n() == 0 {
            return Err(Error::EmptyDataset);
        }
        self.check(w, 0)?;
        let inv_n = 1.0 / self.n() as f64;
        let mut g = vec![0.0; self.dim()];
        for i in 0..self.n() {
            let x = self.data.sample(i);
            let (_, dphi) = self.link(i, x.dot_unchecked(w));
            x.axpy_into(dphi * inv_n, &mut g);
        }
        linalg::axpy(self.spec.sigma, w, &mut g);
        Ok(g)
    }

    /// Per-sample values `f_i(w)` for all `i`.
    pub fn all_losses(&self, w: &[f64]) -> Result<Vec<f64>> {
        (0..self.n()).map(|i| self.loss_i(w, i)).collect()
    }

    /// `w ← w − step·(dphi·x_i + σw)`.
    #[inline]
    pub fn descend(&self, w: &mut [f64], i: usize, dphi: f64, step: f64) {
        let sigma = self.spec.sigma;
        if sigma != 0.0 {
            // same operation order as `descend_from` with `at == w`
            let a = -step * sigma;
            w.iter_mut().for_each(|v| *v += a * *v);
        }
        self.data.sample(i).axpy_into(-step * dphi, w);
    }

    /// `target ← target − step·(dphi·x_i + σ·at)`; the gradient is taken at `at`.
    #[inline]
    pub fn descend_from(&self, target: &mut [f64], at: &[f64], i: usize, dphi: f64, step: f64) {
        let sigma = self.spec.sigma;
        if sigma != 0.0 {
            linalg::axpy(-step * sigma, at, target);
        }
        self.data.sample(i).axpy_into(-step * dphi, target);
    }

    /// Per-sample smoothness constants `L_i = c_φ‖x_i‖² + σ` and their maximum.
    pub fn smoothness_constants(&self) -> Result<(Vec<f64>, f64)> {
        let sigma = self.spec.sigma;
        let per_sample: Vec<f64> = match &self.spec.family {
            LossFamily::Logistic => (0..self.n())
                .map(|i| 0.25 * self.data.sq_norm(i) + sigma)
                .collect(),
            LossFamily::Squared => (0..self.n())
                .map(|i| self.data.sq_norm(i) + sigma)
                .collect(),
            LossFamily::Monomial {
                power_r, scales, ..
            } if *power_r == 1.0 => (0..self.n())
                .map(|i| 2.0 * scales[i] * self.data.sq_norm(i) + sigma)
                .collect(),
            LossFamily::Monomial { power_r, .. } => {
                return Err(Error::Unsupported(format!(
                    "monomial loss with r = {power_r} is not globally smooth"
                )))
            }
        };
        let l_max = per_sample.iter().copied().fold(0.0, f64::max);
        Ok((per_sample, l_max))
    }
}

/// Certified minimizer of the full objective.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimumCertificate {
    pub w_star: Vec<f64>,
    pub f_star: f64,
    pub fi_star: Vec<f64>,
    pub grad_norm_at_opt: f64,
    pub converged: bool,
    pub iterations: usize,
}

pub const CLOSED_FORM_TOL: f64 = 1e-10;
pub const ITERATIVE_TOL: f64 = 1e-8;
pub const DEFAULT_ORACLE_BUDGET: usize = 200_000;

impl OptimumCertificate {
    fn from_point(
        problem: &Problem<'_>,
        w_star: Vec<f64>,
        tol: f64,
        iterations: usize,
    ) -> Result<Self> {
        let fi_star = problem.all_losses(&w_star)?;
        let f_star = linalg::mean(&fi_star);
        let grad_norm_at_opt = linalg::norm(&problem.full_grad(&w_star)?);
        Ok(Self {
            w_star,
            f_star,
            fi_star,
            grad_norm_at_opt,
            converged: grad_norm_at_opt <= tol,
            iterations,
        })
    }
}

/// Minimizer of the full objective: normal equations for squared loss,
/// full-batch gradient descent with step `1/L_max` for logistic loss.
///
/// `budget` caps gradient-descent iterations (default
/// [`DEFAULT_ORACLE_BUDGET`]). A certificate is returned even when the budget
/// runs out; check `converged`.
pub fn optimum_oracle(problem: &Problem<'_>, budget: Option<usize>) -> Result<OptimumCertificate> {
    if problem.n() == 0 {
        return Err(Error::EmptyDataset);
    }
    match problem.spec().family {
        LossFamily::Squared => least_squares_optimum(problem),
        LossFamily::Logistic => {
            let budget = budget.unwrap_or(DEFAULT_ORACLE_BUDGET);
            let (_, l_max) = problem.smoothness_constants()?;
            let step = 1.0 / l_max.max(f64::MIN_POSITIVE);
            let mut w = vec![0.0; problem.dim()];
            let mut iterations = 0;
            loop {
                let g = problem.full_grad(&w)?;
                if linalg::norm(&g) <= ITERATIVE_TOL || iterations >= budget {
                    break;
                }
                linalg::axpy(-step, &g, &mut w);
                iterations += 1;
            }
            OptimumCertificate::from_point(problem, w, ITERATIVE_TOL, iterations)
        }
        LossFamily::Monomial { .. } => Err(Error::Unsupported(
            "no optimum oracle for monomial losses".into(),
        )),
    }
}

fn least_squares_optimum(problem: &Problem<'_>) -> Result<OptimumCertificate> {
    let data = problem.data();
    let (n, d) = (data.n(), data.dim());
    let mut gram = DMatrix::<f64>::zeros(d, d);
    let mut rhs = DVector::<f64>::zeros(d);
    for i in 0..n {
        let x = data.sample(i);
        let y = data.label(i);
        for (j, vj) in x.iter() {
            rhs[j] += vj * y;
            for (k, vk) in x.iter() {
                gram[(j, k)] += vj * vk;
            }
        }
    }
    // (AᵀA + nσI) w = Aᵀy
    for j in 0..d {
        gram[(j, j)] += n as f64 * problem.sigma();
    }
    let solve = |b: &DVector<f64>| -> Option<DVector<f64>> {
        match gram.clone().cholesky() {
            Some(ch) => Some(ch.solve(b)),
            None => gram.clone().svd(true, true).solve(b, 1e-12).ok(),
        }
    };
    let mut w = solve(&rhs).ok_or_else(|| Error::Numeric {
        index: 0,
        what: "normal equations could not be solved".into(),
    })?;
    // one round of iterative refinement
    let resid = &rhs - &gram * &w;
    if let Some(delta) = solve(&resid) {
        w += delta;
    }
    OptimumCertificate::from_point(problem, w.as_slice().to_vec(), CLOSED_FORM_TOL, 0)
}
