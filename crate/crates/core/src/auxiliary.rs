//! Auxiliary objectives whose online SGD steps reproduce SP, TAPS and
//! MOTAPS, plus the projection oracles behind the data-branch updates.
//!
//! Every auxiliary function is anchored at an iterate `w_t`: the squared
//! gradient norms `‖∇f_i(w_t)‖²` in the denominators are frozen at the
//! anchor. Component gradients live in the stacked space `(w, α, τ)`.

use crate::error::{argument, Error, Result};
use crate::linalg::{self, axpy, dot, norm_sq};
use crate::losses::Problem;
use crate::polyak::steps::ZERO_GRAD_SQ;
use crate::polyak::{HyperParams, Method, Sampler, TargetState};
use crate::trace::TraceRecord;

/// Least-norm correction of `x0` onto `{x : aᵀx = b}`. A zero `a` returns `x0`.
pub fn project_hyperplane(x0: &[f64], a: &[f64], b: f64) -> Vec<f64> {
    let aa = norm_sq(a);
    let mut x = x0.to_vec();
    if aa > 0.0 {
        axpy((b - dot(a, x0)) / aa, a, &mut x);
    }
    x
}

/// Projection of `(w, α_i)` onto the linearized constraint
/// `f_i(w) + ⟨∇f_i(w), v − w⟩ = a`.
pub fn joint_projection_taps(
    w: &[f64],
    alpha_i: f64,
    problem: &Problem<'_>,
    i: usize,
) -> Result<(Vec<f64>, f64)> {
    let e = problem.eval(w, i)?;
    let c = (e.loss - alpha_i) / (e.grad_sq_norm + 1.0);
    let mut w_plus = w.to_vec();
    problem.descend(&mut w_plus, i, e.dphi, c);
    Ok((w_plus, alpha_i + c))
}

/// Which auxiliary objective to build.
#[derive(Debug, Clone, PartialEq)]
pub enum AuxKind {
    /// `n` components `½(f_i(w) − f_i*)²/‖∇f_i(w_t)‖²`.
    Sp { fi_star: Vec<f64> },
    /// `n` components `½(f_i(w) − α_i)²/(‖∇f_i(w_t)‖² + 1)` and
    /// `(n/2)(ᾱ − τ)²` with `τ` fixed.
    Taps,
    /// TAPS components scaled by `1−λ`, with the last one replaced by
    /// `(1−λ)n/2·(ᾱ − τ)² + λ/2·τ²` and `τ` a variable.
    Motaps { lambda: f64 },
}

impl AuxKind {
    /// Auxiliary objective of a Polyak method under `hyper`.
    pub fn for_method(method: Method, hyper: &HyperParams, n: usize) -> Self {
        match method {
            Method::Sp | Method::SpsMax => AuxKind::Sp {
                fi_star: (0..n).map(|i| hyper.fi_star.get(i)).collect(),
            },
            Method::Taps => AuxKind::Taps,
            Method::Motaps => AuxKind::Motaps {
                lambda: hyper.lambda,
            },
        }
    }
}

/// A point `z = (w, α, τ)`; SP ignores `alpha` and `tau`.
#[derive(Debug, Clone, Copy)]
pub struct AuxPoint<'z> {
    pub w: &'z [f64],
    pub alpha: &'z [f64],
    pub tau: f64,
}

impl<'z> AuxPoint<'z> {
    pub fn of_state(state: &'z TargetState) -> Self {
        AuxPoint {
            w: &state.w,
            alpha: &state.alpha,
            tau: state.tau,
        }
    }
}

/// A gradient in the stacked space. Blocks a method does not update are
/// empty (`alpha`) or zero (`tau`).
#[derive(Debug, Clone, PartialEq)]
pub struct StackedGrad {
    pub w: Vec<f64>,
    pub alpha: Vec<f64>,
    pub tau: f64,
}

impl StackedGrad {
    pub fn norm_sq(&self) -> f64 {
        norm_sq(&self.w) + norm_sq(&self.alpha) + self.tau * self.tau
    }

    /// `⟨self, z1 − z0⟩` over the blocks present in `self`.
    pub fn dot_diff(&self, z1: &AuxPoint<'_>, z0: &AuxPoint<'_>) -> f64 {
        let mut s: f64 = self
            .w
            .iter()
            .zip(z1.w.iter().zip(z0.w))
            .map(|(g, (a, b))| g * (a - b))
            .sum();
        s += self
            .alpha
            .iter()
            .zip(z1.alpha.iter().zip(z0.alpha))
            .map(|(g, (a, b))| g * (a - b))
            .sum::<f64>();
        s + self.tau * (z1.tau - z0.tau)
    }
}

/// Value, per-component values and the two sides of the growth bound.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxEval {
    pub h_value: f64,
    pub component_values: Vec<f64>,
    pub component_grad_sqnorms: Vec<f64>,
    /// Mean squared norm of the component gradients.
    pub growth_lhs: f64,
    /// `2G·h`.
    pub growth_rhs: f64,
    pub growth_constant: f64,
}

impl AuxEval {
    /// `lhs/rhs` with `0/0 = 1`.
    pub fn growth_ratio(&self) -> f64 {
        if self.growth_lhs == 0.0 && self.growth_rhs == 0.0 {
            1.0
        } else {
            self.growth_lhs / self.growth_rhs
        }
    }
}

/// An auxiliary objective frozen at an anchor.
#[derive(Debug, Clone)]
pub struct Auxiliary<'a> {
    problem: Problem<'a>,
    kind: AuxKind,
    /// `1/‖∇f_i(w_t)‖²` (SP, pseudoinverse) or `1/(‖∇f_i(w_t)‖² + 1)`.
    /// Per-component denominators `‖∇f_i(w_t)‖²` (SP) or `‖∇f_i(w_t)‖² + 1`;
    /// `0` marks a component dropped by the pseudoinverse convention.
    denoms: Vec<f64>,
}

impl<'a> Auxiliary<'a> {
    pub fn new(problem: Problem<'a>, kind: AuxKind, anchor: &[f64]) -> Result<Self> {
        let n = problem.n();
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        match &kind {
            AuxKind::Sp { fi_star } if fi_star.len() != n => {
                return Err(Error::Dimension(format!(
                    "{} optimal values for {n} samples",
                    fi_star.len()
                )));
            }
            AuxKind::Motaps { lambda } if !(0.0..1.0).contains(lambda) => {
                return Err(argument(format!("lambda must lie in [0, 1), got {lambda}")));
            }
            _ => {}
        }
        let denoms = (0..n)
            .map(|i| {
                let s = problem.eval(anchor, i)?.grad_sq_norm;
                Ok(match kind {
                    AuxKind::Sp { .. } if s <= ZERO_GRAD_SQ => 0.0,
                    AuxKind::Sp { .. } => s,
                    _ => s + 1.0,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Auxiliary {
            problem,
            kind,
            denoms,
        })
    }

    pub fn kind(&self) -> &AuxKind {
        &self.kind
    }

    /// `n` for SP, `n + 1` otherwise.
    pub fn components(&self) -> usize {
        match self.kind {
            AuxKind::Sp { .. } => self.problem.n(),
            _ => self.problem.n() + 1,
        }
    }

    /// Growth constant `G`: 1 for SP and TAPS, `(1−λ)(2n+1)` for MOTAPS.
    pub fn growth_constant(&self) -> f64 {
        match self.kind {
            AuxKind::Motaps { lambda } => (1.0 - lambda) * (2 * self.problem.n() + 1) as f64,
            _ => 1.0,
        }
    }

    fn scale(&self) -> f64 {
        match self.kind {
            AuxKind::Motaps { lambda } => 1.0 - lambda,
            _ => 1.0,
        }
    }

    fn check_point(&self, z: &AuxPoint<'_>) -> Result<()> {
        if z.w.len() != self.problem.dim() {
            return Err(Error::Dimension(format!(
                "w has length {} but the data has dimension {}",
                z.w.len(),
                self.problem.dim()
            )));
        }
        if !matches!(self.kind, AuxKind::Sp { .. }) && z.alpha.len() != self.problem.n() {
            return Err(Error::Dimension(format!(
                "{} loss trackers for {} samples",
                z.alpha.len(),
                self.problem.n()
            )));
        }
        Ok(())
    }

    /// Residual of data component `i`: `f_i(w) − f_i*` or `f_i(w) − α_i`.
    fn residual(&self, z: &AuxPoint<'_>, i: usize, loss: f64) -> f64 {
        match &self.kind {
            AuxKind::Sp { fi_star } => loss - fi_star[i],
            _ => loss - z.alpha[i],
        }
    }

    /// `r / denom_i`, computed as the steps compute their coefficients.
    fn ratio(&self, r: f64, i: usize) -> f64 {
        let d = self.denoms[i];
        if d == 0.0 {
            0.0
        } else {
            r / d
        }
    }

    /// Value of component `j`.
    pub fn component_value(&self, z: &AuxPoint<'_>, j: usize) -> Result<f64> {
        self.check_point(z)?;
        let n = self.problem.n();
        if j < n {
            let r = self.residual(z, j, self.problem.loss_i(z.w, j)?);
            Ok(self.scale() * 0.5 * r * self.ratio(r, j))
        } else if j == n && !matches!(self.kind, AuxKind::Sp { .. }) {
            let gap = linalg::mean(z.alpha) - z.tau;
            Ok(match self.kind {
                AuxKind::Motaps { lambda } => {
                    (1.0 - lambda) * n as f64 / 2.0 * gap * gap + lambda / 2.0 * z.tau * z.tau
                }
                _ => n as f64 / 2.0 * gap * gap,
            })
        } else {
            Err(Error::Index {
                index: j,
                n: self.components(),
            })
        }
    }

    /// Gradient of component `j` at `z`.
    ///
    /// The aggregate component depends on `α` only through `ᾱ = mean(α)`,
    /// so its derivative in each `α_j` carries a `1/n` that cancels the `n`
    /// in front: every coordinate receives `(ᾱ − τ)` (TAPS) or
    /// `(1−λ)(ᾱ − τ)` (MOTAPS). With this exact scaling an SGD step on the
    /// component is the aggregate update of the method.
    pub fn component_grad(&self, z: &AuxPoint<'_>, j: usize) -> Result<StackedGrad> {
        self.check_point(z)?;
        let n = self.problem.n();
        let dim = self.problem.dim();
        let sp = matches!(self.kind, AuxKind::Sp { .. });
        let alpha_len = if sp { 0 } else { n };
        let mut g = StackedGrad {
            w: vec![0.0; dim],
            alpha: vec![0.0; alpha_len],
            tau: 0.0,
        };
        if j < n {
            let e = self.problem.eval(z.w, j)?;
            let coeff = self.scale() * self.ratio(self.residual(z, j, e.loss), j);
            if coeff != 0.0 {
                self.problem.descend_from(&mut g.w, z.w, j, e.dphi, -coeff);
            }
            if !sp {
                g.alpha[j] = -coeff;
            }
        } else if j == n && !sp {
            let gap = linalg::mean(z.alpha) - z.tau;
            let a = self.scale() * gap;
            g.alpha.iter_mut().for_each(|v| *v = a);
            if let AuxKind::Motaps { lambda } = self.kind {
                g.tau = -(1.0 - lambda) * n as f64 * gap + lambda * z.tau;
            }
        } else {
            return Err(Error::Index {
                index: j,
                n: self.components(),
            });
        }
        Ok(g)
    }

    /// `h_t(z)`: mean of the component values.
    pub fn value(&self, z: &AuxPoint<'_>) -> Result<f64> {
        let m = self.components();
        let mut s = 0.0;
        for j in 0..m {
            s += self.component_value(z, j)?;
        }
        Ok(s / m as f64)
    }

    /// `∇h_t(z)`: mean of the component gradients.
    pub fn gradient(&self, z: &AuxPoint<'_>) -> Result<StackedGrad> {
        let m = self.components();
        let mut acc = self.component_grad(z, 0)?;
        for j in 1..m {
            let g = self.component_grad(z, j)?;
            axpy(1.0, &g.w, &mut acc.w);
            axpy(1.0, &g.alpha, &mut acc.alpha);
            acc.tau += g.tau;
        }
        let inv = 1.0 / m as f64;
        acc.w.iter_mut().for_each(|v| *v *= inv);
        acc.alpha.iter_mut().for_each(|v| *v *= inv);
        acc.tau *= inv;
        Ok(acc)
    }

    pub fn evaluate(&self, z: &AuxPoint<'_>) -> Result<AuxEval> {
        let m = self.components();
        let mut values = Vec::with_capacity(m);
        let mut sq = Vec::with_capacity(m);
        for j in 0..m {
            values.push(self.component_value(z, j)?);
            sq.push(self.component_grad(z, j)?.norm_sq());
        }
        let h = linalg::mean(&values);
        let g = self.growth_constant();
        Ok(AuxEval {
            h_value: h,
            growth_lhs: linalg::mean(&sq),
            growth_rhs: 2.0 * g * h,
            growth_constant: g,
            component_values: values,
            component_grad_sqnorms: sq,
        })
    }
}

/// SP auxiliary objective at `w`, anchored at `anchor`.
pub fn aux_value_sp(
    w: &[f64],
    anchor: &[f64],
    problem: &Problem<'_>,
    fi_stars: &[f64],
) -> Result<AuxEval> {
    let aux = Auxiliary::new(
        *problem,
        AuxKind::Sp {
            fi_star: fi_stars.to_vec(),
        },
        anchor,
    )?;
    aux.evaluate(&AuxPoint {
        w,
        alpha: &[],
        tau: 0.0,
    })
}

/// TAPS auxiliary objective at `(w, α)` with fixed target `tau`.
pub fn aux_value_taps(
    w: &[f64],
    alpha: &[f64],
    anchor: &[f64],
    problem: &Problem<'_>,
    tau: f64,
) -> Result<AuxEval> {
    let aux = Auxiliary::new(*problem, AuxKind::Taps, anchor)?;
    aux.evaluate(&AuxPoint { w, alpha, tau })
}

/// MOTAPS auxiliary objective at `(w, α, τ)`.
pub fn aux_value_motaps(
    w: &[f64],
    alpha: &[f64],
    tau: f64,
    anchor: &[f64],
    problem: &Problem<'_>,
    lambda: f64,
) -> Result<AuxEval> {
    let aux = Auxiliary::new(*problem, AuxKind::Motaps { lambda }, anchor)?;
    aux.evaluate(&AuxPoint { w, alpha, tau })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthReport {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub h_value: f64,
}

/// Both sides of the growth bound for `method` at `state`, anchored at the
/// state's own `w`.
pub fn growth_check(
    method: Method,
    state: &TargetState,
    problem: &Problem<'_>,
    hyper: &HyperParams,
) -> Result<GrowthReport> {
    let aux = Auxiliary::new(
        *problem,
        AuxKind::for_method(method, hyper, problem.n()),
        &state.w,
    )?;
    let e = aux.evaluate(&AuxPoint::of_state(state))?;
    Ok(GrowthReport {
        lhs: e.growth_lhs,
        rhs: e.growth_rhs,
        ratio: e.growth_ratio(),
        h_value: e.h_value,
    })
}

/// `h_t(z*) − h_t(z_t) − ⟨∇h_t(z_t), z* − z_t⟩`. Nonnegative values certify
/// the star-convexity inequality at this pair.
pub fn star_convexity_probe(
    aux: &Auxiliary<'_>,
    z_t: &AuxPoint<'_>,
    z_star: &AuxPoint<'_>,
) -> Result<f64> {
    let g = aux.gradient(z_t)?;
    Ok(aux.value(z_star)? - aux.value(z_t)? - g.dot_diff(z_star, z_t))
}

/// One SGD step on component `j` of the auxiliary objective anchored at
/// `state.w`. The step is `γ` for SP and TAPS; MOTAPS uses `γ/(1−λ)` on
/// `(w, α)` and `γ_τ/(λ + (1−λ)n)` on `τ`. `state.alpha_bar` is left alone.
pub fn sgd_view_step(
    problem: &Problem<'_>,
    kind: &AuxKind,
    hyper: &HyperParams,
    state: &mut TargetState,
    j: usize,
) -> Result<()> {
    let n = problem.n();
    let (gamma, gamma_tau) = hyper.stepsizes_at(state.t, n);
    let (step, tau_step) = match kind {
        AuxKind::Motaps { lambda } => (
            gamma / (1.0 - lambda),
            gamma_tau / (lambda + (1.0 - lambda) * n as f64),
        ),
        _ => (gamma, 0.0),
    };
    let aux = Auxiliary::new(*problem, kind.clone(), &state.w)?;
    let g = aux.component_grad(&AuxPoint::of_state(state), j)?;
    axpy(-step, &g.w, &mut state.w);
    axpy(-step, &g.alpha, &mut state.alpha);
    state.tau -= tau_step * g.tau;
    state.t += 1;
    Ok(())
}

/// Runs `method` as plain online SGD on its auxiliary components: each step
/// anchors the objective at the current `w`, samples a component with the
/// same sampler as the optimizer driver and takes a [`sgd_view_step`].
/// Records the same trace as the driver.
pub fn sgd_view_run(
    method: Method,
    problem: &Problem<'_>,
    hyper: &HyperParams,
    epochs: usize,
    seed: u64,
    certificate: Option<&crate::losses::OptimumCertificate>,
) -> Result<Vec<TraceRecord>> {
    if epochs == 0 {
        return Err(argument("epochs must be at least 1"));
    }
    if method == Method::SpsMax || hyper.beta != 0.0 {
        return Err(Error::Unsupported(
            "the SGD view covers uncapped methods without momentum".into(),
        ));
    }
    let n = problem.n();
    hyper.validate(method, n)?;
    let mut state = TargetState::initial(method, n, problem.dim(), hyper.tau);
    let mut sampler = Sampler::new(seed);
    let kind = AuxKind::for_method(method, hyper, n);
    let m = method.equations(n);
    let mut trace = Vec::with_capacity(epochs);
    for epoch in 1..=epochs {
        for _ in 0..m {
            let j = sampler.next_index(m);
            sgd_view_step(problem, &kind, hyper, &mut state, j)?;
        }
        state.recompute_alpha_bar();
        let passes = (epoch * m) as f64 / n as f64;
        trace.push(crate::polyak::record_epoch(
            method,
            problem,
            hyper,
            &state,
            epoch,
            passes,
            certificate,
        )?);
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Dataset, SparseVector};
    use crate::losses::LossSpec;

    fn half_square() -> (LossSpec, Dataset) {
        let data = Dataset::new(
            vec![SparseVector::new([(0, 1.0)]).unwrap()],
            vec![0.0],
            Some(1),
        )
        .unwrap();
        (LossSpec::squared(0.0), data)
    }

    #[test]
    fn hyperplane_examples() {
        assert_eq!(
            project_hyperplane(&[3.0, 4.0], &[1.0, 0.0], 0.0),
            vec![0.0, 4.0]
        );
        assert_eq!(
            project_hyperplane(&[0.0, 0.0], &[1.0, 1.0], 2.0),
            vec![1.0, 1.0]
        );
        assert_eq!(
            project_hyperplane(&[3.0, 4.0], &[0.0, 0.0], 7.0),
            vec![3.0, 4.0]
        );
    }

    #[test]
    fn joint_projection_examples() {
        let (spec, data) = half_square();
        let p = Problem::new(&spec, &data).unwrap();
        let (w, a) = joint_projection_taps(&[2.0], 0.0, &p, 0).unwrap();
        assert!((w[0] - 1.2).abs() < 1e-15 && (a - 0.4).abs() < 1e-15);
        let (w, a) = joint_projection_taps(&[2.0], 2.0, &p, 0).unwrap();
        assert_eq!((w[0], a), (2.0, 2.0));
    }

    #[test]
    fn sp_aux_examples() {
        let (spec, data) = half_square();
        let p = Problem::new(&spec, &data).unwrap();
        let e = aux_value_sp(&[2.0], &[2.0], &p, &[0.0]).unwrap();
        assert_eq!(e.h_value, 0.5);
        assert_eq!(e.growth_ratio(), 1.0);
        let e = aux_value_sp(&[0.0], &[2.0], &p, &[0.0]).unwrap();
        assert_eq!(e.h_value, 0.0);
    }

    #[test]
    fn taps_aux_example() {
        let (spec, data) = half_square();
        let p = Problem::new(&spec, &data).unwrap();
        let e = aux_value_taps(&[2.0], &[0.0], &[2.0], &p, 0.0).unwrap();
        // component 0: ½·2²/(4+1) = 0.4; aggregate: ½·0² = 0
        assert!((e.component_values[0] - 0.4).abs() < 1e-15);
        assert_eq!(e.component_values[1], 0.0);
        assert!((e.h_value - 0.2).abs() < 1e-15);
        assert!((e.growth_lhs - e.growth_rhs).abs() < 1e-15);
    }

    #[test]
    fn motaps_lambda_zero_matches_taps() {
        let data = Dataset::new(
            vec![
                SparseVector::new([(0, 1.0), (1, -2.0)]).unwrap(),
                SparseVector::new([(1, 0.5)]).unwrap(),
            ],
            vec![1.0, -1.0],
            None,
        )
        .unwrap();
        let spec = LossSpec::logistic(0.1);
        let p = Problem::new(&spec, &data).unwrap();
        let w = [0.3, -0.7];
        let alpha = [0.2, 0.9];
        let t = aux_value_taps(&w, &alpha, &w, &p, 0.4).unwrap();
        let m = aux_value_motaps(&w, &alpha, 0.4, &w, &p, 0.0).unwrap();
        assert_eq!(t.h_value, m.h_value);
        assert!(aux_value_motaps(&w, &alpha, 0.4, &w, &p, 1.0).is_err());
    }
}
