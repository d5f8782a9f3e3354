//! Iterate-averaging momentum: `z ← z − η·d(w)`, `w ← βw + (1−β)z` with the
//! adjusted stepsize `η = γ/(1−β)`.

use crate::error::{argument, Result};
use crate::losses::Problem;

/// One momentum step. `apply(z, w, η)` must subtract `η·d(w)` from `z`,
/// where `d(w)` is the wrapped method's direction evaluated at `w`.
pub fn momentum_step<F>(z: &mut [f64], w: &mut [f64], beta: f64, gamma: f64, apply: F) -> Result<()>
where
    F: FnOnce(&mut [f64], &[f64], f64) -> Result<()>,
{
    if !(0.0..1.0).contains(&beta) {
        return Err(argument(format!("beta must lie in [0, 1), got {beta}")));
    }
    let eta = gamma / (1.0 - beta);
    apply(z, w, eta)?;
    for (wj, zj) in w.iter_mut().zip(z.iter()) {
        *wj = beta * *wj + (1.0 - beta) * zj;
    }
    Ok(())
}

/// Momentum buffer `z` for the GLM methods, whose directions are multiples
/// of `∇f_i(w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Momentum {
    pub z: Vec<f64>,
    pub beta: f64,
}

impl Momentum {
    pub fn new(w: &[f64], beta: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&beta) {
            return Err(argument(format!("beta must lie in [0, 1), got {beta}")));
        }
        Ok(Momentum {
            z: w.to_vec(),
            beta,
        })
    }

    /// Momentum version of `w ← w − step·∇f_i(w)`. With `grad = None` the
    /// direction is zero and only the averaging happens.
    pub fn advance(
        &mut self,
        problem: &Problem<'_>,
        w: &mut [f64],
        grad: Option<(usize, f64)>,
        step: f64,
    ) -> Result<()> {
        momentum_step(&mut self.z, w, self.beta, step, |z, w, eta| {
            if let Some((i, dphi)) = grad {
                problem.descend_from(z, w, i, dphi, eta);
            }
            Ok(())
        })
    }
}
