//! Single iterations of SP, TAPS and MOTAPS.

use crate::error::{argument, Error, Result};
use crate::losses::Problem;

use super::momentum::Momentum;
use super::schedule::{lambda_max, motaps_tau_coeff};
use super::{StepOutcome, TargetState};

/// Squared gradient norms at or below this are treated as zero gradients.
pub const ZERO_GRAD_SQ: f64 = 1e-30;

fn ensure_finite(i: usize, what: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numeric {
            index: i,
            what: format!("{what} = {v}"),
        })
    }
}

/// Polyak coefficient `min((f_i(w) − f_i*)/‖∇f_i(w)‖², cap)` and `φ_i'`.
/// A vanishing gradient gives a zero coefficient.
pub fn sp_coefficient(
    w: &[f64],
    problem: &Problem<'_>,
    i: usize,
    fi_star: f64,
    step_cap: f64,
) -> Result<(f64, f64)> {
    let e = problem.eval(w, i)?;
    let coeff = if e.grad_sq_norm <= ZERO_GRAD_SQ {
        0.0
    } else {
        ((e.loss - fi_star) / e.grad_sq_norm).min(step_cap)
    };
    Ok((ensure_finite(i, "polyak coefficient", coeff)?, e.dphi))
}

/// `w ← w − step·∇f_i(w)`, routed through the momentum buffer when present.
fn move_w(
    problem: &Problem<'_>,
    w: &mut [f64],
    momentum: Option<&mut Momentum>,
    grad: Option<(usize, f64)>,
    step: f64,
) -> Result<()> {
    match momentum {
        Some(m) => m.advance(problem, w, grad, step),
        None => {
            if let Some((i, dphi)) = grad {
                problem.descend(w, i, dphi, step);
            }
            Ok(())
        }
    }
}

/// `w ← w − γ·c·∇f_i(w)` with `c` from [`sp_coefficient`].
pub fn sp_step(
    w: &mut [f64],
    problem: &Problem<'_>,
    i: usize,
    gamma: f64,
    fi_star: f64,
    step_cap: f64,
) -> Result<StepOutcome> {
    sp_step_with(w, None, problem, i, gamma, fi_star, step_cap)
}

/// [`sp_step`] with an optional momentum buffer.
pub fn sp_step_with(
    w: &mut [f64],
    momentum: Option<&mut Momentum>,
    problem: &Problem<'_>,
    i: usize,
    gamma: f64,
    fi_star: f64,
    step_cap: f64,
) -> Result<StepOutcome> {
    if i >= problem.n() {
        return Err(Error::Index {
            index: i,
            n: problem.n(),
        });
    }
    let (coeff, dphi) = sp_coefficient(w, problem, i, fi_star, step_cap)?;
    move_w(problem, w, momentum, Some((i, dphi)), gamma * coeff)?;
    Ok(StepOutcome {
        sampled_index: i,
        polyak_coeff: coeff,
    })
}

/// Target-tracking coefficient `(f_i(w) − α_i)/(‖∇f_i(w)‖² + 1)` and `φ_i'`.
pub fn target_coefficient(
    state: &TargetState,
    problem: &Problem<'_>,
    i: usize,
) -> Result<(f64, f64)> {
    let e = problem.eval(&state.w, i)?;
    let coeff = (e.loss - state.alpha[i]) / (e.grad_sq_norm + 1.0);
    Ok((ensure_finite(i, "target coefficient", coeff)?, e.dphi))
}

fn check_sampled(state: &TargetState, problem: &Problem<'_>, sampled: usize) -> Result<usize> {
    let n = problem.n();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if state.alpha.len() != n {
        return Err(Error::Dimension(format!(
            "state tracks {} losses but dataset has {n} samples",
            state.alpha.len()
        )));
    }
    if sampled > n {
        return Err(Error::Index {
            index: sampled,
            n: n + 1,
        });
    }
    Ok(n)
}

/// Data branch shared by TAPS and MOTAPS: moves `α_i`, `ᾱ` and `w`.
fn data_branch(
    state: &mut TargetState,
    momentum: Option<&mut Momentum>,
    problem: &Problem<'_>,
    i: usize,
    gamma: f64,
) -> Result<StepOutcome> {
    let (coeff, dphi) = target_coefficient(state, problem, i)?;
    let delta = gamma * coeff;
    state.alpha[i] += delta;
    state.alpha_bar += delta / problem.n() as f64;
    move_w(problem, &mut state.w, momentum, Some((i, dphi)), delta)?;
    Ok(StepOutcome {
        sampled_index: i,
        polyak_coeff: coeff,
    })
}

/// One TAPS iteration. `sampled == n` selects the aggregate equation, which
/// moves every `α_j` by `γ(τ − ᾱ)`; the target `state.tau` stays fixed.
pub fn taps_step(
    state: &mut TargetState,
    problem: &Problem<'_>,
    sampled: usize,
    gamma: f64,
) -> Result<StepOutcome> {
    taps_step_with(state, None, problem, sampled, gamma)
}

/// [`taps_step`] with an optional momentum buffer on `w`; `α` moves with `γ`.
pub fn taps_step_with(
    state: &mut TargetState,
    momentum: Option<&mut Momentum>,
    problem: &Problem<'_>,
    sampled: usize,
    gamma: f64,
) -> Result<StepOutcome> {
    let n = check_sampled(state, problem, sampled)?;
    let outcome = if sampled < n {
        data_branch(state, momentum, problem, sampled, gamma)?
    } else {
        move_w(problem, &mut state.w, momentum, None, 0.0)?;
        let gap = state.tau - state.alpha_bar;
        let shift = gamma * gap;
        state.alpha.iter_mut().for_each(|a| *a += shift);
        state.alpha_bar += shift;
        StepOutcome {
            sampled_index: n,
            polyak_coeff: gap,
        }
    };
    state.t += 1;
    ensure_finite(sampled, "alpha_bar", state.alpha_bar)?;
    Ok(outcome)
}

/// One MOTAPS iteration.
///
/// In the aggregate branch the losses are shifted by `γ(τ − ᾱ)` and the
/// target is moved by `τ ← (1−γ_τ)τ + γ_τ·coeff·ᾱ`, both from the values at
/// the start of the step. `ᾱ` receives the same shift as every `α_j`, so it
/// stays equal to their mean.
pub fn motaps_step(
    state: &mut TargetState,
    problem: &Problem<'_>,
    sampled: usize,
    gamma: f64,
    gamma_tau: f64,
    lambda: f64,
) -> Result<StepOutcome> {
    motaps_step_with(state, None, problem, sampled, gamma, gamma_tau, lambda)
}

/// [`motaps_step`] with an optional momentum buffer on `w`.
pub fn motaps_step_with(
    state: &mut TargetState,
    momentum: Option<&mut Momentum>,
    problem: &Problem<'_>,
    sampled: usize,
    gamma: f64,
    gamma_tau: f64,
    lambda: f64,
) -> Result<StepOutcome> {
    let n = check_sampled(state, problem, sampled)?;
    if !(lambda >= 0.0 && lambda <= lambda_max(n)) {
        return Err(argument(format!(
            "lambda = {lambda} outside [0, {}] for n = {n}",
            lambda_max(n)
        )));
    }
    let outcome = if sampled < n {
        data_branch(state, momentum, problem, sampled, gamma)?
    } else {
        move_w(problem, &mut state.w, momentum, None, 0.0)?;
        let coeff = motaps_tau_coeff(lambda, n)?;
        let (tau, alpha_bar) = (state.tau, state.alpha_bar);
        let gap = tau - alpha_bar;
        let shift = gamma * gap;
        state.alpha.iter_mut().for_each(|a| *a += shift);
        state.tau = (1.0 - gamma_tau) * tau + gamma_tau * coeff * alpha_bar;
        state.alpha_bar = alpha_bar + shift;
        ensure_finite(n, "tau", state.tau)?;
        StepOutcome {
            sampled_index: n,
            polyak_coeff: gap,
        }
    };
    state.t += 1;
    ensure_finite(sampled, "alpha_bar", state.alpha_bar)?;
    Ok(outcome)
}
