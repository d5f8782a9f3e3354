//! Epoch driver for the Polyak methods.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::auxiliary::growth_check;
use crate::error::{argument, Error, Result};
use crate::linalg;
use crate::losses::{OptimumCertificate, Problem};
use crate::trace::TraceRecord;

use super::momentum::Momentum;
use super::steps::{motaps_step_with, sp_step_with, taps_step_with};
use super::{HyperParams, Method, StepOutcome, TargetState};

/// Uniform i.i.d. index sampler driven by ChaCha8 seeded from a `u64`.
#[derive(Debug, Clone)]
pub struct Sampler {
    rng: ChaCha8Rng,
}

impl Sampler {
    pub fn new(seed: u64) -> Self {
        Sampler {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Uniform draw from `0..m`.
    pub fn next_index(&mut self, m: usize) -> usize {
        self.rng.random_range(0..m)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: Vec<TraceRecord>,
    pub state: TargetState,
}

/// A run aborted by `error`; `partial` holds the epochs completed before it.
#[derive(Debug)]
pub struct RunFailure {
    pub error: Error,
    pub partial: Vec<TraceRecord>,
}

impl fmt::Display for RunFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} (after {} completed epochs)",
            self.error,
            self.partial.len()
        )
    }
}

impl std::error::Error for RunFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl From<Error> for RunFailure {
    fn from(error: Error) -> Self {
        RunFailure {
            error,
            partial: Vec::new(),
        }
    }
}

/// Trace row for `state`: full loss, full gradient norm, distance to the
/// certified optimum, and the auxiliary value and growth ratio anchored at
/// the current `w`.
pub fn record_epoch(
    method: Method,
    problem: &Problem<'_>,
    hyper: &HyperParams,
    state: &TargetState,
    epoch: usize,
    passes: f64,
    certificate: Option<&OptimumCertificate>,
) -> Result<TraceRecord> {
    let full_loss = problem.full_loss(&state.w)?;
    let grad_norm = linalg::norm(&problem.full_grad(&state.w)?);
    let growth = growth_check(method, state, problem, hyper)?;
    let targets = method.tracks_targets();
    Ok(TraceRecord {
        epoch,
        passes,
        full_loss,
        grad_norm,
        dist_to_opt: certificate.map(|c| linalg::dist_sq(&state.w, &c.w_star).sqrt()),
        aux_value: Some(growth.h_value),
        growth_ratio: Some(growth.ratio),
        tau: targets.then_some(state.tau),
        alpha_bar: targets.then_some(state.alpha_bar),
    })
}

/// Runs `epochs` epochs of `method` from the zero initialization.
pub fn run_epochs(
    method: Method,
    problem: &Problem<'_>,
    hyper: &HyperParams,
    epochs: usize,
    seed: u64,
    certificate: Option<&OptimumCertificate>,
) -> std::result::Result<RunOutput, RunFailure> {
    let state = TargetState::initial(method, problem.n(), problem.dim(), hyper.tau);
    run_epochs_from(method, problem, hyper, state, epochs, seed, certificate)
}

/// Runs `epochs` epochs of `method` starting at `state`.
pub fn run_epochs_from(
    method: Method,
    problem: &Problem<'_>,
    hyper: &HyperParams,
    state: TargetState,
    epochs: usize,
    seed: u64,
    certificate: Option<&OptimumCertificate>,
) -> std::result::Result<RunOutput, RunFailure> {
    run_epochs_observed(
        method,
        problem,
        hyper,
        state,
        epochs,
        seed,
        certificate,
        |_, _| {},
    )
}

/// One iteration of `method` on equation `j` with the stepsizes due at `state.t`.
pub fn method_step(
    method: Method,
    state: &mut TargetState,
    momentum: Option<&mut Momentum>,
    problem: &Problem<'_>,
    hyper: &HyperParams,
    j: usize,
) -> Result<StepOutcome> {
    let (gamma, gamma_tau) = hyper.stepsizes_at(state.t, problem.n());
    match method {
        Method::Sp | Method::SpsMax => {
            let fi_star = hyper.fi_star.get(j);
            let out = sp_step_with(
                &mut state.w,
                momentum,
                problem,
                j,
                gamma,
                fi_star,
                hyper.step_cap,
            )?;
            state.t += 1;
            Ok(out)
        }
        Method::Taps => taps_step_with(state, momentum, problem, j, gamma),
        Method::Motaps => {
            motaps_step_with(state, momentum, problem, j, gamma, gamma_tau, hyper.lambda)
        }
    }
}

/// [`run_epochs_from`] calling `observe` with every trace row and the state
/// it was recorded from.
#[allow(clippy::too_many_arguments)]
pub fn run_epochs_observed<F>(
    method: Method,
    problem: &Problem<'_>,
    hyper: &HyperParams,
    mut state: TargetState,
    epochs: usize,
    seed: u64,
    certificate: Option<&OptimumCertificate>,
    mut observe: F,
) -> std::result::Result<RunOutput, RunFailure>
where
    F: FnMut(&TraceRecord, &TargetState),
{
    let n = problem.n();
    if n == 0 {
        return Err(Error::EmptyDataset.into());
    }
    if epochs == 0 {
        return Err(argument("epochs must be at least 1").into());
    }
    hyper.validate(method, n)?;
    if state.w.len() != problem.dim() {
        return Err(Error::Dimension(format!(
            "initial w has length {} but the data has dimension {}",
            state.w.len(),
            problem.dim()
        ))
        .into());
    }
    if method.tracks_targets() && state.alpha.len() != n {
        return Err(Error::Dimension(format!(
            "initial state tracks {} losses for {n} samples",
            state.alpha.len()
        ))
        .into());
    }
    if method == Method::Taps {
        state.tau = hyper.tau;
    }

    let mut momentum = if hyper.beta > 0.0 {
        Some(Momentum::new(&state.w, hyper.beta)?)
    } else {
        None
    };
    let m = method.equations(n);
    let mut sampler = Sampler::new(seed);
    let mut trace = Vec::with_capacity(epochs);
    for epoch in 1..=epochs {
        let res = (|| -> Result<TraceRecord> {
            for _ in 0..m {
                let j = sampler.next_index(m);
                method_step(method, &mut state, momentum.as_mut(), problem, hyper, j)?;
            }
            state.recompute_alpha_bar();
            let passes = (epoch * m) as f64 / n as f64;
            record_epoch(method, problem, hyper, &state, epoch, passes, certificate)
        })();
        match res {
            Ok(row) => {
                observe(&row, &state);
                trace.push(row);
            }
            Err(error) => {
                return Err(RunFailure {
                    error,
                    partial: trace,
                })
            }
        }
    }
    Ok(RunOutput { trace, state })
}
