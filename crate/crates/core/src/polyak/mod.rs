//! Polyak-family optimizers: SP, SPS_max, TAPS and MOTAPS.

pub mod driver;
pub mod momentum;
pub mod schedule;
pub mod steps;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{argument, Error, Result};

pub use driver::{
    method_step, record_epoch, run_epochs, run_epochs_from, run_epochs_observed, RunFailure,
    RunOutput, Sampler,
};
pub use momentum::{momentum_step, Momentum};
pub use schedule::{
    choose_lambda, conservative_stepsizes, coupled_gamma_tau, decreasing_schedule, full_stepsizes,
    lambda_max, motaps_tau_coeff, rule_of_thumb, switch_point,
};
pub use steps::{motaps_step, motaps_step_with, sp_step, sp_step_with, taps_step, taps_step_with};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Sp,
    SpsMax,
    Taps,
    Motaps,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Sp, Method::SpsMax, Method::Taps, Method::Motaps];

    pub fn name(self) -> &'static str {
        match self {
            Method::Sp => "sp",
            Method::SpsMax => "spsmax",
            Method::Taps => "taps",
            Method::Motaps => "motaps",
        }
    }

    /// Whether the method carries loss trackers `α` and samples `n+1` equations.
    pub fn tracks_targets(self) -> bool {
        matches!(self, Method::Taps | Method::Motaps)
    }

    /// Number of equations sampled from per step: `n` or `n+1`.
    pub fn equations(self, n: usize) -> usize {
        if self.tracks_targets() {
            n + 1
        } else {
            n
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sp" | "sps" => Ok(Method::Sp),
            "spsmax" | "sps_max" | "sps-max" => Ok(Method::SpsMax),
            "taps" => Ok(Method::Taps),
            "motaps" => Ok(Method::Motaps),
            other => Err(argument(format!("unknown Polyak method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    Constant,
    /// Constant phase followed by `O(1/t)` decay, with `γ_τ` coupled to `γ_t`.
    MotapsDecreasing {
        mu: f64,
    },
}

/// Per-sample optimal values `f_i*` used by SP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FiStar {
    Constant(f64),
    PerSample(Vec<f64>),
}

impl FiStar {
    pub fn get(&self, i: usize) -> f64 {
        match self {
            FiStar::Constant(v) => *v,
            FiStar::PerSample(v) => v[i],
        }
    }
}

impl Default for FiStar {
    fn default() -> Self {
        FiStar::Constant(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub gamma: f64,
    pub gamma_tau: f64,
    pub lambda: f64,
    pub beta: f64,
    pub step_cap: f64,
    pub schedule: Schedule,
    /// Known target for TAPS and the initial target for MOTAPS.
    pub tau: f64,
    pub fi_star: FiStar,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            gamma: 0.9,
            gamma_tau: 0.1,
            lambda: 0.1,
            beta: 0.0,
            step_cap: f64::INFINITY,
            schedule: Schedule::Constant,
            tau: 0.0,
            fi_star: FiStar::default(),
        }
    }
}

impl HyperParams {
    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_gamma_tau(mut self, gamma_tau: f64) -> Self {
        self.gamma_tau = gamma_tau;
        self
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }

    /// Checks ranges for a run of `method` on `n` samples.
    pub fn validate(&self, method: Method, n: usize) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(argument(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        if !(0.0..1.0).contains(&self.beta) {
            return Err(argument(format!(
                "beta must lie in [0, 1), got {}",
                self.beta
            )));
        }
        if !(self.step_cap > 0.0) {
            return Err(argument(format!(
                "step cap must be positive, got {}",
                self.step_cap
            )));
        }
        if let FiStar::PerSample(v) = &self.fi_star {
            if v.len() != n {
                return Err(Error::Dimension(format!(
                    "{} per-sample optimal values for {n} samples",
                    v.len()
                )));
            }
        }
        if method == Method::SpsMax && !self.step_cap.is_finite() {
            return Err(argument("spsmax needs a finite step cap"));
        }
        if !self.tau.is_finite() {
            return Err(argument("tau must be finite"));
        }
        if method == Method::Motaps {
            if !(0.0..=1.0).contains(&self.gamma_tau) {
                return Err(argument(format!(
                    "gamma_tau must lie in [0, 1], got {}",
                    self.gamma_tau
                )));
            }
            if !(self.lambda >= 0.0 && self.lambda <= lambda_max(n)) {
                return Err(argument(format!(
                    "lambda = {} outside [0, {}] for n = {n}",
                    self.lambda,
                    lambda_max(n)
                )));
            }
        }
        match self.schedule {
            Schedule::Constant => Ok(()),
            Schedule::MotapsDecreasing { mu } if method == Method::Motaps => {
                if mu > 0.0 {
                    Ok(())
                } else {
                    Err(argument("decreasing schedule needs mu > 0"))
                }
            }
            Schedule::MotapsDecreasing { .. } => {
                Err(argument("the decreasing schedule applies to motaps only"))
            }
        }
    }

    /// `(γ_t, γ_τ,t)` for the step with counter `t` on `n` samples.
    pub fn stepsizes_at(&self, t: u64, n: usize) -> (f64, f64) {
        match self.schedule {
            Schedule::Constant => (self.gamma, self.gamma_tau),
            Schedule::MotapsDecreasing { mu } => {
                let g = decreasing_schedule(t, self.lambda, mu, n);
                (g, coupled_gamma_tau(g, self.lambda, n))
            }
        }
    }
}

/// Result of one step. The state itself is updated in place.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    /// Sampled equation; `n` denotes the aggregate equation.
    pub sampled_index: usize,
    /// Applied Polyak coefficient, or the gap `τ − ᾱ` for the aggregate equation.
    pub polyak_coeff: f64,
}

/// Iterate `(w, α, ᾱ, τ)` of the target-tracking methods. SP uses `w` and
/// `t` only and keeps `alpha` empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetState {
    pub w: Vec<f64>,
    pub alpha: Vec<f64>,
    pub alpha_bar: f64,
    pub tau: f64,
    pub t: u64,
}

pub type TapsState = TargetState;
pub type MotapsState = TargetState;

impl TargetState {
    /// `w = 0`, `α = 0`, `ᾱ = 0` and the given target.
    pub fn zeros(n: usize, dim: usize, tau: f64) -> Self {
        TargetState {
            w: vec![0.0; dim],
            alpha: vec![0.0; n],
            alpha_bar: 0.0,
            tau,
            t: 0,
        }
    }

    /// Initial state of `method`.
    pub fn initial(method: Method, n: usize, dim: usize, tau: f64) -> Self {
        if method.tracks_targets() {
            Self::zeros(n, dim, tau)
        } else {
            Self::zeros(0, dim, 0.0)
        }
    }

    /// Replaces the incrementally maintained `ᾱ` by the exact mean.
    pub fn recompute_alpha_bar(&mut self) {
        if !self.alpha.is_empty() {
            self.alpha_bar = crate::linalg::mean(&self.alpha);
        }
    }

    /// `|ᾱ − mean(α)|`.
    pub fn mean_drift(&self) -> f64 {
        (self.alpha_bar - crate::linalg::mean(&self.alpha)).abs()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("adam".parse::<Method>().is_err());
        assert_eq!(Method::Taps.equations(4), 5);
        assert_eq!(Method::Sp.equations(4), 4);
    }

    #[test]
    fn defaults_are_valid_for_motaps() {
        let h = HyperParams::default();
        assert_eq!((h.gamma, h.gamma_tau, h.lambda), (0.9, 0.1, 0.1));
        h.validate(Method::Motaps, 10).unwrap();
        assert!(h
            .clone()
            .with_lambda(0.7)
            .validate(Method::Motaps, 1)
            .is_err());
        assert!(h.clone().with_beta(1.0).validate(Method::Sp, 1).is_err());
        assert!(h.validate(Method::SpsMax, 3).is_err());
    }

    #[test]
    fn decreasing_schedule_couples_rates() {
        let h = HyperParams {
            lambda: 0.2,
            schedule: Schedule::MotapsDecreasing { mu: 0.5 },
            ..HyperParams::default()
        };
        h.validate(Method::Motaps, 3).unwrap();
        assert!(h.validate(Method::Taps, 3).is_err());
        let (g, gt) = h.stepsizes_at(0, 3);
        assert_eq!(g, 1.0 / (0.8 * 7.0));
        assert!((gt - g * (0.2 + 0.8 * 3.0)).abs() < 1e-15);
    }

    #[test]
    fn hyper_params_serde_round_trip() {
        let h = HyperParams {
            schedule: Schedule::MotapsDecreasing { mu: 0.25 },
            fi_star: FiStar::PerSample(vec![0.5, 1.5]),
            step_cap: 5.0,
            ..HyperParams::default()
        };
        let text = serde_json::to_string(&h).unwrap();
        let back: HyperParams = serde_json::from_str(&text).unwrap();
        assert_eq!(back, h);
    }
}
