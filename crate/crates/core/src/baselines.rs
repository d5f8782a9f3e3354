//! Reference optimizers: SGD with decaying steps, SAG, SVRG and Adam.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{argument, Error, Result};
use crate::linalg::{self, axpy};
use crate::losses::{OptimumCertificate, Problem};
use crate::polyak::{RunFailure, Sampler};
use crate::trace::TraceRecord;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "gamma", rename_all = "snake_case")]
pub enum SgdSchedule {
    /// `γ_t = L_max / t`.
    LmaxOverT,
    /// `γ_t = 1 / (L_max·t)`.
    Inverse,
    Constant(f64),
}

impl SgdSchedule {
    /// Step size at step `t ≥ 1`.
    pub fn stepsize(&self, t: u64, l_max: f64) -> f64 {
        match *self {
            SgdSchedule::LmaxOverT => l_max / t as f64,
            SgdSchedule::Inverse => 1.0 / (l_max * t as f64),
            SgdSchedule::Constant(g) => g,
        }
    }
}

impl FromStr for SgdSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lmax_over_t" => Ok(SgdSchedule::LmaxOverT),
            "inverse" => Ok(SgdSchedule::Inverse),
            other => match other.strip_prefix("constant:").map(str::parse::<f64>) {
                Some(Ok(g)) => Ok(SgdSchedule::Constant(g)),
                _ => Err(argument(format!(
                    "unknown SGD schedule `{other}` (lmax_over_t, inverse, constant:<gamma>)"
                ))),
            },
        }
    }
}

/// `w ← w − γ_t∇f_i(w)`.
pub fn sgd_step(
    w: &mut [f64],
    problem: &Problem<'_>,
    i: usize,
    t: u64,
    schedule: SgdSchedule,
    l_max: f64,
) -> Result<()> {
    if t == 0 {
        return Err(argument("SGD step counter starts at 1"));
    }
    let e = problem.eval(w, i)?;
    problem.descend(w, i, e.dphi, schedule.stepsize(t, l_max));
    Ok(())
}

/// SAG gradient memory. For a GLM `∇f_i(w) = φ_i'·x_i + σw`, so the table
/// keeps one scalar `φ_i'` per sample and the sum `Σ_j φ_j'·x_j`; the
/// regularizer term is always taken at the current `w`.
#[derive(Debug, Clone, PartialEq)]
pub struct SagTable {
    dphi: Vec<f64>,
    grad_sum: Vec<f64>,
    initialized: Vec<bool>,
}

impl SagTable {
    pub fn new(n: usize, dim: usize) -> Self {
        SagTable {
            dphi: vec![0.0; n],
            grad_sum: vec![0.0; dim],
            initialized: vec![false; n],
        }
    }

    /// `Σ_j φ_j'·x_j` over the stored entries.
    pub fn grad_sum(&self) -> &[f64] {
        &self.grad_sum
    }

    pub fn is_initialized(&self, i: usize) -> bool {
        self.initialized[i]
    }

    /// Stored gradient of sample `i` without the regularizer.
    pub fn stored(&self, i: usize) -> f64 {
        self.dphi[i]
    }

    /// Largest deviation of the running sum from a fresh summation.
    pub fn sum_drift(&self, problem: &Problem<'_>) -> f64 {
        let mut fresh = vec![0.0; self.grad_sum.len()];
        for (j, d) in self.dphi.iter().enumerate() {
            problem.data().sample(j).axpy_into(*d, &mut fresh);
        }
        linalg::max_abs_diff(&fresh, &self.grad_sum)
    }

    /// Averaged direction `Σ_j φ_j'·x_j / n + σw`.
    pub fn direction(&self, problem: &Problem<'_>, w: &[f64]) -> Vec<f64> {
        let inv_n = 1.0 / self.dphi.len() as f64;
        let sigma = problem.sigma();
        self.grad_sum
            .iter()
            .zip(w)
            .map(|(g, wj)| g * inv_n + sigma * wj)
            .collect()
    }
}

/// Refreshes entry `i` at `w`, then `w ← w − γ·(table average)`.
pub fn sag_step(
    w: &mut [f64],
    table: &mut SagTable,
    problem: &Problem<'_>,
    i: usize,
    gamma: f64,
) -> Result<()> {
    let e = problem.eval(w, i)?;
    problem
        .data()
        .sample(i)
        .axpy_into(e.dphi - table.dphi[i], &mut table.grad_sum);
    table.dphi[i] = e.dphi;
    table.initialized[i] = true;
    let d = table.direction(problem, w);
    axpy(-gamma, &d, w);
    Ok(())
}

/// SVRG reference point with its full gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct SvrgSnapshot {
    pub w_ref: Vec<f64>,
    pub mu_ref: Vec<f64>,
    pub inner_count: usize,
    dphi_ref: Vec<f64>,
}

impl SvrgSnapshot {
    pub fn new(problem: &Problem<'_>, w: &[f64]) -> Result<Self> {
        let dphi_ref = (0..problem.n())
            .map(|i| Ok(problem.eval(w, i)?.dphi))
            .collect::<Result<Vec<_>>>()?;
        Ok(SvrgSnapshot {
            w_ref: w.to_vec(),
            mu_ref: problem.full_grad(w)?,
            inner_count: 0,
            dphi_ref,
        })
    }
}

/// `w ← w − γ(∇f_i(w) − ∇f_i(w_ref) + μ_ref)`. Refreshes the snapshot at the
/// new `w` after `inner_len` inner steps; returns whether it did.
pub fn svrg_step(
    w: &mut [f64],
    snap: &mut SvrgSnapshot,
    problem: &Problem<'_>,
    i: usize,
    gamma: f64,
    inner_len: usize,
) -> Result<bool> {
    if inner_len == 0 {
        return Err(argument("SVRG inner loop length must be at least 1"));
    }
    let e = problem.eval(w, i)?;
    let sigma = problem.sigma();
    let mut d = snap.mu_ref.clone();
    for ((dj, wj), rj) in d.iter_mut().zip(w.iter()).zip(&snap.w_ref) {
        *dj += sigma * (wj - rj);
    }
    problem
        .data()
        .sample(i)
        .axpy_into(e.dphi - snap.dphi_ref[i], &mut d);
    axpy(-gamma, &d, w);
    snap.inner_count += 1;
    if snap.inner_count >= inner_len {
        *snap = SvrgSnapshot::new(problem, w)?;
        Ok(true)
    } else {
        Ok(false)
    }
}

/// Adam first and second moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamMoments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamMoments {
    pub fn zeros(dim: usize) -> Self {
        AdamMoments {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            alpha: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam update at step `t ≥ 1`.
pub fn adam_step(
    w: &mut [f64],
    moments: &mut AdamMoments,
    grad: &[f64],
    t: u64,
    params: &AdamParams,
) -> Result<()> {
    if t == 0 {
        return Err(argument("Adam step counter starts at 1"));
    }
    let AdamParams {
        alpha,
        beta1,
        beta2,
        eps,
    } = *params;
    let c1 = 1.0 - beta1.powf(t as f64);
    let c2 = 1.0 - beta2.powf(t as f64);
    for j in 0..w.len() {
        let g = grad[j];
        moments.m[j] = beta1 * moments.m[j] + (1.0 - beta1) * g;
        moments.v[j] = beta2 * moments.v[j] + (1.0 - beta2) * g * g;
        let m_hat = moments.m[j] / c1;
        let v_hat = moments.v[j] / c2;
        w[j] -= alpha * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Baseline {
    Sgd,
    Sag,
    Svrg,
    Adam,
}

impl Baseline {
    pub const ALL: [Baseline; 4] = [Baseline::Sgd, Baseline::Sag, Baseline::Svrg, Baseline::Adam];

    pub fn name(self) -> &'static str {
        match self {
            Baseline::Sgd => "sgd",
            Baseline::Sag => "sag",
            Baseline::Svrg => "svrg",
            Baseline::Adam => "adam",
        }
    }
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Baseline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" => Ok(Baseline::Sgd),
            "sag" => Ok(Baseline::Sag),
            "svrg" => Ok(Baseline::Svrg),
            "adam" => Ok(Baseline::Adam),
            other => Err(argument(format!("unknown baseline `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineParams {
    /// Step for SAG and SVRG; `None` means `1/(2L_max)`.
    pub gamma: Option<f64>,
    pub sgd_schedule: SgdSchedule,
    /// SVRG inner loop length; `None` means `2n`.
    pub inner_len: Option<usize>,
    pub adam: AdamParams,
}

impl Default for BaselineParams {
    fn default() -> Self {
        BaselineParams {
            gamma: None,
            sgd_schedule: SgdSchedule::Inverse,
            inner_len: None,
            adam: AdamParams::default(),
        }
    }
}

impl BaselineParams {
    /// Step size SAG and SVRG actually use.
    pub fn resolved_gamma(&self, l_max: f64) -> f64 {
        self.gamma.unwrap_or(1.0 / (2.0 * l_max))
    }
}

#[derive(Debug, Clone)]
pub struct BaselineOutput {
    pub trace: Vec<TraceRecord>,
    pub w: Vec<f64>,
    /// Step size used by SAG/SVRG, the Adam `alpha`, or `L_max` for SGD.
    pub gamma: f64,
}

fn baseline_record(
    problem: &Problem<'_>,
    w: &[f64],
    epoch: usize,
    passes: f64,
    certificate: Option<&OptimumCertificate>,
) -> Result<TraceRecord> {
    Ok(TraceRecord {
        epoch,
        passes,
        full_loss: problem.full_loss(w)?,
        grad_norm: linalg::norm(&problem.full_grad(w)?),
        dist_to_opt: certificate.map(|c| linalg::dist_sq(w, &c.w_star).sqrt()),
        aux_value: None,
        growth_ratio: None,
        tau: None,
        alpha_bar: None,
    })
}

/// Runs a baseline from `w = 0` for `epochs` epochs of `n` sampled steps.
/// Passes count `steps/n`, plus one per SVRG snapshot (the initial one
/// included).
pub fn run_baseline(
    baseline: Baseline,
    problem: &Problem<'_>,
    params: &BaselineParams,
    epochs: usize,
    seed: u64,
    certificate: Option<&OptimumCertificate>,
) -> std::result::Result<BaselineOutput, RunFailure> {
    let n = problem.n();
    if n == 0 {
        return Err(Error::EmptyDataset.into());
    }
    if epochs == 0 {
        return Err(argument("epochs must be at least 1").into());
    }
    let needs_l = matches!(baseline, Baseline::Sgd | Baseline::Sag | Baseline::Svrg);
    let l_max = if needs_l && (baseline == Baseline::Sgd || params.gamma.is_none()) {
        problem.smoothness_constants()?.1
    } else {
        f64::NAN
    };
    let gamma = match baseline {
        Baseline::Sgd => l_max,
        Baseline::Sag | Baseline::Svrg => params.resolved_gamma(l_max),
        Baseline::Adam => params.adam.alpha,
    };
    let inner_len = params.inner_len.unwrap_or(2 * n);

    let mut w = vec![0.0; problem.dim()];
    let mut sampler = Sampler::new(seed);
    let mut table = SagTable::new(n, problem.dim());
    let mut moments = AdamMoments::zeros(problem.dim());
    let mut snap = if baseline == Baseline::Svrg {
        Some(SvrgSnapshot::new(problem, &w)?)
    } else {
        None
    };
    let mut snapshots = usize::from(snap.is_some());
    let mut t: u64 = 0;
    let mut trace = Vec::with_capacity(epochs);
    for epoch in 1..=epochs {
        let res = (|| -> Result<TraceRecord> {
            for _ in 0..n {
                let i = sampler.next_index(n);
                t += 1;
                match baseline {
                    Baseline::Sgd => sgd_step(&mut w, problem, i, t, params.sgd_schedule, l_max)?,
                    Baseline::Sag => sag_step(&mut w, &mut table, problem, i, gamma)?,
                    Baseline::Svrg => {
                        let s = snap.as_mut().expect("svrg snapshot");
                        if svrg_step(&mut w, s, problem, i, gamma, inner_len)? {
                            snapshots += 1;
                        }
                    }
                    Baseline::Adam => {
                        let g = problem.grad_i(&w, i)?;
                        adam_step(&mut w, &mut moments, &g, t, &params.adam)?;
                    }
                }
            }
            if let Some(j) = w.iter().position(|v| !v.is_finite()) {
                return Err(Error::Numeric {
                    index: j,
                    what: "iterate".into(),
                });
            }
            let passes = (epoch * n) as f64 / n as f64 + snapshots as f64;
            baseline_record(problem, &w, epoch, passes, certificate)
        })();
        match res {
            Ok(row) => trace.push(row),
            Err(error) => {
                return Err(RunFailure {
                    error,
                    partial: trace,
                })
            }
        }
    }
    Ok(BaselineOutput { trace, w, gamma })
}
