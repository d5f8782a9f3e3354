//! Randomized property suites run by `polyak-bench verify`: growth
//! identities, projection equivalences, SGD-view equivalence, invariances
//! and gradient checks.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::auxiliary::{
    growth_check, joint_projection_taps, project_hyperplane, sgd_view_step, AuxKind, AuxPoint,
    Auxiliary,
};
use crate::data::{Dataset, SparseVector};
use crate::error::{argument, Error, Result};
use crate::linalg::{self, dot};
use crate::losses::{LossFamily, LossSpec, Problem};
use crate::polyak::{
    lambda_max, method_step, run_epochs, sp_step, taps_step, FiStar, HyperParams, Method, Sampler,
    TargetState,
};

/// Deliberate formula perturbations that each suite must detect.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Normalizes `h_t` over `n` components where `n + 1` are summed.
    Growth,
    /// Drops the `+1` from the reference projection's denominator.
    Projection,
    /// Uses the raw `γ_τ` as the SGD step on the target component.
    SgdView,
    /// Scales analytic gradients by `1 + 10⁻³`.
    Gradient,
    /// Uses `γ` instead of `γ/p` for the powered loss.
    Invariance,
}

impl Fault {
    pub const ALL: [Fault; 5] = [
        Fault::Growth,
        Fault::Projection,
        Fault::SgdView,
        Fault::Gradient,
        Fault::Invariance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Fault::Growth => "growth",
            Fault::Projection => "projection",
            Fault::SgdView => "sgd-view",
            Fault::Gradient => "gradient",
            Fault::Invariance => "invariance",
        }
    }
}

impl FromStr for Fault {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Fault::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| argument(format!("unknown fault `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub instances: usize,
    /// Worst violation found; compared against `tolerance`.
    pub worst: f64,
    pub tolerance: f64,
}

impl SuiteResult {
    pub fn passed(&self) -> bool {
        self.worst <= self.tolerance
    }
}

impl fmt::Display for SuiteResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<18} instances={:<5} worst={:.3e} tol={:.0e}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.instances,
            self.worst,
            self.tolerance
        )
    }
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Sample counts `n` to draw instances from.
    pub sizes: Vec<usize>,
    /// Feature dimensions `d` to draw instances from.
    pub dims: Vec<usize>,
    /// Random instances per suite.
    pub instances: usize,
    pub fault: Option<Fault>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            seed: 0,
            sizes: vec![1, 5, 50],
            dims: vec![1, 10],
            instances: 200,
            fault: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub suites: Vec<SuiteResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(SuiteResult::passed)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.suites {
            writeln!(f, "{s}")?;
        }
        let failed = self.suites.iter().filter(|s| !s.passed()).count();
        write!(f, "{} suites, {failed} failed", self.suites.len())
    }
}

/// Random GLM instance: Gaussian features with about a third of the
/// entries zeroed, labels ±1 (logistic) or Gaussian (squared), and
/// `σ ∈ {0, 0.1}`.
pub fn random_instance(rng: &mut ChaCha8Rng, n: usize, d: usize) -> (LossSpec, Dataset) {
    let logistic = rng.random::<bool>();
    let sigma = if rng.random::<bool>() { 0.0 } else { 0.1 };
    let samples = (0..n)
        .map(|_| {
            let dense: Vec<f64> = (0..d)
                .map(|_| {
                    let v: f64 = rng.sample(StandardNormal);
                    if rng.random::<f64>() < 0.3 {
                        0.0
                    } else {
                        v
                    }
                })
                .collect();
            SparseVector::from_dense(&dense)
        })
        .collect();
    let labels = (0..n)
        .map(|_| {
            if logistic {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            } else {
                rng.sample(StandardNormal)
            }
        })
        .collect();
    let data = Dataset::new(samples, labels, Some(d)).expect("valid random dataset");
    let spec = if logistic {
        LossSpec::logistic(sigma)
    } else {
        LossSpec::squared(sigma)
    };
    (spec, data)
}

/// Random state with `w`, `α`, `τ` Gaussian and `ᾱ = mean(α)`.
pub fn random_state(rng: &mut ChaCha8Rng, n: usize, d: usize) -> TargetState {
    let mut normal = |s: f64| -> f64 { s * rng.sample::<f64, _>(StandardNormal) };
    let w = (0..d).map(|_| normal(1.0)).collect();
    let alpha: Vec<f64> = (0..n).map(|_| normal(2.0)).collect();
    let tau = normal(2.0);
    TargetState {
        w,
        alpha_bar: linalg::mean(&alpha),
        alpha,
        tau,
        t: 0,
    }
}

/// Random monomial instance with `σ = 0`.
pub fn random_monomial(
    rng: &mut ChaCha8Rng,
    n: usize,
    d: usize,
    power_r: f64,
) -> (LossSpec, Dataset) {
    let (_, data) = random_instance(rng, n, d);
    let offsets = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let scales = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
    (LossSpec::monomial(power_r, offsets, scales, 0.0), data)
}

fn pick<T: Copy>(rng: &mut ChaCha8Rng, items: &[T]) -> T {
    items[rng.random_range(0..items.len())]
}

/// Relative deviation of the growth ratio from 1 (SP, TAPS) or excess over
/// 1 (MOTAPS).
pub fn suite_growth(opts: &VerifyOptions, method: Method) -> Result<SuiteResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x6772_6f77);
    let mut worst: f64 = 0.0;
    for k in 0..opts.instances {
        let n = pick(&mut rng, &opts.sizes);
        let d = pick(&mut rng, &opts.dims);
        let (spec, data) = random_instance(&mut rng, n, d);
        let p = Problem::new(&spec, &data)?;
        let state = random_state(&mut rng, n, d);
        let lambda = if k == 0 {
            lambda_max(n)
        } else {
            rng.random_range(0.0..=lambda_max(n))
        };
        let hyper = HyperParams::default()
            .with_lambda(lambda)
            .with_tau(state.tau);
        let mut g = growth_check(method, &state, &p, &hyper)?;
        if opts.fault == Some(Fault::Growth) && method.tracks_targets() {
            g.ratio = g.lhs / (g.rhs * (n + 1) as f64 / n as f64);
        }
        let violation = match method {
            Method::Motaps => g.ratio - 1.0,
            _ => (g.ratio - 1.0).abs(),
        };
        worst = worst.max(violation);
    }
    let name = match method {
        Method::Sp | Method::SpsMax => "growth_sp",
        Method::Taps => "growth_taps",
        Method::Motaps => "growth_motaps",
    };
    Ok(SuiteResult {
        name,
        instances: opts.instances,
        worst,
        tolerance: 1e-12,
    })
}

/// `taps_step(γ = 1)` against the joint projection and the stacked
/// hyperplane projection.
pub fn suite_projection(opts: &VerifyOptions) -> Result<SuiteResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x7072_6f6a);
    let mut worst: f64 = 0.0;
    for _ in 0..opts.instances {
        let n = pick(&mut rng, &opts.sizes);
        let d = pick(&mut rng, &opts.dims);
        let (spec, data) = random_instance(&mut rng, n, d);
        let p = Problem::new(&spec, &data)?;
        let state = random_state(&mut rng, n, d);
        let i = rng.random_range(0..n);

        let mut stepped = state.clone();
        taps_step(&mut stepped, &p, i, 1.0)?;
        let (w_proj, a_proj) = joint_projection_taps(&state.w, state.alpha[i], &p, i)?;

        let g = p.grad_i(&state.w, i)?;
        let f = p.loss_i(&state.w, i)?;
        let mut a = g.clone();
        a.push(if opts.fault == Some(Fault::Projection) {
            0.0
        } else {
            -1.0
        });
        let mut x0 = state.w.clone();
        x0.push(state.alpha[i]);
        let b = dot(&g, &state.w) - f;
        let x = project_hyperplane(&x0, &a, b);

        for j in 0..d {
            worst = worst
                .max((stepped.w[j] - w_proj[j]).abs())
                .max((w_proj[j] - x[j]).abs());
        }
        worst = worst
            .max((stepped.alpha[i] - a_proj).abs())
            .max((a_proj - x[d]).abs());
    }
    Ok(SuiteResult {
        name: "projection",
        instances: opts.instances,
        worst,
        tolerance: 1e-8,
    })
}

/// Optimizer steps against explicit SGD steps on the auxiliary components,
/// compared coordinate-wise relative to `max(|x|, 1)`.
pub fn suite_sgd_view(opts: &VerifyOptions) -> Result<SuiteResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x7367_6476);
    let runs = (opts.instances / 20).max(3);
    let mut worst: f64 = 0.0;
    for k in 0..runs {
        let n = pick(&mut rng, &opts.sizes);
        let d = pick(&mut rng, &opts.dims);
        let (spec, data) = random_instance(&mut rng, n, d);
        let p = Problem::new(&spec, &data)?;
        let method = [Method::Sp, Method::Taps, Method::Motaps][k % 3];
        let lambda = rng.random_range(0.0..lambda_max(n));
        let hyper = HyperParams {
            gamma: rng.random_range(0.1..1.0),
            gamma_tau: rng.random_range(0.0..1.0),
            lambda,
            tau: rng.random_range(0.0..0.5),
            fi_star: FiStar::Constant(0.0),
            ..HyperParams::default()
        };
        let mut view_hyper = hyper.clone();
        if opts.fault == Some(Fault::SgdView) && method == Method::Motaps {
            view_hyper.gamma_tau *= lambda + (1.0 - lambda) * n as f64;
            view_hyper.gamma_tau = view_hyper.gamma_tau.min(1.0);
        }
        let kind = AuxKind::for_method(method, &hyper, n);
        let mut state = TargetState::initial(method, n, d, hyper.tau);
        let mut sampler = Sampler::new(rng.random::<u64>());
        let m = method.equations(n);
        // Lockstep: both updates start from the same state every step, so
        // rounding cannot compound along chaotic trajectories.
        for _ in 0..5 * m {
            let j = sampler.next_index(m);
            let mut view = state.clone();
            sgd_view_step(&p, &kind, &view_hyper, &mut view, j)?;
            method_step(method, &mut state, None, &p, &hyper, j)?;
            let pairs = state
                .w
                .iter()
                .zip(&view.w)
                .chain(state.alpha.iter().zip(&view.alpha));
            for (x, y) in pairs.chain(std::iter::once((&state.tau, &view.tau))) {
                worst = worst.max((x - y).abs() / x.abs().max(1.0));
            }
        }
    }
    Ok(SuiteResult {
        name: "sgd_view",
        instances: runs,
        worst,
        tolerance: 1e-10,
    })
}

/// SP traces under per-sample rescaling `f_i ↦ c_i f_i`, `c_i ∈ {0.01, 1, 100}`.
pub fn suite_scaling(opts: &VerifyOptions) -> Result<SuiteResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x7363_616c);
    let mut worst: f64 = 0.0;
    let runs = (opts.instances / 10).max(3);
    for _ in 0..runs {
        let n = pick(&mut rng, &opts.sizes);
        let d = pick(&mut rng, &opts.dims);
        let r = pick(&mut rng, &[0.5, 1.0, 1.5]);
        let (spec, data) = random_monomial(&mut rng, n, d, r);
        let LossFamily::Monomial {
            offsets, scales, ..
        } = &spec.family
        else {
            unreachable!("random_monomial builds monomial losses")
        };
        let c: Vec<f64> = (0..n)
            .map(|_| pick(&mut rng, &[0.01, 1.0, 100.0]))
            .collect();
        let scaled = LossSpec::monomial(
            r,
            offsets.clone(),
            scales.iter().zip(&c).map(|(a, ci)| a * ci).collect(),
            0.0,
        );
        let p = Problem::new(&spec, &data)?;
        let q = Problem::new(&scaled, &data)?;
        let hyper = HyperParams::default().with_gamma(0.5);
        let seed = rng.random::<u64>();
        let a = run_epochs(Method::Sp, &p, &hyper, 3, seed, None).map_err(|f| f.error)?;
        let b = run_epochs(Method::Sp, &q, &hyper, 3, seed, None).map_err(|f| f.error)?;
        for (x, y) in a.state.w.iter().zip(&b.state.w) {
            worst = worst.max((x - y).abs() / x.abs().max(1.0));
        }
    }
    Ok(SuiteResult {
        name: "sp_scaling",
        instances: runs,
        worst,
        tolerance: 1e-12,
    })
}

/// One SP step on `f_i^p` with `γ` against one on `f_i` with `γ/p`.
pub fn suite_power(opts: &VerifyOptions) -> Result<SuiteResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x706f_7765);
    let mut worst: f64 = 0.0;
    let runs = (opts.instances / 4).max(3);
    for _ in 0..runs {
        let n = pick(&mut rng, &opts.sizes);
        let d = pick(&mut rng, &opts.dims);
        let r = pick(&mut rng, &[0.5, 1.0, 1.5]);
        let (spec, data) = random_monomial(&mut rng, n, d, r);
        let LossFamily::Monomial {
            offsets, scales, ..
        } = &spec.family
        else {
            unreachable!("random_monomial builds monomial losses")
        };
        let p = Problem::new(&spec, &data)?;
        let w0: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let i = rng.random_range(0..n);
        let gamma = rng.random_range(0.1..1.0);
        for pw in [2.0, 3.0] {
            let powered = LossSpec::monomial(
                r * pw,
                offsets.clone(),
                scales.iter().map(|a| a.powf(pw)).collect(),
                0.0,
            );
            let pp = Problem::new(&powered, &data)?;
            let mut w1 = w0.clone();
            sp_step(&mut w1, &pp, i, gamma, 0.0, f64::INFINITY)?;
            let mut w2 = w0.clone();
            let g = if opts.fault == Some(Fault::Invariance) {
                gamma
            } else {
                gamma / pw
            };
            sp_step(&mut w2, &p, i, g, 0.0, f64::INFINITY)?;
            for (x, y) in w1.iter().zip(&w2) {
                worst = worst.max((x - y).abs() / x.abs().max(1.0));
            }
        }
    }
    Ok(SuiteResult {
        name: "sp_power",
        instances: runs,
        worst,
        tolerance: 1e-10,
    })
}

/// Central difference of `f` along coordinate `j` of `x`.
fn central_diff<F: FnMut(&[f64]) -> Result<f64>>(
    x: &[f64],
    j: usize,
    h: f64,
    mut f: F,
) -> Result<f64> {
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    xp[j] += h;
    xm[j] -= h;
    Ok((f(&xp)? - f(&xm)?) / (2.0 * h))
}

/// Relative error `‖g − g_fd‖ / max(‖g‖, 10⁻³)`.
fn grad_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = linalg::dist_sq(analytic, numeric).sqrt();
    diff / linalg::norm(analytic).max(1e-3)
}

/// Loss and auxiliary gradients against central finite differences.
pub fn suite_gradients(opts: &VerifyOptions) -> Result<SuiteResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x6772_6164);
    let perturb = if opts.fault == Some(Fault::Gradient) {
        1.0 + 1e-3
    } else {
        1.0
    };
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let instances = (opts.instances / 2).max(10);
    for _ in 0..instances {
        let n = pick(&mut rng, &opts.sizes).min(10);
        let d = pick(&mut rng, &opts.dims);
        let (spec, data) = random_instance(&mut rng, n, d);
        let p = Problem::new(&spec, &data)?;
        let state = random_state(&mut rng, n, d);
        let i = rng.random_range(0..n);

        let g: Vec<f64> = p.grad_i(&state.w, i)?.iter().map(|v| v * perturb).collect();
        let fd = (0..d)
            .map(|j| central_diff(&state.w, j, h, |w| p.loss_i(w, i)))
            .collect::<Result<Vec<_>>>()?;
        worst = worst.max(grad_error(&g, &fd));

        let lambda = rng.random_range(0.0..lambda_max(n));
        let kinds = [
            AuxKind::Sp {
                fi_star: vec![0.0; n],
            },
            AuxKind::Taps,
            AuxKind::Motaps { lambda },
        ];
        for kind in kinds {
            let sp = matches!(kind, AuxKind::Sp { .. });
            // anchor away from the evaluation point so the frozen weights matter
            let anchor: Vec<f64> = state.w.iter().map(|v| v + 0.3).collect();
            let aux = Auxiliary::new(p, kind, &anchor)?;
            let z = AuxPoint::of_state(&state);
            let grad = aux.gradient(&z)?;
            // flatten (w, α, τ) and difference every coordinate
            let mut flat = state.w.clone();
            if !sp {
                flat.extend_from_slice(&state.alpha);
                flat.push(state.tau);
            }
            let value = |v: &[f64]| -> Result<f64> {
                let (w, rest) = v.split_at(d);
                if sp {
                    aux.value(&AuxPoint {
                        w,
                        alpha: &[],
                        tau: 0.0,
                    })
                } else {
                    aux.value(&AuxPoint {
                        w,
                        alpha: &rest[..n],
                        tau: rest[n],
                    })
                }
            };
            let fd = (0..flat.len())
                .map(|j| central_diff(&flat, j, h, value))
                .collect::<Result<Vec<_>>>()?;
            let mut analytic: Vec<f64> = grad.w.iter().map(|v| v * perturb).collect();
            if !sp {
                analytic.extend_from_slice(&grad.alpha);
                // the TAPS target is a constant, its partial derivative is zero
                analytic.push(grad.tau);
                if matches!(aux.kind(), AuxKind::Taps) {
                    let last = fd.len() - 1;
                    analytic[last] = fd[last];
                }
            }
            worst = worst.max(grad_error(&analytic, &fd));
        }
    }
    Ok(SuiteResult {
        name: "gradient_check",
        instances,
        worst,
        tolerance: 1e-5,
    })
}

/// Runs every suite.
pub fn cmd_verify(opts: &VerifyOptions) -> Result<VerifyReport> {
    if opts.sizes.is_empty()
        || opts.dims.is_empty()
        || opts.sizes.contains(&0)
        || opts.dims.contains(&0)
    {
        return Err(argument(
            "verify needs nonempty positive sizes and dimensions",
        ));
    }
    let suites = vec![
        suite_growth(opts, Method::Sp)?,
        suite_growth(opts, Method::Taps)?,
        suite_growth(opts, Method::Motaps)?,
        suite_projection(opts)?,
        suite_sgd_view(opts)?,
        suite_scaling(opts)?,
        suite_power(opts)?,
        suite_gradients(opts)?,
    ];
    Ok(VerifyReport { suites })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> VerifyOptions {
        VerifyOptions {
            instances: 40,
            ..VerifyOptions::default()
        }
    }

    #[test]
    fn all_suites_pass() {
        let report = cmd_verify(&quick()).unwrap();
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn every_fault_is_detected() {
        for fault in Fault::ALL {
            let report = cmd_verify(&VerifyOptions {
                fault: Some(fault),
                ..quick()
            })
            .unwrap();
            assert!(
                !report.passed(),
                "fault {} went unnoticed:\n{report}",
                fault.name()
            );
        }
    }

    #[test]
    fn reports_are_reproducible() {
        let a = cmd_verify(&quick()).unwrap().to_string();
        let b = cmd_verify(&quick()).unwrap().to_string();
        assert_eq!(a, b);
    }
}
