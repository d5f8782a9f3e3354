//! Experiment commands behind the `polyak-bench` binary: single runs, grid
//! sweeps, method comparisons and synthetic data generation.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::baselines::{run_baseline, AdamParams, Baseline, BaselineParams, SgdSchedule};
use crate::config::{
    ExperimentConfig, FiStarSetting, OracleMode, OutputFormat, ScheduleName, DEFAULT_SPSMAX_CAP,
};
use crate::data::{load_libsvm, synth_dataset, to_libsvm, Dataset};
use crate::error::{argument, Error, Result};
use crate::losses::{optimum_oracle, LossFamily, LossSpec, OptimumCertificate, Problem};
use crate::parallel::Execution;
use crate::polyak::{rule_of_thumb, run_epochs, FiStar, HyperParams, Method, Schedule};
use crate::trace::{self, fmt_f64, TraceRecord};

/// Losses above this mark a run as diverged.
pub const DIVERGENCE_LOSS: f64 = 1e12;

/// Any runnable method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AnyMethod {
    Polyak(Method),
    Baseline(Baseline),
}

impl AnyMethod {
    pub fn name(self) -> &'static str {
        match self {
            AnyMethod::Polyak(m) => m.name(),
            AnyMethod::Baseline(b) => b.name(),
        }
    }
}

impl fmt::Display for AnyMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AnyMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Ok(m) = s.parse::<Method>() {
            return Ok(AnyMethod::Polyak(m));
        }
        s.parse::<Baseline>().map(AnyMethod::Baseline).map_err(|_| {
            argument(format!(
                "unknown method `{s}` (sp, spsmax, taps, motaps, sgd, sag, svrg, adam)"
            ))
        })
    }
}

/// Which defaults fill unset step sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Defaults {
    /// `γ = 0.9`, `γ_τ = λ = 0.1` for every Polyak method.
    Run,
    /// Comparison defaults: `γ = 1` for SP and TAPS, the σ-based rule of
    /// thumb and `λ = 0.5` for MOTAPS.
    Compare,
}

/// Dataset, loss and optional optimum certificate shared by all runs.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub data: Dataset,
    pub spec: LossSpec,
    pub certificate: Option<OptimumCertificate>,
}

impl Experiment {
    pub fn load(cfg: &ExperimentConfig) -> Result<Self> {
        let mut data = load_dataset(cfg)?;
        if cfg.normalize {
            data.normalize_rows();
        }
        let spec = cfg.loss_spec();
        let certificate = {
            let problem = Problem::new(&spec, &data)?;
            match cfg.oracle {
                OracleMode::None => None,
                OracleMode::Closed => {
                    if spec.family != LossFamily::Squared {
                        return Err(argument("the closed-form oracle needs squared loss"));
                    }
                    Some(optimum_oracle(&problem, None)?)
                }
                OracleMode::Iter => Some(optimum_oracle(&problem, Some(cfg.oracle_budget))?),
            }
        };
        Ok(Experiment {
            data,
            spec,
            certificate,
        })
    }

    pub fn problem(&self) -> Result<Problem<'_>> {
        Problem::new(&self.spec, &self.data)
    }
}

/// The configured LIBSVM file, or the configured synthetic dataset.
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    match &cfg.dataset {
        Some(path) => load_libsvm(path).map_err(|e| match e {
            Error::Io(io) => Error::Io(std::io::Error::new(
                io.kind(),
                format!("{}: {io}", path.display()),
            )),
            other => other,
        }),
        None => Ok(synth_dataset(
            cfg.data_seed,
            cfg.synth_n,
            cfg.synth_d,
            cfg.synth_mode,
            cfg.synth_noise,
        )?
        .0),
    }
}

/// Hyperparameters of a Polyak method under `cfg`.
pub fn polyak_hyper(
    cfg: &ExperimentConfig,
    method: Method,
    exp: &Experiment,
    defaults: Defaults,
) -> Result<HyperParams> {
    let base = HyperParams::default();
    let (gamma_default, gamma_tau_default, lambda_default) = match (defaults, method) {
        (Defaults::Run, _) => (base.gamma, base.gamma_tau, base.lambda),
        (Defaults::Compare, Method::Motaps) => {
            let (g, gt) = rule_of_thumb(exp.spec.sigma);
            (g, gt, 0.5)
        }
        (Defaults::Compare, _) => (1.0, base.gamma_tau, 0.5),
    };
    let fi_star = match cfg.fi_star {
        FiStarSetting::Value(v) => FiStar::Constant(v),
        FiStarSetting::Named(_) => match &exp.certificate {
            Some(c) => FiStar::PerSample(c.fi_star.clone()),
            None => return Err(argument("fi_star = oracle needs --oracle closed or iter")),
        },
    };
    let schedule = match cfg.schedule {
        ScheduleName::Constant => Schedule::Constant,
        ScheduleName::Decreasing => Schedule::MotapsDecreasing {
            mu: cfg.mu.unwrap_or(cfg.sigma),
        },
    };
    let step_cap = cfg.step_cap.unwrap_or(if method == Method::SpsMax {
        DEFAULT_SPSMAX_CAP
    } else {
        f64::INFINITY
    });
    let hyper = HyperParams {
        gamma: cfg.gamma.unwrap_or(gamma_default),
        gamma_tau: cfg.gamma_tau.unwrap_or(gamma_tau_default),
        lambda: cfg.lambda.unwrap_or(lambda_default),
        beta: cfg.beta,
        step_cap,
        schedule,
        tau: cfg.tau,
        fi_star,
    };
    hyper.validate(method, exp.data.n())?;
    Ok(hyper)
}

pub fn baseline_params(cfg: &ExperimentConfig) -> Result<BaselineParams> {
    Ok(BaselineParams {
        gamma: cfg.gamma,
        sgd_schedule: cfg.sgd_schedule.parse::<SgdSchedule>()?,
        inner_len: cfg.svrg_inner_len,
        adam: AdamParams {
            alpha: cfg.adam_alpha,
            ..AdamParams::default()
        },
    })
}

/// Outcome of one method run; a numeric abort keeps the partial trace.
#[derive(Debug, Clone)]
pub struct MethodRun {
    pub method: AnyMethod,
    /// Resolved settings as `key=value` pairs.
    pub settings: Vec<(String, f64)>,
    pub trace: Vec<TraceRecord>,
    pub error: Option<String>,
}

impl MethodRun {
    pub fn settings_line(&self) -> String {
        let mut s = format!("method={}", self.method);
        for (k, v) in &self.settings {
            s.push_str(&format!(" {k}={}", fmt_f64(*v)));
        }
        if let Some(e) = &self.error {
            s.push_str(&format!(" error={e:?}"));
        }
        s
    }

    pub fn diverged(&self) -> bool {
        self.error.is_some()
            || self
                .trace
                .iter()
                .any(|r| !r.full_loss.is_finite() || r.full_loss > DIVERGENCE_LOSS)
    }
}

/// Runs `method` with settings resolved from `cfg`. Setup errors are
/// returned; numeric aborts are reported inside the [`MethodRun`].
pub fn run_method(
    exp: &Experiment,
    cfg: &ExperimentConfig,
    method: AnyMethod,
    defaults: Defaults,
) -> Result<MethodRun> {
    let problem = exp.problem()?;
    let cert = exp.certificate.as_ref();
    match method {
        AnyMethod::Polyak(m) => {
            let hyper = polyak_hyper(cfg, m, exp, defaults)?;
            let mut settings = vec![("gamma".to_string(), hyper.gamma)];
            if m == Method::Motaps {
                settings.push(("gamma_tau".into(), hyper.gamma_tau));
                settings.push(("lambda".into(), hyper.lambda));
            }
            if m.tracks_targets() {
                settings.push(("tau".into(), hyper.tau));
            }
            if hyper.step_cap.is_finite() {
                settings.push(("step_cap".into(), hyper.step_cap));
            }
            if hyper.beta != 0.0 {
                settings.push(("beta".into(), hyper.beta));
            }
            let (trace, error) = match run_epochs(m, &problem, &hyper, cfg.epochs, cfg.seed, cert) {
                Ok(out) => (out.trace, None),
                Err(f) => {
                    if matches!(f.error, Error::Argument(_) | Error::Dimension(_)) {
                        return Err(f.error);
                    }
                    (f.partial, Some(f.error.to_string()))
                }
            };
            Ok(MethodRun {
                method,
                settings,
                trace,
                error,
            })
        }
        AnyMethod::Baseline(b) => {
            let params = baseline_params(cfg)?;
            let res = run_baseline(b, &problem, &params, cfg.epochs, cfg.seed, cert);
            let (trace, gamma, error) = match res {
                Ok(out) => (out.trace, Some(out.gamma), None),
                Err(f) => {
                    if matches!(f.error, Error::Argument(_) | Error::Dimension(_)) {
                        return Err(f.error);
                    }
                    (f.partial, None, Some(f.error.to_string()))
                }
            };
            let key = match b {
                Baseline::Sgd => "l_max",
                Baseline::Adam => "alpha",
                _ => "gamma",
            };
            let settings = gamma
                .map(|g| vec![(key.to_string(), g)])
                .unwrap_or_default();
            Ok(MethodRun {
                method,
                settings,
                trace,
                error,
            })
        }
    }
}

/// `run`: one method with run defaults.
pub fn cmd_run(cfg: &ExperimentConfig) -> Result<MethodRun> {
    let method: AnyMethod = cfg.method.parse()?;
    let exp = Experiment::load(cfg)?;
    run_method(&exp, cfg, method, Defaults::Run)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridRow {
    pub gamma: f64,
    pub gamma_tau: f64,
    pub final_grad_norm: f64,
    pub final_loss: f64,
}

#[derive(Debug, Clone)]
pub struct GridReport {
    pub method: Method,
    pub rows: Vec<GridRow>,
}

impl GridReport {
    /// Smallest final gradient norm; ties go to smaller `γ`, then `γ_τ`.
    pub fn best(&self) -> Option<GridRow> {
        let mut best: Option<GridRow> = None;
        for r in self.rows.iter().filter(|r| !r.final_grad_norm.is_nan()) {
            let better = match best {
                None => true,
                Some(b) => {
                    (r.final_grad_norm, r.gamma, r.gamma_tau)
                        < (b.final_grad_norm, b.gamma, b.gamma_tau)
                }
            };
            if better {
                best = Some(*r);
            }
        }
        best
    }

    pub fn summary_line(&self) -> String {
        match self.best() {
            Some(b) => format!(
                "best {}: gamma={} gamma_tau={} final_grad_norm={} final_loss={}",
                self.method,
                fmt_f64(b.gamma),
                fmt_f64(b.gamma_tau),
                fmt_f64(b.final_grad_norm),
                fmt_f64(b.final_loss)
            ),
            None => format!("best {}: none", self.method),
        }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "gamma,gamma_tau,final_grad_norm,final_loss")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{}",
                fmt_f64(r.gamma),
                fmt_f64(r.gamma_tau),
                fmt_f64(r.final_grad_norm),
                fmt_f64(r.final_loss)
            )?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_json<W: Write>(&self, mut out: W) -> Result<()> {
        let rows: Vec<_> = self
            .rows
            .iter()
            .map(|r| {
                serde_json::json!({
                    "gamma": trace::json_number(r.gamma),
                    "gamma_tau": trace::json_number(r.gamma_tau),
                    "final_grad_norm": trace::json_number(r.final_grad_norm),
                    "final_loss": trace::json_number(r.final_loss),
                })
            })
            .collect();
        serde_json::to_writer_pretty(&mut out, &rows).map_err(std::io::Error::from)?;
        writeln!(out)?;
        Ok(())
    }
}

/// `grid`: the configured Polyak method over every `(γ, γ_τ)` cell. Cells
/// run independently; rows follow grid order with `γ` outermost.
pub fn cmd_grid(cfg: &ExperimentConfig, exec: Execution) -> Result<GridReport> {
    let method = match cfg.method.parse::<AnyMethod>()? {
        AnyMethod::Polyak(m) => m,
        AnyMethod::Baseline(b) => {
            return Err(argument(format!(
                "grid search covers Polyak methods, not {b}"
            )))
        }
    };
    if cfg.gamma_grid.is_empty() || cfg.gamma_tau_grid.is_empty() {
        return Err(argument("grids must be nonempty"));
    }
    let exp = Experiment::load(cfg)?;
    let cells: Vec<(f64, f64)> = cfg
        .gamma_grid
        .iter()
        .flat_map(|&g| cfg.gamma_tau_grid.iter().map(move |&gt| (g, gt)))
        .collect();
    let results = exec.map(&cells, |&(gamma, gamma_tau)| {
        let cell_cfg = ExperimentConfig {
            gamma: Some(gamma),
            gamma_tau: Some(gamma_tau),
            ..cfg.clone()
        };
        let run = run_method(&exp, &cell_cfg, AnyMethod::Polyak(method), Defaults::Run)?;
        let (final_grad_norm, final_loss) = match run.trace.last() {
            Some(last) if !run.diverged() => (last.grad_norm, last.full_loss),
            _ => (f64::INFINITY, f64::INFINITY),
        };
        Ok(GridRow {
            gamma,
            gamma_tau,
            final_grad_norm,
            final_loss,
        })
    });
    let rows = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(GridReport { method, rows })
}

/// `compare`: every listed method with comparison defaults on the same
/// data and seed. A numeric failure of one method is recorded in its run.
pub fn cmd_compare(
    cfg: &ExperimentConfig,
    methods: &[String],
    exec: Execution,
) -> Result<Vec<MethodRun>> {
    if methods.len() < 2 {
        return Err(argument("compare needs at least two methods"));
    }
    let parsed = methods
        .iter()
        .map(|m| m.parse::<AnyMethod>())
        .collect::<Result<Vec<_>>>()?;
    let exp = Experiment::load(cfg)?;
    exec.map(&parsed, |&m| run_method(&exp, cfg, m, Defaults::Compare))
        .into_iter()
        .collect()
}

/// Writes one trace in the configured format, to `out` or standard output.
pub fn write_trace(
    out: Option<&Path>,
    format: OutputFormat,
    records: &[TraceRecord],
) -> Result<()> {
    with_output(out, |w| match format {
        OutputFormat::Csv => trace::write_csv(w, records),
        OutputFormat::Json => trace::write_json(w, records),
    })
}

/// Writes a comparison: `#` lines with each method's settings followed by
/// the long-format CSV, or a JSON object with `settings` and `records`.
pub fn write_comparison(
    out: Option<&Path>,
    format: OutputFormat,
    runs: &[MethodRun],
) -> Result<()> {
    let keyed: Vec<(String, Vec<TraceRecord>)> = runs
        .iter()
        .map(|r| (r.method.name().to_string(), r.trace.clone()))
        .collect();
    with_output(out, |mut w| match format {
        OutputFormat::Csv => {
            for r in runs {
                writeln!(w, "# {}", r.settings_line())?;
            }
            trace::write_csv_keyed(w, &keyed)
        }
        OutputFormat::Json => {
            let mut records = Vec::new();
            trace::write_json_keyed(&mut records, &keyed)?;
            let records: serde_json::Value =
                serde_json::from_slice(&records).map_err(std::io::Error::from)?;
            let settings: Vec<_> = runs
                .iter()
                .map(|r| {
                    let mut o = serde_json::Map::new();
                    o.insert("method".into(), r.method.name().into());
                    for (k, v) in &r.settings {
                        o.insert(k.clone(), trace::json_number(*v));
                    }
                    if let Some(e) = &r.error {
                        o.insert("error".into(), e.clone().into());
                    }
                    serde_json::Value::Object(o)
                })
                .collect();
            let doc = serde_json::json!({ "settings": settings, "records": records });
            serde_json::to_writer_pretty(&mut w, &doc).map_err(std::io::Error::from)?;
            writeln!(w)?;
            Ok(())
        }
    })
}

pub fn write_grid(out: Option<&Path>, format: OutputFormat, report: &GridReport) -> Result<()> {
    with_output(out, |w| match format {
        OutputFormat::Csv => report.write_csv(w),
        OutputFormat::Json => report.write_json(w),
    })
}

/// `gen`: the configured synthetic dataset in LIBSVM format.
pub fn cmd_gen(cfg: &ExperimentConfig) -> Result<String> {
    let (data, _) = synth_dataset(
        cfg.data_seed,
        cfg.synth_n,
        cfg.synth_d,
        cfg.synth_mode,
        cfg.synth_noise,
    )?;
    Ok(to_libsvm(&data))
}

pub fn with_output<F>(out: Option<&Path>, f: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    match out {
        Some(path) => {
            let file = std::fs::File::create(path).map_err(|e| {
                Error::Io(std::io::Error::new(
                    e.kind(),
                    format!("{}: {e}", path.display()),
                ))
            })?;
            let mut w = std::io::BufWriter::new(file);
            f(&mut w)?;
            w.flush()?;
            Ok(())
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            f(&mut lock)
        }
    }
}
