use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use polyak::config::{
    ExperimentConfig, FiStarSetting, LossName, OracleMode, OutputFormat, ScheduleName,
};
use polyak::data::SynthMode;
use polyak::harness::{
    cmd_compare, cmd_gen, cmd_grid, cmd_run, with_output, write_comparison, write_grid, write_trace,
};
use polyak::parallel::{Execution, THREADS_ENV};
use polyak::verify::{cmd_verify, Fault, VerifyOptions};

#[derive(Parser, Debug)]
#[command(
    name = "polyak-bench",
    version,
    about = "Stochastic Polyak step experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one method and write its per-epoch trace.
    Run(Common),
    /// Sweep a (gamma, gamma_tau) grid and report the final gradient norms.
    Grid {
        #[command(flatten)]
        common: Common,
        /// Comma-separated step sizes.
        #[arg(long, value_delimiter = ',')]
        gamma_grid: Option<Vec<f64>>,
        /// Comma-separated target step sizes.
        #[arg(long, value_delimiter = ',')]
        gamma_tau_grid: Option<Vec<f64>>,
    },
    /// Run several methods with their comparison defaults on the same data.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Comma-separated method names.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<String>>,
    },
    /// Run the randomized property suites.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated sample counts.
        #[arg(long, value_delimiter = ',', default_value = "1,5,50")]
        sizes: Vec<usize>,
        /// Comma-separated feature dimensions.
        #[arg(long, value_delimiter = ',', default_value = "1,10")]
        dims: Vec<usize>,
        /// Random instances per suite.
        #[arg(long, default_value_t = 200)]
        instances: usize,
        /// Perturb one formula to check that the suites notice
        /// (growth, projection, sgd-view, gradient, invariance).
        #[arg(long)]
        inject_fault: Option<String>,
    },
    /// Write a synthetic dataset in LIBSVM format.
    Gen(Common),
}

/// Flags shared by the experiment commands; they override the config file.
#[derive(Args, Debug, Default)]
struct Common {
    /// TOML config file with experiment settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// LIBSVM dataset (plain or gzip); a synthetic one is generated otherwise.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// sp, spsmax, taps, motaps, sgd, sag, svrg or adam.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    gamma_tau: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    /// A number, or `oracle` for the per-sample optimal losses.
    #[arg(long)]
    fi_star: Option<FiStarSetting>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv or json.
    #[arg(long)]
    format: Option<OutputFormat>,
    /// none, closed or iter.
    #[arg(long)]
    oracle: Option<OracleMode>,
    #[arg(long, env = THREADS_ENV)]
    threads: Option<usize>,
    /// logistic or squared.
    #[arg(long)]
    loss: Option<LossName>,
    /// Cap on the Polyak coefficient.
    #[arg(long)]
    step_cap: Option<f64>,
    /// Use the decreasing MOTAPS schedule with this strong-convexity constant.
    #[arg(long)]
    decreasing_mu: Option<f64>,
    /// inverse, lmax_over_t or constant:<gamma>.
    #[arg(long)]
    sgd_schedule: Option<String>,
    /// Scale every sample to unit norm.
    #[arg(long)]
    normalize: bool,
    /// separable or underparam.
    #[arg(long)]
    synth_mode: Option<SynthMode>,
    #[arg(long)]
    synth_n: Option<usize>,
    #[arg(long)]
    synth_d: Option<usize>,
    #[arg(long)]
    synth_noise: Option<f64>,
    #[arg(long)]
    data_seed: Option<u64>,
}

impl Common {
    fn config(&self) -> polyak::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = &self.$field {
                    cfg.$field = v.clone();
                }
            )*};
        }
        macro_rules! set_opt {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field {
                    cfg.$field = Some(v);
                }
            )*};
        }
        set!(method, beta, epochs, seed, sigma, tau, fi_star, format, oracle, loss);
        set!(
            sgd_schedule,
            synth_mode,
            synth_n,
            synth_d,
            synth_noise,
            data_seed
        );
        set_opt!(gamma, gamma_tau, lambda, step_cap, threads);
        if let Some(d) = &self.dataset {
            cfg.dataset = Some(d.clone());
        }
        if let Some(o) = &self.out {
            cfg.out = Some(o.clone());
        }
        if let Some(mu) = self.decreasing_mu {
            cfg.schedule = ScheduleName::Decreasing;
            cfg.mu = Some(mu);
        }
        if self.normalize {
            cfg.normalize = true;
        }
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(command: Command) -> polyak::Result<ExitCode> {
    match command {
        Command::Run(common) => {
            let cfg = common.config()?;
            let run = cmd_run(&cfg)?;
            write_trace(cfg.out.as_deref(), cfg.format, &run.trace)?;
            match run.error {
                Some(e) => {
                    eprintln!("error: run aborted after {} epochs: {e}", run.trace.len());
                    Ok(ExitCode::from(1))
                }
                None => Ok(ExitCode::SUCCESS),
            }
        }
        Command::Grid {
            common,
            gamma_grid,
            gamma_tau_grid,
        } => {
            let mut cfg = common.config()?;
            if let Some(g) = gamma_grid {
                cfg.gamma_grid = g;
            }
            if let Some(g) = gamma_tau_grid {
                cfg.gamma_tau_grid = g;
            }
            let report = cmd_grid(&cfg, Execution::from_threads(cfg.threads))?;
            write_grid(cfg.out.as_deref(), cfg.format, &report)?;
            eprintln!("{}", report.summary_line());
            Ok(ExitCode::SUCCESS)
        }
        Command::Compare { common, methods } => {
            let cfg = common.config()?;
            let methods = methods.unwrap_or_else(|| cfg.compare_methods.clone());
            let runs = cmd_compare(&cfg, &methods, Execution::from_threads(cfg.threads))?;
            write_comparison(cfg.out.as_deref(), cfg.format, &runs)?;
            let failed: Vec<_> = runs.iter().filter(|r| r.error.is_some()).collect();
            for r in &failed {
                eprintln!("error: {}", r.settings_line());
            }
            Ok(if failed.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::Verify {
            seed,
            sizes,
            dims,
            instances,
            inject_fault,
        } => {
            let fault = inject_fault.map(|f| f.parse::<Fault>()).transpose()?;
            let report = cmd_verify(&VerifyOptions {
                seed,
                sizes,
                dims,
                instances,
                fault,
            })?;
            println!("{report}");
            Ok(if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::Gen(common) => {
            let cfg = common.config()?;
            let text = cmd_gen(&cfg)?;
            with_output(cfg.out.as_deref(), |w| {
                w.write_all(text.as_bytes())?;
                Ok(())
            })?;
            Ok(ExitCode::SUCCESS)
        }
    }
}
