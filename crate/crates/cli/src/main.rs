//! `dpsco`: run sweeps, query the accountant and reproduce the averaging
//! counterexample from the command line.

use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use dpsco::accountant::{pai_rho, rdp_to_dp, rdp_to_dp_optimized, PrivacyBudget};
use dpsco::empirics::{
    counterexample_empirical, counterexample_exact_with, default_k_grid, execute, sensitivity_probe,
    write_counterexample_csv, write_sweep_csv, CounterexampleProcess, ExperimentConfig, ProblemSpec,
};
use dpsco::geometry::{check_contraction, gradient_step_map, projected_gradient_step_map, ConvexDomain};
use dpsco::schedules::{sc_snowball_schedule, snowball_jnn_schedule, snowball_sz_schedule, Schedule};

#[derive(Parser)]
#[command(name = "dpsco", version, about = "Private stochastic convex optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an excess-loss sweep described by a JSON config.
    Run {
        config: PathBuf,
        /// Overrides the config's output path.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Worker threads; results do not depend on it.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Print ρ and (ε, δ) for a JSON schedule.
    Account {
        schedule: PathBuf,
        #[arg(long)]
        lipschitz: f64,
        #[arg(long = "delta", required = true, value_delimiter = ',')]
        deltas: Vec<f64>,
    },
    /// Exact (and optionally simulated) divergence of the averaged iterate.
    Counterexample {
        #[arg(long = "horizon", short = 'T')]
        horizon: usize,
        /// Defaults to 1/√T.
        #[arg(long)]
        sigma: Option<f64>,
        /// Defaults to {1, ⌈T^{1/3}⌉, ⌈T^{1/2}⌉, ⌈T^{2/3}⌉, T}.
        #[arg(long = "k", value_delimiter = ',')]
        ks: Vec<usize>,
        /// Simulated trials per k; 0 skips the simulation.
        #[arg(long, default_value_t = 0)]
        trials: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1.0)]
        x0: f64,
        /// Use the online quadratic-loss process instead of the random walk.
        #[arg(long)]
        online: bool,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Largest neighbouring-dataset distance of noiseless one-pass SGD.
    ProbeSensitivity {
        /// JSON problem description, as in the `problem` field of a run config.
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        eta: f64,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1000)]
        pairs: usize,
        #[arg(long)]
        seed: u64,
    },
    /// Sampled 1-Lipschitz check of a gradient step on `β/2 ‖w‖²`.
    ContractionCheck {
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        eta: f64,
        #[arg(long)]
        d: usize,
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
        #[arg(long)]
        projected: bool,
        #[arg(long, default_value_t = 10_000)]
        pairs: usize,
        #[arg(long)]
        seed: u64,
    },
    /// Write a named schedule as JSON.
    Schedule {
        #[arg(long, value_enum)]
        kind: ScheduleKind,
        #[arg(long)]
        steps: usize,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        rho: f64,
        #[arg(long)]
        lipschitz: f64,
        #[arg(long)]
        diameter: Option<f64>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ScheduleKind {
    SnowballSz,
    SnowballJnn,
    ScSnowball,
}

/// Exit 2 for usage or config problems, 3 for failures while running.
enum Failure {
    Usage(String),
    Runtime(String),
}

impl Failure {
    fn usage(e: impl std::fmt::Display) -> Self {
        Failure::Usage(e.to_string())
    }

    fn runtime(e: impl std::fmt::Display) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run { config, output, jobs } => cmd_run(&config, output, jobs),
        Command::Account {
            schedule,
            lipschitz,
            deltas,
        } => cmd_account(&schedule, lipschitz, &deltas),
        Command::Counterexample {
            horizon,
            sigma,
            ks,
            trials,
            seed,
            x0,
            online,
            output,
        } => cmd_counterexample(horizon, sigma, ks, trials, seed, x0, online, output),
        Command::ProbeSensitivity {
            problem,
            d,
            eta,
            n,
            pairs,
            seed,
        } => {
            let text = fs::read_to_string(&problem).map_err(|e| Failure::usage(format!("{}: {e}", problem.display())))?;
            let problem: ProblemSpec = serde_json::from_str(&text).map_err(Failure::usage)?;
            let dist = problem.build(d).map_err(Failure::usage)?;
            let report = sensitivity_probe(&dist, eta, n, pairs, seed).map_err(Failure::usage)?;
            print_json(serde_json::to_value(report).map_err(Failure::runtime)?)
        }
        Command::ContractionCheck {
            beta,
            eta,
            d,
            radius,
            projected,
            pairs,
            seed,
        } => {
            let domain = ConvexDomain::centered_ball(d, radius).map_err(Failure::usage)?;
            let gradient = move |w: &[f64]| w.iter().map(|x| beta * x).collect::<Vec<f64>>();
            let map = if projected {
                projected_gradient_step_map(domain.clone(), gradient, eta)
            } else {
                gradient_step_map(gradient, eta)
            }
            .map_err(Failure::usage)?;
            let report = check_contraction(&map, &domain, pairs, seed).map_err(Failure::usage)?;
            print_json(serde_json::json!({
                "max_ratio": report.max_ratio,
                "pairs_checked": report.pairs_checked,
                "contractive": report.is_contractive(),
            }))
        }
        Command::Schedule {
            kind,
            steps,
            d,
            rho,
            lipschitz,
            diameter,
            lambda,
            output,
        } => {
            let need = |v: Option<f64>, name: &str| v.ok_or_else(|| Failure::Usage(format!("--{name} is required")));
            let schedule = match kind {
                ScheduleKind::SnowballSz => {
                    snowball_sz_schedule(steps, d, rho, need(diameter, "diameter")?, lipschitz)
                }
                ScheduleKind::SnowballJnn => {
                    snowball_jnn_schedule(steps, d, rho, need(diameter, "diameter")?, lipschitz)
                }
                ScheduleKind::ScSnowball => sc_snowball_schedule(steps, d, rho, need(lambda, "lambda")?, lipschitz),
            }
            .map_err(Failure::usage)?;
            let text = serde_json::to_string_pretty(&schedule).map_err(Failure::runtime)?;
            emit(output.as_deref(), |w| writeln!(w, "{text}"))
        }
    }
}

fn print_json(value: serde_json::Value) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(&value).map_err(Failure::runtime)?;
    println!("{text}");
    Ok(())
}

/// Writes to `path`, or to stdout when absent.
fn emit(path: Option<&Path>, write: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<(), Failure> {
    match path {
        Some(p) => {
            let mut file = File::create(p).map_err(|e| Failure::runtime(format!("{}: {e}", p.display())))?;
            write(&mut file).map_err(Failure::runtime)
        }
        None => write(&mut io::stdout().lock()).map_err(Failure::runtime),
    }
}

fn manifest_path(csv: &Path) -> PathBuf {
    csv.with_extension("manifest.json")
}

fn cmd_run(config_path: &Path, output: Option<PathBuf>, jobs: Option<usize>) -> Result<(), Failure> {
    let text = fs::read_to_string(config_path)
        .map_err(|e| Failure::usage(format!("{}: {e}", config_path.display())))?;
    let mut config =
        ExperimentConfig::from_json(&text).map_err(|e| Failure::usage(format!("{}: {e}", config_path.display())))?;
    if let Some(out) = output {
        config.output = Some(out.to_string_lossy().into_owned());
    }
    let csv_path = PathBuf::from(
        config
            .output
            .clone()
            .ok_or_else(|| Failure::Usage("no output path in the config or on the command line".into()))?,
    );
    if let Some(j) = jobs {
        if j == 0 {
            return Err(Failure::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(Failure::runtime)?;
    }
    let outcome = execute(&config);
    let file = File::create(&csv_path).map_err(|e| Failure::runtime(format!("{}: {e}", csv_path.display())))?;
    write_sweep_csv(file, &outcome.results).map_err(Failure::runtime)?;
    let manifest = serde_json::to_string_pretty(&outcome.manifest).map_err(Failure::runtime)?;
    fs::write(manifest_path(&csv_path), manifest + "\n").map_err(Failure::runtime)?;
    match outcome.manifest.error {
        Some(e) => Err(Failure::Runtime(format!("{e} (partial results written)"))),
        None => Ok(()),
    }
}

fn cmd_account(path: &Path, lipschitz: f64, deltas: &[f64]) -> Result<(), Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    let schedule: Schedule = serde_json::from_str(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    let budget = pai_rho(&schedule, lipschitz).map_err(Failure::usage)?;
    let show = |v: f64| if v.is_finite() { v.to_string() } else { "infinite".to_string() };
    let mut out = io::stdout().lock();
    let rho = match budget {
        PrivacyBudget::Finite { rho } => rho,
        PrivacyBudget::Infinite => f64::INFINITY,
    };
    let mut lines = vec![format!("rho,{}", show(rho)), "delta,epsilon,epsilon_optimized".to_string()];
    for &delta in deltas {
        let closed = rdp_to_dp(budget, delta).map_err(Failure::usage)?;
        let optimized = rdp_to_dp_optimized(budget, delta).map_err(Failure::usage)?;
        lines.push(format!("{delta},{},{}", show(closed.epsilon), show(optimized)));
    }
    for line in lines {
        writeln!(out, "{line}").map_err(Failure::runtime)?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_counterexample(
    horizon: usize,
    sigma: Option<f64>,
    ks: Vec<usize>,
    trials: usize,
    seed: Option<u64>,
    x0: f64,
    online: bool,
    output: Option<PathBuf>,
) -> Result<(), Failure> {
    if horizon == 0 {
        return Err(Failure::Usage("--horizon must be at least 1".into()));
    }
    let sigma = sigma.unwrap_or(1.0 / (horizon as f64).sqrt());
    let ks = if ks.is_empty() { default_k_grid(horizon) } else { ks };
    if let Some(&bad) = ks.iter().find(|&&k| k == 0 || k > horizon) {
        return Err(Failure::Usage(format!("k = {bad} is outside 1..={horizon}")));
    }
    let seed = match (trials, seed) {
        (0, s) => s.unwrap_or(0),
        (_, Some(s)) => s,
        (_, None) => return Err(Failure::Usage("--seed is required when --trials > 0".into())),
    };
    let process = if online {
        CounterexampleProcess::OnlineQuadratic
    } else {
        CounterexampleProcess::Averaging
    };
    let mut reports = Vec::with_capacity(ks.len());
    for k in ks {
        let mut report = counterexample_exact_with(process, horizon, k, sigma, x0).map_err(Failure::usage)?;
        if trials > 0 {
            let acc = counterexample_empirical(process, horizon, k, sigma, x0, trials, seed).map_err(Failure::usage)?;
            report.accuracy = Some(acc.accuracy);
        }
        reports.push(report);
    }
    emit(output.as_deref(), |w| {
        write_counterexample_csv(w, &reports).map_err(|e| io::Error::other(e.to_string()))
    })
}
