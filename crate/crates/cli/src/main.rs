use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use firesale::bounds::build_bound_schedule;
use firesale::output;
use firesale::simulator::capital_ratios;
use firesale::stochastic::{cdf_table, monte_carlo, Marginal, ProbabilityBound, StressDistribution, DKW_LEVEL};
use firesale::study::{self, CaseOverrides, RunSettings};
use firesale::{simulate, validate, Error, Scenario};

#[derive(Parser)]
#[command(name = "firesale", version, about = "Fire-sale contagion simulator and stress-test bounds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario file against every admissibility condition.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Integrate the liquidation dynamics and write trajectory.csv and hitting_times.csv.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[command(flatten)]
        run: RunFlags,
    },
    /// Build the worst-case bound schedule and write bound_schedule.csv and bounded_path.csv.
    Bounds {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Number of evenly spaced samples in bounded_path.csv.
        #[arg(long, default_value_t = 501)]
        grid: usize,
    },
    /// Analytic lower bound on P(q(t) >= q*) under random stresses.
    ProbBound {
        #[arg(long)]
        scenario: PathBuf,
        #[command(flatten)]
        stress: StressFlags,
        /// Price levels, one per asset.
        #[arg(long = "q-star", value_delimiter = ',', required = true)]
        q_star: Vec<f64>,
    },
    /// Sample the stress distribution, simulate every draw and write cdf.csv and samples.csv.
    MonteCarlo {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[command(flatten)]
        stress: StressFlags,
        #[arg(long, default_value_t = study::DEFAULT_SAMPLES)]
        samples: usize,
        #[arg(long, default_value_t = study::DEFAULT_SEED)]
        seed: u64,
        /// Price levels for cdf.csv (default: 101 points from the smallest sampled price to 1).
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<f64>>,
    },
    /// Run one of the preset case studies.
    CaseStudy {
        #[arg(long, value_parser = study::CASE_STUDIES)]
        name: String,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Sweep values (b, lambda_max, zeta or price levels, depending on the study).
        #[arg(long, value_delimiter = ',')]
        sweep: Option<Vec<f64>>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        run: RunFlags,
    },
}

#[derive(Args, Clone, Copy)]
struct RunFlags {
    /// Base RK4 step (default: horizon / 2000).
    #[arg(long)]
    step: Option<f64>,
    /// Number of evenly spaced output samples.
    #[arg(long)]
    grid: Option<usize>,
    /// Event-location tolerance.
    #[arg(long)]
    tol: Option<f64>,
}

impl From<RunFlags> for RunSettings {
    fn from(f: RunFlags) -> Self {
        RunSettings { step: f.step, output_grid: f.grid, event_tol: f.tol }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Target {
    /// Random decay rates of exponential time factors.
    Decay,
    /// Random time-factor levels f_t(t).
    TimeFactor,
}

#[derive(Args)]
struct StressFlags {
    /// Per-asset marginal: exp:RATE, uniform:LOW:HIGH or fixed:VALUE. A single
    /// value is used for every asset.
    #[arg(long = "dist", value_parser = parse_marginal, required = true)]
    dist: Vec<Marginal>,
    #[arg(long, value_enum, default_value_t = Target::Decay)]
    target: Target,
    /// Evaluation time (default: the scenario horizon).
    #[arg(long)]
    time: Option<f64>,
}

impl StressFlags {
    fn distribution(&self, n_assets: usize) -> Result<StressDistribution, Error> {
        let marginals = match self.dist.len() {
            1 => vec![self.dist[0].clone(); n_assets],
            k if k == n_assets => self.dist.clone(),
            k => return Err(Error::InvalidArgument(format!("{k} marginals given for {n_assets} assets"))),
        };
        Ok(match self.target {
            Target::Decay => StressDistribution::decay_rates(marginals),
            Target::TimeFactor => StressDistribution::time_factors(marginals),
        })
    }
}

fn parse_marginal(text: &str) -> Result<Marginal, String> {
    let parts: Vec<&str> = text.split(':').collect();
    let num = |s: &str| s.parse::<f64>().map_err(|e| format!("'{s}': {e}"));
    match parts.as_slice() {
        ["exp", rate] => Ok(Marginal::Exponential { rate: num(rate)? }),
        ["uniform", low, high] => Ok(Marginal::Uniform { low: num(low)?, high: num(high)? }),
        ["fixed", value] => Ok(Marginal::Degenerate { value: num(value)? }),
        _ => Err(format!("expected exp:RATE, uniform:LOW:HIGH or fixed:VALUE, got '{text}'")),
    }
}

enum Failure {
    Validation(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io(_) | Error::Parse(_) => 4,
        e if e.is_numerical() => 3,
        _ => 2,
    }
}

fn load_valid(path: &Path) -> Result<Scenario, Failure> {
    let sc = Scenario::load(path)?;
    let report = validate(&sc);
    if report.passed() {
        Ok(sc)
    } else {
        Err(Failure::Validation(report.failure_summary()))
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Validate { scenario } => {
            let sc = Scenario::load(&scenario)?;
            let report = validate(&sc);
            println!("{report}");
            if !report.passed() {
                return Err(Failure::Validation(report.failure_summary()));
            }
        }
        Command::Simulate { scenario, out, run } => {
            let sc = load_valid(&scenario)?;
            let cfg = RunSettings::from(run).config(sc.horizon);
            let traj = simulate(&sc, &cfg)?;
            std::fs::create_dir_all(&out).map_err(Error::from)?;
            output::write_trajectory(&sc, &traj, &out.join("trajectory.csv"))?;
            let bound_times = match build_bound_schedule(&sc) {
                Ok(sched) => sched.hitting_times(),
                Err(e) => {
                    eprintln!("bound schedule unavailable: {e}");
                    vec![None; sc.n_banks()]
                }
            };
            output::write_hitting_times(&traj.hitting_times, &bound_times, &out.join("hitting_times.csv"))?;
            let theta = capital_ratios(&sc, &traj.terminal)?;
            println!("t = {}: q = {:?}", traj.terminal.t, traj.terminal.q);
            for (i, tau) in traj.hitting_times.iter().enumerate() {
                let tau = tau.map_or(output::NEVER.to_string(), |t| format!("{t:.6}"));
                println!("bank {:>3}  tau {tau:>10}  pi {:.6}  theta {:.6}", i + 1, traj.terminal.pi[i], theta[i]);
            }
        }
        Command::Bounds { scenario, out, grid } => {
            let sc = load_valid(&scenario)?;
            let sched = build_bound_schedule(&sc)?;
            std::fs::create_dir_all(&out).map_err(Error::from)?;
            output::write_bound_schedule(&sched, &out.join("bound_schedule.csv"))?;
            output::write_bounded_path(&sched, grid, &out.join("bounded_path.csv"))?;
            if sc.n_assets() > 1 {
                println!("note: multi-asset bounds are worst-case and typically loose");
            }
            for (i, tau) in sched.hitting_times().iter().enumerate() {
                let tau = tau.map_or(output::NEVER.to_string(), |t| format!("{t:.6}"));
                println!("bank {:>3}  tau_bound {tau}", i + 1);
            }
        }
        Command::ProbBound { scenario, stress, q_star } => {
            let sc = load_valid(&scenario)?;
            if q_star.len() != sc.n_assets() {
                return Err(Error::InvalidArgument(format!(
                    "{} price levels given for {} assets",
                    q_star.len(),
                    sc.n_assets()
                ))
                .into());
            }
            let dist = stress.distribution(sc.n_assets())?;
            let t = stress.time.unwrap_or(sc.horizon);
            let p = ProbabilityBound::new(&sc)?.price_cdf_lower_bound(t, &q_star, &dist)?;
            println!("P(q({t}) >= {q_star:?}) >= {p:.16e}");
        }
        Command::MonteCarlo { scenario, out, stress, samples, seed, levels } => {
            let sc = load_valid(&scenario)?;
            let dist = stress.distribution(sc.n_assets())?;
            let t = stress.time.unwrap_or(sc.horizon);
            let mc = monte_carlo(&sc, &dist, t, samples, seed)?;
            std::fs::create_dir_all(&out).map_err(Error::from)?;
            let mut header = vec!["draw".to_string()];
            header.extend((1..=sc.n_assets()).map(|l| format!("param_{l}")));
            header.extend((1..=sc.n_assets()).map(|l| format!("q_{l}")));
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            let rows: Vec<Vec<f64>> = mc
                .params
                .iter()
                .zip(&mc.prices)
                .enumerate()
                .map(|(d, (p, q))| std::iter::once(d as f64).chain(p.iter().copied()).chain(q.iter().copied()).collect())
                .collect();
            output::write_table(&header, &rows, &out.join("samples.csv"))?;
            let levels = levels.unwrap_or_else(|| {
                let lo = mc.sorted[0][0].min(1.0);
                (0..=100).map(|j| lo + (1.0 - lo) * j as f64 / 100.0).collect()
            });
            if sc.n_assets() == 1 {
                match ProbabilityBound::new(&sc) {
                    Ok(bound) => {
                        let table = cdf_table(&mc, &bound, &dist, t, &levels)?;
                        output::write_cdf(&table, &out.join("cdf.csv"))?;
                    }
                    Err(e) => eprintln!("analytic bound unavailable, cdf.csv not written: {e}"),
                }
            }
            println!("{samples} draws, seed {seed}, DKW({DKW_LEVEL}) radius {:.6}", mc.dkw_radius(DKW_LEVEL));
        }
        Command::CaseStudy { name, out, sweep, samples, seed, run } => {
            let overrides = CaseOverrides { grid: sweep, samples, seed, run: run.into() };
            let report = study::run_case_study(&name, &overrides, &out)?;
            for line in &report.summary {
                println!("{line}");
            }
            for file in &report.files {
                println!("wrote {}", file.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(summary)) => {
            eprintln!("validation failed: {summary}");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
