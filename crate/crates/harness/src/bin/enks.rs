use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use enks_harness::dataset::write_dataset;
use enks_harness::experiment::{build_problem, prepare_data, RunOutcome};
use enks_harness::sweep::{convergence_sweep, ConvergenceReport, SweepVariable};
use enks_harness::{run_experiment, ExperimentConfig, HarnessError, RawConfig, Result};

#[derive(Parser)]
#[command(
    name = "enks",
    version,
    about = "Twin experiments with the EnKS, iterated EnKS and EnKF filters"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a twin dataset (truth and measurements) into --out.
    Simulate(Common),
    /// Run the selected filters and write run.csv, summary.csv and charts.
    Run(Common),
    /// Error against ensemble size or step size, with a log-log slope.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// `ensemble` or `dt`.
        #[arg(long)]
        variable: String,
        /// Comma-separated values of the swept variable.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long, default_value_t = 10)]
        repeats: usize,
    },
    /// Run the selected filters and print an RMSE and timing table.
    Compare(Common),
}

#[derive(Args)]
struct Common {
    /// Config file with [experiment] and [model] sections.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    problem: Option<String>,
    /// Filter to run (enks, enks_iter, enkf); repeat for several.
    #[arg(long = "filter")]
    filters: Vec<String>,
    #[arg(long)]
    ensemble: Option<String>,
    #[arg(long)]
    dt: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    kappa: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    horizon: Option<String>,
    #[arg(long)]
    out: Option<String>,
    /// Dataset directory written by `simulate`.
    #[arg(long)]
    data: Option<String>,
    /// Gain clock, `local` or `absolute`.
    #[arg(long)]
    clock: Option<String>,
    /// Any other key as `section.key=value`, e.g. `model.proc_noise=0.3`.
    #[arg(long = "set")]
    sets: Vec<String>,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut raw = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io {
                    path: path.clone(),
                    source: e,
                })?;
                RawConfig::parse(&text)?
            }
            None => RawConfig::default(),
        };
        let flags = [
            ("problem", &self.problem),
            ("ensemble", &self.ensemble),
            ("dt", &self.dt),
            ("alpha", &self.alpha),
            ("kappa", &self.kappa),
            ("seed", &self.seed),
            ("horizon", &self.horizon),
            ("out", &self.out),
            ("data", &self.data),
            ("clock", &self.clock),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                raw.set("experiment", key, v)?;
            }
        }
        if !self.filters.is_empty() {
            raw.set("experiment", "filters", &self.filters.join(","))?;
        }
        for s in &self.sets {
            let (path, value) = s.split_once('=').ok_or_else(|| {
                HarnessError::Config(format!("--set expects section.key=value, got '{s}'"))
            })?;
            let (section, key) = path.split_once('.').unwrap_or(("experiment", path));
            raw.set(section.trim(), key.trim(), value.trim())?;
        }
        raw.resolve()
    }
}

fn print_summary(outcome: &RunOutcome) {
    let rec = &outcome.record;
    let width = rec
        .channels
        .iter()
        .map(String::len)
        .max()
        .unwrap_or(7)
        .max(7);
    print!("{:width$}", "channel");
    for f in &rec.filters {
        print!("  {f:>12}");
    }
    println!();
    for (c, channel) in rec.channels.iter().enumerate() {
        print!("{channel:width$}");
        for s in &outcome.summaries {
            print!("  {:>12.5e}", s.rmse[c]);
        }
        println!();
    }
    print!("{:width$}", "time [s]");
    for s in &outcome.summaries {
        print!("  {:>12.3}", s.wall_time_s);
    }
    println!();
}

fn print_sweep(report: &ConvergenceReport) {
    println!(
        "{:>12}  {:>14}  {:>14}",
        report.variable.name(),
        "mean_error",
        "std"
    );
    for p in &report.points {
        println!(
            "{:>12}  {:>14.6e}  {:>14.6e}",
            p.value, p.mean_error, p.std_error
        );
    }
    println!("slope = {:.4}", report.slope);
}

fn write_sweep(report: &ConvergenceReport, dir: &std::path::Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::Io {
        path: dir.into(),
        source: e,
    })?;
    let path = dir.join("sweep.csv");
    let mut text = format!("{},repeat,error\n", report.variable.name());
    for p in &report.points {
        for (r, e) in p.errors.iter().enumerate() {
            text.push_str(&format!("{:?},{r},{e:?}\n", p.value));
        }
    }
    std::fs::write(&path, text).map_err(|e| HarnessError::Io { path, source: e })
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(common) => {
            let cfg = common.resolve()?;
            let out = cfg
                .out
                .clone()
                .ok_or_else(|| HarnessError::Config("simulate needs --out".into()))?;
            let problem = build_problem(&cfg)?;
            let data = prepare_data(&cfg, &problem)?;
            write_dataset(&out, &problem, &data)?;
            println!(
                "wrote {} steps of {} to {}",
                data.steps(),
                problem.name,
                out.display()
            );
        }
        Command::Run(common) => {
            let cfg = common.resolve()?;
            let outcome = run_experiment(&cfg)?;
            print_summary(&outcome);
            if let Some(out) = &cfg.out {
                println!("outputs in {}", out.display());
            }
        }
        Command::Compare(common) => {
            let mut cfg = common.resolve()?;
            cfg.out = None;
            print_summary(&run_experiment(&cfg)?);
        }
        Command::Sweep {
            common,
            variable,
            values,
            repeats,
        } => {
            let cfg = common.resolve()?;
            let variable: SweepVariable = variable.parse()?;
            let report = convergence_sweep(&cfg, variable, &values, repeats)?;
            print_sweep(&report);
            if let Some(out) = &cfg.out {
                write_sweep(&report, out)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
