use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use bsjoint::cli::{cmd_compare, cmd_fit, cmd_roc, cmd_simulate, cmd_summarize, read_truth, CliError, RunConfig};
use bsjoint::data::{render_comparison, render_summary, SimulationConfig};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bsjoint", version, about = "Joint longitudinal-survival models with B-spline trajectories")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a cohort from a truth file.
    Simulate(SimulateArgs),
    /// Fit a joint model by Gibbs sampling.
    Fit(FitArgs),
    /// Rank fitted models by DIC.
    Compare(CompareArgs),
    /// Time-dependent ROC curves of a fitted model.
    Roc(RocArgs),
    /// Posterior summary of a fitted model.
    Summarize(SummarizeArgs),
}

#[derive(Args)]
struct FitArgs {
    /// Flat `key = value` file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Measurements file (id, obs_time, markers).
    #[arg(long)]
    long: Option<PathBuf>,
    /// Subjects file (id, time, event, x_*, z_*).
    #[arg(long)]
    surv: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    model_id: Option<String>,
    /// Spline basis dimension (at least 5).
    #[arg(long)]
    q: Option<String>,
    /// current, slope, history or full.
    #[arg(long)]
    kind: Option<String>,
    /// quantile or equal.
    #[arg(long)]
    knots: Option<String>,
    /// Gauss-Legendre points per hazard interval.
    #[arg(long)]
    quad: Option<String>,
    #[arg(long)]
    events_per_interval: Option<String>,
    /// Follow-up horizon; defaults to the latest time in the data.
    #[arg(long)]
    horizon: Option<String>,
    #[arg(long)]
    iters: Option<String>,
    #[arg(long)]
    burnin: Option<String>,
    #[arg(long)]
    thin: Option<String>,
    #[arg(long)]
    chains: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Maximum number of chains run at once.
    #[arg(long)]
    jobs: Option<String>,
    /// Credible-interval level.
    #[arg(long)]
    level: Option<String>,
    /// Prior or tuning override, e.g. `--set prior.link_var=10`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl FitArgs {
    fn overrides(&self) -> Result<BTreeMap<String, String>, CliError> {
        let mut map = BTreeMap::new();
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        let flags = [
            ("long", path(&self.long)),
            ("surv", path(&self.surv)),
            ("out", path(&self.out)),
            ("model_id", self.model_id.clone()),
            ("q", self.q.clone()),
            ("kind", self.kind.clone()),
            ("knots", self.knots.clone()),
            ("quad", self.quad.clone()),
            ("events_per_interval", self.events_per_interval.clone()),
            ("horizon", self.horizon.clone()),
            ("iters", self.iters.clone()),
            ("burnin", self.burnin.clone()),
            ("thin", self.thin.clone()),
            ("chains", self.chains.clone()),
            ("seed", self.seed.clone()),
            ("jobs", self.jobs.clone()),
            ("level", self.level.clone()),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                map.insert(k.to_string(), v);
            }
        }
        Ok(map)
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON truth file.
    #[arg(long)]
    truth: PathBuf,
    #[arg(long, default_value_t = 150)]
    n: usize,
    /// Measurement spacing from time 0; defaults to a tenth of the horizon.
    #[arg(long, conflicts_with = "schedule")]
    every: Option<f64>,
    /// Explicit comma-separated measurement times.
    #[arg(long, value_delimiter = ',')]
    schedule: Option<Vec<f64>>,
    /// Administrative censoring time; defaults to the horizon.
    #[arg(long)]
    censor: Option<f64>,
    /// Half-width of uniform jitter around scheduled times.
    #[arg(long, default_value_t = 0.0)]
    jitter: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "sim")]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    /// Fit directories.
    #[arg(required = true)]
    fits: Vec<PathBuf>,
    /// Also write the table here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RocArgs {
    fit: PathBuf,
    /// Landmark time; repeat for several.
    #[arg(long, default_values_t = [6.0])]
    landmark: Vec<f64>,
    /// Prediction window after the landmark.
    #[arg(long, default_value_t = 12.0)]
    horizon: f64,
    /// Directory for the curves; defaults to the fit directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SummarizeArgs {
    fit: PathBuf,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
}

fn simulate(args: SimulateArgs) -> Result<(), CliError> {
    let truth = read_truth(&args.truth)?;
    let end = truth.end();
    let censor_time = args.censor.unwrap_or(end);
    let schedule = match (args.schedule, args.every) {
        (Some(s), _) => s,
        (None, every) => {
            let step = every.unwrap_or(end / 10.0);
            if !(step > 0.0) {
                return Err(CliError::Config(format!("--every {step} must be positive")));
            }
            let n = (end / step + 1e-9).floor() as usize;
            (0..=n).map(|k| k as f64 * step).collect()
        }
    };
    let config = SimulationConfig { n_subjects: args.n, schedule, censor_time, jitter: args.jitter, seed: args.seed };
    cmd_simulate(&truth, &config, &args.out)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Fit(args) => {
            let config = RunConfig::resolve(args.config.as_deref(), &args.overrides()?)?;
            let report = cmd_fit(&config)?;
            print!("{}", render_comparison(std::slice::from_ref(&report.comparison)));
            Ok(())
        }
        Command::Compare(args) => {
            let rows = cmd_compare(&args.fits, args.out.as_deref())?;
            print!("{}", render_comparison(&rows));
            Ok(())
        }
        Command::Roc(args) => {
            let results = cmd_roc(&args.fit, &args.landmark, args.horizon, args.out.as_deref())?;
            println!("landmark,horizon,n_at_risk,auc");
            for r in results {
                println!("{:?},{:?},{},{:?}", r.landmark, r.horizon, r.n_at_risk, r.auc);
            }
            Ok(())
        }
        Command::Summarize(args) => {
            print!("{}", render_summary(&cmd_summarize(&args.fit, args.level)?));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
