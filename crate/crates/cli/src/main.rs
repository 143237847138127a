//! `paycheck` — train, evaluate and compare paycheck-allocation policies,
//! or serve them over HTTP.

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use paycheck_core::baselines::counterexample_scenario;
use paycheck_core::goals::PlanConfig;
use paycheck_core::neural::PolicyParams;
use paycheck_core::presets::{self, Profile};
use paycheck_core::rates::{
    all_windows, constant_trajectory, load_series_dir, window_at, RateTrajectory, YearMonth,
};
use paycheck_core::schedule::{Comparison, Schedule};
use paycheck_core::simulate::Scenario;
use paycheck_core::trainer::{
    train_constant_observed, train_stochastic_observed, Batching, TrainConfig,
};
use paycheck_core::Error;

const REPORT_FILE: &str = "report.json";
const CHECKPOINT_FILE: &str = "policy.ckpt";
const SCHEDULE_CSV: &str = "schedule.csv";
const SCHEDULE_JSON: &str = "schedule.json";
const COMPARE_FILE: &str = "compare.json";

#[derive(Parser)]
#[command(
    name = "paycheck",
    version,
    about = "Learn how to split a monthly paycheck across financial goals"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy and write report.json, policy.ckpt and schedule.csv.
    Train(TrainArgs),
    /// Roll a trained policy through the plan and emit its monthly schedule.
    Evaluate(EvalArgs),
    /// Total utility of a trained policy beside the waterfall and even-split rules.
    Compare(EvalArgs),
    /// Run the HTTP API.
    Serve(ServeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Constant,
    Stochastic,
}

#[derive(Clone, Copy, ValueEnum)]
enum BatchingArg {
    Resample,
    Fixed,
}

#[derive(Args)]
struct PlanArgs {
    /// Plan JSON file, or a bundled preset: reference, home_buyer, saver, debtor, counterexample.
    #[arg(long)]
    plan: String,
    /// Preference profile applied on top of the plan: home_buyer, saver or debtor.
    #[arg(long)]
    profile: Option<String>,
    #[arg(long, value_enum, default_value = "constant")]
    mode: ModeArg,
    /// Directory of rate series (CSV + JSON descriptor pairs); required in stochastic mode.
    #[arg(long)]
    rates_dir: Option<PathBuf>,
    /// Hidden layer widths.
    #[arg(long, value_delimiter = ',', default_value = "64,64")]
    hidden: Vec<usize>,
    /// First month (YYYY-MM) of the historical evaluation window.
    #[arg(long, default_value = "2012-01")]
    eval_start: String,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    plan: PlanArgs,
    #[arg(long, default_value_t = 5000)]
    iterations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Trajectories per iteration in stochastic mode.
    #[arg(long, default_value_t = 8)]
    batch: usize,
    #[arg(long, value_enum, default_value = "resample")]
    batching: BatchingArg,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Print a progress line every this many iterations (0 for none).
    #[arg(long, default_value_t = 100)]
    progress_every: usize,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    plan: PlanArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Output directory; without it results go to standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    serve_addr: SocketAddr,
    #[arg(long, default_value = "paycheck-data")]
    data_dir: PathBuf,
    /// Training jobs allowed to run at once.
    #[arg(long, default_value_t = 1)]
    max_jobs: usize,
    /// Rate series for stochastic jobs; defaults to the bundled series.
    #[arg(long)]
    rates_dir: Option<PathBuf>,
}

/// Exit 2 for bad input, 1 for failures while running.
enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Training { .. } | Error::Internal(_) | Error::Sequencing(_) => {
                Failure::Runtime(e.to_string())
            }
            _ => Failure::Usage(e.to_string()),
        }
    }
}

type Outcome<T> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Compare(a) => compare(a),
        Command::Serve(a) => serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}

/// A resolved plan plus the rate data it is trained and evaluated on.
struct Setup {
    plan: PlanConfig,
    dataset: Vec<RateTrajectory>,
    eval: RateTrajectory,
}

fn load_plan(args: &PlanArgs) -> Outcome<PlanConfig> {
    let path = Path::new(&args.plan);
    let mut plan = if path.exists() {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::Usage(format!("--plan {}: {e}", path.display())))?;
        PlanConfig::from_json(&text)?
    } else {
        let bundled = match args.plan.as_str() {
            "reference" => presets::reference_plan(),
            "counterexample" => counterexample_scenario().plan,
            name => name
                .parse::<Profile>()
                .map_err(|_| {
                    Failure::Usage(format!(
                        "--plan `{name}` is neither a file nor a preset (reference, home_buyer, saver, debtor, counterexample)"
                    ))
                })?
                .plan(),
        };
        let historical = matches!(args.mode, ModeArg::Stochastic) && args.plan != "counterexample";
        if historical {
            presets::stochastic(bundled)
        } else {
            bundled
        }
    };
    if let Some(name) = &args.profile {
        name.parse::<Profile>()?.apply(&mut plan)?;
    }
    plan.validate()?;
    Ok(plan)
}

fn setup(args: &PlanArgs) -> Outcome<Setup> {
    let plan = load_plan(args)?;
    let horizon = plan.horizon_months;
    match args.mode {
        ModeArg::Constant => {
            if !plan.all_rates_constant() {
                return Err(Failure::Usage(
                    "plan references rate series; use --mode stochastic with --rates-dir".into(),
                ));
            }
            let eval = constant_trajectory(&plan, horizon)?;
            Ok(Setup {
                dataset: vec![eval.clone()],
                plan,
                eval,
            })
        }
        ModeArg::Stochastic => {
            let dir = args.rates_dir.as_ref().ok_or_else(|| {
                Failure::Usage("--rates-dir is required in stochastic mode".into())
            })?;
            let series = load_series_dir(dir)?;
            let start: YearMonth = args
                .eval_start
                .parse()
                .map_err(|e: Error| Failure::Usage(format!("--eval-start: {e}")))?;
            let dataset = all_windows(&series, horizon)?;
            let eval = window_at(&series, start, horizon)?.with_plan_constants(&plan)?;
            Ok(Setup {
                plan,
                dataset,
                eval,
            })
        }
    }
}

fn write(dir: &Path, name: &str, contents: &[u8]) -> Outcome<()> {
    let path = dir.join(name);
    fs::write(&path, contents)
        .map_err(|e| Failure::Runtime(format!("writing {}: {e}", path.display())))
}

fn json<T: serde::Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("serializable");
    v.push(b'\n');
    v
}

fn train(args: TrainArgs) -> Outcome<()> {
    let config = TrainConfig {
        iterations: args.iterations,
        seed: args.seed,
        hidden: args.plan.hidden.clone(),
        batch_size: args.batch,
        batching: match args.batching {
            BatchingArg::Resample => Batching::Resample,
            BatchingArg::Fixed => Batching::Fixed,
        },
        adam: paycheck_core::neural::AdamConfig {
            learning_rate: args.lr,
            ..Default::default()
        },
        ..Default::default()
    };
    config.validate()?;
    let setup = setup(&args.plan)?;
    fs::create_dir_all(&args.out)
        .map_err(|e| Failure::Runtime(format!("creating {}: {e}", args.out.display())))?;

    let every = args.progress_every;
    let last = args.iterations - 1;
    let mut progress = |k: usize, v: f64| {
        if every > 0 && (k % every == 0 || k == last) {
            eprintln!("iter={k} V={v}");
        }
        true
    };
    let trained = match args.plan.mode {
        ModeArg::Constant => train_constant_observed(&setup.plan, &config, &mut progress)?,
        ModeArg::Stochastic => {
            train_stochastic_observed(&setup.plan, &setup.dataset, &config, &mut progress)?
        }
    };

    let mut report = trained.report.clone();
    report.checkpoint = Some(CHECKPOINT_FILE.into());
    write(
        &args.out,
        CHECKPOINT_FILE,
        &json(&trained.params.to_checkpoint()),
    )?;
    write(&args.out, REPORT_FILE, &json(&report))?;
    let scenario = Scenario::new(&setup.plan, &setup.eval)?;
    let schedule = paycheck_core::schedule::learned_schedule(&scenario, &trained.params)?;
    write(&args.out, SCHEDULE_CSV, schedule.to_csv()?.as_bytes())?;
    println!("final V={}", report.final_value);
    Ok(())
}

fn load_policy(args: &EvalArgs, plan: &PlanConfig) -> Outcome<PolicyParams> {
    let arch = TrainConfig {
        hidden: args.plan.hidden.clone(),
        ..Default::default()
    }
    .architecture(plan);
    PolicyParams::load(&args.checkpoint, Some(&arch))
        .map_err(|e| Failure::Usage(format!("--checkpoint {}: {e}", args.checkpoint.display())))
}

fn evaluate(args: EvalArgs) -> Outcome<()> {
    let setup = setup(&args.plan)?;
    let params = load_policy(&args, &setup.plan)?;
    let scenario = Scenario::new(&setup.plan, &setup.eval)?;
    let schedule = paycheck_core::schedule::learned_schedule(&scenario, &params)?;
    let csv = schedule.to_csv()?;
    match &args.out {
        Some(dir) => {
            fs::create_dir_all(dir)
                .map_err(|e| Failure::Runtime(format!("creating {}: {e}", dir.display())))?;
            write(dir, SCHEDULE_CSV, csv.as_bytes())?;
            write(dir, SCHEDULE_JSON, &json(&schedule))?;
            println!("V={}", schedule.total_utility);
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn summary_line(name: &str, s: &Schedule) -> String {
    let done = s.completion_months.values().filter(|m| m.is_some()).count();
    format!(
        "{name:<12} {:>16.6} {:>6}/{}",
        s.total_utility,
        done,
        s.completion_months.len()
    )
}

fn compare(args: EvalArgs) -> Outcome<()> {
    let setup = setup(&args.plan)?;
    let params = load_policy(&args, &setup.plan)?;
    let scenario = Scenario::new(&setup.plan, &setup.eval)?;
    let comparison = Comparison::new(&scenario, &params)?;
    println!("{:<12} {:>16} {:>8}", "policy", "total_utility", "done");
    for (name, s) in comparison.entries() {
        println!("{}", summary_line(name, s));
    }
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir)
            .map_err(|e| Failure::Runtime(format!("creating {}: {e}", dir.display())))?;
        write(dir, COMPARE_FILE, &json(&comparison))?;
    }
    Ok(())
}

fn serve(args: ServeArgs) -> Outcome<()> {
    let mut config = paycheck_service::ServiceConfig::new(&args.data_dir);
    config.max_concurrent_jobs = args.max_jobs;
    if let Some(dir) = &args.rates_dir {
        config.series = load_series_dir(dir)?;
    }
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Failure::Runtime(e.to_string()))?;
    eprintln!("listening on http://{}", args.serve_addr);
    runtime
        .block_on(paycheck_service::serve(args.serve_addr, config))
        .map_err(|e| Failure::Runtime(format!("server: {e}")))
}
