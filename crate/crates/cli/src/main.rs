mod manifest;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{anyhow, Context};
use bmf_core::backtest::{Backtest, BacktestPlan, Checkpoint, ModelFamily};
use bmf_core::report::{self, metrics_table};
use bmf_core::series::{ingest_csv, synthesize, write_csv_file, FillPolicy, SynthParams};
use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use manifest::{sha256_file, RunManifest, StageTime};

const STAGING_DIR: &str = ".staging";
const CHECKPOINT_FILE: &str = "checkpoint.json";
const STAGES_FILE: &str = "stages.json";

#[derive(Parser)]
#[command(name = "bmf", version, about = "Balancing-market price forecasting backtests")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a raw settlement CSV and write it in canonical form.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "reject")]
        fill: Fill,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic settlement series.
    Synth {
        #[arg(long)]
        days: i64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.02)]
        spike_prob: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a walk-forward backtest and write the report tables.
    Backtest {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated model families; overrides the config's list.
        #[arg(long)]
        models: Option<String>,
        #[arg(long)]
        out: PathBuf,
        /// Save a checkpoint every N retrain steps (0 disables).
        #[arg(long, default_value_t = 0)]
        checkpoint_every: usize,
        /// Continue from the checkpoint in --out.
        #[arg(long)]
        resume: bool,
        /// Stop after this many steps, leaving a checkpoint.
        #[arg(long)]
        max_steps: Option<usize>,
    },
    /// Render charts from a finished run directory.
    Report {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, value_enum, default_value = "svg")]
        format: Format,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Fill {
    Reject,
    Ffill,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Svg,
}

/// An error together with the process exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn input(error: impl Into<anyhow::Error>) -> Self {
        Self { code: 2, error: error.into() }
    }

    fn plan(error: impl Into<anyhow::Error>) -> Self {
        Self { code: 3, error: error.into() }
    }

    fn solver(error: impl Into<anyhow::Error>) -> Self {
        Self { code: 4, error: error.into() }
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    let result = match cli.command {
        Command::Ingest { input, fill, out } => ingest(&input, fill, &out),
        Command::Synth { days, seed, spike_prob, out } => synth(days, seed, spike_prob, &out),
        Command::Backtest { data, config, models, out, checkpoint_every, resume, max_steps } => backtest(BacktestArgs {
            data,
            config,
            models,
            out,
            checkpoint_every,
            resume,
            max_steps,
        }),
        Command::Report { run, format } => render(&run, format),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn configure_threads() -> anyhow::Result<()> {
    let Ok(v) = std::env::var("BMF_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().with_context(|| format!("BMF_THREADS must be a positive integer, got '{v}'"))?;
    if n == 0 {
        return Err(anyhow!("BMF_THREADS must be at least 1"));
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn ingest(input: &Path, fill: Fill, out: &Path) -> CmdResult {
    let policy = match fill {
        Fill::Reject => FillPolicy::Reject,
        Fill::Ffill => FillPolicy::ForwardFill,
    };
    let (series, stats) = ingest_csv(input, policy)
        .with_context(|| format!("ingesting {}", input.display()))
        .map_err(Failure::input)?;
    write_csv_file(&series, out).map_err(Failure::input)?;
    println!("rows: {}", series.len());
    println!("rows read: {}", stats.rows_read);
    println!("rows inserted: {}", stats.rows_inserted);
    println!("cells filled: {}", stats.fill_count);
    Ok(())
}

fn synth(days: i64, seed: u64, spike_prob: f64, out: &Path) -> CmdResult {
    let series = synthesize(days, seed, spike_prob, &SynthParams::default()).map_err(Failure::input)?;
    write_csv_file(&series, out).map_err(Failure::input)?;
    println!("rows: {}", series.len());
    Ok(())
}

struct BacktestArgs {
    data: PathBuf,
    config: PathBuf,
    models: Option<String>,
    out: PathBuf,
    checkpoint_every: usize,
    resume: bool,
    max_steps: Option<usize>,
}

/// Checkpoint plus the dataset it was computed on.
#[derive(Serialize, Deserialize)]
struct SavedRun {
    dataset_sha256: String,
    checkpoint: Checkpoint,
}

fn load_plan(config: &Path, models: Option<&str>) -> Result<BacktestPlan, Failure> {
    let text = fs::read_to_string(config)
        .with_context(|| format!("reading {}", config.display()))
        .map_err(Failure::input)?;
    let mut plan = BacktestPlan::parse(&text)
        .with_context(|| format!("config {}", config.display()))
        .map_err(Failure::plan)?;
    if let Some(list) = models {
        plan.models = list
            .split(',')
            .map(str::parse::<ModelFamily>)
            .collect::<Result<_, _>>()
            .map_err(Failure::plan)?;
        plan.validate().map_err(Failure::plan)?;
    }
    Ok(plan)
}

fn backtest(args: BacktestArgs) -> CmdResult {
    let started = Instant::now();
    let plan = load_plan(&args.config, args.models.as_deref())?;
    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))
        .map_err(Failure::input)?;
    let dataset_sha256 = sha256_file(&args.data).map_err(Failure::input)?;
    let (series, _) = ingest_csv(&args.data, FillPolicy::Reject)
        .with_context(|| format!("reading {}", args.data.display()))
        .map_err(Failure::input)?;
    let load_seconds = started.elapsed().as_secs_f64();

    let checkpoint_path = args.out.join(CHECKPOINT_FILE);
    let mut bt = if args.resume {
        let text = fs::read_to_string(&checkpoint_path)
            .with_context(|| format!("no checkpoint at {}", checkpoint_path.display()))
            .map_err(Failure::plan)?;
        let saved: SavedRun = serde_json::from_str(&text).context("reading checkpoint").map_err(Failure::plan)?;
        if saved.dataset_sha256 != dataset_sha256 {
            return Err(Failure::plan(anyhow!("checkpoint was made on a different dataset")));
        }
        if saved.checkpoint.plan != plan {
            return Err(Failure::plan(anyhow!("checkpoint was made with a different plan")));
        }
        Backtest::resume(&series, saved.checkpoint).map_err(Failure::plan)?
    } else {
        Backtest::new(&series, &plan).map_err(Failure::plan)?
    };

    let interrupted = Arc::new(AtomicBool::new(false));
    {
        let flag = interrupted.clone();
        // a second handler registration only fails if one is already set
        let _ = ctrlc::set_handler(move || flag.store(true, Ordering::SeqCst));
    }
    let save = |bt: &Backtest| -> CmdResult {
        let saved = SavedRun { dataset_sha256: dataset_sha256.clone(), checkpoint: bt.checkpoint() };
        let tmp = args.out.join(format!("{CHECKPOINT_FILE}.tmp"));
        let body = serde_json::to_vec(&saved).map_err(Failure::input)?;
        fs::write(&tmp, body).map_err(Failure::input)?;
        fs::rename(&tmp, &checkpoint_path).map_err(Failure::input)?;
        Ok(())
    };

    let run_started = Instant::now();
    let mut steps_run = 0;
    while !bt.is_done() {
        if interrupted.load(Ordering::SeqCst) {
            if args.checkpoint_every > 0 {
                save(&bt)?;
                eprintln!("interrupted; checkpoint saved at step {}/{}", bt.next_step(), bt.total_steps());
            }
            return Err(Failure { code: 130, error: anyhow!("interrupted") });
        }
        if args.max_steps == Some(steps_run) {
            save(&bt)?;
            println!("paused at step {}/{}", bt.next_step(), bt.total_steps());
            return Ok(());
        }
        bt.step().map_err(Failure::solver)?;
        steps_run += 1;
        if args.checkpoint_every > 0 && bt.next_step() % args.checkpoint_every == 0 && !bt.is_done() {
            save(&bt)?;
        }
    }
    let backtest_seconds = run_started.elapsed().as_secs_f64();
    let report = bt.finish();

    let staging = args.out.join(STAGING_DIR);
    let outcome = write_outputs(&report, &args, &staging, &dataset_sha256, [load_seconds, backtest_seconds]);
    let _ = fs::remove_dir_all(&staging);
    outcome?;
    let _ = fs::remove_file(&checkpoint_path);

    let rows = metrics_table(&report);
    for r in &rows {
        match &r.metrics {
            Some(m) => println!(
                "{:<6} {:>4}d  mae {:>8.3}  rmse {:>8.3}  smape {:>7.3}  n {}  failed {}",
                r.model, r.window_days, m.mae, m.rmse, m.smape, m.n, r.failed_origins
            ),
            None => println!("{:<6} {:>4}d  no forecasts, failed {}", r.model, r.window_days, r.failed_origins),
        }
    }
    if let Some(r) = rows.iter().find(|r| r.metrics.is_none()) {
        return Err(Failure::solver(anyhow!(
            "model {} produced no forecasts for the {}-day window",
            r.model,
            r.window_days
        )));
    }
    Ok(())
}

/// Write everything into the staging directory, then move it into place.
fn write_outputs(
    report: &bmf_core::backtest::BacktestReport,
    args: &BacktestArgs,
    staging: &Path,
    dataset_sha256: &str,
    [load_seconds, backtest_seconds]: [f64; 2],
) -> CmdResult {
    let _ = fs::remove_dir_all(staging);
    fs::create_dir_all(staging).map_err(Failure::input)?;
    let report_started = Instant::now();
    let files = report::write_bundle(report, staging).map_err(Failure::input)?;
    let stages = vec![
        StageTime { stage: "load".into(), seconds: load_seconds },
        StageTime { stage: "backtest".into(), seconds: backtest_seconds },
        StageTime { stage: "report".into(), seconds: report_started.elapsed().as_secs_f64() },
    ];
    let stages_path = staging.join(STAGES_FILE);
    fs::write(&stages_path, serde_json::to_string_pretty(&stages).map_err(Failure::input)? + "\n")
        .map_err(Failure::input)?;

    let manifest = RunManifest::build(&report.plan, &args.data, dataset_sha256, &files, &[report::TIMING_FILE, STAGES_FILE])
        .map_err(Failure::input)?;
    let manifest_path = staging.join(manifest::MANIFEST_FILE);
    fs::write(&manifest_path, manifest.to_json().map_err(Failure::input)?).map_err(Failure::input)?;

    for p in files.iter().chain([&stages_path, &manifest_path]) {
        let name = p.file_name().expect("staged files have names");
        fs::rename(p, args.out.join(name)).map_err(Failure::input)?;
    }
    Ok(())
}

fn render(run: &Path, format: Format) -> CmdResult {
    let required = [report::METRICS_FILE, report::HOURLY_FILE, report::TIMING_FILE];
    for f in required {
        if !run.join(f).is_file() {
            return Err(Failure::input(anyhow!("{} has no {f}", run.display())));
        }
    }
    match format {
        Format::Csv => {
            let text = fs::read_to_string(run.join(report::METRICS_FILE)).map_err(Failure::input)?;
            print!("{text}");
        }
        Format::Svg => {
            for p in report::render_charts(run).map_err(Failure::input)? {
                println!("wrote {}", p.display());
            }
        }
    }
    Ok(())
}
