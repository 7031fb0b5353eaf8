//! `demo`: train, sweep, benchmark and plot decoupled-momentum runs.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |---|---|
//! | 0 | success |
//! | 1 | invalid configuration (parse errors carry line and column) |
//! | 2 | transport failure |
//! | 3 | usage error or unusable input file |
//! | 4 | I/O error |
//! | 5 | the run itself failed (optimizer error, diverged workers) |

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use demo_core::config::RunConfig;
use demo_core::harness::bench::{bench_compaction, BenchParams, Signal};
use demo_core::harness::metrics::parse_metrics_csv;
use demo_core::harness::plot::{render_svg, Series};
use demo_core::harness::sweep::summary_csv;
use demo_core::harness::{run_sweep, SweepGrid};
use demo_core::{run_experiment, HarnessError};

/// Prints to stdout, ignoring a closed pipe.
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

#[derive(Debug, Parser)]
#[command(name = "demo", version, about = "Decoupled momentum optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Config file; built-in defaults are used for anything it omits.
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set optimizer.k=8`. Repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory.
    #[arg(long, env = "DEMO_OUT_DIR", default_value = "runs")]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one experiment and write metrics.csv, ledger.csv and config.txt.
    Train(RunArgs),
    /// Run a grid of experiments and write summary.csv plus per-point metrics.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Grid axis, e.g. `--grid optimizer.k=1,2,4,8`. Repeatable.
        #[arg(long = "grid", value_name = "SECTION.KEY=V1,V2,...", required = true)]
        grid: Vec<String>,
    },
    /// Energy captured by top-k DCT vs top-k raw coefficients.
    BenchCompaction {
        #[arg(long, default_value = "ar1", value_parser = ["ar1", "white", "constant"])]
        signal: String,
        #[arg(long, default_value_t = 0.95, allow_negative_numbers = true)]
        rho: f64,
        #[arg(long, default_value_t = 64)]
        length: usize,
        /// Chunk length; defaults to the signal length.
        #[arg(long)]
        chunk: Option<usize>,
        #[arg(long, default_value_t = 8)]
        k: usize,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Render metrics CSVs as an SVG line chart, one line per file.
    Plot {
        #[arg(required = true)]
        csv: Vec<PathBuf>,
        /// Column to plot against `step`.
        #[arg(long, default_value = "train_loss")]
        column: String,
        /// Output SVG path; defaults to `<out dir>/plot.svg`.
        #[arg(long, short)]
        output: Option<PathBuf>,
        #[arg(long, env = "DEMO_OUT_DIR", default_value = "runs")]
        out: PathBuf,
    },
    /// Summarize metrics CSVs: final loss, bytes per step, traffic relative to the first file.
    Report {
        #[arg(required = true)]
        csv: Vec<PathBuf>,
    },
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Transport(String),
    Usage(String),
    Io(String),
    Run(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Transport(_) => 2,
            Failure::Usage(_) => 3,
            Failure::Io(_) => 4,
            Failure::Run(_) => 5,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Transport(m) | Failure::Usage(m) | Failure::Io(m) | Failure::Run(m) => m,
        }
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Config(c) => Failure::Config(format!("invalid config: {c}")),
            HarnessError::Transport(t) => Failure::Transport(format!("transport error: {t}")),
            other => Failure::Run(other.to_string()),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}

fn load_config(args: &RunArgs) -> Result<RunConfig, Failure> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
            RunConfig::parse(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    for o in &args.overrides {
        cfg.apply_override(o).map_err(|e| Failure::Config(e.to_string()))?;
    }
    cfg.validate().map_err(|e| Failure::Config(format!("invalid config: {e}")))?;
    Ok(cfg)
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn train(args: &RunArgs) -> Result<(), Failure> {
    let cfg = load_config(args)?;
    create_dir(&args.out)?;
    let m = run_experiment(&cfg)?;
    write(&args.out.join("metrics.csv"), &m.to_csv())?;
    write(&args.out.join("ledger.csv"), &m.ledger.to_csv())?;
    write(&args.out.join("config.txt"), &cfg.to_text())?;
    let acc = m.final_eval_accuracy.map(|a| format!(" eval_accuracy={a:.4}")).unwrap_or_default();
    say!(
        "{} {} W={} steps={}: final_train_loss={:.6} eval_loss={:.6}{acc} bytes/step={:.0}",
        cfg.model.kind.name(),
        cfg.optimizer.kind.name(),
        cfg.run.workers,
        cfg.run.steps,
        m.final_train_loss,
        m.final_eval_loss,
        m.mean_bytes_sent()
    );
    say!("wrote {}", args.out.join("metrics.csv").display());
    Ok(())
}

fn sweep(args: &RunArgs, grid: &[String]) -> Result<(), Failure> {
    let cfg = load_config(args)?;
    let grid = SweepGrid::parse(grid).map_err(|e| Failure::Usage(e.to_string()))?;
    create_dir(&args.out)?;
    let results = run_sweep(&cfg, &grid)?;
    let rows: Vec<_> = results.iter().map(|(r, _)| r.clone()).collect();
    for (i, (row, m)) in results.iter().enumerate() {
        write(&args.out.join(format!("point-{i:03}.csv")), &m.to_csv())?;
        let point: Vec<String> = row.point.iter().map(|(k, v)| format!("{k}={v}")).collect();
        say!(
            "{}: final_train_loss={:.6} bytes/step={:.0}",
            point.join(" "),
            row.final_train_loss,
            row.bytes_per_step
        );
    }
    let path = args.out.join("summary.csv");
    write(&path, &summary_csv(&grid, &rows))?;
    say!("wrote {}", path.display());
    Ok(())
}

fn read_metrics(path: &Path) -> Result<Vec<demo_core::harness::MetricsRow>, Failure> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let rows = parse_metrics_csv(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    if rows.is_empty() {
        return Err(Failure::Usage(format!("{}: no data rows", path.display())));
    }
    Ok(rows)
}

fn label(path: &Path) -> String {
    match (path.parent().and_then(|p| p.file_name()), path.file_stem()) {
        (Some(dir), Some(stem)) if stem == "metrics" => dir.to_string_lossy().into_owned(),
        (_, Some(stem)) => stem.to_string_lossy().into_owned(),
        _ => path.display().to_string(),
    }
}

fn plot(csvs: &[PathBuf], column: &str, output: Option<&Path>, out_dir: &Path) -> Result<(), Failure> {
    const PLOTTABLE: [&str; 8] = [
        "train_loss",
        "grad_norm",
        "q_norm",
        "eval_loss",
        "eval_accuracy",
        "payload_bytes",
        "bytes_sent",
        "bytes_received",
    ];
    if !PLOTTABLE.contains(&column) {
        return Err(Failure::Usage(format!("cannot plot column `{column}`; choose one of {}", PLOTTABLE.join(", "))));
    }
    let mut series = Vec::new();
    for path in csvs {
        let rows = read_metrics(path)?;
        let y = |r: &demo_core::harness::MetricsRow| -> Option<f64> {
            match column {
                "train_loss" => Some(r.train_loss),
                "grad_norm" => r.grad_norm,
                "q_norm" => r.q_norm,
                "eval_loss" => r.eval_loss,
                "eval_accuracy" => r.eval_accuracy,
                "payload_bytes" => Some(r.payload_bytes as f64),
                "bytes_sent" => Some(r.bytes_sent as f64),
                "bytes_received" => Some(r.bytes_received as f64),
                _ => None,
            }
        };
        series.push(Series {
            label: label(path),
            points: rows.iter().filter_map(|r| y(r).map(|v| (r.step as f64, v))).collect(),
        });
    }
    let svg = render_svg(column, column, &series).map_err(|e| Failure::Usage(format!("{column}: {e}")))?;
    let path = match output {
        Some(p) => p.to_path_buf(),
        None => {
            create_dir(out_dir)?;
            out_dir.join("plot.svg")
        }
    };
    write(&path, &svg)?;
    say!("wrote {}", path.display());
    Ok(())
}

fn report(csvs: &[PathBuf]) -> Result<(), Failure> {
    say!("file,steps,final_train_loss,final_eval_loss,bytes_per_step,traffic_vs_first");
    let mut reference = None;
    for path in csvs {
        let rows = read_metrics(path)?;
        let last = rows.last().expect("non-empty");
        let eval = rows.iter().rev().find_map(|r| r.eval_loss);
        let steps: Vec<_> = rows.iter().filter(|r| r.step > 0).collect();
        let bytes = if steps.is_empty() {
            0.0
        } else {
            steps.iter().map(|r| r.bytes_sent as f64).sum::<f64>() / steps.len() as f64
        };
        let reference = *reference.get_or_insert(bytes);
        let ratio = if reference > 0.0 {
            format!("{:.6}", bytes / reference)
        } else {
            String::new()
        };
        say!(
            "{},{},{},{},{:.0},{ratio}",
            path.display(),
            last.step,
            last.train_loss,
            eval.map(|e| e.to_string()).unwrap_or_default(),
            bytes
        );
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Train(args) => train(&args),
        Command::Sweep { run, grid } => sweep(&run, &grid),
        Command::BenchCompaction {
            signal,
            rho,
            length,
            chunk,
            k,
            trials,
            seed,
        } => {
            let params = BenchParams {
                signal: Signal::parse(&signal, rho).expect("clap restricts the signal names"),
                length,
                chunk: chunk.unwrap_or(length),
                k,
                trials,
                seed,
            };
            let r = bench_compaction(&params).map_err(Failure::Usage)?;
            say!(
                "signal={} length={} chunk={} k={} trials={}",
                params.signal.name(),
                params.length,
                params.chunk,
                params.k,
                r.trials
            );
            say!("dct_energy_fraction={:.6}", r.dct_fraction);
            say!("identity_energy_fraction={:.6}", r.identity_fraction);
            Ok(())
        }
        Command::Plot {
            csv,
            column,
            output,
            out,
        } => plot(&csv, &column, output.as_deref(), &out),
        Command::Report { csv } => report(&csv),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(3) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
