use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use gaussproj::harness::{
    self, emit_plotdata, exit_code_for, report, resolve_jobs, run_sweep, run_verify, with_jobs, CurveSpec,
    ExperimentConfig, EXIT_CONFIG, EXIT_OK,
};
use gaussproj::{Error, Result};

#[derive(Parser)]
#[command(name = "gaussproj", version, about = "Gaussian approximation of random projections: bounds, estimates, verification")]
struct Cli {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Replaces `root_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// `dotted.key=value`, applied in order before validation.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory (defaults to `output.dir` from the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, env = "GAUSSPROJ_JOBS")]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Distribution functionals per source and n.
    Stats(RunArgs),
    /// m_{k-1}, m_{k+1} and M per grid point.
    Moments(RunArgs),
    /// Every bound per grid point.
    Bounds(RunArgs),
    /// The configured estimates per grid point.
    Estimate(RunArgs),
    /// Evaluate the configured checks; exit 0 / 2 / 1 for holds / marginal / violated.
    Verify(RunArgs),
    /// One row per grid point with functionals, bounds and estimates.
    Sweep(RunArgs),
    /// Emit an (x, y, y_err) series from a sweep table.
    Plotdata(PlotArgs),
}

#[derive(Args)]
struct PlotArgs {
    /// Sweep CSV.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    x: String,
    #[arg(long)]
    y: String,
    /// Emit the `<y>_log` column.
    #[arg(long)]
    log: bool,
    /// `column=value` row filter; repeatable.
    #[arg(long = "where", value_name = "COLUMN=VALUE")]
    filters: Vec<String>,
    /// Output CSV.
    #[arg(long)]
    out: PathBuf,
}

fn load(args: &RunArgs) -> Result<(ExperimentConfig, usize, PathBuf)> {
    let mut overrides = args.overrides.clone();
    if let Some(seed) = args.seed {
        overrides.push(format!("root_seed={seed}"));
    }
    let cfg = ExperimentConfig::load(&args.config, &overrides)?;
    let jobs = resolve_jobs(args.jobs);
    let out = args.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    Ok((cfg, jobs, out))
}

/// Writes `<out>/<name>.json` when `--out` was given, else prints to stdout.
fn emit<T: Serialize>(value: &T, args: &RunArgs, out: &Path, name: &str) -> Result<()> {
    if args.out.is_some() {
        std::fs::create_dir_all(out)?;
        let path = out.join(format!("{name}.json"));
        report::write_json(value, &path)?;
        println!("wrote {}", path.display());
    } else {
        println!("{}", serde_json::to_string_pretty(value)?);
    }
    Ok(())
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Stats(a) => {
            let (cfg, jobs, out) = load(&a)?;
            let v = with_jobs(jobs, || harness::run_stats(&cfg))??;
            emit(&v, &a, &out, "stats")?;
        }
        Command::Moments(a) => {
            let (cfg, jobs, out) = load(&a)?;
            let v = with_jobs(jobs, || harness::run_moments(&cfg))??;
            emit(&v, &a, &out, "moments")?;
        }
        Command::Bounds(a) => {
            let (cfg, jobs, out) = load(&a)?;
            let v = with_jobs(jobs, || harness::run_bounds(&cfg))??;
            emit(&v, &a, &out, "bounds")?;
        }
        Command::Estimate(a) => {
            let (cfg, jobs, out) = load(&a)?;
            if cfg.estimates.is_empty() {
                return Err(Error::Config("config lists no `estimates`".into()));
            }
            let v = with_jobs(jobs, || harness::run_estimates(&cfg))??;
            emit(&v, &a, &out, "estimates")?;
        }
        Command::Verify(a) => {
            let (cfg, jobs, out) = load(&a)?;
            if cfg.checks.is_empty() {
                return Err(Error::Config("config lists no `checks`".into()));
            }
            let rep = with_jobs(jobs, || run_verify(&cfg, jobs))??;
            for p in report::write_verify(&rep, &out)? {
                println!("wrote {}", p.display());
            }
            for r in rep.rows.iter().filter(|r| r.verdict != harness::Verdict::Holds) {
                eprintln!(
                    "{}: {} {} {:?} lhs={} rhs={} margin={:.2}",
                    r.verdict.as_str(),
                    r.check,
                    r.source,
                    r.params,
                    r.lhs,
                    r.rhs,
                    r.margin
                );
            }
            let s = rep.summary;
            println!(
                "rows {}  holds {}  holds-marginal {}  violated {}",
                s.rows, s.holds, s.holds_marginal, s.violated
            );
            return Ok(rep.exit_code);
        }
        Command::Sweep(a) => {
            let (cfg, jobs, out) = load(&a)?;
            let table = with_jobs(jobs, || run_sweep(&cfg, jobs))??;
            let path = out.join("sweep.csv");
            table.write_csv(&path)?;
            println!("wrote {} ({} rows)", path.display(), table.rows.len());
        }
        Command::Plotdata(p) => {
            let mut spec = CurveSpec::new(&p.x, &p.y);
            spec.log = p.log;
            for f in &p.filters {
                let (k, v) = f
                    .split_once('=')
                    .ok_or_else(|| Error::Config(format!("filter `{f}` is not COLUMN=VALUE")))?;
                spec.filters.push((k.to_string(), v.to_string()));
            }
            let series = emit_plotdata(&p.input, &spec, &p.out)?;
            println!("wrote {} ({} points of {})", p.out.display(), series.points.len(), series.y_column);
        }
    }
    Ok(EXIT_OK)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let code = run(cli).unwrap_or_else(|e| {
        eprintln!("error: {e}");
        exit_code_for(&e)
    });
    ExitCode::from(code as u8)
}
