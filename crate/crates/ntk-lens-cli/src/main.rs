//! Command-line front end: run experiments from config files, verify the
//! numerical core, analyze persisted records, and export plot-ready data.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 runtime
//! failure, 3 verification failure.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Mutex;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use ntk_lens::experiments::{
    aggregate_sweep, append_record, budget_warnings, detect_transition, fit_power_law,
    read_records, run_single, run_sweep, write_records, write_summary_csv, EnsemblePoint,
    ExperimentConfig, RunRecord, SweepAxis,
};
use ntk_lens::plots::export_plots;
use ntk_lens::verify::{all_passed, format_table, run_verification};
use ntk_lens::{Error, VERSION};

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_VERIFY: u8 = 3;

#[derive(Parser)]
#[command(
    name = "ntk-lens",
    version = VERSION,
    about = "Train small dense networks and track their tangent-kernel observables across sweeps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a single training run (first sweep value, member 0)
    Run(SweepArgs),
    /// Execute the configured sweep over all values and ensemble members
    Sweep(SweepArgs),
    /// Fit scaling laws to persisted records and report key quantities
    Analyze(RecordsArgs),
    /// Run the built-in numerical self-check battery
    Verify,
    /// Export plot-ready TSV panels and SVG charts from persisted records
    #[command(name = "export-plots")]
    ExportPlots(RecordsArgs),
}

#[derive(Args)]
struct SweepArgs {
    /// Experiment configuration file (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Directory for records and summaries
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Worker threads (default: logical cores)
    #[arg(long)]
    jobs: Option<usize>,
    /// Override the ensemble master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Skip (sweep value, seed) pairs already present in the records file
    #[arg(long)]
    resume: bool,
    /// Override the kernel-snapshot cadence
    #[arg(long)]
    ntk_every: Option<usize>,
    /// Print a progress line per completed run
    #[arg(long)]
    verbose: bool,
}

#[derive(Args)]
struct RecordsArgs {
    /// Experiment configuration file; supplies the records file name and
    /// the sweep axis (defaults apply without it)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory holding the records file; outputs are written here too
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Print extra detail
    #[arg(long)]
    verbose: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_CONFIG,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Run(args) => cmd_run(&args),
        Command::Sweep(args) => cmd_sweep(&args),
        Command::Analyze(args) => cmd_analyze(&args),
        Command::Verify => return cmd_verify(),
        Command::ExportPlots(args) => cmd_export_plots(&args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

/// Configuration problems are usage errors (exit 1); everything else that
/// goes wrong while running is a runtime failure (exit 2).
fn exit_code_for(error: &Error) -> u8 {
    match error {
        Error::Config { .. } | Error::InvalidSpec { .. } => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

/// An unreadable config file is a usage problem, not a runtime failure.
fn config_load_error(error: Error) -> Error {
    match error {
        Error::Io { path, source } => Error::Config {
            message: format!("cannot read config {}: {source}", path.display()),
        },
        other => other,
    }
}

fn load_config(args: &SweepArgs) -> Result<ExperimentConfig, Error> {
    let mut config = ExperimentConfig::load(&args.config).map_err(config_load_error)?;
    if let Some(seed) = args.seed {
        config.ensemble.master_seed = seed;
    }
    if let Some(every) = args.ntk_every {
        config.run.ntk_every = every;
    }
    config.validate()?;
    Ok(config)
}

fn records_path(out: &Path, config: &ExperimentConfig) -> PathBuf {
    out.join(&config.output.records)
}

fn cmd_run(args: &SweepArgs) -> Result<(), Error> {
    let config = load_config(args)?;
    let hash = config.hash();
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    println!(
        "single run: sweep value {} member 0 (config {})",
        config.sweep.values[0],
        &hash[..12]
    );
    let record = run_single(&config, 0, 0)?;
    let path = records_path(&args.out, &config);
    write_records(&path, &hash, std::slice::from_ref(&record))?;
    write_summary_csv(&args.out.join(&config.output.summary), &hash, std::slice::from_ref(&record))?;
    report_record(&record, true);
    for warning in budget_warnings(&config, std::slice::from_ref(&record)) {
        println!("warning: {warning}");
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn report_record(record: &RunRecord, verbose: bool) {
    if record.failed {
        println!(
            "  sweep value {} member {}: diverged after {} epochs",
            record.sweep_value,
            record.member,
            record.trace.losses.len().saturating_sub(1)
        );
        return;
    }
    let k = &record.key_quantities;
    if verbose {
        println!(
            "  sweep value {} member {}: min test loss {:.6} at epoch {}, trace {:.4} -> {:.4} (beta {:.4}), effective rank {:.4}",
            record.sweep_value,
            record.member,
            record.min_test_loss().unwrap_or(f64::NAN),
            record.trace.min_test_loss.epoch,
            k.trace_init,
            k.trace_min,
            k.trace_ratio,
            k.effective_rank_min,
        );
    } else {
        println!(
            "  sweep value {} member {}: done (min test loss at epoch {})",
            record.sweep_value,
            record.member,
            record.trace.min_test_loss.epoch
        );
    }
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), Error> {
    let config = load_config(args)?;
    let hash = config.hash();
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let path = records_path(&args.out, &config);

    let mut skip = HashSet::new();
    let mut kept: Vec<RunRecord> = Vec::new();
    if args.resume && path.exists() {
        let (header, existing) = read_records(&path)?;
        if header.config_hash != hash {
            return Err(Error::Records {
                message: format!(
                    "resume hash mismatch: records in {} were produced by config {}, current config is {}",
                    path.display(),
                    header.config_hash,
                    hash
                ),
            });
        }
        for record in &existing {
            skip.insert((record.sweep_value.to_bits(), record.seed));
        }
        kept = existing;
    } else {
        write_records(&path, &hash, &[])?;
    }

    let total = config.sweep.values.len() * config.ensemble.count;
    let planned = total - skip.len().min(total);
    println!(
        "sweep over {} values x {} members: {} jobs to run ({} already recorded)",
        config.sweep.values.len(),
        config.ensemble.count,
        planned,
        skip.len()
    );

    let jobs = args.jobs.unwrap_or_else(|| {
        std::thread::available_parallelism().map_or(1, std::num::NonZeroUsize::get)
    });
    let verbose = args.verbose;
    let sink = Mutex::new(());
    let on_record = |record: &RunRecord| -> Result<(), Error> {
        let _guard = sink.lock().expect("writer lock");
        append_record(&path, &hash, record)?;
        report_record(record, verbose);
        Ok(())
    };
    let new_records = run_sweep(&config, jobs, &skip, &on_record)?;

    let mut all = kept;
    all.extend(new_records);
    all.sort_by(|a, b| {
        a.sweep_value
            .total_cmp(&b.sweep_value)
            .then(a.member.cmp(&b.member))
    });
    write_records(&path, &hash, &all)?;
    let summary_path = args.out.join(&config.output.summary);
    write_summary_csv(&summary_path, &hash, &all)?;

    match aggregate_sweep(&all.iter().filter(|r| !r.failed).cloned().collect::<Vec<_>>()) {
        Ok(points) => {
            for point in &points {
                print_point(point);
            }
        }
        Err(e) => println!("warning: no ensemble summary ({e})"),
    }
    for warning in budget_warnings(&config, &all) {
        println!("warning: {warning}");
    }
    println!("wrote {} and {}", path.display(), summary_path.display());
    Ok(())
}

fn print_point(point: &EnsemblePoint) {
    let chi = point
        .chi_min
        .as_ref()
        .map_or("undefined".to_string(), |s| {
            format!("{:.4} +/- {:.4}", s.mean, s.stderr)
        });
    println!(
        "point {}: loss {:.6} +/- {:.6} | trace {:.4} -> {:.4} | beta {:.4} +/- {:.4} | rank {:.4} +/- {:.4} | chi {} ({}/{} members)",
        point.sweep_value,
        point.min_test_loss.mean,
        point.min_test_loss.stderr,
        point.trace_init.mean,
        point.trace_min.mean,
        point.beta.mean,
        point.beta.stderr,
        point.gamma_min.mean,
        point.gamma_min.stderr,
        chi,
        point.member_count - point.failed_count,
        point.member_count,
    );
}

fn resolve_records(args: &RecordsArgs) -> Result<(PathBuf, Option<ExperimentConfig>), Error> {
    let config = match &args.config {
        Some(path) => Some(ExperimentConfig::load(path).map_err(config_load_error)?),
        None => None,
    };
    let name = config
        .as_ref()
        .map_or_else(|| "records.jsonl".to_string(), |c| c.output.records.clone());
    Ok((args.out.join(name), config))
}

fn cmd_analyze(args: &RecordsArgs) -> Result<(), Error> {
    let (path, config) = resolve_records(args)?;
    let (header, records) = read_records(&path)?;
    if records.is_empty() {
        return Err(Error::Records {
            message: format!("no records in {}", path.display()),
        });
    }
    println!(
        "{} records (config {}, version {})",
        records.len(),
        &header.config_hash[..12.min(header.config_hash.len())],
        header.version
    );
    let surviving: Vec<RunRecord> = records.iter().filter(|r| !r.failed).cloned().collect();
    let points = aggregate_sweep(&surviving)?;
    for point in &points {
        print_point(point);
    }

    let x: Vec<f64> = points.iter().map(|p| p.sweep_value).collect();
    let fits: [(&str, Vec<f64>); 4] = [
        ("min test loss", points.iter().map(|p| p.min_test_loss.mean).collect()),
        ("initial trace", points.iter().map(|p| p.trace_init.mean).collect()),
        ("effective rank at minimum", points.iter().map(|p| p.gamma_min.mean).collect()),
        ("|trace ratio|", points.iter().map(|p| p.beta.mean.abs()).collect()),
    ];
    for (label, y) in &fits {
        match fit_power_law(&x, y, None) {
            Ok(fit) => println!(
                "fit {label}: exponent {:.4}, r^2 {:.4} over [{}, {}]",
                fit.exponent, fit.r_squared, fit.x_min, fit.x_max
            ),
            Err(e) => println!("fit {label}: unavailable ({e})"),
        }
    }

    let is_width_axis = config
        .as_ref()
        .is_none_or(|c| c.sweep.axis == SweepAxis::Widths);
    if is_width_axis && points.len() >= 5 {
        let gamma: Vec<f64> = points.iter().map(|p| p.gamma_min.mean).collect();
        let beta: Vec<f64> = points.iter().map(|p| p.beta.mean).collect();
        match detect_transition(&x, &gamma, &beta) {
            Ok(report) => {
                if report.transition_detected {
                    println!(
                        "transition: breakpoint {} (pre-break exponent {:.4}, post-break slope {:.4}, improvement {:.2})",
                        report.breakpoint.unwrap_or(f64::NAN),
                        report.pre_break_exponent.unwrap_or(f64::NAN),
                        report.post_break_slope.unwrap_or(f64::NAN),
                        report.residual_improvement
                    );
                    if let Some(fit) = &report.alpha_beta {
                        println!(
                            "transition: feature-regime trace-ratio exponent {:.4} (r^2 {:.4})",
                            fit.exponent, fit.r_squared
                        );
                    }
                    if let Some(plateau) = report.plateau_gamma {
                        println!("transition: plateau effective rank {plateau:.4}");
                    }
                } else {
                    println!("transition: none detected");
                }
            }
            Err(e) => println!("transition: unavailable ({e})"),
        }
    } else if args.verbose {
        println!("transition: needs a width sweep with at least 5 points");
    }
    Ok(())
}

fn cmd_verify() -> ExitCode {
    let outcomes = run_verification();
    print!("{}", format_table(&outcomes));
    if all_passed(&outcomes) {
        println!("all {} checks passed", outcomes.len());
        ExitCode::SUCCESS
    } else {
        let failed: Vec<&str> = outcomes
            .iter()
            .filter(|o| !o.passed)
            .map(|o| o.name)
            .collect();
        eprintln!("verification failed: {}", failed.join(", "));
        ExitCode::from(EXIT_VERIFY)
    }
}

fn cmd_export_plots(args: &RecordsArgs) -> Result<(), Error> {
    let (path, _) = resolve_records(args)?;
    let (_, records) = read_records(&path)?;
    let written = export_plots(&args.out, &records)?;
    for file in &written {
        println!("wrote {}", file.display());
    }
    Ok(())
}
