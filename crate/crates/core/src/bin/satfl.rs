use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use satfl::contact::{export_windows_csv, import_windows_csv, ContactTimeline, Counterpart, ImportOptions};
use satfl::experiment::{emit_report, parse_config, run_sweep, write_line_csv, ExperimentConfig, Metric, Profile};
use satfl::sim::{build_timeline, prepare_data, simulate, SimConfig};
use satfl::{Error, Result};

#[derive(Parser)]
#[command(name = "satfl", version, about = "Federated learning over LEO constellations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML configuration file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set hyperparams.E=2`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// desk or paper.
    #[arg(long)]
    profile: Option<String>,
    /// `synthetic[:k=v,...]` or `femnist:<dir>`.
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Compute access windows and export them as CSV, or validate an imported file.
    Windows {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        windows_in: Option<PathBuf>,
    },
    /// Run a single simulation.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
        /// Use windows from this CSV instead of propagating orbits.
        #[arg(long)]
        windows_in: Option<PathBuf>,
        /// Write the event log as JSON lines.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run every cell of a sweep.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// List the cells without running them.
        #[arg(long)]
        dry_run: bool,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Build heatmap and line CSVs from a sweep directory.
    Report {
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        /// One of max_accuracy, round_duration, idle_time; all when omitted.
        #[arg(long)]
        metric: Option<String>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Parse { .. } => 1,
        _ => 2,
    }
}

fn load(common: &Common, extra: &[String]) -> Result<(ExperimentConfig, Option<Profile>)> {
    let mut overrides = common.overrides.clone();
    if let Some(d) = &common.dataset {
        overrides.push(format!("dataset={d}"));
    }
    overrides.extend_from_slice(extra);
    let cfg = parse_config(common.config.as_deref(), &overrides)?;
    let profile = common.profile.as_deref().map(str::parse).transpose()?;
    Ok((cfg, profile))
}

fn mkdir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

fn import(path: &Path, sim: &SimConfig) -> Result<ContactTimeline> {
    let names = sim.station_list()?.into_iter().map(|s| s.name).collect();
    import_windows_csv(
        path,
        &ImportOptions {
            stations: Some(names),
            horizon: Some((0.0, sim.horizon_s)),
        },
    )
}

fn windows(common: &Common, windows_in: Option<&Path>) -> Result<()> {
    let (cfg, profile) = load(common, &[])?;
    let sim = cfg.sim_config(profile)?;
    let tl = match windows_in {
        Some(p) => import(p, &sim)?,
        None => build_timeline(&sim)?,
    };
    mkdir(&common.out_dir)?;
    let path = common.out_dir.join("windows.csv");
    export_windows_csv(&tl, &path)?;
    let ground = tl.all_windows().iter().filter(|w| matches!(w.counterpart, Counterpart::Station(_))).count();
    println!(
        "{} windows ({} ground, {} link) over {:.0} s -> {}",
        tl.all_windows().len(),
        ground,
        tl.all_windows().len() - ground,
        sim.horizon_s,
        path.display()
    );
    Ok(())
}

fn run(common: &Common, seed: Option<u64>, windows_in: Option<&Path>, trace: Option<&Path>) -> Result<()> {
    let extra: Vec<String> = seed.map(|s| format!("seed={s}")).into_iter().collect();
    let (cfg, profile) = load(common, &extra)?;
    let sim = cfg.sim_config(profile)?;
    let tl = match windows_in {
        Some(p) => import(p, &sim)?,
        None => build_timeline(&sim)?,
    };
    let data = prepare_data(&sim)?;
    let log = match trace {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                mkdir(dir)?;
            }
            let file = fs::File::create(p).map_err(|e| Error::io(p, e))?;
            let mut w = BufWriter::new(file);
            let log = simulate(&sim, &tl, &data, Some(&mut w))?;
            w.flush().map_err(|e| Error::io(p, e))?;
            log
        }
        None => simulate(&sim, &tl, &data, None)?,
    };
    mkdir(&common.out_dir)?;
    let json = common.out_dir.join("run.json");
    fs::write(&json, serde_json::to_vec(&log).expect("metrics serialize"))
        .map_err(|e| Error::io(&json, e))?;
    let line = common.out_dir.join("line.csv");
    let mut buf = Vec::new();
    write_line_csv(&log, &cfg.header_lines(profile), &mut buf)?;
    fs::write(&line, buf).map_err(|e| Error::io(&line, e))?;
    println!(
        "{}: {} rounds, max accuracy {:.4}, mean round {} h, idle {:.1} s/sat/h",
        sim.strategy.label(),
        log.completed_rounds(),
        log.max_accuracy(),
        log.mean_round_duration_h().map_or("n/a".into(), |h| format!("{h:.4}")),
        log.idle_s_per_satellite_per_hour()
    );
    if let Some(n) = &log.note {
        println!("note: {n}");
    }
    Ok(())
}

fn sweep(common: &Common, dry_run: bool, workers: Option<usize>) -> Result<()> {
    let (cfg, profile) = load(common, &[])?;
    let profile = profile.unwrap_or(Profile::Desk);
    let spec = cfg.sweep_spec(profile)?;
    let cells = spec.cells();
    if dry_run {
        for c in &cells {
            println!("{}", c.id());
        }
        println!("{} cells x {} seeds = {} runs", cells.len(), spec.seeds.len(), cells.len() * spec.seeds.len());
        return Ok(());
    }
    let header = cfg.header_lines(Some(profile));
    let rows = run_sweep(&spec, &common.out_dir, &header, workers.or(cfg.sweep.workers))?;
    let failed = rows.iter().filter(|r| !r.ok()).count();
    for r in rows.iter().filter(|r| !r.ok()) {
        eprintln!("failed {}: {}", r.run, r.message);
    }
    emit_report(&common.out_dir, &Metric::ALL)?;
    println!("{} runs, {} failed -> {}", rows.len(), failed, common.out_dir.display());
    Ok(())
}

fn report(out_dir: &Path, metric: Option<&str>) -> Result<()> {
    let metrics = match metric {
        Some(m) => vec![m.parse()?],
        None => Metric::ALL.to_vec(),
    };
    let files = emit_report(out_dir, &metrics)?;
    println!("wrote {} files under {}", files.len(), out_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Windows { common, windows_in } => windows(common, windows_in.as_deref()),
        Command::Run {
            common,
            seed,
            windows_in,
            trace,
        } => run(common, *seed, windows_in.as_deref(), trace.as_deref()),
        Command::Sweep {
            common,
            dry_run,
            workers,
        } => sweep(common, *dry_run, *workers),
        Command::Report { out_dir, metric } => report(out_dir, metric.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
