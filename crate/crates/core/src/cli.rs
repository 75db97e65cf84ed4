//! Command-line driver shared by the `pmqkd` binary and the integration tests.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::channel::{rate_distance_curve, write_curve_csv, CurveConfig, GroupMisalignment, DEFAULT_MISALIGNMENT};
use crate::error::{Error, Result};
use crate::finite_key::{analyze, optimize_group_set};
use crate::io::{reproduce, resolve_dataset, TallyFile, SCHEMA_VERSION};
use crate::protocol::ProtocolParams;
use crate::sim::{run_protocol, write_train_records, SimConfig};

#[derive(Debug, Parser)]
#[command(name = "pmqkd", version, about = "Phase-matching QKD simulator and finite-key analyzer")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate pulse trains and write the tally as JSON.
    Simulate(SimulateArgs),
    /// Run the finite-key analysis on a tally.
    Analyze(AnalyzeArgs),
    /// Write rate-versus-distance curves as CSV.
    Curves(CurvesArgs),
    /// Compare the analysis of a dataset with its published values.
    Reproduce(ReproduceArgs),
    /// Run quick consistency checks.
    Selftest,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Simulation configuration (protocol, channel, drift, layout, reference).
    #[arg(long)]
    params: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Number of pulse trains.
    #[arg(long, conflicts_with = "rounds")]
    trains: Option<u64>,
    /// Minimum number of quantum rounds; rounded up to whole trains.
    #[arg(long)]
    rounds: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-train diagnostics CSV.
    #[arg(long)]
    records: Option<PathBuf>,
    /// Omit the hidden photon-number bookkeeping from the output.
    #[arg(long)]
    no_truth: bool,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[arg(long)]
    tally: PathBuf,
    /// Protocol parameters, or a simulation configuration holding them.
    #[arg(long)]
    params: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// End-to-end transmittance for the bound comparison.
    #[arg(long)]
    eta_tot: Option<f64>,
    /// Choose the group set instead of using the one in the parameters.
    #[arg(long)]
    optimize_groups: bool,
}

#[derive(Debug, Args)]
struct CurvesArgs {
    #[arg(long, default_value_t = 0.2)]
    loss_db_per_km: f64,
    #[arg(long, default_value_t = 0.23)]
    eta_d: f64,
    #[arg(long, default_value_t = 1e-9)]
    dark_count: f64,
    #[arg(long, default_value_t = DEFAULT_MISALIGNMENT)]
    misalignment: f64,
    #[arg(long, default_value_t = 1.1)]
    f_ec: f64,
    #[arg(long, default_value_t = 600.0)]
    max_km: f64,
    #[arg(long, default_value_t = 10.0)]
    step_km: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReproduceArgs {
    /// Dataset file or bundled label (e.g. 302km.json).
    #[arg(long)]
    dataset: String,
    /// Quantum-pulse duty factor for the bits-per-second row.
    #[arg(long)]
    duty: Option<f64>,
    /// Also write the full comparison as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        context: format!("reading {}", path.display()),
        source,
    })
}

fn emit(path: Option<&Path>, content: &[u8], stdout: &mut dyn Write) -> Result<()> {
    match path {
        Some(p) => fs::write(p, content).map_err(|source| Error::Io {
            context: format!("writing {}", p.display()),
            source,
        }),
        None => stdout.write_all(content).map_err(|source| Error::Io {
            context: "writing to stdout".into(),
            source,
        }),
    }
}

fn simulate(a: SimulateArgs, out: &mut dyn Write) -> Result<()> {
    let cfg: SimConfig = serde_json::from_str(&read(&a.params)?)?;
    let trains = match (a.trains, a.rounds) {
        (Some(t), _) => t,
        (None, Some(r)) => cfg.trains_for_rounds(r),
        (None, None) => return Err(Error::invalid("give --trains or --rounds")),
    };
    let sim = run_protocol(&cfg, trains, a.seed, a.records.is_some())?;
    if let Some(p) = &a.records {
        let mut buf = Vec::new();
        write_train_records(&mut buf, &sim.records).map_err(|e| Error::Internal(e.to_string()))?;
        emit(Some(p), &buf, out)?;
    }
    let file = TallyFile {
        schema_version: SCHEMA_VERSION,
        seed: a.seed,
        tally: sim.tally,
        ground_truth: (!a.no_truth).then_some(sim.truth),
        diagnostics: Some(sim.diagnostics),
    };
    let mut text = serde_json::to_string_pretty(&file)?;
    text.push('\n');
    emit(a.out.as_deref(), text.as_bytes(), out)
}

fn analyze_cmd(a: AnalyzeArgs, out: &mut dyn Write) -> Result<()> {
    let tally = TallyFile::parse(&read(&a.tally)?)?.tally;
    let value: serde_json::Value = serde_json::from_str(&read(&a.params)?)?;
    let (mut params, channel_eta) = if value.get("protocol").is_some() {
        let cfg: SimConfig = serde_json::from_value(value)?;
        (cfg.protocol, Some(cfg.channel.eta_tot()))
    } else {
        (serde_json::from_value::<ProtocolParams>(value)?, None)
    };
    // the bounds need the number of rounds actually tallied
    params.rounds = tally.rounds;
    let eta = a.eta_tot.or(channel_eta);
    let report = if a.optimize_groups {
        optimize_group_set(&tally, &params, eta)?
    } else {
        analyze(&tally, &params, eta)?
    };
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    emit(a.out.as_deref(), text.as_bytes(), out)
}

fn curves(a: CurvesArgs, out: &mut dyn Write) -> Result<()> {
    if !(a.step_km > 0.0) || !(a.max_km >= 0.0) {
        return Err(Error::invalid("distance range must have a positive step"));
    }
    let cfg = CurveConfig {
        loss_db_per_km: a.loss_db_per_km,
        eta_d: a.eta_d,
        dark_count: a.dark_count,
        misalignment: a.misalignment,
        f_ec: a.f_ec,
        slices: 16,
        groups: vec![GroupMisalignment { group: 0, misalignment: a.misalignment }],
    };
    let n = (a.max_km / a.step_km + 1e-9).floor() as usize;
    let distances: Vec<f64> = (0..=n).map(|i| i as f64 * a.step_km).collect();
    let points = rate_distance_curve(&cfg, &distances)?;
    let mut buf = Vec::new();
    write_curve_csv(&mut buf, &points).map_err(|e| Error::Internal(e.to_string()))?;
    emit(a.out.as_deref(), &buf, out)
}

fn reproduce_cmd(a: ReproduceArgs, out: &mut dyn Write) -> Result<()> {
    let ds = resolve_dataset(&a.dataset)?;
    let r = reproduce(&ds, a.duty)?;
    emit(None, r.to_string().as_bytes(), out)?;
    if let Some(p) = &a.json {
        let mut text = serde_json::to_string_pretty(&r)?;
        text.push('\n');
        emit(Some(p), text.as_bytes(), out)?;
    }
    Ok(())
}

fn selftest(out: &mut dyn Write) -> Result<bool> {
    let checks = crate::selftest::run();
    let mut ok = true;
    for c in &checks {
        ok &= c.passed;
        writeln!(out, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)
            .map_err(|e| Error::Internal(e.to_string()))?;
    }
    Ok(ok)
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<bool> {
    match cli.command {
        Command::Simulate(a) => simulate(a, out).map(|_| true),
        Command::Analyze(a) => analyze_cmd(a, out).map(|_| true),
        Command::Curves(a) => curves(a, out).map(|_| true),
        Command::Reproduce(a) => reproduce_cmd(a, out).map(|_| true),
        Command::Selftest => selftest(out),
    }
}

/// Runs the command line `argv` (program name first) and returns the exit
/// status: 0 on success, 1 on invalid input or usage, 2 on internal failure.
pub fn cli_main<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = out.write_all(text.as_bytes());
                    0
                }
                _ => {
                    let _ = err.write_all(text.as_bytes());
                    1
                }
            };
        }
    };
    let mut buf: Vec<u8> = Vec::new();
    let result = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(cli, &mut buf)),
            Err(e) => Err(Error::Internal(format!("thread pool: {e}"))),
        },
        None => dispatch(cli, &mut buf),
    };
    let _ = out.write_all(&buf);
    match result {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            if e.is_validation() {
                1
            } else {
                2
            }
        }
    }
}
