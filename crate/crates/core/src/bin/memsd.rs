//! `memsd`: modal, sweep, doubling, pull-in and report runs for MEMS
//! cantilever frequency doublers.
//!
//! Exit codes: 0 all checks passed, 1 a physics failure or failed check,
//! 2 invalid configuration or input.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use memsd::device::{self, PRESET_NAMES};
use memsd::harness::{self, RunReport, Scenario, DEFAULT_OUTPUT_ROOT};
use memsd::io::Format;
use memsd::{Error, Result};

#[derive(Parser)]
#[command(name = "memsd", version, about = "MEMS cantilever frequency-doubler simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analytic and FE natural frequencies, mode-shape tables.
    Modal(RunArgs),
    /// Resonator-wired steady-state sweep with resonance fit.
    Sweep(RunArgs),
    /// Half-frequency drive in doubler wiring, output spectrum and purity.
    Double(RunArgs),
    /// Pull-in voltages of both gaps.
    Pullin(RunArgs),
    /// Every stage for each scenario plus a comparison table.
    Report(RunArgs),
    /// Print the built-in device presets as JSON.
    Presets,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario JSON file (one scenario or an array).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in preset to run with default settings.
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(PRESET_NAMES))]
    preset: Option<String>,
    /// Output root; overrides the scenario's output_dir and MEMSD_OUT.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Table format for exported data.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// DC bias override, V.
    #[arg(long)]
    vdc: Option<f64>,
    /// AC amplitude override, V.
    #[arg(long)]
    vamp: Option<f64>,
    /// Drive frequency override, Hz.
    #[arg(long)]
    fin: Option<f64>,
}

impl RunArgs {
    fn scenarios(&self, all_presets_by_default: bool) -> Result<Vec<Scenario>> {
        let mut list = match (&self.config, &self.preset) {
            (Some(path), _) => Scenario::load(path)?,
            (None, Some(name)) => vec![Scenario::from_preset(name)?],
            (None, None) if all_presets_by_default => PRESET_NAMES
                .iter()
                .map(|n| Scenario::from_preset(n))
                .collect::<Result<_>>()?,
            (None, None) => {
                return Err(Error::invalid("--config/--preset", "one of them is required"));
            }
        };
        for s in &mut list {
            if let Some(v) = self.vdc {
                s.drive.v_dc = v;
            }
            if let Some(v) = self.vamp {
                s.drive.v_amp = v;
            }
            if let Some(f) = self.fin {
                s.drive.f_in = Some(f);
            }
            s.validate()?;
        }
        Ok(list)
    }

    fn root(&self, scenario: Option<&Scenario>) -> PathBuf {
        if let Some(out) = &self.out {
            return out.clone();
        }
        if let Some(dir) = scenario.and_then(|s| s.output_dir.clone()) {
            return dir;
        }
        std::env::var_os("MEMSD_OUT")
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT))
    }
}

type StageFn = fn(&Scenario, &Path, Format) -> Result<RunReport>;

fn print_report(report: &RunReport, root: &Path) {
    println!("== {} ==", report.scenario.name);
    for c in &report.checks {
        let tag = match (c.passed, c.asserted) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "WARN",
        };
        println!("{tag} {}: {}", c.criterion, c.detail);
    }
    if let Some(r) = &report.reference {
        println!(
            "info: bench measurements {:.0} kHz response peak, {:.0}/{:.0}/{:.0} kHz doubled output ({})",
            r.measured_response_peak / 1e3,
            r.measured_doubled_output[0] / 1e3,
            r.measured_doubled_output[1] / 1e3,
            r.measured_doubled_output[2] / 1e3,
            r.note
        );
    }
    let dir = report.scenario.directory(root);
    println!("wrote {}", dir.join("report.json").display());
}

fn run_stage(args: &RunArgs, stage: StageFn) -> Result<bool> {
    let mut ok = true;
    for scenario in args.scenarios(false)? {
        let root = args.root(Some(&scenario));
        let report = stage(&scenario, &root, args.format)?;
        print_report(&report, &root);
        ok &= report.passed();
    }
    Ok(ok)
}

fn run_report(args: &RunArgs) -> Result<bool> {
    let scenarios = args.scenarios(true)?;
    let root = args.root(scenarios.first());
    let report = harness::run_report(&scenarios, &root, args.format)?;
    print!("{}", report.render());
    println!("wrote {}", root.join("report.json").display());
    if report.rows.iter().all(|r| r.validation_failure) {
        if let Some(row) = report.rows.first() {
            if let harness::RowStatus::Failed(why) = &row.status {
                return Err(Error::invalid(row.scenario.clone(), why.clone()));
            }
        }
    }
    Ok(report.passed())
}

fn presets() -> Result<bool> {
    let mut map = serde_json::Map::new();
    for name in PRESET_NAMES {
        map.insert(name.to_string(), serde_json::to_value(device::preset(name)?)?);
    }
    println!("{}", serde_json::to_string_pretty(&map)?);
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Modal(a) => run_stage(a, harness::run_modal),
        Command::Sweep(a) => run_stage(a, harness::run_sweep),
        Command::Double(a) => run_stage(a, harness::run_double),
        Command::Pullin(a) => run_stage(a, harness::run_pullin),
        Command::Report(a) => run_report(a),
        Command::Presets => presets(),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 1 })
        }
    }
}
