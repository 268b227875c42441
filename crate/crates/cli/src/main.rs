//! `combqkd` command-line front end.
//!
//! Exit codes: 0 success (secure key rate), 1 error, 2 insecure operating
//! point, 3 infeasible network plan.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use combqkd::config::{OutputFormat, RunConfig, CONFIG_ENV};
use combqkd::keyrate::KeyRateReport;
use combqkd::opo::{sideband_cleanliness, CavityDesign, DesignRequest};
use combqkd::planner::{allocate, pair_budget_with_noise, plan_keyrates, render_table, verify_plan};
use combqkd::sweep::{curve_suffix, evaluate_config, keyrate_json, run_family, run_spectrum, TOOL_VERSION};
use combqkd::{Error, Executor};

const EXIT_ERROR: u8 = 1;
const EXIT_INSECURE: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;

#[derive(Parser)]
#[command(
    name = "combqkd",
    version,
    about = "Comb-source CV-QKD network simulator and planner"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long, short, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    /// Override a config value, e.g. `--set link.beta=0.95`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    sets: Vec<String>,
    /// Output file (stdout if omitted).
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    /// Output format: csv or json.
    #[arg(long, global = true)]
    format: Option<String>,
    /// Symplectic-eigenvalue convention: standard or paper.
    #[arg(long, global = true)]
    convention: Option<String>,
    /// Worker threads (0 = all cores, 1 = sequential).
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Key rate at the configured operating point.
    Keyrate,
    /// Key rate along one parameter axis, optionally for a family of curves.
    Sweep,
    /// Technical-noise breakdown over an angular-frequency grid.
    Spectrum,
    /// Comb-tooth allocation and per-pair key rates for the [network] section.
    Plan,
    /// Cavity and crystal lengths from FSR / bandwidth targets, or vice versa.
    Design(DesignArgs),
}

#[derive(Args)]
struct DesignArgs {
    #[arg(long)]
    cavity_length_m: Option<f64>,
    #[arg(long)]
    crystal_length_m: Option<f64>,
    #[arg(long)]
    fsr_hz: Option<f64>,
    #[arg(long)]
    bandwidth_hz: Option<f64>,
}

impl Common {
    /// Dedicated flags are applied after `--set`, so they win.
    fn load(&self) -> Result<RunConfig> {
        let mut sets = self.sets.clone();
        if let Some(f) = &self.format {
            sets.push(format!("output.format={f:?}"));
        }
        if let Some(c) = &self.convention {
            sets.push(format!("convention={c:?}"));
        }
        if let Some(w) = self.workers {
            sets.push(format!("output.workers={w}"));
        }
        if let Some(p) = &self.output {
            sets.push(format!("output.path={:?}", p.to_string_lossy()));
        }
        Ok(RunConfig::load(self.config.as_deref(), &sets)?)
    }
}

fn emit(text: &str, path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// `out.csv` + `label` → `out_label.csv`.
fn suffixed(path: &Path, label: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}_{}.{}", curve_suffix(label), ext.to_string_lossy()),
        None => format!("{stem}_{}", curve_suffix(label)),
    };
    path.with_file_name(name)
}

fn keyrate_csv(report: &KeyRateReport, precision: usize) -> String {
    format!(
        "{}\n{}\n",
        KeyRateReport::CSV_FIELDS.join(","),
        report.csv_cells(precision).join(",")
    )
}

fn cmd_keyrate(cfg: &RunConfig) -> Result<u8> {
    let report = evaluate_config(cfg)?;
    let text = match cfg.output.format {
        OutputFormat::Json => keyrate_json(cfg, &report),
        OutputFormat::Csv => keyrate_csv(&report, cfg.output.precision),
    };
    emit(&text, cfg.output.path.as_deref())?;
    if report.secure {
        Ok(0)
    } else {
        eprintln!("insecure: key rate {:.6e} bits/pulse <= 0", report.key_rate);
        Ok(EXIT_INSECURE)
    }
}

fn cmd_sweep(cfg: &RunConfig, executor: &Executor) -> Result<u8> {
    let results = run_family(cfg, executor)?;
    let render = |r: &combqkd::sweep::SweepResult| r.render(cfg.output.format, cfg.output.precision);
    match (&cfg.output.path, results.as_slice()) {
        (path, [single]) if single.label.is_none() => emit(&render(single), path.as_deref())?,
        (Some(path), many) => {
            for r in many {
                let p = suffixed(path, r.label.as_deref().unwrap_or("curve"));
                emit(&render(r), Some(&p))?;
                eprintln!("wrote {}", p.display());
            }
        }
        (None, many) => {
            let joined: Vec<String> = many.iter().map(render).collect();
            emit(&joined.join("\n"), None)?;
        }
    }
    Ok(0)
}

fn cmd_spectrum(cfg: &RunConfig, executor: &Executor) -> Result<u8> {
    let s = run_spectrum(cfg, executor)?;
    emit(
        &s.render(cfg.output.format, cfg.output.precision),
        cfg.output.path.as_deref(),
    )?;
    Ok(0)
}

fn cmd_plan(cfg: &RunConfig, executor: &Executor) -> Result<u8> {
    let (spec, distances) = cfg.network()?;
    let mut opo = cfg.opo_params()?;
    opo.fsr_hz = spec.fsr_hz;
    let seed = cfg.seed_model();
    let budget = match pair_budget_with_noise(&spec, |n| sideband_cleanliness(&opo, &seed, n)) {
        Ok(b) => b,
        Err(e @ Error::InfeasibleSpacing { .. }) => {
            eprintln!("{e}");
            return Ok(EXIT_INFEASIBLE);
        }
        Err(e) => return Err(e.into()),
    };
    let plan = match allocate(&spec, &budget) {
        Ok(p) => p,
        Err(e @ (Error::BudgetExceeded { .. } | Error::AllocationFailed(_))) => {
            eprintln!("{e}");
            eprintln!("{}", budget.summary());
            let doc = json!({ "version": TOOL_VERSION, "feasible": false, "budget": budget });
            emit(
                &(serde_json::to_string_pretty(&doc)? + "\n"),
                cfg.output.path.as_deref(),
            )?;
            return Ok(EXIT_INFEASIBLE);
        }
        Err(e) => return Err(e.into()),
    };
    let verification = verify_plan(&plan, &spec);
    if !verification.valid {
        bail!(
            "internal error: plan failed verification: {:?}",
            verification.violations
        );
    }
    let link = cfg.link_params();
    let rates = plan_keyrates(&plan, &distances, &opo, &seed, &link, cfg.convention, executor)?;
    eprint!("{}", render_table(&plan, Some(&rates)));

    let assignments: Vec<_> = plan
        .assignments
        .iter()
        .map(|a| {
            json!({
                "users": [a.users.0, a.users.1],
                "n": a.comb_magnitude,
                "orientation": a.orientation,
                "signal_user": a.signal_user,
                "idler_user": a.idler_user,
                "het_user": a.het_user,
                "frequencies": {
                    "signal_offset": a.signal_offset,
                    "idler_offset": a.idler_offset,
                    "signal_offset_hz": f64::from(a.signal_offset) * spec.fsr_hz,
                    "idler_offset_hz": f64::from(a.idler_offset) * spec.fsr_hz,
                },
            })
        })
        .collect();
    let doc = json!({
        "version": TOOL_VERSION,
        "config_hash": cfg.config_hash(),
        "feasible": true,
        "budget": budget,
        "assignments": assignments,
        "per_user_frequencies": plan.per_user_frequencies,
        "verification": verification,
        "key_rates": rates,
    });
    emit(
        &(serde_json::to_string_pretty(&doc)? + "\n"),
        cfg.output.path.as_deref(),
    )?;
    Ok(0)
}

fn cmd_design(args: &DesignArgs, output: Option<&Path>) -> Result<u8> {
    let req = DesignRequest {
        cavity_length_m: args.cavity_length_m,
        crystal_length_m: args.crystal_length_m,
        target_fsr_hz: args.fsr_hz,
        target_bandwidth_hz: args.bandwidth_hz,
    };
    let design = CavityDesign::solve(&req)?;
    emit(&(serde_json::to_string_pretty(&design)? + "\n"), output)?;
    Ok(0)
}

fn run(cli: Cli) -> Result<u8> {
    if let Command::Design(args) = &cli.command {
        return cmd_design(args, cli.common.output.as_deref());
    }
    let cfg = cli.common.load()?;
    let executor = Executor::with_workers(cfg.output.workers);
    match cli.command {
        Command::Keyrate => cmd_keyrate(&cfg),
        Command::Sweep => cmd_sweep(&cfg, &executor),
        Command::Spectrum => cmd_spectrum(&cfg, &executor),
        Command::Plan => cmd_plan(&cfg, &executor),
        Command::Design(_) => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
