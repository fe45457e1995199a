//! Command-line front end: single runs, parameter sweeps, the closed-form
//! cost tables, and config validation.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use manetsim::analytics::render_analytic_table;
use manetsim::experiment::{sweep, SweepParams};
use manetsim::runner::run_scenario;
use manetsim::scenario::{preset, IdsMode, ScenarioSpec, PRESET_NAMES};

#[derive(Parser)]
#[command(
    name = "manetsim",
    about = "Packet-level MANET simulator with black-hole adversaries and watchdog/selective-watchdog intrusion detection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write trace.txt, metrics.csv and summary.txt.
    Run {
        /// Scenario config file (TOML, schema v1).
        #[arg(long, conflicts_with = "preset")]
        config: Option<PathBuf>,
        /// Shipped preset name (see `validate --list-presets`).
        #[arg(long)]
        preset: Option<String>,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Sweep (n, l, seed, scheme) cells and emit one CSV.
    Sweep {
        /// Node counts, comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = vec![12u32, 24, 36])]
        n: Vec<u32>,
        /// Cluster sizes, comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = vec![3u64, 4, 6])]
        l: Vec<u64>,
        /// Number of seeds (runs seeds 1..=N per cell).
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        /// Schemes, comma separated (watchdog, selective, none).
        #[arg(long, value_delimiter = ',', default_values_t = vec!["watchdog".to_string(), "selective".to_string()])]
        schemes: Vec<String>,
        /// CSV output path.
        #[arg(long, default_value = "sweep.csv")]
        out: PathBuf,
        /// Print the closed-form cost tables instead of simulating.
        #[arg(long)]
        analytic: bool,
    },
    /// Print the closed-form promiscuous-listening cost tables.
    Analytic {
        /// Also explain the algebraic collapse of the published formula.
        #[arg(long)]
        explain: bool,
    },
    /// Check a scenario config; prints one diagnostic per violated rule.
    Validate {
        #[arg(long, conflicts_with = "preset")]
        config: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
        /// List shipped preset names and exit.
        #[arg(long)]
        list_presets: bool,
    },
}

fn load_spec(config: Option<&Path>, preset_name: Option<&str>) -> Result<ScenarioSpec, String> {
    match (config, preset_name) {
        (Some(path), None) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            ScenarioSpec::from_toml(&text).map_err(|e| e.to_string())
        }
        (None, Some(name)) => {
            preset(name).ok_or_else(|| format!("unknown preset '{name}' (known: {PRESET_NAMES:?})"))
        }
        _ => Err("give exactly one of --config or --preset".to_string()),
    }
}

fn parse_scheme(name: &str) -> Result<IdsMode, String> {
    match name {
        "none" => Ok(IdsMode::None),
        "watchdog" => Ok(IdsMode::Watchdog),
        "selective" => Ok(IdsMode::Selective),
        other => Err(format!("unknown scheme '{other}'")),
    }
}

fn cmd_run(
    config: Option<&Path>,
    preset_name: Option<&str>,
    out_dir: &Path,
    seed: Option<u64>,
) -> Result<(), String> {
    let mut spec = load_spec(config, preset_name)?;
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    let diagnostics = spec.validate();
    if !diagnostics.is_empty() {
        for d in &diagnostics {
            eprintln!("{d}");
        }
        return Err(format!("{} validation diagnostics", diagnostics.len()));
    }
    let output = run_scenario(&spec).map_err(|e| e.to_string())?;
    output.write_to_dir(out_dir).map_err(|e| e.to_string())?;
    print!("{}", output.summary_text);
    println!("outputs: {}", out_dir.display());
    Ok(())
}

fn cmd_sweep(
    n: &[u32],
    l: &[u64],
    seeds: u64,
    schemes: &[String],
    out: &Path,
    analytic: bool,
) -> Result<(), String> {
    if analytic {
        print!("{}", render_analytic_table(false));
        return Ok(());
    }
    let schemes = schemes
        .iter()
        .map(|s| parse_scheme(s))
        .collect::<Result<Vec<_>, _>>()?;
    let params = SweepParams {
        n_values: n.to_vec(),
        l_values: l.to_vec(),
        seeds: (1..=seeds).collect(),
        schemes,
    };
    let result = sweep(&params).map_err(|e| e.to_string())?;
    for failure in &result.failures {
        eprintln!("cell failed: {failure}");
    }
    std::fs::write(out, &result.csv).map_err(|e| e.to_string())?;
    println!("wrote {} rows to {}", result.rows.len(), out.display());
    Ok(())
}

fn cmd_validate(
    config: Option<&Path>,
    preset_name: Option<&str>,
    list_presets: bool,
) -> Result<(), String> {
    if list_presets {
        for name in PRESET_NAMES {
            println!("{name}");
        }
        return Ok(());
    }
    let spec = load_spec(config, preset_name)?;
    let diagnostics = spec.validate();
    for d in &diagnostics {
        println!("{d}");
    }
    if diagnostics.is_empty() {
        Ok(())
    } else {
        Err(format!("{} diagnostics", diagnostics.len()))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run {
            config,
            preset,
            out,
            seed,
        } => cmd_run(config.as_deref(), preset.as_deref(), out, *seed),
        Command::Sweep {
            n,
            l,
            seeds,
            schemes,
            out,
            analytic,
        } => cmd_sweep(n, l, *seeds, schemes, out, *analytic),
        Command::Analytic { explain } => {
            print!("{}", render_analytic_table(*explain));
            Ok(())
        }
        Command::Validate {
            config,
            preset,
            list_presets,
        } => cmd_validate(config.as_deref(), preset.as_deref(), *list_presets),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}
