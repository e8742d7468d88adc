use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand};

use rydberg_entangle::commands::{
    cmd_dephasing, cmd_entangle_fidelity, cmd_entangle_sweep, cmd_g2, cmd_rabi, cmd_repeater, parse_flags,
    FieldChoice, RabiMode, SourceChoice, SweepChoice,
};
use rydberg_entangle::config::{RunConfig, PAPER_DEFAULT_TOML};
use rydberg_entangle::open_system::SimulationFlags;
use rydberg_entangle::output::OutputSet;
use rydberg_entangle::Error;

const OUTPUT_ENV: &str = "RYDENT_OUTPUT_DIR";

#[derive(Parser)]
#[command(name = "rydent", version, about = "Rydberg-ensemble entanglement simulations")]
struct Cli {
    /// TOML run configuration; the packaged default is used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides RYDENT_OUTPUT_DIR and the config).
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Seed override for all Monte Carlo stages.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rabi oscillation traces.
    Rabi(RabiArgs),
    /// Raman-transfer dephasing Monte Carlo.
    Dephasing(DephasingArgs),
    /// Polarization correlations and entanglement fidelity.
    Entangle(EntangleArgs),
    /// Hanbury Brown-Twiss g2(0) of a read-out field.
    G2(G2Args),
    /// Remote-node heralding statistics.
    Repeater(RepeaterArgs),
    /// Print the packaged default configuration.
    DefaultConfig,
}

#[derive(Args)]
#[command(group(ArgGroup::new("mode").required(true).args(["collective", "single", "pair"])))]
struct RabiArgs {
    #[arg(long)]
    collective: bool,
    #[arg(long)]
    single: bool,
    #[arg(long)]
    pair: bool,
}

#[derive(Args)]
struct DephasingArgs {
    /// Comma-separated subset of motion,inhomo,scatter (or all / none);
    /// repeat for several traces. Default: none, motion and all.
    #[arg(long = "flags")]
    flags: Vec<String>,
}

#[derive(Args)]
#[command(group(ArgGroup::new("mode").required(true).args(["phi_sweep", "fidelity"])))]
struct EntangleArgs {
    #[arg(long)]
    phi_sweep: bool,
    #[arg(long)]
    fidelity: bool,
}

#[derive(Args)]
struct G2Args {
    #[arg(long, value_parser = ["single", "coherent", "thermal", "dlcz"])]
    field: String,
}

#[derive(Args)]
struct RepeaterArgs {
    #[arg(long, value_parser = ["semi", "dlcz"])]
    source: String,
    #[arg(long, value_parser = ["eta", "p"])]
    sweep: Option<String>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } | Error::MissingSeed => 2,
        Error::NonConvergence(_) => 3,
        _ => 1,
    }
}

fn load(cli: &Cli) -> Result<(RunConfig, String), Error> {
    let raw = match &cli.config {
        Some(p) => std::fs::read_to_string(p)
            .map_err(|e| Error::Config { path: p.display().to_string(), message: e.to_string() })?,
        None => PAPER_DEFAULT_TOML.to_string(),
    };
    let mut cfg = RunConfig::from_toml_str(&raw)?;
    if let Some(s) = cli.seed {
        cfg.simulation.seed = Some(s);
    }
    Ok((cfg, raw))
}

fn run(cli: &Cli) -> Result<(), Error> {
    if let Command::DefaultConfig = cli.command {
        print!("{PAPER_DEFAULT_TOML}");
        return Ok(());
    }
    let (cfg, raw) = load(cli)?;
    let mut out = OutputSet::new();
    let label = match &cli.command {
        Command::Rabi(a) => {
            let mode = if a.collective {
                RabiMode::Collective
            } else if a.single {
                RabiMode::Single
            } else {
                RabiMode::Pair
            };
            cmd_rabi(&cfg, mode, &mut out)?;
            format!("rabi --{}", serde_json::to_value(mode)?.as_str().unwrap_or(""))
        }
        Command::Dephasing(a) => {
            let sets: Vec<SimulationFlags> = if a.flags.is_empty() {
                vec![SimulationFlags::default(), SimulationFlags::motion_only(), SimulationFlags::all()]
            } else {
                a.flags.iter().map(|f| parse_flags(f)).collect::<Result<_, _>>()?
            };
            cmd_dephasing(&cfg, &sets, &mut out)?;
            format!("dephasing --flags {}", a.flags.join(" --flags "))
        }
        Command::Entangle(a) => {
            if a.phi_sweep {
                cmd_entangle_sweep(&cfg, &mut out)?;
                "entangle --phi-sweep".to_string()
            } else {
                cmd_entangle_fidelity(&cfg, &mut out)?;
                "entangle --fidelity".to_string()
            }
        }
        Command::G2(a) => {
            cmd_g2(&cfg, a.field.parse::<FieldChoice>()?, &mut out)?;
            format!("g2 --field {}", a.field)
        }
        Command::Repeater(a) => {
            let sweep = a.sweep.as_deref().map(str::parse::<SweepChoice>).transpose()?;
            cmd_repeater(&cfg, a.source.parse::<SourceChoice>()?, sweep, &mut out)?;
            match &a.sweep {
                Some(s) => format!("repeater --source {} --sweep {s}", a.source),
                None => format!("repeater --source {}", a.source),
            }
        }
        Command::DefaultConfig => unreachable!(),
    };
    let dir = cli
        .output
        .clone()
        .or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| cfg.output.directory.clone());
    let manifest = out.manifest(label.trim_end(), &raw, cfg.simulation.seed);
    for p in out.finish(&dir, &manifest)? {
        println!("{}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rydent: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
