//! `vadose`: run scenarios, convergence studies and inspect shipped presets.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use vadose_rbf::scenario::{
    convergence_study, load_config, output_dir, preset_names, preset_source, run_scenario, ConfigError, RunError,
};
use vadose_rbf::stepper::Scheme;

#[derive(Parser)]
#[command(name = "vadose", version, about = "Richards equation with root water uptake on local RBF stencils")]
struct Cli {
    /// Worker threads for stencil setup and assembly (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Only print errors.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write profiles.csv, diagnostics.csv and meta.json.
    Run {
        config: PathBuf,
        /// Overrides `outputs.directory`.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Time-step convergence study against a refined BDF2 reference.
    Study {
        config: PathBuf,
        /// Time steps in hours.
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        dts: Vec<f64>,
        #[arg(long, value_delimiter = ',', num_args = 1.., default_values = ["bdf1", "bdf2"])]
        schemes: Vec<SchemeArg>,
        /// Reference step is the smallest dt divided by this.
        #[arg(long, default_value_t = 16)]
        reference_factor: usize,
        /// Writes study.csv here; the table always goes to stdout.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Shipped scenario files.
    Presets {
        #[command(subcommand)]
        action: PresetAction,
    },
}

#[derive(Subcommand)]
enum PresetAction {
    List,
    /// Print a preset's JSON to stdout.
    Emit {
        name: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Bdf1,
    Bdf2,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Bdf1 => Scheme::Bdf1,
            SchemeArg::Bdf2 => Scheme::Bdf2,
        }
    }
}

const EXIT_VALIDATION: u8 = 2;
const EXIT_NON_CONVERGENCE: u8 = 3;

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(r) = cause.downcast_ref::<RunError>() {
            if r.is_validation() {
                return EXIT_VALIDATION;
            }
            if r.is_non_convergence() {
                return EXIT_NON_CONVERGENCE;
            }
        }
        if let Some(ConfigError::Parse { .. } | ConfigError::Invalid { .. }) = cause.downcast_ref::<ConfigError>() {
            return EXIT_VALIDATION;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot set up {n} threads: {e}");
            return ExitCode::FAILURE;
        }
    }
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn dispatch(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Run { config, out_dir } => run(config, out_dir.as_deref(), cli.quiet),
        Command::Study { config, dts, schemes, reference_factor, out_dir } => {
            let schemes: Vec<Scheme> = schemes.iter().map(|&s| s.into()).collect();
            study(config, dts, &schemes, *reference_factor, out_dir.as_deref(), cli.quiet)
        }
        Command::Presets { action: PresetAction::List } => {
            for name in preset_names() {
                println!("{name}");
            }
            Ok(())
        }
        Command::Presets { action: PresetAction::Emit { name } } => {
            let src = preset_source(name).ok_or_else(|| {
                anyhow::Error::new(ConfigError::Invalid {
                    field: "preset".into(),
                    message: format!("unknown preset `{name}`; see `vadose presets list`"),
                })
            })?;
            print!("{src}");
            Ok(())
        }
    }
}

fn run(config: &Path, out_dir: Option<&Path>, quiet: bool) -> anyhow::Result<()> {
    let cfg = load_config(config)?;
    let dir = output_dir(&cfg, out_dir);
    let r = run_scenario(&cfg, dir.as_deref()).with_context(|| format!("running {}", cfg.name))?;
    if !quiet {
        eprintln!(
            "{}: {} steps to t = {} h, {} Picard iterations, max balance residual {:.3e}, {:.2} s",
            r.name, r.steps_done, r.t_reached, r.picard_total, r.max_balance_residual, r.wall_seconds
        );
        match dir {
            Some(d) => eprintln!("outputs in {}", d.display()),
            None => eprintln!("no output directory given; nothing written"),
        }
    }
    Ok(())
}

fn study(
    config: &Path,
    dts: &[f64],
    schemes: &[Scheme],
    reference_factor: usize,
    out_dir: Option<&Path>,
    quiet: bool,
) -> anyhow::Result<()> {
    let cfg = load_config(config)?;
    let report = convergence_study(&cfg, dts, schemes, reference_factor)?;
    let csv = report.to_csv();
    print!("{csv}");
    if let Some(d) = out_dir {
        std::fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
        let path = d.join("study.csv");
        std::fs::write(&path, &csv).with_context(|| format!("writing {}", path.display()))?;
    }
    if !quiet {
        for (s, o) in &report.orders {
            eprintln!("{s:?}: fitted order {o:.3} (reference dt {} h)", report.reference_dt);
        }
    }
    Ok(())
}
