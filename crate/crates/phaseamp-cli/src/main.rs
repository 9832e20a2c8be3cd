use anyhow::Context;
use clap::{Parser, Subcommand};
use phaseamp_cli::config::Format;
use phaseamp_cli::{run_experiment, validate_config, ConfigErrors, ExperimentSpec, Kind};
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "phaseamp", version, about = "Phase retrieval AMP and state-evolution experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML experiment spec; the built-in spec of the subcommand is used when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file ("-" for stdout); overrides output.path.
    #[arg(long, global = true)]
    out: Option<String>,
    /// Overrides output.format.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, env = "PHASEAMP_THREADS")]
    threads: Option<usize>,
    /// Master seed of seeded experiments; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print the effective spec as TOML and exit.
    #[arg(long, global = true)]
    print_config: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// One SE trajectory with region labels.
    SeTrajectory,
    /// SE success mask over an (alpha0, sigma0^2) grid.
    SeBasin,
    /// Bisect the SE success threshold in delta.
    SePhaseScan,
    /// Finite-n AMP runs next to the SE prediction.
    AmpVsSe,
    /// Numeric high-SNR noise sensitivity against the closed form.
    NoiseSensitivity,
    /// Spectral initialization followed by decoupled and blind AMP.
    SpectralDemo,
    /// F1^{-1}, F2 and L along an alpha grid.
    Nullclines,
}

impl From<Command> for Kind {
    fn from(c: Command) -> Kind {
        match c {
            Command::SeTrajectory => Kind::SeTrajectory,
            Command::SeBasin => Kind::SeBasin,
            Command::SePhaseScan => Kind::SePhaseScan,
            Command::AmpVsSe => Kind::AmpVsSe,
            Command::NoiseSensitivity => Kind::NoiseSensitivity,
            Command::SpectralDemo => Kind::SpectralDemo,
            Command::Nullclines => Kind::Nullclines,
        }
    }
}

enum Failure {
    Invalid(ConfigErrors),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Failure {
        match e.downcast::<ConfigErrors>() {
            Ok(c) => Failure::Invalid(c),
            Err(e) => Failure::Runtime(e),
        }
    }
}

fn load(cli: &Cli) -> Result<ExperimentSpec, Failure> {
    let kind = Kind::from(cli.command);
    let mut spec = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            let spec = validate_config(&text).map_err(Failure::Invalid)?;
            if spec.kind != kind {
                return Err(Failure::Invalid(ConfigErrors(vec![format!(
                    "kind: config is '{}' but the subcommand is '{kind}'",
                    spec.kind
                )])));
            }
            spec
        }
        None => ExperimentSpec::default_for(kind),
    };
    if let Some(seed) = cli.seed {
        spec.override_seed(seed);
    }
    if let Some(f) = cli.format {
        spec.output.format = f;
    }
    if let Some(out) = &cli.out {
        spec.output.path = out.clone();
    }
    spec.validate().map_err(Failure::Invalid)?;
    Ok(spec)
}

fn run(cli: &Cli) -> Result<bool, Failure> {
    let spec = load(cli)?;
    if cli.print_config {
        print!("{}", spec.to_toml());
        return Ok(true);
    }
    let outcome = run_experiment(&spec, cli.threads)?;
    let to_stdout = spec.output.path == "-";
    if to_stdout {
        let stdout = io::stdout();
        outcome.table.write(spec.output.format, stdout.lock()).context("writing stdout")?;
        eprintln!("{}", outcome.summary.line());
    } else {
        let file = File::create(&spec.output.path)
            .with_context(|| format!("creating {}", spec.output.path))?;
        let mut w = BufWriter::new(file);
        outcome.table.write(spec.output.format, &mut w).context("writing output")?;
        w.flush().context("writing output")?;
        println!("{}", outcome.summary.line());
    }
    Ok(outcome.summary.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Invalid(e)) => {
            eprint!("{e}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
