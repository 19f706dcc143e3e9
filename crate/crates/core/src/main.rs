use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lattice_keygen::config::{
    source_from_path, ChainSpec, CommandKind, ExperimentConfig, OutputFormat,
};
use lattice_keygen::harness::{error_record, run, trials_table, write_output};
use lattice_keygen::{Error, Result};

#[derive(Parser, Debug)]
#[command(
    name = "lattice-keygen",
    version,
    about = "Lattice hashing and nested-lattice secret key generation experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Flatness factor of a lattice over a list of sigmas.
    Flatness(Common),
    /// Extractor uniformity and mutual-information report.
    Extract(Common),
    /// Monte-Carlo key agreement trials.
    Keygen {
        #[command(flatten)]
        common: Common,
        /// Chain as FAMILY[:N]:BASE_SCALE:SCALE2:SCALE3.
        #[arg(long)]
        chain: Option<String>,
        /// JSON file holding the source block.
        #[arg(long)]
        source_config: Option<PathBuf>,
        #[arg(long)]
        trials: Option<u64>,
        /// Writes one CSV row per trial to this path.
        #[arg(long)]
        dump_trials: Option<PathBuf>,
    },
    /// Closed-form rate report and V1 sweep.
    Rates(Common),
    /// Chain calibration for a source.
    Calibrate(Common),
}

fn execute(cli: Cli) -> Result<()> {
    let (kind, common, chain, source_config, trials, dump) = match cli.command {
        Command::Flatness(c) => (CommandKind::Flatness, c, None, None, None, None),
        Command::Extract(c) => (CommandKind::Extract, c, None, None, None, None),
        Command::Rates(c) => (CommandKind::Rates, c, None, None, None, None),
        Command::Calibrate(c) => (CommandKind::Calibrate, c, None, None, None, None),
        Command::Keygen {
            common,
            chain,
            source_config,
            trials,
            dump_trials,
        } => (
            CommandKind::Keygen,
            common,
            chain,
            source_config,
            trials,
            dump_trials,
        ),
    };
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::from_path(p)?,
        None => ExperimentConfig::empty(),
    };
    if let Some(c) = cfg.command {
        if c != kind {
            return Err(Error::Config(format!(
                "config is for command {c:?}, not {kind:?}"
            )));
        }
    }
    if let Some(s) = common.seed {
        cfg.seed = Some(s);
    }
    if let Some(t) = common.threads {
        cfg.threads = Some(t);
    }
    if let Some(c) = chain {
        cfg.chain = Some(ChainSpec::parse(&c)?);
    }
    if let Some(p) = source_config {
        cfg.source = Some(source_from_path(&p)?);
    }
    if let Some(t) = trials {
        cfg.trials = Some(t);
    }
    let output = cfg.output.clone().unwrap_or_default();
    let format = common.format.unwrap_or(output.format);
    let out_path = common.out.or(output.path);

    let threads = cfg.threads.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {threads} worker threads: {e}")))?;
    let result = pool.install(|| run(kind, &cfg))?;

    write_output(&result.render(format)?, out_path.as_deref())?;
    if let (Some(path), Some(records)) = (dump, &result.trials) {
        trials_table(records).write_csv(std::fs::File::create(path)?)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_record(&e));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
