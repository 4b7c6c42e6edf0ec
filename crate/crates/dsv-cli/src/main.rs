//! `dsv` — select augmentation hyperparameters without labels, evaluate
//! published AUC tables, certify the bounds, and generate synthetic runs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use dsv::harness::report::{render_text, Envelope, Report, SCHEMA_VERSION};
use dsv::harness::{evaluate_tables, run_selection, SelectionOptions};
use dsv::io::{load_fixture_dir, load_run, save_run, EmbeddingFormat};
use dsv::synth::{generate_world, SynthConfig};
use dsv::theory::verify;
use dsv::{DsvError, Method, SepClamp};

const EXIT_VERIFY_FAILED: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(name = "dsv", version, about = "Unsupervised augmentation selection for self-supervised anomaly detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rank the candidates of a run directory with every selector.
    Select {
        #[arg(long)]
        run: PathBuf,
        /// Comma-separated subset of: avg,rand,base,mmd,std,mc,sel,hits,dsv.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<String>>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Clamp on the separability term: `max` (max(l_sep, 1/2)) or `min`.
        #[arg(long, default_value = "max")]
        sep_clamp: String,
        /// Gaussian mixture components for likelihood scoring.
        #[arg(long, default_value_t = 1)]
        components: usize,
        /// Write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mean AUC, average ranks and signed-rank tests over fixture tables.
    Evaluate {
        #[arg(long)]
        fixtures: PathBuf,
        #[arg(long, default_value = "dsv")]
        reference: String,
        /// Also test each table on its own, not just the pooled pairs.
        #[arg(long)]
        per_augmentation: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the bounds on random instances; exits 1 if any certified family fails.
    Verify {
        #[arg(long, default_value_t = 1000)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a labeled synthetic run directory.
    Synth {
        /// TOML file with any subset of the generator settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Write embeddings in the raw little-endian container instead of CSV.
        #[arg(long)]
        binary: bool,
    },
    /// Render a saved JSON report.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Text,
}

enum Failure {
    Usage(String),
    Core(DsvError),
    Verify,
}

impl From<DsvError> for Failure {
    fn from(e: DsvError) -> Self {
        Failure::Core(e)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match configure_threads().and_then(|()| run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Verify) => ExitCode::from(EXIT_VERIFY_FAILED),
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { EXIT_VALIDATION } else { EXIT_NUMERICAL })
        }
    }
}

/// `DSV_THREADS` caps the worker pool; unset or 0 lets rayon decide.
fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("DSV_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| Failure::Usage(format!("DSV_THREADS must be a non-negative integer, got '{raw}'")))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(format!("cannot size thread pool: {e}")))?;
    }
    Ok(())
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Select {
            run,
            methods,
            seed,
            sep_clamp,
            components,
            out,
        } => {
            let methods = match methods {
                None => Method::ALL.to_vec(),
                Some(names) => names
                    .iter()
                    .map(|n| n.trim().parse::<Method>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| Failure::Usage(e.to_string()))?,
            };
            let sep_clamp: SepClamp = sep_clamp.parse().map_err(|e: DsvError| Failure::Usage(e.to_string()))?;
            if components == 0 {
                return Err(Failure::Usage("--components must be at least 1".into()));
            }
            let loaded = load_run(&run)?;
            let opts = SelectionOptions {
                seed,
                sep_clamp,
                components,
            };
            let report = Report::Selection(run_selection(&loaded, &methods, &opts)?);
            emit(report, out.as_deref())
        }
        Command::Evaluate {
            fixtures,
            reference,
            per_augmentation,
            out,
        } => {
            let tables = load_fixture_dir(&fixtures)?;
            let report = Report::Evaluation(evaluate_tables(&tables, &reference, per_augmentation)?);
            emit(report, out.as_deref())
        }
        Command::Verify { instances, seed, out } => {
            let report = verify(instances, seed);
            let pass = report.all_certified_pass;
            emit(Report::Verify(report), out.as_deref())?;
            if pass {
                Ok(())
            } else {
                Err(Failure::Verify)
            }
        }
        Command::Synth {
            config,
            out,
            seed,
            binary,
        } => {
            let mut cfg = match config {
                Some(path) => read_config(&path)?,
                None => SynthConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let world = generate_world(&cfg)?;
            let format = if binary { EmbeddingFormat::Binary } else { EmbeddingFormat::Csv };
            save_run(&world.run, &out, format)?;
            println!(
                "wrote {} ({} candidates, {} train, {} test); sigma {:.6}, epsilon {:.6}",
                out.display(),
                world.run.candidates.len(),
                world.run.trn.len(),
                world.run.test.len(),
                world.assumption.sigma,
                world.assumption.epsilon
            );
            Ok(())
        }
        Command::Report { input, format } => {
            let text = fs::read_to_string(&input).map_err(|source| DsvError::Io {
                path: input.clone(),
                source,
            })?;
            let env: Envelope = serde_json::from_str(&text).map_err(|e| DsvError::Validation {
                path: input.clone(),
                message: format!("not a report: {e}"),
            })?;
            if env.schema_version != SCHEMA_VERSION {
                return Err(DsvError::Validation {
                    path: input,
                    message: format!(
                        "schema version {} is not supported (expected {SCHEMA_VERSION})",
                        env.schema_version
                    ),
                }
                .into());
            }
            match format {
                Format::Json => print!("{}", env.to_json()),
                Format::Text => print!("{}", render_text(&env.report)),
            }
            Ok(())
        }
    }
}

fn read_config(path: &Path) -> Result<SynthConfig, DsvError> {
    let text = fs::read_to_string(path).map_err(|source| DsvError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    toml::from_str(&text).map_err(|e| DsvError::InvalidConfig(format!("{}: {e}", path.display())))
}

/// Prints the text rendering and, if asked, writes the JSON envelope.
fn emit(report: Report, out: Option<&Path>) -> Result<(), Failure> {
    print!("{}", render_text(&report));
    if let Some(path) = out {
        let env = Envelope::new(report);
        fs::write(path, env.to_json()).map_err(|source| DsvError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    }
    Ok(())
}
