use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use spalps_core::meanfield::EquationSystem;
use spalps_core::states::enumerate_states;
use spalps_core::{
    build_init_matrix, build_stt, collapse_ticks, derive_equations, ensemble, evaluate_equations, parse,
    validate, Rational, RunConfig, StateSpace, ValidatedModel,
};

mod corpus;

const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (schema 1)");

#[derive(Parser)]
#[command(name = "spalps", version = VERSION, about = "Mean-field compiler and simulator for S-PALPS models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ModelArgs {
    /// Model source file.
    model: PathBuf,
    /// Override a declared parameter, e.g. `--param p=0.5`.
    #[arg(long = "param", value_name = "NAME=VALUE")]
    params: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Emit {
    Eqs,
    Stt,
    Json,
    Init,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a model and report its size.
    Check(ModelArgs),
    /// List the reachable individual states.
    States(ModelArgs),
    /// Emit the transition table, equations, or initial matrix.
    Compile {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_enum)]
        emit: Emit,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate the mean-field trajectory.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 10)]
        steps: usize,
        /// Keep only frames that follow a tick.
        #[arg(long)]
        collapse_ticks: bool,
        #[arg(long, default_value_t = 1)]
        scale: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the stochastic ensemble.
    Mc {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        replicas: usize,
        #[arg(long, default_value_t = 10)]
        steps: usize,
        #[arg(long, default_value_t = 1)]
        scale: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare a mean-field trajectory with an ensemble.
    Compare {
        #[arg(long)]
        mf: PathBuf,
        #[arg(long)]
        mc: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check every corpus model against its goldens.
    Corpus {
        #[arg(long, default_value = "corpus")]
        dir: PathBuf,
        /// Rewrite the goldens from the current output.
        #[arg(long)]
        bless: bool,
    },
}

/// Failure carrying its exit code.
pub(crate) enum Failure {
    /// Invalid model or failed check: exit 1.
    Invalid(String),
    /// Bad invocation or I/O: exit 2.
    Usage(String),
}

type Result<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(msg)) => {
            if !msg.is_empty() {
                eprintln!("{msg}");
            }
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

pub(crate) fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))
}

/// Writes via a temporary file in the target directory, then renames.
pub(crate) fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let fail = |e: &dyn std::fmt::Display| Failure::Usage(format!("cannot write {}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| fail(&e))?;
    tmp.write_all(contents).map_err(|e| fail(&e))?;
    tmp.persist(path).map_err(|e| fail(&e.error))?;
    Ok(())
}

fn emit(out: Option<&Path>, contents: &[u8]) -> Result<()> {
    match out {
        Some(p) => write_atomic(p, contents),
        None => std::io::stdout()
            .write_all(contents)
            .map_err(|e| Failure::Usage(format!("cannot write to stdout: {e}"))),
    }
}

pub(crate) fn load_source(src: &str, file: &str) -> Result<ValidatedModel> {
    let spec = parse(src).map_err(|d| Failure::Invalid(d.render(file)))?;
    let model = validate(&spec).map_err(|ds| {
        Failure::Invalid(ds.iter().map(|d| d.render(file)).collect::<Vec<_>>().join("\n"))
    })?;
    for w in model.warnings() {
        eprintln!("{}", w.render(file));
    }
    Ok(model)
}

fn parse_override(s: &str) -> Result<(String, Rational)> {
    let (name, value) = s
        .split_once('=')
        .ok_or_else(|| Failure::Usage(format!("expected NAME=VALUE in `--param {s}`")))?;
    let value: Rational = value
        .trim()
        .parse()
        .map_err(|_| Failure::Usage(format!("`{value}` is not a number")))?;
    Ok((name.trim().to_string(), value))
}

fn load(args: &ModelArgs) -> Result<ValidatedModel> {
    let file = args.model.display().to_string();
    let model = load_source(&read(&args.model)?, &file)?;
    if args.params.is_empty() {
        return Ok(model);
    }
    let overrides = args.params.iter().map(|p| parse_override(p)).collect::<Result<Vec<_>>>()?;
    model.with_params(&overrides).map_err(|e| match e {
        spalps_core::dsl::OverrideError::UnknownParameter(p) => {
            Failure::Usage(format!("`--param {p}` does not name a declared parameter"))
        }
        spalps_core::dsl::OverrideError::Invalid(ds) => {
            Failure::Invalid(ds.iter().map(|d| d.render(&file)).collect::<Vec<_>>().join("\n"))
        }
    })
}

pub(crate) fn states_of(model: &ValidatedModel) -> Result<StateSpace> {
    enumerate_states(model).map_err(|e| Failure::Invalid(format!("error: {e}")))
}

pub(crate) fn equations_of(model: &ValidatedModel) -> Result<EquationSystem> {
    let space = states_of(model)?;
    let table = build_stt(model, &space);
    derive_equations(&table, &build_init_matrix(model, &space)).map_err(|e| Failure::Invalid(e.to_string()))
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Check(args) => {
            let model = load(&args)?;
            let space = states_of(&model)?;
            println!("valid: {} states, {} locations", space.len(), model.habitat().size());
            Ok(())
        }
        Command::States(args) => {
            let space = states_of(&load(&args)?)?;
            print!("{}", space.listing());
            Ok(())
        }
        Command::Compile { model, emit: what, out } => {
            let model = load(&model)?;
            let space = states_of(&model)?;
            let table = build_stt(&model, &space);
            for w in &table.warnings {
                eprintln!("warning: {w}");
            }
            let init = build_init_matrix(&model, &space);
            let text = match what {
                Emit::Stt => table.render(),
                Emit::Init => format!("{}\n", init.location_major()),
                Emit::Eqs | Emit::Json => {
                    let eqs = derive_equations(&table, &init).map_err(|e| Failure::Invalid(e.to_string()))?;
                    if matches!(what, Emit::Eqs) {
                        eqs.render()
                    } else {
                        eqs.to_json() + "\n"
                    }
                }
            };
            emit(out.as_deref(), text.as_bytes())
        }
        Command::Simulate {
            model,
            steps,
            collapse_ticks: collapse,
            scale,
            out,
        } => {
            // A `.json` input is a previously exported equation system.
            let mut eqs = if model.model.extension().is_some_and(|e| e == "json") {
                EquationSystem::from_json(&read(&model.model)?).map_err(|e| Failure::Usage(e.to_string()))?
            } else {
                equations_of(&load(&model)?)?
            };
            for v in &mut eqs.init {
                *v = v
                    .checked_mul(scale)
                    .ok_or_else(|| Failure::Usage("scaled population overflows".into()))?;
            }
            let mut traj = evaluate_equations(&eqs, steps);
            if traj.stalled {
                eprintln!("warning: evaluation stalled at step {}", traj.frames.len() - 1);
            }
            if collapse {
                traj = collapse_ticks(&traj);
            }
            match out {
                Some(path) => {
                    let mut buf = Vec::new();
                    traj.write_csv(&mut buf).map_err(|e| Failure::Usage(e.to_string()))?;
                    write_atomic(&path, &buf)
                }
                None => {
                    println!("step  phase    total");
                    for f in &traj.frames {
                        println!("{:<5} {:<8} {:.6}", f.step, f.phase.to_string(), f.total());
                    }
                    Ok(())
                }
            }
        }
        Command::Mc {
            model,
            seed,
            replicas,
            steps,
            scale,
            out,
        } => {
            let model = load(&model)?;
            let space = states_of(&model)?;
            let config = RunConfig {
                seed,
                steps,
                replicas,
                scale,
            };
            let stats = ensemble(&model, &space, &config).map_err(|e| Failure::Usage(e.to_string()))?;
            match out {
                Some(path) => {
                    let mut buf = Vec::new();
                    stats.write_csv(&mut buf).map_err(|e| Failure::Usage(e.to_string()))?;
                    write_atomic(&path, &buf)
                }
                None => {
                    println!("step  phase    replicas  mean total");
                    for f in &stats.frames {
                        let phase = f.phase.map_or("Mixed".to_string(), |p| p.to_string());
                        println!("{:<5} {:<8} {:<9} {:.6}", f.step, phase, f.replicas, f.mean.iter().sum::<f64>());
                    }
                    Ok(())
                }
            }
        }
        Command::Compare { mf, mc, out } => {
            let traj = spalps_core::Trajectory::read_csv(read(&mf)?.as_bytes())
                .map_err(|e| Failure::Usage(format!("{}: {e}", mf.display())))?;
            let stats = spalps_core::EnsembleStats::read_csv(read(&mc)?.as_bytes())
                .map_err(|e| Failure::Usage(format!("{}: {e}", mc.display())))?;
            let report = spalps_core::compare(&traj, &stats).map_err(Failure::Usage)?;
            emit(out.as_deref(), report.render().as_bytes())
        }
        Command::Corpus { dir, bless } => corpus::run(&dir, bless),
    }
}
