//! `zaloha`: sweeps, equilibria, simulations and figure data for slotted
//! Aloha with and without ZigZag collision resolution.
//!
//! Exit status: 0 on success, 1 on a usage error, 2 when a validation check
//! fails and 3 when a numerical routine fails.

mod config;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use zigzag_aloha::experiments::{
    run_experiment, validate_all, Axis, BaselineQ, ChannelSelection, ExperimentSpec, FigureId,
    Mode, Normalization, OutputFormat, ValidationGrid,
};
use zigzag_aloha::{Error, Result};

use config::FileConfig;

const EXIT_USAGE: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "zaloha",
    version,
    about = "Slotted Aloha with ZigZag decoding: Markov analysis, game equilibria and simulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Team (cooperative) metrics at a common retransmission probability.
    Team(CommonArgs),
    /// Tagged-user metrics against M others.
    Game(CommonArgs),
    /// Tagged user's best response to the others' probability.
    BestResponse(CommonArgs),
    /// Symmetric equilibrium of the retransmission game.
    Equilibrium(CommonArgs),
    /// Team-optimal retransmission probability.
    Optimize(CommonArgs),
    /// Monte Carlo simulation with standard errors.
    Simulate(CommonArgs),
    /// Data for one of the reference figures (fig3 .. fig10).
    Figure {
        id: FigureId,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Invariant suite over a parameter grid.
    Validate {
        #[command(flatten)]
        common: CommonArgs,
        /// Leave out the literally transcribed ZigZag matrix.
        #[arg(long)]
        no_literal: bool,
    },
}

#[derive(Debug, Args, Default)]
struct CommonArgs {
    /// TOML file with default values for any of the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of users (number of others in game modes).
    #[arg(long)]
    m: Option<Axis>,
    /// Arrival probability, a value or start:stop:step.
    #[arg(long)]
    pa: Option<Axis>,
    /// Retransmission probability (of the others in game modes).
    #[arg(long)]
    qr: Option<Axis>,
    /// Retransmission probability of the tagged user.
    #[arg(long)]
    qr_tagged: Option<Axis>,
    /// classic, zigzag or both.
    #[arg(long)]
    channel: Option<ChannelSelection>,
    /// Report throughput per frame or per slot.
    #[arg(long, value_parser = ["frame", "slot"])]
    normalization: Option<String>,
    /// Baseline q in figures: own equilibrium/optimum or the ZigZag one.
    #[arg(long, value_parser = ["own", "shared"])]
    baseline_q: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Simulated frames.
    #[arg(long)]
    frames: Option<u64>,
    /// Worker threads for grid evaluation.
    #[arg(long)]
    workers: Option<usize>,
    /// Output file; a JSON sidecar is written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = ["csv", "json"])]
    format: Option<String>,
}

/// Command-line values merged over the config file.
struct Resolved {
    m: Option<Axis>,
    pa: Option<Axis>,
    qr: Option<Axis>,
    qr_tagged: Option<Axis>,
    channel: Option<ChannelSelection>,
    normalization: Option<Normalization>,
    baseline_q: Option<BaselineQ>,
    seed: Option<u64>,
    frames: Option<u64>,
    workers: Option<usize>,
    out: Option<PathBuf>,
    format: Option<OutputFormat>,
}

impl CommonArgs {
    fn resolve(self) -> Result<Resolved> {
        let file = match &self.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        let axis = |flag: Option<Axis>, key: &Option<config::AxisValue>| -> Result<Option<Axis>> {
            match (flag, key) {
                (Some(a), _) => Ok(Some(a)),
                (None, Some(v)) => v.to_axis().map(Some),
                (None, None) => Ok(None),
            }
        };
        let text = |flag: Option<String>, key: Option<String>| {
            flag.or(key).map(|s| s.to_ascii_lowercase())
        };
        Ok(Resolved {
            m: axis(self.m, &file.m)?,
            pa: axis(self.pa, &file.pa)?,
            qr: axis(self.qr, &file.qr)?,
            qr_tagged: axis(self.qr_tagged, &file.qr_tagged)?,
            channel: match (self.channel, file.channel) {
                (Some(c), _) => Some(c),
                (None, Some(s)) => Some(s.parse()?),
                (None, None) => None,
            },
            normalization: text(self.normalization, file.normalization)
                .map(|s| match s.as_str() {
                    "frame" => Ok(Normalization::Frame),
                    "slot" => Ok(Normalization::Slot),
                    _ => Err(Error::Usage(format!(
                        "normalization must be frame or slot, got '{s}'"
                    ))),
                })
                .transpose()?,
            baseline_q: text(self.baseline_q, file.baseline_q)
                .map(|s| match s.as_str() {
                    "own" => Ok(BaselineQ::Own),
                    "shared" => Ok(BaselineQ::Shared),
                    _ => Err(Error::Usage(format!(
                        "baseline-q must be own or shared, got '{s}'"
                    ))),
                })
                .transpose()?,
            seed: self.seed.or(file.seed),
            frames: self.frames.or(file.frames),
            workers: self.workers.or(file.workers),
            out: self.out.or(file.out),
            format: text(self.format, file.format)
                .map(|s| match s.as_str() {
                    "csv" => Ok(OutputFormat::Csv),
                    "json" => Ok(OutputFormat::Json),
                    _ => Err(Error::Usage(format!(
                        "format must be csv or json, got '{s}'"
                    ))),
                })
                .transpose()?,
        })
    }
}

fn build_spec(mode: Mode, r: Resolved) -> ExperimentSpec {
    let mut spec = ExperimentSpec::new(mode);
    if let Some(m) = r.m {
        spec.m = m;
    }
    if let Some(pa) = r.pa {
        spec.pa = pa;
    }
    spec.qr = r.qr;
    spec.qr_tagged = r.qr_tagged;
    spec.channel = r.channel.unwrap_or_default();
    spec.normalization = r.normalization.unwrap_or_default();
    spec.baseline_q = r.baseline_q.unwrap_or_default();
    spec.seed = r.seed.unwrap_or(spec.seed);
    spec.frames = r.frames.unwrap_or(spec.frames);
    spec.workers = r.workers;
    spec.format = r.format.unwrap_or_default();
    spec.out = r.out;
    spec
}

fn experiment(mode: Mode, args: CommonArgs) -> Result<u8> {
    let spec = build_spec(mode, args.resolve()?);
    let output = run_experiment(&spec)?;
    match &spec.out {
        Some(path) => {
            let sidecar = output.write(path, spec.format)?;
            eprintln!("wrote {} and {}", path.display(), sidecar.display());
        }
        None => {
            let body = match spec.format {
                OutputFormat::Csv => output.table.to_csv()?,
                OutputFormat::Json => output.table.to_json()? + "\n",
            };
            std::io::stdout().write_all(body.as_bytes())?;
        }
    }
    if output.sidecar.failed_cells > 0 {
        eprintln!(
            "{} cells could not be evaluated and are marked 'error'",
            output.sidecar.failed_cells
        );
        return Ok(EXIT_NUMERICAL);
    }
    Ok(0)
}

fn validate(args: CommonArgs, no_literal: bool) -> Result<u8> {
    let r = args.resolve()?;
    let mut grid = ValidationGrid::default();
    if let Some(m) = r.m {
        grid.ms = m
            .values()
            .into_iter()
            .map(|x| {
                if x >= 1.0 && x.fract() == 0.0 {
                    Ok(x as usize)
                } else {
                    Err(Error::Usage(format!(
                        "--m must be a positive integer, got {x}"
                    )))
                }
            })
            .collect::<Result<_>>()?;
    }
    if let Some(pa) = r.pa {
        grid.pas = pa.values();
    }
    if let Some(qr) = r.qr {
        grid.qrs = qr.values();
    }
    grid.sim_frames = r.frames.unwrap_or(grid.sim_frames);
    grid.seed = r.seed.unwrap_or(grid.seed);
    grid.include_literal = !no_literal;

    let run = || validate_all(&grid);
    let summary = match r.workers {
        Some(n) => rayon_pool(n)?.install(run)?,
        None => run()?,
    };
    println!("{summary}");
    if let Some(path) = r.out {
        let body = serde_json::to_string_pretty(&summary)?;
        std::fs::write(&path, body)?;
        eprintln!("wrote {}", path.display());
    }
    Ok(if summary.pass { 0 } else { EXIT_VALIDATION })
}

fn rayon_pool(n: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n.max(1))
        .build()
        .map_err(|e| Error::Usage(format!("cannot start {n} workers: {e}")))
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NotStochastic { .. } | Error::Mismatch(_) => EXIT_VALIDATION,
        Error::NoConvergence { .. } | Error::NoFixedPoint { .. } => EXIT_NUMERICAL,
        _ => EXIT_USAGE,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Team(a) => experiment(Mode::Team, a),
        Command::Game(a) => experiment(Mode::Game, a),
        Command::BestResponse(a) => experiment(Mode::BestResponse, a),
        Command::Equilibrium(a) => experiment(Mode::Equilibrium, a),
        Command::Optimize(a) => experiment(Mode::Optimize, a),
        Command::Simulate(a) => experiment(Mode::Simulate, a),
        Command::Figure { id, common } => experiment(Mode::Figure(id), common),
        Command::Validate { common, no_literal } => validate(common, no_literal),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(
            &path,
            "pa = 0.4\nqr = \"0.1:0.5:0.1\"\nchannel = \"classic\"\nformat = \"json\"\n",
        )
        .unwrap();
        let args = CommonArgs {
            config: Some(path),
            pa: Some(Axis::Scalar(0.2)),
            ..CommonArgs::default()
        };
        let spec = build_spec(Mode::Team, args.resolve().unwrap());
        assert_eq!(spec.pa, Axis::Scalar(0.2));
        assert!(spec.qr.unwrap().is_swept());
        assert_eq!(spec.channel, ChannelSelection::Classic);
        assert_eq!(spec.format, OutputFormat::Json);
    }

    #[test]
    fn error_kinds_map_to_exit_codes() {
        assert_eq!(exit_code(&Error::Usage("x".into())), EXIT_USAGE);
        assert_eq!(exit_code(&Error::Mismatch("x".into())), EXIT_VALIDATION);
        assert_eq!(
            exit_code(&Error::NoConvergence {
                iterations: 1,
                residual: 1.0
            }),
            EXIT_NUMERICAL
        );
    }
}
