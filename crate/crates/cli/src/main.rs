use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use eoplab_cli::{run, CliError, Command, Format, RunConfig, EXIT_INPUT};

/// Entanglement of purification and visible compression codes.
#[derive(Debug, Parser)]
#[command(name = "eoplab", version)]
struct Cli {
    #[command(subcommand)]
    command: Option<Cmd>,
    /// JSON run config, or a previous report to replay.
    #[arg(long, global = true, env = "EOPLAB_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long, global = true, env = "EOPLAB_STATE")]
    state: Option<PathBuf>,
    #[arg(long, global = true, env = "EOPLAB_ENSEMBLE")]
    ensemble: Option<PathBuf>,
    #[arg(long, global = true, env = "EOPLAB_PROTOCOL")]
    protocol: Option<PathBuf>,
    /// Schmidt rank of the shared maximally entangled state.
    #[arg(long = "L", global = true, env = "EOPLAB_L")]
    l: Option<usize>,
    /// Subsystem cut `A1,A2|B1` for `eop`.
    #[arg(long, global = true, env = "EOPLAB_CUT")]
    cut: Option<String>,
    /// Reference dimension for `hext` (default: state dimension).
    #[arg(long, global = true, env = "EOPLAB_REF_DIM")]
    ref_dim: Option<usize>,
    #[arg(long, global = true, env = "EOPLAB_RESTARTS")]
    restarts: Option<usize>,
    #[arg(long, global = true, env = "EOPLAB_MAX_ITER")]
    max_iter: Option<usize>,
    #[arg(long, global = true, env = "EOPLAB_SEED")]
    seed: Option<u64>,
    #[arg(long, global = true, env = "EOPLAB_ANCILLA_A2")]
    ancilla_a2: Option<usize>,
    #[arg(long, global = true, env = "EOPLAB_ANCILLA_B2")]
    ancilla_b2: Option<usize>,
    /// Report path (default: stdout).
    #[arg(long, global = true, env = "EOPLAB_OUT")]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, env = "EOPLAB_FORMAT")]
    format: Option<Format>,
    /// Directory for replay files of failing instances (default: next to the report).
    #[arg(long, global = true, env = "EOPLAB_REPLAY_DIR")]
    replay_dir: Option<PathBuf>,
    /// Run the reduced battery in `suite`.
    #[arg(long, global = true, env = "EOPLAB_QUICK")]
    quick: bool,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Cmd {
    /// Entanglement of purification of a state.
    Eop,
    /// Extension entropy of an ensemble.
    Hext,
    /// Build the visible code of a protocol.
    CodeBuild,
    /// Check the code error bound and its proof steps.
    LemmaVerify,
    /// Check the converse chain on the built code.
    ConverseCheck,
    /// Error of generating a state with a protocol.
    GenError,
    /// Randomized verification battery.
    Suite,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Eop => Command::Eop,
            Cmd::Hext => Command::Hext,
            Cmd::CodeBuild => Command::CodeBuild,
            Cmd::LemmaVerify => Command::LemmaVerify,
            Cmd::ConverseCheck => Command::ConverseCheck,
            Cmd::GenError => Command::GenError,
            Cmd::Suite => Command::Suite,
        }
    }
}

fn build_config(cli: Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match (&cli.config, cli.command) {
        (Some(p), cmd) => {
            let mut c = RunConfig::load(p)?;
            if let Some(cmd) = cmd {
                c.command = cmd.into();
            }
            c
        }
        (None, Some(cmd)) => RunConfig::new(cmd.into()),
        (None, None) => return Err(CliError::Usage("no command given; see --help".into())),
    };
    cfg.state = cli.state.or(cfg.state);
    cfg.ensemble = cli.ensemble.or(cfg.ensemble);
    cfg.protocol = cli.protocol.or(cfg.protocol);
    cfg.l = cli.l.or(cfg.l);
    cfg.cut = cli.cut.or(cfg.cut);
    cfg.ref_dim = cli.ref_dim.or(cfg.ref_dim);
    cfg.seed = cli.seed.unwrap_or(cfg.seed);
    cfg.optimizer.seed = cfg.seed;
    cfg.out = cli.out.or(cfg.out);
    cfg.format = cli.format.unwrap_or(cfg.format);
    cfg.replay_dir = cli.replay_dir.or(cfg.replay_dir);
    cfg.quick |= cli.quick;
    if let Some(r) = cli.restarts {
        cfg.optimizer.restarts = r;
    }
    if let Some(m) = cli.max_iter {
        cfg.optimizer.max_iter = m;
    }
    cfg.with_ancilla(cli.ancilla_a2, cli.ancilla_b2)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = build_config(cli).and_then(|cfg| run(&cfg));
    match outcome {
        Ok(o) => {
            for p in &o.replay_files {
                eprintln!("replay file: {}", p.display());
            }
            ExitCode::from(o.exit_code)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if matches!(e, CliError::Usage(_)) { EXIT_INPUT } else { e.exit_code() })
        }
    }
}
