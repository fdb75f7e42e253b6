//! `redist` command line: one subcommand per pipeline stage.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use redist_core::arena::report::{beach_csv, beach_pgm, embedding_csv, payoff_csv};
use redist_core::arena::{
    beach_plot, head_to_head, manifold_embedding, run_metagame, Population, TournamentConfig,
};
use redist_core::designer::{train_designer, TrainingConfig};
use redist_core::game::{read_jsonl, write_jsonl, EndowmentProfile};
use redist_core::mechanism::{Baseline, MechanismSpec};
use redist_core::nn::WeightFile;
use redist_core::players::{
    corpus_mechanisms, corpus_profiles, generate_corpus, train_virtual_players,
    PlayerTrainingConfig, RationalConfig, StyleMix, VirtualPlayerModel,
};

use crate::clock::{MockClock, SystemClock};
use crate::http::AppState;
use crate::session::{Fill, SessionConfig, SessionService};

#[derive(Debug, Parser)]
#[command(name = "redist", version, about = "Redistribution mechanism laboratory")]
pub struct Cli {
    /// Root seed for every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// JSON file with the subcommand's configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output file; standard output when omitted, where that makes sense.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlayerKind {
    Virtual,
    Rational,
}

#[derive(Debug, Args)]
pub struct PlayerArgs {
    /// Simulated population.
    #[arg(long, value_enum, default_value_t = PlayerKind::Rational)]
    pub players: PlayerKind,
    /// Virtual-player weight file, required with `--players virtual`.
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a synthetic corpus of sessions (JSONL).
    GenCorpus {
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Fit virtual players to a corpus.
    TrainPlayers {
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Train the designer against virtual players.
    TrainDesigner {
        /// Virtual-player weight file.
        #[arg(long)]
        model: PathBuf,
    },
    /// Round-robin metagame over a manifold grid.
    Tournament {
        /// `VxW` grid over the manifold, e.g. `3x3`.
        #[arg(long, default_value = "3x3")]
        grid: String,
        #[arg(long)]
        blocks: Option<usize>,
        /// Restrict to one endowment profile.
        #[arg(long)]
        profile: Option<EndowmentProfile>,
        #[command(flatten)]
        players: PlayerArgs,
    },
    /// Head-to-head vote share of two mechanisms.
    Evaluate {
        /// JSON object, named baseline, or a file with either or designer weights.
        #[arg(long)]
        mech_a: String,
        #[arg(long)]
        mech_b: String,
        #[arg(long)]
        blocks: Option<usize>,
        #[arg(long)]
        profile: Option<EndowmentProfile>,
        #[command(flatten)]
        players: PlayerArgs,
    },
    /// Head payout fraction over the contribution plane (CSV, or PGM for `.pgm` outputs).
    BeachPlot {
        #[arg(long)]
        mech: String,
        #[arg(long, default_value = "10,4,4,4")]
        profile: EndowmentProfile,
        #[arg(long, default_value_t = 11)]
        resolution: usize,
    },
    /// Two-dimensional embedding of the mechanism manifold by simulated outcomes.
    Embed {
        /// Points per manifold axis.
        #[arg(long, default_value_t = 10)]
        grid: usize,
        #[arg(long, default_value_t = 64)]
        episodes: usize,
        #[arg(long, default_value_t = 10)]
        rounds: usize,
        #[arg(long)]
        profile: Option<EndowmentProfile>,
        #[command(flatten)]
        players: PlayerArgs,
    },
    /// Run the live session service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        serve_port: u16,
        /// Virtual-player weight file for automated seats.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Directory designer weight references resolve against.
        #[arg(long, default_value = ".")]
        weights_dir: PathBuf,
    },
    /// Play fully automated sessions through the service and export them (JSONL).
    Export {
        #[arg(long, default_value = "10,4,4,4")]
        profile: EndowmentProfile,
        #[arg(long)]
        mech_a: String,
        #[arg(long)]
        mech_b: String,
        /// Number of sessions, seeded `seed, seed + 1, ...`.
        #[arg(long, default_value_t = 1)]
        sessions: u64,
        #[command(flatten)]
        players: PlayerArgs,
    },
}

/// Configuration of `gen-corpus`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    pub episodes: usize,
    pub mix: StyleMix,
    pub profiles: Vec<EndowmentProfile>,
    pub mechanisms: Vec<MechanismSpec>,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            episodes: 2000,
            mix: StyleMix::default(),
            profiles: corpus_profiles(),
            mechanisms: corpus_mechanisms(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Core(#[from] redist_core::Error),
    #[error(transparent)]
    Service(#[from] crate::ServiceError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

type CliResult<T> = std::result::Result<T, CliError>;

fn invalid<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Invalid(msg.into()))
}

fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> CliResult<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Invalid(format!("cannot read config {}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Invalid(format!("bad config {}: {e}", p.display())))
        }
    }
}

/// Parses a mechanism given as inline JSON, a baseline name, or a file holding
/// either a mechanism object or designer weights.
pub fn parse_mechanism(arg: &str) -> CliResult<MechanismSpec> {
    let text = arg.trim();
    let mut spec = if text.starts_with('{') {
        serde_json::from_str::<MechanismSpec>(text)
            .map_err(|e| CliError::Invalid(format!("bad mechanism `{text}`: {e}")))?
    } else if let Ok(name) = serde_json::from_value::<Baseline>(json!(text)) {
        name.into()
    } else if Path::new(text).is_file() {
        let body = std::fs::read_to_string(text)?;
        let value: serde_json::Value = serde_json::from_str(&body)
            .map_err(|e| CliError::Invalid(format!("{text} is not JSON: {e}")))?;
        if value.get("kind").is_some() {
            serde_json::from_value(value)
                .map_err(|e| CliError::Invalid(format!("bad mechanism in {text}: {e}")))?
        } else if value.get("model_type").is_some() {
            WeightFile::from_json(&body)?;
            MechanismSpec::Designer {
                weights_ref: text.to_string(),
                policy: None,
            }
        } else {
            return invalid(format!("{text} holds neither a mechanism nor designer weights"));
        }
    } else {
        return invalid(format!("unknown mechanism `{text}`"));
    };
    spec.resolve(Path::new("."))?;
    if spec == MechanismSpec::Referee {
        return invalid("a live referee cannot be simulated");
    }
    Ok(spec)
}

/// `VxW` with both at least 2, e.g. `3x3`.
pub fn parse_grid(arg: &str) -> CliResult<Vec<MechanismSpec>> {
    let dims: Vec<usize> = arg
        .split(['x', 'X'])
        .map(|p| p.trim().parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| CliError::Invalid(format!("bad grid `{arg}`, expected e.g. 3x3")))?;
    let [nv, nw] = dims[..] else {
        return invalid(format!("bad grid `{arg}`, expected e.g. 3x3"));
    };
    if nv < 2 || nw < 2 {
        return invalid("grid needs at least two points per axis");
    }
    let axis = |n: usize, k: usize| k as f64 / (n - 1) as f64;
    Ok((0..nv)
        .flat_map(|i| (0..nw).map(move |j| MechanismSpec::manifold(axis(nv, i), axis(nw, j))))
        .collect())
}

fn load_model(path: &Path) -> CliResult<Arc<VirtualPlayerModel>> {
    Ok(Arc::new(VirtualPlayerModel::load(path)?))
}

fn population(args: &PlayerArgs) -> CliResult<Population> {
    match (args.players, &args.model) {
        (PlayerKind::Rational, _) => Ok(Population::Rational(RationalConfig::default())),
        (PlayerKind::Virtual, Some(m)) => Ok(Population::Virtual(load_model(m)?)),
        (PlayerKind::Virtual, None) => invalid("--players virtual needs --model"),
    }
}

fn tournament_config(
    cli: &Cli,
    blocks: Option<usize>,
    profile: Option<EndowmentProfile>,
) -> CliResult<TournamentConfig> {
    let mut cfg: TournamentConfig = load_config(cli.config.as_deref())?;
    if let Some(b) = blocks {
        cfg.blocks = b;
    }
    if let Some(p) = profile {
        cfg.profiles = vec![p];
    }
    if cfg.blocks == 0 || cfg.rounds == 0 || cfg.profiles.is_empty() {
        return invalid("tournament needs blocks, rounds and profiles");
    }
    Ok(cfg)
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
        }
    }
    Ok(())
}

fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    emit(out, &text)
}

fn required_out(cli: &Cli, what: &str) -> CliResult<PathBuf> {
    cli.out
        .clone()
        .ok_or_else(|| CliError::Invalid(format!("{what} needs --out")))
}

pub fn execute(cli: &Cli) -> CliResult<()> {
    let cfg_path = cli.config.as_deref();
    match &cli.command {
        Command::GenCorpus { episodes } => {
            let mut cfg: CorpusConfig = load_config(cfg_path)?;
            if let Some(n) = episodes {
                cfg.episodes = *n;
            }
            let out = required_out(cli, "gen-corpus")?;
            let corpus = generate_corpus(&cfg.mix, &cfg.profiles, &cfg.mechanisms, cfg.episodes, cli.seed)?;
            write_jsonl(BufWriter::new(File::create(out)?), &corpus)?;
        }
        Command::TrainPlayers { corpus } => {
            let cfg: PlayerTrainingConfig = load_config(cfg_path)?;
            let out = required_out(cli, "train-players")?;
            let corpus = read_jsonl(BufReader::new(File::open(corpus)?))?;
            let (model, report) = train_virtual_players(&corpus, &cfg, cli.seed)?;
            model.save(&out)?;
            emit_json(None, &report)?;
        }
        Command::TrainDesigner { model } => {
            let cfg: TrainingConfig = load_config(cfg_path)?;
            let out = required_out(cli, "train-designer")?;
            let players = load_model(model)?;
            let outcome = train_designer(&players, &cfg, cli.seed)?;
            outcome.policy.save(&out)?;
            emit_json(None, &json!({"curve": outcome.curve}))?;
        }
        Command::Tournament {
            grid,
            blocks,
            profile,
            players,
        } => {
            let grid = parse_grid(grid)?;
            let cfg = tournament_config(cli, *blocks, *profile)?;
            let report = run_metagame(&grid, &population(players)?, &cfg, cli.seed)?;
            match cli.out.as_deref() {
                Some(p) if p.extension().is_some_and(|e| e == "csv") => {
                    emit(Some(p), &payoff_csv(&report.matrix))?
                }
                out => emit_json(out, &report)?,
            }
        }
        Command::Evaluate {
            mech_a,
            mech_b,
            blocks,
            profile,
            players,
        } => {
            let (a, b) = (parse_mechanism(mech_a)?, parse_mechanism(mech_b)?);
            let cfg = tournament_config(cli, *blocks, *profile)?;
            let pop = population(players)?;
            let h = head_to_head(&a, &b, &pop, &cfg, cli.seed)?;
            let report = json!({
                "mech_a": a,
                "mech_b": b,
                "players": pop.name(),
                "profiles": cfg.profiles,
                "seed": cli.seed,
                "share_a": h.share,
                "std_error": h.std_error,
                "wilson": h.wilson,
                "blocks": h.blocks,
            });
            emit_json(cli.out.as_deref(), &report)?;
        }
        Command::BeachPlot {
            mech,
            profile,
            resolution,
        } => {
            let plot = beach_plot(&parse_mechanism(mech)?, profile, *resolution)?;
            let text = match cli.out.as_deref() {
                Some(p) if p.extension().is_some_and(|e| e == "pgm") => beach_pgm(&plot),
                _ => beach_csv(&plot),
            };
            emit(cli.out.as_deref(), &text)?;
        }
        Command::Embed {
            grid,
            episodes,
            rounds,
            profile,
            players,
        } => {
            let profiles = match profile {
                Some(p) => vec![*p],
                None => EndowmentProfile::evaluation_set(),
            };
            let e = manifold_embedding(*grid, &population(players)?, &profiles, *episodes, *rounds, cli.seed)?;
            emit(cli.out.as_deref(), &embedding_csv(&e))?;
        }
        Command::Serve {
            serve_port,
            model,
            weights_dir,
        } => {
            let players = model.as_deref().map(load_model).transpose()?;
            let service = SessionService::new(Arc::new(SystemClock::new()), players)
                .with_weights_dir(weights_dir);
            let addr = SocketAddr::from(([0, 0, 0, 0], *serve_port));
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(crate::http::serve(AppState::new(Arc::new(service)), addr))?;
        }
        Command::Export {
            profile,
            mech_a,
            mech_b,
            sessions,
            players,
        } => {
            let (a, b) = (parse_mechanism(mech_a)?, parse_mechanism(mech_b)?);
            let (fill, model) = match players.players {
                PlayerKind::Rational => (Fill::Rational, None),
                PlayerKind::Virtual => match &players.model {
                    Some(m) => (Fill::Virtual, Some(load_model(m)?)),
                    None => return invalid("--players virtual needs --model"),
                },
            };
            let service = SessionService::new(Arc::new(MockClock::new()), model);
            let mut text = String::new();
            for k in 0..*sessions {
                let id = service.create(SessionConfig {
                    profile: *profile,
                    mech_a: a.clone(),
                    mech_b: b.clone(),
                    order: None,
                    humans: Vec::new(),
                    referee: None,
                    fill,
                    seed: cli.seed.wrapping_add(k),
                })?;
                text.push_str(&service.export(&id)?);
            }
            emit(cli.out.as_deref(), &text)?;
        }
    }
    Ok(())
}

/// Parses `args` (program name first) and runs the command. Returns the exit
/// status: 0 on success, 1 when the command fails, 2 on a usage error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
