//! `vpvn`: scenario runner, E-net stepper, conformance checker and key tool.
//!
//! Exit codes: 0 success, 1 domain failure (conformance, crypto, I/O on
//! output), 2 usage or malformed input.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use rand_chacha::ChaCha20Rng;
use rand_core::{OsRng, SeedableRng};

use vpvn_core::crypto::{KeyFile, KeyPair};
use vpvn_core::enet::{Net, NetDefinition, Tag, Token};
use vpvn_core::sim::{build_topology, ScenarioConfig, Simulator};
use vpvn_core::vpvn::{
    conformance_check, en_vpvn, en_vpvn_with, format_log, parse_log, token_resolver, Mode, ModelError, SessionToken,
    VpvnProcedures,
};
use vpvn_core::SessionId;

#[derive(Parser)]
#[command(name = "vpvn", version, about = "Virtual private video network toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and report per-session logs, stats and verdicts.
    Run(RunArgs),
    /// Step or explore an E-net.
    #[command(subcommand)]
    Enet(EnetCommand),
    /// Check an event log against EN_VPVN.
    Conform(ConformArgs),
    /// Write a key pair in the binary key-file format.
    Keygen(KeygenArgs),
}

#[derive(Args)]
struct RunArgs {
    scenario: PathBuf,
    /// Overrides the seed in the scenario file.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for report.txt and one <session>.log per session.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum EnetCommand {
    /// Fire transitions from the initial marking and print the trace.
    Run {
        /// Net file, or `envpvn` for the built-in model.
        net: String,
        /// Branch choices in firing order: ok, fail, key, nokey, rekey,
        /// continue, end, or a number.
        #[arg(long, value_delimiter = ',')]
        resolver: Option<Vec<String>>,
        /// Frames for the built-in model's token when no script is given.
        #[arg(long, default_value_t = 1)]
        frames: u64,
        #[arg(long, default_value_t = 1000)]
        max_steps: usize,
    },
    /// Count reachable markings.
    Reach {
        net: String,
        #[arg(long, default_value_t = vpvn_core::enet::DEFAULT_STATE_CAP)]
        cap: usize,
    },
}

#[derive(Args)]
struct ConformArgs {
    log: PathBuf,
    /// Accept logs that stop before the session ends.
    #[arg(long)]
    prefix: bool,
}

#[derive(Args)]
struct KeygenArgs {
    #[arg(long)]
    seed: Option<u64>,
    /// Existing directory to write <name>.key and <name>.pub into.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "vpvn")]
    name: String,
}

struct Failure {
    code: u8,
    error: anyhow::Error,
}

trait Classify<T> {
    fn input(self) -> Result<T, Failure>;
    fn domain(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn input(self) -> Result<T, Failure> {
        self.map_err(|e| Failure {
            code: 2,
            error: e.into(),
        })
    }

    fn domain(self) -> Result<T, Failure> {
        self.map_err(|e| Failure {
            code: 1,
            error: e.into(),
        })
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Enet(cmd) => enet(cmd),
        Command::Conform(args) => conform(args),
        Command::Keygen(args) => keygen(args),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .input()
}

fn run(args: RunArgs) -> Result<ExitCode, Failure> {
    let text = read(&args.scenario)?;
    let mut config = ScenarioConfig::from_toml(&text).input()?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let topo = build_topology(&config).input()?;
    let report = Simulator::new(topo).run();

    for s in &report.sessions {
        let verdict = s
            .verdict
            .as_ref()
            .map_or_else(|| "not checked".to_string(), |v| v.to_string());
        println!(
            "{} {} -> {} {} sent={} delivered={} dropped={} integrity_failed={} verdict={}",
            s.name,
            s.initiator,
            s.responder,
            s.status,
            s.stats.sent,
            s.stats.delivered,
            s.stats.dropped,
            s.stats.integrity_failed,
            verdict
        );
    }

    if let Some(dir) = &args.out {
        let write = |name: &str, body: String| {
            fs::write(dir.join(name), body).with_context(|| format!("writing {}", dir.join(name).display()))
        };
        fs::create_dir_all(dir)
            .with_context(|| format!("creating {}", dir.display()))
            .domain()?;
        write("report.txt", report.render()).domain()?;
        for s in &report.sessions {
            write(&format!("{}.log", s.name), format_log(&s.log)).domain()?;
        }
    }

    if !report.conservation_holds() {
        return Err(anyhow!("delivery counters do not balance")).domain();
    }
    if !report.all_conform() {
        return Err(anyhow!("at least one session log does not conform")).domain();
    }
    Ok(ExitCode::SUCCESS)
}

fn load_net(spec: &str) -> Result<NetDefinition, Failure> {
    if spec == "envpvn" {
        return Ok(en_vpvn());
    }
    let text = read(Path::new(spec))?;
    NetDefinition::from_toml(&text)
        .with_context(|| format!("parsing {spec}"))
        .input()
}

fn parse_choice(word: &str) -> Result<Tag, Failure> {
    Ok(match word.trim() {
        "ok" | "rekey" | "end" => 1,
        "fail" | "key" | "nokey" | "continue" => 0,
        other => other
            .parse()
            .map_err(|_| anyhow!("unknown resolver choice `{other}`"))
            .input()?,
    })
}

fn enet(cmd: EnetCommand) -> Result<ExitCode, Failure> {
    match cmd {
        EnetCommand::Reach { net, cap } => {
            let net = Net::build(load_net(&net)?).input()?;
            let count = net.reachable_markings(cap).domain()?.len();
            println!("{count}");
            Ok(ExitCode::SUCCESS)
        }
        EnetCommand::Run {
            net: spec,
            resolver,
            frames,
            max_steps,
        } => {
            let def = load_net(&spec)?;
            let outcome = match resolver {
                None if spec == "envpvn" => {
                    let net = en_vpvn_with(VpvnProcedures::allow_all());
                    let token = SessionToken::new("initiator", "responder", SessionId(1), frames).to_token();
                    net.run(net.initial_marking(token), token_resolver, max_steps)
                        .domain()?
                }
                words => {
                    let script = words
                        .unwrap_or_default()
                        .iter()
                        .map(|w| parse_choice(w))
                        .collect::<Result<Vec<_>, _>>()?;
                    let net = Net::build(def).input()?;
                    let mut next = script.into_iter();
                    let mut exhausted = false;
                    let outcome = net
                        .run(
                            net.initial_marking(Token::default()),
                            |_, _| {
                                next.next().unwrap_or_else(|| {
                                    exhausted = true;
                                    0
                                })
                            },
                            max_steps,
                        )
                        .domain()?;
                    if exhausted {
                        return Err(anyhow!("--resolver ran out of choices before the run finished")).input();
                    }
                    outcome
                }
            };
            for rec in &outcome.trace {
                println!("{rec}");
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn conform(args: ConformArgs) -> Result<ExitCode, Failure> {
    let text = read(&args.log)?;
    let log = parse_log(&text).input()?;
    let mode = if args.prefix { Mode::Prefix } else { Mode::Complete };
    let verdict = match conformance_check(&log, mode) {
        Ok(v) => v,
        Err(e @ ModelError::MixedSessions(..)) => return Err(e).input(),
        Err(e) => return Err(e).domain(),
    };
    println!("{verdict}");
    Ok(if verdict.is_accept() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn keygen(args: KeygenArgs) -> Result<ExitCode, Failure> {
    let pair = match args.seed {
        Some(seed) => KeyPair::generate(&mut ChaCha20Rng::seed_from_u64(seed)),
        None => KeyPair::generate(&mut OsRng),
    }
    .domain()?;
    let private = args.out.join(format!("{}.key", args.name));
    let public = args.out.join(format!("{}.pub", args.name));
    for (path, file) in [(&private, KeyFile::Private(pair.clone())), (&public, KeyFile::Public(*pair.public()))] {
        fs::write(path, file.encode())
            .with_context(|| format!("writing {}", path.display()))
            .domain()?;
        println!("wrote {}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}
