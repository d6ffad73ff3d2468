//! Operator commands behind the `homotally` binary.
//!
//! Errors are reported on stderr as one line,
//! `error: class=<class> code=<exit code> message=<text>`, and the process
//! exits with the class's code (see [`crate::ErrorClass::exit_code`]).

use std::fs;
use std::io::{self, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::ballot::{derive_config, ElectionConfig, OfficerSecrets, PublicConfig};
use crate::center::{CenterKey, CenterState, FileJournal, FinalizationRecord, KeyFile};
use crate::field::Prime;
use crate::netsvc::{serve_center, CenterClient, Gateway, Overall, Terminal};
use crate::shamir::{CoefficientSource, ForcedCoefficients, SharingPolicy};
use crate::sim::LocalElection;
use crate::tally::{compute_result, turnout_check, verify_with_config, TallyReport};
use crate::{Error, Result};

pub const CONFIG_ENV: &str = "HOMOTALLY_CONFIG";

#[derive(Debug, Parser)]
#[command(name = "homotally", version, about = "Threshold secret-sharing e-voting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Derive election parameters and write config, officer secrets and center keys.
    Setup(SetupArgs),
    /// Run one collection center as an HTTP service.
    RunCenter(RunCenterArgs),
    /// Cast one ballot against running centers.
    Cast(CastArgs),
    /// Close a center and print its signed record.
    Finalize(FinalizeArgs),
    /// Verify center records and compute the result.
    Tally(TallyArgs),
    /// Run a whole election in-process.
    Simulate(SimulateArgs),
    /// Serve the terminal/official gateway used by the web UI.
    RunGateway(GatewayArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArg {
    /// Public election config.
    #[arg(long, env = CONFIG_ENV)]
    pub config: PathBuf,
}

#[derive(Debug, Args)]
pub struct SetupArgs {
    /// Comma-separated candidate names; position k gets counter window k.
    #[arg(long, value_delimiter = ',', required = true)]
    pub candidates: Vec<String>,
    #[arg(long)]
    pub voters: u64,
    #[arg(long)]
    pub threshold: usize,
    #[arg(long)]
    pub centers: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub election_id: Option<String>,
    /// Use this prime instead of deriving one.
    #[arg(long)]
    pub prime: Option<u64>,
    /// Accept a --prime too small for every reachable tally.
    #[arg(long, requires = "prime")]
    pub relax_field_bound: bool,
    /// Fixed evaluation points instead of random ones.
    #[arg(long, value_delimiter = ',')]
    pub eval_points: Option<Vec<u64>>,
}

#[derive(Debug, Args)]
pub struct RunCenterArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[arg(long)]
    pub center_id: u32,
    /// Center key file written by `setup`.
    #[arg(long)]
    pub key: PathBuf,
    /// Append-only journal; replayed on start if it exists.
    #[arg(long)]
    pub journal: PathBuf,
    #[arg(long, default_value = "127.0.0.1:0")]
    pub listen: SocketAddr,
}

#[derive(Debug, Args)]
pub struct CastArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[arg(long)]
    pub secrets: PathBuf,
    /// Center base URLs in center order.
    #[arg(long, value_delimiter = ',', required = true)]
    pub centers: Vec<String>,
    /// Candidate name or 1-based index.
    #[arg(long)]
    pub candidate: String,
    /// Reuse an id to retry a partially registered ballot.
    #[arg(long)]
    pub ballot_id: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct FinalizeArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[arg(long)]
    pub center: String,
    /// Also write the record here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TallyArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[arg(long)]
    pub secrets: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    pub records: Vec<PathBuf>,
    /// Also write the JSON report here.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    /// Defaults to secrets.json next to the config.
    #[arg(long)]
    pub secrets: Option<PathBuf>,
    /// Comma-separated votes, by candidate name or 1-based index.
    #[arg(long, value_delimiter = ',', conflicts_with = "random")]
    pub votes: Option<Vec<String>>,
    /// Cast this many uniformly random votes.
    #[arg(long)]
    pub random: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Polynomial coefficients to use before falling back to the seeded stream.
    #[arg(long, value_delimiter = ',')]
    pub coefficients: Option<Vec<u64>>,
    /// Print the JSON report instead of the tables.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct GatewayArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[arg(long)]
    pub secrets: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    pub centers: Vec<String>,
    #[arg(long, default_value = "127.0.0.1:0")]
    pub listen: SocketAddr,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| {
        Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })
}

fn load_public(path: &Path) -> Result<PublicConfig> {
    PublicConfig::from_json(&read(path)?)
}

fn load_election(config: &Path, secrets: &Path) -> Result<ElectionConfig> {
    let public = load_public(config)?;
    let secrets = OfficerSecrets::from_json(&read(secrets)?)?;
    ElectionConfig::from_parts(public, &secrets)
}

fn rng_from(seed: Option<u64>) -> ChaCha20Rng {
    match seed {
        Some(s) => ChaCha20Rng::seed_from_u64(s),
        None => ChaCha20Rng::from_entropy(),
    }
}

fn resolve_candidate(config: &PublicConfig, text: &str) -> Result<usize> {
    if let Some(k) = config.candidate_index(text) {
        return Ok(k);
    }
    match text.parse::<usize>() {
        Ok(k) if (1..=config.candidate_count()).contains(&k) => Ok(k),
        Ok(k) => Err(Error::InvalidCandidate {
            index: k,
            candidates: config.candidate_count(),
        }),
        Err(_) => Err(Error::InvalidCandidate {
            index: 0,
            candidates: config.candidate_count(),
        }),
    }
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    Ok(tokio::runtime::Builder::new_multi_thread().enable_all().build()?)
}

/// Writes `setup` artifacts: `config.json`, `secrets.json` and
/// `keys/center-<j>.json`.
pub fn setup(args: &SetupArgs, out: &mut dyn Write) -> Result<ElectionConfig> {
    let mut rng = rng_from(args.seed);
    let mut config = match args.prime {
        None => {
            if args.eval_points.is_some() {
                return Err(Error::InvalidConfig("--eval-points requires --prime".into()));
            }
            derive_config(args.candidates.clone(), args.voters, args.threshold, args.centers, &mut rng)?
        }
        Some(p) => {
            let prime = Prime::new(p)?;
            let policy = match &args.eval_points {
                Some(xs) => {
                    if xs.len() != args.centers {
                        return Err(Error::InvalidConfig(format!(
                            "{} evaluation points for {} centers",
                            xs.len(),
                            args.centers
                        )));
                    }
                    if let Some(x) = xs.iter().find(|&&x| x >= p) {
                        return Err(Error::InvalidConfig(format!("evaluation point {x} is not below {p}")));
                    }
                    SharingPolicy::new(args.threshold, xs.iter().map(|&x| prime.element(x)).collect())?
                }
                None => SharingPolicy::random(prime, args.threshold, args.centers, &mut rng)?,
            };
            let id = format!("{:032x}", rng.gen::<u128>());
            if args.relax_field_bound {
                ElectionConfig::with_field_override(id, args.candidates.clone(), args.voters, policy)?
            } else {
                ElectionConfig::with_prime(id, args.candidates.clone(), args.voters, policy)?
            }
        }
    };
    if let Some(id) = &args.election_id {
        config.set_election_id(id.clone());
    }
    let keys: Vec<CenterKey> = (0..args.centers).map(|_| CenterKey::generate(&mut rng)).collect();
    config.set_center_public_keys(keys.iter().map(CenterKey::public_hex).collect())?;
    config.public().validate()?;

    let key_dir = args.out_dir.join("keys");
    fs::create_dir_all(&key_dir)?;
    fs::write(args.out_dir.join("config.json"), config.public().to_json_pretty() + "\n")?;
    fs::write(args.out_dir.join("secrets.json"), config.secrets().to_json_pretty() + "\n")?;
    for (i, key) in keys.iter().enumerate() {
        let file = KeyFile {
            center_id: i as u32 + 1,
            secret_key: key.secret_hex(),
        };
        fs::write(
            key_dir.join(format!("center-{}.json", i + 1)),
            serde_json::to_string_pretty(&file)? + "\n",
        )?;
    }
    let p = config.public();
    writeln!(
        out,
        "election {}: m={} n={} w={} p={} t={} c={}{}",
        p.election_id,
        p.candidate_count(),
        p.voter_count,
        p.window_width,
        p.prime,
        p.threshold,
        p.center_count,
        if p.relaxed_field_bound { " (field bound relaxed)" } else { "" }
    )?;
    Ok(config)
}

fn load_key(path: &Path, center_id: u32) -> Result<CenterKey> {
    let file: KeyFile = serde_json::from_str(&read(path)?)?;
    if file.center_id != center_id {
        return Err(Error::InvalidConfig(format!(
            "key file is for center {}, not {center_id}",
            file.center_id
        )));
    }
    CenterKey::from_hex(&file.secret_key)
}

/// Replays the journal if present, opens the election if still idle.
pub fn prepare_center(args: &RunCenterArgs) -> Result<(CenterState, CenterKey)> {
    let config = load_public(&args.config.config)?;
    let key = load_key(&args.key, args.center_id)?;
    let sink = Box::new(FileJournal::open(&args.journal)?);
    let existing = fs::File::open(&args.journal)?;
    let mut state = CenterState::recover(args.center_id, io::BufReader::new(existing), sink)?;
    match state.election_id() {
        None => state.open_election(config)?,
        Some(id) if id != config.election_id => {
            return Err(Error::InvalidConfig(format!(
                "journal belongs to election {id}, config to {}",
                config.election_id
            )))
        }
        Some(_) => {}
    }
    Ok((state, key))
}

pub fn run_center(args: &RunCenterArgs, out: &mut dyn Write) -> Result<()> {
    let (state, key) = prepare_center(args)?;
    let rt = runtime()?;
    rt.block_on(async {
        let status = state.status();
        let handle = serve_center(state, key, args.listen).await?;
        writeln!(
            out,
            "center {} listening on {} (phase {}, {} shares)",
            status.center_id,
            handle.url(),
            status.phase,
            status.received_count
        )?;
        out.flush()?;
        tokio::signal::ctrl_c().await?;
        handle.shutdown().await
    })
}

pub fn cast(args: &CastArgs, out: &mut dyn Write) -> Result<Overall> {
    let config = load_election(&args.config.config, &args.secrets)?;
    let candidate = resolve_candidate(config.public(), &args.candidate)?;
    let clients = args.centers.iter().map(CenterClient::new).collect();
    let terminal = Terminal::new(config, clients)?;
    let mut rng = rng_from(args.seed);
    let ballot_id = args
        .ballot_id
        .clone()
        .unwrap_or_else(|| crate::netsvc::mint_ballot_id(&mut rng));
    let ballot = terminal.prepare(candidate, ballot_id, &mut rng)?;
    let outcome = runtime()?.block_on(terminal.deliver(&ballot));
    writeln!(out, "{}", serde_json::to_string_pretty(&outcome)?)?;
    Ok(outcome.overall)
}

pub fn finalize(args: &FinalizeArgs, out: &mut dyn Write) -> Result<FinalizationRecord> {
    let config = load_public(&args.config.config)?;
    let client = CenterClient::new(&args.center);
    let record = runtime()?
        .block_on(client.finalize(&config.election_id))
        .map_err(Error::from)?;
    let text = record.to_canonical_json();
    if let Some(path) = &args.out {
        fs::write(path, format!("{text}\n"))?;
    }
    writeln!(out, "{text}")?;
    Ok(record)
}

fn print_report(report: &TallyReport, out: &mut dyn Write) -> Result<()> {
    write!(out, "{}", report.render_table())?;
    writeln!(out)?;
    write!(out, "{}", report.render_subsets())?;
    writeln!(out, "packed tally Q(0) = {}", report.packed)?;
    for note in turnout_check(report) {
        writeln!(out, "audit: {}", note.message)?;
    }
    Ok(())
}

pub fn tally(args: &TallyArgs, out: &mut dyn Write) -> Result<TallyReport> {
    let config = load_election(&args.config.config, &args.secrets)?;
    let verified = args
        .records
        .iter()
        .map(|p| {
            let record = FinalizationRecord::from_canonical_json(&read(p)?)?;
            verify_with_config(&record, config.public())
        })
        .collect::<Result<Vec<_>>>()?;
    let report = compute_result(&verified, &config)?;
    if let Some(path) = &args.json {
        fs::write(path, report.to_json_pretty() + "\n")?;
    }
    print_report(&report, out)?;
    Ok(report)
}

pub fn simulate(args: &SimulateArgs, out: &mut dyn Write) -> Result<TallyReport> {
    let secrets = args.secrets.clone().unwrap_or_else(|| {
        args.config
            .config
            .parent()
            .unwrap_or(Path::new("."))
            .join("secrets.json")
    });
    let config = load_election(&args.config.config, &secrets)?;
    let mut rng = rng_from(args.seed);
    let votes: Vec<usize> = match (&args.votes, args.random) {
        (Some(v), _) => v
            .iter()
            .map(|s| resolve_candidate(config.public(), s.trim()))
            .collect::<Result<_>>()?,
        (None, Some(k)) => {
            let m = config.public().candidate_count();
            (0..k).map(|_| rng.gen_range(1..=m)).collect()
        }
        (None, None) => Vec::new(),
    };
    if votes.len() as u64 > config.public().voter_count {
        return Err(Error::CapacityExceeded(config.public().voter_count));
    }
    let mut coefficients: Box<dyn CoefficientSource> = match &args.coefficients {
        Some(c) => Box::new(ForcedCoefficients::new(c.iter().copied(), rng.gen())),
        None => Box::new(ChaCha20Rng::from_seed(rng.gen())),
    };
    let mut election = LocalElection::open(config, &mut rng)?;
    for &k in &votes {
        election.cast(k, coefficients.as_mut(), &mut rng)?;
    }
    let report = election.tally()?;
    if args.json {
        writeln!(out, "{}", report.to_json_pretty())?;
    } else {
        writeln!(out, "{} ballots cast", votes.len())?;
        print_report(&report, out)?;
    }
    Ok(report)
}

pub fn run_gateway(args: &GatewayArgs, out: &mut dyn Write) -> Result<()> {
    let config = load_election(&args.config.config, &args.secrets)?;
    let clients = args.centers.iter().map(CenterClient::new).collect();
    let gateway = Gateway::new(Terminal::new(config, clients)?);
    runtime()?.block_on(async {
        let handle = crate::netsvc::serve_gateway(gateway, args.listen).await?;
        writeln!(out, "gateway listening on {}", handle.url())?;
        out.flush()?;
        tokio::signal::ctrl_c().await?;
        handle.shutdown().await
    })
}

/// Runs a parsed command. Returns the process exit code.
pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = match &cli.command {
        Command::Setup(a) => setup(a, out).map(|_| 0),
        Command::RunCenter(a) => run_center(a, out).map(|_| 0),
        Command::Cast(a) => cast(a, out).and_then(|overall| match overall {
            Overall::Registered => Ok(0),
            Overall::Partial => Err(Error::Transport("ballot only partially registered; retry with --ballot-id".into())),
            Overall::Rejected => Err(Error::Phase("ballot rejected by every center".into())),
        }),
        Command::Finalize(a) => finalize(a, out).map(|_| 0),
        Command::Tally(a) => tally(a, out).map(|_| 0),
        Command::Simulate(a) => simulate(a, out).map(|_| 0),
        Command::RunGateway(a) => run_gateway(a, out).map(|_| 0),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let class = e.class();
            let message = e.to_string().replace('\n', " ");
            let _ = writeln!(
                err,
                "error: class={} code={} message={message}",
                class.as_str(),
                class.exit_code()
            );
            class.exit_code()
        }
    }
}
