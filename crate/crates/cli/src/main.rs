use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use esem_core::bench::{self, BenchConfig};
use esem_core::energy::{self, IdleAccounting, ReportFormat, SchemeCost, SensorProfile};
use esem_core::keystore::{write_atomic, FileSigner};
use esem_core::protocol::{PartyClient, PartyServer, ServerOptions, ShareStore};
use esem_core::scheme::{self, LocalParties, PublicKey, Verdict};
use esem_core::{DeviceProfile, OpCounter, PartyShare, SnodParams};

/// Set to abort the process right after the signing counter is persisted.
const CRASH_ENV: &str = "ESEM_ABORT_AFTER_RESERVE";

const EXIT_REJECT: u8 = 1;
const EXIT_UNAVAILABLE: u8 = 2;
const EXIT_USAGE: u8 = 3;

/// Failure caused by bad arguments or unreadable inputs (exit code 3).
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn read_input(path: &Path, what: &str) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| usage(format!("cannot read {what} {}: {e}", path.display())))
}

#[derive(Parser)]
#[command(name = "esem", version, about = "Signatures with group-operation-free signing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a signing key, its public key and one share per party.
    Keygen(KeygenArgs),
    /// Sign a message, advancing the key's counter first.
    Sign(SignArgs),
    /// Run a party server.
    Serve(ServeArgs),
    /// Upload a key's shares to its party servers.
    Provision(ProvisionArgs),
    /// Verify a signature (exit 0 accept, 1 reject, 2 unavailable, 3 usage).
    Verify(VerifyArgs),
    /// Measure sign/verify latency and operation counts.
    Bench(BenchArgs),
    /// Energy share of signing in sensor scenarios.
    Energy(EnergyArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Preset {
    Esem,
    Esem2,
    Custom,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Csv,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Text => ReportFormat::Text,
            Format::Csv => ReportFormat::Csv,
        }
    }
}

#[derive(Args, Clone, Copy)]
struct ParamArgs {
    #[arg(long, value_enum, default_value = "esem")]
    preset: Preset,
    /// Subset size (custom preset).
    #[arg(long)]
    v: Option<u16>,
    /// Table size, a power of two (custom preset).
    #[arg(long)]
    n: Option<u32>,
    /// Number of parties (custom preset).
    #[arg(long)]
    l: Option<u8>,
}

impl ParamArgs {
    fn params(&self) -> Result<SnodParams> {
        match self.preset {
            Preset::Esem => Ok(SnodParams::ESEM),
            Preset::Esem2 => Ok(SnodParams::ESEM2),
            Preset::Custom => {
                let (Some(v), Some(n), Some(l)) = (self.v, self.n, self.l) else {
                    return Err(usage("custom preset needs --v, --n and --l"));
                };
                SnodParams::new(v, n, l).map_err(|e| usage(e.to_string()))
            }
        }
    }
}

#[derive(Args)]
struct KeygenArgs {
    #[command(flatten)]
    params: ParamArgs,
    #[arg(long, default_value = "esem.key")]
    key: PathBuf,
    #[arg(long, default_value = "esem.pub")]
    pubkey: PathBuf,
    /// Shares are written to `<dir>/p<j>/<key_id>.share`.
    #[arg(long, env = "ESEM_SHARE_DIR", default_value = "shares")]
    share_dir: PathBuf,
    /// Overwrite existing key files.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct SignArgs {
    #[arg(long)]
    key: PathBuf,
    /// Message file; standard input when omitted.
    #[arg(long)]
    message: Option<PathBuf>,
    /// Signature output; raw bytes to standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:7700")]
    listen: String,
    #[arg(long, env = "ESEM_SHARE_DIR")]
    share_dir: PathBuf,
    /// Artificial delay before each answer, for fault injection.
    #[arg(long, default_value_t = 0, hide = true)]
    delay_ms: u64,
}

#[derive(Args)]
struct ProvisionArgs {
    #[arg(long)]
    pubkey: PathBuf,
    #[arg(long, env = "ESEM_SHARE_DIR", default_value = "shares")]
    share_dir: PathBuf,
    /// `host:port` per party, in party order.
    #[arg(long)]
    endpoints: String,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    pubkey: PathBuf,
    #[arg(long)]
    sig: PathBuf,
    /// Message file; standard input when omitted.
    #[arg(long)]
    message: Option<PathBuf>,
    /// `host:port` per party, in party order.
    #[arg(long, conflicts_with = "local_shares", required_unless_present = "local_shares")]
    endpoints: Option<String>,
    /// Reconstruct in-process from a share directory instead of the network.
    #[arg(long)]
    local_shares: Option<PathBuf>,
    /// Per-request timeout.
    #[arg(long, default_value_t = 5000)]
    timeout_ms: u64,
}

#[derive(Args)]
struct BenchArgs {
    /// `esem` pairs the seed and table-cached modes with their own presets;
    /// `esem2` and `custom` run both modes on one parameter set.
    #[command(flatten)]
    params: ParamArgs,
    #[arg(long, default_value_t = 10_000)]
    iterations: usize,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Idle {
    Full,
    Exclude,
}

#[derive(Args)]
struct EnergyArgs {
    /// Scenario profile (`key = value` file). Repeatable; the built-in
    /// pulse and pressure scenarios are used when omitted.
    #[arg(long)]
    profile: Vec<PathBuf>,
    /// Extra scheme as `NAME=SECONDS` per signature. Repeatable.
    #[arg(long = "scheme")]
    schemes: Vec<String>,
    /// Run the benchmark with this many iterations and add its measured
    /// sign times.
    #[arg(long)]
    measured: Option<usize>,
    #[arg(long, value_enum, default_value = "full")]
    idle: Idle,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

fn share_path(dir: &Path, j: u8, key_id: &esem_core::KeyId) -> PathBuf {
    dir.join(format!("p{j}")).join(format!("{key_id}.share"))
}

fn load_pubkey(path: &Path) -> Result<PublicKey> {
    PublicKey::from_bytes(&read_input(path, "public key")?)
        .map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn load_shares(dir: &Path, pk: &PublicKey) -> Result<Vec<PartyShare>> {
    let key_id = pk.key_id();
    (1..=pk.params.l)
        .map(|j| {
            let path = share_path(dir, j, &key_id);
            let share = PartyShare::from_bytes(&read_input(&path, "share")?)
                .with_context(|| format!("loading {}", path.display()))?;
            if share.j != j || share.key_id != key_id {
                bail!("{} does not belong to party {j} of key {key_id}", path.display());
            }
            Ok(share)
        })
        .collect()
}

/// Shares that load cleanly; a missing or damaged file counts as a party
/// that is down.
fn available_shares(dir: &Path, pk: &PublicKey) -> Vec<PartyShare> {
    let key_id = pk.key_id();
    (1..=pk.params.l)
        .filter_map(|j| {
            let path = share_path(dir, j, &key_id);
            match fs::read(&path).map_err(anyhow::Error::from).and_then(|b| Ok(PartyShare::from_bytes(&b)?)) {
                Ok(share) if share.j == j && share.key_id == key_id => Some(share),
                Ok(_) => {
                    warn!("{} belongs to another party or key", path.display());
                    None
                }
                Err(e) => {
                    warn!("{}: {e}", path.display());
                    None
                }
            }
        })
        .collect()
}

fn read_message(path: &Option<PathBuf>) -> Result<Vec<u8>> {
    match path {
        Some(p) => read_input(p, "message"),
        None => {
            let mut buf = Vec::new();
            io::stdin().read_to_end(&mut buf).context("reading standard input")?;
            Ok(buf)
        }
    }
}

fn cmd_keygen(args: &KeygenArgs) -> Result<()> {
    let params = args.params.params()?;
    for path in [&args.key, &args.pubkey] {
        if path.exists() && !args.force {
            return Err(usage(format!("{} exists; pass --force to overwrite", path.display())));
        }
    }
    let mut rng = rand::rngs::OsRng;
    let mut ops = OpCounter::new();
    let (sk, pk, shares) = scheme::keygen(&params, &mut rng, &mut ops);
    let sk = if args.params.preset == Preset::Esem2 {
        sk.expand(&mut ops)
    } else {
        sk
    };
    let key_id = pk.key_id();
    for share in &shares {
        let path = share_path(&args.share_dir, share.j, &key_id);
        fs::create_dir_all(path.parent().expect("share path has a parent"))?;
        write_atomic(&path, &share.to_bytes()).with_context(|| format!("writing {}", path.display()))?;
    }
    write_atomic(&args.pubkey, &pk.to_bytes()).with_context(|| format!("writing {}", args.pubkey.display()))?;
    FileSigner::create(&args.key, &sk, true).with_context(|| format!("writing {}", args.key.display()))?;
    println!("{key_id}");
    Ok(())
}

fn cmd_sign(args: &SignArgs) -> Result<()> {
    let m = read_message(&args.message)?;
    let mut signer = FileSigner::open(&args.key).with_context(|| format!("opening {}", args.key.display()))?;
    let crash = std::env::var_os(CRASH_ENV).is_some();
    let sig = signer
        .sign_with_hook(&m, &mut OpCounter::new(), |c| {
            info!("reserved counter {c}");
            if crash {
                std::process::abort();
            }
        })
        .context("signing")?;
    let bytes = sig.to_bytes();
    match &args.out {
        Some(path) => write_atomic(path, &bytes).with_context(|| format!("writing {}", path.display()))?,
        None => {
            let mut out = io::stdout().lock();
            out.write_all(&bytes)?;
            out.flush()?;
        }
    }
    Ok(())
}

fn cmd_serve(args: &ServeArgs) -> Result<()> {
    let store = Arc::new(
        ShareStore::open(&args.share_dir).with_context(|| format!("loading shares from {}", args.share_dir.display()))?,
    );
    let server = PartyServer::bind(args.listen.as_str(), Arc::clone(&store))
        .with_context(|| format!("binding {}", args.listen))?
        .with_options(ServerOptions {
            delay: Duration::from_millis(args.delay_ms),
            corrupt_points: false,
        });
    // Scripts wait for this line before connecting.
    println!("listening on {} with {} share(s)", server.local_addr()?, store.len());
    io::stdout().flush()?;
    server.run()?;
    Ok(())
}

fn cmd_provision(args: &ProvisionArgs) -> Result<()> {
    let pk = load_pubkey(&args.pubkey)?;
    let shares = load_shares(&args.share_dir, &pk)?;
    let client = PartyClient::parse(&args.endpoints).map_err(|e| usage(e.to_string()))?;
    if client.endpoints().len() != shares.len() {
        return Err(usage(format!(
            "key has {} parties but {} endpoints were given",
            shares.len(),
            client.endpoints().len()
        )));
    }
    client.provision(&shares)?;
    println!("provisioned {} to {} parties", pk.key_id(), shares.len());
    Ok(())
}

fn cmd_verify(args: &VerifyArgs) -> Result<Verdict> {
    let pk = load_pubkey(&args.pubkey)?;
    let sig = read_input(&args.sig, "signature")?;
    let m = read_message(&args.message)?;
    let mut ops = OpCounter::new();
    let verdict = match (&args.endpoints, &args.local_shares) {
        (Some(list), _) => {
            let client = PartyClient::parse(list)
                .map_err(|e| usage(e.to_string()))?
                .with_timeout(Duration::from_millis(args.timeout_ms));
            if client.endpoints().len() != pk.params.l() {
                return Err(usage(format!(
                    "key needs {} endpoints, got {}",
                    pk.params.l(),
                    client.endpoints().len()
                )));
            }
            scheme::verify_bytes(&m, &sig, &pk, &client, &mut ops)
        }
        (None, Some(dir)) => {
            let parties = LocalParties::new(available_shares(dir, &pk), pk.params.l());
            scheme::verify_bytes(&m, &sig, &pk, &parties, &mut ops)
        }
        (None, None) => return Err(usage("need --endpoints or --local-shares")),
    };
    Ok(verdict)
}

fn bench_config(args: &BenchArgs) -> Result<BenchConfig> {
    if args.iterations == 0 {
        return Err(usage("--iterations must be positive"));
    }
    let params = args.params.params()?;
    Ok(match args.params.preset {
        Preset::Esem => BenchConfig {
            iterations: args.iterations,
            ..BenchConfig::default()
        },
        _ => BenchConfig {
            iterations: args.iterations,
            esem: params,
            esem2: params,
        },
    })
}

fn cmd_bench(args: &BenchArgs) -> Result<()> {
    let report = bench::run(&bench_config(args)?, &mut rand::rngs::OsRng);
    print!("{}", report.render(args.format.into())?);
    Ok(())
}

fn parse_scheme(spec: &str) -> Result<SchemeCost<f64>> {
    let (name, secs) = spec
        .split_once('=')
        .ok_or_else(|| usage(format!("--scheme expects NAME=SECONDS, got {spec:?}")))?;
    let secs: f64 = secs
        .trim()
        .parse()
        .map_err(|_| usage(format!("bad sign time in {spec:?}")))?;
    SchemeCost::new(name.trim(), secs).map_err(|e| usage(e.to_string()))
}

fn cmd_energy(args: &EnergyArgs) -> Result<()> {
    let idle = match args.idle {
        Idle::Full => IdleAccounting::FullInterval,
        Idle::Exclude => IdleAccounting::ExcludeActive,
    };
    let mut schemes = SchemeCost::reference_table();
    for spec in &args.schemes {
        schemes.push(parse_scheme(spec)?);
    }
    if let Some(iterations) = args.measured {
        let config = BenchConfig {
            iterations: iterations.max(1),
            ..BenchConfig::default()
        };
        let report = bench::run(&config, &mut rand::rngs::OsRng);
        schemes.extend(report.sign_costs().into_iter().map(|mut c| {
            c.name = format!("{} (measured)", c.name);
            c
        }));
    }

    let mut rows = Vec::new();
    if args.profile.is_empty() {
        let sensors = [SensorProfile::pulse(), SensorProfile::pressure()];
        rows = energy::build_report(&DeviceProfile::avr(), &sensors, &schemes, idle);
    } else {
        for path in &args.profile {
            let text = fs::read_to_string(path)
                .map_err(|e| usage(format!("cannot read profile {}: {e}", path.display())))?;
            let profile = energy::parse_profile::<f64>(&text)
                .map_err(|e| usage(format!("{}: {e}", path.display())))?;
            rows.extend(energy::build_report(
                &profile.device,
                std::slice::from_ref(&profile.sensor),
                &schemes,
                idle,
            ));
        }
    }
    print!("{}", energy::emit_report(&rows, args.format.into())?);
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Keygen(a) => cmd_keygen(a)?,
        Command::Sign(a) => cmd_sign(a)?,
        Command::Serve(a) => cmd_serve(a)?,
        Command::Provision(a) => cmd_provision(a)?,
        Command::Bench(a) => cmd_bench(a)?,
        Command::Energy(a) => cmd_energy(a)?,
        Command::Verify(a) => {
            return Ok(match cmd_verify(a)? {
                Verdict::Accept => {
                    println!("accept");
                    ExitCode::SUCCESS
                }
                Verdict::Reject => {
                    println!("reject");
                    ExitCode::from(EXIT_REJECT)
                }
                Verdict::Unavailable(why) => {
                    println!("unavailable");
                    eprintln!("{why}");
                    ExitCode::from(EXIT_UNAVAILABLE)
                }
            })
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let default_level = match cli.command {
        Command::Serve(_) => "info",
        _ => "warn",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(default_level)).init();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
