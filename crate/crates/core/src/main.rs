use std::error::Error;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use rand::rngs::OsRng;

use compchall::attacksim::{emit_report, simulate_online_attack, CostInputs, CostTable, ReportFormat, SimSetup};
use compchall::config::ServerConfig;
use compchall::hashcodec::HashConfig;
use compchall::net::{Client, Server, ServerEngine, TcpTransport};
use compchall::protocol::{PuzzleParams, Variant, DEFAULT_CHAIN_LENGTH, DEFAULT_K_BITS};
use compchall::userstore::UserStore;

type Result<T> = std::result::Result<T, Box<dyn Error>>;

#[derive(Parser)]
#[command(name = "compchall", version, about = "Hash-puzzle challenge-response login server, client and cost model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the login server.
    Serve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value = "127.0.0.1:7420")]
        listen: String,
    },
    /// Log in to a running server.
    Login {
        #[arg(long)]
        server: String,
        #[arg(long)]
        user: String,
        #[arg(long)]
        password: String,
        #[arg(long, default_value = "base")]
        variant: Variant,
        /// Keep the last successful response here and try it first next time.
        #[arg(long)]
        cache: Option<PathBuf>,
        #[arg(long, default_value = "sha256")]
        hash: String,
    },
    /// Enroll a user in a store file, creating the file if needed.
    Useradd {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        user: String,
        #[arg(long)]
        password: String,
        #[arg(long, default_value = "base")]
        variant: Variant,
        #[arg(long, default_value_t = DEFAULT_CHAIN_LENGTH)]
        chain_length: u32,
        #[arg(long, default_value = "sha256")]
        hash: String,
    },
    /// Write a server config with a fresh random key.
    Keygen {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_K_BITS)]
        k: u32,
        #[arg(long, default_value = "base")]
        default_variant: Variant,
    },
    /// Simulate an online dictionary attack against a stored user.
    Attack {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        user: String,
        #[arg(long)]
        dict: PathBuf,
        #[arg(long, default_value_t = DEFAULT_K_BITS)]
        k: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Report path; `.json` for JSON, CSV otherwise.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.005)]
        t_ms: f64,
        #[arg(long, default_value = "sha256")]
        hash: String,
    },
    /// Print the attack cost table.
    Cost {
        #[arg(long, default_value_t = DEFAULT_K_BITS)]
        k: u32,
        #[arg(long, default_value_t = 0.005)]
        t_ms: f64,
        #[arg(long, default_value_t = 10_000_000)]
        guesses: u64,
        /// Show only one offline-attack row.
        #[arg(long)]
        variant: Option<Variant>,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("compchall: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Serve { config, store, listen } => {
            let config = ServerConfig::load(&config)?;
            let store = UserStore::open(&store, config.hash, config.params.k_bits())?;
            let server = Server::bind(&listen, Arc::new(ServerEngine::new(config, Arc::new(store))))?;
            println!("listening on {}", server.local_addr()?);
            std::io::stdout().flush()?;
            server.run()?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Login {
            server,
            user,
            password,
            variant,
            cache,
            hash,
        } => {
            let mut client = Client::new(HashConfig::from_name(&hash)?);
            if let Some(path) = &cache {
                client.load_cache(path)?;
            }
            let report = client.login(&mut TcpTransport::new(server), &user, &password, variant)?;
            if let Some(path) = &cache {
                client.save_cache(path)?;
            }
            println!("result: {}", if report.succeeded() { "OK" } else { "FAIL" });
            println!("cache: {}", if report.cache_hit { "hit" } else if report.stale_cache { "stale" } else { "miss" });
            println!("puzzle evaluations: {}", report.evaluations);
            println!("solve time: {:.3} s", report.solve_time.as_secs_f64());
            if let Some(rate) = report.hash_rate() {
                println!("hash rate: {rate:.0} H/s");
            }
            Ok(if report.succeeded() { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Useradd {
            store,
            user,
            password,
            variant,
            chain_length,
            hash,
        } => {
            let store = UserStore::open(&store, HashConfig::from_name(&hash)?, DEFAULT_K_BITS)?;
            store.enroll(&user, &password, variant, chain_length)?;
            println!("enrolled {user} ({variant})");
            Ok(ExitCode::SUCCESS)
        }
        Command::Keygen { out, k, default_variant } => {
            let mut config = ServerConfig::generate(PuzzleParams::new(k)?, &mut OsRng)?;
            config.default_variant = default_variant;
            config.write(&out)?;
            println!("wrote {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Attack {
            store,
            user,
            dict,
            k,
            seed,
            out,
            t_ms,
            hash,
        } => {
            let hash = HashConfig::from_name(&hash)?;
            let store = UserStore::load(&store, hash)?;
            let target = store.get(&user).ok_or_else(|| format!("unknown user `{user}`"))?;
            let dictionary: Vec<String> = fs::read_to_string(&dict)?
                .lines()
                .filter(|l| !l.is_empty())
                .map(str::to_string)
                .collect();
            let params = if k == 0 { PuzzleParams::unthrottled() } else { PuzzleParams::new(k)? };
            let setup = SimSetup {
                params,
                t_per_hash: t_ms / 1000.0,
                seed,
                hash,
            };
            let report = simulate_online_attack(&dictionary, &target, &setup)?;
            emit_report(&report, ReportFormat::from_path(&out), &out)?;
            println!("attempts: {}", report.attempts);
            println!("puzzle solves: {}", report.puzzle_solves);
            println!("hash evaluations: {}", report.total_hash_evals);
            println!("virtual time: {} s", compchall::attacksim::fmt_decimal(report.virtual_elapsed));
            println!("guesses per second: {:.3}", report.guesses_per_second);
            println!("password found: {}", if report.success { "yes" } else { "no" });
            Ok(ExitCode::SUCCESS)
        }
        Command::Cost { k, t_ms, guesses, variant } => {
            if k > 32 {
                return Err("k must be at most 32".into());
            }
            let table = CostTable::new(CostInputs {
                k_bits: k,
                t_per_hash: t_ms / 1000.0,
                n_guesses: guesses,
            });
            print!("{}", table.render(variant));
            Ok(ExitCode::SUCCESS)
        }
    }
}
