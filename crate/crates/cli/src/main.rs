mod error;
mod store;

use std::fs;
use std::path::{Path, PathBuf};
use std::process;

use clap::{Args, Parser, Subcommand};
use rand::rngs::OsRng;
use robinson_core::bench::{
    cost_report, hourly_histogram, measured_costs, run_flash_crowd, run_pruning_bench,
    storage_report, write_tsv, ArrivalPattern, CostParams, FlashCrowdScenario,
    PAPER_REFERENCE_GB_100M,
};
use robinson_core::binding::Tel;
use robinson_core::prune::{prune, PruneMode, PruneRequest};
use robinson_core::registry::{
    answer_challenge, IssuedChallenge, Mode, Registry, RegistryError, SubscriberKeys, SystemConfig,
    NONCE_LEN,
};

use error::{CliError, ExitCode};
use store::{open_registry, parse_hex, read_keys, write_keys, ChallengeFile, DirLock};

#[derive(Parser)]
#[command(name = "robinson", version, about = "Do-not-call registry on a simulated token ledger")]
struct Cli {
    /// Directory holding the ledger, the identity cache and the system record.
    #[arg(long, global = true, default_value = "robinson-data", env = "ROBINSON_DATA_DIR")]
    data_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Create a new registry in an empty data directory.
    Init(InitArgs),
    /// Print asset ids and system addresses.
    Info,
    /// Enroll a number; new enrollments start opted out.
    Enroll(EnrollArgs),
    /// Sign a challenge nonce with a subscriber key.
    Answer {
        #[arg(long)]
        tel: String,
        #[arg(long)]
        keyfile: PathBuf,
        #[arg(long)]
        nonce: String,
    },
    /// Swap the held token, flipping between opt-out and opt-in.
    Switch {
        #[arg(long)]
        tel: String,
        #[arg(long)]
        keyfile: PathBuf,
    },
    /// Print the current choice of a number: in, out or none.
    Status {
        #[arg(long)]
        tel: String,
    },
    /// Remove opted-out numbers from a call list.
    Prune(PruneArgs),
    /// Compare the identity cache with the bindings on chain.
    Audit,
    /// Seal empty block slots.
    Advance {
        #[arg(long, default_value_t = 1)]
        blocks: u64,
    },
    /// Run a benchmark workload.
    #[command(subcommand)]
    Bench(BenchCommand),
}

#[derive(Args)]
struct InitArgs {
    /// Tokens minted of each kind; defaults to twice the expected subscribers.
    #[arg(long)]
    supply: Option<u64>,
    /// Expected subscribers; defaults to half the supply, or 1000.
    #[arg(long)]
    subscribers: Option<u64>,
    #[arg(long, default_value = "direct")]
    mode: Mode,
    /// Seconds between blocks.
    #[arg(long)]
    interval: Option<u64>,
    /// Skip block slots that would carry no transactions.
    #[arg(long)]
    no_empty_blocks: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct EnrollArgs {
    #[arg(long)]
    tel: String,
    /// Existing keyfile to enroll with; created if missing.
    /// Defaults to keys/<tel>.key inside the data directory.
    #[arg(long)]
    keyfile: Option<PathBuf>,
    /// Issue the challenge and stop; finish with --nonce and --answer.
    #[arg(long)]
    strict_challenge: bool,
    #[arg(long, requires_all = ["strict_challenge", "answer"])]
    nonce: Option<String>,
    #[arg(long, requires = "nonce")]
    answer: Option<String>,
}

#[derive(Args)]
struct PruneArgs {
    /// Call list, one number per line.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value = "cache")]
    mode: PruneMode,
    /// Also write holding proofs to <out>.proofs.
    #[arg(long, requires = "out")]
    proofs: bool,
    /// Pruned list; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Enrollment throughput of a crowd of new subscribers.
    Flashcrowd {
        #[arg(long, default_value_t = 1000)]
        subscribers: u64,
        #[arg(long, default_value = "batch")]
        pattern: ArrivalPattern,
        #[arg(long, default_value = "direct")]
        mode: Mode,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Arrivals per hour, as tab-separated columns.
        #[arg(long)]
        histogram: Option<PathBuf>,
    },
    /// Cache lookup against chain scan for growing chains and call lists.
    Pruning {
        #[arg(long, value_delimiter = ',', default_value = "0,100,1000")]
        lists: Vec<u64>,
        #[arg(long, value_delimiter = ',', default_value = "1000,2000,4000")]
        chains: Vec<u64>,
        #[arg(long, default_value_t = 3)]
        runs: usize,
        #[arg(long, default_value = "direct")]
        mode: Mode,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Chain-scan time against notes times list size.
        #[arg(long)]
        tsv: Option<PathBuf>,
    },
    /// Block log size against enrolled subscribers.
    Storage {
        #[arg(long, value_delimiter = ',', default_value = "100,200,400,800")]
        samples: Vec<u64>,
        #[arg(long, default_value = "direct")]
        mode: Mode,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Scratch directory for the sample systems; a temporary one when absent.
        #[arg(long)]
        work_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 100_000_000)]
        extrapolate: u64,
        #[arg(long)]
        tsv: Option<PathBuf>,
    },
    /// Algo outlay for enrollments and switches.
    Cost {
        #[arg(long, default_value_t = 1_500_000)]
        subscribers: u64,
        #[arg(long, default_value_t = 0)]
        switches: u64,
        #[arg(long, default_value = "direct")]
        mode: Mode,
        /// Run the workload on a ledger instead of evaluating the formula.
        #[arg(long)]
        live: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("{}", e.line());
        process::exit(e.code as i32);
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let dir = cli.data_dir.as_path();
    match cli.command {
        Command::Init(a) => init(dir, a),
        Command::Info => {
            print_info(&open_registry(dir)?);
            Ok(())
        }
        Command::Enroll(a) => enroll(dir, a),
        Command::Answer { tel, keyfile, nonce } => {
            let tel = parse_tel(&tel)?;
            let keys = read_keys(&keyfile)?;
            let nonce: [u8; NONCE_LEN] = parse_hex(&nonce, "nonce")?;
            println!("{}", hex::encode(answer_challenge(&keys.sign, &tel, &nonce)));
            Ok(())
        }
        Command::Switch { tel, keyfile } => {
            let tel = parse_tel(&tel)?;
            let keys = read_keys(&keyfile)?;
            let _lock = DirLock::acquire(dir)?;
            let mut reg = open_registry(dir)?;
            let receipt = reg.switch_option(&tel, &keys.sign)?;
            reg.seal()?;
            println!("{}", receipt.to_record());
            println!("{}", reg.current_option(&tel));
            Ok(())
        }
        Command::Status { tel } => {
            let tel = parse_tel(&tel)?;
            println!("{}", open_registry(dir)?.current_option(&tel));
            Ok(())
        }
        Command::Prune(a) => prune_list(dir, a),
        Command::Audit => {
            let report = open_registry(dir)?.audit_cache();
            for d in &report.diffs {
                println!("{d}");
            }
            println!(
                "audit\tdiffs={}\tnotes_scanned={}",
                report.diffs.len(),
                report.notes_scanned
            );
            if report.is_clean() {
                Ok(())
            } else {
                Err(CliError::new(
                    ExitCode::AuditDiffs,
                    "audit-diffs",
                    format!("{} cache entries disagree with the chain", report.diffs.len()),
                ))
            }
        }
        Command::Advance { blocks } => {
            let _lock = DirLock::acquire(dir)?;
            let mut reg = open_registry(dir)?;
            println!("height\t{}", reg.advance_blocks(blocks)?);
            Ok(())
        }
        Command::Bench(b) => bench(b),
    }
}

fn parse_tel(raw: &str) -> Result<Tel, CliError> {
    Tel::parse(raw).map_err(|e| CliError::new(ExitCode::InvalidInput, "invalid-tel", format!("{raw:?}: {e}")))
}

fn print_info(reg: &Registry) {
    let info = reg.info();
    println!("mode\t{}", reg.mode());
    println!("in_asset\t{}", info.in_asset);
    println!("out_asset\t{}", info.out_asset);
    println!("c_address\t{}", info.c_address);
    println!("attestator\t{}", info.attestator);
    println!("exchange\t{}", info.exchange);
    println!("height\t{}", reg.ledger().height());
}

fn init(dir: &Path, a: InitArgs) -> Result<(), CliError> {
    let expected = a
        .subscribers
        .or(a.supply.map(|s| s / 2))
        .unwrap_or(1000);
    let mut cfg = SystemConfig::for_subscribers(expected, a.mode).with_seed(a.seed);
    if let Some(s) = a.supply {
        cfg.token_supply = s;
    }
    if let Some(i) = a.interval {
        cfg.block_interval = i;
    }
    cfg.empty_blocks = !a.no_empty_blocks;
    let reg = Registry::init_in_dir(dir, cfg)?;
    print_info(&reg);
    Ok(())
}

fn enroll(dir: &Path, a: EnrollArgs) -> Result<(), CliError> {
    let tel = parse_tel(&a.tel)?;
    let _lock = DirLock::acquire(dir)?;
    let mut reg = open_registry(dir)?;
    if reg.cache().contains(&tel) {
        return Err(RegistryError::DuplicateTel(tel).into());
    }
    let keyfile = a
        .keyfile
        .unwrap_or_else(|| dir.join("keys").join(format!("{tel}.key")));
    let keys = if keyfile.exists() {
        read_keys(&keyfile)?
    } else if a.nonce.is_some() {
        return Err(CliError::invalid(format!(
            "{} does not exist; the challenge was issued to another key",
            keyfile.display()
        )));
    } else {
        let keys = SubscriberKeys::generate(&mut OsRng);
        write_keys(&keyfile, &keys)?;
        keys
    };
    println!("keyfile\t{}", keyfile.display());

    if !a.strict_challenge {
        let nonce = reg.issue_challenge(&tel, keys.public_key());
        println!("nonce\t{}", hex::encode(nonce));
        let sig = answer_challenge(&keys.sign, &tel, &nonce);
        let receipt = reg.enroll_with_challenge(&tel, &keys, &nonce, &sig, None)?;
        reg.seal()?;
        println!("{}", receipt.to_record());
        println!("{}", reg.current_option(&tel));
        return Ok(());
    }

    let mut book = ChallengeFile::load(dir)?;
    match (a.nonce, a.answer) {
        (Some(nonce), Some(answer)) => {
            let nonce: [u8; NONCE_LEN] = parse_hex(&nonce, "nonce")?;
            let sig: [u8; 64] = parse_hex(&answer, "answer")?;
            book.restore_into(&mut reg);
            let result = reg.enroll_with_challenge(&tel, &keys, &nonce, &sig, None);
            // a nonce answers at most once, right or wrong
            let still_open = reg.challenges().outstanding().any(|(n, _)| *n == nonce);
            if !still_open {
                book.remove(&nonce);
                book.save()?;
            }
            let receipt = result?;
            reg.seal()?;
            println!("{}", receipt.to_record());
            println!("{}", reg.current_option(&tel));
        }
        _ => {
            let nonce = reg.issue_challenge(&tel, keys.public_key());
            book.push(
                nonce,
                IssuedChallenge {
                    tel: tel.clone(),
                    claimed_key: keys.public_key(),
                    issued_at: reg.now(),
                },
            );
            book.save()?;
            println!("nonce\t{}", hex::encode(nonce));
            eprintln!("sign the nonce with `robinson answer`, then rerun enroll with --nonce and --answer");
        }
    }
    Ok(())
}

fn prune_list(dir: &Path, a: PruneArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&a.input).map_err(|e| CliError::io(e, &a.input.display().to_string()))?;
    let mut req = PruneRequest::from_lines(&text, a.mode);
    if a.proofs {
        req = req.with_proofs();
    }
    let reg = open_registry(dir)?;
    let result = prune(&reg, &req)?;
    let kept: String = result.kept.iter().map(|t| format!("{t}\n")).collect();
    match &a.out {
        Some(out) => {
            fs::write(out, kept).map_err(|e| CliError::io(e, &out.display().to_string()))?;
            if let Some(proofs) = &result.proofs {
                let path = PathBuf::from(format!("{}.proofs", out.display()));
                let body: String = proofs.iter().map(|p| p.to_record() + "\n").collect();
                fs::write(&path, body).map_err(|e| CliError::io(e, &path.display().to_string()))?;
            }
        }
        None => print!("{kept}"),
    }
    eprintln!("{}", result.summary());
    Ok(())
}

fn write_points(path: &Option<PathBuf>, points: &[(f64, f64)]) -> Result<(), CliError> {
    match path {
        Some(p) => write_tsv(p, points).map_err(|e| CliError::io(e, &p.display().to_string())),
        None => Ok(()),
    }
}

fn bench(b: BenchCommand) -> Result<(), CliError> {
    match b {
        BenchCommand::Flashcrowd {
            subscribers,
            pattern,
            mode,
            seed,
            histogram,
        } => {
            let mut s = FlashCrowdScenario::new(subscribers, pattern);
            s.mode = mode;
            s.seed = seed;
            let hist: Vec<(f64, f64)> = hourly_histogram(&s.arrivals())
                .into_iter()
                .map(|(h, c)| (h as f64, c as f64))
                .collect();
            write_points(&histogram, &hist)?;
            let (report, _) = run_flash_crowd(&s)?;
            println!("{}", report.to_record());
            if let Some(why) = &report.aborted {
                return Err(CliError::new(ExitCode::LedgerRejected, "aborted", why.clone()));
            }
        }
        BenchCommand::Pruning {
            lists,
            chains,
            runs,
            mode,
            seed,
            tsv,
        } => {
            let report = run_pruning_bench(&lists, &chains, runs.max(1), mode, seed)?;
            write_points(&tsv, &report.chain_points())?;
            println!("{}", report.to_record());
        }
        BenchCommand::Storage {
            samples,
            mode,
            seed,
            work_dir,
            extrapolate,
            tsv,
        } => {
            let (work, scratch) = match work_dir {
                Some(w) => (w, false),
                None => (
                    std::env::temp_dir().join(format!("robinson-storage-{}", process::id())),
                    true,
                ),
            };
            let report = storage_report(&work, &samples, mode, seed);
            if scratch {
                let _ = fs::remove_dir_all(&work);
            }
            let report = report?;
            write_points(&tsv, &report.points())?;
            println!("{}", report.to_record());
            if let Some(bytes) = report.extrapolate(extrapolate) {
                println!(
                    "extrapolated\tsubscribers={extrapolate}\tgb={:.1}\treference_gb_100m={PAPER_REFERENCE_GB_100M}",
                    bytes / 1e9
                );
            }
        }
        BenchCommand::Cost {
            subscribers,
            switches,
            mode,
            live,
            seed,
        } => {
            let report = if live {
                measured_costs(subscribers, switches, mode, seed)?
            } else {
                cost_report(subscribers, switches, mode, &CostParams::default())
            };
            println!("{}", report.to_record());
        }
    }
    Ok(())
}
