use std::io::Read;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use judgekit::curation::{curate, CurationConfig, RawProblem};
use judgekit::evalmetrics::{compute_quality, label_solutions, render_table};
use judgekit::llm::client_from_uri;
use judgekit::sandbox::ExecutionLimits;
use judgekit::spjgen::run_pipeline;
use judgekit::store::{load_problems, load_suite, read_records, save_suite, write_records};
use judgekit::testgen::{synthesize_suite, SynthesisConfig, SynthesisLogEntry};
use judgekit::{compile, CompileResult, Engine, Problem, Solution, TestSuite, TestgenError};
use judgekit_cli::service::{serve, AppState, SuiteStore, ENV_WORKERS};
use judgekit_cli::{build_engine, file_stem, judge_submission};

#[derive(Parser)]
#[command(name = "judgekit", version, about = "Sandboxed judging, test synthesis and suite evaluation")]
struct Cli {
    /// Directory under which per-run workdirs are created.
    #[arg(long, global = true, env = "JUDGEKIT_SANDBOX_ROOT")]
    sandbox_root: Option<PathBuf>,
    /// Directory of language profile TOML files (replaces the builtin set).
    #[arg(long, global = true, env = "JUDGEKIT_PROFILE_DIR")]
    profiles: Option<PathBuf>,
    /// Run guests without isolation. Development only.
    #[arg(long, global = true, env = "JUDGEKIT_UNSAFE_DEV")]
    unsafe_dev: bool,
    /// More log output; repeat for debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compile and run one program once; prints the execution outcome as JSON.
    Run {
        #[arg(long)]
        lang: String,
        /// Source file.
        #[arg(long)]
        source: PathBuf,
        /// File fed to stdin; `-` reads this process's stdin. Empty by default.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 2000)]
        time_ms: u64,
        #[arg(long, default_value_t = 256)]
        memory_mb: u64,
    },
    /// Judge a solution; prints the JudgeReport. Exit 1 unless every case is accepted.
    Judge {
        /// Problem JSON; its public tests are used when --suite is absent.
        #[arg(long)]
        problem: Option<PathBuf>,
        /// Suite file (.json, or .jsonl with a header line).
        #[arg(long)]
        suite: Option<PathBuf>,
        /// Solution source file.
        #[arg(long)]
        solution: PathBuf,
        #[arg(long)]
        lang: String,
        #[arg(long, default_value_t = 1)]
        parallelism: usize,
        /// Stop at the first failing case.
        #[arg(long)]
        early_stop: bool,
    },
    /// Generate a suite per problem with LLM-written input generators.
    Synthesize {
        /// Problems as JSONL or a JSON array.
        #[arg(long)]
        problems: PathBuf,
        /// `mock:<script.jsonl>` or `http(s)://<base-url>`.
        #[arg(long)]
        llm: String,
        /// Output directory: one `<id>.json` suite per problem plus `_synthesis_log.jsonl`.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 80)]
        regular: usize,
        #[arg(long, default_value_t = 20)]
        corner: usize,
        #[arg(long, default_value_t = 3)]
        max_rounds: u32,
        #[arg(long, default_value_t = 1)]
        parallelism: usize,
        /// Fix the gold pair as `i,j` instead of picking the fastest golds.
        #[arg(long, value_parser = parse_pair)]
        gold_pair: Option<(usize, usize)>,
    },
    /// Generate, review and validate special-judge checkers.
    Spj {
        #[arg(long)]
        problems: PathBuf,
        /// Directory of suites produced by `synthesize`.
        #[arg(long)]
        suites: PathBuf,
        #[arg(long)]
        llm: String,
        /// Outcome records (JSONL).
        #[arg(long)]
        out: PathBuf,
        /// Store a valid reviewed checker into the problem's suite file.
        #[arg(long)]
        attach: bool,
        #[arg(long, default_value_t = 1)]
        parallelism: usize,
    },
    /// Filter a raw problem corpus; prints the curation report.
    Curate {
        #[arg(long)]
        input: PathBuf,
        /// Kept problems (JSONL).
        #[arg(long)]
        out: PathBuf,
        /// Also write the report JSON here.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, default_value_t = 8)]
        ngram: usize,
        #[arg(long, default_value_t = 0.85)]
        threshold: f64,
        #[arg(long, default_value_t = 1)]
        parallelism: usize,
    },
    /// TPR/TNR of a suite over candidates labeled by a full evaluation set.
    Eval {
        /// Candidate solutions (JSONL or JSON array of {language, source}).
        #[arg(long)]
        candidates: PathBuf,
        /// Suite used for labeling.
        #[arg(long)]
        full_set: PathBuf,
        /// Suite under test.
        #[arg(long)]
        suite: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
        /// Write the labeled solutions here.
        #[arg(long)]
        labels_out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        parallelism: usize,
    },
    /// Reward service: POST /v1/judge, GET /v1/health.
    Serve {
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8700)]
        port: u16,
        /// Suite store directory.
        #[arg(long)]
        suites: PathBuf,
        /// Concurrent judge requests; defaults to the number of CPUs.
        #[arg(long, env = ENV_WORKERS)]
        workers: Option<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Table,
}

fn parse_pair(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or("expected i,j")?;
    let a = a.trim().parse().map_err(|e| format!("{e}"))?;
    let b = b.trim().parse().map_err(|e| format!("{e}"))?;
    if a == b {
        return Err("the two golds must differ".into());
    }
    Ok((a, b))
}

fn print_json<T: serde::Serialize>(v: &T) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn read_text(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let engine = || build_engine(cli.sandbox_root.as_deref(), cli.profiles.as_deref(), cli.unsafe_dev);
    match cli.command {
        Command::Run { ref lang, ref source, ref input, time_ms, memory_mb } => {
            let engine = engine()?;
            let stdin = match input {
                None => Vec::new(),
                Some(p) if p.as_os_str() == "-" => {
                    let mut buf = Vec::new();
                    std::io::stdin().read_to_end(&mut buf)?;
                    buf
                }
                Some(p) => std::fs::read(p).with_context(|| format!("reading {}", p.display()))?,
            };
            let profile = engine.resolve(lang)?;
            let artifact = match compile(&engine, &read_text(source)?, &profile)? {
                CompileResult::Ok(a) => a,
                CompileResult::Failure(log) => {
                    eprintln!("{log}");
                    print_json(&serde_json::json!({ "compile_error": log }))?;
                    return Ok(ExitCode::from(1));
                }
            };
            let limits = ExecutionLimits::for_problem(time_ms, memory_mb * judgekit::sandbox::MIB);
            let out = engine.run_artifact(&artifact, &stdin, &limits, &[])?;
            print_json(&out)?;
            Ok(if out.termination.is_clean_exit() { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Judge { ref problem, ref suite, ref solution, ref lang, parallelism, early_stop } => {
            let suite = match (problem, suite) {
                (_, Some(s)) => load_suite(s).with_context(|| format!("loading {}", s.display()))?,
                (Some(p), None) => {
                    let problem: Problem = serde_json::from_str(&read_text(p)?)?;
                    TestSuite::public(&problem)
                }
                (None, None) => bail!("judge needs --suite or --problem"),
            };
            let engine = engine()?;
            let report = judge_submission(&engine, &suite, &read_text(solution)?, lang, early_stop, parallelism)?;
            print_json(&report)?;
            Ok(if report.all_accepted() { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Synthesize { ref problems, ref llm, ref out, regular, corner, max_rounds, parallelism, gold_pair } => {
            let config = SynthesisConfig {
                regular_count: regular,
                corner_count: corner,
                max_rounds,
                parallelism,
                gold_pair,
                ..SynthesisConfig::default()
            };
            config.validate().map_err(anyhow::Error::msg)?;
            let problems = load_problems(problems)?;
            let llm = client_from_uri(llm)?;
            let engine = engine()?;
            std::fs::create_dir_all(out)?;
            let mut log: Vec<SynthesisLogEntry> = Vec::new();
            let mut failed = 0;
            for p in &problems {
                match synthesize_suite(&engine, p, llm.as_ref(), &config) {
                    Ok(r) => {
                        let path = out.join(format!("{}.json", file_stem(&p.id)));
                        save_suite(&path, &r.suite)?;
                        eprintln!(
                            "{}: {} cases (rounds {}+{}) -> {}",
                            p.id,
                            r.suite.cases.len(),
                            r.rounds_used.regular,
                            r.rounds_used.corner,
                            path.display()
                        );
                        log.extend(r.log);
                    }
                    Err(TestgenError::SynthesisFailed { problem, history }) => {
                        eprintln!("{problem}: synthesis failed after {} feedback records", history.len());
                        log.extend(history);
                        failed += 1;
                    }
                    Err(e) => {
                        eprintln!("{}: {e}", p.id);
                        failed += 1;
                    }
                }
            }
            write_records(&out.join("_synthesis_log.jsonl"), &log)?;
            Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Spj { ref problems, ref suites, ref llm, ref out, attach, parallelism } => {
            let problems = load_problems(problems)?;
            let llm = client_from_uri(llm)?;
            let engine = engine()?;
            let mut outcomes = Vec::new();
            let mut failed = 0;
            for p in &problems {
                let path = suites.join(format!("{}.json", file_stem(&p.id)));
                let mut suite = match load_suite(&path) {
                    Ok(s) => s,
                    Err(e) => {
                        eprintln!("{}: no usable suite at {}: {e}", p.id, path.display());
                        failed += 1;
                        continue;
                    }
                };
                let Some(gold) = p.gold_solutions.first() else {
                    eprintln!("{}: no gold solution", p.id);
                    failed += 1;
                    continue;
                };
                match run_pipeline(&engine, p, llm.as_ref(), &suite, gold, parallelism) {
                    Ok(o) => {
                        if let Some(c) = o.checker() {
                            eprintln!("{}: checker pass rate {:.3}, valid {}", p.id, c.validation_pass_rate.unwrap_or(0.0), c.valid == Some(true));
                            if attach && c.valid == Some(true) {
                                suite.checker = Some(c.clone());
                                save_suite(&path, &suite)?;
                            }
                        } else {
                            eprintln!("{}: no checker needed", p.id);
                        }
                        outcomes.push(o);
                    }
                    Err(e) => {
                        eprintln!("{}: {e}", p.id);
                        failed += 1;
                    }
                }
            }
            write_records(out, &outcomes)?;
            Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Curate { ref input, ref out, ref report, ngram, threshold, parallelism } => {
            if ngram == 0 || !(threshold > 0.0 && threshold <= 1.0) {
                bail!("--ngram must be positive and --threshold in (0, 1]");
            }
            let raws: Vec<RawProblem> = read_records(input)?;
            let engine = engine()?;
            let (kept, r) = curate(&engine, raws, &CurationConfig { ngram, threshold, parallelism })?;
            write_records(out, &kept)?;
            if let Some(path) = report {
                std::fs::write(path, serde_json::to_string_pretty(&r)?)?;
            }
            print_json(&r)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Eval { ref candidates, ref full_set, ref suite, format, ref labels_out, parallelism } => {
            let candidates: Vec<Solution> = read_records(candidates)?;
            let full = load_suite(full_set)?;
            let under = load_suite(suite)?;
            let engine = engine()?;
            let labels = label_solutions(&engine, &candidates, &full, parallelism)?;
            if let Some(path) = labels_out {
                write_records(path, &labels)?;
            }
            let q = compute_quality(&engine, &labels, &under, parallelism)?;
            match format {
                Format::Json => print_json(&q)?,
                Format::Table => print!("{}", render_table(&q)),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Serve { ref host, port, ref suites, workers } => {
            let workers = workers.unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
            let store = Arc::new(SuiteStore::load(suites)?);
            let engine: Arc<Engine> = Arc::new(engine()?);
            let addr: SocketAddr = format!("{host}:{port}").parse().context("bad listen address")?;
            let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(addr).await?;
                log::info!("serving {} suites on {addr} with {workers} workers", store.len());
                eprintln!("listening on {}", listener.local_addr()?);
                serve(listener, Arc::new(AppState::new(engine, store, workers))).await
            })?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
