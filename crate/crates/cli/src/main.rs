use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use dcop_cli::bench::{
    self, algo_k, parse_heuristic, run_experiment, write_csv, ExperimentConfig, ResultRow, Status,
    WallClock,
};
use dcop_cli::io::{read_problem, write_problem};
use dcop_core::generator::{generate, GenConfig};
use dcop_core::mbdpop::{detect_clusters, dump_labels};
use dcop_core::model::{fig2_fixture, FIXTURE_TREE_EDGES};
use dcop_core::oracle::brute_force;
use dcop_core::pseudotree::from_tree_edges;
use dcop_core::runtime::{Clock, NullClock, RunOptions, RunStatus, Schedule};
use dcop_core::solver::{solve_on, toggles, Algorithm, SolveError};
use dcop_core::{build_pseudo_tree, Problem, PseudoTree, VariableId};
use thiserror::Error;

#[derive(Parser)]
#[command(
    name = "dcop",
    version,
    about = "DPOP, MB-DPOP and RMB-DPOP on a simulated message bus"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a benchmark instance.
    Gen(GenArgs),
    /// Solve an instance.
    Solve(SolveArgs),
    /// Run an experiment sweep described by a TOML file.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Record zero elapsed time and never time out.
        #[arg(long)]
        no_timing: bool,
    },
    /// Exhaustive search for small instances.
    Oracle {
        #[command(flatten)]
        src: Source,
    },
    /// Print the pseudo tree: one `node` line per variable.
    Tree {
        #[command(flatten)]
        src: Source,
    },
    /// Print the cycle-cut lists of every cluster node.
    Label {
        #[command(flatten)]
        src: Source,
        #[arg(long)]
        k: usize,
        #[arg(long, value_enum, default_value = "ism")]
        method: LabelMethod,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Random,
    Scalefree,
}

#[derive(Clone, Copy, ValueEnum)]
enum LabelMethod {
    Ism,
    Highest,
    Lowest,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgoName {
    Dpop,
    MbDpop,
    RmbDpop,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScheduleName {
    Fifo,
    Random,
}

#[derive(Args)]
struct GenArgs {
    #[arg(value_enum)]
    kind: Kind,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    density: Option<f64>,
    #[arg(long)]
    m0: Option<usize>,
    #[arg(long)]
    m1: Option<usize>,
    #[arg(long, default_value_t = 3)]
    domain: usize,
    #[arg(long, default_value_t = 100)]
    cost_max: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Source {
    /// Problem file.
    #[arg(long, required_unless_present = "fixture", conflicts_with = "fixture")]
    input: Option<PathBuf>,
    /// Use the built-in 14-agent example with its fixed pseudo tree.
    #[arg(long)]
    fixture: bool,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    src: Source,
    #[arg(long, value_enum)]
    algo: AlgoName,
    #[arg(long)]
    k: Option<usize>,
    /// Seed of the random schedule.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "fifo")]
    schedule: ScheduleName,
    #[arg(long)]
    timeout: Option<f64>,
    #[arg(long, default_value = "highest")]
    cc_heuristic: String,
    #[arg(long)]
    no_dem: bool,
    #[arg(long)]
    no_ism: bool,
    #[arg(long)]
    no_cache: bool,
    /// Write one line per delivered message.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write the run as a CSV row.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Record zero elapsed time and never time out.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Debug, Error)]
enum Failure {
    #[error("invalid input: {0:#}")]
    Invalid(anyhow::Error),
    #[error("{0}")]
    Width(String),
    #[error("timed out")]
    Timeout,
    #[error("{0:#}")]
    Other(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Other(_) => 1,
            Failure::Timeout => 2,
            Failure::Invalid(_) => 3,
            Failure::Width(_) => 4,
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

fn load(src: &Source) -> Result<(Problem, PseudoTree), Failure> {
    if src.fixture {
        let p = fig2_fixture();
        let t =
            from_tree_edges(&p, VariableId(0), &FIXTURE_TREE_EDGES).expect("fixture tree is valid");
        return Ok((p, t));
    }
    let path = src.input.as_deref().expect("clap enforces a source");
    let p = read_file(path)?;
    let t = build_pseudo_tree(&p).map_err(|e| Failure::Invalid(e.into()))?;
    Ok((p, t))
}

fn read_file(path: &Path) -> Result<Problem, Failure> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::Invalid)?;
    read_problem(&text)
        .with_context(|| format!("parsing {}", path.display()))
        .map_err(Failure::Invalid)
}

fn gen(a: GenArgs) -> Result<(), Failure> {
    let invalid = |m: &str| Failure::Invalid(anyhow::anyhow!("{m}"));
    let mut config = match a.kind {
        Kind::Random => GenConfig::random(
            a.n,
            a.density.ok_or_else(|| invalid("--density is required"))?,
            a.seed,
        ),
        Kind::Scalefree => GenConfig::scale_free(
            a.n,
            a.m0.ok_or_else(|| invalid("--m0 is required"))?,
            a.m1.ok_or_else(|| invalid("--m1 is required"))?,
            a.seed,
        ),
    };
    config.domain = a.domain;
    config.cost_max = a.cost_max;
    let p = generate(&config).map_err(|e| invalid(&e.0))?;
    let text = write_problem(&p);
    match a.out {
        Some(path) => {
            fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn algorithm(a: &SolveArgs) -> Result<Algorithm, Failure> {
    let k = || {
        a.k.ok_or_else(|| Failure::Invalid(anyhow::anyhow!("--k is required for this algorithm")))
    };
    Ok(match a.algo {
        AlgoName::Dpop => Algorithm::Dpop { cap: a.k },
        AlgoName::MbDpop => Algorithm::MbDpop {
            k: k()?,
            heuristic: parse_heuristic(Some(&a.cc_heuristic)).map_err(Failure::Invalid)?,
        },
        AlgoName::RmbDpop => Algorithm::RmbDpop {
            k: k()?,
            dem: !a.no_dem,
            ism: !a.no_ism,
            caching: !a.no_cache,
        },
    })
}

fn solve_cmd(a: SolveArgs) -> Result<(), Failure> {
    let (problem, tree) = load(&a.src)?;
    let algo = algorithm(&a)?;
    let wall = WallClock::start();
    let clock: &dyn Clock = if a.no_timing { &NullClock } else { &wall };
    let mut lines: Vec<String> = Vec::new();
    let mut sink = |l: &str| lines.push(l.to_string());
    let opts = RunOptions {
        schedule: match a.schedule {
            ScheduleName::Fifo => Schedule::Fifo,
            ScheduleName::Random => Schedule::Random(a.seed),
        },
        timeout_nanos: a.timeout.map(|s| (s * 1e9) as u64),
        clock,
        trace: if a.trace.is_some() {
            Some(&mut sink)
        } else {
            None
        },
    };
    let outcome = solve_on(&problem, &tree, &algo, opts);
    if let Some(path) = &a.trace {
        let mut text = lines.join("\n");
        if !text.is_empty() {
            text.push('\n');
        }
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    let r = match outcome {
        Ok(r) => r,
        Err(e @ SolveError::WidthExceeded { .. }) => return Err(Failure::Width(e.to_string())),
        Err(e) => return Err(Failure::Other(anyhow::anyhow!("{e}"))),
    };
    let status = if r.status == RunStatus::TimedOut {
        Status::Timeout
    } else {
        Status::Ok
    };
    if let Some(path) = &a.csv {
        let row = ResultRow {
            point: problem.name.clone(),
            algo: algo.name().to_string(),
            k: algo_k(&algo),
            toggles: toggles(&algo),
            seed: a.seed,
            status,
            cost: r.cost,
            msg_count: r.metrics.msg_count,
            network_load: r.metrics.network_load,
            elapsed_nanos: r.metrics.elapsed_nanos,
        };
        let mut w =
            csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
        w.write_record(bench::CSV_COLUMNS).context("writing csv")?;
        w.write_record(row.record()).context("writing csv")?;
        w.flush().context("writing csv")?;
    }
    if status == Status::Timeout {
        return Err(Failure::Timeout);
    }
    let values: Vec<String> = r.assignment.unwrap().iter().map(usize::to_string).collect();
    let mut out = std::io::stdout().lock();
    writeln!(out, "cost {}", r.cost.unwrap()).context("stdout")?;
    writeln!(out, "assignment {}", values.join(" ")).context("stdout")?;
    writeln!(out, "messages {}", r.metrics.total_messages()).context("stdout")?;
    writeln!(out, "network_load {}", r.metrics.network_load).context("stdout")?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.cmd {
        Cmd::Gen(a) => gen(a),
        Cmd::Solve(a) => solve_cmd(a),
        Cmd::Bench {
            config,
            out,
            no_timing,
        } => {
            let text = fs::read_to_string(&config)
                .with_context(|| format!("reading {}", config.display()))
                .map_err(Failure::Invalid)?;
            let cfg = ExperimentConfig::from_toml(&text).map_err(Failure::Invalid)?;
            let rows = run_experiment(&cfg, !no_timing)?;
            let file =
                fs::File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            write_csv(&rows, file)?;
            Ok(())
        }
        Cmd::Oracle { src } => {
            let (p, _) = load(&src)?;
            let (values, cost) = brute_force(&p).ok_or_else(|| {
                Failure::Invalid(anyhow::anyhow!("assignment space too large for the oracle"))
            })?;
            let values: Vec<String> = values.iter().map(usize::to_string).collect();
            println!("cost {cost}");
            println!("assignment {}", values.join(" "));
            Ok(())
        }
        Cmd::Tree { src } => {
            let (_, t) = load(&src)?;
            print!("{}", t.dump());
            Ok(())
        }
        Cmd::Label { src, k, method } => {
            let (p, t) = load(&src)?;
            let clusters = detect_clusters(&t, k);
            let algo = match method {
                LabelMethod::Ism => Algorithm::RmbDpop {
                    k,
                    dem: true,
                    ism: true,
                    caching: false,
                },
                LabelMethod::Highest => Algorithm::MbDpop {
                    k,
                    heuristic: dcop_core::mbdpop::Heuristic::Highest,
                },
                LabelMethod::Lowest => Algorithm::MbDpop {
                    k,
                    heuristic: dcop_core::mbdpop::Heuristic::Lowest,
                },
            };
            let r = solve_on(&p, &t, &algo, RunOptions::fifo())
                .map_err(|e| Failure::Other(anyhow::anyhow!("{e}")))?;
            print!("{}", dump_labels(&clusters, &r.cclists));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
