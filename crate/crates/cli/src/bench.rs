//! Experiment sweeps: generate instances, run every configured algorithm,
//! emit one CSV row per run plus median summaries.

use std::time::Instant;

use anyhow::{bail, Context, Result};
use dcop_core::generator::{generate, GenConfig, GraphKind};
use dcop_core::mbdpop::Heuristic;
use dcop_core::runtime::{Clock, MessageKind, NullClock, RunOptions, RunStatus};
use dcop_core::solver::{solve, toggles, Algorithm, SolveError};
use serde::Deserialize;

/// DPOP's dimension cap in sweeps.
pub const DPOP_MAX_DIMS: usize = 9;

pub const CSV_COLUMNS: [&str; 16] = [
    "point",
    "algo",
    "k",
    "toggles",
    "seed",
    "status",
    "cost",
    "msg_total",
    "msg_util",
    "msg_inst",
    "msg_bounded",
    "msg_sepinfo",
    "msg_alloc",
    "msg_value",
    "network_load",
    "elapsed_ms",
];

/// Wall clock measured from construction.
pub struct WallClock(Instant);

impl WallClock {
    pub fn start() -> Self {
        Self(Instant::now())
    }
}

impl Clock for WallClock {
    fn now_nanos(&self) -> u64 {
        self.0.elapsed().as_nanos() as u64
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSweep {
    /// `random` or `scalefree`.
    pub kind: String,
    pub n: Vec<usize>,
    #[serde(default)]
    pub density: Vec<f64>,
    #[serde(default)]
    pub m0: Option<usize>,
    #[serde(default)]
    pub m1: Vec<usize>,
    #[serde(default = "default_domain")]
    pub domain: Vec<usize>,
    #[serde(default = "default_cost_max")]
    pub cost_max: u64,
}

fn default_domain() -> Vec<usize> {
    vec![3]
}

fn default_cost_max() -> u64 {
    100
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct AlgoSpec {
    /// `dpop`, `mb-dpop` or `rmb-dpop`.
    pub algo: String,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub heuristic: Option<String>,
    #[serde(default = "yes")]
    pub dem: bool,
    #[serde(default = "yes")]
    pub ism: bool,
    #[serde(default = "yes")]
    pub cache: bool,
}

impl AlgoSpec {
    pub fn resolve(&self) -> Result<Algorithm> {
        let k = || self.k.with_context(|| format!("{} needs k", self.algo));
        Ok(match self.algo.as_str() {
            "dpop" => Algorithm::Dpop {
                cap: Some(DPOP_MAX_DIMS),
            },
            "mb-dpop" => Algorithm::MbDpop {
                k: k()?,
                heuristic: parse_heuristic(self.heuristic.as_deref())?,
            },
            "rmb-dpop" => Algorithm::RmbDpop {
                k: k()?,
                dem: self.dem,
                ism: self.ism,
                caching: self.cache,
            },
            other => bail!("unknown algorithm `{other}`"),
        })
    }
}

pub fn parse_heuristic(name: Option<&str>) -> Result<Heuristic> {
    match name.unwrap_or("highest") {
        "highest" => Ok(Heuristic::Highest),
        "lowest" => Ok(Heuristic::Lowest),
        other => bail!("unknown heuristic `{other}`"),
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub generator: GeneratorSweep,
    pub algorithms: Vec<AlgoSpec>,
    pub instances: usize,
    #[serde(default)]
    pub seed_base: u64,
    #[serde(default)]
    pub timeout_secs: Option<f64>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).context("parsing experiment config")?;
        if c.instances == 0 {
            bail!("instances must be at least 1");
        }
        for a in &c.algorithms {
            a.resolve()?;
        }
        c.points()?;
        Ok(c)
    }

    /// Every generator configuration of the sweep with its label (seed unset).
    pub fn points(&self) -> Result<Vec<(String, GenConfig)>> {
        let g = &self.generator;
        let mut out = Vec::new();
        for &n in &g.n {
            for &d in &g.domain {
                match g.kind.as_str() {
                    "random" => {
                        for &p in &g.density {
                            let kind = GraphKind::Random { density: p };
                            let c = GenConfig {
                                kind,
                                n,
                                domain: d,
                                cost_max: g.cost_max,
                                seed: 0,
                            };
                            out.push((format!("random/n{n}/p{p}/d{d}"), c));
                        }
                    }
                    "scalefree" => {
                        let m0 = g.m0.context("scalefree sweep needs m0")?;
                        for &m1 in &g.m1 {
                            let kind = GraphKind::ScaleFree { m0, m1 };
                            let c = GenConfig {
                                kind,
                                n,
                                domain: d,
                                cost_max: g.cost_max,
                                seed: 0,
                            };
                            out.push((format!("scalefree/n{n}/m{m0}_{m1}/d{d}"), c));
                        }
                    }
                    other => bail!("unknown graph kind `{other}`"),
                }
            }
        }
        if out.is_empty() {
            bail!("the generator sweep is empty");
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Ok,
    Timeout,
    WidthExceeded,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::Timeout => "timeout",
            Status::WidthExceeded => "width-exceeded",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub point: String,
    pub algo: String,
    pub k: Option<usize>,
    pub toggles: String,
    pub seed: u64,
    pub status: Status,
    pub cost: Option<u64>,
    pub msg_count: [u64; 8],
    pub network_load: u64,
    pub elapsed_nanos: u64,
}

impl ResultRow {
    pub fn msg_total(&self) -> u64 {
        self.msg_count.iter().sum()
    }

    fn count(&self, kind: MessageKind) -> u64 {
        self.msg_count[kind.index()]
    }

    fn group(&self) -> (&str, &str, Option<usize>, &str) {
        (&self.point, &self.algo, self.k, &self.toggles)
    }

    pub fn record(&self) -> Vec<String> {
        let opt = |v: Option<u64>| v.map(|x| x.to_string()).unwrap_or_default();
        vec![
            self.point.clone(),
            self.algo.clone(),
            opt(self.k.map(|k| k as u64)),
            self.toggles.clone(),
            self.seed.to_string(),
            self.status.as_str().to_string(),
            opt(self.cost),
            self.msg_total().to_string(),
            self.count(MessageKind::Util).to_string(),
            self.count(MessageKind::Instantiation).to_string(),
            self.count(MessageKind::BoundedUtil).to_string(),
            self.count(MessageKind::SepInfo).to_string(),
            self.count(MessageKind::Allocation).to_string(),
            self.count(MessageKind::Value).to_string(),
            self.network_load.to_string(),
            format!("{:.3}", self.elapsed_nanos as f64 / 1e6),
        ]
    }
}

pub fn algo_k(algo: &Algorithm) -> Option<usize> {
    match algo {
        Algorithm::Dpop { .. } => None,
        other => other.bounded().map(|c| c.k),
    }
}

/// Runs one algorithm on one instance. `timing` off uses a clock that never
/// advances, which disables timeouts and zeroes elapsed time.
pub fn run_one(
    problem: &dcop_core::Problem,
    algo: &Algorithm,
    timeout_secs: Option<f64>,
    timing: bool,
) -> Result<(Status, Option<u64>, dcop_core::runtime::Metrics)> {
    let wall = WallClock::start();
    let clock: &dyn Clock = if timing { &wall } else { &NullClock };
    let opts = RunOptions {
        timeout_nanos: timeout_secs.map(|s| (s * 1e9) as u64),
        clock,
        ..RunOptions::fifo()
    };
    match solve(problem, algo, opts) {
        Ok(r) if r.status == RunStatus::TimedOut => Ok((Status::Timeout, None, r.metrics)),
        Ok(r) => Ok((Status::Ok, r.cost, r.metrics)),
        Err(SolveError::WidthExceeded { .. }) => {
            Ok((Status::WidthExceeded, None, Default::default()))
        }
        Err(e) => bail!("{} on {}: {e}", algo.name(), problem.name),
    }
}

/// Runs the whole sweep; rows come out sorted by point, algorithm, seed.
pub fn run_experiment(config: &ExperimentConfig, timing: bool) -> Result<Vec<ResultRow>> {
    let algos: Vec<Algorithm> = config
        .algorithms
        .iter()
        .map(AlgoSpec::resolve)
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (label, base) in config.points()? {
        for i in 0..config.instances as u64 {
            let seed = config.seed_base.wrapping_add(i);
            let problem = generate(&GenConfig { seed, ..base })
                .map_err(|e| anyhow::anyhow!("{label} seed {seed}: {e}"))?;
            for algo in &algos {
                let (status, cost, m) = run_one(&problem, algo, config.timeout_secs, timing)?;
                rows.push(ResultRow {
                    point: label.clone(),
                    algo: algo.name().to_string(),
                    k: algo_k(algo),
                    toggles: toggles(algo),
                    seed,
                    status,
                    cost,
                    msg_count: m.msg_count,
                    network_load: m.network_load,
                    elapsed_nanos: m.elapsed_nanos,
                });
            }
        }
    }
    Ok(rows)
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    Some(if values.len() % 2 == 1 {
        values[m]
    } else {
        (values[m - 1] + values[m]) / 2.0
    })
}

/// One summary record per (point, algorithm, k, toggles): medians over the
/// successful runs, `median` in the seed column and `ok=<ok>/<total>` as status.
pub fn summaries(rows: &[ResultRow]) -> Vec<Vec<String>> {
    let mut groups: Vec<(&str, &str, Option<usize>, &str)> = Vec::new();
    for r in rows {
        if !groups.contains(&r.group()) {
            groups.push(r.group());
        }
    }
    groups
        .into_iter()
        .map(|g| {
            let members: Vec<&ResultRow> = rows.iter().filter(|r| r.group() == g).collect();
            let ok: Vec<&&ResultRow> = members.iter().filter(|r| r.status == Status::Ok).collect();
            let med = |f: &dyn Fn(&ResultRow) -> f64| {
                let mut v: Vec<f64> = ok.iter().map(|r| f(r)).collect();
                median(&mut v).map(|x| format!("{x}")).unwrap_or_default()
            };
            let kind = |k: MessageKind| move |r: &ResultRow| r.count(k) as f64;
            vec![
                g.0.to_string(),
                g.1.to_string(),
                g.2.map(|k| k.to_string()).unwrap_or_default(),
                g.3.to_string(),
                "median".to_string(),
                format!("ok={}/{}", ok.len(), members.len()),
                med(&|r| r.cost.unwrap_or(0) as f64),
                med(&|r| r.msg_total() as f64),
                med(&kind(MessageKind::Util)),
                med(&kind(MessageKind::Instantiation)),
                med(&kind(MessageKind::BoundedUtil)),
                med(&kind(MessageKind::SepInfo)),
                med(&kind(MessageKind::Allocation)),
                med(&kind(MessageKind::Value)),
                med(&|r| r.network_load as f64),
                med(&|r| r.elapsed_nanos as f64 / 1e6),
            ]
        })
        .collect()
}

/// Writes raw rows followed by the summaries.
pub fn write_csv<W: std::io::Write>(rows: &[ResultRow], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(CSV_COLUMNS)?;
    for r in rows {
        w.write_record(r.record())?;
    }
    for s in summaries(rows) {
        w.write_record(s)?;
    }
    w.flush()?;
    Ok(())
}

/// Fraction of runs per algorithm that finished within each limit, in the
/// order algorithms first appear. A limit of zero admits nothing.
pub fn success_rate(rows: &[ResultRow], limits_secs: &[f64]) -> Vec<(String, Vec<f64>)> {
    let mut names: Vec<String> = Vec::new();
    for r in rows {
        let name = format!(
            "{}:{}:{}",
            r.algo,
            r.k.map(|k| k.to_string()).unwrap_or_default(),
            r.toggles
        );
        if !names.contains(&name) {
            names.push(name);
        }
    }
    names
        .into_iter()
        .map(|name| {
            let runs: Vec<&ResultRow> = rows
                .iter()
                .filter(|r| {
                    format!(
                        "{}:{}:{}",
                        r.algo,
                        r.k.map(|k| k.to_string()).unwrap_or_default(),
                        r.toggles
                    ) == name
                })
                .collect();
            let rates = limits_secs
                .iter()
                .map(|&lim| {
                    let within = runs
                        .iter()
                        .filter(|r| r.status == Status::Ok && (r.elapsed_nanos as f64) < lim * 1e9)
                        .count();
                    within as f64 / runs.len() as f64
                })
                .collect();
            (name, rates)
        })
        .collect()
}
