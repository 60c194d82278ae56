//! One entry point for every algorithm: build the pseudo tree, run the
//! agents on the bus, collect the assignment.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::bounded::{BoundedAgent, BoundedConfig};
use crate::dpop::DpopAgent;
use crate::mbdpop::{detect_clusters, Clusters, Heuristic};
use crate::model::{Problem, VariableId};
use crate::pseudotree::{build_pseudo_tree, PseudoTree, TreeError};
use crate::runtime::{run, Agent, Metrics, RunError, RunOptions, RunStatus};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Algorithm {
    /// Plain DPOP; refuses trees whose induced width exceeds `cap`.
    Dpop {
        cap: Option<usize>,
    },
    MbDpop {
        k: usize,
        heuristic: Heuristic,
    },
    RmbDpop {
        k: usize,
        dem: bool,
        ism: bool,
        caching: bool,
    },
    /// Any bounded configuration, including fixed labelings.
    Bounded(BoundedConfig),
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Dpop { .. } => "dpop",
            Algorithm::MbDpop { .. } => "mb-dpop",
            Algorithm::RmbDpop { .. } | Algorithm::Bounded(_) => "rmb-dpop",
        }
    }

    /// The bounded configuration, or `None` for DPOP.
    pub fn bounded(&self) -> Option<BoundedConfig> {
        match self {
            Algorithm::Dpop { .. } => None,
            Algorithm::MbDpop { k, heuristic } => Some(BoundedConfig::mbdpop(*k, *heuristic)),
            Algorithm::RmbDpop {
                k,
                dem,
                ism,
                caching,
            } => Some(BoundedConfig::rmbdpop(*k, *dem, *ism, *caching)),
            Algorithm::Bounded(c) => Some(c.clone()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SolveError {
    Tree(TreeError),
    WidthExceeded {
        width: usize,
        cap: usize,
    },
    Run(RunError),
    /// The run went quiet with some agent still unassigned.
    Unassigned(VariableId),
}

impl fmt::Display for SolveError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolveError::Tree(e) => write!(f, "pseudo tree: {e}"),
            SolveError::WidthExceeded { width, cap } => {
                write!(f, "width exceeded: induced width {width} > {cap}")
            }
            SolveError::Run(e) => write!(f, "{e}"),
            SolveError::Unassigned(v) => write!(f, "agent {v} finished without a value"),
        }
    }
}

impl core::error::Error for SolveError {}

impl From<TreeError> for SolveError {
    fn from(e: TreeError) -> Self {
        SolveError::Tree(e)
    }
}

impl From<RunError> for SolveError {
    fn from(e: RunError) -> Self {
        SolveError::Run(e)
    }
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    /// `None` when the run timed out.
    pub assignment: Option<Vec<usize>>,
    pub cost: Option<u64>,
    pub metrics: Metrics,
    pub status: RunStatus,
    pub clusters: Option<Clusters>,
    /// Final cycle-cut list of every agent (empty outside clusters).
    pub cclists: Vec<BTreeSet<VariableId>>,
    /// Nodes picked by iterative selection, per cluster in cluster order.
    pub chosen: Vec<Vec<VariableId>>,
}

pub fn solve(
    problem: &Problem,
    algo: &Algorithm,
    opts: RunOptions<'_>,
) -> Result<SolveResult, SolveError> {
    let tree = build_pseudo_tree(problem)?;
    solve_on(problem, &tree, algo, opts)
}

/// Like [`solve`] on a given pseudo tree.
pub fn solve_on(
    problem: &Problem,
    tree: &PseudoTree,
    algo: &Algorithm,
    opts: RunOptions<'_>,
) -> Result<SolveResult, SolveError> {
    match algo.bounded() {
        None => {
            let Algorithm::Dpop { cap } = algo else {
                unreachable!()
            };
            if let Some(cap) = *cap {
                let width = tree.induced_width();
                if width > cap {
                    return Err(SolveError::WidthExceeded { width, cap });
                }
            }
            let outcome = run(tree, DpopAgent::agents(problem, tree, *cap), opts)?;
            finish(
                problem,
                outcome.agents,
                outcome.metrics,
                outcome.status,
                None,
                Vec::new(),
                Vec::new(),
            )
        }
        Some(config) => {
            let clusters = detect_clusters(tree, config.k);
            let agents = BoundedAgent::agents(problem, tree, &clusters, &config);
            let outcome = run(tree, agents, opts)?;
            let cclists = outcome.agents.iter().map(|a| a.cclist().clone()).collect();
            let chosen = clusters
                .list
                .iter()
                .map(|c| outcome.agents[c.cr.0].chosen().to_vec())
                .collect();
            finish(
                problem,
                outcome.agents,
                outcome.metrics,
                outcome.status,
                Some(clusters),
                cclists,
                chosen,
            )
        }
    }
}

fn finish<A: Agent>(
    problem: &Problem,
    agents: Vec<A>,
    metrics: Metrics,
    status: RunStatus,
    clusters: Option<Clusters>,
    cclists: Vec<BTreeSet<VariableId>>,
    chosen: Vec<Vec<VariableId>>,
) -> Result<SolveResult, SolveError> {
    let (assignment, cost) = if status == RunStatus::Completed {
        let values = agents
            .iter()
            .map(|a| a.value().ok_or(SolveError::Unassigned(a.id())))
            .collect::<Result<Vec<_>, _>>()?;
        let cost = problem.cost_of(&values);
        (Some(values), Some(cost))
    } else {
        (None, None)
    };
    Ok(SolveResult {
        assignment,
        cost,
        metrics,
        status,
        clusters,
        cclists,
        chosen,
    })
}

/// Short description of an algorithm configuration, e.g. `dem+ism`.
pub fn toggles(algo: &Algorithm) -> String {
    match algo {
        Algorithm::Dpop { .. } => String::from("-"),
        Algorithm::MbDpop {
            heuristic: Heuristic::Highest,
            ..
        } => String::from("highest"),
        Algorithm::MbDpop {
            heuristic: Heuristic::Lowest,
            ..
        } => String::from("lowest"),
        Algorithm::RmbDpop {
            dem, ism, caching, ..
        } => {
            let on: Vec<&str> = [(*dem, "dem"), (*ism, "ism"), (*caching, "cache")]
                .iter()
                .filter(|t| t.0)
                .map(|t| t.1)
                .collect();
            if on.is_empty() {
                String::from("none")
            } else {
                on.join("+")
            }
        }
        Algorithm::Bounded(_) => String::from("custom"),
    }
}
