//! Problem instances: agents, domains and binary cost tables.
//!
//! Each agent owns exactly one variable, so a [`VariableId`] names both.
//! Costs are non-negative integers and the objective is minimisation.

use alloc::collections::{BTreeSet, VecDeque};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Dense index of a variable (and of the agent controlling it).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VariableId(pub usize);

impl VariableId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for VariableId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Binary cost function `f_ij`, stored row-major with `i` as the row variable.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CostTable {
    pub i: VariableId,
    pub j: VariableId,
    pub rows: usize,
    pub cols: usize,
    pub costs: Vec<u64>,
}

impl CostTable {
    pub fn new(i: VariableId, j: VariableId, rows: usize, cols: usize, costs: Vec<u64>) -> Self {
        CostTable {
            i,
            j,
            rows,
            cols,
            costs,
        }
    }

    /// Cost of `(x_i, x_j) = (a, b)`.
    #[inline]
    pub fn cost(&self, a: usize, b: usize) -> u64 {
        self.costs[a * self.cols + b]
    }

    /// Cost with the arguments given for `var` and the other endpoint.
    pub fn cost_for(&self, var: VariableId, own: usize, other: usize) -> u64 {
        if var == self.i {
            self.cost(own, other)
        } else {
            self.cost(other, own)
        }
    }

    pub fn other(&self, var: VariableId) -> VariableId {
        if var == self.i {
            self.j
        } else {
            self.i
        }
    }

    /// Returns the same function with `i < j`.
    pub fn canonical(self) -> Self {
        if self.i <= self.j {
            return self;
        }
        let mut costs = vec![0; self.costs.len()];
        for a in 0..self.rows {
            for b in 0..self.cols {
                costs[b * self.rows + a] = self.costs[a * self.cols + b];
            }
        }
        CostTable {
            i: self.j,
            j: self.i,
            rows: self.cols,
            cols: self.rows,
            costs,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Problem {
    pub name: String,
    pub domains: Vec<usize>,
    pub constraints: Vec<CostTable>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ValidationError {
    EmptyDomain(VariableId),
    IndexOutOfRange {
        constraint: usize,
        var: VariableId,
    },
    SelfLoop(VariableId),
    DuplicateConstraint(VariableId, VariableId),
    ShapeMismatch {
        constraint: usize,
        expected: usize,
        found: usize,
    },
    NegativeCost {
        constraint: usize,
    },
    Disconnected {
        unreachable: VariableId,
    },
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationError::EmptyDomain(v) => write!(f, "variable {v} has an empty domain"),
            ValidationError::IndexOutOfRange { constraint, var } => {
                write!(
                    f,
                    "constraint #{constraint} references out-of-range variable {var}"
                )
            }
            ValidationError::SelfLoop(v) => write!(f, "self-loop constraint on variable {v}"),
            ValidationError::DuplicateConstraint(a, b) => {
                write!(f, "duplicate constraint between {a} and {b}")
            }
            ValidationError::ShapeMismatch {
                constraint,
                expected,
                found,
            } => write!(
                f,
                "constraint #{constraint} has {found} entries, expected {expected}"
            ),
            ValidationError::NegativeCost { constraint } => {
                write!(f, "negative cost in constraint #{constraint}")
            }
            ValidationError::Disconnected { unreachable } => {
                write!(
                    f,
                    "disconnected constraint graph: {unreachable} unreachable from 0"
                )
            }
        }
    }
}

impl core::error::Error for ValidationError {}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ModelError {
    PartialAssignment(VariableId),
    ValueOutOfRange { var: VariableId, value: usize },
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelError::PartialAssignment(v) => write!(f, "assignment misses variable {v}"),
            ModelError::ValueOutOfRange { var, value } => {
                write!(f, "value {value} out of range for variable {var}")
            }
        }
    }
}

impl core::error::Error for ModelError {}

impl Problem {
    pub fn new(
        name: impl Into<String>,
        domains: Vec<usize>,
        mut constraints: Vec<CostTable>,
    ) -> Self {
        constraints = constraints.into_iter().map(CostTable::canonical).collect();
        constraints.sort_by_key(|c| (c.i, c.j));
        Problem {
            name: name.into(),
            domains,
            constraints,
        }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.domains.len()
    }

    pub fn vars(&self) -> impl Iterator<Item = VariableId> {
        (0..self.domains.len()).map(VariableId)
    }

    pub fn domain(&self, v: VariableId) -> usize {
        self.domains[v.0]
    }

    /// Sorted neighbour lists of the constraint graph.
    pub fn neighbors(&self) -> Vec<Vec<VariableId>> {
        let mut adj = vec![Vec::new(); self.n()];
        for c in &self.constraints {
            if c.i.0 < self.n() && c.j.0 < self.n() && c.i != c.j {
                adj[c.i.0].push(c.j);
                adj[c.j.0].push(c.i);
            }
        }
        for list in &mut adj {
            list.sort();
            list.dedup();
        }
        adj
    }

    pub fn constraint(&self, a: VariableId, b: VariableId) -> Option<&CostTable> {
        let (i, j) = if a <= b { (a, b) } else { (b, a) };
        self.constraints.iter().find(|c| c.i == i && c.j == j)
    }

    /// Every invariant violation; `Ok` iff there are none.
    pub fn validate(&self) -> Result<(), Vec<ValidationError>> {
        let mut errors = Vec::new();
        let n = self.n();
        for (v, &d) in self.domains.iter().enumerate() {
            if d == 0 {
                errors.push(ValidationError::EmptyDomain(VariableId(v)));
            }
        }
        let mut seen = BTreeSet::new();
        for (idx, c) in self.constraints.iter().enumerate() {
            let mut in_range = true;
            for v in [c.i, c.j] {
                if v.0 >= n {
                    errors.push(ValidationError::IndexOutOfRange {
                        constraint: idx,
                        var: v,
                    });
                    in_range = false;
                }
            }
            if c.i == c.j {
                errors.push(ValidationError::SelfLoop(c.i));
                continue;
            }
            let key = if c.i < c.j { (c.i, c.j) } else { (c.j, c.i) };
            if !seen.insert(key) {
                errors.push(ValidationError::DuplicateConstraint(key.0, key.1));
            }
            if in_range {
                let expected = self.domains[c.i.0] * self.domains[c.j.0];
                if c.rows * c.cols != expected || c.costs.len() != expected {
                    errors.push(ValidationError::ShapeMismatch {
                        constraint: idx,
                        expected,
                        found: c.costs.len(),
                    });
                }
            }
        }
        if n > 0 {
            let adj = self.neighbors();
            let mut reached = vec![false; n];
            let mut queue = VecDeque::from([0usize]);
            reached[0] = true;
            while let Some(u) = queue.pop_front() {
                for &w in &adj[u] {
                    if !reached[w.0] {
                        reached[w.0] = true;
                        queue.push_back(w.0);
                    }
                }
            }
            if let Some(v) = reached.iter().position(|r| !r) {
                errors.push(ValidationError::Disconnected {
                    unreachable: VariableId(v),
                });
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(errors)
        }
    }

    /// Sum of all constraint costs under a full assignment.
    pub fn total_cost(&self, assignment: &Assignment) -> Result<u64, ModelError> {
        let values = assignment.to_full(self)?;
        Ok(self.cost_of(&values))
    }

    /// Unchecked cost of a dense value vector.
    pub fn cost_of(&self, values: &[usize]) -> u64 {
        self.constraints
            .iter()
            .map(|c| c.cost(values[c.i.0], values[c.j.0]))
            .sum()
    }
}

/// Partial or full assignment of values to variables.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Assignment {
    values: Vec<Option<usize>>,
}

impl Assignment {
    pub fn empty(n: usize) -> Self {
        Assignment {
            values: vec![None; n],
        }
    }

    pub fn from_values(values: &[usize]) -> Self {
        Assignment {
            values: values.iter().map(|&v| Some(v)).collect(),
        }
    }

    pub fn set(&mut self, var: VariableId, value: usize) {
        if var.0 >= self.values.len() {
            self.values.resize(var.0 + 1, None);
        }
        self.values[var.0] = Some(value);
    }

    pub fn get(&self, var: VariableId) -> Option<usize> {
        self.values.get(var.0).copied().flatten()
    }

    pub fn is_full(&self, n: usize) -> bool {
        self.values.len() >= n && self.values[..n].iter().all(Option::is_some)
    }

    /// Dense values, checking coverage and domain bounds against `problem`.
    pub fn to_full(&self, problem: &Problem) -> Result<Vec<usize>, ModelError> {
        problem
            .vars()
            .map(|v| {
                let value = self.get(v).ok_or(ModelError::PartialAssignment(v))?;
                if value >= problem.domain(v) {
                    return Err(ModelError::ValueOutOfRange { var: v, value });
                }
                Ok(value)
            })
            .collect()
    }
}

/// Tree edges of the 14-agent worked example, `a1..a14` as ids `0..13`.
pub const FIXTURE_TREE_EDGES: [(usize, usize); 13] = [
    (0, 1),
    (1, 2),
    (2, 3),
    (2, 8),
    (3, 4),
    (4, 5),
    (5, 6),
    (6, 7),
    (8, 9),
    (9, 10),
    (9, 11),
    (11, 12),
    (12, 13),
];

/// Back edges of the worked example, as (descendant, ancestor).
pub const FIXTURE_PSEUDO_EDGES: [(usize, usize); 11] = [
    (7, 0),
    (7, 1),
    (7, 3),
    (7, 4),
    (7, 5),
    (8, 0),
    (9, 1),
    (10, 2),
    (10, 8),
    (13, 8),
    (13, 9),
];

const FIXTURE_COST_SEED: u64 = 0x00DC_0F14;

/// The 14-agent worked example: domain size 3 everywhere, costs uniform in `[0, 100)`.
pub fn fig2_fixture() -> Problem {
    let mut rng = ChaCha8Rng::seed_from_u64(FIXTURE_COST_SEED);
    let mut pairs: Vec<(usize, usize)> = FIXTURE_TREE_EDGES
        .iter()
        .chain(FIXTURE_PSEUDO_EDGES.iter())
        .map(|&(a, b)| if a < b { (a, b) } else { (b, a) })
        .collect();
    pairs.sort();
    let constraints = pairs
        .into_iter()
        .map(|(a, b)| {
            let costs = (0..9).map(|_| rng.gen_range(0..100u64)).collect();
            CostTable::new(VariableId(a), VariableId(b), 3, 3, costs)
        })
        .collect();
    Problem::new("fig2", vec![3; 14], constraints)
}
