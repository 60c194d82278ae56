//! Random benchmark instances: uniform random graphs and Barabási-Albert
//! scale-free graphs, always connected.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{CostTable, Problem, VariableId};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GraphKind {
    Random { density: f64 },
    ScaleFree { m0: usize, m1: usize },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GenConfig {
    pub kind: GraphKind,
    pub n: usize,
    pub domain: usize,
    /// Costs are drawn uniformly from `[0, cost_max)`.
    pub cost_max: u64,
    pub seed: u64,
}

impl GenConfig {
    pub fn random(n: usize, density: f64, seed: u64) -> Self {
        Self {
            kind: GraphKind::Random { density },
            n,
            domain: 3,
            cost_max: 100,
            seed,
        }
    }

    pub fn scale_free(n: usize, m0: usize, m1: usize, seed: u64) -> Self {
        Self {
            kind: GraphKind::ScaleFree { m0, m1 },
            n,
            domain: 3,
            cost_max: 100,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GenError(pub String);

impl fmt::Display for GenError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl core::error::Error for GenError {}

/// Number of edges a random graph with this density gets.
pub fn random_edge_count(n: usize, density: f64) -> usize {
    let pairs = (n * n.saturating_sub(1) / 2) as f64;
    (density * pairs + 0.5) as usize
}

pub fn generate(config: &GenConfig) -> Result<Problem, GenError> {
    match config.kind {
        GraphKind::Random { .. } => gen_random(config),
        GraphKind::ScaleFree { .. } => gen_scale_free(config),
    }
}

fn check_common(config: &GenConfig) -> Result<(), GenError> {
    if config.n == 0 {
        return Err(GenError("n must be at least 1".into()));
    }
    if config.domain < 2 {
        return Err(GenError(format!("domain size {} < 2", config.domain)));
    }
    if config.cost_max == 0 {
        return Err(GenError("cost_max must be positive".into()));
    }
    Ok(())
}

pub fn gen_random(config: &GenConfig) -> Result<Problem, GenError> {
    check_common(config)?;
    let GraphKind::Random { density } = config.kind else {
        return Err(GenError("expected a random-graph config".into()));
    };
    let n = config.n;
    if !(density > 0.0 && density <= 1.0) {
        return Err(GenError(format!("density {density} outside (0, 1]")));
    }
    let target = random_edge_count(n, density);
    if target + 1 < n {
        return Err(GenError(format!(
            "density {density} gives {target} edges, fewer than the {} needed to connect {n} nodes",
            n - 1
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut edges: BTreeSet<(usize, usize)> = random_tree(n, &mut rng).into_iter().collect();
    let mut rest: Vec<(usize, usize)> = (0..n)
        .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
        .filter(|e| !edges.contains(e))
        .collect();
    for k in 0..target - edges.len() {
        let pick = rng.gen_range(k..rest.len());
        rest.swap(k, pick);
        edges.insert(rest[k]);
    }
    let name = format!("random_n{n}_s{}", config.seed);
    Ok(with_costs(name, config, &edges, &mut rng))
}

pub fn gen_scale_free(config: &GenConfig) -> Result<Problem, GenError> {
    check_common(config)?;
    let GraphKind::ScaleFree { m0, m1 } = config.kind else {
        return Err(GenError("expected a scale-free config".into()));
    };
    let n = config.n;
    if !(1 <= m1 && m1 <= m0 && m0 < n) {
        return Err(GenError(format!(
            "need 1 <= m1 <= m0 < n, got m1={m1} m0={m0} n={n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut edges: BTreeSet<(usize, usize)> = random_tree(m0, &mut rng).into_iter().collect();
    let mut degree = vec![0u64; n];
    for &(a, b) in &edges {
        degree[a] += 1;
        degree[b] += 1;
    }
    for t in m0..n {
        let targets = attach(&degree[..t], m1, &mut rng);
        for &s in &targets {
            edges.insert((s, t));
            degree[s] += 1;
        }
        degree[t] += targets.len() as u64;
    }
    let name = format!("scalefree_n{n}_m{m0}_{m1}_s{}", config.seed);
    Ok(with_costs(name, config, &edges, &mut rng))
}

/// Picks `m` distinct nodes with probability proportional to degree,
/// redrawing duplicates. Uniform when every degree is zero.
pub fn attach(degree: &[u64], m: usize, rng: &mut impl Rng) -> Vec<usize> {
    let total: u64 = degree.iter().sum();
    let mut chosen = Vec::with_capacity(m);
    while chosen.len() < m {
        let pick = if total == 0 {
            rng.gen_range(0..degree.len())
        } else {
            let mut r = rng.gen_range(0..total);
            degree
                .iter()
                .position(|&d| {
                    if r < d {
                        true
                    } else {
                        r -= d;
                        false
                    }
                })
                .unwrap()
        };
        if !chosen.contains(&pick) {
            chosen.push(pick);
        }
    }
    chosen.sort_unstable();
    chosen
}

/// Uniform labelled spanning tree over `0..n` via a random Prüfer sequence.
pub fn random_tree(n: usize, rng: &mut impl Rng) -> Vec<(usize, usize)> {
    if n < 2 {
        return Vec::new();
    }
    let seq: Vec<usize> = (0..n - 2).map(|_| rng.gen_range(0..n)).collect();
    let mut degree = vec![1usize; n];
    for &s in &seq {
        degree[s] += 1;
    }
    let mut leaves: BTreeSet<usize> = (0..n).filter(|&v| degree[v] == 1).collect();
    let mut edges = Vec::with_capacity(n - 1);
    for &s in &seq {
        let leaf = leaves.pop_first().unwrap();
        edges.push((leaf.min(s), leaf.max(s)));
        degree[s] -= 1;
        if degree[s] == 1 {
            leaves.insert(s);
        }
    }
    let a = leaves.pop_first().unwrap();
    let b = leaves.pop_first().unwrap();
    edges.push((a, b));
    edges
}

fn with_costs(
    name: String,
    config: &GenConfig,
    edges: &BTreeSet<(usize, usize)>,
    rng: &mut impl Rng,
) -> Problem {
    let d = config.domain;
    let constraints = edges
        .iter()
        .map(|&(a, b)| {
            let costs = (0..d * d)
                .map(|_| rng.gen_range(0..config.cost_max))
                .collect();
            CostTable::new(VariableId(a), VariableId(b), d, d, costs)
        })
        .collect();
    Problem::new(name, vec![d; config.n], constraints)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangle_at_full_density() {
        let p = gen_random(&GenConfig::random(3, 1.0, 7)).unwrap();
        assert_eq!(p.constraints.len(), 3);
        assert!(p.validate().is_ok());
    }

    #[test]
    fn edge_count_rounding() {
        assert_eq!(random_edge_count(20, 0.2), 38);
        let p = gen_random(&GenConfig::random(20, 0.2, 1)).unwrap();
        assert_eq!(p.constraints.len(), 38);
        assert!(p.validate().is_ok());
    }

    #[test]
    fn sparse_density_rejected() {
        assert!(gen_random(&GenConfig::random(20, 0.05, 1)).is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        let c = GenConfig::random(12, 0.3, 99);
        assert_eq!(gen_random(&c).unwrap(), gen_random(&c).unwrap());
        let other = GenConfig { seed: 100, ..c };
        assert_ne!(gen_random(&c).unwrap(), gen_random(&other).unwrap());
    }

    #[test]
    fn scale_free_edge_counts() {
        let p = gen_scale_free(&GenConfig::scale_free(11, 10, 2, 3)).unwrap();
        assert_eq!(p.constraints.len(), 11);
        let p = gen_scale_free(&GenConfig::scale_free(26, 10, 10, 3)).unwrap();
        assert_eq!(p.constraints.len(), 169);
        assert!(p.validate().is_ok());
        assert!(gen_scale_free(&GenConfig::scale_free(26, 10, 11, 3)).is_err());
    }

    #[test]
    fn prufer_tree_is_spanning() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 2..30 {
            let edges = random_tree(n, &mut rng);
            assert_eq!(edges.len(), n - 1);
            let cs = edges
                .iter()
                .map(|&(a, b)| CostTable::new(VariableId(a), VariableId(b), 1, 1, vec![0]))
                .collect();
            assert!(Problem::new("t", vec![1; n], cs).validate().is_ok());
        }
    }

    #[test]
    fn attachment_prefers_hubs() {
        // Node 0 is a hub of degree 3, node 3 a leaf of degree 1.
        let degree = [3, 1, 1, 1];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut hits = [0u32; 4];
        for _ in 0..10_000 {
            hits[attach(&degree, 1, &mut rng)[0]] += 1;
        }
        assert!(hits[0] > hits[3]);
    }
}
