//! DFS pseudo trees and separators.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::{self, Write};

use crate::model::{Problem, VariableId};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TreeError {
    Empty,
    Disconnected(VariableId),
    /// Supplied tree edges do not form a spanning tree.
    NotATree,
    /// A constraint joins two nodes where neither is an ancestor of the other.
    CrossEdge(VariableId, VariableId),
}

impl fmt::Display for TreeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TreeError::Empty => f.write_str("problem has no variables"),
            TreeError::Disconnected(v) => write!(f, "disconnected graph: {v} not reached by DFS"),
            TreeError::NotATree => f.write_str("tree edges do not form a spanning tree"),
            TreeError::CrossEdge(a, b) => write!(f, "constraint {a}-{b} is a cross edge"),
        }
    }
}

impl core::error::Error for TreeError {}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PseudoTree {
    pub root: VariableId,
    pub parent: Vec<Option<VariableId>>,
    pub children: Vec<Vec<VariableId>>,
    pub pseudo_parents: Vec<BTreeSet<VariableId>>,
    pub pseudo_children: Vec<BTreeSet<VariableId>>,
    /// Sorted ascending.
    pub sep: Vec<Vec<VariableId>>,
    pub depth: Vec<usize>,
    /// DFS preorder; every parent precedes its children.
    pub order: Vec<VariableId>,
}

/// Builds the pseudo tree by DFS.
///
/// The root is the highest-degree node and neighbours are explored in
/// descending degree, both with ties going to the lowest id.
pub fn build_pseudo_tree(problem: &Problem) -> Result<PseudoTree, TreeError> {
    let n = problem.n();
    if n == 0 {
        return Err(TreeError::Empty);
    }
    let adj = problem.neighbors();
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let ranked = |list: &[VariableId]| {
        let mut list = list.to_vec();
        list.sort_by_key(|v| (core::cmp::Reverse(degree[v.0]), v.0));
        list
    };
    let root = (0..n)
        .max_by_key(|&v| (degree[v], core::cmp::Reverse(v)))
        .map(VariableId)
        .unwrap();

    let ordered: Vec<Vec<VariableId>> = adj.iter().map(|l| ranked(l)).collect();
    let mut parent = vec![None; n];
    let mut children = vec![Vec::new(); n];
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut stack: Vec<(VariableId, usize)> = vec![(root, 0)];
    visited[root.0] = true;
    order.push(root);
    while let Some(&mut (node, ref mut cursor)) = stack.last_mut() {
        if let Some(&next) = ordered[node.0].get(*cursor) {
            *cursor += 1;
            if !visited[next.0] {
                visited[next.0] = true;
                parent[next.0] = Some(node);
                children[node.0].push(next);
                order.push(next);
                stack.push((next, 0));
            }
        } else {
            stack.pop();
        }
    }
    if let Some(v) = visited.iter().position(|seen| !seen) {
        return Err(TreeError::Disconnected(VariableId(v)));
    }
    finish(problem, root, parent, children, order)
}

/// Builds the pseudo tree from explicit tree edges; every other constraint
/// becomes a pseudo edge. Children are ordered by ascending id.
pub fn from_tree_edges(
    problem: &Problem,
    root: VariableId,
    edges: &[(usize, usize)],
) -> Result<PseudoTree, TreeError> {
    let n = problem.n();
    if n == 0 {
        return Err(TreeError::Empty);
    }
    if edges.len() + 1 != n {
        return Err(TreeError::NotATree);
    }
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        if a >= n || b >= n || a == b {
            return Err(TreeError::NotATree);
        }
        adj[a].push(VariableId(b));
        adj[b].push(VariableId(a));
    }
    let mut parent = vec![None; n];
    let mut children = vec![Vec::new(); n];
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut stack = vec![root];
    visited[root.0] = true;
    while let Some(node) = stack.pop() {
        order.push(node);
        let mut next: Vec<VariableId> = adj[node.0]
            .iter()
            .copied()
            .filter(|v| !visited[v.0])
            .collect();
        next.sort();
        for &c in &next {
            visited[c.0] = true;
            parent[c.0] = Some(node);
        }
        children[node.0] = next.clone();
        stack.extend(next.into_iter().rev());
    }
    if visited.iter().any(|seen| !seen) {
        return Err(TreeError::NotATree);
    }
    finish(problem, root, parent, children, order)
}

fn finish(
    problem: &Problem,
    root: VariableId,
    parent: Vec<Option<VariableId>>,
    children: Vec<Vec<VariableId>>,
    order: Vec<VariableId>,
) -> Result<PseudoTree, TreeError> {
    let n = problem.n();
    let mut depth = vec![0; n];
    for &v in &order {
        if let Some(p) = parent[v.0] {
            depth[v.0] = depth[p.0] + 1;
        }
    }
    let mut tree = PseudoTree {
        root,
        parent,
        children,
        pseudo_parents: vec![BTreeSet::new(); n],
        pseudo_children: vec![BTreeSet::new(); n],
        sep: vec![Vec::new(); n],
        depth,
        order,
    };
    for c in &problem.constraints {
        let (a, b) = (c.i, c.j);
        if tree.parent[a.0] == Some(b) || tree.parent[b.0] == Some(a) {
            continue;
        }
        let (low, high) = if tree.is_ancestor(a, b) {
            (b, a)
        } else if tree.is_ancestor(b, a) {
            (a, b)
        } else {
            return Err(TreeError::CrossEdge(a, b));
        };
        tree.pseudo_parents[low.0].insert(high);
        tree.pseudo_children[high.0].insert(low);
    }
    tree.sep = compute_separators(&tree);
    Ok(tree)
}

/// `Sep(x) = (AP(x) ∪ ⋃ Sep(child)) \ {x}`, evaluated bottom-up.
pub fn compute_separators(tree: &PseudoTree) -> Vec<Vec<VariableId>> {
    let n = tree.parent.len();
    let mut sep: Vec<BTreeSet<VariableId>> = vec![BTreeSet::new(); n];
    for &v in tree.order.iter().rev() {
        let mut s: BTreeSet<VariableId> = tree.ancestor_parents(v).collect();
        for c in &tree.children[v.0] {
            s.extend(sep[c.0].iter().copied());
        }
        s.remove(&v);
        sep[v.0] = s;
    }
    sep.into_iter().map(|s| s.into_iter().collect()).collect()
}

impl PseudoTree {
    pub fn n(&self) -> usize {
        self.parent.len()
    }

    /// `AP(x)`: parent plus pseudo parents.
    pub fn ancestor_parents(&self, v: VariableId) -> impl Iterator<Item = VariableId> + '_ {
        self.parent[v.0]
            .into_iter()
            .chain(self.pseudo_parents[v.0].iter().copied())
    }

    pub fn is_ancestor(&self, anc: VariableId, v: VariableId) -> bool {
        let mut cur = self.parent[v.0];
        while let Some(p) = cur {
            if p == anc {
                return true;
            }
            cur = self.parent[p.0];
        }
        false
    }

    /// All nodes strictly below `v`.
    pub fn descendants(&self, v: VariableId) -> Vec<VariableId> {
        let mut out = Vec::new();
        let mut stack: Vec<VariableId> = self.children[v.0].clone();
        while let Some(u) = stack.pop() {
            out.push(u);
            stack.extend(self.children[u.0].iter().copied());
        }
        out.sort();
        out
    }

    pub fn induced_width(&self) -> usize {
        self.sep.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// One line per node: `node <id> parent <id|-> sep <id,...> depth <d>`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for v in 0..self.n() {
            let parent = match self.parent[v] {
                Some(p) => alloc::format!("{p}"),
                None => String::from("-"),
            };
            let sep: Vec<String> = self.sep[v].iter().map(|s| alloc::format!("{s}")).collect();
            let _ = writeln!(
                out,
                "node {v} parent {parent} sep {} depth {}",
                sep.join(","),
                self.depth[v]
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{fig2_fixture, CostTable, FIXTURE_TREE_EDGES};

    fn ids(v: &[usize]) -> Vec<VariableId> {
        v.iter().map(|&x| VariableId(x)).collect()
    }

    fn graph(n: usize, edges: &[(usize, usize)]) -> Problem {
        let cs = edges
            .iter()
            .map(|&(a, b)| CostTable::new(VariableId(a), VariableId(b), 2, 2, alloc::vec![0; 4]))
            .collect();
        Problem::new("g", vec![2; n], cs)
    }

    fn fixture_tree() -> PseudoTree {
        from_tree_edges(&fig2_fixture(), VariableId(0), &FIXTURE_TREE_EDGES).unwrap()
    }

    #[test]
    fn path_roots_at_middle() {
        let t = build_pseudo_tree(&graph(3, &[(0, 1), (1, 2)])).unwrap();
        assert_eq!(t.root, VariableId(1));
        assert_eq!(t.children[1], ids(&[0, 2]));
        assert!(t.pseudo_parents.iter().all(BTreeSet::is_empty));
        assert_eq!(t.induced_width(), 1);
    }

    #[test]
    fn triangle_has_one_back_edge() {
        let t = build_pseudo_tree(&graph(3, &[(0, 1), (1, 2), (0, 2)])).unwrap();
        let deepest = (0..3).max_by_key(|&v| t.depth[v]).unwrap();
        assert_eq!(t.depth[deepest], 2);
        assert_eq!(
            t.pseudo_parents[deepest]
                .iter()
                .copied()
                .collect::<Vec<_>>(),
            alloc::vec![t.root]
        );
        assert_eq!(t.induced_width(), 2);
    }

    #[test]
    fn leaf_separator_is_ancestor_parents() {
        let t = fixture_tree();
        for v in 0..14 {
            if t.children[v].is_empty() {
                let mut ap: Vec<VariableId> = t.ancestor_parents(VariableId(v)).collect();
                ap.sort();
                assert_eq!(t.sep[v], ap);
            }
        }
    }

    #[test]
    fn fixture_separators() {
        let t = fixture_tree();
        // a_k -> id k-1
        assert_eq!(t.sep[13], ids(&[8, 9, 12]));
        assert_eq!(t.sep[7], ids(&[0, 1, 3, 4, 5, 6]));
        assert_eq!(t.sep[6], ids(&[0, 1, 3, 4, 5]));
        assert_eq!(t.sep[3], ids(&[0, 1, 2]));
        assert_eq!(t.sep[2], ids(&[0, 1]));
        assert_eq!(t.sep[11], ids(&[8, 9]));
        assert_eq!(t.sep[10], ids(&[2, 8, 9]));
        assert_eq!(t.induced_width(), 6);
        assert_eq!(compute_separators(&t), t.sep);
    }

    #[test]
    fn dump_format() {
        let t = fixture_tree();
        let dump = t.dump();
        assert!(dump.starts_with("node 0 parent - sep  depth 0\n"));
        assert!(dump.contains("node 7 parent 6 sep 0,1,3,4,5,6 depth 7\n"));
    }

    #[test]
    fn cross_edge_rejected_for_forced_tree() {
        let p = graph(3, &[(0, 1), (0, 2), (1, 2)]);
        assert_eq!(
            from_tree_edges(&p, VariableId(0), &[(0, 1), (0, 2)]),
            Err(TreeError::CrossEdge(VariableId(1), VariableId(2)))
        );
    }

    #[test]
    fn disconnected_rejected() {
        assert_eq!(
            build_pseudo_tree(&graph(3, &[(0, 1)])),
            Err(TreeError::Disconnected(VariableId(2)))
        );
    }
}
