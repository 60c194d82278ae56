//! Cluster detection and the heuristic cycle-cut labeling of MB-DPOP.
//!
//! The agent that runs MB-DPOP is the shared bounded agent in
//! [`crate::bounded`], configured with full enumeration at the cluster root.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

use crate::model::VariableId;
use crate::pseudotree::PseudoTree;

/// One high-width region of the pseudo tree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClusterInfo {
    pub cr: VariableId,
    /// Sorted ascending; never contains the cluster root.
    pub members: Vec<VariableId>,
    /// Members without member children.
    pub leaves: Vec<VariableId>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Clusters {
    pub list: Vec<ClusterInfo>,
    /// Index into `list` of the cluster a node belongs to.
    pub member_of: Vec<Option<usize>>,
    /// Index into `list` of the cluster a node is root of.
    pub root_of: Vec<Option<usize>>,
}

impl Clusters {
    pub fn is_member(&self, v: VariableId) -> bool {
        self.member_of[v.0].is_some()
    }

    /// Children of `v` that belong to a cluster (the one `v` is in or roots).
    pub fn member_children(&self, tree: &PseudoTree, v: VariableId) -> Vec<VariableId> {
        tree.children[v.0]
            .iter()
            .copied()
            .filter(|&c| self.is_member(c))
            .collect()
    }

    /// The child of the cluster root whose subtree contains member `v`.
    pub fn branch_head(&self, tree: &PseudoTree, v: VariableId) -> Option<VariableId> {
        let cr = self.list[self.member_of[v.0]?].cr;
        let mut cur = v;
        while tree.parent[cur.0] != Some(cr) {
            cur = tree.parent[cur.0]?;
        }
        Some(cur)
    }
}

/// Finds the clusters for dimension limit `k`.
///
/// A node is in a cluster when its separator exceeds `k`, or when its parent
/// is in a cluster and some descendant exceeds `k`. The parent of the topmost
/// cluster nodes is the cluster root; it is never itself a member, so clusters
/// are disjoint.
pub fn detect_clusters(tree: &PseudoTree, k: usize) -> Clusters {
    let n = tree.n();
    let over: Vec<bool> = (0..n).map(|v| tree.sep[v].len() > k).collect();
    let mut below_over = vec![false; n];
    for &v in tree.order.iter().rev() {
        if let Some(p) = tree.parent[v.0] {
            if over[v.0] || below_over[v.0] {
                below_over[p.0] = true;
            }
        }
    }
    let mut in_cluster = vec![false; n];
    let mut member_of = vec![None; n];
    let mut root_of: Vec<Option<usize>> = vec![None; n];
    let mut list: Vec<ClusterInfo> = Vec::new();
    for &v in &tree.order {
        let Some(p) = tree.parent[v.0] else { continue };
        in_cluster[v.0] = over[v.0] || (in_cluster[p.0] && below_over[v.0]);
        if !in_cluster[v.0] {
            continue;
        }
        let idx = if in_cluster[p.0] {
            member_of[p.0].unwrap()
        } else {
            *root_of[p.0].get_or_insert_with(|| {
                list.push(ClusterInfo {
                    cr: p,
                    members: Vec::new(),
                    leaves: Vec::new(),
                });
                list.len() - 1
            })
        };
        member_of[v.0] = Some(idx);
        list[idx].members.push(v);
    }
    for c in &mut list {
        c.members.sort();
        c.leaves = c
            .members
            .iter()
            .copied()
            .filter(|m| {
                tree.children[m.0]
                    .iter()
                    .all(|ch| member_of[ch.0].is_none())
            })
            .collect();
    }
    Clusters {
        list,
        member_of,
        root_of,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Heuristic {
    /// Closest to the root first; ties to the lowest id.
    Highest,
    /// Deepest first; ties to the highest id.
    Lowest,
}

/// The next cycle-cut node a member adds from its uncovered separator.
pub fn heuristic_pick(
    depth: &[usize],
    candidates: impl Iterator<Item = VariableId>,
    h: Heuristic,
) -> Option<VariableId> {
    match h {
        Heuristic::Highest => candidates.min_by_key(|v| (depth[v.0], v.0)),
        Heuristic::Lowest => candidates.max_by_key(|v| (depth[v.0], v.0)),
    }
}

/// Adds nodes from `sep` to `list` until at most `k` stay uncovered.
pub fn heuristic_extend(
    sep: &[VariableId],
    depth: &[usize],
    k: usize,
    h: Heuristic,
    list: &mut BTreeSet<VariableId>,
) {
    loop {
        let uncovered = sep.iter().filter(|s| !list.contains(s));
        if uncovered.clone().count() <= k {
            return;
        }
        let pick = heuristic_pick(depth, uncovered.copied(), h).unwrap();
        list.insert(pick);
    }
}

/// Bottom-up heuristic labeling. Returns `CClist` for every node of every
/// cluster, roots included; other nodes get an empty list.
pub fn label_heuristic(
    tree: &PseudoTree,
    clusters: &Clusters,
    k: usize,
    h: Heuristic,
) -> Vec<BTreeSet<VariableId>> {
    let mut lists = vec![BTreeSet::new(); tree.n()];
    for &v in tree.order.iter().rev() {
        let member = clusters.is_member(v);
        if !member && clusters.root_of[v.0].is_none() {
            continue;
        }
        let mut list = BTreeSet::new();
        for c in clusters.member_children(tree, v) {
            list.extend(lists[c.0].iter().copied());
        }
        if member {
            heuristic_extend(&tree.sep[v.0], &tree.depth, k, h, &mut list);
        }
        lists[v.0] = list;
    }
    lists
}

/// One line per cluster node in id order: `cc <node> <id,...>`.
pub fn dump_labels(clusters: &Clusters, lists: &[BTreeSet<VariableId>]) -> String {
    let mut nodes: Vec<VariableId> = clusters
        .list
        .iter()
        .flat_map(|c| core::iter::once(c.cr).chain(c.members.iter().copied()))
        .collect();
    nodes.sort();
    let mut out = String::new();
    for v in nodes {
        let ids: Vec<String> = lists[v.0].iter().map(|x| format!("{x}")).collect();
        let _ = writeln!(out, "cc {v} {}", ids.join(","));
    }
    out
}
