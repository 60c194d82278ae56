//! Building blocks of RMB-DPOP: effectiveness aggregation for iterative
//! cycle-cut selection, branch cycle-cut lists, the root's in/out split, and
//! cache keys. The agent itself lives in [`crate::bounded`].

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

use crate::mbdpop::Clusters;
use crate::model::VariableId;
use crate::pseudotree::PseudoTree;
use crate::tables::Instantiation;

/// Candidate cycle-cut node to effectiveness count.
pub type EffMap = BTreeMap<VariableId, u32>;

/// Adds `other`'s counts into `eff`.
pub fn merge_eff(eff: &mut EffMap, other: &EffMap) {
    for (&v, &c) in other {
        *eff.entry(v).or_insert(0) += c;
    }
}

/// An active node counts once for every candidate of its remaining separator.
pub fn self_increment(eff: &mut EffMap, rsep: &[VariableId], active: bool) {
    if active {
        for &v in rsep {
            *eff.entry(v).or_insert(0) += 1;
        }
    }
}

/// Keeps every candidate still in `rsep` (it may gain counts higher up) and
/// only the best of the rest: highest count, then deepest, then highest id.
pub fn prune_candidates(eff: &mut EffMap, rsep: &[VariableId], depth: &[usize]) {
    let best = eff
        .iter()
        .filter(|(v, _)| !rsep.contains(v))
        .max_by_key(|&(v, &c)| (c, depth[v.0], v.0))
        .map(|(&v, _)| v);
    eff.retain(|v, _| rsep.contains(v) || Some(*v) == best);
}

/// The cluster root's choice: highest count, then deepest, then highest id.
pub fn cr_select(eff: &EffMap, depth: &[usize]) -> Option<VariableId> {
    eff.iter()
        .max_by_key(|&(v, &c)| (c, depth[v.0], v.0))
        .map(|(&v, _)| v)
}

/// `Sep(v)` minus the nodes selected so far.
pub fn remaining_sep(
    tree: &PseudoTree,
    v: VariableId,
    selected: &BTreeSet<VariableId>,
) -> Vec<VariableId> {
    tree.sep[v.0]
        .iter()
        .copied()
        .filter(|s| !selected.contains(s))
        .collect()
}

/// A member is active while its remaining separator exceeds `k`.
pub fn is_active(
    tree: &PseudoTree,
    v: VariableId,
    selected: &BTreeSet<VariableId>,
    k: usize,
) -> bool {
    remaining_sep(tree, v, selected).len() > k
}

/// Per-round record of the centrally simulated selection.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IsmRound {
    /// What each member reports to its parent (empty map for non-members).
    pub reports: Vec<Option<EffMap>>,
    /// Aggregated map at the cluster root.
    pub at_root: EffMap,
    pub any_active: bool,
    pub chosen: Option<VariableId>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IsmOutcome {
    /// Selected nodes per cluster, in selection order.
    pub selected: Vec<Vec<VariableId>>,
    /// Rounds per cluster.
    pub rounds: Vec<Vec<IsmRound>>,
    /// Final `CClist` of every node (branch lists for members, union at roots).
    pub lists: Vec<BTreeSet<VariableId>>,
}

/// Central simulation of iterative selection; the distributed agents must
/// produce exactly these reports and choices.
pub fn ism_label(tree: &PseudoTree, clusters: &Clusters, k: usize) -> IsmOutcome {
    let n = tree.n();
    let mut selected_all = Vec::new();
    let mut rounds_all = Vec::new();
    let mut sets = Vec::new();
    for (idx, cl) in clusters.list.iter().enumerate() {
        let mut selected = BTreeSet::new();
        let mut order = Vec::new();
        let mut rounds = Vec::new();
        let guard = round_limit(tree, &cl.members);
        loop {
            let mut reports: Vec<Option<EffMap>> = vec![None; n];
            let mut active_below = vec![false; n];
            for &v in tree.order.iter().rev() {
                if clusters.member_of[v.0] != Some(idx) {
                    continue;
                }
                let mut eff = EffMap::new();
                let mut any = false;
                for c in clusters.member_children(tree, v) {
                    merge_eff(&mut eff, reports[c.0].as_ref().unwrap());
                    any |= active_below[c.0];
                }
                let rsep = remaining_sep(tree, v, &selected);
                let active = rsep.len() > k;
                self_increment(&mut eff, &rsep, active);
                prune_candidates(&mut eff, &rsep, &tree.depth);
                active_below[v.0] = any || active;
                reports[v.0] = Some(eff);
            }
            let mut at_root = EffMap::new();
            let mut any_active = false;
            for c in clusters.member_children(tree, cl.cr) {
                merge_eff(&mut at_root, reports[c.0].as_ref().unwrap());
                any_active |= active_below[c.0];
            }
            let chosen = if any_active {
                cr_select(&at_root, &tree.depth)
            } else {
                None
            };
            rounds.push(IsmRound {
                reports,
                at_root,
                any_active,
                chosen,
            });
            match chosen {
                Some(c) if rounds.len() <= guard => {
                    selected.insert(c);
                    order.push(c);
                }
                _ => break,
            }
        }
        selected_all.push(order);
        rounds_all.push(rounds);
        sets.push(selected);
    }
    let lists = branch_lists(tree, clusters, &sets);
    IsmOutcome {
        selected: selected_all,
        rounds: rounds_all,
        lists,
    }
}

/// Upper bound on selection rounds for a cluster: each round covers at least
/// one more separator entry of some member.
pub fn round_limit(tree: &PseudoTree, members: &[VariableId]) -> usize {
    members
        .iter()
        .map(|m| tree.sep[m.0].len())
        .max()
        .unwrap_or(0)
        + 1
}

/// `CClist` for a given selection: a member's list holds the selected nodes
/// that appear in `Sep(u) ∪ {u}` for some member `u` of its branch (the
/// subtree under the root's child); the root's list is the union.
pub fn branch_lists(
    tree: &PseudoTree,
    clusters: &Clusters,
    selected: &[BTreeSet<VariableId>],
) -> Vec<BTreeSet<VariableId>> {
    let n = tree.n();
    let mut lists = vec![BTreeSet::new(); n];
    for (idx, cl) in clusters.list.iter().enumerate() {
        let chosen = &selected[idx];
        let mut per_branch: BTreeMap<VariableId, BTreeSet<VariableId>> = BTreeMap::new();
        for &m in &cl.members {
            let head = clusters.branch_head(tree, m).unwrap();
            let entry = per_branch.entry(head).or_default();
            for s in tree.sep[m.0].iter().chain(core::iter::once(&m)) {
                if chosen.contains(s) {
                    entry.insert(*s);
                }
            }
        }
        for &m in &cl.members {
            lists[m.0] = per_branch[&clusters.branch_head(tree, m).unwrap()].clone();
        }
        lists[cl.cr.0] = per_branch.values().flatten().copied().collect();
    }
    lists
}

/// The root's split of its `CClist` into nodes it enumerates itself and
/// nodes assigned inside the branches.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CcPartition {
    pub cc_out: Vec<VariableId>,
    pub cc_in: Vec<VariableId>,
}

impl CcPartition {
    pub fn new(tree: &PseudoTree, cr: VariableId, list: &BTreeSet<VariableId>) -> Self {
        let (cc_out, cc_in) = list
            .iter()
            .partition(|v| **v == cr || tree.sep[cr.0].contains(v));
        Self { cc_out, cc_in }
    }

    /// The same split from the root's own separator.
    pub fn from_sep(cr: VariableId, sep: &[VariableId], list: &BTreeSet<VariableId>) -> Self {
        let (cc_out, cc_in) = list.iter().partition(|v| **v == cr || sep.contains(v));
        Self { cc_out, cc_in }
    }
}

/// Variables an instantiation is projected on when caching results of `child`.
pub fn cache_key_vars(
    tree: &PseudoTree,
    child: VariableId,
    child_list: &BTreeSet<VariableId>,
) -> Vec<VariableId> {
    let mut vars: BTreeSet<VariableId> = child_list.clone();
    vars.extend(tree.sep[child.0].iter().copied());
    vars.into_iter().collect()
}

/// Last instantiation forwarded to each child and the result it produced.
#[derive(Clone, Debug, Default)]
pub struct ChildCache<T> {
    entries: BTreeMap<VariableId, (Instantiation, T)>,
}

impl<T: Clone> ChildCache<T> {
    pub fn new() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    /// The stored result when `key` equals the last key for `child`.
    pub fn check(&self, child: VariableId, key: &Instantiation) -> Option<T> {
        match self.entries.get(&child) {
            Some((k, r)) if k == key => Some(r.clone()),
            _ => None,
        }
    }

    pub fn store(&mut self, child: VariableId, key: Instantiation, result: T) {
        self.entries.insert(child, (key, result));
    }
}

/// Exponent of the per-member instantiation count without caching:
/// `|(CClist_i ∩ Sep(i)) ∪ ccOut|`.
pub fn instantiation_exponent(
    tree: &PseudoTree,
    v: VariableId,
    list: &BTreeSet<VariableId>,
    cc_out: &[VariableId],
) -> usize {
    let mut vars: BTreeSet<VariableId> = cc_out.iter().copied().collect();
    vars.extend(tree.sep[v.0].iter().copied().filter(|s| list.contains(s)));
    vars.len()
}
