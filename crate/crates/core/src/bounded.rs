//! The memory-bounded agent shared by MB-DPOP and RMB-DPOP.
//!
//! Outside clusters an agent behaves exactly like DPOP. A cluster root first
//! runs the labeling protocol with its members, then enumerates
//! instantiations of cycle-cut nodes; members answer each one with a bounded
//! table of at most `k` dimensions. After the sweep the root replays the
//! winning instantiation once (FINAL_CONTEXT) so that members can rebuild
//! their argmin tables, and VALUE descends as in DPOP.
//!
//! With distributed enumeration on, the root only enumerates the cycle-cut
//! nodes above the cluster and each cycle-cut member walks its own domain.
//! Bounded tables then carry, per cell, the values of those in-branch
//! cycle-cut nodes that realise the cell, so the root can replay the whole
//! winning instantiation in one pass.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::dpop::local_tables;
use crate::mbdpop::{heuristic_extend, Clusters, Heuristic};
use crate::model::{Problem, VariableId};
use crate::pseudotree::PseudoTree;
use crate::rmbdpop::{
    cr_select, merge_eff, prune_candidates, round_limit, self_increment, CcPartition, ChildCache,
    EffMap,
};
use crate::runtime::{Agent, Message, Outbox, Payload, ProtocolError, SepInfo};
use crate::tables::{AnnotatedTable, ArgTable, Instantiation, TableError, UtilityTable};

/// How cycle-cut nodes are chosen.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Labeling {
    /// MB-DPOP's bottom-up heuristic.
    Heuristic(Heuristic),
    /// Iterative selection by effectiveness.
    Ism,
    /// Lists supplied up front for every node; no labeling messages.
    Fixed(Vec<BTreeSet<VariableId>>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoundedConfig {
    pub k: usize,
    pub labeling: Labeling,
    /// Distributed enumeration: the root enumerates only its own part.
    pub dem: bool,
    pub caching: bool,
}

impl BoundedConfig {
    pub fn mbdpop(k: usize, h: Heuristic) -> Self {
        Self {
            k,
            labeling: Labeling::Heuristic(h),
            dem: false,
            caching: false,
        }
    }

    /// RMB-DPOP with each mechanism switched on or off; without iterative
    /// selection the highest heuristic labels the clusters.
    pub fn rmbdpop(k: usize, dem: bool, ism: bool, caching: bool) -> Self {
        let labeling = if ism {
            Labeling::Ism
        } else {
            Labeling::Heuristic(Heuristic::Highest)
        };
        Self {
            k,
            labeling,
            dem,
            caching,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Role {
    Normal,
    Root,
    Member,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Mode {
    Sweep,
    Rederive,
}

/// Cluster root bookkeeping for the enumeration.
#[derive(Debug, Default)]
struct Enumeration {
    vars: Vec<(VariableId, usize)>,
    total: usize,
    next: BTreeMap<VariableId, usize>,
    partial: BTreeMap<usize, BTreeMap<VariableId, AnnotatedTable>>,
    folded: usize,
    started: bool,
    /// Best cost per separator cell and the instantiation achieving it.
    best: Option<UtilityTable>,
    best_ins: Vec<Option<Instantiation>>,
}

impl Enumeration {
    fn ins(&self, mut idx: usize) -> Instantiation {
        let mut vals = vec![0; self.vars.len()];
        for (slot, &(_, d)) in vals.iter_mut().zip(&self.vars).rev() {
            *slot = idx % d;
            idx /= d;
        }
        Instantiation::from_pairs(self.vars.iter().map(|v| v.0).zip(vals))
    }
}

pub struct BoundedAgent {
    id: VariableId,
    domain: usize,
    k: usize,
    role: Role,
    parent: Option<VariableId>,
    children: Vec<VariableId>,
    normal_children: Vec<VariableId>,
    member_children: Vec<VariableId>,
    sep: Vec<VariableId>,
    child_sep: BTreeMap<VariableId, Vec<VariableId>>,
    depth: Vec<usize>,
    domains: Vec<usize>,
    local: Vec<UtilityTable>,
    labeling: Labeling,
    dem: bool,
    caching: bool,
    round_limit: usize,

    // labeling
    selected: BTreeSet<VariableId>,
    rounds: usize,
    reports: BTreeMap<VariableId, SepInfo>,
    child_lists: BTreeMap<VariableId, BTreeSet<VariableId>>,
    cclist: BTreeSet<VariableId>,
    labeled: bool,
    chosen: Vec<VariableId>,

    // inference
    normal_utils: BTreeMap<VariableId, UtilityTable>,
    deferred: Option<Instantiation>,
    mode: Mode,
    base: Instantiation,
    current: Instantiation,
    own_value: usize,
    running: Option<AnnotatedTable>,
    awaiting: BTreeSet<VariableId>,
    results: BTreeMap<VariableId, AnnotatedTable>,
    sent_keys: BTreeMap<VariableId, Instantiation>,
    cache: ChildCache<AnnotatedTable>,
    enumeration: Enumeration,
    final_ins: Option<Instantiation>,
    ctx: Instantiation,
    arg: Option<ArgTable>,
    value: Option<usize>,
}

/// Joins `plain` and `annotated`, optionally minimising out `own`, and returns
/// the result with dimensions in id order. Each output cell's witness is the
/// concatenation of the annotated inputs' witnesses at the cell (and argmin).
fn evaluate(
    own: Option<(VariableId, usize)>,
    plain: &[UtilityTable],
    annotated: &[&AnnotatedTable],
) -> Result<(AnnotatedTable, Option<ArgTable>), TableError> {
    let mut joint = match own {
        Some(d) => UtilityTable::zeros(vec![d]),
        None => UtilityTable::scalar(0),
    };
    for t in plain.iter().chain(annotated.iter().map(|a| &a.table)) {
        joint = UtilityTable::join(&joint, t)?;
    }
    let (table, arg) = match own {
        Some((v, _)) => {
            let (t, a) = joint.eliminate_min(v)?;
            (t.normalized(), Some(a))
        }
        None => (joint.normalized(), None),
    };
    let with_witness = annotated.iter().any(|a| a.witness_entries() > 0);
    let witnesses = if with_witness {
        let mut ws = Vec::with_capacity(table.cells());
        for off in 0..table.cells() {
            let mut full = table.cell(off);
            if let (Some(arg), Some((v, _))) = (&arg, own) {
                full.push(v, arg.lookup_best(&full)?);
            }
            let mut w = Instantiation::new();
            for a in annotated {
                w.extend(&a.witnesses[a.table.offset(&full)?]);
            }
            ws.push(w);
        }
        ws
    } else {
        vec![Instantiation::new(); table.cells()]
    };
    Ok((AnnotatedTable { table, witnesses }, arg))
}

impl BoundedAgent {
    pub fn agents(
        problem: &Problem,
        tree: &PseudoTree,
        clusters: &Clusters,
        config: &BoundedConfig,
    ) -> Vec<Self> {
        problem
            .vars()
            .map(|v| Self::new(problem, tree, clusters, config, v))
            .collect()
    }

    pub fn new(
        problem: &Problem,
        tree: &PseudoTree,
        clusters: &Clusters,
        config: &BoundedConfig,
        id: VariableId,
    ) -> Self {
        let role = if clusters.is_member(id) {
            Role::Member
        } else if clusters.root_of[id.0].is_some() {
            Role::Root
        } else {
            Role::Normal
        };
        let member_children = clusters.member_children(tree, id);
        let normal_children = tree.children[id.0]
            .iter()
            .copied()
            .filter(|c| !member_children.contains(c))
            .collect();
        let limit = match clusters.root_of[id.0] {
            Some(idx) => round_limit(tree, &clusters.list[idx].members),
            None => 0,
        };
        let mut agent = Self {
            id,
            domain: problem.domain(id),
            k: config.k,
            role,
            parent: tree.parent[id.0],
            children: tree.children[id.0].clone(),
            normal_children,
            child_sep: member_children
                .iter()
                .map(|c| (*c, tree.sep[c.0].clone()))
                .collect(),
            member_children,
            sep: tree.sep[id.0].clone(),
            depth: tree.depth.clone(),
            domains: problem.domains.clone(),
            local: local_tables(problem, tree, id),
            labeling: config.labeling.clone(),
            dem: config.dem,
            caching: config.caching,
            round_limit: limit,
            selected: BTreeSet::new(),
            rounds: 0,
            reports: BTreeMap::new(),
            child_lists: BTreeMap::new(),
            cclist: BTreeSet::new(),
            labeled: false,
            chosen: Vec::new(),
            normal_utils: BTreeMap::new(),
            deferred: None,
            mode: Mode::Sweep,
            base: Instantiation::new(),
            current: Instantiation::new(),
            own_value: 0,
            running: None,
            awaiting: BTreeSet::new(),
            results: BTreeMap::new(),
            sent_keys: BTreeMap::new(),
            cache: ChildCache::new(),
            enumeration: Enumeration::default(),
            final_ins: None,
            ctx: Instantiation::new(),
            arg: None,
            value: None,
        };
        if let Labeling::Fixed(lists) = &config.labeling {
            agent.cclist = lists[id.0].clone();
            for &c in &agent.member_children {
                agent.child_lists.insert(c, lists[c.0].clone());
            }
            agent.labeled = true;
        }
        agent
    }

    /// The agent's cycle-cut list once labeling has finished.
    pub fn cclist(&self) -> &BTreeSet<VariableId> {
        &self.cclist
    }

    /// Nodes chosen by iterative selection, in order (cluster roots only).
    pub fn chosen(&self) -> &[VariableId] {
        &self.chosen
    }

    /// Whether this member walks its own domain during enumeration.
    fn traverses(&self) -> bool {
        self.role == Role::Member && self.dem && self.cclist.contains(&self.id)
    }

    fn err(&self, reason: impl Into<String>) -> ProtocolError {
        ProtocolError::new(self.id, reason)
    }

    fn terr(&self, e: TableError) -> ProtocolError {
        self.err(format!("{e}"))
    }

    fn normal_ready(&self) -> bool {
        self.normal_utils.len() == self.normal_children.len()
    }

    // ---- plain DPOP behaviour outside clusters ----

    fn dpop_eliminate(&mut self, out: &mut Outbox) -> Result<(), ProtocolError> {
        let own = Some((self.id, self.domain));
        let plain: Vec<UtilityTable> = self
            .local
            .iter()
            .chain(self.normal_utils.values())
            .cloned()
            .collect();
        let (t, arg) = evaluate(own, &plain, &[]).map_err(|e| self.terr(e))?;
        self.arg = arg;
        match self.parent {
            Some(p) => out.send(p, Payload::Util(t.table)),
            None => self.assign(Instantiation::new(), out)?,
        }
        Ok(())
    }

    fn assign(&mut self, mut ctx: Instantiation, out: &mut Outbox) -> Result<(), ProtocolError> {
        let own = match self.final_ins.as_ref().and_then(|f| f.get(self.id)) {
            Some(v) => v,
            None => {
                let arg = self
                    .arg
                    .as_ref()
                    .ok_or_else(|| self.err("VALUE before UTIL phase"))?;
                arg.lookup_best(&ctx).map_err(|e| self.terr(e))?
            }
        };
        self.value = Some(own);
        ctx.push(self.id, own);
        for &c in &self.children {
            out.send(c, Payload::Value(ctx.clone()));
        }
        Ok(())
    }

    // ---- labeling ----

    fn report(&mut self, out: &mut Outbox) -> Result<(), ProtocolError> {
        let mut eff = EffMap::new();
        let mut active = false;
        let mut cc: BTreeSet<VariableId> = BTreeSet::new();
        for info in self.reports.values() {
            merge_eff(&mut eff, &info.eff.iter().copied().collect());
            active |= info.active;
            cc.extend(info.cc.iter().copied());
        }
        for (c, info) in &self.reports {
            self.child_lists
                .insert(*c, info.cc.iter().copied().collect());
        }
        self.reports.clear();
        match self.labeling {
            Labeling::Heuristic(h) => {
                heuristic_extend(&self.sep, &self.depth, self.k, h, &mut cc);
                self.cclist = cc.clone();
                eff.clear();
            }
            _ => {
                let rsep: Vec<VariableId> = self
                    .sep
                    .iter()
                    .copied()
                    .filter(|s| !self.selected.contains(s))
                    .collect();
                let mine = rsep.len() > self.k;
                self_increment(&mut eff, &rsep, mine);
                prune_candidates(&mut eff, &rsep, &self.depth);
                active |= mine;
                cc.extend(
                    self.sep
                        .iter()
                        .chain(core::iter::once(&self.id))
                        .filter(|s| self.selected.contains(s)),
                );
            }
        }
        let parent = self
            .parent
            .ok_or_else(|| self.err("cluster member without parent"))?;
        let info = SepInfo {
            eff: eff.into_iter().collect(),
            active,
            cc: cc.into_iter().collect(),
        };
        out.send(parent, Payload::SepInfo(info));
        Ok(())
    }

    fn root_decide(&mut self, out: &mut Outbox) -> Result<(), ProtocolError> {
        let mut eff = EffMap::new();
        let mut active = false;
        for (c, info) in &self.reports {
            merge_eff(&mut eff, &info.eff.iter().copied().collect());
            active |= info.active;
            self.child_lists
                .insert(*c, info.cc.iter().copied().collect());
        }
        self.reports.clear();
        self.rounds += 1;
        let ism = self.labeling == Labeling::Ism;
        if ism && active {
            if self.rounds > self.round_limit {
                return Err(self.err(format!(
                    "selection did not finish in {} rounds",
                    self.round_limit
                )));
            }
            let pick = cr_select(&eff, &self.depth)
                .ok_or_else(|| self.err("active cluster without candidates"))?;
            self.selected.insert(pick);
            self.chosen.push(pick);
            for &c in &self.member_children {
                out.send(c, Payload::Allocation(pick));
            }
            return Ok(());
        }
        self.cclist = self.child_lists.values().flatten().copied().collect();
        for &c in &self.member_children {
            let list = if ism {
                self.child_lists[&c].iter().copied().collect()
            } else {
                Vec::new()
            };
            out.send(c, Payload::LabelDone(list));
        }
        self.labeled = true;
        self.maybe_enumerate(out)
    }

    // ---- member sweeps ----

    fn key_vars(&self, child: VariableId) -> Vec<VariableId> {
        let mut vars: BTreeSet<VariableId> =
            self.child_lists.get(&child).cloned().unwrap_or_default();
        vars.extend(self.child_sep[&child].iter().copied());
        vars.into_iter().collect()
    }

    fn begin_sweep(&mut self, ins: Instantiation, out: &mut Outbox) -> Result<(), ProtocolError> {
        self.mode = Mode::Sweep;
        self.base = ins.clone();
        self.running = None;
        let mut ext = ins;
        if self.traverses() && !ext.contains(self.id) {
            self.own_value = 0;
            ext.push(self.id, 0);
        }
        self.dispatch(ext, out)
    }

    fn dispatch(&mut self, ext: Instantiation, out: &mut Outbox) -> Result<(), ProtocolError> {
        self.results.clear();
        self.awaiting.clear();
        for c in self.member_children.clone() {
            if self.mode == Mode::Rederive {
                out.send(c, Payload::FinalContext(ext.clone()));
                self.awaiting.insert(c);
                continue;
            }
            if self.caching {
                let key = ext.project(&self.key_vars(c));
                if let Some(hit) = self.cache.check(c, &key) {
                    self.results.insert(c, hit);
                    continue;
                }
                self.sent_keys.insert(c, key);
            }
            out.send(c, Payload::Instantiation(ext.clone()));
            self.awaiting.insert(c);
        }
        self.current = ext;
        if self.awaiting.is_empty() {
            self.member_complete(out)?;
        }
        Ok(())
    }

    fn conditioned_plain(&self, on: &Instantiation) -> Result<Vec<UtilityTable>, ProtocolError> {
        self.local
            .iter()
            .chain(self.normal_utils.values())
            .map(|t| t.condition(on).map_err(|e| self.terr(e)))
            .collect()
    }

    fn member_complete(&mut self, out: &mut Outbox) -> Result<(), ProtocolError> {
        let ext = self.current.clone();
        let plain = self.conditioned_plain(&ext)?;
        let annotated: Vec<&AnnotatedTable> = self.results.values().collect();
        let own = if ext.contains(self.id) {
            None
        } else {
            Some((self.id, self.domain))
        };
        let (mut t, arg) = evaluate(own, &plain, &annotated).map_err(|e| self.terr(e))?;
        let parent = self
            .parent
            .ok_or_else(|| self.err("cluster member without parent"))?;
        if self.mode == Mode::Rederive {
            self.arg = arg;
            t.witnesses
                .iter_mut()
                .for_each(|w| *w = Instantiation::new());
            return self.send_bounded(parent, t, out);
        }
        if !(self.traverses() && !self.base.contains(self.id)) {
            return self.send_bounded(parent, t, out);
        }
        for w in &mut t.witnesses {
            w.push(self.id, self.own_value);
        }
        self.running = Some(match self.running.take() {
            None => t,
            Some(mut run) => {
                for (k, &v) in t.table.values.iter().enumerate() {
                    if v < run.table.values[k] {
                        run.table.values[k] = v;
                        run.witnesses[k] = t.witnesses[k].clone();
                    }
                }
                run
            }
        });
        self.own_value += 1;
        if self.own_value < self.domain {
            let mut next = self.base.clone();
            next.push(self.id, self.own_value);
            return self.dispatch(next, out);
        }
        let done = self.running.take().unwrap();
        self.send_bounded(parent, done, out)
    }

    fn send_bounded(
        &self,
        to: VariableId,
        t: AnnotatedTable,
        out: &mut Outbox,
    ) -> Result<(), ProtocolError> {
        if t.table.arity() > self.k {
            return Err(self.err(format!(
                "bounded table has {} dims > k = {}",
                t.table.arity(),
                self.k
            )));
        }
        out.send(to, Payload::BoundedUtil(t));
        Ok(())
    }

    // ---- cluster root ----

    fn maybe_enumerate(&mut self, out: &mut Outbox) -> Result<(), ProtocolError> {
        if self.role != Role::Root
            || !self.labeled
            || !self.normal_ready()
            || self.enumeration.started
        {
            return Ok(());
        }
        let vars: Vec<VariableId> = if self.dem {
            let part = CcPartition::from_sep(self.id, &self.sep, &self.cclist);
            part.cc_out
        } else {
            self.cclist.iter().copied().collect()
        };
        let e = &mut self.enumeration;
        e.started = true;
        e.vars = vars.iter().map(|v| (*v, self.domains[v.0])).collect();
        e.total = e.vars.iter().map(|v| v.1).product();
        let mut dims: Vec<(VariableId, usize)> =
            self.sep.iter().map(|v| (*v, self.domains[v.0])).collect();
        dims.sort();
        let mut best = UtilityTable::zeros(dims);
        best.values.iter_mut().for_each(|v| *v = u64::MAX);
        e.best_ins = vec![None; best.cells()];
        e.best = Some(best);
        for c in self.member_children.clone() {
            self.enumeration.next.insert(c, 0);
            self.root_issue(c, out)?;
        }
        Ok(())
    }

    fn root_issue(&mut self, c: VariableId, out: &mut Outbox) -> Result<(), ProtocolError> {
        loop {
            let idx = self.enumeration.next[&c];
            if idx >= self.enumeration.total {
                return Ok(());
            }
            let ins = self.enumeration.ins(idx);
            if self.caching {
                let key = ins.project(&self.key_vars(c));
                if let Some(hit) = self.cache.check(c, &key) {
                    *self.enumeration.next.get_mut(&c).unwrap() += 1;
                    self.root_record(idx, c, hit, out)?;
                    continue;
                }
                self.sent_keys.insert(c, key);
            }
            out.send(c, Payload::Instantiation(ins));
            return Ok(());
        }
    }

    fn root_record(
        &mut self,
        idx: usize,
        c: VariableId,
        t: AnnotatedTable,
        out: &mut Outbox,
    ) -> Result<(), ProtocolError> {
        let slot = self.enumeration.partial.entry(idx).or_default();
        slot.insert(c, t);
        if slot.len() < self.member_children.len() {
            return Ok(());
        }
        let results = self.enumeration.partial.remove(&idx).unwrap();
        self.root_fold(idx, &results)?;
        self.enumeration.folded += 1;
        if self.enumeration.folded == self.enumeration.total {
            let best = self.enumeration.best.clone().unwrap();
            match self.parent {
                Some(p) => out.send(p, Payload::Util(best)),
                None => self.root_replay(Instantiation::new(), out)?,
            }
        }
        Ok(())
    }

    fn root_fold(
        &mut self,
        idx: usize,
        results: &BTreeMap<VariableId, AnnotatedTable>,
    ) -> Result<(), ProtocolError> {
        let ins = self.enumeration.ins(idx);
        let plain = self.conditioned_plain(&ins)?;
        let annotated: Vec<&AnnotatedTable> = results.values().collect();
        let own = if ins.contains(self.id) {
            None
        } else {
            Some((self.id, self.domain))
        };
        let (t, _) = evaluate(own, &plain, &annotated).map_err(|e| self.terr(e))?;
        let e = &mut self.enumeration;
        let best = e.best.as_mut().unwrap();
        for off in 0..best.cells() {
            let cell = best.cell(off);
            if cell
                .entries()
                .iter()
                .any(|&(v, x)| ins.get(v).is_some_and(|y| y != x))
            {
                continue;
            }
            let at = t
                .table
                .offset(&cell)
                .map_err(|e| ProtocolError::new(self.id, format!("{e}")))?;
            if t.table.values[at] < best.values[off] {
                best.values[off] = t.table.values[at];
                let mut w = ins.clone();
                w.extend(&t.witnesses[at]);
                e.best_ins[off] = Some(w);
            }
        }
        Ok(())
    }

    fn root_replay(&mut self, ctx: Instantiation, out: &mut Outbox) -> Result<(), ProtocolError> {
        let best = self.enumeration.best.as_ref().unwrap();
        let off = best.offset(&ctx).map_err(|e| self.terr(e))?;
        let fins = self.enumeration.best_ins[off]
            .clone()
            .ok_or_else(|| self.err("no instantiation recorded for context"))?;
        self.ctx = ctx;
        self.final_ins = Some(fins.clone());
        self.mode = Mode::Rederive;
        self.dispatch_root_replay(fins, out)
    }

    fn dispatch_root_replay(
        &mut self,
        fins: Instantiation,
        out: &mut Outbox,
    ) -> Result<(), ProtocolError> {
        self.results.clear();
        self.awaiting.clear();
        for &c in &self.member_children {
            out.send(c, Payload::FinalContext(fins.clone()));
            self.awaiting.insert(c);
        }
        Ok(())
    }

    fn root_finish(&mut self, out: &mut Outbox) -> Result<(), ProtocolError> {
        let mut on = self.final_ins.clone().unwrap();
        on.extend(&self.ctx);
        let mut plain = self.conditioned_plain(&on)?;
        for r in self.results.values() {
            plain.push(r.table.condition(&on).map_err(|e| self.terr(e))?);
        }
        let own = if on.contains(self.id) {
            None
        } else {
            Some((self.id, self.domain))
        };
        let (t, arg) = evaluate(own, &plain, &[]).map_err(|e| self.terr(e))?;
        let best = self.enumeration.best.as_ref().unwrap();
        let expected = best.value_at(&self.ctx).map_err(|e| self.terr(e))?;
        if t.table.arity() != 0 || t.table.values[0] != expected {
            return Err(self.err(format!(
                "replayed cost {:?} differs from recorded {expected}",
                t.table.values
            )));
        }
        self.arg = arg;
        let ctx = self.ctx.clone();
        self.assign(ctx, out)
    }
}

impl Agent for BoundedAgent {
    fn id(&self) -> VariableId {
        self.id
    }

    fn start(&mut self, out: &mut Outbox) -> Result<(), ProtocolError> {
        match self.role {
            Role::Normal if self.children.is_empty() => self.dpop_eliminate(out),
            Role::Member if self.member_children.is_empty() && !self.labeled => self.report(out),
            Role::Root => self.maybe_enumerate(out),
            _ => Ok(()),
        }
    }

    fn receive(&mut self, msg: Message, out: &mut Outbox) -> Result<(), ProtocolError> {
        let src = msg.src;
        match msg.payload {
            Payload::Util(t) => {
                if !self.normal_children.contains(&src)
                    || self.normal_utils.insert(src, t).is_some()
                {
                    return Err(self.err(format!("unexpected UTIL from {src}")));
                }
                if !self.normal_ready() {
                    return Ok(());
                }
                match self.role {
                    Role::Normal => self.dpop_eliminate(out),
                    Role::Root => self.maybe_enumerate(out),
                    Role::Member => match self.deferred.take() {
                        Some(ins) => self.begin_sweep(ins, out),
                        None => Ok(()),
                    },
                }
            }
            Payload::Value(ctx) => match self.role {
                Role::Root => self.root_replay(ctx, out),
                _ => self.assign(ctx, out),
            },
            Payload::SepInfo(info) => {
                if !self.member_children.contains(&src) || self.reports.insert(src, info).is_some()
                {
                    return Err(self.err(format!("unexpected SEP_INFO from {src}")));
                }
                if self.reports.len() < self.member_children.len() {
                    return Ok(());
                }
                match self.role {
                    Role::Root => self.root_decide(out),
                    _ => self.report(out),
                }
            }
            Payload::Allocation(pick) => {
                self.selected.insert(pick);
                for &c in &self.member_children {
                    out.send(c, Payload::Allocation(pick));
                }
                if self.member_children.is_empty() {
                    self.report(out)?;
                }
                Ok(())
            }
            Payload::LabelDone(list) => {
                if self.labeling == Labeling::Ism {
                    self.cclist = list.iter().copied().collect();
                    for &c in &self.member_children {
                        self.child_lists.insert(c, self.cclist.clone());
                    }
                }
                self.labeled = true;
                for &c in &self.member_children {
                    out.send(c, Payload::LabelDone(list.clone()));
                }
                Ok(())
            }
            Payload::Instantiation(ins) => {
                if self.role != Role::Member || !self.labeled {
                    return Err(self.err("INSTANTIATION outside a labeled cluster"));
                }
                if self.normal_ready() {
                    self.begin_sweep(ins, out)
                } else {
                    self.deferred = Some(ins);
                    Ok(())
                }
            }
            Payload::FinalContext(fins) => {
                if self.role != Role::Member {
                    return Err(self.err("FINAL_CONTEXT outside a cluster"));
                }
                self.mode = Mode::Rederive;
                self.final_ins = Some(fins.clone());
                self.dispatch(fins, out)
            }
            Payload::BoundedUtil(t) => {
                if !self.awaiting.remove(&src) && self.role != Role::Root {
                    return Err(self.err(format!("unexpected BOUNDED_UTIL from {src}")));
                }
                match (self.role, self.mode) {
                    (Role::Root, Mode::Sweep) => {
                        if self.caching {
                            if let Some(key) = self.sent_keys.remove(&src) {
                                self.cache.store(src, key, t.clone());
                            }
                        }
                        let idx = self.enumeration.next[&src];
                        *self.enumeration.next.get_mut(&src).unwrap() += 1;
                        self.root_record(idx, src, t, out)?;
                        self.root_issue(src, out)
                    }
                    (Role::Root, Mode::Rederive) => {
                        self.results.insert(src, t);
                        if self.awaiting.is_empty() {
                            self.root_finish(out)?;
                        }
                        Ok(())
                    }
                    _ => {
                        if self.caching && self.mode == Mode::Sweep {
                            if let Some(key) = self.sent_keys.remove(&src) {
                                self.cache.store(src, key, t.clone());
                            }
                        }
                        self.results.insert(src, t);
                        if self.awaiting.is_empty() {
                            self.member_complete(out)?;
                        }
                        Ok(())
                    }
                }
            }
        }
    }

    fn value(&self) -> Option<usize> {
        self.value
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mbdpop::detect_clusters;
    use crate::model::{fig2_fixture, FIXTURE_TREE_EDGES};
    use crate::pseudotree::from_tree_edges;
    use crate::rmbdpop::{branch_lists, ism_label};
    use crate::runtime::{run, MessageKind, RunOptions};
    use alloc::string::ToString;

    fn a(k: usize) -> VariableId {
        VariableId(k - 1)
    }

    fn fixture() -> (Problem, PseudoTree, Clusters) {
        let p = fig2_fixture();
        let t = from_tree_edges(&p, VariableId(0), &FIXTURE_TREE_EDGES).unwrap();
        let c = detect_clusters(&t, 2);
        (p, t, c)
    }

    fn reference_lists(t: &PseudoTree, c: &Clusters) -> Vec<BTreeSet<VariableId>> {
        let s: BTreeSet<VariableId> = [2, 9, 5, 6, 7].iter().map(|&k| a(k)).collect();
        branch_lists(t, c, &[s])
    }

    fn traced(p: &Problem, t: &PseudoTree, c: &Clusters, config: &BoundedConfig) -> Vec<String> {
        let mut lines = Vec::new();
        let mut sink = |l: &str| lines.push(l.to_string());
        let opts = RunOptions {
            trace: Some(&mut sink),
            ..RunOptions::fifo()
        };
        run(t, BoundedAgent::agents(p, t, c, config), opts).unwrap();
        lines
    }

    #[test]
    fn distributed_selection_matches_central_rounds() {
        let (p, t, c) = fixture();
        let central = ism_label(&t, &c, 2);
        let config = BoundedConfig::rmbdpop(2, true, true, false);
        let lines = traced(&p, &t, &c, &config);
        let mut seen: BTreeMap<usize, usize> = BTreeMap::new();
        for line in lines.iter().filter(|l| l.contains(" SEP_INFO ")) {
            let f: Vec<&str> = line.split(' ').collect();
            let src: usize = f[2].split("->").next().unwrap().parse().unwrap();
            let round = seen.entry(src).or_default();
            let want = central.rounds[0][*round].reports[src].as_ref().unwrap();
            let body: Vec<String> = want
                .iter()
                .map(|(v, c)| alloc::format!("{v}:{c}"))
                .collect();
            assert_eq!(f[4], alloc::format!("eff={{{}}}", body.join(",")), "{line}");
            *round += 1;
        }
        assert!(seen.values().all(|&r| r == central.rounds[0].len()));

        let out = run(
            &t,
            BoundedAgent::agents(&p, &t, &c, &config),
            RunOptions::fifo(),
        )
        .unwrap();
        assert_eq!(out.agents[2].chosen(), central.selected[0].as_slice());
        for v in 2..14 {
            assert_eq!(out.agents[v].cclist(), &central.lists[v], "node {v}");
        }
    }

    #[test]
    fn first_instantiations_follow_reference_trace() {
        let (p, t, c) = fixture();
        let config = BoundedConfig {
            k: 2,
            labeling: Labeling::Fixed(reference_lists(&t, &c)),
            dem: true,
            caching: false,
        };
        let lines = traced(&p, &t, &c, &config);
        let mut firsts: Vec<(String, String)> = Vec::new();
        for line in lines.iter().filter(|l| l.contains(" INSTANTIATION ")) {
            let f: Vec<&str> = line.split(' ').collect();
            let dst = f[2].split("->").nth(1).unwrap();
            if !firsts
                .iter()
                .any(|(e, _)| e.ends_with(&alloc::format!("->{dst}")))
            {
                firsts.push((f[2].to_string(), f[4].to_string()));
            }
        }
        let want = [
            ("2->3", "{1=0}"),
            ("2->8", "{1=0}"),
            ("3->4", "{1=0}"),
            ("8->9", "{1=0,8=0}"),
            ("4->5", "{1=0,4=0}"),
            ("9->10", "{1=0,8=0}"),
            ("9->11", "{1=0,8=0}"),
            ("5->6", "{1=0,4=0,5=0}"),
            ("11->12", "{1=0,8=0}"),
            ("6->7", "{1=0,4=0,5=0,6=0}"),
            ("12->13", "{1=0,8=0}"),
        ];
        let got: Vec<(&str, &str)> = firsts
            .iter()
            .map(|(e, i)| (e.as_str(), i.as_str()))
            .collect();
        assert_eq!(got, want);
    }

    #[test]
    fn instantiation_counts_without_caching() {
        let (p, t, c) = fixture();
        let config = BoundedConfig {
            k: 2,
            labeling: Labeling::Fixed(reference_lists(&t, &c)),
            dem: true,
            caching: false,
        };
        let out = run(
            &t,
            BoundedAgent::agents(&p, &t, &c, &config),
            RunOptions::fifo(),
        )
        .unwrap();
        let got = |k: usize| out.metrics.received_by(a(k), MessageKind::Instantiation);
        assert_eq!(got(12), 9);
        assert_eq!(got(8), 81);
        assert_eq!(got(4), 3);
    }

    #[test]
    fn full_enumeration_reaches_every_member() {
        let (p, t, c) = fixture();
        let config = BoundedConfig::mbdpop(2, Heuristic::Highest);
        let out = run(
            &t,
            BoundedAgent::agents(&p, &t, &c, &config),
            RunOptions::fifo(),
        )
        .unwrap();
        for m in &c.list[0].members {
            assert_eq!(out.metrics.received_by(*m, MessageKind::Instantiation), 729);
        }
        assert!(out.metrics.peak_table_dims <= 2);
    }

    #[test]
    fn caching_cuts_messages_and_keeps_cost() {
        let (p, t, c) = fixture();
        let plain = BoundedConfig::rmbdpop(2, true, true, false);
        let cached = BoundedConfig {
            caching: true,
            ..plain.clone()
        };
        let x = run(
            &t,
            BoundedAgent::agents(&p, &t, &c, &plain),
            RunOptions::fifo(),
        )
        .unwrap();
        let y = run(
            &t,
            BoundedAgent::agents(&p, &t, &c, &cached),
            RunOptions::fifo(),
        )
        .unwrap();
        let vx: Vec<usize> = x.agents.iter().map(|g| g.value().unwrap()).collect();
        let vy: Vec<usize> = y.agents.iter().map(|g| g.value().unwrap()).collect();
        assert_eq!(p.cost_of(&vx), p.cost_of(&vy));
        assert!(y.metrics.total_messages() <= x.metrics.total_messages());
    }
}
