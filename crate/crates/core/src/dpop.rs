//! Plain DPOP: one UTIL sweep up the pseudo tree, one VALUE sweep down.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use crate::model::{Problem, VariableId};
use crate::pseudotree::PseudoTree;
use crate::runtime::{Agent, Message, Outbox, Payload, ProtocolError};
use crate::tables::{ArgTable, Instantiation, TableError, UtilityTable};

/// Prefix of the protocol error raised when a UTIL table exceeds the dims cap.
pub const WIDTH_EXCEEDED: &str = "width exceeded";

/// Cost tables an agent owns: those linking it to its parent and pseudo parents.
pub fn local_tables(problem: &Problem, tree: &PseudoTree, id: VariableId) -> Vec<UtilityTable> {
    tree.ancestor_parents(id)
        .map(|a| {
            let c = problem
                .constraint(id, a)
                .expect("tree edge without constraint");
            UtilityTable::from_cost_table(c)
        })
        .collect()
}

pub(crate) fn table_err(id: VariableId, e: TableError) -> ProtocolError {
    ProtocolError::new(id, format!("{e}"))
}

pub struct DpopAgent {
    id: VariableId,
    domain: usize,
    parent: Option<VariableId>,
    children: Vec<VariableId>,
    local: Vec<UtilityTable>,
    received: BTreeMap<VariableId, UtilityTable>,
    arg: Option<ArgTable>,
    cap: Option<usize>,
    value: Option<usize>,
}

impl DpopAgent {
    pub fn new(problem: &Problem, tree: &PseudoTree, id: VariableId, cap: Option<usize>) -> Self {
        Self {
            id,
            domain: problem.domain(id),
            parent: tree.parent[id.0],
            children: tree.children[id.0].clone(),
            local: local_tables(problem, tree, id),
            received: BTreeMap::new(),
            arg: None,
            cap,
            value: None,
        }
    }

    pub fn agents(problem: &Problem, tree: &PseudoTree, cap: Option<usize>) -> Vec<Self> {
        problem
            .vars()
            .map(|v| Self::new(problem, tree, v, cap))
            .collect()
    }

    fn eliminate(&mut self, out: &mut Outbox) -> Result<(), ProtocolError> {
        let id = self.id;
        let mut joint = UtilityTable::zeros(alloc::vec![(id, self.domain)]);
        for t in self.local.iter().chain(self.received.values()) {
            joint = UtilityTable::join(&joint, t).map_err(|e| table_err(id, e))?;
        }
        let (util, arg) = joint.eliminate_min(id).map_err(|e| table_err(id, e))?;
        if let Some(cap) = self.cap {
            if util.arity() > cap {
                return Err(ProtocolError::new(
                    id,
                    format!("{WIDTH_EXCEEDED}: {} dims > {cap}", util.arity()),
                ));
            }
        }
        self.arg = Some(arg);
        match self.parent {
            Some(p) => out.send(p, Payload::Util(util.normalized())),
            None => self.assign(Instantiation::new(), out)?,
        }
        Ok(())
    }

    fn assign(&mut self, mut ctx: Instantiation, out: &mut Outbox) -> Result<(), ProtocolError> {
        let arg = self
            .arg
            .as_ref()
            .ok_or_else(|| ProtocolError::new(self.id, "VALUE before UTIL phase finished"))?;
        let own = arg.lookup_best(&ctx).map_err(|e| table_err(self.id, e))?;
        self.value = Some(own);
        ctx.push(self.id, own);
        for &c in &self.children {
            out.send(c, Payload::Value(ctx.clone()));
        }
        Ok(())
    }
}

impl Agent for DpopAgent {
    fn id(&self) -> VariableId {
        self.id
    }

    fn start(&mut self, out: &mut Outbox) -> Result<(), ProtocolError> {
        if self.children.is_empty() {
            self.eliminate(out)?;
        }
        Ok(())
    }

    fn receive(&mut self, msg: Message, out: &mut Outbox) -> Result<(), ProtocolError> {
        match msg.payload {
            Payload::Util(t) => {
                if !self.children.contains(&msg.src) {
                    return Err(ProtocolError::new(
                        self.id,
                        format!("UTIL from non-child {}", msg.src),
                    ));
                }
                if self.received.insert(msg.src, t).is_some() {
                    return Err(ProtocolError::new(
                        self.id,
                        format!("duplicate UTIL from {}", msg.src),
                    ));
                }
                if self.received.len() == self.children.len() {
                    self.eliminate(out)?;
                }
                Ok(())
            }
            Payload::Value(ctx) => self.assign(ctx, out),
            other => Err(ProtocolError::new(
                self.id,
                format!("unexpected {}", other.kind()),
            )),
        }
    }

    fn value(&self) -> Option<usize> {
        self.value
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{fig2_fixture, CostTable, FIXTURE_TREE_EDGES};
    use crate::pseudotree::{build_pseudo_tree, from_tree_edges};
    use crate::runtime::{run, MessageKind, RunOptions};
    use alloc::string::String;

    fn v(i: usize) -> VariableId {
        VariableId(i)
    }

    fn chain() -> Problem {
        let t = alloc::vec![0, 1, 1, 0];
        Problem::new(
            "chain",
            alloc::vec![2; 3],
            alloc::vec![
                CostTable::new(v(0), v(1), 2, 2, t.clone()),
                CostTable::new(v(1), v(2), 2, 2, t),
            ],
        )
    }

    #[test]
    fn chain_root_sees_zero() {
        let p = chain();
        let tree = build_pseudo_tree(&p).unwrap();
        let mut lines = Vec::new();
        let mut sink = |l: &str| lines.push(String::from(l));
        let opts = RunOptions {
            trace: Some(&mut sink),
            ..RunOptions::fifo()
        };
        let out = run(&tree, DpopAgent::agents(&p, &tree, None), opts).unwrap();
        let values: Vec<usize> = out.agents.iter().map(|a| a.value().unwrap()).collect();
        assert_eq!(p.cost_of(&values), 0);
        assert_eq!(out.metrics.count(MessageKind::Util), 2);
        assert_eq!(out.metrics.count(MessageKind::Value), 2);
        assert_eq!(lines.len(), 4);
    }

    #[test]
    fn fixture_first_util_to_root() {
        let p = fig2_fixture();
        let tree = from_tree_edges(&p, v(0), &FIXTURE_TREE_EDGES).unwrap();
        let mut lines = Vec::new();
        let mut sink = |l: &str| lines.push(String::from(l));
        let opts = RunOptions {
            trace: Some(&mut sink),
            ..RunOptions::fifo()
        };
        let out = run(&tree, DpopAgent::agents(&p, &tree, None), opts).unwrap();
        assert!(lines.iter().any(|l| l.ends_with("UTIL 1->0 4 dims=[0]")));
        assert_eq!(out.metrics.peak_table_dims, 6);
        assert_eq!(out.metrics.total_messages(), 26);
    }

    #[test]
    fn cap_aborts() {
        let p = fig2_fixture();
        let tree = from_tree_edges(&p, v(0), &FIXTURE_TREE_EDGES).unwrap();
        let err = run(
            &tree,
            DpopAgent::agents(&p, &tree, Some(5)),
            RunOptions::fifo(),
        )
        .err()
        .unwrap();
        assert!(alloc::format!("{err}").contains(WIDTH_EXCEEDED));
    }

    #[test]
    fn leaf_util_has_ancestor_dims() {
        let p = fig2_fixture();
        let tree = from_tree_edges(&p, v(0), &FIXTURE_TREE_EDGES).unwrap();
        let mut a = DpopAgent::new(&p, &tree, v(7), None);
        let mut out = Outbox::default();
        a.start(&mut out).unwrap();
        let Payload::Util(t) = &out.pending()[0].1 else {
            panic!("expected UTIL")
        };
        let dims: Vec<VariableId> = t.vars().collect();
        assert_eq!(dims, tree.sep[7]);
        assert_eq!(a.local.len(), 6);
    }
}
