//! Deterministic simulated message bus.
//!
//! Agents are state machines that only see [`Message`] values. The loop
//! delivers one message at a time until every channel is empty. Each
//! `(src, dst)` channel is FIFO under every schedule.

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, VecDeque};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::VariableId;
use crate::pseudotree::PseudoTree;
use crate::tables::{AnnotatedTable, Instantiation, UtilityTable};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MessageKind {
    Util,
    Value,
    SepInfo,
    Allocation,
    LabelDone,
    Instantiation,
    BoundedUtil,
    FinalContext,
}

impl MessageKind {
    pub const ALL: [MessageKind; 8] = [
        MessageKind::Util,
        MessageKind::Value,
        MessageKind::SepInfo,
        MessageKind::Allocation,
        MessageKind::LabelDone,
        MessageKind::Instantiation,
        MessageKind::BoundedUtil,
        MessageKind::FinalContext,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            MessageKind::Util => "UTIL",
            MessageKind::Value => "VALUE",
            MessageKind::SepInfo => "SEP_INFO",
            MessageKind::Allocation => "ALLOCATION",
            MessageKind::LabelDone => "LABEL_DONE",
            MessageKind::Instantiation => "INSTANTIATION",
            MessageKind::BoundedUtil => "BOUNDED_UTIL",
            MessageKind::FinalContext => "FINAL_CONTEXT",
        }
    }
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Effectiveness report sent up a cluster during iterative selection.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SepInfo {
    /// `(candidate, count)` pairs sorted by candidate.
    pub eff: Vec<(VariableId, u32)>,
    /// Whether any node in the sender's subtree is still active.
    pub active: bool,
    /// Cycle-cut nodes relevant to the sender's subtree.
    pub cc: Vec<VariableId>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Payload {
    Util(UtilityTable),
    Value(Instantiation),
    SepInfo(SepInfo),
    Allocation(VariableId),
    LabelDone(Vec<VariableId>),
    Instantiation(Instantiation),
    BoundedUtil(AnnotatedTable),
    FinalContext(Instantiation),
}

impl Payload {
    pub fn kind(&self) -> MessageKind {
        match self {
            Payload::Util(_) => MessageKind::Util,
            Payload::Value(_) => MessageKind::Value,
            Payload::SepInfo(_) => MessageKind::SepInfo,
            Payload::Allocation(_) => MessageKind::Allocation,
            Payload::LabelDone(_) => MessageKind::LabelDone,
            Payload::Instantiation(_) => MessageKind::Instantiation,
            Payload::BoundedUtil(_) => MessageKind::BoundedUtil,
            Payload::FinalContext(_) => MessageKind::FinalContext,
        }
    }

    /// Dimensions of the carried table, if any.
    pub fn table_dims(&self) -> Option<usize> {
        match self {
            Payload::Util(t) => Some(t.arity()),
            Payload::BoundedUtil(a) => Some(a.table.arity()),
            _ => None,
        }
    }

    fn summary(&self) -> String {
        fn ids(list: &[VariableId]) -> String {
            let parts: Vec<String> = list.iter().map(|v| format!("{v}")).collect();
            format!("[{}]", parts.join(","))
        }
        match self {
            Payload::Util(t) => {
                let dims: Vec<VariableId> = t.vars().collect();
                format!("dims={}", ids(&dims))
            }
            Payload::BoundedUtil(a) => {
                let dims: Vec<VariableId> = a.table.vars().collect();
                format!("dims={} witness={}", ids(&dims), a.witness_entries())
            }
            Payload::Value(i) | Payload::Instantiation(i) | Payload::FinalContext(i) => {
                format!("{i}")
            }
            Payload::SepInfo(s) => {
                let eff: Vec<String> = s.eff.iter().map(|(v, c)| format!("{v}:{c}")).collect();
                format!(
                    "eff={{{}}} active={} cc={}",
                    eff.join(","),
                    u8::from(s.active),
                    ids(&s.cc)
                )
            }
            Payload::Allocation(v) => format!("cc={v}"),
            Payload::LabelDone(list) => format!("cc={}", ids(list)),
        }
    }
}

/// Size of a message in abstract entries, including one header unit.
///
/// Tables count cells (plus witness entries for bounded tables), assignments
/// count `(var, value)` pairs, SEP_INFO counts its pairs, the activity flag and
/// any cycle-cut list, and LABEL_DONE counts one unit plus its list.
pub fn message_size(payload: &Payload) -> u64 {
    let body = match payload {
        Payload::Util(t) => t.cells(),
        Payload::BoundedUtil(a) => a.table.cells() + a.witness_entries(),
        Payload::Value(i) | Payload::Instantiation(i) | Payload::FinalContext(i) => i.len(),
        Payload::SepInfo(s) => s.eff.len() + 1 + s.cc.len(),
        Payload::Allocation(_) => 1,
        Payload::LabelDone(list) => 1 + list.len(),
    };
    body as u64 + 1
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Message {
    pub src: VariableId,
    pub dst: VariableId,
    pub payload: Payload,
}

impl Message {
    pub fn kind(&self) -> MessageKind {
        self.payload.kind()
    }

    pub fn size(&self) -> u64 {
        message_size(&self.payload)
    }

    /// `<kind> <src>-><dst> <size> <summary>`
    pub fn describe(&self) -> String {
        format!(
            "{} {}->{} {} {}",
            self.kind(),
            self.src,
            self.dst,
            self.size(),
            self.payload.summary()
        )
    }
}

/// Messages emitted by one agent activation.
#[derive(Debug, Default)]
pub struct Outbox {
    pending: Vec<(VariableId, Payload)>,
}

impl Outbox {
    pub fn send(&mut self, dst: VariableId, payload: Payload) {
        self.pending.push((dst, payload));
    }

    pub fn pending(&self) -> &[(VariableId, Payload)] {
        &self.pending
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProtocolError {
    pub agent: VariableId,
    pub reason: String,
}

impl ProtocolError {
    pub fn new(agent: VariableId, reason: impl Into<String>) -> Self {
        Self {
            agent,
            reason: reason.into(),
        }
    }
}

impl fmt::Display for ProtocolError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "agent {}: {}", self.agent, self.reason)
    }
}

impl core::error::Error for ProtocolError {}

pub trait Agent {
    fn id(&self) -> VariableId;
    /// Called once, in id order, before any delivery.
    fn start(&mut self, out: &mut Outbox) -> Result<(), ProtocolError>;
    fn receive(&mut self, msg: Message, out: &mut Outbox) -> Result<(), ProtocolError>;
    /// The agent's chosen value once the run has finished.
    fn value(&self) -> Option<usize>;
}

/// Monotonic time source used for timeouts and the elapsed metric.
pub trait Clock {
    fn now_nanos(&self) -> u64;
}

/// A clock that never advances: no timeouts, elapsed time 0.
pub struct NullClock;

impl Clock for NullClock {
    fn now_nanos(&self) -> u64 {
        0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Schedule {
    Fifo,
    Random(u64),
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Metrics {
    pub msg_count: [u64; 8],
    pub network_load: u64,
    pub peak_table_dims: usize,
    pub elapsed_nanos: u64,
    /// Per agent, messages received by kind.
    pub received: Vec<[u64; 8]>,
}

impl Metrics {
    pub fn total_messages(&self) -> u64 {
        self.msg_count.iter().sum()
    }

    pub fn count(&self, kind: MessageKind) -> u64 {
        self.msg_count[kind.index()]
    }

    pub fn received_by(&self, agent: VariableId, kind: MessageKind) -> u64 {
        self.received[agent.0][kind.index()]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunStatus {
    Completed,
    TimedOut,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RunError {
    Protocol {
        error: ProtocolError,
        offending: Option<String>,
    },
    NotTreeEdge {
        src: VariableId,
        dst: VariableId,
    },
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Protocol {
                error,
                offending: Some(m),
            } => write!(f, "{error} (while handling {m})"),
            RunError::Protocol {
                error,
                offending: None,
            } => write!(f, "{error} (during start)"),
            RunError::NotTreeEdge { src, dst } => {
                write!(f, "{src} sent to non tree-neighbour {dst}")
            }
        }
    }
}

impl core::error::Error for RunError {}

pub struct RunOutcome<A> {
    pub agents: Vec<A>,
    pub metrics: Metrics,
    pub status: RunStatus,
}

pub struct RunOptions<'a> {
    pub schedule: Schedule,
    pub timeout_nanos: Option<u64>,
    pub clock: &'a dyn Clock,
    /// Receives one line per delivery: `<step> <kind> <src>-><dst> <size> <summary>`.
    pub trace: Option<&'a mut dyn FnMut(&str)>,
}

impl<'a> RunOptions<'a> {
    pub fn fifo() -> Self {
        Self {
            schedule: Schedule::Fifo,
            timeout_nanos: None,
            clock: &NullClock,
            trace: None,
        }
    }
}

enum Queues {
    Fifo(VecDeque<Message>),
    Random {
        rng: Box<ChaCha8Rng>,
        channels: BTreeMap<(VariableId, VariableId), VecDeque<Message>>,
    },
}

impl Queues {
    fn push(&mut self, msg: Message) {
        match self {
            Queues::Fifo(q) => q.push_back(msg),
            Queues::Random { channels, .. } => channels
                .entry((msg.src, msg.dst))
                .or_default()
                .push_back(msg),
        }
    }

    fn pop(&mut self) -> Option<Message> {
        match self {
            Queues::Fifo(q) => q.pop_front(),
            Queues::Random { rng, channels } => {
                if channels.is_empty() {
                    return None;
                }
                let pick = rng.gen_range(0..channels.len());
                let key = *channels.keys().nth(pick).unwrap();
                let queue = channels.get_mut(&key).unwrap();
                let msg = queue.pop_front();
                if queue.is_empty() {
                    channels.remove(&key);
                }
                msg
            }
        }
    }
}

/// Runs agents (indexed by variable id) to quiescence.
pub fn run<A: Agent>(
    tree: &PseudoTree,
    mut agents: Vec<A>,
    mut opts: RunOptions<'_>,
) -> Result<RunOutcome<A>, RunError> {
    let n = agents.len();
    let start = opts.clock.now_nanos();
    let mut metrics = Metrics {
        received: vec![[0; 8]; n],
        ..Metrics::default()
    };
    let mut queues = match opts.schedule {
        Schedule::Fifo => Queues::Fifo(VecDeque::new()),
        Schedule::Random(seed) => Queues::Random {
            rng: Box::new(ChaCha8Rng::seed_from_u64(seed)),
            channels: BTreeMap::new(),
        },
    };

    let post = |src: VariableId,
                out: Outbox,
                queues: &mut Queues,
                metrics: &mut Metrics|
     -> Result<(), RunError> {
        for (dst, payload) in out.pending {
            if tree.parent[src.0] != Some(dst) && tree.parent[dst.0] != Some(src) {
                return Err(RunError::NotTreeEdge { src, dst });
            }
            let msg = Message { src, dst, payload };
            metrics.msg_count[msg.kind().index()] += 1;
            metrics.network_load += msg.size();
            if let Some(d) = msg.payload.table_dims() {
                metrics.peak_table_dims = metrics.peak_table_dims.max(d);
            }
            queues.push(msg);
        }
        Ok(())
    };

    for agent in agents.iter_mut() {
        let mut out = Outbox::default();
        let id = agent.id();
        agent.start(&mut out).map_err(|error| RunError::Protocol {
            error,
            offending: None,
        })?;
        post(id, out, &mut queues, &mut metrics)?;
    }

    let mut step: u64 = 0;
    let mut status = RunStatus::Completed;
    while let Some(msg) = queues.pop() {
        if let Some(limit) = opts.timeout_nanos {
            if opts.clock.now_nanos().saturating_sub(start) > limit {
                status = RunStatus::TimedOut;
                break;
            }
        }
        step += 1;
        if let Some(trace) = opts.trace.as_mut() {
            trace(&format!("{step} {}", msg.describe()));
        }
        let (dst, kind, src, size) = (msg.dst, msg.kind(), msg.src, msg.size());
        metrics.received[dst.0][kind.index()] += 1;
        let mut out = Outbox::default();
        if let Err(error) = agents[dst.0].receive(msg, &mut out) {
            let offending = Some(format!("{step} {kind} {src}->{dst} {size}"));
            return Err(RunError::Protocol { error, offending });
        }
        post(dst, out, &mut queues, &mut metrics)?;
    }
    metrics.elapsed_nanos = opts.clock.now_nanos().saturating_sub(start);
    Ok(RunOutcome {
        agents,
        metrics,
        status,
    })
}
