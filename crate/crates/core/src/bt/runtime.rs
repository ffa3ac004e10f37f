use super::{BtNode, LeafNode, NodeKind, RepeatCount, Status, TIME_EPS};
use crate::world::Vec2;

/// Scratch state owned by one leaf instance. Cleared whenever the leaf is
/// halted or its enclosing composite completes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LeafMemory {
    pub started_at: Option<f64>,
    /// Progress watchdog: last time meaningful progress was observed.
    pub progress_t: Option<f64>,
    pub progress_value: Option<f64>,
    /// Generic phase marker (leaf-specific meaning).
    pub phase: u8,
    pub phase_t: Option<f64>,
    pub anchor: Option<Vec2>,
    pub latched: bool,
}

impl LeafMemory {
    pub fn is_fresh(&self) -> bool {
        *self == LeafMemory::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeafEvent {
    /// First tick of an action since its last reset.
    Started,
    /// An action completed.
    Finished(Status),
    /// A running action was interrupted.
    Halted,
    /// A condition's result differs from its previous tick.
    ConditionChanged(Status),
}

/// Executes leaves on behalf of the interpreter.
pub trait LeafDispatch {
    /// Current simulated time (s).
    fn now(&self) -> f64;
    fn tick_leaf(&mut self, leaf: &LeafNode, is_condition: bool, memory: &mut LeafMemory) -> Status;
    /// Called when a running action is interrupted.
    fn halt_leaf(&mut self, _leaf: &LeafNode, _memory: &mut LeafMemory) {}
    fn on_event(&mut self, _leaf: &LeafNode, _event: LeafEvent) {}
}

#[derive(Debug, Clone, Default, PartialEq)]
struct NodeMemory {
    cursor: usize,
    count: u32,
    started_at: Option<f64>,
    done: Vec<Option<Status>>,
    running: bool,
    last: Option<Status>,
    leaf: LeafMemory,
}

/// A tree definition plus the execution state of one agent.
#[derive(Debug, Clone)]
pub struct BehaviorTree {
    root: BtNode,
    /// Subtree sizes indexed in pre-order.
    sizes: Vec<usize>,
    memory: Vec<NodeMemory>,
}

impl BehaviorTree {
    pub fn new(root: BtNode) -> Self {
        let mut sizes = Vec::with_capacity(root.size());
        fill_sizes(&root, &mut sizes);
        let memory = vec![NodeMemory::default(); sizes.len()];
        Self { root, sizes, memory }
    }

    pub fn root(&self) -> &BtNode {
        &self.root
    }

    /// Ticks the root once. When the root completes, all memory is cleared
    /// so the next tick starts a fresh traversal.
    pub fn tick(&mut self, d: &mut dyn LeafDispatch) -> Status {
        let mut ctx = Ctx {
            sizes: &self.sizes,
            mem: &mut self.memory,
            d,
        };
        let s = ctx.tick(&self.root, 0);
        if s != Status::Running {
            ctx.halt(&self.root, 0);
        }
        s
    }

    /// Clears all execution memory without notifying leaves.
    pub fn reset(&mut self) {
        self.memory.fill(NodeMemory::default());
    }

    /// Interrupts running leaves, then clears all memory.
    pub fn halt(&mut self, d: &mut dyn LeafDispatch) {
        let mut ctx = Ctx {
            sizes: &self.sizes,
            mem: &mut self.memory,
            d,
        };
        ctx.halt(&self.root, 0);
    }

    /// True when no traversal memory is held. Remembered condition results
    /// are not counted.
    pub fn is_fresh(&self) -> bool {
        self.memory.iter().all(|m| {
            *m == NodeMemory {
                last: m.last,
                ..NodeMemory::default()
            }
        })
    }
}

fn fill_sizes(node: &BtNode, out: &mut Vec<usize>) -> usize {
    let idx = out.len();
    out.push(0);
    let mut total = 1;
    for c in &node.children {
        total += fill_sizes(c, out);
    }
    out[idx] = total;
    total
}

struct Ctx<'a> {
    sizes: &'a [usize],
    mem: &'a mut [NodeMemory],
    d: &'a mut dyn LeafDispatch,
}

impl Ctx<'_> {
    fn child_indices(&self, node: &BtNode, idx: usize) -> Vec<usize> {
        let mut k = idx + 1;
        node.children
            .iter()
            .map(|_| {
                let here = k;
                k += self.sizes[here];
                here
            })
            .collect()
    }

    /// Interrupts running leaves in the subtree and clears its memory.
    fn halt(&mut self, node: &BtNode, idx: usize) {
        if let NodeKind::Action(leaf) = &node.kind {
            if self.mem[idx].running {
                self.d.halt_leaf(leaf, &mut self.mem[idx].leaf);
                self.d.on_event(leaf, LeafEvent::Halted);
            }
        }
        let kids = self.child_indices(node, idx);
        for (c, k) in node.children.iter().zip(kids) {
            self.halt(c, k);
        }
        // A condition's last result survives halts so repeated identical
        // outcomes across traversal cycles are not re-reported.
        let last = self.mem[idx].last;
        self.mem[idx] = NodeMemory {
            last,
            ..NodeMemory::default()
        };
    }

    fn halt_children(&mut self, node: &BtNode, idx: usize) {
        let kids = self.child_indices(node, idx);
        for (c, k) in node.children.iter().zip(kids) {
            self.halt(c, k);
        }
    }

    /// Halts the whole subtree and passes `s` through.
    fn complete(&mut self, node: &BtNode, idx: usize, s: Status) -> Status {
        self.halt(node, idx);
        s
    }

    fn tick(&mut self, node: &BtNode, idx: usize) -> Status {
        match &node.kind {
            NodeKind::Sequence => self.tick_memory_composite(node, idx, Status::Success),
            NodeKind::Fallback => self.tick_memory_composite(node, idx, Status::Failure),
            NodeKind::ReactiveSequence => {
                let kids = self.child_indices(node, idx);
                for (i, (c, &k)) in node.children.iter().zip(&kids).enumerate() {
                    match self.tick(c, k) {
                        Status::Success => {}
                        Status::Running => {
                            for (c2, &k2) in node.children.iter().zip(&kids).skip(i + 1) {
                                self.halt(c2, k2);
                            }
                            return Status::Running;
                        }
                        Status::Failure => return self.complete(node, idx, Status::Failure),
                    }
                }
                self.complete(node, idx, Status::Success)
            }
            NodeKind::Parallel { success_threshold } => {
                let kids = self.child_indices(node, idx);
                let n = kids.len();
                if self.mem[idx].done.len() != n {
                    self.mem[idx].done = vec![None; n];
                }
                for (i, (c, &k)) in node.children.iter().zip(&kids).enumerate() {
                    if self.mem[idx].done[i].is_some() {
                        continue;
                    }
                    let s = self.tick(c, k);
                    if s != Status::Running {
                        self.mem[idx].done[i] = Some(s);
                    }
                }
                let done = &self.mem[idx].done;
                let succ = done.iter().filter(|s| **s == Some(Status::Success)).count();
                let fail = done.iter().filter(|s| **s == Some(Status::Failure)).count();
                if succ >= *success_threshold {
                    self.complete(node, idx, Status::Success)
                } else if fail > n - success_threshold {
                    self.complete(node, idx, Status::Failure)
                } else {
                    Status::Running
                }
            }
            NodeKind::Inverter => match self.tick(&node.children[0], idx + 1) {
                Status::Success => Status::Failure,
                Status::Failure => Status::Success,
                Status::Running => Status::Running,
            },
            NodeKind::Repeat(count) => match self.tick(&node.children[0], idx + 1) {
                Status::Running => Status::Running,
                Status::Failure => self.complete(node, idx, Status::Failure),
                Status::Success => {
                    self.halt_children(node, idx);
                    self.mem[idx].count += 1;
                    match count {
                        RepeatCount::Times(n) if self.mem[idx].count >= *n => {
                            self.complete(node, idx, Status::Success)
                        }
                        _ => Status::Running,
                    }
                }
            },
            NodeKind::Timeout { seconds } => {
                let now = self.d.now();
                let start = *self.mem[idx].started_at.get_or_insert(now);
                match self.tick(&node.children[0], idx + 1) {
                    Status::Running if now - start >= seconds - TIME_EPS => {
                        self.complete(node, idx, Status::Failure)
                    }
                    Status::Running => Status::Running,
                    s => {
                        self.mem[idx].started_at = None;
                        s
                    }
                }
            }
            NodeKind::Action(leaf) => {
                if !self.mem[idx].running {
                    self.d.on_event(leaf, LeafEvent::Started);
                }
                let m = &mut self.mem[idx];
                let s = self.d.tick_leaf(leaf, false, &mut m.leaf);
                m.running = s == Status::Running;
                if s != Status::Running {
                    self.d.on_event(leaf, LeafEvent::Finished(s));
                }
                s
            }
            NodeKind::Condition(leaf) => {
                let m = &mut self.mem[idx];
                let s = self.d.tick_leaf(leaf, true, &mut m.leaf);
                let changed = m.last != Some(s);
                m.last = Some(s);
                if changed {
                    self.d.on_event(leaf, LeafEvent::ConditionChanged(s));
                }
                s
            }
        }
    }

    /// Sequence (`pass` = SUCCESS) or Fallback (`pass` = FAILURE) with memory.
    fn tick_memory_composite(&mut self, node: &BtNode, idx: usize, pass: Status) -> Status {
        let kids = self.child_indices(node, idx);
        let mut i = self.mem[idx].cursor;
        while i < kids.len() {
            match self.tick(&node.children[i], kids[i]) {
                Status::Running => {
                    self.mem[idx].cursor = i;
                    return Status::Running;
                }
                s if s == pass => i += 1,
                s => return self.complete(node, idx, s),
            }
        }
        self.complete(node, idx, pass)
    }
}
