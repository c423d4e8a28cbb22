//! The sequential QTree object and its multi-instance forest.
//!
//! A tree holds nodes keyed by round with explicit parent links. `add` inserts
//! a node if it links to an existing lower-round parent, uses a fresh round and
//! does not branch off below the highest committed node. `commit` flips an
//! `ADDED` node to `COMMITTED`. Both return [`Outcome::Fail`] instead of
//! raising errors.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::round::{fmt_opt_value, Round, RoundForm, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    SingleDecree,
    Smr,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::SingleDecree => "single-decree",
            Mode::Smr => "smr",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Status {
    Added,
    Ghost,
    Committed,
}

impl Status {
    /// Whether moving from `self` to `next` is a legal status change.
    pub fn may_become(self, next: Status) -> bool {
        self == next || (self == Status::Added && next != Status::Added)
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Added => "ADDED",
            Status::Ghost => "GHOST",
            Status::Committed => "COMMITTED",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Ok,
    Fail,
}

impl Outcome {
    pub fn from_bool(ok: bool) -> Outcome {
        if ok {
            Outcome::Ok
        } else {
            Outcome::Fail
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Ok => "OK",
            Outcome::Fail => "FAIL",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TreeError {
    #[error("round {0} is not present in the tree")]
    UnknownRound(Round),
    #[error("operation requires single-decree mode")]
    NotSingleDecree,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub round: Round,
    pub value: Option<Value>,
    pub parent: Round,
    pub status: Status,
}

/// A node that has not been inserted yet; the input to the add predicates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidate<'a> {
    pub round: Round,
    pub value: &'a Value,
    pub parent: Round,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QTree {
    mode: Mode,
    form: RoundForm,
    nodes: BTreeMap<Round, Node>,
}

impl QTree {
    pub fn new(mode: Mode, form: RoundForm) -> QTree {
        let root = Round::zero(form);
        let mut nodes = BTreeMap::new();
        nodes.insert(
            root,
            Node {
                round: root,
                value: None,
                parent: root,
                status: Status::Committed,
            },
        );
        QTree { mode, form, nodes }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn form(&self) -> RoundForm {
        self.form
    }

    pub fn root(&self) -> Round {
        Round::zero(self.form)
    }

    pub fn node(&self, r: Round) -> Option<&Node> {
        self.nodes.get(&r)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.len() == 1
    }

    pub fn statuses(&self) -> BTreeMap<Round, Status> {
        self.nodes.iter().map(|(r, n)| (*r, n.status)).collect()
    }

    /// Rounds on the parent chain starting at `r` (inclusive) down to the root.
    fn chain(&self, r: Round) -> impl Iterator<Item = Round> + '_ {
        let root = self.root();
        let mut cursor = self.nodes.contains_key(&r).then_some(r);
        std::iter::from_fn(move || {
            let here = cursor?;
            cursor = if here == root {
                None
            } else {
                self.nodes.get(&here).map(|n| n.parent)
            };
            Some(here)
        })
    }

    fn is_ancestor_or_self(&self, ancestor: Round, of: Round) -> bool {
        self.chain(of).any(|r| r == ancestor)
    }

    pub fn conflicting(&self, a: Round, b: Round) -> Result<bool, TreeError> {
        for r in [a, b] {
            if !self.nodes.contains_key(&r) {
                return Err(TreeError::UnknownRound(r));
            }
        }
        Ok(!self.is_ancestor_or_self(a, b) && !self.is_ancestor_or_self(b, a))
    }

    /// The committed node with the highest round. The root always qualifies
    /// when nothing else is committed.
    pub fn max_committed(&self) -> Round {
        self.nodes
            .values()
            .filter(|n| n.status == Status::Committed)
            .map(|n| n.round)
            .max()
            .unwrap_or_else(|| self.root())
    }

    pub fn link(&self, n: &Candidate<'_>) -> bool {
        n.parent.form() == self.form && self.nodes.contains_key(&n.parent) && n.parent < n.round
    }

    pub fn new_round(&self, n: &Candidate<'_>) -> bool {
        !self.nodes.contains_key(&n.round)
    }

    pub fn extends_trunk(&self, n: &Candidate<'_>) -> bool {
        let head = self.max_committed();
        n.round < head || self.is_ancestor_or_self(head, n.parent)
    }

    pub fn value_constraint(&self, n: &Candidate<'_>) -> bool {
        if n.parent == self.root() {
            return true;
        }
        self.nodes.get(&n.parent).and_then(|p| p.value.as_ref()) == Some(n.value)
    }

    /// Whether `add` would succeed on the current state.
    pub fn admits(&self, n: &Candidate<'_>) -> bool {
        n.round.form() == self.form
            && !n.round.is_zero()
            && self.link(n)
            && self.new_round(n)
            && self.extends_trunk(n)
            && (self.mode == Mode::Smr || self.value_constraint(n))
    }

    pub fn add(&mut self, round: Round, value: Value, parent: Round) -> Outcome {
        let candidate = Candidate {
            round,
            value: &value,
            parent,
        };
        if !self.admits(&candidate) {
            return Outcome::Fail;
        }
        let status = if self.nodes.range(round..).next().is_some() {
            Status::Ghost
        } else {
            Status::Added
        };
        let on_branch: Vec<Round> = self.chain(parent).collect();
        for node in self.nodes.range_mut(..round).map(|(_, n)| n) {
            if node.status == Status::Added && !on_branch.contains(&node.round) {
                node.status = Status::Ghost;
            }
        }
        self.nodes.insert(
            round,
            Node {
                round,
                value: Some(value),
                parent,
                status,
            },
        );
        Outcome::Ok
    }

    pub fn commit(&mut self, round: Round) -> Outcome {
        match self.nodes.get_mut(&round) {
            Some(n) if n.status == Status::Added => {
                n.status = Status::Committed;
                Outcome::Ok
            }
            _ => Outcome::Fail,
        }
    }

    /// Rounds from the root to the highest committed node.
    pub fn trunk(&self) -> Vec<Round> {
        let mut rounds: Vec<Round> = self.chain(self.max_committed()).collect();
        rounds.reverse();
        rounds
    }

    pub fn decided_value(&self) -> Result<Option<&Value>, TreeError> {
        if self.mode != Mode::SingleDecree {
            return Err(TreeError::NotSingleDecree);
        }
        let head = self.max_committed();
        Ok(self.nodes.get(&head).and_then(|n| n.value.as_ref()))
    }

    /// One line per node, root first then ascending rounds.
    pub fn snapshot(&self) -> String {
        let mut out = String::new();
        for n in self.nodes.values() {
            let _ = writeln!(
                out,
                "round={} parent={} value={} status={}",
                n.round,
                n.parent,
                fmt_opt_value(n.value.as_ref()),
                n.status
            );
        }
        out
    }
}

/// Independent trees keyed by sequence number, created on first add.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Forest {
    mode: Mode,
    form: RoundForm,
    instances: BTreeMap<u64, QTree>,
}

impl Forest {
    pub fn new(mode: Mode, form: RoundForm) -> Forest {
        Forest {
            mode,
            form,
            instances: BTreeMap::new(),
        }
    }

    pub fn add(&mut self, sn: u64, round: Round, value: Value, parent: Round) -> Outcome {
        let (mode, form) = (self.mode, self.form);
        self.instances
            .entry(sn)
            .or_insert_with(|| QTree::new(mode, form))
            .add(round, value, parent)
    }

    pub fn commit(&mut self, sn: u64, round: Round) -> Outcome {
        match self.instances.get_mut(&sn) {
            Some(tree) => tree.commit(round),
            None => Outcome::Fail,
        }
    }

    pub fn instance(&self, sn: u64) -> Option<&QTree> {
        self.instances.get(&sn)
    }

    pub fn instances(&self) -> impl Iterator<Item = (u64, &QTree)> {
        self.instances.iter().map(|(sn, t)| (*sn, t))
    }
}
