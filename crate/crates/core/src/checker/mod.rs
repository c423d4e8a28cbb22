//! Two independent ways to decide whether a label sequence is a correct QTree
//! execution: replaying it on the tree, and checking the declarative
//! ordering properties over successful labels. Also hosts the direct status
//! recomputation and the exhaustive small-sequence enumerator.

mod declarative;
mod enumerate;
mod replay;
mod statuses;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub use declarative::check_declarative;
pub use enumerate::{count_sequences, label_universe, EnumBounds, Sequences};
pub use replay::{replay, replay_forest};
pub use statuses::statuses_from_labels;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rule {
    DupAdd,
    DupCommit,
    MissingAdd,
    MissingParent,
    ValueMismatch,
    Conflict,
    ReplayMismatch,
}

impl Rule {
    pub const ALL: [Rule; 7] = [
        Rule::DupAdd,
        Rule::DupCommit,
        Rule::MissingAdd,
        Rule::MissingParent,
        Rule::ValueMismatch,
        Rule::Conflict,
        Rule::ReplayMismatch,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Rule::DupAdd => "P1-dup-add",
            Rule::DupCommit => "P1-dup-commit",
            Rule::MissingAdd => "P0-missing-add",
            Rule::MissingParent => "P2-missing-parent",
            Rule::ValueMismatch => "P2a-value-mismatch",
            Rule::Conflict => "P3-conflict",
            Rule::ReplayMismatch => "replay-mismatch",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Rule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Rule::ALL
            .into_iter()
            .find(|r| r.id() == s)
            .ok_or_else(|| format!("unknown rule `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Accept,
    Reject { rule: Rule, index: usize },
}

impl Verdict {
    pub fn is_accept(self) -> bool {
        self == Verdict::Accept
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Accept => f.write_str("accept"),
            Verdict::Reject { rule, index } => write!(f, "reject:{rule}:{index}"),
        }
    }
}

impl FromStr for Verdict {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "accept" {
            return Ok(Verdict::Accept);
        }
        let mut parts = s.splitn(3, ':');
        match (parts.next(), parts.next(), parts.next()) {
            (Some("reject"), Some(rule), Some(index)) => Ok(Verdict::Reject {
                rule: rule.parse()?,
                index: index.parse().map_err(|_| format!("bad index in `{s}`"))?,
            }),
            _ => Err(format!("malformed verdict `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CheckError {
    #[error("label {0} is not successful; the declarative check takes OK labels only")]
    NotSuccessful(usize),
    #[error("label {index} belongs to instance {found}, expected {expected}")]
    MixedInstances {
        index: usize,
        expected: u64,
        found: u64,
    },
    #[error("label {0} mixes round forms")]
    MixedRoundForms(usize),
    #[error("sequence is not correct: {0}")]
    Incorrect(Verdict),
}
