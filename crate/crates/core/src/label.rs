//! Invocation labels and their one-line text form.
//!
//! ```text
//! sn=<n> op=add r=<r> v=<token> rp=<rp> res=<OK|FAIL>
//! sn=<n> op=commit r=<r> res=<OK|FAIL>
//! ```

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::round::{Round, Value};
use crate::tree::Outcome;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Op {
    Add {
        round: Round,
        value: Value,
        parent: Round,
    },
    Commit {
        round: Round,
    },
}

impl Op {
    pub fn round(&self) -> Round {
        match self {
            Op::Add { round, .. } | Op::Commit { round } => *round,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Label {
    pub sn: u64,
    pub op: Op,
    pub result: Outcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LabelError {
    #[error("add label must use a round above zero")]
    ZeroRound,
    #[error("missing field `{0}`")]
    Missing(&'static str),
    #[error("malformed field `{0}`")]
    Malformed(String),
    #[error("unknown op `{0}`")]
    UnknownOp(String),
}

impl Label {
    pub fn add(sn: u64, round: Round, value: Value, parent: Round) -> Result<Label, LabelError> {
        if round.is_zero() {
            return Err(LabelError::ZeroRound);
        }
        Ok(Label {
            sn,
            op: Op::Add {
                round,
                value,
                parent,
            },
            result: Outcome::Ok,
        })
    }

    pub fn commit(sn: u64, round: Round) -> Label {
        Label {
            sn,
            op: Op::Commit { round },
            result: Outcome::Ok,
        }
    }

    pub fn with_result(mut self, result: Outcome) -> Label {
        self.result = result;
        self
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.op {
            Op::Add {
                round,
                value,
                parent,
            } => write!(
                f,
                "sn={} op=add r={round} v={value} rp={parent} res={}",
                self.sn, self.result
            ),
            Op::Commit { round } => {
                write!(f, "sn={} op=commit r={round} res={}", self.sn, self.result)
            }
        }
    }
}

/// Splits `k=v` tokens into a map. Later duplicates win.
pub fn fields(line: &str) -> Result<HashMap<&str, &str>, LabelError> {
    line.split_whitespace()
        .map(|tok| {
            tok.split_once('=')
                .ok_or_else(|| LabelError::Malformed(tok.to_string()))
        })
        .collect()
}

fn get<'a>(map: &HashMap<&str, &'a str>, key: &'static str) -> Result<&'a str, LabelError> {
    map.get(key).copied().ok_or(LabelError::Missing(key))
}

fn parse_field<T: FromStr>(map: &HashMap<&str, &str>, key: &'static str) -> Result<T, LabelError> {
    let raw = get(map, key)?;
    raw.parse()
        .map_err(|_| LabelError::Malformed(format!("{key}={raw}")))
}

impl Label {
    /// Parses the label fields out of a token map, ignoring unrelated keys.
    pub fn from_fields(map: &HashMap<&str, &str>) -> Result<Label, LabelError> {
        let sn = parse_field(map, "sn")?;
        let result = match get(map, "res")? {
            "OK" => Outcome::Ok,
            "FAIL" => Outcome::Fail,
            other => return Err(LabelError::Malformed(format!("res={other}"))),
        };
        let round: Round = parse_field(map, "r")?;
        match get(map, "op")? {
            "add" => {
                let value: Value = parse_field(map, "v")?;
                let parent: Round = parse_field(map, "rp")?;
                Ok(Label::add(sn, round, value, parent)?.with_result(result))
            }
            "commit" => Ok(Label::commit(sn, round).with_result(result)),
            other => Err(LabelError::UnknownOp(other.to_string())),
        }
    }
}

impl FromStr for Label {
    type Err = LabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Label::from_fields(&fields(s)?)
    }
}
