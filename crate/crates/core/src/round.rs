//! Round identifiers and value tokens.
//!
//! Rounds come in two forms. `Nat` rounds are plain integers with zero as the
//! root round. `Pair` rounds are `(term, index)` pairs ordered
//! lexicographically; the pair `(0, 0)` is reserved as the zero sentinel and
//! sits below every pair with a positive term.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Round {
    Nat(u64),
    Pair { term: u64, index: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RoundForm {
    Nat,
    Pair,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RoundParseError {
    #[error("empty round")]
    Empty,
    #[error("malformed round `{0}`")]
    Malformed(String),
    #[error("pair round `{0}` has term 0 but is not the zero sentinel")]
    ZeroTerm(String),
}

impl Round {
    pub const fn zero(form: RoundForm) -> Round {
        match form {
            RoundForm::Nat => Round::Nat(0),
            RoundForm::Pair => Round::Pair { term: 0, index: 0 },
        }
    }

    pub const fn pair(term: u64, index: u64) -> Round {
        Round::Pair { term, index }
    }

    pub fn form(self) -> RoundForm {
        match self {
            Round::Nat(_) => RoundForm::Nat,
            Round::Pair { .. } => RoundForm::Pair,
        }
    }

    pub fn is_zero(self) -> bool {
        self == Round::zero(self.form())
    }
}

impl From<u64> for Round {
    fn from(k: u64) -> Self {
        Round::Nat(k)
    }
}

impl fmt::Display for Round {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Round::Nat(k) => write!(f, "{k}"),
            Round::Pair { term, index } => write!(f, "{term}.{index}"),
        }
    }
}

impl FromStr for Round {
    type Err = RoundParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.is_empty() {
            return Err(RoundParseError::Empty);
        }
        let bad = || RoundParseError::Malformed(s.to_string());
        match s.split_once('.') {
            None => s.parse().map(Round::Nat).map_err(|_| bad()),
            Some((t, i)) => {
                let term: u64 = t.parse().map_err(|_| bad())?;
                let index: u64 = i.parse().map_err(|_| bad())?;
                if term == 0 && index != 0 {
                    return Err(RoundParseError::ZeroTerm(s.to_string()));
                }
                Ok(Round::Pair { term, index })
            }
        }
    }
}

/// Opaque value token. Only equality matters.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Value(String);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid value token `{0}`: must be non-empty without whitespace or `=`")]
pub struct ValueError(pub String);

impl Value {
    pub fn new(token: impl Into<String>) -> Result<Value, ValueError> {
        let token = token.into();
        if token.is_empty()
            || token == "-"
            || token.contains(|c: char| c.is_whitespace() || c == '=')
        {
            return Err(ValueError(token));
        }
        Ok(Value(token))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for Value {
    type Err = ValueError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Value::new(s)
    }
}

/// Renders an optional value, using `-` for the undefined value.
pub fn fmt_opt_value(v: Option<&Value>) -> &str {
    v.map_or("-", Value::as_str)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_zero_is_below_every_positive_term() {
        let zero = Round::zero(RoundForm::Pair);
        assert!(zero < Round::pair(1, 0));
        assert!(Round::pair(1, 9) < Round::pair(2, 0));
        assert!(Round::pair(2, 0) < Round::pair(2, 1));
        assert!(zero.is_zero());
    }

    #[test]
    fn round_text_roundtrip() {
        for r in [
            Round::Nat(0),
            Round::Nat(17),
            Round::pair(0, 0),
            Round::pair(3, 4),
        ] {
            assert_eq!(r.to_string().parse::<Round>().unwrap(), r);
        }
        assert!("0.3".parse::<Round>().is_err());
        assert!("x".parse::<Round>().is_err());
    }

    #[test]
    fn value_tokens_reject_separators() {
        assert!(Value::new("v1").is_ok());
        assert!(Value::new("a b").is_err());
        assert!(Value::new("a=b").is_err());
        assert!(Value::new("").is_err());
        assert!(Value::new("-").is_err());
    }
}
