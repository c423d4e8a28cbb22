//! Scripted schedules: an explicit list of scheduler choices.
//!
//! ```text
//! timeout 1
//! deliver 1->2 m=START r=1
//! deliver *->0 m=JOIN
//! drop 2->1 m=VOTE
//! ```
//!
//! A `deliver` or `drop` entry acts on the oldest pending message whose
//! endpoints match and whose summary contains every listed `key=value` token.

use std::fmt;

use thiserror::Error;

use super::ProcessId;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MessageFilter {
    pub from: Option<ProcessId>,
    pub to: Option<ProcessId>,
    pub tokens: Vec<String>,
}

impl MessageFilter {
    pub fn matches(&self, from: ProcessId, to: ProcessId, summary: &str) -> bool {
        self.from.is_none_or(|f| f == from)
            && self.to.is_none_or(|t| t == to)
            && self
                .tokens
                .iter()
                .all(|tok| summary.split_whitespace().any(|s| s == tok))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Selector {
    Timeout(ProcessId),
    Deliver(MessageFilter),
    Drop(MessageFilter),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("schedule line {line}: {reason}")]
pub struct ScheduleError {
    pub line: usize,
    pub reason: String,
}

fn endpoint(s: &str) -> Result<Option<ProcessId>, String> {
    if s == "*" {
        Ok(None)
    } else {
        s.parse()
            .map(Some)
            .map_err(|_| format!("bad process id `{s}`"))
    }
}

fn parse_filter(words: &[&str]) -> Result<MessageFilter, String> {
    let (head, rest) = words.split_first().ok_or("missing `from->to`")?;
    let (from, to) = head
        .split_once("->")
        .ok_or_else(|| format!("expected `from->to`, got `{head}`"))?;
    if let Some(bad) = rest.iter().find(|t| !t.contains('=')) {
        return Err(format!("filter token `{bad}` is not key=value"));
    }
    Ok(MessageFilter {
        from: endpoint(from)?,
        to: endpoint(to)?,
        tokens: rest.iter().map(|s| s.to_string()).collect(),
    })
}

pub fn parse_schedule(text: &str) -> Result<Vec<Selector>, ScheduleError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let words: Vec<&str> = line.split_whitespace().collect();
        let err = |reason: String| ScheduleError {
            line: i + 1,
            reason,
        };
        let sel = match words[0] {
            "timeout" => match words.get(1).map(|w| w.parse()) {
                Some(Ok(p)) if words.len() == 2 => Selector::Timeout(p),
                _ => return Err(err("expected `timeout <pid>`".into())),
            },
            "deliver" => Selector::Deliver(parse_filter(&words[1..]).map_err(err)?),
            "drop" => Selector::Drop(parse_filter(&words[1..]).map_err(err)?),
            other => return Err(err(format!("unknown selector `{other}`"))),
        };
        out.push(sel);
    }
    Ok(out)
}

impl fmt::Display for MessageFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let end = |p: Option<ProcessId>| p.map_or("*".to_string(), |p| p.to_string());
        write!(f, "{}->{}", end(self.from), end(self.to))?;
        for t in &self.tokens {
            write!(f, " {t}")?;
        }
        Ok(())
    }
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Selector::Timeout(p) => write!(f, "timeout {p}"),
            Selector::Deliver(m) => write!(f, "deliver {m}"),
            Selector::Drop(m) => write!(f, "drop {m}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_match() {
        let s = parse_schedule("timeout 1\n# note\ndeliver *->2 m=JOIN r=2\ndrop 0->1\n").unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s[0], Selector::Timeout(1));
        let Selector::Deliver(filter) = &s[1] else {
            panic!()
        };
        assert!(filter.matches(0, 2, "m=JOIN r=2 vr=0 vv=-"));
        assert!(!filter.matches(0, 2, "m=JOIN r=20"));
        assert!(!filter.matches(0, 1, "m=JOIN r=2"));
        assert_eq!(s[1].to_string(), "deliver *->2 m=JOIN r=2");
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = parse_schedule("timeout 1\nwarp 3\n").unwrap_err();
        assert_eq!(e.line, 2);
        assert!(parse_schedule("deliver 1to2").is_err());
    }
}
