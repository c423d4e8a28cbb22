//! Run traces and their line-per-event text form.
//!
//! ```text
//! # protocol=paxos n=3 f=1 seed=42 byzantine= clients=v1,v2,v3
//! step=3 kind=send proc=1 to=2 id=5 m=START r=1
//! step=4 kind=deliver proc=2 from=1 id=5 m=START r=1
//! step=9 kind=linpoint proc=1 sn=0 op=add r=1 v=v1 rp=0 res=OK
//! step=12 kind=decide proc=1 sn=0 r=3 v=v2
//! ```

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};
use std::sync::Arc;

use sha2::{Digest, Sha256};
use thiserror::Error;

use super::config::{parse_ids, Protocol};
use super::ProcessId;
use crate::label::{fields, Label};
use crate::round::{Round, Value};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decision {
    pub sn: u64,
    pub round: Round,
    pub value: Value,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventKind {
    Send {
        to: ProcessId,
        id: u64,
        msg: Arc<str>,
    },
    Drop {
        to: ProcessId,
        id: u64,
        msg: Arc<str>,
    },
    Deliver {
        from: ProcessId,
        id: u64,
        msg: Arc<str>,
    },
    Timeout,
    Decide(Decision),
    Linpoint(Label),
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::Send { .. } => "send",
            EventKind::Drop { .. } => "drop",
            EventKind::Deliver { .. } => "deliver",
            EventKind::Timeout => "timeout",
            EventKind::Decide(_) => "decide",
            EventKind::Linpoint(_) => "linpoint",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEvent {
    pub step: u64,
    pub proc: ProcessId,
    pub kind: EventKind,
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "step={} kind={} proc={}",
            self.step,
            self.kind.name(),
            self.proc
        )?;
        match &self.kind {
            EventKind::Send { to, id, msg } | EventKind::Drop { to, id, msg } => {
                write!(f, " to={to} id={id} {msg}")
            }
            EventKind::Deliver { from, id, msg } => write!(f, " from={from} id={id} {msg}"),
            EventKind::Timeout => Ok(()),
            EventKind::Decide(d) => write!(f, " sn={} r={} v={}", d.sn, d.round, d.value),
            EventKind::Linpoint(label) => write!(f, " {label}"),
        }
    }
}

/// Run facts the offline checks need.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceHeader {
    pub protocol: Protocol,
    pub n: usize,
    pub f: usize,
    pub seed: u64,
    pub byzantine: BTreeSet<ProcessId>,
    pub client_values: Vec<Value>,
}

impl fmt::Display for TraceHeader {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let byz: Vec<String> = self.byzantine.iter().map(ToString::to_string).collect();
        let clients: Vec<&str> = self.client_values.iter().map(Value::as_str).collect();
        write!(
            f,
            "# protocol={} n={} f={} seed={} byzantine={} clients={}",
            self.protocol,
            self.n,
            self.f,
            self.seed,
            byz.join(","),
            clients.join(",")
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub header: TraceHeader,
    pub events: Vec<TraceEvent>,
    /// Step at which nothing was left to deliver and no timer was armed, if
    /// the run ended that way. Rendered as a trailing `# quiescent step=<k>`.
    pub quiescent_at: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("trace line {line}: {reason}")]
pub struct TraceParseError {
    pub line: usize,
    pub reason: String,
}

impl Trace {
    pub fn render(&self) -> String {
        let mut out = String::with_capacity(64 * (self.events.len() + 1));
        let _ = writeln!(out, "{}", self.header);
        for e in &self.events {
            let _ = writeln!(out, "{e}");
        }
        if let Some(step) = self.quiescent_at {
            let _ = writeln!(out, "# quiescent step={step}");
        }
        out
    }

    /// SHA-256 of the rendered trace, hex encoded.
    pub fn digest(&self) -> String {
        let hash = Sha256::digest(self.render().as_bytes());
        hash.iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    pub fn linpoints(&self) -> impl Iterator<Item = &Label> {
        self.events.iter().filter_map(|e| match &e.kind {
            EventKind::Linpoint(l) => Some(l),
            _ => None,
        })
    }

    pub fn decisions(&self) -> impl Iterator<Item = (ProcessId, &Decision)> {
        self.events.iter().filter_map(|e| match &e.kind {
            EventKind::Decide(d) => Some((e.proc, d)),
            _ => None,
        })
    }

    pub fn parse(text: &str) -> Result<Trace, TraceParseError> {
        let mut header = None;
        let mut events = Vec::new();
        let mut quiescent_at = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let err = |reason: String| TraceParseError {
                line: i + 1,
                reason,
            };
            if line.is_empty() {
                continue;
            }
            if let Some(step) = line.strip_prefix("# quiescent step=") {
                quiescent_at = Some(
                    step.parse()
                        .map_err(|_| err("bad quiescence step".into()))?,
                );
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if header.is_none() && rest.trim_start().starts_with("protocol=") {
                    header = Some(parse_header(rest).map_err(err)?);
                }
                continue;
            }
            events.push(parse_event(line).map_err(err)?);
        }
        let header = header.ok_or(TraceParseError {
            line: 1,
            reason: "missing `# protocol=...` header".into(),
        })?;
        Ok(Trace {
            header,
            events,
            quiescent_at,
        })
    }
}

fn parse_header(rest: &str) -> Result<TraceHeader, String> {
    let map = fields(rest).map_err(|e| e.to_string())?;
    let get = |k: &str| {
        map.get(k)
            .copied()
            .ok_or_else(|| format!("header missing `{k}`"))
    };
    let num = |k: &str| -> Result<u64, String> {
        get(k)?.parse().map_err(|_| format!("bad header `{k}`"))
    };
    Ok(TraceHeader {
        protocol: get("protocol")?
            .parse()
            .map_err(|_| "bad protocol".to_string())?,
        n: num("n")? as usize,
        f: num("f")? as usize,
        seed: num("seed")?,
        byzantine: parse_ids(get("byzantine")?).map_err(|_| "bad byzantine list".to_string())?,
        client_values: get("clients")?
            .split(',')
            .filter(|s| !s.is_empty())
            .map(Value::new)
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?,
    })
}

fn parse_event(line: &str) -> Result<TraceEvent, String> {
    let (prefix, _) = line.split_once(" m=").unwrap_or((line, ""));
    let msg_start = line.find(" m=").map(|i| i + 1);
    let head = fields(prefix).map_err(|e| e.to_string())?;
    let get = |k: &str| head.get(k).copied().ok_or_else(|| format!("missing `{k}`"));
    let num =
        |k: &str| -> Result<u64, String> { get(k)?.parse().map_err(|_| format!("bad `{k}`")) };
    let step = num("step")?;
    let proc = num("proc")? as ProcessId;
    let msg = || -> Result<Arc<str>, String> {
        msg_start
            .map(|i| Arc::from(&line[i..]))
            .ok_or_else(|| "missing message summary".to_string())
    };
    let kind = match get("kind")? {
        "send" => EventKind::Send {
            to: num("to")? as ProcessId,
            id: num("id")?,
            msg: msg()?,
        },
        "drop" => EventKind::Drop {
            to: num("to")? as ProcessId,
            id: num("id")?,
            msg: msg()?,
        },
        "deliver" => EventKind::Deliver {
            from: num("from")? as ProcessId,
            id: num("id")?,
            msg: msg()?,
        },
        "timeout" => EventKind::Timeout,
        "decide" => EventKind::Decide(Decision {
            sn: num("sn")?,
            round: get("r")?.parse().map_err(|e| format!("{e}"))?,
            value: get("v")?.parse().map_err(|e| format!("{e}"))?,
        }),
        "linpoint" => EventKind::Linpoint(Label::from_fields(&head).map_err(|e| e.to_string())?),
        other => return Err(format!("unknown event kind `{other}`")),
    };
    Ok(TraceEvent { step, proc, kind })
}
