//! Simulation configuration and its flat `key = value` file form.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use super::schedule::{parse_schedule, Selector};
use super::ProcessId;
use crate::round::{RoundForm, Value};
use crate::tree::Mode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Protocol {
    Paxos,
    MultiPaxos,
    Raft,
    Pbft,
    HotStuff,
}

impl Protocol {
    pub const ALL: [Protocol; 5] = [
        Protocol::Paxos,
        Protocol::MultiPaxos,
        Protocol::Raft,
        Protocol::Pbft,
        Protocol::HotStuff,
    ];

    pub fn is_byzantine_tolerant(self) -> bool {
        matches!(self, Protocol::Pbft | Protocol::HotStuff)
    }

    pub fn mode(self) -> Mode {
        match self {
            Protocol::Raft | Protocol::HotStuff => Mode::Smr,
            _ => Mode::SingleDecree,
        }
    }

    pub fn round_form(self) -> RoundForm {
        match self {
            Protocol::Raft => RoundForm::Pair,
            _ => RoundForm::Nat,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Protocol::Paxos => "paxos",
            Protocol::MultiPaxos => "multipaxos",
            Protocol::Raft => "raft",
            Protocol::Pbft => "pbft",
            Protocol::HotStuff => "hotstuff",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Protocol {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Protocol::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| ConfigError::BadValue {
                key: "protocol".into(),
                value: s.into(),
            })
    }
}

/// Scripted misbehaviour for Byzantine processes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    Equivocate,
    Withhold,
    ReplayStale,
    VoteWithoutJoin,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Equivocate,
        Strategy::Withhold,
        Strategy::ReplayStale,
        Strategy::VoteWithoutJoin,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Equivocate => "equivocate",
            Strategy::Withhold => "withhold",
            Strategy::ReplayStale => "replay-stale-certificate",
            Strategy::VoteWithoutJoin => "vote-without-join",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| ConfigError::BadValue {
                key: "strategy".into(),
                value: s.into(),
            })
    }
}

/// Messages sent between the two sides during `[from_step, to_step)` are lost.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub from_step: u64,
    pub to_step: u64,
    pub side: BTreeSet<ProcessId>,
}

impl Partition {
    pub fn separates(&self, step: u64, a: ProcessId, b: ProcessId) -> bool {
        (self.from_step..self.to_step).contains(&step)
            && self.side.contains(&a) != self.side.contains(&b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaultPlan {
    pub drop_prob: f64,
    pub delay: (u64, u64),
    pub duplicate_prob: f64,
    pub byzantine: BTreeSet<ProcessId>,
    pub crash_at: BTreeMap<ProcessId, u64>,
    pub partitions: Vec<Partition>,
}

impl Default for FaultPlan {
    fn default() -> Self {
        FaultPlan {
            drop_prob: 0.0,
            delay: (0, 0),
            duplicate_prob: 0.0,
            byzantine: BTreeSet::new(),
            crash_at: BTreeMap::new(),
            partitions: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub protocol: Protocol,
    pub n: usize,
    pub f: usize,
    pub q1: usize,
    pub q2: usize,
    pub max_steps: u64,
    pub seed: u64,
    pub faults: FaultPlan,
    pub strategy: Option<Strategy>,
    pub schedule: Option<Vec<Selector>>,
    pub client_values: Vec<Value>,
    /// Number of sequence numbers for multi-instance protocols.
    pub sns: u64,
    pub first_sn: u64,
    /// Chance that a step fires a timeout while messages are pending.
    pub timeout_prob: f64,
    /// Highest round (term, for Raft) any process will start.
    pub max_round: u64,
    /// Raft log length cap.
    pub max_entries: u64,
    /// Entries a Raft leader appends per LOGREQ.
    pub batch: u64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("bad value `{value}` for `{key}`")]
    BadValue { key: String, value: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("cannot read `{path}`: {reason}")]
    Io { path: String, reason: String },
}

impl SimConfig {
    /// Canonical parameters: `2f+1` processes with majority quorums for crash
    /// protocols, `3f+1` with `2f+1` quorums for the Byzantine ones.
    pub fn new(protocol: Protocol, f: usize) -> SimConfig {
        let (n, q) = if protocol.is_byzantine_tolerant() {
            (3 * f + 1, 2 * f + 1)
        } else {
            (2 * f + 1, f + 1)
        };
        SimConfig {
            protocol,
            n,
            f,
            q1: q,
            q2: q,
            max_steps: 2000,
            seed: 0,
            faults: FaultPlan::default(),
            strategy: None,
            schedule: None,
            client_values: ["v1", "v2", "v3"]
                .iter()
                .map(|s| Value::new(*s).expect("valid"))
                .collect(),
            sns: match protocol {
                Protocol::MultiPaxos => 3,
                Protocol::Pbft => 2,
                _ => 1,
            },
            first_sn: 0,
            timeout_prob: 0.03,
            max_round: 12,
            max_entries: 8,
            batch: 2,
        }
    }

    /// Sets `n` and recomputes default quorums for it.
    pub fn with_n(mut self, n: usize) -> SimConfig {
        self.n = n;
        let q = if self.protocol.is_byzantine_tolerant() {
            2 * self.f + 1
        } else {
            n / 2 + 1
        };
        self.q1 = q;
        self.q2 = q;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> SimConfig {
        self.seed = seed;
        self
    }

    pub fn mode(&self) -> Mode {
        self.protocol.mode()
    }

    /// Value a leader proposes when no earlier vote constrains it.
    pub fn client_value(&self, round: u64, sn: u64) -> Value {
        let idx = (round.saturating_sub(1) + sn) % self.client_values.len() as u64;
        self.client_values[idx as usize].clone()
    }

    /// The Byzantine strategy in force, sampled from the seed when unset.
    pub fn effective_strategy(&self) -> Option<Strategy> {
        if self.faults.byzantine.is_empty() {
            return None;
        }
        Some(
            self.strategy
                .unwrap_or(Strategy::ALL[(self.seed % Strategy::ALL.len() as u64) as usize]),
        )
    }

    pub fn instance_ids(&self) -> impl Iterator<Item = u64> {
        self.first_sn..self.first_sn + self.sns
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |msg: String| Err(ConfigError::Invalid(msg));
        if self.n == 0 {
            return invalid("n must be positive".into());
        }
        if self.client_values.is_empty() {
            return invalid("client_values must not be empty".into());
        }
        if self.batch == 0 {
            return invalid("batch must be positive".into());
        }
        if self.sns == 0 {
            return invalid("sns must be positive".into());
        }
        let byz_tolerant = self.protocol.is_byzantine_tolerant();
        let (default_n, default_q) = if byz_tolerant {
            (3 * self.f + 1, 2 * self.f + 1)
        } else {
            (2 * self.f + 1, self.f + 1)
        };
        if byz_tolerant && self.n < default_n {
            return invalid(format!("{} needs n >= 3f+1 = {default_n}", self.protocol));
        }
        if !byz_tolerant && self.n < default_n {
            return invalid(format!("{} needs n >= 2f+1 = {default_n}", self.protocol));
        }
        let majority = if byz_tolerant {
            default_q
        } else {
            self.n / 2 + 1
        };
        if self.protocol != Protocol::MultiPaxos && (self.q1 != majority || self.q2 != majority) {
            return invalid("q1/q2 overrides are only allowed for multipaxos".into());
        }
        if self.q1 == 0 || self.q2 == 0 || self.q1 > self.n || self.q2 > self.n {
            return invalid("quorum sizes must lie in 1..=n".into());
        }
        if !byz_tolerant && !self.faults.byzantine.is_empty() {
            return invalid(format!(
                "{} tolerates no Byzantine processes",
                self.protocol
            ));
        }
        if self.faults.byzantine.len() > self.f {
            return invalid("more Byzantine processes than f".into());
        }
        let ids = self
            .faults
            .byzantine
            .iter()
            .chain(self.faults.crash_at.keys());
        if let Some(bad) = ids.into_iter().find(|p| **p >= self.n) {
            return invalid(format!("process {bad} out of range"));
        }
        for p in [
            self.faults.drop_prob,
            self.faults.duplicate_prob,
            self.timeout_prob,
        ] {
            if !(0.0..=1.0).contains(&p) {
                return invalid("probabilities must lie in [0, 1]".into());
            }
        }
        if self.faults.delay.0 > self.faults.delay.1 {
            return invalid("delay range is empty".into());
        }
        Ok(())
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = || ConfigError::BadValue {
            key: key.into(),
            value: value.into(),
        };
        fn num<T: FromStr>(v: &str, bad: impl Fn() -> ConfigError) -> Result<T, ConfigError> {
            v.trim().parse().map_err(|_| bad())
        }
        match key {
            "protocol" => {
                let keep_f = self.f;
                *self = SimConfig {
                    seed: self.seed,
                    ..SimConfig::new(value.parse()?, keep_f)
                };
            }
            "n" => *self = self.clone().with_n(num(value, bad)?),
            "f" => {
                let f: usize = num(value, bad)?;
                let seed = self.seed;
                *self = SimConfig {
                    seed,
                    ..SimConfig::new(self.protocol, f)
                };
            }
            "q1" => self.q1 = num(value, bad)?,
            "q2" => self.q2 = num(value, bad)?,
            "steps" | "max_steps" => self.max_steps = num(value, bad)?,
            "seed" => self.seed = num(value, bad)?,
            "drop" | "drop_prob" => self.faults.drop_prob = num(value, bad)?,
            "duplicate" | "duplicate_prob" => self.faults.duplicate_prob = num(value, bad)?,
            "delay" => {
                let (lo, hi) = value.split_once("..").ok_or_else(bad)?;
                self.faults.delay = (num(lo, bad)?, num(hi, bad)?);
            }
            "byzantine" => self.faults.byzantine = parse_ids(value).map_err(|_| bad())?,
            "strategy" => self.strategy = Some(value.parse()?),
            "crash" | "crash_at" => {
                let mut map = BTreeMap::new();
                for item in value.split(',').filter(|s| !s.trim().is_empty()) {
                    let (p, s) = item.split_once('@').ok_or_else(bad)?;
                    map.insert(num(p, bad)?, num(s, bad)?);
                }
                self.faults.crash_at = map;
            }
            "partition" | "partitions" => {
                let mut parts = Vec::new();
                for item in value.split(';').filter(|s| !s.trim().is_empty()) {
                    let (range, ids) = item.split_once(':').ok_or_else(bad)?;
                    let (lo, hi) = range.split_once("..").ok_or_else(bad)?;
                    parts.push(Partition {
                        from_step: num(lo, bad)?,
                        to_step: num(hi, bad)?,
                        side: parse_ids(ids).map_err(|_| bad())?,
                    });
                }
                self.faults.partitions = parts;
            }
            "client_values" => {
                self.client_values = value
                    .split(',')
                    .map(|s| Value::new(s.trim()))
                    .collect::<Result<_, _>>()
                    .map_err(|_| bad())?;
            }
            "sns" => self.sns = num(value, bad)?,
            "first_sn" => self.first_sn = num(value, bad)?,
            "timeout_prob" => self.timeout_prob = num(value, bad)?,
            "max_round" => self.max_round = num(value, bad)?,
            "max_entries" => self.max_entries = num(value, bad)?,
            "batch" => self.batch = num(value, bad)?,
            "schedule" => {
                self.schedule =
                    Some(parse_schedule(value.replace(';', "\n").as_str()).map_err(|_| bad())?)
            }
            other => return Err(ConfigError::UnknownKey(other.into())),
        }
        Ok(())
    }

    /// Parses a flat config. `protocol` and `f` reset dependent defaults, so
    /// they are applied before every other key regardless of file order.
    pub fn parse(text: &str) -> Result<SimConfig, ConfigError> {
        let mut pairs = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or(ConfigError::Syntax { line: i + 1 })?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        let rank = |k: &str| match k {
            "protocol" => 0,
            "f" => 1,
            "n" => 2,
            _ => 3,
        };
        pairs.sort_by_key(|(k, _)| rank(k));
        let mut config = SimConfig::new(Protocol::Paxos, 1);
        for (k, v) in &pairs {
            config.set(k, v)?;
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<SimConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        SimConfig::parse(&text)
    }
}

pub fn parse_ids(s: &str) -> Result<BTreeSet<ProcessId>, std::num::ParseIntError> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(str::parse)
        .collect()
}
