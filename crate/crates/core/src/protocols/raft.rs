//! Raft with `(term, index)` rounds, refining a single smr-mode QTree.
//!
//! A process that times out starts a new term with `VOTEREQ`; a majority of
//! `VOTERESP` makes it leader. The leader's `LOGREQ` action first decides the
//! prefix acknowledged by a quorum of `LOGRESP`, then appends a batch of client
//! values, then broadcasts its whole log. Followers adopt a leader's log when
//! its term and length are at least their own.
//!
//! Linearization points, all inside `LOGREQ`:
//! - `add((t,i), v, (log[i-1].term, i-1))` when the term-`t` leader first
//!   appends index `i` (the zero round stands for the missing parent of index 0);
//! - `commit((t,i))` for each newly decided index whose entry has term `t`.
//!
//! The first `LOGREQ` of a term always appends at least one entry, so every
//! decided prefix ends in an entry of the deciding leader's term.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use crate::label::Label;
use crate::round::{Round, Value};
use crate::sim::{Ctx, Decision, Process, ProcessId, Signed, SimConfig};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub term: u64,
    pub value: Value,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RaftMsg {
    VoteReq {
        term: u64,
        len: usize,
        last_term: u64,
    },
    VoteResp {
        term: u64,
        len: usize,
    },
    LogReq {
        term: u64,
        log: Arc<[Entry]>,
        decided: usize,
    },
    LogResp {
        term: u64,
        len: usize,
    },
}

/// Renders a length as the index of the last entry, `-1` when empty.
fn last_index(len: usize) -> i64 {
    len as i64 - 1
}

impl fmt::Display for RaftMsg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RaftMsg::VoteReq {
                term,
                len,
                last_term,
            } => {
                write!(
                    f,
                    "m=VOTEREQ t={term} li={} lt={last_term}",
                    last_index(*len)
                )
            }
            RaftMsg::VoteResp { term, len } => {
                write!(f, "m=VOTERESP t={term} li={}", last_index(*len))
            }
            RaftMsg::LogReq { term, log, decided } => {
                let entries: Vec<String> = log
                    .iter()
                    .map(|e| format!("{}:{}", e.term, e.value))
                    .collect();
                write!(
                    f,
                    "m=LOGREQ t={term} li={} di={} log={}",
                    last_index(log.len()),
                    last_index(*decided),
                    entries.join(",")
                )
            }
            RaftMsg::LogResp { term, len } => {
                write!(f, "m=LOGRESP t={term} li={}", last_index(*len))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Leader {
    /// Whether this term's first LOGREQ went out.
    pub started: bool,
    /// Log length carried by the previous LOGREQ.
    pub last_sent: usize,
    /// Longest log length each process acknowledged this term.
    pub acked: BTreeMap<ProcessId, usize>,
}

#[derive(Debug, Clone)]
pub enum Role {
    Follower,
    Candidate { votes: BTreeSet<ProcessId> },
    Leader(Leader),
}

#[derive(Debug, Clone)]
pub struct RaftParams {
    pub quorum: usize,
    pub max_term: u64,
    pub max_entries: usize,
    pub batch: usize,
    pub client_values: Arc<[Value]>,
}

impl RaftParams {
    pub fn from_config(config: &SimConfig) -> RaftParams {
        RaftParams {
            quorum: config.q1,
            max_term: config.max_round,
            max_entries: config.max_entries as usize,
            batch: config.batch as usize,
            client_values: config.client_values.clone().into(),
        }
    }

    fn client_value(&self, term: u64, index: usize) -> Value {
        let idx = (term.saturating_sub(1) + index as u64) % self.client_values.len() as u64;
        self.client_values[idx as usize].clone()
    }
}

#[derive(Debug, Clone)]
pub struct RaftProcess {
    pub id: ProcessId,
    pub params: RaftParams,
    pub term: u64,
    pub log: Vec<Entry>,
    /// Length of the decided prefix.
    pub decided: usize,
    /// Highest term this process sent a VOTERESP for.
    pub voted_term: u64,
    pub role: Role,
}

impl RaftProcess {
    pub fn new(id: ProcessId, params: RaftParams) -> RaftProcess {
        RaftProcess {
            id,
            params,
            term: 0,
            log: Vec::new(),
            decided: 0,
            voted_term: 0,
            role: Role::Follower,
        }
    }

    fn last_term(&self) -> u64 {
        self.log.last().map_or(0, |e| e.term)
    }

    pub fn is_leader(&self) -> bool {
        matches!(self.role, Role::Leader(_))
    }

    fn round_of(&self, index: usize) -> Round {
        Round::pair(self.log[index].term, index as u64)
    }

    /// Records decisions for indices in `[self.decided, upto)`.
    fn decide_upto(&mut self, ctx: &mut Ctx<'_, RaftMsg>, upto: usize, emit_commits: bool) {
        for i in self.decided..upto.min(self.log.len()) {
            let round = self.round_of(i);
            if emit_commits && self.log[i].term == self.term {
                ctx.linpoint(Label::commit(0, round));
            }
            ctx.decide(Decision {
                sn: i as u64,
                round,
                value: self.log[i].value.clone(),
            });
        }
        self.decided = self.decided.max(upto.min(self.log.len()));
    }

    /// The LOGREQ action of the current term's leader.
    fn log_request(&mut self, ctx: &mut Ctx<'_, RaftMsg>) {
        let quorum = self.params.quorum;
        let Role::Leader(lead) = &self.role else {
            return;
        };
        let first = !lead.started;
        let last_sent = lead.last_sent;
        let acked = lead.acked.values().filter(|&&len| len >= last_sent).count() >= quorum;
        if first && self.log.len() >= self.params.max_entries {
            // Cannot append: a bare heartbeat could decide older-term entries
            // unsafely, so this term gets no leader activity at all.
            self.role = Role::Follower;
            return;
        }
        if !first && acked && last_sent > self.decided {
            self.decide_upto(ctx, last_sent, true);
        }
        if first || acked {
            let room = self.params.max_entries.saturating_sub(self.log.len());
            for _ in 0..self.params.batch.min(room) {
                let index = self.log.len();
                let parent = if index == 0 {
                    Round::pair(0, 0)
                } else {
                    self.round_of(index - 1)
                };
                let value = self.params.client_value(self.term, index);
                self.log.push(Entry {
                    term: self.term,
                    value: value.clone(),
                });
                let label = Label::add(0, Round::pair(self.term, index as u64), value, parent)
                    .expect("term > 0");
                ctx.linpoint(label);
            }
        }
        let Role::Leader(lead) = &mut self.role else {
            return;
        };
        lead.started = true;
        lead.last_sent = self.log.len();
        let msg = RaftMsg::LogReq {
            term: self.term,
            log: self.log.clone().into(),
            decided: self.decided,
        };
        ctx.broadcast(msg);
    }

    fn on_vote_req(
        &mut self,
        ctx: &mut Ctx<'_, RaftMsg>,
        from: ProcessId,
        term: u64,
        len: usize,
        last_term: u64,
    ) {
        // A higher term deposes a stale leader or candidate even when the
        // vote is refused; otherwise it would keep heartbeating forever.
        if term > self.term {
            self.term = term;
            self.role = Role::Follower;
        }
        let up_to_date = (self.last_term(), self.log.len()) <= (last_term, len);
        if term < self.term || self.voted_term >= term || !up_to_date {
            return;
        }
        self.voted_term = term;
        ctx.send(
            from,
            RaftMsg::VoteResp {
                term,
                len: self.log.len(),
            },
        );
    }

    fn on_vote_resp(&mut self, ctx: &mut Ctx<'_, RaftMsg>, from: ProcessId, term: u64) {
        if term != self.term {
            return;
        }
        let Role::Candidate { votes } = &mut self.role else {
            return;
        };
        votes.insert(from);
        if votes.len() >= self.params.quorum {
            self.role = Role::Leader(Leader {
                started: false,
                last_sent: 0,
                acked: BTreeMap::new(),
            });
            self.log_request(ctx);
        }
    }

    fn on_log_req(
        &mut self,
        ctx: &mut Ctx<'_, RaftMsg>,
        from: ProcessId,
        term: u64,
        log: &[Entry],
        decided: usize,
    ) {
        if term < self.term || log.len() < self.log.len() {
            return;
        }
        if from != self.id {
            if term > self.term || !self.is_leader() {
                self.role = Role::Follower;
            }
            self.term = term;
            self.log = log.to_vec();
        }
        if decided > self.decided {
            self.decide_upto(ctx, decided, false);
        }
        ctx.send(
            from,
            RaftMsg::LogResp {
                term,
                len: log.len(),
            },
        );
    }

    fn on_log_resp(&mut self, ctx: &mut Ctx<'_, RaftMsg>, from: ProcessId, term: u64, len: usize) {
        if term != self.term {
            return;
        }
        let decided = self.decided;
        let quorum = self.params.quorum;
        let Role::Leader(lead) = &mut self.role else {
            return;
        };
        let slot = lead.acked.entry(from).or_insert(0);
        *slot = (*slot).max(len);
        let acked = lead
            .acked
            .values()
            .filter(|&&l| l >= lead.last_sent)
            .count();
        // Run the next LOGREQ as soon as it would decide something new.
        if acked == quorum && lead.last_sent > decided {
            self.log_request(ctx);
        }
    }
}

impl Process<RaftMsg> for RaftProcess {
    fn on_timeout(&mut self, ctx: &mut Ctx<'_, RaftMsg>) {
        if self.is_leader() {
            self.log_request(ctx);
            return;
        }
        if self.term >= self.params.max_term {
            return;
        }
        self.term += 1;
        self.role = Role::Candidate {
            votes: BTreeSet::new(),
        };
        ctx.broadcast(RaftMsg::VoteReq {
            term: self.term,
            len: self.log.len(),
            last_term: self.last_term(),
        });
    }

    fn on_message(&mut self, ctx: &mut Ctx<'_, RaftMsg>, msg: &Signed<RaftMsg>) {
        let from = msg.author();
        match msg.body() {
            RaftMsg::VoteReq {
                term,
                len,
                last_term,
            } => self.on_vote_req(ctx, from, *term, *len, *last_term),
            RaftMsg::VoteResp { term, .. } => self.on_vote_resp(ctx, from, *term),
            RaftMsg::LogReq { term, log, decided } => {
                self.on_log_req(ctx, from, *term, log, *decided)
            }
            RaftMsg::LogResp { term, len } => self.on_log_resp(ctx, from, *term, *len),
        }
    }

    fn timer_armed(&self) -> bool {
        match &self.role {
            // Heartbeats only while something remains to decide.
            Role::Leader(lead) => !lead.started || lead.last_sent > self.decided,
            _ => self.term < self.params.max_term,
        }
    }
}

pub fn processes(config: &SimConfig) -> Vec<Box<dyn Process<RaftMsg>>> {
    let params = RaftParams::from_config(config);
    (0..config.n)
        .map(|id| Box::new(RaftProcess::new(id, params.clone())) as Box<dyn Process<RaftMsg>>)
        .collect()
}
