//! Single-decree Paxos and Multi-Paxos with flexible quorums.
//!
//! The leader of round `r` is process `r mod n`. A leader broadcasts
//! `START(r)`, gathers `q1` JOINs reporting each acceptor's last vote, and
//! proposes the value of the highest reported vote (or a fresh client value).
//! Acceptors vote unless they joined a higher round; `q2` votes decide.
//! In multi-decree mode a leader that decided `sn` proposes `sn+1` in the same
//! round, reusing its JOIN quorum.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use crate::label::Label;
use crate::round::{fmt_opt_value, Round, Value};
use crate::sim::{Ctx, Decision, Process, ProcessId, Signed, SimConfig};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SnVote {
    pub sn: u64,
    pub round: u64,
    pub value: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PaxosMsg {
    Start { round: u64 },
    Join { round: u64, votes: Vec<SnVote> },
    Propose { round: u64, sn: u64, value: Value },
    Vote { round: u64, sn: u64 },
}

/// Renders messages; the single-decree form omits sequence numbers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Wire {
    pub multi: bool,
    pub msg: PaxosMsg,
}

impl fmt::Display for Wire {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.msg, self.multi) {
            (PaxosMsg::Start { round }, _) => write!(f, "m=START r={round}"),
            (PaxosMsg::Join { round, votes }, false) => {
                let (vr, vv) = votes
                    .first()
                    .map_or((0, None), |v| (v.round, v.value.as_ref()));
                write!(f, "m=JOIN r={round} vr={vr} vv={}", fmt_opt_value(vv))
            }
            (PaxosMsg::Join { round, votes }, true) => {
                let list: Vec<String> = votes
                    .iter()
                    .map(|v| format!("{}:{}:{}", v.sn, v.round, fmt_opt_value(v.value.as_ref())))
                    .collect();
                write!(f, "m=JOIN r={round} votes={}", list.join(","))
            }
            (PaxosMsg::Propose { round, value, .. }, false) => {
                write!(f, "m=PROPOSE r={round} v={value}")
            }
            (PaxosMsg::Propose { round, sn, value }, true) => {
                write!(f, "m=PROPOSE r={round} v={value} sn={sn}")
            }
            (PaxosMsg::Vote { round, .. }, false) => write!(f, "m=VOTE r={round}"),
            (PaxosMsg::Vote { round, sn }, true) => write!(f, "m=VOTE r={round} sn={sn}"),
        }
    }
}

#[derive(Debug, Clone)]
struct Proposal {
    sn: u64,
    value: Value,
    voters: BTreeSet<ProcessId>,
}

#[derive(Debug, Clone)]
pub struct Leadership {
    pub round: u64,
    joins: BTreeMap<ProcessId, Vec<SnVote>>,
    /// Highest vote per sn across the JOIN quorum, fixed once `q1` is reached.
    selected: Option<BTreeMap<u64, (u64, Option<Value>)>>,
    proposal: Option<Proposal>,
}

#[derive(Debug, Clone)]
pub struct PaxosParams {
    pub n: usize,
    pub q1: usize,
    pub q2: usize,
    pub multi: bool,
    pub sns: Vec<u64>,
    pub max_round: u64,
    pub client_values: Arc<[Value]>,
}

impl PaxosParams {
    pub fn from_config(config: &SimConfig, multi: bool) -> PaxosParams {
        PaxosParams {
            n: config.n,
            q1: config.q1,
            q2: config.q2,
            multi,
            sns: if multi {
                config.instance_ids().collect()
            } else {
                vec![0]
            },
            max_round: config.max_round,
            client_values: config.client_values.clone().into(),
        }
    }

    fn client_value(&self, round: u64, sn: u64) -> Value {
        let idx = (round.saturating_sub(1) + sn) % self.client_values.len() as u64;
        self.client_values[idx as usize].clone()
    }
}

#[derive(Debug, Clone)]
pub struct PaxosProcess {
    pub id: ProcessId,
    pub params: PaxosParams,
    pub max_joined: u64,
    /// Last vote per sn: (maxVotedRound, maxVotedValue).
    pub votes: BTreeMap<u64, (u64, Value)>,
    pub decided: BTreeMap<u64, Value>,
    voted_in: BTreeSet<(u64, u64)>,
    pub started: u64,
    pub leading: Option<Leadership>,
}

impl PaxosProcess {
    pub fn new(id: ProcessId, params: PaxosParams) -> PaxosProcess {
        PaxosProcess {
            id,
            params,
            max_joined: 0,
            votes: BTreeMap::new(),
            decided: BTreeMap::new(),
            voted_in: BTreeSet::new(),
            started: 0,
            leading: None,
        }
    }

    pub fn leader_of(&self, round: u64) -> ProcessId {
        (round % self.params.n as u64) as ProcessId
    }

    /// The next round this process leads above everything it has seen.
    fn next_round(&self) -> u64 {
        let n = self.params.n as u64;
        let floor = self.started.max(self.max_joined);
        let base = floor - floor % n + self.id as u64;
        if base > floor {
            base
        } else {
            base + n
        }
    }

    fn wrap(&self, msg: PaxosMsg) -> Wire {
        Wire {
            multi: self.params.multi,
            msg,
        }
    }

    fn on_start(&mut self, ctx: &mut Ctx<'_, Wire>, from: ProcessId, round: u64) {
        if self.leader_of(round) != from || self.max_joined >= round {
            return;
        }
        self.max_joined = round;
        let votes = self
            .params
            .sns
            .iter()
            .map(|&sn| match self.votes.get(&sn) {
                Some((r, v)) => SnVote {
                    sn,
                    round: *r,
                    value: Some(v.clone()),
                },
                None => SnVote {
                    sn,
                    round: 0,
                    value: None,
                },
            })
            .collect();
        ctx.send(from, self.wrap(PaxosMsg::Join { round, votes }));
    }

    fn on_join(&mut self, ctx: &mut Ctx<'_, Wire>, from: ProcessId, round: u64, votes: &[SnVote]) {
        let q1 = self.params.q1;
        let Some(lead) = self.leading.as_mut().filter(|l| l.round == round) else {
            return;
        };
        if lead.selected.is_some() {
            return;
        }
        lead.joins.insert(from, votes.to_vec());
        if lead.joins.len() < q1 {
            return;
        }
        let mut selected: BTreeMap<u64, (u64, Option<Value>)> = BTreeMap::new();
        for vote in lead.joins.values().flatten() {
            let entry = selected.entry(vote.sn).or_insert((0, None));
            if vote.round > entry.0 {
                *entry = (vote.round, vote.value.clone());
            } else if vote.round == entry.0 && vote.round > 0 {
                debug_assert_eq!(entry.1, vote.value, "two values voted in one round");
            }
        }
        lead.selected = Some(selected);
        self.propose_next(ctx);
    }

    /// Proposes for the lowest sn this leader has not decided yet.
    fn propose_next(&mut self, ctx: &mut Ctx<'_, Wire>) {
        let Some(sn) = self
            .params
            .sns
            .iter()
            .copied()
            .find(|sn| !self.decided.contains_key(sn))
        else {
            return;
        };
        let Some(lead) = self.leading.as_mut() else {
            return;
        };
        let round = lead.round;
        let (vote_round, vote_value) = lead
            .selected
            .as_ref()
            .and_then(|s| s.get(&sn).cloned())
            .unwrap_or((0, None));
        let value = match vote_value {
            Some(v) if vote_round > 0 => v,
            _ => self.params.client_value(round, sn),
        };
        lead.proposal = Some(Proposal {
            sn,
            value: value.clone(),
            voters: BTreeSet::new(),
        });
        let label = Label::add(sn, Round::Nat(round), value.clone(), Round::Nat(vote_round))
            .expect("round > 0");
        ctx.linpoint(label);
        let msg = self.wrap(PaxosMsg::Propose { round, sn, value });
        ctx.broadcast(msg);
    }

    fn on_propose(
        &mut self,
        ctx: &mut Ctx<'_, Wire>,
        from: ProcessId,
        round: u64,
        sn: u64,
        value: &Value,
    ) {
        if self.leader_of(round) != from
            || self.max_joined > round
            || self.voted_in.contains(&(round, sn))
        {
            return;
        }
        self.voted_in.insert((round, sn));
        self.max_joined = round;
        self.votes.insert(sn, (round, value.clone()));
        ctx.send(from, self.wrap(PaxosMsg::Vote { round, sn }));
    }

    fn on_vote(&mut self, ctx: &mut Ctx<'_, Wire>, from: ProcessId, round: u64, sn: u64) {
        let q2 = self.params.q2;
        let Some(lead) = self.leading.as_mut().filter(|l| l.round == round) else {
            return;
        };
        let Some(prop) = lead.proposal.as_mut().filter(|p| p.sn == sn) else {
            return;
        };
        if !prop.voters.insert(from) || prop.voters.len() != q2 {
            return;
        }
        let value = prop.value.clone();
        self.decided.insert(sn, value.clone());
        ctx.linpoint(Label::commit(sn, Round::Nat(round)));
        ctx.decide(Decision {
            sn,
            round: Round::Nat(round),
            value,
        });
        if self.params.multi {
            self.propose_next(ctx);
        }
    }
}

impl Process<Wire> for PaxosProcess {
    fn on_timeout(&mut self, ctx: &mut Ctx<'_, Wire>) {
        let round = self.next_round();
        if round > self.params.max_round {
            return;
        }
        self.started = round;
        self.leading = Some(Leadership {
            round,
            joins: BTreeMap::new(),
            selected: None,
            proposal: None,
        });
        let msg = self.wrap(PaxosMsg::Start { round });
        ctx.broadcast(msg);
    }

    fn on_message(&mut self, ctx: &mut Ctx<'_, Wire>, msg: &Signed<Wire>) {
        let from = msg.author();
        match &msg.body().msg {
            PaxosMsg::Start { round } => self.on_start(ctx, from, *round),
            PaxosMsg::Join { round, votes } => self.on_join(ctx, from, *round, votes),
            PaxosMsg::Propose { round, sn, value } => {
                self.on_propose(ctx, from, *round, *sn, value)
            }
            PaxosMsg::Vote { round, sn } => self.on_vote(ctx, from, *round, *sn),
        }
    }

    fn timer_armed(&self) -> bool {
        self.next_round() <= self.params.max_round
    }
}

pub fn processes(config: &SimConfig, multi: bool) -> Vec<Box<dyn Process<Wire>>> {
    let params = PaxosParams::from_config(config, multi);
    (0..config.n)
        .map(|id| Box::new(PaxosProcess::new(id, params.clone())) as Box<dyn Process<Wire>>)
        .collect()
}
