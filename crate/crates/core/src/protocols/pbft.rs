//! PBFT as a composition of independent single-decree QTree instances, one
//! per sequence number.
//!
//! The leader of round `r` (process `r mod n`) gathers `2f+1` ROUND-CHANGE
//! messages, each reporting the sender's highest VOTE per sequence number
//! together with the JOIN quorum behind it, and proposes for every sequence
//! number it has not decided: the value of the highest reported vote, or a
//! client value. Processes broadcast JOIN for a correctly selected proposal of
//! their current round, VOTE once they hold `2f+1` matching JOINs, and decide
//! on `2f+1` matching VOTEs. Messages for rounds a process has not reached yet
//! are buffered until it gets there.
//!
//! A VOTE carries its JOIN quorum, so any observer can tell a justified vote
//! from a bare one. [`PbftObserver`] emits `sn.add(r, v, r')` at the first
//! justified VOTE(r, sn) sent (standalone or inside a ROUND-CHANGE) and
//! `sn.commit(r)` at the first decision by a non-Byzantine process.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use super::distinct_authors;
use crate::label::Label;
use crate::round::{Round, Value};
use crate::sim::{Ctx, Decision, Observer, Process, ProcessId, Signed, SimConfig, Strategy};

type Cert = Arc<[Signed<PbftMsg>]>;

/// A VOTE's content and the JOIN quorum that justifies it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoteRecord {
    pub round: u64,
    pub sn: u64,
    pub value: Value,
    /// Round of the vote the proposal was built on (0 for a fresh value).
    pub parent: u64,
    pub joins: Cert,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PbftMsg {
    RoundChange {
        round: u64,
        votes: Arc<[VoteRecord]>,
    },
    Propose {
        round: u64,
        sn: u64,
        value: Value,
        parent: u64,
        cert: Cert,
    },
    Join {
        round: u64,
        sn: u64,
        value: Value,
        parent: u64,
    },
    Vote(VoteRecord),
}

fn fmt_cert(cert: &[Signed<PbftMsg>]) -> String {
    let ids: BTreeSet<ProcessId> = cert.iter().map(Signed::author).collect();
    ids.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

impl fmt::Display for PbftMsg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PbftMsg::RoundChange { round, votes } => {
                let list: Vec<String> = votes
                    .iter()
                    .map(|v| format!("{}:{}:{}", v.sn, v.round, v.value))
                    .collect();
                write!(f, "m=RC r={round} votes={}", list.join(","))
            }
            PbftMsg::Propose {
                round,
                sn,
                value,
                parent,
                cert,
            } => {
                write!(
                    f,
                    "m=PROPOSE r={round} sn={sn} v={value} rp={parent} cert={}",
                    fmt_cert(cert)
                )
            }
            PbftMsg::Join {
                round,
                sn,
                value,
                parent,
            } => write!(f, "m=JOIN r={round} sn={sn} v={value} rp={parent}"),
            PbftMsg::Vote(v) => {
                write!(
                    f,
                    "m=VOTE r={} sn={} v={} rp={} cert={}",
                    v.round,
                    v.sn,
                    v.value,
                    v.parent,
                    fmt_cert(&v.joins)
                )
            }
        }
    }
}

/// Validation rules shared by processes and the observer.
#[derive(Debug, Clone)]
pub struct PbftRules {
    pub n: usize,
    pub quorum: usize,
    pub client_values: Arc<[Value]>,
}

impl PbftRules {
    pub fn leader(&self, round: u64) -> ProcessId {
        (round % self.n as u64) as ProcessId
    }

    /// A quorum of JOINs, all for exactly this content.
    pub fn joins_certify(
        &self,
        cert: &[Signed<PbftMsg>],
        round: u64,
        sn: u64,
        value: &Value,
        parent: u64,
    ) -> bool {
        let matching = cert.iter().all(|m| {
            matches!(m.body(), PbftMsg::Join { round: r, sn: s, value: v, parent: p }
                if *r == round && *s == sn && v == value && *p == parent)
        });
        matching && distinct_authors(cert) >= self.quorum
    }

    pub fn justified(&self, vote: &VoteRecord) -> bool {
        self.joins_certify(&vote.joins, vote.round, vote.sn, &vote.value, vote.parent)
    }

    pub fn valid_round_change(&self, msg: &Signed<PbftMsg>, round: u64) -> bool {
        match msg.body() {
            PbftMsg::RoundChange { round: r, votes } => {
                *r == round && votes.iter().all(|v| v.round < round && self.justified(v))
            }
            _ => false,
        }
    }

    /// Highest reported vote for `sn` in a ROUND-CHANGE certificate:
    /// `None` if the certificate is invalid, `Some(None)` if nobody voted.
    pub fn highest_vote(
        &self,
        round: u64,
        sn: u64,
        cert: &[Signed<PbftMsg>],
    ) -> Option<Option<(u64, Value)>> {
        if distinct_authors(cert) < self.quorum
            || !cert.iter().all(|m| self.valid_round_change(m, round))
        {
            return None;
        }
        let best = cert
            .iter()
            .filter_map(|m| match m.body() {
                PbftMsg::RoundChange { votes, .. } => Some(votes.iter()),
                _ => None,
            })
            .flatten()
            .filter(|v| v.sn == sn)
            .max_by_key(|v| v.round);
        Some(best.map(|v| (v.round, v.value.clone())))
    }

    /// Whether the proposer selected `(value, parent)` correctly.
    pub fn proposal_valid(
        &self,
        round: u64,
        sn: u64,
        value: &Value,
        parent: u64,
        cert: &[Signed<PbftMsg>],
    ) -> bool {
        let fresh = parent == 0 && self.client_values.contains(value);
        if round == 1 && cert.is_empty() {
            return fresh;
        }
        match self.highest_vote(round, sn, cert) {
            None => false,
            Some(None) => fresh,
            Some(Some((r, v))) => parent == r && *value == v,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PbftParams {
    pub rules: PbftRules,
    pub sns: Vec<u64>,
    pub max_round: u64,
    pub strategy: Option<Strategy>,
}

impl PbftParams {
    pub fn from_config(config: &SimConfig) -> PbftParams {
        PbftParams {
            rules: PbftRules {
                n: config.n,
                quorum: config.q1,
                client_values: config.client_values.clone().into(),
            },
            sns: config.instance_ids().collect(),
            max_round: config.max_round,
            strategy: None,
        }
    }

    fn client_value(&self, round: u64, sn: u64) -> Value {
        let values = &self.rules.client_values;
        let idx = (round.saturating_sub(1) + sn) % values.len() as u64;
        values[idx as usize].clone()
    }
}

#[derive(Debug, Clone)]
pub struct PbftProcess {
    pub id: ProcessId,
    pub params: PbftParams,
    pub cur_round: u64,
    /// Highest VOTE sent per sn.
    pub votes: BTreeMap<u64, VoteRecord>,
    /// First VOTE sent per sn; replayed by stale adversaries.
    pub oldest_votes: BTreeMap<u64, VoteRecord>,
    pub decided: BTreeMap<u64, Value>,
    proposals: BTreeMap<(u64, u64), Vec<Signed<PbftMsg>>>,
    accepted: BTreeMap<(u64, u64), (Value, u64)>,
    joins: BTreeMap<(u64, u64), Vec<Signed<PbftMsg>>>,
    vote_msgs: BTreeMap<(u64, u64), Vec<Signed<PbftMsg>>>,
    voted: BTreeSet<(u64, u64)>,
    round_changes: BTreeMap<u64, Vec<Signed<PbftMsg>>>,
    proposed: BTreeSet<u64>,
}

impl PbftProcess {
    pub fn new(id: ProcessId, params: PbftParams) -> PbftProcess {
        PbftProcess {
            id,
            params,
            cur_round: 1,
            votes: BTreeMap::new(),
            oldest_votes: BTreeMap::new(),
            decided: BTreeMap::new(),
            proposals: BTreeMap::new(),
            accepted: BTreeMap::new(),
            joins: BTreeMap::new(),
            vote_msgs: BTreeMap::new(),
            voted: BTreeSet::new(),
            round_changes: BTreeMap::new(),
            proposed: BTreeSet::new(),
        }
    }

    fn rules(&self) -> &PbftRules {
        &self.params.rules
    }

    fn acts_as(&self, s: Strategy) -> bool {
        self.params.strategy == Some(s)
    }

    fn propose(&mut self, ctx: &mut Ctx<'_, PbftMsg>, round: u64, cert: Cert) {
        if !self.proposed.insert(round) {
            return;
        }
        let sns: Vec<u64> = self
            .params
            .sns
            .iter()
            .copied()
            .filter(|sn| !self.decided.contains_key(sn))
            .collect();
        for sn in sns {
            let chosen = if self.acts_as(Strategy::ReplayStale) {
                cert.iter()
                    .filter_map(|m| match m.body() {
                        PbftMsg::RoundChange { votes, .. } => Some(votes.iter()),
                        _ => None,
                    })
                    .flatten()
                    .filter(|v| v.sn == sn)
                    .min_by_key(|v| v.round)
                    .map(|v| (v.round, v.value.clone()))
            } else if cert.is_empty() {
                None
            } else {
                match self.rules().highest_vote(round, sn, &cert) {
                    Some(best) => best,
                    None => return,
                }
            };
            let (parent, value) =
                chosen.unwrap_or_else(|| (0, self.params.client_value(round, sn)));
            let msg = |value: Value| PbftMsg::Propose {
                round,
                sn,
                value,
                parent,
                cert: cert.clone(),
            };
            if self.acts_as(Strategy::Equivocate) {
                let other = self.params.client_value(round, sn + 1);
                for to in 0..ctx.n() {
                    ctx.send(
                        to,
                        msg(if to % 2 == 0 {
                            value.clone()
                        } else {
                            other.clone()
                        }),
                    );
                }
            } else if self.acts_as(Strategy::Withhold) {
                let n = ctx.n();
                for to in (0..n).filter(|&p| p < n / 2 || p == self.id) {
                    ctx.send(to, msg(value.clone()));
                }
            } else {
                ctx.broadcast(msg(value));
            }
        }
    }

    fn enter_round(&mut self, ctx: &mut Ctx<'_, PbftMsg>, round: u64) {
        self.cur_round = round;
        for sn in self.params.sns.clone() {
            self.progress(ctx, round, sn);
        }
    }

    /// Takes every JOIN, VOTE and DECIDE step now enabled for `(round, sn)`.
    fn progress(&mut self, ctx: &mut Ctx<'_, PbftMsg>, round: u64, sn: u64) {
        if round != self.cur_round {
            return;
        }
        let key = (round, sn);
        if !self.accepted.contains_key(&key) {
            let leader = self.rules().leader(round);
            let valid = self
                .proposals
                .get(&key)
                .into_iter()
                .flatten()
                .find_map(|m| match m.body() {
                    PbftMsg::Propose {
                        value,
                        parent,
                        cert,
                        ..
                    } if m.author() == leader
                        && self.rules().proposal_valid(round, sn, value, *parent, cert) =>
                    {
                        Some((value.clone(), *parent))
                    }
                    _ => None,
                });
            if let Some((value, parent)) = valid {
                self.accepted.insert(key, (value.clone(), parent));
                if !self.acts_as(Strategy::Withhold) {
                    ctx.broadcast(PbftMsg::Join {
                        round,
                        sn,
                        value,
                        parent,
                    });
                }
            }
        }
        if let Some((value, parent)) = self.accepted.get(&key).cloned() {
            if !self.voted.contains(&key) {
                let quorum: Vec<Signed<PbftMsg>> = self
                    .joins
                    .get(&key)
                    .into_iter()
                    .flatten()
                    .filter(|m| matches!(m.body(), PbftMsg::Join { value: v, parent: p, .. } if *v == value && *p == parent))
                    .cloned()
                    .collect();
                if distinct_authors(&quorum) >= self.rules().quorum {
                    self.voted.insert(key);
                    let record = VoteRecord {
                        round,
                        sn,
                        value,
                        parent,
                        joins: quorum.into(),
                    };
                    self.oldest_votes
                        .entry(sn)
                        .or_insert_with(|| record.clone());
                    if self.votes.get(&sn).is_none_or(|v| v.round < round) {
                        self.votes.insert(sn, record.clone());
                    }
                    if !self.acts_as(Strategy::Withhold) {
                        ctx.broadcast(PbftMsg::Vote(record));
                    }
                }
            }
        }
        if self.decided.contains_key(&sn) {
            return;
        }
        let mut tally: BTreeMap<&Value, BTreeSet<ProcessId>> = BTreeMap::new();
        for m in self.vote_msgs.get(&key).into_iter().flatten() {
            if let PbftMsg::Vote(v) = m.body() {
                tally.entry(&v.value).or_default().insert(m.author());
            }
        }
        let quorum = self.rules().quorum;
        if let Some((value, _)) = tally.into_iter().find(|(_, who)| who.len() >= quorum) {
            let value = value.clone();
            self.decided.insert(sn, value.clone());
            ctx.decide(Decision {
                sn,
                round: Round::Nat(round),
                value,
            });
        }
    }

    fn on_round_change(&mut self, ctx: &mut Ctx<'_, PbftMsg>, msg: &Signed<PbftMsg>, round: u64) {
        if self.rules().leader(round) != self.id || !self.rules().valid_round_change(msg, round) {
            return;
        }
        let quorum = self.rules().quorum;
        let rcs = self.round_changes.entry(round).or_default();
        if rcs.iter().any(|m| m.author() == msg.author()) {
            return;
        }
        rcs.push(msg.clone());
        if rcs.len() >= quorum && self.cur_round <= round && !self.proposed.contains(&round) {
            let cert: Cert = rcs.clone().into();
            self.propose(ctx, round, cert);
            self.enter_round(ctx, round);
        }
    }

    fn on_propose(
        &mut self,
        ctx: &mut Ctx<'_, PbftMsg>,
        msg: &Signed<PbftMsg>,
        round: u64,
        sn: u64,
    ) {
        if let PbftMsg::Propose { value, parent, .. } = msg.body() {
            if self.acts_as(Strategy::Equivocate) {
                ctx.broadcast(PbftMsg::Join {
                    round,
                    sn,
                    value: value.clone(),
                    parent: *parent,
                });
            }
            if self.acts_as(Strategy::VoteWithoutJoin) {
                let bare = VoteRecord {
                    round,
                    sn,
                    value: value.clone(),
                    parent: *parent,
                    joins: Vec::new().into(),
                };
                ctx.broadcast(PbftMsg::Vote(bare));
            }
        }
        self.proposals
            .entry((round, sn))
            .or_default()
            .push(msg.clone());
        self.progress(ctx, round, sn);
    }

    fn store(
        pool: &mut BTreeMap<(u64, u64), Vec<Signed<PbftMsg>>>,
        key: (u64, u64),
        msg: &Signed<PbftMsg>,
    ) -> bool {
        let list = pool.entry(key).or_default();
        if list
            .iter()
            .any(|m| m.author() == msg.author() && m.body() == msg.body())
        {
            return false;
        }
        list.push(msg.clone());
        true
    }
}

impl Process<PbftMsg> for PbftProcess {
    fn on_timeout(&mut self, ctx: &mut Ctx<'_, PbftMsg>) {
        if self.cur_round == 1 && self.rules().leader(1) == self.id && !self.proposed.contains(&1) {
            self.propose(ctx, 1, Vec::new().into());
            return;
        }
        if self.cur_round >= self.params.max_round {
            return;
        }
        let next = self.cur_round + 1;
        let source = if self.acts_as(Strategy::ReplayStale) {
            &self.oldest_votes
        } else {
            &self.votes
        };
        let votes: Arc<[VoteRecord]> = source.values().cloned().collect();
        ctx.send(
            self.rules().leader(next),
            PbftMsg::RoundChange { round: next, votes },
        );
        self.enter_round(ctx, next);
    }

    fn on_message(&mut self, ctx: &mut Ctx<'_, PbftMsg>, msg: &Signed<PbftMsg>) {
        match msg.body() {
            PbftMsg::RoundChange { round, .. } => self.on_round_change(ctx, msg, *round),
            PbftMsg::Propose { round, sn, .. } => self.on_propose(ctx, msg, *round, *sn),
            PbftMsg::Join { round, sn, .. } => {
                if Self::store(&mut self.joins, (*round, *sn), msg) {
                    self.progress(ctx, *round, *sn);
                }
            }
            PbftMsg::Vote(v) => {
                if self.rules().justified(v)
                    && Self::store(&mut self.vote_msgs, (v.round, v.sn), msg)
                {
                    self.progress(ctx, v.round, v.sn);
                }
            }
        }
    }

    fn timer_armed(&self) -> bool {
        self.cur_round < self.params.max_round
            || (self.rules().leader(1) == self.id && !self.proposed.contains(&1))
    }
}

/// Emits `sn.add` at the first justified VOTE per `(sn, round)` and
/// `sn.commit` at the first decision by a non-Byzantine process.
#[derive(Debug, Clone)]
pub struct PbftObserver {
    pub rules: PbftRules,
    added: BTreeSet<(u64, u64)>,
    committed: BTreeSet<(u64, u64)>,
}

impl PbftObserver {
    pub fn new(rules: PbftRules) -> PbftObserver {
        PbftObserver {
            rules,
            added: BTreeSet::new(),
            committed: BTreeSet::new(),
        }
    }

    fn see_vote(&mut self, v: &VoteRecord, out: &mut Vec<Label>) {
        if self.added.contains(&(v.sn, v.round)) || !self.rules.justified(v) {
            return;
        }
        if let Ok(label) = Label::add(
            v.sn,
            Round::Nat(v.round),
            v.value.clone(),
            Round::Nat(v.parent),
        ) {
            self.added.insert((v.sn, v.round));
            out.push(label);
        }
    }
}

impl Observer<PbftMsg> for PbftObserver {
    fn on_send(&mut self, _from: ProcessId, _honest: bool, msg: &PbftMsg) -> Vec<Label> {
        let mut out = Vec::new();
        match msg {
            PbftMsg::Vote(v) => self.see_vote(v, &mut out),
            PbftMsg::RoundChange { votes, .. } => {
                for v in votes.iter() {
                    self.see_vote(v, &mut out);
                }
            }
            _ => {}
        }
        out
    }

    fn on_decide(&mut self, _proc: ProcessId, honest: bool, d: &Decision) -> Vec<Label> {
        let Round::Nat(round) = d.round else {
            return Vec::new();
        };
        if !honest || !self.committed.insert((d.sn, round)) {
            return Vec::new();
        }
        vec![Label::commit(d.sn, d.round)]
    }
}

pub fn processes(config: &SimConfig, params: &PbftParams) -> Vec<Box<dyn Process<PbftMsg>>> {
    let strategy = config.effective_strategy();
    (0..config.n)
        .map(|id| {
            let mut params = params.clone();
            if config.faults.byzantine.contains(&id) {
                params.strategy = strategy;
            }
            Box::new(PbftProcess::new(id, params)) as Box<dyn Process<PbftMsg>>
        })
        .collect()
}
