//! Four-phase HotStuff over a command tree, refining a single smr-mode QTree.
//!
//! Rounds are one-shot: the leader of round `r` (process `r mod n`) gathers
//! `2f+1` ROUND-CHANGE messages, proposes one node extending the highest
//! certified `preNode` among them, then drives PRECOMMIT, COMMIT and DECIDE,
//! each certified by `2f+1` votes of the previous phase. Processes start in
//! round 1, whose leader proposes on its first timeout without ROUND-CHANGE.
//!
//! A ROUND-CHANGE carries the sender's `preNode` as the authentic PRECOMMIT
//! message that set it, so a certified parent is always one whose PRECOMMIT
//! was actually sent.
//!
//! Linearization points are detected by [`HsObserver`]: `add(r, v, r')` at
//! the first valid PRECOMMIT(r) sent anywhere, `commit(r)` at the first valid
//! DECIDE(r).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use super::distinct_authors;
use crate::label::Label;
use crate::round::{Round, Value};
use crate::sim::{Ctx, Decision, Observer, Process, ProcessId, Signed, SimConfig, Strategy};

/// A command-tree node with its whole branch back to the genesis root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HsNode {
    pub round: u64,
    pub value: Value,
    pub parent: Option<Arc<HsNode>>,
}

impl HsNode {
    pub fn parent_round(&self) -> u64 {
        self.parent.as_ref().map_or(0, |p| p.round)
    }

    pub fn depth(&self) -> usize {
        1 + self.parent.as_ref().map_or(0, |p| p.depth())
    }

    /// Whether `other` is this node or one of its ancestors.
    pub fn extends(&self, other: &HsNode) -> bool {
        let mut cur = Some(self);
        while let Some(n) = cur {
            if n == other {
                return true;
            }
            cur = n.parent.as_deref();
        }
        false
    }

    /// Branch nodes from depth 1 down to this node.
    pub fn branch(&self) -> Vec<&HsNode> {
        let mut out = Vec::new();
        let mut cur = Some(self);
        while let Some(n) = cur {
            out.push(n);
            cur = n.parent.as_deref();
        }
        out.reverse();
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Phase {
    Join,
    PrecommitVote,
    CommitVote,
}

type Cert = Arc<[Signed<HsMsg>]>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HsMsg {
    RoundChange {
        round: u64,
        pre: Option<Arc<Signed<HsMsg>>>,
    },
    Propose {
        round: u64,
        node: Arc<HsNode>,
        cert: Cert,
    },
    Vote {
        phase: Phase,
        round: u64,
        node: Arc<HsNode>,
    },
    Precommit {
        round: u64,
        node: Arc<HsNode>,
        cert: Cert,
    },
    Commit {
        round: u64,
        node: Arc<HsNode>,
        cert: Cert,
    },
    Decide {
        round: u64,
        node: Arc<HsNode>,
        cert: Cert,
    },
}

fn fmt_cert(cert: &[Signed<HsMsg>]) -> String {
    let ids: BTreeSet<ProcessId> = cert.iter().map(Signed::author).collect();
    ids.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

impl fmt::Display for HsMsg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let node = |n: &HsNode| format!("v={} rp={}", n.value, n.parent_round());
        match self {
            HsMsg::RoundChange { round, pre } => {
                let pre_round = pre
                    .as_ref()
                    .and_then(|m| m.body().node())
                    .map_or(0, |n| n.round);
                write!(f, "m=RC r={round} pre={pre_round}")
            }
            HsMsg::Propose {
                round,
                node: n,
                cert,
            } => write!(f, "m=PROPOSE r={round} {} cert={}", node(n), fmt_cert(cert)),
            HsMsg::Vote {
                phase,
                round,
                node: n,
            } => {
                let name = match phase {
                    Phase::Join => "JOIN",
                    Phase::PrecommitVote => "PRECOMMIT_VOTE",
                    Phase::CommitVote => "COMMIT_VOTE",
                };
                write!(f, "m={name} r={round} {}", node(n))
            }
            HsMsg::Precommit {
                round,
                node: n,
                cert,
            } => {
                write!(
                    f,
                    "m=PRECOMMIT r={round} {} cert={}",
                    node(n),
                    fmt_cert(cert)
                )
            }
            HsMsg::Commit {
                round,
                node: n,
                cert,
            } => write!(f, "m=COMMIT r={round} {} cert={}", node(n), fmt_cert(cert)),
            HsMsg::Decide {
                round,
                node: n,
                cert,
            } => write!(f, "m=DECIDE r={round} {} cert={}", node(n), fmt_cert(cert)),
        }
    }
}

impl HsMsg {
    pub fn node(&self) -> Option<&Arc<HsNode>> {
        match self {
            HsMsg::RoundChange { .. } => None,
            HsMsg::Propose { node, .. }
            | HsMsg::Vote { node, .. }
            | HsMsg::Precommit { node, .. }
            | HsMsg::Commit { node, .. }
            | HsMsg::Decide { node, .. } => Some(node),
        }
    }
}

/// Certificate and membership rules shared by processes and the observer.
#[derive(Debug, Clone)]
pub struct HsRules {
    pub n: usize,
    pub quorum: usize,
}

impl HsRules {
    pub fn leader(&self, round: u64) -> ProcessId {
        (round % self.n as u64) as ProcessId
    }

    /// A certificate of `phase` votes, all for `(round, node)`, from a quorum.
    pub fn votes_certify(
        &self,
        cert: &[Signed<HsMsg>],
        phase: Phase,
        round: u64,
        node: &HsNode,
    ) -> bool {
        let matching = cert.iter().all(|m| {
            matches!(m.body(), HsMsg::Vote { phase: p, round: r, node: n } if *p == phase && *r == round && **n == *node)
        });
        matching && distinct_authors(cert) >= self.quorum
    }

    /// A PRECOMMIT sent by its round's leader with a valid JOIN certificate.
    pub fn authentic_precommit(&self, msg: &Signed<HsMsg>) -> bool {
        match msg.body() {
            HsMsg::Precommit { round, node, cert } => {
                msg.author() == self.leader(*round)
                    && node.round == *round
                    && self.votes_certify(cert, Phase::Join, *round, node)
            }
            _ => false,
        }
    }

    /// A ROUND-CHANGE for `round` whose embedded preNode (if any) is authentic
    /// and older than `round`.
    pub fn valid_round_change(&self, msg: &Signed<HsMsg>, round: u64) -> bool {
        match msg.body() {
            HsMsg::RoundChange { round: r, pre } if *r == round => pre.as_ref().is_none_or(|p| {
                self.authentic_precommit(p) && p.body().node().is_some_and(|n| n.round < round)
            }),
            _ => false,
        }
    }

    /// The certified preNodes a round-change certificate carries.
    fn certified_pres<'a>(
        &self,
        cert: &'a [Signed<HsMsg>],
    ) -> impl Iterator<Item = &'a Arc<HsNode>> {
        cert.iter().filter_map(|m| match m.body() {
            HsMsg::RoundChange { pre: Some(p), .. } => p.body().node(),
            _ => None,
        })
    }

    /// The parent a proposal for `round` must extend given its certificate,
    /// or `None` when the certificate is invalid. Round 1 needs no certificate.
    pub fn required_parent(
        &self,
        round: u64,
        cert: &[Signed<HsMsg>],
    ) -> Option<Option<Arc<HsNode>>> {
        if round == 1 && cert.is_empty() {
            return Some(None);
        }
        if distinct_authors(cert) < self.quorum
            || !cert.iter().all(|m| self.valid_round_change(m, round))
        {
            return None;
        }
        Some(self.certified_pres(cert).max_by_key(|n| n.round).cloned())
    }
}

#[derive(Debug, Clone)]
pub struct HsParams {
    pub rules: HsRules,
    pub max_round: u64,
    pub client_values: Arc<[Value]>,
    pub strategy: Option<Strategy>,
}

impl HsParams {
    pub fn from_config(config: &SimConfig) -> HsParams {
        HsParams {
            rules: HsRules {
                n: config.n,
                quorum: config.q1,
            },
            max_round: config.max_round,
            client_values: config.client_values.clone().into(),
            strategy: None,
        }
    }

    fn client_value(&self, round: u64, depth: usize) -> Value {
        let idx = (round.saturating_sub(1) + depth as u64) % self.client_values.len() as u64;
        self.client_values[idx as usize].clone()
    }
}

#[derive(Debug, Clone)]
pub struct HotStuffProcess {
    pub id: ProcessId,
    pub params: HsParams,
    pub cur_round: u64,
    /// The PRECOMMIT message that last set preNode.
    pub pre: Option<Arc<Signed<HsMsg>>>,
    /// The first PRECOMMIT this process accepted; replayed by stale adversaries.
    pub oldest_pre: Option<Arc<Signed<HsMsg>>>,
    pub voted: Option<Arc<HsNode>>,
    /// Decided `(round, value)` per depth.
    pub decided: BTreeMap<usize, (u64, Value)>,
    sent: BTreeSet<(u64, Phase)>,
    round_changes: BTreeMap<u64, Vec<Signed<HsMsg>>>,
    votes: BTreeMap<(u64, Phase), Vec<Signed<HsMsg>>>,
    led: BTreeSet<(u64, u8)>,
    proposed: BTreeSet<u64>,
}

impl HotStuffProcess {
    pub fn new(id: ProcessId, params: HsParams) -> HotStuffProcess {
        HotStuffProcess {
            id,
            params,
            cur_round: 1,
            pre: None,
            oldest_pre: None,
            voted: None,
            decided: BTreeMap::new(),
            sent: BTreeSet::new(),
            round_changes: BTreeMap::new(),
            votes: BTreeMap::new(),
            led: BTreeSet::new(),
            proposed: BTreeSet::new(),
        }
    }

    fn rules(&self) -> &HsRules {
        &self.params.rules
    }

    fn acts_as(&self, s: Strategy) -> bool {
        self.params.strategy == Some(s)
    }

    /// Sends a leader phase message; withholding leaders reach only the
    /// lower half of the processes.
    fn leader_send(&self, ctx: &mut Ctx<'_, HsMsg>, msg: HsMsg) {
        if self.acts_as(Strategy::Withhold) {
            let n = ctx.n();
            for to in (0..n).filter(|&p| p < n / 2 || p == self.id) {
                ctx.send(to, msg.clone());
            }
        } else {
            ctx.broadcast(msg);
        }
    }

    fn vote(&mut self, ctx: &mut Ctx<'_, HsMsg>, phase: Phase, round: u64, node: &Arc<HsNode>) {
        if self.acts_as(Strategy::Withhold) {
            return;
        }
        self.sent.insert((round, phase));
        ctx.send(
            self.rules().leader(round),
            HsMsg::Vote {
                phase,
                round,
                node: node.clone(),
            },
        );
    }

    fn propose(&mut self, ctx: &mut Ctx<'_, HsMsg>, round: u64, cert: Cert) {
        if !self.proposed.insert(round) {
            return;
        }
        let parent = if self.acts_as(Strategy::ReplayStale) {
            self.rules()
                .certified_pres(&cert)
                .min_by_key(|n| n.round)
                .cloned()
        } else {
            match self.rules().required_parent(round, &cert) {
                Some(p) => p,
                None => return,
            }
        };
        let depth = parent.as_ref().map_or(0, |p| p.depth()) + 1;
        let value = self.params.client_value(round, depth);
        let node = Arc::new(HsNode {
            round,
            value,
            parent: parent.clone(),
        });
        if self.acts_as(Strategy::Equivocate) {
            let other = Arc::new(HsNode {
                round,
                value: self.params.client_value(round, depth + 1),
                parent,
            });
            for to in 0..ctx.n() {
                let node = if to % 2 == 0 {
                    node.clone()
                } else {
                    other.clone()
                };
                ctx.send(
                    to,
                    HsMsg::Propose {
                        round,
                        node,
                        cert: cert.clone(),
                    },
                );
            }
        } else {
            ctx.broadcast(HsMsg::Propose { round, node, cert });
        }
    }

    fn on_round_change(&mut self, ctx: &mut Ctx<'_, HsMsg>, msg: &Signed<HsMsg>, round: u64) {
        if self.rules().leader(round) != self.id || !self.rules().valid_round_change(msg, round) {
            return;
        }
        let quorum = self.rules().quorum;
        let rcs = self.round_changes.entry(round).or_default();
        if rcs.iter().any(|m| m.author() == msg.author()) {
            return;
        }
        rcs.push(msg.clone());
        if rcs.len() >= quorum && self.cur_round <= round {
            let cert: Cert = rcs.clone().into();
            self.cur_round = round;
            self.propose(ctx, round, cert);
        }
    }

    fn on_propose(
        &mut self,
        ctx: &mut Ctx<'_, HsMsg>,
        from: ProcessId,
        round: u64,
        node: &Arc<HsNode>,
        cert: &Cert,
    ) {
        if self.acts_as(Strategy::VoteWithoutJoin) {
            for phase in [Phase::Join, Phase::PrecommitVote, Phase::CommitVote] {
                self.vote(ctx, phase, round, node);
            }
            return;
        }
        let lax = self.acts_as(Strategy::Equivocate);
        if !lax && (round != self.cur_round || self.sent.contains(&(round, Phase::Join))) {
            return;
        }
        if from != self.rules().leader(round) || node.round != round {
            return;
        }
        let Some(parent) = self.rules().required_parent(round, cert) else {
            return;
        };
        if node.parent != parent {
            return;
        }
        let safe = self
            .voted
            .as_ref()
            .is_none_or(|v| node.extends(v) || v.round < node.parent_round());
        if safe || lax {
            self.vote(ctx, Phase::Join, round, node);
        }
    }

    /// Leader side: collects votes and fires the next phase on a quorum.
    fn on_vote(
        &mut self,
        ctx: &mut Ctx<'_, HsMsg>,
        msg: &Signed<HsMsg>,
        phase: Phase,
        round: u64,
        node: &Arc<HsNode>,
    ) {
        if self.rules().leader(round) != self.id || round != self.cur_round {
            return;
        }
        let quorum = self.rules().quorum;
        let pool = self.votes.entry((round, phase)).or_default();
        if pool
            .iter()
            .any(|m| m.author() == msg.author() && m.body().node() == Some(node))
        {
            return;
        }
        pool.push(msg.clone());
        let matching: Vec<Signed<HsMsg>> = pool
            .iter()
            .filter(|m| m.body().node() == Some(node))
            .cloned()
            .collect();
        if distinct_authors(&matching) < quorum || !self.led.insert((round, phase as u8)) {
            return;
        }
        let cert: Cert = matching.into();
        let node = node.clone();
        let next = match phase {
            Phase::Join => HsMsg::Precommit { round, node, cert },
            Phase::PrecommitVote => HsMsg::Commit { round, node, cert },
            Phase::CommitVote => HsMsg::Decide { round, node, cert },
        };
        self.leader_send(ctx, next);
    }

    fn accepts_phase(&self, from: ProcessId, round: u64, phase: Phase) -> bool {
        if self.acts_as(Strategy::Equivocate) {
            return true;
        }
        from == self.rules().leader(round)
            && round == self.cur_round
            && !self.sent.contains(&(round, phase))
    }

    fn on_precommit(
        &mut self,
        ctx: &mut Ctx<'_, HsMsg>,
        msg: &Signed<HsMsg>,
        round: u64,
        node: &Arc<HsNode>,
    ) {
        if !self.accepts_phase(msg.author(), round, Phase::PrecommitVote)
            || !self.rules().authentic_precommit(msg)
        {
            return;
        }
        let msg = Arc::new(msg.clone());
        self.oldest_pre.get_or_insert_with(|| msg.clone());
        self.pre = Some(msg);
        self.vote(ctx, Phase::PrecommitVote, round, node);
    }

    fn on_commit(
        &mut self,
        ctx: &mut Ctx<'_, HsMsg>,
        from: ProcessId,
        round: u64,
        node: &Arc<HsNode>,
        cert: &Cert,
    ) {
        if !self.accepts_phase(from, round, Phase::CommitVote)
            || !self
                .rules()
                .votes_certify(cert, Phase::PrecommitVote, round, node)
        {
            return;
        }
        self.voted = Some(node.clone());
        self.vote(ctx, Phase::CommitVote, round, node);
    }

    fn on_decide(
        &mut self,
        ctx: &mut Ctx<'_, HsMsg>,
        from: ProcessId,
        round: u64,
        node: &Arc<HsNode>,
        cert: &Cert,
    ) {
        let current = from == self.rules().leader(round) && round == self.cur_round;
        if !current
            || !self
                .rules()
                .votes_certify(cert, Phase::CommitVote, round, node)
        {
            return;
        }
        for (i, n) in node.branch().into_iter().enumerate() {
            let entry = (n.round, n.value.clone());
            if self.decided.get(&(i + 1)) != Some(&entry) {
                self.decided.insert(i + 1, entry);
                ctx.decide(Decision {
                    sn: (i + 1) as u64,
                    round: Round::Nat(n.round),
                    value: n.value.clone(),
                });
            }
        }
    }
}

impl Process<HsMsg> for HotStuffProcess {
    fn on_timeout(&mut self, ctx: &mut Ctx<'_, HsMsg>) {
        if self.cur_round == 1 && self.rules().leader(1) == self.id && !self.proposed.contains(&1) {
            self.propose(ctx, 1, Vec::new().into());
            return;
        }
        if self.cur_round >= self.params.max_round {
            return;
        }
        let next = self.cur_round + 1;
        let pre = if self.acts_as(Strategy::ReplayStale) {
            self.oldest_pre.clone()
        } else {
            self.pre.clone()
        };
        ctx.send(
            self.rules().leader(next),
            HsMsg::RoundChange { round: next, pre },
        );
        self.cur_round = next;
    }

    fn on_message(&mut self, ctx: &mut Ctx<'_, HsMsg>, msg: &Signed<HsMsg>) {
        let from = msg.author();
        match msg.body() {
            HsMsg::RoundChange { round, .. } => self.on_round_change(ctx, msg, *round),
            HsMsg::Propose { round, node, cert } => self.on_propose(ctx, from, *round, node, cert),
            HsMsg::Vote { phase, round, node } => self.on_vote(ctx, msg, *phase, *round, node),
            HsMsg::Precommit { round, node, .. } => self.on_precommit(ctx, msg, *round, node),
            HsMsg::Commit { round, node, cert } => self.on_commit(ctx, from, *round, node, cert),
            HsMsg::Decide { round, node, cert } => self.on_decide(ctx, from, *round, node, cert),
        }
    }

    fn timer_armed(&self) -> bool {
        self.cur_round < self.params.max_round
            || (self.rules().leader(1) == self.id && !self.proposed.contains(&1))
    }
}

/// Emits linearization points at the first valid PRECOMMIT and DECIDE of
/// each round, whoever sends them.
#[derive(Debug, Clone)]
pub struct HsObserver {
    pub rules: HsRules,
    added: BTreeSet<u64>,
    committed: BTreeSet<u64>,
}

impl HsObserver {
    pub fn new(rules: HsRules) -> HsObserver {
        HsObserver {
            rules,
            added: BTreeSet::new(),
            committed: BTreeSet::new(),
        }
    }
}

impl Observer<HsMsg> for HsObserver {
    fn on_send(&mut self, _from: ProcessId, _honest: bool, msg: &HsMsg) -> Vec<Label> {
        match msg {
            HsMsg::Precommit { round, node, cert }
                if !self.added.contains(round)
                    && node.round == *round
                    && self.rules.votes_certify(cert, Phase::Join, *round, node) =>
            {
                self.added.insert(*round);
                let label = Label::add(
                    0,
                    Round::Nat(*round),
                    node.value.clone(),
                    Round::Nat(node.parent_round()),
                );
                label.into_iter().collect()
            }
            HsMsg::Decide { round, node, cert }
                if !self.committed.contains(round)
                    && self
                        .rules
                        .votes_certify(cert, Phase::CommitVote, *round, node) =>
            {
                self.committed.insert(*round);
                vec![Label::commit(0, Round::Nat(*round))]
            }
            _ => Vec::new(),
        }
    }
}

pub fn processes(config: &SimConfig, params: &HsParams) -> Vec<Box<dyn Process<HsMsg>>> {
    let strategy = config.effective_strategy();
    (0..config.n)
        .map(|id| {
            let mut params = params.clone();
            if config.faults.byzantine.contains(&id) {
                params.strategy = strategy;
            }
            Box::new(HotStuffProcess::new(id, params)) as Box<dyn Process<HsMsg>>
        })
        .collect()
}
