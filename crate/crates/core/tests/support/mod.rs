//! Deliberately broken protocol variants for mutation testing. Each mutant
//! wraps or reconfigures a correct implementation to drop one safety check;
//! the refinement check must notice.

#![allow(dead_code)]

use std::fmt;

use qtree::harness::{check_endtoend, check_refinement};
use qtree::protocols::{hotstuff, paxos, pbft, raft};
use qtree::sim::{Ctx, Kernel, NoObserver, Process, Protocol, Signed, SimConfig, SimError, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mutant {
    /// Paxos acceptors vote even after joining a higher round.
    PaxosVoteIgnoresJoin,
    /// Paxos acceptors report no previous vote in their JOIN.
    PaxosJoinHidesVote,
    /// Raft grants votes without comparing logs.
    RaftSkipsUpToDate,
    /// HotStuff accepts certificates of `2f` votes.
    HotStuffWeakQuorum,
    /// PBFT processes act on `f+1` messages.
    PbftWeakQuorum,
}

impl fmt::Display for Mutant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Mutant::PaxosVoteIgnoresJoin => "paxos-vote-ignores-join",
            Mutant::PaxosJoinHidesVote => "paxos-join-hides-vote",
            Mutant::RaftSkipsUpToDate => "raft-skips-up-to-date",
            Mutant::HotStuffWeakQuorum => "hotstuff-weak-quorum",
            Mutant::PbftWeakQuorum => "pbft-weak-quorum",
        };
        f.write_str(name)
    }
}

impl Mutant {
    pub const ALL: [Mutant; 5] = [
        Mutant::PaxosVoteIgnoresJoin,
        Mutant::PaxosJoinHidesVote,
        Mutant::RaftSkipsUpToDate,
        Mutant::HotStuffWeakQuorum,
        Mutant::PbftWeakQuorum,
    ];

    pub fn config(self, seed: u64) -> SimConfig {
        let protocol = match self {
            Mutant::PaxosVoteIgnoresJoin | Mutant::PaxosJoinHidesVote => Protocol::Paxos,
            Mutant::RaftSkipsUpToDate => Protocol::Raft,
            Mutant::HotStuffWeakQuorum => Protocol::HotStuff,
            Mutant::PbftWeakQuorum => Protocol::Pbft,
        };
        let mut config = SimConfig::new(protocol, 1).with_seed(seed);
        config.faults.drop_prob = 0.1;
        config.faults.duplicate_prob = 0.1;
        config.timeout_prob = 0.1;
        config
    }

    pub fn run(self, config: &SimConfig) -> Result<Trace, SimError> {
        let weak = config.f;
        match self {
            Mutant::PaxosVoteIgnoresJoin | Mutant::PaxosJoinHidesVote => {
                let params = paxos::PaxosParams::from_config(config, false);
                let procs = (0..config.n)
                    .map(|id| {
                        let inner = paxos::PaxosProcess::new(id, params.clone());
                        Box::new(MutPaxos {
                            inner,
                            mutant: self,
                        }) as Box<dyn Process<paxos::Wire>>
                    })
                    .collect();
                Kernel::new(config.clone(), procs, Box::new(NoObserver))?.run()
            }
            Mutant::RaftSkipsUpToDate => {
                let params = raft::RaftParams::from_config(config);
                let procs = (0..config.n)
                    .map(|id| {
                        Box::new(MutRaft {
                            inner: raft::RaftProcess::new(id, params.clone()),
                        }) as Box<dyn Process<raft::RaftMsg>>
                    })
                    .collect();
                Kernel::new(config.clone(), procs, Box::new(NoObserver))?.run()
            }
            Mutant::HotStuffWeakQuorum => {
                let mut params = hotstuff::HsParams::from_config(config);
                params.rules.quorum = 2 * weak;
                let observer = hotstuff::HsObserver::new(params.rules.clone());
                Kernel::new(
                    config.clone(),
                    hotstuff::processes(config, &params),
                    Box::new(observer),
                )?
                .run()
            }
            Mutant::PbftWeakQuorum => {
                let mut params = pbft::PbftParams::from_config(config);
                params.rules.quorum = weak + 1;
                let observer = pbft::PbftObserver::new(params.rules.clone());
                Kernel::new(
                    config.clone(),
                    pbft::processes(config, &params),
                    Box::new(observer),
                )?
                .run()
            }
        }
    }
}

struct MutPaxos {
    inner: paxos::PaxosProcess,
    mutant: Mutant,
}

impl Process<paxos::Wire> for MutPaxos {
    fn on_timeout(&mut self, ctx: &mut Ctx<'_, paxos::Wire>) {
        self.inner.on_timeout(ctx);
    }

    fn on_message(&mut self, ctx: &mut Ctx<'_, paxos::Wire>, msg: &Signed<paxos::Wire>) {
        match (&msg.body().msg, self.mutant) {
            (paxos::PaxosMsg::Propose { .. }, Mutant::PaxosVoteIgnoresJoin) => {
                let joined = std::mem::take(&mut self.inner.max_joined);
                self.inner.on_message(ctx, msg);
                self.inner.max_joined = self.inner.max_joined.max(joined);
            }
            (paxos::PaxosMsg::Start { .. }, Mutant::PaxosJoinHidesVote) => {
                let votes = std::mem::take(&mut self.inner.votes);
                self.inner.on_message(ctx, msg);
                self.inner.votes = votes;
            }
            _ => self.inner.on_message(ctx, msg),
        }
    }

    fn timer_armed(&self) -> bool {
        self.inner.timer_armed()
    }
}

struct MutRaft {
    inner: raft::RaftProcess,
}

impl Process<raft::RaftMsg> for MutRaft {
    fn on_timeout(&mut self, ctx: &mut Ctx<'_, raft::RaftMsg>) {
        self.inner.on_timeout(ctx);
    }

    fn on_message(&mut self, ctx: &mut Ctx<'_, raft::RaftMsg>, msg: &Signed<raft::RaftMsg>) {
        if matches!(msg.body(), raft::RaftMsg::VoteReq { .. }) {
            let log = std::mem::take(&mut self.inner.log);
            self.inner.on_message(ctx, msg);
            self.inner.log = log;
        } else {
            self.inner.on_message(ctx, msg);
        }
    }

    fn timer_armed(&self) -> bool {
        self.inner.timer_armed()
    }
}

/// Per-seed verdicts of a mutant run.
#[derive(Debug, Clone, Copy)]
pub struct MutantRun {
    pub seed: u64,
    pub refinement_fails: bool,
    pub unsafe_decisions: bool,
}

pub fn run_mutant(mutant: Mutant, seed: u64) -> MutantRun {
    let config = mutant.config(seed);
    let trace = mutant.run(&config).expect("mutant config is valid");
    MutantRun {
        seed,
        refinement_fails: !check_refinement(&trace, config.mode()).passes(),
        unsafe_decisions: !check_endtoend(&trace).is_empty(),
    }
}
