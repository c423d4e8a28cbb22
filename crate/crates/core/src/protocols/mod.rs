//! Protocol state machines and the dispatcher that runs one under the kernel.

pub mod hotstuff;
pub mod paxos;
pub mod pbft;
pub mod raft;

use std::collections::BTreeSet;

use crate::sim::{Kernel, NoObserver, Protocol, Signed, SimConfig, SimError, Trace};

/// Number of distinct processes that authored messages in `cert`.
pub fn distinct_authors<M>(cert: &[Signed<M>]) -> usize {
    cert.iter()
        .map(Signed::author)
        .collect::<BTreeSet<_>>()
        .len()
}

/// Runs the configured protocol to completion (or `max_steps`).
pub fn run(config: &SimConfig) -> Result<Trace, SimError> {
    match config.protocol {
        Protocol::Paxos | Protocol::MultiPaxos => {
            let multi = config.protocol == Protocol::MultiPaxos;
            Kernel::new(
                config.clone(),
                paxos::processes(config, multi),
                Box::new(NoObserver),
            )?
            .run()
        }
        Protocol::Raft => Kernel::new(
            config.clone(),
            raft::processes(config),
            Box::new(NoObserver),
        )?
        .run(),
        Protocol::HotStuff => {
            let params = hotstuff::HsParams::from_config(config);
            let observer = hotstuff::HsObserver::new(params.rules.clone());
            Kernel::new(
                config.clone(),
                hotstuff::processes(config, &params),
                Box::new(observer),
            )?
            .run()
        }
        Protocol::Pbft => {
            let params = pbft::PbftParams::from_config(config);
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
