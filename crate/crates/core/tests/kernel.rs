//! Kernel contracts: determinism, fault injection, crash semantics,
//! authenticity, quiescence and event ordering.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::{Arc, Mutex};

use qtree::protocols;
use qtree::sim::{
    parse_schedule, Ctx, EventKind, Kernel, NoObserver, Process, ProcessId, Protocol, Signed,
    SimConfig, SimError, Strategy, Trace,
};

/// A message whose body names the process that claims to have sent it.
#[derive(Debug, Clone, PartialEq)]
struct Claim {
    claimed_by: ProcessId,
    hops: u32,
}

impl fmt::Display for Claim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "m=CLAIM by={} hops={}", self.claimed_by, self.hops)
    }
}

/// Process 0 broadcasts once on its first timeout; every receiver forwards
/// to its successor until `hops` runs out. Process `forger`, if set, tries
/// to send as someone else.
struct Relay {
    fired: bool,
    forger: bool,
    log: Arc<Mutex<Vec<String>>>,
}

impl Process<Claim> for Relay {
    fn on_timeout(&mut self, ctx: &mut Ctx<'_, Claim>) {
        self.fired = true;
        if self.forger {
            let victim = (ctx.id() + 1) % ctx.n();
            let outcome = ctx.send_as(
                victim,
                0,
                Claim {
                    claimed_by: victim,
                    hops: 0,
                },
            );
            self.log.lock().unwrap().push(format!("{outcome:?}"));
        }
        ctx.broadcast(Claim {
            claimed_by: ctx.id(),
            hops: 2,
        });
    }

    fn on_message(&mut self, ctx: &mut Ctx<'_, Claim>, msg: &Signed<Claim>) {
        let body = msg.body();
        self.log.lock().unwrap().push(format!(
            "author={} claimed={}",
            msg.author(),
            body.claimed_by
        ));
        if body.hops > 0 {
            let next = (ctx.id() + 1) % ctx.n();
            ctx.send(
                next,
                Claim {
                    claimed_by: ctx.id(),
                    hops: body.hops - 1,
                },
            );
        }
    }

    fn timer_armed(&self) -> bool {
        !self.fired
    }
}

fn relay_run(config: SimConfig, forger: Option<ProcessId>) -> (Trace, Vec<String>) {
    let log = Arc::new(Mutex::new(Vec::new()));
    let procs = (0..config.n)
        .map(|id| {
            Box::new(Relay {
                fired: false,
                forger: Some(id) == forger,
                log: log.clone(),
            }) as Box<dyn Process<Claim>>
        })
        .collect();
    let trace = Kernel::new(config, procs, Box::new(NoObserver))
        .unwrap()
        .run()
        .unwrap();
    let log = log.lock().unwrap().clone();
    (trace, log)
}

fn relay_config() -> SimConfig {
    let mut config = SimConfig::new(Protocol::Paxos, 1);
    config.max_steps = 10_000;
    config
}

fn count(trace: &Trace, kind: &str) -> usize {
    trace
        .events
        .iter()
        .filter(|e| e.kind.name() == kind)
        .count()
}

#[test]
fn identical_config_gives_identical_trace() {
    for protocol in Protocol::ALL {
        let mut config = SimConfig::new(protocol, 1).with_seed(7);
        config.faults.drop_prob = 0.1;
        config.faults.duplicate_prob = 0.1;
        config.faults.delay = (0, 3);
        if protocol.is_byzantine_tolerant() {
            config.faults.byzantine.insert(2);
        }
        let first = protocols::run(&config).unwrap();
        let second = protocols::run(&config).unwrap();
        assert_eq!(first.render(), second.render(), "{protocol}");
        assert_eq!(first.digest(), second.digest());
        let other = protocols::run(&config.clone().with_seed(8)).unwrap();
        assert_ne!(
            first.digest(),
            other.digest(),
            "{protocol}: seed has no effect"
        );
    }
}

#[test]
fn dropping_everything_blocks_every_quorum() {
    for protocol in Protocol::ALL {
        let mut config = SimConfig::new(protocol, 1).with_seed(3);
        config.faults.drop_prob = 1.0;
        let trace = protocols::run(&config).unwrap();
        assert!(count(&trace, "send") > 0, "{protocol}");
        assert_eq!(count(&trace, "send"), count(&trace, "drop"), "{protocol}");
        for kind in ["deliver", "linpoint", "decide"] {
            assert_eq!(count(&trace, kind), 0, "{protocol}: {kind}");
        }
    }
}

#[test]
fn full_duplication_delivers_every_message_twice() {
    let mut config = relay_config();
    config.faults.duplicate_prob = 1.0;
    let (trace, _) = relay_run(config, None);
    let mut deliveries: BTreeMap<u64, usize> = BTreeMap::new();
    for e in &trace.events {
        if let EventKind::Deliver { id, .. } = e.kind {
            *deliveries.entry(id).or_default() += 1;
        }
    }
    assert_eq!(deliveries.len(), count(&trace, "send"));
    assert!(deliveries.values().all(|&c| c == 2), "{deliveries:?}");
}

#[test]
fn crashed_process_takes_no_action_after_its_step() {
    for protocol in [Protocol::Paxos, Protocol::MultiPaxos, Protocol::Raft] {
        for seed in 0..20 {
            let mut config = SimConfig::new(protocol, 1).with_seed(seed);
            config.faults.crash_at.insert(1, 5);
            let trace = protocols::run(&config).unwrap();
            for e in trace.events.iter().filter(|e| e.step > 5) {
                let acts = !matches!(e.kind, EventKind::Drop { .. });
                assert!(!(e.proc == 1 && acts), "{protocol} seed {seed}: {e}");
                if let EventKind::Deliver { .. } = e.kind {
                    assert_ne!(e.proc, 1);
                }
            }
        }
    }
}

#[test]
fn forging_an_author_is_refused() {
    let (trace, log) = relay_run(relay_config(), Some(2));
    assert!(
        log.iter()
            .any(|l| l == "Err(Forgery { by: 2, claimed: 0 })"),
        "{log:?}"
    );
    assert!(log.iter().filter(|l| l.starts_with("author=")).all(|l| {
        let (author, claimed) = l
            .trim_start_matches("author=")
            .split_once(" claimed=")
            .unwrap();
        author == claimed
    }));
    assert!(count(&trace, "deliver") > 0);
}

#[test]
fn forgery_error_names_both_ids() {
    let err = SimError::Forgery { by: 2, claimed: 0 };
    assert_eq!(err.to_string(), "process 2 tried to send as 0");
}

#[test]
fn deliveries_carry_the_sender_recorded_at_send() {
    let mut config = SimConfig::new(Protocol::Pbft, 1);
    config.faults.byzantine.insert(1);
    config.faults.duplicate_prob = 0.2;
    config.faults.delay = (0, 4);
    for strategy in Strategy::ALL {
        config.strategy = Some(strategy);
        for seed in 0..10 {
            let trace = protocols::run(&config.clone().with_seed(seed)).unwrap();
            let mut senders: BTreeMap<u64, ProcessId> = BTreeMap::new();
            for e in &trace.events {
                match e.kind {
                    EventKind::Send { id, .. } => {
                        senders.insert(id, e.proc);
                    }
                    EventKind::Deliver { from, id, .. } => {
                        assert_eq!(senders.get(&id), Some(&from))
                    }
                    _ => {}
                }
            }
        }
    }
}

#[test]
fn run_ends_early_at_quiescence() {
    let (trace, _) = relay_run(relay_config(), None);
    let end = trace.quiescent_at.expect("relay quiesces");
    assert!(end < 10_000);
    assert!(trace
        .render()
        .ends_with(&format!("# quiescent step={end}\n")));
    assert_eq!(Trace::parse(&trace.render()).unwrap(), trace);
}

#[test]
fn without_drops_every_message_is_delivered_before_quiescence() {
    for protocol in [Protocol::Paxos, Protocol::Raft, Protocol::HotStuff] {
        for seed in 0..10 {
            let mut config = SimConfig::new(protocol, 1).with_seed(seed);
            config.max_steps = 100_000;
            config.faults.delay = (0, 5);
            let trace = protocols::run(&config).unwrap();
            assert!(
                trace.quiescent_at.is_some(),
                "{protocol} seed {seed} never quiesced"
            );
            assert_eq!(
                count(&trace, "send"),
                count(&trace, "deliver"),
                "{protocol} seed {seed}"
            );
        }
    }
}

#[test]
fn steps_never_decrease_and_linpoints_share_their_transition_step() {
    for protocol in Protocol::ALL {
        let trace = protocols::run(&SimConfig::new(protocol, 1).with_seed(11)).unwrap();
        let mut transition_steps = BTreeSet::new();
        let mut last = 0;
        for e in &trace.events {
            assert!(e.step >= last);
            last = e.step;
            if matches!(e.kind, EventKind::Deliver { .. } | EventKind::Timeout) {
                assert!(
                    transition_steps.insert(e.step),
                    "two transitions at step {}",
                    e.step
                );
            }
            if let EventKind::Linpoint(_) = e.kind {
                assert!(
                    transition_steps.contains(&e.step),
                    "{protocol}: stray linpoint {e}"
                );
            }
        }
        assert!(count(&trace, "linpoint") > 0, "{protocol}");
    }
}

#[test]
fn invalid_config_is_rejected_before_any_step() {
    let mut config = SimConfig::new(Protocol::Paxos, 1);
    config.faults.byzantine.insert(0);
    assert!(matches!(protocols::run(&config), Err(SimError::Config(_))));
    let mut config = SimConfig::new(Protocol::Pbft, 1);
    config.n = 3;
    assert!(protocols::run(&config).is_err());
}

#[test]
fn unmatched_schedule_entry_is_an_error() {
    let mut config = SimConfig::new(Protocol::Paxos, 1);
    config.schedule = Some(parse_schedule("timeout 1\ndeliver 1->2 m=VOTE r=1\n").unwrap());
    match protocols::run(&config) {
        Err(SimError::Schedule { index, .. }) => assert_eq!(index, 1),
        other => panic!("expected a schedule error, got {other:?}"),
    }
}

#[test]
fn scripted_drop_removes_the_message() {
    let mut config = SimConfig::new(Protocol::Paxos, 1);
    config.schedule = Some(
        parse_schedule("timeout 1\ndrop 1->2 m=START r=1\ndeliver 1->0 m=START r=1\n").unwrap(),
    );
    let trace = protocols::run(&config).unwrap();
    assert_eq!(count(&trace, "drop"), 1);
    assert_eq!(count(&trace, "deliver"), 1);
}
