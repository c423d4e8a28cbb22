//! Protocol behavior on scripted schedules, and certificate and observer
//! invariants over random runs.

use std::collections::BTreeSet;

use qtree::harness::{check_endtoend, client_accepted, evaluate, SafetyViolation};
use qtree::label::Op;
use qtree::protocols;
use qtree::sim::{parse_schedule, EventKind, Protocol, SimConfig, Strategy, Trace};

fn scripted(mut config: SimConfig, script: &str) -> Trace {
    config.schedule = Some(parse_schedule(script).unwrap());
    protocols::run(&config).unwrap()
}

fn linpoints(trace: &Trace) -> Vec<String> {
    trace.linpoints().map(ToString::to_string).collect()
}

/// Summaries of every message `proc` sent whose type is `kind`.
fn sent(trace: &Trace, kind: &str) -> Vec<(usize, String)> {
    let tag = format!("m={kind} ");
    trace
        .events
        .iter()
        .filter_map(|e| match &e.kind {
            EventKind::Send { msg, .. } if msg.starts_with(&tag) => Some((e.proc, msg.to_string())),
            _ => None,
        })
        .collect()
}

fn field<'a>(summary: &'a str, key: &str) -> &'a str {
    summary
        .split_whitespace()
        .find_map(|tok| tok.strip_prefix(key).and_then(|t| t.strip_prefix('=')))
        .unwrap_or_else(|| panic!("`{key}` missing in {summary}"))
}

fn cert_size(summary: &str) -> usize {
    field(summary, "cert")
        .split(',')
        .filter(|s| !s.is_empty())
        .count()
}

fn repeat(line: &str, times: usize) -> String {
    format!("{line}\n").repeat(times)
}

#[test]
fn paxos_single_round_adds_then_commits() {
    let config = SimConfig::new(Protocol::Paxos, 1);
    let script = [
        "timeout 1\n".to_string(),
        repeat("deliver 1->* m=START r=1", 3),
        repeat("deliver *->1 m=JOIN r=1", 2),
        repeat("deliver 1->* m=PROPOSE r=1", 3),
        repeat("deliver *->1 m=VOTE r=1", 2),
    ]
    .concat();
    let trace = scripted(config, &script);
    assert_eq!(
        linpoints(&trace),
        [
            "sn=0 op=add r=1 v=v1 rp=0 res=OK",
            "sn=0 op=commit r=1 res=OK"
        ]
    );
    assert!(check_endtoend(&trace).is_empty());
}

#[test]
fn paxos_join_minority_proposes_nothing() {
    let config = SimConfig::new(Protocol::Paxos, 1);
    let script = [
        "timeout 1\n".to_string(),
        repeat("deliver 1->* m=START r=1", 3),
        repeat("deliver *->1 m=JOIN r=1", 1),
    ]
    .concat();
    let trace = scripted(config, &script);
    assert!(sent(&trace, "PROPOSE").is_empty());
    assert!(linpoints(&trace).is_empty());
}

#[test]
fn raft_leader_adds_on_first_append_and_commits_on_quorum() {
    let mut config = SimConfig::new(Protocol::Raft, 1);
    config.set("batch", "1").unwrap();
    config.set("max_entries", "1").unwrap();
    let script = [
        "timeout 1\n".to_string(),
        repeat("deliver 1->* m=VOTEREQ t=1", 3),
        repeat("deliver *->1 m=VOTERESP t=1", 2),
        repeat("deliver 1->* m=LOGREQ t=1", 3),
        repeat("deliver *->1 m=LOGRESP t=1", 2),
    ]
    .concat();
    let trace = scripted(config, &script);
    assert_eq!(
        linpoints(&trace),
        [
            "sn=0 op=add r=1.0 v=v1 rp=0.0 res=OK",
            "sn=0 op=commit r=1.0 res=OK"
        ]
    );
}

fn hotstuff_happy_path(joins: usize) -> String {
    [
        "timeout 1\n".to_string(),
        repeat("deliver 1->* m=PROPOSE r=1", 4),
        repeat("deliver *->1 m=JOIN r=1", joins),
        repeat("deliver 1->* m=PRECOMMIT r=1", 4),
        repeat("deliver *->1 m=PRECOMMIT_VOTE r=1", 3),
        repeat("deliver 1->* m=COMMIT r=1", 4),
        repeat("deliver *->1 m=COMMIT_VOTE r=1", 3),
    ]
    .concat()
}

#[test]
fn hotstuff_round_one_adds_at_precommit_and_commits_at_decide() {
    let trace = scripted(
        SimConfig::new(Protocol::HotStuff, 1),
        &hotstuff_happy_path(3),
    );
    assert_eq!(
        linpoints(&trace),
        [
            "sn=0 op=add r=1 v=v2 rp=0 res=OK",
            "sn=0 op=commit r=1 res=OK"
        ]
    );
    for (_, msg) in sent(&trace, "PRECOMMIT")
        .iter()
        .chain(&sent(&trace, "DECIDE"))
    {
        assert_eq!(cert_size(msg), 3, "{msg}");
    }
}

#[test]
fn hotstuff_two_joins_do_not_certify() {
    let script: String = hotstuff_happy_path(2)
        .lines()
        .take(7)
        .map(|l| format!("{l}\n"))
        .collect();
    let trace = scripted(SimConfig::new(Protocol::HotStuff, 1), &script);
    assert!(sent(&trace, "PRECOMMIT").is_empty());
    assert!(linpoints(&trace).is_empty());
}

#[test]
fn hotstuff_leader_waits_for_a_round_change_quorum() {
    let config = SimConfig::new(Protocol::HotStuff, 1);
    let two = "timeout 0\ntimeout 3\ndeliver 0->2 m=RC r=2\ndeliver 3->2 m=RC r=2\n";
    let trace = scripted(config.clone(), two);
    assert!(sent(&trace, "PROPOSE").is_empty());
    let three = format!("{two}timeout 2\ndeliver 2->2 m=RC r=2\n");
    let trace = scripted(config, &three);
    let proposals = sent(&trace, "PROPOSE");
    assert!(!proposals.is_empty());
    assert!(proposals
        .iter()
        .all(|(p, m)| *p == 2 && field(m, "r") == "2" && field(m, "rp") == "0"));
    assert!(proposals.iter().all(|(_, m)| cert_size(m) == 3));
}

#[test]
fn pbft_vote_without_join_quorum_is_no_linpoint() {
    let mut config = SimConfig::new(Protocol::Pbft, 1);
    config.faults.byzantine.insert(2);
    config.strategy = Some(Strategy::VoteWithoutJoin);
    let trace = scripted(config, "timeout 1\ndeliver 1->2 m=PROPOSE r=1\n");
    let votes = sent(&trace, "VOTE");
    assert!(!votes.is_empty());
    assert!(votes.iter().all(|(p, m)| *p == 2 && cert_size(m) == 0));
    assert!(linpoints(&trace).is_empty());
}

#[test]
fn pbft_clients_need_f_plus_one_matching_decisions() {
    let header = "# protocol=pbft n=4 f=1 seed=0 byzantine=3 clients=v1,v2\n";
    let lone_liar = format!(
        "{header}step=1 kind=decide proc=0 sn=0 r=1 v=v1\n\
         step=2 kind=decide proc=1 sn=0 r=1 v=v1\n\
         step=3 kind=decide proc=3 sn=0 r=1 v=v2\n"
    );
    let trace = Trace::parse(&lone_liar).unwrap();
    assert_eq!(client_accepted(&trace)[&0], ["v1".parse().unwrap()]);
    assert!(check_endtoend(&trace).is_empty());

    let split = format!(
        "{header}step=1 kind=decide proc=0 sn=0 r=1 v=v1\n\
         step=2 kind=decide proc=1 sn=0 r=1 v=v1\n\
         step=3 kind=decide proc=2 sn=0 r=2 v=v2\n\
         step=4 kind=decide proc=3 sn=0 r=2 v=v2\n"
    );
    let violations = check_endtoend(&Trace::parse(&split).unwrap());
    assert!(violations
        .iter()
        .any(|v| matches!(v, SafetyViolation::ClientConflict { sn: 0, .. })));
    assert!(violations
        .iter()
        .any(|v| matches!(v, SafetyViolation::Agreement { sn: 0, .. })));
}

#[test]
fn endtoend_flags_values_no_client_offered() {
    let text = "# protocol=paxos n=3 f=1 seed=0 byzantine= clients=v1\n\
                step=1 kind=decide proc=0 sn=0 r=1 v=v9\n";
    let violations = check_endtoend(&Trace::parse(text).unwrap());
    assert!(matches!(
        violations.as_slice(),
        [SafetyViolation::Validity { proc: 0, .. }]
    ));
}

fn byzantine_config(protocol: Protocol, strategy: Strategy) -> SimConfig {
    let mut config = SimConfig::new(protocol, 1);
    config.faults.byzantine.insert(1);
    config.strategy = Some(strategy);
    config.faults.drop_prob = 0.1;
    config.faults.duplicate_prob = 0.1;
    config
}

#[test]
fn correct_processes_only_send_quorum_certificates() {
    let checks: [(Protocol, &[&str]); 2] = [
        (Protocol::HotStuff, &["PRECOMMIT", "COMMIT", "DECIDE"]),
        (Protocol::Pbft, &["VOTE"]),
    ];
    for (protocol, kinds) in checks {
        for strategy in Strategy::ALL {
            for seed in 0..40 {
                let trace =
                    protocols::run(&byzantine_config(protocol, strategy).with_seed(seed)).unwrap();
                for kind in kinds {
                    for (proc, msg) in sent(&trace, kind) {
                        if proc != 1 {
                            assert!(
                                cert_size(&msg) >= 3,
                                "{protocol} seed {seed} p{proc}: {msg}"
                            );
                        }
                    }
                }
                for (proc, msg) in sent(&trace, "PROPOSE") {
                    if proc != 1 && field(&msg, "r") != "1" {
                        assert!(
                            cert_size(&msg) >= 3,
                            "{protocol} seed {seed} p{proc}: {msg}"
                        );
                    }
                }
            }
        }
    }
}

#[test]
fn observer_emits_each_label_at_most_once() {
    for protocol in Protocol::ALL {
        for seed in 0..40 {
            let mut config = SimConfig::new(protocol, 1).with_seed(seed);
            config.faults.duplicate_prob = 0.3;
            if protocol.is_byzantine_tolerant() {
                config.faults.byzantine.insert(2);
            }
            let trace = protocols::run(&config).unwrap();
            let mut seen = BTreeSet::new();
            for label in trace.linpoints() {
                let key = (
                    label.sn,
                    matches!(label.op, Op::Add { .. }),
                    label.op.round(),
                );
                assert!(seen.insert(key), "{protocol} seed {seed}: repeated {label}");
            }
        }
    }
}

#[test]
fn every_protocol_decides_in_fault_free_runs() {
    for protocol in Protocol::ALL {
        let decided = (0..20)
            .filter(|&seed| {
                let (_, outcome) = evaluate(&SimConfig::new(protocol, 1).with_seed(seed)).unwrap();
                assert!(outcome.passes(), "{protocol} seed {seed}");
                outcome.decisions > 0
            })
            .count();
        assert!(decided >= 15, "{protocol}: only {decided}/20 runs decided");
    }
}
