//! Offline checks over finished traces: refinement (linpoints form a correct
//! QTree execution per instance, judged by both checkers) and a QTree-free
//! end-to-end oracle for agreement and validity. Also compares the two
//! checkers over every bounded label sequence.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::Range;

use rayon::prelude::*;

use crate::checker::{
    check_declarative, replay, replay_forest, statuses_from_labels, CheckError, EnumBounds,
    Sequences, Verdict,
};
use crate::label::Label;
use crate::protocols;
use crate::round::Value;
use crate::sim::{Decision, ProcessId, Protocol, SimConfig, SimError, Trace};
use crate::tree::{Mode, Status};

/// Linpoint labels grouped by instance, in trace order.
pub fn extract(trace: &Trace) -> BTreeMap<u64, Vec<Label>> {
    let mut out: BTreeMap<u64, Vec<Label>> = BTreeMap::new();
    for label in trace.linpoints() {
        out.entry(label.sn).or_default().push(label.clone());
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceReport {
    pub sn: u64,
    pub declarative: Result<Verdict, CheckError>,
    pub replay: Verdict,
}

impl InstanceReport {
    pub fn check(sn: u64, seq: &[Label], mode: Mode) -> InstanceReport {
        InstanceReport {
            sn,
            declarative: check_declarative(seq, mode),
            replay: replay(seq, mode),
        }
    }

    /// Both checkers agree on acceptance and, when rejecting, on the index of
    /// the first offending label.
    pub fn concordant(&self) -> bool {
        match (&self.declarative, self.replay) {
            (Ok(Verdict::Accept), Verdict::Accept) => true,
            (Ok(Verdict::Reject { index: a, .. }), Verdict::Reject { index: b, .. }) => *a == b,
            _ => false,
        }
    }

    pub fn passes(&self) -> bool {
        self.declarative == Ok(Verdict::Accept) && self.replay.is_accept()
    }
}

impl fmt::Display for InstanceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let declarative = match &self.declarative {
            Ok(v) => v.to_string(),
            Err(e) => format!("error({e})"),
        };
        write!(
            f,
            "instance={} declarative={declarative} replay={} concordant={}",
            self.sn,
            self.replay,
            self.concordant()
        )
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RefinementReport {
    pub instances: Vec<InstanceReport>,
}

impl RefinementReport {
    pub fn passes(&self) -> bool {
        self.instances.iter().all(InstanceReport::passes)
    }

    pub fn concordant(&self) -> bool {
        self.instances.iter().all(InstanceReport::concordant)
    }

    /// The first rejecting verdict, if any.
    pub fn first_rejection(&self) -> Option<(u64, Verdict)> {
        self.instances.iter().find_map(|i| match i.declarative {
            Ok(v @ Verdict::Reject { .. }) => Some((i.sn, v)),
            _ if !i.replay.is_accept() => Some((i.sn, i.replay)),
            _ => None,
        })
    }
}

impl fmt::Display for RefinementReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in &self.instances {
            writeln!(f, "{i}")?;
        }
        Ok(())
    }
}

pub fn check_refinement(trace: &Trace, mode: Mode) -> RefinementReport {
    let instances = extract(trace)
        .iter()
        .map(|(sn, seq)| InstanceReport::check(*sn, seq, mode))
        .collect();
    RefinementReport { instances }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SafetyViolation {
    /// Two correct processes decided differently for one sequence number.
    Agreement {
        sn: u64,
        first: (ProcessId, Decision),
        second: (ProcessId, Decision),
    },
    /// A decided value was never offered by a client.
    Validity { proc: ProcessId, decision: Decision },
    /// Clients accepted two different values for one sequence number.
    ClientConflict { sn: u64, values: (Value, Value) },
}

impl fmt::Display for SafetyViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let show = |(p, d): &(ProcessId, Decision)| format!("p{p} r={} v={}", d.round, d.value);
        match self {
            SafetyViolation::Agreement { sn, first, second } => {
                write!(
                    f,
                    "agreement violated at sn={sn}: {} vs {}",
                    show(first),
                    show(second)
                )
            }
            SafetyViolation::Validity { proc, decision } => {
                write!(
                    f,
                    "validity violated: p{proc} decided unknown value {} at sn={}",
                    decision.value, decision.sn
                )
            }
            SafetyViolation::ClientConflict { sn, values } => {
                write!(
                    f,
                    "clients accepted both {} and {} at sn={sn}",
                    values.0, values.1
                )
            }
        }
    }
}

/// Values clients accept: a value for `sn` once `f+1` distinct processes
/// report deciding it.
pub fn client_accepted(trace: &Trace) -> BTreeMap<u64, Vec<Value>> {
    let mut reports: BTreeMap<(u64, &Value), BTreeSet<ProcessId>> = BTreeMap::new();
    for (proc, d) in trace.decisions() {
        reports.entry((d.sn, &d.value)).or_default().insert(proc);
    }
    let mut out: BTreeMap<u64, Vec<Value>> = BTreeMap::new();
    for ((sn, value), procs) in reports {
        if procs.len() > trace.header.f {
            out.entry(sn).or_default().push(value.clone());
        }
    }
    out
}

/// Agreement and validity among non-Byzantine processes, without reference
/// to QTree. Single-decree protocols must agree on values; state-machine
/// protocols must agree on the `(round, value)` entry at every position.
pub fn check_endtoend(trace: &Trace) -> Vec<SafetyViolation> {
    let mode = trace.header.protocol.mode();
    let byzantine = &trace.header.byzantine;
    let mut violations = Vec::new();
    let mut first: BTreeMap<u64, (ProcessId, Decision)> = BTreeMap::new();
    for (proc, d) in trace.decisions().filter(|(p, _)| !byzantine.contains(p)) {
        if !trace.header.client_values.contains(&d.value) {
            violations.push(SafetyViolation::Validity {
                proc,
                decision: d.clone(),
            });
        }
        match first.get(&d.sn) {
            None => {
                first.insert(d.sn, (proc, d.clone()));
            }
            Some((_, seen)) => {
                let same = match mode {
                    Mode::SingleDecree => seen.value == d.value,
                    Mode::Smr => seen.value == d.value && seen.round == d.round,
                };
                if !same {
                    let earlier = first[&d.sn].clone();
                    violations.push(SafetyViolation::Agreement {
                        sn: d.sn,
                        first: earlier,
                        second: (proc, d.clone()),
                    });
                }
            }
        }
    }
    if trace.header.protocol == Protocol::Pbft {
        for (sn, values) in client_accepted(trace) {
            if let [a, b, ..] = values.as_slice() {
                violations.push(SafetyViolation::ClientConflict {
                    sn,
                    values: (a.clone(), b.clone()),
                });
            }
        }
    }
    violations
}

/// Outcome of running both checkers over every sequence within some bounds.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EquivalenceReport {
    pub checked: u64,
    pub accepted: u64,
    pub rejected: u64,
    /// Sequences the two checkers judged differently, sorted by their text.
    pub discordant: Vec<(Vec<Label>, InstanceReport)>,
}

impl EquivalenceReport {
    fn merge(mut self, other: EquivalenceReport) -> EquivalenceReport {
        self.checked += other.checked;
        self.accepted += other.accepted;
        self.rejected += other.rejected;
        self.discordant.extend(other.discordant);
        self
    }
}

impl fmt::Display for EquivalenceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "checked={} accepted={} rejected={} discordant={}",
            self.checked,
            self.accepted,
            self.rejected,
            self.discordant.len()
        )?;
        for (seq, report) in &self.discordant {
            let text: Vec<String> = seq.iter().map(ToString::to_string).collect();
            writeln!(f, "discordant: [{}] {report}", text.join("; "))?;
        }
        Ok(())
    }
}

/// Judges every sequence within `bounds` with both checkers, in parallel.
pub fn check_equivalence(bounds: &EnumBounds, mode: Mode) -> EquivalenceReport {
    check_equivalence_with(bounds, |seq| InstanceReport::check(0, seq, mode))
}

/// Like [`check_equivalence`] with a caller-supplied judge, so that a broken
/// checker can be plugged in to exercise the discordance report.
pub fn check_equivalence_with<F>(bounds: &EnumBounds, judge: F) -> EquivalenceReport
where
    F: Fn(&[Label]) -> InstanceReport + Sync,
{
    let mut report = Sequences::new(bounds)
        .par_bridge()
        .map(|seq| {
            let verdict = judge(&seq);
            let accepted = verdict.passes();
            EquivalenceReport {
                checked: 1,
                accepted: u64::from(accepted),
                rejected: u64::from(!accepted),
                discordant: if verdict.concordant() {
                    Vec::new()
                } else {
                    vec![(seq, verdict)]
                },
            }
        })
        .reduce(EquivalenceReport::default, EquivalenceReport::merge);
    report
        .discordant
        .sort_by_key(|(seq, _)| seq.iter().map(ToString::to_string).collect::<Vec<_>>());
    report
}

/// Compares the direct status recomputation with replayed statuses on the
/// prefix of `seq` of length `len`. `None` when the prefix is rejected.
pub fn statuses_match_replay(seq: &[Label], len: usize, mode: Mode) -> Option<bool> {
    let prefix = &seq[..len];
    let direct: BTreeMap<_, Status> = statuses_from_labels(prefix, mode).ok()?;
    let (_, forest) = replay_forest(prefix, mode);
    let sn = prefix.first().map_or(0, |l| l.sn);
    let replayed = forest
        .instance(sn)
        .map(|t| t.statuses())
        .unwrap_or_default();
    Some(if prefix.is_empty() {
        true
    } else {
        direct == replayed
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub seed: u64,
    pub refinement: RefinementReport,
    pub safety: Vec<SafetyViolation>,
    pub decisions: usize,
    pub linpoints: usize,
}

impl RunOutcome {
    pub fn passes(&self) -> bool {
        self.refinement.passes() && self.safety.is_empty()
    }
}

/// Runs one simulation and every offline check on its trace.
pub fn evaluate(config: &SimConfig) -> Result<(Trace, RunOutcome), SimError> {
    let trace = protocols::run(config)?;
    let outcome = RunOutcome {
        seed: config.seed,
        refinement: check_refinement(&trace, config.mode()),
        safety: check_endtoend(&trace),
        decisions: trace.decisions().count(),
        linpoints: trace.linpoints().count(),
    };
    Ok((trace, outcome))
}

/// Evaluates `base` under each seed in parallel, in seed order.
pub fn sweep(base: &SimConfig, seeds: Range<u64>) -> Result<Vec<RunOutcome>, SimError> {
    seeds
        .into_par_iter()
        .map(|seed| evaluate(&base.clone().with_seed(seed)).map(|(_, o)| o))
        .collect()
}
