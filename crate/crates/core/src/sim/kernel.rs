//! The discrete-event kernel.
//!
//! Each step performs exactly one transition: a message delivery, a timeout,
//! or (scripted mode) a scripted drop. Random choices come from a ChaCha
//! stream seeded by the config, so a run is a pure function of its config.

use std::collections::BTreeSet;
use std::fmt::Display;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::SimConfig;
use super::schedule::{MessageFilter, Selector};
use super::trace::{Decision, EventKind, Trace, TraceEvent, TraceHeader};
use super::{ProcessId, SimError};
use crate::label::Label;

/// A message as it travels through the network. The author is stamped by the
/// kernel at send time and cannot be set by processes, which stands in for
/// unforgeable signatures.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Signed<M> {
    author: ProcessId,
    id: u64,
    body: M,
}

impl<M> Signed<M> {
    pub fn author(&self) -> ProcessId {
        self.author
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn body(&self) -> &M {
        &self.body
    }
}

#[derive(Debug)]
enum Action<M> {
    Send { to: ProcessId, body: M },
    Linpoint(Label),
    Decide(Decision),
}

/// The handle a process uses to act during one transition.
pub struct Ctx<'a, M> {
    id: ProcessId,
    n: usize,
    step: u64,
    actions: &'a mut Vec<Action<M>>,
}

impl<M: Clone> Ctx<'_, M> {
    pub fn id(&self) -> ProcessId {
        self.id
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn send(&mut self, to: ProcessId, body: M) {
        self.actions.push(Action::Send { to, body });
    }

    /// Sends to every process, the sender included.
    pub fn broadcast(&mut self, body: M) {
        for to in 0..self.n {
            self.send(to, body.clone());
        }
    }

    /// Sends claiming another author. Anything but the caller's own id is a
    /// forgery and is refused.
    pub fn send_as(&mut self, author: ProcessId, to: ProcessId, body: M) -> Result<(), SimError> {
        if author != self.id {
            return Err(SimError::Forgery {
                by: self.id,
                claimed: author,
            });
        }
        self.send(to, body);
        Ok(())
    }

    pub fn linpoint(&mut self, label: Label) {
        self.actions.push(Action::Linpoint(label));
    }

    pub fn decide(&mut self, decision: Decision) {
        self.actions.push(Action::Decide(decision));
    }
}

pub trait Process<M> {
    fn on_timeout(&mut self, ctx: &mut Ctx<'_, M>);
    fn on_message(&mut self, ctx: &mut Ctx<'_, M>, msg: &Signed<M>);
    /// Whether a timeout is pending for this process.
    fn timer_armed(&self) -> bool;
}

/// Watches every send and decision globally; used where a linearization point
/// is "the first time" something happens anywhere in the system.
pub trait Observer<M> {
    fn on_send(&mut self, _from: ProcessId, _honest: bool, _msg: &M) -> Vec<Label> {
        Vec::new()
    }

    fn on_decide(&mut self, _proc: ProcessId, _honest: bool, _decision: &Decision) -> Vec<Label> {
        Vec::new()
    }
}

pub struct NoObserver;

impl<M> Observer<M> for NoObserver {}

#[derive(Debug, Clone)]
struct InFlight<M> {
    msg: Signed<M>,
    to: ProcessId,
    ready_at: u64,
    summary: Arc<str>,
}

pub struct Kernel<M> {
    config: SimConfig,
    procs: Vec<Box<dyn Process<M>>>,
    observer: Box<dyn Observer<M>>,
    rng: ChaCha8Rng,
    step: u64,
    next_id: u64,
    ready: Vec<InFlight<M>>,
    delayed: Vec<InFlight<M>>,
    events: Vec<TraceEvent>,
}

impl<M: Clone + Display> Kernel<M> {
    pub fn new(
        config: SimConfig,
        procs: Vec<Box<dyn Process<M>>>,
        observer: Box<dyn Observer<M>>,
    ) -> Result<Kernel<M>, SimError> {
        config.validate()?;
        if procs.len() != config.n {
            return Err(SimError::ProcessCount {
                expected: config.n,
                got: procs.len(),
            });
        }
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Kernel {
            config,
            procs,
            observer,
            rng,
            step: 0,
            next_id: 0,
            ready: Vec::new(),
            delayed: Vec::new(),
            events: Vec::new(),
        })
    }

    fn crashed(&self, p: ProcessId) -> bool {
        self.config
            .faults
            .crash_at
            .get(&p)
            .is_some_and(|&at| at < self.step)
    }

    fn honest(&self, p: ProcessId) -> bool {
        !self.config.faults.byzantine.contains(&p)
    }

    fn scripted(&self) -> bool {
        self.config.schedule.is_some()
    }

    fn push(&mut self, proc: ProcessId, kind: EventKind) {
        self.events.push(TraceEvent {
            step: self.step,
            proc,
            kind,
        });
    }

    fn apply(&mut self, proc: ProcessId, actions: Vec<Action<M>>) {
        for action in actions {
            match action {
                Action::Send { to, body } => self.enqueue(proc, to, body),
                Action::Linpoint(label) => self.push(proc, EventKind::Linpoint(label)),
                Action::Decide(decision) => {
                    let honest = self.honest(proc);
                    let labels = self.observer.on_decide(proc, honest, &decision);
                    self.push(proc, EventKind::Decide(decision));
                    for label in labels {
                        self.push(proc, EventKind::Linpoint(label));
                    }
                }
            }
        }
    }

    fn enqueue(&mut self, from: ProcessId, to: ProcessId, body: M) {
        let id = self.next_id;
        self.next_id += 1;
        let summary: Arc<str> = Arc::from(body.to_string());
        let honest = self.honest(from);
        let labels = self.observer.on_send(from, honest, &body);
        self.push(
            from,
            EventKind::Send {
                to,
                id,
                msg: summary.clone(),
            },
        );
        for label in labels {
            self.push(from, EventKind::Linpoint(label));
        }
        let msg = Signed {
            author: from,
            id,
            body,
        };
        if self.scripted() {
            self.ready.push(InFlight {
                msg,
                to,
                ready_at: self.step,
                summary,
            });
            return;
        }
        let faults = &self.config.faults;
        let partitioned = faults
            .partitions
            .iter()
            .any(|p| p.separates(self.step, from, to));
        let (drop_prob, dup_prob, (lo, hi)) =
            (faults.drop_prob, faults.duplicate_prob, faults.delay);
        if partitioned || (drop_prob > 0.0 && self.rng.gen_bool(drop_prob)) {
            self.push(
                from,
                EventKind::Drop {
                    to,
                    id,
                    msg: summary,
                },
            );
            return;
        }
        let copies = if dup_prob > 0.0 && self.rng.gen_bool(dup_prob) {
            2
        } else {
            1
        };
        for _ in 0..copies {
            let delay = if hi > 0 {
                self.rng.gen_range(lo..=hi)
            } else {
                0
            };
            let flight = InFlight {
                msg: msg.clone(),
                to,
                ready_at: self.step + delay,
                summary: summary.clone(),
            };
            if delay == 0 {
                self.ready.push(flight);
            } else {
                self.delayed.push(flight);
            }
        }
    }

    fn deliver(&mut self, flight: InFlight<M>) {
        let InFlight {
            msg, to, summary, ..
        } = flight;
        if self.crashed(to) {
            self.push(
                msg.author,
                EventKind::Drop {
                    to,
                    id: msg.id,
                    msg: summary,
                },
            );
            return;
        }
        self.push(
            to,
            EventKind::Deliver {
                from: msg.author,
                id: msg.id,
                msg: summary,
            },
        );
        let mut actions = Vec::new();
        let mut ctx = Ctx {
            id: to,
            n: self.config.n,
            step: self.step,
            actions: &mut actions,
        };
        self.procs[to].on_message(&mut ctx, &msg);
        self.apply(to, actions);
    }

    fn fire_timeout(&mut self, p: ProcessId) {
        self.push(p, EventKind::Timeout);
        let mut actions = Vec::new();
        let mut ctx = Ctx {
            id: p,
            n: self.config.n,
            step: self.step,
            actions: &mut actions,
        };
        self.procs[p].on_timeout(&mut ctx);
        self.apply(p, actions);
    }

    fn mature_delayed(&mut self) {
        let step = self.step;
        let (now, later): (Vec<_>, Vec<_>) =
            self.delayed.drain(..).partition(|f| f.ready_at <= step);
        self.delayed = later;
        self.ready.extend(now);
    }

    /// Performs one random transition. Returns false at quiescence.
    pub fn step_random(&mut self) -> bool {
        self.mature_delayed();
        let timers: Vec<ProcessId> = (0..self.config.n)
            .filter(|&p| !self.crashed(p) && self.procs[p].timer_armed())
            .collect();
        if self.ready.is_empty() && timers.is_empty() {
            if self.delayed.is_empty() {
                return false;
            }
            self.step += 1;
            return true;
        }
        let pick_timer = !timers.is_empty()
            && (self.ready.is_empty() || self.rng.gen_bool(self.config.timeout_prob));
        if pick_timer {
            let p = timers[self.rng.gen_range(0..timers.len())];
            self.fire_timeout(p);
        } else {
            let i = self.rng.gen_range(0..self.ready.len());
            let flight = self.ready.swap_remove(i);
            self.deliver(flight);
        }
        self.step += 1;
        true
    }

    fn take_matching(&mut self, filter: &MessageFilter) -> Option<InFlight<M>> {
        let i = self
            .ready
            .iter()
            .position(|f| filter.matches(f.msg.author, f.to, &f.summary))?;
        Some(self.ready.remove(i))
    }

    fn step_scripted(&mut self, index: usize, sel: &Selector) -> Result<(), SimError> {
        match sel {
            Selector::Timeout(p) if *p < self.config.n => self.fire_timeout(*p),
            Selector::Timeout(p) => {
                return Err(SimError::Schedule {
                    index,
                    reason: format!("no process {p}"),
                })
            }
            Selector::Deliver(filter) => {
                let flight = self
                    .take_matching(filter)
                    .ok_or_else(|| SimError::Schedule {
                        index,
                        reason: format!("no pending message matches `{filter}`"),
                    })?;
                self.deliver(flight);
            }
            Selector::Drop(filter) => {
                let flight = self
                    .take_matching(filter)
                    .ok_or_else(|| SimError::Schedule {
                        index,
                        reason: format!("no pending message matches `{filter}`"),
                    })?;
                self.push(
                    flight.msg.author,
                    EventKind::Drop {
                        to: flight.to,
                        id: flight.msg.id,
                        msg: flight.summary,
                    },
                );
            }
        }
        self.step += 1;
        Ok(())
    }

    pub fn run(mut self) -> Result<Trace, SimError> {
        if let Some(schedule) = self.config.schedule.clone() {
            for (i, sel) in schedule.iter().enumerate() {
                self.step_scripted(i, sel)?;
            }
        } else {
            while self.step < self.config.max_steps {
                if !self.step_random() {
                    return Ok(self.finish(true));
                }
            }
        }
        Ok(self.finish(false))
    }

    fn finish(self, quiescent: bool) -> Trace {
        let header = TraceHeader {
            protocol: self.config.protocol,
            n: self.config.n,
            f: self.config.f,
            seed: self.config.seed,
            byzantine: self
                .config
                .faults
                .byzantine
                .iter()
                .copied()
                .collect::<BTreeSet<_>>(),
            client_values: self.config.client_values.clone(),
        };
        Trace {
            header,
            events: self.events,
            quiescent_at: quiescent.then_some(self.step),
        }
    }
}
