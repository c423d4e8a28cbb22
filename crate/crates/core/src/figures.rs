//! The three worked examples, replayed and compared against checked-in
//! goldens: a QTree walkthrough, a Paxos schedule and a PBFT schedule that
//! both produce `add(1,v1,0), add(3,v2,0), add(2,v1,1), commit(3)`.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::label::Label;
use crate::round::{Round, RoundForm, Value};
use crate::sim::{parse_schedule, Protocol, SimConfig, SimError};
use crate::tree::{Mode, QTree};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    /// add and commit on a bare QTree.
    Fig2,
    /// Single-decree Paxos, three processes.
    Fig3,
    /// PBFT instance 1, four processes.
    Fig4,
}

#[derive(Debug, Error)]
pub enum FigureError {
    #[error("unknown figure `{0}` (expected fig2, fig3 or fig4)")]
    Unknown(String),
    #[error("figure schedule: {0}")]
    Schedule(String),
    #[error(transparent)]
    Sim(#[from] SimError),
}

impl FromStr for Figure {
    type Err = FigureError;

    fn from_str(s: &str) -> Result<Figure, FigureError> {
        match s {
            "fig2" => Ok(Figure::Fig2),
            "fig3" => Ok(Figure::Fig3),
            "fig4" => Ok(Figure::Fig4),
            other => Err(FigureError::Unknown(other.to_string())),
        }
    }
}

impl fmt::Display for Figure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Figure::Fig2 => "fig2",
            Figure::Fig3 => "fig3",
            Figure::Fig4 => "fig4",
        })
    }
}

fn value(s: &str) -> Value {
    Value::new(s).expect("figure values are well-formed")
}

impl Figure {
    pub const ALL: [Figure; 3] = [Figure::Fig2, Figure::Fig3, Figure::Fig4];

    pub fn golden(self) -> &'static str {
        match self {
            Figure::Fig2 => include_str!("../goldens/fig2.golden"),
            Figure::Fig3 => include_str!("../goldens/fig3.golden"),
            Figure::Fig4 => include_str!("../goldens/fig4.golden"),
        }
    }

    pub fn schedule(self) -> Option<&'static str> {
        match self {
            Figure::Fig2 => None,
            Figure::Fig3 => Some(include_str!("../goldens/fig3.sched")),
            Figure::Fig4 => Some(include_str!("../goldens/fig4.sched")),
        }
    }

    /// The scripted simulation behind a protocol figure.
    pub fn config(self) -> Result<Option<SimConfig>, FigureError> {
        let Some(text) = self.schedule() else {
            return Ok(None);
        };
        let schedule = parse_schedule(text).map_err(|e| FigureError::Schedule(e.to_string()))?;
        let mut config = match self {
            Figure::Fig3 => {
                let mut c = SimConfig::new(Protocol::Paxos, 1);
                c.client_values = vec![value("v1"), value("v3"), value("v2")];
                c
            }
            _ => {
                let mut c = SimConfig::new(Protocol::Pbft, 1);
                c.client_values = vec![value("v2"), value("v1"), value("v3")];
                c.sns = 1;
                c.first_sn = 1;
                c
            }
        };
        config.schedule = Some(schedule);
        Ok(Some(config))
    }

    /// Replays the figure and renders what its golden records: the final tree
    /// and trunk for the walkthrough, the linpoints of the traced instance
    /// for the protocol figures.
    pub fn render(self) -> Result<String, FigureError> {
        let Some(config) = self.config()? else {
            return Ok(walkthrough());
        };
        let sn = config.first_sn;
        let trace = crate::protocols::run(&config)?;
        let lines: Vec<String> = trace
            .linpoints()
            .filter(|l| l.sn == sn)
            .map(|l| format!("{l}\n"))
            .collect();
        Ok(lines.concat())
    }
}

fn walkthrough() -> String {
    let mut tree = QTree::new(Mode::SingleDecree, RoundForm::Nat);
    let ops = [
        Label::add(0, Round::Nat(1), value("v1"), Round::Nat(0)),
        Label::add(0, Round::Nat(3), value("v2"), Round::Nat(0)),
        Label::add(0, Round::Nat(2), value("v1"), Round::Nat(1)),
    ];
    for label in ops.into_iter().flatten() {
        if let crate::label::Op::Add {
            round,
            value,
            parent,
        } = label.op
        {
            tree.add(round, value, parent);
        }
    }
    tree.commit(Round::Nat(3));
    let trunk: Vec<String> = tree.trunk().iter().map(ToString::to_string).collect();
    format!("{}trunk=[{}]\n", tree.snapshot(), trunk.join(","))
}
