//! QTree: a sequential tree abstraction of consensus, deterministic simulators
//! for five consensus protocols, and checkers that map simulated runs onto the
//! tree through linearization points.

pub mod checker;
pub mod figures;
pub mod harness;
pub mod label;
pub mod protocols;
pub mod round;
pub mod sim;
pub mod tree;

pub use label::{Label, Op};
pub use round::{Round, RoundForm, Value};
pub use tree::{Forest, Mode, Node, Outcome, QTree, Status};
