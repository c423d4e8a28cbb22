use super::{Rule, Verdict};
use crate::label::{Label, Op};
use crate::round::RoundForm;
use crate::tree::{Forest, Mode};

/// Replays labels on a fresh forest and returns the first divergence between
/// recorded and actual outcomes, along with the final state.
///
/// The round form is taken from the first label; an empty sequence uses the
/// integer form.
pub fn replay_forest(seq: &[Label], mode: Mode) -> (Verdict, Forest) {
    let form = seq.first().map_or(RoundForm::Nat, |l| l.op.round().form());
    let mut forest = Forest::new(mode, form);
    for (index, label) in seq.iter().enumerate() {
        let actual = match &label.op {
            Op::Add {
                round,
                value,
                parent,
            } => forest.add(label.sn, *round, value.clone(), *parent),
            Op::Commit { round } => forest.commit(label.sn, *round),
        };
        if actual != label.result {
            return (
                Verdict::Reject {
                    rule: Rule::ReplayMismatch,
                    index,
                },
                forest,
            );
        }
    }
    (Verdict::Accept, forest)
}

pub fn replay(seq: &[Label], mode: Mode) -> Verdict {
    replay_forest(seq, mode).0
}
