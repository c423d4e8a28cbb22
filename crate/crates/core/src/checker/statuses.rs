use std::collections::{BTreeMap, BTreeSet};

use super::{replay, CheckError};
use crate::label::{Label, Op};
use crate::round::{Round, RoundForm};
use crate::tree::{Mode, Status};

/// Recomputes node statuses straight from a correct sequence of successful
/// labels, without running the tree's mutation logic.
///
/// A node is committed if it is the root or its round was committed. Otherwise
/// it is a ghost if some node with a higher round sits on another branch, and
/// added if not.
pub fn statuses_from_labels(
    seq: &[Label],
    mode: Mode,
) -> Result<BTreeMap<Round, Status>, CheckError> {
    let verdict = replay(seq, mode);
    if !verdict.is_accept() {
        return Err(CheckError::Incorrect(verdict));
    }
    let form = seq.first().map_or(RoundForm::Nat, |l| l.op.round().form());
    let root = Round::zero(form);

    let mut parent_of: BTreeMap<Round, Round> = BTreeMap::new();
    let mut committed: BTreeSet<Round> = BTreeSet::new();
    parent_of.insert(root, root);
    for label in seq {
        match &label.op {
            Op::Add { round, parent, .. } => {
                parent_of.insert(*round, *parent);
            }
            Op::Commit { round } => {
                committed.insert(*round);
            }
        }
    }

    let ancestors = |r: Round| -> BTreeSet<Round> {
        let mut seen = BTreeSet::new();
        let mut cursor = r;
        while seen.insert(cursor) && cursor != root {
            cursor = parent_of[&cursor];
        }
        seen
    };
    let lineage: BTreeMap<Round, BTreeSet<Round>> =
        parent_of.keys().map(|r| (*r, ancestors(*r))).collect();
    let on_other_branch =
        |a: Round, b: Round| !lineage[&a].contains(&b) && !lineage[&b].contains(&a);

    Ok(parent_of
        .keys()
        .map(|&r| {
            let status = if r == root || committed.contains(&r) {
                Status::Committed
            } else if parent_of
                .keys()
                .any(|&other| other > r && on_other_branch(r, other))
            {
                Status::Ghost
            } else {
                Status::Added
            };
            (r, status)
        })
        .collect())
}
