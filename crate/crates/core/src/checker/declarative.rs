use std::collections::{BTreeMap, BTreeSet};

use super::{CheckError, Rule, Verdict};
use crate::label::{Label, Op};
use crate::round::{Round, Value};
use crate::tree::{Mode, Outcome};

struct AddRecord<'a> {
    value: &'a Value,
    parent: Round,
}

/// Checks the ordering properties over successful labels of one instance.
///
/// Labels are scanned in order and the first index whose prefix breaks a
/// property is reported. A commit and a later add that together forbid the
/// commit are flagged at whichever label completes the triple.
pub fn check_declarative(seq: &[Label], mode: Mode) -> Result<Verdict, CheckError> {
    validate(seq)?;
    let mut adds: BTreeMap<Round, AddRecord<'_>> = BTreeMap::new();
    let mut commits: BTreeSet<Round> = BTreeSet::new();

    for (index, label) in seq.iter().enumerate() {
        let reject = |rule| Ok(Verdict::Reject { rule, index });
        match &label.op {
            Op::Add {
                round,
                value,
                parent,
            } => {
                if adds.contains_key(round) {
                    return reject(Rule::DupAdd);
                }
                if !parent.is_zero() {
                    let Some(prior) = adds.get(parent).filter(|_| parent < round) else {
                        return reject(Rule::MissingParent);
                    };
                    if mode == Mode::SingleDecree && prior.value != value {
                        return reject(Rule::ValueMismatch);
                    }
                }
                // Does this add skip over an already committed round?
                if commits.iter().any(|c| parent < c && c < round) {
                    return reject(Rule::Conflict);
                }
                adds.insert(
                    *round,
                    AddRecord {
                        value,
                        parent: *parent,
                    },
                );
            }
            Op::Commit { round } => {
                if commits.contains(round) {
                    return reject(Rule::DupCommit);
                }
                if !adds.contains_key(round) {
                    return reject(Rule::MissingAdd);
                }
                if adds
                    .iter()
                    .any(|(higher, rec)| rec.parent < *round && round < higher)
                {
                    return reject(Rule::Conflict);
                }
                commits.insert(*round);
            }
        }
    }
    Ok(Verdict::Accept)
}

fn validate(seq: &[Label]) -> Result<(), CheckError> {
    let Some(first) = seq.first() else {
        return Ok(());
    };
    let form = first.op.round().form();
    for (index, label) in seq.iter().enumerate() {
        if label.result != Outcome::Ok {
            return Err(CheckError::NotSuccessful(index));
        }
        if label.sn != first.sn {
            return Err(CheckError::MixedInstances {
                index,
                expected: first.sn,
                found: label.sn,
            });
        }
        let forms_ok = match &label.op {
            Op::Add { round, parent, .. } => round.form() == form && parent.form() == form,
            Op::Commit { round } => round.form() == form,
        };
        if !forms_ok {
            return Err(CheckError::MixedRoundForms(index));
        }
    }
    Ok(())
}
