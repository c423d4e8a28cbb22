//! Tree states from the worked examples, written out by hand.

use qtree::checker::{check_declarative, replay, statuses_from_labels, Rule, Verdict};
use qtree::{Forest, Label, Mode, Outcome, QTree, Round, RoundForm, Status, Value};

fn v(s: &str) -> Value {
    Value::new(s).unwrap()
}

fn r(k: u64) -> Round {
    Round::Nat(k)
}

#[test]
fn add_and_commit_walkthrough() {
    let mut t = QTree::new(Mode::SingleDecree, RoundForm::Nat);
    assert_eq!(t.add(r(1), v("v1"), r(0)), Outcome::Ok);
    assert_eq!(t.node(r(1)).unwrap().status, Status::Added);

    assert_eq!(t.add(r(3), v("v2"), r(0)), Outcome::Ok);
    assert_eq!(t.node(r(1)).unwrap().status, Status::Ghost);
    assert_eq!(t.node(r(3)).unwrap().status, Status::Added);
    assert_eq!(t.conflicting(r(1), r(3)), Ok(true));

    assert_eq!(t.add(r(2), v("v1"), r(1)), Outcome::Ok);
    assert_eq!(t.node(r(2)).unwrap().status, Status::Ghost);
    assert_eq!(t.commit(r(1)), Outcome::Fail);

    assert_eq!(t.commit(r(3)), Outcome::Ok);
    assert_eq!(t.commit(r(99)), Outcome::Fail);
    assert_eq!(t.trunk(), vec![r(0), r(3)]);
    assert_eq!(t.decided_value(), Ok(Some(&v("v2"))));
    assert_eq!(
        t.snapshot(),
        "round=0 parent=0 value=- status=COMMITTED\n\
         round=1 parent=0 value=v1 status=GHOST\n\
         round=2 parent=1 value=v1 status=GHOST\n\
         round=3 parent=0 value=v2 status=COMMITTED\n"
    );
}

#[test]
fn node_off_a_ghost_branch_above_the_head_fails_extends_trunk() {
    // Root with children n1 and n3; n2 under n1; n3 committed.
    let mut t = QTree::new(Mode::SingleDecree, RoundForm::Nat);
    t.add(r(1), v("a"), r(0));
    t.add(r(3), v("b"), r(0));
    t.add(r(2), v("a"), r(1));
    t.commit(r(3));
    assert_eq!(t.trunk(), vec![r(0), r(3)]);
    assert_eq!(t.add(r(4), v("a"), r(2)), Outcome::Fail);
    assert_eq!(t.add(r(4), v("b"), r(3)), Outcome::Ok);
}

#[test]
fn relayed_sequence_on_instance_one_behaves_like_a_single_tree() {
    let mut forest = Forest::new(Mode::SingleDecree, RoundForm::Nat);
    assert_eq!(forest.add(1, r(1), v("v1"), r(0)), Outcome::Ok);
    assert_eq!(forest.add(1, r(3), v("v2"), r(0)), Outcome::Ok);
    assert_eq!(forest.add(1, r(2), v("v1"), r(1)), Outcome::Ok);
    assert_eq!(forest.commit(1, r(3)), Outcome::Ok);
    assert_eq!(forest.instance(1).unwrap().trunk(), vec![r(0), r(3)]);
    assert!(forest.instance(0).is_none());
}

#[test]
fn checker_examples() {
    let add = |round, val: &str, parent| Label::add(0, r(round), v(val), r(parent)).unwrap();
    let relayed = [
        add(1, "v1", 0),
        add(3, "v2", 0),
        add(2, "v1", 1),
        Label::commit(0, r(3)),
    ];
    assert_eq!(
        check_declarative(&relayed, Mode::SingleDecree),
        Ok(Verdict::Accept)
    );
    assert_eq!(replay(&relayed, Mode::SingleDecree), Verdict::Accept);
    let statuses = statuses_from_labels(&relayed, Mode::SingleDecree).unwrap();
    assert_eq!(
        statuses.into_iter().collect::<Vec<_>>(),
        vec![
            (r(0), Status::Committed),
            (r(1), Status::Ghost),
            (r(2), Status::Ghost),
            (r(3), Status::Committed)
        ]
    );

    // commit(1) returns FAIL on the tree because round 3 hangs below it.
    let skipped = [add(1, "v", 0), add(3, "w", 0), Label::commit(0, r(1))];
    assert_eq!(
        check_declarative(&skipped, Mode::SingleDecree),
        Ok(Verdict::Reject {
            rule: Rule::Conflict,
            index: 2
        })
    );
    assert_eq!(
        replay(&skipped, Mode::SingleDecree),
        Verdict::Reject {
            rule: Rule::ReplayMismatch,
            index: 2
        }
    );
}
