use crate::label::Label;
use crate::round::{Round, Value};

/// Bounds for exhaustive enumeration. Rounds range over `1..=max_round`,
/// parents over `0..=max_parent`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnumBounds {
    pub max_len: usize,
    pub max_round: u64,
    pub max_parent: u64,
    pub values: Vec<Value>,
}

impl EnumBounds {
    /// Parents range over `0..max_round`; values are `v1..=vK`.
    pub fn new(max_len: usize, max_round: u64, value_count: usize) -> EnumBounds {
        let values = (1..=value_count)
            .map(|i| Value::new(format!("v{i}")).expect("generated token is valid"))
            .collect();
        EnumBounds {
            max_len,
            max_round,
            max_parent: max_round.saturating_sub(1),
            values,
        }
    }
}

/// Every successful add and commit label within bounds, adds first ordered by
/// round, parent, then value; commits after, by round.
pub fn label_universe(bounds: &EnumBounds) -> Vec<Label> {
    let mut universe = Vec::new();
    for r in 1..=bounds.max_round {
        for rp in 0..=bounds.max_parent {
            for v in &bounds.values {
                universe.push(Label::add(0, r.into(), v.clone(), rp.into()).expect("r > 0"));
            }
        }
    }
    universe.extend((1..=bounds.max_round).map(|r| Label::commit(0, Round::Nat(r))));
    universe
}

/// Number of sequences `Sequences` yields, or `None` on overflow.
pub fn count_sequences(bounds: &EnumBounds) -> Option<u128> {
    let width = label_universe(bounds).len() as u128;
    let mut total: u128 = 0;
    let mut layer: u128 = 1;
    for _ in 0..=bounds.max_len {
        total = total.checked_add(layer)?;
        layer = layer.checked_mul(width)?;
    }
    Some(total)
}

/// All label sequences up to `max_len`, shortest first, then in odometer order
/// over the label universe.
pub struct Sequences {
    universe: Vec<Label>,
    max_len: usize,
    digits: Vec<usize>,
    done: bool,
}

impl Sequences {
    pub fn new(bounds: &EnumBounds) -> Sequences {
        Sequences {
            universe: label_universe(bounds),
            max_len: bounds.max_len,
            digits: Vec::new(),
            done: false,
        }
    }

    fn advance(&mut self) {
        let width = self.universe.len();
        for d in self.digits.iter_mut().rev() {
            *d += 1;
            if *d < width {
                return;
            }
            *d = 0;
        }
        // Every position wrapped: move to the next length.
        if self.digits.len() == self.max_len || width == 0 {
            self.done = true;
        } else {
            self.digits = vec![0; self.digits.len() + 1];
        }
    }
}

impl Iterator for Sequences {
    type Item = Vec<Label>;

    fn next(&mut self) -> Option<Vec<Label>> {
        if self.done {
            return None;
        }
        let seq = self
            .digits
            .iter()
            .map(|&i| self.universe[i].clone())
            .collect();
        self.advance();
        Some(seq)
    }
}
