//! Outcome reward: 1 when the response's final `answer (X)` names the
//! ground-truth choice, else 0.

use crate::geo::ChoiceLabel;
use crate::vocab::{Token, Vocabulary, ANSWER};

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct OutcomeReward {
    pub value: u8,
    pub extracted: Option<ChoiceLabel>,
}

impl OutcomeReward {
    pub fn as_f64(self) -> f64 {
        f64::from(self.value)
    }
}

/// Label of the last `answer` marker immediately followed by a choice label.
pub fn extract_answer(vocab: &Vocabulary, response: &[Token]) -> Option<ChoiceLabel> {
    let marker = vocab.id(ANSWER).ok()?;
    response
        .windows(2)
        .rev()
        .filter(|w| w[0] == marker && vocab.contains(w[1]))
        .find_map(|w| ChoiceLabel::from_token_name(vocab.name(w[1])))
}

pub fn outcome_reward(vocab: &Vocabulary, response: &[Token], gt: ChoiceLabel) -> OutcomeReward {
    let extracted = extract_answer(vocab, response);
    OutcomeReward {
        value: u8::from(extracted == Some(gt)),
        extracted,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn enc(s: &str) -> Vec<Token> {
        Vocabulary::standard().encode(s).unwrap()
    }

    #[test]
    fn last_marker_wins() {
        let v = Vocabulary::standard();
        assert_eq!(
            extract_answer(v, &enc("angle A B C 40 answer (B) <eos>")),
            Some(ChoiceLabel::B)
        );
        assert_eq!(
            extract_answer(v, &enc("answer (A) tri A B C answer (C) <eos>")),
            Some(ChoiceLabel::C)
        );
        assert_eq!(
            extract_answer(v, &enc("answer (D) answer <eos>")),
            Some(ChoiceLabel::D)
        );
        assert_eq!(extract_answer(v, &enc("tri A B C <eos>")), None);
        assert_eq!(extract_answer(v, &[]), None);
    }

    #[test]
    fn reward_values() {
        let v = Vocabulary::standard();
        let r = enc("answer (B) <eos>");
        assert_eq!(outcome_reward(v, &r, ChoiceLabel::B).value, 1);
        assert_eq!(outcome_reward(v, &r, ChoiceLabel::C).value, 0);
        for gt in ChoiceLabel::ALL {
            let none = outcome_reward(v, &enc("x <eos>"), gt);
            assert_eq!((none.value, none.extracted), (0, None));
        }
    }

    proptest! {
        #[test]
        fn suffix_without_new_marker_is_ignored(
            base in proptest::collection::vec(0u16..60, 0..20),
            suffix in proptest::collection::vec(0u16..60, 0..10),
            gt in 0usize..4,
        ) {
            let v = Vocabulary::standard();
            let marker = v.get(ANSWER);
            let base: Vec<Token> = base.into_iter().map(Token).collect();
            let suffix: Vec<Token> = suffix.into_iter().map(Token).filter(|&t| t != marker).collect();
            let gt = ChoiceLabel::from_index(gt).unwrap();
            let before = outcome_reward(v, &base, gt);
            let mut longer = base.clone();
            // keep the boundary from forming a marker+label pair
            if base.last() == Some(&marker) {
                longer.push(v.eos());
            }
            longer.extend(&suffix);
            let after = outcome_reward(v, &longer, gt);
            prop_assert_eq!(before, after);
            prop_assert!(after.value == 0 || after.extracted == Some(gt));
        }
    }
}
