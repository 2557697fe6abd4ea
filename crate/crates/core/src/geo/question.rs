//! Multiple-choice questions built backwards from a solved scene.

use std::fmt;

use rand::seq::SliceRandom;

use super::solver::derive;
use super::{SceneGraph, StatementList, Variant};
use crate::error::{Error, Result};
use crate::rng::rng_for;
use crate::vocab::{TokenSequence, Vocabulary, CHOICE_LABELS};

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum ChoiceLabel {
    A,
    B,
    C,
    D,
}

impl ChoiceLabel {
    pub const ALL: [ChoiceLabel; 4] = [
        ChoiceLabel::A,
        ChoiceLabel::B,
        ChoiceLabel::C,
        ChoiceLabel::D,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<ChoiceLabel> {
        ChoiceLabel::ALL.get(i).copied()
    }

    /// Token name, e.g. `(B)`.
    pub fn token_name(self) -> &'static str {
        CHOICE_LABELS[self.index()]
    }

    pub fn from_token_name(s: &str) -> Option<ChoiceLabel> {
        CHOICE_LABELS
            .iter()
            .position(|&c| c == s)
            .and_then(ChoiceLabel::from_index)
    }

    pub fn letter(self) -> char {
        (b'A' + self as u8) as char
    }

    pub fn from_letter(s: &str) -> Option<ChoiceLabel> {
        match s {
            "A" => Some(ChoiceLabel::A),
            "B" => Some(ChoiceLabel::B),
            "C" => Some(ChoiceLabel::C),
            "D" => Some(ChoiceLabel::D),
            _ => None,
        }
    }
}

impl fmt::Display for ChoiceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ProblemInstance {
    pub scene: SceneGraph,
    /// `find` followed by the name of the unknown angle.
    pub question: TokenSequence,
    pub choices: [u32; 4],
    pub gt_choice: ChoiceLabel,
    pub solution_steps: StatementList,
    pub variant: Variant,
}

impl ProblemInstance {
    pub fn answer_value(&self) -> u32 {
        self.choices[self.gt_choice.index()]
    }

    /// `(A) v1 (B) v2 (C) v3 (D) v4`.
    pub fn choice_tokens(&self, vocab: &Vocabulary) -> TokenSequence {
        choice_tokens(vocab, &self.choices)
    }

    pub fn description(&self) -> StatementList {
        self.scene.facts()
    }
}

pub(crate) fn choice_tokens(vocab: &Vocabulary, choices: &[u32; 4]) -> TokenSequence {
    ChoiceLabel::ALL
        .iter()
        .flat_map(|c| {
            [
                vocab.get(c.token_name()),
                vocab.get(&choices[c.index()].to_string()),
            ]
        })
        .collect()
}

const MAX_DISTRACTOR_ROUNDS: usize = 8;

fn distractor_pool(x: u32, siblings: &[u32], offset: u32) -> Vec<u32> {
    let mut pool: Vec<u32> = Vec::new();
    let candidates = [180u32.saturating_sub(x), x.abs_diff(offset), x + offset]
        .into_iter()
        .chain(siblings.iter().copied());
    for v in candidates {
        if (1..=179).contains(&v)
            && v != x
            && !pool.contains(&v)
            && v < 180
            && super::is_angle_step(v)
        {
            pool.push(v);
        }
    }
    pool
}

/// Builds a four-choice question asking for the scene's unknown.
pub fn synthesize_question(scene: &SceneGraph, seed: u64) -> Result<ProblemInstance> {
    let vocab = Vocabulary::standard();
    let derivation = derive(scene)?;
    let x = derivation.value;
    let target = scene.unknown().expect("derive succeeded");
    let siblings: Vec<u32> = scene.known_angles().iter().map(|&(_, v)| v).collect();
    let mut rng = rng_for(seed, &[0x9e57]);
    // Offset 20 first, then wider offsets when the pool is too small.
    let offsets = [20u32, 30, 40, 10, 50, 60, 70, 80];
    let mut pool = Vec::new();
    for &offset in offsets.iter().take(MAX_DISTRACTOR_ROUNDS) {
        for v in distractor_pool(x, &siblings, offset) {
            if !pool.contains(&v) {
                pool.push(v);
            }
        }
        if pool.len() >= 3 {
            break;
        }
    }
    if pool.len() < 3 {
        return Err(Error::Synthesis(format!(
            "only {} distractors for x = {x}",
            pool.len()
        )));
    }
    pool.shuffle(&mut rng);
    let mut values = [x, pool[0], pool[1], pool[2]];
    values.shuffle(&mut rng);
    let gt = values.iter().position(|&v| v == x).expect("answer present");
    let mut question = vec![vocab.get("find")];
    question.extend(target.labels().iter().map(|l| vocab.get(&l.to_string())));
    Ok(ProblemInstance {
        scene: scene.clone(),
        question,
        choices: [values[0], values[1], values[2], values[3]],
        gt_choice: ChoiceLabel::from_index(gt).expect("four choices"),
        solution_steps: derivation.statements(),
        variant: Variant::TextDominant,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{
        generate_scene, solve_ground_truth, AngleFact, AngleRef, AngleValue, Label, Point,
        Relation, RelationKind,
    };

    fn triangle_40_60_x() -> SceneGraph {
        let l = |c| Label::new(c).unwrap();
        let points = "ABC"
            .chars()
            .enumerate()
            .map(|(i, c)| Point {
                label: l(c),
                x: i as i32,
                y: 1,
            })
            .collect();
        SceneGraph::new(
            points,
            vec![[l('A'), l('B')], [l('B'), l('C')], [l('A'), l('C')]],
            vec![
                AngleFact {
                    angle: AngleRef::new(l('B'), l('A'), l('C')),
                    value: AngleValue::Known(40),
                },
                AngleFact {
                    angle: AngleRef::new(l('A'), l('B'), l('C')),
                    value: AngleValue::Known(60),
                },
                AngleFact {
                    angle: AngleRef::new(l('A'), l('C'), l('B')),
                    value: AngleValue::Unknown,
                },
            ],
            vec![Relation::new(RelationKind::Triangle, &[l('A'), l('B'), l('C')]).unwrap()],
        )
    }

    #[test]
    fn triangle_question_has_answer_eighty_among_distinct_choices() {
        let p = synthesize_question(&triangle_40_60_x(), 5).unwrap();
        assert_eq!(p.answer_value(), 80);
        let mut c = p.choices.to_vec();
        c.sort();
        c.dedup();
        assert_eq!(c.len(), 4);
        assert_eq!(Vocabulary::standard().decode(&p.question), "find A C B");
    }

    #[test]
    fn label_varies_with_seed_value_does_not() {
        let s = triangle_40_60_x();
        let labels: std::collections::BTreeSet<ChoiceLabel> = (0..40)
            .map(|seed| synthesize_question(&s, seed).unwrap().gt_choice)
            .collect();
        assert!(labels.len() > 1);
        for seed in 0..40 {
            assert_eq!(synthesize_question(&s, seed).unwrap().answer_value(), 80);
        }
    }

    #[test]
    fn final_step_carries_the_answer() {
        for seed in 0..60 {
            let s = generate_scene(seed, 1 + (seed % 3) as u32).unwrap();
            let p = synthesize_question(&s, seed).unwrap();
            let last = p.solution_steps.0.last().unwrap().to_string();
            assert!(last.ends_with(&format!(" {}", p.answer_value())), "{last}");
            assert_eq!(p.answer_value(), solve_ground_truth(&s).unwrap());
            assert!(p.choices.iter().all(|&v| (1..=179).contains(&v)));
        }
    }
}
