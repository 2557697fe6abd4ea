//! The five renditions of a problem, from text-heavy to scene-only.

use std::fmt;
use std::str::FromStr;

use super::encode::encode_scene;
use super::ProblemInstance;
use crate::error::Error;
use crate::vocab::{TokenSequence, Vocabulary};

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum Variant {
    TextDominant,
    TextLite,
    VisionIntensive,
    VisionDominant,
    VisionOnly,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::TextDominant,
        Variant::TextLite,
        Variant::VisionIntensive,
        Variant::VisionDominant,
        Variant::VisionOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::TextDominant => "TextDominant",
            Variant::TextLite => "TextLite",
            Variant::VisionIntensive => "VisionIntensive",
            Variant::VisionDominant => "VisionDominant",
            Variant::VisionOnly => "VisionOnly",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// True when the question is drawn into the scene channel.
    pub fn embeds_question(self) -> bool {
        matches!(self, Variant::VisionDominant | Variant::VisionOnly)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Argument(format!("unknown variant {s:?}")))
    }
}

/// The two channels a pipeline run consumes.
#[derive(Clone, PartialEq, Eq, Hash, Debug, Default)]
pub struct PipelineInput {
    pub text_channel: TokenSequence,
    pub scene_channel: TokenSequence,
}

/// Renders one problem as the given variant.
///
/// | variant          | text channel                       | scene channel                 |
/// |------------------|------------------------------------|-------------------------------|
/// | TextDominant     | question, description, choices     | drawing                       |
/// | TextLite         | question, choices                  | drawing                       |
/// | VisionIntensive  | question, choices                  | drawing, jittered coordinates |
/// | VisionDominant   | choices                            | drawing + question            |
/// | VisionOnly       | (empty)                            | drawing + question + choices  |
pub fn render_variant(problem: &ProblemInstance, variant: Variant) -> PipelineInput {
    let vocab = Vocabulary::standard();
    let question = problem.question.clone();
    let choices = problem.choice_tokens(vocab);
    let description = problem.description().tokens(vocab);
    let (text_channel, embedded): (TokenSequence, TokenSequence) = match variant {
        Variant::TextDominant => ([question, description, choices].concat(), vec![]),
        Variant::TextLite | Variant::VisionIntensive => ([question, choices].concat(), vec![]),
        Variant::VisionDominant => (choices, question),
        Variant::VisionOnly => (vec![], [question, choices].concat()),
    };
    PipelineInput {
        text_channel,
        scene_channel: encode_scene(&problem.scene, variant, &embedded),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{generate_scene, synthesize_question};

    #[test]
    fn text_channel_shrinks_monotonically() {
        for seed in 0..30 {
            let p =
                synthesize_question(&generate_scene(seed, 1 + (seed % 3) as u32).unwrap(), seed)
                    .unwrap();
            let lens: Vec<usize> = Variant::ALL
                .iter()
                .map(|&v| render_variant(&p, v).text_channel.len())
                .collect();
            assert!(lens.windows(2).all(|w| w[0] >= w[1]), "{lens:?}");
            assert_eq!(lens[4], 0);
        }
    }

    #[test]
    fn names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!("Sideways".parse::<Variant>().is_err());
    }
}
