//! Line-oriented corpus files.
//!
//! One record per line, tab-separated:
//! `variant  text  scene  A=v1;B=v2;C=v3;D=v4  gt  description  steps`
//! where token fields are space-separated token names.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::encode::{decode_scene, encode_scene, split_embedded, unjitter};
use super::{
    generate_scene, render_variant, synthesize_question, ChoiceLabel, PipelineInput,
    ProblemInstance, StatementList, Variant,
};
use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::vocab::{TokenSequence, Vocabulary};

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct CorpusRecord {
    pub variant: Variant,
    pub input: PipelineInput,
    pub choices: [u32; 4],
    pub gt: ChoiceLabel,
    pub description: TokenSequence,
    pub steps: TokenSequence,
}

impl CorpusRecord {
    pub fn from_problem(problem: &ProblemInstance, variant: Variant) -> CorpusRecord {
        let vocab = Vocabulary::standard();
        CorpusRecord {
            variant,
            input: render_variant(problem, variant),
            choices: problem.choices,
            gt: problem.gt_choice,
            description: problem.description().tokens(vocab),
            steps: problem.solution_steps.tokens(vocab),
        }
    }

    pub fn to_line(&self) -> String {
        let v = Vocabulary::standard();
        let choices = ChoiceLabel::ALL
            .iter()
            .map(|c| format!("{}={}", c.letter(), self.choices[c.index()]))
            .collect::<Vec<_>>()
            .join(";");
        [
            self.variant.name().to_string(),
            v.decode(&self.input.text_channel),
            v.decode(&self.input.scene_channel),
            choices,
            self.gt.letter().to_string(),
            v.decode(&self.description),
            v.decode(&self.steps),
        ]
        .join("\t")
    }

    /// Parses one line; `line` is the 1-based line number used in errors.
    pub fn parse_line(text: &str, line: usize) -> Result<CorpusRecord> {
        let v = Vocabulary::standard();
        let err = |reason: String| Error::Corpus { line, reason };
        let fields: Vec<&str> = text.split('\t').collect();
        if fields.len() != 7 {
            return Err(err(format!("expected 7 fields, found {}", fields.len())));
        }
        let toks = |s: &str| v.encode(s).map_err(|e| err(e.to_string()));
        let variant: Variant = fields[0].parse().map_err(|e: Error| err(e.to_string()))?;
        let mut choices = [0u32; 4];
        let parts: Vec<&str> = fields[3].split(';').collect();
        if parts.len() != 4 {
            return Err(err("expected four choices".into()));
        }
        for (i, part) in parts.iter().enumerate() {
            let (label, value) = part
                .split_once('=')
                .ok_or_else(|| err(format!("bad choice {part:?}")))?;
            if ChoiceLabel::from_letter(label) != ChoiceLabel::from_index(i) {
                return Err(err(format!("choice {i} labelled {label:?}")));
            }
            choices[i] = value
                .parse()
                .map_err(|_| err(format!("bad choice value {value:?}")))?;
        }
        let gt = ChoiceLabel::from_letter(fields[4])
            .ok_or_else(|| err(format!("bad label {:?}", fields[4])))?;
        Ok(CorpusRecord {
            variant,
            input: PipelineInput {
                text_channel: toks(fields[1])?,
                scene_channel: toks(fields[2])?,
            },
            choices,
            gt,
            description: toks(fields[5])?,
            steps: toks(fields[6])?,
        })
    }

    /// The question tokens, wherever this rendition carries them.
    pub fn question(&self) -> TokenSequence {
        let v = Vocabulary::standard();
        let find = v.get("find");
        let from = |seq: &[crate::vocab::Token]| -> Option<TokenSequence> {
            let i = seq.iter().position(|&t| t == find)?;
            Some(seq[i..(i + 4).min(seq.len())].to_vec())
        };
        from(&self.input.text_channel)
            .or_else(|| split_embedded(&self.input.scene_channel).1.and_then(from))
            .unwrap_or_default()
    }

    /// Tokens drawn into the scene channel between text markers.
    pub fn embedded_text(&self) -> Option<TokenSequence> {
        split_embedded(&self.input.scene_channel)
            .1
            .map(<[_]>::to_vec)
    }

    /// This record's scene channel as another variant would draw it.
    pub fn scene_as(&self, variant: Variant) -> Result<TokenSequence> {
        let mut scene = decode_scene(&self.input.scene_channel)?;
        if self.variant == Variant::VisionIntensive {
            scene.points.iter_mut().for_each(|p| *p = unjitter(*p));
        }
        let embedded = match variant {
            Variant::VisionOnly => [self.question(), self.choice_tokens()].concat(),
            Variant::VisionDominant => self.question(),
            _ => vec![],
        };
        Ok(encode_scene(&scene, variant, &embedded))
    }

    pub fn choice_tokens(&self) -> TokenSequence {
        super::question::choice_tokens(Vocabulary::standard(), &self.choices)
    }

    pub fn statements(&self) -> Result<StatementList> {
        StatementList::parse_tokens(Vocabulary::standard(), &self.description)
    }
}

/// Problem `index` of a corpus seeded by `seed`. Complexity cycles through
/// `min_complexity..=max_complexity` by index.
pub fn generate_problem(
    seed: u64,
    index: u64,
    min_complexity: u32,
    max_complexity: u32,
) -> Result<ProblemInstance> {
    if !(1..=3).contains(&min_complexity) || !(min_complexity..=3).contains(&max_complexity) {
        return Err(Error::Argument(format!(
            "complexity range {min_complexity}..={max_complexity}"
        )));
    }
    let span = u64::from(max_complexity - min_complexity + 1);
    let complexity = min_complexity + (index % span) as u32;
    let scene = generate_scene(derive_seed(seed, &[0x5ce, index]), complexity)?;
    synthesize_question(&scene, derive_seed(seed, &[0x9e5, index]))
}

/// Training records are problems `0..n_train`, one variant each in rotation;
/// held-out records are the next `n_heldout` problems in all five variants.
pub fn build_splits(
    seed: u64,
    n_train: usize,
    n_heldout: usize,
    min_complexity: u32,
    max_complexity: u32,
) -> Result<(Vec<CorpusRecord>, Vec<CorpusRecord>)> {
    let train = rotating_records(seed, 0..n_train, min_complexity, max_complexity)?;
    let mut heldout = Vec::with_capacity(n_heldout * Variant::ALL.len());
    for i in n_train..n_train + n_heldout {
        let p = generate_problem(seed, i as u64, min_complexity, max_complexity)?;
        heldout.extend(
            Variant::ALL
                .iter()
                .map(|&v| CorpusRecord::from_problem(&p, v)),
        );
    }
    Ok((train, heldout))
}

/// Problems in `indices`, each rendered as one variant in rotation.
pub fn rotating_records(
    seed: u64,
    indices: std::ops::Range<usize>,
    min_complexity: u32,
    max_complexity: u32,
) -> Result<Vec<CorpusRecord>> {
    indices
        .map(|i| {
            let p = generate_problem(seed, i as u64, min_complexity, max_complexity)?;
            Ok(CorpusRecord::from_problem(
                &p,
                Variant::ALL[i % Variant::ALL.len()],
            ))
        })
        .collect()
}

pub fn write_corpus(path: &Path, records: &[CorpusRecord]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut buf = String::new();
    for r in records {
        buf.push_str(&r.to_line());
        buf.push('\n');
    }
    f.write_all(buf.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_corpus(path: &Path) -> Result<Vec<CorpusRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| CorpusRecord::parse_line(l, i + 1))
        .collect()
}
