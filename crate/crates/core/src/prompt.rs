//! How channel contents become policy prompts and targets.
//!
//! Interpreter output: `[readout <sep>] description <eos>`, where the readout
//! repeats any text drawn into the scene. Reasoner prompt: refined
//! description, then `find a v b`, then `(A) v (B) v (C) v (D) v`. Reasoner
//! output: derivation steps, `answer (X)`, `<eos>`.

use crate::geo::{ChoiceLabel, Statement, StatementList};
use crate::vocab::{Token, TokenSequence, Vocabulary, ANSWER, SEP};

fn is_label(vocab: &Vocabulary, t: Token) -> bool {
    let n = vocab.name(t);
    n.len() == 1 && crate::vocab::POINT_LABELS.contains(n)
}

fn is_value(vocab: &Vocabulary, t: Token) -> bool {
    vocab
        .name(t)
        .parse::<u32>()
        .is_ok_and(|v| (1..180).contains(&v))
}

/// First `find a v b` in the tokens.
pub fn parse_question(vocab: &Vocabulary, tokens: &[Token]) -> Option<(usize, TokenSequence)> {
    let find = vocab.get("find");
    tokens
        .windows(4)
        .position(|w| w[0] == find && w[1..].iter().all(|&t| is_label(vocab, t)))
        .map(|i| (i, tokens[i..i + 4].to_vec()))
}

/// Canonical choice block from the first `(X) value` pair of each label.
pub fn parse_choices(vocab: &Vocabulary, tokens: &[Token]) -> TokenSequence {
    let mut out = Vec::new();
    for c in ChoiceLabel::ALL {
        let lt = vocab.get(c.token_name());
        if let Some(w) = tokens
            .windows(2)
            .find(|w| w[0] == lt && is_value(vocab, w[1]))
        {
            out.extend_from_slice(w);
        }
    }
    out
}

/// The parts of a text channel: question, stated facts and choices.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct TextParts {
    pub question: TokenSequence,
    pub description: StatementList,
    pub choices: TokenSequence,
}

pub fn split_text_channel(vocab: &Vocabulary, tokens: &[Token]) -> TextParts {
    let (q_end, question) = match parse_question(vocab, tokens) {
        Some((i, q)) => (i + 4, q),
        None => (0, Vec::new()),
    };
    let first_choice = tokens
        .iter()
        .position(|&t| ChoiceLabel::from_token_name(vocab.name(t)).is_some())
        .unwrap_or(tokens.len());
    let body = if q_end <= first_choice {
        &tokens[q_end..first_choice]
    } else {
        &[][..]
    };
    TextParts {
        question,
        description: StatementList::parse_tokens_lenient(vocab, body),
        choices: parse_choices(vocab, &tokens[first_choice..]),
    }
}

/// What the interpreter wrote, parsed.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct Interpretation {
    pub question: TokenSequence,
    pub choices: TokenSequence,
    pub statements: StatementList,
}

pub fn read_interpretation(vocab: &Vocabulary, output: &[Token]) -> Interpretation {
    let body = output.strip_suffix(&[vocab.eos()]).unwrap_or(output);
    let sep = vocab.get(SEP);
    let (readout, description) = match body.iter().position(|&t| t == sep) {
        Some(i) => (&body[..i], &body[i + 1..]),
        None => (&[][..], body),
    };
    Interpretation {
        question: parse_question(vocab, readout)
            .map(|(_, q)| q)
            .unwrap_or_default(),
        choices: parse_choices(vocab, readout),
        statements: StatementList::parse_tokens_lenient(vocab, description),
    }
}

pub fn reasoner_prompt(
    vocab: &Vocabulary,
    description: &StatementList,
    question: &[Token],
    choices: &[Token],
) -> TokenSequence {
    let mut p = description.tokens(vocab);
    p.extend_from_slice(question);
    p.extend_from_slice(choices);
    p
}

/// Combines the text channel with the interpreter's reading. Facts stated in
/// text take priority over interpreted facts about the same subject; the
/// question and choices come from text when present, else from the readout.
pub fn assemble_reasoner_prompt(
    vocab: &Vocabulary,
    text_channel: &[Token],
    interp: &Interpretation,
) -> TokenSequence {
    let text = split_text_channel(vocab, text_channel);
    let mut facts: Vec<Statement> = text.description.0.clone();
    let stated: Vec<Statement> = facts.iter().map(Statement::subject).collect();
    facts.extend(
        interp
            .statements
            .iter()
            .filter(|s| !stated.contains(&s.subject()))
            .copied(),
    );
    let description = StatementList(facts).refined();
    let question = if text.question.is_empty() {
        &interp.question
    } else {
        &text.question
    };
    let choices = if text.choices.is_empty() {
        &interp.choices
    } else {
        &text.choices
    };
    reasoner_prompt(vocab, &description, question, choices)
}

pub fn interpreter_target(
    vocab: &Vocabulary,
    embedded: Option<&[Token]>,
    description: &[Token],
) -> TokenSequence {
    let mut t = Vec::new();
    if let Some(e) = embedded {
        t.extend_from_slice(e);
        t.push(vocab.get(SEP));
    }
    t.extend_from_slice(description);
    t.push(vocab.eos());
    t
}

pub fn reasoner_target(vocab: &Vocabulary, steps: &[Token], gt: ChoiceLabel) -> TokenSequence {
    let mut t = steps.to_vec();
    t.push(vocab.get(ANSWER));
    t.push(vocab.get(gt.token_name()));
    t.push(vocab.eos());
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    fn enc(s: &str) -> TokenSequence {
        Vocabulary::standard().encode(s).unwrap()
    }

    #[test]
    fn text_channel_parts() {
        let v = Vocabulary::standard();
        let p = split_text_channel(
            v,
            &enc("find A C B tri A B C angle B A C 40 (A) 80 (B) 60 (C) 100 (D) 20"),
        );
        assert_eq!(p.question, enc("find A C B"));
        assert_eq!(
            v.decode(&p.description.tokens(v)),
            "tri A B C angle B A C 40"
        );
        assert_eq!(p.choices, enc("(A) 80 (B) 60 (C) 100 (D) 20"));
        let p = split_text_channel(v, &[]);
        assert!(p.question.is_empty() && p.choices.is_empty() && p.description.is_empty());
    }

    #[test]
    fn readout_and_merge() {
        let v = Vocabulary::standard();
        let out = enc("find A C B (A) 80 (B) 60 (C) 100 (D) 20 <sep> angle B A C 50 tri A B C angle A B C 60 <eos>");
        let i = read_interpretation(v, &out);
        assert_eq!(i.question, enc("find A C B"));
        assert_eq!(i.statements.len(), 3);
        // text says 40 for B A C; it wins
        let prompt = assemble_reasoner_prompt(
            v,
            &enc("find A C B tri A B C angle B A C 40 (A) 80 (B) 60 (C) 100 (D) 20"),
            &i,
        );
        assert_eq!(
            v.decode(&prompt),
            "tri A B C angle A B C 60 angle B A C 40 find A C B (A) 80 (B) 60 (C) 100 (D) 20"
        );
        let prompt = assemble_reasoner_prompt(v, &[], &i);
        assert_eq!(
            v.decode(&prompt),
            "tri A B C angle A B C 60 angle B A C 50 find A C B (A) 80 (B) 60 (C) 100 (D) 20"
        );
    }

    #[test]
    fn targets() {
        let v = Vocabulary::standard();
        let t = interpreter_target(v, Some(&enc("find A C B")), &enc("tri A B C"));
        assert_eq!(v.decode(&t), "find A C B <sep> tri A B C <eos>");
        assert_eq!(
            v.decode(&interpreter_target(v, None, &enc("tri A B C"))),
            "tri A B C <eos>"
        );
        assert_eq!(
            v.decode(&reasoner_target(v, &enc("angle A C B 80"), ChoiceLabel::C)),
            "angle A C B 80 answer (C) <eos>"
        );
    }
}
