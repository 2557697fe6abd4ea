//! The statement grammar used for descriptions and solution steps.
//!
//! ```text
//! tri P Q R          entity      triangle PQR
//! quad P Q R S       entity      quadrilateral PQRS
//! straight A B C D   incidence   A-B-C is a straight line, ray BD
//! iso P Q R          relation    PQ = PR
//! par A B C D        relation    AB ∥ CD, transversal BC
//! angle A B C 40     measure     ∠ABC = 40 (or `x`)
//! ```

use std::fmt;

use super::{AngleRef, AngleValue, Label, Relation, RelationKind};
use crate::error::{Error, Result};
use crate::vocab::{Token, TokenSequence, Vocabulary};

/// One canonical fact. Variant order is the block order of a refined
/// description: entities, incidences, relations, measures.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum Statement {
    Triangle([Label; 3]),
    Quad([Label; 4]),
    Straight([Label; 4]),
    Isosceles([Label; 3]),
    Parallel([Label; 4]),
    Angle(AngleRef, AngleValue),
}

const KEYWORDS: [&str; 6] = ["tri", "quad", "straight", "iso", "par", "angle"];

impl Statement {
    pub fn from_relation(r: &Relation) -> Statement {
        let l = r.labels();
        match r.kind() {
            RelationKind::Triangle => Statement::Triangle([l[0], l[1], l[2]]),
            RelationKind::AngleSumPolygon => Statement::Quad([l[0], l[1], l[2], l[3]]),
            RelationKind::SupplementaryPair => Statement::Straight([l[0], l[1], l[2], l[3]]),
            RelationKind::IsoscelesPair => Statement::Isosceles([l[0], l[1], l[2]]),
            RelationKind::ParallelPair => Statement::Parallel([l[0], l[1], l[2], l[3]]),
        }
    }

    pub fn words(&self) -> Vec<String> {
        let labels = |ls: &[Label]| ls.iter().map(|l| l.to_string()).collect::<Vec<_>>();
        let (kw, mut rest) = match self {
            Statement::Triangle(l) => ("tri", labels(l)),
            Statement::Quad(l) => ("quad", labels(l)),
            Statement::Straight(l) => ("straight", labels(l)),
            Statement::Isosceles(l) => ("iso", labels(l)),
            Statement::Parallel(l) => ("par", labels(l)),
            Statement::Angle(a, v) => {
                let mut w = labels(&a.labels());
                w.push(v.to_string());
                ("angle", w)
            }
        };
        rest.insert(0, kw.to_string());
        rest
    }

    pub fn tokens(&self, vocab: &Vocabulary) -> TokenSequence {
        self.words().iter().map(|w| vocab.get(w)).collect()
    }

    /// Parses one statement from its words; `None` if the words do not form
    /// exactly one well-formed statement.
    pub fn parse_words<S: AsRef<str>>(words: &[S]) -> Option<Statement> {
        let (kw, rest) = words.split_first()?;
        let labels = |ws: &[S], n: usize| -> Option<Vec<Label>> {
            if ws.len() != n {
                return None;
            }
            let ls: Option<Vec<Label>> = ws.iter().map(|w| Label::parse(w.as_ref())).collect();
            let ls = ls?;
            let mut d = ls.clone();
            d.sort();
            d.dedup();
            (d.len() == n).then_some(ls)
        };
        let rel = |kind: RelationKind, n: usize| -> Option<Statement> {
            let ls = labels(rest, n)?;
            Relation::new(kind, &ls)
                .ok()
                .map(|r| Statement::from_relation(&r))
        };
        match kw.as_ref() {
            "tri" => rel(RelationKind::Triangle, 3),
            "quad" => rel(RelationKind::AngleSumPolygon, 4),
            "straight" => rel(RelationKind::SupplementaryPair, 4),
            "iso" => rel(RelationKind::IsoscelesPair, 3),
            "par" => rel(RelationKind::ParallelPair, 4),
            "angle" => {
                if rest.len() != 4 {
                    return None;
                }
                let ls = labels(&rest[..3], 3)?;
                let value = match rest[3].as_ref() {
                    "x" => AngleValue::Unknown,
                    s => AngleValue::Known(s.parse().ok().filter(|v: &u32| (1..180).contains(v))?),
                };
                Some(Statement::Angle(AngleRef::new(ls[0], ls[1], ls[2]), value))
            }
            _ => None,
        }
    }

    pub fn parse(text: &str) -> Option<Statement> {
        let words: Vec<&str> = text.split_whitespace().collect();
        Statement::parse_words(&words)
    }

    /// The statement with its measured value stripped; two statements about
    /// the same subject share a key.
    pub fn subject(&self) -> Statement {
        match *self {
            Statement::Angle(a, _) => Statement::Angle(a, AngleValue::Unknown),
            s => s,
        }
    }
}

impl fmt::Display for Statement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.words().join(" "))
    }
}

/// Ordered list of statements.
#[derive(Clone, PartialEq, Eq, Hash, Debug, Default)]
pub struct StatementList(pub Vec<Statement>);

impl StatementList {
    /// Parses textual statements, reporting the first malformed index.
    pub fn parse<S: AsRef<str>>(lines: &[S]) -> Result<StatementList> {
        lines
            .iter()
            .enumerate()
            .map(|(index, s)| {
                Statement::parse(s.as_ref()).ok_or_else(|| Error::MalformedStatement {
                    index,
                    text: s.as_ref().to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()
            .map(StatementList)
    }

    /// Splits a token stream into statements at keyword boundaries, keeping
    /// only the chunks that parse. Used for model-generated descriptions.
    pub fn parse_tokens_lenient(vocab: &Vocabulary, tokens: &[Token]) -> StatementList {
        let mut out = Vec::new();
        let mut chunk: Vec<&str> = Vec::new();
        let flush = |chunk: &mut Vec<&str>, out: &mut Vec<Statement>| {
            if let Some(s) = Statement::parse_words(chunk) {
                out.push(s);
            }
            chunk.clear();
        };
        for &t in tokens {
            let w = vocab.name(t);
            if KEYWORDS.contains(&w) {
                flush(&mut chunk, &mut out);
            }
            chunk.push(w);
        }
        flush(&mut chunk, &mut out);
        StatementList(out)
    }

    /// Strict token parse: every keyword-delimited chunk must be a statement.
    pub fn parse_tokens(vocab: &Vocabulary, tokens: &[Token]) -> Result<StatementList> {
        let text = vocab.decode(tokens);
        let mut lines: Vec<Vec<&str>> = Vec::new();
        for w in text.split_whitespace() {
            if KEYWORDS.contains(&w) || lines.is_empty() {
                lines.push(Vec::new());
            }
            lines.last_mut().expect("pushed above").push(w);
        }
        let lines: Vec<String> = lines.into_iter().map(|l| l.join(" ")).collect();
        StatementList::parse(&lines)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Statement> {
        self.0.iter()
    }

    pub fn tokens(&self, vocab: &Vocabulary) -> TokenSequence {
        self.0.iter().flat_map(|s| s.tokens(vocab)).collect()
    }

    /// Deduplicated and canonically ordered; see [`refine_description`].
    pub fn refined(self) -> StatementList {
        refine(self)
    }

    pub fn lines(&self) -> Vec<String> {
        self.0.iter().map(|s| s.to_string()).collect()
    }
}

/// Deterministic description refinement: drops duplicates and sorts into
/// canonical block order. Fails on the first unparseable line.
pub fn refine_description<S: AsRef<str>>(statements: &[S]) -> Result<StatementList> {
    let parsed = StatementList::parse(statements)?;
    Ok(refine(parsed))
}

pub(crate) fn refine(mut list: StatementList) -> StatementList {
    list.0.sort();
    list.0.dedup();
    list
}
