//! Procedural geometry problems: scenes, descriptions, questions, the
//! scene-channel encoding and the five variant renditions.
//!
//! A [`SceneGraph`] is the ground truth behind every problem. Its facts are
//! the relations (triangle, straight line, isosceles, parallel, quadrilateral)
//! plus the angle measures, exactly one of which is the unknown `x`.

mod corpus;
mod encode;
mod generate;
mod question;
mod solver;
mod statement;
mod variant;

pub use corpus::{
    build_splits, generate_problem, read_corpus, rotating_records, write_corpus, CorpusRecord,
};
pub use encode::{decode_scene, encode_scene, DrawCommand};
pub use generate::{generate_scene, verbose_description, MAX_GENERATION_ATTEMPTS};
pub use question::{synthesize_question, ChoiceLabel, ProblemInstance};
pub use solver::{derive, propagate, solve_ground_truth, Derivation, Equation};
pub use statement::{refine_description, Statement, StatementList};
pub use variant::{render_variant, PipelineInput, Variant};

use std::fmt;

use crate::error::{Error, Result};
use crate::vocab::{ANGLE_STEP, POINT_LABELS};

/// Smallest and largest admissible known angle, in degrees.
pub const MIN_ANGLE: u32 = 10;
pub const MAX_ANGLE: u32 = 170;

/// Single-letter point label.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Label(u8);

impl Label {
    pub fn new(c: char) -> Result<Self> {
        if POINT_LABELS.contains(c) {
            Ok(Label(c as u8))
        } else {
            Err(Error::Argument(format!("{c:?} is not a point label")))
        }
    }

    pub(crate) fn nth(i: usize) -> Label {
        Label(POINT_LABELS.as_bytes()[i])
    }

    pub fn as_char(self) -> char {
        self.0 as char
    }

    pub fn ordinal(self) -> usize {
        POINT_LABELS.find(self.as_char()).expect("valid label")
    }

    pub(crate) fn parse(s: &str) -> Option<Label> {
        let mut chars = s.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => Label::new(c).ok(),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

impl fmt::Debug for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

/// An angle identified by its vertex and unordered arm endpoints.
///
/// Field order makes the derived ordering match the written name `arm vertex arm`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AngleRef {
    first: Label,
    vertex: Label,
    second: Label,
}

impl AngleRef {
    pub fn new(arm_a: Label, vertex: Label, arm_b: Label) -> Self {
        let (first, second) = if arm_a <= arm_b {
            (arm_a, arm_b)
        } else {
            (arm_b, arm_a)
        };
        AngleRef {
            first,
            vertex,
            second,
        }
    }

    pub fn vertex(&self) -> Label {
        self.vertex
    }

    pub fn arms(&self) -> [Label; 2] {
        [self.first, self.second]
    }

    /// Labels in written order: arm, vertex, arm.
    pub fn labels(&self) -> [Label; 3] {
        [self.first, self.vertex, self.second]
    }
}

impl fmt::Debug for AngleRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "∠{}{}{}", self.first, self.vertex, self.second)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum AngleValue {
    Known(u32),
    Unknown,
}

impl AngleValue {
    pub fn known(self) -> Option<u32> {
        match self {
            AngleValue::Known(v) => Some(v),
            AngleValue::Unknown => None,
        }
    }
}

impl fmt::Display for AngleValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AngleValue::Known(v) => write!(f, "{v}"),
            AngleValue::Unknown => write!(f, "x"),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct AngleFact {
    pub angle: AngleRef,
    pub value: AngleValue,
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum RelationKind {
    /// Interior angles of triangle PQR sum to 180.
    Triangle,
    /// A, B, C collinear with B between, ray BD: ∠ABD + ∠DBC = 180.
    SupplementaryPair,
    /// Apex P with PQ = PR: ∠PQR = ∠PRQ.
    IsoscelesPair,
    /// AB ∥ CD cut by transversal BC: ∠ABC = ∠BCD.
    ParallelPair,
    /// Interior angles of quadrilateral PQRS sum to 360.
    AngleSumPolygon,
}

impl RelationKind {
    pub fn arity(self) -> usize {
        match self {
            RelationKind::Triangle | RelationKind::IsoscelesPair => 3,
            _ => 4,
        }
    }
}

/// A geometric relation over point labels, stored in canonical label order.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct Relation {
    kind: RelationKind,
    labels: Vec<Label>,
}

impl Relation {
    pub fn new(kind: RelationKind, labels: &[Label]) -> Result<Self> {
        if labels.len() != kind.arity() {
            return Err(Error::Argument(format!(
                "{kind:?} takes {} labels, got {}",
                kind.arity(),
                labels.len()
            )));
        }
        let mut distinct = labels.to_vec();
        distinct.sort();
        distinct.dedup();
        if distinct.len() != labels.len() {
            return Err(Error::Argument(format!(
                "{kind:?} labels repeat: {labels:?}"
            )));
        }
        Ok(Relation {
            kind,
            labels: canonical_labels(kind, labels),
        })
    }

    pub fn kind(&self) -> RelationKind {
        self.kind
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    /// The angle equation this relation imposes.
    pub fn equation(&self) -> Equation {
        let l = &self.labels;
        match self.kind {
            RelationKind::Triangle => Equation::Sum {
                angles: vec![
                    AngleRef::new(l[1], l[0], l[2]),
                    AngleRef::new(l[0], l[1], l[2]),
                    AngleRef::new(l[0], l[2], l[1]),
                ],
                total: 180,
            },
            RelationKind::SupplementaryPair => Equation::Sum {
                angles: vec![
                    AngleRef::new(l[0], l[1], l[3]),
                    AngleRef::new(l[3], l[1], l[2]),
                ],
                total: 180,
            },
            RelationKind::AngleSumPolygon => Equation::Sum {
                angles: (0..4)
                    .map(|i| AngleRef::new(l[(i + 3) % 4], l[i], l[(i + 1) % 4]))
                    .collect(),
                total: 360,
            },
            RelationKind::IsoscelesPair => Equation::Equal(
                AngleRef::new(l[0], l[1], l[2]),
                AngleRef::new(l[0], l[2], l[1]),
            ),
            RelationKind::ParallelPair => Equation::Equal(
                AngleRef::new(l[0], l[1], l[2]),
                AngleRef::new(l[1], l[2], l[3]),
            ),
        }
    }
}

fn canonical_labels(kind: RelationKind, labels: &[Label]) -> Vec<Label> {
    let mut l = labels.to_vec();
    match kind {
        RelationKind::Triangle => l.sort(),
        RelationKind::IsoscelesPair => l[1..].sort(),
        RelationKind::SupplementaryPair => {
            if l[0] > l[2] {
                l.swap(0, 2);
            }
        }
        RelationKind::ParallelPair => {
            let rev: Vec<Label> = l.iter().rev().copied().collect();
            l = l.min(rev);
        }
        RelationKind::AngleSumPolygon => {
            let mut best = l.clone();
            for dir in [false, true] {
                let mut base = l.clone();
                if dir {
                    base.reverse();
                }
                for r in 0..base.len() {
                    let mut cand = base.clone();
                    cand.rotate_left(r);
                    best = best.min(cand);
                }
            }
            l = best;
        }
    }
    l
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct Point {
    pub label: Label,
    pub x: i32,
    pub y: i32,
}

/// Symbolic geometry scene. Vectors are kept sorted so that equal scenes
/// compare equal regardless of construction order.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct SceneGraph {
    pub points: Vec<Point>,
    pub segments: Vec<[Label; 2]>,
    pub angle_facts: Vec<AngleFact>,
    pub relations: Vec<Relation>,
}

impl SceneGraph {
    /// Builds a scene in canonical order. Performs no validation.
    pub fn new(
        mut points: Vec<Point>,
        segments: Vec<[Label; 2]>,
        mut angle_facts: Vec<AngleFact>,
        mut relations: Vec<Relation>,
    ) -> Self {
        points.sort();
        let mut segments: Vec<[Label; 2]> = segments
            .into_iter()
            .map(|[a, b]| if a <= b { [a, b] } else { [b, a] })
            .collect();
        segments.sort();
        segments.dedup();
        angle_facts.sort();
        relations.sort();
        SceneGraph {
            points,
            segments,
            angle_facts,
            relations,
        }
    }

    /// The angle carrying the unknown, if exactly one does.
    pub fn unknown(&self) -> Option<AngleRef> {
        let mut it = self
            .angle_facts
            .iter()
            .filter(|f| f.value == AngleValue::Unknown);
        match (it.next(), it.next()) {
            (Some(f), None) => Some(f.angle),
            _ => None,
        }
    }

    pub fn known_angles(&self) -> Vec<(AngleRef, u32)> {
        self.angle_facts
            .iter()
            .filter_map(|f| f.value.known().map(|v| (f.angle, v)))
            .collect()
    }

    /// Checks the structural invariants; solvability is checked by [`solve_ground_truth`].
    pub fn check_structure(&self) -> Result<()> {
        let declared = |l: Label| self.points.iter().any(|p| p.label == l);
        for w in self.points.windows(2) {
            if w[0].label == w[1].label {
                return Err(Error::Argument(format!(
                    "point {} declared twice",
                    w[0].label
                )));
            }
        }
        let referenced = self
            .segments
            .iter()
            .flatten()
            .chain(
                self.angle_facts
                    .iter()
                    .flat_map(|f| f.angle.labels().to_vec())
                    .collect::<Vec<_>>()
                    .iter(),
            )
            .chain(self.relations.iter().flat_map(|r| r.labels.iter()))
            .copied()
            .collect::<Vec<_>>();
        if let Some(l) = referenced.into_iter().find(|&l| !declared(l)) {
            return Err(Error::Argument(format!(
                "label {l} is not a declared point"
            )));
        }
        if self.unknown().is_none() {
            return Err(Error::Argument(
                "scene must carry exactly one unknown angle".into(),
            ));
        }
        for (a, v) in self.known_angles() {
            if !(MIN_ANGLE..=MAX_ANGLE).contains(&v) {
                return Err(Error::Argument(format!(
                    "{a:?} = {v} outside [{MIN_ANGLE}, {MAX_ANGLE}]"
                )));
            }
        }
        for w in self.angle_facts.windows(2) {
            if w[0].angle == w[1].angle {
                return Err(Error::Argument(format!("{:?} measured twice", w[0].angle)));
            }
        }
        Ok(())
    }

    /// Every fact of the scene as a statement, in canonical order.
    pub fn facts(&self) -> StatementList {
        let mut facts: Vec<Statement> = self
            .relations
            .iter()
            .map(Statement::from_relation)
            .collect();
        facts.extend(
            self.angle_facts
                .iter()
                .map(|f| Statement::Angle(f.angle, f.value)),
        );
        facts.sort();
        StatementList(facts)
    }

    /// Number of composed relations.
    pub fn complexity(&self) -> usize {
        self.relations.len()
    }
}

pub(crate) fn is_angle_step(v: u32) -> bool {
    v.is_multiple_of(ANGLE_STEP)
}
