//! The scene channel: low-level drawing commands standing in for an image.
//!
//! ```text
//! POINT A 3 4        point with grid coordinates
//! SEG A B            segment
//! POLY A B C [D]     filled polygon (triangle / quadrilateral)
//! LINE A B C D       straight line A-B-C with ray B-D
//! TICK A B C         equal-length ticks on AB and AC
//! ARROW A B C D      parallel arrows on AB and CD
//! ANGLE A B C 40     angle arc at B, labelled with a value or x
//! ```
//!
//! Commands are ordered by a content hash, which is stable but carries no
//! semantic order.

use super::{
    AngleFact, AngleRef, AngleValue, Label, Point, Relation, RelationKind, SceneGraph, Variant,
};
use crate::error::{Error, Result};
use crate::rng::fnv1a;
use crate::vocab::{Token, TokenSequence, Vocabulary, GRID, TEXT_BEGIN, TEXT_END};

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum DrawCommand {
    Point(Label, i32, i32),
    Seg(Label, Label),
    Poly(Vec<Label>),
    Line([Label; 4]),
    Tick([Label; 3]),
    Arrow([Label; 4]),
    Angle(AngleRef, AngleValue),
}

impl DrawCommand {
    fn words(&self) -> Vec<String> {
        let ls = |l: &[Label]| l.iter().map(|l| l.to_string()).collect::<Vec<_>>();
        let mut w = match self {
            DrawCommand::Point(l, x, y) => {
                vec!["POINT".into(), l.to_string(), x.to_string(), y.to_string()]
            }
            DrawCommand::Seg(a, b) => vec!["SEG".into(), a.to_string(), b.to_string()],
            DrawCommand::Poly(l) => [vec!["POLY".to_string()], ls(l)].concat(),
            DrawCommand::Line(l) => [vec!["LINE".to_string()], ls(l)].concat(),
            DrawCommand::Tick(l) => [vec!["TICK".to_string()], ls(l)].concat(),
            DrawCommand::Arrow(l) => [vec!["ARROW".to_string()], ls(l)].concat(),
            DrawCommand::Angle(a, _) => [vec!["ANGLE".to_string()], ls(&a.labels())].concat(),
        };
        if let DrawCommand::Angle(_, v) = self {
            w.push(v.to_string());
        }
        w
    }

    fn from_relation(r: &Relation) -> DrawCommand {
        let l = r.labels();
        match r.kind() {
            RelationKind::Triangle | RelationKind::AngleSumPolygon => DrawCommand::Poly(l.to_vec()),
            RelationKind::SupplementaryPair => DrawCommand::Line([l[0], l[1], l[2], l[3]]),
            RelationKind::IsoscelesPair => DrawCommand::Tick([l[0], l[1], l[2]]),
            RelationKind::ParallelPair => DrawCommand::Arrow([l[0], l[1], l[2], l[3]]),
        }
    }
}

/// Deterministic coordinate jitter for the vision-intensive rendition.
pub(crate) fn jitter(p: Point) -> Point {
    let k = p.label.ordinal() as i32;
    Point {
        label: p.label,
        x: (p.x + 1 + k % 3).rem_euclid(GRID),
        y: (p.y + 2 + k % 2).rem_euclid(GRID),
    }
}

pub(crate) fn unjitter(p: Point) -> Point {
    let k = p.label.ordinal() as i32;
    Point {
        label: p.label,
        x: (p.x - 1 - k % 3).rem_euclid(GRID),
        y: (p.y - 2 - k % 2).rem_euclid(GRID),
    }
}

fn commands(scene: &SceneGraph, jittered: bool) -> Vec<DrawCommand> {
    let mut cmds: Vec<DrawCommand> = scene
        .points
        .iter()
        .map(|&p| if jittered { jitter(p) } else { p })
        .map(|p| DrawCommand::Point(p.label, p.x, p.y))
        .collect();
    cmds.extend(scene.segments.iter().map(|&[a, b]| DrawCommand::Seg(a, b)));
    cmds.extend(scene.relations.iter().map(DrawCommand::from_relation));
    cmds.extend(
        scene
            .angle_facts
            .iter()
            .map(|f| DrawCommand::Angle(f.angle, f.value)),
    );
    let mut keyed: Vec<(u64, String, DrawCommand)> = cmds
        .into_iter()
        .map(|c| {
            let text = c.words().join(" ");
            (fnv1a(text.as_bytes()), text, c)
        })
        .collect();
    keyed.sort_by(|a, b| (a.0, &a.1).cmp(&(b.0, &b.1)));
    keyed.into_iter().map(|(_, _, c)| c).collect()
}

/// Encodes a scene as drawing tokens. For the vision-dominant and
/// vision-only variants `embedded` is appended between text markers;
/// the vision-intensive variant jitters point coordinates.
pub fn encode_scene(scene: &SceneGraph, variant: Variant, embedded: &[Token]) -> TokenSequence {
    let vocab = Vocabulary::standard();
    let mut out: TokenSequence = commands(scene, variant == Variant::VisionIntensive)
        .iter()
        .flat_map(|c| c.words())
        .map(|w| vocab.get(&w))
        .collect();
    if variant.embeds_question() {
        out.push(vocab.get(TEXT_BEGIN));
        out.extend_from_slice(embedded);
        out.push(vocab.get(TEXT_END));
    }
    out
}

/// Splits the scene channel into drawing tokens and the embedded text, if any.
pub(crate) fn split_embedded(tokens: &[Token]) -> (&[Token], Option<&[Token]>) {
    let vocab = Vocabulary::standard();
    let (begin, end) = (vocab.get(TEXT_BEGIN), vocab.get(TEXT_END));
    match tokens.iter().position(|&t| t == begin) {
        Some(i) => {
            let rest = &tokens[i + 1..];
            let j = rest.iter().position(|&t| t == end).unwrap_or(rest.len());
            (&tokens[..i], Some(&rest[..j]))
        }
        None => (tokens, None),
    }
}

/// Reconstructs the scene from drawing tokens (embedded text is ignored).
pub fn decode_scene(tokens: &[Token]) -> Result<SceneGraph> {
    let vocab = Vocabulary::standard();
    let (drawing, _) = split_embedded(tokens);
    let words: Vec<&str> = drawing.iter().map(|&t| vocab.name(t)).collect();
    let bad = |i: usize, why: &str| Error::Argument(format!("drawing token {i}: {why}"));
    let label = |i: usize| -> Result<Label> {
        words
            .get(i)
            .and_then(|w| Label::parse(w))
            .ok_or_else(|| bad(i, "expected a point label"))
    };
    let mut points = Vec::new();
    let mut segments = Vec::new();
    let mut relations = Vec::new();
    let mut facts = Vec::new();
    let is_kw = |w: &str| ["POINT", "SEG", "POLY", "LINE", "TICK", "ARROW", "ANGLE"].contains(&w);
    let mut i = 0;
    while i < words.len() {
        let kw = words[i];
        let mut end = i + 1;
        while end < words.len() && !is_kw(words[end]) {
            end += 1;
        }
        let args = end - i - 1;
        let labels = |n: usize| -> Result<Vec<Label>> {
            if args != n {
                return Err(bad(i, &format!("{kw} takes {n} arguments, got {args}")));
            }
            (i + 1..i + 1 + n).map(label).collect()
        };
        match kw {
            "POINT" => {
                if args != 3 {
                    return Err(bad(i, "POINT takes 3 arguments"));
                }
                let coord = |k: usize| {
                    words[k]
                        .parse::<i32>()
                        .map_err(|_| bad(k, "expected a coordinate"))
                };
                points.push(Point {
                    label: label(i + 1)?,
                    x: coord(i + 2)?,
                    y: coord(i + 3)?,
                });
            }
            "SEG" => {
                let l = labels(2)?;
                segments.push([l[0], l[1]]);
            }
            "POLY" => {
                let kind = if args == 3 {
                    RelationKind::Triangle
                } else {
                    RelationKind::AngleSumPolygon
                };
                relations.push(Relation::new(kind, &labels(args.max(3))?)?);
            }
            "LINE" => relations.push(Relation::new(RelationKind::SupplementaryPair, &labels(4)?)?),
            "TICK" => relations.push(Relation::new(RelationKind::IsoscelesPair, &labels(3)?)?),
            "ARROW" => relations.push(Relation::new(RelationKind::ParallelPair, &labels(4)?)?),
            "ANGLE" => {
                if args != 4 {
                    return Err(bad(i, "ANGLE takes 4 arguments"));
                }
                let l: Vec<Label> = (i + 1..i + 4).map(label).collect::<Result<_>>()?;
                let value = match words[i + 4] {
                    "x" => AngleValue::Unknown,
                    w => AngleValue::Known(
                        w.parse()
                            .map_err(|_| bad(i + 4, "expected an angle value"))?,
                    ),
                };
                facts.push(AngleFact {
                    angle: AngleRef::new(l[0], l[1], l[2]),
                    value,
                });
            }
            _ => return Err(bad(i, "expected a drawing command")),
        }
        i = end;
    }
    Ok(SceneGraph::new(points, segments, facts, relations))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::generate_scene;

    #[test]
    fn text_markers_follow_variant() {
        let v = Vocabulary::standard();
        let s = generate_scene(11, 1).unwrap();
        let q = v.encode("find A C B").unwrap();
        let lite = encode_scene(&s, Variant::TextLite, &q);
        assert!(!lite.contains(&v.get(TEXT_BEGIN)));
        let only = encode_scene(&s, Variant::VisionOnly, &q);
        assert!(only.contains(&v.get(TEXT_BEGIN)) && only.contains(&v.get(TEXT_END)));
        assert_eq!(split_embedded(&only).1, Some(&q[..]));
    }

    #[test]
    fn decoding_recovers_every_scene() {
        for c in 1..=3 {
            for seed in 0..100 {
                let s = generate_scene(seed, c).unwrap();
                let toks = encode_scene(&s, Variant::TextLite, &[]);
                assert_eq!(decode_scene(&toks).unwrap(), s);
                let jittered =
                    decode_scene(&encode_scene(&s, Variant::VisionIntensive, &[])).unwrap();
                assert_eq!(jittered.facts(), s.facts());
                assert_ne!(jittered.points, s.points);
            }
        }
    }

    #[test]
    fn order_is_not_the_construction_order() {
        let v = Vocabulary::standard();
        let s = generate_scene(2, 2).unwrap();
        let text = v.decode(&encode_scene(&s, Variant::TextLite, &[]));
        assert!(!text.starts_with("POINT A"), "{text}");
    }
}
