//! Scene generation by composing basic shapes, and the verbose description.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::solver::{derive, propagate};
use super::statement::Statement;
use super::{
    AngleFact, AngleRef, AngleValue, Label, Point, Relation, RelationKind, SceneGraph,
    StatementList, MAX_ANGLE, MIN_ANGLE,
};
use crate::error::{Error, Result};
use crate::rng::rng_for;
use crate::vocab::{ANGLE_STEP, GRID};

pub const MAX_GENERATION_ATTEMPTS: usize = 1000;

/// A composed shape: its relations and one consistent assignment of every
/// angle the relations mention.
struct Layout {
    n_points: usize,
    relations: Vec<Relation>,
    segments: Vec<[Label; 2]>,
    values: BTreeMap<AngleRef, u32>,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Template {
    Triangle,
    Supplementary,
    ExteriorAngle,
    IsoscelesTriangle,
    ParallelTransversal,
    QuadExterior,
    IsoscelesExterior,
    TwoExteriors,
    AdjacentTriangles,
}

impl Template {
    fn for_complexity(c: u32) -> &'static [Template] {
        use Template::*;
        match c {
            1 => &[Triangle, Supplementary],
            2 => &[
                ExteriorAngle,
                IsoscelesTriangle,
                ParallelTransversal,
                QuadExterior,
            ],
            _ => &[IsoscelesExterior, TwoExteriors, AdjacentTriangles],
        }
    }

    const ALL: [Template; 9] = [
        Template::Triangle,
        Template::Supplementary,
        Template::ExteriorAngle,
        Template::IsoscelesTriangle,
        Template::ParallelTransversal,
        Template::QuadExterior,
        Template::IsoscelesExterior,
        Template::TwoExteriors,
        Template::AdjacentTriangles,
    ];

    fn index(self) -> usize {
        Template::ALL
            .iter()
            .position(|&t| t == self)
            .expect("listed")
    }
}

fn lab(i: usize) -> Label {
    Label::nth(i)
}

fn ang(a: usize, v: usize, b: usize) -> AngleRef {
    AngleRef::new(lab(a), lab(v), lab(b))
}

fn rel(kind: RelationKind, ls: &[usize]) -> Relation {
    Relation::new(kind, &ls.iter().map(|&i| lab(i)).collect::<Vec<_>>()).expect("template relation")
}

fn seg(a: usize, b: usize) -> [Label; 2] {
    [lab(a), lab(b)]
}

/// Random multiple of the angle step in `[lo, hi]`.
fn step_in(rng: &mut ChaCha8Rng, lo: u32, hi: u32) -> u32 {
    let (lo, hi) = (lo.div_ceil(ANGLE_STEP), hi / ANGLE_STEP);
    rng.gen_range(lo..=hi) * ANGLE_STEP
}

const A: usize = 0;
const B: usize = 1;
const C: usize = 2;
const D: usize = 3;
const E: usize = 4;

fn layout(t: Template, rng: &mut ChaCha8Rng) -> Layout {
    use RelationKind::*;
    let mut values = BTreeMap::new();
    let tri = |rng: &mut ChaCha8Rng, values: &mut BTreeMap<AngleRef, u32>| -> (u32, u32, u32) {
        let a = step_in(rng, MIN_ANGLE, 160);
        let b = step_in(rng, MIN_ANGLE, 170 - a);
        let c = 180 - a - b;
        values.insert(ang(B, A, C), a);
        values.insert(ang(A, B, C), b);
        values.insert(ang(A, C, B), c);
        (a, b, c)
    };
    match t {
        Template::Triangle => {
            tri(rng, &mut values);
            Layout {
                n_points: 3,
                relations: vec![rel(Triangle, &[A, B, C])],
                segments: vec![seg(A, B), seg(A, C), seg(B, C)],
                values,
            }
        }
        Template::Supplementary => {
            let p = step_in(rng, MIN_ANGLE, MAX_ANGLE);
            values.insert(ang(A, B, D), p);
            values.insert(ang(D, B, C), 180 - p);
            Layout {
                n_points: 4,
                relations: vec![rel(SupplementaryPair, &[A, B, C, D])],
                segments: vec![seg(A, B), seg(B, C), seg(B, D)],
                values,
            }
        }
        Template::ExteriorAngle => {
            let (_, _, c) = tri(rng, &mut values);
            values.insert(ang(A, C, D), 180 - c);
            Layout {
                n_points: 4,
                relations: vec![
                    rel(Triangle, &[A, B, C]),
                    rel(SupplementaryPair, &[B, C, D, A]),
                ],
                segments: vec![seg(A, B), seg(A, C), seg(B, C), seg(C, D)],
                values,
            }
        }
        Template::IsoscelesTriangle => {
            let base = step_in(rng, MIN_ANGLE, 80);
            values.insert(ang(B, A, C), 180 - 2 * base);
            values.insert(ang(A, B, C), base);
            values.insert(ang(A, C, B), base);
            Layout {
                n_points: 3,
                relations: vec![rel(Triangle, &[A, B, C]), rel(IsoscelesPair, &[A, B, C])],
                segments: vec![seg(A, B), seg(A, C), seg(B, C)],
                values,
            }
        }
        Template::ParallelTransversal => {
            let p = step_in(rng, MIN_ANGLE, MAX_ANGLE);
            values.insert(ang(A, B, C), p);
            values.insert(ang(B, C, D), p);
            values.insert(ang(D, C, E), 180 - p);
            Layout {
                n_points: 5,
                relations: vec![
                    rel(ParallelPair, &[A, B, C, D]),
                    rel(SupplementaryPair, &[B, C, E, D]),
                ],
                segments: vec![seg(A, B), seg(B, C), seg(C, D), seg(C, E)],
                values,
            }
        }
        Template::QuadExterior => {
            let (a, b, c, d) = loop {
                let a = step_in(rng, 40, 140);
                let b = step_in(rng, 40, 140);
                let c = step_in(rng, 40, 140);
                if let Some(d) = 360u32
                    .checked_sub(a + b + c)
                    .filter(|d| (40..=140).contains(d))
                {
                    break (a, b, c, d);
                }
            };
            values.insert(ang(D, A, B), a);
            values.insert(ang(A, B, C), b);
            values.insert(ang(B, C, D), c);
            values.insert(ang(A, D, C), d);
            values.insert(ang(A, D, E), 180 - d);
            Layout {
                n_points: 5,
                relations: vec![
                    rel(AngleSumPolygon, &[A, B, C, D]),
                    rel(SupplementaryPair, &[C, D, E, A]),
                ],
                segments: vec![seg(A, B), seg(B, C), seg(C, D), seg(A, D), seg(D, E)],
                values,
            }
        }
        Template::IsoscelesExterior => {
            let base = step_in(rng, MIN_ANGLE, 80);
            values.insert(ang(B, A, C), 180 - 2 * base);
            values.insert(ang(A, B, C), base);
            values.insert(ang(A, C, B), base);
            values.insert(ang(A, C, D), 180 - base);
            Layout {
                n_points: 4,
                relations: vec![
                    rel(Triangle, &[A, B, C]),
                    rel(IsoscelesPair, &[A, B, C]),
                    rel(SupplementaryPair, &[B, C, D, A]),
                ],
                segments: vec![seg(A, B), seg(A, C), seg(B, C), seg(C, D)],
                values,
            }
        }
        Template::TwoExteriors => {
            let (_, b, c) = tri(rng, &mut values);
            values.insert(ang(A, B, D), 180 - b);
            values.insert(ang(A, C, E), 180 - c);
            Layout {
                n_points: 5,
                relations: vec![
                    rel(Triangle, &[A, B, C]),
                    rel(SupplementaryPair, &[C, B, D, A]),
                    rel(SupplementaryPair, &[B, C, E, A]),
                ],
                segments: vec![seg(A, B), seg(A, C), seg(B, C), seg(B, D), seg(C, E)],
                values,
            }
        }
        Template::AdjacentTriangles => {
            let c = loop {
                let (_, _, c) = tri(rng, &mut values);
                if c >= 2 * MIN_ANGLE {
                    break c;
                }
            };
            let e = step_in(rng, MIN_ANGLE, c - MIN_ANGLE);
            values.insert(ang(A, C, D), 180 - c);
            values.insert(ang(C, A, D), e);
            values.insert(ang(A, D, C), c - e);
            Layout {
                n_points: 4,
                relations: vec![
                    rel(Triangle, &[A, B, C]),
                    rel(SupplementaryPair, &[B, C, D, A]),
                    rel(Triangle, &[A, C, D]),
                ],
                segments: vec![seg(A, B), seg(A, C), seg(B, C), seg(C, D), seg(A, D)],
                values,
            }
        }
    }
}

/// A choice of given angles and target that pins the target down using every
/// relation and every given.
#[derive(Clone, Debug)]
struct Assignment {
    known: Vec<AngleRef>,
    target: AngleRef,
}

fn determined(
    relations: &[Relation],
    known: &[AngleRef],
    target: AngleRef,
    values: &BTreeMap<AngleRef, u32>,
) -> bool {
    let k: Vec<(AngleRef, u32)> = known.iter().map(|a| (*a, values[a])).collect();
    propagate(relations, &k, target).is_ok()
}

/// Minimal assignments for a template; depends only on its structure, so it
/// is enumerated once against a sample layout.
fn assignments(t: Template) -> &'static [Assignment] {
    static CACHE: OnceLock<Vec<Vec<Assignment>>> = OnceLock::new();
    let all = CACHE.get_or_init(|| {
        Template::ALL
            .iter()
            .map(|&t| {
                let mut rng = rng_for(0, &[t.index() as u64]);
                let lay = layout(t, &mut rng);
                let angles: Vec<AngleRef> = lay.values.keys().copied().collect();
                let mut out = Vec::new();
                for &target in &angles {
                    let others: Vec<AngleRef> =
                        angles.iter().copied().filter(|&a| a != target).collect();
                    for mask in 1u32..(1 << others.len()) {
                        let known: Vec<AngleRef> = (0..others.len())
                            .filter(|i| mask & (1 << i) != 0)
                            .map(|i| others[i])
                            .collect();
                        if !determined(&lay.relations, &known, target, &lay.values) {
                            continue;
                        }
                        let minimal_known = (0..known.len()).all(|i| {
                            let mut k = known.clone();
                            k.remove(i);
                            !determined(&lay.relations, &k, target, &lay.values)
                        });
                        let needs_all_relations = (0..lay.relations.len()).all(|i| {
                            let mut r = lay.relations.clone();
                            r.remove(i);
                            !determined(&r, &known, target, &lay.values)
                        });
                        if minimal_known && needs_all_relations {
                            out.push(Assignment { known, target });
                        }
                    }
                }
                assert!(!out.is_empty(), "template {t:?} admits no assignment");
                out
            })
            .collect()
    });
    &all[t.index()]
}

fn place_points(n: usize, rng: &mut ChaCha8Rng) -> Vec<Point> {
    let mut cells: Vec<(i32, i32)> = (0..GRID)
        .flat_map(|x| (0..GRID).map(move |y| (x, y)))
        .collect();
    cells.shuffle(rng);
    cells[..n]
        .iter()
        .enumerate()
        .map(|(i, &(x, y))| Point {
            label: lab(i),
            x,
            y,
        })
        .collect()
}

fn attempt(seed: u64, complexity: u32, attempt: usize) -> Result<SceneGraph> {
    let mut rng = rng_for(seed, &[u64::from(complexity), attempt as u64]);
    let templates = Template::for_complexity(complexity);
    let t = templates[rng.gen_range(0..templates.len())];
    let lay = layout(t, &mut rng);
    let options = assignments(t);
    let choice = &options[rng.gen_range(0..options.len())];
    let mut facts: Vec<AngleFact> = choice
        .known
        .iter()
        .map(|a| AngleFact {
            angle: *a,
            value: AngleValue::Known(lay.values[a]),
        })
        .collect();
    facts.push(AngleFact {
        angle: choice.target,
        value: AngleValue::Unknown,
    });
    let points = place_points(lay.n_points, &mut rng);
    let scene = SceneGraph::new(points, lay.segments, facts, lay.relations);
    scene.check_structure()?;
    let d = derive(&scene)?;
    if d.value != lay.values[&choice.target] {
        return Err(Error::Inconsistent(format!(
            "derived {} but layout says {}",
            d.value, lay.values[&choice.target]
        )));
    }
    Ok(scene)
}

/// Generates a solvable scene built from `complexity` composed relations.
/// Deterministic in `seed`.
pub fn generate_scene(seed: u64, complexity: u32) -> Result<SceneGraph> {
    if !(1..=3).contains(&complexity) {
        return Err(Error::Argument(format!(
            "complexity {complexity} outside 1..=3"
        )));
    }
    for k in 0..MAX_GENERATION_ATTEMPTS {
        if let Ok(scene) = attempt(seed, complexity, k) {
            return Ok(scene);
        }
    }
    Err(Error::GenerationFailed(MAX_GENERATION_ATTEMPTS))
}

/// Rule-style description: every fact one to three times, shuffled.
pub fn verbose_description(scene: &SceneGraph, seed: u64) -> StatementList {
    let mut rng = rng_for(seed, &[0x7e4b]);
    let mut out: Vec<Statement> = Vec::new();
    for fact in scene.facts().iter() {
        for _ in 0..rng.gen_range(1..=3) {
            out.push(*fact);
        }
    }
    out.shuffle(&mut rng);
    StatementList(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::statement::refine;

    #[test]
    fn complexity_one_seed_seven_is_a_triangle_or_straight_line() {
        let s = generate_scene(7, 1).unwrap();
        assert_eq!(s.relations.len(), 1);
        assert_eq!(s, generate_scene(7, 1).unwrap());
        let kind = s.relations[0].kind();
        if kind == RelationKind::Triangle {
            assert_eq!(s.known_angles().len(), 2);
        } else {
            assert_eq!(kind, RelationKind::SupplementaryPair);
        }
        assert!(s.unknown().is_some());
    }

    #[test]
    fn complexity_matches_relation_count() {
        for c in 1..=3 {
            for seed in 0..50 {
                let s = generate_scene(seed, c).unwrap();
                assert_eq!(s.complexity(), c as usize);
                s.check_structure().unwrap();
                assert!(s.known_angles().iter().all(|(_, v)| v % ANGLE_STEP == 0));
            }
        }
    }

    #[test]
    fn out_of_range_complexity_rejected() {
        assert!(generate_scene(1, 0).is_err());
        assert!(generate_scene(1, 4).is_err());
    }

    #[test]
    fn every_template_has_assignments() {
        for t in Template::ALL {
            assert!(!assignments(t).is_empty());
        }
    }

    #[test]
    fn verbose_duplicates_within_bounds() {
        let s = generate_scene(3, 2).unwrap();
        let facts = s.facts();
        let v = verbose_description(&s, 3);
        assert!(v.len() >= facts.len() && v.len() <= 3 * facts.len());
        assert_eq!(v, verbose_description(&s, 3));
        assert_eq!(refine(v), facts);
    }

    #[test]
    fn refinement_forgets_the_verbose_seed() {
        for scene_seed in 0..20 {
            let s = generate_scene(scene_seed, 1 + (scene_seed % 3) as u32).unwrap();
            let reference = refine(verbose_description(&s, 0));
            for seed in 1..100 {
                assert_eq!(refine(verbose_description(&s, seed)), reference);
            }
        }
    }
}
