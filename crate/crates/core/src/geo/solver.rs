//! Fixed-point angle propagation.
//!
//! Equality relations (isosceles base angles, alternate angles) merge angles
//! into classes up front. Each pass then scans the sum relations and solves
//! any whose remaining unknowns collapse to a single class. Every productive
//! pass consumes at least one sum relation, so at most `|relations|` passes run.

use std::collections::BTreeMap;

use super::{AngleRef, AngleValue, Relation, SceneGraph, Statement, StatementList};
use crate::error::{Error, Result};

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Equation {
    Sum { angles: Vec<AngleRef>, total: i64 },
    Equal(AngleRef, AngleRef),
}

/// Outcome of propagation: the target's value and the derivation in order.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Derivation {
    pub value: u32,
    /// Newly determined angles in derivation order; the target is last.
    pub steps: Vec<(AngleRef, u32)>,
    pub passes: usize,
}

impl Derivation {
    pub fn statements(&self) -> StatementList {
        StatementList(
            self.steps
                .iter()
                .map(|&(a, v)| Statement::Angle(a, AngleValue::Known(v)))
                .collect(),
        )
    }
}

struct Classes {
    ids: BTreeMap<AngleRef, usize>,
    parent: Vec<usize>,
}

impl Classes {
    fn id(&mut self, a: AngleRef) -> usize {
        let next = self.parent.len();
        let id = *self.ids.entry(a).or_insert(next);
        if id == next {
            self.parent.push(next);
        }
        id
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Propagates known angles through `relations` until `target` is determined.
pub fn propagate(
    relations: &[Relation],
    knowns: &[(AngleRef, u32)],
    target: AngleRef,
) -> Result<Derivation> {
    let mut classes = Classes {
        ids: BTreeMap::new(),
        parent: Vec::new(),
    };
    let mut sums: Vec<(Vec<usize>, i64)> = Vec::new();
    for r in relations {
        match r.equation() {
            Equation::Sum { angles, total } => {
                let ids = angles.into_iter().map(|a| classes.id(a)).collect();
                sums.push((ids, total));
            }
            Equation::Equal(a, b) => {
                let (ia, ib) = (classes.id(a), classes.id(b));
                classes.union(ia, ib);
            }
        }
    }
    let target_id = classes.id(target);
    for &(a, _) in knowns {
        classes.id(a);
    }
    let n = classes.parent.len();
    let roots: Vec<usize> = (0..n).map(|i| classes.find(i)).collect();
    let mut members: BTreeMap<usize, Vec<AngleRef>> = BTreeMap::new();
    for (&a, &i) in &classes.ids {
        members.entry(roots[i]).or_default().push(a);
    }

    let mut value: Vec<Option<i64>> = vec![None; n];
    for &(a, v) in knowns {
        if a == target {
            return Err(Error::Inconsistent(format!("target {a:?} is also given")));
        }
        let r = roots[classes.ids[&a]];
        match value[r] {
            Some(old) if old != i64::from(v) => {
                return Err(Error::Inconsistent(format!(
                    "{a:?} = {v} conflicts with {old}"
                )))
            }
            _ => value[r] = Some(i64::from(v)),
        }
    }

    let given: Vec<AngleRef> = knowns.iter().map(|&(a, _)| a).collect();
    let mut steps: Vec<(AngleRef, u32)> = Vec::new();
    let record = |root: usize, v: i64, steps: &mut Vec<(AngleRef, u32)>| {
        let mut tail = None;
        for &a in &members[&root] {
            if a == target {
                tail = Some(a);
            } else if !given.contains(&a) {
                steps.push((a, v as u32));
            }
        }
        if let Some(a) = tail {
            steps.push((a, v as u32));
        }
    };
    for &root in members.keys() {
        if let Some(v) = value[root] {
            record(root, v, &mut steps);
        }
    }

    let target_root = roots[target_id];
    let mut solved = vec![false; sums.len()];
    let mut passes = 0;
    while value[target_root].is_none() {
        passes += 1;
        let mut progress = false;
        for (k, (ids, total)) in sums.iter().enumerate() {
            if solved[k] {
                continue;
            }
            let mut rest = *total;
            let mut unknown: Option<(usize, i64)> = None;
            let mut several = false;
            for &i in ids {
                let r = roots[i];
                match value[r] {
                    Some(v) => rest -= v,
                    None => match unknown {
                        None => unknown = Some((r, 1)),
                        Some((u, c)) if u == r => unknown = Some((u, c + 1)),
                        Some(_) => several = true,
                    },
                }
            }
            if several {
                continue;
            }
            solved[k] = true;
            match unknown {
                None if rest != 0 => {
                    return Err(Error::Inconsistent(format!(
                        "angle sum to {total} is off by {rest}"
                    )))
                }
                None => {}
                Some((r, c)) => {
                    if rest % c != 0 || rest / c <= 0 || rest / c >= 180 {
                        return Err(Error::Inconsistent(format!(
                            "derived angle {rest}/{c} is not admissible"
                        )));
                    }
                    value[r] = Some(rest / c);
                    record(r, rest / c, &mut steps);
                    progress = true;
                    if r == target_root {
                        break;
                    }
                }
            }
        }
        if !progress {
            break;
        }
    }
    match value[target_root] {
        Some(v) => Ok(Derivation {
            value: v as u32,
            steps,
            passes,
        }),
        None => Err(Error::Underdetermined(format!(
            "{target:?} cannot be derived"
        ))),
    }
}

/// Full derivation of the scene's unknown.
pub fn derive(scene: &SceneGraph) -> Result<Derivation> {
    let target = scene
        .unknown()
        .ok_or_else(|| Error::Underdetermined("scene has no single unknown".into()))?;
    propagate(&scene.relations, &scene.known_angles(), target)
}

/// Value of the scene's unknown angle.
pub fn solve_ground_truth(scene: &SceneGraph) -> Result<u32> {
    derive(scene).map(|d| d.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{AngleFact, Label, Point, RelationKind};

    fn l(c: char) -> Label {
        Label::new(c).unwrap()
    }

    fn ang(s: &str) -> AngleRef {
        let c: Vec<char> = s.chars().collect();
        AngleRef::new(l(c[0]), l(c[1]), l(c[2]))
    }

    fn scene(rels: &[(RelationKind, &str)], facts: &[(&str, Option<u32>)]) -> SceneGraph {
        let relations: Vec<Relation> = rels
            .iter()
            .map(|(k, s)| Relation::new(*k, &s.chars().map(l).collect::<Vec<_>>()).unwrap())
            .collect();
        let mut labels: Vec<Label> = relations.iter().flat_map(|r| r.labels().to_vec()).collect();
        labels.sort();
        labels.dedup();
        let points = labels
            .iter()
            .enumerate()
            .map(|(i, &label)| Point {
                label,
                x: i as i32,
                y: 0,
            })
            .collect();
        let facts = facts
            .iter()
            .map(|(a, v)| AngleFact {
                angle: ang(a),
                value: v.map_or(AngleValue::Unknown, AngleValue::Known),
            })
            .collect();
        SceneGraph::new(points, vec![], facts, relations)
    }

    #[test]
    fn triangle_sum() {
        let s = scene(
            &[(RelationKind::Triangle, "ABC")],
            &[("BAC", Some(40)), ("ABC", Some(60)), ("ACB", None)],
        );
        assert_eq!(solve_ground_truth(&s).unwrap(), 80);
    }

    #[test]
    fn supplementary_pair() {
        let s = scene(
            &[(RelationKind::SupplementaryPair, "ABCD")],
            &[("ABD", None), ("DBC", Some(110))],
        );
        assert_eq!(solve_ground_truth(&s).unwrap(), 70);
    }

    #[test]
    fn isosceles_apex_to_base_through_class() {
        let s = scene(
            &[
                (RelationKind::Triangle, "ABC"),
                (RelationKind::IsoscelesPair, "ABC"),
            ],
            &[("BAC", Some(40)), ("ABC", None)],
        );
        let d = derive(&s).unwrap();
        assert_eq!(d.value, 70);
        assert_eq!(d.steps, vec![(ang("ACB"), 70), (ang("ABC"), 70)]);
    }

    #[test]
    fn chain_records_steps_in_order_and_bounds_passes() {
        let s = scene(
            &[
                (RelationKind::Triangle, "ABC"),
                (RelationKind::SupplementaryPair, "BCDA"),
                (RelationKind::Triangle, "ACD"),
            ],
            &[
                ("BAC", Some(50)),
                ("ABC", Some(60)),
                ("CAD", Some(30)),
                ("ADC", None),
            ],
        );
        let d = derive(&s).unwrap();
        assert_eq!(d.value, 40);
        assert_eq!(
            d.steps,
            vec![(ang("ACB"), 70), (ang("ACD"), 110), (ang("ADC"), 40)]
        );
        assert!(d.passes <= s.relations.len());
        assert_eq!(
            d.statements().0.last().unwrap().to_string(),
            "angle A D C 40"
        );
    }

    #[test]
    fn underdetermined_and_inconsistent_scenes_error() {
        let s = scene(
            &[(RelationKind::Triangle, "ABC")],
            &[("BAC", Some(40)), ("ACB", None)],
        );
        assert!(matches!(
            solve_ground_truth(&s),
            Err(Error::Underdetermined(_))
        ));
        let s = scene(
            &[
                (RelationKind::SupplementaryPair, "ABCD"),
                (RelationKind::Triangle, "ABD"),
            ],
            &[("ABD", Some(100)), ("DBC", Some(100)), ("BAD", None)],
        );
        assert!(matches!(
            solve_ground_truth(&s),
            Err(Error::Inconsistent(_))
        ));
    }
}
