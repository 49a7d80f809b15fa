//! Percentage of correct parts, identity switches and joint error against
//! ground truth.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::geometry::Point3;
use crate::io::{GroundTruth, GtActor};
use crate::pose::{JointFlag, JointSchema, Part, Skeleton3D};
use crate::tracker::{FrameOutput, TrackId, TrackOutput};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("joint schema mismatch: expected {expected}, found {found}")]
    SchemaMismatch { expected: String, found: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Count {
    pub correct: u64,
    pub total: u64,
}

impl Count {
    pub fn percentage(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            100.0 * self.correct as f64 / self.total as f64
        }
    }

    fn add(&mut self, correct: bool) {
        self.total += 1;
        self.correct += correct as u64;
    }

    fn merge(&mut self, other: &Count) {
        self.correct += other.correct;
        self.total += other.total;
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PcpReport {
    /// Per actor id, per part.
    pub actors: BTreeMap<u32, BTreeMap<Part, Count>>,
}

impl PcpReport {
    /// Counts per part over all actors.
    pub fn parts(&self) -> BTreeMap<Part, Count> {
        let mut out: BTreeMap<Part, Count> = BTreeMap::new();
        for parts in self.actors.values() {
            for (part, c) in parts {
                out.entry(*part).or_default().merge(c);
            }
        }
        out
    }

    pub fn total(&self) -> Count {
        let mut c = Count::default();
        for part in self.parts().values() {
            c.merge(part);
        }
        c
    }

    /// Σ correct / Σ limbs, in percent.
    pub fn average(&self) -> f64 {
        self.total().percentage()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let header: Vec<&str> = Part::ALL.iter().map(|p| p.name()).collect();
        let _ = writeln!(
            s,
            "{:<8} {} {:>8}",
            "actor",
            header.iter().map(|h| format!("{h:>10}")).collect::<String>(),
            "average"
        );
        let mut row = |label: String, parts: &BTreeMap<Part, Count>| {
            let mut total = Count::default();
            let mut line = format!("{label:<8} ");
            for p in Part::ALL {
                let c = parts.get(&p).copied().unwrap_or_default();
                total.merge(&c);
                let _ = write!(
                    line,
                    "{:>10}",
                    if c.total == 0 { "-".to_string() } else { format!("{:.2}", c.percentage()) }
                );
            }
            let _ = writeln!(s, "{line} {:>8.2}", total.percentage());
        };
        for (id, parts) in &self.actors {
            row(format!("{id}"), parts);
        }
        row("all".to_string(), &self.parts());
        s
    }

    /// One JSON record per actor and part, then one overall record.
    pub fn to_records(&self) -> String {
        #[derive(Serialize)]
        struct Rec<'a> {
            actor: Option<u32>,
            part: &'a str,
            correct: u64,
            total: u64,
            pcp: f64,
        }
        let mut s = String::new();
        let mut push = |actor: Option<u32>, part: &str, c: &Count| {
            let rec = Rec { actor, part, correct: c.correct, total: c.total, pcp: c.percentage() };
            s.push_str(&serde_json::to_string(&rec).expect("serializable"));
            s.push('\n');
        };
        for (id, parts) in &self.actors {
            for (p, c) in parts {
                push(Some(*id), p.name(), c);
            }
        }
        for (p, c) in &self.parts() {
            push(None, p.name(), c);
        }
        push(None, "all", &self.total());
        s
    }
}

/// Mean distance over joints present in the estimate; infinite if none are.
pub fn mean_joint_distance(estimate: &Skeleton3D<f64>, truth: &[Point3<f64>]) -> f64 {
    let (sum, n) = estimate
        .joints
        .iter()
        .zip(truth)
        .filter(|(j, _)| j.flag != JointFlag::Missing)
        .fold((0.0, 0usize), |(s, n), (j, g)| (s + j.position.distance(g), n + 1));
    if n == 0 {
        f64::INFINITY
    } else {
        sum / n as f64
    }
}

/// Greedy nearest matching of ground-truth actors to estimated tracks by mean
/// joint distance. Returns (actor index, track index) pairs sorted by actor.
pub fn match_actors(actors: &[GtActor], tracks: &[TrackOutput<f64>]) -> Vec<(usize, usize)> {
    let mut candidates: Vec<(f64, usize, usize)> = Vec::with_capacity(actors.len() * tracks.len());
    for (a, actor) in actors.iter().enumerate() {
        for (t, track) in tracks.iter().enumerate() {
            let d = mean_joint_distance(&track.skeleton, &actor.joints);
            if d.is_finite() {
                candidates.push((d, a, t));
            }
        }
    }
    candidates.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut actor_used = vec![false; actors.len()];
    let mut track_used = vec![false; tracks.len()];
    let mut pairs = Vec::new();
    for (_, a, t) in candidates {
        if !actor_used[a] && !track_used[t] {
            actor_used[a] = true;
            track_used[t] = true;
            pairs.push((a, t));
        }
    }
    pairs.sort();
    pairs
}

/// Classical PCP test: mean endpoint error at most half the true limb length.
pub fn limb_correct(est_a: &Point3<f64>, est_b: &Point3<f64>, gt_a: &Point3<f64>, gt_b: &Point3<f64>) -> bool {
    let error = (est_a.distance(gt_a) + est_b.distance(gt_b)) / 2.0;
    error <= 0.5 * gt_a.distance(gt_b)
}

fn check_schema(schema: &JointSchema, other: &JointSchema) -> Result<(), EvalError> {
    if schema.name() != other.name() || schema.joint_count() != other.joint_count() {
        return Err(EvalError::SchemaMismatch { expected: schema.name().into(), found: other.name().into() });
    }
    Ok(())
}

fn frames_by_index(tracks: &[FrameOutput<f64>]) -> BTreeMap<u64, &FrameOutput<f64>> {
    tracks.iter().map(|f| (f.frame, f)).collect()
}

/// Score every evaluated actor of every ground-truth frame. Actors without a
/// matched estimate, and limbs with a missing endpoint, count as incorrect.
pub fn pcp_evaluate(
    tracks: &[FrameOutput<f64>],
    tracks_schema: &JointSchema,
    gt: &GroundTruth,
    schema: &JointSchema,
) -> Result<PcpReport, EvalError> {
    check_schema(schema, &gt.schema)?;
    check_schema(schema, tracks_schema)?;
    let by_frame = frames_by_index(tracks);
    let mut report = PcpReport::default();
    for frame in &gt.frames {
        let estimates: &[TrackOutput<f64>] = by_frame.get(&frame.frame).map_or(&[], |f| &f.tracks);
        let pairs = match_actors(&frame.actors, estimates);
        for (a, actor) in frame.actors.iter().enumerate() {
            if !actor.evaluate {
                continue;
            }
            let est = pairs.iter().find(|(pa, _)| *pa == a).map(|(_, t)| &estimates[*t].skeleton);
            let parts = report.actors.entry(actor.id).or_default();
            for limb in schema.limbs() {
                let correct = est.is_some_and(|s| {
                    let (ea, eb) = (&s.joints[limb.a], &s.joints[limb.b]);
                    ea.flag != JointFlag::Missing
                        && eb.flag != JointFlag::Missing
                        && limb_correct(&ea.position, &eb.position, &actor.joints[limb.a], &actor.joints[limb.b])
                });
                parts.entry(limb.part).or_default().add(correct);
            }
        }
    }
    Ok(report)
}

/// Identity and accuracy statistics over a run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrackingStats {
    pub identity_switches: u64,
    /// Evaluated actor-frames with no matched estimate.
    pub unmatched: u64,
    /// Mean distance of triangulated joints to ground truth (m).
    pub mean_triangulated_error: f64,
    pub triangulated_joints: u64,
    /// Distinct track ids ever matched, per actor.
    pub ids_per_actor: BTreeMap<u32, Vec<TrackId>>,
}

/// Count identity switches (a matched actor's track id changing between
/// consecutive matched frames) and the triangulated-joint error.
pub fn tracking_stats(tracks: &[FrameOutput<f64>], gt: &GroundTruth) -> TrackingStats {
    let by_frame = frames_by_index(tracks);
    let mut stats = TrackingStats::default();
    let mut last: BTreeMap<u32, TrackId> = BTreeMap::new();
    let mut error_sum = 0.0;
    for frame in &gt.frames {
        let estimates: &[TrackOutput<f64>] = by_frame.get(&frame.frame).map_or(&[], |f| &f.tracks);
        let pairs = match_actors(&frame.actors, estimates);
        for (a, actor) in frame.actors.iter().enumerate() {
            if !actor.evaluate {
                continue;
            }
            let Some(&(_, t)) = pairs.iter().find(|(pa, _)| *pa == a) else {
                stats.unmatched += 1;
                continue;
            };
            let est = &estimates[t];
            if let Some(prev) = last.insert(actor.id, est.id) {
                if prev != est.id {
                    stats.identity_switches += 1;
                }
            }
            let ids = stats.ids_per_actor.entry(actor.id).or_default();
            if !ids.contains(&est.id) {
                ids.push(est.id);
            }
            for (j, g) in est.skeleton.joints.iter().zip(&actor.joints) {
                if j.flag == JointFlag::Triangulated {
                    error_sum += j.position.distance(g);
                    stats.triangulated_joints += 1;
                }
            }
        }
    }
    if stats.triangulated_joints > 0 {
        stats.mean_triangulated_error = error_sum / stats.triangulated_joints as f64;
    }
    stats
}
