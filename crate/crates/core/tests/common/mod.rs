#![allow(dead_code)]

use std::collections::BTreeMap;

use parttrack::config::TrackerConfig;
use parttrack::io::GroundTruth;
use parttrack::pose::{JointFlag, JointSchema, Part};
use parttrack::synth::SynthScene;
use parttrack::tracker::{FrameOutput, Tracker};

pub fn run_tracker(scene: &SynthScene, cfg: TrackerConfig<f64>) -> (Vec<FrameOutput<f64>>, Tracker<f64>) {
    let mut tracker = Tracker::new(scene.cameras.clone(), cfg, scene.schema.joint_count()).unwrap();
    let frames = scene.bundles.iter().map(|b| tracker.step(b).unwrap()).collect();
    (frames, tracker)
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

/// Stand-alone PCP scorer working on plain arrays. Returns per (actor, part)
/// counts of (correct, total).
#[allow(clippy::needless_range_loop)]
pub fn reference_pcp(
    tracks: &[FrameOutput<f64>],
    gt: &GroundTruth,
    schema: &JointSchema,
) -> BTreeMap<(u32, Part), (u64, u64)> {
    let mut counts: BTreeMap<(u32, Part), (u64, u64)> = BTreeMap::new();
    for gframe in &gt.frames {
        let est: Vec<Vec<Option<[f64; 3]>>> = tracks
            .iter()
            .find(|f| f.frame == gframe.frame)
            .map(|f| {
                f.tracks
                    .iter()
                    .map(|t| {
                        t.skeleton
                            .joints
                            .iter()
                            .map(|j| (j.flag != JointFlag::Missing).then(|| j.position.to_array()))
                            .collect()
                    })
                    .collect()
            })
            .unwrap_or_default();
        let truth: Vec<Vec<[f64; 3]>> =
            gframe.actors.iter().map(|a| a.joints.iter().map(|p| p.to_array()).collect()).collect();

        // distance table, then repeatedly take the smallest remaining entry
        let mut table = vec![vec![f64::INFINITY; est.len()]; truth.len()];
        for (a, g) in truth.iter().enumerate() {
            for (t, e) in est.iter().enumerate() {
                let mut sum = 0.0;
                let mut n = 0;
                for (p, q) in e.iter().zip(g) {
                    if let Some(p) = p {
                        sum += dist(*p, *q);
                        n += 1;
                    }
                }
                if n > 0 {
                    table[a][t] = sum / n as f64;
                }
            }
        }
        let mut assigned: Vec<Option<usize>> = vec![None; truth.len()];
        loop {
            let mut best: Option<(f64, usize, usize)> = None;
            for a in 0..truth.len() {
                if assigned[a].is_some() {
                    continue;
                }
                for t in 0..est.len() {
                    if assigned.contains(&Some(t)) || !table[a][t].is_finite() {
                        continue;
                    }
                    if best.is_none_or(|(d, _, _)| table[a][t] < d) {
                        best = Some((table[a][t], a, t));
                    }
                }
            }
            match best {
                Some((_, a, t)) => assigned[a] = Some(t),
                None => break,
            }
        }

        for (a, actor) in gframe.actors.iter().enumerate() {
            if !actor.evaluate {
                continue;
            }
            for limb in schema.limbs() {
                let entry = counts.entry((actor.id, limb.part)).or_default();
                entry.1 += 1;
                let Some(t) = assigned[a] else { continue };
                let (Some(ea), Some(eb)) = (est[t][limb.a], est[t][limb.b]) else { continue };
                let (ga, gb) = (truth[a][limb.a], truth[a][limb.b]);
                if (dist(ea, ga) + dist(eb, gb)) / 2.0 <= 0.5 * dist(ga, gb) {
                    entry.0 += 1;
                }
            }
        }
    }
    counts
}

pub fn flatten_report(report: &parttrack::eval::PcpReport) -> BTreeMap<(u32, Part), (u64, u64)> {
    report
        .actors
        .iter()
        .flat_map(|(id, parts)| parts.iter().map(move |(p, c)| ((*id, *p), (c.correct, c.total))))
        .collect()
}
