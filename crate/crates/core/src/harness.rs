//! Study design, trial replay and per-trial metrics.

use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{wrap_deg, yaw_of, Vec3};
use crate::kernel::{
    Kernel, KernelConfig, KernelError, KernelEvent, Mode, OrientMethod, SwitchMethod,
};
use crate::scene::{build_study_scene, SceneError, StudyScene, TrialSceneSpec};
use crate::scene::{STUDY_DEPTHS, STUDY_ROTATIONS};
use crate::trace::{synth_trace_with, SyntheticUserParams, Trace};

pub const TRIALS_PER_PARTICIPANT: usize = 120;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("trace has no frames")]
    EmptyTrace,
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Scene(#[from] SceneError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialSpec {
    pub switch: SwitchMethod,
    pub orient: OrientMethod,
    pub depth_m: f64,
    pub rotation_deg: f64,
    pub repetition: u8,
}

impl TrialSpec {
    pub fn scene_spec(&self) -> TrialSceneSpec {
        TrialSceneSpec::new(self.depth_m, self.rotation_deg).expect("study depth and rotation")
    }

    pub fn build_scene(&self) -> Result<StudyScene, SceneError> {
        build_study_scene(&TrialSceneSpec::new(self.depth_m, self.rotation_deg)?)
    }
}

impl fmt::Display for TrialSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{} depth {} rot {} rep {}",
            self.switch.as_str(),
            self.orient.as_str(),
            self.depth_m,
            self.rotation_deg,
            self.repetition
        )
    }
}

/// Cyclic 3x3 Latin square over the orientation methods.
pub fn orientation_order(participant: u64) -> [OrientMethod; 3] {
    let r = (participant % 3) as usize;
    let all = OrientMethod::ALL;
    [all[r], all[(r + 1) % 3], all[(r + 2) % 3]]
}

pub fn switch_order(participant: u64) -> [SwitchMethod; 2] {
    if participant.is_multiple_of(2) {
        [SwitchMethod::Button, SwitchMethod::Flip]
    } else {
        [SwitchMethod::Flip, SwitchMethod::Button]
    }
}

/// The 120-trial sequence for one participant: orientation blocks in
/// Latin-square order, switch methods nested inside, and each block's
/// 10 scenes shuffled once per repetition.
pub fn generate_design(participant: u64) -> Vec<TrialSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(participant);
    let mut out = Vec::with_capacity(TRIALS_PER_PARTICIPANT);
    for orient in orientation_order(participant) {
        for switch in switch_order(participant) {
            for repetition in 1..=2u8 {
                let mut block: Vec<TrialSpec> = STUDY_DEPTHS
                    .iter()
                    .flat_map(|&depth_m| {
                        STUDY_ROTATIONS.iter().map(move |&rotation_deg| TrialSpec {
                            switch,
                            orient,
                            depth_m,
                            rotation_deg,
                            repetition,
                        })
                    })
                    .collect();
                block.shuffle(&mut rng);
                out.extend(block);
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedEvent {
    pub t: u64,
    pub event: KernelEvent,
}

/// Everything the kernel reported while replaying one trial.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrialLog {
    pub start_t: u64,
    pub events: Vec<TimedEvent>,
}

impl TrialLog {
    pub fn push(&mut self, t: u64, event: KernelEvent) {
        self.events.push(TimedEvent { t, event });
    }

    /// Finished strokes (and a trailing unfinished one) that started after
    /// time `after`.
    pub fn strokes_after(&self, after: u64) -> Vec<Vec<Vec3>> {
        let mut strokes = Vec::new();
        let mut current: Option<Vec<Vec3>> = None;
        for e in &self.events {
            match &e.event {
                KernelEvent::StrokeStarted { point } => {
                    if let Some(s) = current.take() {
                        strokes.push(s);
                    }
                    current = (e.t >= after).then(|| vec![*point]);
                }
                KernelEvent::StrokeExtended { point } => {
                    if let Some(s) = current.as_mut() {
                        s.push(*point);
                    }
                }
                KernelEvent::StrokeFinished => {
                    if let Some(s) = current.take() {
                        strokes.push(s);
                    }
                }
                _ => {}
            }
        }
        strokes.extend(current);
        strokes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub switch_in_ms: u64,
    pub positioning_ms: u64,
    pub orientation_ms: u64,
    pub switch_out_ms: u64,
    pub task_completion_ms: u64,
    pub positioning_error_m: f64,
    pub orientation_error_deg: f64,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TrialOutcome {
    Complete(TrialMetrics),
    Incomplete { reason: String },
}

impl TrialOutcome {
    pub fn metrics(&self) -> Option<&TrialMetrics> {
        match self {
            TrialOutcome::Complete(m) => Some(m),
            TrialOutcome::Incomplete { .. } => None,
        }
    }
}

fn point_segment_distance(p: Vec3, a: Vec3, b: Vec3) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return p.distance(a);
    }
    let s = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    p.distance(a + ab * s)
}

fn polyline_distance(stroke: &[Vec3], c: Vec3) -> f64 {
    match stroke {
        [] => f64::INFINITY,
        [p] => p.distance(c),
        _ => stroke
            .windows(2)
            .map(|w| point_segment_distance(c, w[0], w[1]))
            .fold(f64::INFINITY, f64::min),
    }
}

/// True iff the polyline comes within `radius` of both centers (boundary
/// counts as inside).
pub fn check_stroke(stroke: &[Vec3], sphere_a: Vec3, sphere_b: Vec3, radius: f64) -> bool {
    polyline_distance(stroke, sphere_a) <= radius && polyline_distance(stroke, sphere_b) <= radius
}

/// Derives the trial measures from an event log.
pub fn compute_metrics(log: &TrialLog, scene: &StudyScene) -> TrialOutcome {
    let incomplete = |reason: &str| TrialOutcome::Incomplete {
        reason: reason.to_string(),
    };
    let events = &log.events;
    let Some(switch_idx) = events
        .iter()
        .position(|e| matches!(e.event, KernelEvent::ModeSwitched { to: Mode::Teleport }))
    else {
        return incomplete("no switch to teleport mode");
    };
    let Some(commit_idx) = events
        .iter()
        .position(|e| matches!(e.event, KernelEvent::TeleportCommitted { .. }))
    else {
        return incomplete("no teleport commit");
    };
    let KernelEvent::TeleportCommitted {
        position, yaw_deg, ..
    } = events[commit_idx].event
    else {
        unreachable!()
    };
    let Some(press) = events[..commit_idx]
        .iter()
        .rev()
        .find(|e| matches!(e.event, KernelEvent::HoldStarted { .. }))
    else {
        return incomplete("commit without a press");
    };
    let Some(back) = events[commit_idx..]
        .iter()
        .find(|e| matches!(e.event, KernelEvent::ModeSwitched { to: Mode::Draw }))
    else {
        return incomplete("no switch back to draw mode");
    };
    let start = log.start_t;
    let switch_t = events[switch_idx].t;
    let release_t = events[commit_idx].t;
    if !(start <= switch_t && switch_t <= press.t && press.t <= release_t && release_t <= back.t) {
        return incomplete("events out of order");
    }

    let positioning_error_m = (position - scene.marker_center).horizontal().length();
    let bearing = yaw_of(scene.sphere_midpoint() - position).unwrap_or(yaw_deg);
    let orientation_error_deg = wrap_deg(yaw_deg - bearing).abs();
    let success = log
        .strokes_after(release_t)
        .iter()
        .any(|s| check_stroke(s, scene.sphere_a(), scene.sphere_b(), scene.sphere_radius));

    TrialOutcome::Complete(TrialMetrics {
        switch_in_ms: switch_t - start,
        positioning_ms: press.t - switch_t,
        orientation_ms: release_t - press.t,
        switch_out_ms: back.t - release_t,
        task_completion_ms: back.t - start,
        positioning_error_m,
        orientation_error_deg,
        success,
    })
}

/// Replays a trace through a fresh kernel and collects its event log.
pub fn replay(
    scene: &StudyScene,
    trace: &Trace,
    config: &KernelConfig,
) -> Result<TrialLog, HarnessError> {
    let first = trace.frames.first().ok_or(HarnessError::EmptyTrace)?;
    let mut kernel = Kernel::new(*config, scene.scene.clone(), scene.start_pose)?;
    let mut log = TrialLog {
        start_t: first.t,
        events: Vec::new(),
    };
    for frame in &trace.frames {
        for event in kernel.step(frame)? {
            log.push(frame.t, event);
        }
    }
    Ok(log)
}

pub fn run_trial(
    scene: &StudyScene,
    trace: &Trace,
    config: &KernelConfig,
) -> Result<(TrialLog, TrialOutcome), HarnessError> {
    let log = replay(scene, trace, config)?;
    let outcome = compute_metrics(&log, scene);
    Ok((log, outcome))
}

/// One line of the results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultRow {
    pub participant: u64,
    pub trial: usize,
    pub switch: SwitchMethod,
    pub orient: OrientMethod,
    pub depth: f64,
    pub rotation: f64,
    pub rep: u8,
    pub outcome: TrialOutcome,
}

pub const CSV_HEADER: [&str; 14] = [
    "participant",
    "switch",
    "orient",
    "depth",
    "rotation",
    "rep",
    "switch_in_ms",
    "positioning_ms",
    "orientation_ms",
    "switch_out_ms",
    "task_ms",
    "pos_err_m",
    "ori_err_deg",
    "success",
];

impl ResultRow {
    pub fn spec(&self) -> TrialSpec {
        TrialSpec {
            switch: self.switch,
            orient: self.orient,
            depth_m: self.depth,
            rotation_deg: self.rotation,
            repetition: self.rep,
        }
    }

    /// CSV cells in [`CSV_HEADER`] order; metric cells are empty for
    /// incomplete trials.
    pub fn csv_record(&self) -> Vec<String> {
        let mut rec = vec![
            self.participant.to_string(),
            self.switch.as_str().to_string(),
            self.orient.as_str().to_string(),
            self.depth.to_string(),
            self.rotation.to_string(),
            self.rep.to_string(),
        ];
        match self.outcome.metrics() {
            Some(m) => rec.extend([
                m.switch_in_ms.to_string(),
                m.positioning_ms.to_string(),
                m.orientation_ms.to_string(),
                m.switch_out_ms.to_string(),
                m.task_completion_ms.to_string(),
                m.positioning_error_m.to_string(),
                m.orientation_error_deg.to_string(),
                m.success.to_string(),
            ]),
            None => rec.extend(std::iter::repeat_n(String::new(), 8)),
        }
        rec
    }

    /// Parses one results line.
    pub fn from_json_line(line: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(line)
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("row serializes")
    }
}

/// Per-trial trace seeds for a participant, derived from the run seed.
pub fn trial_seeds(run_seed: u64, participant: u64) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(run_seed);
    rng.set_stream(participant);
    (0..TRIALS_PER_PARTICIPANT).map(|_| rng.gen()).collect()
}

/// Generates, replays and scores every trial of one participant.
pub fn simulate_participant(
    participant: u64,
    run_seed: u64,
    user: &SyntheticUserParams,
    base_config: &KernelConfig,
) -> Result<Vec<ResultRow>, HarnessError> {
    let design = generate_design(participant);
    let seeds = trial_seeds(run_seed, participant);
    design
        .iter()
        .zip(seeds)
        .enumerate()
        .map(|(trial, (spec, seed))| {
            let scene = spec.build_scene()?;
            let mut config = *base_config;
            config.switch_method = spec.switch;
            config.orientation_method = spec.orient;
            let trace = synth_trace_with(spec, &scene, &config, user, seed);
            let (_, outcome) = run_trial(&scene, &trace, &config)?;
            Ok(ResultRow {
                participant,
                trial,
                switch: spec.switch,
                orient: spec.orient,
                depth: spec.depth_m,
                rotation: spec.rotation_deg,
                rep: spec.repetition,
                outcome,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::{BTreeMap, HashSet};

    #[test]
    fn design_counts() {
        for p in 0..6 {
            let d = generate_design(p);
            assert_eq!(d.len(), 120);
            let mut cells: BTreeMap<(&str, &str), Vec<(i64, i64)>> = BTreeMap::new();
            for t in &d {
                cells
                    .entry((t.switch.as_str(), t.orient.as_str()))
                    .or_default()
                    .push((t.depth_m as i64, t.rotation_deg as i64));
            }
            assert_eq!(cells.len(), 6);
            for v in cells.values() {
                assert_eq!(v.len(), 20);
                let unique: HashSet<_> = v.iter().collect();
                assert_eq!(unique.len(), 10);
            }
        }
    }

    #[test]
    fn design_orders_cover_combinations() {
        let combos: HashSet<_> = (0..6)
            .map(|p| {
                let d = generate_design(p);
                (
                    d[0].orient,
                    d[40].orient,
                    d[80].orient,
                    d[0].switch,
                    d[20].switch,
                )
            })
            .collect();
        assert_eq!(combos.len(), 6);
        let firsts: HashSet<_> = (0..3).map(|p| orientation_order(p)[0]).collect();
        assert_eq!(firsts.len(), 3);
    }

    #[test]
    fn stroke_checks() {
        let a = Vec3::new(-0.15, 1.0, 3.0);
        let b = Vec3::new(0.15, 1.0, 3.0);
        assert!(check_stroke(
            &[a - Vec3::X * 0.1, b + Vec3::X * 0.1],
            a,
            b,
            0.05
        ));
        let far = Vec3::new(0.0, 0.0, 1.0);
        assert!(!check_stroke(&[a + far, b + far], a, b, 0.05));
        // Grazing at exactly the radius.
        let up = Vec3::new(0.0, 0.5, 0.0);
        assert!(check_stroke(
            &[a + up - Vec3::X, b + up + Vec3::X],
            a,
            b,
            0.5
        ));
        assert!(!check_stroke(
            &[a + up - Vec3::X, b + up + Vec3::X],
            a,
            b,
            0.5 - 1e-12
        ));
    }

    fn log_at(times: &[(u64, KernelEvent)]) -> TrialLog {
        let mut log = TrialLog::default();
        for (t, e) in times {
            log.push(*t, e.clone());
        }
        log
    }

    #[test]
    fn incomplete_without_commit() {
        let scene = build_study_scene(&TrialSceneSpec::new(3.0, 45.0).unwrap()).unwrap();
        let log = log_at(&[(800, KernelEvent::ModeSwitched { to: Mode::Teleport })]);
        assert!(matches!(
            compute_metrics(&log, &scene),
            TrialOutcome::Incomplete { .. }
        ));
    }

    #[test]
    fn errors_from_commit() {
        let scene = build_study_scene(&TrialSceneSpec::new(3.0, 180.0).unwrap()).unwrap();
        let marker = scene.marker_center;
        let pos = marker + Vec3::new(0.1, 0.0, 0.0);
        let bearing = yaw_of(scene.sphere_midpoint() - pos).unwrap();
        let log = log_at(&[
            (800, KernelEvent::ModeSwitched { to: Mode::Teleport }),
            (2000, KernelEvent::HoldStarted { destination: pos }),
            (
                3500,
                KernelEvent::TeleportCommitted {
                    position: pos,
                    yaw_deg: wrap_deg(bearing + 10.0),
                    orientation_changed: true,
                },
            ),
            (4200, KernelEvent::ModeSwitched { to: Mode::Draw }),
        ]);
        let m = *compute_metrics(&log, &scene).metrics().unwrap();
        assert!((m.positioning_error_m - 0.1).abs() < 1e-12);
        assert!((m.orientation_error_deg - 10.0).abs() < 1e-9);
        assert!(!m.success);
    }

    #[test]
    fn results_row_round_trip() {
        let row = ResultRow {
            participant: 3,
            trial: 7,
            switch: SwitchMethod::Flip,
            orient: OrientMethod::GazePoint,
            depth: 6.0,
            rotation: -90.0,
            rep: 2,
            outcome: TrialOutcome::Incomplete {
                reason: "no teleport commit".into(),
            },
        };
        let line = row.to_json_line();
        assert_eq!(ResultRow::from_json_line(&line).unwrap(), row);
        let rec = row.csv_record();
        assert_eq!(rec.len(), CSV_HEADER.len());
        assert_eq!(rec[1], "flip");
        assert_eq!(rec[13], "");
    }
}
