//! Seeded synthetic participant.
//!
//! The generator is closed-loop: it drives a private [`Kernel`] with every
//! frame it emits and reacts to what the kernel reports (mode, frozen
//! destination, committed pose), the way a person reacts to what they see.
//! The emitted frames are therefore a plain trace that any replay reproduces.
//!
//! Motor model: pointing moves are two-phase minimum-jerk moves (a fast
//! approach toward a coarsely perturbed target, then a slower correction to
//! the final target). Aim noise perturbs the final pointing yaw and pitch;
//! gaze noise perturbs each gaze sample independently.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::geom::{wrap_deg, yaw_of, ParabolaParams, Pose, UnitQuat, Vec3};
use crate::harness::TrialSpec;
use crate::kernel::{
    gaze_controller, point_controller, GazeSample, InputFrame, Kernel, KernelConfig, KernelEvent,
    Mode, OrientMethod, Phase, StylusSample, SwitchMethod,
};
use crate::scene::{build_study_scene, StudyScene};

use super::{SceneRef, Trace, TraceHeader};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticUserParams {
    pub reaction_ms_mean: f64,
    pub reaction_ms_sd: f64,
    /// Standard deviation of the final pointing error, per axis.
    pub aim_noise_deg: f64,
    /// Standard deviation of each gaze sample's angular error, per axis.
    pub gaze_noise_deg: f64,
    pub frame_rate_hz: u32,
    /// Dwell between finishing the orientation move and releasing.
    pub hold_ms_mean: f64,
    pub hold_ms_sd: f64,
    /// Duration of a pointing or rolling move.
    pub move_ms_mean: f64,
    /// Seated arm reach from the shoulder.
    pub reach_m: f64,
}

impl Default for SyntheticUserParams {
    fn default() -> Self {
        Self {
            reaction_ms_mean: 450.0,
            reaction_ms_sd: 80.0,
            aim_noise_deg: 1.0,
            gaze_noise_deg: 2.68,
            frame_rate_hz: 90,
            hold_ms_mean: 450.0,
            hold_ms_sd: 100.0,
            move_ms_mean: 650.0,
            reach_m: 0.75,
        }
    }
}

impl SyntheticUserParams {
    /// A perfectly accurate user (timing still varies).
    pub fn noiseless() -> Self {
        Self {
            aim_noise_deg: 0.0,
            gaze_noise_deg: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("reaction_ms_mean", self.reaction_ms_mean),
            ("hold_ms_mean", self.hold_ms_mean),
            ("move_ms_mean", self.move_ms_mean),
            ("reach_m", self.reach_m),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be > 0"));
            }
        }
        let non_negative = [
            ("reaction_ms_sd", self.reaction_ms_sd),
            ("hold_ms_sd", self.hold_ms_sd),
            ("aim_noise_deg", self.aim_noise_deg),
            ("gaze_noise_deg", self.gaze_noise_deg),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(format!("{name} must be >= 0"));
            }
        }
        if self.frame_rate_hz == 0 || self.frame_rate_hz > 1000 {
            return Err("frame_rate_hz must be in 1..=1000".into());
        }
        Ok(())
    }
}

/// Timestamp of frame `n`: `n * 1000 / rate` rounded to the nearest ms, so
/// intervals are exact when the rate divides 1000 and never drift otherwise.
pub(crate) fn frame_time(n: u64, rate_hz: u32) -> u64 {
    let rate = rate_hz as u64;
    (2 * n * 1000 + rate) / (2 * rate)
}

/// Generates a trace for one study trial using the default kernel config
/// for the trial's methods.
pub fn synth_trace(trial: &TrialSpec, user: &SyntheticUserParams, seed: u64) -> Trace {
    let scene = build_study_scene(&trial.scene_spec()).expect("trial spec is valid");
    let config = KernelConfig::with_methods(trial.switch, trial.orient);
    synth_trace_with(trial, &scene, &config, user, seed)
}

pub fn synth_trace_with(
    trial: &TrialSpec,
    scene: &StudyScene,
    config: &KernelConfig,
    user: &SyntheticUserParams,
    seed: u64,
) -> Trace {
    let mut config = *config;
    config.switch_method = trial.switch;
    config.orientation_method = trial.orient;
    let mut session = Session::new(scene, config, user, seed);
    session.perform_trial();
    Trace {
        header: Some(TraceHeader {
            config,
            scene: Some(SceneRef::Study {
                depth_m: trial.depth_m,
                rotation_deg: trial.rotation_deg,
            }),
            seed,
        }),
        frames: session.frames,
    }
}

const HEAD_LOCAL: Vec3 = Vec3::new(0.0, 1.2, 0.0);
const HAND_LOCAL: Vec3 = Vec3::new(-0.15, 1.0, 0.3);
const SHOULDER_LOCAL: Vec3 = Vec3::new(-0.15, 1.05, 0.0);
const DRAW_PITCH: f64 = -30.0;
/// Generous upper bound on a single trial.
const MAX_TRIAL_MS: u64 = 60_000;

fn min_jerk(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
}

fn pitch_of(dir: Vec3) -> f64 {
    dir.y.clamp(-1.0, 1.0).asin().to_degrees()
}

/// Perturbs a direction by yaw/pitch offsets in degrees.
fn perturb(dir: Vec3, d_yaw: f64, d_pitch: f64) -> Vec3 {
    if d_yaw == 0.0 && d_pitch == 0.0 {
        return dir;
    }
    let yaw = yaw_of(dir).unwrap_or(0.0);
    let pitch = pitch_of(dir);
    UnitQuat::from_yaw_pitch(yaw + d_yaw, (pitch + d_pitch).clamp(-89.0, 89.0)).rotate(Vec3::Z)
}

/// Stylus orientation whose pointing end aims along `dir` (tracking space).
fn pointing_rotation(dir: Vec3, method: SwitchMethod) -> UnitQuat {
    let yaw = yaw_of(dir).unwrap_or(0.0);
    let pitch = pitch_of(dir);
    match method {
        SwitchMethod::Button => UnitQuat::from_yaw_pitch(yaw, pitch),
        SwitchMethod::Flip => UnitQuat::from_yaw_pitch(yaw + 180.0, -pitch),
    }
}

/// Height of the arc over horizontal distance `d` at launch pitch `pitch`.
fn arc_height_at(origin_y: f64, d: f64, pitch: f64, params: &ParabolaParams) -> f64 {
    let (s, c) = pitch.sin_cos();
    let t = d / (params.speed * c);
    origin_y + params.speed * s * t - 0.5 * params.gravity * t * t
}

/// Launch direction (world) from a stylus centered at `center` whose pointing
/// end sits `half_len` along the direction, so that the arc passes through
/// `target`. Takes the flatter of the two ballistic solutions.
pub(crate) fn solve_launch(
    center: Vec3,
    target: Vec3,
    params: &ParabolaParams,
    half_len: f64,
) -> Option<Vec3> {
    let mut dir = (target - center).normalized()?;
    for _ in 0..12 {
        let origin = center + dir * half_len;
        let delta = target - origin;
        let d = delta.horizontal().length();
        if d < 1e-6 {
            return None;
        }
        let yaw = delta.x.atan2(delta.z);
        let mut lo = -85f64.to_radians();
        let mut hi = (params.speed * params.speed / (params.gravity * d)).atan();
        let f = |p: f64| arc_height_at(origin.y, d, p, params) - target.y;
        if f(lo) > 0.0 || f(hi) < 0.0 {
            return None;
        }
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let pitch = 0.5 * (lo + hi);
        let (sp, cp) = pitch.sin_cos();
        dir = Vec3::new(cp * yaw.sin(), sp, cp * yaw.cos());
    }
    Some(dir)
}

/// Places where an orientation cursor can sit so that its bearing from the
/// destination is the bearing to the sphere midpoint: the midpoint itself,
/// then ground points along that bearing line.
fn orientation_candidates(destination: Vec3, midpoint: Vec3) -> Vec<Vec3> {
    let mut out = vec![midpoint];
    if let Some(u) = (midpoint - destination).horizontal().normalized() {
        for s in [0.35, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0] {
            let p = destination + u * s;
            out.push(Vec3::new(p.x, 0.0, p.z));
        }
    }
    out
}

struct Session<'a> {
    kernel: Kernel,
    config: KernelConfig,
    scene: &'a StudyScene,
    user: &'a SyntheticUserParams,
    rng: ChaCha8Rng,
    frames: Vec<InputFrame>,
    frame_index: u64,
    head: Pose,
    stylus: StylusSample,
    /// World point the eyes fixate, when gaze is tracked.
    look_at: Option<Vec3>,
}

impl<'a> Session<'a> {
    fn new(
        scene: &'a StudyScene,
        config: KernelConfig,
        user: &'a SyntheticUserParams,
        seed: u64,
    ) -> Self {
        let kernel =
            Kernel::new(config, scene.scene.clone(), scene.start_pose).expect("valid config");
        let gaze = config.orientation_method == OrientMethod::GazePoint;
        Self {
            kernel,
            config,
            scene,
            user,
            rng: ChaCha8Rng::seed_from_u64(seed),
            frames: Vec::new(),
            frame_index: 0,
            head: Pose::new(HEAD_LOCAL, UnitQuat::IDENTITY),
            stylus: StylusSample {
                position: HAND_LOCAL,
                rotation: UnitQuat::from_yaw_pitch(0.0, DRAW_PITCH),
                front: false,
                rear: false,
            },
            look_at: gaze.then(|| scene.sphere_midpoint()),
        }
    }

    fn frame_ms(&self) -> f64 {
        1000.0 / self.user.frame_rate_hz as f64
    }

    fn now(&self) -> u64 {
        frame_time(self.frame_index, self.user.frame_rate_hz)
    }

    fn normal(&mut self, mean: f64, sd: f64) -> f64 {
        if sd <= 0.0 {
            return mean;
        }
        Normal::new(mean, sd)
            .expect("finite sd")
            .sample(&mut self.rng)
    }

    fn duration(&mut self, mean: f64, sd: f64, min: f64) -> f64 {
        self.normal(mean, sd).max(min)
    }

    fn exhausted(&self) -> bool {
        self.now() > MAX_TRIAL_MS
    }

    fn gaze_sample(&mut self) -> Option<GazeSample> {
        let target = self.look_at?;
        let user = self.kernel.state().user;
        let eye = user.point_to_world(self.head.position);
        let ideal = (target - eye).normalized()?;
        let sd = self.user.gaze_noise_deg;
        let (dy, dp) = (self.normal(0.0, sd), self.normal(0.0, sd));
        let dir = perturb(ideal, dy, dp);
        Some(GazeSample {
            origin: self.head.position,
            dir: user.dir_to_local(dir),
            valid: true,
        })
    }

    fn tick(&mut self) -> Vec<KernelEvent> {
        let gaze = self.gaze_sample();
        let frame = InputFrame {
            t: self.now(),
            stylus: self.stylus,
            head: self.head,
            gaze,
        };
        self.frame_index += 1;
        self.frames.push(frame);
        self.kernel
            .step(&frame)
            .expect("generator time is monotonic")
    }

    fn wait_ms(&mut self, ms: f64) {
        let n = (ms / self.frame_ms()).ceil().max(1.0) as usize;
        for _ in 0..n {
            self.tick();
        }
    }

    fn wait_for_mode(&mut self, mode: Mode, max_ms: f64) -> bool {
        let n = (max_ms / self.frame_ms()).ceil() as usize;
        for _ in 0..n {
            if self.kernel.state().mode == mode {
                return true;
            }
            self.tick();
        }
        self.kernel.state().mode == mode
    }

    /// Minimum-jerk move of the stylus orientation and (optionally) position.
    fn move_stylus(&mut self, to_rot: UnitQuat, to_pos: Option<Vec3>, ms: f64) {
        let from_rot = self.stylus.rotation;
        let from_pos = self.stylus.position;
        let n = (ms / self.frame_ms()).ceil().max(1.0) as usize;
        for i in 1..=n {
            let s = min_jerk(i as f64 / n as f64);
            self.stylus.rotation = from_rot.slerp(to_rot, s);
            if let Some(p) = to_pos {
                self.stylus.position = from_pos.lerp(p, s);
            }
            self.tick();
        }
        self.stylus.rotation = to_rot;
        if let Some(p) = to_pos {
            self.stylus.position = p;
        }
    }

    /// Two-phase pointing move to a final (already noisy) direction.
    fn point_to(&mut self, final_dir_local: Vec3) {
        let method = self.config.switch_method;
        let move_ms = self.duration(self.user.move_ms_mean, 0.2 * self.user.move_ms_mean, 150.0);
        let coarse_sd = 3.0 * self.user.aim_noise_deg;
        let (dy, dp) = (self.normal(0.0, coarse_sd), self.normal(0.0, coarse_sd));
        let coarse = perturb(final_dir_local, dy, dp);
        self.move_stylus(pointing_rotation(coarse, method), None, 0.65 * move_ms);
        self.move_stylus(
            pointing_rotation(final_dir_local, method),
            None,
            0.35 * move_ms,
        );
    }

    fn stylus_center_world(&self) -> Vec3 {
        self.kernel
            .state()
            .user
            .point_to_world(self.stylus.position)
    }

    fn launch_local(&self, target: Vec3) -> Option<Vec3> {
        let dir = solve_launch(
            self.stylus_center_world(),
            target,
            &self.config.parabola,
            self.config.stylus_half_length_m,
        )?;
        Some(self.kernel.state().user.dir_to_local(dir))
    }

    fn with_aim_noise(&mut self, dir: Vec3) -> Vec3 {
        let sd = self.user.aim_noise_deg;
        let (dy, dp) = (self.normal(0.0, sd), self.normal(0.0, sd));
        perturb(dir, dy, dp)
    }

    fn switch_in(&mut self) {
        match self.config.switch_method {
            SwitchMethod::Button => self.click_rear(),
            SwitchMethod::Flip => {
                let ms = self.duration(400.0, 60.0, 150.0);
                let neutral = UnitQuat::from_yaw_pitch(0.0, -10.0).rotate(Vec3::Z);
                self.move_stylus(pointing_rotation(neutral, SwitchMethod::Flip), None, ms);
            }
        }
    }

    fn switch_out(&mut self) {
        match self.config.switch_method {
            SwitchMethod::Button => self.click_rear(),
            SwitchMethod::Flip => {
                let ms = self.duration(400.0, 60.0, 150.0);
                self.move_stylus(UnitQuat::from_yaw_pitch(0.0, DRAW_PITCH), None, ms);
            }
        }
    }

    fn click_rear(&mut self) {
        let press = self.duration(110.0, 25.0, 40.0);
        self.stylus.rear = true;
        self.wait_ms(press);
        self.stylus.rear = false;
        self.tick();
    }

    fn perform_trial(&mut self) {
        // Trial start: the participant has just pressed the start button.
        self.tick();
        let reaction = self.duration(self.user.reaction_ms_mean, self.user.reaction_ms_sd, 100.0);
        self.wait_ms(reaction);

        self.switch_in();
        if !self.wait_for_mode(Mode::Teleport, 2000.0) {
            return;
        }

        // Positioning.
        let marker = self.scene.marker_center;
        if self.config.orientation_method == OrientMethod::GazePoint {
            self.look_at = Some(marker);
        }
        let Some(ideal) = self.launch_local(marker) else {
            return;
        };
        let aim = self.with_aim_noise(ideal);
        self.point_to(aim);
        self.wait_ms(self.frame_ms());
        if self.kernel.state().cursor().is_none() {
            // The cursor disappeared; correct straight onto the marker.
            self.move_stylus(
                pointing_rotation(ideal, self.config.switch_method),
                None,
                200.0,
            );
            self.wait_ms(self.frame_ms());
            if self.kernel.state().cursor().is_none() {
                self.wait_ms(300.0);
                return;
            }
        }
        let settle = self.duration(150.0, 40.0, 30.0);
        self.wait_ms(settle);

        // Press and orient.
        self.stylus.front = true;
        let events = self.tick();
        let Some(destination) = events.iter().find_map(|e| match e {
            KernelEvent::HoldStarted { destination } => Some(*destination),
            _ => None,
        }) else {
            self.stylus.front = false;
            self.wait_ms(300.0);
            return;
        };
        let pass_through = match &self.kernel.state().phase {
            Phase::OrientHold(h) => h.pass_through.clone(),
            _ => Vec::new(),
        };
        let midpoint = self.scene.sphere_midpoint();
        let bearing = yaw_of(midpoint - destination).unwrap_or(0.0);
        let target = self.choose_orientation_target(destination, midpoint, bearing, &pass_through);
        if self.config.orientation_method == OrientMethod::GazePoint {
            self.look_at = Some(target);
        }
        let press_t = self.frames.last().map(|f| f.t).unwrap_or(0);
        while self.now() < press_t + self.config.hold_threshold_ms + 1 {
            self.tick();
        }
        match self.config.orientation_method {
            OrientMethod::Roll => self.roll_to(bearing),
            OrientMethod::StylusPoint => {
                if let Some(dir) = self.launch_local(target) {
                    let aim = self.with_aim_noise(dir);
                    self.point_to(aim);
                }
            }
            OrientMethod::GazePoint => {
                let window_ms = self.config.gaze_window as f64 * self.frame_ms();
                self.wait_ms(window_ms);
            }
        }
        let dwell = self.duration(
            self.user.hold_ms_mean,
            self.user.hold_ms_sd,
            2.0 * self.frame_ms(),
        );
        self.wait_ms(dwell);
        self.stylus.front = false;
        self.tick();

        // Back to drawing.
        let pause = self.duration(
            0.6 * self.user.reaction_ms_mean,
            self.user.reaction_ms_sd,
            80.0,
        );
        self.wait_ms(pause);
        self.switch_out();
        if !self.wait_for_mode(Mode::Draw, 2000.0) || self.exhausted() {
            return;
        }
        self.look_at = self.look_at.map(|_| midpoint);
        self.draw_stroke();
        self.wait_ms(200.0);
    }

    fn roll_to(&mut self, bearing: f64) {
        let user = self.kernel.state().user;
        let head_yaw = yaw_of(user.dir_to_world(self.head.forward())).unwrap_or(user.yaw_deg);
        let twist_noise = self.normal(0.0, self.user.aim_noise_deg);
        let twist = wrap_deg(bearing - head_yaw) / self.config.roll_gain + twist_noise;
        let base = self.stylus.rotation;
        let axis = match self.config.switch_method {
            SwitchMethod::Button => base.rotate(Vec3::Z),
            SwitchMethod::Flip => -base.rotate(Vec3::Z),
        };
        let ms = self.duration(self.user.move_ms_mean, 0.2 * self.user.move_ms_mean, 150.0);
        let n = (ms / self.frame_ms()).ceil().max(1.0) as usize;
        for i in 1..=n {
            let s = min_jerk(i as f64 / n as f64);
            self.stylus.rotation = UnitQuat::from_axis_angle(axis, twist * s) * base;
            self.tick();
        }
    }

    /// Heading the orientation controller would report when the user aims
    /// at `p`, with the aim perturbed by (`d_yaw`, `d_pitch`) degrees.
    fn controller_yaw(
        &self,
        destination: Vec3,
        p: Vec3,
        pass_through: &[crate::scene::ObjectId],
        d_yaw: f64,
        d_pitch: f64,
    ) -> Option<(f64, Vec3)> {
        let scene = &self.scene.scene;
        let fix = match self.config.orientation_method {
            OrientMethod::Roll => return None,
            OrientMethod::StylusPoint => {
                let center = self.stylus_center_world();
                let half = self.config.stylus_half_length_m;
                let dir = solve_launch(center, p, &self.config.parabola, half)?;
                let dir = perturb(dir, d_yaw, d_pitch);
                point_controller(
                    destination,
                    center + dir * half,
                    dir,
                    &self.config.parabola,
                    scene,
                    pass_through,
                )
            }
            OrientMethod::GazePoint => {
                let eye = self.kernel.state().user.point_to_world(self.head.position);
                let dir = perturb((p - eye).normalized()?, d_yaw, d_pitch);
                gaze_controller(destination, eye, dir, scene, pass_through)
            }
        }?;
        Some((fix.yaw_deg, fix.cursor))
    }

    /// Picks where to point or look. Among candidates that reproduce the
    /// target heading exactly, prefers the one whose heading moves least
    /// when the aim is off by a degree.
    fn choose_orientation_target(
        &self,
        destination: Vec3,
        midpoint: Vec3,
        bearing: f64,
        pass_through: &[crate::scene::ObjectId],
    ) -> Vec3 {
        if self.config.orientation_method == OrientMethod::Roll {
            return midpoint;
        }
        let exact = |p: Vec3| {
            self.controller_yaw(destination, p, pass_through, 0.0, 0.0)
                .is_some_and(|(yaw, cursor)| {
                    wrap_deg(yaw - bearing).abs() < 0.02
                        && (cursor - destination).horizontal().length() >= 0.3
                })
        };
        let sensitivity = |p: Vec3| {
            [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)]
                .iter()
                .map(|&(dy, dp)| {
                    self.controller_yaw(destination, p, pass_through, dy, dp)
                        .map_or(180.0, |(yaw, _)| wrap_deg(yaw - bearing).abs())
                })
                .fold(0.0, f64::max)
        };
        orientation_candidates(destination, midpoint)
            .into_iter()
            .filter(|p| exact(*p))
            .map(|p| (sensitivity(p), p))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map_or(midpoint, |(_, p)| p)
    }

    fn draw_stroke(&mut self) {
        let user = self.kernel.state().user;
        let a = user.point_to_local(self.scene.sphere_a());
        let b = user.point_to_local(self.scene.sphere_b());
        let Some(along) = (b - a).normalized() else {
            return;
        };
        let overshoot = self.scene.sphere_radius;
        let start = a - along * overshoot;
        let end = b + along * overshoot;
        let rot = UnitQuat::from_yaw_pitch(0.0, DRAW_PITCH);
        let half = self.config.stylus_half_length_m;
        let reach = self.user.reach_m;
        let center_for = |tip: Vec3| {
            let off = tip - SHOULDER_LOCAL;
            let len = off.length();
            let tip = if len > reach {
                SHOULDER_LOCAL + off * (reach / len)
            } else {
                tip
            };
            tip - rot.rotate(Vec3::Z) * half
        };
        let approach = self.duration(350.0, 60.0, 100.0);
        self.move_stylus(rot, Some(center_for(start)), approach);
        self.stylus.front = true;
        self.tick();
        let stroke_ms = self.duration(500.0, 80.0, 150.0);
        let n = (stroke_ms / self.frame_ms()).ceil().max(2.0) as usize;
        for i in 1..=n {
            let s = i as f64 / n as f64;
            self.stylus.position = center_for(start.lerp(end, s));
            self.tick();
        }
        self.stylus.front = false;
        self.tick();
        // Small random drift keeps repeated strokes distinct across seeds.
        let _ = self.rng.gen::<u32>();
    }
}
