//! The interaction state machine.
//!
//! [`step`] consumes one [`InputFrame`] and returns the next [`KernelState`]
//! plus the events emitted on that frame. Device poses in a frame are in the
//! tracking space of the user: the kernel places them in the world through
//! the current [`UserPose`], and a teleport commit moves that pose.
//!
//! Device conventions: the stylus tip is local +z and its pose origin is the
//! barrel center, so tip and tail sit half a stylus length either side. The
//! camera looks along head local +z.
//!
//! Frame flow in teleport mode:
//!
//! 1. `Aiming`: the positioning arc is cast each frame; a ground hit is a
//!    valid cursor. Pressing a teleport button on a valid cursor freezes it.
//! 2. `OrientHold`: once the press has lasted `hold_threshold_ms`, the
//!    configured orientation controller produces a preview yaw every frame.
//! 3. Release commits the teleport. A release before the threshold keeps the
//!    user's yaw; after it, the last preview (if any) is applied.
//! 4. `Committing`: waits until every teleport button is up again.

use std::cmp::Ordering;
use std::collections::{HashSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{
    angle_between, cast_parabola, intersect_parabola, intersect_ray, segment_blocked, twist_delta,
    wrap_deg, yaw_of, ParabolaParams, PassThrough, Pose, UserPose, Vec3,
};
use crate::scene::{ObjectId, Scene, Shape};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error("frame time {t} ms does not advance past {prev} ms")]
    NonMonotonicTime { prev: u64, t: u64 },
    #[error("invalid kernel config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwitchMethod {
    Button,
    Flip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrientMethod {
    Roll,
    StylusPoint,
    GazePoint,
}

impl SwitchMethod {
    pub const ALL: [SwitchMethod; 2] = [SwitchMethod::Button, SwitchMethod::Flip];

    pub fn as_str(self) -> &'static str {
        match self {
            SwitchMethod::Button => "button",
            SwitchMethod::Flip => "flip",
        }
    }
}

impl OrientMethod {
    pub const ALL: [OrientMethod; 3] = [
        OrientMethod::Roll,
        OrientMethod::StylusPoint,
        OrientMethod::GazePoint,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OrientMethod::Roll => "roll",
            OrientMethod::StylusPoint => "stylus_point",
            OrientMethod::GazePoint => "gaze_point",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelConfig {
    pub switch_method: SwitchMethod,
    pub orientation_method: OrientMethod,
    /// Stylus-to-camera angle above which the stylus counts as flipped.
    pub flip_on_deg: f64,
    /// Angle below which a flipped stylus counts as unflipped again.
    pub flip_off_deg: f64,
    pub hold_threshold_ms: u64,
    pub roll_gain: f64,
    pub gaze_window: usize,
    pub parabola: ParabolaParams,
    pub stylus_half_length_m: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            switch_method: SwitchMethod::Button,
            orientation_method: OrientMethod::Roll,
            flip_on_deg: 120.0,
            flip_off_deg: 110.0,
            hold_threshold_ms: 200,
            roll_gain: 1.5,
            gaze_window: 10,
            parabola: ParabolaParams::default(),
            // 164 mm stylus.
            stylus_half_length_m: 0.082,
        }
    }
}

impl KernelConfig {
    pub fn with_methods(switch_method: SwitchMethod, orientation_method: OrientMethod) -> Self {
        Self {
            switch_method,
            orientation_method,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), KernelError> {
        let bad = |m: &str| Err(KernelError::InvalidConfig(m.to_owned()));
        if self.flip_off_deg.partial_cmp(&self.flip_on_deg) != Some(Ordering::Less) {
            return bad("flip_off_deg must be below flip_on_deg");
        }
        if self.hold_threshold_ms == 0 {
            return bad("hold_threshold_ms must be > 0");
        }
        if !(self.roll_gain.is_finite() && self.roll_gain > 0.0) {
            return bad("roll_gain must be > 0");
        }
        if self.gaze_window == 0 {
            return bad("gaze_window must be >= 1");
        }
        if !(self.stylus_half_length_m.is_finite() && self.stylus_half_length_m >= 0.0) {
            return bad("stylus_half_length_m must be >= 0");
        }
        self.parabola
            .validate()
            .map_err(|e| KernelError::InvalidConfig(format!("parabola: {e}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StylusSample {
    #[serde(rename = "p")]
    pub position: Vec3,
    #[serde(rename = "q")]
    pub rotation: crate::geom::UnitQuat,
    pub front: bool,
    pub rear: bool,
}

impl StylusSample {
    pub fn pose(&self) -> Pose {
        Pose::new(self.position, self.rotation)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GazeSample {
    #[serde(rename = "o")]
    pub origin: Vec3,
    #[serde(rename = "d")]
    pub dir: Vec3,
    pub valid: bool,
}

/// One timestamped input sample, in tracking space.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputFrame {
    pub t: u64,
    pub stylus: StylusSample,
    pub head: Pose,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gaze: Option<GazeSample>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Draw,
    Teleport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Button {
    Front,
    Rear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PressKind {
    Click,
    Hold,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenyReason {
    /// A teleport button is held; the mode is kept until release.
    HoldInProgress,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControllerState {
    /// Press not yet classified as a hold.
    Pending,
    Roll {
        initial_head_yaw: f64,
        accumulated_twist: f64,
        #[serde(skip)]
        last_rotation: crate::geom::UnitQuat,
    },
    Point,
    Gaze,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldState {
    pub press_t: u64,
    pub button: Button,
    pub destination: Vec3,
    pub classified_hold: bool,
    pub preview_yaw: Option<f64>,
    pub orientation_cursor: Option<Vec3>,
    /// Objects the positioning arc passed through when the press happened.
    pub pass_through: Vec<ObjectId>,
    pub controller: ControllerState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "phase", rename_all = "snake_case")]
pub enum Phase {
    Idle,
    Aiming { cursor: Option<Vec3> },
    OrientHold(HoldState),
    Committing,
}

/// Fixed-capacity window of recent valid gaze directions (tracking space).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GazeBuffer(VecDeque<Vec3>);

impl GazeBuffer {
    pub fn push(&mut self, dir: Vec3, window: usize) {
        if let Some(d) = dir.normalized() {
            self.0.push_back(d);
        }
        while self.0.len() > window {
            self.0.pop_front();
        }
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn clear(&mut self) {
        self.0.clear();
    }

    /// Renormalized mean of the buffered directions.
    pub fn smoothed(&self) -> Option<Vec3> {
        let sum = self.0.iter().fold(Vec3::ZERO, |acc, d| acc + *d);
        sum.normalized()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelState {
    pub mode: Mode,
    pub flipped: bool,
    #[serde(flatten)]
    pub phase: Phase,
    pub user: UserPose,
    pub gaze_buffer: GazeBuffer,
    pub translucent: Vec<ObjectId>,
    pub last_t: Option<u64>,
    pub front_down: bool,
    pub rear_down: bool,
    pub stroke_active: bool,
}

impl KernelState {
    pub fn new(start: UserPose) -> Self {
        Self {
            mode: Mode::Draw,
            flipped: false,
            phase: Phase::Idle,
            user: start,
            gaze_buffer: GazeBuffer::default(),
            translucent: Vec::new(),
            last_t: None,
            front_down: false,
            rear_down: false,
            stroke_active: false,
        }
    }

    /// The current valid positioning cursor, if aiming.
    pub fn cursor(&self) -> Option<Vec3> {
        match &self.phase {
            Phase::Aiming { cursor } => *cursor,
            Phase::OrientHold(h) => Some(h.destination),
            _ => None,
        }
    }
}

impl Default for KernelState {
    fn default() -> Self {
        Self::new(UserPose::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum KernelEvent {
    ModeSwitched {
        to: Mode,
    },
    CursorUpdated {
        position: Option<Vec3>,
    },
    /// Teleport button pressed on a valid cursor; the destination is frozen.
    HoldStarted {
        destination: Vec3,
    },
    OrientationPreview {
        yaw_deg: f64,
        cursor: Option<Vec3>,
    },
    TeleportCommitted {
        position: Vec3,
        yaw_deg: f64,
        orientation_changed: bool,
    },
    SwitchDenied {
        reason: DenyReason,
    },
    StrokeStarted {
        point: Vec3,
    },
    StrokeExtended {
        point: Vec3,
    },
    StrokeFinished,
}

impl KernelEvent {
    pub fn is_drawing(&self) -> bool {
        matches!(
            self,
            KernelEvent::StrokeStarted { .. }
                | KernelEvent::StrokeExtended { .. }
                | KernelEvent::StrokeFinished
        )
    }

    pub fn is_teleport(&self) -> bool {
        matches!(
            self,
            KernelEvent::CursorUpdated { .. }
                | KernelEvent::HoldStarted { .. }
                | KernelEvent::OrientationPreview { .. }
                | KernelEvent::TeleportCommitted { .. }
        )
    }
}

/// Hysteresis latch on the stylus-to-camera angle.
pub fn detect_flip(
    stylus_dir: Vec3,
    cam_forward: Vec3,
    currently_flipped: bool,
    config: &KernelConfig,
) -> bool {
    let angle = angle_between(stylus_dir, cam_forward);
    if angle > config.flip_on_deg {
        true
    } else if angle < config.flip_off_deg {
        false
    } else {
        currently_flipped
    }
}

pub fn classify_press(duration_ms: u64, threshold_ms: u64) -> PressKind {
    if duration_ms >= threshold_ms {
        PressKind::Hold
    } else {
        PressKind::Click
    }
}

/// Preview yaw for roll control: the starting head yaw turned by the
/// amplified accumulated stylus twist.
pub fn roll_controller(initial_head_yaw: f64, accumulated_twist: f64, gain: f64) -> f64 {
    wrap_deg(initial_head_yaw + gain * accumulated_twist)
}

/// A resolved orientation cursor and the heading it implies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientationFix {
    pub cursor: Vec3,
    pub yaw_deg: f64,
}

/// Heading from the destination toward an orientation cursor. Only the
/// horizontal offset matters; `None` when the cursor is straight above or
/// below the destination.
pub fn heading_to(destination: Vec3, cursor: Vec3) -> Option<f64> {
    yaw_of(cursor - destination).ok()
}

fn fix_from_cursor(destination: Vec3, cursor: Vec3) -> Option<OrientationFix> {
    heading_to(destination, cursor).map(|yaw_deg| OrientationFix { cursor, yaw_deg })
}

/// Casts the second (orientation) arc. It may land on any surface and passes
/// through the objects the positioning arc penetrated. `None` means the
/// previous preview should be kept.
pub fn point_controller(
    destination: Vec3,
    origin: Vec3,
    dir: Vec3,
    params: &ParabolaParams,
    scene: &Scene,
    pass_through: &[ObjectId],
) -> Option<OrientationFix> {
    let hit = cast_parabola(origin, dir, params, scene, PassThrough::Ids(pass_through))?;
    fix_from_cursor(destination, hit.point)
}

/// Casts the smoothed gaze ray. `None` means the previous preview should be
/// kept.
pub fn gaze_controller(
    destination: Vec3,
    gaze_origin: Vec3,
    smoothed_dir: Vec3,
    scene: &Scene,
    pass_through: &[ObjectId],
) -> Option<OrientationFix> {
    let skip: HashSet<ObjectId> = pass_through.iter().cloned().collect();
    let hit = intersect_ray(gaze_origin, smoothed_dir, scene, &skip)?;
    fix_from_cursor(destination, hit.point)
}

/// World-space launch point and direction of the stylus arc. With the flip
/// method the stylus is held tail-first, so the arc leaves the tail.
pub fn stylus_ray(stylus_world: &Pose, config: &KernelConfig) -> (Vec3, Vec3) {
    let fwd = stylus_world.forward();
    match config.switch_method {
        SwitchMethod::Button => (
            stylus_world.position + fwd * config.stylus_half_length_m,
            fwd,
        ),
        SwitchMethod::Flip => (
            stylus_world.position - fwd * config.stylus_half_length_m,
            -fwd,
        ),
    }
}

pub fn stylus_tip(stylus_world: &Pose, config: &KernelConfig) -> Vec3 {
    stylus_world.position + stylus_world.forward() * config.stylus_half_length_m
}

/// Horizontal heading of the head in world space.
fn head_yaw(user: &UserPose, head: &Pose) -> f64 {
    let fwd = user.dir_to_world(head.forward());
    yaw_of(fwd).unwrap_or(user.yaw_deg)
}

/// Positioning cast: returns the ground cursor (if any) and penetrated ids.
fn cast_cursor(
    origin: Vec3,
    dir: Vec3,
    config: &KernelConfig,
    scene: &Scene,
) -> (Option<Vec3>, Vec<ObjectId>) {
    match intersect_parabola(origin, dir, &config.parabola, scene, true) {
        Some(hit) => {
            let on_ground = scene
                .get(&hit.object_id)
                .is_some_and(|o| o.shape == Shape::GroundPlane);
            if on_ground {
                (
                    Some(Vec3::new(hit.point.x, 0.0, hit.point.z)),
                    hit.penetrated_ids,
                )
            } else {
                (None, Vec::new())
            }
        }
        None => (None, Vec::new()),
    }
}

/// Pure transition function.
pub fn step(
    state: &KernelState,
    frame: &InputFrame,
    config: &KernelConfig,
    scene: &Scene,
) -> Result<(KernelState, Vec<KernelEvent>), KernelError> {
    let mut next = state.clone();
    let events = advance(&mut next, frame, config, scene)?;
    Ok((next, events))
}

fn advance(
    s: &mut KernelState,
    frame: &InputFrame,
    config: &KernelConfig,
    scene: &Scene,
) -> Result<Vec<KernelEvent>, KernelError> {
    if let Some(prev) = s.last_t {
        if frame.t <= prev {
            return Err(KernelError::NonMonotonicTime { prev, t: frame.t });
        }
    }
    s.last_t = Some(frame.t);
    let mut events = Vec::new();

    let front = frame.stylus.front;
    let rear = frame.stylus.rear;
    let front_pressed = front && !s.front_down;
    let rear_pressed = rear && !s.rear_down;
    s.front_down = front;
    s.rear_down = rear;

    if let Some(g) = frame.gaze.filter(|g| g.valid) {
        s.gaze_buffer.push(g.dir, config.gaze_window);
    }

    let stylus_world = s.user.pose_to_world(&frame.stylus.pose());

    // Mode switching.
    let holding = matches!(s.phase, Phase::OrientHold(_));
    let request = match config.switch_method {
        SwitchMethod::Button => {
            if rear_pressed {
                Some((other_mode(s.mode), true))
            } else {
                None
            }
        }
        SwitchMethod::Flip => {
            let was = s.flipped;
            s.flipped = detect_flip(
                frame.stylus.rotation.rotate(Vec3::Z),
                frame.head.forward(),
                s.flipped,
                config,
            );
            let desired = if s.flipped {
                Mode::Teleport
            } else {
                Mode::Draw
            };
            (desired != s.mode).then_some((desired, s.flipped != was))
        }
    };
    if let Some((to, fresh)) = request {
        if holding {
            if fresh {
                events.push(KernelEvent::SwitchDenied {
                    reason: DenyReason::HoldInProgress,
                });
            }
        } else {
            switch_mode(s, to, &mut events);
            return Ok(events);
        }
    }

    match s.mode {
        Mode::Draw => {
            let tip = stylus_tip(&stylus_world, config);
            if front_pressed {
                s.stroke_active = true;
                events.push(KernelEvent::StrokeStarted { point: tip });
            } else if front && s.stroke_active {
                events.push(KernelEvent::StrokeExtended { point: tip });
            } else if !front && s.stroke_active {
                s.stroke_active = false;
                events.push(KernelEvent::StrokeFinished);
            }
        }
        Mode::Teleport => {
            let teleport_down = |b: Button| match (config.switch_method, b) {
                (_, Button::Front) => front,
                (SwitchMethod::Flip, Button::Rear) => rear,
                (SwitchMethod::Button, Button::Rear) => false,
            };
            let any_down = teleport_down(Button::Front) || teleport_down(Button::Rear);
            let pressed = if front_pressed {
                Some(Button::Front)
            } else if rear_pressed && config.switch_method == SwitchMethod::Flip {
                Some(Button::Rear)
            } else {
                None
            };

            if matches!(s.phase, Phase::Committing) && !any_down {
                s.phase = Phase::Aiming { cursor: None };
            }

            let (origin, dir) = stylus_ray(&stylus_world, config);
            // A launch point pushed through a wall or the floor casts nothing.
            let launch_clear =
                !segment_blocked(s.user.point_to_world(frame.head.position), origin, scene);
            match &mut s.phase {
                Phase::Aiming { cursor } => {
                    let (new_cursor, penetrated) = if launch_clear {
                        cast_cursor(origin, dir, config, scene)
                    } else {
                        (None, Vec::new())
                    };
                    if new_cursor != *cursor {
                        events.push(KernelEvent::CursorUpdated {
                            position: new_cursor,
                        });
                    }
                    *cursor = new_cursor;
                    s.translucent = penetrated;
                    if let (Some(button), Some(destination)) = (pressed, new_cursor) {
                        events.push(KernelEvent::HoldStarted { destination });
                        s.phase = Phase::OrientHold(HoldState {
                            press_t: frame.t,
                            button,
                            destination,
                            classified_hold: false,
                            preview_yaw: None,
                            orientation_cursor: None,
                            pass_through: s.translucent.clone(),
                            controller: ControllerState::Pending,
                        });
                    }
                }
                Phase::OrientHold(hold) => {
                    if !teleport_down(hold.button) {
                        let kind = classify_press(frame.t - hold.press_t, config.hold_threshold_ms);
                        let preview = match kind {
                            PressKind::Hold => hold.preview_yaw,
                            PressKind::Click => None,
                        };
                        let position = hold.destination;
                        let yaw_deg = preview.unwrap_or(s.user.yaw_deg);
                        s.user = UserPose::new(position, yaw_deg);
                        s.translucent.clear();
                        s.phase = Phase::Committing;
                        events.push(KernelEvent::TeleportCommitted {
                            position,
                            yaw_deg,
                            orientation_changed: preview.is_some(),
                        });
                        events.push(KernelEvent::CursorUpdated { position: None });
                    } else {
                        let elapsed = frame.t - hold.press_t;
                        if !hold.classified_hold
                            && classify_press(elapsed, config.hold_threshold_ms) == PressKind::Hold
                        {
                            hold.classified_hold = true;
                            hold.controller = match config.orientation_method {
                                OrientMethod::Roll => ControllerState::Roll {
                                    initial_head_yaw: head_yaw(&s.user, &frame.head),
                                    accumulated_twist: 0.0,
                                    last_rotation: stylus_world.rotation,
                                },
                                OrientMethod::StylusPoint => ControllerState::Point,
                                OrientMethod::GazePoint => ControllerState::Gaze,
                            };
                        }
                        if hold.classified_hold {
                            let fix = update_controller(
                                hold,
                                &stylus_world,
                                (origin, dir),
                                launch_clear,
                                frame,
                                &s.user,
                                &s.gaze_buffer,
                                config,
                                scene,
                            );
                            if let Some(fix) = fix {
                                hold.preview_yaw = Some(fix.yaw_deg);
                                hold.orientation_cursor = fix.cursor;
                            }
                            if let Some(yaw_deg) = hold.preview_yaw {
                                events.push(KernelEvent::OrientationPreview {
                                    yaw_deg,
                                    cursor: hold.orientation_cursor,
                                });
                            }
                        }
                    }
                }
                Phase::Committing | Phase::Idle => {}
            }
        }
    }
    Ok(events)
}

struct Preview {
    yaw_deg: f64,
    cursor: Option<Vec3>,
}

#[allow(clippy::too_many_arguments)]
fn update_controller(
    hold: &mut HoldState,
    stylus_world: &Pose,
    (origin, dir): (Vec3, Vec3),
    launch_clear: bool,
    frame: &InputFrame,
    user: &UserPose,
    gaze: &GazeBuffer,
    config: &KernelConfig,
    scene: &Scene,
) -> Option<Preview> {
    match &mut hold.controller {
        ControllerState::Pending => None,
        ControllerState::Roll {
            initial_head_yaw,
            accumulated_twist,
            last_rotation,
        } => {
            *accumulated_twist += twist_delta(*last_rotation, stylus_world.rotation, dir);
            *last_rotation = stylus_world.rotation;
            Some(Preview {
                yaw_deg: roll_controller(*initial_head_yaw, *accumulated_twist, config.roll_gain),
                cursor: None,
            })
        }
        ControllerState::Point if !launch_clear => None,
        ControllerState::Point => point_controller(
            hold.destination,
            origin,
            dir,
            &config.parabola,
            scene,
            &hold.pass_through,
        )
        .map(|f| Preview {
            yaw_deg: f.yaw_deg,
            cursor: Some(f.cursor),
        }),
        ControllerState::Gaze => {
            let sample = frame.gaze.filter(|g| g.valid)?;
            let local_dir = gaze.smoothed()?;
            gaze_controller(
                hold.destination,
                user.point_to_world(sample.origin),
                user.dir_to_world(local_dir),
                scene,
                &hold.pass_through,
            )
            .map(|f| Preview {
                yaw_deg: f.yaw_deg,
                cursor: Some(f.cursor),
            })
        }
    }
}

fn other_mode(m: Mode) -> Mode {
    match m {
        Mode::Draw => Mode::Teleport,
        Mode::Teleport => Mode::Draw,
    }
}

fn switch_mode(s: &mut KernelState, to: Mode, events: &mut Vec<KernelEvent>) {
    match s.mode {
        Mode::Draw => {
            if s.stroke_active {
                s.stroke_active = false;
                events.push(KernelEvent::StrokeFinished);
            }
        }
        Mode::Teleport => {
            if s.cursor().is_some() {
                events.push(KernelEvent::CursorUpdated { position: None });
            }
            s.translucent.clear();
        }
    }
    s.mode = to;
    s.phase = match to {
        Mode::Draw => Phase::Idle,
        Mode::Teleport => Phase::Aiming { cursor: None },
    };
    events.push(KernelEvent::ModeSwitched { to });
}

/// Owned kernel: config, scene and evolving state.
#[derive(Debug, Clone)]
pub struct Kernel {
    config: KernelConfig,
    scene: Scene,
    state: KernelState,
}

impl Kernel {
    pub fn new(config: KernelConfig, scene: Scene, start: UserPose) -> Result<Self, KernelError> {
        config.validate()?;
        Ok(Self {
            config,
            scene,
            state: KernelState::new(start),
        })
    }

    pub fn config(&self) -> &KernelConfig {
        &self.config
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn state(&self) -> &KernelState {
        &self.state
    }

    pub fn reset(&mut self, start: UserPose) {
        self.state = KernelState::new(start);
    }

    pub fn step(&mut self, frame: &InputFrame) -> Result<Vec<KernelEvent>, KernelError> {
        advance(&mut self.state, frame, &self.config, &self.scene)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::UnitQuat;
    use crate::scene::SceneObject;

    fn flat() -> Scene {
        Scene::new(vec![SceneObject::ground("ground")])
    }

    const HEAD: Pose = Pose {
        position: Vec3::new(0.0, 1.2, 0.0),
        rotation: UnitQuat::IDENTITY,
    };

    /// Stylus pointing along `yaw`/`pitch` from chest height.
    fn stylus(yaw: f64, pitch: f64, front: bool, rear: bool) -> StylusSample {
        StylusSample {
            position: Vec3::new(0.0, 1.0, 0.3),
            rotation: UnitQuat::from_yaw_pitch(yaw, pitch),
            front,
            rear,
        }
    }

    fn frame(t: u64, s: StylusSample) -> InputFrame {
        InputFrame {
            t,
            stylus: s,
            head: HEAD,
            gaze: None,
        }
    }

    fn run(k: &mut Kernel, frames: &[InputFrame]) -> Vec<(u64, KernelEvent)> {
        let mut out = Vec::new();
        for f in frames {
            for e in k.step(f).unwrap() {
                out.push((f.t, e));
            }
        }
        out
    }

    /// Enters teleport mode via the rear button, aims at the ground.
    fn enter_teleport(t0: u64, pitch: f64) -> Vec<InputFrame> {
        vec![
            frame(t0, stylus(0.0, pitch, false, false)),
            frame(t0 + 10, stylus(0.0, pitch, false, true)),
            frame(t0 + 20, stylus(0.0, pitch, false, false)),
            frame(t0 + 30, stylus(0.0, pitch, false, false)),
        ]
    }

    #[test]
    fn flip_latch_truth_table() {
        let c = KernelConfig::default();
        let at = |deg: f64| UnitQuat::from_yaw(deg).rotate(Vec3::Z);
        assert!(!detect_flip(at(0.0), Vec3::Z, false, &c));
        assert!(detect_flip(at(121.0), Vec3::Z, false, &c));
        assert!(detect_flip(at(115.0), Vec3::Z, true, &c));
        assert!(!detect_flip(at(115.0), Vec3::Z, false, &c));
        assert!(!detect_flip(at(109.0), Vec3::Z, true, &c));
        assert!(!detect_flip(at(120.0), Vec3::Z, false, &c));
    }

    #[test]
    fn press_classification() {
        assert_eq!(classify_press(150, 200), PressKind::Click);
        assert_eq!(classify_press(199, 200), PressKind::Click);
        assert_eq!(classify_press(200, 200), PressKind::Hold);
        assert_eq!(classify_press(0, 200), PressKind::Click);
    }

    #[test]
    fn roll_examples() {
        assert_eq!(roll_controller(12.0, 0.0, 1.5), 12.0);
        assert_eq!(roll_controller(0.0, 10.0, 1.5), 15.0);
        assert_eq!(roll_controller(30.0, -40.0, 1.5), -30.0);
        assert_eq!(roll_controller(170.0, 20.0, 1.5), -160.0);
    }

    #[test]
    fn point_controller_examples() {
        let fix = fix_from_cursor(Vec3::ZERO, Vec3::new(0.0, 0.5, 4.0)).unwrap();
        assert_eq!(fix.yaw_deg, 0.0);
        let fix = fix_from_cursor(Vec3::new(0.0, 0.0, 3.5), Vec3::new(3.0, 1.2, 6.5)).unwrap();
        assert!((fix.yaw_deg - 45.0).abs() < 1e-12);
        assert!(fix_from_cursor(Vec3::new(1.0, 0.0, 1.0), Vec3::new(1.0, 2.0, 1.0)).is_none());

        // Through the controller: an arc dropping straight down onto the
        // destination is degenerate and keeps the previous preview.
        let none = point_controller(
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            -Vec3::Y,
            &ParabolaParams::default(),
            &flat(),
            &[],
        );
        assert!(none.is_none());
    }

    #[test]
    fn gaze_buffer_window_and_mean() {
        let mut b = GazeBuffer::default();
        for i in 0..15 {
            b.push(UnitQuat::from_yaw(i as f64).rotate(Vec3::Z), 10);
        }
        assert_eq!(b.len(), 10);
        let yaw = yaw_of(b.smoothed().unwrap()).unwrap();
        assert!((yaw - 9.5).abs() < 1e-3, "{yaw}");
    }

    #[test]
    fn gaze_controller_examples() {
        let scene = flat();
        let dest = Vec3::ZERO;
        let eye = Vec3::new(0.0, 1.6, 0.0);
        let dir = Vec3::new(0.0, -0.1, 1.0).normalized().unwrap();
        let mut b = GazeBuffer::default();
        for _ in 0..10 {
            b.push(dir, 10);
        }
        let fix = gaze_controller(dest, eye, b.smoothed().unwrap(), &scene, &[]).unwrap();
        assert!((fix.cursor.z - 16.0).abs() < 1e-9);
        assert_eq!(fix.yaw_deg, 0.0);

        // Partial window: plain mean of what is buffered.
        let mut b = GazeBuffer::default();
        let dirs: Vec<Vec3> = (0..5)
            .map(|i| UnitQuat::from_yaw(2.0 * i as f64).rotate(dir))
            .collect();
        for d in &dirs {
            b.push(*d, 10);
        }
        let mean = dirs.iter().fold(Vec3::ZERO, |a, d| a + *d) / 5.0;
        assert!(b.smoothed().unwrap().distance(mean.normalized().unwrap()) < 1e-15);

        // Alternating ±5° about +z averages to straight ahead.
        let mut b = GazeBuffer::default();
        for i in 0..10 {
            let yaw = if i % 2 == 0 { 5.0 } else { -5.0 };
            b.push(UnitQuat::from_yaw(yaw).rotate(dir), 10);
        }
        let fix = gaze_controller(dest, eye, b.smoothed().unwrap(), &scene, &[]).unwrap();
        assert!(fix.yaw_deg.abs() < 0.01);
    }

    #[test]
    fn quick_click_keeps_yaw() {
        let mut k = Kernel::new(
            KernelConfig::default(),
            flat(),
            UserPose::new(Vec3::ZERO, 7.0),
        )
        .unwrap();
        let mut frames = enter_teleport(0, -20.0);
        frames.push(frame(1000, stylus(0.0, -20.0, true, false)));
        frames.push(frame(1050, stylus(0.0, -20.0, true, false)));
        frames.push(frame(1100, stylus(0.0, -20.0, false, false)));
        let events = run(&mut k, &frames);
        let cursor = events
            .iter()
            .filter_map(|(_, e)| match e {
                KernelEvent::CursorUpdated { position: Some(p) } => Some(*p),
                _ => None,
            })
            .next_back()
            .unwrap();
        let commit = events
            .iter()
            .find_map(|(t, e)| match e {
                KernelEvent::TeleportCommitted { .. } => Some((*t, e.clone())),
                _ => None,
            })
            .unwrap();
        assert_eq!(commit.0, 1100);
        assert_eq!(
            commit.1,
            KernelEvent::TeleportCommitted {
                position: cursor,
                yaw_deg: 7.0,
                orientation_changed: false
            }
        );
        assert_eq!(k.state().user, UserPose::new(cursor, 7.0));
    }

    #[test]
    fn hold_applies_roll_preview() {
        // Rolling the stylus 60° about its pointing axis previews a 90° turn.
        let mut k = Kernel::new(KernelConfig::default(), flat(), UserPose::default()).unwrap();
        let mut frames = enter_teleport(0, -20.0);
        let base = UnitQuat::from_yaw_pitch(0.0, -20.0);
        let axis = base.rotate(Vec3::Z);
        let at = |t: u64, twist: f64, front: bool| {
            let mut s = stylus(0.0, -20.0, front, false);
            s.rotation = UnitQuat::from_axis_angle(axis, twist) * base;
            frame(t, s)
        };
        frames.push(at(1000, 0.0, true));
        frames.push(at(1200, 0.0, true));
        for i in 1..=6 {
            frames.push(at(1200 + 50 * i, 10.0 * i as f64, true));
        }
        frames.push(at(1600, 60.0, false));
        let events = run(&mut k, &frames);
        let commit = events
            .iter()
            .find_map(|(_, e)| match e {
                KernelEvent::TeleportCommitted {
                    yaw_deg,
                    orientation_changed,
                    ..
                } => Some((*yaw_deg, *orientation_changed)),
                _ => None,
            })
            .unwrap();
        assert!((commit.0 - 90.0).abs() < 1e-9, "{commit:?}");
        assert!(commit.1);
        assert!(events
            .iter()
            .any(|(t, e)| *t == 1000 && matches!(e, KernelEvent::HoldStarted { .. })));
    }

    #[test]
    fn draw_mode_never_teleports() {
        let mut k = Kernel::new(KernelConfig::default(), flat(), UserPose::default()).unwrap();
        let frames: Vec<InputFrame> = (0..50)
            .map(|i| frame(i * 10, stylus(0.0, -20.0, i % 7 < 4, false)))
            .collect();
        let events = run(&mut k, &frames);
        assert!(!events.is_empty());
        assert!(events.iter().all(|(_, e)| e.is_drawing()));
        assert_eq!(k.state().mode, Mode::Draw);
    }

    #[test]
    fn rear_press_during_hold_is_denied() {
        let mut k = Kernel::new(KernelConfig::default(), flat(), UserPose::default()).unwrap();
        let mut frames = enter_teleport(0, -20.0);
        frames.push(frame(1000, stylus(0.0, -20.0, true, false)));
        frames.push(frame(1100, stylus(0.0, -20.0, true, true)));
        let events = run(&mut k, &frames);
        assert!(matches!(
            events.last().unwrap().1,
            KernelEvent::SwitchDenied { .. }
        ));
        assert_eq!(k.state().mode, Mode::Teleport);
    }

    #[test]
    fn flip_switches_modes_and_casts_from_tail() {
        let config = KernelConfig::with_methods(SwitchMethod::Flip, OrientMethod::StylusPoint);
        let mut k = Kernel::new(config, flat(), UserPose::default()).unwrap();
        // Tip pointing back over the shoulder: tail points forward and down.
        let flipped = stylus(180.0, 20.0, false, false);
        let events = run(
            &mut k,
            &[
                frame(0, stylus(0.0, -20.0, false, false)),
                frame(10, flipped),
                frame(20, flipped),
            ],
        );
        assert_eq!(
            events[0].1,
            KernelEvent::ModeSwitched { to: Mode::Teleport }
        );
        let cursor = k.state().cursor().unwrap();
        assert!(cursor.z > 0.0, "tail-first arc lands ahead: {cursor:?}");
        let events = run(&mut k, &[frame(30, stylus(0.0, -20.0, false, false))]);
        assert!(events
            .iter()
            .any(|(_, e)| *e == KernelEvent::ModeSwitched { to: Mode::Draw }));
    }

    #[test]
    fn rejects_time_going_backwards() {
        let mut k = Kernel::new(KernelConfig::default(), flat(), UserPose::default()).unwrap();
        k.step(&frame(10, stylus(0.0, 0.0, false, false))).unwrap();
        assert_eq!(
            k.step(&frame(10, stylus(0.0, 0.0, false, false))),
            Err(KernelError::NonMonotonicTime { prev: 10, t: 10 })
        );
    }

    #[test]
    fn config_validation() {
        assert!(KernelConfig::default().validate().is_ok());
        let bad = KernelConfig {
            flip_off_deg: 130.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = KernelConfig {
            gaze_window: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
