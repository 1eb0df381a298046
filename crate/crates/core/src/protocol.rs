//! NDJSON session protocol for driving a kernel live.
//!
//! Client lines:
//!
//! ```text
//! {"kind":"config", <any KernelConfig fields>, "scene":{...}?, "study":{"depth_m":3,"rotation_deg":45}?}
//! {"kind":"frame", <InputFrame fields>}
//! {"kind":"reset"}
//! {"kind":"heartbeat"}
//! ```
//!
//! Server lines: `{"kind":"state",...}` followed by `{"kind":"events","events":[...]}`
//! for every frame; `{"kind":"state",...}` after config and reset;
//! `{"kind":"error","msg":...}` for anything rejected (the session continues);
//! `{"kind":"reset","reason":...}` when the session resets itself and
//! `{"kind":"busy","msg":...}` to a client turned away.

use serde::{Deserialize, Serialize};

use crate::geom::{ParabolaParams, UserPose};
use crate::kernel::{
    InputFrame, Kernel, KernelConfig, KernelEvent, KernelState, OrientMethod, SwitchMethod,
};
use crate::scene::{build_study_scene, StudyScene, TrialSceneSpec};

/// Seconds without any client message before the session resets.
pub const HEARTBEAT_TIMEOUT_SECS: u64 = 5;

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyRef {
    pub depth_m: f64,
    pub rotation_deg: f64,
}

/// Partial config: absent fields keep their current value.
#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigUpdate {
    pub switch_method: Option<SwitchMethod>,
    pub orientation_method: Option<OrientMethod>,
    pub flip_on_deg: Option<f64>,
    pub flip_off_deg: Option<f64>,
    pub hold_threshold_ms: Option<u64>,
    pub roll_gain: Option<f64>,
    pub gaze_window: Option<usize>,
    pub parabola: Option<ParabolaParams>,
    pub stylus_half_length_m: Option<f64>,
    pub scene: Option<StudyScene>,
    pub study: Option<StudyRef>,
    pub start: Option<UserPose>,
}

impl ConfigUpdate {
    pub fn apply(&self, base: &KernelConfig) -> KernelConfig {
        let mut c = *base;
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { c.$f = v; } )* };
        }
        set!(
            switch_method,
            orientation_method,
            flip_on_deg,
            flip_off_deg,
            hold_threshold_ms,
            roll_gain,
            gaze_window,
            parabola,
            stylus_half_length_m
        );
        c
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClientMessage {
    Config(Box<ConfigUpdate>),
    Frame(InputFrame),
    Reset,
    Heartbeat,
}

impl ClientMessage {
    pub fn parse(line: &str) -> Result<Self, String> {
        serde_json::from_str(line).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ServerMessage {
    State(Box<KernelState>),
    Events { events: Vec<KernelEvent> },
    Error { msg: String },
    Reset { reason: String },
    Busy { msg: String },
}

impl ServerMessage {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("server message serializes")
    }
}

/// The scene a fresh session starts with.
pub fn default_scene() -> StudyScene {
    build_study_scene(&TrialSceneSpec::new(3.0, 45.0).expect("study values"))
        .expect("study scene builds")
}

/// One client's session. Pure: the transport feeds lines in and writes the
/// returned messages out in order.
#[derive(Debug, Clone)]
pub struct Session {
    kernel: Kernel,
    scene: StudyScene,
    start: UserPose,
}

impl Default for Session {
    fn default() -> Self {
        let scene = default_scene();
        Self::new(KernelConfig::default(), scene).expect("default config is valid")
    }
}

impl Session {
    pub fn new(
        config: KernelConfig,
        scene: StudyScene,
    ) -> Result<Self, crate::kernel::KernelError> {
        let start = scene.start_pose;
        let kernel = Kernel::new(config, scene.scene.clone(), start)?;
        Ok(Self {
            kernel,
            scene,
            start,
        })
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn scene(&self) -> &StudyScene {
        &self.scene
    }

    fn state_msg(&self) -> ServerMessage {
        ServerMessage::State(Box::new(self.kernel.state().clone()))
    }

    fn error(msg: impl Into<String>) -> Vec<ServerMessage> {
        vec![ServerMessage::Error { msg: msg.into() }]
    }

    pub fn handle_line(&mut self, line: &str) -> Vec<ServerMessage> {
        match ClientMessage::parse(line) {
            Ok(msg) => self.handle(msg),
            Err(e) => Self::error(format!("malformed message: {e}")),
        }
    }

    pub fn handle(&mut self, msg: ClientMessage) -> Vec<ServerMessage> {
        match msg {
            ClientMessage::Frame(frame) => match self.kernel.step(&frame) {
                Ok(events) => vec![self.state_msg(), ServerMessage::Events { events }],
                Err(e) => Self::error(e.to_string()),
            },
            ClientMessage::Config(update) => self.configure(&update),
            ClientMessage::Reset => {
                self.kernel.reset(self.start);
                vec![self.state_msg()]
            }
            ClientMessage::Heartbeat => Vec::new(),
        }
    }

    /// Applies a config update. Any accepted update restarts the kernel.
    fn configure(&mut self, update: &ConfigUpdate) -> Vec<ServerMessage> {
        let config = update.apply(self.kernel.config());
        let scene = match (&update.scene, &update.study) {
            (Some(_), Some(_)) => return Self::error("give either scene or study, not both"),
            (Some(s), None) => match s.validate() {
                Ok(()) => s.clone(),
                Err(e) => return Self::error(format!("invalid scene: {e}")),
            },
            (None, Some(r)) => {
                match TrialSceneSpec::new(r.depth_m, r.rotation_deg)
                    .and_then(|spec| build_study_scene(&spec))
                {
                    Ok(s) => s,
                    Err(e) => return Self::error(format!("invalid study: {e}")),
                }
            }
            (None, None) => self.scene.clone(),
        };
        let start = update.start.unwrap_or(scene.start_pose);
        match Kernel::new(config, scene.scene.clone(), start) {
            Ok(kernel) => {
                self.kernel = kernel;
                self.scene = scene;
                self.start = start;
                vec![self.state_msg()]
            }
            Err(e) => Self::error(e.to_string()),
        }
    }

    /// Called by the transport when the heartbeat lapses.
    pub fn timeout_reset(&mut self) -> ServerMessage {
        self.kernel.reset(self.start);
        ServerMessage::Reset {
            reason: format!("no message for {HEARTBEAT_TIMEOUT_SECS} s"),
        }
    }
}
