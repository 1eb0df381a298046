//! Headless interaction kernel for stylus-driven VR teleportation.
//!
//! The crate is organised bottom-up:
//!
//! - [`geom`]: vectors, quaternions, parabola and ray casting.
//! - [`scene`]: scene primitives and the study-corridor builder.
//! - [`kernel`]: the input-frame state machine (mode switching, positioning,
//!   orientation control, teleport commits).
//! - [`trace`]: JSONL input traces and the seeded synthetic user.
//! - [`harness`]: study design, trial replay and metrics.
//! - [`stats`]: outlier filtering, multiple-comparison correction, summaries.
//! - [`protocol`]: the NDJSON session protocol used by the live playground.

pub mod geom;
pub mod harness;
pub mod kernel;
pub mod protocol;
pub mod scene;
pub mod stats;
pub mod trace;

pub use geom::{Hit, ParabolaParams, Pose, UnitQuat, UserPose, Vec3};
pub use kernel::{InputFrame, Kernel, KernelConfig, KernelEvent, KernelState};
pub use scene::{Scene, SceneObject, StudyScene, TrialSceneSpec};
