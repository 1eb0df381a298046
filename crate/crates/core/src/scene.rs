//! Scene model and the study-scene builder.
//!
//! A scene is a flat list of primitives: one ground plane at y = 0, oriented
//! boxes, and two-sided quads. Every object is placed by a position and a yaw.
//! A quad lies in its local xy plane; its front face looks along local -z, so a
//! quad with yaw 0 faces a viewer at the origin looking down +z.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{UnitQuat, UserPose, Vec3};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectId(String);

impl ObjectId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for ObjectId {
    fn from(s: &str) -> Self {
        ObjectId(s.to_owned())
    }
}

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SceneError {
    #[error("depth {0} m is not one of the study depths (3, 6)")]
    InvalidDepth(f64),
    #[error("rotation {0}° is not one of the study rotations (45, -45, 90, -90, 180)")]
    InvalidRotation(f64),
    #[error("unknown object id `{0}`")]
    UnknownObject(ObjectId),
    #[error("object `{0}` is not permeable")]
    NotPermeable(ObjectId),
    #[error("duplicate object id `{0}`")]
    DuplicateId(ObjectId),
    #[error("scene must contain exactly one ground plane at y = 0 (found {0})")]
    Ground(usize),
    #[error("object `{0}` has non-positive extents")]
    BadExtents(ObjectId),
    #[error("object `{0}` alpha outside [0, 1]")]
    BadAlpha(ObjectId),
    #[error("marker must lie on the ground plane (y = {0})")]
    MarkerOffGround(f64),
    #[error("sphere radius must be positive")]
    BadRadius,
    #[error("invalid scene json: {0}")]
    Json(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum Shape {
    #[serde(rename = "ground")]
    GroundPlane,
    Box {
        half_extents: Vec3,
    },
    Quad {
        width: f64,
        height: f64,
    },
}

/// Position plus heading of a scene object.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Placement {
    #[serde(rename = "p")]
    pub position: Vec3,
    pub yaw_deg: f64,
}

impl Placement {
    pub fn new(position: Vec3, yaw_deg: f64) -> Self {
        Self { position, yaw_deg }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneObject {
    pub id: ObjectId,
    pub shape: Shape,
    pub pose: Placement,
    pub permeable: bool,
    #[serde(rename = "alpha")]
    pub base_alpha: f64,
    #[serde(
        rename = "translucent",
        default,
        skip_serializing_if = "std::ops::Not::not"
    )]
    pub translucent_now: bool,
}

impl SceneObject {
    pub fn ground(id: &str) -> Self {
        Self {
            id: id.into(),
            shape: Shape::GroundPlane,
            pose: Placement::default(),
            permeable: false,
            base_alpha: 1.0,
            translucent_now: false,
        }
    }

    pub fn boxed(id: &str, half_extents: Vec3, pose: Placement, permeable: bool) -> Self {
        Self {
            id: id.into(),
            shape: Shape::Box { half_extents },
            pose,
            permeable,
            base_alpha: 1.0,
            translucent_now: false,
        }
    }

    pub fn quad(
        id: &str,
        width: f64,
        height: f64,
        pose: Placement,
        permeable: bool,
        alpha: f64,
    ) -> Self {
        Self {
            id: id.into(),
            shape: Shape::Quad { width, height },
            pose,
            permeable,
            base_alpha: alpha,
            translucent_now: false,
        }
    }

    pub fn rotation(&self) -> UnitQuat {
        UnitQuat::from_yaw(self.pose.yaw_deg)
    }

    pub fn to_local(&self, world: Vec3) -> Vec3 {
        self.rotation()
            .conjugate()
            .rotate(world - self.pose.position)
    }

    /// Outward normal of the front face (local -z). Only meaningful for quads.
    pub fn front_normal(&self) -> Vec3 {
        self.rotation().rotate(-Vec3::Z)
    }

    fn validate(&self) -> Result<(), SceneError> {
        let ok = match self.shape {
            Shape::GroundPlane => true,
            Shape::Box { half_extents: h } => h.x > 0.0 && h.y > 0.0 && h.z > 0.0,
            Shape::Quad { width, height } => width > 0.0 && height > 0.0,
        };
        if !ok {
            return Err(SceneError::BadExtents(self.id.clone()));
        }
        if !(0.0..=1.0).contains(&self.base_alpha) {
            return Err(SceneError::BadAlpha(self.id.clone()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Scene {
    pub objects: Vec<SceneObject>,
}

impl Scene {
    pub fn new(objects: Vec<SceneObject>) -> Self {
        Self { objects }
    }

    pub fn get(&self, id: &ObjectId) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.id == *id)
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let mut seen = HashSet::new();
        let mut grounds = 0;
        for obj in &self.objects {
            if !seen.insert(&obj.id) {
                return Err(SceneError::DuplicateId(obj.id.clone()));
            }
            obj.validate()?;
            if obj.shape == Shape::GroundPlane {
                if obj.pose.position.y != 0.0 {
                    return Err(SceneError::Ground(0));
                }
                grounds += 1;
            }
        }
        if grounds != 1 {
            return Err(SceneError::Ground(grounds));
        }
        Ok(())
    }

    /// Copy of the scene with exactly the listed objects marked translucent.
    pub fn mark_penetrated(&self, penetrated: &[ObjectId]) -> Result<Scene, SceneError> {
        for id in penetrated {
            let obj = self
                .get(id)
                .ok_or_else(|| SceneError::UnknownObject(id.clone()))?;
            if !obj.permeable {
                return Err(SceneError::NotPermeable(id.clone()));
            }
        }
        let mut out = self.clone();
        for obj in &mut out.objects {
            obj.translucent_now = penetrated.contains(&obj.id);
        }
        Ok(out)
    }
}

pub const STUDY_DEPTHS: [f64; 2] = [3.0, 6.0];
pub const STUDY_ROTATIONS: [f64; 5] = [45.0, -45.0, 90.0, -90.0, 180.0];

/// Geometry of one study trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialSceneSpec {
    pub depth_m: f64,
    pub rotation_deg: f64,
    pub corridor_length_m: f64,
    pub corridor_width_m: f64,
    pub corridor_height_m: f64,
    /// Corridor extent behind the start position.
    pub corridor_behind_m: f64,
    pub marker_offset_m: f64,
    pub sphere_height_m: f64,
    pub sphere_gap_m: f64,
    pub sphere_radius_m: f64,
    pub board_width_m: f64,
    pub board_height_m: f64,
    /// Height of the board's bottom edge above the floor.
    pub board_bottom_m: f64,
    pub board_alpha: f64,
}

impl TrialSceneSpec {
    pub fn new(depth_m: f64, rotation_deg: f64) -> Result<Self, SceneError> {
        let spec = Self {
            depth_m,
            rotation_deg,
            corridor_length_m: 70.0,
            corridor_width_m: 8.0,
            corridor_height_m: 4.0,
            corridor_behind_m: 5.0,
            marker_offset_m: 0.5,
            sphere_height_m: 1.0,
            sphere_gap_m: 0.3,
            sphere_radius_m: 0.05,
            board_width_m: 2.0,
            board_height_m: 1.5,
            board_bottom_m: 0.3,
            board_alpha: 0.88,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        if !STUDY_DEPTHS.contains(&self.depth_m) {
            return Err(SceneError::InvalidDepth(self.depth_m));
        }
        if !STUDY_ROTATIONS.contains(&self.rotation_deg) {
            return Err(SceneError::InvalidRotation(self.rotation_deg));
        }
        Ok(())
    }
}

/// A ready-to-run trial scene with its task targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyScene {
    #[serde(rename = "objects")]
    pub scene: Scene,
    #[serde(rename = "marker")]
    pub marker_center: Vec3,
    #[serde(with = "sphere_pair", rename = "spheres")]
    pub spheres: (Vec3, Vec3),
    #[serde(default = "default_radius")]
    pub sphere_radius: f64,
    #[serde(default, rename = "start")]
    pub start_pose: UserPose,
}

fn default_radius() -> f64 {
    0.05
}

mod sphere_pair {
    use super::Vec3;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &(Vec3, Vec3), s: S) -> Result<S::Ok, S::Error> {
        [v.0, v.1].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(Vec3, Vec3), D::Error> {
        let [a, b] = <[Vec3; 2]>::deserialize(d)?;
        Ok((a, b))
    }
}

impl StudyScene {
    pub fn sphere_a(&self) -> Vec3 {
        self.spheres.0
    }

    pub fn sphere_b(&self) -> Vec3 {
        self.spheres.1
    }

    pub fn sphere_midpoint(&self) -> Vec3 {
        (self.spheres.0 + self.spheres.1) * 0.5
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        self.scene.validate()?;
        if self.marker_center.y != 0.0 {
            return Err(SceneError::MarkerOffGround(self.marker_center.y));
        }
        if !(self.sphere_radius.is_finite() && self.sphere_radius > 0.0) {
            return Err(SceneError::BadRadius);
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, SceneError> {
        let scene: StudyScene =
            serde_json::from_str(text).map_err(|e| SceneError::Json(e.to_string()))?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }
}

/// Builds the corridor, blackboard and targets for one trial. The user starts
/// at the origin facing +z; the board stands `depth_m` ahead, turned by
/// `rotation_deg` (rotation 0 would face the user).
pub fn build_study_scene(spec: &TrialSceneSpec) -> Result<StudyScene, SceneError> {
    spec.validate()?;
    let half_w = spec.corridor_width_m * 0.5;
    let wall = 0.1;
    let z_min = -spec.corridor_behind_m;
    let z_max = spec.corridor_length_m - spec.corridor_behind_m;
    let z_mid = 0.5 * (z_min + z_max);
    let half_len = 0.5 * spec.corridor_length_m;
    let half_h = 0.5 * spec.corridor_height_m;

    let mut objects = vec![SceneObject::ground("ground")];
    objects.push(SceneObject::boxed(
        "wall_left",
        Vec3::new(wall, half_h, half_len),
        Placement::new(Vec3::new(half_w + wall, half_h, z_mid), 0.0),
        false,
    ));
    objects.push(SceneObject::boxed(
        "wall_right",
        Vec3::new(wall, half_h, half_len),
        Placement::new(Vec3::new(-half_w - wall, half_h, z_mid), 0.0),
        false,
    ));
    objects.push(SceneObject::boxed(
        "ceiling",
        Vec3::new(half_w + 2.0 * wall, wall, half_len),
        Placement::new(Vec3::new(0.0, spec.corridor_height_m + wall, z_mid), 0.0),
        false,
    ));
    objects.push(SceneObject::boxed(
        "wall_back",
        Vec3::new(half_w, half_h, wall),
        Placement::new(Vec3::new(0.0, half_h, z_min - wall), 0.0),
        false,
    ));
    objects.push(SceneObject::boxed(
        "wall_front",
        Vec3::new(half_w, half_h, wall),
        Placement::new(Vec3::new(0.0, half_h, z_max + wall), 0.0),
        false,
    ));

    let board_center = Vec3::new(
        0.0,
        spec.board_bottom_m + 0.5 * spec.board_height_m,
        spec.depth_m,
    );
    let board = SceneObject::quad(
        "blackboard",
        spec.board_width_m,
        spec.board_height_m,
        Placement::new(board_center, spec.rotation_deg),
        true,
        spec.board_alpha,
    );
    let normal = board.front_normal();
    let lateral = board.rotation().rotate(Vec3::X);
    objects.push(board);

    let face_ground = Vec3::new(board_center.x, 0.0, board_center.z);
    let marker_center = face_ground + normal * spec.marker_offset_m;
    let mid = Vec3::new(board_center.x, spec.sphere_height_m, board_center.z);
    let half_gap = 0.5 * spec.sphere_gap_m;
    let scene = StudyScene {
        scene: Scene::new(objects),
        marker_center: Vec3::new(marker_center.x, 0.0, marker_center.z),
        spheres: (mid + lateral * half_gap, mid - lateral * half_gap),
        sphere_radius: spec.sphere_radius_m,
        start_pose: UserPose::new(Vec3::ZERO, 0.0),
    };
    scene.validate()?;
    Ok(scene)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::yaw_of;

    fn close(a: Vec3, b: Vec3, tol: f64) -> bool {
        a.distance(b) <= tol
    }

    #[test]
    fn board_turned_away_at_three_meters() {
        let s = build_study_scene(&TrialSceneSpec::new(3.0, 180.0).unwrap()).unwrap();
        let board = s.scene.get(&"blackboard".into()).unwrap();
        assert!(close(board.pose.position, Vec3::new(0.0, 1.05, 3.0), 1e-12));
        assert!(close(s.marker_center, Vec3::new(0.0, 0.0, 3.5), 1e-12));
        let (a, b) = s.spheres;
        assert!((a.x.abs() - 0.15).abs() < 1e-12 && (b.x.abs() - 0.15).abs() < 1e-12);
        assert!(a.x * b.x < 0.0);
        assert!((a.y - 1.0).abs() < 1e-12 && (a.z - 3.0).abs() < 1e-12);
        assert!(close(s.sphere_midpoint(), Vec3::new(0.0, 1.0, 3.0), 1e-12));
        assert!(board.permeable && board.base_alpha == 0.88);
    }

    #[test]
    fn rotation_zero_is_rejected() {
        assert_eq!(
            TrialSceneSpec::new(6.0, 0.0),
            Err(SceneError::InvalidRotation(0.0))
        );
        assert_eq!(
            TrialSceneSpec::new(4.0, 45.0),
            Err(SceneError::InvalidDepth(4.0))
        );
    }

    #[test]
    fn study_grid_geometry() {
        for depth in STUDY_DEPTHS {
            for rot in STUDY_ROTATIONS {
                let s = build_study_scene(&TrialSceneSpec::new(depth, rot).unwrap()).unwrap();
                let board = s.scene.get(&"blackboard".into()).unwrap();
                let face = board.pose.position;
                let face_ground = Vec3::new(face.x, 0.0, face.z);
                assert!((s.marker_center.distance(face_ground) - 0.5).abs() < 1e-9);
                // The marker is on the front side.
                assert!((s.marker_center - face_ground).dot(board.front_normal()) > 0.0);
                assert_eq!(s.marker_center.y, 0.0);
                let (a, b) = s.spheres;
                assert!((a.y - 1.0).abs() < 1e-12 && (b.y - 1.0).abs() < 1e-12);
                assert!((a.distance(b) - 0.3).abs() < 1e-9);
                // Midpoint sits 1 m above the point 0.5 m behind the marker.
                let behind = s.marker_center - board.front_normal() * 0.5;
                assert!(close(s.sphere_midpoint(), behind + Vec3::Y, 1e-9));
                // Spheres lie on the board plane.
                assert!(((a - face).dot(board.front_normal())).abs() < 1e-12);
                // Ideal heading from the marker faces the board.
                let bearing = yaw_of(s.sphere_midpoint() - s.marker_center).unwrap();
                let facing = yaw_of(-board.front_normal()).unwrap();
                assert!(crate::geom::wrap_deg(bearing - facing).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn mark_penetrated_replaces_set() {
        let s = build_study_scene(&TrialSceneSpec::new(6.0, 45.0).unwrap()).unwrap();
        let none = s.scene.mark_penetrated(&[]).unwrap();
        assert!(none.objects.iter().all(|o| !o.translucent_now));

        let board = s.scene.mark_penetrated(&["blackboard".into()]).unwrap();
        for o in &board.objects {
            assert_eq!(o.translucent_now, o.id.as_str() == "blackboard");
        }
        let again = board.mark_penetrated(&[]).unwrap();
        assert!(again.objects.iter().all(|o| !o.translucent_now));
    }

    #[test]
    fn mark_penetrated_errors() {
        let s = build_study_scene(&TrialSceneSpec::new(3.0, 90.0).unwrap()).unwrap();
        assert_eq!(
            s.scene.mark_penetrated(&["nope".into()]),
            Err(SceneError::UnknownObject("nope".into()))
        );
        assert_eq!(
            s.scene.mark_penetrated(&["wall_left".into()]),
            Err(SceneError::NotPermeable("wall_left".into()))
        );
    }

    #[test]
    fn json_round_trip() {
        let s = build_study_scene(&TrialSceneSpec::new(6.0, -90.0).unwrap()).unwrap();
        let text = s.to_json();
        assert!(text.contains("\"type\": \"quad\""));
        assert!(text.contains("\"alpha\": 0.88"));
        let back = StudyScene::from_json(&text).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn json_rejects_missing_marker_and_extra_fields() {
        let s = build_study_scene(&TrialSceneSpec::new(3.0, 45.0).unwrap()).unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&s.to_json()).unwrap();
        v.as_object_mut().unwrap().remove("marker");
        assert!(matches!(
            StudyScene::from_json(&v.to_string()),
            Err(SceneError::Json(_))
        ));
        let mut v: serde_json::Value = serde_json::from_str(&s.to_json()).unwrap();
        v["objects"][0]["colour"] = "red".into();
        assert!(StudyScene::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn validation_requires_single_ground() {
        let scene = Scene::new(vec![SceneObject::ground("a"), SceneObject::ground("b")]);
        assert_eq!(scene.validate(), Err(SceneError::Ground(2)));
        assert_eq!(Scene::default().validate(), Err(SceneError::Ground(0)));
    }
}
