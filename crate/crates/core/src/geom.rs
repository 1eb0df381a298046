//! 3D math for the interaction kernel.
//!
//! Coordinate convention (global to the crate): y is up, the frame is
//! right-handed, and all scene units are meters. Yaw is the right-handed
//! rotation about +y measured from +z, so yaw 0° faces +z and yaw 90° faces
//! +x (`yaw = atan2(x, z)`). Angles cross public boundaries in degrees.

use std::collections::HashSet;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::scene::{ObjectId, Scene, SceneObject, Shape};

/// Maximum length of a straight ray cast.
pub const RAY_MAX_DISTANCE: f64 = 200.0;

/// Positional tolerance of the arc intersection refinement.
pub const ARC_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeomError {
    #[error("parabola time {t} s outside [0, {max}] s")]
    TimeOutOfRange { t: f64, max: f64 },
    #[error("direction has no horizontal component")]
    DegenerateDirection,
    #[error("invalid parabola parameters: {0}")]
    InvalidParams(&'static str),
    #[error("quaternion norm {0} is not within 1e-6 of 1")]
    NotUnit(f64),
    #[error("non-finite component")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn length(self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Unit vector in the same direction, or `None` for (near) zero vectors.
    pub fn normalized(self) -> Option<Vec3> {
        let len = self.length();
        if len > 1e-12 && len.is_finite() {
            Some(self / len)
        } else {
            None
        }
    }

    /// Projection onto the ground plane (y dropped to zero).
    pub fn horizontal(self) -> Vec3 {
        Vec3::new(self.x, 0.0, self.z)
    }

    pub fn distance(self, o: Vec3) -> f64 {
        (self - o).length()
    }

    pub fn lerp(self, o: Vec3, s: f64) -> Vec3 {
        self + (o - self) * s
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Serialize for Vec3 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_array().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Vec3 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let [x, y, z] = <[f64; 3]>::deserialize(d)?;
        let v = Vec3::new(x, y, z);
        if !v.is_finite() {
            return Err(serde::de::Error::custom(GeomError::NonFinite));
        }
        Ok(v)
    }
}

/// Unit quaternion, Hamilton convention, `w` first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitQuat {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl Default for UnitQuat {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl UnitQuat {
    pub const IDENTITY: UnitQuat = UnitQuat {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    /// Accepts components whose norm is within 1e-6 of one. Components are
    /// kept verbatim so serialized poses round-trip bit for bit.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Result<Self, GeomError> {
        if ![w, x, y, z].iter().all(|c| c.is_finite()) {
            return Err(GeomError::NonFinite);
        }
        let norm = (w * w + x * x + y * y + z * z).sqrt();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(GeomError::NotUnit(norm));
        }
        Ok(UnitQuat { w, x, y, z })
    }

    fn renormalized(w: f64, x: f64, y: f64, z: f64) -> Self {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        UnitQuat {
            w: w / n,
            x: x / n,
            y: y / n,
            z: z / n,
        }
    }

    /// Right-handed rotation of `deg` degrees about `axis` (normalized here).
    pub fn from_axis_angle(axis: Vec3, deg: f64) -> Self {
        let Some(a) = axis.normalized() else {
            return Self::IDENTITY;
        };
        let half = deg.to_radians() * 0.5;
        let s = half.sin();
        Self::renormalized(half.cos(), a.x * s, a.y * s, a.z * s)
    }

    pub fn from_yaw(yaw_deg: f64) -> Self {
        Self::from_axis_angle(Vec3::Y, yaw_deg)
    }

    /// Yaw then pitch (positive pitch raises local +z toward +y), no roll.
    pub fn from_yaw_pitch(yaw_deg: f64, pitch_deg: f64) -> Self {
        Self::from_yaw(yaw_deg) * Self::from_axis_angle(-Vec3::X, pitch_deg)
    }

    /// Shortest rotation taking unit vector `from` onto unit vector `to`.
    pub fn rotation_between(from: Vec3, to: Vec3) -> Self {
        let d = from.dot(to).clamp(-1.0, 1.0);
        if d < -1.0 + 1e-12 {
            let mut perp = from.cross(Vec3::X);
            if perp.length() < 1e-6 {
                perp = from.cross(Vec3::Y);
            }
            return Self::from_axis_angle(perp, 180.0);
        }
        let c = from.cross(to);
        Self::renormalized(1.0 + d, c.x, c.y, c.z)
    }

    pub fn components(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn conjugate(self) -> Self {
        UnitQuat {
            w: self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    pub fn rotate(self, v: Vec3) -> Vec3 {
        let u = Vec3::new(self.x, self.y, self.z);
        let t = u.cross(v) * 2.0;
        v + t * self.w + u.cross(t)
    }

    /// Spherical interpolation along the shorter arc.
    pub fn slerp(self, other: UnitQuat, s: f64) -> UnitQuat {
        let mut b = other;
        let mut cos = self.w * b.w + self.x * b.x + self.y * b.y + self.z * b.z;
        if cos < 0.0 {
            b = UnitQuat {
                w: -b.w,
                x: -b.x,
                y: -b.y,
                z: -b.z,
            };
            cos = -cos;
        }
        let (ka, kb) = if cos > 0.9995 {
            (1.0 - s, s)
        } else {
            let theta = cos.acos();
            let sin = theta.sin();
            (((1.0 - s) * theta).sin() / sin, (s * theta).sin() / sin)
        };
        Self::renormalized(
            ka * self.w + kb * b.w,
            ka * self.x + kb * b.x,
            ka * self.y + kb * b.y,
            ka * self.z + kb * b.z,
        )
    }
}

impl Mul for UnitQuat {
    type Output = UnitQuat;
    fn mul(self, o: UnitQuat) -> UnitQuat {
        let (a, b) = (self, o);
        UnitQuat::renormalized(
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        )
    }
}

impl Serialize for UnitQuat {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.components().serialize(s)
    }
}

impl<'de> Deserialize<'de> for UnitQuat {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let [w, x, y, z] = <[f64; 4]>::deserialize(d)?;
        UnitQuat::new(w, x, y, z).map_err(serde::de::Error::custom)
    }
}

/// Position plus orientation of a tracked device.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pose {
    #[serde(rename = "p")]
    pub position: Vec3,
    #[serde(rename = "q")]
    pub rotation: UnitQuat,
}

impl Pose {
    pub fn new(position: Vec3, rotation: UnitQuat) -> Self {
        Self { position, rotation }
    }

    /// Local +z in the parent frame.
    pub fn forward(&self) -> Vec3 {
        self.rotation.rotate(Vec3::Z)
    }
}

/// Where the user stands: a ground position plus a heading. Tracked device
/// poses are reported relative to this frame (the tracking origin).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserPose {
    #[serde(rename = "p")]
    pub position: Vec3,
    pub yaw_deg: f64,
}

impl UserPose {
    pub fn new(position: Vec3, yaw_deg: f64) -> Self {
        Self { position, yaw_deg }
    }

    pub fn rotation(&self) -> UnitQuat {
        UnitQuat::from_yaw(self.yaw_deg)
    }

    pub fn point_to_world(&self, local: Vec3) -> Vec3 {
        self.position + self.rotation().rotate(local)
    }

    pub fn dir_to_world(&self, local: Vec3) -> Vec3 {
        self.rotation().rotate(local)
    }

    pub fn point_to_local(&self, world: Vec3) -> Vec3 {
        self.rotation().conjugate().rotate(world - self.position)
    }

    pub fn dir_to_local(&self, world: Vec3) -> Vec3 {
        self.rotation().conjugate().rotate(world)
    }

    pub fn pose_to_world(&self, local: &Pose) -> Pose {
        Pose::new(
            self.point_to_world(local.position),
            self.rotation() * local.rotation,
        )
    }

    pub fn pose_to_local(&self, world: &Pose) -> Pose {
        Pose::new(
            self.point_to_local(world.position),
            self.rotation().conjugate() * world.rotation,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParabolaParams {
    /// Launch speed, m/s.
    pub speed: f64,
    /// m/s², acting along -y.
    pub gravity: f64,
    /// Arc length cap, s.
    pub max_fall_time: f64,
    /// Coarse march step, s.
    pub march_step: f64,
}

impl Default for ParabolaParams {
    fn default() -> Self {
        Self {
            speed: 10.0,
            gravity: 9.81,
            max_fall_time: 1.5,
            march_step: 1.0 / 90.0,
        }
    }
}

impl ParabolaParams {
    pub fn validate(&self) -> Result<(), GeomError> {
        let all = [
            self.speed,
            self.gravity,
            self.max_fall_time,
            self.march_step,
        ];
        if !all.iter().all(|v| v.is_finite()) {
            return Err(GeomError::NonFinite);
        }
        if self.speed <= 0.0 {
            return Err(GeomError::InvalidParams("speed must be > 0"));
        }
        if self.gravity <= 0.0 {
            return Err(GeomError::InvalidParams("gravity must be > 0"));
        }
        if self.max_fall_time <= 0.0 {
            return Err(GeomError::InvalidParams("max_fall_time must be > 0"));
        }
        if self.march_step <= 0.0 || self.march_step >= self.max_fall_time {
            return Err(GeomError::InvalidParams(
                "march_step must lie in (0, max_fall_time)",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub point: Vec3,
    pub normal: Vec3,
    pub object_id: ObjectId,
    /// Seconds along the arc; `None` for straight rays.
    pub time_of_flight: Option<f64>,
    /// Permeable objects crossed before the blocking surface, in crossing order.
    pub penetrated_ids: Vec<ObjectId>,
}

/// Which objects an arc or ray may pass through.
#[derive(Debug, Clone, Copy)]
pub enum PassThrough<'a> {
    /// Every object blocks.
    Nothing,
    /// Objects flagged permeable are crossed and recorded.
    Permeable,
    /// The listed objects are ignored; everything else blocks.
    Ids(&'a [ObjectId]),
}

impl PassThrough<'_> {
    fn passes(&self, obj: &SceneObject) -> bool {
        match self {
            PassThrough::Nothing => false,
            PassThrough::Permeable => obj.permeable,
            PassThrough::Ids(ids) => ids.contains(&obj.id),
        }
    }

    fn records(&self) -> bool {
        matches!(self, PassThrough::Permeable)
    }
}

fn ensure_time(t: f64, params: &ParabolaParams) -> Result<(), GeomError> {
    if !(0.0..=params.max_fall_time).contains(&t) {
        return Err(GeomError::TimeOutOfRange {
            t,
            max: params.max_fall_time,
        });
    }
    Ok(())
}

fn arc_at(origin: Vec3, dir: Vec3, params: &ParabolaParams, t: f64) -> Vec3 {
    Vec3::new(
        origin.x + params.speed * dir.x * t,
        origin.y + params.speed * dir.y * t - 0.5 * params.gravity * t * t,
        origin.z + params.speed * dir.z * t,
    )
}

/// Ballistic arc position `t` seconds after launch.
pub fn parabola_point(
    origin: Vec3,
    dir: Vec3,
    params: &ParabolaParams,
    t: f64,
) -> Result<Vec3, GeomError> {
    ensure_time(t, params)?;
    Ok(arc_at(origin, dir, params, t))
}

/// A candidate crossing of a segment with one planar face of an object.
struct Crossing<'s> {
    object: &'s SceneObject,
    /// Fraction along the chord.
    u: f64,
    plane_point: Vec3,
    normal: Vec3,
    /// The segment starts inside the object.
    inside: bool,
}

/// Intersects the chord `a -> b` with an object. Returns the chord fraction
/// and the plane of the face that was crossed.
fn chord_crossing<'s>(obj: &'s SceneObject, a: Vec3, b: Vec3) -> Option<Crossing<'s>> {
    match obj.shape {
        Shape::GroundPlane => {
            let height = obj.pose.position.y;
            let (ya, yb) = (a.y - height, b.y - height);
            if ya > 0.0 && yb <= 0.0 {
                Some(Crossing {
                    object: obj,
                    u: ya / (ya - yb),
                    plane_point: obj.pose.position,
                    normal: Vec3::Y,
                    inside: false,
                })
            } else {
                None
            }
        }
        Shape::Quad { width, height } => {
            let n = obj.front_normal();
            let c = obj.pose.position;
            let (sa, sb) = ((a - c).dot(n), (b - c).dot(n));
            let crosses = (sa > 0.0 && sb <= 0.0) || (sa < 0.0 && sb >= 0.0);
            if !crosses {
                return None;
            }
            let u = sa / (sa - sb);
            let local = obj.to_local(a.lerp(b, u));
            if local.x.abs() <= width * 0.5 && local.y.abs() <= height * 0.5 {
                // Report the face the segment came from.
                let normal = if sa > 0.0 { n } else { -n };
                Some(Crossing {
                    object: obj,
                    u,
                    plane_point: c,
                    normal,
                    inside: false,
                })
            } else {
                None
            }
        }
        Shape::Box { half_extents } => {
            let la = obj.to_local(a);
            let lb = obj.to_local(b);
            let d = lb - la;
            let (mut t_enter, mut t_exit) = (0.0_f64, 1.0_f64);
            let mut enter_axis: Option<(usize, f64)> = None;
            let comps = |v: Vec3| [v.x, v.y, v.z];
            let (pa, dd, he) = (comps(la), comps(d), comps(half_extents));
            for axis in 0..3 {
                if dd[axis].abs() < 1e-15 {
                    if pa[axis].abs() > he[axis] {
                        return None;
                    }
                    continue;
                }
                let mut t0 = (-he[axis] - pa[axis]) / dd[axis];
                let mut t1 = (he[axis] - pa[axis]) / dd[axis];
                let mut sign = -1.0;
                if t0 > t1 {
                    std::mem::swap(&mut t0, &mut t1);
                    sign = 1.0;
                }
                if t0 > t_enter {
                    t_enter = t0;
                    enter_axis = Some((axis, sign));
                }
                t_exit = t_exit.min(t1);
                if t_enter > t_exit {
                    return None;
                }
            }
            // A segment starting inside the box is stopped where it starts,
            // against the nearest face.
            let (axis, sign) = match enter_axis {
                Some(e) => e,
                None => {
                    let axis = (0..3)
                        .min_by(|&i, &j| (he[i] - pa[i].abs()).total_cmp(&(he[j] - pa[j].abs())))
                        .unwrap_or(0);
                    (axis, if pa[axis] < 0.0 { -1.0 } else { 1.0 })
                }
            };
            let inside = enter_axis.is_none();
            let mut local_n = [0.0; 3];
            local_n[axis] = sign;
            let local_n = Vec3::new(local_n[0], local_n[1], local_n[2]);
            let normal = obj.rotation().rotate(local_n);
            let face_offset = [half_extents.x, half_extents.y, half_extents.z][axis];
            Some(Crossing {
                object: obj,
                u: t_enter,
                plane_point: obj.pose.position + normal * face_offset,
                normal,
                inside,
            })
        }
    }
}

/// Whether the straight segment `a -> b` touches any object that is not
/// permeable.
pub fn segment_blocked(a: Vec3, b: Vec3, scene: &Scene) -> bool {
    scene
        .objects
        .iter()
        .filter(|o| !o.permeable)
        .any(|o| chord_crossing(o, a, b).is_some())
}

/// Intersects a ballistic arc with the scene.
///
/// The arc is marched in `march_step` increments; each step's chord is tested
/// against every object, and the first blocking crossing is refined on the
/// true arc by bisection until the bracket spans at most [`ARC_TOLERANCE`].
/// With `respect_permeability`, permeable objects are crossed and recorded in
/// [`Hit::penetrated_ids`]; otherwise every object blocks.
pub fn intersect_parabola(
    origin: Vec3,
    dir: Vec3,
    params: &ParabolaParams,
    scene: &Scene,
    respect_permeability: bool,
) -> Option<Hit> {
    let pass = if respect_permeability {
        PassThrough::Permeable
    } else {
        PassThrough::Nothing
    };
    cast_parabola(origin, dir, params, scene, pass)
}

/// Arc cast with an explicit pass-through policy.
pub fn cast_parabola(
    origin: Vec3,
    dir: Vec3,
    params: &ParabolaParams,
    scene: &Scene,
    pass: PassThrough<'_>,
) -> Option<Hit> {
    let steps = (params.max_fall_time / params.march_step).ceil() as usize;
    let mut penetrated: Vec<ObjectId> = Vec::new();
    let mut t0 = 0.0;
    let mut p0 = origin;
    for i in 1..=steps {
        let t1 = (i as f64 * params.march_step).min(params.max_fall_time);
        let p1 = arc_at(origin, dir, params, t1);
        let mut crossings: Vec<Crossing> = scene
            .objects
            .iter()
            .filter_map(|obj| chord_crossing(obj, p0, p1))
            .collect();
        crossings.sort_by(|a, b| a.u.total_cmp(&b.u));
        for c in crossings {
            if pass.passes(c.object) {
                if pass.records() && !penetrated.contains(&c.object.id) {
                    penetrated.push(c.object.id.clone());
                }
                continue;
            }
            let (t_hit, point) = if c.inside {
                (t0, p0)
            } else {
                refine_on_arc(origin, dir, params, t0, t1, c.plane_point, c.normal)
            };
            penetrated.retain(|id| *id != c.object.id);
            return Some(Hit {
                point,
                normal: c.normal,
                object_id: c.object.id.clone(),
                time_of_flight: Some(t_hit),
                penetrated_ids: penetrated,
            });
        }
        t0 = t1;
        p0 = p1;
    }
    None
}

/// Bisects the signed plane distance along the arc over `[lo, hi]`.
fn refine_on_arc(
    origin: Vec3,
    dir: Vec3,
    params: &ParabolaParams,
    mut lo: f64,
    mut hi: f64,
    plane_point: Vec3,
    normal: Vec3,
) -> (f64, Vec3) {
    let side = |t: f64| (arc_at(origin, dir, params, t) - plane_point).dot(normal);
    let lo_side = side(lo);
    let hi_side = side(hi);
    // A chord endpoint sitting on the plane (to rounding) leaves no sign
    // change to bisect; the endpoint nearer the plane is the crossing.
    if lo_side == 0.0 || (lo_side > 0.0) == (hi_side > 0.0) {
        let t = if lo_side.abs() <= hi_side.abs() {
            lo
        } else {
            hi
        };
        return (t, arc_at(origin, dir, params, t));
    }
    for _ in 0..64 {
        let span = arc_at(origin, dir, params, lo).distance(arc_at(origin, dir, params, hi));
        if span <= ARC_TOLERANCE {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if (side(mid) > 0.0) == (lo_side > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = 0.5 * (lo + hi);
    (t, arc_at(origin, dir, params, t))
}

fn ray_object(obj: &SceneObject, origin: Vec3, dir: Vec3) -> Option<(f64, Vec3)> {
    let far = origin + dir * RAY_MAX_DISTANCE;
    chord_crossing(obj, origin, far).map(|c| (c.u * RAY_MAX_DISTANCE, c.normal))
}

/// Nearest intersection of a straight ray within [`RAY_MAX_DISTANCE`],
/// ignoring objects listed in `pass_through`.
pub fn intersect_ray(
    origin: Vec3,
    dir: Vec3,
    scene: &Scene,
    pass_through: &HashSet<ObjectId>,
) -> Option<Hit> {
    scene
        .objects
        .iter()
        .filter(|o| !pass_through.contains(&o.id))
        .filter_map(|o| ray_object(o, origin, dir).map(|(d, n)| (d, n, o)))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(d, normal, o)| Hit {
            point: origin + dir * d,
            normal,
            object_id: o.id.clone(),
            time_of_flight: None,
            penetrated_ids: Vec::new(),
        })
}

/// Yaw of the horizontal projection of `v`, in (-180, 180].
pub fn yaw_of(v: Vec3) -> Result<f64, GeomError> {
    if v.x.hypot(v.z) <= 1e-6 {
        return Err(GeomError::DegenerateDirection);
    }
    Ok(wrap_deg(v.x.atan2(v.z).to_degrees()))
}

/// Wraps an angle into (-180, 180].
pub fn wrap_deg(a: f64) -> f64 {
    let mut r = a % 360.0;
    if r > 180.0 {
        r -= 360.0;
    } else if r <= -180.0 {
        r += 360.0;
    }
    r
}

/// Signed twist of `curr * prev⁻¹` about `axis`, degrees in (-180, 180].
/// Positive is a right-handed turn about `axis` (clockwise when looking
/// along it).
pub fn twist_delta(prev: UnitQuat, curr: UnitQuat, axis: Vec3) -> f64 {
    let rel = curr * prev.conjugate();
    let [mut w, x, y, z] = rel.components();
    let mut along = Vec3::new(x, y, z).dot(axis);
    if w < 0.0 {
        w = -w;
        along = -along;
    }
    if w == 0.0 && along == 0.0 {
        // Pure 180° swing: the twist component is undefined, report none.
        return 0.0;
    }
    wrap_deg(2.0 * along.atan2(w).to_degrees())
}

/// Angle between two unit vectors in [0, 180].
pub fn angle_between(a: Vec3, b: Vec3) -> f64 {
    a.dot(b).clamp(-1.0, 1.0).acos().to_degrees()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{Placement, SceneObject};

    fn flat() -> Scene {
        Scene::new(vec![SceneObject::ground("ground")])
    }

    fn pitched(pitch_deg: f64) -> Vec3 {
        let p = pitch_deg.to_radians();
        Vec3::new(p.cos(), p.sin(), 0.0)
    }

    #[test]
    fn parabola_point_identity_at_launch() {
        let o = Vec3::new(1.0, 2.0, 3.0);
        let p = parabola_point(o, Vec3::X, &ParabolaParams::default(), 0.0).unwrap();
        assert_eq!(p, o);
    }

    #[test]
    fn parabola_point_matches_hand_kinematics() {
        let p = parabola_point(
            Vec3::new(0.0, 1.226, 0.0),
            Vec3::X,
            &ParabolaParams::default(),
            0.5,
        )
        .unwrap();
        assert!((p.x - 5.0).abs() < 1e-3);
        assert!(p.y.abs() < 1e-3);
        assert_eq!(p.z, 0.0);
    }

    #[test]
    fn parabola_point_reach_at_42_degrees() {
        let p = parabola_point(Vec3::Y, pitched(42.0), &ParabolaParams::default(), 1.5).unwrap();
        assert!((p.x - 11.147).abs() < 5e-4, "{}", p.x);
        assert!((p.x - 11.15).abs() <= 0.01);
    }

    #[test]
    fn parabola_point_rejects_out_of_range_time() {
        let params = ParabolaParams::default();
        assert!(matches!(
            parabola_point(Vec3::ZERO, Vec3::X, &params, 1.6),
            Err(GeomError::TimeOutOfRange { .. })
        ));
        assert!(parabola_point(Vec3::ZERO, Vec3::X, &params, -0.1).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(ParabolaParams::default().validate().is_ok());
        let bad = ParabolaParams {
            march_step: 2.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = ParabolaParams {
            speed: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn vertical_drop_lands_below() {
        let hit = intersect_parabola(
            Vec3::new(2.0, 1.0, 3.0),
            -Vec3::Y,
            &ParabolaParams::default(),
            &flat(),
            true,
        )
        .unwrap();
        assert!(hit.point.distance(Vec3::new(2.0, 0.0, 3.0)) <= ARC_TOLERANCE);
        assert_eq!(hit.object_id.as_str(), "ground");
        assert_eq!(hit.normal, Vec3::Y);
    }

    // Launch at 1 m and 42° lands at t = 1.50009 s, just beyond the 1.5 s cap:
    // 1 + 10 sin42° t - 4.905 t² = 0 gives t = (6.69131 + 8.02456) / 9.81.
    #[test]
    fn arc_landing_just_past_cap_has_no_destination() {
        let params = ParabolaParams::default();
        let s = 10.0 * 42f64.to_radians().sin();
        let t_land = (s + (s * s + 4.0 * 4.905).sqrt()) / 9.81;
        assert!(t_land > 1.5 && t_land < 1.5001);
        assert!(intersect_parabola(Vec3::Y, pitched(42.0), &params, &flat(), true).is_none());
    }

    #[test]
    fn arc_at_42_degrees_lands_near_max_reach() {
        // Launch 1 mm lower so the landing falls inside the cap.
        let params = ParabolaParams::default();
        let origin = Vec3::new(0.0, 0.999, 0.0);
        let s = 10.0 * 42f64.to_radians().sin();
        let t_land = (s + (s * s + 4.0 * 4.905 * 0.999).sqrt()) / 9.81;
        let x_land = 10.0 * 42f64.to_radians().cos() * t_land;
        let hit = intersect_parabola(origin, pitched(42.0), &params, &flat(), true).unwrap();
        assert!((hit.point.x - 11.15).abs() < 0.01);
        assert!((hit.point.x - x_land).abs() < 1e-4);
        assert!((hit.time_of_flight.unwrap() - 1.50).abs() < 1e-3);
        assert!(hit.point.y.abs() < 1e-4);
    }

    #[test]
    fn arc_through_permeable_quad_records_it() {
        // Board facing the launcher, 3 m ahead, spanning y in [0.3, 1.8].
        let board = SceneObject::quad(
            "board",
            2.0,
            1.5,
            Placement::new(Vec3::new(0.0, 1.05, 3.0), 0.0),
            true,
            0.88,
        );
        let scene = Scene::new(vec![SceneObject::ground("ground"), board]);
        let dir = Vec3::new(0.0, 0.1, 1.0).normalized().unwrap();
        let origin = Vec3::new(0.0, 1.0, 0.0);
        let hit =
            intersect_parabola(origin, dir, &ParabolaParams::default(), &scene, true).unwrap();
        assert_eq!(hit.object_id.as_str(), "ground");
        assert_eq!(hit.penetrated_ids, vec![ObjectId::from("board")]);

        // Oracle: the analytic arc crosses z = 3 at t = 3 / (10 dz), check
        // that point lies on the board.
        let t_plane = 3.0 / (10.0 * dir.z);
        let at_plane = arc_at(origin, dir, &ParabolaParams::default(), t_plane);
        assert!(at_plane.y > 0.3 && at_plane.y < 1.8 && at_plane.x.abs() < 1.0);

        // Without permeability the board blocks.
        let blocked =
            intersect_parabola(origin, dir, &ParabolaParams::default(), &scene, false).unwrap();
        assert_eq!(blocked.object_id.as_str(), "board");
        assert!((blocked.point.z - 3.0).abs() < 1e-4);
        assert!(blocked.penetrated_ids.is_empty());
    }

    #[test]
    fn arc_blocked_by_box_wall() {
        let wall = SceneObject::boxed(
            "wall",
            Vec3::new(4.0, 2.0, 0.1),
            Placement::new(Vec3::new(0.0, 2.0, 2.1), 0.0),
            false,
        );
        let scene = Scene::new(vec![SceneObject::ground("ground"), wall]);
        let hit = intersect_parabola(
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::Z,
            &ParabolaParams::default(),
            &scene,
            true,
        )
        .unwrap();
        assert_eq!(hit.object_id.as_str(), "wall");
        assert!((hit.point.z - 2.0).abs() < 1e-4, "{:?}", hit.point);
        assert!(hit.normal.distance(-Vec3::Z) < 1e-12);
    }

    #[test]
    fn arc_launched_inside_box_stops_at_origin() {
        let wall = SceneObject::boxed(
            "wall",
            Vec3::new(4.0, 2.0, 0.1),
            Placement::new(Vec3::new(0.0, 2.0, -5.1), 0.0),
            false,
        );
        let scene = Scene::new(vec![SceneObject::ground("ground"), wall]);
        let origin = Vec3::new(0.0, 1.0, -5.05);
        let hit =
            intersect_parabola(origin, -Vec3::Z, &ParabolaParams::default(), &scene, true).unwrap();
        assert_eq!(hit.object_id.as_str(), "wall");
        assert_eq!(hit.point, origin);
        assert_eq!(hit.time_of_flight, Some(0.0));
        assert!(hit.normal.distance(Vec3::Z) < 1e-12);
        let ray = intersect_ray(origin, -Vec3::Z, &scene, &HashSet::new()).unwrap();
        assert_eq!(ray.object_id.as_str(), "wall");
        assert_eq!(ray.point, origin);
    }

    #[test]
    fn ray_hits_ground_below() {
        let hit = intersect_ray(Vec3::Y, -Vec3::Y, &flat(), &HashSet::new()).unwrap();
        assert!(hit.point.distance(Vec3::ZERO) < 1e-12);
        assert!(hit.time_of_flight.is_none());
    }

    #[test]
    fn ray_skips_pass_through_board() {
        let board = SceneObject::quad(
            "board",
            2.0,
            1.5,
            Placement::new(Vec3::new(0.0, 1.0, 3.0), 0.0),
            true,
            0.88,
        );
        let wall = SceneObject::quad(
            "wall",
            8.0,
            4.0,
            Placement::new(Vec3::new(0.0, 1.0, 5.0), 0.0),
            false,
            1.0,
        );
        let scene = Scene::new(vec![SceneObject::ground("ground"), board, wall]);
        let origin = Vec3::new(0.0, 1.0, 0.0);
        let hit = intersect_ray(origin, Vec3::Z, &scene, &HashSet::new()).unwrap();
        assert_eq!(hit.object_id.as_str(), "board");
        assert!((hit.point.z - 3.0).abs() < 1e-12);
        let skip: HashSet<ObjectId> = [ObjectId::from("board")].into_iter().collect();
        let hit = intersect_ray(origin, Vec3::Z, &scene, &skip).unwrap();
        assert_eq!(hit.object_id.as_str(), "wall");
        assert!((hit.point.z - 5.0).abs() < 1e-12);
    }

    #[test]
    fn upward_parallel_ray_misses() {
        assert!(intersect_ray(Vec3::Y, Vec3::Y, &flat(), &HashSet::new()).is_none());
        assert!(intersect_ray(Vec3::Y, Vec3::X, &flat(), &HashSet::new()).is_none());
    }

    #[test]
    fn ray_beyond_max_distance_misses() {
        let dir = Vec3::new(0.0, -0.001, 1.0).normalized().unwrap();
        assert!(intersect_ray(Vec3::Y, dir, &flat(), &HashSet::new()).is_none());
    }

    #[test]
    fn yaw_examples() {
        assert_eq!(yaw_of(Vec3::new(0.0, 5.0, 4.0)).unwrap(), 0.0);
        assert!((yaw_of(Vec3::new(3.0, 1.0, 3.0)).unwrap() - 45.0).abs() < 1e-12);
        assert_eq!(yaw_of(Vec3::new(0.0, 0.0, -1.0)).unwrap(), 180.0);
        assert_eq!(yaw_of(Vec3::Y), Err(GeomError::DegenerateDirection));
    }

    #[test]
    fn wrap_range() {
        assert_eq!(wrap_deg(180.0), 180.0);
        assert_eq!(wrap_deg(-180.0), 180.0);
        assert_eq!(wrap_deg(540.0), 180.0);
        assert_eq!(wrap_deg(-190.0), 170.0);
        assert_eq!(wrap_deg(725.0), 5.0);
    }

    #[test]
    fn twist_examples() {
        let axis = Vec3::new(0.3, -0.2, 0.9).normalized().unwrap();
        let prev = UnitQuat::from_yaw_pitch(20.0, -15.0);
        assert!(twist_delta(prev, prev, axis).abs() < 1e-9);

        let curr = UnitQuat::from_axis_angle(axis, 30.0) * prev;
        assert!((twist_delta(prev, curr, axis) - 30.0).abs() < 1e-6);

        let ortho = axis.cross(Vec3::Y).normalized().unwrap();
        let swung = UnitQuat::from_axis_angle(ortho, 30.0) * prev;
        assert!(twist_delta(prev, swung, axis).abs() < 1e-6);

        let back = UnitQuat::from_axis_angle(axis, -170.0) * prev;
        assert!((twist_delta(prev, back, axis) + 170.0).abs() < 1e-6);
    }

    #[test]
    fn angle_examples() {
        let d = Vec3::new(0.6, 0.0, 0.8);
        assert_eq!(angle_between(d, d), 0.0);
        assert_eq!(angle_between(d, -d), 180.0);
        assert!((angle_between(Vec3::X, Vec3::Z) - 90.0).abs() < 1e-12);
        let b = Vec3::new(-1.0, 0.0, 1.0).normalized().unwrap();
        assert!((angle_between(Vec3::X, b) - 135.0).abs() < 1e-9);
    }

    #[test]
    fn quaternion_construction() {
        assert!(UnitQuat::new(1.0, 0.0, 0.0, 0.0).is_ok());
        assert!(matches!(
            UnitQuat::new(1.1, 0.0, 0.0, 0.0),
            Err(GeomError::NotUnit(_))
        ));
        let q = UnitQuat::from_yaw(90.0);
        assert!(q.rotate(Vec3::Z).distance(Vec3::X) < 1e-12);
        let q = UnitQuat::from_yaw_pitch(0.0, 30.0);
        let f = q.rotate(Vec3::Z);
        assert!((f.y - 0.5).abs() < 1e-12 && f.z > 0.0);
        let r = UnitQuat::rotation_between(Vec3::Z, -Vec3::Z);
        assert!(r.rotate(Vec3::Z).distance(-Vec3::Z) < 1e-12);
    }
}
