//! Writes a hand-timed button/roll trial to stdout as a trace.
//!
//! Scene: study corridor, board 3 m ahead turned 180 degrees, so the marker
//! is behind the board at (0, 0, 3.5) and the user must turn around.
//!
//! | t (ms)      | action                                      |
//! |-------------|---------------------------------------------|
//! | 800 - 890   | rear button: switch to teleport mode        |
//! | 900 - 1800  | swing the stylus onto the marker            |
//! | 2000        | front button down: destination frozen       |
//! | 2200 - 2700 | roll the stylus 120 degrees (x1.5 = 180)    |
//! | 3500        | front button up: commit                     |
//! | 4200 - 4290 | rear button: back to draw mode              |
//! | 4400 - 4900 | stroke through both spheres                 |

use stylus_teleport::geom::{Pose, UnitQuat, Vec3};
use stylus_teleport::kernel::{InputFrame, KernelConfig, OrientMethod, StylusSample, SwitchMethod};
use stylus_teleport::trace::{write_trace, SceneRef, Trace, TraceHeader};

const HALF: f64 = 0.082;
const SPEED: f64 = 10.0;
const G: f64 = 9.81;

fn launch_pitch(center: Vec3, target_z: f64) -> f64 {
    let reach = |pitch: f64| {
        let (s, c) = pitch.to_radians().sin_cos();
        let origin = center + Vec3::new(0.0, s, c) * HALF;
        let t = (SPEED * s + ((SPEED * s).powi(2) + 2.0 * G * origin.y).sqrt()) / G;
        origin.z + SPEED * c * t - target_z
    };
    let (mut lo, mut hi) = (-80.0, 40.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if reach(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn main() {
    let head = Pose::new(Vec3::new(0.0, 1.2, 0.0), UnitQuat::IDENTITY);
    let center = Vec3::new(0.0, 1.0, 0.3);
    let rest = UnitQuat::from_yaw_pitch(0.0, -30.0);
    let aim = UnitQuat::from_yaw_pitch(0.0, launch_pitch(center, 3.5));
    let aim_axis = aim.rotate(Vec3::Z);

    let mut frames = Vec::new();
    for t in (0..=5000u64).step_by(10) {
        let mut s = StylusSample {
            position: center,
            rotation: rest,
            front: false,
            rear: (800..900).contains(&t) || (4200..4300).contains(&t),
        };
        if (900..4300).contains(&t) {
            let k = ((t as f64 - 900.0) / 900.0).min(1.0);
            s.rotation = rest.slerp(aim, k);
        }
        if (2200..4300).contains(&t) {
            let k = ((t as f64 - 2200.0) / 500.0).min(1.0);
            s.rotation = UnitQuat::from_axis_angle(aim_axis, 120.0 * k) * aim;
        }
        s.front = (2000..3500).contains(&t);
        if t >= 4400 {
            let k = ((t as f64 - 4400.0) / 500.0).min(1.0);
            let tip = Vec3::new(-0.25 + 0.5 * k, 1.0, 0.5);
            s.position = tip - rest.rotate(Vec3::Z) * HALF;
            s.front = t < 4900;
        }
        frames.push(InputFrame {
            t,
            stylus: s,
            head,
            gaze: None,
        });
    }
    let trace = Trace {
        header: Some(TraceHeader {
            config: KernelConfig::with_methods(SwitchMethod::Button, OrientMethod::Roll),
            scene: Some(SceneRef::Study {
                depth_m: 3.0,
                rotation_deg: 180.0,
            }),
            seed: 0,
        }),
        frames,
    };
    write_trace(std::io::stdout().lock(), &trace).expect("stdout");
}
