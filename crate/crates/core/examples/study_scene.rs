//! Prints the study scene for a depth and board rotation as JSON.
//!
//! ```text
//! cargo run --example study_scene -- 6 -45
//! ```

use stylus_teleport::scene::build_study_scene;
use stylus_teleport::TrialSceneSpec;

fn main() {
    let args: Vec<f64> = std::env::args()
        .skip(1)
        .map(|a| a.parse().expect("numeric argument"))
        .collect();
    let (depth, rotation) = match args[..] {
        [d, r] => (d, r),
        _ => (3.0, 45.0),
    };
    let spec = TrialSceneSpec::new(depth, rotation).unwrap_or_else(|e| {
        eprintln!("{e}");
        std::process::exit(2)
    });
    println!(
        "{}",
        build_study_scene(&spec).expect("valid spec").to_json()
    );
}
