use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use anyhow::{bail, Context, Result};

use stylus_teleport::harness::{run_trial, TrialOutcome};
use stylus_teleport::scene::build_study_scene;
use stylus_teleport::trace::{read_trace, SceneRef};
use stylus_teleport::{KernelConfig, StudyScene, TrialSceneSpec};

use crate::{read_json, ReplayArgs};

fn load_scene(path: &Path) -> Result<StudyScene> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    StudyScene::from_json(&text).with_context(|| format!("scene {}", path.display()))
}

pub fn run(args: &ReplayArgs) -> Result<()> {
    let file =
        File::open(&args.trace).with_context(|| format!("opening {}", args.trace.display()))?;
    let trace = read_trace(BufReader::new(file))
        .with_context(|| format!("trace {}", args.trace.display()))?;

    let scene = match (
        &args.scene,
        trace.header.as_ref().and_then(|h| h.scene.as_ref()),
    ) {
        (Some(path), _) => load_scene(path)?,
        (
            None,
            Some(SceneRef::Study {
                depth_m,
                rotation_deg,
            }),
        ) => build_study_scene(&TrialSceneSpec::new(*depth_m, *rotation_deg)?)?,
        (None, Some(SceneRef::File(rel))) => {
            let base = args.trace.parent().unwrap_or(Path::new("."));
            load_scene(&base.join(rel))?
        }
        (None, None) => bail!("trace header names no scene; pass --scene"),
    };
    let config: KernelConfig = match (&args.config, &trace.header) {
        (Some(path), _) => read_json(path)?,
        (None, Some(h)) => h.config,
        (None, None) => KernelConfig::default(),
    };

    let (log, outcome) = run_trial(&scene, &trace, &config)?;
    if args.events {
        for e in &log.events {
            println!("{}", serde_json::to_string(e)?);
        }
    }
    match outcome {
        TrialOutcome::Complete(_) => {
            println!("{}", serde_json::to_string_pretty(&outcome)?);
            Ok(())
        }
        TrialOutcome::Incomplete { reason } => bail!("incomplete trial: {reason}"),
    }
}
