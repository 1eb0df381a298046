#![no_main]

use libfuzzer_sys::fuzz_target;
use stylus_teleport::StudyScene;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(scene) = StudyScene::from_json(text) {
        let again = StudyScene::from_json(&scene.to_json()).expect("written scene parses");
        assert_eq!(again, scene);
    }
});
