#![no_main]

use libfuzzer_sys::fuzz_target;
use pgf::scene::{scene_from_bytes, scene_to_bytes};

fuzz_target!(|data: &[u8]| {
    if let Ok(scene) = scene_from_bytes(data) {
        let again = scene_from_bytes(&scene_to_bytes(&scene)).expect("re-encoded scene parses");
        assert_eq!(again, scene);
    }
});
