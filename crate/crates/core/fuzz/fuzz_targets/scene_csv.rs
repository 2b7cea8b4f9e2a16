#![no_main]

use libfuzzer_sys::fuzz_target;
use pgf::scene::{scene_from_csv_str, scene_to_csv_string};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(scene) = scene_from_csv_str(text) {
        let again = scene_from_csv_str(&scene_to_csv_string(&scene)).expect("re-encoded scene parses");
        assert_eq!(again, scene);
    }
});
