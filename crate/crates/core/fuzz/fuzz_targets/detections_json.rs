#![no_main]

use libfuzzer_sys::fuzz_target;
use pgf::detection::{detections_from_json_str, detections_to_json_string};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(boxes) = detections_from_json_str(text) {
        let again = detections_from_json_str(&detections_to_json_string(&boxes)).expect("re-encoded detections parse");
        assert_eq!(again, boxes);
    }
});
