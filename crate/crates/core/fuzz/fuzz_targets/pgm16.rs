#![no_main]

use libfuzzer_sys::fuzz_target;
use pgf::guidance::parse_pgm16;

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = parse_pgm16(data) {
        assert_eq!(img.data.len(), img.width * img.height);
        assert!(img.data.iter().all(|&p| p <= img.maxval));
    }
});
