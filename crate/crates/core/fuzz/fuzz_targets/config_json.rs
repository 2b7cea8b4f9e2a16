#![no_main]

use libfuzzer_sys::fuzz_target;
use pgf::harness::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = RunConfig::from_json_str(text) {
        let again = RunConfig::from_json_str(&cfg.to_json_string()).expect("re-encoded config parses");
        assert_eq!(again, cfg);
    }
});
