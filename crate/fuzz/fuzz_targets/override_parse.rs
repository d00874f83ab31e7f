#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(o) = hjmm::config::parse_override(text) {
        let _ = hjmm::config::Scenario::load("", &[o]);
    }
});
