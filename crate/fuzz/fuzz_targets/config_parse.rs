#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = hjmm::config::parse_config(text) {
        // canonical lines read back as overrides to the same configuration
        let mut back = hjmm::config::Config::default();
        for line in cfg.canonical().lines() {
            back.apply(&hjmm::config::parse_override(line).expect("canonical line parses"));
        }
        assert_eq!(back.hash(), cfg.hash());
        let _ = hjmm::config::Scenario::from_config(&cfg);
    }
});
