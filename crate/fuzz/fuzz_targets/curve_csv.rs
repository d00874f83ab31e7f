#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(c) = hjmm::curve::ForwardCurve::from_csv(text, 0.1) {
        let back = hjmm::curve::ForwardCurve::from_csv(&c.to_csv(), 0.1).expect("round trip");
        assert_eq!(back.values(), c.values());
    }
});
