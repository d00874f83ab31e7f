#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let mid = (text.len() / 2..=text.len()).find(|&i| text.is_char_boundary(i)).unwrap_or(0);
    let (a, b) = text.split_at(mid);
    let _ = hjmm_cli::report::compare_reports(a, b, 1e-12);
    assert!(hjmm_cli::report::compare_reports(a, a, 0.0).is_ok());
});
