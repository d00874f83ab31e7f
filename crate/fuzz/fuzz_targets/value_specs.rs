#![no_main]
use libfuzzer_sys::fuzz_target;

// First byte picks the parser, the rest is the value.
fuzz_target!(|data: &[u8]| {
    let Some((&which, rest)) = data.split_first() else { return };
    let Ok(spec) = std::str::from_utf8(rest) else { return };
    match which % 6 {
        0 => {
            let _ = hjmm::config::parse_vol_spec(spec);
        }
        1 => {
            if let Ok(c) = hjmm::config::parse_jump_spec(spec) {
                let _ = c.cumulant(0.0);
            }
        }
        2 => {
            let _ = hjmm::config::parse_theta(spec);
        }
        3 => {
            let _ = hjmm::config::parse_psi(spec);
        }
        4 => {
            let _ = hjmm::config::parse_list(spec);
        }
        _ => {
            let _ = hjmm::config::parse_initial_curve(spec, &hjmm::curve::CurveGrid::default_grid());
        }
    }
});
