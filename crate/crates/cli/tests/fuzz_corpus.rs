//! Replays the checked-in fuzz corpus through the parsers with the same
//! checks as the fuzz targets, so regressions show up without a fuzzer.

use std::path::Path;

use hjmm::config::{parse_config, parse_override, Config, Scenario};
use hjmm::curve::{CurveGrid, ForwardCurve};
use hjmm_cli::report::compare_reports;

fn corpus(target: &str) -> Vec<Vec<u8>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut files: Vec<_> = std::fs::read_dir(&dir).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    assert!(!files.is_empty(), "empty corpus {}", dir.display());
    files.iter().map(|p| std::fs::read(p).unwrap()).collect()
}

#[test]
fn config_parse() {
    let mut accepted = 0;
    for data in corpus("config_parse") {
        let Ok(text) = std::str::from_utf8(&data) else { continue };
        if let Ok(cfg) = parse_config(text) {
            let mut back = Config::default();
            for line in cfg.canonical().lines() {
                back.apply(&parse_override(line).unwrap());
            }
            assert_eq!(back.hash(), cfg.hash());
            accepted += Scenario::from_config(&cfg).is_ok() as usize;
        }
    }
    // every shipped scenario builds
    assert!(accepted >= 7, "{accepted}");
}

#[test]
fn override_parse() {
    for data in corpus("override_parse") {
        let Ok(text) = std::str::from_utf8(&data) else { continue };
        if let Ok(o) = parse_override(text) {
            let _ = Scenario::load("", &[o]);
        }
    }
}

#[test]
fn value_specs() {
    use hjmm::config::*;
    for data in corpus("value_specs") {
        let Some((&which, rest)) = data.split_first() else { continue };
        let Ok(spec) = std::str::from_utf8(rest) else { continue };
        match which % 6 {
            0 => drop(parse_vol_spec(spec)),
            1 => {
                if let Ok(c) = parse_jump_spec(spec) {
                    let _ = c.cumulant(0.0);
                }
            }
            2 => drop(parse_theta(spec)),
            3 => drop(parse_psi(spec)),
            4 => drop(parse_list(spec)),
            _ => drop(parse_initial_curve(spec, &CurveGrid::default_grid())),
        }
    }
}

#[test]
fn curve_csv() {
    for data in corpus("curve_csv") {
        let Ok(text) = std::str::from_utf8(&data) else { continue };
        if let Ok(c) = ForwardCurve::from_csv(text, 0.1) {
            let back = ForwardCurve::from_csv(&c.to_csv(), 0.1).unwrap();
            assert_eq!(back.values(), c.values());
        }
    }
}

#[test]
fn report_compare() {
    for data in corpus("report_compare") {
        let Ok(text) = std::str::from_utf8(&data) else { continue };
        let mid = (text.len() / 2..=text.len()).find(|&i| text.is_char_boundary(i)).unwrap_or(0);
        let (a, b) = text.split_at(mid);
        let _ = compare_reports(a, b, 1e-12);
        assert!(compare_reports(a, a, 0.0).is_ok());
    }
}
