//! CSV reports with a `# key: value` metadata block.
//!
//! The `# generated:` line carries a wall-clock timestamp and is the only
//! part of a report allowed to differ between identical runs.

use std::fmt::Write as _;
use std::time::{SystemTime, UNIX_EPOCH};

pub const TIMESTAMP_KEY: &str = "# generated:";
pub const FORMAT_VERSION: &str = "hjmm-report/1";

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    meta: Vec<(String, String)>,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
    trailer: Vec<(String, String)>,
}

impl Report {
    pub fn new(command: &str, config_hash: &str, seed: u64) -> Self {
        let meta = vec![
            ("format".to_string(), FORMAT_VERSION.to_string()),
            ("command".to_string(), command.to_string()),
            ("config_sha256".to_string(), config_hash.to_string()),
            ("seed".to_string(), seed.to_string()),
            ("hjmm-core".to_string(), hjmm::VERSION.to_string()),
            ("hjmm-cli".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ];
        Self { meta, header: Vec::new(), rows: Vec::new(), trailer: Vec::new() }
    }

    pub fn meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.push((key.to_string(), value.to_string()));
        self
    }

    pub fn tolerance(self, name: &str, value: f64) -> Self {
        self.meta(&format!("tol.{name}"), num(value))
    }

    pub fn header<S: ToString>(mut self, cols: impl IntoIterator<Item = S>) -> Self {
        self.header = cols.into_iter().map(|c| c.to_string()).collect();
        self
    }

    pub fn row<S: ToString>(&mut self, cells: impl IntoIterator<Item = S>) {
        self.rows.push(cells.into_iter().map(|c| c.to_string()).collect());
    }

    pub fn trailer(&mut self, key: &str, value: impl ToString) {
        self.trailer.push((key.to_string(), value.to_string()));
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    /// Full text; `timestamp` goes into the `# generated:` line.
    pub fn render(&self, timestamp: Option<u64>) -> String {
        let mut out = String::new();
        for (k, v) in &self.meta {
            let _ = writeln!(out, "# {k}: {v}");
        }
        if let Some(ts) = timestamp {
            let _ = writeln!(out, "{TIMESTAMP_KEY} {ts}");
        }
        if !self.header.is_empty() {
            let _ = writeln!(out, "{}", self.header.join(","));
        }
        for r in &self.rows {
            let _ = writeln!(out, "{}", r.join(","));
        }
        for (k, v) in &self.trailer {
            let _ = writeln!(out, "# {k}: {v}");
        }
        out
    }

    pub fn render_now(&self) -> String {
        let ts = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        self.render(Some(ts))
    }
}

/// Shortest round-trip decimal form, so identical values print identically.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:e}")
    }
}

/// Drops the timestamp line.
pub fn strip_timestamp(text: &str) -> String {
    text.lines().filter(|l| !l.starts_with(TIMESTAMP_KEY)).map(|l| format!("{l}\n")).collect()
}

/// Compares two reports cell by cell: numbers within relative tolerance
/// `rel`, everything else exactly. The timestamp line is ignored.
pub fn compare_reports(a: &str, b: &str, rel: f64) -> Result<(), String> {
    let a = strip_timestamp(a);
    let b = strip_timestamp(b);
    let la: Vec<&str> = a.lines().collect();
    let lb: Vec<&str> = b.lines().collect();
    if la.len() != lb.len() {
        return Err(format!("line counts differ: {} vs {}", la.len(), lb.len()));
    }
    for (i, (x, y)) in la.iter().zip(&lb).enumerate() {
        let cx: Vec<&str> = x.split(',').collect();
        let cy: Vec<&str> = y.split(',').collect();
        if cx.len() != cy.len() {
            return Err(format!("line {}: cell counts differ", i + 1));
        }
        for (p, q) in cx.iter().zip(&cy) {
            if p == q {
                continue;
            }
            match (p.trim().parse::<f64>(), q.trim().parse::<f64>()) {
                (Ok(u), Ok(v)) if (u - v).abs() <= rel * u.abs().max(v.abs()) => {}
                _ => return Err(format!("line {}: `{p}` vs `{q}`", i + 1)),
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn timestamp_is_the_only_difference() {
        let mut r = Report::new("simulate", "abc", 3).tolerance("rank", 1e-8).header(["t", "x"]);
        r.row([num(0.5), num(1.0 / 3.0)]);
        let a = r.render(Some(1));
        let b = r.render(Some(2));
        assert_ne!(a, b);
        assert_eq!(strip_timestamp(&a), strip_timestamp(&b));
        assert!(compare_reports(&a, &b, 0.0).is_ok());
    }

    #[test]
    fn numeric_comparison() {
        let a = "x,1.0\n";
        assert!(compare_reports(a, "x,1.0000000000001\n", 1e-12).is_ok());
        assert!(compare_reports(a, "x,1.00001\n", 1e-12).is_err());
        assert!(compare_reports(a, "y,1.0\n", 1e-12).is_err());
    }

    #[test]
    fn numbers_round_trip() {
        for v in [0.1, 1e-300, -2.5e17, 1.0 / 7.0] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
    }
}
