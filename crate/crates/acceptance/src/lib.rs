//! Reporting helpers for the acceptance suite in `tests/acceptance.rs`.

use std::io::Write;

/// Pass/fail lines for one criterion. Lines go straight to stdout so they
/// show up even when the test harness captures output.
#[derive(Debug, Default)]
pub struct Report {
    failed: Vec<String>,
}

impl Report {
    pub fn new() -> Self {
        Report::default()
    }

    /// Records one line; `passed == false` makes [`Report::finish`] panic.
    pub fn check(&mut self, name: &str, passed: bool, detail: impl AsRef<str>) {
        let tag = if passed { "PASS" } else { "FAIL" };
        line(&format!("[acceptance] {tag} {name}: {}", detail.as_ref()));
        if !passed {
            self.failed.push(name.to_string());
        }
    }

    /// A line that does not count toward the verdict.
    pub fn note(&mut self, name: &str, detail: impl AsRef<str>) {
        line(&format!("[acceptance] INFO {name}: {}", detail.as_ref()));
    }

    pub fn finish(self) {
        assert!(self.failed.is_empty(), "failed: {}", self.failed.join(", "));
    }
}

fn line(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{text}");
    let _ = out.flush();
}

/// Coefficient of determination of the least-squares line through `(x, y)`.
pub fn r_squared(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy * sxy / (sxx * syy)
}

pub fn strictly_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] > w[0])
}

pub fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}
