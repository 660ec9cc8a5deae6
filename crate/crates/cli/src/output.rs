use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;

/// CSV table built in memory; written once at the end of a command.
pub struct Csv {
    precision: usize,
    text: String,
}

impl Csv {
    pub fn new(header: &[&str], precision: usize) -> Self {
        let mut text = header.join(",");
        text.push('\n');
        Self { precision, text }
    }

    pub fn num(&self, x: f64) -> String {
        fmt_sig(x, self.precision)
    }

    pub fn row(&mut self, fields: &[String]) {
        self.text.push_str(&fields.join(","));
        self.text.push('\n');
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

/// `x` with `digits` significant digits in scientific notation.
pub fn fmt_sig(x: f64, digits: usize) -> String {
    if x.is_finite() {
        format!("{:.*e}", digits.saturating_sub(1), x)
    } else {
        x.to_string()
    }
}

/// Plain-text verification report: one line per inequality with its margin.
#[derive(Default)]
pub struct Report {
    lines: String,
    failures: usize,
}

impl Report {
    pub fn title(&mut self, text: &str) {
        let _ = writeln!(self.lines, "{text}\n{}", "=".repeat(text.chars().count()));
    }

    pub fn info(&mut self, text: impl AsRef<str>) {
        let _ = writeln!(self.lines, "{}", text.as_ref());
    }

    /// Records `name` as satisfied iff `margin >= 0`.
    pub fn check(&mut self, name: &str, margin: f64) -> bool {
        let pass = margin >= 0.0;
        self.flag(name, pass, &format!("margin {margin:.6e}"))
    }

    pub fn flag(&mut self, name: &str, pass: bool, detail: &str) -> bool {
        let tag = if pass { "PASS" } else { "FAIL" };
        let _ = writeln!(self.lines, "[{tag}] {name}: {detail}");
        if !pass {
            self.failures += 1;
        }
        pass
    }

    pub fn passed(&self) -> bool {
        self.failures == 0
    }

    pub fn text(&self) -> &str {
        &self.lines
    }
}

/// Collects output files and writes them in one go.
pub struct Outputs {
    dir: PathBuf,
    files: Vec<(String, String)>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, contents: String) {
        self.files.push((name.into(), contents));
    }

    pub fn write(self) -> anyhow::Result<Vec<PathBuf>> {
        fs::create_dir_all(&self.dir).with_context(|| format!("creating {}", self.dir.display()))?;
        self.files
            .into_iter()
            .map(|(name, contents)| {
                let path = self.dir.join(name);
                fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
                Ok(path)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digits() {
        assert_eq!(fmt_sig(0.1, 17), "1.0000000000000001e-1");
        assert_eq!(fmt_sig(0.0, 3), "0.00e0");
        assert_eq!(fmt_sig(-2.5, 2), "-2.5e0");
        assert_eq!(fmt_sig(f64::INFINITY, 5), "inf");
    }

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [std::f64::consts::PI, 1.0 / 3.0, 6.02214076e23, -1e-300] {
            assert_eq!(fmt_sig(x, 17).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn report_counts_failures() {
        let mut r = Report::default();
        assert!(r.check("a", 0.0));
        assert!(!r.check("b", -1e-9));
        assert!(!r.passed());
        assert!(r.text().contains("[FAIL] b"));
    }
}
