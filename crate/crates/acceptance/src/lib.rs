//! Pass/fail bookkeeping for the acceptance run in `tests/acceptance.rs`.

use std::fmt;
use std::time::Duration;

/// Outcome of one numbered criterion.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub id: u8,
    pub title: &'static str,
    pub passed: bool,
    /// Measured values, one clause per check.
    pub details: Vec<String>,
    pub elapsed: Duration,
}

impl Verdict {
    pub fn new(id: u8, title: &'static str) -> Self {
        Verdict {
            id,
            title,
            passed: true,
            details: Vec::new(),
            elapsed: Duration::ZERO,
        }
    }

    /// Records one check; any failing check fails the criterion.
    pub fn check(&mut self, ok: bool, detail: impl Into<String>) -> bool {
        let detail = detail.into();
        self.details.push(if ok { detail } else { format!("FAILED {detail}") });
        self.passed &= ok;
        ok
    }

    /// Fails the criterion because it could not be evaluated at all.
    pub fn error(&mut self, err: impl fmt::Display) {
        self.check(false, format!("error: {err}"));
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} C{} {} ({:.1}s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.elapsed.as_secs_f64()
        )?;
        for d in &self.details {
            write!(f, "\n       {d}")?;
        }
        Ok(())
    }
}

/// Criteria selected by a comma-separated list such as `1,3,7`; `None` or an
/// empty string selects all.
pub fn selected(filter: Option<&str>, id: u8) -> bool {
    match filter.map(str::trim) {
        None | Some("") => true,
        Some(list) => list.split(',').any(|s| s.trim().parse() == Ok(id)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_failed_check_fails_the_verdict() {
        let mut v = Verdict::new(3, "metrics");
        assert!(v.check(true, "a"));
        assert!(!v.check(false, "b"));
        assert!(!v.passed);
        assert_eq!(v.details, ["a", "FAILED b"]);
        assert!(v.to_string().starts_with("FAIL C3 metrics"));
    }

    #[test]
    fn filter_lists() {
        assert!(selected(None, 4));
        assert!(selected(Some(""), 4));
        assert!(selected(Some("1, 4"), 4));
        assert!(!selected(Some("1,5"), 4));
    }
}
