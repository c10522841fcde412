use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::scenario::{ScenarioName, ScenarioReport};
use crate::HarnessError;

pub const TEXT_REPORT: &str = "report.txt";
pub const NDJSON_REPORT: &str = "report.ndjson";

/// One line of `report.ndjson`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReportLine {
    pub scenario: ScenarioName,
    pub baseline: &'static str,
    pub attempts: u64,
    pub successes: u64,
    pub audit_events: usize,
    pub state_restored: Option<bool>,
    pub expected: &'static str,
    pub passed: bool,
}

impl From<&ScenarioReport> for ReportLine {
    fn from(r: &ScenarioReport) -> Self {
        ReportLine {
            scenario: r.scenario.name,
            baseline: if r.weakened { "weakened" } else { "correct" },
            attempts: r.attempts,
            successes: r.successes,
            audit_events: r.audit_delta.len(),
            state_restored: r.state_restored,
            expected: if r.expected_breach() {
                "successes>=1"
            } else {
                "successes=0"
            },
            passed: r.passed(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Summary {
    pub seed: u64,
    pub reports: Vec<ScenarioReport>,
}

impl Summary {
    pub fn total_attempts(&self) -> u64 {
        self.reports.iter().map(|r| r.attempts).sum()
    }

    pub fn total_successes(&self) -> u64 {
        self.reports.iter().map(|r| r.successes).sum()
    }

    pub fn passed(&self) -> bool {
        self.reports.iter().all(ScenarioReport::passed)
    }

    pub fn lines(&self) -> Vec<ReportLine> {
        self.reports.iter().map(ReportLine::from).collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "threat harness, seed {}", self.seed);
        let _ = writeln!(
            out,
            "{:<24} {:<9} {:>8} {:>9} {:>6} {:>8} {:<13} result",
            "scenario", "baseline", "attempts", "successes", "audit", "restored", "expected"
        );
        for l in self.lines() {
            let restored = match l.state_restored {
                Some(true) => "yes",
                Some(false) => "NO",
                None => "n/a",
            };
            let _ = writeln!(
                out,
                "{:<24} {:<9} {:>8} {:>9} {:>6} {:>8} {:<13} {}",
                l.scenario.as_str(),
                l.baseline,
                l.attempts,
                l.successes,
                l.audit_events,
                restored,
                l.expected,
                if l.passed { "PASS" } else { "FAIL" }
            );
        }
        let _ = writeln!(
            out,
            "{:<24} {:<9} {:>8} {:>9}",
            "total",
            "",
            self.total_attempts(),
            self.total_successes()
        );
        out
    }

    pub fn to_ndjson(&self) -> String {
        self.lines()
            .iter()
            .map(|l| serde_json::to_string(l).unwrap_or_default() + "\n")
            .collect()
    }

    /// Writes `report.txt` and `report.ndjson` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), HarnessError> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(TEXT_REPORT), self.to_text())?;
        fs::write(dir.join(NDJSON_REPORT), self.to_ndjson())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Scenario;

    fn report(name: ScenarioName, weakened: bool, attempts: u64, successes: u64) -> ScenarioReport {
        ScenarioReport {
            scenario: Scenario::new(name, 1),
            weakened,
            attempts,
            successes,
            transcript: Vec::new(),
            audit_delta: Vec::new(),
            state_restored: Some(true),
        }
    }

    #[test]
    fn empty_summary_totals_are_zero() {
        let s = Summary::default();
        assert_eq!((s.total_attempts(), s.total_successes()), (0, 0));
        assert!(s.passed());
        assert_eq!(s.to_ndjson(), "");
    }

    #[test]
    fn single_report_totals() {
        let s = Summary {
            seed: 1,
            reports: vec![report(ScenarioName::TokenReplay, false, 20, 0)],
        };
        assert_eq!((s.total_attempts(), s.total_successes()), (20, 0));
        assert_eq!(s.to_ndjson().lines().count(), 1);
    }

    #[test]
    fn full_summary_totals_are_sums() {
        let mut reports: Vec<_> = ScenarioName::ALL
            .iter()
            .enumerate()
            .map(|(i, n)| report(*n, false, 10 * (i as u64 + 1), 0))
            .collect();
        reports.push(report(ScenarioName::FieldExfiltration, true, 30, 4));
        reports.push(report(ScenarioName::PrivilegeEscalation, true, 25, 2));
        let s = Summary { seed: 9, reports };
        assert_eq!(s.total_attempts(), 210 + 55);
        assert_eq!(s.total_successes(), 6);
        assert!(s.passed());
        let parsed: u64 = s
            .to_ndjson()
            .lines()
            .map(|l| {
                serde_json::from_str::<serde_json::Value>(l).unwrap()["attempts"]
                    .as_u64()
                    .unwrap()
            })
            .sum();
        assert_eq!(parsed, s.total_attempts());
        assert!(s.to_text().contains("total"));
    }

    #[test]
    fn verdicts() {
        assert!(!report(ScenarioName::FieldExfiltration, false, 5, 1).passed());
        assert!(!report(ScenarioName::FieldExfiltration, true, 5, 0).passed());
        assert!(report(ScenarioName::CredentialStuffing, true, 5, 0).passed());
        let mut r = report(ScenarioName::TokenReplay, false, 5, 0);
        r.state_restored = Some(false);
        assert!(!r.passed());
    }
}
