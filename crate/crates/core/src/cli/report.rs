//! Machine-readable run summary and its text mirror.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::{RunConfig, Scenario};

pub const SUMMARY_SCHEMA: &str = "hfoil-summary/1";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionOutcome {
    pub id: u32,
    pub name: &'static str,
    pub pass: bool,
    /// The quantity compared with the threshold, when there is a single one.
    pub measured: Option<f64>,
    pub threshold: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportSummary {
    pub schema: &'static str,
    pub scenario: Scenario,
    pub pass: bool,
    pub criteria: Vec<CriterionOutcome>,
    /// Key fitted exponents and observed orders.
    pub exponents: BTreeMap<String, f64>,
    /// Evolution and analysis errors met on the way.
    pub errors: Vec<String>,
    pub wall_time_s: f64,
    pub config_hash: String,
    pub config: RunConfig,
}

/// SHA-256 of the TOML echo with `out` cleared, hex encoded.
pub fn config_hash(cfg: &RunConfig) -> String {
    let bare = RunConfig { out: Default::default(), ..cfg.clone() };
    let digest = Sha256::digest(bare.to_toml().as_bytes());
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

impl ReportSummary {
    pub fn new(cfg: &RunConfig) -> Self {
        ReportSummary {
            schema: SUMMARY_SCHEMA,
            scenario: cfg.scenario,
            pass: true,
            criteria: Vec::new(),
            exponents: BTreeMap::new(),
            errors: Vec::new(),
            wall_time_s: 0.0,
            config_hash: config_hash(cfg),
            config: cfg.clone(),
        }
    }

    pub fn criterion(&mut self, c: CriterionOutcome) {
        assert!(self.criteria.iter().all(|o| o.id != c.id), "criterion {} reported twice", c.id);
        self.criteria.push(c);
        self.criteria.sort_by_key(|c| c.id);
    }

    pub fn finish(&mut self) {
        self.pass = self.errors.is_empty() && self.criteria.iter().all(|c| c.pass);
    }

    pub fn outcome(&self, id: u32) -> Option<&CriterionOutcome> {
        self.criteria.iter().find(|c| c.id == id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serialises") + "\n"
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "scenario     {}", self.scenario);
        let _ = writeln!(s, "config hash  {}", self.config_hash);
        let _ = writeln!(s, "wall time    {:.3} s", self.wall_time_s);
        let _ = writeln!(s, "result       {}", if self.pass { "PASS" } else { "FAIL" });
        s.push('\n');
        for c in &self.criteria {
            let m = c.measured.map(|m| format!("{m:.6}")).unwrap_or_else(|| "-".into());
            let verdict = if c.pass { "PASS" } else { "FAIL" };
            let _ = writeln!(s, "[{verdict}] criterion {} {:<24} measured {m} (need {})", c.id, c.name, c.threshold);
            if !c.detail.is_empty() {
                let _ = writeln!(s, "       {}", c.detail);
            }
        }
        if !self.exponents.is_empty() {
            s.push_str("\nexponents\n");
            for (k, v) in &self.exponents {
                let _ = writeln!(s, "  {k:<32} {v:.6}");
            }
        }
        if !self.errors.is_empty() {
            s.push_str("\nerrors\n");
            for e in &self.errors {
                let _ = writeln!(s, "  {e}");
            }
        }
        s.push_str("\nconfig\n");
        s.push_str(&self.config.to_toml());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outcome(id: u32, pass: bool) -> CriterionOutcome {
        CriterionOutcome { id, name: "x", pass, measured: Some(1.0), threshold: "<= 2".into(), detail: String::new() }
    }

    #[test]
    fn pass_needs_every_criterion_and_no_errors() {
        let cfg = RunConfig::defaults(Scenario::ConvergenceSuite);
        let mut r = ReportSummary::new(&cfg);
        r.criterion(outcome(8, true));
        r.criterion(outcome(2, true));
        r.finish();
        assert!(r.pass);
        assert_eq!(r.criteria.iter().map(|c| c.id).collect::<Vec<_>>(), vec![2, 8]);
        r.errors.push("boom".into());
        r.finish();
        assert!(!r.pass);
        assert!(r.to_text().contains("[PASS] criterion 2"));
    }

    #[test]
    #[should_panic(expected = "reported twice")]
    fn criteria_are_unique() {
        let mut r = ReportSummary::new(&RunConfig::defaults(Scenario::ConvergenceSuite));
        r.criterion(outcome(8, true));
        r.criterion(outcome(8, false));
    }

    #[test]
    fn hash_tracks_the_config() {
        let a = RunConfig::defaults(Scenario::SobolevSuite);
        let mut b = a.clone();
        assert_eq!(config_hash(&a), config_hash(&b));
        b.out = "elsewhere".into();
        assert_eq!(config_hash(&a), config_hash(&b));
        b.seed = 3;
        assert_ne!(config_hash(&a), config_hash(&b));
        assert_eq!(config_hash(&a).len(), 64);
    }
}
