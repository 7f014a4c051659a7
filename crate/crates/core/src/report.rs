use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// One measured quantity against its bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub check_name: String,
    pub n: i64,
    pub m: i64,
    pub argument_hash: String,
    pub measured: f64,
    pub bound: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckSummary {
    pub count: usize,
    pub failed: usize,
    pub max_measured: f64,
    /// Largest `measured − bound` seen.
    pub worst_excess: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub records: Vec<CheckRecord>,
}

/// FNV-1a over the little-endian bytes of the indices and the arguments.
pub fn argument_hash(n: i64, m: i64, args: &[f64]) -> String {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    let bytes =
        n.to_le_bytes().into_iter().chain(m.to_le_bytes()).chain(args.iter().flat_map(|a| a.to_bits().to_le_bytes()));
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(PRIME);
    }
    format!("{h:016x}")
}

impl VerificationReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, check_name: &str, n: i64, m: i64, args: &[f64], measured: f64, bound: f64) -> bool {
        let passed = measured <= bound;
        self.records.push(CheckRecord {
            check_name: check_name.to_string(),
            n,
            m,
            argument_hash: argument_hash(n, m, args),
            measured,
            bound,
            passed,
        });
        passed
    }

    pub fn extend(&mut self, other: VerificationReport) {
        self.records.extend(other.records);
    }

    pub fn passed(&self) -> bool {
        self.records.iter().all(|r| r.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckRecord> {
        self.records.iter().filter(|r| !r.passed)
    }

    pub fn records_named<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a CheckRecord> + 'a {
        self.records.iter().filter(move |r| r.check_name == name)
    }

    pub fn max_measured(&self, name: &str) -> Option<f64> {
        self.records_named(name).map(|r| r.measured).reduce(f64::max)
    }

    pub fn summary(&self) -> BTreeMap<String, CheckSummary> {
        let mut out: BTreeMap<String, CheckSummary> = BTreeMap::new();
        for r in &self.records {
            let s = out.entry(r.check_name.clone()).or_insert(CheckSummary {
                count: 0,
                failed: 0,
                max_measured: f64::NEG_INFINITY,
                worst_excess: f64::NEG_INFINITY,
            });
            s.count += 1;
            s.failed += usize::from(!r.passed);
            s.max_measured = s.max_measured.max(r.measured);
            s.worst_excess = s.worst_excess.max(r.measured - r.bound);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = argument_hash(1, 2, &[0.5, -0.25]);
        assert_eq!(a, argument_hash(1, 2, &[0.5, -0.25]));
        assert_ne!(a, argument_hash(2, 1, &[0.5, -0.25]));
        assert_ne!(a, argument_hash(1, 2, &[0.5, 0.25]));
        assert_eq!(argument_hash(0, 0, &[]).len(), 16);
    }

    #[test]
    fn nan_fails() {
        let mut r = VerificationReport::new();
        assert!(r.push("x", 0, 0, &[], 1.0, 2.0));
        assert!(!r.push("x", 0, 0, &[], f64::NAN, 2.0));
        assert!(!r.passed());
        let s = r.summary();
        assert_eq!(s["x"].count, 2);
        assert_eq!(s["x"].failed, 1);
    }
}
