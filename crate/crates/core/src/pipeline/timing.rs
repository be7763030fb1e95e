//! Per-stage wall-clock times and hypothesis counters.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use crate::io::{kv, FormatError};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TimingReport {
    pub capture_ms: f64,
    pub preprocessing_ms: f64,
    /// Census and coarse cross-view disparity.
    pub depth_initial_ms: f64,
    /// Bounded aggregation, SGM, WTA and depth conversion.
    pub depth_final_ms: f64,
    /// Output files and stream publication.
    pub sending_ms: f64,
    /// `(pixel, view, hypothesis)` triples probed by the final aggregation.
    pub evaluated_hypotheses: u64,
    /// The same count for an unbounded search.
    pub exhaustive_hypotheses: u64,
    pub coarse_hypotheses: u64,
}

const KEYS: [&str; 8] = [
    "capture_ms",
    "preprocessing_ms",
    "depth_initial_ms",
    "depth_final_ms",
    "sending_ms",
    "evaluated_hypotheses",
    "exhaustive_hypotheses",
    "coarse_hypotheses",
];

pub(crate) fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

/// Runs `f` and adds its wall time to `slot`.
pub(crate) fn timed<T>(slot: &mut f64, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    *slot += ms(start.elapsed());
    out
}

impl TimingReport {
    pub fn total_ms(&self) -> f64 {
        self.capture_ms + self.preprocessing_ms + self.depth_initial_ms + self.depth_final_ms + self.sending_ms
    }

    pub fn stages(&self) -> [(&'static str, f64); 5] {
        [
            ("capturing", self.capture_ms),
            ("pre-processing", self.preprocessing_ms),
            ("depth (initial)", self.depth_initial_ms),
            ("depth (final)", self.depth_final_ms),
            ("sending", self.sending_ms),
        ]
    }

    /// Hypothesis reduction of the bounded search, `None` without counters.
    pub fn reduction(&self) -> Option<f64> {
        (self.evaluated_hypotheses > 0)
            .then(|| self.exhaustive_hypotheses as f64 / self.evaluated_hypotheses as f64)
    }

    /// Element-wise mean of several reports.
    pub fn mean(reports: &[TimingReport]) -> TimingReport {
        if reports.is_empty() {
            return TimingReport::default();
        }
        let n = reports.len() as f64;
        let nu = reports.len() as u64;
        let sum_f = |f: fn(&TimingReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        let sum_u = |f: fn(&TimingReport) -> u64| reports.iter().map(f).sum::<u64>() / nu;
        TimingReport {
            capture_ms: sum_f(|r| r.capture_ms),
            preprocessing_ms: sum_f(|r| r.preprocessing_ms),
            depth_initial_ms: sum_f(|r| r.depth_initial_ms),
            depth_final_ms: sum_f(|r| r.depth_final_ms),
            sending_ms: sum_f(|r| r.sending_ms),
            evaluated_hypotheses: sum_u(|r| r.evaluated_hypotheses),
            exhaustive_hypotheses: sum_u(|r| r.exhaustive_hypotheses),
            coarse_hypotheses: sum_u(|r| r.coarse_hypotheses),
        }
    }

    fn values(&self) -> [String; 8] {
        [
            self.capture_ms.to_string(),
            self.preprocessing_ms.to_string(),
            self.depth_initial_ms.to_string(),
            self.depth_final_ms.to_string(),
            self.sending_ms.to_string(),
            self.evaluated_hypotheses.to_string(),
            self.exhaustive_hypotheses.to_string(),
            self.coarse_hypotheses.to_string(),
        ]
    }

    pub fn to_kv(&self) -> String {
        KEYS.iter()
            .zip(self.values())
            .fold(String::new(), |mut s, (k, v)| {
                let _ = writeln!(s, "{k}={v}");
                s
            })
    }

    pub fn from_kv(text: &str) -> Result<Self, FormatError> {
        let mut r = TimingReport::default();
        for e in kv::parse(text)? {
            match e.key.as_str() {
                "capture_ms" => r.capture_ms = kv::value(&e)?,
                "preprocessing_ms" => r.preprocessing_ms = kv::value(&e)?,
                "depth_initial_ms" => r.depth_initial_ms = kv::value(&e)?,
                "depth_final_ms" => r.depth_final_ms = kv::value(&e)?,
                "sending_ms" => r.sending_ms = kv::value(&e)?,
                "evaluated_hypotheses" => r.evaluated_hypotheses = kv::value(&e)?,
                "exhaustive_hypotheses" => r.exhaustive_hypotheses = kv::value(&e)?,
                "coarse_hypotheses" => r.coarse_hypotheses = kv::value(&e)?,
                other => {
                    return Err(FormatError::Malformed(format!(
                        "line {}: unknown timing key {other:?}",
                        e.line
                    )))
                }
            }
        }
        Ok(r)
    }
}

/// Fixed-width stage table, followed by the hypothesis counters if any.
pub fn report_format(report: &TimingReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<18}{:>12}", "stage", "time [ms]");
    let _ = writeln!(s, "{}", "-".repeat(30));
    for (name, t) in report.stages() {
        let _ = writeln!(s, "{name:<18}{t:>12.3}");
    }
    let _ = writeln!(s, "{}", "-".repeat(30));
    let _ = writeln!(s, "{:<18}{:>12.3}", "total", report.total_ms());
    if report.evaluated_hypotheses > 0 || report.exhaustive_hypotheses > 0 {
        let _ = writeln!(
            s,
            "evaluated hypotheses: {} (exhaustive would be {})",
            report.evaluated_hypotheses, report.exhaustive_hypotheses
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_report_table() {
        let t = report_format(&TimingReport::default());
        for name in ["capturing", "pre-processing", "depth (initial)", "depth (final)", "sending", "total"] {
            let line = t.lines().find(|l| l.starts_with(name)).unwrap();
            assert!(line.ends_with("0.000"), "{line}");
            assert_eq!(line.len(), 30);
        }
        assert!(!t.contains("evaluated"));
    }

    #[test]
    fn counter_line() {
        let r = TimingReport {
            evaluated_hypotheses: 120,
            exhaustive_hypotheses: 900,
            ..Default::default()
        };
        assert!(report_format(&r).contains("evaluated hypotheses: 120 (exhaustive would be 900)"));
        assert_eq!(r.reduction(), Some(7.5));
    }

    #[test]
    fn kv_round_trip() {
        let r = TimingReport {
            capture_ms: 0.1 + 0.2,
            preprocessing_ms: 45.0,
            depth_initial_ms: 1.0 / 3.0,
            depth_final_ms: 1e-9,
            sending_ms: 17.25,
            evaluated_hypotheses: u64::MAX,
            exhaustive_hypotheses: 7,
            coarse_hypotheses: 0,
        };
        assert_eq!(TimingReport::from_kv(&r.to_kv()).unwrap(), r);
        assert!(TimingReport::from_kv("bogus=1").is_err());
    }

    #[test]
    fn mean_of_reports() {
        let a = TimingReport {
            capture_ms: 2.0,
            evaluated_hypotheses: 10,
            ..Default::default()
        };
        let b = TimingReport {
            capture_ms: 4.0,
            evaluated_hypotheses: 20,
            ..Default::default()
        };
        let m = TimingReport::mean(&[a, b]);
        assert_eq!((m.capture_ms, m.evaluated_hypotheses), (3.0, 15));
        assert_eq!(TimingReport::mean(&[]), TimingReport::default());
    }
}
