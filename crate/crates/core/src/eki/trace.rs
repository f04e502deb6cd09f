use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// One prediction step of the smoother.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub n: usize,
    /// ||Gamma^{-1/2} (y - omega_bar_n)||.
    pub misfit: f64,
    /// Regularization used in the analysis that followed, if one ran.
    pub alpha: Option<f64>,
    pub doublings: Option<usize>,
    /// Forward evaluations spent by the smoother up to and including this step.
    pub evals_cumulative: usize,
    /// Relative field error of the ensemble mean theta_bar_n, when the truth is known.
    pub rel: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Discrepancy,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunTrace {
    pub records: Vec<IterationRecord>,
    pub stop: StopReason,
    pub tau: f64,
    pub eta: f64,
    pub ensemble_size: usize,
    pub forward_evaluations: usize,
    /// Number of analysis steps performed.
    pub analyses: usize,
    pub final_rel: Option<f64>,
}

pub const CSV_HEADER: &str = "n,misfit,alpha,doublings,evals_cumulative,rel,seconds";

fn opt<T: std::fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map(|x| x.to_string()).unwrap_or_default()
}

impl IterationRecord {
    /// CSV fields in [`CSV_HEADER`] order. Without timing the seconds column is 0.
    pub fn csv_fields(&self, with_timing: bool) -> String {
        let secs = if with_timing { self.seconds } else { 0.0 };
        format!(
            "{},{},{},{},{},{},{}",
            self.n,
            self.misfit,
            opt(&self.alpha),
            opt(&self.doublings),
            self.evals_cumulative,
            opt(&self.rel),
            secs
        )
    }
}

impl RunTrace {
    pub fn to_csv(&self, with_timing: bool) -> String {
        let mut out = String::new();
        writeln!(out, "{CSV_HEADER}").unwrap();
        for r in &self.records {
            writeln!(out, "{}", r.csv_fields(with_timing)).unwrap();
        }
        out
    }

    pub fn last_misfit(&self) -> Option<f64> {
        self.records.last().map(|r| r.misfit)
    }

    pub fn total_seconds(&self) -> f64 {
        self.records.iter().map(|r| r.seconds).sum()
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "stop_reason": self.stop,
            "iterations": self.records.len(),
            "analyses": self.analyses,
            "forward_evaluations": self.forward_evaluations,
            "final_misfit": self.last_misfit(),
            "threshold": self.tau * self.eta,
            "final_rel": self.final_rel,
        })
    }
}
