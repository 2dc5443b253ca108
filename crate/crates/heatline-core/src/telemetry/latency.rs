//! Per-stage latency accounting and pass/fail reports against the pipeline
//! processing-time budgets.

use std::sync::Mutex;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    TelemetryParser,
    PowerControl,
    DataManager,
}

impl Stage {
    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::TelemetryParser => "telemetry_parser",
            Stage::PowerControl => "power_control",
            Stage::DataManager => "data_manager",
        }
    }
}

/// Per-stage processing-time budgets, ms.
pub const PARSER_BUDGET_MS: f64 = 5.0;
pub const POWER_CONTROL_BUDGET_MS: f64 = 1000.0;
pub const DATA_MANAGER_BUDGET_MS: f64 = 1000.0;

/// Mean processing times measured on the reference production deployment of
/// the same pipeline, printed next to local results for comparison (never
/// asserted: hardware differs).
pub const REFERENCE_DEPLOYMENT_MEANS_MS: [(Stage, f64); 3] = [
    (Stage::TelemetryParser, 4.622),
    (Stage::PowerControl, 4.055),
    (Stage::DataManager, 9.922),
];

/// Thread-safe sample collector for one stage.
#[derive(Debug, Default)]
pub struct StageStats {
    samples_ms: Mutex<Vec<f64>>,
}

impl StageStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_ms(&self, ms: f64) {
        self.samples_ms.lock().unwrap().push(ms);
    }

    pub fn len(&self) -> usize {
        self.samples_ms.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn report(&self, stage: Stage, budget_ms: f64) -> LatencyReport {
        let samples = self.samples_ms.lock().unwrap().clone();
        LatencyReport::from_samples(stage, &samples, budget_ms)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub stage: Stage,
    pub samples: usize,
    pub mean_ms: f64,
    pub p99_ms: f64,
    pub max_ms: f64,
    pub budget_ms: f64,
    /// Pass if and only if the mean is within budget.
    pub pass: bool,
}

impl LatencyReport {
    pub fn from_samples(stage: Stage, samples_ms: &[f64], budget_ms: f64) -> Self {
        let n = samples_ms.len();
        let mean = if n == 0 { 0.0 } else { samples_ms.iter().sum::<f64>() / n as f64 };
        let mut sorted = samples_ms.to_vec();
        sorted.sort_by(f64::total_cmp);
        let p99 = if n == 0 {
            0.0
        } else {
            sorted[(((n as f64) * 0.99).ceil() as usize).clamp(1, n) - 1]
        };
        let max = sorted.last().copied().unwrap_or(0.0);
        LatencyReport {
            stage,
            samples: n,
            mean_ms: mean,
            p99_ms: p99,
            max_ms: max,
            budget_ms,
            pass: mean <= budget_ms,
        }
    }

    /// Aligned text table: stage, budget, actual mean, verdict, with the
    /// reference deployment mean alongside.
    pub fn table(reports: &[LatencyReport]) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<18} {:>10} {:>12} {:>12} {:>8}\n",
            "stage", "budget_ms", "actual_ms", "reference_ms", "verdict"
        ));
        for r in reports {
            let reference = REFERENCE_DEPLOYMENT_MEANS_MS
                .iter()
                .find(|(s, _)| *s == r.stage)
                .map(|(_, v)| format!("{v:.3}"))
                .unwrap_or_else(|| "-".to_string());
            out.push_str(&format!(
                "{:<18} {:>10.3} {:>12.3} {:>12} {:>8}\n",
                r.stage.as_str(),
                r.budget_ms,
                r.mean_ms,
                reference,
                if r.pass { "pass" } else { "FAIL" }
            ));
        }
        out
    }
}
