//! Pass-rate reports and Wilson intervals.

use serde::{Deserialize, Serialize};

const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Exact,
    MonteCarlo,
}

/// Outcome of a pass/fail experiment.
///
/// In exact mode `passes`/`trials` count enumerated outcomes and `estimate` is the
/// measure-weighted probability, which can differ from the raw ratio when outcomes
/// carry unequal weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub passes: u64,
    pub trials: u64,
    pub estimate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub mode: Mode,
    pub seed: u64,
}

impl TestReport {
    pub fn exact(passes: u64, trials: u64, estimate: f64, seed: u64) -> TestReport {
        let estimate = estimate.clamp(0.0, 1.0);
        TestReport {
            passes,
            trials,
            estimate,
            ci_lo: estimate,
            ci_hi: estimate,
            mode: Mode::Exact,
            seed,
        }
    }

    pub fn monte_carlo(passes: u64, trials: u64, seed: u64) -> TestReport {
        let (lo, hi) = wilson(passes, trials);
        TestReport {
            passes,
            trials,
            estimate: if trials == 0 {
                0.0
            } else {
                passes as f64 / trials as f64
            },
            ci_lo: lo,
            ci_hi: hi,
            mode: Mode::MonteCarlo,
            seed,
        }
    }

    pub fn covers(&self, p: f64) -> bool {
        self.ci_lo - 1e-12 <= p && p <= self.ci_hi + 1e-12
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// 95% Wilson score interval.
pub fn wilson(passes: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = passes as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}
