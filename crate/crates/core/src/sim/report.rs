use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatencyQuantiles {
    pub p50: Option<i64>,
    pub p95: Option<i64>,
}

impl LatencyQuantiles {
    /// Nearest-rank quantiles of an ascending sample.
    pub fn nearest_rank(sorted: &[i64]) -> Self {
        let q = |p: f64| {
            if sorted.is_empty() {
                return None;
            }
            let rank = (p * sorted.len() as f64).ceil() as usize;
            Some(sorted[rank.clamp(1, sorted.len()) - 1])
        };
        Self { p50: q(0.5), p95: q(0.95) }
    }
}

/// Summary of one run. `matched + exhausted + cancelled == tickets`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub tickets: u64,
    pub matched: u64,
    pub exhausted: u64,
    pub cancelled: u64,
    pub nudges: u64,
    pub accepted: u64,
    pub declined: u64,
    pub timed_out: u64,
    pub nudges_cancelled: u64,
    /// Answers that arrived after their deadline and were refused.
    pub late_responses: u64,
    /// Teacher arrivals dropped because that teacher was already busy.
    pub skipped_arrivals: u64,
    pub sessions: u64,
    /// Nudges sent by matched tickets per matched ticket.
    pub mean_nudges_per_match: Option<f64>,
    pub match_latency_ms: LatencyQuantiles,
    pub events: u64,
    pub state_hash: String,
    pub event_log_path: Option<String>,
}
