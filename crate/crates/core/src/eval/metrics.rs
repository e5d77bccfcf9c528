use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mrr: f64,
    pub hits1: f64,
    pub hits10: f64,
    pub n: usize,
}

/// MRR and Hits@{1,10} of 1-based ranks.
pub fn metrics(ranks: &[usize]) -> Result<Metrics> {
    if ranks.is_empty() {
        return Err(Error::Invalid("no ranks to summarise".into()));
    }
    if ranks.contains(&0) {
        return Err(Error::Invalid("ranks are 1-based".into()));
    }
    let n = ranks.len() as f64;
    let hits = |k: usize| ranks.iter().filter(|&&r| r <= k).count() as f64 / n;
    Ok(Metrics {
        mrr: ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n,
        hits1: hits(1),
        hits10: hits(10),
        n: ranks.len(),
    })
}

/// One line of the metrics report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// `raw` or `time_filtered`.
    pub setting: String,
    /// `full`, `stage1_only` or `stage2_only`.
    pub mode: String,
    /// `object`, `subject` or `both`.
    pub direction: String,
    pub mrr: f64,
    pub hits1: f64,
    pub hits10: f64,
    pub n_queries: usize,
}
