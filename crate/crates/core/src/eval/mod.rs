//! Rankings, metrics under the raw and time-aware filtered settings,
//! ablation modes, clue statistics and explanations.

mod analysis;
mod evaluator;
mod explain;
mod metrics;
mod ranking;

pub use analysis::{clue_category_stats, clue_graph_export, clue_graph_tsv, ClueCategoryStats};
pub use evaluator::{direction, summarise, EvalMode, EvalRun, Evaluator, Prediction, RankedEntity, RankingRecord};
pub use explain::{explain, ExplainedCandidate, Explanation};
pub use metrics::{metrics, Metrics, MetricsReport};
pub use ranking::{final_ranking, rank_of, stage1_ordering, Rerank, TimeFilter};
