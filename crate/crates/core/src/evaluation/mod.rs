//! Ranking the vocabulary and scoring rankings with Precision, Recall,
//! nDCG and F1 at a cutoff.

mod metrics;
mod ranking;
mod report;

pub use metrics::{f1, ndcg_at_k, precision_at_k, recall_at_k};
pub use ranking::{rank_items, rank_scores, score_items, RankedRecommendations};
pub use report::{
    evaluate, reports_csv, reports_plot, reports_table, CutoffMetrics, EvalOptions, MetricReport, Recommender,
    CSV_HEADER, PLOT_HEADER,
};
