//! Detection metrics: greedy matching, precision/recall curves,
//! interpolated AP, best-F1 operating points, range-binned reports and
//! dataset statistics.

mod curve;
mod matching;
mod report;
mod stats;

pub use curve::{
    average_precision, best_f1, collect_outcomes, f1_score, pr_curve, BestF1, FrameObjects,
    Interpolation, Outcome, Outcomes, PrCurve, PrPoint,
};
pub use matching::{match_frame, score_order, EvalObject, FrameMatch, Match, MatchCriterion, MatchMode};
pub use report::{
    evaluate_objects, frame_objects, range_binned_map, restrict_to_range, CellMetrics, Difficulty,
    EvalCell, EvalConfig, EvalFrame, EvalReport, RangeBins,
};
pub use stats::{dataset_stats, BinStats, DatasetStats, Summary};
