//! Predictor evaluation: Pearson and Kendall tau-b against ground truth,
//! Student's t significance, and the benchmark report.

pub mod correlation;
pub mod report;
pub mod significance;

pub use correlation::{kendall_pair_counts, kendall_tau, pearson, PairCounts};
pub use report::{
    build_report, plot_data, EvaluationReport, FoldCorrelation, PlotPoint, ReportRow,
    SupervisedOutput, SystemBlock,
};
pub use significance::{critical_value, significance, Significance, DEFAULT_ALPHA};
