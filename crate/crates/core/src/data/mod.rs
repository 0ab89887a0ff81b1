//! Panels of observations, lagged design matrices and summary graphs.

mod dot;
mod graph;
mod lagged;
mod panel;

pub use dot::{parse_dot, write_dot, DotGraph};
pub use graph::{is_acyclic, SummaryGraph};
pub use lagged::{build_lag_matrix, build_lag_matrix_from, ColumnTag, DesignMatrix, LagSpec};
pub use panel::TimeSeriesPanel;
