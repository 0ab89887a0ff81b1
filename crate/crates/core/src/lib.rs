//! Causal discovery for multivariate time series with independent-noise
//! structural models.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f64`, which is what most callers want.
//!
//! ```
//! use timino::datagen::{generate, ExperimentId, ExperimentSpec};
//! use timino::discovery::{discover_full, DiscoveryConfig};
//!
//! let (panel, truth) = generate::<f64>(&ExperimentSpec::new(ExperimentId::E5, 300, 1)).unwrap();
//! let result = discover_full(&panel, &DiscoveryConfig::default()).unwrap();
//! if let Some(graph) = result.graph {
//!     assert_eq!(graph.node_count(), truth.graph.node_count());
//! }
//! ```

pub mod data;
pub mod datagen;
pub mod discovery;
pub mod error;
pub mod granger;
pub mod indep;
pub mod models;
pub mod rng;
pub mod scalar;

pub use data::{SummaryGraph, TimeSeriesPanel as GenericPanel};
pub use discovery::{discover_full, discover_partial, DiscoveryConfig, DiscoveryResult, Verdict};
pub use error::{Error, Result};
pub use models::Backend;
pub use scalar::Scalar;

pub type Panel = data::TimeSeriesPanel<f64>;
pub type DesignMatrix = data::DesignMatrix<f64>;
pub type FittedNodeModel = models::FittedNodeModel<f64>;
pub type NodeEvaluation = discovery::NodeEvaluation<f64>;
