//! Multi-class energy-based flow classifier.
//!
//! One Potts model is inferred per traffic class from discretized flows. A new
//! flow is assigned to the class of lowest energy when that energy is within
//! the class threshold, and is labeled *suspicious* otherwise.

pub mod classifier;
pub mod error;
pub mod evaluation;
pub mod model_io;
pub mod potts;
pub mod preprocess;
pub mod schema;
mod seeding;
pub mod synthesis;
pub mod table;

pub use classifier::{EnergyVector, MultiClassModel, SingleVerdict, TrainingParams, Verdict};
pub use error::{EfcError, Result};
pub use evaluation::{CvConfig, MetricsReport, UnknownExperimentReport};
pub use potts::{ClassModel, Flows};
pub use preprocess::{DiscretizedTable, Discretizer, PreprocessorState, Symbol};
pub use schema::{ClassLabel, DatasetProfile, DatasetSchema, FeatureKind};
pub use table::{IngestOptions, RawFlowTable};
