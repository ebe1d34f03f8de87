pub mod cv;
pub mod dv;
pub mod encoding;
pub mod error;
pub mod fixtures;
pub mod numerics;
pub mod oracle;
pub mod pipeline;

pub use encoding::{encode, kernel, Dataset, EncodedState, FeatureEncoder, HamiltonianSpec, Sample};
pub use error::{Error, Result};
pub use numerics::{ComplexMatrix, ComplexVector, C64};
pub use oracle::{GramMatrix, KrrModel};
pub use pipeline::{run_regression, GridSpec, PipelineConfig, PredictionResult, Regressor, SuccessRateStudy, Tier};
