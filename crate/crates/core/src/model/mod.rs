//! Domain records and their on-disk formats.

mod embedding;
mod hyperparams;
mod response;
mod sample;
mod validate;

pub use embedding::{EmbeddingMatrix, ZERO_NORM};
pub use hyperparams::Hyperparams;
pub use response::{
    format_response_log, load_response_log, parse_response_log, write_response_log, Answer,
    Protocol, ResponseRecord, RESPONSE_LOG_HEADER,
};
pub use sample::{
    format_manifest, load_sample_manifest, parse_sample_manifest, write_manifest, Method, Role,
    SampleRecord, Strength, STRENGTH_LEVELS,
};
pub use validate::{validate_dataset, OrphanReference, StrengthCoverage, ValidationReport};
