//! Joint clustering and time alignment of variable-length multidimensional curves.

pub mod cli;
pub mod em;
pub mod error;
pub mod eval;
pub mod inference;
pub mod io;
pub mod model;
pub mod offset;
pub mod synth;

pub use em::{fit, fit_multi_start, FitResult};
pub use error::{
    ConfigError, ConfigIssue, DataError, Error, ErrorCategory, InferenceError, ModelError, Result,
};
pub use eval::{compare_variants, cross_validate, heldout_logp, CvReport, Variant};
pub use inference::{curve_loglik, viterbi_align};
pub use model::{
    validate_config, Alignment, Curve, CurveSet, ModelConfig, ModelParts, Topology,
    WarpMixtureModel,
};
