//! Power control: agent decisions to voltages, update sanity checks,
//! hot-swappable decision managers and the deployment model wrapper.

mod convert;
mod manager;
mod wrapper;

pub use convert::{power_to_voltage, zone_voltage, ConversionOutcome, PowerUpdate, Provenance};
pub use manager::{
    sanity_check, DecisionOutcome, ManagerCounters, NpManager, PowerPolicy, SanityLimits,
    SanityVerdict, SkipReason, WhManager, DEFAULT_STALENESS_BOUND_NS,
};
pub use wrapper::{
    wrap_model, zone_feature_indices, InterpolationSpec, NormBounds, WrappedModel, FEATURE_COUNT,
    OUTPUT_SLOTS, SCORES_PER_ZONE,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PowerError {
    #[error("non-finite value in voltage conversion")]
    NonFinite,
    #[error("old voltage must be > 0, got {0}")]
    NonPositiveVoltage(f64),
    #[error("new power must be >= 0, got {0}")]
    NegativePower(f64),
    #[error("undefined power ratio: old {p_old} kW, new {p_new} kW")]
    UndefinedRatio { p_old: f64, p_new: f64 },
    #[error("model wrapping failed: {0}")]
    Wrap(String),
    #[error("unknown algorithm version {0}")]
    UnknownVersion(String),
    #[error("algorithm bundle is invalid: {0}")]
    BadBundle(String),
}
