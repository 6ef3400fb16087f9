//! Signal-quality monitoring toolkit for bitwise-decoded QAM over the Gaussian
//! channel.
//!
//! The crate simulates uniform and probabilistically shaped QAM transmission,
//! demaps received symbols to quantized L-values under a (possibly mismatched)
//! Gaussian auxiliary channel, and computes both ground-truth soft/hard metrics
//! (GMI, NGMI, ASI, pre-FEC BER, Q-factor) and blind estimates of ASI and Q
//! obtained from the |L|-value histogram alone, without knowledge of the
//! transmitted bits.
//!
//! Modules:
//! - [`constellation`]: QAM constellations, Gray labeling, Maxwell-Boltzmann
//!   shaped priors
//! - [`channel`]: complex AWGN channel and FEC-threshold SNR calibration
//! - [`demapper`]: bitwise L-value computation and mid-rise quantization
//! - [`metrics`]: ground-truth metrics with knowledge of the transmitted bits
//! - [`blind`]: the histogram-only ASI/Q estimator
//! - [`harness`]: sweep orchestration, configuration, and result I/O

pub mod blind;
pub mod channel;
pub mod constellation;
pub mod demapper;
pub mod harness;
pub mod math;
pub mod metrics;

pub use blind::{BlindEstimate, CandidateGrid, EstimatorConfig, GaussianCandidate, LHistogram};
pub use channel::{ChannelConfig, ChannelSnr};
pub use constellation::{Constellation, SymbolPrior};
pub use demapper::{DemapMetric, DemapperConfig, LMatrix, LQuantizer};
pub use metrics::MetricsReport;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("out of domain: {0}")]
    OutOfDomain(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
