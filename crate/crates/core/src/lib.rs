//! Federated distillation for regression.
//!
//! Clients train small perceptrons on private shards and share only their
//! mean prediction per target segment; the server returns, to each client,
//! the average of the other clients' means, which enters the local loss as a
//! distillation regularizer. FedAvg, standalone and centralized baselines run
//! over the same machinery, with exact uplink bit and energy accounting.
//!
//! The numeric modules are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the precision for the common cases.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod comms;
pub mod data;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod protocol;
pub mod rng;
pub mod scalar;
pub mod segmentation;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type MlpModel64 = nn::MlpModel<f64>;
pub type MlpModel32 = nn::MlpModel<f32>;
pub type SegmentScheme64 = segmentation::SegmentScheme<f64>;
pub type SegmentScheme32 = segmentation::SegmentScheme<f32>;
pub type TeacherTable64 = segmentation::TeacherTable<f64>;
pub type Dataset64 = data::FingerprintDataset<f64>;
pub type Dataset32 = data::FingerprintDataset<f32>;
pub type ClientState64 = protocol::ClientState<f64>;
pub type ClientState32 = protocol::ClientState<f32>;
pub type TrainingSchedule64 = protocol::TrainingSchedule<f64>;
pub type RoundReport64 = protocol::RoundReport<f64>;
