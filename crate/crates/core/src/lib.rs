//! Workbench for differential privacy with per-record privacy demands under
//! the add-remove neighborhood: weighted datasets, privacy mappings and
//! certificates, seeded Laplace noise, release mechanisms, attacker power
//! analysis, density-ratio auditing, and reproducible experiment sweeps.

pub mod audit;
pub mod dataset;
pub mod experiments;
pub mod mechanisms;
pub mod power;
pub mod noise;
pub mod privacy;

pub use dataset::{DataValue, Dataset, PrivacyLevel, Record};
pub use mechanisms::{MechanismReport, NoiseMode, Output};
pub use noise::{LaplaceScale, StreamRng};
pub use privacy::{PrivacyCertificate, PrivacyMapping};
