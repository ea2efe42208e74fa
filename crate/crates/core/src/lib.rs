//! Pilot design, pilot-contamination attack modelling and downlink SINR
//! analysis for multi-cell massive MIMO with correlated pilots.

// Negated float comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod capacity;
pub mod channel_attack;
pub mod error;
pub mod model;
pub mod pilot_design;
pub mod rng;
pub mod scenario;
pub mod sinr;
pub mod sweeps;
pub mod table;

pub use channel_attack::{AttackPlan, CorrelationParams, PilotMode};
pub use error::{Error, Result};
pub use model::{Antennas, GainModel, NetworkConfig, SinrTargets, ValidationReport};
pub use pilot_design::{design_pilots, PilotDesign, PilotMatrix, PilotSet};
pub use sinr::{GainNormalization, McEstimate, SinrReport};
pub use scenario::{Prepared, Scenario};
pub use table::Table;
