//! Exact few-photon simulator for a deterministic polarization-entanglement
//! purification protocol that consumes spatial (path) entanglement.
//!
//! States are sparse second-quantized kets over eight polarization/path
//! modes per link side; all probabilities come from exact ensemble
//! enumeration, never sampling.

pub mod elements;
pub mod error;
pub mod fock;
pub mod noise;
pub mod protocol;
pub mod runner;
pub mod sources;

pub use error::{Result, SimError};
pub use fock::{
    reduce_mixture_to_polarization_pair, reduce_to_polarization_pair, Basis, Branch, FockState,
    MixedState, ModeId, ModeMap, Occupation, Party, Polarization, Spatial, TwoQubitDensity, C64,
    PRUNE_EPS, TOL,
};
pub use noise::{
    bell_mixture_channel, pair_resolved_loss, photon_loss, spatial_drift,
    two_pair_bitflip_ensemble, two_pair_loss_ensemble, BellKind, BellMixtureParams, DriftParams,
    LossParams, SurvivalClass,
};
pub use protocol::{
    build_depp_circuit, classify_detection, eq10_fidelity, eq9_fidelity, eq9_oracle, pdc_pipeline,
    purify, swapping_correlation, trace_evolution, DetectionPattern, LossAccounting, PatternClass,
    PatternOutcome, PatternReport, PurificationReport, STAGE_LABELS,
};
pub use runner::{parse_config, run, ExperimentKind, RunConfig};
pub use sources::{
    ideal_hyper_pair, pdc_emission_ensemble, pdc_two_pair_state, PairEmission, PdcParams,
};
