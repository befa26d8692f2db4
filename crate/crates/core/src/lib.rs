//! Simulator and security-analysis toolkit for a three-party quantum
//! secret sharing protocol built on phase-encoded coherent states.
//!
//! Two distant players encode logic bits as phase shifts on weak
//! coherent pulses and send them to a central dealer, who applies his
//! own modulation and interferes the pulses on a beam splitter; after
//! basis announcement and sifting, the dealer's bit equals the XOR of
//! the players' bits. The crate covers the whole pipeline around that
//! protocol:
//!
//! * [`protocol`] — exact phase/bit semantics, sifting and flip rules;
//! * [`channel`] — analytic detector and fiber model, coherent-state
//!   overlap and the quantum-coin imbalance;
//! * [`security`] — finite-key estimation chain against coherent
//!   attacks, key length and asymptotic rate;
//! * [`montecarlo`] — per-round and batched detection sampling with
//!   reproducible parallelism;
//! * [`optimizer`] — key-rate maximization over source parameters;
//! * [`experiment`] — counts-CSV ingestion and analysis of measured
//!   datasets, with the published reference results for regression.
//!
//! The `parallel` feature (on by default) backs the simulator and the
//! optimizer with rayon; disabling it yields a fully sequential build
//! with bit-identical outputs.

pub mod channel;
pub mod experiment;
pub mod montecarlo;
pub mod optimizer;
pub mod protocol;
pub mod security;

pub use channel::{ChannelParams, ClickDistribution, DerivedChannelQuantities};
pub use experiment::{ExperimentConfig, ExperimentReport};
pub use montecarlo::{
    DoubleClickPolicy, OutcomeCounts, PhaseTriple, SimConfig, SimMode, Strategy, TallyTable,
};
pub use optimizer::{Objective, Optimum, SearchSpace};
pub use protocol::{Basis, BasisTriple, Detector, LogicBit, PhaseSetting, RoundRole, SiftDecision};
pub use security::{KeyResult, ObservedStats, PhaseErrorChain, SecurityEpsilons};
