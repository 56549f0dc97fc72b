//! Certification machinery for switched linear systems.
//!
//! The crate decides global asymptotic stability of `x' = A_i x` under a
//! switching signal whose long-run behavior is summarized by asymptotic
//! densities: how often switches occur, how the active time splits across
//! subsystems, and how transitions distribute over the admissible edges.
//! Quadratic decay/growth certificates are synthesized per subsystem, jump
//! factors are computed per edge, and a single scalar inequality between the
//! switching cost and the net decay decides the verdict. A simulator
//! cross-checks every certificate against exact trajectories.

pub mod certifier;
pub mod densities;
pub mod error;
pub mod family;
pub mod matops;
pub mod siggen;
pub mod signal;
pub mod simulator;

pub use certifier::{Certificate, PsiTrace};
pub use densities::{DensityBundle, Provenance, SignalProfile};
pub use error::{Error, Result};
pub use family::{LyapunovPair, MuTable, StabilityClass, SystemFamily};
pub use matops::{RealMatrix, Spectrum};
pub use siggen::{GeneratorKind, GeneratorSpec, HoldDistribution};
pub use signal::{HFunction, SwitchingSignal, TransitionGraph};
pub use simulator::{ExpmCache, Trajectory};
