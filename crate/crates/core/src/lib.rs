//! Post-hoc recalibration of probabilistic classifiers.
//!
//! The crate is organised bottom-up:
//!
//! * [`simplex`] and [`io`]: confidence vectors, labelled prediction
//!   datasets and their file formats.
//! * [`lenses`]: reductions of a K-class calibration problem to a smaller one
//!   and the lifts that turn a reduced recalibrator back into a map on the
//!   full simplex.
//! * [`calibrators`]: temperature scaling, histogram binning, isotonic
//!   regression and beta calibration.
//! * [`wrappers`]: reduced, class-wise and class-wise reduced calibrators.
//! * [`metrics`]: binned ECE, class-wise ECE and friends.
//! * [`datagen`]: seeded synthetic datasets with known calibration structure.
//! * [`bench`]: stratified cross-validation over methods and wrappers.

pub mod bench;
pub mod binning;
pub mod calibrators;
pub mod datagen;
pub mod error;
pub mod io;
pub mod lenses;
pub mod metrics;
pub mod simplex;
pub mod wrappers;

pub use error::{CalibError, Result};
pub use lenses::{LensKind, LiftKind};
pub use simplex::{BinaryPairs, ConfidenceVector, PredictionDataset};
pub use wrappers::{Calibrator, CalibratorSpec, FittedCalibrator, Wrapper};
