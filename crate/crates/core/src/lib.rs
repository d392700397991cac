//! Tip position estimation for continuum manipulators carrying a multi-fiber
//! FBG shape sensor.
//!
//! Two estimators are provided:
//!
//! * the conventional, model-dependent pipeline in [`shape`]: wavelengths →
//!   strains → per-section curvature and bend plane → polynomial curvature
//!   profile → integrated center-line;
//! * the data-driven pipeline in [`regression`]: a least-squares linear map
//!   from raw node wavelengths straight to the tip position.
//!
//! Supporting modules cover rigid-body frames and stream alignment
//! ([`frames`]), a synthetic experiment generator ([`simulator`]), the
//! evaluation protocol ([`eval`]) and file formats ([`io`]).
//!
//! Units: millimeters, radians, nanometers, seconds; curvature in 1/m.

pub mod error;
pub mod eval;
pub mod frames;
pub mod geometry;
pub mod io;
pub mod regression;
pub mod sensor;
pub mod shape;
pub mod simulator;

pub use error::{Error, ErrorKind, Result};
pub use eval::{
    compare, repeated_eval, split, split_indices, ComparisonTable, Dataset, ErrorReport, ErrorStats, GroundTruth,
    Method, Protocol, RepeatedEval,
};
pub use frames::{
    align_streams, register_straight_pose, tracker_to_base, AlignedPair, Alignment, Interpolation, Registration,
    RigidTransform, TipSample, TrackedPoint,
};
pub use geometry::{FiberSet, SensorGeometry};
pub use regression::{ablate, assemble, predict, train, NodeSelection, Preprocessing, RegressionModel, TrainingSet};
pub use sensor::{solve_cross_section, wavelength_to_strain, CrossSectionState, SolverOptions, WavelengthFrame};
pub use shape::{
    fit_profiles, integrate_shape, reconstruct, tip_estimate, CenterlineShift, ConventionalOptions, CurvatureProfile,
    Polynomial, ReconstructedShape, Reconstruction,
};
pub use simulator::{simulate, BendingScenario, Simulation};
