//! Closed-form Fourier-domain super-resolution and denoising of 4D flow MRI velocity volumes.
//!
//! Each velocity channel is turned into a complex image `m * exp(i pi v / venc)`, degraded by
//! `y = SHx + n` (blur then decimation), and recovered with a non-iterative solver that works on
//! the folded kernel spectrum. A dense solver and interpolation baselines are included for checking.

pub mod config;
pub mod error;
pub mod forward;
pub mod interp;
pub mod io;
pub mod metrics;
pub mod oracle;
pub mod phantom;
pub mod pipeline;
pub mod solver;
pub mod spectral;
pub mod volume;

pub use error::{Error, Result};
pub use num_complex;
pub use forward::{degrade_dataset, DegradationConfig, DegradationOperator, KernelChoice, NoiseCalibration};
pub use interp::{upsample_dataset, InterpMethod};
pub use metrics::{evaluate, evaluate_methods, EvalConfig, EvalReport, MreNormalization};
pub use solver::{fsr_solve, superresolve_dataset, FsrSolver, PriorMode, SolveReport, SolverConfig};
pub use spectral::FourierEngine;
pub use volume::{
    AcquisitionParams, Channel, ComplexVolume, Decimation, Grid3, ScalarVolume, VelocityDataset, VelocityFrame,
};
