pub mod calibration;
pub mod cli;
pub mod error;
pub mod fourier;
pub mod image;
pub mod io;
pub mod lattice;
pub mod metrics;
pub mod phantom;
pub mod reconstruct;
pub mod sampling;
pub mod smoothing;

pub use error::{MoccaError, Result};
pub use num_complex::Complex64;
pub use image::{ComplexImage, RealImage};
pub use lattice::{centered_mod, CenteredGrid, GridIndex};
pub use sampling::{PatternKind, SamplingPattern};
