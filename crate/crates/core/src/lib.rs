//! Negative-imaginary feedback equivalence: numerical kernels, LTI models,
//! normal forms, certificate-producing synthesis and verification, and
//! robust-interconnection tooling.

pub mod error;
pub mod fixtures;
pub mod lti;
pub mod normalform;
pub mod numkernel;
pub mod robust;
pub mod synth;
pub mod verify;

pub use error::{Error, Result};
pub use lti::{RelativeDegree, StateSpaceModel};
pub use normalform::{ModalSplit, NormalForm, NormalFormRD1, NormalFormRD2};
pub use numkernel::{CMat, Mat, Tolerances};
pub use robust::{Interconnection, UncertainPlant};
pub use synth::{SynthesisOptions, SynthesisResult};
pub use verify::VerificationReport;
