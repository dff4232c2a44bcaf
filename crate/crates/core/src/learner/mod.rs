//! Learning feasibility hypersurfaces from labeled samples.

pub mod features;
pub mod io;
pub mod ipm;
pub mod sampler;
pub mod svm;
pub mod training;

pub use features::{FeatureMap, SetFrame};
pub use svm::{Hypersurface, KernelParams, Label, LabeledSample, SvmConfig};
