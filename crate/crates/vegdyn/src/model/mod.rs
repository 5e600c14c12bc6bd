//! Domain types and parameterization: state sets, sigmoid rate functions,
//! spatial kernels, site-distribution measures, and assembly/validation of a
//! complete model specification.

pub mod kernel;
mod measure;
mod sigmoid;
mod spec;

pub use kernel::{eval_kernel, Kernel, KernelKind};
pub use measure::{sample_sites, Domain, MeasureKind, SiteMeasure};
pub use sigmoid::{eval_sigmoid, SigmoidParams};
pub use spec::{
    build_model, Assignment, GenericModel, GenericTransition, GstfParams, InitBlock,
    InitialLaw, KernelRole, ModelConfig, ModelFamily, ModelSpec, PatchKernels, RateFn,
    StateSet, TransitionBounds, TransitionSpec,
};

/// Index into a [`StateSet`]'s label list.
pub type StateId = usize;
