//! Synthetic multi-domain datasets, the leave-one-domain-out split and the
//! per-domain balanced minibatch sampler.

mod dataset;
mod generators;
mod sampler;
mod split;

pub use dataset::{DomainSpec, LabeledDataset};
pub use generators::{
    base_moons, make_rotated_moons, make_shifted_gaussians, Generated, RotatedMoonsParams,
    ShiftedGaussiansParams, MOONS_CENTER,
};
pub use sampler::MinibatchSampler;
pub use split::{
    leave_one_domain_out, DomainSplit, SourceData, SplitPlan, Subset, VALIDATION_FRACTION,
};
