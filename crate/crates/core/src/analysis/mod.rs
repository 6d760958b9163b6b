//! Representation diagnostics: cross-embedding cosine, centroid entropy of
//! domain labels, projection power, discriminator separation and a 2-D
//! feature export.

mod bank;
mod metrics;
mod report;

pub use bank::{export_features_2d, FeatureBank, FEATURES_2D_HEADER};
pub use metrics::{
    discriminator_accuracy, domain_centroid_xent, mean_abs_cos, mean_abs_cos_aligned,
    projection_power,
};
pub use report::{diagnose, CosineStats, DiagnosticsReport, DomainXent, ProjectionPower, COS_PAIRS};

#[cfg(test)]
mod tests;
