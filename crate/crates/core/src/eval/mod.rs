//! Discriminability (Recall@1, NMI) and transferability (linear probe) measurements.

pub mod metrics;
pub mod probe;

pub use metrics::{kmeans, nmi, nmi_with, recall_at_1, ClusteringResult, NmiNormalization};
pub use probe::{linear_probe, linear_probe_detailed, ProbeConfig, ProbeOutcome};
