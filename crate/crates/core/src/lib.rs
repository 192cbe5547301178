//! Explainable log anomaly detection.
//!
//! Raw log lines are normalized ([`logcore`]), classified by a small
//! transformer encoder ([`encoder`]), and explained through attention
//! statistics ([`attnlysis`]) and integrated-gradients token attribution.
//! [`reportgen`] turns the results into analyst-facing text,
//! [`metrics`] scores a classifier against labeled data, and [`pipeline`]
//! runs the per-line chain used by both the CLI and the service.

pub mod attnlysis;
pub mod encoder;
pub mod logcore;
pub mod metrics;
pub mod pipeline;
pub mod reportgen;
