//! Adversarial robustness testbed for writer-dependent offline signature
//! verification.
//!
//! The crate bundles everything needed to reproduce evasion-style attack and
//! defense experiments on a synthetic signature corpus at desk scale:
//!
//! - [`imageproc`] — grayscale images, the preprocessing pipeline, RMSE, and
//!   the background-removal countermeasure,
//! - [`clbp`] — completed local binary pattern features (200-dim histogram),
//! - [`nn`] — a small reverse-mode differentiation engine, the scaled-down
//!   convolutional feature extractor, and the two robust-training procedures,
//! - [`wdsvm`] — per-user SVM verifiers (linear and RBF) with EER thresholds,
//! - [`attack`] — FGM, Carlini-Wagner L2, decision-boundary, and simulated
//!   annealing attacks over score/decision oracles,
//! - [`synth`] — the deterministic synthetic signature generator,
//! - [`harness`] — knowledge scenarios, campaign execution, and reports.
//!
//! All numeric code is generic over [`scalar::Scalar`]; the crate-level
//! aliases below fix the default precision used by the CLI and harness.

pub mod attack;
pub mod clbp;
pub mod harness;
pub mod imageproc;
pub mod nn;
pub mod scalar;
pub mod seed;
pub mod synth;
pub mod wdsvm;

/// Default scalar type for the end-to-end pipeline.
pub type Real = f64;

/// Grayscale image at the default precision.
pub type Image = imageproc::GrayImage<Real>;
/// Canonical 150x220 image at the default precision.
pub type Canon = imageproc::CanonImage<Real>;
/// Feature vector at the default precision.
pub type Features = clbp::FeatureVector<Real>;
