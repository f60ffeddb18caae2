//! Wide-baseline two-view matching: affine view synthesis, adaptive
//! DoG/Hessian detection, SIFT-family descriptors, FGINN matching and
//! DEGENSAC verification, plus the evaluation harnesses.

pub mod descr;
pub mod detect;
pub mod eval;
pub mod geometry;
pub mod imgproc;
pub mod matching;
pub mod pipeline;
pub mod synthetic;
pub mod verify;
pub mod viewsynth;

pub use descr::{Descriptor, DescriptorKind};
pub use detect::{DetectorConfig, DetectorKind, Keypoint};
pub use geometry::{FundamentalMatrix, Homography, Laf, ModelKind, Point2, TwoViewModel};
pub use imgproc::GrayImage;
pub use matching::{Channel, Correspondence, FeatureRecord, MatchParams};
pub use pipeline::{match_pair, MatchReport, MatcherConfig};
pub use verify::{RansacConfig, VerificationResult, WantModel};
pub use viewsynth::{SynthSchedule, SynthView, ViewParams};
