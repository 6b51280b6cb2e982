//! ENF (electrical network frequency) presence detection for video.
//!
//! A clip is segmented into superpixels on its middle frame, pixels whose
//! content never changes are located, and every superpixel with enough such
//! pixels yields its own mean-luma trace. Each trace is turned into a
//! candidate ENF track by short-time Fourier peak tracking around the alias
//! of the mains flicker. If the candidate tracks agree with one another the
//! clip most likely carries ENF.
//!
//! The [`sim`] module renders labelled clips from a physical grid/flicker
//! model and [`eval`] computes ROC curves over labelled corpora.

pub mod debug;
pub mod detect;
pub mod enf;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod pipeline;
pub mod sim;
pub mod slic;
pub mod steady;

pub use detect::{DecisionMetrics, DetectionReport, EnfMatrix, MetricId, RepresentativeMode, Verdict};
pub use enf::{EnfVector, IntensitySeries, StftConfig, WindowFunction};
pub use error::{Error, Result};
pub use ingest::{Frame, FrameRate, FrameSequence, InputFormat, LoadOptions, VideoMeta};
pub use pipeline::PipelineConfig;
pub use slic::{SlicConfig, SuperpixelMap};
pub use steady::{SteadyConfig, SteadyMask, SteadySuperpixelSet};
