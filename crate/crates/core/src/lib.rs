//! Core of the volume renderer: NIfTI ingestion, radiometric normalization
//! and tissue-peak analysis, voxel morphology, the transfer function, and the
//! reference CPU raymarcher that the GPU engine is checked against.

pub mod engine;
pub mod math;
pub mod morphology;
pub mod param_block;
pub mod phantom;
pub mod radiometry;
pub mod scenes;
pub mod raymarch;
pub mod transfer;
pub mod volume_io;

pub use engine::{BenchReport, CpuEngine, EngineError, OrbitSpec, PassCounters, Preprocessed, RenderEngine};
pub use math::Vec3;
pub use radiometry::{AnalysisReport, Histogram, NormalizedVolume, TissuePeaks};
pub use raymarch::{Camera, FrameBuffer};
pub use transfer::{RenderParams, TissueWindows, TransferConfig};
pub use volume_io::{Volume, VolumeHeader};
