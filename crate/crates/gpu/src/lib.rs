//! GPU engine: compute passes for gradient, curvature and the gradient
//! maximum, plus a single-pass fragment raymarcher driven by the shared
//! parameter block.
//!
//! The WGSL sources are versioned text assets under `shaders/` so that the
//! browser viewer can load exactly the same kernels.

pub mod context;
pub mod engine;

pub use context::{ADAPTER_ENV, AdapterPreference, Capabilities, GpuContext};
pub use engine::{GpuEngine, GpuVolume};

/// Version of the kernel set; bumped together with the parameter block layout.
pub const KERNEL_SET_VERSION: u32 = 1;

pub const PREPROCESS_WGSL: &str = include_str!("../shaders/preprocess.wgsl");
pub const RAYMARCH_WGSL: &str = include_str!("../shaders/raymarch.wgsl");
