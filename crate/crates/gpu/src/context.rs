//! Adapter selection and the device handle shared by every pass.

use std::sync::{Arc, Mutex};

use voxtwin_core::EngineError;

/// Environment variable that forces the adapter power preference.
pub const ADAPTER_ENV: &str = "VOXTWIN_ADAPTER";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AdapterPreference {
    #[default]
    Default,
    /// Integrated GPUs first, which is the intended deployment target.
    LowPower,
    HighPerformance,
}

impl AdapterPreference {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "" | "default" => Some(Self::Default),
            "low-power" | "low_power" | "integrated" => Some(Self::LowPower),
            "high-performance" | "high_performance" | "discrete" => Some(Self::HighPerformance),
            _ => None,
        }
    }

    /// Reads [`ADAPTER_ENV`]; unknown values are logged and ignored.
    pub fn from_env() -> Self {
        match std::env::var(ADAPTER_ENV) {
            Ok(v) => Self::parse(&v).unwrap_or_else(|| {
                log::warn!("ignoring {ADAPTER_ENV}={v:?}");
                Self::Default
            }),
            Err(_) => Self::Default,
        }
    }

    fn power(self) -> wgpu::PowerPreference {
        match self {
            Self::Default => wgpu::PowerPreference::None,
            Self::LowPower => wgpu::PowerPreference::LowPower,
            Self::HighPerformance => wgpu::PowerPreference::HighPerformance,
        }
    }
}

/// Device limits the engine checks before allocating.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Capabilities {
    pub max_texture_dimension_3d: u32,
    pub max_workgroup_size: [u32; 3],
    pub max_invocations_per_workgroup: u32,
    pub max_workgroups_per_dimension: u32,
}

impl Capabilities {
    fn from_limits(l: &wgpu::Limits) -> Self {
        Capabilities {
            max_texture_dimension_3d: l.max_texture_dimension_3d,
            max_workgroup_size: [
                l.max_compute_workgroup_size_x,
                l.max_compute_workgroup_size_y,
                l.max_compute_workgroup_size_z,
            ],
            max_invocations_per_workgroup: l.max_compute_invocations_per_workgroup,
            max_workgroups_per_dimension: l.max_compute_workgroups_per_dimension,
        }
    }
}

pub struct GpuContext {
    pub device: wgpu::Device,
    pub queue: wgpu::Queue,
    pub info: wgpu::AdapterInfo,
    pub caps: Capabilities,
    // first uncaptured error or loss reason, reported on the next submission
    fault: Arc<Mutex<Option<String>>>,
}

impl std::fmt::Debug for GpuContext {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GpuContext")
            .field("adapter", &self.info.name)
            .field("backend", &self.info.backend)
            .field("caps", &self.caps)
            .finish_non_exhaustive()
    }
}

impl GpuContext {
    /// Opens a device on the best adapter for `pref`.
    pub fn init(pref: AdapterPreference) -> Result<Self, EngineError> {
        let instance = wgpu::Instance::new(wgpu::InstanceDescriptor::new_without_display_handle_from_env());
        let adapter = pollster::block_on(instance.request_adapter(&wgpu::RequestAdapterOptions {
            power_preference: pref.power(),
            ..Default::default()
        }))
        .map_err(|e| EngineError::GpuUnavailable(e.to_string()))?;
        let info = adapter.get_info();
        log::info!("adapter: {} ({:?}, {:?})", info.name, info.device_type, info.backend);

        // Ask for everything the adapter offers so large volumes fit.
        let (device, queue) = pollster::block_on(adapter.request_device(&wgpu::DeviceDescriptor {
            label: Some("voxtwin"),
            required_limits: adapter.limits(),
            ..Default::default()
        }))
        .map_err(|e| EngineError::GpuUnavailable(e.to_string()))?;

        let fault = Arc::new(Mutex::new(None));
        let sink = fault.clone();
        device.on_uncaptured_error(Arc::new(move |e: wgpu::Error| {
            log::error!("uncaptured GPU error: {e}");
            sink.lock().unwrap().get_or_insert_with(|| e.to_string());
        }));
        let sink = fault.clone();
        device.set_device_lost_callback(move |reason, msg| {
            sink.lock().unwrap().get_or_insert_with(|| format!("{reason:?}: {msg}"));
        });

        let caps = Capabilities::from_limits(&device.limits());
        Ok(GpuContext {
            device,
            queue,
            info,
            caps,
            fault,
        })
    }

    pub fn device_name(&self) -> String {
        format!("{} ({:?})", self.info.name, self.info.backend)
    }

    /// Blocks until submitted work finishes, then surfaces any recorded fault.
    pub fn wait(&self) -> Result<(), EngineError> {
        self.device
            .poll(wgpu::PollType::wait_indefinitely())
            .map_err(|e| EngineError::DeviceLost(e.to_string()))?;
        self.check()
    }

    pub fn check(&self) -> Result<(), EngineError> {
        match self.fault.lock().unwrap().clone() {
            Some(msg) => Err(EngineError::DeviceLost(msg)),
            None => Ok(()),
        }
    }

    /// Copies a mapped-readable buffer into host memory.
    pub fn read_buffer(&self, buffer: &wgpu::Buffer) -> Result<Vec<u8>, EngineError> {
        let slice = buffer.slice(..);
        let (tx, rx) = std::sync::mpsc::channel();
        slice.map_async(wgpu::MapMode::Read, move |r| {
            let _ = tx.send(r);
        });
        self.wait()?;
        rx.recv()
            .map_err(|e| EngineError::DeviceLost(e.to_string()))?
            .map_err(|e| EngineError::DeviceLost(e.to_string()))?;
        let bytes = slice
            .get_mapped_range()
            .map_err(|e| EngineError::DeviceLost(e.to_string()))?
            .to_vec();
        buffer.unmap();
        Ok(bytes)
    }
}
