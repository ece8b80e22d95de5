//! GPU implementation of [`RenderEngine`].
//!
//! Preprocessing uploads the normalized volume once, runs the gradient and
//! curvature kernels and a two-stage max reduction. Frames are one render
//! pass over a full-screen triangle reading the 288-byte parameter block.

use voxtwin_core::morphology::{CurvatureField, GradientField, MorphologyError};
use voxtwin_core::param_block::{PARAM_BLOCK_SIZE, ParamBlock, VolumeConstants};
use voxtwin_core::radiometry::{self, NormalizedVolume};
use voxtwin_core::raymarch::RenderError;
use voxtwin_core::transfer;
use voxtwin_core::{Camera, EngineError, FrameBuffer, PassCounters, RenderEngine, RenderParams, TissueWindows, Volume};

use crate::context::{AdapterPreference, GpuContext};
use crate::{PREPROCESS_WGSL, RAYMARCH_WGSL};

type Result<T> = std::result::Result<T, EngineError>;

const MORPH_WORKGROUP: u32 = 4;
const REDUCE_WIDTH: u32 = 256;
const MAX_PARTIALS: u32 = 1024;
const VOLUME_INFO_SIZE: u64 = 48;

/// Device-resident fields of one preprocessed volume.
pub struct GpuVolume {
    pub dims: [usize; 3],
    pub spacing: [f32; 3],
    pub grad_max: f32,
    pub kappa_scale: f32,
    // owned here so the texture lives as long as the bind group using it
    _intensity: wgpu::Texture,
    gradient: wgpu::Texture,
    kappa: wgpu::Texture,
    render_group: wgpu::BindGroup,
}

impl GpuVolume {
    pub fn constants(&self) -> VolumeConstants {
        VolumeConstants {
            dims: self.dims,
            spacing: self.spacing,
            grad_max: self.grad_max,
            kappa_scale: self.kappa_scale,
        }
    }
}

struct Target {
    size: (u32, u32),
    texture: wgpu::Texture,
    readback: wgpu::Buffer,
    padded_row: u32,
}

struct Pipelines {
    gradient: (wgpu::ComputePipeline, wgpu::BindGroupLayout),
    curvature: (wgpu::ComputePipeline, wgpu::BindGroupLayout),
    reduce_partial: (wgpu::ComputePipeline, wgpu::BindGroupLayout),
    reduce_final: (wgpu::ComputePipeline, wgpu::BindGroupLayout),
    raymarch: wgpu::RenderPipeline,
    raymarch_layout: wgpu::BindGroupLayout,
}

pub struct GpuEngine {
    ctx: GpuContext,
    pipelines: Pipelines,
    params_buffer: wgpu::Buffer,
    volume: Option<GpuVolume>,
    params: Option<(TissueWindows, RenderParams, Camera)>,
    target: Option<Target>,
    counters: PassCounters,
}

fn uniform_entry(binding: u32, visibility: wgpu::ShaderStages) -> wgpu::BindGroupLayoutEntry {
    wgpu::BindGroupLayoutEntry {
        binding,
        visibility,
        ty: wgpu::BindingType::Buffer {
            ty: wgpu::BufferBindingType::Uniform,
            has_dynamic_offset: false,
            min_binding_size: None,
        },
        count: None,
    }
}

// 32-bit float textures are not filterable; every read is a textureLoad.
fn texture_entry(binding: u32, visibility: wgpu::ShaderStages) -> wgpu::BindGroupLayoutEntry {
    wgpu::BindGroupLayoutEntry {
        binding,
        visibility,
        ty: wgpu::BindingType::Texture {
            sample_type: wgpu::TextureSampleType::Float { filterable: false },
            view_dimension: wgpu::TextureViewDimension::D3,
            multisampled: false,
        },
        count: None,
    }
}

fn storage_texture_entry(binding: u32, format: wgpu::TextureFormat) -> wgpu::BindGroupLayoutEntry {
    wgpu::BindGroupLayoutEntry {
        binding,
        visibility: wgpu::ShaderStages::COMPUTE,
        ty: wgpu::BindingType::StorageTexture {
            access: wgpu::StorageTextureAccess::WriteOnly,
            format,
            view_dimension: wgpu::TextureViewDimension::D3,
        },
        count: None,
    }
}

fn storage_buffer_entry(binding: u32) -> wgpu::BindGroupLayoutEntry {
    wgpu::BindGroupLayoutEntry {
        binding,
        visibility: wgpu::ShaderStages::COMPUTE,
        ty: wgpu::BindingType::Buffer {
            ty: wgpu::BufferBindingType::Storage { read_only: false },
            has_dynamic_offset: false,
            min_binding_size: None,
        },
        count: None,
    }
}

fn compute_pipeline(
    device: &wgpu::Device,
    module: &wgpu::ShaderModule,
    entry: &str,
    entries: &[wgpu::BindGroupLayoutEntry],
) -> (wgpu::ComputePipeline, wgpu::BindGroupLayout) {
    let bgl = device.create_bind_group_layout(&wgpu::BindGroupLayoutDescriptor {
        label: Some(entry),
        entries,
    });
    let layout = device.create_pipeline_layout(&wgpu::PipelineLayoutDescriptor {
        label: Some(entry),
        bind_group_layouts: &[Some(&bgl)],
        immediate_size: 0,
    });
    let pipeline = device.create_compute_pipeline(&wgpu::ComputePipelineDescriptor {
        label: Some(entry),
        layout: Some(&layout),
        module,
        entry_point: Some(entry),
        compilation_options: Default::default(),
        cache: None,
    });
    (pipeline, bgl)
}

impl Pipelines {
    fn new(device: &wgpu::Device) -> Self {
        let compute = wgpu::ShaderStages::COMPUTE;
        let frag = wgpu::ShaderStages::FRAGMENT;
        let pre = device.create_shader_module(wgpu::ShaderModuleDescriptor {
            label: Some("preprocess.wgsl"),
            source: wgpu::ShaderSource::Wgsl(PREPROCESS_WGSL.into()),
        });
        let gradient = compute_pipeline(
            device,
            &pre,
            "gradient_main",
            &[
                uniform_entry(0, compute),
                texture_entry(1, compute),
                storage_texture_entry(2, wgpu::TextureFormat::Rgba32Float),
            ],
        );
        let curvature = compute_pipeline(
            device,
            &pre,
            "curvature_main",
            &[
                uniform_entry(0, compute),
                texture_entry(1, compute),
                texture_entry(3, compute),
                storage_texture_entry(4, wgpu::TextureFormat::R32Float),
            ],
        );
        let reduce_partial = compute_pipeline(
            device,
            &pre,
            "reduce_partial_main",
            &[uniform_entry(0, compute), texture_entry(3, compute), storage_buffer_entry(5)],
        );
        let reduce_final = compute_pipeline(
            device,
            &pre,
            "reduce_final_main",
            &[uniform_entry(0, compute), storage_buffer_entry(5), storage_buffer_entry(6)],
        );

        let march = device.create_shader_module(wgpu::ShaderModuleDescriptor {
            label: Some("raymarch.wgsl"),
            source: wgpu::ShaderSource::Wgsl(RAYMARCH_WGSL.into()),
        });
        let raymarch_layout = device.create_bind_group_layout(&wgpu::BindGroupLayoutDescriptor {
            label: Some("raymarch"),
            entries: &[
                uniform_entry(0, frag),
                texture_entry(1, frag),
                texture_entry(2, frag),
                texture_entry(3, frag),
            ],
        });
        let layout = device.create_pipeline_layout(&wgpu::PipelineLayoutDescriptor {
            label: Some("raymarch"),
            bind_group_layouts: &[Some(&raymarch_layout)],
            immediate_size: 0,
        });
        let raymarch = device.create_render_pipeline(&wgpu::RenderPipelineDescriptor {
            label: Some("raymarch"),
            layout: Some(&layout),
            vertex: wgpu::VertexState {
                module: &march,
                entry_point: Some("vs_main"),
                compilation_options: Default::default(),
                buffers: &[],
            },
            primitive: wgpu::PrimitiveState::default(),
            depth_stencil: None,
            multisample: wgpu::MultisampleState::default(),
            fragment: Some(wgpu::FragmentState {
                module: &march,
                entry_point: Some("fs_main"),
                compilation_options: Default::default(),
                targets: &[Some(wgpu::ColorTargetState {
                    format: wgpu::TextureFormat::Rgba32Float,
                    blend: None,
                    write_mask: wgpu::ColorWrites::ALL,
                })],
            }),
            multiview_mask: None,
            cache: None,
        });
        Pipelines {
            gradient,
            curvature,
            reduce_partial,
            reduce_final,
            raymarch,
            raymarch_layout,
        }
    }
}

fn align_to(v: u32, a: u32) -> u32 {
    v.div_ceil(a) * a
}

fn extent(dims: [usize; 3]) -> wgpu::Extent3d {
    wgpu::Extent3d {
        width: dims[0] as u32,
        height: dims[1] as u32,
        depth_or_array_layers: dims[2] as u32,
    }
}

fn volume_info(nv: &NormalizedVolume, partials: u32) -> [u8; VOLUME_INFO_SIZE as usize] {
    let mut out = [0u8; VOLUME_INFO_SIZE as usize];
    let words: [u32; 12] = [
        nv.dims[0] as u32,
        nv.dims[1] as u32,
        nv.dims[2] as u32,
        0,
        nv.spacing[0].to_bits(),
        nv.spacing[1].to_bits(),
        nv.spacing[2].to_bits(),
        0,
        nv.len() as u32,
        partials,
        0,
        0,
    ];
    for (dst, w) in out.chunks_exact_mut(4).zip(words) {
        dst.copy_from_slice(&w.to_le_bytes());
    }
    out
}

fn tex(binding: u32, v: &wgpu::TextureView) -> wgpu::BindGroupEntry<'_> {
    wgpu::BindGroupEntry {
        binding,
        resource: wgpu::BindingResource::TextureView(v),
    }
}

fn buf(binding: u32, b: &wgpu::Buffer) -> wgpu::BindGroupEntry<'_> {
    wgpu::BindGroupEntry {
        binding,
        resource: b.as_entire_binding(),
    }
}

fn f32s(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect()
}

impl GpuEngine {
    pub fn new(pref: AdapterPreference) -> Result<Self> {
        Ok(Self::with_context(GpuContext::init(pref)?))
    }

    /// Uses [`AdapterPreference::from_env`].
    pub fn from_env() -> Result<Self> {
        Self::new(AdapterPreference::from_env())
    }

    pub fn with_context(ctx: GpuContext) -> Self {
        let pipelines = Pipelines::new(&ctx.device);
        let params_buffer = ctx.device.create_buffer(&wgpu::BufferDescriptor {
            label: Some("param block"),
            size: PARAM_BLOCK_SIZE as u64,
            usage: wgpu::BufferUsages::UNIFORM | wgpu::BufferUsages::COPY_DST,
            mapped_at_creation: false,
        });
        GpuEngine {
            ctx,
            pipelines,
            params_buffer,
            volume: None,
            params: None,
            target: None,
            counters: PassCounters::default(),
        }
    }

    pub fn context(&self) -> &GpuContext {
        &self.ctx
    }

    pub fn volume(&self) -> Option<&GpuVolume> {
        self.volume.as_ref()
    }

    fn texture(&self, label: &str, dims: [usize; 3], format: wgpu::TextureFormat, usage: wgpu::TextureUsages) -> wgpu::Texture {
        self.ctx.device.create_texture(&wgpu::TextureDescriptor {
            label: Some(label),
            size: extent(dims),
            mip_level_count: 1,
            sample_count: 1,
            dimension: wgpu::TextureDimension::D3,
            format,
            usage,
            view_formats: &[],
        })
    }

    /// Reads a 3D texture back as tightly packed texels of `texel_bytes` each.
    fn download(&self, texture: &wgpu::Texture, dims: [usize; 3], texel_bytes: u32) -> Result<Vec<u8>> {
        let row = dims[0] as u32 * texel_bytes;
        let padded = align_to(row, wgpu::COPY_BYTES_PER_ROW_ALIGNMENT);
        let buffer = self.ctx.device.create_buffer(&wgpu::BufferDescriptor {
            label: Some("field readback"),
            size: padded as u64 * dims[1] as u64 * dims[2] as u64,
            usage: wgpu::BufferUsages::MAP_READ | wgpu::BufferUsages::COPY_DST,
            mapped_at_creation: false,
        });
        let mut enc = self.ctx.device.create_command_encoder(&Default::default());
        enc.copy_texture_to_buffer(
            texture.as_image_copy(),
            wgpu::TexelCopyBufferInfo {
                buffer: &buffer,
                layout: wgpu::TexelCopyBufferLayout {
                    offset: 0,
                    bytes_per_row: Some(padded),
                    rows_per_image: Some(dims[1] as u32),
                },
            },
            extent(dims),
        );
        self.ctx.queue.submit([enc.finish()]);
        let bytes = self.ctx.read_buffer(&buffer)?;
        let mut out = Vec::with_capacity(row as usize * dims[1] * dims[2]);
        for chunk in bytes.chunks_exact(padded as usize) {
            out.extend_from_slice(&chunk[..row as usize]);
        }
        Ok(out)
    }

    /// Downloads the gradient field computed on the device.
    pub fn download_gradient(&self) -> Result<GradientField> {
        let v = self.volume.as_ref().ok_or(EngineError::NotPreprocessed)?;
        let bytes = self.download(&v.gradient, v.dims, 16)?;
        let values = f32s(&bytes);
        let texels: Vec<&[f32]> = values.chunks_exact(4).collect();
        Ok(GradientField {
            dims: v.dims,
            vectors: texels.iter().map(|t| [t[0], t[1], t[2]]).collect(),
            magnitudes: texels.iter().map(|t| t[3]).collect(),
            grad_max: v.grad_max,
        })
    }

    pub fn download_curvature(&self) -> Result<CurvatureField> {
        let v = self.volume.as_ref().ok_or(EngineError::NotPreprocessed)?;
        let bytes = self.download(&v.kappa, v.dims, 4)?;
        Ok(CurvatureField {
            dims: v.dims,
            kappa: f32s(&bytes),
        })
    }

    /// Uploads an already normalized volume and runs the morphology passes.
    pub fn preprocess_normalized(&mut self, nv: &NormalizedVolume) -> Result<()> {
        let dims = nv.dims;
        if dims.iter().any(|&d| d < 3) {
            return Err(MorphologyError::VolumeTooSmall { dims }.into());
        }
        let limit = self.ctx.caps.max_texture_dimension_3d;
        if dims.iter().any(|&d| d > limit as usize) {
            return Err(EngineError::VolumeTooLarge { dims, limit });
        }
        let device = &self.ctx.device;
        let sampled = wgpu::TextureUsages::TEXTURE_BINDING;
        let intensity = self.texture("intensity", dims, wgpu::TextureFormat::R32Float, sampled | wgpu::TextureUsages::COPY_DST);
        let field = sampled | wgpu::TextureUsages::STORAGE_BINDING | wgpu::TextureUsages::COPY_SRC;
        let gradient = self.texture("gradient", dims, wgpu::TextureFormat::Rgba32Float, field);
        let kappa = self.texture("kappa", dims, wgpu::TextureFormat::R32Float, field);
        self.ctx.queue.write_texture(
            intensity.as_image_copy(),
            bytemuck::cast_slice(&nv.values),
            wgpu::TexelCopyBufferLayout {
                offset: 0,
                bytes_per_row: Some(dims[0] as u32 * 4),
                rows_per_image: Some(dims[1] as u32),
            },
            extent(dims),
        );

        let total = nv.len() as u32;
        let partial_groups = total.div_ceil(REDUCE_WIDTH).clamp(1, MAX_PARTIALS);
        let info = device.create_buffer(&wgpu::BufferDescriptor {
            label: Some("volume info"),
            size: VOLUME_INFO_SIZE,
            usage: wgpu::BufferUsages::UNIFORM | wgpu::BufferUsages::COPY_DST,
            mapped_at_creation: false,
        });
        self.ctx.queue.write_buffer(&info, 0, &volume_info(nv, partial_groups));
        let partials = device.create_buffer(&wgpu::BufferDescriptor {
            label: Some("partial maxima"),
            size: partial_groups as u64 * 4,
            usage: wgpu::BufferUsages::STORAGE,
            mapped_at_creation: false,
        });
        let result = device.create_buffer(&wgpu::BufferDescriptor {
            label: Some("grad max"),
            size: 4,
            usage: wgpu::BufferUsages::STORAGE | wgpu::BufferUsages::COPY_SRC,
            mapped_at_creation: false,
        });
        let result_read = device.create_buffer(&wgpu::BufferDescriptor {
            label: Some("grad max readback"),
            size: 4,
            usage: wgpu::BufferUsages::MAP_READ | wgpu::BufferUsages::COPY_DST,
            mapped_at_creation: false,
        });

        let view = |t: &wgpu::Texture| t.create_view(&Default::default());
        let (intensity_v, gradient_v, kappa_v) = (view(&intensity), view(&gradient), view(&kappa));
        let group = |layout: &wgpu::BindGroupLayout, entries: &[wgpu::BindGroupEntry]| {
            device.create_bind_group(&wgpu::BindGroupDescriptor {
                label: None,
                layout,
                entries,
            })
        };
        let p = &self.pipelines;
        let g_gradient = group(&p.gradient.1, &[buf(0, &info), tex(1, &intensity_v), tex(2, &gradient_v)]);
        let g_curvature = group(
            &p.curvature.1,
            &[buf(0, &info), tex(1, &intensity_v), tex(3, &gradient_v), tex(4, &kappa_v)],
        );
        let g_partial = group(&p.reduce_partial.1, &[buf(0, &info), tex(3, &gradient_v), buf(5, &partials)]);
        let g_final = group(&p.reduce_final.1, &[buf(0, &info), buf(5, &partials), buf(6, &result)]);

        let groups = dims.map(|d| (d as u32).div_ceil(MORPH_WORKGROUP));
        let mut enc = device.create_command_encoder(&wgpu::CommandEncoderDescriptor {
            label: Some("preprocess"),
        });
        // Separate passes so each stage sees the previous one's writes.
        for (pipeline, bind, size) in [
            (&p.gradient.0, &g_gradient, groups),
            (&p.curvature.0, &g_curvature, groups),
            (&p.reduce_partial.0, &g_partial, [partial_groups, 1, 1]),
            (&p.reduce_final.0, &g_final, [1, 1, 1]),
        ] {
            let mut pass = enc.begin_compute_pass(&Default::default());
            pass.set_pipeline(pipeline);
            pass.set_bind_group(0, bind, &[]);
            pass.dispatch_workgroups(size[0], size[1], size[2]);
        }
        enc.copy_buffer_to_buffer(&result, 0, &result_read, 0, 4);
        self.ctx.queue.submit([enc.finish()]);
        let grad_max = f32::from_le_bytes(self.ctx.read_buffer(&result_read)?[..4].try_into().unwrap());
        if !(grad_max > 0.0) {
            return Err(RenderError::PreprocessMismatch("gradient maximum is zero".into()).into());
        }

        let render_group = group(
            &p.raymarch_layout,
            &[
                buf(0, &self.params_buffer),
                tex(1, &intensity_v),
                tex(2, &gradient_v),
                tex(3, &kappa_v),
            ],
        );
        let mut volume = GpuVolume {
            dims,
            spacing: nv.spacing,
            grad_max,
            kappa_scale: 1.0,
            _intensity: intensity,
            gradient,
            kappa,
            render_group,
        };
        // The scale is a percentile rather than a max, so it is taken on the
        // host from the downloaded field.
        self.volume = None;
        let kappa_bytes = self.download(&volume.kappa, dims, 4)?;
        volume.kappa_scale = transfer::kappa_scale(nv, &f32s(&kappa_bytes));
        self.volume = Some(volume);
        self.counters.preprocess += 1;
        Ok(())
    }

    fn target(&mut self, width: u32, height: u32) -> &Target {
        if self.target.as_ref().map(|t| t.size) != Some((width, height)) {
            let texture = self.ctx.device.create_texture(&wgpu::TextureDescriptor {
                label: Some("frame"),
                size: wgpu::Extent3d {
                    width,
                    height,
                    depth_or_array_layers: 1,
                },
                mip_level_count: 1,
                sample_count: 1,
                dimension: wgpu::TextureDimension::D2,
                format: wgpu::TextureFormat::Rgba32Float,
                usage: wgpu::TextureUsages::RENDER_ATTACHMENT | wgpu::TextureUsages::COPY_SRC,
                view_formats: &[],
            });
            let padded_row = align_to(width * 16, wgpu::COPY_BYTES_PER_ROW_ALIGNMENT);
            let readback = self.ctx.device.create_buffer(&wgpu::BufferDescriptor {
                label: Some("frame readback"),
                size: padded_row as u64 * height as u64,
                usage: wgpu::BufferUsages::MAP_READ | wgpu::BufferUsages::COPY_DST,
                mapped_at_creation: false,
            });
            self.target = Some(Target {
                size: (width, height),
                texture,
                readback,
                padded_row,
            });
        }
        self.target.as_ref().unwrap()
    }
}

impl RenderEngine for GpuEngine {
    fn device_name(&self) -> String {
        self.ctx.device_name()
    }

    fn counters(&self) -> PassCounters {
        self.counters
    }

    fn upload_and_preprocess(&mut self, volume: &Volume) -> Result<()> {
        let nv = radiometry::normalize(volume)?;
        self.preprocess_normalized(&nv)
    }

    fn set_params(&mut self, tw: &TissueWindows, rp: &RenderParams, cam: &Camera) -> Result<()> {
        cam.basis()?;
        self.params = Some((*tw, *rp, *cam));
        Ok(())
    }

    fn render_frame(&mut self, width: u32, height: u32) -> Result<FrameBuffer> {
        if width == 0 || height == 0 {
            return Err(RenderError::EmptyImage(width, height).into());
        }
        let constants = self.volume.as_ref().ok_or(EngineError::NotPreprocessed)?.constants();
        let (tw, rp, cam) = self.params.as_ref().ok_or(EngineError::ParamsNotSet)?;
        let mut block = ParamBlock::pack(tw, rp, cam, &constants)?;
        block.set_viewport(width, height);
        self.ctx.queue.write_buffer(&self.params_buffer, 0, block.as_bytes());

        self.target(width, height);
        let target = self.target.as_ref().unwrap();
        let volume = self.volume.as_ref().unwrap();
        let view = target.texture.create_view(&Default::default());
        let mut enc = self.ctx.device.create_command_encoder(&wgpu::CommandEncoderDescriptor {
            label: Some("frame"),
        });
        {
            let mut pass = enc.begin_render_pass(&wgpu::RenderPassDescriptor {
                label: Some("raymarch"),
                color_attachments: &[Some(wgpu::RenderPassColorAttachment {
                    view: &view,
                    depth_slice: None,
                    resolve_target: None,
                    ops: wgpu::Operations {
                        load: wgpu::LoadOp::Clear(wgpu::Color::BLACK),
                        store: wgpu::StoreOp::Store,
                    },
                })],
                depth_stencil_attachment: None,
                timestamp_writes: None,
                occlusion_query_set: None,
                multiview_mask: None,
            });
            pass.set_pipeline(&self.pipelines.raymarch);
            pass.set_bind_group(0, &volume.render_group, &[]);
            pass.draw(0..3, 0..1);
        }
        enc.copy_texture_to_buffer(
            target.texture.as_image_copy(),
            wgpu::TexelCopyBufferInfo {
                buffer: &target.readback,
                layout: wgpu::TexelCopyBufferLayout {
                    offset: 0,
                    bytes_per_row: Some(target.padded_row),
                    rows_per_image: Some(height),
                },
            },
            wgpu::Extent3d {
                width,
                height,
                depth_or_array_layers: 1,
            },
        );
        self.ctx.queue.submit([enc.finish()]);
        let bytes = self.ctx.read_buffer(&target.readback)?;
        let row = width as usize * 16;
        let mut linear = Vec::with_capacity((width * height) as usize);
        for chunk in bytes.chunks_exact(target.padded_row as usize) {
            linear.extend(f32s(&chunk[..row]).chunks_exact(4).map(|t| [t[0], t[1], t[2], t[3]]));
        }
        self.counters.render += 1;
        Ok(FrameBuffer::from_linear(width, height, linear))
    }

    fn volume_constants(&self) -> Option<VolumeConstants> {
        self.volume.as_ref().map(GpuVolume::constants)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn volume_info_layout() {
        let nv = NormalizedVolume::new([5, 6, 7], [1.0, 2.0, 0.5], vec![0.0; 210]).unwrap();
        let bytes = volume_info(&nv, 3);
        let words: Vec<u32> = bytes.chunks_exact(4).map(|b| u32::from_le_bytes(b.try_into().unwrap())).collect();
        assert_eq!(&words[..3], &[5, 6, 7]);
        assert_eq!(f32::from_bits(words[5]), 2.0);
        assert_eq!(words[8], 210);
        assert_eq!(words[9], 3);
    }

    #[test]
    fn row_alignment() {
        assert_eq!(align_to(16 * 17, 256), 512);
        assert_eq!(align_to(256, 256), 256);
    }
}
