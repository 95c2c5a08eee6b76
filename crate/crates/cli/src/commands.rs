use std::fmt::Write as _;
use std::path::Path;

use clap::error::ErrorKind;
use clap::CommandFactory;
use log::info;
use texgen::backproject::{backproject_visible, blend_views, compute_inpaint_mask, BlendParams, TexelStats};
use texgen::enhance::{enhance_texture, EnhanceParams};
use texgen::genstage::{dilate_margins, inpaint_texture, BackendDescriptor, BackendKind, InpaintRequest};
use texgen::image::{self, Depth};
use texgen::mesh::{self, Mesh};
use texgen::pipeline::{prepare_mesh, run_pipeline, PipelineConfig, PipelineError, Stage, StageError};
use texgen::raster::{make_view_set, rasterize_view, render_grid, render_orbit, split_grid, GridImage, PassKind, ViewConfig};
use texgen::uvbake::{bake_from_raster, rasterize_uv, UvImage, UvKind};

use crate::{BakeArgs, BlendArgs, EnhanceArgs, PassArg, RenderArgs, TextureArgs};

type Result<T> = std::result::Result<T, PipelineError>;

fn at<T, E: Into<StageError>>(r: std::result::Result<T, E>, stage: Stage) -> Result<T> {
    r.map_err(|e| PipelineError::Stage { stage, source: e.into() })
}

fn io<T>(r: std::io::Result<T>, path: &Path, stage: Stage) -> Result<T> {
    at(
        r.map_err(|source| StageError::Io {
            path: path.display().to_string(),
            source,
        }),
        stage,
    )
}

fn usage_error(message: &str) -> ! {
    crate::Cli::command().error(ErrorKind::MissingRequiredArgument, message).exit()
}

fn write_png(path: &Path, bytes: std::result::Result<Vec<u8>, image::ImageIoError>, stage: Stage) -> Result<()> {
    at(image::write_file(path, &at(bytes, stage)?), stage)?;
    println!("{}", path.display());
    Ok(())
}

fn load_normalized(path: &Path) -> Result<Mesh> {
    let raw = at(mesh::load_mesh(path), Stage::Load)?;
    at(mesh::normalize_mesh(raw), Stage::Normalize)
}

fn backend(kind: BackendKind, endpoint: Option<&str>) -> BackendDescriptor {
    BackendDescriptor {
        kind,
        endpoint: endpoint.map(str::to_string),
        ..BackendDescriptor::mock()
    }
}

/// File (or `$TEXGEN_CONFIG`) first, then every flag that was given.
pub(crate) fn merged_config(a: &TextureArgs) -> Result<PipelineConfig> {
    let mut c = PipelineConfig::load_or_default(a.config.as_deref())?;
    if let Some(m) = &a.mesh {
        c.mesh_path = m.clone();
    }
    if let Some(p) = &a.prompt {
        c.prompt = p.clone();
    }
    macro_rules! set {
        ($($field:ident).+ = $flag:expr) => {
            if let Some(v) = $flag {
                c.$($field).+ = v;
            }
        };
    }
    set!(seed = a.seed);
    set!(resolution = a.resolution);
    set!(view_size = a.view_size);
    set!(blend.alpha = a.alpha);
    set!(blend.epsilon = a.epsilon);
    set!(gutter = a.gutter);
    set!(margin_texels = a.margin_texels);
    set!(enhance_ratio = a.enhance_ratio);
    set!(output_dir = a.output_dir.clone());
    let stages = [
        (&mut c.stage1_backend, a.stage1),
        (&mut c.stage2_backend, a.stage2),
        (&mut c.enhancer_backend, a.enhancer),
    ];
    for (b, own) in stages {
        if let Some(kind) = own.or(a.backend) {
            b.kind = kind;
        }
        if a.endpoint.is_some() {
            b.endpoint = a.endpoint.clone();
        }
        if let Some(t) = a.timeout {
            b.timeout_secs = t;
        }
    }
    c.debug |= a.debug;
    Ok(c)
}

pub(crate) fn texture(a: TextureArgs) -> Result<()> {
    let config = merged_config(&a)?;
    if a.print_config {
        print!("{}", config.to_toml());
        return Ok(());
    }
    if config.mesh_path.as_os_str().is_empty() {
        usage_error("--mesh is required unless the config file sets mesh_path");
    }
    let report = run_pipeline(&config)?;
    for p in &report.outputs {
        println!("{}", p.display());
    }
    if let Some(summary) = report.to_text().lines().last() {
        println!("{summary}");
    }
    Ok(())
}

pub(crate) fn render(a: RenderArgs) -> Result<()> {
    let mesh = load_normalized(&a.mesh)?;
    let texture = match &a.texture {
        Some(p) => Some(at(image::read_png_file(p), Stage::Load)?.image),
        None => None,
    };
    let kind = match a.kind {
        Some(PassArg::Position) => PassKind::Position,
        Some(PassArg::Normal) => PassKind::Normal,
        Some(PassArg::Combined) => PassKind::Combined,
        None if texture.is_some() => PassKind::Combined,
        None => PassKind::Normal,
    };
    let config = ViewConfig {
        elevation_deg: a.elevation,
        ..ViewConfig::framing(&mesh, a.size)
    };
    io(std::fs::create_dir_all(&a.output_dir), &a.output_dir, Stage::Export)?;
    match a.turntable {
        Some(n) => {
            if n == 0 {
                usage_error("--turntable needs at least one frame");
            }
            let frames = at(render_orbit(&mesh, kind, texture.as_ref(), n, a.elevation, &config), Stage::Render)?;
            let mut index = String::new();
            for (i, frame) in frames.iter().enumerate() {
                let name = format!("frame_{i:03}.png");
                write_png(&a.output_dir.join(&name), frame.encode_png(), Stage::Export)?;
                let _ = writeln!(index, "{name} azimuth {:.6} elevation {:.6}", i as f64 * 360.0 / n as f64, a.elevation);
            }
            let path = a.output_dir.join("frames.txt");
            io(std::fs::write(&path, index), &path, Stage::Export)?;
        }
        None => {
            let grid = at(render_grid(&mesh, &make_view_set(&config), kind, texture.as_ref()), Stage::Render)?;
            let name = format!("{}_grid.png", format!("{kind:?}").to_lowercase());
            write_png(&a.output_dir.join(name), grid.encode_png(), Stage::Export)?;
        }
    }
    Ok(())
}

pub(crate) fn bake(a: BakeArgs) -> Result<()> {
    if a.resolution == 0 {
        return Err(PipelineError::Config("resolution must be positive".into()));
    }
    let raw = at(mesh::load_mesh(&a.mesh), Stage::Load)?;
    let (mesh, warnings) = prepare_mesh(raw, a.margin_texels)?;
    for w in warnings {
        eprintln!("warning: {w}");
    }
    let raster = at(rasterize_uv(&mesh, a.resolution), Stage::Bake)?;
    let p_uv = at(bake_from_raster(&mesh, &raster, PassKind::Position), Stage::Bake)?;
    let n_uv = at(bake_from_raster(&mesh, &raster, PassKind::Normal), Stage::Bake)?;
    io(std::fs::create_dir_all(&a.output_dir), &a.output_dir, Stage::Export)?;
    write_png(&a.output_dir.join("p_uv.png"), p_uv.encode_png(), Stage::Export)?;
    write_png(&a.output_dir.join("n_uv.png"), n_uv.encode_png(), Stage::Export)?;
    let obj = a.output_dir.join("unwrapped.obj");
    at(mesh::save_obj(&mesh, &obj), Stage::Export)?;
    println!("{}", obj.display());
    println!("# {} islands, {:.1}% of texels mapped", mesh.island_count(), 100.0 * p_uv.mapped_fraction());
    Ok(())
}

pub(crate) fn blend(a: BlendArgs) -> Result<()> {
    let params = BlendParams {
        alpha: a.alpha,
        epsilon: a.epsilon,
        ..BlendParams::default()
    };
    params.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
    let stage2 = backend(a.stage2, a.endpoint.as_deref());
    stage2.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
    if a.resolution == 0 {
        return Err(PipelineError::Config("resolution must be positive".into()));
    }

    let mesh = load_normalized(&a.mesh)?;
    if !mesh.has_uvs() {
        return at(Err(mesh::MeshError::MissingUvs), Stage::Unwrap);
    }
    let grid = at(image::read_png_file(&a.grid), Stage::Load)?;
    let grid = at(GridImage::from_png(grid, PassKind::Combined), Stage::Load)?;
    let views = at(split_grid(&grid), Stage::Backproject)?;
    let cameras = make_view_set(&ViewConfig::framing(&mesh, views[0].size()));
    let visibility: Vec<_> = cameras.iter().map(|c| rasterize_view(&mesh, c)).collect();

    let raster = at(rasterize_uv(&mesh, a.resolution), Stage::Bake)?;
    let p_uv = at(bake_from_raster(&mesh, &raster, PassKind::Position), Stage::Bake)?;
    let n_uv = at(bake_from_raster(&mesh, &raster, PassKind::Normal), Stage::Bake)?;

    let partial = at(backproject_visible(&mesh, &cameras, &visibility, &views, a.resolution, &params), Stage::Backproject)?;
    let blended = at(blend_views(partial, &params), Stage::Blend)?;
    let mask = at(compute_inpaint_mask(&blended, &p_uv.mapped), Stage::Blend)?;
    let stats = TexelStats::measure(&blended, &p_uv.mapped, &mask);

    io(std::fs::create_dir_all(&a.output_dir), &a.output_dir, Stage::Export)?;
    write_png(&a.output_dir.join("partial.png"), blended.encode_resolved_png(), Stage::Export)?;
    write_png(&a.output_dir.join("weights.png"), blended.encode_weight_png(), Stage::Export)?;
    write_png(&a.output_dir.join("mask.png"), mask.encode_png(), Stage::Export)?;

    let mapped = p_uv.mapped.clone();
    let req = InpaintRequest {
        prompt: a.prompt,
        seed: a.seed,
        partial: blended,
        mask,
        p_uv,
        n_uv,
    };
    let completed = at(inpaint_texture(&stage2, &req), Stage::Inpaint)?;
    let texture = dilate_margins(&completed.color, &mapped, a.gutter);
    write_png(&a.output_dir.join("texture.png"), image::encode_png(&texture, None, Depth::Eight), Stage::Export)?;
    println!(
        "# {} mapped texels, {} painted from views, {} inpainted",
        stats.mapped, stats.painted, stats.masked
    );
    Ok(())
}

pub(crate) fn enhance(a: EnhanceArgs) -> Result<()> {
    let enhancer = backend(a.backend, a.endpoint.as_deref());
    enhancer.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
    let decoded = at(image::read_png_file(&a.input), Stage::Load)?;
    let had_alpha = decoded.alpha.is_some();
    if decoded.image.width != decoded.image.height {
        return Err(PipelineError::Config(format!(
            "textures are square; {} is {}x{}",
            a.input.display(),
            decoded.image.width,
            decoded.image.height
        )));
    }
    let texture = UvImage::from_png(decoded, UvKind::Color);
    let params = EnhanceParams {
        patch_size: a.patch_size,
        overlap: a.overlap,
        steps: a.steps,
        seed: a.seed,
        ..EnhanceParams::default()
    };
    let out = at(enhance_texture(&texture, a.ratio, &enhancer, &params), Stage::Enhance)?;
    info!("{} -> {}", texture.resolution(), out.resolution());
    if let Some(dir) = a.output.parent().filter(|d| !d.as_os_str().is_empty()) {
        io(std::fs::create_dir_all(dir), dir, Stage::Export)?;
    }
    let bytes = if had_alpha { out.encode_png() } else { image::encode_png(&out.color, None, Depth::Eight) };
    write_png(&a.output, bytes, Stage::Export)
}
