//! End-to-end orchestration: mesh in, textured mesh out.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backproject::{backproject_visible, blend_views, compute_inpaint_mask, BlendError, BlendParams, TexelStats};
use crate::enhance::{enhance_texture, EnhanceError, EnhanceParams};
use crate::genstage::{dilate_margins, generate_views, inpaint_texture, BackendDescriptor, GenError, GeneratorRequest, InpaintRequest};
use crate::image::{self, ImageIoError};
use crate::mesh::{self, Mesh, MeshError, DEFAULT_MARGIN_TEXELS};
use crate::raster::{make_view_set, rasterize_view, shade, split_grid, stitch_grid, PassImage, PassKind, RasterError, ViewConfig};
use crate::uvbake::{bake_from_raster, rasterize_uv, BakeError, UvImage, UvKind};

/// Environment variable naming a default config file.
pub const CONFIG_ENV: &str = "TEXGEN_CONFIG";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub mesh_path: PathBuf,
    pub prompt: String,
    pub seed: u64,
    pub resolution: usize,
    pub view_size: usize,
    pub gutter: usize,
    pub margin_texels: f64,
    pub enhance_ratio: f64,
    pub output_dir: PathBuf,
    pub debug: bool,
    pub blend: BlendParams,
    pub stage1_backend: BackendDescriptor,
    pub stage2_backend: BackendDescriptor,
    pub enhancer_backend: BackendDescriptor,
    pub enhance: EnhanceParams,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            mesh_path: PathBuf::new(),
            prompt: String::new(),
            seed: 0,
            resolution: 1024,
            view_size: 512,
            gutter: 4,
            margin_texels: DEFAULT_MARGIN_TEXELS,
            enhance_ratio: 1.0,
            output_dir: PathBuf::from("texgen_out"),
            debug: false,
            blend: BlendParams::default(),
            stage1_backend: BackendDescriptor::mock(),
            stage2_backend: BackendDescriptor::pullpush(),
            enhancer_backend: BackendDescriptor::mock(),
            enhance: EnhanceParams::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Explicit path first, then `$TEXGEN_CONFIG`, then built-in defaults.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self, PipelineError> {
        match path {
            Some(p) => Self::load(p),
            None => match std::env::var_os(CONFIG_ENV) {
                Some(p) if !p.is_empty() => Self::load(Path::new(&p)),
                _ => Ok(Self::default()),
            },
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.mesh_path.as_os_str().is_empty() {
            return bad("mesh_path is required".into());
        }
        if self.resolution == 0 || self.view_size == 0 {
            return bad(format!("resolution ({}) and view_size ({}) must be positive", self.resolution, self.view_size));
        }
        if self.blend.n_views != 4 {
            return bad(format!("the view rig has 4 cameras, n_views = {}", self.blend.n_views));
        }
        self.blend.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        if !(self.enhance_ratio > 0.0) || !self.enhance_ratio.is_finite() {
            return bad(format!("enhance_ratio must be positive, got {}", self.enhance_ratio));
        }
        if !(self.margin_texels >= 0.0) {
            return bad(format!("margin_texels must be >= 0, got {}", self.margin_texels));
        }
        for (name, b) in [
            ("stage1_backend", &self.stage1_backend),
            ("stage2_backend", &self.stage2_backend),
            ("enhancer_backend", &self.enhancer_backend),
        ] {
            b.validate().map_err(|e| PipelineError::Config(format!("{name}: {e}")))?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Load,
    Normalize,
    Unwrap,
    Bake,
    Render,
    Generate,
    Backproject,
    Blend,
    Inpaint,
    Dilate,
    Enhance,
    Export,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Load => "load",
            Stage::Normalize => "normalize",
            Stage::Unwrap => "unwrap",
            Stage::Bake => "bake",
            Stage::Render => "render",
            Stage::Generate => "generate",
            Stage::Backproject => "backproject",
            Stage::Blend => "blend",
            Stage::Inpaint => "inpaint",
            Stage::Dilate => "dilate",
            Stage::Enhance => "enhance",
            Stage::Export => "export",
        }
    }

    /// Stages whose time is spent in a generator backend.
    pub fn is_backend(self) -> bool {
        matches!(self, Stage::Generate | Stage::Inpaint | Stage::Enhance)
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
pub enum StageError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Bake(#[from] BakeError),
    #[error(transparent)]
    Blend(#[from] BlendError),
    #[error(transparent)]
    Backend(#[from] GenError),
    #[error(transparent)]
    Enhance(#[from] EnhanceError),
    #[error(transparent)]
    Image(#[from] ImageIoError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("{stage} stage failed: {source}")]
    Stage { stage: Stage, source: StageError },
}

impl PipelineError {
    pub fn stage(&self) -> Option<Stage> {
        match self {
            PipelineError::Stage { stage, .. } => Some(*stage),
            PipelineError::Config(_) => None,
        }
    }
}

trait AtStage<T> {
    fn at(self, stage: Stage) -> Result<T, PipelineError>;
}

impl<T, E: Into<StageError>> AtStage<T> for Result<T, E> {
    fn at(self, stage: Stage) -> Result<T, PipelineError> {
        self.map_err(|e| PipelineError::Stage { stage, source: e.into() })
    }
}

fn io_error(path: &Path, source: std::io::Error) -> StageError {
    StageError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunReport {
    /// Wall time per stage in seconds, in execution order.
    pub timings: Vec<(Stage, f64)>,
    pub stats: TexelStats,
    pub texture_size: usize,
    pub outputs: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

impl RunReport {
    pub fn total_seconds(&self) -> f64 {
        self.timings.iter().map(|t| t.1).sum()
    }

    pub fn geometry_seconds(&self) -> f64 {
        self.timings.iter().filter(|t| !t.0.is_backend()).map(|t| t.1).sum()
    }

    pub fn backend_seconds(&self) -> f64 {
        self.timings.iter().filter(|t| t.0.is_backend()).map(|t| t.1).sum()
    }

    pub fn mapped_fraction(&self) -> f64 {
        self.stats.fraction(self.stats.mapped)
    }

    pub fn painted_fraction(&self) -> f64 {
        self.stats.fraction(self.stats.painted)
    }

    pub fn masked_fraction(&self) -> f64 {
        self.stats.fraction(self.stats.masked)
    }

    /// Masked texels relative to mapped texels.
    pub fn masked_of_mapped(&self) -> f64 {
        self.stats.masked as f64 / self.stats.mapped.max(1) as f64
    }

    /// `key: value` lines followed by a short human-readable summary.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (stage, secs) in &self.timings {
            let _ = writeln!(s, "time.{stage}: {secs:.6}");
        }
        let _ = writeln!(s, "time.geometry_total: {:.6}", self.geometry_seconds());
        let _ = writeln!(s, "time.backend_total: {:.6}", self.backend_seconds());
        let _ = writeln!(s, "time.total: {:.6}", self.total_seconds());
        let _ = writeln!(s, "texels.total: {}", self.stats.total);
        let _ = writeln!(s, "texels.mapped: {}", self.stats.mapped);
        let _ = writeln!(s, "texels.painted: {}", self.stats.painted);
        let _ = writeln!(s, "texels.masked: {}", self.stats.masked);
        let _ = writeln!(s, "fraction.mapped: {:.6}", self.mapped_fraction());
        let _ = writeln!(s, "fraction.painted: {:.6}", self.painted_fraction());
        let _ = writeln!(s, "fraction.masked: {:.6}", self.masked_fraction());
        let _ = writeln!(s, "texture.size: {}", self.texture_size);
        for p in &self.outputs {
            let _ = writeln!(s, "output: {}", p.display());
        }
        for w in &self.warnings {
            let _ = writeln!(s, "warning: {w}");
        }
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "# {}x{} texture in {:.2} s ({:.2} s geometry, {:.2} s backends); {:.1}% of mapped texels came from views, {:.1}% were inpainted",
            self.texture_size,
            self.texture_size,
            self.total_seconds(),
            self.geometry_seconds(),
            self.backend_seconds(),
            100.0 * self.stats.painted as f64 / self.stats.mapped.max(1) as f64,
            100.0 * self.masked_of_mapped(),
        );
        s
    }

    /// Parse the `key: value` part back into a map.
    pub fn parse_text(text: &str) -> std::collections::BTreeMap<String, Vec<String>> {
        let mut out = std::collections::BTreeMap::<String, Vec<String>>::new();
        for line in text.lines() {
            if line.starts_with('#') {
                continue;
            }
            if let Some((k, v)) = line.split_once(": ") {
                out.entry(k.to_string()).or_default().push(v.to_string());
            }
        }
        out
    }
}

struct Timer<'a> {
    report: &'a mut RunReport,
}

impl Timer<'_> {
    fn run<T>(&mut self, stage: Stage, f: impl FnOnce() -> Result<T, PipelineError>) -> Result<T, PipelineError> {
        let start = Instant::now();
        let out = f();
        let secs = start.elapsed().as_secs_f64();
        self.report.timings.push((stage, secs));
        info!("{stage}: {secs:.3} s");
        out
    }
}

/// Written files of one export.
#[derive(Clone, Debug, PartialEq)]
pub struct ExportPaths {
    pub obj: PathBuf,
    pub mtl: PathBuf,
    pub texture: PathBuf,
    pub note: PathBuf,
}

const MATERIAL: &str = "texgen_material";

const CONVENTION_NOTE: &str = "\
Texture addressing
==================
The texture is a square W x W image. Texel (i, j), with i the column and j
the row counted from the top, is centered at

    u = (i + 0.5) / W
    v = 1 - (j + 0.5) / W

so row 0 holds v close to 1 and UV (0, 0) is the bottom-left corner of the
image. Sample with bilinear filtering at these centers; texels outside the
UV islands are padded with the nearest island color.
";

/// Write `<stem>.obj`, `<stem>.mtl`, `<stem>.png` and a convention note.
pub fn export_textured_mesh(mesh: &Mesh, texture: &UvImage, dir: &Path, stem: &str) -> Result<ExportPaths, StageError> {
    if !mesh.has_uvs() {
        return Err(StageError::Mesh(MeshError::MissingUvs));
    }
    std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let paths = ExportPaths {
        obj: dir.join(format!("{stem}.obj")),
        mtl: dir.join(format!("{stem}.mtl")),
        texture: dir.join(format!("{stem}.png")),
        note: dir.join(format!("{stem}_texture_convention.txt")),
    };
    let png_name = paths.texture.file_name().unwrap().to_string_lossy().into_owned();
    let mtl_name = paths.mtl.file_name().unwrap().to_string_lossy().into_owned();

    image::write_file(&paths.texture, &image::encode_png(&texture.color, None, image::Depth::Eight)?)?;

    let mut mtl = String::new();
    let _ = writeln!(mtl, "newmtl {MATERIAL}");
    let _ = writeln!(mtl, "Ka 1 1 1\nKd 1 1 1\nKs 0 0 0\nillum 1");
    let _ = writeln!(mtl, "map_Kd {png_name}");
    std::fs::write(&paths.mtl, mtl).map_err(|e| io_error(&paths.mtl, e))?;

    let obj = mesh::obj_text(mesh, Some((&mtl_name, MATERIAL)));
    std::fs::write(&paths.obj, obj).map_err(|e| io_error(&paths.obj, e))?;
    std::fs::write(&paths.note, CONVENTION_NOTE).map_err(|e| io_error(&paths.note, e))?;
    Ok(paths)
}

/// Normalized, unwrapped mesh ready for baking.
pub fn prepare_mesh(mesh: Mesh, margin_texels: f64) -> Result<(Mesh, Vec<String>), PipelineError> {
    let mut warnings = Vec::new();
    let mesh = mesh::normalize_mesh(mesh).at(Stage::Normalize)?;
    let mesh = if mesh.has_uvs() {
        mesh::repack_uv_islands(mesh, margin_texels).at(Stage::Unwrap)?
    } else {
        warnings.push("mesh has no UVs; used the planar fallback unwrap".to_string());
        mesh::fallback_unwrap(mesh).at(Stage::Unwrap)?
    };
    Ok((mesh, warnings))
}

fn dump(report: &mut RunReport, dir: &Path, name: &str, bytes: Result<Vec<u8>, ImageIoError>, stage: Stage) -> Result<(), PipelineError> {
    let path = dir.join(name);
    image::write_file(&path, &bytes.at(stage)?).at(stage)?;
    report.outputs.push(path);
    Ok(())
}

/// Run every stage and write the results into `config.output_dir`.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunReport, PipelineError> {
    config.validate()?;
    let out_dir = config.output_dir.clone();
    std::fs::create_dir_all(&out_dir).map_err(|e| PipelineError::Stage {
        stage: Stage::Export,
        source: io_error(&out_dir, e),
    })?;
    let mut report = RunReport::default();
    let res = config.resolution;
    let debug = config.debug;

    let raw = Timer { report: &mut report }.run(Stage::Load, || mesh::load_mesh(&config.mesh_path).at(Stage::Load))?;
    let start = Instant::now();
    let (mesh, warnings) = prepare_mesh(raw, config.margin_texels)?;
    report.timings.push((Stage::Unwrap, start.elapsed().as_secs_f64()));
    report.warnings.extend(warnings);
    let layout = mesh::validate_uv_layout(&mesh);
    if layout.degenerate_faces > 0 {
        report.warnings.push(format!("{} faces have zero UV area", layout.degenerate_faces));
    }

    let (p_uv, n_uv) = Timer { report: &mut report }.run(Stage::Bake, || {
        let raster = rasterize_uv(&mesh, res).at(Stage::Bake)?;
        Ok((
            bake_from_raster(&mesh, &raster, PassKind::Position).at(Stage::Bake)?,
            bake_from_raster(&mesh, &raster, PassKind::Normal).at(Stage::Bake)?,
        ))
    })?;
    if debug {
        dump(&mut report, &out_dir, "p_uv.png", p_uv.encode_png(), Stage::Bake)?;
        dump(&mut report, &out_dir, "n_uv.png", n_uv.encode_png(), Stage::Bake)?;
    }

    let cameras = make_view_set(&ViewConfig::framing(&mesh, config.view_size));
    let (visibility, position_grid, normal_grid) = Timer { report: &mut report }.run(Stage::Render, || {
        let visibility: Vec<_> = cameras.iter().map(|c| rasterize_view(&mesh, c)).collect();
        let passes = |kind| -> Result<[PassImage; 4], PipelineError> {
            let v: Vec<PassImage> = visibility
                .iter()
                .enumerate()
                .map(|(i, vis)| shade(&mesh, vis, kind, i, None))
                .collect::<Result<_, _>>()
                .at(Stage::Render)?;
            Ok(v.try_into().expect("four views"))
        };
        let pg = stitch_grid(&passes(PassKind::Position)?).at(Stage::Render)?;
        let ng = stitch_grid(&passes(PassKind::Normal)?).at(Stage::Render)?;
        Ok((visibility, pg, ng))
    })?;
    dump(&mut report, &out_dir, "position_grid.png", position_grid.encode_png(), Stage::Render)?;
    dump(&mut report, &out_dir, "normal_grid.png", normal_grid.encode_png(), Stage::Render)?;

    let request = GeneratorRequest {
        prompt: config.prompt.clone(),
        seed: config.seed,
        position_grid,
        normal_grid,
    };
    let generated = Timer { report: &mut report }.run(Stage::Generate, || generate_views(&config.stage1_backend, &request).at(Stage::Generate))?;
    if debug {
        dump(&mut report, &out_dir, "generated_grid.png", generated.encode_png(), Stage::Generate)?;
    }

    let partial = Timer { report: &mut report }.run(Stage::Backproject, || {
        let views = split_grid(&generated).at(Stage::Backproject)?;
        backproject_visible(&mesh, &cameras, &visibility, &views, res, &config.blend).at(Stage::Backproject)
    })?;
    let (blended, mask) = Timer { report: &mut report }.run(Stage::Blend, || {
        let blended = blend_views(partial, &config.blend).at(Stage::Blend)?;
        let mask = compute_inpaint_mask(&blended, &p_uv.mapped).at(Stage::Blend)?;
        Ok((blended, mask))
    })?;
    report.stats = TexelStats::measure(&blended, &p_uv.mapped, &mask);
    if debug {
        dump(&mut report, &out_dir, "partial.png", blended.encode_resolved_png(), Stage::Blend)?;
        dump(&mut report, &out_dir, "weights.png", blended.encode_weight_png(), Stage::Blend)?;
        dump(&mut report, &out_dir, "mask.png", mask.encode_png(), Stage::Blend)?;
    }

    let mapped = p_uv.mapped.clone();
    let inpaint_req = InpaintRequest {
        prompt: config.prompt.clone(),
        seed: config.seed,
        partial: blended,
        mask,
        p_uv,
        n_uv,
    };
    let completed = Timer { report: &mut report }.run(Stage::Inpaint, || inpaint_texture(&config.stage2_backend, &inpaint_req).at(Stage::Inpaint))?;
    drop(inpaint_req);

    let mut texture = Timer { report: &mut report }.run(Stage::Dilate, || {
        Ok(UvImage {
            kind: UvKind::Color,
            color: dilate_margins(&completed.color, &mapped, config.gutter),
            mapped: completed.mapped.clone(),
        })
    })?;

    if config.enhance_ratio != 1.0 {
        let params = EnhanceParams {
            seed: config.seed,
            ..config.enhance.clone()
        };
        texture = Timer { report: &mut report }.run(Stage::Enhance, || {
            enhance_texture(&texture, config.enhance_ratio, &config.enhancer_backend, &params).at(Stage::Enhance)
        })?;
    }
    report.texture_size = texture.resolution();

    let paths = Timer { report: &mut report }.run(Stage::Export, || export_textured_mesh(&mesh, &texture, &out_dir, "textured").at(Stage::Export))?;
    report.outputs.extend([paths.obj, paths.mtl, paths.texture, paths.note]);
    for w in &report.warnings {
        warn!("{w}");
    }
    let report_path = out_dir.join("report.txt");
    report.outputs.push(report_path.clone());
    std::fs::write(&report_path, report.to_text()).map_err(|e| PipelineError::Stage {
        stage: Stage::Export,
        source: io_error(&report_path, e),
    })?;
    Ok(report)
}
