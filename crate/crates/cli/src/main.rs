//! `texgen` command line.

mod commands;
mod exit;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use texgen::genstage::BackendKind;

#[derive(Parser, Debug)]
#[command(name = "texgen", version, about = "Texture a mesh from four generated views", after_help = exit::TABLE)]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the full pipeline and export a textured OBJ.
    Texture(TextureArgs),
    /// Render geometry or textured passes from the rig or a turntable.
    Render(RenderArgs),
    /// Normalize and unwrap a mesh, then bake position and normal maps.
    Bake(BakeArgs),
    /// Project a painted 2x2 view grid into UV space and complete it.
    Blend(BlendArgs),
    /// Upscale a texture.
    Enhance(EnhanceArgs),
}

fn parse_kind(s: &str) -> Result<BackendKind, String> {
    s.parse()
}

#[derive(Args, Debug)]
struct TextureArgs {
    /// TOML config; defaults to $TEXGEN_CONFIG when set.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    mesh: Option<PathBuf>,
    #[arg(long)]
    prompt: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Texture resolution in texels.
    #[arg(long)]
    resolution: Option<usize>,
    /// Size of each rig view in pixels.
    #[arg(long)]
    view_size: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    gutter: Option<usize>,
    #[arg(long)]
    margin_texels: Option<f64>,
    #[arg(long)]
    enhance_ratio: Option<f64>,
    /// Backend for every stage: mock, pullpush or remote.
    #[arg(long, value_parser = parse_kind)]
    backend: Option<BackendKind>,
    #[arg(long, value_parser = parse_kind)]
    stage1: Option<BackendKind>,
    #[arg(long, value_parser = parse_kind)]
    stage2: Option<BackendKind>,
    #[arg(long, value_parser = parse_kind)]
    enhancer: Option<BackendKind>,
    /// Endpoint for remote backends.
    #[arg(long)]
    endpoint: Option<String>,
    /// Per-request timeout for remote backends, seconds.
    #[arg(long)]
    timeout: Option<f64>,
    #[arg(short, long)]
    output_dir: Option<PathBuf>,
    /// Also write every intermediate image.
    #[arg(long)]
    debug: bool,
    /// Print the merged config as TOML and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PassArg {
    Position,
    Normal,
    Combined,
}

#[derive(Args, Debug)]
struct RenderArgs {
    #[arg(long)]
    mesh: PathBuf,
    /// Texture for the combined pass.
    #[arg(long)]
    texture: Option<PathBuf>,
    /// Pass to render; combined when a texture is given, else normal.
    #[arg(long, value_enum)]
    kind: Option<PassArg>,
    /// Render N evenly spaced frames instead of the four-view grid.
    #[arg(long, value_name = "N")]
    turntable: Option<usize>,
    #[arg(long, default_value_t = texgen::raster::DEFAULT_ELEVATION_DEG)]
    elevation: f64,
    /// Image size per view in pixels.
    #[arg(long, default_value_t = 512)]
    size: usize,
    #[arg(short, long, default_value = "texgen_render")]
    output_dir: PathBuf,
}

#[derive(Args, Debug)]
struct BakeArgs {
    #[arg(long)]
    mesh: PathBuf,
    #[arg(long, default_value_t = 1024)]
    resolution: usize,
    #[arg(long, default_value_t = texgen::mesh::DEFAULT_MARGIN_TEXELS)]
    margin_texels: f64,
    #[arg(short, long, default_value = "texgen_bake")]
    output_dir: PathBuf,
}

#[derive(Args, Debug)]
struct BlendArgs {
    /// Mesh with the UV layout to fill, e.g. the one written by `bake`.
    #[arg(long)]
    mesh: PathBuf,
    /// Painted 2x2 view grid.
    #[arg(long)]
    grid: PathBuf,
    #[arg(long, default_value_t = 1024)]
    resolution: usize,
    #[arg(long, default_value_t = texgen::backproject::DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long, default_value_t = texgen::backproject::DEFAULT_EPSILON)]
    epsilon: f64,
    #[arg(long, default_value_t = 4)]
    gutter: usize,
    /// Backend that fills the unpainted texels.
    #[arg(long, value_parser = parse_kind, default_value = "pullpush")]
    stage2: BackendKind,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "")]
    prompt: String,
    #[arg(short, long, default_value = "texgen_blend")]
    output_dir: PathBuf,
}

#[derive(Args, Debug)]
struct EnhanceArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long, default_value_t = 4.0)]
    ratio: f64,
    #[arg(long, value_parser = parse_kind, default_value = "mock")]
    backend: BackendKind,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long, default_value_t = texgen::enhance::DEFAULT_PATCH_SIZE)]
    patch_size: usize,
    #[arg(long, default_value_t = texgen::enhance::DEFAULT_OVERLAP)]
    overlap: usize,
    #[arg(long, default_value_t = texgen::enhance::DEFAULT_STEPS)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::Texture(a) => commands::texture(a),
        Command::Render(a) => commands::render(a),
        Command::Bake(a) => commands::bake(a),
        Command::Blend(a) => commands::blend(a),
        Command::Enhance(a) => commands::enhance(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit::code(&e))
        }
    }
}
