//! Process exit codes, one per error class.

use texgen::backproject::BlendError;
use texgen::enhance::EnhanceError;
use texgen::genstage::GenError;
use texgen::image::ImageIoError;
use texgen::mesh::MeshError;
use texgen::pipeline::{PipelineError, StageError};
use texgen::raster::RasterError;

pub const OTHER: u8 = 1;
pub const USAGE: u8 = 2;
pub const IO: u8 = 3;
pub const MESH: u8 = 4;
pub const LAYOUT: u8 = 5;
pub const BACKEND: u8 = 6;
pub const CONTRACT: u8 = 7;
pub const CONFIG: u8 = 8;

pub const TABLE: &str = "\
Exit codes:
  0  success
  1  other failure
  2  usage error
  3  file I/O error
  4  mesh could not be parsed or is invalid
  5  UV layout error (packing, overlap, missing UVs)
  6  backend unreachable, timed out or returned an HTTP error
  7  backend or input broke the image contract (size, background, mask)
  8  invalid configuration";

pub fn code(err: &PipelineError) -> u8 {
    match err {
        PipelineError::Config(_) => CONFIG,
        PipelineError::Stage { source, .. } => stage(source),
    }
}

fn stage(err: &StageError) -> u8 {
    match err {
        StageError::Io { .. } => IO,
        StageError::Image(e) => image(e),
        StageError::Mesh(e) => mesh(e),
        StageError::Bake(_) => LAYOUT,
        StageError::Raster(e) => raster(e),
        StageError::Blend(e) => blend(e),
        StageError::Backend(e) => backend(e),
        StageError::Enhance(e) => enhance(e),
    }
}

fn image(err: &ImageIoError) -> u8 {
    match err {
        ImageIoError::Io { .. } => IO,
        ImageIoError::Decode(_) | ImageIoError::Unsupported(_) => CONTRACT,
        _ => OTHER,
    }
}

fn mesh(err: &MeshError) -> u8 {
    match err {
        MeshError::Io { .. } => IO,
        MeshError::MissingUvs | MeshError::PackingFailed(_) => LAYOUT,
        _ => MESH,
    }
}

fn raster(err: &RasterError) -> u8 {
    match err {
        RasterError::MissingUvs => LAYOUT,
        RasterError::MissingTexture => USAGE,
        RasterError::GridMismatch(_) | RasterError::OddGrid(..) => CONTRACT,
        RasterError::Image(e) => image(e),
    }
}

fn blend(err: &BlendError) -> u8 {
    match err {
        BlendError::ResolutionMismatch(_) => CONTRACT,
        BlendError::InvalidParams(_) => CONFIG,
        BlendError::Image(e) => image(e),
        BlendError::NonUnitVector { .. } => OTHER,
    }
}

fn backend(err: &GenError) -> u8 {
    match err {
        GenError::Transport { .. } | GenError::Timeout { .. } | GenError::Status { .. } => BACKEND,
        GenError::MissingEndpoint | GenError::RemoteDisabled => CONFIG,
        GenError::Malformed(_) | GenError::WrongSize { .. } | GenError::PaintedBackground { .. } | GenError::UnfilledMask { .. } => CONTRACT,
        GenError::Image(e) => image(e),
        GenError::NothingPainted | GenError::InvalidRequest(_) => OTHER,
    }
}

fn enhance(err: &EnhanceError) -> u8 {
    match err {
        EnhanceError::Backend { source, .. } => backend(source),
        EnhanceError::Ratio(_) | EnhanceError::TooLarge { .. } | EnhanceError::Sigma(_) | EnhanceError::Schedule(_) | EnhanceError::ZeroSteps => CONFIG,
        _ => OTHER,
    }
}
