//! Generator stages behind one interface.
//!
//! Stage one turns position and normal grids into a color grid; stage two
//! completes a partially painted texture. Every backend must keep the
//! background exactly where the conditioning has none, and must leave
//! painted texels alone outside the inpaint mask.

mod fill;
mod mock;
#[cfg(feature = "remote")]
pub(crate) mod remote;
pub mod wire;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backproject::{InpaintMask, PartialTexture};
use crate::image::{Image, ImageIoError};
use crate::raster::{GridImage, PassKind, BACKGROUND};
use crate::uvbake::{UvImage, UvKind};

pub use fill::{dilate_margins, pullpush_inpaint};
pub use mock::{decode_normal, mock_color, mock_generate, mock_inpaint};

#[derive(Debug, Error)]
pub enum GenError {
    #[error("remote backend needs an endpoint")]
    MissingEndpoint,
    #[error("remote backends are not compiled in (enable the `remote` feature)")]
    RemoteDisabled,
    #[error("request to {endpoint} failed: {message}")]
    Transport { endpoint: String, message: String },
    #[error("request to {endpoint} timed out after {seconds} s")]
    Timeout { endpoint: String, seconds: f64 },
    #[error("backend answered HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed backend response: {0}")]
    Malformed(String),
    #[error("backend returned {got_w}x{got_h}, expected {expected}x{expected}")]
    WrongSize { expected: usize, got_w: usize, got_h: usize },
    #[error("backend painted {pixels} background pixels")]
    PaintedBackground { pixels: usize },
    #[error("{texels} masked texels left unfilled")]
    UnfilledMask { texels: usize },
    #[error("nothing painted outside the mask; no color to propagate")]
    NothingPainted,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Image(#[from] ImageIoError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Mock,
    Pullpush,
    Remote,
}

impl std::str::FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mock" => Ok(Self::Mock),
            "pullpush" | "pull-push" => Ok(Self::Pullpush),
            "remote" => Ok(Self::Remote),
            other => Err(format!("unknown backend `{other}` (expected mock, pullpush or remote)")),
        }
    }
}

pub const DEFAULT_TIMEOUT_SECS: f64 = 120.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendDescriptor {
    pub kind: BackendKind,
    pub endpoint: Option<String>,
    pub timeout_secs: f64,
}

impl Default for BackendDescriptor {
    fn default() -> Self {
        Self::mock()
    }
}

impl BackendDescriptor {
    pub fn mock() -> Self {
        Self {
            kind: BackendKind::Mock,
            endpoint: None,
            timeout_secs: DEFAULT_TIMEOUT_SECS,
        }
    }

    pub fn pullpush() -> Self {
        Self {
            kind: BackendKind::Pullpush,
            ..Self::mock()
        }
    }

    pub fn remote(endpoint: impl Into<String>) -> Self {
        Self {
            kind: BackendKind::Remote,
            endpoint: Some(endpoint.into()),
            ..Self::mock()
        }
    }

    pub fn validate(&self) -> Result<(), GenError> {
        if self.kind == BackendKind::Remote && self.endpoint.as_deref().is_none_or(str::is_empty) {
            return Err(GenError::MissingEndpoint);
        }
        if !(self.timeout_secs > 0.0) {
            return Err(GenError::InvalidRequest(format!("timeout must be positive, got {}", self.timeout_secs)));
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }
}

/// Stage-one input: the rig's position and normal grids.
#[derive(Clone, Debug)]
pub struct GeneratorRequest {
    pub prompt: String,
    pub seed: u64,
    pub position_grid: GridImage,
    pub normal_grid: GridImage,
}

impl GeneratorRequest {
    pub fn validate(&self) -> Result<(), GenError> {
        let (p, n) = (&self.position_grid, &self.normal_grid);
        if p.kind != PassKind::Position || n.kind != PassKind::Normal {
            return Err(GenError::InvalidRequest(format!("grid kinds are {:?} and {:?}", p.kind, n.kind)));
        }
        if p.color.width != n.color.width || p.color.height != n.color.height {
            return Err(GenError::InvalidRequest("position and normal grids differ in size".into()));
        }
        if p.camera_indices != n.camera_indices {
            return Err(GenError::InvalidRequest("position and normal grids come from different rigs".into()));
        }
        if p.coverage != n.coverage {
            return Err(GenError::InvalidRequest("position and normal grids differ in coverage".into()));
        }
        Ok(())
    }
}

/// Stage-two input. `partial` must already be blended.
#[derive(Clone, Debug)]
pub struct InpaintRequest {
    pub prompt: String,
    pub seed: u64,
    pub partial: PartialTexture,
    pub mask: InpaintMask,
    pub p_uv: UvImage,
    pub n_uv: UvImage,
}

impl InpaintRequest {
    pub fn resolution(&self) -> usize {
        self.partial.resolution
    }

    pub fn validate(&self) -> Result<(), GenError> {
        let res = self.partial.resolution;
        if self.partial.resolved.is_none() {
            return Err(GenError::InvalidRequest("partial texture has not been blended".into()));
        }
        for (name, r) in [
            ("mask", self.mask.resolution),
            ("p_uv", self.p_uv.resolution()),
            ("n_uv", self.n_uv.resolution()),
        ] {
            if r != res {
                return Err(GenError::InvalidRequest(format!("{name} is {r}px, partial is {res}px")));
            }
        }
        Ok(())
    }

    /// Texels that carry color before completion.
    pub fn known(&self) -> Vec<bool> {
        self.partial
            .painted()
            .iter()
            .zip(&self.mask.mask)
            .map(|(&p, &m)| p && !m)
            .collect()
    }
}

/// Stage one: a color grid matching the conditioning coverage.
pub fn generate_views(backend: &BackendDescriptor, req: &GeneratorRequest) -> Result<GridImage, GenError> {
    backend.validate()?;
    req.validate()?;
    let out = match backend.kind {
        // the pull-push completer has no view generator; it pairs with the mock
        BackendKind::Mock | BackendKind::Pullpush => mock_generate(req),
        BackendKind::Remote => remote_generate(backend, req)?,
    };
    check_grid_contract(req, &out.color)?;
    Ok(out)
}

#[cfg(feature = "remote")]
fn remote_generate(backend: &BackendDescriptor, req: &GeneratorRequest) -> Result<GridImage, GenError> {
    let image = remote::post(backend, &wire::stage1_body(req)?)?.image;
    check_grid_contract(req, &image)?;
    Ok(GridImage {
        kind: PassKind::Combined,
        camera_indices: req.position_grid.camera_indices,
        color: image,
        coverage: req.position_grid.coverage.clone(),
        depth: req.position_grid.depth.clone(),
    })
}

#[cfg(not(feature = "remote"))]
fn remote_generate(_: &BackendDescriptor, _: &GeneratorRequest) -> Result<GridImage, GenError> {
    Err(GenError::RemoteDisabled)
}

/// Size must match the conditioning and background must stay background.
pub fn check_grid_contract(req: &GeneratorRequest, out: &Image) -> Result<(), GenError> {
    let cond = &req.position_grid;
    if out.width != cond.color.width || out.height != cond.color.height {
        return Err(GenError::WrongSize {
            expected: cond.color.width,
            got_w: out.width,
            got_h: out.height,
        });
    }
    let painted = out
        .data
        .iter()
        .zip(&cond.coverage)
        .filter(|(c, &cov)| !cov && **c != BACKGROUND)
        .count();
    if painted > 0 {
        return Err(GenError::PaintedBackground { pixels: painted });
    }
    Ok(())
}

/// Stage two: a complete color texture. Texels outside the mask keep the
/// blended color; every masked texel gets filled.
pub fn inpaint_texture(backend: &BackendDescriptor, req: &InpaintRequest) -> Result<UvImage, GenError> {
    backend.validate()?;
    req.validate()?;
    let res = req.resolution();
    let resolved = req.partial.resolved_image();
    let color = if req.mask.count() == 0 {
        resolved.clone()
    } else {
        match backend.kind {
            BackendKind::Mock => mock_inpaint(req),
            BackendKind::Pullpush => pullpush_inpaint(&resolved, &req.known(), &req.mask)?,
            BackendKind::Remote => remote_inpaint(backend, req)?,
        }
    };
    if color.width != res || color.height != res {
        return Err(GenError::WrongSize {
            expected: res,
            got_w: color.width,
            got_h: color.height,
        });
    }
    // outside the mask the blended partial is authoritative
    let mut color = color;
    for (i, m) in req.mask.mask.iter().enumerate() {
        if !m {
            color.data[i] = resolved.data[i];
        }
    }
    let unfilled = color
        .data
        .iter()
        .zip(&req.mask.mask)
        .filter(|(c, &m)| m && !c.iter().all(|v| v.is_finite()))
        .count();
    if unfilled > 0 {
        return Err(GenError::UnfilledMask { texels: unfilled });
    }
    Ok(UvImage {
        kind: UvKind::Color,
        color,
        mapped: req.p_uv.mapped.clone(),
    })
}

#[cfg(feature = "remote")]
fn remote_inpaint(backend: &BackendDescriptor, req: &InpaintRequest) -> Result<Image, GenError> {
    let out = remote::post(backend, &wire::stage2_body(req)?)?;
    if let Some(alpha) = &out.alpha {
        let unfilled = alpha.iter().zip(&req.mask.mask).filter(|(&a, &m)| m && !a).count();
        if unfilled > 0 {
            return Err(GenError::UnfilledMask { texels: unfilled });
        }
    }
    Ok(out.image)
}

#[cfg(not(feature = "remote"))]
fn remote_inpaint(_: &BackendDescriptor, _: &InpaintRequest) -> Result<Image, GenError> {
    Err(GenError::RemoteDisabled)
}

/// Send one enhancement step for a patch to a remote enhancer.
#[cfg(feature = "remote")]
pub fn remote_enhance_step(backend: &BackendDescriptor, seed: u64, patch: &Image, step: usize, total_steps: usize) -> Result<Image, GenError> {
    backend.validate()?;
    let out = remote::post(backend, &wire::enhance_body(seed, patch, step, total_steps)?)?.image;
    if out.width != patch.width || out.height != patch.height {
        return Err(GenError::WrongSize {
            expected: patch.width,
            got_w: out.width,
            got_h: out.height,
        });
    }
    Ok(out)
}
