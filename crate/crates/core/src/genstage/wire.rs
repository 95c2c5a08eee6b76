//! JSON wire format shared by remote generators and enhancers.
//!
//! Requests are `{"kind", "prompt", "seed", "images": {name: base64 PNG}}`,
//! enhancement steps add `"step"` and `"total_steps"`. Responses are
//! `{"image": base64 PNG}`.

use std::collections::BTreeMap;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::image::{self, DecodedPng, Depth, Image};

use super::{GenError, GeneratorRequest, InpaintRequest};

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct WireRequest {
    pub kind: String,
    pub prompt: String,
    pub seed: u64,
    pub images: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_steps: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct WireResponse {
    pub image: String,
}

pub fn encode_b64(bytes: &[u8]) -> String {
    STANDARD.encode(bytes)
}

pub fn decode_b64_png(text: &str) -> Result<DecodedPng, GenError> {
    let bytes = STANDARD
        .decode(text.trim())
        .map_err(|e| GenError::Malformed(format!("bad base64: {e}")))?;
    image::decode_png(&bytes).map_err(|e| GenError::Malformed(format!("bad PNG: {e}")))
}

fn to_json(req: &WireRequest) -> Result<String, GenError> {
    serde_json::to_string(req).map_err(|e| GenError::InvalidRequest(e.to_string()))
}

pub fn stage1_request(req: &GeneratorRequest) -> Result<WireRequest, GenError> {
    let mut images = BTreeMap::new();
    images.insert("position_grid".to_string(), encode_b64(&req.position_grid.encode_png()?));
    images.insert("normal_grid".to_string(), encode_b64(&req.normal_grid.encode_png()?));
    Ok(WireRequest {
        kind: "stage1".into(),
        prompt: req.prompt.clone(),
        seed: req.seed,
        images,
        step: None,
        total_steps: None,
    })
}

pub fn stage2_request(req: &InpaintRequest) -> Result<WireRequest, GenError> {
    let res = req.resolution();
    let mut images = BTreeMap::new();
    images.insert("partial".to_string(), encode_b64(&req.partial.encode_resolved_png()?));
    images.insert("mask".to_string(), encode_b64(&image::encode_mask_png(res, res, &req.mask.mask)?));
    images.insert("p_uv".to_string(), encode_b64(&req.p_uv.encode_png()?));
    images.insert("n_uv".to_string(), encode_b64(&req.n_uv.encode_png()?));
    Ok(WireRequest {
        kind: "stage2".into(),
        prompt: req.prompt.clone(),
        seed: req.seed,
        images,
        step: None,
        total_steps: None,
    })
}

pub fn enhance_request(seed: u64, patch: &Image, step: usize, total_steps: usize) -> Result<WireRequest, GenError> {
    let mut images = BTreeMap::new();
    images.insert("image".to_string(), encode_b64(&image::encode_png(patch, None, Depth::Sixteen)?));
    Ok(WireRequest {
        kind: "enhance".into(),
        prompt: String::new(),
        seed,
        images,
        step: Some(step),
        total_steps: Some(total_steps),
    })
}

pub fn stage1_body(req: &GeneratorRequest) -> Result<String, GenError> {
    to_json(&stage1_request(req)?)
}

pub fn stage2_body(req: &InpaintRequest) -> Result<String, GenError> {
    to_json(&stage2_request(req)?)
}

pub fn enhance_body(seed: u64, patch: &Image, step: usize, total_steps: usize) -> Result<String, GenError> {
    to_json(&enhance_request(seed, patch, step, total_steps)?)
}

pub fn response_body(image: &Image, flags: Option<&[bool]>, depth: Depth) -> Result<String, GenError> {
    let resp = WireResponse {
        image: encode_b64(&image::encode_png(image, flags, depth)?),
    };
    serde_json::to_string(&resp).map_err(|e| GenError::InvalidRequest(e.to_string()))
}

pub fn parse_response(body: &str) -> Result<DecodedPng, GenError> {
    let resp: WireResponse = serde_json::from_str(body).map_err(|e| GenError::Malformed(e.to_string()))?;
    decode_b64_png(&resp.image)
}
