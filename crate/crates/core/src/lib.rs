//! Geometry and fusion stages of a two-stage mesh texturing pipeline.
//!
//! A mesh is normalized into the unit cube and given a single
//! non-overlapping UV layout ([`mesh`]). Position and normal passes are
//! rendered from a fixed four-view rig and stitched into 2x2 grids
//! ([`raster`]), and the same channels are baked into UV space
//! ([`uvbake`]). A generator backend paints the four views ([`genstage`]);
//! the views are projected back into UV space with incidence-weighted
//! blending ([`backproject`]), the remaining holes are completed, and the
//! texture can optionally be upscaled with overlapping-patch aggregation
//! ([`enhance`]). [`pipeline`] wires the stages together.

pub mod backproject;
pub mod enhance;
pub mod genstage;
pub mod image;
pub mod mesh;
mod par;
pub mod pipeline;
pub mod raster;
pub mod uvbake;

pub use image::Image;
pub use mesh::Mesh;
