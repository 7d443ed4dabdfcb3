//! Predicts static and dynamic cantilever-beam properties from raw
//! cross-section images and searches for cross-sections with target
//! eigenfrequencies.
//!
//! The pipeline: random star-shaped polygon sections ([`geometry`]) are
//! rasterized to fixed-frame grayscale images ([`raster`]) and labeled with
//! closed-form beam mechanics ([`mechanics`]). Labeled datasets ([`dataset`])
//! train a small CNN ([`nn`], [`model`]) that then serves as a surrogate
//! fitness measure for random search over section shapes ([`search`]).
//!
//! Everything is seeded and deterministic: the same spec and seed reproduce
//! every byte of a dataset, a training run, or a search campaign.

pub mod dataset;
pub mod geometry;
pub mod mechanics;
pub mod model;
pub mod nn;
pub mod raster;
pub mod search;
pub mod seeds;

pub use geometry::{Polygon, PolygonSpec, PrincipalSection, SectionProperties};
pub use mechanics::{BeamSpec, Label, Material, ModalResult};
pub use raster::{CrossSectionImage, RasterConfig};
