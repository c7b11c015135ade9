//! Region-constrained local surrogate explanations for image classifiers.
//!
//! A user-supplied region mask splits the image into an inside and an
//! outside that are segmented independently into superpixels. Perturbing
//! those superpixels, querying a black-box classifier and fitting a weighted
//! linear model yields per-superpixel influence scores. Region edits (color,
//! shift, rotation, removal, scaling) let the same pipeline probe how the
//! classifier reacts to semantic changes.

pub mod api;
pub mod editor;
pub mod error;
pub mod explainer;
pub mod image;
pub mod inpaint;
pub mod linalg;
pub mod predictor;
pub mod robustness;
pub mod segmentation;

pub use error::{Error, Result};
