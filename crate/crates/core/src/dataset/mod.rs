//! Conditioned-image corpus: procedural shapes with attribute embeddings,
//! class-disjoint splits, and PPM/manifest I/O.

mod manifest;
mod ppm;
mod shapes;
mod split;

pub use manifest::{DatasetManifest, Record};
pub use ppm::{decode_ppm, encode_ppm, load_ppm, save_ppm};
pub use shapes::{
    decode_embedding, encode_embedding, gen_shapes, render, render_corpus, sample, Attributes,
    ClassSpec, Jitter, NamedColor, Shape, ShapesConfig, ATTRIBUTE_DIM,
};
pub use split::{split_zero_shot, train_class_count};

/// File name [`gen_shapes`] writes the manifest to.
pub const MANIFEST_FILE: &str = "manifest.tsv";
