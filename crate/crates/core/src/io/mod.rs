//! File formats: PGM/PNG images, dataset manifests, dictionary montages,
//! and the versioned binary model container.

mod crc;
mod image;
mod manifest;
mod model;
mod montage;
mod pgm;

pub use crc::{crc32, Crc32};
pub use image::{
    load_image, load_mask, save_gray_pgm, save_mask_pgm, save_score_pgm, LoadedImage,
};
pub use manifest::{load_manifest, DatasetManifest, ManifestEntry, SplitTag};
pub use model::{decode_model, encode_model, load_model, save_model};
pub use montage::write_atom_montage;
pub use pgm::{encode_pgm, load_pgm, save_pgm};
