use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{BinaryMask, Grid};

use super::pgm;

/// Pixel data scaled to [0,1]: one plane for grayscale sources, three
/// (R, G, B) for color.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedImage {
    planes: Vec<Grid>,
}

impl LoadedImage {
    pub fn from_planes(planes: Vec<Grid>) -> Result<Self> {
        if planes.is_empty() {
            return Err(Error::invalid_argument("image needs at least one plane"));
        }
        if planes.iter().any(|p| !p.same_geometry(&planes[0])) {
            return Err(Error::invalid_argument("image planes differ in geometry"));
        }
        Ok(LoadedImage { planes })
    }

    pub fn planes(&self) -> &[Grid] {
        &self.planes
    }

    pub fn width(&self) -> usize {
        self.planes[0].width()
    }

    pub fn height(&self) -> usize {
        self.planes[0].height()
    }

    /// Single grayscale plane: the plane itself, or the Rec. 601 weighted
    /// sum of R, G, B.
    pub fn luminance(&self) -> Grid {
        match self.planes.len() {
            1 => self.planes[0].clone(),
            3 => {
                let (r, g, b) = (&self.planes[0], &self.planes[1], &self.planes[2]);
                Grid::from_fn(r.width(), r.height(), |x, y| {
                    0.299 * r.get(x, y) + 0.587 * g.get(x, y) + 0.114 * b.get(x, y)
                })
            }
            n => unreachable!("loaders produce 1 or 3 planes, got {n}"),
        }
    }
}

fn grid_from_bytes(width: usize, height: usize, bytes: &[u8]) -> Grid {
    Grid::from_fn(width, height, |x, y| bytes[y * width + x] as f64 / 255.0)
}

/// Read an 8-bit grayscale or RGB image (PNG or binary PGM) scaled to [0,1].
pub fn load_image(path: &Path) -> Result<LoadedImage> {
    let planes = match extension(path).as_deref() {
        Some("pgm") => {
            let (w, h, bytes) = pgm::load_pgm(path)?;
            vec![grid_from_bytes(w, h, &bytes)]
        }
        Some("png") => png_planes(path)?,
        _ => {
            return Err(Error::Format {
                path: path.to_path_buf(),
                reason: "unsupported image format (expected .png or .pgm)".into(),
            })
        }
    };
    LoadedImage::from_planes(planes)
}

/// Read a mask image; zero bytes are background, anything else foreground.
pub fn load_mask(path: &Path) -> Result<BinaryMask> {
    let (w, h, bytes) = match extension(path).as_deref() {
        Some("pgm") => pgm::load_pgm(path)?,
        Some("png") => {
            let img = open_png(path)?;
            match img {
                image::DynamicImage::ImageLuma8(gray) => {
                    let (w, h) = gray.dimensions();
                    (w as usize, h as usize, gray.into_raw())
                }
                other => {
                    let gray = other.into_luma8();
                    let (w, h) = gray.dimensions();
                    (w as usize, h as usize, gray.into_raw())
                }
            }
        }
        _ => {
            return Err(Error::Format {
                path: path.to_path_buf(),
                reason: "unsupported mask format (expected .png or .pgm)".into(),
            })
        }
    };
    BinaryMask::from_bytes(w, h, bytes)
}

fn extension(path: &Path) -> Option<String> {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
}

fn open_png(path: &Path) -> Result<image::DynamicImage> {
    image::open(path).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

fn png_planes(path: &Path) -> Result<Vec<Grid>> {
    match open_png(path)? {
        image::DynamicImage::ImageLuma8(gray) => {
            let (w, h) = gray.dimensions();
            Ok(vec![grid_from_bytes(w as usize, h as usize, gray.as_raw())])
        }
        image::DynamicImage::ImageRgb8(rgb) => {
            let (w, h) = rgb.dimensions();
            let (w, h) = (w as usize, h as usize);
            let raw = rgb.as_raw();
            Ok((0..3)
                .map(|c| Grid::from_fn(w, h, |x, y| raw[(y * w + x) * 3 + c] as f64 / 255.0))
                .collect())
        }
        _ => Err(Error::Format {
            path: path.to_path_buf(),
            reason: "unsupported PNG pixel type (expected 8-bit grayscale or RGB)".into(),
        }),
    }
}

fn byte_from_unit(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Write a [0,1]-valued grid as 8-bit PGM.
pub fn save_gray_pgm(path: &Path, grid: &Grid) -> Result<()> {
    let bytes: Vec<u8> = grid.values().iter().map(|&v| byte_from_unit(v)).collect();
    pgm::save_pgm(path, grid.width(), grid.height(), &bytes)
}

/// Write an arbitrary-range grid as 8-bit PGM after min-max normalization.
/// A constant grid maps to all zeros.
pub fn save_score_pgm(path: &Path, grid: &Grid) -> Result<()> {
    let (lo, hi) = grid.min_max().ok_or_else(|| {
        Error::invalid_argument("cannot write an empty score map")
    })?;
    let span = hi - lo;
    let bytes: Vec<u8> = grid
        .values()
        .iter()
        .map(|&v| {
            if span > 0.0 {
                byte_from_unit((v - lo) / span)
            } else {
                0
            }
        })
        .collect();
    pgm::save_pgm(path, grid.width(), grid.height(), &bytes)
}

/// Write a mask as 8-bit PGM with foreground at 255.
pub fn save_mask_pgm(path: &Path, mask: &BinaryMask) -> Result<()> {
    let bytes: Vec<u8> = mask.values().iter().map(|&b| b * 255).collect();
    pgm::save_pgm(path, mask.width(), mask.height(), &bytes)
}
