use std::path::Path;

use crate::csc::LocalDictionary;
use crate::error::Result;

use super::pgm;

/// Tile every atom of a dictionary into one PGM image: near-square layout,
/// each tile min-max normalized on its own, tiles separated by a one-pixel
/// black rule. Returns (columns, rows) of the tile layout.
pub fn write_atom_montage(dict: &LocalDictionary, path: &Path) -> Result<(usize, usize)> {
    let side = dict.filter_side();
    let n = dict.atom_count();
    let cols = (n as f64).sqrt().ceil() as usize;
    let rows = n.div_ceil(cols);
    let width = cols * side + (cols - 1);
    let height = rows * side + (rows - 1);

    let mut pixels = vec![0u8; width * height];
    for (j, tile) in (0..n).map(|j| (j, normalized_tile(dict.atom(j)))) {
        let ox = (j % cols) * (side + 1);
        let oy = (j / cols) * (side + 1);
        for ty in 0..side {
            for tx in 0..side {
                pixels[(oy + ty) * width + ox + tx] = tile[ty * side + tx];
            }
        }
    }
    pgm::save_pgm(path, width, height, &pixels)?;
    Ok((cols, rows))
}

fn normalized_tile(atom: &[f64]) -> Vec<u8> {
    let lo = atom.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = atom.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    atom.iter()
        .map(|&v| {
            if span > 0.0 {
                ((v - lo) / span * 255.0).round() as u8
            } else {
                0
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_dictionary() -> LocalDictionary {
        let d = 9;
        let atoms: Vec<f64> = (0..5)
            .flat_map(|j| {
                let raw: Vec<f64> = (0..d).map(|i| ((i + j * 3) as f64).sin()).collect();
                let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
                raw.into_iter().map(move |v| v / norm).collect::<Vec<_>>()
            })
            .collect();
        LocalDictionary::new(3, 5, atoms).unwrap()
    }

    #[test]
    fn layout_and_separators() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("atoms.pgm");
        let dict = sample_dictionary();
        let (cols, rows) = write_atom_montage(&dict, &path).unwrap();
        assert_eq!((cols, rows), (3, 2));

        let (w, h, pixels) = pgm::load_pgm(&path).unwrap();
        assert_eq!((w, h), (3 * 3 + 2, 2 * 3 + 1));
        // Separator columns and rows are black.
        for y in 0..h {
            assert_eq!(pixels[y * w + 3], 0);
            assert_eq!(pixels[y * w + 7], 0);
        }
        for x in 0..w {
            assert_eq!(pixels[3 * w + x], 0);
        }
        // The unused sixth cell is black too.
        assert_eq!(pixels[4 * w + 8], 0);
    }

    #[test]
    fn tiles_match_atoms_after_normalization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("atoms.pgm");
        let dict = sample_dictionary();
        let (cols, _) = write_atom_montage(&dict, &path).unwrap();
        let (w, _, pixels) = pgm::load_pgm(&path).unwrap();

        let side = dict.filter_side();
        for j in 0..dict.atom_count() {
            let ox = (j % cols) * (side + 1);
            let oy = (j / cols) * (side + 1);
            let mut tile = Vec::with_capacity(side * side);
            for ty in 0..side {
                for tx in 0..side {
                    tile.push(pixels[(oy + ty) * w + ox + tx]);
                }
            }
            assert_eq!(tile, normalized_tile(dict.atom(j)));
        }
    }
}
