use super::FeatureMaps;
use crate::grid::reflect_index;

/// Augments `maps` with reflect-sampled copies taken at each pixel offset.
///
/// The output holds `channels * (1 + offsets.len())` channels per pixel:
/// block 0 is the input itself, block k >= 1 samples every channel at
/// `(x + dx_k, y + dy_k)` folded back into the image by mirror reflection.
pub fn build_context_features(maps: &FeatureMaps, offsets: &[(i32, i32)]) -> FeatureMaps {
    let c = maps.channels;
    let blocks = 1 + offsets.len();
    let mut out = FeatureMaps::zeros(maps.width, maps.height, c * blocks, maps.layer_index);
    for y in 0..maps.height {
        for x in 0..maps.width {
            let dst = out.code_at_mut(x, y);
            dst[..c].copy_from_slice(maps.code_at(x, y));
            for (k, &(dx, dy)) in offsets.iter().enumerate() {
                let sx = reflect_index(x as isize + dx as isize, maps.width);
                let sy = reflect_index(y as isize + dy as isize, maps.height);
                dst[(k + 1) * c..(k + 2) * c].copy_from_slice(maps.code_at(sx, sy));
            }
        }
    }
    out
}
