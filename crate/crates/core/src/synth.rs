//! Synthetic microscopy-style scenes for tests and demos: bright elliptical
//! nuclei on a darker textured background, plus thin bright strokes whose
//! local texture matches the nuclei. The strokes are only separable from
//! nuclei by shape at a scale larger than a small patch, which is exactly
//! the regime where stacking layers pays off.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::grid::{BinaryMask, Grid};
use crate::io::LoadedImage;
use crate::util::{derive_seed, seed_tags};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub width: usize,
    pub height: usize,
    pub nucleus_count: usize,
    pub clutter_count: usize,
    /// Amplitude of the per-pixel texture noise shared by every structure.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            width: 200,
            height: 200,
            nucleus_count: 34,
            clutter_count: 26,
            noise: 0.06,
            seed: 42,
        }
    }
}

struct Ellipse {
    cx: f64,
    cy: f64,
    a: f64,
    b: f64,
    cos: f64,
    sin: f64,
    brightness: f64,
}

impl Ellipse {
    fn contains(&self, x: f64, y: f64) -> bool {
        let dx = x - self.cx;
        let dy = y - self.cy;
        let u = self.cos * dx + self.sin * dy;
        let v = -self.sin * dx + self.cos * dy;
        (u / self.a).powi(2) + (v / self.b).powi(2) <= 1.0
    }
}

struct Stroke {
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
    brightness: f64,
}

impl Stroke {
    /// Squared distance from a point to the segment.
    fn distance_sq(&self, x: f64, y: f64) -> f64 {
        let vx = self.x1 - self.x0;
        let vy = self.y1 - self.y0;
        let wx = x - self.x0;
        let wy = y - self.y0;
        let len_sq = vx * vx + vy * vy;
        let t = if len_sq > 0.0 {
            ((wx * vx + wy * vy) / len_sq).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let px = self.x0 + t * vx - x;
        let py = self.y0 + t * vy - y;
        px * px + py * py
    }
}

const BG_BASE: f64 = 0.32;
const FG_BASE: f64 = 0.68;
const BRIGHTNESS_JITTER: f64 = 0.05;
const AXIS_MAX: f64 = 13.0;
const AXIS_MIN: f64 = 8.0;
const STROKE_HALF_WIDTH: f64 = 1.0;
/// Amplitude and lattice stride of the chromatin-like speckle inside nuclei
/// and strokes.
const CHROMATIN_AMP: f64 = 0.12;
const CHROMATIN_STRIDE: usize = 3;
/// Amplitude and stride of the smooth fibrous background texture. Both
/// classes are textured everywhere; they differ in level, amplitude and
/// grain, which is what local sparse codes can actually pick up.
const FIBER_AMP: f64 = 0.05;
const FIBER_STRIDE: usize = 6;

/// Smooth value noise: random lattice values, bilinearly interpolated.
struct ValueNoise {
    cols: usize,
    stride: usize,
    values: Vec<f64>,
}

impl ValueNoise {
    fn new(width: usize, height: usize, stride: usize, rng: &mut ChaCha8Rng) -> Self {
        let cols = width / stride + 2;
        let rows = height / stride + 2;
        let values = (0..cols * rows).map(|_| rng.gen_range(-1.0..1.0)).collect();
        ValueNoise {
            cols,
            stride,
            values,
        }
    }

    fn at(&self, x: usize, y: usize) -> f64 {
        let fx = x as f64 / self.stride as f64;
        let fy = y as f64 / self.stride as f64;
        let (ix, iy) = (fx.floor() as usize, fy.floor() as usize);
        let (tx, ty) = (fx - ix as f64, fy - iy as f64);
        let v = |gx: usize, gy: usize| self.values[gy * self.cols + gx];
        let top = v(ix, iy) * (1.0 - tx) + v(ix + 1, iy) * tx;
        let bottom = v(ix, iy + 1) * (1.0 - tx) + v(ix + 1, iy + 1) * tx;
        top * (1.0 - ty) + bottom * ty
    }
}

/// One scene: a single-plane image and the nucleus mask. Nuclei never touch
/// the border or each other, so connected components equal nuclei one for
/// one. The strokes stay outside every nucleus and are labeled background.
pub fn synth_sample(cfg: &SynthConfig, index: u64) -> Result<(LoadedImage, BinaryMask)> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, seed_tags::SYNTH, index));
    let (w, h) = (cfg.width as f64, cfg.height as f64);

    let mut nuclei: Vec<Ellipse> = Vec::with_capacity(cfg.nucleus_count);
    let mut attempts = 0;
    while nuclei.len() < cfg.nucleus_count && attempts < 60_000 {
        attempts += 1;
        let a = rng.gen_range(AXIS_MIN..AXIS_MAX);
        let b = rng.gen_range(AXIS_MIN * 0.75..a);
        let margin = a + 3.0;
        let cx = rng.gen_range(margin..w - margin);
        let cy = rng.gen_range(margin..h - margin);
        // Separation by the two semi-major axes keeps components one per
        // nucleus while still allowing dense fields.
        if nuclei
            .iter()
            .any(|e| (e.cx - cx).hypot(e.cy - cy) < e.a + a + 2.0)
        {
            continue;
        }
        let theta = rng.gen_range(0.0..std::f64::consts::PI);
        nuclei.push(Ellipse {
            cx,
            cy,
            a,
            b,
            cos: theta.cos(),
            sin: theta.sin(),
            brightness: FG_BASE + rng.gen_range(-BRIGHTNESS_JITTER..BRIGHTNESS_JITTER),
        });
    }

    let mask = BinaryMask::from_fn(cfg.width, cfg.height, |x, y| {
        let (xf, yf) = (x as f64, y as f64);
        nuclei.iter().any(|e| e.contains(xf, yf))
    });

    let mut strokes: Vec<Stroke> = Vec::with_capacity(cfg.clutter_count);
    attempts = 0;
    while strokes.len() < cfg.clutter_count && attempts < 20_000 {
        attempts += 1;
        let x0 = rng.gen_range(3.0..w - 3.0);
        let y0 = rng.gen_range(3.0..h - 3.0);
        let len = rng.gen_range(14.0..26.0);
        let dir = rng.gen_range(0.0..std::f64::consts::TAU);
        let x1 = (x0 + len * dir.cos()).clamp(3.0, w - 3.0);
        let y1 = (y0 + len * dir.sin()).clamp(3.0, h - 3.0);
        // Keep strokes clear of nuclei so the labels stay unambiguous.
        let steps = len.ceil() as usize + 1;
        let crosses = (0..=steps).any(|s| {
            let t = s as f64 / steps as f64;
            let px = x0 + t * (x1 - x0);
            let py = y0 + t * (y1 - y0);
            nuclei
                .iter()
                .any(|e| e.contains(px, py) || (e.cx - px).hypot(e.cy - py) < e.a + 3.0)
        });
        if crosses {
            continue;
        }
        strokes.push(Stroke {
            x0,
            y0,
            x1,
            y1,
            brightness: FG_BASE + rng.gen_range(-BRIGHTNESS_JITTER..BRIGHTNESS_JITTER),
        });
    }

    // Gentle illumination drift so the background is not one flat level.
    let phase_x = rng.gen_range(0.0..std::f64::consts::TAU);
    let phase_y = rng.gen_range(0.0..std::f64::consts::TAU);
    let chromatin = ValueNoise::new(cfg.width, cfg.height, CHROMATIN_STRIDE, &mut rng);
    let fibers = ValueNoise::new(cfg.width, cfg.height, FIBER_STRIDE, &mut rng);

    let mut image = Grid::zeros(cfg.width, cfg.height);
    for y in 0..cfg.height {
        for x in 0..cfg.width {
            let (xf, yf) = (x as f64, y as f64);
            let mut level = BG_BASE;
            let mut structured = false;
            if let Some(e) = nuclei.iter().find(|e| e.contains(xf, yf)) {
                level = e.brightness;
                structured = true;
            } else if let Some(s) = strokes
                .iter()
                .find(|s| s.distance_sq(xf, yf) <= STROKE_HALF_WIDTH * STROKE_HALF_WIDTH)
            {
                level = s.brightness;
                structured = true;
            }
            level += if structured {
                CHROMATIN_AMP * chromatin.at(x, y)
            } else {
                FIBER_AMP * fibers.at(x, y)
            };
            level += 0.03
                * ((xf / w * std::f64::consts::TAU + phase_x).sin()
                    + (yf / h * std::f64::consts::TAU + phase_y).sin())
                / 2.0;
            level += rng.gen_range(-cfg.noise..cfg.noise);
            image.set(x, y, level.clamp(0.0, 1.0));
        }
    }

    Ok((LoadedImage::from_planes(vec![image])?, mask))
}

/// A batch of scenes with per-scene derived seeds; `first_index` lets
/// callers carve disjoint train and test ranges out of one seed.
pub fn synth_corpus(
    cfg: &SynthConfig,
    count: usize,
    first_index: u64,
) -> Result<Vec<(LoadedImage, BinaryMask)>> {
    (0..count)
        .map(|i| synth_sample(cfg, first_index + i as u64))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::label_components;

    #[test]
    fn scene_geometry_and_determinism() {
        let cfg = SynthConfig::default();
        let (image, mask) = synth_sample(&cfg, 0).unwrap();
        assert_eq!(image.width(), 200);
        assert_eq!(image.height(), 200);
        assert_eq!(image.planes().len(), 1);
        assert_eq!(mask.width(), 200);

        let (again, mask_again) = synth_sample(&cfg, 0).unwrap();
        assert_eq!(image.planes()[0].values(), again.planes()[0].values());
        assert_eq!(mask.count_ones(), mask_again.count_ones());

        let (other, _) = synth_sample(&cfg, 1).unwrap();
        assert_ne!(image.planes()[0].values(), other.planes()[0].values());
    }

    #[test]
    fn components_match_nucleus_count() {
        let cfg = SynthConfig::default();
        for index in 0..4 {
            let (_, mask) = synth_sample(&cfg, index).unwrap();
            let components = label_components(&mask);
            assert_eq!(components.count(), cfg.nucleus_count);
            for size in components.sizes() {
                assert!(size > 100, "nucleus of only {size} pixels");
            }
        }
    }

    #[test]
    fn nuclei_brighter_than_background() {
        let cfg = SynthConfig::default();
        let (image, mask) = synth_sample(&cfg, 2).unwrap();
        let plane = &image.planes()[0];
        let mut fg = (0.0, 0usize);
        let mut bg = (0.0, 0usize);
        for y in 0..mask.height() {
            for x in 0..mask.width() {
                let v = plane.get(x, y);
                if mask.get(x, y) {
                    fg = (fg.0 + v, fg.1 + 1);
                } else {
                    bg = (bg.0 + v, bg.1 + 1);
                }
            }
        }
        let fg_mean = fg.0 / fg.1 as f64;
        let bg_mean = bg.0 / bg.1 as f64;
        assert!(fg_mean > bg_mean + 0.2, "fg {fg_mean:.3} vs bg {bg_mean:.3}");
    }

    #[test]
    fn clutter_shares_intensity_with_nuclei() {
        let cfg = SynthConfig::default();
        let (image, mask) = synth_sample(&cfg, 3).unwrap();
        let plane = &image.planes()[0];
        // Bright background pixels exist (the strokes), and their mean level
        // sits in the nucleus range rather than between classes.
        let mut bright_bg = Vec::new();
        for y in 0..mask.height() {
            for x in 0..mask.width() {
                if !mask.get(x, y) && plane.get(x, y) > 0.55 {
                    bright_bg.push(plane.get(x, y));
                }
            }
        }
        assert!(
            bright_bg.len() > 300,
            "only {} bright background pixels",
            bright_bg.len()
        );
        let mean = bright_bg.iter().sum::<f64>() / bright_bg.len() as f64;
        assert!(mean > 0.6, "bright clutter mean {mean:.3}");
    }

    #[test]
    fn corpus_respects_index_ranges() {
        let cfg = SynthConfig::default();
        let head = synth_corpus(&cfg, 2, 0).unwrap();
        let tail = synth_corpus(&cfg, 1, 1).unwrap();
        assert_eq!(
            head[1].0.planes()[0].values(),
            tail[0].0.planes()[0].values()
        );
    }
}
