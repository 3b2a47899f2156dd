//! The layered model: every layer encodes its input with a learned local
//! dictionary, pools feature maps from earlier layers according to the
//! selected reuse strategy, augments them with offset context, compresses
//! the pool to a few channels, and scores each pixel with a boosted tree
//! ensemble. Layers are trained one after another; no gradients flow back.

mod reuse;

pub use reuse::{reuse_names, reuse_strategy, ReuseStrategy};

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::boosting::{fit_ensemble, EnsembleConfig, SampleSet, TreeEnsemble};
use crate::csc::{
    encode, fit_compressor, learn_dictionary, Compressor, FeatureMaps, LocalDictionary,
    SparseCodingConfig,
};
use crate::error::{Error, Result};
use crate::grid::{reflect_index, BinaryMask, Grid};
use crate::io::LoadedImage;
use crate::util::{derive_seed, seed_tags};

/// How color sources become layer-1 input grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColorMode {
    Luminance,
    PerChannel,
}

impl ColorMode {
    pub fn name(self) -> &'static str {
        match self {
            ColorMode::Luminance => "luminance",
            ColorMode::PerChannel => "per_channel",
        }
    }

    pub fn from_name(name: &str) -> Result<ColorMode> {
        match name {
            "luminance" => Ok(ColorMode::Luminance),
            "per_channel" => Ok(ColorMode::PerChannel),
            other => Err(Error::invalid_argument(format!(
                "unknown color mode '{other}' (expected luminance or per_channel)"
            ))),
        }
    }
}

/// Eight compass directions at the given radii, radius-major.
pub fn compass_offsets(radii: &[i32]) -> Vec<(i32, i32)> {
    const DIRECTIONS: [(i32, i32); 8] = [
        (1, 0),
        (1, 1),
        (0, 1),
        (-1, 1),
        (-1, 0),
        (-1, -1),
        (0, -1),
        (1, -1),
    ];
    radii
        .iter()
        .flat_map(|&r| DIRECTIONS.iter().map(move |&(dx, dy)| (dx * r, dy * r)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub layer_count: usize,
    pub filter_sides: Vec<usize>,
    pub atom_counts: Vec<usize>,
    pub compressed_channels: Vec<usize>,
    pub context_offsets: Vec<(i32, i32)>,
    pub samples_per_layer: usize,
    pub ensemble: EnsembleConfig,
    pub sparse: SparseCodingConfig,
    pub threshold: f64,
    pub color_mode: ColorMode,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            layer_count: 4,
            filter_sides: vec![17, 29, 29, 29],
            atom_counts: vec![32; 4],
            compressed_channels: vec![16; 4],
            context_offsets: compass_offsets(&[2, 4, 8]),
            samples_per_layer: 50_000,
            ensemble: EnsembleConfig::default(),
            sparse: SparseCodingConfig::default(),
            threshold: 0.5,
            color_mode: ColorMode::Luminance,
            seed: 42,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layer_count == 0 {
            return Err(Error::invalid_argument("layer_count must be at least 1"));
        }
        for (name, list) in [
            ("filter_sides", self.filter_sides.len()),
            ("atom_counts", self.atom_counts.len()),
            ("compressed_channels", self.compressed_channels.len()),
        ] {
            if list != self.layer_count {
                return Err(Error::invalid_argument(format!(
                    "{name} has {list} entries for {} layers",
                    self.layer_count
                )));
            }
        }
        if self.filter_sides.iter().any(|&s| s == 0 || s % 2 == 0) {
            return Err(Error::invalid_argument(
                "filter sides must be odd and positive",
            ));
        }
        if self.atom_counts.iter().any(|&c| c == 0) {
            return Err(Error::invalid_argument("atom counts must be positive"));
        }
        if self.compressed_channels.iter().any(|&c| c == 0) {
            return Err(Error::invalid_argument(
                "compressed channel counts must be positive",
            ));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::invalid_argument(
                "threshold must lie strictly between 0 and 1",
            ));
        }
        if self.samples_per_layer < 2 {
            return Err(Error::invalid_argument(
                "samples_per_layer must be at least 2",
            ));
        }
        self.ensemble.validate()?;
        self.sparse.validate()
    }

    pub fn max_filter_side(&self) -> usize {
        self.filter_sides.iter().copied().max().unwrap_or(1)
    }

    /// Channel count of the carry entry produced by layer `layer` (1-based):
    /// the first layer encodes every input plane, later layers encode the
    /// single score map.
    fn carry_channels(&self, input_planes: usize, layer: usize) -> usize {
        let c = self.atom_counts[layer - 1];
        if layer == 1 {
            input_planes * c
        } else {
            c
        }
    }

    /// Width of the context-augmented feature pool feeding layer `layer`'s
    /// compressor under the given strategy.
    pub fn pooled_width(
        &self,
        strategy: &dyn ReuseStrategy,
        input_planes: usize,
        layer: usize,
    ) -> usize {
        let base: usize = strategy
            .selected_layers(layer)
            .iter()
            .map(|&k| self.carry_channels(input_planes, k))
            .sum();
        base * (1 + self.context_offsets.len())
    }
}

/// One trained stage: dictionary, feature compressor, the affine rescale that
/// maps this layer's training scores onto [0,1] for the next dictionary, and
/// the scoring ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    index: usize,
    dictionary: LocalDictionary,
    compressor: Compressor,
    rescale: (f64, f64),
    ensemble: TreeEnsemble,
}

impl Layer {
    pub fn new(
        index: usize,
        dictionary: LocalDictionary,
        compressor: Compressor,
        rescale: (f64, f64),
        ensemble: TreeEnsemble,
        pooled_width: usize,
    ) -> Result<Self> {
        if index == 0 {
            return Err(Error::invalid_argument("layer indices start at 1"));
        }
        if compressor.in_channels() != pooled_width {
            return Err(Error::invalid_argument(format!(
                "layer {index} compressor expects {} input channels but the pool is {pooled_width} wide",
                compressor.in_channels()
            )));
        }
        if pooled_width <= dictionary.atom_count() {
            return Err(Error::invalid_argument(format!(
                "layer {index} pool width {pooled_width} does not exceed its atom count {}",
                dictionary.atom_count()
            )));
        }
        if let Some(max_feature) = ensemble.max_feature_index() {
            if max_feature >= compressor.out_channels() {
                return Err(Error::invalid_argument(format!(
                    "layer {index} ensemble splits on feature {max_feature} but only {} channels exist",
                    compressor.out_channels()
                )));
            }
        }
        if !(rescale.0.is_finite() && rescale.1.is_finite() && rescale.1 >= 0.0) {
            return Err(Error::invalid_argument(
                "score rescale must be finite with non-negative span",
            ));
        }
        Ok(Layer {
            index,
            dictionary,
            compressor,
            rescale,
            ensemble,
        })
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn dictionary(&self) -> &LocalDictionary {
        &self.dictionary
    }

    pub fn compressor(&self) -> &Compressor {
        &self.compressor
    }

    pub fn rescale(&self) -> (f64, f64) {
        self.rescale
    }

    pub fn ensemble(&self) -> &TreeEnsemble {
        &self.ensemble
    }

    /// Clamped affine map of a raw score into [0,1] using the training
    /// batch's range; a constant training batch maps everything to 0.
    pub fn rescale_score(&self, v: f64) -> f64 {
        let (lo, span) = self.rescale;
        if span > 0.0 {
            ((v - lo) / span).clamp(0.0, 1.0)
        } else {
            0.0
        }
    }

    fn rescaled_grid(&self, scores: &Grid) -> Grid {
        Grid::from_fn(scores.width(), scores.height(), |x, y| {
            self.rescale_score(scores.get(x, y))
        })
    }
}

pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ScD2TEModel {
    config: ModelConfig,
    reuse_mode: String,
    input_planes: usize,
    layers: Vec<Layer>,
    format_version: u16,
}

impl ScD2TEModel {
    pub fn from_parts(
        config: ModelConfig,
        reuse_mode: String,
        input_planes: usize,
        layers: Vec<Layer>,
    ) -> Result<Self> {
        config.validate()?;
        let strategy = reuse_strategy(&reuse_mode)?;
        if input_planes == 0 {
            return Err(Error::invalid_argument("input plane count must be positive"));
        }
        if layers.len() != config.layer_count {
            return Err(Error::invalid_argument(format!(
                "model has {} layers but the config declares {}",
                layers.len(),
                config.layer_count
            )));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.index != i + 1 {
                return Err(Error::invalid_argument(format!(
                    "layer at position {i} carries index {}",
                    layer.index
                )));
            }
            let expected = config.pooled_width(strategy, input_planes, i + 1);
            if layer.compressor.in_channels() != expected {
                return Err(Error::invalid_argument(format!(
                    "layer {} compressor width {} does not match the pool width {expected}",
                    layer.index,
                    layer.compressor.in_channels()
                )));
            }
        }
        Ok(ScD2TEModel {
            config,
            reuse_mode,
            input_planes,
            layers,
            format_version: FORMAT_VERSION,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn reuse_mode(&self) -> &str {
        &self.reuse_mode
    }

    pub fn input_planes(&self) -> usize {
        self.input_planes
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn format_version(&self) -> u16 {
        self.format_version
    }
}

/// Layer-1 input grids for one image under the model's color mode.
fn input_planes_for(image: &LoadedImage, mode: ColorMode) -> Vec<Grid> {
    match mode {
        ColorMode::Luminance => vec![image.luminance()],
        ColorMode::PerChannel => image.planes().to_vec(),
    }
}

/// Gather one pixel's context-augmented feature vector from the selected
/// maps: first every channel in place, then every channel at each offset,
/// mirror-folded at the borders. Must stay in lockstep with
/// `build_context_features` over the concatenation of `parts`.
fn gather_pooled_row(
    parts: &[&FeatureMaps],
    offsets: &[(i32, i32)],
    x: usize,
    y: usize,
    out: &mut Vec<f64>,
) {
    out.clear();
    for part in parts {
        out.extend_from_slice(part.code_at(x, y));
    }
    let (w, h) = (parts[0].width, parts[0].height);
    for &(dx, dy) in offsets {
        let sx = reflect_index(x as isize + dx as isize, w);
        let sy = reflect_index(y as isize + dy as isize, h);
        for part in parts {
            out.extend_from_slice(part.code_at(sx, sy));
        }
    }
}

/// Context-augment and compress the selected feature maps in one pass,
/// without materializing the augmented pool. Produces exactly the same
/// values as `build_context_features` on the concatenation followed by
/// `apply_compressor`.
pub fn project_pooled(
    parts: &[&FeatureMaps],
    offsets: &[(i32, i32)],
    compressor: &Compressor,
) -> Result<FeatureMaps> {
    let first = parts
        .first()
        .ok_or_else(|| Error::invalid_argument("feature pool needs at least one map"))?;
    if parts.iter().any(|p| p.width != first.width || p.height != first.height) {
        return Err(Error::invalid_argument("pooled maps differ in geometry"));
    }
    let base: usize = parts.iter().map(|p| p.channels).sum();
    let pooled = base * (1 + offsets.len());
    if pooled != compressor.in_channels() {
        return Err(Error::invalid_argument(format!(
            "pool is {pooled} channels wide but the compressor expects {}",
            compressor.in_channels()
        )));
    }

    let (w, h) = (first.width, first.height);
    let out_channels = compressor.out_channels();
    let mut out = FeatureMaps::zeros(w, h, out_channels, parts.last().unwrap().layer_index);
    out.codes
        .par_chunks_mut(out_channels * w)
        .enumerate()
        .for_each(|(y, row)| {
            let mut gathered = Vec::with_capacity(pooled);
            for x in 0..w {
                gather_pooled_row(parts, offsets, x, y, &mut gathered);
                compressor.project_row(&gathered, &mut row[x * out_channels..(x + 1) * out_channels]);
            }
        });
    Ok(out)
}

fn predict_scores(layer: &Layer, compressed: &FeatureMaps) -> Grid {
    let c = compressed.channels;
    let mut scores = Grid::zeros(compressed.width, compressed.height);
    scores
        .values_mut()
        .par_chunks_mut(compressed.width)
        .enumerate()
        .for_each(|(y, row)| {
            for (x, cell) in row.iter_mut().enumerate() {
                let at = (y * compressed.width + x) * c;
                *cell = layer
                    .ensemble
                    .predict_row_unchecked(&compressed.codes[at..at + c]);
            }
        });
    scores
}

fn advance_layer(
    layer: &Layer,
    strategy: &dyn ReuseStrategy,
    sparse: &SparseCodingConfig,
    offsets: &[(i32, i32)],
    inputs: &[Grid],
    carry: &mut Vec<FeatureMaps>,
) -> Result<Grid> {
    let encoded: Vec<FeatureMaps> = inputs
        .iter()
        .map(|grid| encode(grid, &layer.dictionary, sparse))
        .collect::<Result<_>>()?;
    let mut maps = if encoded.len() == 1 {
        encoded.into_iter().next().unwrap()
    } else {
        FeatureMaps::concat(&encoded.iter().collect::<Vec<_>>())?
    };
    maps.layer_index = layer.index;
    carry.push(maps);

    let selected = strategy.selected_layers(layer.index);
    let parts: Vec<&FeatureMaps> = selected.iter().map(|&k| &carry[k - 1]).collect();
    let compressed = project_pooled(&parts, offsets, &layer.compressor)?;
    Ok(predict_scores(layer, &compressed))
}

/// Run one layer forward: encode `inputs` with its dictionary, extend the
/// carry, pool, compress, and score. `inputs` is the set of color planes for
/// layer 1 and the single rescaled score map of the previous layer afterward.
pub fn forward_layer(
    model: &ScD2TEModel,
    layer_index: usize,
    inputs: &[Grid],
    carry: &mut Vec<FeatureMaps>,
) -> Result<Grid> {
    if layer_index == 0 || layer_index > model.layers.len() {
        return Err(Error::invalid_argument(format!(
            "layer index {layer_index} outside 1..={}",
            model.layers.len()
        )));
    }
    if carry.len() != layer_index - 1 {
        return Err(Error::invalid_state(format!(
            "carry holds {} feature maps entering layer {layer_index}, expected {}",
            carry.len(),
            layer_index - 1
        )));
    }
    let expected_inputs = if layer_index == 1 {
        model.input_planes
    } else {
        1
    };
    if inputs.len() != expected_inputs {
        return Err(Error::invalid_argument(format!(
            "layer {layer_index} takes {expected_inputs} input grid(s), got {}",
            inputs.len()
        )));
    }
    let strategy = reuse_strategy(&model.reuse_mode)?;
    advance_layer(
        &model.layers[layer_index - 1],
        strategy,
        &model.config.sparse,
        &model.config.context_offsets,
        inputs,
        carry,
    )
}

/// Score an image with the full layer stack and threshold the final map.
pub fn predict_image(model: &ScD2TEModel, image: &LoadedImage) -> Result<(Grid, BinaryMask)> {
    let planes = input_planes_for(image, model.config.color_mode);
    if planes.len() != model.input_planes {
        return Err(Error::invalid_argument(format!(
            "model was trained on {} input plane(s), image provides {}",
            model.input_planes,
            planes.len()
        )));
    }
    let side = model.config.max_filter_side();
    if image.width() < side || image.height() < side {
        return Err(Error::invalid_argument(format!(
            "image {}x{} is smaller than the largest filter side {side}",
            image.width(),
            image.height()
        )));
    }

    let mut carry = Vec::with_capacity(model.layers.len());
    let mut inputs = planes;
    let mut scores = Grid::zeros(image.width(), image.height());
    for layer_index in 1..=model.layers.len() {
        scores = forward_layer(model, layer_index, &inputs, &mut carry)?;
        if layer_index < model.layers.len() {
            inputs = vec![model.layers[layer_index - 1].rescaled_grid(&scores)];
        }
    }
    let threshold = model.config.threshold;
    let mask = BinaryMask::from_fn(scores.width(), scores.height(), |x, y| {
        scores.get(x, y) >= threshold
    });
    Ok((scores, mask))
}

/// Per-layer training record: wall-clock seconds and the evaluation F1 after
/// the layer finished.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStats {
    pub layer: usize,
    pub seconds: f64,
    pub f1: f64,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub model: ScD2TEModel,
    pub stats: Vec<LayerStats>,
    pub warnings: Vec<String>,
}

/// Train with dense feature reuse; layer F1 in the stats is measured on the
/// training set itself.
pub fn train(dataset: &[(LoadedImage, BinaryMask)], cfg: &ModelConfig) -> Result<TrainOutcome> {
    train_ablation(dataset, &[], cfg, "dense")
}

/// Train under any reuse mode, reporting per-layer F1 on `heldout` (or on
/// the training set when `heldout` is empty).
pub fn train_ablation(
    dataset: &[(LoadedImage, BinaryMask)],
    heldout: &[(LoadedImage, BinaryMask)],
    cfg: &ModelConfig,
    reuse_mode: &str,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let strategy = reuse_strategy(reuse_mode)?;
    if dataset.is_empty() {
        return Err(Error::invalid_argument("training dataset is empty"));
    }

    let side = cfg.max_filter_side();
    for (image, mask) in dataset.iter().chain(heldout) {
        if image.width() != mask.width() || image.height() != mask.height() {
            return Err(Error::invalid_argument(format!(
                "image {}x{} paired with mask {}x{}",
                image.width(),
                image.height(),
                mask.width(),
                mask.height()
            )));
        }
        if image.width() < side || image.height() < side {
            return Err(Error::invalid_argument(format!(
                "image {}x{} is smaller than the largest filter side {side}",
                image.width(),
                image.height()
            )));
        }
    }

    let mut inputs: Vec<Vec<Grid>> = dataset
        .iter()
        .map(|(img, _)| input_planes_for(img, cfg.color_mode))
        .collect();
    let input_planes = inputs[0].len();
    if inputs.iter().any(|p| p.len() != input_planes) {
        return Err(Error::invalid_argument(
            "training images disagree on plane count",
        ));
    }
    let targets: Vec<&BinaryMask> = dataset.iter().map(|(_, m)| m).collect();

    let mut held_inputs: Vec<Vec<Grid>> = heldout
        .iter()
        .map(|(img, _)| input_planes_for(img, cfg.color_mode))
        .collect();
    if held_inputs.iter().any(|p| p.len() != input_planes) {
        return Err(Error::invalid_argument(
            "held-out images disagree with training plane count",
        ));
    }
    let held_targets: Vec<&BinaryMask> = heldout.iter().map(|(_, m)| m).collect();

    let mut carries: Vec<Vec<FeatureMaps>> = vec![Vec::new(); dataset.len()];
    let mut held_carries: Vec<Vec<FeatureMaps>> = vec![Vec::new(); heldout.len()];
    let mut layers: Vec<Layer> = Vec::with_capacity(cfg.layer_count);
    let mut stats = Vec::with_capacity(cfg.layer_count);
    let mut warnings = Vec::new();

    for layer_index in 1..=cfg.layer_count {
        let start = Instant::now();
        let layer_seed = derive_seed(cfg.seed, seed_tags::LAYER, layer_index as u64);
        let mut sparse = cfg.sparse.clone();
        sparse.seed = layer_seed;
        let filter_side = cfg.filter_sides[layer_index - 1];

        // Dictionary learning on seeded crops of the layer's input grids:
        // the patch statistics are what matter, and crops keep the
        // per-epoch re-encoding affordable.
        let mut crop_rng =
            ChaCha8Rng::seed_from_u64(derive_seed(layer_seed, seed_tags::DICT_CROPS, 1));
        let flat_inputs: Vec<&Grid> = inputs.iter().flatten().collect();
        let dict_images = dictionary_crops(&flat_inputs, filter_side, &mut crop_rng);
        let learned = learn_dictionary(
            &dict_images,
            cfg.atom_counts[layer_index - 1],
            filter_side,
            &sparse,
        )?;
        if learned.degenerate_input {
            warnings.push(format!(
                "layer {layer_index}: dictionary trained on nearly constant input"
            ));
        }
        let dictionary = learned.dictionary;

        // Encode every input grid and extend the carries.
        for (image_inputs, carry) in inputs.iter().zip(&mut carries) {
            push_encoded(image_inputs, &dictionary, &sparse, layer_index, carry)?;
        }

        let selected = strategy.selected_layers(layer_index);
        let pooled_width = cfg.pooled_width(strategy, input_planes, layer_index);

        // Fit the compressor on a seeded pixel sample across all images.
        let pool = compressor_pool(
            &carries,
            &selected,
            &cfg.context_offsets,
            pooled_width,
            layer_index,
            derive_seed(layer_seed, seed_tags::COMPRESSOR, 0),
        );
        let compressor = fit_compressor(&pool, cfg.compressed_channels[layer_index - 1])?;

        // Compress all maps, then fit the ensemble on a stratified sample.
        let compressed: Vec<FeatureMaps> = carries
            .iter()
            .map(|carry| {
                let parts: Vec<&FeatureMaps> = selected.iter().map(|&k| &carry[k - 1]).collect();
                project_pooled(&parts, &cfg.context_offsets, &compressor)
            })
            .collect::<Result<_>>()?;

        let samples = stratified_samples(
            &compressed,
            &targets,
            cfg.samples_per_layer,
            derive_seed(layer_seed, seed_tags::SAMPLER, 0),
        )?;
        let mut ens_cfg = cfg.ensemble.clone();
        ens_cfg.seed = derive_seed(layer_seed, seed_tags::ENSEMBLE, 0);
        let ensemble = fit_ensemble(&samples, &ens_cfg)?;

        let layer = Layer::new(
            layer_index,
            dictionary,
            compressor,
            (0.0, 0.0),
            ensemble,
            pooled_width,
        )?;

        // Score the training images and freeze the batch min-max rescale.
        let score_grids: Vec<Grid> = compressed
            .par_iter()
            .map(|maps| predict_scores(&layer, maps))
            .collect();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for grid in &score_grids {
            let (a, b) = grid.min_max().expect("score grids are non-empty");
            lo = lo.min(a);
            hi = hi.max(b);
        }
        let span = hi - lo;
        if span == 0.0 {
            warnings.push(format!("layer {layer_index}: constant score map"));
        }
        let layer = Layer { rescale: (lo, span), ..layer };

        // Advance the held-out images through the freshly trained layer.
        let eval_f1 = if heldout.is_empty() {
            pooled_f1(&score_grids, &targets, cfg.threshold)
        } else {
            let held_scores: Vec<Grid> = held_inputs
                .iter()
                .zip(&mut held_carries)
                .map(|(image_inputs, carry)| {
                    advance_layer(
                        &layer,
                        strategy,
                        &sparse,
                        &cfg.context_offsets,
                        image_inputs,
                        carry,
                    )
                })
                .collect::<Result<_>>()?;
            let f1 = pooled_f1(&held_scores, &held_targets, cfg.threshold);
            held_inputs = held_scores
                .iter()
                .map(|g| vec![layer.rescaled_grid(g)])
                .collect();
            f1
        };

        inputs = score_grids
            .iter()
            .map(|g| vec![layer.rescaled_grid(g)])
            .collect();
        layers.push(layer);
        stats.push(LayerStats {
            layer: layer_index,
            seconds: start.elapsed().as_secs_f64(),
            f1: eval_f1,
        });
    }

    let model = ScD2TEModel::from_parts(cfg.clone(), reuse_mode.to_string(), input_planes, layers)?;
    Ok(TrainOutcome {
        model,
        stats,
        warnings,
    })
}

fn push_encoded(
    image_inputs: &[Grid],
    dictionary: &LocalDictionary,
    sparse: &SparseCodingConfig,
    layer_index: usize,
    carry: &mut Vec<FeatureMaps>,
) -> Result<()> {
    let encoded: Vec<FeatureMaps> = image_inputs
        .iter()
        .map(|grid| encode(grid, dictionary, sparse))
        .collect::<Result<_>>()?;
    let mut maps = if encoded.len() == 1 {
        encoded.into_iter().next().unwrap()
    } else {
        FeatureMaps::concat(&encoded.iter().collect::<Vec<_>>())?
    };
    maps.layer_index = layer_index;
    carry.push(maps);
    Ok(())
}

const DICT_CROP_COUNT: usize = 24;
const DICT_CROP_FACTOR: usize = 6;

/// Random square crops used as the dictionary-learning corpus. The crop side
/// is a few filter widths so every crop still holds many patch positions.
fn dictionary_crops(grids: &[&Grid], filter_side: usize, rng: &mut ChaCha8Rng) -> Vec<Grid> {
    let min_w = grids.iter().map(|g| g.width()).min().unwrap();
    let min_h = grids.iter().map(|g| g.height()).min().unwrap();
    let side = (DICT_CROP_FACTOR * filter_side + 1).min(min_w).min(min_h);
    let mut crops = Vec::with_capacity(DICT_CROP_COUNT);
    for _ in 0..DICT_CROP_COUNT {
        let g = grids[rng.gen_range(0..grids.len())];
        let x0 = rng.gen_range(0..=g.width() - side);
        let y0 = rng.gen_range(0..=g.height() - side);
        crops.push(Grid::from_fn(side, side, |x, y| g.get(x0 + x, y0 + y)));
    }
    crops
}

const COMPRESSOR_FIT_SAMPLES: usize = 20_000;

/// Seeded sample of context-augmented pixel rows, stacked as an n-by-1 map,
/// for covariance estimation.
fn compressor_pool(
    carries: &[Vec<FeatureMaps>],
    selected: &[usize],
    offsets: &[(i32, i32)],
    pooled_width: usize,
    layer_index: usize,
    seed: u64,
) -> FeatureMaps {
    let per_image: Vec<usize> = carries.iter().map(|c| c[0].pixel_count()).collect();
    let total: usize = per_image.iter().sum();
    let take = COMPRESSOR_FIT_SAMPLES.min(total);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = sample_indices(total, take, &mut rng);

    let mut pool = FeatureMaps::zeros(take, 1, pooled_width, layer_index);
    let mut row = Vec::with_capacity(pooled_width);
    for (slot, &global) in picked.iter().enumerate() {
        let (img, pixel) = locate(&per_image, global);
        let carry = &carries[img];
        let parts: Vec<&FeatureMaps> = selected.iter().map(|&k| &carry[k - 1]).collect();
        let (w, _) = (parts[0].width, parts[0].height);
        gather_pooled_row(&parts, offsets, pixel % w, pixel / w, &mut row);
        pool.code_mut(slot).copy_from_slice(&row);
    }
    pool
}

/// `count` distinct indices from `0..total`, ascending, via partial
/// Fisher-Yates.
fn sample_indices(total: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..total).collect();
    for i in 0..count {
        let j = rng.gen_range(i..total);
        ids.swap(i, j);
    }
    ids.truncate(count);
    ids.sort_unstable();
    ids
}

fn locate(per_image: &[usize], mut global: usize) -> (usize, usize) {
    for (img, &count) in per_image.iter().enumerate() {
        if global < count {
            return (img, global);
        }
        global -= count;
    }
    unreachable!("global pixel index out of range")
}

/// Foreground/background-balanced pixel sample across all images: up to half
/// the budget from each class, backfilling from the other when one side runs
/// short.
fn stratified_samples(
    compressed: &[FeatureMaps],
    targets: &[&BinaryMask],
    budget: usize,
    seed: u64,
) -> Result<SampleSet> {
    let mut fg: Vec<(usize, usize)> = Vec::new();
    let mut bg: Vec<(usize, usize)> = Vec::new();
    for (img, mask) in targets.iter().enumerate() {
        for y in 0..mask.height() {
            for x in 0..mask.width() {
                let pixel = y * mask.width() + x;
                if mask.get(x, y) {
                    fg.push((img, pixel));
                } else {
                    bg.push((img, pixel));
                }
            }
        }
    }

    let total = fg.len() + bg.len();
    let budget = budget.min(total);
    let half = budget / 2;
    let take_fg = half.min(fg.len());
    let take_bg = (budget - take_fg).min(bg.len());
    let take_fg = (budget - take_bg).min(fg.len());

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(take_fg + take_bg);
    let mut labels = Vec::with_capacity(take_fg + take_bg);
    for (list, take, label) in [(&mut fg, take_fg, 1.0), (&mut bg, take_bg, 0.0)] {
        for i in 0..take {
            let j = rng.gen_range(i..list.len());
            list.swap(i, j);
        }
        list.truncate(take);
        list.sort_unstable();
        for &(img, pixel) in list.iter() {
            rows.push(compressed[img].code(pixel).to_vec());
            labels.push(label);
        }
    }
    SampleSet::from_rows(&rows, labels)
}

/// Micro-averaged F1: pooled intersection and mask sizes over the whole set.
fn pooled_f1(scores: &[Grid], truths: &[&BinaryMask], threshold: f64) -> f64 {
    let mut inter = 0usize;
    let mut pred = 0usize;
    let mut truth = 0usize;
    for (grid, mask) in scores.iter().zip(truths) {
        for y in 0..grid.height() {
            for x in 0..grid.width() {
                let p = grid.get(x, y) >= threshold;
                let r = mask.get(x, y);
                pred += usize::from(p);
                truth += usize::from(r);
                inter += usize::from(p && r);
            }
        }
    }
    if pred + truth == 0 {
        1.0
    } else {
        2.0 * inter as f64 / (pred + truth) as f64
    }
}
