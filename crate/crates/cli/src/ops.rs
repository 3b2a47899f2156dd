use std::fs;
use std::path::{Path, PathBuf};

use scd2te::boosting::TreeNode;
use scd2te::io::{
    load_image, load_manifest, load_mask, load_model, save_gray_pgm, save_mask_pgm, save_model,
    save_score_pgm, write_atom_montage, DatasetManifest, LoadedImage, ManifestEntry, SplitTag,
};
use scd2te::metrics::{abd, f1, jaccard, label_components, overlap, ImageScores, MetricsReport, TestGroup};
use scd2te::pipeline::{predict_image, reuse_names, train, train_ablation, ScD2TEModel};
use scd2te::synth::{synth_sample, SynthConfig};
use scd2te::{BinaryMask, Error, Grid, Result};

use crate::runconfig::{load_runconfig, RunConfig};

fn resolve_out(rc: &RunConfig, out: Option<PathBuf>, default_name: &str) -> PathBuf {
    out.unwrap_or_else(|| rc.output_dir.join(default_name))
}

fn effective_config(path: Option<&Path>, seed: Option<u64>) -> Result<RunConfig> {
    let mut rc = match path {
        Some(p) => load_runconfig(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = seed {
        rc.model.seed = seed;
    }
    rc.model.validate()?;
    Ok(rc)
}

fn load_pair(entry: &ManifestEntry) -> Result<(LoadedImage, BinaryMask)> {
    let image = load_image(&entry.image_path)?;
    let mask_path = entry.mask_path.as_ref().ok_or_else(|| {
        Error::invalid_argument(format!(
            "entry '{}' has no mask to score against",
            entry.image_path.display()
        ))
    })?;
    Ok((image, load_mask(mask_path)?))
}

fn load_split(manifest: &DatasetManifest, tag: SplitTag) -> Result<Vec<(LoadedImage, BinaryMask)>> {
    manifest.split(tag).map(load_pair).collect()
}

fn heldout_pairs(manifest: &DatasetManifest) -> Result<Vec<(LoadedImage, BinaryMask)>> {
    let mut pairs = load_split(manifest, SplitTag::Validation)?;
    if pairs.is_empty() {
        pairs = load_split(manifest, SplitTag::SameTest)?;
        pairs.extend(load_split(manifest, SplitTag::DifferentTest)?);
    }
    Ok(pairs)
}

pub fn cmd_train(
    manifest_path: &Path,
    config: Option<&Path>,
    out: Option<PathBuf>,
    log: Option<PathBuf>,
    seed: Option<u64>,
) -> Result<()> {
    let rc = effective_config(config, seed)?;
    let manifest = load_manifest(manifest_path)?;
    let pairs = load_split(&manifest, SplitTag::Train)?;
    if pairs.is_empty() {
        return Err(Error::invalid_argument("manifest has no train entries"));
    }

    let outcome = train(&pairs, &rc.model)?;
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }

    let out = resolve_out(&rc, out, "model.scd2te");
    save_model(&outcome.model, &out)?;

    let mut csv = String::from("layer,time_s,f1\n");
    for s in &outcome.stats {
        csv.push_str(&format!("{},{},{}\n", s.layer, s.seconds, s.f1));
        println!("layer {} trained in {:.2}s, training F1 {:.4}", s.layer, s.seconds, s.f1);
    }
    let log = log.unwrap_or_else(|| PathBuf::from(format!("{}.train.csv", out.display())));
    fs::write(&log, csv)?;
    println!("model written to {}", out.display());
    Ok(())
}

pub fn cmd_predict(
    model_path: &Path,
    image_path: &Path,
    out_score: &Path,
    out_mask: &Path,
    out_raw: Option<&Path>,
) -> Result<()> {
    let model = load_model(model_path)?;
    let image = load_image(image_path)?;
    let (scores, mask) = predict_image(&model, &image)?;
    save_score_pgm(out_score, &scores)?;
    save_mask_pgm(out_mask, &mask)?;
    if let Some(raw) = out_raw {
        fs::write(raw, raw_scores_bytes(&scores))?;
    }
    println!(
        "{} of {} pixels above threshold",
        mask.count_ones(),
        mask.width() * mask.height()
    );
    Ok(())
}

/// Raw score sidecar: width u32, height u32, then row-major f64 values, all
/// little-endian.
fn raw_scores_bytes(scores: &Grid) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(8 + scores.values().len() * 8);
    bytes.extend_from_slice(&(scores.width() as u32).to_le_bytes());
    bytes.extend_from_slice(&(scores.height() as u32).to_le_bytes());
    for v in scores.values() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes
}

/// Pixel and object scores for one prediction against its reference mask.
/// Twin empty masks count as a perfect match; ABD stays NaN when either mask
/// has no boundary to measure from.
pub fn score_pair(predicted: &BinaryMask, truth: &BinaryMask) -> Result<(f64, f64, f64, f64)> {
    if predicted.count_ones() == 0 && truth.count_ones() == 0 {
        return Ok((1.0, 1.0, 0.0, 1.0));
    }
    let ji = jaccard(predicted, truth)?;
    let f1 = f1(predicted, truth)?;
    let abd = abd(predicted, truth).unwrap_or(f64::NAN);
    let ov = overlap(&label_components(predicted), &label_components(truth))?;
    Ok((ji, f1, abd, ov))
}

pub fn cmd_evaluate(model_path: &Path, manifest_path: &Path, out: &Path) -> Result<()> {
    let model = load_model(model_path)?;
    let manifest = load_manifest(manifest_path)?;

    let mut rows = Vec::new();
    for entry in manifest.entries() {
        let group = match entry.split {
            SplitTag::SameTest => TestGroup::Same,
            SplitTag::DifferentTest => TestGroup::Different,
            _ => continue,
        };
        let (image, truth) = load_pair(entry)?;
        let (_, predicted) = predict_image(&model, &image)?;
        let (ji, f1, abd, ov) = score_pair(&predicted, &truth)?;
        rows.push(ImageScores {
            image: entry.image_path.display().to_string(),
            organ: entry.organ.clone(),
            group,
            ji,
            f1,
            abd,
            ov,
        });
    }
    if rows.is_empty() {
        return Err(Error::invalid_argument("manifest has no test entries"));
    }

    let report = MetricsReport::new(rows);
    fs::write(out, report.to_csv())?;
    if let Some(overall) = report.aggregate(None) {
        println!(
            "{} images: JI {:.4}, F1 {:.4}, OV {:.4}",
            report.rows().len(),
            overall.ji,
            overall.f1,
            overall.ov
        );
    }
    println!("report written to {}", out.display());
    Ok(())
}

pub fn cmd_ablate(
    manifest_path: &Path,
    config: Option<&Path>,
    out: Option<PathBuf>,
    seed: Option<u64>,
) -> Result<()> {
    let rc = effective_config(config, seed)?;
    let manifest = load_manifest(manifest_path)?;
    let pairs = load_split(&manifest, SplitTag::Train)?;
    if pairs.is_empty() {
        return Err(Error::invalid_argument("manifest has no train entries"));
    }
    let heldout = heldout_pairs(&manifest)?;

    let mut csv = String::from("mode,layer,time_s,f1\n");
    for mode in reuse_names() {
        let outcome = train_ablation(&pairs, &heldout, &rc.model, mode)?;
        for w in &outcome.warnings {
            eprintln!("warning: {mode}: {w}");
        }
        for s in &outcome.stats {
            csv.push_str(&format!("{mode},{},{},{}\n", s.layer, s.seconds, s.f1));
            println!("{mode} layer {}: {:.2}s, F1 {:.4}", s.layer, s.seconds, s.f1);
        }
    }
    let out = resolve_out(&rc, out, "trace.csv");
    fs::write(&out, csv)?;
    println!("trace written to {}", out.display());
    Ok(())
}

fn leaf_counts(model: &ScD2TEModel, layer: usize) -> (usize, f64, usize) {
    let trees = &model.layers()[layer].ensemble().trees;
    let mut min = usize::MAX;
    let mut max = 0usize;
    let mut total = 0usize;
    for tree in trees {
        let leaves = tree
            .nodes()
            .iter()
            .filter(|n| matches!(n, TreeNode::Leaf { .. }))
            .count();
        min = min.min(leaves);
        max = max.max(leaves);
        total += leaves;
    }
    if trees.is_empty() {
        (0, 0.0, 0)
    } else {
        (min, total as f64 / trees.len() as f64, max)
    }
}

pub fn cmd_inspect(model_path: &Path, out_dir: &Path) -> Result<()> {
    let model = load_model(model_path)?;
    fs::create_dir_all(out_dir)?;

    let mut summary = String::new();
    summary.push_str(&format!(
        "reuse mode: {}\ninput planes: {}\nthreshold: {}\n",
        model.reuse_mode(),
        model.input_planes(),
        model.config().threshold
    ));
    for (i, layer) in model.layers().iter().enumerate() {
        let montage = out_dir.join(format!("layer{}_atoms.pgm", layer.index()));
        let (cols, rows) = write_atom_montage(layer.dictionary(), &montage)?;
        let (min, mean, max) = leaf_counts(&model, i);
        let dict = layer.dictionary();
        summary.push_str(&format!(
            "layer {}: filters {1}x{1} x{2}, pool {3} -> {4} channels, \
             rescale ({5:.6}, {6:.6}), {7} trees ({8} mode), leaves min {min} mean {mean:.1} max {max}, \
             montage {cols}x{rows} tiles\n",
            layer.index(),
            dict.filter_side(),
            dict.atom_count(),
            layer.compressor().in_channels(),
            layer.compressor().out_channels(),
            layer.rescale().0,
            layer.rescale().1,
            layer.ensemble().trees.len(),
            layer.ensemble().mode.name(),
        ));
    }
    fs::write(out_dir.join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_synth(
    out_dir: &Path,
    train_count: usize,
    test_count: usize,
    width: usize,
    height: usize,
    nuclei: usize,
    clutter: usize,
    noise: f64,
    seed: Option<u64>,
) -> Result<()> {
    let cfg = SynthConfig {
        width,
        height,
        nucleus_count: nuclei,
        clutter_count: clutter,
        noise,
        seed: seed.unwrap_or(42),
    };
    fs::create_dir_all(out_dir)?;

    let mut manifest = String::new();
    for i in 0..train_count + test_count {
        let (image, mask) = synth_sample(&cfg, i as u64)?;
        let (split, stem) = if i < train_count {
            ("train", format!("train_{i:03}"))
        } else {
            ("same_test", format!("test_{:03}", i - train_count))
        };
        let image_name = format!("{stem}.pgm");
        let mask_name = format!("{stem}_mask.pgm");
        save_gray_pgm(&out_dir.join(&image_name), &image.planes()[0])?;
        save_mask_pgm(&out_dir.join(&mask_name), &mask)?;
        manifest.push_str(&format!("{split},synthetic,{image_name},{mask_name}\n"));
    }
    let manifest_path = out_dir.join("manifest.csv");
    fs::write(&manifest_path, manifest)?;
    println!(
        "{} train + {} test scenes written under {}",
        train_count,
        test_count,
        out_dir.display()
    );
    Ok(())
}
