//! Versioned binary model files. Layout: 6-byte magic `SCD2TE`, u16 version,
//! u32 block count, then length-prefixed named blocks each followed by a
//! CRC-32 of its payload. Counts are u32, floats are IEEE-754 f64, everything
//! little-endian, so files are identical across platforms. Trees are stored
//! in preorder, which also canonicalizes node numbering.

use std::fs;
use std::path::Path;

use super::crc::crc32;
use crate::boosting::{DecisionTree, EnsembleConfig, TreeEnsemble, TreeNode, VoteMode};
use crate::csc::{Compressor, LocalDictionary, SparseCodingConfig};
use crate::error::{Error, Result};
use crate::pipeline::{reuse_strategy, ColorMode, Layer, ModelConfig, ScD2TEModel};

const MAGIC: &[u8; 6] = b"SCD2TE";
const VERSION: u16 = 1;

fn integrity(block: &str, reason: impl Into<String>) -> Error {
    Error::Integrity {
        block: block.to_string(),
        reason: reason.into(),
    }
}

fn count_u32(block: &str, name: &str, value: usize) -> Result<u32> {
    u32::try_from(value).map_err(|_| integrity(block, format!("{name} {value} exceeds u32")))
}

#[derive(Default)]
struct Enc {
    buf: Vec<u8>,
}

impl Enc {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn i32(&mut self, v: i32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
    }
}

struct Dec<'a> {
    data: &'a [u8],
    at: usize,
    block: &'a str,
}

impl<'a> Dec<'a> {
    fn new(data: &'a [u8], block: &'a str) -> Self {
        Dec { data, at: 0, block }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.at + n > self.data.len() {
            return Err(integrity(self.block, "payload truncated"));
        }
        let slice = &self.data[self.at..self.at + n];
        self.at += n;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn usize32(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }

    fn str(&mut self) -> Result<String> {
        let n = self.usize32()?;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| integrity(self.block, "string is not UTF-8"))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n * 8)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn finish(self) -> Result<()> {
        if self.at != self.data.len() {
            return Err(integrity(self.block, "trailing bytes in payload"));
        }
        Ok(())
    }
}

fn write_block(out: &mut Vec<u8>, name: &str, payload: &[u8]) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(payload);
    out.extend_from_slice(&crc32(payload).to_le_bytes());
}

fn encode_config(model: &ScD2TEModel) -> Result<Vec<u8>> {
    const B: &str = "config";
    let cfg = model.config();
    let mut e = Enc::default();
    e.u32(count_u32(B, "layer_count", cfg.layer_count)?);
    for &side in &cfg.filter_sides {
        e.u32(count_u32(B, "filter side", side)?);
    }
    for &c in &cfg.atom_counts {
        e.u32(count_u32(B, "atom count", c)?);
    }
    for &c in &cfg.compressed_channels {
        e.u32(count_u32(B, "compressed channels", c)?);
    }
    e.u32(count_u32(B, "offset count", cfg.context_offsets.len())?);
    for &(dx, dy) in &cfg.context_offsets {
        e.i32(dx);
        e.i32(dy);
    }
    e.u32(count_u32(B, "samples_per_layer", cfg.samples_per_layer)?);
    e.f64(cfg.threshold);
    e.str(cfg.color_mode.name());
    e.u64(cfg.seed);

    let s = &cfg.sparse;
    e.f64(s.lambda);
    e.u32(count_u32(B, "max_inner_iters", s.max_inner_iters)?);
    e.f64(s.tol);
    e.f64(s.sparsity_ceiling);
    e.u32(count_u32(B, "dict_epochs", s.dict_epochs)?);
    e.u32(count_u32(B, "patches_per_epoch", s.patches_per_epoch)?);
    e.f64(s.step_size);
    e.u64(s.seed);

    let b = &cfg.ensemble;
    e.u32(count_u32(B, "tree_count", b.tree_count)?);
    e.f64(b.xi);
    e.f64(b.zeta);
    e.u32(count_u32(B, "max_depth", b.max_depth)?);
    e.f64(b.subsample_ratio);
    e.u32(count_u32(B, "min_samples_leaf", b.min_samples_leaf)?);
    e.str(b.mode.name());
    e.u64(b.seed);

    e.str(model.reuse_mode());
    e.u32(count_u32(B, "input_planes", model.input_planes())?);
    Ok(e.buf)
}

fn decode_config(payload: &[u8]) -> Result<(ModelConfig, String, usize)> {
    let mut d = Dec::new(payload, "config");
    let layer_count = d.usize32()?;
    let counts = |d: &mut Dec| -> Result<Vec<usize>> {
        (0..layer_count).map(|_| d.usize32()).collect()
    };
    let filter_sides = counts(&mut d)?;
    let atom_counts = counts(&mut d)?;
    let compressed_channels = counts(&mut d)?;
    let offset_count = d.usize32()?;
    let mut context_offsets = Vec::with_capacity(offset_count);
    for _ in 0..offset_count {
        let dx = d.i32()?;
        let dy = d.i32()?;
        context_offsets.push((dx, dy));
    }
    let samples_per_layer = d.usize32()?;
    let threshold = d.f64()?;
    let color_mode = ColorMode::from_name(&d.str()?)
        .map_err(|e| integrity("config", e.to_string()))?;
    let seed = d.u64()?;

    let sparse = SparseCodingConfig {
        lambda: d.f64()?,
        max_inner_iters: d.usize32()?,
        tol: d.f64()?,
        sparsity_ceiling: d.f64()?,
        dict_epochs: d.usize32()?,
        patches_per_epoch: d.usize32()?,
        step_size: d.f64()?,
        seed: d.u64()?,
    };
    let ensemble = EnsembleConfig {
        tree_count: d.usize32()?,
        xi: d.f64()?,
        zeta: d.f64()?,
        max_depth: d.usize32()?,
        subsample_ratio: d.f64()?,
        min_samples_leaf: d.usize32()?,
        mode: VoteMode::from_name(&d.str()?).map_err(|e| integrity("config", e.to_string()))?,
        seed: d.u64()?,
    };

    let reuse_mode = d.str()?;
    reuse_strategy(&reuse_mode).map_err(|e| integrity("config", e.to_string()))?;
    let input_planes = d.usize32()?;
    d.finish()?;

    let cfg = ModelConfig {
        layer_count,
        filter_sides,
        atom_counts,
        compressed_channels,
        context_offsets,
        samples_per_layer,
        ensemble,
        sparse,
        threshold,
        color_mode,
        seed,
    };
    Ok((cfg, reuse_mode, input_planes))
}

fn encode_dictionary(block: &str, dict: &LocalDictionary) -> Result<Vec<u8>> {
    let mut e = Enc::default();
    e.u32(count_u32(block, "filter_side", dict.filter_side())?);
    e.u32(count_u32(block, "atom_count", dict.atom_count())?);
    for &v in dict.atoms_flat() {
        e.f64(v);
    }
    Ok(e.buf)
}

fn decode_dictionary(block: &str, payload: &[u8]) -> Result<LocalDictionary> {
    let mut d = Dec::new(payload, block);
    let filter_side = d.usize32()?;
    let atom_count = d.usize32()?;
    let atoms = d.f64s(atom_count.checked_mul(filter_side * filter_side).ok_or_else(
        || integrity(block, "dictionary dimensions overflow"),
    )?)?;
    d.finish()?;
    LocalDictionary::new(filter_side, atom_count, atoms)
        .map_err(|e| integrity(block, e.to_string()))
}

fn encode_compressor(comp: &Compressor) -> Vec<u8> {
    let mut e = Enc::default();
    e.u32(comp.in_channels() as u32);
    e.u32(comp.out_channels() as u32);
    for &v in comp.mean() {
        e.f64(v);
    }
    for &v in comp.components() {
        e.f64(v);
    }
    e.buf
}

fn decode_compressor(block: &str, payload: &[u8]) -> Result<Compressor> {
    let mut d = Dec::new(payload, block);
    let in_channels = d.usize32()?;
    let out_channels = d.usize32()?;
    let mean = d.f64s(in_channels)?;
    let components = d.f64s(
        out_channels
            .checked_mul(in_channels)
            .ok_or_else(|| integrity(block, "compressor dimensions overflow"))?,
    )?;
    d.finish()?;
    Compressor::from_parts(mean, components, out_channels)
        .map_err(|e| integrity(block, e.to_string()))
}

/// Maps every node to its preorder position (root first, left subtree before
/// right).
fn preorder(nodes: &[TreeNode]) -> Vec<u32> {
    let mut order = vec![u32::MAX; nodes.len()];
    let mut next = 0u32;
    let mut stack = vec![0usize];
    while let Some(i) = stack.pop() {
        order[i] = next;
        next += 1;
        if let TreeNode::Branch { left, right, .. } = nodes[i] {
            stack.push(right as usize);
            stack.push(left as usize);
        }
    }
    order
}

fn encode_ensemble(block: &str, ens: &TreeEnsemble) -> Result<Vec<u8>> {
    let mut e = Enc::default();
    e.f64(ens.base);
    e.str(ens.mode.name());
    e.u32(count_u32(block, "tree count", ens.trees.len())?);
    for tree in &ens.trees {
        let nodes = tree.nodes();
        e.u32(count_u32(block, "node count", nodes.len())?);
        let order = preorder(nodes);
        let mut by_order: Vec<usize> = (0..nodes.len()).collect();
        by_order.sort_by_key(|&i| order[i]);
        for &i in &by_order {
            match nodes[i] {
                TreeNode::Branch {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    e.u8(0);
                    e.u32(feature);
                    e.f64(threshold);
                    e.u32(order[left as usize]);
                    e.u32(order[right as usize]);
                }
                TreeNode::Leaf { response } => {
                    e.u8(1);
                    e.f64(response);
                }
            }
        }
    }
    Ok(e.buf)
}

fn decode_ensemble(block: &str, payload: &[u8]) -> Result<TreeEnsemble> {
    let mut d = Dec::new(payload, block);
    let base = d.f64()?;
    let mode = VoteMode::from_name(&d.str()?).map_err(|e| integrity(block, e.to_string()))?;
    let tree_count = d.usize32()?;
    let mut trees = Vec::with_capacity(tree_count);
    for _ in 0..tree_count {
        let node_count = d.usize32()?;
        let mut nodes = Vec::with_capacity(node_count);
        for _ in 0..node_count {
            nodes.push(match d.u8()? {
                0 => TreeNode::Branch {
                    feature: d.u32()?,
                    threshold: d.f64()?,
                    left: d.u32()?,
                    right: d.u32()?,
                },
                1 => TreeNode::Leaf {
                    response: d.f64()?,
                },
                tag => return Err(integrity(block, format!("unknown node tag {tag}"))),
            });
        }
        trees.push(DecisionTree::from_nodes(nodes).map_err(|e| integrity(block, e.to_string()))?);
    }
    d.finish()?;
    Ok(TreeEnsemble { base, trees, mode })
}

/// Serialize a trained model to its canonical byte form.
pub fn encode_model(model: &ScD2TEModel) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let block_count = 1 + 4 * model.layers().len();
    out.extend_from_slice(&(block_count as u32).to_le_bytes());

    write_block(&mut out, "config", &encode_config(model)?);
    for layer in model.layers() {
        let ell = layer.index();
        let name = format!("layer{ell}.dictionary");
        write_block(&mut out, &name, &encode_dictionary(&name, layer.dictionary())?);
        write_block(
            &mut out,
            &format!("layer{ell}.compressor"),
            &encode_compressor(layer.compressor()),
        );
        let mut e = Enc::default();
        let (lo, span) = layer.rescale();
        e.f64(lo);
        e.f64(span);
        write_block(&mut out, &format!("layer{ell}.rescale"), &e.buf);
        let name = format!("layer{ell}.ensemble");
        write_block(&mut out, &name, &encode_ensemble(&name, layer.ensemble())?);
    }
    Ok(out)
}

/// Parse and fully validate a model from its byte form.
pub fn decode_model(data: &[u8]) -> Result<ScD2TEModel> {
    if data.len() < MAGIC.len() + 6 {
        return Err(integrity("header", "file shorter than the header"));
    }
    if &data[..6] != MAGIC {
        return Err(integrity("header", "bad magic, not a model file"));
    }
    let version = u16::from_le_bytes(data[6..8].try_into().unwrap());
    if version != VERSION {
        return Err(integrity(
            "header",
            format!("unsupported version {version}, expected {VERSION}"),
        ));
    }
    let block_count = u32::from_le_bytes(data[8..12].try_into().unwrap()) as usize;

    let mut blocks: Vec<(String, &[u8])> = Vec::with_capacity(block_count);
    let mut at = 12usize;
    for _ in 0..block_count {
        let need = |n: usize, at: usize| -> Result<()> {
            if at + n > data.len() {
                Err(integrity("header", "file truncated inside a block"))
            } else {
                Ok(())
            }
        };
        need(4, at)?;
        let name_len = u32::from_le_bytes(data[at..at + 4].try_into().unwrap()) as usize;
        at += 4;
        need(name_len, at)?;
        let name = String::from_utf8(data[at..at + name_len].to_vec())
            .map_err(|_| integrity("header", "block name is not UTF-8"))?;
        at += name_len;
        need(4, at)?;
        let payload_len = u32::from_le_bytes(data[at..at + 4].try_into().unwrap()) as usize;
        at += 4;
        need(payload_len + 4, at)?;
        let payload = &data[at..at + payload_len];
        at += payload_len;
        let stored = u32::from_le_bytes(data[at..at + 4].try_into().unwrap());
        at += 4;
        if crc32(payload) != stored {
            return Err(integrity(&name, "checksum mismatch"));
        }
        blocks.push((name, payload));
    }
    if at != data.len() {
        return Err(integrity("header", "trailing bytes after the last block"));
    }

    let mut iter = blocks.into_iter();
    let (first_name, config_payload) = iter
        .next()
        .ok_or_else(|| integrity("config", "missing config block"))?;
    if first_name != "config" {
        return Err(integrity(&first_name, "expected the config block first"));
    }
    let (cfg, reuse_mode, input_planes) = decode_config(config_payload)?;
    let strategy =
        reuse_strategy(&reuse_mode).map_err(|e| integrity("config", e.to_string()))?;

    let mut rest = collect_unique(iter)?;
    let mut layers = Vec::with_capacity(cfg.layer_count);
    for ell in 1..=cfg.layer_count {
        let mut payload_for = |suffix: &str| -> Result<(String, &[u8])> {
            let name = format!("layer{ell}.{suffix}");
            let payload = rest
                .remove(&name)
                .ok_or_else(|| integrity(&name, "block missing"))?;
            Ok((name, payload))
        };

        let (name, payload) = payload_for("dictionary")?;
        let dictionary = decode_dictionary(&name, payload)?;
        let (name, payload) = payload_for("compressor")?;
        let compressor = decode_compressor(&name, payload)?;
        let (name, payload) = payload_for("rescale")?;
        let mut d = Dec::new(payload, &name);
        let rescale = (d.f64()?, d.f64()?);
        d.finish()?;
        let (name, payload) = payload_for("ensemble")?;
        let ensemble = decode_ensemble(&name, payload)?;

        let pooled = cfg.pooled_width(strategy, input_planes, ell);
        layers.push(
            Layer::new(ell, dictionary, compressor, rescale, ensemble, pooled)
                .map_err(|e| integrity(&format!("layer{ell}.dictionary"), e.to_string()))?,
        );
    }
    if let Some(name) = rest.keys().next() {
        return Err(integrity(name, "unexpected block"));
    }

    ScD2TEModel::from_parts(cfg, reuse_mode, input_planes, layers)
        .map_err(|e| integrity("config", e.to_string()))
}

fn collect_unique<'a>(
    iter: impl Iterator<Item = (String, &'a [u8])>,
) -> Result<std::collections::HashMap<String, &'a [u8]>> {
    let mut map = std::collections::HashMap::new();
    for (name, payload) in iter {
        if map.insert(name.clone(), payload).is_some() {
            return Err(integrity(&name, "duplicate block"));
        }
    }
    Ok(map)
}

pub fn save_model(model: &ScD2TEModel, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_model(model)?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ScD2TEModel> {
    let data = fs::read(path)?;
    decode_model(&data)
}
