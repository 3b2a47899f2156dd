use scd2te::csc::{encode, learn_dictionary, SparseCodingConfig};
use scd2te::synth::{synth_sample, SynthConfig};

#[test]
fn stage_separation_probe() {
    let cfg = SynthConfig::default();
    let (image, mask) = synth_sample(&cfg, 0).unwrap();
    let plane = &image.planes()[0];

    let scfg = SparseCodingConfig {
        lambda: 0.05,
        max_inner_iters: 30,
        tol: 1e-4,
        sparsity_ceiling: 0.5,
        dict_epochs: 8,
        patches_per_epoch: 1024,
        step_size: 1.0,
        seed: 42,
    };
    let learned = learn_dictionary(std::slice::from_ref(plane), 12, 7, &scfg).unwrap();
    let dict = &learned.dictionary;
    for j in 0..dict.atom_count() {
        let atom = dict.atom(j);
        let dc: f64 = atom.iter().sum::<f64>() / (atom.len() as f64).sqrt();
        println!("atom {j}: dc mass {dc:+.3}");
    }

    let maps = encode(plane, dict, &scfg).unwrap();
    let n = plane.len();
    let mut nz = 0usize;
    let mut fg_abs = vec![0.0f64; 12];
    let mut bg_abs = vec![0.0f64; 12];
    let (mut fg_n, mut bg_n) = (0usize, 0usize);
    for y in 0..plane.height() {
        for x in 0..plane.width() {
            let code = maps.code(y * plane.width() + x);
            nz += code.iter().filter(|v| **v != 0.0).count();
            if mask.get(x, y) {
                fg_n += 1;
                for (j, v) in code.iter().enumerate() {
                    fg_abs[j] += v.abs();
                }
            } else {
                bg_n += 1;
                for (j, v) in code.iter().enumerate() {
                    bg_abs[j] += v.abs();
                }
            }
        }
    }
    println!("nonzero fraction {:.4}", nz as f64 / (n * 12) as f64);
    for j in 0..12 {
        println!(
            "channel {j}: mean|code| fg {:.4} bg {:.4}",
            fg_abs[j] / fg_n as f64,
            bg_abs[j] / bg_n as f64
        );
    }
}
