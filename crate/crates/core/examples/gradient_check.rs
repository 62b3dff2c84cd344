//! Finite-difference check of the full masked-LM gradient on a small
//! fusion encoder.
//!
//! cargo run --release --example gradient_check

use glyphpin::corpus::{apply_masking, build_examples, masking_rng, packing_rng, MaskingPolicy};
use glyphpin::data;
use glyphpin::encoder::{gradcheck_mlm, Encoder, EncoderConfig, GRADCHECK_TOLERANCE};

fn main() -> glyphpin::Result<()> {
    let res = data::resources();
    let sentences = data::segmented_corpus(&res.vocab);
    let policy = MaskingPolicy { select_prob: 0.5, packed_prob: 0.0, ..MaskingPolicy::default() };
    let examples = build_examples(&sentences[..2], &policy, &mut packing_rng(1));
    let batches: Vec<_> = examples
        .iter()
        .enumerate()
        .map(|(i, ex)| apply_masking(ex, &policy, &res.vocab, &mut masking_rng(1, 0, i as u64)))
        .collect();

    let mut cfg = EncoderConfig::toy(res.vocab.len());
    (cfg.layers, cfg.hidden, cfg.heads, cfg.init_std) = (1, 8, 2, 0.1);
    let encoder = Encoder::init(cfg, 1)?;
    println!("{} parameters", encoder.param_count());

    let report = gradcheck_mlm(&encoder, &batches, &res, 5e-5, None)?;
    for p in &report.params {
        println!("{:32} {:.2e}  analytic {:+.4e}  numeric {:+.4e}", p.name, p.max_rel_error, p.analytic, p.numeric);
    }
    let worst = report.max_rel_error();
    println!("max relative error {worst:.2e} (tolerance {GRADCHECK_TOLERANCE:e})");
    Ok(())
}
