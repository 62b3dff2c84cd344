//! Pretrains the toy fusion encoder with masked-LM and reports how many
//! masked characters it recovers.
//!
//! cargo run --release --example pretrain_toy [steps]

use glyphpin::corpus::{build_examples, packing_rng, MaskingPolicy};
use glyphpin::data;
use glyphpin::encoder::{mlm_recovery, pretrain, Encoder, EncoderConfig, MlmStream, Preset, TrainConfig, Trainer};

fn main() -> glyphpin::Result<()> {
    let steps: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(500);
    let res = data::resources();
    let cfg = EncoderConfig::toy(res.vocab.len());
    let policy = MaskingPolicy { max_len: cfg.max_len, ..MaskingPolicy::default() };
    let sentences = data::segmented_corpus(&res.vocab);
    let examples = build_examples(&sentences, &policy, &mut packing_rng(1));

    let train = TrainConfig::preset(Preset::Toy, steps);
    let mut trainer = Trainer::new(Encoder::init(cfg, train.seed)?, train)?;
    let mut stream = MlmStream::new(&examples, &policy, &res.vocab, 1)?;
    let before = mlm_recovery(&trainer.encoder, &examples, &policy, &res, 1, 2)?;
    let logs = pretrain(&mut trainer, &mut stream, &res, steps, |l| {
        if l.step % 100 == 0 || l.step == steps {
            println!("step {:5}  lr {:.2e}  loss {:.4}", l.step, l.lr, l.loss);
        }
        Ok(())
    })?;
    let after = mlm_recovery(&trainer.encoder, &examples, &policy, &res, 1, 2)?;
    if let (Some(first), Some(last)) = (logs.first(), logs.last()) {
        println!("loss {:.3} -> {:.3}", first.loss, last.loss);
    }
    println!("recovery {:.3} -> {:.3}", before.accuracy(), after.accuracy());
    Ok(())
}
