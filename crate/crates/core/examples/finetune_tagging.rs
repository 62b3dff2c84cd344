//! Finetunes a BMES word-segmentation tagger and segments a few sentences.
//!
//! cargo run --release --example finetune_tagging

use glyphpin::data;
use glyphpin::encoder::{
    evaluate_tags, finetune, parse_segmented, predict_tags, spans_from_tags, tag_loss, Encoder, EncoderConfig, Preset,
    TrainConfig, Trainer, BMES,
};

fn main() -> glyphpin::Result<()> {
    let res = data::resources();
    let data = parse_segmented(data::CWS);
    let mut cfg = EncoderConfig::toy(res.vocab.len());
    cfg.num_tags = BMES.len();
    let mut train = TrainConfig::preset(Preset::Toy, 600);
    (train.max_lr, train.batch_size) = (3e-4, 8);
    let mut trainer = Trainer::new(Encoder::init(cfg, 1)?, train)?;

    finetune(
        &mut trainer,
        &data,
        600,
        |enc, tape, vars, batch, dropout| tag_loss(enc, tape, vars, batch, &res, Some(dropout)),
        |l| {
            if l.step % 150 == 0 {
                println!("step {:4}  loss {:.4}", l.step, l.loss);
            }
            Ok(())
        },
    )?;
    let m = evaluate_tags(&trainer.encoder, &data, &res)?;
    println!("tag accuracy {:.4}, span f1 {:.4}", m.accuracy(), m.spans.f1());

    for text in ["我们喜欢音乐", "他们很快乐", "小猫爱吃鱼"] {
        let chars: Vec<char> = text.chars().collect();
        let tags = predict_tags(&trainer.encoder, &chars, &res)?;
        let words: Vec<String> = spans_from_tags(&tags).iter().map(|&(s, e)| chars[s..e].iter().collect()).collect();
        let letters: String = tags.iter().map(|&t| BMES[t]).collect();
        println!("{text} {letters} -> {}", words.join(" / "));
    }
    Ok(())
}
