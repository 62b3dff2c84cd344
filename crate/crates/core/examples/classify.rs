//! Sentence classification with the fused embeddings.
//!
//! cargo run --release --example classify

use glyphpin::data;
use glyphpin::encoder::{
    classify_loss, evaluate_classify, finetune, predict_class, ClassifyData, Encoder, EncoderConfig, Preset,
    TrainConfig, Trainer,
};

fn main() -> glyphpin::Result<()> {
    let res = data::resources();
    let data = ClassifyData::from_pairs(&data::parse_labeled(data::CLASSIFY, "classify.tsv")?)?;
    println!("{} examples, labels {:?}", data.examples.len(), data.labels);

    let mut cfg = EncoderConfig::toy(res.vocab.len());
    cfg.num_classes = data.labels.len();
    let mut train = TrainConfig::preset(Preset::Toy, 600);
    (train.max_lr, train.batch_size) = (3e-4, 8);
    let mut trainer = Trainer::new(Encoder::init(cfg, 1)?, train)?;
    let logs = finetune(
        &mut trainer,
        &data.examples,
        600,
        |enc, tape, vars, batch, dropout| classify_loss(enc, tape, vars, batch, &res, Some(dropout)),
        |_| Ok(()),
    )?;
    println!("loss {:.4} -> {:.4}", logs[0].loss, logs[logs.len() - 1].loss);

    let (correct, total) = evaluate_classify(&trainer.encoder, &data.examples, &res)?;
    println!("accuracy {correct}/{total}");
    for ex in data.examples.iter().take(5) {
        let guess = predict_class(&trainer.encoder, &ex.text, &res)?;
        let text: String = ex.text.iter().collect();
        println!("{text:12} gold {:8} predicted {}", data.labels[ex.label], data.labels[guess]);
    }
    Ok(())
}
