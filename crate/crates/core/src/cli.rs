//! The `glyphpin` command line.
//!
//! Exit codes: 0 success, 2 input or configuration error, 3 numerical
//! failure (non-finite loss, failed gradient check).

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::config::RunConfig;
use crate::corpus::{
    apply_masking, build_examples, masking_rng, packing_rng, read_lines, segment, Example, MaskedBatch, MaskingPolicy,
    SegmentedSentence, Vocab, WordLexicon,
};
use crate::data;
use crate::encoder::{
    classify_loss, evaluate_classify, evaluate_tags, finetune, gradcheck_mlm, load_checkpoint, mlm_recovery,
    parse_segmented, pretrain, save_checkpoint, tag_loss, ClassifyData, Encoder, MlmStream, Resources, StepLog,
    Trainer, BMES, GRADCHECK_MAX_PARAMS, GRADCHECK_TOLERANCE,
};
use crate::error::{Error, Result};
use crate::fusion::{self, fuse, FusionParams};
use crate::glyph::{glyph_embed, load_atlas, GlyphAtlas, GlyphEmbedder};
use crate::numerics::{ParamStore, Tensor};
use crate::pinyin::{parse_codepoint, pinyin_embed, resolve_reading, to_symbol_sequence, PinyinEncoder, PinyinLexicon};

/// Writes to stdout, ignoring a closed pipe so `glyphpin ... | head` exits
/// quietly.
fn emit(s: &str) {
    let _ = std::io::stdout().lock().write_all(s.as_bytes());
}

macro_rules! outln {
    ($($arg:tt)*) => {
        emit(&format!("{}\n", format_args!($($arg)*)))
    };
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "glyphpin",
    version,
    about = "Glyph and pinyin fused character embeddings: toy pretraining and finetuning"
)]
struct Cli {
    /// Flat key=value config file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the config file's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides one key; repeatable, applied last.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Writes an atlas of synthesized glyph stacks for a charset file.
    SynthAtlas { charset: PathBuf, out: PathBuf },
    /// Validates a pinyin lexicon and reports its coverage of the corpus.
    BuildLexiconCheck {
        /// Lexicon file; the configured or bundled one when omitted.
        lexicon: Option<PathBuf>,
    },
    /// Masked-language-model pretraining.
    Pretrain,
    /// Trains a classification or tagging head.
    Finetune {
        #[arg(value_enum)]
        task: Task,
    },
    /// Scores a checkpoint: MLM recovery plus any task head.
    Eval,
    /// Finite-difference check of every parameter gradient.
    Gradcheck,
    /// Trains the full, -glyph, -pinyin and -both variants on a tagging set.
    Ablate,
    /// Dumps one character's char, glyph, pinyin and fused vectors as TSV.
    Inspect {
        character: String,
        /// Text containing the character, used to resolve its reading.
        #[arg(long)]
        context: Option<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Task {
    Classify,
    Tag,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                EXIT_NUMERICAL
            } else {
                EXIT_INPUT
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32> {
    if let Command::SynthAtlas { charset, out } = &cli.command {
        return synth_atlas(charset, out);
    }
    let run = RunConfig::from_sources(cli.config.as_deref(), cli.seed, &cli.set)?;
    match cli.command {
        Command::SynthAtlas { .. } => unreachable!("handled above"),
        Command::BuildLexiconCheck { lexicon } => lexicon_check(&run, lexicon.as_deref()),
        Command::Pretrain => cmd_pretrain(run),
        Command::Finetune { task } => cmd_finetune(run, task),
        Command::Eval => cmd_eval(run),
        Command::Gradcheck => cmd_gradcheck(run),
        Command::Ablate => cmd_ablate(run),
        Command::Inspect { character, context } => cmd_inspect(run, &character, context.as_deref()),
    }
}

/// Codepoints listed one per line as `U+XXXX` or as the character itself;
/// blank lines and `#` comments are skipped.
pub fn parse_charset(text: &str, origin: &str) -> Result<Vec<char>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.chars();
        let c = match (it.next(), it.next()) {
            (Some(c), None) => Some(c),
            _ => parse_codepoint(line),
        };
        out.push(c.ok_or_else(|| Error::Parse {
            path: origin.to_string(),
            line: n + 1,
            msg: format!("expected U+XXXX or a single character, got {line:?}"),
        })?);
    }
    Ok(out)
}

fn synth_atlas(charset: &Path, out: &Path) -> Result<i32> {
    let text = fs::read_to_string(charset).map_err(|e| Error::io(charset, e))?;
    let chars = parse_charset(&text, &charset.display().to_string())?;
    let atlas = GlyphAtlas::synthesize(chars);
    atlas.write(out)?;
    outln!("wrote {} glyph stacks to {}", atlas.len(), out.display());
    Ok(EXIT_OK)
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn text_or(path: &Option<PathBuf>, bundled: &str) -> Result<String> {
    match path {
        Some(p) => read_text(p),
        None => Ok(bundled.to_string()),
    }
}

fn load_lexicon(path: Option<&Path>) -> Result<PinyinLexicon> {
    match path {
        Some(p) => PinyinLexicon::load(p),
        None => Ok(data::pinyin_lexicon()),
    }
}

fn corpus_lines(run: &RunConfig) -> Result<Vec<String>> {
    Ok(read_lines(&text_or(&run.paths.corpus, data::CORPUS)?))
}

fn resources(run: &RunConfig, vocab: Vocab) -> Result<Resources> {
    let atlas = match &run.paths.atlas {
        Some(p) => load_atlas(p)?,
        None => data::synth_atlas(&vocab),
    };
    Ok(Resources { vocab, atlas, lexicon: load_lexicon(run.paths.lexicon.as_deref())? })
}

fn segmented(run: &RunConfig, vocab: &Vocab) -> Result<Vec<SegmentedSentence>> {
    let words = WordLexicon::parse(&text_or(&run.paths.words, data::WORDS)?);
    Ok(corpus_lines(run)?.iter().map(|l| segment(l, &words, vocab)).collect())
}

fn masking_policy(max_len: usize) -> MaskingPolicy {
    MaskingPolicy { max_len, ..MaskingPolicy::default() }
}

fn pretraining_examples(run: &RunConfig, res: &Resources, max_len: usize) -> Result<(Vec<Example>, MaskingPolicy)> {
    let policy = masking_policy(max_len);
    policy.validate()?;
    let sentences = segmented(run, &res.vocab)?;
    let examples = build_examples(&sentences, &policy, &mut packing_rng(run.train.seed));
    Ok((examples, policy))
}

/// Model, vocabulary and stored config of `init_checkpoint`, if set.
type Loaded = (Encoder, Vocab, Vec<(String, String)>);

fn load_init(run: &RunConfig) -> Result<Option<Loaded>> {
    let Some(path) = &run.paths.init_checkpoint else {
        return Ok(None);
    };
    let (encoder, pairs) = load_checkpoint(path)?;
    let vocab = match pairs.iter().find(|(k, _)| k == "vocab") {
        Some((_, v)) => Vocab::from_config_value(v)?,
        None => return Err(Error::Config(format!("{}: checkpoint stores no vocab", path.display()))),
    };
    if vocab.len() != encoder.config.vocab_size {
        return Err(Error::Config(format!(
            "{}: stored vocab has {} entries, model expects {}",
            path.display(),
            vocab.len(),
            encoder.config.vocab_size
        )));
    }
    Ok(Some((encoder, vocab, pairs)))
}

fn create_out_dir(run: &RunConfig) -> Result<()> {
    fs::create_dir_all(&run.paths.out_dir).map_err(|e| Error::io(&run.paths.out_dir, e))
}

/// Append-only TSV metrics log headed by the effective configuration.
struct MetricsLog {
    path: PathBuf,
    file: std::io::BufWriter<fs::File>,
}

impl MetricsLog {
    fn create(path: PathBuf, config: &[(String, String)]) -> Result<Self> {
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut log = MetricsLog { path, file: std::io::BufWriter::new(file) };
        let mut header = String::new();
        for (k, v) in config {
            let _ = writeln!(header, "# {k}={v}");
        }
        header.push_str("step\tlr\tloss\n");
        log.write(&header)?;
        Ok(log)
    }

    fn write(&mut self, s: &str) -> Result<()> {
        self.file.write_all(s.as_bytes()).map_err(|e| Error::io(&self.path, e))
    }

    fn step(&mut self, l: &StepLog) -> Result<()> {
        self.write(&format!("{}\t{}\t{}\n", l.step, l.lr, l.loss))
    }

    fn finish(mut self) -> Result<()> {
        self.file.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Effective config plus the vocabulary, as stored in logs and checkpoints.
fn config_block(run: &RunConfig, vocab: &Vocab, extra: &[(&str, String)]) -> Vec<(String, String)> {
    let mut block = run.to_pairs();
    block.push(("vocab".into(), vocab.to_config_value()));
    block.extend(extra.iter().map(|(k, v)| (k.to_string(), v.clone())));
    block
}

fn cmd_pretrain(mut run: RunConfig) -> Result<i32> {
    let (encoder, vocab) = match load_init(&run)? {
        Some((enc, vocab, _)) => {
            run.adopt_model(&enc.config);
            (enc, vocab)
        }
        None => {
            let vocab = Vocab::from_corpus(&corpus_lines(&run)?, None);
            let cfg = run.encoder_config(vocab.len())?;
            (Encoder::init(cfg, run.train.seed)?, vocab)
        }
    };
    let res = resources(&run, vocab)?;
    let (examples, policy) = pretraining_examples(&run, &res, encoder.config.max_len)?;
    create_out_dir(&run)?;
    let block = config_block(&run, &res.vocab, &[]);
    let mut log = MetricsLog::create(run.paths.out_dir.join("pretrain.tsv"), &block)?;
    let mut trainer = Trainer::new(encoder, run.train.clone())?;
    let mut stream = MlmStream::new(&examples, &policy, &res.vocab, run.train.seed)?;
    let steps = run.train.total_steps;
    let result = pretrain(&mut trainer, &mut stream, &res, steps, |l| log.step(l));
    log.finish()?;
    let logs = result?;
    let ckpt = run.paths.out_dir.join("pretrain.ckpt");
    save_checkpoint(&ckpt, &trainer.encoder, &block)?;
    outln!("pretrained {} steps on {} examples ({} parameters)", steps, examples.len(), trainer.encoder.param_count());
    if let (Some(first), Some(last)) = (logs.first(), logs.last()) {
        outln!("loss {:.4} -> {:.4}", first.loss, last.loss);
    }
    outln!("wrote {}", ckpt.display());
    Ok(EXIT_OK)
}

enum TaskData {
    Classify(ClassifyData),
    Tag(Vec<crate::encoder::TagExample>),
}

impl TaskData {
    fn load(run: &RunConfig, task: Task) -> Result<Self> {
        let origin = run.paths.data.as_ref().map_or_else(|| "bundled data".to_string(), |p| p.display().to_string());
        Ok(match task {
            Task::Classify => {
                let text = text_or(&run.paths.data, data::CLASSIFY)?;
                TaskData::Classify(ClassifyData::from_pairs(&data::parse_labeled(&text, &origin)?)?)
            }
            Task::Tag => {
                let examples = parse_segmented(&text_or(&run.paths.data, data::CWS)?);
                if examples.is_empty() {
                    return Err(Error::Config(format!("{origin}: no segmented sentences")));
                }
                TaskData::Tag(examples)
            }
        })
    }

    fn texts(&self) -> Vec<String> {
        match self {
            TaskData::Classify(d) => d.examples.iter().map(|e| e.text.iter().collect()).collect(),
            TaskData::Tag(d) => d.iter().map(|e| e.text.iter().collect()).collect(),
        }
    }

    fn heads(&self) -> (usize, usize) {
        match self {
            TaskData::Classify(d) => (d.labels.len(), 0),
            TaskData::Tag(_) => (0, BMES.len()),
        }
    }
}

fn cmd_finetune(mut run: RunConfig, task: Task) -> Result<i32> {
    let data = TaskData::load(&run, task)?;
    let (classes, tags) = data.heads();
    let (encoder, vocab) = match load_init(&run)? {
        Some((enc, vocab, _)) => (enc.attach_heads(classes, tags, run.train.seed)?, vocab),
        None => {
            let mut lines = corpus_lines(&run)?;
            lines.extend(data.texts());
            let vocab = Vocab::from_corpus(&lines, None);
            let mut cfg = run.encoder_config(vocab.len())?;
            cfg.num_classes = classes;
            cfg.num_tags = tags;
            (Encoder::init(cfg, run.train.seed)?, vocab)
        }
    };
    run.adopt_model(&encoder.config);
    let res = resources(&run, vocab)?;
    create_out_dir(&run)?;
    let name = match task {
        Task::Classify => "classify",
        Task::Tag => "tag",
    };
    let extra = match &data {
        TaskData::Classify(d) => vec![("labels", d.labels.join(","))],
        TaskData::Tag(_) => vec![("labels", BMES.join(","))],
    };
    let block = config_block(&run, &res.vocab, &extra);
    let mut log = MetricsLog::create(run.paths.out_dir.join(format!("finetune-{name}.tsv")), &block)?;
    let mut trainer = Trainer::new(encoder, run.finetune_train())?;
    let steps = run.finetune.steps;
    let result = match &data {
        TaskData::Classify(d) => finetune(
            &mut trainer,
            &d.examples,
            steps,
            |e, t, v, b, dr| classify_loss(e, t, v, b, &res, Some(dr)),
            |l| log.step(l),
        ),
        TaskData::Tag(d) => {
            finetune(&mut trainer, d, steps, |e, t, v, b, dr| tag_loss(e, t, v, b, &res, Some(dr)), |l| log.step(l))
        }
    };
    log.finish()?;
    result?;
    let ckpt = run.paths.out_dir.join(format!("finetune-{name}.ckpt"));
    save_checkpoint(&ckpt, &trainer.encoder, &block)?;
    print_task_metrics(&trainer.encoder, &data, &res)?;
    outln!("wrote {}", ckpt.display());
    Ok(EXIT_OK)
}

fn print_task_metrics(encoder: &Encoder, data: &TaskData, res: &Resources) -> Result<()> {
    match data {
        TaskData::Classify(d) => {
            let (correct, total) = evaluate_classify(encoder, &d.examples, res)?;
            outln!("classify_accuracy\t{}\t({correct}/{total})", correct as f64 / total as f64);
        }
        TaskData::Tag(d) => {
            let m = evaluate_tags(encoder, d, res)?;
            outln!("tag_accuracy\t{}", m.accuracy());
            outln!("span_precision\t{}", m.spans.precision());
            outln!("span_recall\t{}", m.spans.recall());
            outln!("span_f1\t{}", m.spans.f1());
        }
    }
    Ok(())
}

fn cmd_eval(run: RunConfig) -> Result<i32> {
    let Some((encoder, vocab, pairs)) = load_init(&run)? else {
        return Err(Error::Config("eval needs init_checkpoint".into()));
    };
    let res = resources(&run, vocab)?;
    let (examples, policy) = pretraining_examples(&run, &res, encoder.config.max_len)?;
    let r = mlm_recovery(&encoder, &examples, &policy, &res, run.train.seed, run.eval_rounds)?;
    outln!("mlm_recovery\t{}\t({}/{})", r.accuracy(), r.correct, r.total);
    outln!("mlm_recovery_masked\t{}", r.masked_accuracy());
    if encoder.config.num_classes > 0 {
        let TaskData::Classify(d) = TaskData::load(&run, Task::Classify)? else {
            unreachable!("classify task loads classify data")
        };
        let stored = pairs.iter().find(|(k, _)| k == "labels").map(|(_, v)| v.as_str());
        if stored.is_some_and(|s| s != d.labels.join(",")) {
            return Err(Error::Config(format!(
                "dataset labels {:?} differ from the checkpoint's {:?}",
                d.labels.join(","),
                stored.unwrap_or_default()
            )));
        }
        print_task_metrics(&encoder, &TaskData::Classify(d), &res)?;
    }
    if encoder.config.num_tags > 0 {
        print_task_metrics(&encoder, &TaskData::load(&run, Task::Tag)?, &res)?;
    }
    Ok(EXIT_OK)
}

/// The first two corpus sentences as unpacked examples, masked so that at
/// least one position carries a label.
fn gradcheck_batches(run: &RunConfig, res: &Resources) -> Result<Vec<MaskedBatch>> {
    let sentences = segmented(run, &res.vocab)?;
    if sentences.len() < 2 {
        return Err(Error::Config("gradcheck needs at least two corpus sentences".into()));
    }
    let policy = MaskingPolicy { select_prob: 0.5, ..masking_policy(run.model.max_len) };
    let examples: Vec<Example> = sentences[..2].iter().map(|s| Example::wrap(&[s], false)).collect();
    for epoch in 0.. {
        let batches: Vec<MaskedBatch> = examples
            .iter()
            .enumerate()
            .map(|(i, ex)| apply_masking(ex, &policy, &res.vocab, &mut masking_rng(run.train.seed, epoch, i as u64)))
            .collect();
        if batches.iter().any(|b| b.labeled() > 0) {
            return Ok(batches);
        }
    }
    unreachable!("some masking eventually labels a position")
}

fn cmd_gradcheck(mut run: RunConfig) -> Result<i32> {
    run.model.init_std = run.gradcheck.init_std;
    let vocab = Vocab::from_corpus(&corpus_lines(&run)?, None);
    let cfg = run.encoder_config(vocab.len())?;
    let encoder = Encoder::init(cfg, run.train.seed)?;
    let count = encoder.param_count();
    if count > GRADCHECK_MAX_PARAMS {
        return Err(Error::Config(format!(
            "gradcheck is limited to {GRADCHECK_MAX_PARAMS} parameters, this model has {count}"
        )));
    }
    let res = resources(&run, vocab)?;
    let batches = gradcheck_batches(&run, &res)?;
    let labeled: usize = batches.iter().map(MaskedBatch::labeled).sum();
    outln!("# {count} parameters, {labeled} labeled positions, epsilon {}", run.gradcheck.epsilon);
    outln!("param\tsize\tmax_rel_error\tstatus");
    let report = gradcheck_mlm(&encoder, &batches, &res, run.gradcheck.epsilon, run.gradcheck.fault.as_deref())?;
    for p in &report.params {
        let size = encoder.params.get(&p.name)?.numel();
        let status = if p.max_rel_error < GRADCHECK_TOLERANCE { "ok" } else { "FAIL" };
        outln!("{}\t{size}\t{:.3e}\t{status}", p.name, p.max_rel_error);
    }
    outln!("max\t{count}\t{:.3e}", report.max_rel_error());
    let failed: Vec<&str> = report.failures(GRADCHECK_TOLERANCE).map(|p| p.name.as_str()).collect();
    if failed.is_empty() {
        Ok(EXIT_OK)
    } else {
        eprintln!("gradient check failed for: {}", failed.join(", "));
        Ok(EXIT_NUMERICAL)
    }
}

/// Variant names with their `(use_glyph, use_pinyin)` flags.
pub const ABLATIONS: [(&str, bool, bool); 4] =
    [("full", true, true), ("-glyph", false, true), ("-pinyin", true, false), ("-both", false, false)];

fn cmd_ablate(run: RunConfig) -> Result<i32> {
    let TaskData::Tag(data) = TaskData::load(&run, Task::Tag)? else { unreachable!("tag task loads tag data") };
    let mut lines = corpus_lines(&run)?;
    lines.extend(data.iter().map(|e| e.text.iter().collect::<String>()));
    let vocab = Vocab::from_corpus(&lines, None);
    let res = resources(&run, vocab)?;
    let (examples, policy) = pretraining_examples(&run, &res, run.model.max_len)?;
    create_out_dir(&run)?;
    let mut table = String::from("variant\tparams\tprecision\trecall\tf1\n");
    for (name, glyph, pinyin) in ABLATIONS {
        let mut variant = run.clone();
        variant.model.use_glyph = glyph;
        variant.model.use_pinyin = pinyin;
        let mut cfg = variant.encoder_config(res.vocab.len())?;
        cfg.num_tags = BMES.len();
        let encoder = Encoder::init(cfg, run.train.seed)?;
        variant.adopt_model(&encoder.config);
        let mut trainer = Trainer::new(encoder, run.train.clone())?;
        if run.train.total_steps > 0 {
            let mut stream = MlmStream::new(&examples, &policy, &res.vocab, run.train.seed)?;
            pretrain(&mut trainer, &mut stream, &res, run.train.total_steps, |_| Ok(()))?;
        }
        let mut tuner = Trainer::new(trainer.encoder, run.finetune_train())?;
        finetune(
            &mut tuner,
            &data,
            run.finetune.steps,
            |e, t, v, b, dr| tag_loss(e, t, v, b, &res, Some(dr)),
            |_| Ok(()),
        )?;
        let m = evaluate_tags(&tuner.encoder, &data, &res)?;
        let block = config_block(&variant, &res.vocab, &[("labels", BMES.join(","))]);
        save_checkpoint(&run.paths.out_dir.join(format!("ablate{name}.ckpt")), &tuner.encoder, &block)?;
        let _ = writeln!(
            table,
            "{name}\t{}\t{:.4}\t{:.4}\t{:.4}",
            tuner.encoder.param_count(),
            m.spans.precision(),
            m.spans.recall(),
            m.spans.f1()
        );
    }
    let path = run.paths.out_dir.join("ablate.tsv");
    fs::write(&path, &table).map_err(|e| Error::io(&path, e))?;
    emit(&table);
    Ok(EXIT_OK)
}

/// The separate inputs and fused output for one character.
#[derive(Debug, Clone, PartialEq)]
pub struct CharVectors {
    pub reading: Option<String>,
    pub symbols: String,
    pub char_vec: Tensor,
    pub glyph: Option<Tensor>,
    pub pinyin: Option<Tensor>,
    pub fused: Tensor,
}

/// Vectors for `context[index]` under `params`; the reading is resolved in
/// `context`.
pub fn char_vectors(
    params: &ParamStore,
    res: &Resources,
    context: &[char],
    index: usize,
    use_glyph: bool,
    use_pinyin: bool,
) -> Result<CharVectors> {
    let c = context[index];
    let table = params.get(fusion::CHAR_TABLE)?;
    let d = table.last_dim();
    let char_vec = Tensor::vector(table.row(res.vocab.id(c) as usize).to_vec());
    let glyph = if use_glyph {
        let emb =
            GlyphEmbedder::new(params.get(fusion::GLYPH_WEIGHT)?.clone(), params.get(fusion::GLYPH_BIAS)?.clone())?;
        Some(glyph_embed(&emb, res.atlas.lookup(c as u32))?)
    } else {
        None
    };
    let reading = resolve_reading(context, index, &res.lexicon);
    let seq = to_symbol_sequence(reading)?;
    let pinyin = if use_pinyin {
        let enc = PinyinEncoder::new(
            params.get(fusion::PINYIN_SYMBOLS)?.clone(),
            params.get(fusion::PINYIN_FILTERS)?.clone(),
            params.get(fusion::PINYIN_BIAS)?.clone(),
        )?;
        Some(pinyin_embed(&enc, &seq)?)
    } else {
        None
    };
    let fused_params = FusionParams {
        char_table: table.clone(),
        fusion_weight: params.get(fusion::FUSION_WEIGHT).ok().cloned(),
        fusion_bias: params.get(fusion::FUSION_BIAS).ok().cloned(),
        position_table: params.get(fusion::POSITION_TABLE)?.clone(),
        use_glyph,
        use_pinyin,
    };
    let zero = Tensor::zeros(&[d]);
    let fused = fuse(&char_vec, glyph.as_ref().unwrap_or(&zero), pinyin.as_ref().unwrap_or(&zero), &fused_params)?;
    Ok(CharVectors {
        reading: reading.map(str::to_string),
        symbols: String::from_utf8_lossy(seq.symbols()).into_owned(),
        char_vec,
        glyph,
        pinyin,
        fused,
    })
}

fn cmd_inspect(run: RunConfig, character: &str, context: Option<&str>) -> Result<i32> {
    let c = match parse_charset(character, "inspect")?.as_slice() {
        [c] => *c,
        _ => return Err(Error::Config(format!("inspect takes one character, got {character:?}"))),
    };
    let context: Vec<char> = match context {
        Some(text) => text.chars().collect(),
        None => vec![c],
    };
    let index = context
        .iter()
        .position(|&x| x == c)
        .ok_or_else(|| Error::Config(format!("{c} does not occur in the context")))?;
    let (encoder, vocab) = match load_init(&run)? {
        Some((enc, vocab, _)) => (enc, vocab),
        None => {
            let vocab = Vocab::from_corpus(&corpus_lines(&run)?, None);
            let cfg = run.encoder_config(vocab.len())?;
            (Encoder::init(cfg, run.train.seed)?, vocab)
        }
    };
    let res = resources(&run, vocab)?;
    let cfg = &encoder.config;
    let v = char_vectors(&encoder.params, &res, &context, index, cfg.use_glyph, cfg.use_pinyin)?;
    let row = |name: &str, t: &Tensor| {
        let vals: Vec<String> = t.data().iter().map(|x| x.to_string()).collect();
        outln!("{name}\t{}", vals.join("\t"));
    };
    outln!("char\t{c}\tU+{:04X}\tid {}", c as u32, res.vocab.id(c));
    outln!("reading\t{}\t{}", v.reading.as_deref().unwrap_or("-"), v.symbols);
    row("char_vec", &v.char_vec);
    if let Some(g) = &v.glyph {
        row("glyph_vec", g);
    }
    if let Some(p) = &v.pinyin {
        row("pinyin_vec", p);
    }
    row("fusion_vec", &v.fused);
    Ok(EXIT_OK)
}

fn lexicon_check(run: &RunConfig, path: Option<&Path>) -> Result<i32> {
    let path = path.or(run.paths.lexicon.as_deref());
    let lexicon = load_lexicon(path)?;
    let lines = corpus_lines(run)?;
    let vocab = Vocab::from_corpus(&lines, None);
    let missing: Vec<char> = vocab
        .chars()
        .iter()
        .copied()
        .filter(|&c| lexicon.default_reading(c).is_none() && !c.is_ascii_punctuation() && !is_cjk_punct(c))
        .collect();
    outln!("defaults\t{}", lexicon.defaults().count());
    outln!("rules\t{}", lexicon.rules().len());
    let mut shadowed = 0;
    for rule in lexicon.rules() {
        let got = resolve_reading(&rule.context, rule.offset, &lexicon);
        let ctx: String = rule.context.iter().collect();
        let status = if got == Some(rule.reading.as_str()) { "ok" } else { "shadowed" };
        shadowed += usize::from(status != "ok");
        outln!("rule\t{ctx}\t{}\t{}\t{status}", rule.offset, got.unwrap_or("-"));
    }
    outln!("corpus_chars\t{}", vocab.chars().len());
    let listed: String = missing.iter().collect();
    outln!("missing\t{}\t{listed}", missing.len());
    if missing.is_empty() && shadowed == 0 {
        return Ok(EXIT_OK);
    }
    if !missing.is_empty() {
        eprintln!("{} corpus characters have no reading", missing.len());
    }
    if shadowed > 0 {
        eprintln!("{shadowed} rules never apply in their own context");
    }
    Ok(EXIT_INPUT)
}

fn is_cjk_punct(c: char) -> bool {
    matches!(c as u32, 0x3000..=0x303F | 0xFF00..=0xFF0F | 0xFF1A..=0xFF20)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charset_accepts_codepoints_and_literals() {
        let cs = parse_charset("U+4E50\n乐\n\n# comment\nU+0041\n", "cs").unwrap();
        assert_eq!(cs, vec!['乐', '乐', 'A']);
        assert!(matches!(parse_charset("nope\n", "cs"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run(["glyphpin", "frobnicate"]), EXIT_INPUT);
        assert_eq!(run(["glyphpin", "--set", "bogus=1", "inspect", "乐"]), EXIT_INPUT);
        assert_eq!(run(["glyphpin", "--help"]), EXIT_OK);
    }
}
