//! Acceptance checks, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines always reach the output; exits nonzero if any
//! check fails.

use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use glyphpin::baseline::{CharEncoder, CharShape};
use glyphpin::cli::char_vectors;
use glyphpin::config::RunConfig;
use glyphpin::corpus::{apply_masking, build_examples, masking_rng, packing_rng, Branch, MaskingPolicy, Strategy};
use glyphpin::data;
use glyphpin::encoder::{expected_shapes, read_checkpoint, Encoder, EncoderConfig, LN_EPS};
use glyphpin::fusion;
use glyphpin::glyph::{flatten_normalize, synth_glyph, GlyphAtlas, GLYPH_INPUT};
use glyphpin::numerics::{conv1d_maxpool, ParamStore, ParamVars, Tape, Tensor};
use glyphpin::pinyin::{resolve_reading, to_symbol_sequence, ALPHABET, SEQ_LEN};
use glyphpin::rng::CounterRng;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn bin(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_glyphpin")).current_dir(cwd).args(args).output().expect("binary runs")
}

fn value_tape(params: &ParamStore) -> (Tape, ParamVars) {
    let mut tape = Tape::new();
    let vars = params.register(&mut tape);
    (tape, vars)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn gradient_correctness() -> Check {
    let cfg = RunConfig::resolve(&[]).map_err(|e| e.to_string())?;
    let vocab = data::vocab();
    let m = cfg.encoder_config(vocab.len()).map_err(|e| e.to_string())?;
    ensure(
        (m.layers, m.hidden, m.heads, m.vocab_size, m.pinyin_dim) == (2, 16, 2, 50, 8),
        format!("toy config is {m:?}"),
    )?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let t0 = Instant::now();
    let out = bin(dir.path(), &["gradcheck"]);
    let took = t0.elapsed();
    let text = stdout(&out);
    let enc = Encoder::init(m, 1).map_err(|e| e.to_string())?;
    let rows: Vec<(&str, f64)> = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("param\t") && !l.starts_with("max\t"))
        .filter_map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            Some((f[0], f.get(2)?.parse().ok()?))
        })
        .collect();
    let worst = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    ensure(out.status.code() == Some(0), format!("exit {:?}", out.status.code()))?;
    ensure(
        rows.len() == enc.params.len(),
        format!("{} parameters reported, model has {}", rows.len(), enc.params.len()),
    )?;
    ensure(worst < 1e-4, format!("max relative error {worst:.3e}"))?;
    ensure(took < Duration::from_secs(300), format!("took {:.1}s", secs(took)))?;
    Ok(format!(
        "{} tensors, {} parameters, max relative error {worst:.2e} < 1e-4, {:.1}s",
        rows.len(),
        enc.param_count(),
        secs(took)
    ))
}

fn structural_fidelity() -> Check {
    let mut rng = CounterRng::new(2024);
    let lexicon = data::pinyin_lexicon();
    let vocab = data::vocab();
    let atlas = data::synth_atlas(&vocab);
    let mut configs = 0;
    for d in [8, 16, 32] {
        for _ in 0..4 {
            let heads = [1, 2, 4, 8][rng.below(4)];
            let mut cfg = EncoderConfig::toy(vocab.len());
            cfg.hidden = d;
            cfg.heads = heads;
            cfg.layers = rng.below(3);
            cfg.pinyin_dim = 1 + rng.below(8);
            cfg.max_len = 16;
            let enc = Encoder::init(cfg.clone(), rng.next_u64()).map_err(|e| e.to_string())?;
            let shape = |n: &str| enc.params.get(n).map(|t| t.shape().to_vec()).map_err(|e| e.to_string());
            ensure(shape(fusion::GLYPH_WEIGHT)? == vec![2352, d], "glyph weight is not 2352 × D")?;
            ensure(shape(fusion::FUSION_WEIGHT)? == vec![3 * d, d], "fusion weight is not 3D × D")?;
            let text: Vec<char> =
                (0..1 + rng.below(12)).map(|_| vocab.chars()[rng.below(vocab.chars().len())]).collect();
            let mut ids = vec![2];
            let mut chars = vec![None];
            for &c in &text {
                ids.push(vocab.id(c));
                chars.push(Some(c));
            }
            ids.push(3);
            chars.push(None);
            let res = data::resources();
            let features = res.features(&ids, &chars).map_err(|e| e.to_string())?;
            let (mut tape, vars) = value_tape(&enc.params);
            let h = enc
                .forward(&mut tape, &vars, &features, &vec![true; ids.len()], None)
                .map_err(|e| e.to_string())?
                .hidden;
            ensure(tape.shape(h) == [ids.len(), d], format!("hidden shape {:?}", tape.shape(h)))?;
            let i = rng.below(text.len());
            let v = char_vectors(&enc.params, &res, &text, i, true, true).map_err(|e| e.to_string())?;
            for t in [&v.char_vec, v.glyph.as_ref().unwrap(), v.pinyin.as_ref().unwrap(), &v.fused] {
                ensure(t.shape() == [d], format!("vector shape {:?}", t.shape()))?;
            }
            let input_width = v.char_vec.numel() + v.glyph.unwrap().numel() + v.pinyin.unwrap().numel();
            ensure(input_width == 3 * d, format!("fusion input width {input_width}"))?;
            configs += 1;
        }
    }
    for &c in vocab.chars() {
        let x = flatten_normalize(atlas.lookup(c as u32)).map_err(|e| e.to_string())?;
        ensure(x.numel() == 2352 && GLYPH_INPUT == 2352, format!("glyph flatten width {}", x.numel()))?;
        let reading = lexicon.default_reading(c);
        let seq = to_symbol_sequence(reading).map_err(|e| e.to_string())?;
        ensure(seq.symbols().len() == 8 && SEQ_LEN == 8, "pinyin sequence length is not 8")?;
        if let Some(r) = reading {
            let s = seq.symbols();
            let tone = s[r.len() - 1];
            ensure(
                tone.is_ascii_digit() && s[r.len()..].iter().all(|&b| b == ALPHABET.as_bytes()[0]),
                format!("{c}: tone not last"),
            )?;
        }
    }
    Ok(format!(
        "glyph 2352, pinyin 8 with tone last, fusion 3D → D over {configs} random configs with D ∈ {{8, 16, 32}}"
    ))
}

fn masking_statistics() -> Check {
    let t0 = Instant::now();
    let vocab = data::vocab();
    let sentences = data::segmented_corpus(&vocab);
    let policy = MaskingPolicy { max_len: 32, ..MaskingPolicy::default() };
    let (mut units, mut selected, mut batches, mut wwm) = (0usize, 0usize, 0usize, 0usize);
    let mut branches = [0usize; 3];
    let (mut examples_total, mut packed) = (0usize, 0usize);
    let mut seed = 0u64;
    while units < 300_000 {
        seed += 1;
        let examples = build_examples(&sentences, &policy, &mut packing_rng(seed));
        examples_total += examples.len();
        packed += examples.iter().filter(|e| e.packed).count();
        for epoch in 0..4 {
            for (i, ex) in examples.iter().enumerate() {
                let b = apply_masking(ex, &policy, &vocab, &mut masking_rng(seed, epoch, i as u64));
                batches += 1;
                wwm += usize::from(b.strategy == Strategy::WholeWord);
                units += b.units;
                selected += b.selected.len();
                for u in &b.selected {
                    branches[match u.branch {
                        Branch::Mask => 0,
                        Branch::Random => 1,
                        Branch::Keep => 2,
                    }] += 1;
                }
            }
        }
    }
    while examples_total < 100_000 {
        seed += 1;
        let examples = build_examples(&sentences, &policy, &mut packing_rng(seed));
        examples_total += examples.len();
        packed += examples.iter().filter(|e| e.packed).count();
    }
    let took = t0.elapsed();
    let rate = |a: usize, b: usize| a as f64 / b as f64;
    let sel = rate(selected, units);
    let br: Vec<f64> = branches.iter().map(|&n| rate(n, selected)).collect();
    let strat = rate(wwm, batches);
    let pk = rate(packed, examples_total);
    ensure((sel - 0.15).abs() <= 0.005, format!("selection {sel:.4}"))?;
    for (got, want) in br.iter().zip([0.8, 0.1, 0.1]) {
        ensure((got - want).abs() <= 0.01, format!("branches {br:?}"))?;
    }
    ensure((strat - 0.9).abs() <= 0.01, format!("wwm share {strat:.4}"))?;
    ensure((pk - 0.9).abs() <= 0.01, format!("packed share {pk:.4}"))?;
    ensure(took < Duration::from_secs(60), format!("took {:.1}s", secs(took)))?;
    Ok(format!(
        "{units} units: select {sel:.4}, mask/random/keep {:.4}/{:.4}/{:.4}, wwm {strat:.4}, packed {pk:.4} over {examples_total} examples, {:.1}s",
        br[0],
        br[1],
        br[2],
        secs(took)
    ))
}

fn wwm_span_integrity() -> Check {
    let vocab = data::vocab();
    let sentences = data::segmented_corpus(&vocab);
    let policy = MaskingPolicy { max_len: 32, ..MaskingPolicy::default() };
    let examples = build_examples(&sentences, &policy, &mut packing_rng(5));
    let (mut seen, mut violations, mut multi) = (0usize, 0usize, 0usize);
    let mut epoch = 0;
    while seen < 10_000 {
        for (i, ex) in examples.iter().enumerate() {
            let b = apply_masking(ex, &policy, &vocab, &mut masking_rng(5, epoch, i as u64));
            if b.strategy != Strategy::WholeWord {
                continue;
            }
            seen += 1;
            let positions: Vec<usize> = (0..b.len()).filter(|&t| b.labels[t] >= 0).collect();
            // rebuild the labeled set from whole spans and compare
            let mut covered = vec![false; b.len()];
            for &t in &positions {
                let Some(&(s, e)) = ex.spans.iter().find(|&&(s, e)| s <= t && t < e) else {
                    violations += 1;
                    continue;
                };
                if (s..e).any(|u| b.labels[u] < 0) {
                    violations += 1;
                }
                covered[s..e].iter_mut().for_each(|c| *c = true);
                multi += usize::from(e - s > 1 && t == s);
            }
            violations += covered.iter().zip(&b.labels).filter(|(&c, &l)| c != (l >= 0)).count();
        }
        epoch += 1;
    }
    ensure(violations == 0, format!("{violations} violations"))?;
    Ok(format!("{seen} whole-word batches, {multi} multi-character words selected, 0 violations"))
}

fn trainability() -> Check {
    let t0 = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = bin(dir.path(), &["--seed", "1", "--set", "total_steps=500", "--set", "out_dir=short", "pretrain"]);
    ensure(out.status.success(), format!("500-step pretrain exit {:?}", out.status.code()))?;
    let log = std::fs::read_to_string(dir.path().join("short/pretrain.tsv")).map_err(|e| e.to_string())?;
    let losses: Vec<f64> = log
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("step"))
        .map(|l| l.split('\t').nth(2).unwrap().parse().unwrap())
        .collect();
    ensure(losses.len() == 500, format!("{} log rows", losses.len()))?;
    let head = losses[..10].iter().sum::<f64>() / 10.0;
    let tail = losses[450..].iter().sum::<f64>() / 50.0;
    let ratio = tail / head;

    let out = bin(dir.path(), &["--seed", "1", "--set", "total_steps=2000", "--set", "out_dir=long", "pretrain"]);
    ensure(out.status.success(), format!("2000-step pretrain exit {:?}", out.status.code()))?;
    let out = bin(dir.path(), &["--seed", "1", "--set", "init_checkpoint=long/pretrain.ckpt", "eval"]);
    ensure(out.status.success(), format!("eval exit {:?}", out.status.code()))?;
    let text = stdout(&out);
    let metric = |name: &str| -> f64 {
        text.lines()
            .find_map(|l| l.strip_prefix(&format!("{name}\t")))
            .and_then(|r| r.split('\t').next()?.parse().ok())
            .unwrap_or(f64::NAN)
    };
    let recovery = metric("mlm_recovery");
    let masked = metric("mlm_recovery_masked");
    let took = t0.elapsed();
    let summary = format!(
        "500 steps: tail/head loss {tail:.3}/{head:.3} = {ratio:.3}; 2000 steps: recovery {recovery:.4} (masked-only {masked:.4}); {:.0}s",
        secs(took)
    );
    ensure(ratio <= 0.5, format!("{summary}: loss ratio above 0.5"))?;
    ensure(recovery >= 0.9 && masked >= 0.9, format!("{summary}: recovery below 0.9"))?;
    ensure(took < Duration::from_secs(900), format!("{summary}: over 15 minutes"))?;
    Ok(summary)
}

fn ablation_structure() -> Check {
    let vocab = data::vocab();
    let res = data::resources();
    let mut checked = 0;
    for (layers, hidden, heads) in [(2, 16, 2), (1, 8, 4), (3, 32, 4)] {
        let mut cfg = EncoderConfig::toy(vocab.len());
        (cfg.layers, cfg.hidden, cfg.heads, cfg.init_std) = (layers, hidden, heads, 0.3);
        let full = Encoder::init(cfg.clone(), 11).map_err(|e| e.to_string())?;
        cfg.use_glyph = false;
        cfg.use_pinyin = false;
        let mut ablated = Encoder::init(cfg.clone(), 11).map_err(|e| e.to_string())?;
        // nonzero biases and gains so every tensor matters
        let mut rng = CounterRng::new(99);
        let names: Vec<String> = ablated.params.names().map(str::to_string).collect();
        for n in &names {
            for v in ablated.params.get_mut(n).unwrap().data_mut() {
                *v += 0.1 * rng.normal();
            }
        }
        let shape = CharShape { layers, hidden, heads, vocab: vocab.len(), max_len: cfg.max_len };
        ensure(expected_shapes(&cfg) == shape.tensors(), "ablated tensors differ from the char-only encoder")?;
        ensure(ablated.param_count() == shape.param_count(), "parameter counts differ")?;
        let (d, ep) = (hidden, cfg.pinyin_dim);
        let extra = GLYPH_INPUT * d + d + 32 * ep + d * 2 * ep + d + 3 * d * d + d;
        ensure(
            full.param_count() == ablated.param_count() + extra,
            format!("full {} vs ablated {} + {extra}", full.param_count(), ablated.param_count()),
        )?;
        let reference = CharEncoder::from_params(shape, &ablated.params, LN_EPS).map_err(|e| e.to_string())?;
        for trial in 0..5 {
            let t = 3 + rng.below(cfg.max_len - 3);
            let ids: Vec<u32> = (0..t).map(|_| rng.below(vocab.len()) as u32).collect();
            let chars: Vec<Option<char>> = ids.iter().map(|&i| vocab.char_of(i)).collect();
            let mut keep = vec![true; t];
            if trial % 2 == 1 {
                keep[t - 1] = false;
            }
            let features = res.features(&ids, &chars).map_err(|e| e.to_string())?;
            let (mut tape, vars) = value_tape(&ablated.params);
            let h = ablated.forward(&mut tape, &vars, &features, &keep, None).map_err(|e| e.to_string())?.hidden;
            let want = reference.forward(&ids, &keep).map_err(|e| e.to_string())?;
            let got = tape.value(h);
            let same = got.shape() == want.shape()
                && got.data().iter().zip(want.data()).all(|(a, b)| a.to_bits() == b.to_bits());
            ensure(same, format!("forward differs (L={layers}, D={hidden}), max diff {:e}", got.max_abs_diff(&want)))?;
            checked += 1;
        }
    }
    let base = {
        let mut c = EncoderConfig::preset(glyphpin::encoder::Preset::Base, 21_128);
        c.use_glyph = false;
        c.use_pinyin = false;
        c
    };
    let base_count: usize = expected_shapes(&base).iter().map(|(_, s)| s.iter().product::<usize>()).sum();
    let base_shape = CharShape { layers: 12, hidden: 768, heads: 12, vocab: 21_128, max_len: 512 };
    ensure(base_count == base_shape.param_count(), "base-shape counts differ")?;
    Ok(format!(
        "shapes and counts equal the char-only encoder (base shape: {base_count}); {checked} forward passes bit-identical"
    ))
}

fn heteronym() -> Check {
    let res = data::resources();
    let ctx_a: Vec<char> = "我们喜欢音乐".chars().collect();
    let ctx_b: Vec<char> = "他们很快乐".chars().collect();
    let ra = resolve_reading(&ctx_a, 5, &res.lexicon);
    let rb = resolve_reading(&ctx_b, 4, &res.lexicon);
    ensure(ra == Some("yue4") && rb == Some("le4"), format!("readings {ra:?} / {rb:?}"))?;
    let sa = to_symbol_sequence(ra).map_err(|e| e.to_string())?;
    let sb = to_symbol_sequence(rb).map_err(|e| e.to_string())?;
    ensure(sa.symbols().starts_with(b"yue4") && sb.symbols().starts_with(b"le4") && sa != sb, "sequences")?;
    let mut cfg = EncoderConfig::toy(res.vocab.len());
    cfg.init_std = 0.1;
    let enc = Encoder::init(cfg, 3).map_err(|e| e.to_string())?;
    let va = char_vectors(&enc.params, &res, &ctx_a, 5, true, true).map_err(|e| e.to_string())?;
    let vb = char_vectors(&enc.params, &res, &ctx_b, 4, true, true).map_err(|e| e.to_string())?;
    ensure(va.char_vec == vb.char_vec && va.glyph == vb.glyph, "char and glyph inputs should agree")?;
    let diff = va.fused.max_abs_diff(&vb.fused);
    ensure(diff > 0.0, "fusion embeddings coincide")?;
    // fused = [char ‖ glyph ‖ pinyin] · W_F + b_F, recomputed by hand
    let w = enc.params.get(fusion::FUSION_WEIGHT).unwrap();
    let b = enc.params.get(fusion::FUSION_BIAS).unwrap();
    let d = b.numel();
    let input: Vec<f64> = [&va.char_vec, va.glyph.as_ref().unwrap(), va.pinyin.as_ref().unwrap()]
        .iter()
        .flat_map(|t| t.data().to_vec())
        .collect();
    let by_hand: Vec<f64> =
        (0..d).map(|j| b.data()[j] + (0..3 * d).map(|i| input[i] * w.data()[i * d + j]).sum::<f64>()).collect();
    let err = by_hand.iter().zip(va.fused.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    ensure(err < 1e-12, format!("fused vector off by {err:e}"))?;
    Ok(format!(
        "乐 in 音乐 → {}, in 快乐 → {}; fused vectors differ by up to {diff:.3e}",
        String::from_utf8_lossy(sa.symbols()),
        String::from_utf8_lossy(sb.symbols())
    ))
}

fn conv_oracle() -> Check {
    let mut rng = CounterRng::new(77);
    for case in 0..1000 {
        let t = 2 + rng.below(9);
        let e = 1 + rng.below(5);
        let f = 1 + rng.below(6);
        let w = 1 + rng.below(t);
        let mut draw = |n: usize| -> Vec<f64> {
            (0..n).map(|_| if case % 3 == 0 { rng.below(7) as f64 - 3.0 } else { rng.normal() }).collect()
        };
        let seq = draw(t * e);
        let filters = draw(f * w * e);
        let bias = draw(f);
        let got = conv1d_maxpool(
            &Tensor::new(&[t, e], seq.clone()).unwrap(),
            &Tensor::new(&[f, w * e], filters.clone()).unwrap(),
            &Tensor::vector(bias.clone()),
            w,
        )
        .map_err(|e| e.to_string())?;
        for fi in 0..f {
            let mut best = f64::NEG_INFINITY;
            for start in 0..=t - w {
                let mut r = bias[fi];
                for k in 0..w {
                    for c in 0..e {
                        r += filters[fi * w * e + k * e + c] * seq[(start + k) * e + c];
                    }
                }
                best = best.max(r);
            }
            ensure(
                got.data()[fi].to_bits() == best.to_bits(),
                format!("case {case} filter {fi}: {} vs {best}", got.data()[fi]),
            )?;
        }
    }
    Ok("1000 random instances equal brute-force window enumeration bit for bit".into())
}

fn reproducibility() -> Check {
    let mut runs = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let args =
            ["--seed", "7", "--set", "total_steps=40", "--set", "dropout=0.1", "--set", "out_dir=run", "pretrain"];
        let out = bin(dir.path(), &args);
        ensure(out.status.success(), format!("exit {:?}", out.status.code()))?;
        let log = std::fs::read(dir.path().join("run/pretrain.tsv")).map_err(|e| e.to_string())?;
        let ckpt = std::fs::read(dir.path().join("run/pretrain.ckpt")).map_err(|e| e.to_string())?;
        runs.push((log, ckpt));
    }
    ensure(runs[0].0 == runs[1].0, "loss logs differ")?;
    ensure(runs[0].1 == runs[1].1, "checkpoints differ")?;
    Ok(format!(
        "two 40-step runs with dropout: logs ({} bytes) and checkpoints ({} bytes) identical",
        runs[0].0.len(),
        runs[0].1.len()
    ))
}

fn format_roundtrips() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    std::fs::write(dir.path().join("charset.txt"), data::CHARSET).map_err(|e| e.to_string())?;
    let out = bin(dir.path(), &["synth-atlas", "charset.txt", "atlas.bin"]);
    ensure(out.status.success(), "synth-atlas failed")?;
    let bytes = std::fs::read(dir.path().join("atlas.bin")).map_err(|e| e.to_string())?;
    let atlas = GlyphAtlas::from_bytes(&bytes).map_err(|e| e.to_string())?;
    ensure(atlas.to_bytes() == bytes, "atlas rewrite differs")?;
    ensure(atlas.len() == 45, format!("{} atlas entries", atlas.len()))?;
    for c in data::vocab().chars() {
        ensure(atlas.lookup(*c as u32) == &synth_glyph(*c as u32), "atlas image changed")?;
    }

    let out = bin(dir.path(), &["--set", "total_steps=3", "--set", "out_dir=run", "pretrain"]);
    ensure(out.status.success(), "pretrain failed")?;
    let path = dir.path().join("run/pretrain.ckpt");
    let bytes = std::fs::read(&path).map_err(|e| e.to_string())?;
    let ck = read_checkpoint(&path).map_err(|e| e.to_string())?;
    ensure(ck.to_bytes().map_err(|e| e.to_string())? == bytes, "checkpoint rewrite differs")?;
    let enc = ck.encoder().map_err(|e| e.to_string())?;
    let copy = dir.path().join("copy.ckpt");
    glyphpin::encoder::save_checkpoint(&copy, &enc, &ck.config).map_err(|e| e.to_string())?;
    ensure(std::fs::read(&copy).map_err(|e| e.to_string())? == bytes, "re-saved checkpoint differs")?;
    Ok(format!(
        "atlas ({} bytes) and checkpoint ({} bytes) rewrite byte-identically",
        atlas.to_bytes().len(),
        bytes.len()
    ))
}

fn main() {
    let checks: [Criterion; 10] = [
        ("gradient correctness", gradient_correctness),
        ("structural fidelity", structural_fidelity),
        ("masking statistics", masking_statistics),
        ("whole-word span integrity", wwm_span_integrity),
        ("trainability", trainability),
        ("ablation structure", ablation_structure),
        ("heteronym mechanism", heteronym),
        ("conv1d_maxpool oracle", conv_oracle),
        ("reproducibility", reproducibility),
        ("format round-trips", format_roundtrips),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        match check() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", checks.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
