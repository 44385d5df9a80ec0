//! Trains the toy encoder on a synthetic corpus and prints the epoch log.
//!
//! `cargo run --release --example synthetic_run -- [mode] [n] [lr] [epochs]`

use contradv::advtrain::{train, Mode, TrainConfig};
use contradv::dataio::{
    clean_texts, stratified_split, synthesize_corpus, tokenize_corpus, LabelScheme, SplitSpec, SynthSpec,
};
use contradv::encoder::{ModelConfig, ModelParams};
use contradv::textprep::{EmojiTable, Vocab};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().collect();
    let mode: Mode = args.get(1).map_or("baseline", String::as_str).parse()?;
    let n: usize = args.get(2).map_or(Ok(2000), |s| s.parse())?;
    let lr: f64 = args.get(3).map_or(Ok(1e-3), |s| s.parse())?;
    let epochs: usize = args.get(4).map_or(Ok(10), |s| s.parse())?;

    let emojis = EmojiTable::builtin();
    let corpus = synthesize_corpus(n, 7, &SynthSpec::default());
    let split = stratified_split(
        &corpus,
        &SplitSpec {
            seed: 7,
            ..SplitSpec::default()
        },
    )?;
    let vocab = Vocab::build(&clean_texts(&split.train, &emojis), 1)?;
    let max_len = 32;
    let tok = |ex| tokenize_corpus(ex, &vocab, &emojis, max_len, LabelScheme::Binary);
    let (tr, va) = (tok(&split.train)?, tok(&split.val)?);
    let model = ModelConfig::toy(vocab.len(), 2, max_len);
    let params = ModelParams::init(&model, 7)?;
    let config = TrainConfig {
        mode,
        learning_rate: lr,
        epochs,
        seed: 7,
        ..TrainConfig::default()
    };
    let start = std::time::Instant::now();
    let out = train(&params, &model, &config, &tr, &va)?;
    println!("initial pair cosine {:.4}", out.initial_pair_cosine);
    for r in &out.history {
        println!(
            "epoch {:2} loss {:.4} ctr {:?} val f1 {:.4} cos {:.4}",
            r.epoch, r.combined, r.ctr, r.val_f1, r.pair_cosine
        );
    }
    println!("{:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
