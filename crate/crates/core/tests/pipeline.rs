use contradv::advtrain::{evaluate, train, Mode, TrainConfig};
use contradv::dataio::{
    clean_texts, stratified_split, synthesize_corpus, tokenize_corpus, LabelScheme, SplitSpec, SynthSpec,
};
use contradv::encoder::{predict, read_checkpoint, write_checkpoint, ModelConfig, ModelParams};
use contradv::explain::{attribute, AttributionBaseline};
use contradv::textprep::{EmojiTable, TokenizedExample, Vocab};

fn small(vocab_size: usize) -> ModelConfig {
    ModelConfig {
        hidden_size: 16,
        n_heads: 2,
        ff_size: 32,
        proj_size: 8,
        ..ModelConfig::toy(vocab_size, 2, 24)
    }
}

fn data() -> (
    Vocab,
    Vec<TokenizedExample>,
    Vec<TokenizedExample>,
    Vec<TokenizedExample>,
) {
    let emojis = EmojiTable::builtin();
    let corpus = synthesize_corpus(300, 3, &SynthSpec::default());
    let split = stratified_split(
        &corpus,
        &SplitSpec {
            seed: 3,
            ..SplitSpec::default()
        },
    )
    .unwrap();
    let vocab = Vocab::build(&clean_texts(&split.train, &emojis), 1).unwrap();
    let tok = |ex| tokenize_corpus(ex, &vocab, &emojis, 24, LabelScheme::Binary).unwrap();
    let (tr, va, te) = (tok(&split.train), tok(&split.val), tok(&split.test));
    (vocab, tr, va, te)
}

#[test]
fn synth_to_attribution() {
    let (vocab, tr, va, te) = data();
    assert_eq!((tr.len(), va.len(), te.len()), (195, 45, 60));
    let model = small(vocab.len());
    let init = ModelParams::init(&model, 3).unwrap();
    let config = TrainConfig {
        mode: Mode::ContrastiveAdversarial,
        learning_rate: 1e-3,
        epochs: 3,
        seed: 3,
        ..TrainConfig::default()
    };
    let out = train(&init, &model, &config, &tr, &va).unwrap();
    assert_eq!(out.history.len(), 3);
    assert!(out
        .history
        .iter()
        .all(|r| r.combined.is_finite() && r.ctr.is_some()));
    assert!(out.history[2].combined < out.history[0].combined);

    let mut buf = Vec::new();
    write_checkpoint(&mut buf, &model, &out.best_params).unwrap();
    let (model2, params2) = read_checkpoint(buf.as_slice()).unwrap();
    assert_eq!(model2, model);
    assert_eq!(params2, out.best_params);
    assert_eq!(
        predict(&params2, &model2, &te, 16).unwrap(),
        predict(&out.best_params, &model, &te, 7).unwrap()
    );
    let val = evaluate(&params2, &model2, &va, 16).unwrap();
    assert_eq!(val, out.best().unwrap().val());

    for ex in te.iter().take(5) {
        let a = attribute(
            &params2,
            &model2,
            ex,
            Some(&vocab),
            None,
            64,
            AttributionBaseline::Pad,
        )
        .unwrap();
        assert_eq!(a.tokens.len(), ex.attention_len);
        assert!(a.relative_gap() <= 0.05, "{}", a.relative_gap());
    }
}

#[test]
fn training_is_reproducible() {
    let (vocab, tr, va, _) = data();
    let model = small(vocab.len());
    let init = ModelParams::init(&model, 5).unwrap();
    let config = TrainConfig {
        learning_rate: 1e-3,
        epochs: 1,
        ..TrainConfig::default()
    };
    let a = train(&init, &model, &config, &tr, &va).unwrap();
    let b = train(&init, &model, &config, &tr, &va).unwrap();
    assert_eq!(a.final_params, b.final_params);
    assert_eq!(a.history, b.history);
}
