use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use contradv::advtrain::{grid_search, kfold_cv, train, Grid};
use contradv::dataio::{
    clean_texts, dataset_stats, load_corpus, stratified_split, synthesize_corpus, tokenize_corpus,
    write_corpus, Disease, Example, LabelScheme, SplitSpec, SynthSpec,
};
use contradv::encoder::{infer, load_checkpoint, predict, save_checkpoint, ModelConfig, ModelParams};
use contradv::explain::{attribute, project_2d, render_attribution, write_scatter, AttributionBaseline};
use contradv::metrics::{classwise_average_f1, score};
use contradv::tensor::Tensor;
use contradv::textprep::{EmojiTable, TokenizedExample, Vocab};

use crate::config::RunConfig;
use crate::manifest::Manifest;
use crate::{
    AttributeArgs, CliError, Command, EmbedVizArgs, EvalArgs, GridArgs, KfoldArgs, ModelArgs, PreprocessArgs,
    RunArgs, StatsArgs, SynthArgs,
};

type Result<T> = std::result::Result<T, CliError>;

pub fn dispatch(command: Command, argv: &[String]) -> Result<()> {
    match command {
        Command::Preprocess(a) => preprocess(a, argv),
        Command::Synth(a) => synth(a, argv),
        Command::Train(a) => train_cmd(a.run, argv),
        Command::Gridsearch(a) => gridsearch(a, argv),
        Command::Kfold(a) => kfold(a, argv),
        Command::Eval(a) => eval(a, argv),
        Command::Attribute(a) => attribute_cmd(a, argv),
        Command::EmbedViz(a) => embed_viz(a, argv),
        Command::Stats(a) => stats(a, argv),
    }
}

fn out_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| CliError::User(format!("cannot create {}: {e}", path.display())))
}

fn load(path: &Path) -> Result<Vec<Example>> {
    if !path.is_file() {
        return Err(CliError::User(format!("corpus {} not found", path.display())));
    }
    let report = load_corpus(path)?;
    if !report.malformed.is_empty() {
        log::warn!("skipped {} malformed lines", report.malformed.len());
    }
    if report.examples.is_empty() {
        return Err(CliError::User(format!(
            "corpus {} has no examples",
            path.display()
        )));
    }
    Ok(report.examples)
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string(value).map_err(|e| CliError::Internal(e.to_string()))
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut out = String::new();
    for r in rows {
        out.push_str(&to_json(r)?);
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

/// Config file, then flags.
fn effective_config(a: &RunArgs) -> Result<RunConfig> {
    let mut c = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let t = &mut c.train;
    if let Some(v) = a.seed {
        t.seed = v;
    }
    if let Some(v) = a.mode {
        t.mode = v;
    }
    if let Some(v) = a.lambda {
        t.lambda = v;
    }
    if let Some(v) = a.epsilon {
        t.epsilon = v;
    }
    if let Some(v) = a.tau {
        t.tau = v;
    }
    if let Some(v) = a.lr {
        t.learning_rate = v;
    }
    if let Some(v) = a.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = a.epochs {
        t.epochs = v;
    }
    if let Some(v) = a.fgsm_direction {
        t.fgsm_direction = v;
    }
    t.validate()?;
    c.model(10, 2).validate()?;
    Ok(c)
}

fn config_json(c: &RunConfig, scheme: LabelScheme) -> Result<serde_json::Value> {
    let mut v = serde_json::to_value(c).map_err(|e| CliError::Internal(e.to_string()))?;
    v["scheme"] = serde_json::to_value(scheme).map_err(|e| CliError::Internal(e.to_string()))?;
    Ok(v)
}

/// A corpus split, encoded with a vocabulary built on its training part.
struct Prepared {
    vocab: Vocab,
    model: ModelConfig,
    train: Vec<TokenizedExample>,
    val: Vec<TokenizedExample>,
    test: Vec<TokenizedExample>,
}

fn prepare(examples: &[Example], c: &RunConfig, scheme: LabelScheme) -> Result<Prepared> {
    let emojis = EmojiTable::builtin();
    let split = stratified_split(
        examples,
        &SplitSpec {
            seed: c.train.seed,
            ..SplitSpec::default()
        },
    )?;
    let vocab = Vocab::build(&clean_texts(&split.train, &emojis), 1)?;
    let tok = |ex: &[Example]| tokenize_corpus(ex, &vocab, &emojis, c.max_len, scheme);
    let (train, val, test) = (tok(&split.train)?, tok(&split.val)?, tok(&split.test)?);
    let model = c.model(vocab.len(), scheme.n_classes());
    model.validate()?;
    Ok(Prepared {
        vocab,
        model,
        train,
        val,
        test,
    })
}

fn labels_of(examples: &[TokenizedExample]) -> Vec<usize> {
    examples.iter().map(|e| e.label).collect()
}

fn metrics_json(
    params: &ModelParams,
    model: &ModelConfig,
    examples: &[TokenizedExample],
) -> Result<(serde_json::Value, Vec<usize>)> {
    let preds = predict(params, model, examples, 64)?;
    let labels = labels_of(examples);
    let groups: Vec<&str> = examples.iter().map(|e| e.disease.as_str()).collect();
    let expected: Vec<&str> = Disease::TEN.iter().map(|d| d.as_str()).collect();
    let overall = score(&preds, &labels, model.n_classes);
    let classwise = classwise_average_f1(&preds, &labels, &groups, &expected, model.n_classes);
    Ok((
        json!({
            "n": examples.len(),
            "precision": overall.precision,
            "recall": overall.recall,
            "f1": overall.f1,
            "classwise": classwise,
        }),
        preds,
    ))
}

fn preprocess(a: PreprocessArgs, argv: &[String]) -> Result<()> {
    let examples = load(&a.corpus)?;
    out_dir(&a.out.out)?;
    let emojis = EmojiTable::builtin();
    let cleaned: Vec<Example> = examples
        .iter()
        .zip(clean_texts(&examples, &emojis))
        .filter_map(|(ex, text)| {
            if text.is_empty() {
                log::warn!("dropping example that cleans to nothing: {:?}", ex.raw_text);
                None
            } else {
                Some(Example {
                    raw_text: text,
                    ..ex.clone()
                })
            }
        })
        .collect();
    let texts: Vec<&str> = cleaned.iter().map(|e| e.raw_text.as_str()).collect();
    let vocab = Vocab::build(&texts, a.min_count)?;
    let out = &a.out.out;
    write_corpus(fs::File::create(out.join("clean.jsonl"))?, &cleaned)?;
    fs::write(out.join("vocab.txt"), vocab.to_text())?;
    let mut m = Manifest::new("preprocess", argv, 0, json!({ "min_count": a.min_count }));
    m.add_input(&a.corpus)?;
    m.add_output(out, "clean.jsonl")?;
    m.add_output(out, "vocab.txt")?;
    m.write(out)?;
    println!("{} examples, vocabulary {}", cleaned.len(), vocab.len());
    Ok(())
}

fn synth(a: SynthArgs, argv: &[String]) -> Result<()> {
    if a.n < 2 {
        return Err(CliError::User("--n must be at least 2".into()));
    }
    out_dir(&a.out.out)?;
    let spec = SynthSpec::default();
    let corpus = synthesize_corpus(a.n, a.seed, &spec);
    let out = &a.out.out;
    write_corpus(fs::File::create(out.join("corpus.jsonl"))?, &corpus)?;
    let mut m = Manifest::new("synth", argv, a.seed, json!({ "n": a.n, "spec": spec }));
    m.add_output(out, "corpus.jsonl")?;
    m.write(out)?;
    println!("wrote {} examples", corpus.len());
    Ok(())
}

fn train_cmd(a: RunArgs, argv: &[String]) -> Result<()> {
    let c = effective_config(&a)?;
    let examples = load(&a.corpus)?;
    out_dir(&a.out)?;
    let p = prepare(&examples, &c, a.scheme)?;
    let initial = ModelParams::init(&p.model, c.train.seed)?;
    let outcome = train(&initial, &p.model, &c.train, &p.train, &p.val)?;
    let out = &a.out;

    write_jsonl(&out.join("epochs.jsonl"), &outcome.history)?;
    save_checkpoint(out.join("model.ckpt"), &p.model, &outcome.best_params)?;
    fs::write(out.join("vocab.txt"), p.vocab.to_text())?;
    fs::write(out.join("config.txt"), c.to_text())?;
    let (test, _) = metrics_json(&outcome.best_params, &p.model, &p.test)?;
    let summary = json!({
        "best_epoch": outcome.best_epoch,
        "validation": outcome.best(),
        "initial_pair_cosine": outcome.initial_pair_cosine,
        "sizes": { "train": p.train.len(), "val": p.val.len(), "test": p.test.len() },
        "test": test,
    });
    write_json(&out.join("metrics.json"), &summary)?;

    let mut m = Manifest::new("train", argv, c.train.seed, config_json(&c, a.scheme)?);
    m.add_input(&a.corpus)?;
    for f in [
        "epochs.jsonl",
        "model.ckpt",
        "vocab.txt",
        "config.txt",
        "metrics.json",
    ] {
        m.add_output(out, f)?;
    }
    m.write(out)?;
    for r in &outcome.history {
        println!(
            "epoch {:>2}  loss {:.5}  val P {:.4} R {:.4} F1 {:.4}",
            r.epoch, r.combined, r.val_precision, r.val_recall, r.val_f1
        );
    }
    println!("test F1 {:.4}", test["f1"].as_f64().unwrap_or(0.0));
    Ok(())
}

fn gridsearch(a: GridArgs, argv: &[String]) -> Result<()> {
    let c = effective_config(&a.run)?;
    let full = Grid::full();
    let grid = Grid {
        lambdas: a.lambdas.clone().unwrap_or(full.lambdas),
        epsilons: a.epsilons.clone().unwrap_or(full.epsilons),
        taus: a.taus.clone().unwrap_or(full.taus),
        batch_sizes: a.batch_sizes.clone().unwrap_or(full.batch_sizes),
    };
    if grid.is_empty() {
        return Err(CliError::User("every grid axis needs at least one value".into()));
    }
    let examples = load(&a.run.corpus)?;
    out_dir(&a.run.out)?;
    let p = prepare(&examples, &c, a.run.scheme)?;
    let initial = ModelParams::init(&p.model, c.train.seed)?;
    let cells = grid_search(&c.train, &grid, &initial, &p.model, &p.train, &p.val, a.parallel)?;
    let rows: Vec<serde_json::Value> = cells
        .iter()
        .enumerate()
        .map(|(rank, cell)| {
            json!({
                "rank": rank + 1,
                "cell": cell.index,
                "lambda": cell.config.lambda,
                "epsilon": cell.config.epsilon,
                "tau": cell.config.tau,
                "batch_size": cell.config.batch_size,
                "best_epoch": cell.best_epoch,
                "val_precision": cell.val.precision,
                "val_recall": cell.val.recall,
                "val_f1": cell.val.f1,
            })
        })
        .collect();
    let out = &a.run.out;
    write_jsonl(&out.join("grid.jsonl"), &rows)?;
    let best = RunConfig {
        train: cells[0].config.clone(),
        ..c.clone()
    };
    fs::write(out.join("selected.txt"), best.to_text())?;
    let mut cfg = config_json(&c, a.run.scheme)?;
    cfg["grid"] = serde_json::to_value(&grid).map_err(|e| CliError::Internal(e.to_string()))?;
    let mut m = Manifest::new("gridsearch", argv, c.train.seed, cfg);
    m.add_input(&a.run.corpus)?;
    m.add_output(out, "grid.jsonl")?;
    m.add_output(out, "selected.txt")?;
    m.write(out)?;
    println!(
        "{} cells; best λ={} ε={} τ={} batch={} val F1 {:.4}",
        cells.len(),
        best.train.lambda,
        best.train.epsilon,
        best.train.tau,
        best.train.batch_size,
        cells[0].val.f1
    );
    Ok(())
}

fn kfold(a: KfoldArgs, argv: &[String]) -> Result<()> {
    let c = effective_config(&a.run)?;
    let examples = load(&a.run.corpus)?;
    out_dir(&a.run.out)?;
    let emojis = EmojiTable::builtin();
    let vocab = Vocab::build(&clean_texts(&examples, &emojis), 1)?;
    let data = tokenize_corpus(&examples, &vocab, &emojis, c.max_len, a.run.scheme)?;
    let model = c.model(vocab.len(), a.run.scheme.n_classes());
    let initial = ModelParams::init(&model, c.train.seed)?;
    let report = kfold_cv(&initial, &model, &c.train, &data, a.k, a.parallel)?;
    let rows: Vec<serde_json::Value> = report
        .folds
        .iter()
        .map(|f| {
            json!({
                "fold": f.fold,
                "train_size": f.train_size,
                "val_size": f.val_size,
                "best_epoch": f.best_epoch,
                "val_precision": f.val.precision,
                "val_recall": f.val.recall,
                "val_f1": f.val.f1,
            })
        })
        .collect();
    let out = &a.run.out;
    write_jsonl(&out.join("folds.jsonl"), &rows)?;
    write_json(
        &out.join("summary.json"),
        &json!({
            "k": a.k,
            "mean_precision": report.mean.precision,
            "mean_recall": report.mean.recall,
            "mean_f1": report.mean.f1,
        }),
    )?;
    let mut cfg = config_json(&c, a.run.scheme)?;
    cfg["k"] = json!(a.k);
    let mut m = Manifest::new("kfold", argv, c.train.seed, cfg);
    m.add_input(&a.run.corpus)?;
    m.add_output(out, "folds.jsonl")?;
    m.add_output(out, "summary.json")?;
    m.write(out)?;
    println!(
        "{}-fold mean P {:.4} R {:.4} F1 {:.4}",
        a.k, report.mean.precision, report.mean.recall, report.mean.f1
    );
    Ok(())
}

struct Loaded {
    model: ModelConfig,
    params: ModelParams,
    vocab: Vocab,
    vocab_path: PathBuf,
    scheme: LabelScheme,
    examples: Vec<Example>,
    data: Vec<TokenizedExample>,
}

fn load_model(a: &ModelArgs) -> Result<Loaded> {
    let (model, params) = load_checkpoint(&a.checkpoint)
        .map_err(|e| CliError::User(format!("cannot load checkpoint {}: {e}", a.checkpoint.display())))?;
    let vocab_path = a.vocab.clone().unwrap_or_else(|| {
        a.checkpoint
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join("vocab.txt")
    });
    let text = fs::read_to_string(&vocab_path)
        .map_err(|e| CliError::User(format!("cannot read vocabulary {}: {e}", vocab_path.display())))?;
    let vocab = Vocab::from_text(&text)?;
    if vocab.len() != model.vocab_size {
        return Err(CliError::User(format!(
            "vocabulary has {} tokens but the checkpoint expects {}",
            vocab.len(),
            model.vocab_size
        )));
    }
    let scheme = match model.n_classes {
        2 => LabelScheme::Binary,
        3 => LabelScheme::ThreeClass,
        n => return Err(CliError::User(format!("checkpoint has {n} classes"))),
    };
    let examples = load(&a.corpus)?;
    let data = tokenize_corpus(&examples, &vocab, &EmojiTable::builtin(), model.max_len, scheme)?;
    Ok(Loaded {
        model,
        params,
        vocab,
        vocab_path,
        scheme,
        examples,
        data,
    })
}

fn model_manifest(
    command: &str,
    argv: &[String],
    a: &ModelArgs,
    l: &Loaded,
    extra: serde_json::Value,
) -> Result<Manifest> {
    let mut cfg = json!({ "model": l.model, "scheme": l.scheme });
    if let (Some(obj), serde_json::Value::Object(more)) = (cfg.as_object_mut(), extra) {
        obj.extend(more);
    }
    let mut m = Manifest::new(command, argv, 0, cfg);
    m.add_input(&a.checkpoint)?;
    m.add_input(&l.vocab_path)?;
    m.add_input(&a.corpus)?;
    Ok(m)
}

fn eval(a: EvalArgs, argv: &[String]) -> Result<()> {
    let l = load_model(&a.model)?;
    out_dir(&a.model.out.out)?;
    let (metrics, preds) = metrics_json(&l.params, &l.model, &l.data)?;
    let out = &a.model.out.out;
    write_json(&out.join("metrics.json"), &metrics)?;
    let rows: Vec<serde_json::Value> = l
        .data
        .iter()
        .zip(&preds)
        .enumerate()
        .map(|(i, (ex, p))| json!({ "index": i, "label": ex.label, "predicted": p, "disease": ex.disease }))
        .collect();
    write_jsonl(&out.join("predictions.jsonl"), &rows)?;
    let mut m = model_manifest("eval", argv, &a.model, &l, json!({ "batch_size": a.batch_size }))?;
    m.add_output(out, "metrics.json")?;
    m.add_output(out, "predictions.jsonl")?;
    m.write(out)?;
    println!(
        "n {}  P {:.4} R {:.4} F1 {:.4}",
        l.data.len(),
        metrics["precision"].as_f64().unwrap_or(0.0),
        metrics["recall"].as_f64().unwrap_or(0.0),
        metrics["f1"].as_f64().unwrap_or(0.0)
    );
    Ok(())
}

fn attribute_cmd(a: AttributeArgs, argv: &[String]) -> Result<()> {
    let baseline = match a.baseline.as_str() {
        "pad" => AttributionBaseline::Pad,
        "zero" => AttributionBaseline::Zero,
        other => {
            return Err(CliError::User(format!(
                "unknown baseline {other:?} (pad or zero)"
            )))
        }
    };
    let l = load_model(&a.model)?;
    out_dir(&a.model.out.out)?;
    let mut records = Vec::new();
    let mut html = String::from("<!doctype html>\n<meta charset=\"utf-8\">\n");
    let mut ansi = String::new();
    for (i, ex) in l.data.iter().take(a.n).enumerate() {
        let attr = attribute(&l.params, &l.model, ex, Some(&l.vocab), None, a.steps, baseline)?;
        let r = render_attribution(&attr);
        html.push_str(&format!(
            "<p>label {} predicted {}: {}</p>\n",
            attr.label, attr.predicted, r.html
        ));
        ansi.push_str(&r.ansi);
        ansi.push('\n');
        println!(
            "[{i}] label {} predicted {}  {}",
            attr.label, attr.predicted, r.ansi
        );
        records.push(json!({
            "index": i,
            "text": l.examples[i].raw_text,
            "attribution": attr,
            "relative_gap": attr.relative_gap(),
        }));
    }
    let out = &a.model.out.out;
    write_jsonl(&out.join("attributions.jsonl"), &records)?;
    fs::write(out.join("attributions.html"), html)?;
    fs::write(out.join("attributions.ansi"), ansi)?;
    let mut m = model_manifest(
        "attribute",
        argv,
        &a.model,
        &l,
        json!({ "steps": a.steps, "n": a.n, "baseline": baseline }),
    )?;
    for f in ["attributions.jsonl", "attributions.html", "attributions.ansi"] {
        m.add_output(out, f)?;
    }
    m.write(out)?;
    Ok(())
}

fn embed_viz(a: EmbedVizArgs, argv: &[String]) -> Result<()> {
    let l = load_model(&a.model)?;
    if l.data.len() < 2 {
        return Err(CliError::User("need at least 2 examples to project".into()));
    }
    out_dir(&a.model.out.out)?;
    let mut h_rows = Vec::new();
    let mut z_rows = Vec::new();
    for chunk in l.data.chunks(64) {
        let inf = infer(&l.params, &l.model, chunk)?;
        for i in 0..inf.h_cls.rows() {
            h_rows.push(inf.h_cls.row(i).to_vec());
            z_rows.push(inf.projection.row(i).to_vec());
        }
    }
    let labels = labels_of(&l.data);
    let diseases: Vec<String> = l.data.iter().map(|e| e.disease.clone()).collect();
    let out = &a.model.out.out;
    for (name, rows, file) in [
        ("h_cls", &h_rows, "scatter_h_cls.csv"),
        ("projection", &z_rows, "scatter_projection.csv"),
    ] {
        let points = project_2d(&Tensor::from_rows(rows).map_err(|e| CliError::Internal(e.to_string()))?)?;
        let mut f = std::io::BufWriter::new(fs::File::create(out.join(file))?);
        write_scatter(&mut f, &points, &labels, &diseases, name)?;
        f.flush()?;
    }
    let mut m = model_manifest("embed-viz", argv, &a.model, &l, json!({}))?;
    m.add_output(out, "scatter_h_cls.csv")?;
    m.add_output(out, "scatter_projection.csv")?;
    m.write(out)?;
    println!("projected {} examples", l.data.len());
    Ok(())
}

fn stats(a: StatsArgs, argv: &[String]) -> Result<()> {
    let examples = load(&a.corpus)?;
    out_dir(&a.out.out)?;
    let table = dataset_stats(&examples).render();
    fs::write(a.out.out.join("stats.txt"), &table)?;
    let mut m = Manifest::new("stats", argv, 0, json!({}));
    m.add_input(&a.corpus)?;
    m.add_output(&a.out.out, "stats.txt")?;
    m.write(&a.out.out)?;
    print!("{table}");
    Ok(())
}
