use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use policylens::classify::{train, ClassifierKind, ClassifierSpec, ModelFile, PredictionRecord};
use policylens::condense::{shorten, SentenceModel};
use policylens::corpus::{
    load_corpus, segment_sentences, sentence_records, LabelSet, SentenceLabel, SentenceRecord,
};
use policylens::evaluate::{cross_validate, cross_validate_with_assignment, CvReport};
use policylens::features::{build_dataset, build_vocabulary, Dataset, Vocabulary};
use policylens::jsonl;
use policylens::preprocess::{
    preprocess_record, preprocess_sentence, term_frequency, StopwordList, TokenizedSentence,
};
use policylens::report::{
    annotate, emit_graph_dot, emit_highlight_html, file_stem_for, run_pipeline, PipelineConfig,
};
use policylens::topics::{
    all_seeds, assign_topics, default_topics, distribution, filter_rare_terms, fit_labeled_lda, Granularity,
    TopicAssignment, TopicConfig, TopicModel,
};

use crate::{
    ByArg, Cli, Command, EvalArgs, HyperArgs, IngestArgs, PredictArgs, PreprocessArgs, ReportArgs, RunArgs,
    ShortenArgs, TopicsAssignArgs, TopicsCommand, TopicsDistArgs, TopicsFitArgs, TrainArgs, UsageError,
};

pub fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Ingest(a) => ingest(cli, a),
        Command::Preprocess(a) => preprocess(cli, a),
        Command::Train(a) => train_cmd(cli, a),
        Command::Eval(a) => eval(cli, a),
        Command::Predict(a) => predict(cli, a),
        Command::Shorten(a) => shorten_cmd(cli, a),
        Command::Topics(TopicsCommand::Fit(a)) => topics_fit(cli, a),
        Command::Topics(TopicsCommand::Assign(a)) => topics_assign(cli, a),
        Command::Topics(TopicsCommand::Dist(a)) => topics_dist(cli, a),
        Command::Report(a) => report(cli, a),
        Command::Run(a) => run(cli, a),
    }
}

fn out_path(cli: &Cli, explicit: &Option<PathBuf>, default_name: &str) -> PathBuf {
    explicit.clone().unwrap_or_else(|| cli.out_dir.join(default_name))
}

fn stoplist(path: &Option<PathBuf>) -> Result<StopwordList> {
    Ok(match path {
        Some(p) => StopwordList::from_file(p)?,
        None => StopwordList::default(),
    })
}

fn ingest(cli: &Cli, a: &IngestArgs) -> Result<()> {
    let report = load_corpus(&a.corpus)?;
    for issue in report.errors.iter().chain(&report.warnings) {
        log::warn!("{}: {}", issue.path.display(), issue.message);
    }
    if report.documents.is_empty() {
        return Err(policylens::Error::EmptyCorpus(a.corpus.display().to_string()).into());
    }
    let labels = a.labels.as_deref().map(LabelSet::load).transpose()?;
    let records = sentence_records(&report.documents, labels.as_ref());
    let out = out_path(cli, &a.out, "sentences.jsonl");
    jsonl::write_jsonl(&out, &records)?;
    println!(
        "{} documents, {} sentences -> {}",
        report.documents.len(),
        records.len(),
        out.display()
    );
    Ok(())
}

fn preprocess(cli: &Cli, a: &PreprocessArgs) -> Result<()> {
    let records: Vec<SentenceRecord> = jsonl::read_jsonl(&a.input)?;
    let stoplist = stoplist(&a.stoplist)?;
    let tokenized: Vec<TokenizedSentence> = records.iter().map(|r| preprocess_record(r, &stoplist)).collect();
    let out = out_path(cli, &a.out, "stems.jsonl");
    jsonl::write_jsonl(&out, &tokenized)?;
    let freq = term_frequency(&tokenized);
    if let Some(p) = &a.emit_freq {
        jsonl::write_file(p, freq.to_csv())?;
    }
    if a.emit_vocab.is_some() || a.emit_dataset.is_some() {
        let vocab = build_vocabulary(&freq, a.top_k)?;
        if let Some(p) = &a.emit_vocab {
            vocab.save(p)?;
        }
        if let Some(p) = &a.emit_dataset {
            jsonl::write_file(p, build_dataset(&tokenized, &vocab)?.to_csv())?;
        }
    }
    println!(
        "{} sentences, {} distinct stems -> {}",
        tokenized.len(),
        freq.len(),
        out.display()
    );
    Ok(())
}

/// The default spec for `kind`, with any given hyperparameters applied.
fn classifier_spec(kind: ClassifierKind, hyper: &HyperArgs, seed: Option<u64>) -> Result<ClassifierSpec> {
    let mut spec = ClassifierSpec::default_for(kind);
    let misplaced = |flag: &str| UsageError(format!("--{flag} does not apply to {kind}"));
    match &mut spec {
        ClassifierSpec::Nb { alpha } => {
            if let Some(v) = hyper.alpha {
                *alpha = v;
            }
        }
        ClassifierSpec::Knn { k } => {
            if let Some(v) = hyper.k {
                *k = v;
            }
        }
        ClassifierSpec::Svm {
            lambda,
            epochs,
            seed: s,
        } => {
            if let Some(v) = hyper.lambda {
                *lambda = v;
            }
            if let Some(v) = hyper.epochs {
                *epochs = v;
            }
            if let Some(v) = seed {
                *s = v;
            }
        }
    }
    for (set, flag, owner) in [
        (hyper.alpha.is_some(), "alpha", ClassifierKind::Nb),
        (hyper.k.is_some(), "k", ClassifierKind::Knn),
        (hyper.lambda.is_some(), "lambda", ClassifierKind::Svm),
        (hyper.epochs.is_some(), "epochs", ClassifierKind::Svm),
    ] {
        if set && owner != kind {
            return Err(misplaced(flag).into());
        }
    }
    spec.validate()?;
    Ok(spec)
}

fn train_cmd(cli: &Cli, a: &TrainArgs) -> Result<()> {
    let spec = classifier_spec(a.model.into(), &a.hyper, cli.seed)?;
    let vocab = Vocabulary::load(&a.vocab)?;
    let data = Dataset::load(&a.data, vocab)?;
    let model = ModelFile::new(train(&spec, &data)?, &data.vocabulary);
    let out = out_path(cli, &a.out, "model.json");
    model.save(&out)?;
    println!(
        "{} model on {} rows -> {}",
        spec.kind(),
        data.len(),
        out.display()
    );
    Ok(())
}

fn eval(cli: &Cli, a: &EvalArgs) -> Result<()> {
    let spec = classifier_spec(a.model.into(), &a.hyper, cli.seed)?;
    let vocab_path = match &a.vocab {
        Some(p) => p.clone(),
        None => a.data.with_file_name("vocab.txt"),
    };
    let vocab = Vocabulary::load(&vocab_path)?;
    let data = Dataset::load(&a.data, vocab)?;
    let report = match &a.replay {
        Some(p) => {
            let previous: CvReport = serde_json::from_str(&jsonl::read_to_string(p)?)
                .with_context(|| format!("reading {}", p.display()))?;
            let seed = cli.seed.unwrap_or(previous.seed);
            cross_validate_with_assignment(&spec, &data, &previous.fold_assignment, seed)?
        }
        None => cross_validate(
            &spec,
            &data,
            a.folds,
            cli.seed.unwrap_or(ClassifierSpec::DEFAULT_SEED),
        )?,
    };
    let out = out_path(cli, &a.out, "report.json");
    jsonl::write_file(&out, report.to_json()?)?;
    let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
    println!(
        "{}: precision {} recall {} tnr {} accuracy {} -> {}",
        spec.kind(),
        fmt(report.aggregate.precision),
        fmt(report.aggregate.recall),
        fmt(report.aggregate.true_negative_rate),
        fmt(report.aggregate.accuracy),
        out.display()
    );
    Ok(())
}

/// The model's own vocabulary, checked against `--vocab` when given.
fn model_vocabulary(model: &ModelFile, vocab: &Option<PathBuf>) -> Result<Vocabulary> {
    let own = model.vocabulary()?;
    if let Some(p) = vocab {
        model.check_vocabulary(&Vocabulary::load(p)?)?;
    }
    Ok(own)
}

fn predict(cli: &Cli, a: &PredictArgs) -> Result<()> {
    let model = ModelFile::load(&a.model)?;
    let vocab = model_vocabulary(&model, &a.vocab)?;
    let stoplist = stoplist(&a.stoplist)?;
    let sm = SentenceModel::new(&model, &vocab, &stoplist)?;
    let records: Vec<SentenceRecord> = jsonl::read_jsonl(&a.input)?;
    let predictions = records
        .into_iter()
        .map(|r| {
            let p = sm.predict_text(&r.text)?;
            Ok(PredictionRecord {
                doc_id: r.doc_id,
                index: r.index,
                text: r.text,
                label: p.label,
                score: p.score,
            })
        })
        .collect::<policylens::Result<Vec<_>>>()?;
    let out = out_path(cli, &a.out, "predictions.jsonl");
    jsonl::write_jsonl(&out, &predictions)?;
    let sensitive = predictions.iter().filter(|p| p.label.is_sensitive()).count();
    println!("{sensitive}/{} sensitive -> {}", predictions.len(), out.display());
    Ok(())
}

fn shorten_cmd(cli: &Cli, a: &ShortenArgs) -> Result<()> {
    let model = ModelFile::load(&a.model)?;
    let vocab = model_vocabulary(&model, &a.vocab)?;
    let stoplist = stoplist(&a.stoplist)?;
    let sm = SentenceModel::new(&model, &vocab, &stoplist)?;
    let report = load_corpus(&a.input)?;
    let doc = report
        .documents
        .first()
        .ok_or_else(|| policylens::Error::EmptyCorpus(a.input.display().to_string()))?;
    let short = shorten(doc, &sm)?;
    let stem = file_stem_for(&doc.id);
    let out = out_path(cli, &a.out, &format!("{stem}.short.txt"));
    let stats = out_path(cli, &a.stats, &format!("{stem}.stats.json"));
    jsonl::write_file(&out, short.render(doc))?;
    jsonl::write_file(&stats, serde_json::to_string_pretty(&short.stats())? + "\n")?;
    println!(
        "kept {}/{} sentences, {} -> {} words -> {}",
        short.kept.len(),
        short.original_sentences,
        short.original_words,
        short.kept_words,
        out.display()
    );
    Ok(())
}

/// Stems records with labels filled in from `predictions` where present.
fn labelled_stems(input: &Path, predictions: &Option<PathBuf>) -> Result<Vec<TokenizedSentence>> {
    let mut stems: Vec<TokenizedSentence> = jsonl::read_jsonl(input)?;
    if let Some(p) = predictions {
        let preds: Vec<PredictionRecord> = jsonl::read_jsonl(p)?;
        let by_key: HashMap<(&str, usize), SentenceLabel> = preds
            .iter()
            .map(|r| ((r.doc_id.as_str(), r.index), r.label))
            .collect();
        for ts in &mut stems {
            if let Some(&l) = by_key.get(&(ts.doc_id.as_str(), ts.sentence_index)) {
                ts.label = Some(l);
            }
        }
    }
    Ok(stems)
}

/// Sensitive sentences only; unlabelled input is used whole, with a warning.
fn sensitive_only(stems: Vec<TokenizedSentence>) -> Vec<TokenizedSentence> {
    if stems.iter().all(|s| s.label.is_none()) {
        log::warn!("no labels on input sentences; treating all as sensitive");
        return stems;
    }
    stems
        .into_iter()
        .filter(|s| s.label.is_some_and(SentenceLabel::is_sensitive))
        .collect()
}

fn topics_fit(cli: &Cli, a: &TopicsFitArgs) -> Result<()> {
    let mut config = TopicConfig::default();
    if let Some(v) = a.iterations {
        config.iterations = v;
    }
    if let Some(v) = a.alpha {
        config.alpha = v;
    }
    if let Some(v) = a.beta {
        config.beta = v;
    }
    if let Some(v) = a.seed_boost {
        config.seed_boost = v;
    }
    if let Some(v) = a.min_policy_df {
        config.min_policy_df = v;
    }
    if let Some(v) = cli.seed {
        config.rng_seed = v;
    }
    let corpus = sensitive_only(labelled_stems(&a.input, &a.predictions)?);
    let topics = default_topics();
    let filtered = filter_rare_terms(&corpus, config.min_policy_df, &all_seeds(&topics));
    let model = fit_labeled_lda(&filtered, &topics, &config)?;
    let out = out_path(cli, &a.out, "topics.json");
    model.save(&out)?;
    println!(
        "{} sentences, {} stems -> {}",
        corpus.len(),
        model.vocabulary.len(),
        out.display()
    );
    Ok(())
}

fn topics_assign(cli: &Cli, a: &TopicsAssignArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&a.threshold) {
        return Err(UsageError("--threshold must be within [0, 1]".into()).into());
    }
    let model = TopicModel::load(&a.model)?;
    let sentences = sensitive_only(labelled_stems(&a.input, &a.predictions)?);
    let assignments: Vec<TopicAssignment> = sentences
        .iter()
        .map(|s| assign_topics(&model, s, a.threshold))
        .collect();
    let out = out_path(cli, &a.out, "assignments.jsonl");
    jsonl::write_jsonl(&out, &assignments)?;
    println!("{} assignments -> {}", assignments.len(), out.display());
    Ok(())
}

fn topics_dist(cli: &Cli, a: &TopicsDistArgs) -> Result<()> {
    let assignments: Vec<TopicAssignment> = jsonl::read_jsonl(&a.input)?;
    let by = match a.by {
        ByArg::Sentence => Granularity::Sentence,
        ByArg::Policy => Granularity::Policy,
    };
    let dist = distribution(&assignments, by);
    let out = out_path(cli, &a.out, "distribution.csv");
    jsonl::write_file(&out, dist.to_csv())?;
    print!("{}", dist.to_csv());
    Ok(())
}

fn report(cli: &Cli, a: &ReportArgs) -> Result<()> {
    let corpus = load_corpus(&a.corpus)?;
    let predictions: Vec<PredictionRecord> = jsonl::read_jsonl(&a.predictions)?;
    let labels: HashMap<(&str, usize), SentenceLabel> = predictions
        .iter()
        .map(|r| ((r.doc_id.as_str(), r.index), r.label))
        .collect();
    let model = TopicModel::load(&a.topics)?;
    let assignments: Vec<TopicAssignment> = jsonl::read_jsonl(&a.assignments)?;
    let stoplist = stoplist(&a.stoplist)?;
    for doc in &corpus.documents {
        let sentences = segment_sentences(doc);
        let doc_labels = sentences
            .iter()
            .map(|s| {
                labels.get(&(s.doc_id.as_str(), s.index)).copied().ok_or_else(|| {
                    policylens::Error::MissingLabel {
                        doc_id: s.doc_id.clone(),
                        index: s.index,
                    }
                })
            })
            .collect::<policylens::Result<Vec<_>>>()?;
        let tokenized: Vec<TokenizedSentence> = sentences
            .iter()
            .map(|s| preprocess_sentence(s, &stoplist))
            .collect();
        let doc_assignments: Vec<TopicAssignment> = assignments
            .iter()
            .filter(|x| x.doc_id == doc.id)
            .cloned()
            .collect();
        let ap = annotate(
            doc,
            &sentences,
            &doc_labels,
            &tokenized,
            &doc_assignments,
            Some(&model),
        )?;
        let stem = file_stem_for(&doc.id);
        jsonl::write_file(
            &cli.out_dir.join(format!("reports/{stem}.html")),
            emit_highlight_html(&ap),
        )?;
        jsonl::write_file(
            &cli.out_dir.join(format!("graphs/{stem}.dot")),
            emit_graph_dot(&ap, a.sentences.as_deref()),
        )?;
    }
    println!("{} reports -> {}", corpus.documents.len(), cli.out_dir.display());
    Ok(())
}

/// Parses a TOML or JSON pipeline config; relative paths are taken from the
/// config file's directory.
fn load_config(path: &Path) -> Result<PipelineConfig> {
    let text = jsonl::read_to_string(path)?;
    let mut config: PipelineConfig = match path.extension().and_then(|e| e.to_str()) {
        Some("json") => {
            serde_json::from_str(&text).map_err(|e| UsageError(format!("{}: {e}", path.display())))?
        }
        _ => toml::from_str(&text).map_err(|e| UsageError(format!("{}: {e}", path.display())))?,
    };
    let base = path.parent().unwrap_or(Path::new("."));
    let resolve = |p: &mut PathBuf| {
        if p.is_relative() && !p.as_os_str().is_empty() {
            *p = base.join(&*p);
        }
    };
    resolve(&mut config.corpus);
    resolve(&mut config.out_dir);
    for p in [&mut config.labels, &mut config.model, &mut config.stoplist]
        .into_iter()
        .flatten()
    {
        resolve(p);
    }
    Ok(config)
}

fn run(cli: &Cli, a: &RunArgs) -> Result<()> {
    let from_file = cli.config.is_some();
    let mut config = match &cli.config {
        Some(p) => load_config(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(c) = &a.corpus {
        config.corpus = c.clone();
    }
    if config.corpus.as_os_str().is_empty() {
        return Err(UsageError("--corpus is required (or set `corpus` in --config)".into()).into());
    }
    if !from_file || cli.out_dir != Path::new("out") {
        config.out_dir = cli.out_dir.clone();
    }
    if a.labels.is_some() {
        config.labels = a.labels.clone();
    }
    if a.model.is_some() {
        config.model = a.model.clone();
    }
    if a.stoplist.is_some() {
        config.stoplist = a.stoplist.clone();
    }
    if let Some(kind) = a.classifier {
        config.classifier = ClassifierSpec::default_for(kind.into());
    }
    if let Some(k) = a.top_k {
        config.top_k = k;
    }
    if let Some(t) = a.threshold {
        config.threshold = t;
    }
    if let Some(seed) = cli.seed {
        config = config.with_seed(seed);
    }
    config.classifier.validate()?;
    config.topics.validate()?;
    let manifest = run_pipeline(&config)?;
    println!(
        "{} documents, {} shortened policies -> {}",
        manifest.documents.len(),
        manifest.shortened.len(),
        config.out_dir.display()
    );
    Ok(())
}
