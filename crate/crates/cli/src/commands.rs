use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};

use tension_core::annotation::{read_labels_csv, AnnotationStore};
use tension_core::classifier::{dataset_from_index, evaluate, HeadConfig, UndersampleStrategy};
use tension_core::embed::{EmbeddingCache, EmbeddingIndex, ExternalProvider, HttpTransport};
use tension_core::ingest::{
    decode_document, parse_session_file_name, speaker_coverage, ActorLexicon, Ingestor,
    LanguageDetector, SplitProfile,
};
use tension_core::pipeline::{
    al_candidates, assign_topics, close_round, ensure_test_split, fit_model, hashing_vectors,
    install_embeddings, install_model, open_round, provider_index, unanswered,
};
use tension_core::store::{load_corpus, Corpus, StoreError, StoreLock};
use tension_service::views::MetricsView;
use tension_service::ServiceConfig;

use crate::args::*;
use crate::report::{balance_rows, balance_text, coverage_rows, coverage_text, to_csv};

pub struct Ctx {
    pub store: PathBuf,
    pub config: ServiceConfig,
}

fn load(store: &Path) -> Result<Corpus> {
    load_corpus(store).with_context(|| format!("cannot load store {}", store.display()))
}

/// Runs `f` on the stored corpus under the writer lock and saves the result
/// if it changed. With `create`, a missing store starts empty.
fn mutate<T>(store: &Path, create: bool, f: impl FnOnce(&mut Corpus) -> Result<T>) -> Result<T> {
    let lock = StoreLock::acquire(store)
        .with_context(|| format!("cannot lock store {}", store.display()))?;
    let before = match load_corpus(store) {
        Ok(c) => c,
        Err(StoreError::Missing(_)) if create => Corpus::default(),
        Err(e) => return Err(e).with_context(|| format!("cannot load store {}", store.display())),
    };
    let mut corpus = before.clone();
    let out = f(&mut corpus)?;
    if corpus != before {
        lock.save(&corpus)?;
    }
    Ok(out)
}

fn stdout() -> std::io::StdoutLock<'static> {
    std::io::stdout().lock()
}

pub fn ingest(ctx: &Ctx, args: &IngestArgs) -> Result<()> {
    let store = args.out.clone().unwrap_or_else(|| ctx.store.clone());
    let profile = match SplitProfile::builtin(&args.profile) {
        Ok(p) => p,
        Err(_) if Path::new(&args.profile).is_file() => {
            SplitProfile::load(Path::new(&args.profile))?
        }
        Err(e) => return Err(e).context(format!("profile `{}`", args.profile)),
    };
    let loaded;
    let lexicon = match &args.lexicon {
        Some(dir) => {
            loaded = ActorLexicon::load_dir(dir)?;
            &loaded
        }
        None => ActorLexicon::bundled(),
    };
    let mut files = Vec::new();
    for input in &args.inputs {
        if input.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(input)
                .with_context(|| format!("cannot read {}", input.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| {
                    p.is_file() && p.extension().is_some_and(|x| x.eq_ignore_ascii_case("txt"))
                })
                .collect();
            found.sort();
            files.extend(found);
        } else if input.is_file() {
            files.push(input.clone());
        } else {
            bail!("no such file or directory: {}", input.display());
        }
    }
    if files.is_empty() {
        bail!("no .txt transcripts found");
    }
    let ingestor = Ingestor {
        profile: &profile,
        lexicon,
        detector: LanguageDetector::bundled(),
        translator: None,
    };
    let mut reports = Vec::new();
    for file in &files {
        let name = file
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default();
        let session = parse_session_file_name(name)?;
        let bytes =
            std::fs::read(file).with_context(|| format!("cannot read {}", file.display()))?;
        let text = decode_document(&bytes).with_context(|| file.display().to_string())?;
        reports.push((session.label(), ingestor.ingest(&session, &text)));
    }
    let (added, total) = mutate(&store, true, |c| {
        let mut added = 0;
        for (_, r) in &reports {
            added += c.merge_paragraphs(r.paragraphs.clone());
        }
        Ok((added, c.paragraphs.len()))
    })?;
    let mut out = stdout();
    for (label, r) in &reports {
        writeln!(
            out,
            "{label}\t{} paragraphs\t{} excluded",
            r.paragraphs.len(),
            r.excluded
        )?;
    }
    writeln!(out, "added {added} new paragraphs, {total} in store")?;
    Ok(())
}

pub fn embed(ctx: &Ctx, args: &EmbedArgs) -> Result<()> {
    let n = match args.provider {
        ProviderChoice::Hashing => mutate(&ctx.store, false, |c| {
            let (provider, vectors) = hashing_vectors(c, args.dimension)?;
            Ok(install_embeddings(c, provider, vectors)?)
        })?,
        ProviderChoice::External => {
            let url = args
                .url
                .clone()
                .or_else(|| ctx.config.embedding_url.clone())
                .context("no embedding service URL; pass --url or set TENSION_EMBEDDING_URL")?;
            if args.batch_size == 0 {
                bail!("--batch-size must be positive");
            }
            let cache = match &args.cache {
                Some(p) if p.exists() => EmbeddingCache::load(p)?,
                _ => EmbeddingCache::new(),
            };
            let id = args
                .provider_id
                .clone()
                .unwrap_or_else(|| format!("external-{}", args.dimension));
            let transport = HttpTransport::new(url, Duration::from_secs(args.timeout))?;
            let encoder =
                ExternalProvider::new(id, args.dimension, Box::new(transport), Arc::new(cache))?;
            let n = mutate(&ctx.store, false, |c| {
                let mut index = EmbeddingIndex::new();
                for chunk in c.paragraphs.chunks(args.batch_size) {
                    let texts: Vec<String> = chunk.iter().map(|p| p.clean_text.clone()).collect();
                    let vectors = fetch_with_retry(&encoder, &texts, args.retries)?;
                    index.extend(chunk.iter().map(|p| p.id.clone()).zip(vectors));
                }
                Ok(install_embeddings(c, encoder.provider().clone(), index)?)
            })?;
            if let Some(p) = &args.cache {
                encoder.cache().save(p)?;
            }
            n
        }
    };
    writeln!(stdout(), "embedded {n} paragraphs")?;
    Ok(())
}

fn fetch_with_retry(
    encoder: &ExternalProvider,
    texts: &[String],
    retries: u32,
) -> Result<Vec<tension_core::embed::EmbeddingVector>> {
    let mut attempt = 0;
    loop {
        match encoder.fetch_embeddings(texts) {
            Ok(v) => return Ok(v),
            Err(e) if e.is_retryable() && attempt + 1 < retries.max(1) => {
                attempt += 1;
                tracing::warn!("embedding request failed ({e}); retry {attempt}");
                std::thread::sleep(Duration::from_millis(500 << attempt.min(5)));
            }
            Err(e) => return Err(e.into()),
        }
    }
}

pub fn topics(ctx: &Ctx, args: &TopicsArgs) -> Result<()> {
    let topics = mutate(&ctx.store, false, |c| {
        assign_topics(c, args.k, args.top_n, args.seed)?;
        Ok(c.topics.clone())
    })?;
    let mut out = stdout();
    for t in &topics {
        let words: Vec<&str> = t.keywords.iter().map(|(w, _)| w.as_str()).collect();
        writeln!(out, "{}\t{}\t{}", t.id, t.member_ids.len(), words.join(" "))?;
    }
    Ok(())
}

fn head_config(args: &TrainArgs) -> HeadConfig {
    let mut c = HeadConfig::new(0);
    c.blocks = args.blocks;
    c.hidden_dim = args.hidden_dim.unwrap_or(c.hidden_dim);
    c.dropout_p = args.dropout.unwrap_or(c.dropout_p);
    c.pos_weight = args.pos_weight.unwrap_or(c.pos_weight);
    c.learning_rate = args.learning_rate.unwrap_or(c.learning_rate);
    c.weight_decay = args.weight_decay.unwrap_or(c.weight_decay);
    c.epochs = args.epochs.unwrap_or(c.epochs);
    c.threshold = args.threshold.unwrap_or(c.threshold);
    c.seed = args.seed;
    c
}

pub fn train(ctx: &Ctx, args: &TrainArgs) -> Result<()> {
    let undersample = match args.undersample {
        Undersample::None => None,
        Undersample::DropIntro => Some(UndersampleStrategy::DropIntro { n: args.drop_intro }),
        Undersample::RandomNegatives => Some(UndersampleStrategy::RandomNegativeDrop {
            fraction: args.drop_fraction,
            seed: args.seed,
        }),
    };
    let record = mutate(&ctx.store, false, |c| {
        ensure_test_split(c, args.test_ratio, args.seed)?;
        let fitted = fit_model(c, head_config(args), undersample)?;
        for e in &fitted.history {
            tracing::info!(epoch = e.epoch, loss = e.train_loss, "epoch");
        }
        Ok(install_model(c, fitted)?)
    })?;
    serde_json::to_writer_pretty(stdout(), &MetricsView::new(&record))?;
    writeln!(stdout())?;
    Ok(())
}

pub fn eval(ctx: &Ctx, args: &EvalArgs) -> Result<()> {
    let corpus = load(&ctx.store)?;
    let record = corpus
        .state
        .current_model
        .clone()
        .context("no model has been trained yet; run `tension train`")?;
    let params = corpus
        .current_params()
        .context("current checkpoint is missing")?;
    let labels = match &args.labels {
        Some(path) => {
            let file = std::fs::File::open(path)
                .with_context(|| format!("cannot open {}", path.display()))?;
            let rows = read_labels_csv(file)?;
            AnnotationStore::from_parts(corpus.paragraphs.iter().map(|p| p.id.clone()), rows)
                .effective_labels()
        }
        None => {
            let all = corpus.effective_labels();
            corpus
                .state
                .test_split
                .iter()
                .filter_map(|id| all.get(id).map(|&v| (id.clone(), v)))
                .collect()
        }
    };
    let index = provider_index(&corpus, &record.provider_id);
    let ds = dataset_from_index(labels.keys(), &index, &labels, &corpus.paragraph_index())?;
    if ds.is_empty() {
        bail!(
            "no labelled paragraphs embedded by `{}` to evaluate on",
            record.provider_id
        );
    }
    let threshold = args.threshold.unwrap_or(record.config.threshold);
    let m = evaluate(params, &ds, threshold)?;
    let report = serde_json::json!({
        "checkpoint_id": record.checkpoint_id,
        "items": ds.len(),
        "threshold": threshold,
        "precision": m.precision,
        "recall": m.recall,
        "accuracy": m.accuracy,
        "tp": m.tp,
        "fp": m.fp,
        "fn": m.fn_,
        "tn": m.tn,
    });
    serde_json::to_writer_pretty(stdout(), &report)?;
    writeln!(stdout())?;
    Ok(())
}

pub fn al_next(ctx: &Ctx, args: &AlNextArgs) -> Result<()> {
    let corpus = mutate(&ctx.store, false, |c| {
        if c.state
            .al
            .as_ref()
            .is_some_and(|s| !s.pending_ids.is_empty())
        {
            return Ok(c.clone());
        }
        open_round(c, args.batch_size, args.threshold)?;
        if let Some(s) = &mut c.state.al {
            s.batch_size = args.batch_size;
            s.threshold = args.threshold;
        }
        Ok(c.clone())
    })?;
    let state = corpus.state.al.clone().unwrap_or_default();
    if state.pending_ids.is_empty() {
        let pool = al_candidates(&corpus)?.len();
        bail!("no unlabelled candidates left ({pool} embedded paragraphs outside the test split)");
    }
    let open = unanswered(&corpus);
    eprintln!(
        "round {}: {} pending, {} unanswered",
        state.round,
        state.pending_ids.len(),
        open.len()
    );
    let mut out = stdout();
    writeln!(out, "paragraph_id\tscore\tanswered\ttext")?;
    for id in &state.pending_ids {
        let p = corpus
            .paragraph(id)
            .context("pending paragraph missing from store")?;
        let score = p
            .tension_score
            .map_or_else(|| "-".to_owned(), |s| format!("{s:.6}"));
        let text = p.clean_text.replace(['\t', '\n'], " ");
        writeln!(out, "{id}\t{score}\t{}\t{text}", !open.contains(id))?;
    }
    Ok(())
}

pub fn al_import(ctx: &Ctx, args: &AlImportArgs) -> Result<()> {
    let mut incoming = Vec::new();
    for path in &args.files {
        let file =
            std::fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
        incoming.extend(read_labels_csv(file).with_context(|| path.display().to_string())?);
    }
    let (added, unchanged, closed, store) = mutate(&ctx.store, false, |c| {
        let mut store = c.annotation_store();
        let (mut added, mut unchanged) = (0, 0);
        for l in incoming {
            let same = store.labels().iter().any(|e| {
                e.paragraph_id == l.paragraph_id
                    && e.annotator_id == l.annotator_id
                    && e.value == l.value
                    && e.stage == l.stage
            });
            if same {
                unchanged += 1;
                continue;
            }
            store.record(l)?;
            added += 1;
        }
        c.labels = store.clone().into_labels();
        let open = c
            .state
            .al
            .as_ref()
            .is_some_and(|s| !s.pending_ids.is_empty());
        let closed = if open && unanswered(c).is_empty() {
            let round = c.state.al.as_ref().map_or(0, |s| s.round);
            close_round(c)?;
            Some(round)
        } else {
            None
        };
        Ok((added, unchanged, closed, store))
    })?;
    let mut out = stdout();
    writeln!(out, "imported {added} labels, {unchanged} already present")?;
    for (a, b, n, k) in store.pairwise_kappa() {
        writeln!(out, "kappa\t{a}\t{b}\t{n}\t{k:.4}")?;
    }
    writeln!(out, "conflicts\t{}", store.conflicts().len())?;
    if let Some(round) = closed {
        writeln!(
            out,
            "round {round} complete; run `tension train` then `tension al-next`"
        )?;
    }
    Ok(())
}

pub fn stats(ctx: &Ctx, args: &StatsArgs) -> Result<()> {
    let corpus = load(&ctx.store)?;
    let mut out = stdout();
    if args.speakers {
        write!(out, "{}", coverage_text(&coverage_rows(&corpus)))?;
        writeln!(
            out,
            "{:<12} {:>10} {:>12} {:>9.4}",
            "overall",
            corpus.paragraphs.len(),
            corpus
                .paragraphs
                .iter()
                .filter(|p| p.speaker.is_some())
                .count(),
            speaker_coverage(&corpus.paragraphs)
        )?;
        return Ok(());
    }
    writeln!(out, "paragraphs\t{}", corpus.paragraphs.len())?;
    writeln!(out, "sessions\t{}", corpus.sessions().len())?;
    writeln!(out, "embedded\t{}", corpus.embeddings.len())?;
    for p in &corpus.providers {
        writeln!(out, "provider\t{}\t{}", p.id, p.dimension)?;
    }
    writeln!(out, "labelled\t{}", corpus.effective_labels().len())?;
    writeln!(out, "label_rows\t{}", corpus.labels.len())?;
    writeln!(out, "topics\t{}", corpus.topics.len())?;
    writeln!(out, "test_split\t{}", corpus.state.test_split.len())?;
    if let Some(m) = &corpus.state.current_model {
        writeln!(
            out,
            "model\t{}\taccuracy {:.4}",
            m.checkpoint_id, m.metrics.accuracy
        )?;
    }
    if let Some(s) = &corpus.state.al {
        writeln!(
            out,
            "al_round\t{}\t{} pending\t{} unanswered",
            s.round,
            s.pending_ids.len(),
            unanswered(&corpus).len()
        )?;
    }
    Ok(())
}

pub fn export(ctx: &Ctx, args: &ExportArgs) -> Result<()> {
    let corpus = load(&ctx.store)?;
    if corpus.paragraphs.is_empty() {
        bail!("store {} has no paragraphs", ctx.store.display());
    }
    let coverage = coverage_rows(&corpus);
    let balance = balance_rows(&corpus);
    let (ext, cov, bal) = match args.format {
        ReportFormat::Csv => ("csv", to_csv(&coverage)?, to_csv(&balance)?),
        ReportFormat::Text => ("txt", coverage_text(&coverage), balance_text(&balance)),
    };
    match &args.out {
        Some(dir) => {
            std::fs::create_dir_all(dir)
                .with_context(|| format!("cannot create {}", dir.display()))?;
            let cov_path = dir.join(format!("speaker_coverage.{ext}"));
            let bal_path = dir.join(format!("class_balance.{ext}"));
            std::fs::write(&cov_path, cov)?;
            std::fs::write(&bal_path, bal)?;
            writeln!(stdout(), "{}\n{}", cov_path.display(), bal_path.display())?;
        }
        None => write!(stdout(), "{cov}\n{bal}")?,
    }
    Ok(())
}

pub fn serve(ctx: &Ctx, args: &ServeArgs) -> Result<()> {
    let mut config = ctx.config.clone();
    config.store = ctx.store.clone();
    if let Some(p) = args.port {
        config.port = p;
    }
    if let Some(b) = args.bind {
        config.bind = b;
    }
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(tension_service::serve(config))?;
    Ok(())
}
