use std::io::Write;
use std::net::{SocketAddr, ToSocketAddrs};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use clap::ValueEnum;
use demfeed::agreement::{build_report, AlphaMetric};
use demfeed::corpus::{ingest_path, split, stratified_sample, CorpusError, ImportReport, IngestFormat, SamplePlan};
use demfeed::feed::{build_feed, condition_manifest, inventory_time, FeedParams};
use demfeed::rater::{
    Clock, LiveBackend, LiveConfig, MockRater, ModelSettings, Rater, RaterBackend, RaterError, RaterSettings,
    RatingCache, Recorder, ReplayBackend, RetryPolicy, DEFAULT_MODEL, DEFAULT_PROMPT_VERSION, DEFAULT_TEMPERATURE,
};
use demfeed::{AgreementReport, AnnotationColumn, BuildInputs, Condition, Corpus};
use demfeed_service::{Experiment, ExportFilter, ServiceConfig, ServiceError};
use serde::Serialize;

use crate::args::*;
use crate::settings::{base_layer, required, Layer, DEFAULT_CONCURRENCY, DEFAULT_REQUESTS_PER_MINUTE};
use crate::CliError;

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Io(_) => CliError::Runtime(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<RaterError> for CliError {
    fn from(e: RaterError) -> Self {
        match e {
            RaterError::Io(_) => CliError::Runtime(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<ServiceError> for CliError {
    fn from(e: ServiceError) -> Self {
        match e {
            ServiceError::BadRequest(_) | ServiceError::NotFound(_) | ServiceError::Conflict(_) => {
                CliError::Validation(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

fn existing(path: &Path, what: &str) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Validation(format!("{what} {} does not exist", path.display())))
    }
}

/// Write `bytes`, adding a final newline if missing.
fn write_out(path: &Path, mut bytes: Vec<u8>) -> Result<(), CliError> {
    if bytes.last() != Some(&b'\n') {
        bytes.push(b'\n');
    }
    std::fs::write(path, bytes).map_err(|e| CliError::Runtime(format!("writing {}: {e}", path.display())))
}

fn write_stdout(mut bytes: Vec<u8>) -> Result<(), CliError> {
    if bytes.last() != Some(&b'\n') {
        bytes.push(b'\n');
    }
    let mut out = std::io::stdout().lock();
    out.write_all(&bytes)
        .and_then(|_| out.flush())
        .map_err(|e| CliError::Runtime(format!("stdout: {e}")))
}

fn pretty<T: Serialize>(value: &T) -> Vec<u8> {
    serde_json::to_vec_pretty(value).expect("serializable")
}

fn report_to<T: Serialize>(path: Option<&Path>, value: &T) -> Result<(), CliError> {
    match path {
        Some(p) => write_out(p, pretty(value)),
        None => {
            eprintln!("{}", String::from_utf8(pretty(value)).expect("utf-8"));
            Ok(())
        }
    }
}

fn corpus_bytes(corpus: &Corpus) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    corpus.write_jsonl(&mut buf)?;
    Ok(buf)
}

fn column_bytes(column: &AnnotationColumn, path: &Path) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => column.write_csv(&mut buf)?,
        Some("jsonl") | Some("json") | Some("ndjson") => column.write_jsonl(&mut buf)?,
        _ => {
            return Err(CliError::Validation(format!(
                "{}: score columns must be .csv or .jsonl",
                path.display()
            )))
        }
    }
    Ok(buf)
}

fn load_corpus(path: &Path) -> Result<Corpus, CliError> {
    existing(path, "corpus")?;
    Ok(Corpus::load(path)?)
}

/// Load a column, rejecting the file if any row is invalid.
fn load_column(path: &Path, corpus: Option<&Corpus>) -> Result<AnnotationColumn, CliError> {
    existing(path, "score column")?;
    let rater_id = match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => path.file_stem().and_then(|s| s.to_str()).unwrap_or("scores"),
        _ => "",
    };
    let (column, report) = AnnotationColumn::load(path, rater_id, corpus)?;
    if let Some(first) = report.rejected.first() {
        return Err(CliError::Validation(format!(
            "{}: {} rows rejected, first at line {} ({}): {}",
            path.display(),
            report.rejected.len(),
            first.line,
            first.post_id,
            first.reason
        )));
    }
    Ok(column)
}

fn optional_corpus(path: Option<PathBuf>) -> Result<Option<Corpus>, CliError> {
    path.map(|p| load_corpus(&p)).transpose()
}

fn parse_time(raw: &str, flag: &str) -> Result<DateTime<Utc>, CliError> {
    DateTime::parse_from_rfc3339(raw)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| CliError::Validation(format!("--{flag} `{raw}`: {e}")))
}

fn parse_condition(raw: &str) -> Result<Condition, CliError> {
    raw.parse().map_err(|e: demfeed::feed::FeedError| CliError::Validation(e.to_string()))
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let base = base_layer(cli.config.as_deref())?;
    match cli.command {
        Command::Ingest(a) => ingest(a, base),
        Command::Sample(a) => sample(a, base),
        Command::Rate(a) => rate(a, base),
        Command::ImportAnnotations(a) => import(a, base),
        Command::Agreement(a) => agreement(a, base),
        Command::Rank(a) => rank(a, base),
        Command::Serve(a) => serve(a),
        Command::ExportEvents(a) => export(a, base),
    }
}

fn ingest(args: IngestArgs, base: Layer) -> Result<(), CliError> {
    existing(&args.input, "input")?;
    let out = required(args.out.or(base.corpus), "corpus")?;
    let format = args.format.map(|f| match f {
        InputFormat::CrowdtangleCsv => IngestFormat::CrowdtangleCsv,
        InputFormat::GenericJson => IngestFormat::GenericJson,
    });
    let (mut corpus, report) = ingest_path(&args.input, format)?;
    if args.political_only {
        corpus = corpus.political_only();
    }
    write_out(&out, corpus_bytes(&corpus)?)?;
    report_to(args.report.as_deref(), &report)
}

fn sample(args: SampleArgs, base: Layer) -> Result<(), CliError> {
    let layer = Layer {
        corpus: args.corpus,
        seed: args.seed,
        ..Default::default()
    }
    .over(base);
    let corpus = load_corpus(&required(layer.corpus.clone(), "corpus")?)?;
    let plan = SamplePlan {
        bucket_count: args.buckets,
        per_bucket: args.per_bucket,
        seed: layer.seed(),
    };
    let drawn = stratified_sample(&corpus, &plan)?;
    if let (Some(n), Some(dev_out), Some(test_out)) = (args.dev_size, &args.dev_out, &args.test_out) {
        let (dev, test) = split(&drawn.posts, n, layer.seed())?;
        write_out(dev_out, corpus_bytes(&Corpus::from_posts(dev).0)?)?;
        write_out(test_out, corpus_bytes(&Corpus::from_posts(test).0)?)?;
    }
    write_out(&args.out, corpus_bytes(&Corpus::from_posts(drawn.posts).0)?)
}

fn rate(args: RateArgs, base: Layer) -> Result<(), CliError> {
    let layer = Layer {
        corpus: args.corpus,
        cache: args.cache,
        fixture: args.fixture,
        model: args.model,
        temperature: args.temperature,
        concurrency: args.concurrency,
        prompt_version: args.prompt_version,
        requests_per_minute: args.requests_per_minute,
        ..Default::default()
    }
    .over(base);
    let corpus = load_corpus(&required(layer.corpus.clone(), "corpus")?)?;
    let backend = match args.backend {
        Some(b) => b,
        None => match layer.backend.as_deref() {
            Some(raw) => Backend::from_str(raw, true)
                .map_err(|_| CliError::Validation(format!("unknown backend `{raw}` (live, replay, mock)")))?,
            None => Backend::Mock,
        },
    };
    let model = ModelSettings {
        model_id: layer.model.clone().unwrap_or_else(|| DEFAULT_MODEL.to_string()),
        temperature: layer.temperature.unwrap_or(DEFAULT_TEMPERATURE),
    };
    let settings = RaterSettings {
        prompt_version: layer.prompt_version.clone().unwrap_or_else(|| DEFAULT_PROMPT_VERSION.to_string()),
        rater_id: args.rater_id.unwrap_or_else(|| model.model_id.clone()),
        model,
        strict: args.strict,
    };
    // Offline backends stamp records with a fixed time so reruns are byte-identical.
    let (clock, policy) = match backend {
        Backend::Live => (Clock::System, RetryPolicy::default()),
        _ => (Clock::Fixed(DateTime::UNIX_EPOCH), RetryPolicy::immediate()),
    };
    let inner: Box<dyn RaterBackend> = match backend {
        Backend::Mock => Box::new(MockRater),
        Backend::Replay => {
            let path = required(layer.fixture.clone(), "fixture")?;
            existing(&path, "replay archive")?;
            Box::new(ReplayBackend::load(&path)?)
        }
        Backend::Live => Box::new(LiveBackend::new(LiveConfig::from_env(
            layer.requests_per_minute.unwrap_or(DEFAULT_REQUESTS_PER_MINUTE),
        )?)),
    };
    let recorder = Recorder::new(inner, clock);
    let cache = match &layer.cache {
        Some(p) => Some(RatingCache::open(p)?),
        None => None,
    };

    let mut rater = Rater::new(&recorder, settings)?.with_policy(policy).with_clock(clock);
    if let Some(c) = &cache {
        rater = rater.with_cache(c);
    }
    let result = rater.rate_corpus(corpus.posts(), layer.concurrency.unwrap_or(DEFAULT_CONCURRENCY))?;

    write_out(&args.out, column_bytes(&result.column, &args.out)?)?;
    if let (Some(c), Some(p)) = (&cache, &layer.cache) {
        c.write_archive(p)?;
    }
    if let Some(p) = &args.record {
        recorder.write_archive(p)?;
    }
    if args.failures.is_some() || !result.failures.is_empty() {
        report_to(args.failures.as_deref(), &result.failures)?;
    }
    if result.failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Runtime(format!(
            "{} of {} posts could not be rated",
            result.failures.posts.len(),
            corpus.len()
        )))
    }
}

fn import(args: ImportArgs, base: Layer) -> Result<(), CliError> {
    existing(&args.input, "input")?;
    let corpus = optional_corpus(args.corpus.or(base.corpus))?;
    let (column, report): (AnnotationColumn, ImportReport) =
        AnnotationColumn::load(&args.input, &args.rater_id, corpus.as_ref())?;
    write_out(&args.out, column_bytes(&column, &args.out)?)?;
    if args.report.is_some() || !report.rejected.is_empty() {
        report_to(args.report.as_deref(), &report)?;
    }
    if report.rejected.is_empty() {
        Ok(())
    } else {
        Err(CliError::Validation(format!(
            "{} rows rejected, {} accepted",
            report.rejected.len(),
            report.accepted
        )))
    }
}

fn agreement(args: AgreementArgs, base: Layer) -> Result<(), CliError> {
    let corpus = optional_corpus(args.corpus.or(base.corpus))?;
    let a = load_column(&args.a, corpus.as_ref())?;
    let b = load_column(&args.b, corpus.as_ref())?;
    let metric = match args.alpha_metric {
        AlphaChoice::Ordinal => AlphaMetric::Ordinal,
        AlphaChoice::Interval => AlphaMetric::Interval,
    };
    let report: AgreementReport =
        build_report(&a, &b, metric).map_err(|e| CliError::Validation(e.to_string()))?;
    let bytes = match args.format {
        ReportFormat::Json => pretty(&report),
        ReportFormat::Table => report.render_table().into_bytes(),
    };
    match &args.out {
        Some(p) => write_out(p, bytes),
        None => write_stdout(bytes),
    }
}

fn rank(args: RankArgs, base: Layer) -> Result<(), CliError> {
    let condition = parse_condition(&args.condition)?;
    let layer = Layer {
        corpus: args.corpus,
        scores: args.scores,
        seed: args.seed,
        feed_size: args.feed_size,
        threshold: args.threshold,
        replacement_ceiling: args.replacement_ceiling,
        ..Default::default()
    }
    .over(base);
    let corpus = load_corpus(&required(layer.corpus.clone(), "corpus")?)?;
    let scores = load_column(&required(layer.scores.clone(), "scores")?, Some(&corpus))?;
    let defaults = FeedParams::default();
    let params = FeedParams {
        feed_size: layer.feed_size.unwrap_or(defaults.feed_size),
        threshold: layer.threshold.unwrap_or(defaults.threshold),
        replacement_ceiling: layer.replacement_ceiling.unwrap_or(defaults.replacement_ceiling),
        seed: layer.seed(),
    };
    let generated_at = match &args.generated_at {
        Some(raw) => parse_time(raw, "generated-at")?,
        None => inventory_time(corpus.posts()),
    };
    let inputs = BuildInputs {
        posts: corpus.into_posts(),
        scores,
        params,
        generated_at,
    };
    let feed = build_feed(&inputs, condition).map_err(|e| CliError::Validation(e.to_string()))?;
    if let Some(p) = &args.manifest {
        write_out(p, pretty(&condition_manifest(&feed, &inputs)))?;
    }
    write_out(&args.out, pretty(&feed))
}

fn serve(args: ServeArgs) -> Result<(), CliError> {
    existing(&args.experiment, "experiment config")?;
    let mut config = ServiceConfig::load(&args.experiment)?;
    if let Some(b) = args.bind {
        config.bind = b;
    }
    if let Some(p) = args.port {
        config.port = p;
    }
    if let Some(d) = args.data_dir {
        config.data_dir = d;
    }
    let addr: SocketAddr = (config.bind.as_str(), config.port)
        .to_socket_addrs()
        .ok()
        .and_then(|mut a| a.next())
        .ok_or_else(|| CliError::Validation(format!("cannot resolve bind address `{}`", config.bind)))?;
    if config.admin_token().is_none() {
        eprintln!("export disabled: {} is not set", config.admin_token_env);
    }
    let experiment = Experiment::open(&config)?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    runtime
        .block_on(demfeed_service::serve(experiment, addr, |bound| {
            println!("listening on http://{bound}");
            let _ = std::io::stdout().flush();
        }))
        .map_err(|e| CliError::Runtime(format!("serving on {addr}: {e}")))
}

fn export(args: ExportArgs, base: Layer) -> Result<(), CliError> {
    let dir = required(args.data_dir.or(base.data_dir), "data_dir")?;
    existing(&dir, "data dir")?;
    let filter = ExportFilter {
        condition: args.condition.as_deref().map(parse_condition).transpose()?,
        from: args.from.as_deref().map(|t| parse_time(t, "from")).transpose()?,
        to: args.to.as_deref().map(|t| parse_time(t, "to")).transpose()?,
    };
    let dump = demfeed_service::export_dir(&dir, &filter)?;
    match &args.out {
        Some(p) => write_out(p, dump.into_bytes()),
        None => write_stdout(dump.into_bytes()),
    }
}
