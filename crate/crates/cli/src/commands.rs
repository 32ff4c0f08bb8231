use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde_json::json;
use xlsearch_core::corpus::{
    load_dataset, make_tuples, read_split_manifest, split_by_problem, write_split_manifest, CodeSample, DatasetSplit,
    Manifest, SplitAssignment, SplitName, Splits, TrainingTuple,
};
use xlsearch_core::embedding::{BaseEmbeddings, EmbeddingProvider, EmbeddingTable, Featurizer};
use xlsearch_core::eval::{evaluate_with, queries_and_pool, AstRanker, Bm25Ranker, EncoderRanker, EvalReport, Ranker};
use xlsearch_core::search::{build_index, load_index, query_with, save_index};
use xlsearch_core::sss::toy::{Dialect, Program, ToyError};
use xlsearch_core::sss::{build_sss_table, RunnerConfig, SampleRunner, SssConfig, SssTable};
use xlsearch_core::synth::{generate, write_dataset, SynthOptions};
use xlsearch_core::trainer::{train, EncoderFile, EncoderParams};

use crate::config::RunConfig;
use crate::{Cli, CliError, Command, GlobalArgs, PairsArg, Result, SplitArg, SynthKindArg, TrainArgs};

const QUERY_ENCODER: &str = "query.enc";
const DOC_ENCODER: &str = "doc.enc";
const SPLITS_FILE: &str = "splits.json";
const AST_NOTE: &str = "ast similarity is 1 / (1 + tree edit distance)";

/// Run one parsed invocation, writing primary output to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let mut config = load_config(&cli.global)?;
    if let Some(jobs) = cli.global.jobs {
        config.jobs = jobs;
    }
    if config.jobs > 0 {
        // Fails only when a pool already exists, as in repeated in-process runs.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(config.jobs).build_global();
    }
    match cli.command {
        Command::Embed { out: path, dim } => {
            if let Some(d) = dim {
                config.featurizer.dim = d;
            }
            config.validate(&[("dataset", config.dataset.as_deref())])?;
            embed(&config, &path)
        }
        Command::Sss {
            pairs,
            pairs_file,
            runner,
            corpus_size,
            train,
            out: path,
        } => {
            apply_train_args(&mut config, &train);
            if let Some(c) = corpus_size {
                config.sss.corpus_size = c;
            }
            let mut inputs = vec![("dataset", config.dataset.as_deref())];
            if let Some(r) = &runner {
                inputs.push(("runner", Some(r)));
            }
            if let Some(p) = &pairs_file {
                inputs.push(("pairs file", Some(p)));
            }
            config.validate(&inputs)?;
            if let Some(r) = &runner {
                config.runner = RunnerConfig::read(r)?;
            }
            sss(&config, pairs, pairs_file.as_deref(), &path)
        }
        Command::Train { sss, train, out: path } => {
            apply_train_args(&mut config, &train);
            let mut inputs = vec![("dataset", config.dataset.as_deref())];
            if let Some(s) = &sss {
                inputs.push(("sss table", Some(s)));
            }
            config.validate(&inputs)?;
            cmd_train(&config, sss.as_deref(), &path)
        }
        Command::Index { encoder, split, out: path } => {
            config.validate(&[("dataset", config.dataset.as_deref()), ("encoder", Some(&encoder))])?;
            index(&config, &encoder, split, &path)
        }
        Command::Search { index, encoder, query, n } => {
            config.validate(&[("index", Some(&index)), ("encoder", Some(&encoder))])?;
            search(&config, &index, &encoder, &query, n, out)
        }
        Command::Eval {
            encoder,
            untrained,
            baselines,
            split,
            out: path,
        } => {
            let mut inputs = vec![("dataset", config.dataset.as_deref())];
            if let Some(e) = &encoder {
                inputs.push(("encoder", Some(e)));
            }
            let mut problems = config.problems(&inputs);
            for b in &baselines {
                if b != "bm25" && b != "ast" {
                    problems.push(format!("unknown baseline {b:?} (expected bm25 or ast)"));
                }
            }
            if split == SplitArg::All {
                problems.push("eval needs a single split".into());
            }
            if !problems.is_empty() {
                return Err(CliError::Config(problems));
            }
            let encoder = if untrained { None } else { encoder };
            eval(&config, encoder.as_deref(), &baselines, split, &path, out)
        }
        Command::Synth {
            kind,
            problems,
            samples,
            out: path,
        } => {
            let seed = config.seed;
            let base = match kind {
                SynthKindArg::Separable => SynthOptions::separable(seed),
                SynthKindArg::Compositional => SynthOptions::compositional(seed),
            };
            let options = SynthOptions {
                problems,
                samples_per_language: samples,
                ..base
            };
            let generated = generate(&options)?;
            write_dataset(&path, &generated)?;
            writeln!(out, "wrote {} samples to {}", generated.len(), path.display()).map_err(stdout_error)?;
            Ok(())
        }
        Command::ToyRun { file, input, timeout_s } => toy_run(&file, &input, timeout_s, out),
    }
}

fn stdout_error(e: std::io::Error) -> CliError {
    xlsearch_core::Error::io("<stdout>", e).into()
}

fn load_config(global: &GlobalArgs) -> Result<RunConfig> {
    let mut config = match &global.config {
        Some(path) => RunConfig::read(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = global.seed {
        config.seed = seed;
    }
    if let Some(d) = &global.dataset {
        config.dataset = Some(d.clone());
    }
    if let Some(e) = &global.embeddings {
        config.embeddings = Some(e.clone());
    }
    if let Some(s) = &global.source {
        config.source_lang = s.clone();
    }
    if let Some(t) = &global.target {
        config.target_lang = t.clone();
    }
    Ok(config.resolved())
}

fn apply_train_args(config: &mut RunConfig, args: &TrainArgs) {
    let t = &mut config.train;
    if let Some(v) = args.alpha {
        t.alpha = v;
    }
    if let Some(v) = args.epochs {
        t.epochs = v;
    }
    if let Some(v) = args.k_p {
        t.k_p = v;
    }
    if let Some(v) = args.k_n {
        t.k_n = v;
    }
    if let Some(v) = args.learning_rate {
        t.learning_rate = v;
    }
    if let Some(v) = args.momentum {
        t.momentum = v;
    }
    if let Some(v) = args.proj_dim {
        t.proj_dim = v;
    }
}

fn dataset_root(config: &RunConfig) -> Result<&Path> {
    config.dataset.as_deref().ok_or_else(|| CliError::config("dataset is required"))
}

fn load_samples(config: &RunConfig) -> Result<Vec<CodeSample>> {
    let root = dataset_root(config)?;
    let loaded = load_dataset(root, &Manifest::read(root)?)?;
    for w in &loaded.warnings {
        eprintln!("warning: {w}");
    }
    Ok(loaded.samples)
}

fn provider(config: &RunConfig) -> Result<EmbeddingProvider> {
    Ok(match &config.embeddings {
        Some(path) => EmbeddingProvider::Table(EmbeddingTable::read(path)?),
        None => EmbeddingProvider::Featurizer(Featurizer::new(config.featurizer.dim, config.featurizer.seed)?),
    })
}

/// Splits from an encoder directory's manifest, the configured manifest, or
/// the configured ratios, in that order.
fn splits(config: &RunConfig, samples: &[CodeSample], encoder_dir: Option<&Path>) -> Result<Splits> {
    let saved = encoder_dir.map(|d| d.join(SPLITS_FILE)).filter(|p| p.is_file());
    let assignment = match saved.as_deref().or(config.splits.as_deref()) {
        Some(path) => SplitAssignment::Explicit(read_split_manifest(path)?),
        None => SplitAssignment::Ratios {
            ratios: config.split_ratios,
            seed: config.seed,
        },
    };
    Ok(split_by_problem(samples, &assignment)?)
}

fn training_tuples(config: &RunConfig, splits: &Splits) -> Result<Vec<TrainingTuple>> {
    Ok(make_tuples(
        &splits.train,
        &config.source_lang,
        &config.target_lang,
        config.train.k_p,
        config.train.k_n,
        config.seed,
    )?)
}

fn embed(config: &RunConfig, path: &Path) -> Result<()> {
    let samples = load_samples(config)?;
    let f = Featurizer::new(config.featurizer.dim, config.featurizer.seed)?;
    let mut table = EmbeddingTable::new(f.dim(), f.provenance())?;
    for s in &samples {
        table.insert(s.id.clone(), &f.featurize(s))?;
    }
    table.write(path)?;
    eprintln!("embed: {} vectors of dim {}", table.len(), table.dim());
    Ok(())
}

fn read_pairs(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).map_err(|e| xlsearch_core::Error::io(path, e))?;
    let field = |s: &str, line: usize| -> Result<String> {
        if s.starts_with('"') {
            serde_json::from_str(s).map_err(|e| CliError::config(format!("{}:{line}: bad quoted id: {e}", path.display())))
        } else {
            Ok(s.to_string())
        }
    };
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        match (parts.next(), parts.next(), parts.next()) {
            (Some(q), Some(t), None) => pairs.push((field(q, i + 1)?, field(t, i + 1)?)),
            _ => {
                return Err(CliError::config(format!(
                    "{}:{}: expected two tab-separated ids",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    Ok(pairs)
}

fn sss(config: &RunConfig, pairs: PairsArg, pairs_file: Option<&Path>, path: &Path) -> Result<()> {
    let samples = load_samples(config)?;
    let pairs: Vec<(String, String)> = match (pairs_file, pairs) {
        (Some(file), _) => read_pairs(file)?,
        (None, PairsArg::Tuples) => {
            let splits = splits(config, &samples, None)?;
            training_tuples(config, &splits)?
                .iter()
                .flat_map(|t| {
                    t.positives
                        .iter()
                        .chain(&t.negatives)
                        .map(|s| (t.query.id.clone(), s.id.clone()))
                })
                .collect()
        }
        (None, PairsArg::Cross) => {
            let splits = splits(config, &samples, None)?;
            let (queries, pool) = queries_and_pool(&splits.train, &config.source_lang, &config.target_lang);
            queries
                .iter()
                .flat_map(|q| pool.iter().map(|d| (q.id.clone(), d.id.clone())))
                .collect()
        }
    };
    let runner = SampleRunner::new(config.runner.clone())?;
    let sss_config = SssConfig {
        corpus_size: config.sss.corpus_size,
        seed: config.seed,
        jobs: config.jobs,
    };
    let mut journal = path.as_os_str().to_owned();
    journal.push(".partial");
    let journal = PathBuf::from(journal);
    let build = build_sss_table(&pairs, &samples, &sss_config, &runner, Some(&journal))?;
    build.table.write(path)?;
    std::fs::remove_file(&journal).map_err(|e| xlsearch_core::Error::io(&journal, e))?;
    let s = &build.stats;
    eprintln!(
        "sss: pairs={} mismatched={} zeroed_positive_pairs={} resumed={} executions={} subprocesses={} coverage={:.4}",
        s.pairs,
        s.mismatched,
        s.zeroed_positive_pairs,
        s.resumed,
        s.executions,
        runner.subprocesses(),
        build.table.coverage
    );
    Ok(())
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("json serializes") + "\n";
    std::fs::write(path, text).map_err(|e| xlsearch_core::Error::io(path, e).into())
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| xlsearch_core::Error::io(path, e).into())
}

fn cmd_train(config: &RunConfig, sss_path: Option<&Path>, dir: &Path) -> Result<()> {
    let samples = load_samples(config)?;
    let provider = provider(config)?;
    let splits = splits(config, &samples, None)?;
    let tuples = training_tuples(config, &splits)?;
    let table = match sss_path {
        Some(p) => SssTable::read(p)?,
        None => {
            if config.train.alpha > 0.0 {
                eprintln!("warning: no SSS table given; every target uses its static label");
            }
            SssTable::new()
        }
    };
    let output = train(&tuples, &config.train, &table, &provider)?;
    create_dir(dir)?;
    let digest = config.train.digest();
    for (name, params) in [(QUERY_ENCODER, &output.query), (DOC_ENCODER, &output.doc)] {
        EncoderFile {
            params: params.clone(),
            seed: config.seed,
            config_digest: digest.clone(),
        }
        .write(&dir.join(name))?;
    }
    write_split_manifest(&dir.join(SPLITS_FILE), &splits.assignment())?;
    let recorded = config.recorded();
    let report = json!({
        "config": recorded,
        "config_digest": xlsearch_core::codec::sha256_hex(recorded.to_string().as_bytes()),
        "provider": provider.provenance(),
        "tuples": tuples.len(),
        "sss_entries": table.len(),
        "loss_history": output.history,
        "query_digest": output.query.digest(),
        "doc_digest": output.doc.digest(),
    });
    write_json(&dir.join("train_report.json"), &report)?;
    eprintln!(
        "train: {} tuples, loss {:.6} -> {:.6}",
        tuples.len(),
        output.history.first().copied().unwrap_or(f64::NAN),
        output.history.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn read_encoders(dir: &Path) -> Result<(EncoderParams, EncoderParams)> {
    Ok((
        EncoderFile::read(&dir.join(QUERY_ENCODER))?.params,
        EncoderFile::read(&dir.join(DOC_ENCODER))?.params,
    ))
}

fn pick_split<'a>(splits: &'a Splits, split: SplitArg) -> Option<&'a DatasetSplit> {
    match split {
        SplitArg::All => None,
        SplitArg::Train => Some(splits.get(SplitName::Train)),
        SplitArg::Valid => Some(splits.get(SplitName::Valid)),
        SplitArg::Test => Some(splits.get(SplitName::Test)),
    }
}

fn index(config: &RunConfig, encoder_dir: &Path, split: SplitArg, path: &Path) -> Result<()> {
    let samples = load_samples(config)?;
    let provider = provider(config)?;
    let (_, doc) = read_encoders(encoder_dir)?;
    let mut pool: Vec<CodeSample> = match split {
        SplitArg::All => samples.iter().filter(|s| s.language == config.target_lang).cloned().collect(),
        _ => {
            let splits = splits(config, &samples, Some(encoder_dir))?;
            let chosen = pick_split(&splits, split).expect("single split");
            chosen.samples_in(&config.target_lang).cloned().collect()
        }
    };
    pool.sort_by(|a, b| a.id.cmp(&b.id));
    let index = build_index(&pool, &doc, &provider)?;
    save_index(&index, path)?;
    eprintln!("index: {} entries of dim {}", index.len(), index.dim());
    Ok(())
}

/// A dataset sample by id, or a file read as a query in the source language.
fn resolve_query(config: &RunConfig, query: &str) -> Result<CodeSample> {
    if config.dataset.as_deref().is_some_and(Path::is_dir) {
        if let Some(s) = load_samples(config)?.into_iter().find(|s| s.id == query) {
            return Ok(s);
        }
    }
    let path = Path::new(query);
    if path.is_file() {
        let text = std::fs::read_to_string(path).map_err(|e| xlsearch_core::Error::io(path, e))?;
        return Ok(CodeSample::new(query, config.source_lang.clone(), "", text));
    }
    Err(CliError::config(format!("query {query:?} is neither a dataset sample id nor a file")))
}

fn search(config: &RunConfig, index_path: &Path, encoder_dir: &Path, query: &str, n: usize, out: &mut dyn Write) -> Result<()> {
    let index = load_index(index_path)?;
    let (q_params, d_params) = read_encoders(encoder_dir)?;
    if index.encoder_digest() != d_params.digest() {
        return Err(CliError::config(format!(
            "index {} was built with a different document encoder than {}",
            index_path.display(),
            encoder_dir.display()
        )));
    }
    let sample = resolve_query(config, query)?;
    let provider = provider(config)?;
    let hits = query_with(&index, &sample, &q_params, &provider, n, config.train.similarity)?;
    for h in hits {
        writeln!(out, "{}\t{}\t{:.9}", h.rank, h.sample_id, h.score).map_err(stdout_error)?;
    }
    Ok(())
}

fn finish_report(mut report: EvalReport, config: serde_json::Value) -> EvalReport {
    report.config_digest = xlsearch_core::codec::sha256_hex(config.to_string().as_bytes());
    report.config = config;
    report
}

fn eval(
    config: &RunConfig,
    encoder_dir: Option<&Path>,
    baselines: &[String],
    split: SplitArg,
    dir: &Path,
    out: &mut dyn Write,
) -> Result<()> {
    let samples = load_samples(config)?;
    let provider = provider(config)?;
    let splits = splits(config, &samples, encoder_dir)?;
    let chosen = pick_split(&splits, split).expect("single split");
    let (queries, pool) = queries_and_pool(chosen, &config.source_lang, &config.target_lang);
    if pool.is_empty() {
        return Err(CliError::config(format!(
            "no {} samples in the {} split",
            config.target_lang, chosen.name
        )));
    }
    let (q, d) = match encoder_dir {
        Some(dir) => read_encoders(dir)?,
        None => (EncoderParams::identity(provider.dim()), EncoderParams::identity(provider.dim())),
    };
    let base = json!({
        "run": config.recorded(),
        "split": chosen.name,
        "provider": provider.provenance(),
        "query_digest": q.digest(),
        "doc_digest": d.digest(),
    });
    create_dir(dir)?;

    let ranker = EncoderRanker::new(&pool, &q, &d, &provider, config.train.similarity)?;
    let mut report = evaluate_with(&ranker, &queries, &pool, config.eval)?;
    if encoder_dir.is_none() {
        report.ranker = "untrained".into();
    }
    let report = finish_report(report, base.clone());
    std::fs::write(dir.join("eval_report.json"), report.to_json())
        .map_err(|e| xlsearch_core::Error::io(dir.join("eval_report.json"), e))?;
    write!(out, "{}", report.to_table()).map_err(stdout_error)?;

    for b in baselines {
        let ranker: Box<dyn Ranker> = match b.as_str() {
            "bm25" => Box::new(Bm25Ranker::new(&pool)?),
            _ => Box::new(AstRanker::new(&pool, false)),
        };
        let mut report = evaluate_with(ranker.as_ref(), &queries, &pool, config.eval)?;
        if b == "ast" {
            report.notes.push(AST_NOTE.into());
        }
        let mut cfg = base.clone();
        cfg["baseline"] = json!(b);
        let report = finish_report(report, cfg);
        let path = dir.join(format!("{b}_report.json"));
        std::fs::write(&path, report.to_json()).map_err(|e| xlsearch_core::Error::io(&path, e))?;
        writeln!(out).map_err(stdout_error)?;
        write!(out, "{}", report.to_table()).map_err(stdout_error)?;
    }
    Ok(())
}

fn toy_run(file: &Path, input: &str, timeout_s: f64, out: &mut dyn Write) -> Result<()> {
    let ext = file.extension().and_then(|e| e.to_str()).unwrap_or("");
    let dialect = Dialect::ALL
        .into_iter()
        .find(|d| d.extension() == ext)
        .ok_or_else(|| CliError::config(format!("{}: not a toy source file", file.display())))?;
    let args: Vec<serde_json::Value> =
        serde_json::from_str(input).map_err(|e| CliError::config(format!("--input must be a JSON array: {e}")))?;
    if !(timeout_s.is_finite() && timeout_s > 0.0) {
        return Err(CliError::config(format!("timeout_s = {timeout_s} must be > 0")));
    }
    let text = std::fs::read_to_string(file).map_err(|e| xlsearch_core::Error::io(file, e))?;
    let failed = |e: ToyError| CliError::from(xlsearch_core::Error::domain(format!("{}: {e}", file.display())));
    let program = Program::parse(&text, dialect).map_err(failed)?;
    let value = program.run(&args, Duration::from_secs_f64(timeout_s)).map_err(failed)?;
    writeln!(out, "{value}").map_err(stdout_error)?;
    Ok(())
}
