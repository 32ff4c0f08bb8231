//! Pairwise semantic similarity scores and the table that stores them.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;
use std::path::Path;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::runner::{ExecutionResult, SampleRunner};
use super::structure::{corpus_seed, generate_inputs, InputCorpus, InputStructure};
use crate::codec::{lines, quote, unquote, Header, Line};
use crate::corpus::CodeSample;
use crate::error::{Error, Result};

const FORMAT: &str = "REINF-SSS";
const MAGIC: &str = "REINF-SSS v1";
const JOURNAL_FORMAT: &str = "REINF-SSS journal";
const JOURNAL_MAGIC: &str = "REINF-SSS-JOURNAL v1";
/// Pairs scored between journal flushes.
const CHUNK: usize = 64;

/// Sparse `(query id, target id) → score` map.
#[derive(Debug, Clone, PartialEq)]
pub struct SssTable {
    scores: BTreeMap<(String, String), f64>,
    /// Fraction of requested pairs whose samples both declared a structure.
    pub coverage: f64,
}

impl Default for SssTable {
    fn default() -> Self {
        SssTable {
            scores: BTreeMap::new(),
            coverage: 1.0,
        }
    }
}

impl SssTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, query: &str, target: &str) -> Option<f64> {
        self.scores.get(&(query.to_string(), target.to_string())).copied()
    }

    pub fn insert(&mut self, query: impl Into<String>, target: impl Into<String>, score: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::domain(format!("similarity score {score} is outside [0, 1]")));
        }
        self.scores.insert((query.into(), target.into()), score);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, f64)> {
        self.scores.iter().map(|((q, t), s)| (q.as_str(), t.as_str(), *s))
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{MAGIC} count={} coverage={}\n", self.scores.len(), self.coverage);
        for (q, t, s) in self.iter() {
            out.push_str(&row(q, t, s));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let all = lines(FORMAT, text)?;
        let header = Header::parse(FORMAT, MAGIC, all.first(), None)?;
        let count: usize = header.get_parsed("count")?;
        let coverage: f64 = header.get_parsed("coverage")?;
        if !(0.0..=1.0).contains(&coverage) {
            return Err(all[0].error(FORMAT, format!("coverage {coverage} is outside [0, 1]")));
        }
        let mut table = SssTable {
            scores: BTreeMap::new(),
            coverage,
        };
        for line in &all[1..] {
            let (q, t, s) = parse_row(FORMAT, line)?;
            if table.scores.insert((q.clone(), t.clone()), s).is_some() {
                return Err(line.error(FORMAT, format!("duplicate pair ({q:?}, {t:?})")));
            }
        }
        if table.scores.len() != count {
            return Err(Error::Parse {
                format: FORMAT,
                line: all.len() + 1,
                offset: text.len(),
                message: format!("header declares {count} rows, found {}", table.scores.len()),
            });
        }
        Ok(table)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        crate::codec::write_string(path, &self.to_text())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_text(&crate::codec::read_to_string(path)?)
    }
}

fn row(q: &str, t: &str, s: f64) -> String {
    format!("{}\t{}\t{s}\n", quote(q), quote(t))
}

fn parse_row(format: &'static str, line: &Line<'_>) -> Result<(String, String, f64)> {
    let fields: Vec<&str> = line.text.split('\t').collect();
    if fields.len() != 3 {
        return Err(line.error(format, format!("expected 3 tab-separated fields, found {}", fields.len())));
    }
    let q = unquote(format, line, fields[0])?;
    let t = unquote(format, line, fields[1])?;
    let s: f64 = fields[2]
        .parse()
        .map_err(|_| line.error(format, format!("bad score {:?}", fields[2])))?;
    if !(0.0..=1.0).contains(&s) {
        return Err(line.error(format, format!("score {s} is outside [0, 1]")));
    }
    Ok((q, t, s))
}

/// One seeded input corpus per distinct structure, generated on first use.
#[derive(Debug)]
pub struct CorpusProvider {
    count: usize,
    seed: u64,
    cache: Mutex<HashMap<String, Arc<InputCorpus>>>,
}

impl CorpusProvider {
    pub fn new(count: usize, seed: u64) -> Self {
        CorpusProvider {
            count,
            seed,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn get(&self, structure: &InputStructure) -> Arc<InputCorpus> {
        let key = structure.to_string();
        let mut cache = self.cache.lock().expect("corpus cache lock");
        Arc::clone(cache.entry(key).or_insert_with(|| {
            Arc::new(generate_inputs(structure, self.count, corpus_seed(self.seed, structure)))
        }))
    }

    /// Distinct structures generated so far.
    pub fn generated(&self) -> usize {
        self.cache.lock().expect("corpus cache lock").len()
    }
}

/// The structure two samples share, if both declare the same one.
fn shared_structure<'a>(a: &'a CodeSample, b: &CodeSample) -> Option<&'a InputStructure> {
    match (&a.input_structure, &b.input_structure) {
        (Some(x), Some(y)) if x == y => Some(x),
        _ => None,
    }
}

fn run_all(sample: &CodeSample, inputs: &[Vec<Value>], runner: &SampleRunner) -> Result<Vec<ExecutionResult>> {
    inputs.iter().map(|input| runner.run(sample, input)).collect()
}

fn agreement(a: &[ExecutionResult], b: &[ExecutionResult]) -> f64 {
    let matches = a.iter().zip(b).filter(|(x, y)| x.matches(y)).count();
    matches as f64 / a.len() as f64
}

/// Fraction of the shared input corpus on which both samples succeed with
/// equal outputs. Samples without a common declared structure score 0 and
/// nothing is executed.
pub fn semantic_similarity(
    a: &CodeSample,
    b: &CodeSample,
    corpora: &CorpusProvider,
    runner: &SampleRunner,
) -> Result<f64> {
    let Some(structure) = shared_structure(a, b) else {
        return Ok(0.0);
    };
    runner.check_languages([a.language.as_str(), b.language.as_str()])?;
    let corpus = corpora.get(structure);
    let ra = run_all(a, &corpus.inputs, runner)?;
    let rb = run_all(b, &corpus.inputs, runner)?;
    Ok(agreement(&ra, &rb))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SssConfig {
    /// Inputs generated per structure.
    pub corpus_size: usize,
    pub seed: u64,
    /// Worker cap; 0 uses every core.
    pub jobs: usize,
}

impl Default for SssConfig {
    fn default() -> Self {
        SssConfig {
            corpus_size: 100,
            seed: 0,
            jobs: 0,
        }
    }
}

/// What a table build did.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SssStats {
    pub pairs: usize,
    /// Pairs whose structures differ or are undeclared, scored 0 unexecuted.
    pub mismatched: usize,
    /// Same-problem pairs among the mismatched ones.
    pub zeroed_positive_pairs: usize,
    /// Pairs taken from an existing journal.
    pub resumed: usize,
    pub executions: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SssBuild {
    pub table: SssTable,
    pub stats: SssStats,
}

struct Journal {
    file: std::fs::File,
    path: std::path::PathBuf,
}

impl Journal {
    fn header(config: &SssConfig) -> String {
        format!("{JOURNAL_MAGIC} seed={} corpus_size={}\n", config.seed, config.corpus_size)
    }

    /// Open for appending, returning the pairs already recorded. A trailing
    /// partial line from an interrupted write is discarded.
    fn open(path: &Path, config: &SssConfig) -> Result<(Journal, BTreeMap<(String, String), f64>)> {
        let mut done = BTreeMap::new();
        let header = Self::header(config);
        if path.exists() {
            let mut text = crate::codec::read_to_string(path)?;
            match text.rfind('\n') {
                Some(end) => text.truncate(end + 1),
                None => text.clear(),
            }
            if !text.is_empty() {
                let all = lines(JOURNAL_FORMAT, &text)?;
                if all[0].text != header.trim_end() {
                    return Err(Error::config(format!(
                        "{} was written with different settings; remove it to start over",
                        path.display()
                    )));
                }
                for line in &all[1..] {
                    let (q, t, s) = parse_row(JOURNAL_FORMAT, line)?;
                    done.insert((q, t), s);
                }
            }
            std::fs::write(path, if text.is_empty() { header.clone() } else { text })
                .map_err(|e| Error::io(path, e))?;
        } else {
            std::fs::write(path, &header).map_err(|e| Error::io(path, e))?;
        }
        let file = std::fs::OpenOptions::new()
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok((
            Journal {
                file,
                path: path.to_path_buf(),
            },
            done,
        ))
    }

    fn append(&mut self, rows: &str) -> Result<()> {
        self.file
            .write_all(rows.as_bytes())
            .and_then(|_| self.file.flush())
            .map_err(|e| Error::io(&self.path, e))
    }
}

/// Score every pair, generating one corpus per structure and executing each
/// sample at most once per corpus input.
///
/// With a journal path, scored pairs are appended as they complete and a
/// rerun resumes from them.
pub fn build_sss_table(
    pairs: &[(String, String)],
    samples: &[CodeSample],
    config: &SssConfig,
    runner: &SampleRunner,
    journal: Option<&Path>,
) -> Result<SssBuild> {
    let by_id: HashMap<&str, &CodeSample> = samples.iter().map(|s| (s.id.as_str(), s)).collect();
    let unique: Vec<&(String, String)> = pairs.iter().collect::<BTreeSet<_>>().into_iter().collect();

    let mut missing = BTreeSet::new();
    let mut resolved = Vec::with_capacity(unique.len());
    for (q, t) in &unique {
        match (by_id.get(q.as_str()), by_id.get(t.as_str())) {
            (Some(a), Some(b)) => resolved.push((*a, *b)),
            (a, b) => {
                if a.is_none() {
                    missing.insert(q.clone());
                }
                if b.is_none() {
                    missing.insert(t.clone());
                }
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::Config(
            missing
                .into_iter()
                .map(|id| format!("pair references unknown sample {id:?}"))
                .collect(),
        ));
    }
    runner.check_languages(
        resolved
            .iter()
            .filter(|(a, b)| shared_structure(a, b).is_some())
            .flat_map(|(a, b)| [a.language.as_str(), b.language.as_str()]),
    )?;

    let mut stats = SssStats {
        pairs: resolved.len(),
        ..SssStats::default()
    };
    let declared = resolved
        .iter()
        .filter(|(a, b)| a.input_structure.is_some() && b.input_structure.is_some())
        .count();
    let mut table = SssTable {
        scores: BTreeMap::new(),
        coverage: if resolved.is_empty() {
            1.0
        } else {
            declared as f64 / resolved.len() as f64
        },
    };
    for (a, b) in &resolved {
        if shared_structure(a, b).is_none() {
            stats.mismatched += 1;
            if a.problem_id == b.problem_id {
                stats.zeroed_positive_pairs += 1;
            }
        }
    }

    let (mut journal, done) = match journal {
        Some(path) => {
            let (j, d) = Journal::open(path, config)?;
            (Some(j), d)
        }
        None => (None, BTreeMap::new()),
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))?;
    let corpora = CorpusProvider::new(config.corpus_size, config.seed);
    let mut outputs: HashMap<String, Arc<Vec<ExecutionResult>>> = HashMap::new();
    let before = runner.executions();

    let mut todo = Vec::new();
    for (a, b) in resolved {
        let key = (a.id.clone(), b.id.clone());
        if let Some(&s) = done.get(&key) {
            table.insert(key.0, key.1, s)?;
            stats.resumed += 1;
        } else {
            todo.push((a, b));
        }
    }

    for chunk in todo.chunks(CHUNK) {
        let mut need: Vec<&CodeSample> = chunk
            .iter()
            .filter(|(a, b)| shared_structure(a, b).is_some())
            .flat_map(|(a, b)| [*a, *b])
            .filter(|s| !outputs.contains_key(&s.id))
            .collect();
        need.sort_by(|x, y| x.id.cmp(&y.id));
        need.dedup_by(|x, y| x.id == y.id);
        let fresh: Vec<(String, Vec<ExecutionResult>)> = pool.install(|| {
            need.par_iter()
                .map(|s| {
                    let structure = s.input_structure.as_ref().expect("only declared samples run");
                    let corpus = corpora.get(structure);
                    run_all(s, &corpus.inputs, runner).map(|r| (s.id.clone(), r))
                })
                .collect::<Result<_>>()
        })?;
        outputs.extend(fresh.into_iter().map(|(id, r)| (id, Arc::new(r))));

        let mut rows = String::new();
        for (a, b) in chunk {
            let score = match shared_structure(a, b) {
                Some(_) => agreement(&outputs[&a.id], &outputs[&b.id]),
                None => 0.0,
            };
            rows.push_str(&row(&a.id, &b.id, score));
            table.insert(a.id.clone(), b.id.clone(), score)?;
        }
        if let Some(j) = journal.as_mut() {
            j.append(&rows)?;
        }
    }
    stats.executions = runner.executions() - before;
    Ok(SssBuild { table, stats })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip_preserves_scores_bitwise() {
        let mut t = SssTable::new();
        t.insert("a\tb", "c\"d", 0.7).unwrap();
        t.insert("x", "y", 1.0 / 3.0).unwrap();
        t.insert("x", "z", 0.0).unwrap();
        t.coverage = 0.25;
        let back = SssTable::from_text(&t.to_text()).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.get("x", "y").unwrap().to_bits(), (1.0f64 / 3.0).to_bits());
    }

    #[test]
    fn rejects_out_of_range_and_miscounted_tables() {
        assert!(SssTable::new().insert("a", "b", 1.5).is_err());
        let bad = "REINF-SSS v1 count=1 coverage=1\n\"a\"\t\"b\"\t1.5\n";
        assert!(matches!(SssTable::from_text(bad), Err(Error::Parse { line: 2, .. })));
        let short = "REINF-SSS v1 count=2 coverage=1\n\"a\"\t\"b\"\t0.5\n";
        assert!(matches!(SssTable::from_text(short), Err(Error::Parse { .. })));
    }

    #[test]
    fn empty_build_reports_full_coverage() {
        let runner = SampleRunner::new(Default::default()).unwrap();
        let b = build_sss_table(&[], &[], &SssConfig::default(), &runner, None).unwrap();
        assert!(b.table.is_empty());
        assert_eq!(b.table.coverage, 1.0);
    }
}
