//! Code-sample datasets: loading, problem-disjoint splits and training tuples.
//!
//! On disk a dataset is `<root>/<problem_id>/<language>/<file>` plus a
//! `dataset.json` manifest at the root. A file may carry a metadata sidecar
//! `<file>.meta.json` with `input_structure` (type tags) and `ast` (path to a
//! generic-AST s-expression, relative to the sample's directory).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::ast::GenericAst;
use crate::codec::stable_hash;
use crate::error::{Error, Result};
use crate::sss::InputStructure;

pub const MANIFEST_FILE: &str = "dataset.json";
const META_SUFFIX: &str = ".meta.json";

/// One source file.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeSample {
    /// `<problem_id>/<language>/<filename>` for loaded samples.
    pub id: String,
    pub language: String,
    pub problem_id: String,
    pub text: String,
    pub input_structure: Option<InputStructure>,
    pub ast: Option<GenericAst>,
    /// Location on disk, when the sample was loaded from a file.
    pub path: Option<PathBuf>,
}

impl CodeSample {
    pub fn new(
        id: impl Into<String>,
        language: impl Into<String>,
        problem_id: impl Into<String>,
        text: impl Into<String>,
    ) -> Self {
        CodeSample {
            id: id.into(),
            language: language.into(),
            problem_id: problem_id.into(),
            text: text.into(),
            input_structure: None,
            ast: None,
            path: None,
        }
    }

    pub fn with_structure(mut self, structure: InputStructure) -> Self {
        self.input_structure = Some(structure);
        self
    }

    pub fn with_ast(mut self, ast: GenericAst) -> Self {
        self.ast = Some(ast);
        self
    }
}

/// Per-file metadata, from the manifest or a `.meta.json` sidecar.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_structure: Option<InputStructure>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ast: Option<PathBuf>,
}

/// Contents of `dataset.json`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    /// Problem directories to load. Empty means every subdirectory of root.
    #[serde(default)]
    pub problems: Vec<String>,
    /// Language subdirectory name to file-name globs.
    #[serde(default)]
    pub languages: BTreeMap<String, Vec<String>>,
    /// Metadata keyed by sample id; `ast` paths are relative to the root.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub files: BTreeMap<String, FileMeta>,
}

impl Manifest {
    pub fn read(root: &Path) -> Result<Self> {
        let path = root.join(MANIFEST_FILE);
        let text = crate::codec::read_to_string(&path)?;
        serde_json::from_str(&text).map_err(|e| json_error(MANIFEST_FILE, &text, &e))
    }

    pub fn write(&self, root: &Path) -> Result<()> {
        let path = root.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes") + "\n";
        crate::codec::write_string(&path, &text)
    }
}

pub(crate) fn json_error(format: &'static str, text: &str, e: &serde_json::Error) -> Error {
    let line = e.line().max(1);
    let offset = text
        .split_inclusive('\n')
        .take(line - 1)
        .map(str::len)
        .sum::<usize>()
        + e.column().saturating_sub(1);
    Error::Parse {
        format,
        line,
        offset,
        message: e.to_string(),
    }
}

/// Loader result: samples sorted by id plus per-file warnings.
#[derive(Debug, Clone, Default)]
pub struct LoadedDataset {
    pub samples: Vec<CodeSample>,
    pub warnings: Vec<String>,
}

/// Load every file matched by the manifest under `root`.
pub fn load_dataset(root: &Path, manifest: &Manifest) -> Result<LoadedDataset> {
    if !root.is_dir() {
        return Err(Error::config(format!(
            "dataset root {} does not exist or is not a directory",
            root.display()
        )));
    }
    let mut warnings = Vec::new();
    let mut patterns = BTreeMap::new();
    for (lang, globs) in &manifest.languages {
        let compiled = globs
            .iter()
            .map(|g| {
                glob::Pattern::new(g)
                    .map_err(|e| Error::config(format!("bad glob {g:?} for {lang}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        patterns.insert(lang.clone(), compiled);
    }

    let problems: Vec<String> = if manifest.problems.is_empty() {
        if manifest.languages.is_empty() {
            Vec::new()
        } else {
            list_dir(root)?
                .into_iter()
                .filter(|(_, p)| p.is_dir())
                .map(|(name, _)| name)
                .collect()
        }
    } else {
        manifest.problems.clone()
    };

    let mut samples: BTreeMap<String, CodeSample> = BTreeMap::new();
    for problem in &problems {
        let problem_dir = root.join(problem);
        if !problem_dir.is_dir() {
            warnings.push(format!("problem directory {} is missing", problem_dir.display()));
            continue;
        }
        for (lang, globs) in &patterns {
            let lang_dir = problem_dir.join(lang);
            if !lang_dir.is_dir() {
                continue;
            }
            for (name, path) in list_dir(&lang_dir)? {
                if name.ends_with(META_SUFFIX) || !path.is_file() {
                    continue;
                }
                if !globs.iter().any(|g| g.matches(&name)) {
                    continue;
                }
                let id = format!("{problem}/{lang}/{name}");
                match load_sample(root, manifest, &id, problem, lang, &path, &mut warnings) {
                    Some(sample) => {
                        if samples.insert(id.clone(), sample).is_some() {
                            return Err(Error::DuplicateId(id));
                        }
                    }
                    None => continue,
                }
            }
        }
    }
    Ok(LoadedDataset {
        samples: samples.into_values().collect(),
        warnings,
    })
}

fn list_dir(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut entries = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        if let Some(name) = entry.file_name().to_str() {
            entries.push((name.to_string(), entry.path()));
        }
    }
    entries.sort();
    Ok(entries)
}

fn load_sample(
    root: &Path,
    manifest: &Manifest,
    id: &str,
    problem: &str,
    lang: &str,
    path: &Path,
    warnings: &mut Vec<String>,
) -> Option<CodeSample> {
    let text = match std::fs::read(path) {
        Ok(bytes) => match String::from_utf8(bytes) {
            Ok(t) => t,
            Err(_) => {
                warnings.push(format!("{}: not valid UTF-8, skipped", path.display()));
                return None;
            }
        },
        Err(e) => {
            warnings.push(format!("{}: unreadable ({e}), skipped", path.display()));
            return None;
        }
    };
    if text.trim().is_empty() {
        warnings.push(format!("{}: empty file, skipped", path.display()));
        return None;
    }

    let mut meta = manifest.files.get(id).cloned().unwrap_or_default();
    let mut ast_base = root.to_path_buf();
    let sidecar = PathBuf::from(format!("{}{META_SUFFIX}", path.display()));
    if sidecar.is_file() {
        match std::fs::read_to_string(&sidecar)
            .map_err(|e| e.to_string())
            .and_then(|t| serde_json::from_str::<FileMeta>(&t).map_err(|e| e.to_string()))
        {
            Ok(side) => {
                if side.input_structure.is_some() {
                    meta.input_structure = side.input_structure;
                }
                if side.ast.is_some() {
                    meta.ast = side.ast;
                    ast_base = path.parent().unwrap_or(root).to_path_buf();
                }
            }
            Err(e) => warnings.push(format!("{}: bad metadata ({e}), ignored", sidecar.display())),
        }
    }

    let ast = meta.ast.as_ref().and_then(|rel| {
        let ast_path = ast_base.join(rel);
        match std::fs::read_to_string(&ast_path) {
            Ok(src) => match GenericAst::parse(&src) {
                Ok(tree) => Some(tree),
                Err(e) => {
                    warnings.push(format!("{}: {e}", ast_path.display()));
                    None
                }
            },
            Err(e) => {
                warnings.push(format!("{}: unreadable AST ({e})", ast_path.display()));
                None
            }
        }
    });

    Some(CodeSample {
        id: id.to_string(),
        language: lang.to_string(),
        problem_id: problem.to_string(),
        text,
        input_structure: meta.input_structure,
        ast,
        path: Some(path.to_path_buf()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Valid,
    Test,
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitName::Train => "train",
            SplitName::Valid => "valid",
            SplitName::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub name: SplitName,
    pub problems: BTreeSet<String>,
    /// Sorted by id.
    pub samples: Vec<CodeSample>,
}

impl DatasetSplit {
    pub fn samples_in<'a>(&'a self, language: &'a str) -> impl Iterator<Item = &'a CodeSample> {
        self.samples.iter().filter(move |s| s.language == language)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SplitAssignment {
    /// Problem id to split, as in a split manifest file.
    Explicit(BTreeMap<String, SplitName>),
    /// Train/valid/test fractions with a shuffling seed.
    Ratios { ratios: [f64; 3], seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: DatasetSplit,
    pub valid: DatasetSplit,
    pub test: DatasetSplit,
}

impl Splits {
    pub fn get(&self, name: SplitName) -> &DatasetSplit {
        match name {
            SplitName::Train => &self.train,
            SplitName::Valid => &self.valid,
            SplitName::Test => &self.test,
        }
    }

    /// The problem assignment, in split-manifest form.
    pub fn assignment(&self) -> BTreeMap<String, SplitName> {
        [&self.train, &self.valid, &self.test]
            .into_iter()
            .flat_map(|s| s.problems.iter().map(move |p| (p.clone(), s.name)))
            .collect()
    }
}

/// Assign problems for a ratio split: sort ids, shuffle with the seed, take
/// `floor(n * train)` then `floor(n * valid)`, the rest go to test.
pub fn ratio_assignment(
    problems: &BTreeSet<String>,
    ratios: [f64; 3],
    seed: u64,
) -> Result<BTreeMap<String, SplitName>> {
    if ratios.iter().any(|r| !r.is_finite() || *r < 0.0) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::config(format!(
            "split ratios {ratios:?} must be non-negative and sum to 1"
        )));
    }
    let mut ids: Vec<&String> = problems.iter().collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = ids.len() as f64;
    // The epsilon absorbs representation error such as 0.29 * 100 = 28.999...
    let n_train = (n * ratios[0] + 1e-9).floor() as usize;
    let n_valid = ((n * ratios[1] + 1e-9).floor() as usize).min(ids.len() - n_train);
    Ok(ids
        .into_iter()
        .enumerate()
        .map(|(i, p)| {
            let name = if i < n_train {
                SplitName::Train
            } else if i < n_train + n_valid {
                SplitName::Valid
            } else {
                SplitName::Test
            };
            (p.clone(), name)
        })
        .collect())
}

pub fn split_by_problem(samples: &[CodeSample], assignment: &SplitAssignment) -> Result<Splits> {
    let problems: BTreeSet<String> = samples.iter().map(|s| s.problem_id.clone()).collect();
    let map = match assignment {
        SplitAssignment::Explicit(map) => {
            let unknown: Vec<String> = problems
                .iter()
                .filter(|p| !map.contains_key(*p))
                .map(|p| format!("problem {p:?} is not covered by the split manifest"))
                .collect();
            if !unknown.is_empty() {
                return Err(Error::Config(unknown));
            }
            map.clone()
        }
        SplitAssignment::Ratios { ratios, seed } => ratio_assignment(&problems, *ratios, *seed)?,
    };

    let make = |name: SplitName| DatasetSplit {
        name,
        problems: map
            .iter()
            .filter(|(_, s)| **s == name)
            .map(|(p, _)| p.clone())
            .collect(),
        samples: Vec::new(),
    };
    let mut splits = Splits {
        train: make(SplitName::Train),
        valid: make(SplitName::Valid),
        test: make(SplitName::Test),
    };
    let mut sorted: Vec<&CodeSample> = samples.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    for sample in sorted {
        let target = match map[&sample.problem_id] {
            SplitName::Train => &mut splits.train,
            SplitName::Valid => &mut splits.valid,
            SplitName::Test => &mut splits.test,
        };
        target.samples.push(sample.clone());
    }
    Ok(splits)
}

pub fn read_split_manifest(path: &Path) -> Result<BTreeMap<String, SplitName>> {
    let text = crate::codec::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| json_error("split manifest", &text, &e))
}

pub fn write_split_manifest(path: &Path, map: &BTreeMap<String, SplitName>) -> Result<()> {
    let text = serde_json::to_string_pretty(map).expect("split manifest serializes") + "\n";
    crate::codec::write_string(path, &text)
}

/// A query with its sampled positive and negative target-language samples.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTuple {
    pub query: CodeSample,
    pub positives: Vec<CodeSample>,
    pub negatives: Vec<CodeSample>,
}

/// Build one tuple per source-language sample of the split.
///
/// Samples are drawn without replacement from a per-query stream derived from
/// `seed` and the query id. When `k_p > 0`, queries with no same-problem
/// target sample are skipped.
pub fn make_tuples(
    split: &DatasetSplit,
    source_lang: &str,
    target_lang: &str,
    k_p: usize,
    k_n: usize,
    seed: u64,
) -> Result<Vec<TrainingTuple>> {
    if k_p == 0 && k_n == 0 {
        return Err(Error::config("k_p and k_n cannot both be zero"));
    }
    let mut targets: Vec<&CodeSample> = split.samples_in(target_lang).collect();
    targets.sort_by(|a, b| a.id.cmp(&b.id));
    let mut queries: Vec<&CodeSample> = split.samples_in(source_lang).collect();
    queries.sort_by(|a, b| a.id.cmp(&b.id));

    let mut tuples = Vec::new();
    for query in queries {
        let (same, other): (Vec<&CodeSample>, Vec<&CodeSample>) = targets
            .iter()
            .copied()
            .filter(|t| t.id != query.id)
            .partition(|t| t.problem_id == query.problem_id);
        if k_p > 0 && same.is_empty() {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(stable_hash(seed, &query.id));
        let positives = same.choose_multiple(&mut rng, k_p).map(|s| (*s).clone()).collect();
        let negatives = other.choose_multiple(&mut rng, k_n).map(|s| (*s).clone()).collect();
        tuples.push(TrainingTuple {
            query: query.clone(),
            positives,
            negatives,
        });
    }
    Ok(tuples)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(problems: usize, langs: &[&str], per: usize) -> Vec<CodeSample> {
        let mut out = Vec::new();
        for p in 0..problems {
            for lang in langs {
                for i in 0..per {
                    let pid = format!("p{p:02}");
                    out.push(CodeSample::new(
                        format!("{pid}/{lang}/{i}.src"),
                        *lang,
                        pid.clone(),
                        format!("solution {p} {i}"),
                    ));
                }
            }
        }
        out
    }

    #[test]
    fn ratio_split_sizes() {
        let samples = fixture(10, &["a"], 1);
        let splits = split_by_problem(
            &samples,
            &SplitAssignment::Ratios {
                ratios: [0.8, 0.1, 0.1],
                seed: 3,
            },
        )
        .unwrap();
        assert_eq!(splits.train.problems.len(), 8);
        assert_eq!(splits.valid.problems.len(), 1);
        assert_eq!(splits.test.problems.len(), 1);
    }

    #[test]
    fn ratio_split_is_deterministic() {
        let samples = fixture(25, &["a", "b"], 2);
        let asg = SplitAssignment::Ratios {
            ratios: [0.6, 0.2, 0.2],
            seed: 42,
        };
        assert_eq!(
            split_by_problem(&samples, &asg).unwrap(),
            split_by_problem(&samples, &asg).unwrap()
        );
    }

    #[test]
    fn bad_ratios_rejected() {
        let samples = fixture(3, &["a"], 1);
        let asg = SplitAssignment::Ratios {
            ratios: [0.5, 0.5, 0.5],
            seed: 0,
        };
        assert!(split_by_problem(&samples, &asg).is_err());
    }

    #[test]
    fn explicit_map_must_cover_problems() {
        let samples = fixture(2, &["a"], 1);
        let map = BTreeMap::from([("p00".to_string(), SplitName::Train)]);
        let err = split_by_problem(&samples, &SplitAssignment::Explicit(map)).unwrap_err();
        assert!(err.to_string().contains("p01"));
    }

    #[test]
    fn single_problem_gives_empty_negatives() {
        let samples = fixture(1, &["a", "b"], 3);
        let splits = split_by_problem(
            &samples,
            &SplitAssignment::Ratios {
                ratios: [1.0, 0.0, 0.0],
                seed: 0,
            },
        )
        .unwrap();
        let tuples = make_tuples(&splits.train, "a", "b", 5, 5, 1).unwrap();
        assert_eq!(tuples.len(), 3);
        assert!(tuples.iter().all(|t| t.negatives.is_empty() && t.positives.len() == 3));
    }

    #[test]
    fn one_and_one() {
        let samples = fixture(4, &["a", "b"], 3);
        let splits = split_by_problem(
            &samples,
            &SplitAssignment::Ratios {
                ratios: [1.0, 0.0, 0.0],
                seed: 0,
            },
        )
        .unwrap();
        let tuples = make_tuples(&splits.train, "a", "b", 1, 1, 9).unwrap();
        assert_eq!(tuples.len(), 12);
        for t in &tuples {
            assert_eq!(t.positives.len(), 1);
            assert_eq!(t.negatives.len(), 1);
            assert_eq!(t.positives[0].problem_id, t.query.problem_id);
            assert_ne!(t.negatives[0].problem_id, t.query.problem_id);
            assert_eq!(t.positives[0].language, "b");
        }
    }

    #[test]
    fn zero_positives_configuration() {
        let samples = fixture(4, &["a", "b"], 3);
        let split = DatasetSplit {
            name: SplitName::Train,
            problems: samples.iter().map(|s| s.problem_id.clone()).collect(),
            samples,
        };
        let tuples = make_tuples(&split, "a", "b", 0, 5, 9).unwrap();
        assert_eq!(tuples.len(), 12);
        assert!(tuples.iter().all(|t| t.positives.is_empty() && t.negatives.len() == 5));
        assert!(make_tuples(&split, "a", "b", 0, 0, 9).is_err());
    }

    #[test]
    fn queries_without_positives_are_skipped() {
        let mut samples = fixture(2, &["a", "b"], 2);
        samples.push(CodeSample::new("p99/a/0.src", "a", "p99", "lonely"));
        let split = DatasetSplit {
            name: SplitName::Train,
            problems: samples.iter().map(|s| s.problem_id.clone()).collect(),
            samples,
        };
        let tuples = make_tuples(&split, "a", "b", 2, 2, 0).unwrap();
        assert_eq!(tuples.len(), 4);
        assert!(tuples.iter().all(|t| t.query.problem_id != "p99"));
        assert!(make_tuples(&split, "c", "b", 2, 2, 0).unwrap().is_empty());
    }
}
