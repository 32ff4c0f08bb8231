use std::collections::BTreeMap;

use proptest::prelude::*;

use xlsearch_core::corpus::*;
use xlsearch_core::synth::{generate, write_dataset, SynthOptions};

fn fixture_options() -> SynthOptions {
    SynthOptions {
        problems: 4,
        samples_per_language: 3,
        ..SynthOptions::separable(5)
    }
}

#[test]
fn fixture_on_disk_loads_24_samples_with_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let generated = generate(&fixture_options()).unwrap();
    let manifest = write_dataset(dir.path(), &generated).unwrap();
    assert_eq!(Manifest::read(dir.path()).unwrap(), manifest);

    let loaded = load_dataset(dir.path(), &manifest).unwrap();
    assert!(loaded.warnings.is_empty(), "{:?}", loaded.warnings);
    assert_eq!(loaded.samples.len(), 24);
    for (g, l) in generated.iter().zip(&loaded.samples) {
        assert_eq!(l.id, g.id);
        let parts: Vec<&str> = l.id.split('/').collect();
        assert_eq!(parts.len(), 3);
        assert_eq!((parts[0], parts[1]), (l.problem_id.as_str(), l.language.as_str()));
        assert_eq!(l.text, g.text);
        assert_eq!(l.input_structure, g.input_structure);
        assert_eq!(l.ast, g.ast);
        assert_eq!(l.path.as_deref(), Some(dir.path().join(&l.id).as_path()));
    }
}

#[test]
fn empty_directory_and_missing_root() {
    let dir = tempfile::tempdir().unwrap();
    let loaded = load_dataset(dir.path(), &Manifest::default()).unwrap();
    assert!(loaded.samples.is_empty());
    let err = load_dataset(&dir.path().join("absent"), &Manifest::default()).unwrap_err();
    assert_eq!(err.kind(), "config");
}

#[test]
fn bad_files_are_skipped_with_warnings() {
    let dir = tempfile::tempdir().unwrap();
    let lang = dir.path().join("p1").join("py");
    std::fs::create_dir_all(&lang).unwrap();
    std::fs::write(lang.join("good.py"), "print(1)\n").unwrap();
    std::fs::write(lang.join("binary.py"), [0xff, 0xfe, 0x00]).unwrap();
    std::fs::write(lang.join("blank.py"), "  \n").unwrap();
    std::fs::write(lang.join("notes.txt"), "ignored").unwrap();
    std::fs::write(lang.join("good.py.meta.json"), "{\"input_structure\": [\"int\", \"list<string>\"]}").unwrap();
    let manifest = Manifest {
        problems: vec![],
        languages: BTreeMap::from([("py".to_string(), vec!["*.py".to_string()])]),
        files: BTreeMap::new(),
    };
    let loaded = load_dataset(dir.path(), &manifest).unwrap();
    let ids: Vec<_> = loaded.samples.iter().map(|s| s.id.as_str()).collect();
    assert_eq!(ids, ["p1/py/good.py"]);
    assert_eq!(loaded.warnings.len(), 2, "{:?}", loaded.warnings);
    let tags = loaded.samples[0].input_structure.as_ref().unwrap().tags();
    assert_eq!(tags, ["int", "list<string>"]);
}

#[test]
fn manifest_metadata_applies_by_id() {
    let dir = tempfile::tempdir().unwrap();
    let lang = dir.path().join("p1").join("toy");
    std::fs::create_dir_all(&lang).unwrap();
    std::fs::write(lang.join("a.toy"), "x\n").unwrap();
    std::fs::write(dir.path().join("a.ast"), "(module (identifier:x))\n").unwrap();
    let text = r#"{
        "problems": ["p1"],
        "languages": {"toy": ["*.toy"]},
        "files": {"p1/toy/a.toy": {"input_structure": ["int"], "ast": "a.ast"}}
    }"#;
    std::fs::write(dir.path().join("dataset.json"), text).unwrap();
    let manifest = Manifest::read(dir.path()).unwrap();
    let s = &load_dataset(dir.path(), &manifest).unwrap().samples[0];
    assert_eq!(s.input_structure.as_ref().unwrap().tags(), ["int"]);
    assert_eq!(s.ast.as_ref().unwrap().to_sexpr(), "(module (identifier:x))");

    std::fs::write(dir.path().join("dataset.json"), "{\n  \"problems\": 3\n}").unwrap();
    let err = Manifest::read(dir.path()).unwrap_err();
    assert_eq!(err.kind(), "parse");
    assert!(err.to_string().contains("line 2"), "{err}");
}

#[test]
fn ten_problems_split_eight_one_one() {
    let samples = generate(&SynthOptions {
        problems: 10,
        samples_per_language: 1,
        ..SynthOptions::separable(0)
    })
    .unwrap();
    for seed in 0..5 {
        let s = split_by_problem(&samples, &SplitAssignment::Ratios { ratios: [0.8, 0.1, 0.1], seed }).unwrap();
        assert_eq!((s.train.problems.len(), s.valid.problems.len(), s.test.problems.len()), (8, 1, 1));
    }
}

#[test]
fn explicit_assignment_must_cover_every_problem() {
    let samples = generate(&fixture_options()).unwrap();
    let mut map: BTreeMap<String, SplitName> = BTreeMap::new();
    map.insert("p00".into(), SplitName::Train);
    map.insert("p01".into(), SplitName::Test);
    let err = split_by_problem(&samples, &SplitAssignment::Explicit(map.clone())).unwrap_err();
    assert_eq!(err.kind(), "config");
    assert!(err.to_string().contains("p02") && err.to_string().contains("p03"));
    map.insert("p02".into(), SplitName::Valid);
    map.insert("p03".into(), SplitName::Train);
    let s = split_by_problem(&samples, &SplitAssignment::Explicit(map.clone())).unwrap();
    assert_eq!(s.assignment(), map);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("splits.json");
    write_split_manifest(&path, &map).unwrap();
    assert_eq!(read_split_manifest(&path).unwrap(), map);
}

#[test]
fn one_positive_one_negative_on_fixture() {
    let samples = generate(&fixture_options()).unwrap();
    let all = DatasetSplit {
        name: SplitName::Train,
        problems: samples.iter().map(|s| s.problem_id.clone()).collect(),
        samples: samples.clone(),
    };
    let tuples = make_tuples(&all, "toy", "toyb", 1, 1, 0).unwrap();
    assert_eq!(tuples.len(), 12);
    assert!(tuples.iter().all(|t| t.positives.len() == 1 && t.negatives.len() == 1));

    let ablation = make_tuples(&all, "toy", "toyb", 0, 5, 0).unwrap();
    assert!(ablation.iter().all(|t| t.positives.is_empty() && t.negatives.len() == 5));

    let one: Vec<CodeSample> = samples.iter().filter(|s| s.problem_id == "p00").cloned().collect();
    let single = DatasetSplit {
        name: SplitName::Train,
        problems: ["p00".to_string()].into(),
        samples: one,
    };
    let tuples = make_tuples(&single, "toy", "toyb", 5, 5, 0).unwrap();
    assert!(tuples.iter().all(|t| t.negatives.is_empty() && t.positives.len() == 3));
    assert!(make_tuples(&single, "toy", "toyb", 0, 0, 0).is_err());
    assert!(make_tuples(&single, "toyb", "absent", 1, 1, 0).unwrap().is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn splits_are_disjoint_complete_and_deterministic(
        problems in 1usize..30,
        seed in any::<u64>(),
        train in 0.0f64..=1.0,
        valid_share in 0.0f64..=1.0,
    ) {
        let samples = generate(&SynthOptions { problems, samples_per_language: 1, ..SynthOptions::separable(1) }).unwrap();
        let valid = (1.0 - train) * valid_share;
        let assignment = SplitAssignment::Ratios { ratios: [train, valid, 1.0 - train - valid], seed };
        let s = split_by_problem(&samples, &assignment).unwrap();
        prop_assert_eq!(&s, &split_by_problem(&samples, &assignment).unwrap());
        prop_assert!(s.train.problems.is_disjoint(&s.valid.problems));
        prop_assert!(s.train.problems.is_disjoint(&s.test.problems));
        prop_assert!(s.valid.problems.is_disjoint(&s.test.problems));
        prop_assert_eq!(s.train.samples.len() + s.valid.samples.len() + s.test.samples.len(), samples.len());
        prop_assert_eq!(s.train.problems.len(), (problems as f64 * train + 1e-9).floor() as usize);
        for split in [&s.train, &s.valid, &s.test] {
            prop_assert!(split.samples.iter().all(|x| split.problems.contains(&x.problem_id)));
        }
    }

    #[test]
    fn tuples_are_pure(k_p in 0usize..4, k_n in 0usize..6, seed in any::<u64>()) {
        prop_assume!(k_p + k_n > 0);
        let samples = generate(&SynthOptions { problems: 5, samples_per_language: 3, ..SynthOptions::separable(2) }).unwrap();
        let split = DatasetSplit {
            name: SplitName::Train,
            problems: samples.iter().map(|s| s.problem_id.clone()).collect(),
            samples,
        };
        let tuples = make_tuples(&split, "toyb", "toy", k_p, k_n, seed).unwrap();
        prop_assert_eq!(&tuples, &make_tuples(&split, "toyb", "toy", k_p, k_n, seed).unwrap());
        for t in &tuples {
            prop_assert_eq!(t.query.language.as_str(), "toyb");
            prop_assert_eq!(t.positives.len(), k_p.min(3));
            prop_assert_eq!(t.negatives.len(), k_n.min(12));
            prop_assert!(t.positives.iter().all(|p| p.problem_id == t.query.problem_id && p.language == "toy"));
            prop_assert!(t.negatives.iter().all(|n| n.problem_id != t.query.problem_id && n.language == "toy"));
            let mut ids: Vec<&str> = t.positives.iter().chain(&t.negatives).map(|s| s.id.as_str()).collect();
            let before = ids.len();
            ids.sort();
            ids.dedup();
            prop_assert_eq!(ids.len(), before);
        }
    }
}
