use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use xlsearch_core::embedding::{EmbeddingTable, EmbeddingVector};
use xlsearch_core::sss::SssTable;
use xlsearch_core::trainer::{Activation, EncoderFile, EncoderParams, Layer};
use xlsearch_core::Error;

fn id_strategy() -> impl Strategy<Value = String> {
    // Quotes, tabs, backslashes and non-ASCII must survive quoting.
    "[a-z0-9/._\"\\\\\t é]{1,16}"
}

fn finite_f32() -> impl Strategy<Value = f32> {
    prop::num::f32::NORMAL | prop::num::f32::SUBNORMAL | prop::num::f32::ZERO
}

fn table_strategy() -> impl Strategy<Value = EmbeddingTable> {
    (1usize..6).prop_flat_map(|dim| {
        prop::collection::btree_map(id_strategy(), prop::collection::vec(finite_f32(), dim), 0..12).prop_map(
            move |rows| {
                let mut t = EmbeddingTable::new(dim, "random table v1").unwrap();
                for (id, v) in rows {
                    if v.iter().any(|x| *x != 0.0) {
                        t.insert(id, &EmbeddingVector::from_f32(&v).unwrap()).unwrap();
                    }
                }
                t
            },
        )
    })
}

fn encoder(seed: u64) -> EncoderFile {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = [rng.gen_range(1..6), rng.gen_range(1..6), rng.gen_range(1..6)];
    let acts = [Activation::Tanh, Activation::Relu, Activation::Linear];
    let layers = (0..rng.gen_range(1..=2))
        .map(|i| {
            let mut l = Layer::uniform(dims[i], dims[i + 1], acts[rng.gen_range(0..3)], &mut rng);
            // Some extreme but representable values.
            l.weight[0] = f64::from(f32::MAX);
            l.bias[0] = f64::from(-f32::MIN_POSITIVE);
            l
        })
        .collect();
    EncoderFile {
        params: EncoderParams::new(layers).unwrap(),
        seed,
        config_digest: if seed % 2 == 0 { String::new() } else { "ab".repeat(32) },
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn embedding_tables_round_trip_bit_exactly(t in table_strategy()) {
        let text = t.to_text();
        let back = EmbeddingTable::from_text(&text).unwrap();
        prop_assert_eq!(&back, &t);
        prop_assert_eq!(back.to_text(), text);
        for id in t.ids() {
            let a: Vec<u32> = t.get(id).unwrap().to_f32().iter().map(|x| x.to_bits()).collect();
            let b: Vec<u32> = back.get(id).unwrap().to_f32().iter().map(|x| x.to_bits()).collect();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn encoder_files_round_trip_bit_exactly(seed in any::<u64>()) {
        let e = encoder(seed);
        let back = EncoderFile::from_text(&e.to_text()).unwrap();
        prop_assert_eq!(&back, &e);
        prop_assert_eq!(back.params.digest(), e.params.digest());
    }

    #[test]
    fn sss_tables_round_trip_exactly(
        rows in prop::collection::btree_map((id_strategy(), id_strategy()), 0.0f64..=1.0, 0..20),
        coverage in 0.0f64..=1.0,
    ) {
        let mut t = SssTable::new();
        t.coverage = coverage;
        for ((q, d), s) in rows {
            t.insert(q, d, s).unwrap();
        }
        let back = SssTable::from_text(&t.to_text()).unwrap();
        prop_assert_eq!(&back, &t);
        for ((_, _, a), (_, _, b)) in t.iter().zip(back.iter()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn truncation_never_parses_silently(t in table_strategy(), cut in 0.0f64..1.0) {
        let text = t.to_text();
        let at = ((text.len() as f64 * cut) as usize).min(text.len() - 1);
        if let Some(prefix) = text.get(..at) {
            if let Ok(back) = EmbeddingTable::from_text(prefix) {
                // Only a cut exactly at a row boundary can still be valid, and
                // then the row count in the header no longer matches.
                prop_assert_eq!(back, t);
            }
        }
    }
}

fn parse_line(err: &Error) -> usize {
    match err {
        Error::Parse { line, .. } => *line,
        other => panic!("expected a parse error, got {other}"),
    }
}

fn three_vectors() -> EmbeddingTable {
    let mut t = EmbeddingTable::new(3, "hand").unwrap();
    for (i, id) in ["a", "b", "c"].iter().enumerate() {
        t.insert(*id, &EmbeddingVector::from_f32(&[i as f32 + 0.5, -1.0, 1e-30]).unwrap()).unwrap();
    }
    t
}

#[test]
fn embedding_corruptions_are_located() {
    let good = three_vectors().to_text();
    let lines: Vec<&str> = good.lines().collect();

    let wrong_len = good.replace(lines[2], &format!("\"b\"\t{}", &lines[1].split('\t').nth(1).unwrap()[..8]));
    assert_eq!(parse_line(&EmbeddingTable::from_text(&wrong_len).unwrap_err()), 3);

    let dup = good.replace("\"c\"", "\"a\"");
    let err = EmbeddingTable::from_text(&dup).unwrap_err();
    assert_eq!(parse_line(&err), 4);

    let bad_header = good.replace("dim=3", "dim=three");
    assert_eq!(parse_line(&EmbeddingTable::from_text(&bad_header).unwrap_err()), 1);

    let missing_row = format!("{}\n{}\n{}\n", lines[0], lines[1], lines[2]);
    let err = EmbeddingTable::from_text(&missing_row).unwrap_err();
    assert!(err.to_string().contains("3 rows"), "{err}");

    let zero = EmbeddingVector::from_f32(&[0.0, 0.0, 0.0]);
    assert!(zero.is_err() || EmbeddingTable::new(3, "x").unwrap().insert("z", &zero.unwrap()).is_err());
}

#[test]
fn empty_table_is_header_only() {
    let t = EmbeddingTable::new(4, "empty").unwrap();
    let text = t.to_text();
    assert_eq!(text.lines().count(), 1);
    assert_eq!(EmbeddingTable::from_text(&text).unwrap(), t);
}

#[test]
fn encoder_corruptions_are_located() {
    let text = encoder(3).to_text();
    let truncated = &text[..text.len() - 6];
    assert_eq!(EncoderFile::from_text(truncated).unwrap_err().kind(), "parse");
    let bad_spec = text.replacen(":tanh", ":sigmoid", 1).replacen(":relu", ":sigmoid", 1).replacen(":linear", ":sigmoid", 1);
    assert_eq!(parse_line(&EncoderFile::from_text(&bad_spec).unwrap_err()), 1);
    let swapped: String = {
        let mut l: Vec<&str> = text.lines().collect();
        l.swap(1, 2);
        l.join("\n") + "\n"
    };
    assert_eq!(parse_line(&EncoderFile::from_text(&swapped).unwrap_err()), 2);
}

#[test]
fn sss_corruptions_are_located() {
    let mut t = SssTable::new();
    t.insert("q", "a", 0.25).unwrap();
    t.insert("q", "b", 1.0).unwrap();
    let text = t.to_text();
    let out_of_range = text.replace("0.25", "1.25");
    assert_eq!(parse_line(&SssTable::from_text(&out_of_range).unwrap_err()), 2);
    let dup = text.replace("\"b\"", "\"a\"");
    assert_eq!(parse_line(&SssTable::from_text(&dup).unwrap_err()), 3);
    let unquoted = text.replace("\"q\"\t\"a\"", "q\t\"a\"");
    assert_eq!(parse_line(&SssTable::from_text(&unquoted).unwrap_err()), 2);
    assert!(SssTable::from_text("REINF-SSS v2 count=0 coverage=1\n").is_err());
}
