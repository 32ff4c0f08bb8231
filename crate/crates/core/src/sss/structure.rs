//! Input structures and the seeded random input corpora shared by every
//! program with that structure.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::codec::stable_hash;
use crate::error::{Error, Result};

/// Maximum nesting depth of `list<...>` tags.
pub const MAX_DEPTH: usize = 3;

const INT_RANGE: (i64, i64) = (-100, 100);
const FLOAT_RANGE: (f64, f64) = (-1000.0, 1000.0);
const MAX_STRING_LEN: usize = 10;
const MAX_LIST_LEN: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TypeTag {
    Int,
    Float,
    Bool,
    String,
    List(Box<TypeTag>),
}

impl TypeTag {
    /// Nesting depth: primitives are 1, `list<int>` is 2.
    pub fn depth(&self) -> usize {
        match self {
            TypeTag::List(inner) => 1 + inner.depth(),
            _ => 1,
        }
    }

    fn generate(&self, rng: &mut ChaCha8Rng) -> Value {
        match self {
            TypeTag::Int => Value::from(rng.gen_range(INT_RANGE.0..=INT_RANGE.1)),
            TypeTag::Float => {
                let raw: f64 = rng.gen_range(FLOAT_RANGE.0..=FLOAT_RANGE.1);
                let rounded = (raw * 1e6).round() / 1e6;
                Value::from(rounded)
            }
            TypeTag::Bool => Value::from(rng.gen_bool(0.5)),
            TypeTag::String => {
                let len = rng.gen_range(0..=MAX_STRING_LEN);
                let s: String = (0..len)
                    .map(|_| char::from(b'a' + rng.gen_range(0..26u8)))
                    .collect();
                Value::from(s)
            }
            TypeTag::List(inner) => {
                let len = rng.gen_range(0..=MAX_LIST_LEN);
                Value::Array((0..len).map(|_| inner.generate(rng)).collect())
            }
        }
    }

    /// Whether `value` conforms to this tag.
    pub fn accepts(&self, value: &Value) -> bool {
        match (self, value) {
            (TypeTag::Int, Value::Number(n)) => n.is_i64(),
            (TypeTag::Float, Value::Number(_)) => true,
            (TypeTag::Bool, Value::Bool(_)) => true,
            (TypeTag::String, Value::String(_)) => true,
            (TypeTag::List(inner), Value::Array(items)) => items.iter().all(|v| inner.accepts(v)),
            _ => false,
        }
    }
}

impl fmt::Display for TypeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TypeTag::Int => f.write_str("int"),
            TypeTag::Float => f.write_str("float"),
            TypeTag::Bool => f.write_str("bool"),
            TypeTag::String => f.write_str("string"),
            TypeTag::List(inner) => write!(f, "list<{inner}>"),
        }
    }
}

impl FromStr for TypeTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let tag = match s {
            "int" => TypeTag::Int,
            "float" => TypeTag::Float,
            "bool" => TypeTag::Bool,
            "string" => TypeTag::String,
            _ => match s.strip_prefix("list<").and_then(|r| r.strip_suffix('>')) {
                Some(inner) => TypeTag::List(Box::new(inner.parse()?)),
                None => return Err(Error::config(format!("unknown type tag {s:?}"))),
            },
        };
        if tag.depth() > MAX_DEPTH {
            return Err(Error::config(format!(
                "type tag {s:?} nests deeper than {MAX_DEPTH}"
            )));
        }
        Ok(tag)
    }
}

/// Ordered primitive-typed parameter list a program consumes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct InputStructure {
    params: Vec<TypeTag>,
}

impl InputStructure {
    pub fn new(params: Vec<TypeTag>) -> Result<Self> {
        if params.is_empty() {
            return Err(Error::config("input structure must have at least one parameter"));
        }
        if let Some(deep) = params.iter().find(|p| p.depth() > MAX_DEPTH) {
            return Err(Error::config(format!(
                "type tag {deep} nests deeper than {MAX_DEPTH}"
            )));
        }
        Ok(InputStructure { params })
    }

    pub fn parse_tags<S: AsRef<str>>(tags: &[S]) -> Result<Self> {
        let params = tags
            .iter()
            .map(|t| t.as_ref().parse())
            .collect::<Result<Vec<_>>>()?;
        Self::new(params)
    }

    pub fn params(&self) -> &[TypeTag] {
        &self.params
    }

    pub fn tags(&self) -> Vec<String> {
        self.params.iter().map(|p| p.to_string()).collect()
    }

    /// Whether an argument tuple conforms to the structure.
    pub fn accepts(&self, input: &[Value]) -> bool {
        input.len() == self.params.len()
            && self.params.iter().zip(input).all(|(t, v)| t.accepts(v))
    }
}

impl fmt::Display for InputStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]", self.tags().join(", "))
    }
}

impl Serialize for InputStructure {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.tags().serialize(s)
    }
}

impl<'de> Deserialize<'de> for InputStructure {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let tags = Vec::<String>::deserialize(d)?;
        InputStructure::parse_tags(&tags).map_err(serde::de::Error::custom)
    }
}

/// Random argument tuples for one input structure.
#[derive(Debug, Clone, PartialEq)]
pub struct InputCorpus {
    pub structure: InputStructure,
    pub inputs: Vec<Vec<Value>>,
    pub seed: u64,
}

/// Generate `count` argument tuples for `structure`, deterministically from
/// `seed`. A `count` of zero is clamped to one.
pub fn generate_inputs(structure: &InputStructure, count: usize, seed: u64) -> InputCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs = (0..count.max(1))
        .map(|_| structure.params.iter().map(|t| t.generate(&mut rng)).collect())
        .collect();
    InputCorpus {
        structure: structure.clone(),
        inputs,
        seed,
    }
}

/// Corpus seed for a structure under a run-level seed, so each distinct
/// structure draws an independent stream.
pub fn corpus_seed(run_seed: u64, structure: &InputStructure) -> u64 {
    stable_hash(run_seed, &structure.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ints() -> InputStructure {
        InputStructure::parse_tags(&["int"]).unwrap()
    }

    #[test]
    fn tags_round_trip_through_display() {
        for tag in ["int", "float", "bool", "string", "list<int>", "list<list<string>>"] {
            assert_eq!(tag.parse::<TypeTag>().unwrap().to_string(), tag);
        }
    }

    #[test]
    fn rejects_deep_and_unknown_tags() {
        assert!("list<list<list<int>>>".parse::<TypeTag>().is_err());
        assert!("char".parse::<TypeTag>().is_err());
        assert!(InputStructure::new(vec![]).is_err());
    }

    #[test]
    fn same_seed_same_corpus() {
        let a = generate_inputs(&ints(), 3, 11);
        let b = generate_inputs(&ints(), 3, 11);
        assert_eq!(a, b);
        assert_eq!(a.inputs.len(), 3);
        assert!(a.inputs.iter().all(|i| i.len() == 1));
    }

    #[test]
    fn different_seeds_differ() {
        let a = generate_inputs(&ints(), 100, 1);
        let b = generate_inputs(&ints(), 100, 2);
        assert_ne!(a.inputs, b.inputs);
    }

    #[test]
    fn list_generator_contract() {
        let s = InputStructure::parse_tags(&["list<int>"]).unwrap();
        let corpus = generate_inputs(&s, 200, 5);
        for input in &corpus.inputs {
            let items = input[0].as_array().unwrap();
            assert!(items.len() <= MAX_LIST_LEN);
            for v in items {
                let x = v.as_i64().unwrap();
                assert!((-100..=100).contains(&x));
            }
        }
    }

    #[test]
    fn every_input_conforms() {
        let s = InputStructure::parse_tags(&["float", "bool", "string", "list<list<float>>"]).unwrap();
        let corpus = generate_inputs(&s, 50, 9);
        for input in &corpus.inputs {
            assert!(s.accepts(input));
            let f = input[0].as_f64().unwrap();
            assert!((-1000.0..=1000.0).contains(&f));
            assert!(((f * 1e6).round() / 1e6 - f).abs() < 1e-9);
            let st = input[2].as_str().unwrap();
            assert!(st.len() <= 10 && st.bytes().all(|b| b.is_ascii_lowercase()));
        }
    }
}
