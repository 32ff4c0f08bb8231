//! Synthetic two-dialect corpora for the training experiments.
//!
//! Every problem is a function of one integer argument, written several ways
//! in each toy dialect. The dialects share no keyword or numeral tokens, so a
//! bag-of-tokens model only matches across them once it has learned the
//! correspondence.
//!
//! * [`SynthKind::Separable`]: `f(x) = op2(op1(x, c1), c2)`, with each
//!   problem's token multiset distinct.
//! * [`SynthKind::Compositional`]: piecewise functions over fixed input
//!   regions, each region's behaviour drawn from a small menu, so problems
//!   overlap in behaviour and the similarity scores between different
//!   problems are graded. Dead bindings copy tokens of unrelated behaviours
//!   into every sample.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::stable_hash;
use crate::corpus::{CodeSample, FileMeta, Manifest};
use crate::error::{Error, Result};
use crate::sss::toy::{Dialect, Op, Program};
use crate::sss::InputStructure;

const VAR_NAMES: [&str; 8] = ["tmp", "val", "acc", "res", "cur", "num", "item", "out"];
const COMMENT_WORDS: [&str; 16] = [
    "compute", "result", "value", "helper", "fast", "path", "check", "input", "return", "simple", "step",
    "update", "final", "answer", "note", "todo",
];
const SEPARABLE_OPS: [Op; 5] = [Op::Add, Op::Sub, Op::Mul, Op::Max, Op::Min];
const COMPOSITIONAL_OPS: [Op; 3] = [Op::Add, Op::Sub, Op::Mul];
const DOMAIN: (i64, i64) = (-100, 100);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SynthKind {
    Separable,
    Compositional {
        regions: usize,
        behaviours: usize,
        /// Surface forms per behaviour, each with its own constants.
        variants: usize,
        /// Dead bindings of unrelated behaviours per sample.
        decoys: usize,
    },
}

impl SynthKind {
    pub fn compositional() -> Self {
        SynthKind::Compositional {
            regions: 3,
            behaviours: 4,
            variants: 4,
            decoys: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthOptions {
    #[serde(flatten)]
    pub kind: SynthKind,
    pub problems: usize,
    pub samples_per_language: usize,
    pub seed: u64,
}

impl SynthOptions {
    pub fn separable(seed: u64) -> Self {
        SynthOptions {
            kind: SynthKind::Separable,
            problems: 40,
            samples_per_language: 6,
            seed,
        }
    }

    pub fn compositional(seed: u64) -> Self {
        SynthOptions {
            kind: SynthKind::compositional(),
            ..Self::separable(seed)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Arg,
    Var(String),
    Int(i64),
    Call(Op, Vec<Node>),
    If(Box<Node>, Box<Node>, Box<Node>),
    Let(String, Box<Node>, Box<Node>),
}

impl Node {
    fn call(op: Op, a: Node, b: Node) -> Node {
        Node::Call(op, vec![a, b])
    }

    fn render(&self, d: Dialect, indent: usize, out: &mut String) {
        match self {
            Node::Arg => out.push_str(d.arg_alias()),
            Node::Var(v) => out.push_str(v),
            Node::Int(i) => out.push_str(&d.int(*i)),
            Node::Call(op, args) => {
                out.push('(');
                out.push_str(d.op_name(*op));
                for a in args {
                    out.push(' ');
                    a.render(d, indent, out);
                }
                out.push(')');
            }
            Node::If(c, t, f) => {
                let pad = "  ".repeat(indent + 1);
                out.push('(');
                out.push_str(d.keyword("if"));
                out.push(' ');
                c.render(d, indent + 1, out);
                for branch in [t, f] {
                    out.push('\n');
                    out.push_str(&pad);
                    branch.render(d, indent + 1, out);
                }
                out.push(')');
            }
            Node::Let(name, value, body) => {
                out.push('(');
                out.push_str(d.keyword("let"));
                out.push(' ');
                out.push_str(name);
                out.push(' ');
                value.render(d, indent + 1, out);
                out.push('\n');
                out.push_str(&"  ".repeat(indent + 1));
                body.render(d, indent + 1, out);
                out.push(')');
            }
        }
    }

    fn replace_arg(&mut self, with: &Node) {
        match self {
            Node::Arg => *self = with.clone(),
            Node::Var(_) | Node::Int(_) => {}
            Node::Call(_, args) => args.iter_mut().for_each(|a| a.replace_arg(with)),
            Node::If(c, t, f) => {
                c.replace_arg(with);
                t.replace_arg(with);
                f.replace_arg(with);
            }
            Node::Let(_, v, b) => {
                v.replace_arg(with);
                b.replace_arg(with);
            }
        }
    }
}

fn commutative(op: Op) -> bool {
    matches!(op, Op::Add | Op::Mul | Op::Max | Op::Min)
}

/// `(op e c)`, with the operands swapped half of the time when that keeps the
/// meaning.
fn apply(op: Op, e: Node, c: i64, rng: &mut ChaCha8Rng) -> Node {
    if commutative(op) && rng.gen_bool(0.5) {
        Node::call(op, Node::Int(c), e)
    } else {
        Node::call(op, e, Node::Int(c))
    }
}

fn eval_op(op: Op, a: i64, b: i64) -> i64 {
    match op {
        Op::Add => a + b,
        Op::Sub => a - b,
        Op::Mul => a * b,
        Op::Max => a.max(b),
        Op::Min => a.min(b),
        other => unreachable!("synthetic corpora do not use {other:?}"),
    }
}

/// Alias the argument, add an unused binding and some comments.
fn decorate(core: Node, d: Dialect, rng: &mut ChaCha8Rng, extra_bindings: Vec<Node>) -> String {
    let mut body = core;
    let mut names: Vec<&str> = VAR_NAMES.to_vec();
    names.shuffle(rng);
    let mut names = names.into_iter();
    if rng.gen_bool(0.5) {
        let v = names.next().expect("enough names").to_string();
        body.replace_arg(&Node::Var(v.clone()));
        body = Node::Let(v, Box::new(Node::Arg), Box::new(body));
    }
    let mut bindings = extra_bindings;
    if rng.gen_bool(0.5) {
        bindings.push(Node::Int(rng.gen_range(1..=12)));
    }
    bindings.shuffle(rng);
    for value in bindings {
        let v = names.next().expect("enough names").to_string();
        body = Node::Let(v, Box::new(value), Box::new(body));
    }
    let mut text = String::new();
    for _ in 0..rng.gen_range(0..=2) {
        let words: Vec<&str> = (0..rng.gen_range(2..=4))
            .map(|_| *COMMENT_WORDS.choose(rng).expect("non-empty"))
            .collect();
        text.push_str("; ");
        text.push_str(&words.join(" "));
        text.push('\n');
    }
    body.render(d, 0, &mut text);
    text.push('\n');
    text
}

fn sample_rng(seed: u64, problem: &str, dialect: Dialect, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stable_hash(seed, &format!("{problem}/{}/{index}", dialect.language())))
}

struct Separable {
    op1: Op,
    c1: i64,
    op2: Op,
    c2: i64,
}

fn separable_problems(count: usize, seed: u64) -> Result<Vec<Separable>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tokens = BTreeSet::new();
    let mut behaviours = BTreeSet::new();
    let mut out = Vec::new();
    for _ in 0..100_000 {
        if out.len() == count {
            break;
        }
        let p = Separable {
            op1: *SEPARABLE_OPS.choose(&mut rng).expect("non-empty"),
            c1: rng.gen_range(1..=12),
            op2: *SEPARABLE_OPS.choose(&mut rng).expect("non-empty"),
            c2: rng.gen_range(1..=12),
        };
        let mut ops = [format!("{:?}", p.op1), format!("{:?}", p.op2)];
        ops.sort();
        let mut cs = [p.c1, p.c2];
        cs.sort();
        let signature: Vec<i64> = (DOMAIN.0..=DOMAIN.1)
            .map(|x| eval_op(p.op2, eval_op(p.op1, x, p.c1), p.c2))
            .collect();
        if tokens.insert((ops, cs)) && behaviours.insert(signature) {
            out.push(p);
        }
    }
    if out.len() < count {
        return Err(Error::config(format!("cannot find {count} distinct separable problems")));
    }
    Ok(out)
}

fn region_bounds(regions: usize) -> Vec<i64> {
    let width = (DOMAIN.1 - DOMAIN.0 + 1) as f64 / regions as f64;
    (1..regions).map(|k| DOMAIN.0 + (k as f64 * width).round() as i64).collect()
}

/// Behaviour menu: `menu[k][b][v]` is surface form `v` of behaviour `b` in
/// region `k`. Form 0 is `(op x c)`; later forms reach the same function
/// through two fresh constants. No constant appears in two entries.
fn behaviour_menu(regions: usize, behaviours: usize, variants: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<Vec<Node>>> {
    let mut used = BTreeSet::new();
    let fresh = |rng: &mut ChaCha8Rng, used: &mut BTreeSet<i64>| loop {
        let c = rng.gen_range(2..=999);
        if used.insert(c) {
            return c;
        }
    };
    let mut menu = Vec::new();
    for _ in 0..regions {
        let mut row = Vec::new();
        for b in 0..behaviours {
            let op = COMPOSITIONAL_OPS[b % COMPOSITIONAL_OPS.len()];
            let c = fresh(rng, &mut used);
            let mut forms = vec![Node::call(op, Node::Arg, Node::Int(c))];
            while forms.len() < variants {
                // Pick b, then a = b + c; retry until both are unused.
                let lo = fresh(rng, &mut used);
                let hi = lo + c;
                if !used.insert(hi) {
                    used.remove(&lo);
                    continue;
                }
                forms.push(match op {
                    Op::Add => Node::call(Op::Sub, Node::call(Op::Add, Node::Arg, Node::Int(hi)), Node::Int(lo)),
                    Op::Sub => Node::call(Op::Add, Node::call(Op::Sub, Node::Arg, Node::Int(hi)), Node::Int(lo)),
                    _ => Node::call(
                        Op::Sub,
                        Node::call(op, Node::Arg, Node::Int(hi)),
                        Node::call(op, Node::Arg, Node::Int(lo)),
                    ),
                });
            }
            row.push(forms);
        }
        menu.push(row);
    }
    menu
}

/// A random surface form, with commutative operands shuffled.
fn realize(forms: &[Node], rng: &mut ChaCha8Rng) -> Node {
    fn shuffle(n: Node, rng: &mut ChaCha8Rng) -> Node {
        match n {
            Node::Call(op, mut args) => {
                args = args.into_iter().map(|a| shuffle(a, rng)).collect();
                if commutative(op) && rng.gen_bool(0.5) {
                    args.reverse();
                }
                Node::Call(op, args)
            }
            other => other,
        }
    }
    shuffle(forms.choose(rng).expect("at least one form").clone(), rng)
}

fn compositional_problems(count: usize, regions: usize, behaviours: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<usize>>> {
    let space = (behaviours as f64).powi(regions as i32);
    if space < count as f64 {
        return Err(Error::config(format!(
            "{behaviours} behaviours over {regions} regions give fewer than {count} problems"
        )));
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    while out.len() < count {
        let combo: Vec<usize> = (0..regions).map(|_| rng.gen_range(0..behaviours)).collect();
        if seen.insert(combo.clone()) {
            out.push(combo);
        }
    }
    Ok(out)
}

fn piecewise(bounds: &[i64], pieces: &[Node]) -> Node {
    let (last, init) = pieces.split_last().expect("at least one region");
    let mut expr = last.clone();
    for (bound, piece) in bounds.iter().zip(init).rev() {
        expr = Node::If(
            Box::new(Node::call(Op::Lt, Node::Arg, Node::Int(*bound))),
            Box::new(piece.clone()),
            Box::new(expr),
        );
    }
    expr
}

fn sample(problem: &str, d: Dialect, index: usize, text: String) -> Result<CodeSample> {
    let program = Program::parse(&text, d).map_err(|e| Error::domain(format!("generated program is invalid: {e}")))?;
    let structure = InputStructure::parse_tags(&["int"])?;
    Ok(CodeSample::new(
        format!("{problem}/{}/s{index}.{}", d.language(), d.extension()),
        d.language(),
        problem,
        text,
    )
    .with_structure(structure)
    .with_ast(program.generic_ast()))
}

fn problem_name(i: usize) -> String {
    format!("p{i:02}")
}

/// Generate a corpus, samples sorted by id.
pub fn generate(options: &SynthOptions) -> Result<Vec<CodeSample>> {
    if options.problems == 0 || options.samples_per_language == 0 {
        return Err(Error::config("synthetic corpus needs at least one problem and one sample"));
    }
    let mut out = Vec::new();
    match options.kind {
        SynthKind::Separable => {
            for (i, p) in separable_problems(options.problems, options.seed)?.iter().enumerate() {
                let name = problem_name(i);
                for d in Dialect::ALL {
                    for s in 0..options.samples_per_language {
                        let mut rng = sample_rng(options.seed, &name, d, s);
                        let inner = apply(p.op1, Node::Arg, p.c1, &mut rng);
                        let core = apply(p.op2, inner, p.c2, &mut rng);
                        out.push(sample(&name, d, s, decorate(core, d, &mut rng, Vec::new()))?);
                    }
                }
            }
        }
        SynthKind::Compositional {
            regions,
            behaviours,
            variants,
            decoys,
        } => {
            if regions == 0 || behaviours < 2 || variants == 0 {
                return Err(Error::config(
                    "compositional corpus needs regions >= 1, behaviours >= 2 and variants >= 1",
                ));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
            let menu = behaviour_menu(regions, behaviours, variants, &mut rng);
            let bounds = region_bounds(regions);
            let problems = compositional_problems(options.problems, regions, behaviours, &mut rng)?;
            for (i, combo) in problems.iter().enumerate() {
                let name = problem_name(i);
                for d in Dialect::ALL {
                    for s in 0..options.samples_per_language {
                        let mut rng = sample_rng(options.seed, &name, d, s);
                        let pieces: Vec<Node> = combo
                            .iter()
                            .enumerate()
                            .map(|(k, &b)| realize(&menu[k][b], &mut rng))
                            .collect();
                        let dead: Vec<Node> = (0..decoys)
                            .map(|_| {
                                let k = rng.gen_range(0..regions);
                                let others: Vec<usize> = (0..behaviours).filter(|&b| b != combo[k]).collect();
                                realize(&menu[k][*others.choose(&mut rng).expect("behaviours >= 2")], &mut rng)
                            })
                            .collect();
                        let core = piecewise(&bounds, &pieces);
                        out.push(sample(&name, d, s, decorate(core, d, &mut rng, dead))?);
                    }
                }
            }
        }
    }
    out.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(out)
}

/// Write samples in the dataset layout with a metadata sidecar and AST file
/// next to each source file, plus `dataset.json`.
pub fn write_dataset(root: &Path, samples: &[CodeSample]) -> Result<Manifest> {
    let mut problems = BTreeSet::new();
    let mut languages: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for s in samples {
        let path = root.join(&s.id);
        let dir = path.parent().expect("ids have directories");
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        crate::codec::write_string(&path, &s.text)?;
        let file = path.file_name().expect("ids have file names").to_string_lossy().to_string();
        let mut meta = FileMeta {
            input_structure: s.input_structure.clone(),
            ast: None,
        };
        if let Some(ast) = &s.ast {
            let ast_name = format!("{file}.ast");
            crate::codec::write_string(&dir.join(&ast_name), &format!("{}\n", ast.to_sexpr()))?;
            meta.ast = Some(ast_name.into());
        }
        let meta_text = serde_json::to_string(&meta).expect("metadata serializes") + "\n";
        crate::codec::write_string(&dir.join(format!("{file}.meta.json")), &meta_text)?;
        problems.insert(s.problem_id.clone());
        let ext = Path::new(&file)
            .extension()
            .map(|e| format!("*.{}", e.to_string_lossy()))
            .unwrap_or_else(|| file.clone());
        let globs = languages.entry(s.language.clone()).or_default();
        if !globs.contains(&ext) {
            globs.push(ext);
        }
    }
    let manifest = Manifest {
        problems: problems.into_iter().collect(),
        languages,
        files: BTreeMap::new(),
    };
    manifest.write(root)?;
    Ok(manifest)
}
