//! Cross-language generic AST over a fixed node-kind vocabulary.
//!
//! Sidecar files hold one tree as an s-expression: `(kind[:label] child...)`.
//! Labels are bare words, or JSON string literals when they contain
//! whitespace, parentheses or quotes.

use std::fmt;
use std::str::FromStr;

use crate::embedding::tokenize;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeKind {
    Module,
    Function,
    Call,
    Assign,
    If,
    Loop,
    Return,
    Literal,
    Identifier,
    Other,
}

impl NodeKind {
    pub const ALL: [NodeKind; 10] = [
        NodeKind::Module,
        NodeKind::Function,
        NodeKind::Call,
        NodeKind::Assign,
        NodeKind::If,
        NodeKind::Loop,
        NodeKind::Return,
        NodeKind::Literal,
        NodeKind::Identifier,
        NodeKind::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Module => "module",
            NodeKind::Function => "function",
            NodeKind::Call => "call",
            NodeKind::Assign => "assign",
            NodeKind::If => "if",
            NodeKind::Loop => "loop",
            NodeKind::Return => "return",
            NodeKind::Literal => "literal",
            NodeKind::Identifier => "identifier",
            NodeKind::Other => "other",
        }
    }
}

impl FromStr for NodeKind {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        NodeKind::ALL.into_iter().find(|k| k.as_str() == s).ok_or(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GenericAst {
    pub kind: NodeKind,
    pub label: Option<String>,
    pub children: Vec<GenericAst>,
}

impl GenericAst {
    pub fn leaf(kind: NodeKind, label: impl Into<String>) -> Self {
        GenericAst {
            kind,
            label: Some(label.into()),
            children: Vec::new(),
        }
    }

    pub fn node(kind: NodeKind, label: Option<String>, children: Vec<GenericAst>) -> Self {
        GenericAst {
            kind,
            label,
            children,
        }
    }

    pub fn size(&self) -> usize {
        1 + self.children.iter().map(GenericAst::size).sum::<usize>()
    }

    /// Node identity for relabel cost: kind and label together.
    pub fn same_label(&self, other: &GenericAst) -> bool {
        self.kind == other.kind && self.label == other.label
    }

    /// Flat tree: a `module` root with one `identifier` or `literal` leaf per
    /// token of the text. Used when no sidecar AST is available.
    pub fn degenerate(text: &str) -> Self {
        let children = tokenize(text)
            .map(|tok| {
                let kind = if tok.chars().next().is_some_and(|c| c.is_ascii_digit()) {
                    NodeKind::Literal
                } else {
                    NodeKind::Identifier
                };
                GenericAst::leaf(kind, tok)
            })
            .collect();
        GenericAst::node(NodeKind::Module, None, children)
    }

    pub fn to_sexpr(&self) -> String {
        self.to_string()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut parser = Parser { src: text, pos: 0 };
        parser.skip_ws();
        let tree = parser.tree()?;
        parser.skip_ws();
        if parser.pos != text.len() {
            return Err(parser.error("trailing input after tree"));
        }
        Ok(tree)
    }
}

fn label_needs_quotes(label: &str) -> bool {
    label.is_empty()
        || label
            .chars()
            .any(|c| c.is_whitespace() || matches!(c, '(' | ')' | '"'))
}

impl fmt::Display for GenericAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.kind.as_str())?;
        if let Some(label) = &self.label {
            if label_needs_quotes(label) {
                write!(f, ":{}", crate::codec::quote(label))?;
            } else {
                write!(f, ":{label}")?;
            }
        }
        for child in &self.children {
            write!(f, " {child}")?;
        }
        f.write_str(")")
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn error(&self, message: &str) -> Error {
        let line = self.src[..self.pos].matches('\n').count() + 1;
        Error::Parse {
            format: "generic AST",
            line,
            offset: self.pos,
            message: message.into(),
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if !c.is_whitespace() {
                break;
            }
            self.pos += c.len_utf8();
        }
    }

    fn word(&mut self) -> &'a str {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_whitespace() || matches!(c, '(' | ')' | ':' | '"') {
                break;
            }
            self.pos += c.len_utf8();
        }
        &self.src[start..self.pos]
    }

    fn quoted(&mut self) -> Result<String> {
        let rest = &self.src[self.pos..];
        let mut stream = serde_json::Deserializer::from_str(rest).into_iter::<String>();
        match stream.next() {
            Some(Ok(s)) => {
                self.pos += stream.byte_offset();
                Ok(s)
            }
            _ => Err(self.error("malformed quoted label")),
        }
    }

    fn tree(&mut self) -> Result<GenericAst> {
        if self.peek() != Some('(') {
            return Err(self.error("expected '('"));
        }
        self.pos += 1;
        let kind_start = self.pos;
        let kind_word = self.word();
        let kind: NodeKind = kind_word.parse().map_err(|_| {
            self.pos = kind_start;
            self.error(&format!("unknown node kind {kind_word:?}"))
        })?;
        let label = if self.peek() == Some(':') {
            self.pos += 1;
            if self.peek() == Some('"') {
                Some(self.quoted()?)
            } else {
                let w = self.word();
                if w.is_empty() {
                    return Err(self.error("empty label"));
                }
                Some(w.to_string())
            }
        } else {
            None
        };
        let mut children = Vec::new();
        loop {
            self.skip_ws();
            match self.peek() {
                Some(')') => {
                    self.pos += 1;
                    break;
                }
                Some('(') => children.push(self.tree()?),
                Some(_) => return Err(self.error("expected child tree or ')'")),
                None => return Err(self.error("unterminated tree")),
            }
        }
        Ok(GenericAst {
            kind,
            label,
            children,
        })
    }
}
