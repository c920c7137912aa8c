//! Minimal Graphviz DOT parser used to validate exported snapshots.
//!
//! Covers the core grammar: `[strict] (graph|digraph) [ID] { stmt_list }`
//! with node, edge, attribute and `ID = ID` statements, quoted strings,
//! numerals and attribute lists. Subgraphs and ports are not supported.

#![allow(dead_code)]

use std::collections::BTreeSet;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Id(String),
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Eq,
    Semi,
    Comma,
    Arrow,
    UndirectedEdge,
}

fn tokenize(src: &str) -> Result<Vec<Tok>, String> {
    let chars: Vec<char> = src.chars().collect();
    let mut i = 0;
    let mut out = Vec::new();
    while i < chars.len() {
        let c = chars[i];
        match c {
            c if c.is_whitespace() => i += 1,
            '/' if chars.get(i + 1) == Some(&'/') => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            '{' => {
                out.push(Tok::LBrace);
                i += 1;
            }
            '}' => {
                out.push(Tok::RBrace);
                i += 1;
            }
            '[' => {
                out.push(Tok::LBracket);
                i += 1;
            }
            ']' => {
                out.push(Tok::RBracket);
                i += 1;
            }
            '=' => {
                out.push(Tok::Eq);
                i += 1;
            }
            ';' => {
                out.push(Tok::Semi);
                i += 1;
            }
            ',' => {
                out.push(Tok::Comma);
                i += 1;
            }
            '-' if chars.get(i + 1) == Some(&'>') => {
                out.push(Tok::Arrow);
                i += 2;
            }
            '-' if chars.get(i + 1) == Some(&'-') => {
                out.push(Tok::UndirectedEdge);
                i += 2;
            }
            '"' => {
                let mut s = String::new();
                i += 1;
                loop {
                    match chars.get(i) {
                        None => return Err("unterminated string".into()),
                        Some('\\') => {
                            if let Some(&n) = chars.get(i + 1) {
                                s.push(n);
                            }
                            i += 2;
                        }
                        Some('"') => {
                            i += 1;
                            break;
                        }
                        Some(&ch) => {
                            s.push(ch);
                            i += 1;
                        }
                    }
                }
                out.push(Tok::Id(s));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                out.push(Tok::Id(chars[start..i].iter().collect()));
            }
            c if c.is_ascii_digit() || c == '.' || c == '-' => {
                let start = i;
                if c == '-' {
                    i += 1;
                }
                let mut dots = 0;
                let mut digits = 0;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    if chars[i] == '.' {
                        dots += 1;
                    } else {
                        digits += 1;
                    }
                    i += 1;
                }
                if dots > 1 || digits == 0 {
                    return Err(format!("bad numeral at {start}"));
                }
                out.push(Tok::Id(chars[start..i].iter().collect()));
            }
            other => return Err(format!("unexpected character {other:?} at {i}")),
        }
    }
    Ok(out)
}

#[derive(Debug, Default, Clone, PartialEq)]
pub struct DotGraph {
    pub directed: bool,
    pub name: Option<String>,
    pub nodes: BTreeSet<String>,
    /// `(from, to, attributes)`.
    pub edges: Vec<(String, String, Vec<(String, String)>)>,
}

impl DotGraph {
    /// In-neighbor sets keyed by numeric node id.
    pub fn in_neighbors(&self, n: usize) -> Vec<BTreeSet<usize>> {
        let mut out = vec![BTreeSet::new(); n];
        for (from, to, _) in &self.edges {
            let (Ok(f), Ok(t)) = (from.parse::<usize>(), to.parse::<usize>()) else {
                continue;
            };
            if t < n {
                out[t].insert(f);
            }
        }
        out
    }
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expect(&mut self, want: Tok) -> Result<(), String> {
        match self.next() {
            Some(t) if t == want => Ok(()),
            other => Err(format!("expected {want:?}, found {other:?}")),
        }
    }

    fn id(&mut self) -> Result<String, String> {
        match self.next() {
            Some(Tok::Id(s)) => Ok(s),
            other => Err(format!("expected identifier, found {other:?}")),
        }
    }

    fn attr_list(&mut self) -> Result<Vec<(String, String)>, String> {
        let mut attrs = Vec::new();
        while self.peek() == Some(&Tok::LBracket) {
            self.next();
            while self.peek() != Some(&Tok::RBracket) {
                let k = self.id()?;
                self.expect(Tok::Eq)?;
                let v = self.id()?;
                attrs.push((k, v));
                if matches!(self.peek(), Some(Tok::Comma) | Some(Tok::Semi)) {
                    self.next();
                }
            }
            self.expect(Tok::RBracket)?;
        }
        Ok(attrs)
    }
}

pub fn parse_dot(src: &str) -> Result<DotGraph, String> {
    let mut p = Parser {
        toks: tokenize(src)?,
        pos: 0,
    };
    let mut g = DotGraph::default();
    let mut head = p.id()?;
    if head.eq_ignore_ascii_case("strict") {
        head = p.id()?;
    }
    g.directed = match head.to_ascii_lowercase().as_str() {
        "digraph" => true,
        "graph" => false,
        other => return Err(format!("expected graph or digraph, found {other}")),
    };
    if let Some(Tok::Id(_)) = p.peek() {
        g.name = Some(p.id()?);
    }
    p.expect(Tok::LBrace)?;
    let edge_op = if g.directed { Tok::Arrow } else { Tok::UndirectedEdge };
    loop {
        match p.peek() {
            None => return Err("missing closing brace".into()),
            Some(Tok::RBrace) => {
                p.next();
                break;
            }
            Some(Tok::Semi) => {
                p.next();
            }
            Some(Tok::Id(_)) => {
                let first = p.id()?;
                let keyword = matches!(first.as_str(), "graph" | "node" | "edge");
                if keyword && p.peek() == Some(&Tok::LBracket) {
                    p.attr_list()?;
                } else if p.peek() == Some(&Tok::Eq) {
                    p.next();
                    p.id()?;
                } else if p.peek() == Some(&edge_op) {
                    let mut chain = vec![first];
                    while p.peek() == Some(&edge_op) {
                        p.next();
                        chain.push(p.id()?);
                    }
                    let attrs = p.attr_list()?;
                    for w in chain.windows(2) {
                        g.nodes.insert(w[0].clone());
                        g.nodes.insert(w[1].clone());
                        g.edges.push((w[0].clone(), w[1].clone(), attrs.clone()));
                    }
                } else if matches!(p.peek(), Some(Tok::Arrow) | Some(Tok::UndirectedEdge)) {
                    return Err("edge operator does not match graph kind".into());
                } else {
                    p.attr_list()?;
                    g.nodes.insert(first);
                }
            }
            Some(other) => return Err(format!("unexpected token {other:?}")),
        }
    }
    if p.pos != p.toks.len() {
        return Err("trailing tokens after closing brace".into());
    }
    Ok(g)
}
