//! Minimal DOT emitter and reader for summary graphs.
//!
//! The reader accepts the subset the emitter produces: a `digraph` block of
//! quoted or bare node statements, `a -> b` edge statements, optional
//! `[...]` attribute lists (ignored) and `//` comments.

use std::fmt::Write as _;

use super::SummaryGraph;
use crate::error::{Error, Result};

/// A summary graph with its node labels, as read back from DOT text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DotGraph {
    pub names: Vec<String>,
    pub graph: SummaryGraph,
}

fn quote(name: &str) -> String {
    format!("\"{}\"", name.replace('\\', "\\\\").replace('"', "\\\""))
}

/// Renders `graph` with one node statement per series in index order.
///
/// `excluded` nodes are drawn dashed; `comments` become `//` lines inside the
/// block so they survive a round trip without affecting the graph.
pub fn write_dot(names: &[String], graph: &SummaryGraph, excluded: &[usize], comments: &[String]) -> String {
    let mut out = String::from("digraph timino {\n");
    for c in comments {
        let _ = writeln!(out, "  // {c}");
    }
    for (i, name) in names.iter().enumerate().take(graph.node_count()) {
        if excluded.contains(&i) {
            let _ = writeln!(out, "  {} [style=dashed];", quote(name));
        } else {
            let _ = writeln!(out, "  {};", quote(name));
        }
    }
    for &(a, b) in graph.edges() {
        let _ = writeln!(out, "  {} -> {};", quote(&names[a]), quote(&names[b]));
    }
    out.push_str("}\n");
    out
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
}

impl Lexer<'_> {
    fn skip_ws(&mut self) {
        while matches!(self.chars.peek(), Some(c) if c.is_whitespace()) {
            self.chars.next();
        }
    }

    fn ident(&mut self) -> std::result::Result<Option<String>, String> {
        self.skip_ws();
        match self.chars.peek() {
            None => Ok(None),
            Some('"') => {
                self.chars.next();
                let mut s = String::new();
                loop {
                    match self.chars.next() {
                        None => return Err("unterminated string".into()),
                        Some('\\') => match self.chars.next() {
                            Some(c) => s.push(c),
                            None => return Err("dangling escape".into()),
                        },
                        Some('"') => return Ok(Some(s)),
                        Some(c) => s.push(c),
                    }
                }
            }
            Some(c) if c.is_alphanumeric() || *c == '_' || *c == '.' || *c == '-' => {
                let mut s = String::new();
                while let Some(&c) = self.chars.peek() {
                    if c.is_alphanumeric() || c == '_' || c == '.' {
                        s.push(c);
                        self.chars.next();
                    } else if c == '-' && s.is_empty() {
                        s.push(c);
                        self.chars.next();
                    } else {
                        break;
                    }
                }
                Ok(Some(s))
            }
            Some(c) => Err(format!("unexpected character '{c}'")),
        }
    }

    fn rest_is_arrow(&mut self) -> bool {
        self.skip_ws();
        let mut probe = self.chars.clone();
        if probe.next() == Some('-') && probe.next() == Some('>') {
            self.chars.next();
            self.chars.next();
            true
        } else {
            false
        }
    }

    fn skip_attributes(&mut self) -> std::result::Result<(), String> {
        self.skip_ws();
        if self.chars.peek() == Some(&'[') {
            let mut in_str = false;
            for c in self.chars.by_ref() {
                match c {
                    '"' => in_str = !in_str,
                    ']' if !in_str => return Ok(()),
                    _ => {}
                }
            }
            return Err("unterminated attribute list".into());
        }
        Ok(())
    }

    fn finished(&mut self) -> bool {
        self.skip_ws();
        matches!(self.chars.peek(), None | Some(';'))
    }
}

/// Parses DOT text produced by [`write_dot`] (or hand-written in the same
/// subset). Nodes are indexed in order of first appearance.
pub fn parse_dot(text: &str) -> Result<DotGraph> {
    let mut names: Vec<String> = Vec::new();
    let mut edges: Vec<(usize, usize)> = Vec::new();
    let mut opened = false;
    let mut closed = false;

    let index_of = |names: &mut Vec<String>, n: String| -> usize {
        if let Some(i) = names.iter().position(|x| *x == n) {
            i
        } else {
            names.push(n);
            names.len() - 1
        }
    };

    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let err = |message: String| Error::Dot { line: line_no, message };
        let line = match raw.find("//") {
            Some(pos) if !raw[..pos].contains('"') => &raw[..pos],
            _ => raw,
        };
        let mut line = line.trim();
        if line.is_empty() {
            continue;
        }
        if !opened {
            let rest = line
                .strip_prefix("digraph")
                .ok_or_else(|| err("expected 'digraph'".into()))?
                .trim_start();
            let brace = rest.find('{').ok_or_else(|| err("expected '{'".into()))?;
            opened = true;
            line = rest[brace + 1..].trim();
            if line.is_empty() {
                continue;
            }
        }
        if closed {
            return Err(err("content after closing brace".into()));
        }
        if let Some(stripped) = line.strip_suffix('}') {
            closed = true;
            line = stripped.trim();
            if line.is_empty() {
                continue;
            }
        }
        for stmt in line.split(';').map(str::trim).filter(|s| !s.is_empty()) {
            let mut lx = Lexer { chars: stmt.chars().peekable() };
            let first = lx.ident().map_err(&err)?.ok_or_else(|| err("empty statement".into()))?;
            if matches!(first.as_str(), "graph" | "node" | "edge") {
                continue;
            }
            let mut chain = vec![first];
            while lx.rest_is_arrow() {
                let next = lx.ident().map_err(&err)?.ok_or_else(|| err("missing edge target".into()))?;
                chain.push(next);
            }
            lx.skip_attributes().map_err(&err)?;
            if !lx.finished() {
                return Err(err(format!("trailing input in statement '{stmt}'")));
            }
            let ids: Vec<usize> = chain.into_iter().map(|n| index_of(&mut names, n)).collect();
            for w in ids.windows(2) {
                edges.push((w[0], w[1]));
            }
        }
    }
    if !opened || !closed {
        return Err(Error::Dot { line: text.lines().count(), message: "incomplete digraph".into() });
    }
    let graph = SummaryGraph::with_edges(names.len(), edges)?;
    Ok(DotGraph { names, graph })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let names: Vec<String> = ["X", "Y \"q\"", "Z"].iter().map(|s| s.to_string()).collect();
        let g = SummaryGraph::with_edges(3, [(0, 1), (1, 2)]).unwrap();
        let text = write_dot(&names, &g, &[2], &["verdict: decided".into()]);
        let back = parse_dot(&text).unwrap();
        assert_eq!(back.names, names);
        assert_eq!(back.graph, g);
    }

    #[test]
    fn hand_written_chain() {
        let d = parse_dot("digraph { a -> b -> c [color=red]; d }").unwrap();
        assert_eq!(d.names, vec!["a", "b", "c", "d"]);
        assert_eq!(d.graph.edge_count(), 2);
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse_dot("graph { a -- b }").is_err());
        assert!(parse_dot("digraph { a -> }").is_err());
        assert!(parse_dot("digraph { a -> b").is_err());
    }
}
