//! Error-recovering parser for the token language.
//!
//! Parsing never aborts. Problems are collected as positioned
//! [`SyntaxError`]s and the parser resynchronizes at the next separator or
//! segment delimiter, so callers can score partially broken sequences.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{Token, TokenSeq, Vocab};
use crate::graphgen::{Edge, LayeredGraph, NodeId};
use crate::tracegen::TraceStep;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SyntaxErrorKind {
    /// Missing or misplaced delimiter (`BoS`, `[`, `]`, `BoT`, `EoT`, `EoS`).
    Structural,
    /// Malformed statement or unexpected token.
    Token,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntaxError {
    /// Token index where the problem was detected.
    pub position: usize,
    pub kind: SyntaxErrorKind,
    pub message: String,
}

/// Statement-level content of a generated continuation (trace and answer).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ParsedGeneration {
    pub steps: Vec<TraceStep>,
    pub answer: Option<TraceStep>,
    /// Tokens from `BoT` through `EoT` (or through the end of the trace
    /// segment when `EoT` is missing).
    pub trace_tokens: usize,
    pub errors: Vec<SyntaxError>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ParsedRecord {
    pub graph: Option<LayeredGraph>,
    pub generation: ParsedGeneration,
    /// Question errors followed by generation errors.
    pub errors: Vec<SyntaxError>,
}

/// A fully well-formed record.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecodedRecord {
    pub graph: LayeredGraph,
    pub steps: Vec<TraceStep>,
    pub answer: TraceStep,
}

struct Parser<'a> {
    toks: &'a [Token],
    pos: usize,
    errors: Vec<SyntaxError>,
}

impl<'a> Parser<'a> {
    fn new(toks: &'a [Token]) -> Self {
        Self {
            toks,
            pos: 0,
            errors: Vec::new(),
        }
    }

    fn peek(&self) -> Option<&'a Token> {
        self.toks.get(self.pos)
    }

    fn error(&mut self, position: usize, kind: SyntaxErrorKind, message: impl Into<String>) {
        self.errors.push(SyntaxError {
            position,
            kind,
            message: message.into(),
        });
    }

    /// Reads tokens up to a `|` or a token accepted by `stop`. Returns the
    /// start position and the slice of statement tokens.
    fn group(&mut self, stop: impl Fn(&Token) -> bool) -> (usize, &'a [Token], bool) {
        let start = self.pos;
        while let Some(t) = self.peek() {
            if *t == Token::Sep {
                let body = &self.toks[start..self.pos];
                self.pos += 1;
                return (start, body, true);
            }
            if stop(t) {
                break;
            }
            self.pos += 1;
        }
        (start, &self.toks[start..self.pos], false)
    }

    fn question(&mut self) -> Option<LayeredGraph> {
        let start = self.pos;
        if self.peek() == Some(&Token::Bos) {
            self.pos += 1;
        } else {
            self.error(self.pos, SyntaxErrorKind::Structural, "expected BoS");
        }
        let mut gaps: Vec<Vec<(NodeId, NodeId, u32)>> = Vec::new();
        while let Some(Token::Layer(label)) = self.peek() {
            if *label != gaps.len() + 1 {
                self.error(
                    self.pos,
                    SyntaxErrorKind::Token,
                    format!("expected l{}, found l{label}", gaps.len() + 1),
                );
            }
            self.pos += 1;
            if self.peek() == Some(&Token::Open) {
                self.pos += 1;
            } else {
                self.error(self.pos, SyntaxErrorKind::Structural, "expected [");
            }
            let mut edges = Vec::new();
            loop {
                match self.peek() {
                    Some(Token::Close) => {
                        self.pos += 1;
                        break;
                    }
                    None
                    | Some(Token::Layer(_) | Token::Bot | Token::Eot | Token::Eos | Token::Bos) => {
                        self.error(self.pos, SyntaxErrorKind::Structural, "expected ]");
                        break;
                    }
                    _ => {}
                }
                let (at, body, closed) = self.group(|t| {
                    matches!(
                        t,
                        Token::Close
                            | Token::Layer(_)
                            | Token::Bot
                            | Token::Eot
                            | Token::Eos
                            | Token::Bos
                    )
                });
                match (closed, body) {
                    (true, [Token::Node(s), Token::Node(d), Token::Int(c)]) => {
                        edges.push((*s, *d, *c))
                    }
                    (true, _) => self.error(at, SyntaxErrorKind::Token, "malformed edge"),
                    (false, _) => self.error(at, SyntaxErrorKind::Token, "unterminated edge"),
                }
            }
            gaps.push(edges);
        }
        if gaps.is_empty() {
            self.error(
                self.pos,
                SyntaxErrorKind::Structural,
                "question has no layers",
            );
            return None;
        }
        match assemble_graph(&gaps) {
            Ok(g) => Some(g),
            Err(msg) => {
                self.error(start, SyntaxErrorKind::Structural, msg);
                None
            }
        }
    }

    /// Well-formed statements up to a stop token, with their positions.
    /// Malformed or unterminated groups are recorded as errors.
    fn statements(&mut self, stops: fn(&Token) -> bool) -> Vec<(usize, TraceStep)> {
        let mut out = Vec::new();
        while let Some(t) = self.peek() {
            if stops(t) {
                break;
            }
            let (at, body, closed) = self.group(stops);
            if !closed {
                self.error(at, SyntaxErrorKind::Token, "unterminated statement");
                break;
            }
            match statement(body) {
                Some(step) => out.push((at, step)),
                None => self.error(at, SyntaxErrorKind::Token, "malformed statement"),
            }
        }
        out
    }

    fn generation(&mut self) -> ParsedGeneration {
        fn trace_stop(t: &Token) -> bool {
            matches!(t, Token::Eot | Token::Eos | Token::Bos | Token::Bot)
        }
        fn answer_stop(t: &Token) -> bool {
            matches!(t, Token::Eos | Token::Bos | Token::Bot | Token::Eot)
        }

        let trace_start = self.pos;
        if self.peek() != Some(&Token::Bot) {
            if let Some(answer) = self.answer_only() {
                return ParsedGeneration {
                    answer: Some(answer),
                    ..ParsedGeneration::default()
                };
            }
        }
        if self.peek() == Some(&Token::Bot) {
            self.pos += 1;
        } else {
            self.error(self.pos, SyntaxErrorKind::Structural, "expected BoT");
        }
        let mut steps = self.statements(trace_stop);
        let mut out = ParsedGeneration::default();

        match self.peek() {
            Some(Token::Eot) => {
                self.pos += 1;
                out.trace_tokens = self.pos - trace_start;
                let errors_before = self.errors.len();
                let answers = self.statements(answer_stop);
                let mut answers = answers.into_iter();
                out.answer = answers.next().map(|(_, s)| s);
                for (at, _) in answers {
                    self.error(at, SyntaxErrorKind::Token, "extra answer statement");
                }
                if out.answer.is_none() && self.errors.len() == errors_before {
                    self.error(self.pos, SyntaxErrorKind::Structural, "missing answer");
                }
                self.expect_eos();
            }
            Some(Token::Eos) => {
                // No EoT: the final statement before EoS is the answer.
                self.error(self.pos, SyntaxErrorKind::Structural, "missing EoT");
                out.trace_tokens = self.pos - trace_start;
                out.answer = steps.pop().map(|(_, s)| s);
                self.expect_eos();
            }
            _ => {
                self.error(self.pos, SyntaxErrorKind::Structural, "missing EoT");
                out.trace_tokens = self.pos - trace_start;
                if self.peek().is_none() {
                    self.error(self.pos, SyntaxErrorKind::Structural, "missing EoS");
                } else {
                    self.expect_eos();
                }
            }
        }
        out.steps = steps.into_iter().map(|(_, s)| s).collect();
        out
    }

    /// A bare `answer` with no trace segment, as produced without reasoning.
    fn answer_only(&mut self) -> Option<TraceStep> {
        let (pos, errors) = (self.pos, self.errors.len());
        let mut answers =
            self.statements(|t| matches!(t, Token::Eos | Token::Bos | Token::Bot | Token::Eot));
        if answers.len() == 1
            && self.errors.len() == errors
            && self.peek() == Some(&Token::Eos)
            && self.pos + 1 == self.toks.len()
        {
            self.pos += 1;
            return answers.pop().map(|(_, s)| s);
        }
        self.pos = pos;
        self.errors.truncate(errors);
        None
    }

    fn expect_eos(&mut self) {
        match self.peek() {
            Some(Token::Eos) => self.pos += 1,
            _ => self.error(self.pos, SyntaxErrorKind::Structural, "missing EoS"),
        }
        if self.pos < self.toks.len() {
            self.error(
                self.pos,
                SyntaxErrorKind::Token,
                "trailing tokens after EoS",
            );
            self.pos = self.toks.len();
        }
    }
}

fn statement(body: &[Token]) -> Option<TraceStep> {
    let (last, nodes) = body.split_last()?;
    let Token::Int(cost) = last else { return None };
    let path = nodes
        .iter()
        .map(|t| match t {
            Token::Node(n) => Some(*n),
            _ => None,
        })
        .collect::<Option<Vec<_>>>()?;
    if path.is_empty() {
        return None;
    }
    Some(TraceStep::new(path, *cost))
}

/// Recovers layer sizes from the edge lists: the nodes of layer `g` are the
/// targets of gap `g` and the sources of gap `g + 1`, and must form the next
/// contiguous block of ids.
fn assemble_graph(gaps: &[Vec<(NodeId, NodeId, u32)>]) -> Result<LayeredGraph, String> {
    let mut layer_sizes = vec![1];
    let mut next_id = 1;
    for layer in 1..=gaps.len() {
        let mut nodes: BTreeSet<NodeId> = gaps[layer - 1].iter().map(|e| e.1).collect();
        if let Some(out) = gaps.get(layer) {
            nodes.extend(out.iter().map(|e| e.0));
        }
        let (Some(&lo), Some(&hi)) = (nodes.first(), nodes.last()) else {
            return Err(format!("layer {layer} has no nodes"));
        };
        if lo != next_id || hi - lo + 1 != nodes.len() {
            return Err(format!(
                "layer {layer} node ids are not the contiguous block from n{next_id}"
            ));
        }
        layer_sizes.push(nodes.len());
        next_id = hi + 1;
    }
    let mut g = LayeredGraph {
        layer_sizes,
        gaps: gaps
            .iter()
            .map(|edges| edges.iter().map(|&(s, d, c)| Edge::new(s, d, c)).collect())
            .collect(),
    };
    for (gap, edges) in g.gaps.iter().enumerate() {
        let from = g.layer_nodes(gap);
        if let Some(e) = edges.iter().find(|e| !from.contains(&e.src)) {
            return Err(format!(
                "edge n{}->n{} is listed under l{}",
                e.src,
                e.dst,
                gap + 1
            ));
        }
    }
    g.canonicalize();
    Ok(g)
}

/// Parses a question on its own; every token must belong to it.
pub fn parse_question(tokens: &[Token]) -> (Option<LayeredGraph>, Vec<SyntaxError>) {
    let mut p = Parser::new(tokens);
    let graph = p.question();
    if p.pos < tokens.len() {
        p.error(
            p.pos,
            SyntaxErrorKind::Token,
            "trailing tokens after question",
        );
    }
    (graph, p.errors)
}

/// Parses a continuation of a question: `BoT ... EoT answer EoS`.
pub fn parse_generation(tokens: &[Token]) -> ParsedGeneration {
    let mut p = Parser::new(tokens);
    let mut out = p.generation();
    out.errors = p.errors;
    out
}

/// Parses a full `question trace answer` record with error recovery.
pub fn parse_record(tokens: &[Token]) -> ParsedRecord {
    let mut p = Parser::new(tokens);
    let graph = p.question();
    let question_errors = std::mem::take(&mut p.errors);
    let mut generation = p.generation();
    generation.errors = p.errors;
    let mut errors = question_errors;
    errors.extend(generation.errors.iter().cloned());
    ParsedRecord {
        graph,
        generation,
        errors,
    }
}

/// Strict inverse of record encoding.
pub fn decode_record(seq: &TokenSeq, vocab: &Vocab) -> Result<DecodedRecord, Vec<SyntaxError>> {
    let parsed = parse_record(&seq.tokens(vocab));
    if !parsed.errors.is_empty() {
        return Err(parsed.errors);
    }
    match (parsed.graph, parsed.generation.answer) {
        (Some(graph), Some(answer)) => Ok(DecodedRecord {
            graph,
            steps: parsed.generation.steps,
            answer,
        }),
        _ => Err(vec![SyntaxError {
            position: seq.len(),
            kind: SyntaxErrorKind::Structural,
            message: "incomplete record".into(),
        }]),
    }
}
