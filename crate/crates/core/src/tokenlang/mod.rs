//! The closed token language of questions, traces and answers.
//!
//! ```text
//! question := BoS ( l<g> [ ( <node> <node> <int> | )* ] )+
//! trace    := BoT ( <node>+ <int> | )* EoT
//! answer   := <node>+ <int> | EoS
//! ```
//!
//! Token ids are contiguous and assigned in a fixed order: special tokens,
//! syntax tokens, layer labels, node labels, integers.

mod parse;

use std::collections::HashMap;
use std::fmt;

use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::graphgen::{GraphParams, LayeredGraph, NodeId};
use crate::tracegen::{Trace, TraceStep};

pub use parse::{
    decode_record, parse_generation, parse_question, parse_record, DecodedRecord, ParsedGeneration,
    ParsedRecord, SyntaxError, SyntaxErrorKind,
};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Token {
    Pad,
    Bos,
    Eos,
    Bot,
    Eot,
    /// `|`
    Sep,
    /// `[`
    Open,
    /// `]`
    Close,
    /// `l<g>`, 1-based gap label.
    Layer(usize),
    /// `n<id>`
    Node(NodeId),
    Int(u32),
    /// Any string outside the vocabulary; only produced by lenient lexing.
    Unknown(String),
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Pad => f.write_str("PAD"),
            Token::Bos => f.write_str("BoS"),
            Token::Eos => f.write_str("EoS"),
            Token::Bot => f.write_str("BoT"),
            Token::Eot => f.write_str("EoT"),
            Token::Sep => f.write_str("|"),
            Token::Open => f.write_str("["),
            Token::Close => f.write_str("]"),
            Token::Layer(g) => write!(f, "l{g}"),
            Token::Node(n) => write!(f, "n{n}"),
            Token::Int(v) => write!(f, "{v}"),
            Token::Unknown(s) => f.write_str(s),
        }
    }
}

impl Token {
    /// Parses the canonical string of any token, independent of a vocabulary.
    pub fn parse(s: &str) -> Option<Token> {
        fn number(d: &str) -> Option<u64> {
            let canonical = !d.is_empty()
                && d.bytes().all(|b| b.is_ascii_digit())
                && (d == "0" || !d.starts_with('0'));
            canonical.then(|| d.parse().ok()).flatten()
        }
        if let Some(special) = SPECIALS.iter().find(|t| t.to_string() == s) {
            return Some(special.clone());
        }
        if let Some(rest) = s.strip_prefix('l') {
            return number(rest)
                .filter(|&g| g >= 1)
                .and_then(|g| usize::try_from(g).ok())
                .map(Token::Layer);
        }
        if let Some(rest) = s.strip_prefix('n') {
            return number(rest)
                .and_then(|n| usize::try_from(n).ok())
                .map(Token::Node);
        }
        number(s)
            .and_then(|v| u32::try_from(v).ok())
            .map(Token::Int)
    }
}

/// Whitespace lexer that accepts any well-formed token string, whatever the
/// graph family; anything else becomes [`Token::Unknown`].
pub fn lex(text: &str) -> Vec<Token> {
    text.split_whitespace()
        .map(|s| Token::parse(s).unwrap_or_else(|| Token::Unknown(s.to_string())))
        .collect()
}

const SPECIALS: [Token; 8] = [
    Token::Pad,
    Token::Bos,
    Token::Eos,
    Token::Bot,
    Token::Eot,
    Token::Sep,
    Token::Open,
    Token::Close,
];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct VocabOptions {
    /// Also define the integer token `0`.
    pub include_zero: bool,
}

/// Task vocabulary for one graph family.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    layers: usize,
    nodes: usize,
    min_int: u32,
    max_int: u32,
    strings: Vec<String>,
    index: HashMap<String, u32>,
}

pub fn build_vocab(params: &GraphParams) -> Vocab {
    build_vocab_with(params, VocabOptions::default())
}

pub fn build_vocab_with(params: &GraphParams, options: VocabOptions) -> Vocab {
    let layers = params.layers;
    let nodes = params.max_nodes();
    let min_int = if options.include_zero { 0 } else { 1 };
    let max_int = params.max_path_cost();
    let strings: Vec<String> = SPECIALS
        .iter()
        .cloned()
        .chain((1..=layers).map(Token::Layer))
        .chain((0..nodes).map(Token::Node))
        .chain((min_int..=max_int).map(Token::Int))
        .map(|t| t.to_string())
        .collect();
    let index = strings
        .iter()
        .enumerate()
        .map(|(i, s)| (s.clone(), i as u32))
        .collect();
    Vocab {
        layers,
        nodes,
        min_int,
        max_int,
        strings,
        index,
    }
}

impl Vocab {
    pub fn len(&self) -> usize {
        self.strings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strings.is_empty()
    }

    pub fn max_layer(&self) -> usize {
        self.layers
    }

    pub fn max_nodes(&self) -> usize {
        self.nodes
    }

    pub fn int_range(&self) -> std::ops::RangeInclusive<u32> {
        self.min_int..=self.max_int
    }

    /// Token strings in id order.
    pub fn strings(&self) -> &[String] {
        &self.strings
    }

    pub fn contains(&self, token: &Token) -> bool {
        self.id(token).is_some()
    }

    pub fn id(&self, token: &Token) -> Option<u32> {
        let base_layer = SPECIALS.len();
        let base_node = base_layer + self.layers;
        let base_int = base_node + self.nodes;
        let id = match *token {
            Token::Layer(g) if (1..=self.layers).contains(&g) => base_layer + g - 1,
            Token::Node(n) if n < self.nodes => base_node + n,
            Token::Int(v) if self.int_range().contains(&v) => {
                base_int + (v - self.min_int) as usize
            }
            Token::Layer(_) | Token::Node(_) | Token::Int(_) | Token::Unknown(_) => return None,
            ref special => SPECIALS.iter().position(|s| s == special)?,
        };
        Some(id as u32)
    }

    pub fn token(&self, id: u32) -> Option<Token> {
        let id = id as usize;
        let base_layer = SPECIALS.len();
        let base_node = base_layer + self.layers;
        let base_int = base_node + self.nodes;
        Some(if id < base_layer {
            SPECIALS[id].clone()
        } else if id < base_node {
            Token::Layer(id - base_layer + 1)
        } else if id < base_int {
            Token::Node(id - base_node)
        } else if id < self.strings.len() {
            Token::Int((id - base_int) as u32 + self.min_int)
        } else {
            return None;
        })
    }

    /// Parses one token string; `None` if it is not in the vocabulary.
    pub fn lookup(&self, s: &str) -> Option<Token> {
        self.index.get(s).and_then(|&id| self.token(id))
    }

    /// Splits on whitespace, mapping out-of-vocabulary strings to
    /// [`Token::Unknown`] instead of failing.
    pub fn lex_lenient(&self, text: &str) -> Vec<Token> {
        text.split_whitespace()
            .map(|s| {
                self.lookup(s)
                    .unwrap_or_else(|| Token::Unknown(s.to_string()))
            })
            .collect()
    }

    fn require(&self, token: Token) -> Result<u32> {
        self.id(&token)
            .ok_or_else(|| Error::OutOfVocab(token.to_string()))
    }
}

/// `vocab.json` layout: token string to id, in id order.
impl Serialize for Vocab {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.strings.len()))?;
        for (id, s) in self.strings.iter().enumerate() {
            map.serialize_entry(s, &id)?;
        }
        map.end()
    }
}

/// A token sequence in id form together with its canonical text form
/// (token strings joined by single spaces).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TokenSeq {
    ids: Vec<u32>,
    text: String,
}

impl TokenSeq {
    pub fn from_tokens(tokens: &[Token], vocab: &Vocab) -> Result<Self> {
        let ids = tokens
            .iter()
            .map(|t| vocab.require(t.clone()))
            .collect::<Result<Vec<_>>>()?;
        let text = tokens
            .iter()
            .map(Token::to_string)
            .collect::<Vec<_>>()
            .join(" ");
        Ok(Self { ids, text })
    }

    pub fn from_ids(ids: &[u32], vocab: &Vocab) -> Result<Self> {
        let strings = ids
            .iter()
            .map(|&id| {
                vocab
                    .strings
                    .get(id as usize)
                    .map(String::as_str)
                    .ok_or(Error::UnknownId(id))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            ids: ids.to_vec(),
            text: strings.join(" "),
        })
    }

    pub fn from_text(text: &str, vocab: &Vocab) -> Result<Self> {
        let ids = text
            .split_whitespace()
            .map(|s| {
                vocab
                    .index
                    .get(s)
                    .copied()
                    .ok_or_else(|| Error::OutOfVocab(s.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_ids(&ids, vocab)
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn tokens(&self, vocab: &Vocab) -> Vec<Token> {
        self.ids
            .iter()
            .map(|&id| vocab.token(id).expect("ids are validated"))
            .collect()
    }

    pub fn concat(parts: &[&TokenSeq]) -> TokenSeq {
        let ids = parts.iter().flat_map(|p| p.ids.iter().copied()).collect();
        let text = parts
            .iter()
            .map(|p| p.text.as_str())
            .filter(|t| !t.is_empty())
            .collect::<Vec<_>>()
            .join(" ");
        TokenSeq { ids, text }
    }
}

fn push_statement(tokens: &mut Vec<Token>, path: &[NodeId], cost: u32) {
    tokens.extend(path.iter().map(|&n| Token::Node(n)));
    tokens.push(Token::Int(cost));
    tokens.push(Token::Sep);
}

/// `BoS`, then for each gap `l<g> [ <src> <dst> <cost> | ... ]` with edges in
/// ascending `(src, dst)` order.
pub fn encode_question(g: &LayeredGraph, vocab: &Vocab) -> Result<TokenSeq> {
    let mut tokens = vec![Token::Bos];
    for (gap, edges) in g.gaps.iter().enumerate() {
        tokens.push(Token::Layer(gap + 1));
        tokens.push(Token::Open);
        let mut sorted: Vec<_> = edges.iter().collect();
        sorted.sort_by_key(|e| (e.src, e.dst));
        for e in sorted {
            tokens.extend([
                Token::Node(e.src),
                Token::Node(e.dst),
                Token::Int(e.cost),
                Token::Sep,
            ]);
        }
        tokens.push(Token::Close);
    }
    TokenSeq::from_tokens(&tokens, vocab)
}

pub fn encode_steps(steps: &[TraceStep], vocab: &Vocab) -> Result<TokenSeq> {
    if steps.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let mut tokens = vec![Token::Bot];
    for step in steps {
        push_statement(&mut tokens, &step.path, step.cost);
    }
    tokens.push(Token::Eot);
    TokenSeq::from_tokens(&tokens, vocab)
}

pub fn encode_trace(t: &Trace, vocab: &Vocab) -> Result<TokenSeq> {
    encode_steps(&t.steps, vocab)
}

pub fn encode_answer(path: &[NodeId], cost: u32, vocab: &Vocab) -> Result<TokenSeq> {
    let mut tokens = Vec::with_capacity(path.len() + 3);
    push_statement(&mut tokens, path, cost);
    tokens.push(Token::Eos);
    TokenSeq::from_tokens(&tokens, vocab)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphgen::fixtures::worked_example;
    use crate::graphgen::sample_graph;
    use crate::tracegen::{generate_trace, TraceMode};
    use proptest::prelude::*;

    fn fig_vocab() -> Vocab {
        build_vocab(&GraphParams::default())
    }

    #[test]
    fn free_lexer_reads_any_family() {
        assert_eq!(
            lex("BoS l12 [ n250 0 | ] x n01 l0 -3 99999999999"),
            vec![
                Token::Bos,
                Token::Layer(12),
                Token::Open,
                Token::Node(250),
                Token::Int(0),
                Token::Sep,
                Token::Close,
                Token::Unknown("x".into()),
                Token::Unknown("n01".into()),
                Token::Unknown("l0".into()),
                Token::Unknown("-3".into()),
                Token::Unknown("99999999999".into()),
            ]
        );
        let v = fig_vocab();
        for s in v.strings() {
            assert_eq!(
                Token::parse(s).map(|t| t.to_string()).as_deref(),
                Some(s.as_str())
            );
        }
    }

    fn steps(table: &[(&[usize], u32)]) -> Vec<TraceStep> {
        table.iter()
            .map(|&(p, c)| TraceStep::new(p.to_vec(), c))
            .collect()
    }

    #[test]
    fn default_family_vocab() {
        let v = fig_vocab();
        for s in [
            "l1", "l7", "n0", "n37", "1", "35", "BoS", "EoS", "BoT", "EoT", "PAD", "|", "[", "]",
        ] {
            assert!(v.lookup(s).is_some(), "{s}");
        }
        for s in ["l0", "l8", "n38", "0", "36"] {
            assert!(v.lookup(s).is_none(), "{s}");
        }
        assert_eq!(v.len(), 8 + 7 + 38 + 35);
        let ids: Vec<u32> = v.strings().iter().map(|s| v.index[s]).collect();
        assert_eq!(ids, (0..v.len() as u32).collect::<Vec<_>>());
    }

    #[test]
    fn smallest_family_vocab() {
        let v = build_vocab(&GraphParams::new(2, 2, 1, 0.5).unwrap());
        let ints: Vec<_> = v
            .strings()
            .iter()
            .filter(|s| s.parse::<u32>().is_ok())
            .cloned()
            .collect();
        assert_eq!(ints, vec!["1", "2"]);
        let with_zero = build_vocab_with(
            &GraphParams::new(2, 2, 1, 0.5).unwrap(),
            VocabOptions { include_zero: true },
        );
        assert_eq!(with_zero.lookup("0"), Some(Token::Int(0)));
        assert_eq!(with_zero.len(), v.len() + 1);
    }

    #[test]
    fn vocab_is_deterministic() {
        let a = serde_json::to_string(&fig_vocab()).unwrap();
        let b = serde_json::to_string(&fig_vocab()).unwrap();
        assert_eq!(a, b);
        assert!(
            a.starts_with(r#"{"PAD":0,"BoS":1,"EoS":2,"BoT":3,"EoT":4,"|":5,"[":6,"]":7,"l1":8"#)
        );
    }

    #[test]
    fn id_token_bijection() {
        let v = fig_vocab();
        for id in 0..v.len() as u32 {
            let t = v.token(id).unwrap();
            assert_eq!(v.id(&t), Some(id));
            assert_eq!(v.lookup(&t.to_string()), Some(t));
        }
        assert_eq!(v.token(v.len() as u32), None);
        assert_eq!(v.id(&Token::Unknown("x".into())), None);
    }

    #[test]
    fn worked_example_strings() {
        let v = fig_vocab();
        let g = worked_example();
        assert_eq!(
            encode_question(&g, &v).unwrap().text(),
            "BoS l1 [ n0 n1 2 | n0 n2 1 | ] l2 [ n1 n3 3 | n2 n3 2 | ] l3 [ n3 n4 1 | ]"
        );
        let efficient = steps(&[
            (&[0, 2], 1),
            (&[0, 1], 2),
            (&[0, 1, 3], 5),
            (&[0, 2, 3], 3),
            (&[0, 2, 3, 4], 4),
        ]);
        assert_eq!(
            encode_steps(&efficient, &v).unwrap().text(),
            "BoT n0 n2 1 | n0 n1 2 | n0 n1 n3 5 | n0 n2 n3 3 | n0 n2 n3 n4 4 | EoT"
        );
        let inefficient = steps(&[
            (&[0, 1], 2),
            (&[0, 1, 3], 5),
            (&[0, 1, 3, 4], 6),
            (&[0, 2], 1),
            (&[0, 2, 3], 3),
            (&[0, 2, 3, 4], 4),
        ]);
        assert_eq!(
            encode_steps(&inefficient, &v).unwrap().text(),
            "BoT n0 n1 2 | n0 n1 n3 5 | n0 n1 n3 n4 6 | n0 n2 1 | n0 n2 n3 3 | n0 n2 n3 n4 4 | EoT"
        );
        assert_eq!(
            encode_answer(&[0, 2, 3, 4], 4, &v).unwrap().text(),
            "n0 n2 n3 n4 4 | EoS"
        );
    }

    #[test]
    fn chain_graph_encoding() {
        let v = fig_vocab();
        let g = LayeredGraph::from_edges(vec![1, 1, 1], &[(0, 1, 3), (1, 2, 2)]).unwrap();
        assert_eq!(
            encode_question(&g, &v).unwrap().text(),
            "BoS l1 [ n0 n1 3 | ] l2 [ n1 n2 2 | ]"
        );
        assert_eq!(
            encode_answer(&[0, 1, 2], 5, &v).unwrap().text(),
            "n0 n1 n2 5 | EoS"
        );
    }

    #[test]
    fn empty_trace_is_rejected() {
        let t = Trace {
            steps: vec![],
            eta: 5.0,
            mode: TraceMode::Plain,
            seed: 0,
        };
        assert!(matches!(
            encode_trace(&t, &fig_vocab()),
            Err(Error::EmptyTrace)
        ));
    }

    #[test]
    fn out_of_vocab_values_are_rejected() {
        let v = build_vocab(&GraphParams::new(2, 2, 1, 0.5).unwrap());
        assert!(matches!(encode_answer(&[0, 1, 2], 3, &v), Err(Error::OutOfVocab(s)) if s == "3"));
        assert!(matches!(encode_answer(&[0, 9], 1, &v), Err(Error::OutOfVocab(s)) if s == "n9"));
        assert!(encode_question(&worked_example(), &v).is_err());
    }

    #[test]
    fn text_and_id_forms_agree() {
        let v = fig_vocab();
        let q = encode_question(&worked_example(), &v).unwrap();
        assert_eq!(TokenSeq::from_text(q.text(), &v).unwrap(), q);
        assert_eq!(TokenSeq::from_ids(q.ids(), &v).unwrap(), q);
        assert!(matches!(
            TokenSeq::from_text("BoS foo", &v),
            Err(Error::OutOfVocab(_))
        ));
        assert!(matches!(
            TokenSeq::from_ids(&[9999], &v),
            Err(Error::UnknownId(9999))
        ));
        assert_eq!(
            v.lex_lenient("n0 foo"),
            vec![Token::Node(0), Token::Unknown("foo".into())]
        );
    }

    proptest! {
        #[test]
        fn canonical_text_round_trips(seed in any::<u64>(), eta in -6.0f64..6.0) {
            let params = GraphParams::default();
            let v = build_vocab(&params);
            let g = sample_graph(&params, seed).unwrap();
            let t = generate_trace(&g, eta, TraceMode::Rr, seed);
            for seq in [encode_question(&g, &v).unwrap(), encode_trace(&t, &v).unwrap()] {
                prop_assert!(!seq.text().starts_with(' ') && !seq.text().ends_with(' '));
                prop_assert!(!seq.text().contains("  "));
                prop_assert_eq!(&TokenSeq::from_text(seq.text(), &v).unwrap(), &seq);
                prop_assert_eq!(&TokenSeq::from_ids(seq.ids(), &v).unwrap(), &seq);
            }
        }
    }
}
