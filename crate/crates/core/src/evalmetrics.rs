//! Scoring of generated traces and answers against their question graph.
//!
//! Steps are replayed in order while tracking the best cost stated so far for
//! every node. Only real paths stated with their true cost update that table.

use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphgen::{LayeredGraph, NodeId};
use crate::solver::{path_cost, solve_dp};
use crate::tokenlang::{parse_generation, parse_question, Token, TokenSeq, Vocab};
use crate::tracegen::TraceStep;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerMetrics {
    pub is_possible: bool,
    pub is_cost_consistent: bool,
    pub is_cost_optimal: bool,
    pub length_is_correct: bool,
    pub is_correct: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoTMetrics {
    pub num_steps: usize,
    pub repeated_steps: usize,
    pub possible_subpaths: usize,
    pub consistent_steps: usize,
    pub subproblem_optimal_steps: usize,
    pub skipped_subproblem_steps: usize,
    pub syntax_errors: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub answer: AnswerMetrics,
    pub cot: CoTMetrics,
    pub trace_token_length: usize,
    /// Number of gaps of the question graph.
    pub depth: usize,
}

/// Decodes a trusted question into a valid graph.
pub fn decode_question(question: &TokenSeq, vocab: &Vocab) -> Result<LayeredGraph> {
    decode_question_tokens(&question.tokens(vocab))
}

pub fn decode_question_tokens(tokens: &[Token]) -> Result<LayeredGraph> {
    let (graph, errors) = parse_question(tokens);
    if let Some(e) = errors.first() {
        return Err(Error::Syntax(format!(
            "question: {} at token {}",
            e.message, e.position
        )));
    }
    let graph = graph.ok_or_else(|| Error::Syntax("question: no graph".into()))?;
    let violations = graph.violations();
    if let Some(v) = violations.first() {
        return Err(Error::InvalidGraph(v.to_string()));
    }
    Ok(graph)
}

fn is_possible(g: &LayeredGraph, path: &[NodeId]) -> bool {
    path.len() >= 2 && path[0] == g.source() && path_cost(g, path).is_some()
}

pub fn answer_metrics(
    g: &LayeredGraph,
    answer: Option<&TraceStep>,
    opt_cost: u32,
) -> AnswerMetrics {
    let Some(answer) = answer else {
        return AnswerMetrics::default();
    };
    let path = answer.path.as_slice();
    let is_possible = is_possible(g, path);
    let length_is_correct = path.len() == g.num_layers()
        && path
            .iter()
            .enumerate()
            .all(|(layer, &n)| g.layer_of(n) == Some(layer));
    let is_cost_consistent = is_possible && path_cost(g, path) == Some(answer.cost);
    let is_cost_optimal = answer.cost == opt_cost;
    AnswerMetrics {
        is_possible,
        is_cost_consistent,
        is_cost_optimal,
        length_is_correct,
        is_correct: is_possible && is_cost_consistent && is_cost_optimal && length_is_correct,
    }
}

pub fn cot_metrics(g: &LayeredGraph, steps: &[TraceStep]) -> CoTMetrics {
    let n = g.num_nodes();
    let mut best: Vec<Option<(u32, &[NodeId])>> = vec![None; n];
    let source_path = [g.source()];
    best[g.source()] = Some((0, &source_path));
    let mut seen: HashSet<&[NodeId]> = HashSet::new();
    let mut m = CoTMetrics {
        num_steps: steps.len(),
        ..CoTMetrics::default()
    };

    for step in steps {
        let path = step.path.as_slice();
        let prefix = step.prefix();
        let known = |node: NodeId| best.get(node).is_some_and(Option::is_some);

        if !seen.insert(path) {
            m.repeated_steps += 1;
        }
        let possible = is_possible(g, path);
        let consistent = possible && path_cost(g, path) == Some(step.cost);
        m.possible_subpaths += possible as usize;
        m.consistent_steps += consistent as usize;

        let optimal = prefix
            .last()
            .and_then(|&end| best.get(end).copied().flatten())
            .is_some_and(|(_, bp)| bp == prefix);
        m.subproblem_optimal_steps += optimal as usize;
        if prefix.iter().any(|&node| !known(node)) {
            m.skipped_subproblem_steps += 1;
        }

        if consistent {
            let last = *path.last().unwrap();
            if best[last].is_none_or(|(c, _)| step.cost < c) {
                best[last] = Some((step.cost, path));
            }
        }
    }
    m
}

/// Scores a lexed continuation (trace and answer) for graph `g`.
pub fn score_tokens(g: &LayeredGraph, generated: &[Token]) -> Result<GenerationReport> {
    let opt_cost = solve_dp(g)?.opt_cost;
    let parsed = parse_generation(generated);
    let mut cot = cot_metrics(g, &parsed.steps);
    cot.syntax_errors = parsed.errors.len();
    Ok(GenerationReport {
        answer: answer_metrics(g, parsed.answer.as_ref(), opt_cost),
        cot,
        trace_token_length: parsed.trace_tokens,
        depth: g.num_gaps(),
    })
}

/// Scores `generated` against `question`. The question must decode to a valid
/// graph; the generation may be arbitrarily malformed.
pub fn score_generation(
    question: &TokenSeq,
    generated: &TokenSeq,
    vocab: &Vocab,
) -> Result<GenerationReport> {
    let g = decode_question(question, vocab)?;
    score_tokens(&g, &generated.tokens(vocab))
}

/// Same as [`score_generation`] but lexes free text, so out-of-vocabulary
/// words count as syntax errors instead of failing.
pub fn score_generation_text(
    question: &TokenSeq,
    generated: &str,
    vocab: &Vocab,
) -> Result<GenerationReport> {
    let g = decode_question(question, vocab)?;
    score_tokens(&g, &vocab.lex_lenient(generated))
}

/// Sums of all report fields; merging is associative and commutative.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportTotals {
    pub records: usize,
    pub is_possible: usize,
    pub is_cost_consistent: usize,
    pub is_cost_optimal: usize,
    pub length_is_correct: usize,
    pub is_correct: usize,
    pub num_steps: usize,
    pub repeated_steps: usize,
    pub possible_subpaths: usize,
    pub consistent_steps: usize,
    pub subproblem_optimal_steps: usize,
    pub skipped_subproblem_steps: usize,
    pub syntax_errors: usize,
    pub trace_token_length: usize,
    /// Per depth: `(records, correct answers)`.
    pub by_depth: BTreeMap<usize, (usize, usize)>,
}

impl ReportTotals {
    pub fn add(&mut self, r: &GenerationReport) {
        self.records += 1;
        self.is_possible += r.answer.is_possible as usize;
        self.is_cost_consistent += r.answer.is_cost_consistent as usize;
        self.is_cost_optimal += r.answer.is_cost_optimal as usize;
        self.length_is_correct += r.answer.length_is_correct as usize;
        self.is_correct += r.answer.is_correct as usize;
        self.num_steps += r.cot.num_steps;
        self.repeated_steps += r.cot.repeated_steps;
        self.possible_subpaths += r.cot.possible_subpaths;
        self.consistent_steps += r.cot.consistent_steps;
        self.subproblem_optimal_steps += r.cot.subproblem_optimal_steps;
        self.skipped_subproblem_steps += r.cot.skipped_subproblem_steps;
        self.syntax_errors += r.cot.syntax_errors;
        self.trace_token_length += r.trace_token_length;
        let entry = self.by_depth.entry(r.depth).or_default();
        entry.0 += 1;
        entry.1 += r.answer.is_correct as usize;
    }

    pub fn merge(mut self, other: Self) -> Self {
        self.records += other.records;
        self.is_possible += other.is_possible;
        self.is_cost_consistent += other.is_cost_consistent;
        self.is_cost_optimal += other.is_cost_optimal;
        self.length_is_correct += other.length_is_correct;
        self.is_correct += other.is_correct;
        self.num_steps += other.num_steps;
        self.repeated_steps += other.repeated_steps;
        self.possible_subpaths += other.possible_subpaths;
        self.consistent_steps += other.consistent_steps;
        self.subproblem_optimal_steps += other.subproblem_optimal_steps;
        self.skipped_subproblem_steps += other.skipped_subproblem_steps;
        self.syntax_errors += other.syntax_errors;
        self.trace_token_length += other.trace_token_length;
        for (depth, (n, ok)) in other.by_depth {
            let entry = self.by_depth.entry(depth).or_default();
            entry.0 += n;
            entry.1 += ok;
        }
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthAccuracy {
    pub records: usize,
    pub accuracy: f64,
}

/// Per-record means over a scored set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub records: usize,
    pub accuracy: f64,
    pub is_possible: f64,
    pub is_cost_consistent: f64,
    pub is_cost_optimal: f64,
    pub length_is_correct: f64,
    pub num_steps: f64,
    pub repeated_steps: f64,
    pub possible_subpaths: f64,
    pub consistent_steps: f64,
    pub subproblem_optimal_steps: f64,
    pub skipped_subproblem_steps: f64,
    pub syntax_errors: f64,
    pub trace_token_length: f64,
    pub accuracy_by_depth: BTreeMap<usize, DepthAccuracy>,
}

impl From<&ReportTotals> for BatchReport {
    fn from(t: &ReportTotals) -> Self {
        let mean = |x: usize| {
            if t.records == 0 {
                0.0
            } else {
                x as f64 / t.records as f64
            }
        };
        BatchReport {
            records: t.records,
            accuracy: mean(t.is_correct),
            is_possible: mean(t.is_possible),
            is_cost_consistent: mean(t.is_cost_consistent),
            is_cost_optimal: mean(t.is_cost_optimal),
            length_is_correct: mean(t.length_is_correct),
            num_steps: mean(t.num_steps),
            repeated_steps: mean(t.repeated_steps),
            possible_subpaths: mean(t.possible_subpaths),
            consistent_steps: mean(t.consistent_steps),
            subproblem_optimal_steps: mean(t.subproblem_optimal_steps),
            skipped_subproblem_steps: mean(t.skipped_subproblem_steps),
            syntax_errors: mean(t.syntax_errors),
            trace_token_length: mean(t.trace_token_length),
            accuracy_by_depth: t
                .by_depth
                .iter()
                .map(|(&d, &(n, ok))| {
                    (
                        d,
                        DepthAccuracy {
                            records: n,
                            accuracy: ok as f64 / n as f64,
                        },
                    )
                })
                .collect(),
        }
    }
}

/// Scores paired questions and lexed generations in parallel. Returns the
/// per-record reports in input order along with the aggregate.
pub fn batch_score<G>(
    questions: &[TokenSeq],
    generations: &[G],
    vocab: &Vocab,
) -> Result<(Vec<GenerationReport>, BatchReport)>
where
    G: AsRef<[Token]> + Sync,
{
    if questions.len() != generations.len() {
        return Err(Error::Corpus(format!(
            "{} questions but {} generations",
            questions.len(),
            generations.len()
        )));
    }
    let reports = questions
        .par_iter()
        .zip(generations.par_iter())
        .map(|(q, gen)| {
            let g = decode_question(q, vocab)?;
            score_tokens(&g, gen.as_ref())
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize(&reports);
    Ok((reports, summary))
}

pub fn summarize(reports: &[GenerationReport]) -> BatchReport {
    let totals = reports.iter().fold(ReportTotals::default(), |mut acc, r| {
        acc.add(r);
        acc
    });
    BatchReport::from(&totals)
}
