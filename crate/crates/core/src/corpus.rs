//! Reproducible question–trace–answer corpora.
//!
//! Record candidates are generated in parallel, each from its own sub-seed
//! `seed::derive(corpus_seed, attempt)`, and then accepted one by one in
//! attempt order. A candidate is rejected when its total token length exceeds
//! the limit or when its question sequence was already accepted, so the output
//! depends only on the configuration.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphgen::{sample_graph, GraphParams, LayeredGraph};
use crate::seed;
use crate::solver::solve_dp;
use crate::tokenlang::{
    encode_answer, encode_question, encode_trace, lex, parse_generation, Vocab,
};
use crate::tracegen::{generate_trace, trace_seed, StepStats, TraceMode, TraceStep};

pub const DEFAULT_MAX_TOKENS: usize = 2048;
pub const DEFAULT_SPLIT: f64 = 0.9;
pub const MIN_COUNT: usize = 10;

const CHUNK: u64 = 4096;

/// One example. Field order is the JSONL field order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    /// Position in the corpus before splitting.
    pub id: u64,
    pub params: GraphParams,
    pub graph: LayeredGraph,
    pub question: String,
    pub trace: String,
    pub answer: String,
    pub question_ids: Vec<u32>,
    pub trace_ids: Vec<u32>,
    pub answer_ids: Vec<u32>,
    pub eta: f64,
    pub mode: TraceMode,
    /// Graph seed; the trace used `tracegen::trace_seed(seed)`.
    pub seed: u64,
    pub num_steps: usize,
    /// Question, trace and answer tokens together.
    pub token_length: usize,
}

impl CorpusRecord {
    /// Builds the record for one graph seed.
    pub fn generate(
        params: &GraphParams,
        eta: f64,
        mode: TraceMode,
        graph_seed: u64,
        vocab: &Vocab,
    ) -> Result<Self> {
        let graph = sample_graph(params, graph_seed)?;
        let trace = generate_trace(&graph, eta, mode, trace_seed(graph_seed));
        let solution = solve_dp(&graph)?;
        let q = encode_question(&graph, vocab)?;
        let t = encode_trace(&trace, vocab)?;
        let a = encode_answer(&solution.opt_path, solution.opt_cost, vocab)?;
        Ok(CorpusRecord {
            id: 0,
            params: *params,
            graph,
            question: q.text().to_string(),
            trace: t.text().to_string(),
            answer: a.text().to_string(),
            question_ids: q.ids().to_vec(),
            trace_ids: t.ids().to_vec(),
            answer_ids: a.ids().to_vec(),
            eta,
            mode,
            seed: graph_seed,
            num_steps: trace.len(),
            token_length: q.len() + t.len() + a.len(),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub params: GraphParams,
    pub eta: f64,
    pub mode: TraceMode,
    pub count: usize,
    pub seed: u64,
    pub max_tokens: usize,
    /// Fraction of records that go to the training split.
    pub split: f64,
}

impl CorpusConfig {
    pub fn new(params: GraphParams, eta: f64, mode: TraceMode, count: usize, seed: u64) -> Self {
        CorpusConfig {
            params,
            eta,
            mode,
            count,
            seed,
            max_tokens: DEFAULT_MAX_TOKENS,
            split: DEFAULT_SPLIT,
        }
    }

    fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !self.eta.is_finite() {
            return Err(Error::InvalidParams(format!(
                "eta must be finite, got {}",
                self.eta
            )));
        }
        if !(0.0..=1.0).contains(&self.split) {
            return Err(Error::InvalidParams(format!(
                "split must be in [0, 1], got {}",
                self.split
            )));
        }
        Ok(())
    }

    pub fn max_attempts(&self, count: usize) -> u64 {
        20 * count as u64 + 10_000
    }
}

/// Build counters, written next to the corpus.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildSummary {
    pub records: usize,
    pub train: usize,
    pub test: usize,
    pub attempts: u64,
    pub dropped_over_length: u64,
    pub duplicates_rejected: u64,
    pub total_tokens: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub train: Vec<CorpusRecord>,
    pub test: Vec<CorpusRecord>,
    pub summary: BuildSummary,
}

impl Corpus {
    pub fn records(&self) -> impl Iterator<Item = &CorpusRecord> {
        self.train.iter().chain(&self.test)
    }
}

pub fn split_point(count: usize, split: f64) -> usize {
    ((count as f64 * split) + 1e-9).floor().min(count as f64) as usize
}

/// Accepts candidates in attempt order until `done` says stop.
fn accept_until(
    config: &CorpusConfig,
    vocab: &Vocab,
    max_attempts: u64,
    mut done: impl FnMut(&[CorpusRecord]) -> bool,
) -> Result<(Vec<CorpusRecord>, BuildSummary)> {
    let mut records = Vec::new();
    let mut seen: HashSet<Vec<u32>> = HashSet::new();
    let mut summary = BuildSummary::default();
    let mut next = 0u64;

    while !done(&records) {
        if next >= max_attempts {
            return Err(Error::Corpus(format!(
                "gave up after {next} attempts with {} unique records ({} duplicates, {} over length)",
                records.len(),
                summary.duplicates_rejected,
                summary.dropped_over_length
            )));
        }
        let end = (next + CHUNK).min(max_attempts);
        let candidates = (next..end)
            .into_par_iter()
            .map(|i| {
                let graph_seed = seed::derive(config.seed, i);
                CorpusRecord::generate(&config.params, config.eta, config.mode, graph_seed, vocab)
            })
            .collect::<Result<Vec<_>>>()?;
        for mut rec in candidates {
            if done(&records) {
                break;
            }
            summary.attempts += 1;
            if rec.token_length > config.max_tokens {
                summary.dropped_over_length += 1;
            } else if seen.contains(&rec.question_ids) {
                summary.duplicates_rejected += 1;
            } else {
                seen.insert(rec.question_ids.clone());
                rec.id = records.len() as u64;
                summary.total_tokens += rec.token_length as u64;
                records.push(rec);
            }
        }
        next = end;
    }
    summary.records = records.len();
    Ok((records, summary))
}

fn split(
    config: &CorpusConfig,
    mut records: Vec<CorpusRecord>,
    mut summary: BuildSummary,
) -> Corpus {
    let test = records.split_off(split_point(records.len(), config.split));
    summary.train = records.len();
    summary.test = test.len();
    Corpus {
        train: records,
        test,
        summary,
    }
}

/// Builds `config.count` unique records and splits them by index.
pub fn build_corpus(config: &CorpusConfig, vocab: &Vocab) -> Result<Corpus> {
    config.validate()?;
    if config.count < MIN_COUNT {
        return Err(Error::InvalidParams(format!(
            "count must be >= {MIN_COUNT}, got {}",
            config.count
        )));
    }
    let count = config.count;
    let (records, summary) = accept_until(config, vocab, config.max_attempts(count), |r| {
        r.len() >= count
    })?;
    Ok(split(config, records, summary))
}

/// Builds records until their total token length reaches `budget`; the last
/// record is the one that crosses it. `config.count` is ignored.
pub fn build_corpus_to_budget(config: &CorpusConfig, vocab: &Vocab, budget: u64) -> Result<Corpus> {
    config.validate()?;
    let estimate = (budget / config.params.layers.max(1) as u64) as usize;
    let mut total = 0u64;
    let mut counted = 0usize;
    let (records, summary) = accept_until(config, vocab, config.max_attempts(estimate), |r| {
        for rec in &r[counted..] {
            total += rec.token_length as u64;
        }
        counted = r.len();
        total >= budget
    })?;
    Ok(split(config, records, summary))
}

/// Total number of tokens. With `include_pad`, every record counts as long as
/// the longest one, as in a padded batch.
pub fn token_budget(records: &[CorpusRecord], include_pad: bool) -> u64 {
    if include_pad {
        let longest = records.iter().map(|r| r.token_length).max().unwrap_or(0);
        (longest * records.len()) as u64
    } else {
        records.iter().map(|r| r.token_length as u64).sum()
    }
}

/// Total trace tokens (BoT through EoT).
pub fn trace_token_total(records: &[CorpusRecord]) -> u64 {
    records.iter().map(|r| r.trace_ids.len() as u64).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepGroup {
    pub eta: f64,
    pub mode: TraceMode,
    pub steps: StepStats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub records: usize,
    pub total_tokens: u64,
    pub trace_tokens: u64,
    pub step_stats: Vec<StepGroup>,
    /// Trace length in tokens to number of records.
    pub trace_token_histogram: BTreeMap<usize, usize>,
    /// `additions[a][c]` counts trace steps that add edge cost `c` to the
    /// accumulated cost `a` of their prefix.
    pub additions: Vec<Vec<u64>>,
}

impl CorpusStats {
    pub fn addition_count(&self, acc: u32, edge: u32) -> u64 {
        self.additions
            .get(acc as usize)
            .and_then(|row| row.get(edge as usize))
            .copied()
            .unwrap_or(0)
    }

    pub fn total_additions(&self) -> u64 {
        self.additions.iter().flatten().sum()
    }
}

/// Additions performed by a trace: `(prefix cost, last edge cost)` per step.
pub fn trace_additions<'a>(
    graph: &'a LayeredGraph,
    steps: &'a [TraceStep],
) -> impl Iterator<Item = (u32, u32)> + 'a {
    steps.iter().filter_map(|s| {
        let n = s.path.len();
        if n < 2 {
            return None;
        }
        let edge = graph.edge_cost(s.path[n - 2], s.path[n - 1])?;
        Some((s.cost.checked_sub(edge)?, edge))
    })
}

fn record_steps(rec: &CorpusRecord) -> Vec<TraceStep> {
    parse_generation(&lex(&rec.trace)).steps
}

pub fn compute_stats(records: &[CorpusRecord]) -> CorpusStats {
    let rows = records
        .iter()
        .map(|r| r.params.max_path_cost() as usize + 1)
        .max()
        .unwrap_or(0);
    let cols = records
        .iter()
        .map(|r| r.params.max_cost as usize + 1)
        .max()
        .unwrap_or(0);
    let mut additions = vec![vec![0u64; cols]; rows];
    let mut groups: Vec<((u64, TraceMode), Vec<usize>)> = Vec::new();
    let mut trace_token_histogram = BTreeMap::new();

    for rec in records {
        let key = (rec.eta.to_bits(), rec.mode);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, counts)) => counts.push(rec.num_steps),
            None => groups.push((key, vec![rec.num_steps])),
        }
        *trace_token_histogram
            .entry(rec.trace_ids.len())
            .or_insert(0) += 1;
        for (acc, edge) in trace_additions(&rec.graph, &record_steps(rec)) {
            if let Some(cell) = additions
                .get_mut(acc as usize)
                .and_then(|row| row.get_mut(edge as usize))
            {
                *cell += 1;
            }
        }
    }

    CorpusStats {
        records: records.len(),
        total_tokens: token_budget(records, false),
        trace_tokens: trace_token_total(records),
        step_stats: groups
            .into_iter()
            .map(|((eta, mode), counts)| StepGroup {
                eta: f64::from_bits(eta),
                mode,
                steps: StepStats::from_counts(&counts),
            })
            .collect(),
        trace_token_histogram,
        additions,
    }
}

pub fn write_jsonl(path: &Path, records: &[CorpusRecord]) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for rec in records {
        serde_json::to_writer(&mut out, rec)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_jsonl(path: &Path) -> Result<Vec<CorpusRecord>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| Error::Corpus(format!("{}:{}: {e}", path.display(), i + 1)))?;
        records.push(rec);
    }
    Ok(records)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct StatsFile<'a> {
    config: &'a CorpusConfig,
    build: &'a BuildSummary,
    train: CorpusStats,
    test: CorpusStats,
}

/// Writes `train.jsonl`, `test.jsonl`, `vocab.json` and `stats.json`.
pub fn write_corpus_dir(
    dir: &Path,
    config: &CorpusConfig,
    corpus: &Corpus,
    vocab: &Vocab,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_jsonl(&dir.join("train.jsonl"), &corpus.train)?;
    write_jsonl(&dir.join("test.jsonl"), &corpus.test)?;
    write_json(&dir.join("vocab.json"), vocab)?;
    let stats = StatsFile {
        config,
        build: &corpus.summary,
        train: compute_stats(&corpus.train),
        test: compute_stats(&corpus.test),
    };
    write_json(&dir.join("stats.json"), &stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evalmetrics::score_generation;
    use crate::graphgen::fixtures::worked_example;
    use crate::tokenlang::{build_vocab, decode_record, TokenSeq};
    use crate::tracegen::Trace;

    fn small(count: usize, eta: f64, mode: TraceMode, seed: u64) -> (CorpusConfig, Vocab) {
        let params = GraphParams::default();
        (
            CorpusConfig::new(params, eta, mode, count, seed),
            build_vocab(&params),
        )
    }

    #[test]
    fn split_sizes() {
        let (config, vocab) = small(1000, 5.0, TraceMode::Plain, 3);
        let c = build_corpus(&config, &vocab).unwrap();
        assert_eq!((c.train.len(), c.test.len()), (900, 100));
        assert_eq!(c.summary.records, 1000);
        let ids: Vec<u64> = c.records().map(|r| r.id).collect();
        assert_eq!(ids, (0..1000).collect::<Vec<_>>());
        for n in [10, 11, 19, 99, 12345] {
            assert_eq!(split_point(n, 0.9), n * 9 / 10);
        }
        assert_eq!(split_point(10, 1.0), 10);
        assert_eq!(split_point(10, 0.0), 0);
    }

    #[test]
    fn questions_are_unique_across_splits() {
        // A tiny family forces collisions.
        let params = GraphParams::new(3, 2, 2, 0.6).unwrap();
        let config = CorpusConfig::new(params, 0.0, TraceMode::Plain, 40, 1);
        let c = build_corpus(&config, &build_vocab(&params)).unwrap();
        assert!(c.summary.duplicates_rejected > 0);
        let distinct: HashSet<&Vec<u32>> = c.records().map(|r| &r.question_ids).collect();
        assert_eq!(distinct.len(), 40);
    }

    #[test]
    fn infeasible_uniqueness_is_an_error() {
        // L=2, K=2, C=1 has a single possible graph.
        let params = GraphParams::new(2, 2, 1, 0.6).unwrap();
        let config = CorpusConfig::new(params, 0.0, TraceMode::Plain, 10, 1);
        assert!(matches!(
            build_corpus(&config, &build_vocab(&params)),
            Err(Error::Corpus(_))
        ));
    }

    #[test]
    fn small_counts_are_rejected() {
        let (config, vocab) = small(9, 5.0, TraceMode::Plain, 0);
        assert!(matches!(
            build_corpus(&config, &vocab),
            Err(Error::InvalidParams(_))
        ));
    }

    #[test]
    fn builds_are_deterministic() {
        let (config, vocab) = small(300, 0.0, TraceMode::Rr, 42);
        let a = build_corpus(&config, &vocab).unwrap();
        let b = build_corpus(&config, &vocab).unwrap();
        assert_eq!(a, b);
        let other = build_corpus(&CorpusConfig { seed: 43, ..config }, &vocab).unwrap();
        assert_ne!(a.train[0].question, other.train[0].question);
    }

    #[test]
    fn over_length_records_are_resampled() {
        let (mut config, vocab) = small(200, -5.0, TraceMode::Rr, 5);
        config.max_tokens = 300;
        let c = build_corpus(&config, &vocab).unwrap();
        assert!(c.summary.dropped_over_length > 0);
        assert!(c.records().all(|r| r.token_length <= 300));
        assert_eq!(c.summary.records, 200);
    }

    #[test]
    fn records_round_trip_and_self_score() {
        let (config, vocab) = small(200, 0.0, TraceMode::Dr, 9);
        for rec in build_corpus(&config, &vocab).unwrap().records() {
            let q = TokenSeq::from_ids(&rec.question_ids, &vocab).unwrap();
            let t = TokenSeq::from_ids(&rec.trace_ids, &vocab).unwrap();
            let a = TokenSeq::from_ids(&rec.answer_ids, &vocab).unwrap();
            assert_eq!(
                (q.text(), t.text(), a.text()),
                (&*rec.question, &*rec.trace, &*rec.answer)
            );
            let full = TokenSeq::concat(&[&q, &t, &a]);
            let decoded = decode_record(&full, &vocab).unwrap();
            assert_eq!(decoded.graph, rec.graph);
            assert_eq!(decoded.steps.len(), rec.num_steps);
            assert_eq!(rec.token_length, full.len());
            let report = score_generation(&q, &TokenSeq::concat(&[&t, &a]), &vocab).unwrap();
            assert!(report.answer.is_correct);
            assert_eq!(2 * report.cot.repeated_steps, report.cot.num_steps);
        }
    }

    #[test]
    fn budget_build_stops_within_one_record() {
        let (config, vocab) = small(0, 5.0, TraceMode::Plain, 2);
        let budget = 50_000;
        let c = build_corpus_to_budget(&config, &vocab, budget).unwrap();
        let all: Vec<CorpusRecord> = c.records().cloned().collect();
        let total = token_budget(&all, false);
        let last = all.last().unwrap().token_length as u64;
        assert!(total >= budget && total - last < budget);
    }

    #[test]
    fn token_budget_basics() {
        assert_eq!(token_budget(&[], false), 0);
        assert_eq!(token_budget(&[], true), 0);
        let (config, vocab) = small(10, 5.0, TraceMode::Plain, 0);
        let c = build_corpus(&config, &vocab).unwrap();
        assert_eq!(
            token_budget(&c.train[..1], false),
            c.train[0].token_length as u64
        );
        let longest = c.train.iter().map(|r| r.token_length).max().unwrap() as u64;
        assert_eq!(token_budget(&c.train, true), longest * 9);
        assert!(token_budget(&c.train, true) >= token_budget(&c.train, false));
    }

    #[test]
    fn worked_example_additions() {
        let g = worked_example();
        let steps = [
            TraceStep::new(vec![0, 2], 1),
            TraceStep::new(vec![0, 1], 2),
            TraceStep::new(vec![0, 1, 3], 5),
            TraceStep::new(vec![0, 2, 3], 3),
            TraceStep::new(vec![0, 2, 3, 4], 4),
        ];
        let adds: Vec<_> = trace_additions(&g, &steps).collect();
        assert_eq!(adds, vec![(0, 1), (0, 2), (2, 3), (1, 2), (3, 1)]);

        let params = GraphParams::default();
        let vocab = build_vocab(&params);
        let trace = Trace {
            steps: steps.to_vec(),
            eta: 5.0,
            mode: TraceMode::Plain,
            seed: 0,
        };
        let t = encode_trace(&trace, &vocab).unwrap();
        let rec = CorpusRecord {
            id: 0,
            params,
            graph: g.clone(),
            question: String::new(),
            trace: t.text().to_string(),
            answer: String::new(),
            question_ids: vec![],
            trace_ids: t.ids().to_vec(),
            answer_ids: vec![],
            eta: 5.0,
            mode: TraceMode::Plain,
            seed: 0,
            num_steps: 5,
            token_length: 0,
        };
        let stats = compute_stats(&[rec]);
        assert_eq!(stats.total_additions(), 5);
        for (a, c) in [(0, 1), (0, 2), (2, 3), (1, 2), (3, 1)] {
            assert_eq!(stats.addition_count(a, c), 1);
        }
        assert_eq!(stats.trace_token_histogram, BTreeMap::from([(26, 1)]));
    }

    #[test]
    fn stats_totals_and_bounds() {
        let (config, vocab) = small(2000, 5.0, TraceMode::Plain, 11);
        let c = build_corpus(&config, &vocab).unwrap();
        let all: Vec<CorpusRecord> = c.records().cloned().collect();
        let stats = compute_stats(&all);
        assert_eq!(stats.records, 2000);
        assert_eq!(stats.trace_token_histogram.values().sum::<usize>(), 2000);
        assert_eq!(stats.step_stats.len(), 1);
        let s = stats.step_stats[0].steps;
        assert_eq!(s.samples, 2000);
        assert!((s.mean - 33.0).abs() < 0.25 * 33.0, "{s:?}");
        // η=+5 traces state each edge once.
        let steps: u64 = all.iter().map(|r| r.num_steps as u64).sum();
        assert_eq!(stats.total_additions(), steps);
        assert_eq!(stats.additions.len(), 36);
        assert!(stats
            .additions
            .iter()
            .all(|row| row.len() == 6 && row[0] == 0));
    }

    #[test]
    fn jsonl_round_trip_and_field_order() {
        let (config, vocab) = small(20, -5.0, TraceMode::Plain, 4);
        let c = build_corpus(&config, &vocab).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_corpus_dir(dir.path(), &config, &c, &vocab).unwrap();
        let train = read_jsonl(&dir.path().join("train.jsonl")).unwrap();
        assert_eq!(train, c.train);
        let first = fs::read_to_string(dir.path().join("test.jsonl")).unwrap();
        let line = first.lines().next().unwrap();
        let keys = [
            "\"id\"",
            "\"params\"",
            "\"graph\"",
            "\"question\"",
            "\"trace\"",
            "\"answer\"",
            "\"question_ids\"",
            "\"trace_ids\"",
            "\"answer_ids\"",
            "\"eta\"",
            "\"mode\"",
            "\"seed\"",
            "\"num_steps\"",
            "\"token_length\"",
        ];
        let positions: Vec<usize> = keys.iter().map(|k| line.find(k).unwrap()).collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]));
        let vocab_json: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("vocab.json")).unwrap())
                .unwrap();
        assert_eq!(vocab_json["BoS"], 1);
        assert!(dir.path().join("stats.json").exists());
    }

    #[test]
    fn bad_jsonl_line_reports_position() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.jsonl");
        fs::write(&path, "{\"id\": 1}\n").unwrap();
        let err = read_jsonl(&path).unwrap_err().to_string();
        assert!(err.contains("x.jsonl:1"), "{err}");
    }
}
