//! `tracebench`: generate, solve, validate and summarize shortest-path corpora.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use tracebench::corpus::{
    build_corpus, build_corpus_to_budget, compute_stats, read_jsonl, write_corpus_dir, write_json,
    CorpusConfig, DEFAULT_MAX_TOKENS, DEFAULT_SPLIT,
};
use tracebench::evalmetrics::{decode_question_tokens, score_tokens, summarize, GenerationReport};
use tracebench::solver::solve_dp;
use tracebench::tokenlang::{build_vocab_with, lex, VocabOptions};
use tracebench::{Error, GraphParams, TraceMode};

#[derive(Parser)]
#[command(
    name = "tracebench",
    version,
    about = "Shortest-path reasoning traces on layered DAGs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a train/test corpus directory.
    Generate(GenerateArgs),
    /// Solve every question in a JSONL file.
    Solve {
        #[arg(long)]
        graphs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score generations against their questions.
    Validate {
        #[arg(long)]
        graphs: PathBuf,
        #[arg(long)]
        generations: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        per_record: Option<PathBuf>,
    },
    /// Recompute corpus statistics for a JSONL file.
    Stats {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 7)]
    layers: usize,
    #[arg(long, default_value_t = 6)]
    max_width: usize,
    #[arg(long, default_value_t = 5)]
    max_cost: u32,
    #[arg(long, default_value_t = 0.6)]
    edge_prob: f64,
    #[arg(long, allow_hyphen_values = true)]
    eta: f64,
    #[arg(long, default_value = "plain")]
    mode: TraceMode,
    /// Number of records; required unless `--token-budget` is given.
    #[arg(long, required_unless_present = "token_budget")]
    count: Option<usize>,
    /// Emit records until their total token length reaches this budget.
    #[arg(long, conflicts_with = "count")]
    token_budget: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_MAX_TOKENS)]
    max_tokens: usize,
    #[arg(long, default_value_t = DEFAULT_SPLIT)]
    split: f64,
    /// Add the integer token `0` to the vocabulary.
    #[arg(long)]
    include_zero: bool,
    #[arg(long)]
    out: PathBuf,
}

/// An error caused by the invocation rather than the data.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(e: Error) -> anyhow::Error {
    match e {
        Error::InvalidParams(msg) => Usage(msg).into(),
        other => other.into(),
    }
}

fn generate(args: GenerateArgs) -> anyhow::Result<()> {
    let params = GraphParams::new(args.layers, args.max_width, args.max_cost, args.edge_prob)
        .map_err(usage)?;
    let vocab = build_vocab_with(
        &params,
        VocabOptions {
            include_zero: args.include_zero,
        },
    );
    let config = CorpusConfig {
        params,
        eta: args.eta,
        mode: args.mode,
        count: args.count.unwrap_or(0),
        seed: args.seed,
        max_tokens: args.max_tokens,
        split: args.split,
    };
    let corpus = match args.token_budget {
        Some(budget) => build_corpus_to_budget(&config, &vocab, budget),
        None => build_corpus(&config, &vocab),
    }
    .map_err(usage)?;
    write_corpus_dir(&args.out, &config, &corpus, &vocab)?;
    let s = corpus.summary;
    eprintln!(
        "wrote {} train / {} test records to {} ({} tokens, {} over length, {} duplicates)",
        s.train,
        s.test,
        args.out.display(),
        s.total_tokens,
        s.dropped_over_length,
        s.duplicates_rejected
    );
    Ok(())
}

/// Non-empty lines of a file, with 1-based line numbers.
fn lines(path: &Path) -> anyhow::Result<Vec<(usize, String)>> {
    let file = fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

/// Text of a JSONL line: the first string field among `keys`, the
/// concatenation of `trace` and `answer`, or the raw line if it is not JSON.
fn field_text(line: &str, keys: &[&str]) -> Option<String> {
    let Ok(value) = serde_json::from_str::<Value>(line) else {
        return Some(line.to_string());
    };
    if let Value::String(s) = &value {
        return Some(s.clone());
    }
    for key in keys {
        if let Some(s) = value.get(key).and_then(Value::as_str) {
            return Some(s.to_string());
        }
    }
    match (
        value.get("trace").and_then(Value::as_str),
        value.get("answer").and_then(Value::as_str),
    ) {
        (Some(t), Some(a)) => Some(format!("{t} {a}")),
        (None, Some(a)) => Some(a.to_string()),
        _ => None,
    }
}

fn read_questions(path: &Path) -> anyhow::Result<Vec<tracebench::LayeredGraph>> {
    lines(path)?
        .par_iter()
        .map(|(no, line)| {
            let text = field_text(line, &["question"])
                .with_context(|| format!("{}:{no}: no question field", path.display()))?;
            decode_question_tokens(&lex(&text)).with_context(|| format!("{}:{no}", path.display()))
        })
        .collect()
}

#[derive(Serialize)]
struct Solved {
    index: usize,
    opt_cost: u32,
    opt_path: Vec<usize>,
    answer: String,
}

fn solve(graphs: &Path, out: &Path) -> anyhow::Result<()> {
    let solved = read_questions(graphs)?
        .par_iter()
        .enumerate()
        .map(|(index, g)| {
            let s = solve_dp(g)?;
            let nodes: Vec<String> = s.opt_path.iter().map(|n| format!("n{n}")).collect();
            let answer = format!("{} {} | EoS", nodes.join(" "), s.opt_cost);
            Ok(Solved {
                index,
                opt_cost: s.opt_cost,
                opt_path: s.opt_path,
                answer,
            })
        })
        .collect::<tracebench::Result<Vec<_>>>()?;
    let mut text = String::new();
    for s in &solved {
        text.push_str(&serde_json::to_string(s)?);
        text.push('\n');
    }
    fs::write(out, text)?;
    Ok(())
}

fn validate(
    graphs: &Path,
    generations: &Path,
    report: &Path,
    per_record: Option<&Path>,
) -> anyhow::Result<()> {
    let questions = read_questions(graphs)?;
    let gens = lines(generations)?;
    if questions.len() != gens.len() {
        bail!(
            "{} questions but {} generations",
            questions.len(),
            gens.len()
        );
    }
    let reports = questions
        .par_iter()
        .zip(gens.par_iter())
        .map(|(g, (_, line))| {
            let text = field_text(line, &["generation", "output", "text"]).unwrap_or_default();
            score_tokens(g, &lex(&text))
        })
        .collect::<tracebench::Result<Vec<GenerationReport>>>()?;
    write_json(report, &summarize(&reports))?;
    if let Some(path) = per_record {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "index",
            "depth",
            "is_possible",
            "is_cost_consistent",
            "is_cost_optimal",
            "length_is_correct",
            "is_correct",
            "num_steps",
            "repeated_steps",
            "possible_subpaths",
            "consistent_steps",
            "subproblem_optimal_steps",
            "skipped_subproblem_steps",
            "syntax_errors",
            "trace_token_length",
        ])?;
        for (i, r) in reports.iter().enumerate() {
            let (a, c) = (r.answer, r.cot);
            w.write_record([
                i.to_string(),
                r.depth.to_string(),
                a.is_possible.to_string(),
                a.is_cost_consistent.to_string(),
                a.is_cost_optimal.to_string(),
                a.length_is_correct.to_string(),
                a.is_correct.to_string(),
                c.num_steps.to_string(),
                c.repeated_steps.to_string(),
                c.possible_subpaths.to_string(),
                c.consistent_steps.to_string(),
                c.subproblem_optimal_steps.to_string(),
                c.skipped_subproblem_steps.to_string(),
                c.syntax_errors.to_string(),
                r.trace_token_length.to_string(),
            ])?;
        }
        w.flush()?;
    }
    Ok(())
}

fn stats(input: &Path, out: &Path) -> anyhow::Result<()> {
    let records = read_jsonl(input)?;
    write_json(out, &compute_stats(&records))?;
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Generate(args) => generate(args),
        Command::Solve { graphs, out } => solve(&graphs, &out),
        Command::Validate {
            graphs,
            generations,
            report,
            per_record,
        } => validate(&graphs, &generations, &report, per_record.as_deref()),
        Command::Stats { input, out } => stats(&input, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
