//! The `frag` command line. Every command except `corpus` works on a session
//! directory (`--session`, default `.`), reading it before and writing it
//! back after any change.

use std::collections::BTreeSet;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;
use sheetfrag::corpus::{generate_corpus, CorpusSpec, FaultKind};
use sheetfrag::diagnosis::{Label, LabelRecord, DEFAULT_KMAX};
use sheetfrag::fragment::{enumerate_fragments, Strategy, Targets};
use sheetfrag::harness::{FalsifyOutcome, InputSpec};
use sheetfrag::session::{Generation, Session};
use sheetfrag::workbook::parse_literal;
use sheetfrag::{CellAddress, Workbook};

use crate::service::{self, AppState};

#[derive(Parser, Debug)]
#[command(name = "frag", version, about = "Fragment-based testing and debugging for spreadsheets")]
pub struct Cli {
    /// Session directory.
    #[arg(long, global = true, default_value = ".", env = "FRAG_SESSION")]
    pub session: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Load a workbook (`.json` document or `.csv`) into the session,
    /// creating the session if needed.
    Load { file: PathBuf },
    /// Copy-equivalence classes, copy blocks and range smells.
    Classes,
    /// The cell dependency graph.
    Graph {
        /// Graphviz output instead of JSON.
        #[arg(long)]
        dot: bool,
    },
    /// Enumerate candidate fragments.
    Fragments(FragmentArgs),
    /// Generate and store tests for a fragment.
    GenTests {
        #[arg(long)]
        fragment: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Boundary cases instead of random ones.
        #[arg(long)]
        boundary: bool,
        /// Number of random cases.
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[command(flatten)]
        ranges: RangeArgs,
    },
    /// Replay stored tests; exits with status 1 if any fails, errors or is
    /// stale.
    RunTests {
        #[arg(long)]
        fragment: Option<String>,
    },
    /// Search for inputs violating a property such as `E17 >= 0`.
    Falsify {
        #[arg(long)]
        fragment: String,
        #[arg(long)]
        property: String,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        ranges: RangeArgs,
    },
    /// Label an output correct or faulty.
    Label {
        /// Cell the verdict is about.
        #[arg(long, required_unless_present = "clear")]
        output: Option<CellAddress>,
        #[arg(long, value_parser = parse_label, required_unless_present = "clear")]
        label: Option<Label>,
        /// Test whose run produced the output.
        #[arg(long)]
        test: Option<String>,
        /// Value the user expected instead.
        #[arg(long)]
        expected: Option<String>,
        /// Drop every stored label.
        #[arg(long, conflicts_with_all = ["output", "label", "test", "expected"])]
        clear: bool,
    },
    /// Compute diagnoses from the stored labels and write `diagnosis.json`.
    Diagnose {
        #[arg(long, default_value_t = DEFAULT_KMAX)]
        kmax: usize,
    },
    /// Focus a fragment, or clear the focus when no id is given.
    Focus { fragment: Option<String> },
    /// Scratch edit of one cell.
    Set { cell: CellAddress, value: String },
    /// Make the scratch edits permanent.
    Commit,
    /// Generate a seeded sales workbook, optionally with one injected fault.
    Corpus {
        #[arg(long, default_value_t = 12)]
        rows: u32,
        #[arg(long, default_value = "none")]
        fault: FaultKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Draw inputs and parameters from the seed.
        #[arg(long)]
        random_inputs: bool,
        /// Write the workbook here and print only the ground truth.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the session API on 127.0.0.1.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
}

#[derive(Args, Debug)]
pub struct FragmentArgs {
    #[arg(long)]
    pub strategy: Option<Strategy>,
    /// Target cell for path-limited extraction; repeatable.
    #[arg(long)]
    pub cell: Vec<CellAddress>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub breadth: Option<usize>,
    /// Representatives per aggregated class.
    #[arg(long)]
    pub k: Option<usize>,
    /// Lower score bound; single-formula fragments need 1.
    #[arg(long)]
    pub min_complexity: Option<usize>,
    #[arg(long)]
    pub max_complexity: Option<usize>,
}

#[derive(Args, Debug)]
pub struct RangeArgs {
    /// Default input range `lo:hi`.
    #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
    pub range: Option<(f64, f64)>,
    /// Range for one input, `ADDR=lo:hi`; repeatable.
    #[arg(long = "input-range", value_parser = parse_input_range, allow_hyphen_values = true)]
    pub input_ranges: Vec<(CellAddress, (f64, f64))>,
}

impl RangeArgs {
    fn spec(&self) -> InputSpec {
        let mut spec = self
            .range
            .map_or_else(InputSpec::default, |(lo, hi)| InputSpec::uniform(lo, hi));
        spec.ranges.extend(self.input_ranges.iter().copied());
        spec
    }
}

pub fn parse_range(text: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = text
        .split_once(':')
        .ok_or_else(|| format!("expected lo:hi, got `{text}`"))?;
    let num = |s: &str| s.trim().parse::<f64>().map_err(|e| format!("`{s}`: {e}"));
    Ok((num(lo)?, num(hi)?))
}

fn parse_input_range(text: &str) -> Result<(CellAddress, (f64, f64)), String> {
    let (addr, range) = text
        .split_once('=')
        .ok_or_else(|| format!("expected ADDR=lo:hi, got `{text}`"))?;
    let addr = addr.parse::<CellAddress>().map_err(|e| e.to_string())?;
    Ok((addr, parse_range(range)?))
}

fn parse_label(text: &str) -> Result<Label, String> {
    match text {
        "correct" => Ok(Label::Correct),
        "faulty" => Ok(Label::Faulty),
        _ => Err(format!("expected `correct` or `faulty`, got `{text}`")),
    }
}

/// A closed pipe (`frag ... | head`) is not an error worth a panic.
fn print_json<T: Serialize>(value: &T) {
    let text = serde_json::to_string_pretty(value).expect("serializes");
    let _ = writeln!(io::stdout().lock(), "{text}");
}

fn open(dir: &Path) -> Result<Session> {
    if !dir.join("workbook.json").exists() {
        bail!("no session in {}; run `frag load <file>` first", dir.display());
    }
    Ok(Session::open(dir)?)
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

pub fn run(cli: Cli) -> Result<ExitCode> {
    let dir = cli.session.as_path();
    match cli.command {
        Command::Load { file } => {
            let wb = Workbook::load(&file).with_context(|| format!("loading {}", file.display()))?;
            let formulas = wb.formulas().count();
            let session = if dir.join("workbook.json").exists() {
                let mut s = Session::open(dir)?;
                s.load_workbook(wb)?;
                s
            } else {
                Session::new(wb)
            };
            session.save(dir)?;
            print_json(&json!({
                "version": session.version(),
                "cells": session.committed().len(),
                "formulas": formulas,
            }));
        }
        Command::Classes => {
            let s = open(dir)?;
            let an = s.analysis();
            print_json(&json!({
                "version": s.version(),
                "classes": an.classes(),
                "blocks": an.blocks(),
                "smells": an.smells(),
            }));
        }
        Command::Graph { dot } => {
            let s = open(dir)?;
            let graph = s.analysis().graph();
            if dot {
                let _ = write!(io::stdout().lock(), "{}", graph.to_dot(s.committed().name()));
            } else {
                let edges: Vec<(CellAddress, CellAddress)> = graph
                    .nodes()
                    .iter()
                    .flat_map(|&n| graph.precedents(n).map(move |p| (p, n)))
                    .collect();
                print_json(&json!({
                    "version": s.version(),
                    "nodes": graph.nodes(),
                    "edges": edges,
                    "cycles": s.analysis().cycles(),
                }));
            }
        }
        Command::Fragments(args) => {
            let s = open(dir)?;
            let mut cfg = *s.config();
            if let Some(d) = args.depth {
                cfg.depth_limit = d;
            }
            if let Some(b) = args.breadth {
                cfg.breadth_limit = b;
            }
            if let Some(k) = args.k {
                cfg.representatives = k;
            }
            if let Some(n) = args.min_complexity {
                cfg.min_complexity = n;
            }
            if let Some(n) = args.max_complexity {
                cfg.max_complexity = n;
            }
            cfg.validate()?;
            let targets = if args.cell.is_empty() {
                Targets::Auto
            } else {
                Targets::Cells(args.cell.iter().copied().collect::<BTreeSet<_>>())
            };
            let mut list = enumerate_fragments(s.analysis(), &targets, &cfg);
            if let Some(strategy) = args.strategy {
                list.retain(|f| f.strategy == strategy);
            }
            print_json(&json!({ "version": s.version(), "fragments": list }));
        }
        Command::GenTests {
            fragment,
            seed,
            boundary,
            count,
            ranges,
        } => {
            let mut s = open(dir)?;
            let generation = if boundary {
                Generation::Boundary
            } else {
                Generation::Random { seed, count }
            };
            let tests = s.generate_tests(&fragment, generation, &ranges.spec())?;
            s.save(dir)?;
            print_json(&json!({ "version": s.version(), "fragment": fragment, "tests": tests }));
        }
        Command::RunTests { fragment } => {
            let s = open(dir)?;
            let report = s.run_tests(fragment.as_deref())?;
            let summary = report.report.summary;
            let failed = summary.fail + summary.error > 0 || !report.stale.is_empty();
            print_json(&json!({ "version": s.version(), "report": report }));
            if failed {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Falsify {
            fragment,
            property,
            trials,
            seed,
            ranges,
        } => {
            let s = open(dir)?;
            let outcome = s.falsify(&fragment, &property, &ranges.spec(), trials, seed)?;
            print_json(&json!({ "version": s.version(), "outcome": outcome }));
            if matches!(outcome, FalsifyOutcome::Counterexample(_)) {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Label {
            output,
            label,
            test,
            expected,
            clear,
        } => {
            let mut s = open(dir)?;
            if clear {
                s.clear_labels();
            } else {
                let (Some(output), Some(label)) = (output, label) else {
                    bail!("--output and --label are required");
                };
                s.add_label(LabelRecord {
                    test_id: test,
                    output,
                    label,
                    expected: expected.as_deref().map(parse_literal),
                })?;
            }
            s.save(dir)?;
            print_json(&json!({ "version": s.version(), "labels": s.labels() }));
        }
        Command::Diagnose { kmax } => {
            let s = open(dir)?;
            let report = s.diagnose(kmax)?;
            Session::save_diagnosis(dir, &report)?;
            print_json(&json!({ "version": s.version(), "diagnosis": report }));
        }
        Command::Focus { fragment } => {
            let mut s = open(dir)?;
            s.set_focus(fragment.as_deref())?;
            s.save(dir)?;
            print_json(&json!({ "version": s.version(), "focus": s.focus() }));
        }
        Command::Set { cell, value } => {
            let mut s = open(dir)?;
            s.set_cell(cell, parse_literal(&value))?;
            s.save(dir)?;
            let shown = s.grid()?.cells.into_iter().find(|c| c.addr == cell);
            print_json(&json!({ "version": s.version(), "cell": shown }));
        }
        Command::Commit => {
            let mut s = open(dir)?;
            let committed = s.commit();
            s.save(dir)?;
            print_json(&json!({ "version": s.version(), "committed": committed }));
        }
        Command::Corpus {
            rows,
            fault,
            seed,
            random_inputs,
            out,
        } => {
            if rows < 2 {
                bail!("--rows must be at least 2");
            }
            let corpus = generate_corpus(&CorpusSpec {
                rows,
                seed,
                fault,
                random_inputs,
            });
            match out {
                Some(path) => {
                    corpus
                        .workbook
                        .save(&path)
                        .with_context(|| format!("writing {}", path.display()))?;
                    print_json(&json!({ "groundTruth": corpus.ground_truth }));
                }
                None => print_json(&json!({
                    "groundTruth": corpus.ground_truth,
                    "workbook": corpus.workbook.to_document(),
                })),
            }
        }
        Command::Serve { port } => {
            let session = if dir.join("workbook.json").exists() {
                Some(Session::open(dir)?)
            } else {
                std::fs::create_dir_all(dir)
                    .with_context(|| format!("creating {}", dir.display()))?;
                None
            };
            let state = AppState::new(session, Some(dir.to_path_buf()));
            let runtime = tokio::runtime::Runtime::new()?;
            eprintln!("serving {} on http://127.0.0.1:{port}", dir.display());
            runtime
                .block_on(service::serve(state, port))
                .with_context(|| format!("port {port}"))?;
        }
    }
    Ok(ExitCode::SUCCESS)
}
