//! Command-line front end.
//!
//! Exit codes: 0 success, 1 unexpected failure, 2 missing or unreadable
//! file, 3 invalid configuration or arguments, 4 invalid data.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::analysis::{
    kway_match_probs, mms_prob, pattern_counts, posterior_n, set_match_prob, threshold_links,
    FilePattern, MatchQuery, MmsTable, Multiplicity, NSummary,
};
use crate::blocking::build_blocks;
use crate::error::{Error, Result};
use crate::evaluation::{
    confusion_matrix, link_counts, posterior_link_counts, relative_errors, truth_pattern_counts,
    GroundTruth, LinkCounts,
};
use crate::io::{load_files, load_samples, save_samples, write_files, LoadOptions};
use crate::model::{
    FieldSchema, FileLayout, Hyperparameters, Mode, RecordId, RecordStore, DEFAULT_A, DEFAULT_B,
    DEFAULT_MU,
};
use crate::partition::Partition;
use crate::sampler::{
    pooled_partitions, run_chains, AcceptanceRule, AcceptanceStats, ChainConfig, PosteriorSamples,
};
use crate::simulate::{distortion_sweep, generate, SweepSpec, ThetaSource, TruthSpec};

#[derive(Debug, Parser)]
#[command(
    name = "bayeslink",
    version,
    about = "Bayesian record linkage and de-duplication"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Link files that contain no internal duplicates.
    Link(RunArgs),
    /// Link and de-duplicate, allowing duplicates within a file.
    Dedup(RunArgs),
    /// Generate synthetic files, or run a distortion sweep.
    Simulate(SimulateArgs),
    /// Score stored samples against a truth column.
    Evaluate(EvaluateArgs),
    /// Summarize stored samples.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Args, Default)]
pub struct ChainArgs {
    /// Key-value TOML file; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Blocking field (repeatable). Blocked fields carry no distortion.
    #[arg(long = "block")]
    pub block: Vec<String>,
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long)]
    pub b: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
    /// Gibbs sweeps.
    #[arg(long)]
    pub sg: Option<usize>,
    /// Metropolis rounds per sweep.
    #[arg(long)]
    pub sm: Option<usize>,
    /// Split-merge proposals per round.
    #[arg(long)]
    pub st: Option<usize>,
    #[arg(long)]
    pub burnin: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// smere (no duplicates within files) or smered.
    #[arg(long)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub chains: Option<usize>,
    /// Use the corrected split-merge acceptance rule.
    #[arg(long)]
    pub corrected_mh: bool,
    /// Log progress every this many sweeps.
    #[arg(long)]
    pub progress: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Input file, one per list (repeatable).
    #[arg(long = "input")]
    pub input: Vec<PathBuf>,
    /// Column holding true identities; enables evaluation output.
    #[arg(long)]
    pub truth_column: Option<String>,
    /// Field delimiter of the inputs.
    #[arg(long)]
    pub delimiter: Option<char>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub chain: ChainArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Population size.
    #[arg(long, default_value_t = 3000)]
    pub individuals: usize,
    /// Records per file, sampled without replacement from the population.
    #[arg(long, value_delimiter = ',', default_value = "2000,2000,2000")]
    pub file_sizes: Vec<usize>,
    /// Number of levels of each field.
    #[arg(long, value_delimiter = ',', default_value = "2,2000,51,80")]
    pub levels: Vec<usize>,
    /// Symmetric Dirichlet concentration for the true field distributions.
    #[arg(long, default_value_t = 1.0)]
    pub theta_alpha: f64,
    #[arg(long, default_value_t = 0.01)]
    pub distortion: f64,
    /// Run a distortion sweep over these levels instead of writing files.
    #[arg(long, value_delimiter = ',')]
    pub sweep: Option<Vec<f64>>,
    #[command(flatten)]
    pub chain: ChainArgs,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    /// Sample file (repeatable); chains are pooled.
    #[arg(long = "samples", required = true)]
    pub samples: Vec<PathBuf>,
    /// The input files the samples were drawn from.
    #[arg(long = "input", required = true)]
    pub input: Vec<PathBuf>,
    #[arg(long)]
    pub truth_column: String,
    #[arg(long)]
    pub delimiter: Option<char>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Sample file (repeatable); chains are pooled.
    #[arg(long = "samples", required = true)]
    pub samples: Vec<PathBuf>,
    /// Record set to query, as comma-separated `file:row` ids (repeatable).
    #[arg(long = "query")]
    pub query: Vec<String>,
    /// Record whose most probable matching set is reported (repeatable).
    #[arg(long = "record")]
    pub record: Vec<String>,
    /// Also list record pairs with match probability at least this.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct FileConfig {
    input: Option<Vec<PathBuf>>,
    block: Option<Vec<String>>,
    a: Option<f64>,
    b: Option<f64>,
    mu: Option<f64>,
    sg: Option<usize>,
    sm: Option<usize>,
    st: Option<usize>,
    burnin: Option<usize>,
    thin: Option<usize>,
    seed: Option<u64>,
    mode: Option<String>,
    chains: Option<usize>,
    corrected_mh: Option<bool>,
    truth_column: Option<String>,
    delimiter: Option<char>,
    out: Option<PathBuf>,
    progress: Option<usize>,
}

fn read_config(path: Option<&Path>) -> Result<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Fully resolved settings of a run, echoed into the summary.
#[derive(Debug, Clone)]
struct Settings {
    inputs: Vec<PathBuf>,
    block: Vec<String>,
    a: f64,
    b: f64,
    mu: f64,
    chains: usize,
    truth_column: Option<String>,
    delimiter: u8,
    out: PathBuf,
    config: ChainConfig,
}

fn delimiter_byte(c: char) -> Result<u8> {
    if c.is_ascii() {
        Ok(c as u8)
    } else {
        Err(Error::Config(format!("delimiter {c:?} is not ASCII")))
    }
}

fn resolve(
    chain: &ChainArgs,
    default_mode: Mode,
    inputs: &[PathBuf],
    truth_column: Option<&String>,
    delimiter: Option<char>,
    out: Option<&PathBuf>,
) -> Result<Settings> {
    let file = read_config(chain.config.as_deref())?;
    let mode = match (chain.mode, &file.mode) {
        (Some(m), _) => m,
        (None, Some(s)) => s.parse()?,
        (None, None) => default_mode,
    };
    let defaults = ChainConfig::defaults(mode);
    let corrected = chain.corrected_mh || file.corrected_mh.unwrap_or(false);
    let config = ChainConfig {
        gibbs_sweeps: chain.sg.or(file.sg).unwrap_or(defaults.gibbs_sweeps),
        metropolis_rounds: chain.sm.or(file.sm).unwrap_or(defaults.metropolis_rounds),
        proposals_per_round: chain.st.or(file.st).unwrap_or(defaults.proposals_per_round),
        burn_in: chain.burnin.or(file.burnin).unwrap_or(defaults.burn_in),
        thin: chain.thin.or(file.thin).unwrap_or(defaults.thin),
        mode,
        rule: if corrected {
            AcceptanceRule::Corrected
        } else {
            AcceptanceRule::Literal
        },
        seed: chain.seed.or(file.seed).unwrap_or(defaults.seed),
        record_theta: false,
        progress_every: chain.progress.or(file.progress).unwrap_or(0),
    };
    config.validate()?;
    let inputs = if inputs.is_empty() {
        file.input.unwrap_or_default()
    } else {
        inputs.to_vec()
    };
    Ok(Settings {
        inputs,
        block: if chain.block.is_empty() {
            file.block.unwrap_or_default()
        } else {
            chain.block.clone()
        },
        a: chain.a.or(file.a).unwrap_or(DEFAULT_A),
        b: chain.b.or(file.b).unwrap_or(DEFAULT_B),
        mu: chain.mu.or(file.mu).unwrap_or(DEFAULT_MU),
        chains: chain.chains.or(file.chains).unwrap_or(1),
        truth_column: truth_column.cloned().or(file.truth_column),
        delimiter: delimiter_byte(delimiter.or(file.delimiter).unwrap_or(','))?,
        out: out
            .cloned()
            .or(file.out)
            .unwrap_or_else(|| PathBuf::from("bayeslink-out")),
        config,
    })
}

fn field_indices(schema: &FieldSchema, names: &[String]) -> Result<Vec<usize>> {
    names
        .iter()
        .map(|n| {
            schema
                .field_index(n)
                .ok_or_else(|| Error::Config(format!("unknown blocking field {n:?}")))
        })
        .collect()
}

fn hyperparameters(
    schema: &FieldSchema,
    settings: &Settings,
    blocked: &[usize],
) -> Result<Hyperparameters> {
    Hyperparameters::uniform(schema, settings.a, settings.b, settings.mu)?.with_blocked(blocked)
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn settings_lines(s: &Settings) -> String {
    let c = &s.config;
    let mut out = String::new();
    let inputs: Vec<String> = s.inputs.iter().map(|p| p.display().to_string()).collect();
    let _ = writeln!(out, "input = {}", inputs.join(" "));
    let _ = writeln!(out, "mode = {}", c.mode);
    let _ = writeln!(out, "acceptance = {}", c.rule);
    let _ = writeln!(out, "block = {}", s.block.join(" "));
    let _ = writeln!(out, "a = {}", s.a);
    let _ = writeln!(out, "b = {}", s.b);
    let _ = writeln!(out, "mu = {}", s.mu);
    let _ = writeln!(out, "sg = {}", c.gibbs_sweeps);
    let _ = writeln!(out, "sm = {}", c.metropolis_rounds);
    let _ = writeln!(out, "st = {}", c.proposals_per_round);
    let _ = writeln!(out, "burnin = {}", c.burn_in);
    let _ = writeln!(out, "thin = {}", c.thin);
    let _ = writeln!(out, "seed = {}", c.seed);
    let _ = writeln!(out, "chains = {}", s.chains);
    let _ = writeln!(
        out,
        "truth-column = {}",
        s.truth_column.as_deref().unwrap_or("")
    );
    let _ = writeln!(out, "delimiter = {:?}", s.delimiter as char);
    out
}

fn stats_lines(prefix: &str, n: &NSummary, stats: &AcceptanceStats) -> String {
    format!(
        "{prefix}samples = {}\n{prefix}mean-n = {:.4}\n{prefix}sd-n = {:.4}\n{prefix}acceptance = {:.6}\n\
         {prefix}split-acceptance = {:.6}\n{prefix}merge-acceptance = {:.6}\n{prefix}invalid = {}\n{prefix}exhausted = {}\n",
        n.samples,
        n.mean,
        n.sd,
        stats.acceptance_rate(),
        stats.split_rate(),
        stats.merge_rate(),
        stats.invalid,
        stats.exhausted
    )
}

fn record_name(layout: &FileLayout, r: usize) -> String {
    layout.record_id(r).to_string()
}

fn estimate_tsv(p: &Partition, layout: &FileLayout) -> String {
    let mut out = String::from("record\tcluster\n");
    for r in 0..p.num_records() {
        let _ = writeln!(out, "{}\t{}", record_name(layout, r), p.cluster_of(r));
    }
    out
}

fn n_tsv(n: &NSummary) -> String {
    let mut out = String::from("n\tcount\n");
    for (v, c) in &n.histogram {
        let _ = writeln!(out, "{v}\t{c}");
    }
    out
}

fn patterns_tsv(means: &BTreeMap<FilePattern, f64>, num_files: usize) -> String {
    let mut out = String::from("pattern\tmean_count\n");
    for p in FilePattern::all(num_files) {
        let _ = writeln!(out, "{p}\t{:.4}", means.get(&p).copied().unwrap_or(0.0));
    }
    out
}

fn link_lines(prefix: &str, c: &LinkCounts) -> String {
    format!(
        "{prefix}true-links = {:.4}\n{prefix}false-links = {:.4}\n{prefix}missing-links = {:.4}\n\
         {prefix}fnr = {:.6}\n{prefix}fpr = {:.6}\n{prefix}precision-complement = {:.6}\n",
        c.true_links, c.false_links, c.missing_links, c.fnr, c.fpr, c.precision_complement
    )
}

const HEATMAP_SCRIPT: &str = r#"#!/usr/bin/env python3
"""Plot heatmap.tsv (rows: estimated pattern, columns: true pattern)."""
import sys

import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else "heatmap.tsv"
with open(path) as f:
    header = f.readline().rstrip("\n").split("\t")[1:]
    rows, values = [], []
    for line in f:
        cells = line.rstrip("\n").split("\t")
        rows.append(cells[0])
        values.append([float(v) for v in cells[1:]])

fig, ax = plt.subplots()
image = ax.imshow(values, cmap="viridis", vmin=0.0, vmax=1.0)
ax.set_xticks(range(len(header)), header, rotation=90)
ax.set_yticks(range(len(rows)), rows)
ax.set_xlabel("true pattern")
ax.set_ylabel("estimated pattern")
fig.colorbar(image)
fig.tight_layout()
fig.savefig(path.rsplit(".", 1)[0] + ".png", dpi=150)
"#;

/// Evaluation files for pooled samples against a truth.
fn write_evaluation(
    out: &Path,
    partitions: &[Partition],
    truth: &GroundTruth,
    layout: &FileLayout,
) -> Result<String> {
    let posterior = posterior_link_counts(partitions, truth)?;
    let table = MmsTable::build(partitions)?;
    let point = link_counts(&table.shared_partition(), truth)?;
    let mut text = link_lines("posterior-", &posterior);
    text += &link_lines("estimate-", &point);
    let _ = writeln!(text, "truth-links = {}", truth.num_links());
    let _ = writeln!(text, "truth-n = {}", truth.num_individuals());

    let confusion = confusion_matrix(partitions, truth, layout)?;
    let mut tsv = String::from("estimated\ttrue\tmean_records\n");
    for (&(e, t), v) in &confusion.cells {
        let _ = writeln!(tsv, "{e}\t{t}\t{v:.4}");
    }
    write_text(&out.join("confusion.tsv"), &tsv)?;

    let (patterns, rows) = confusion.row_normalized().dense();
    let mut heat = String::from("estimated");
    for p in &patterns {
        let _ = write!(heat, "\t{p}");
    }
    heat.push('\n');
    for (p, row) in patterns.iter().zip(&rows) {
        let _ = write!(heat, "{p}");
        for v in row {
            let _ = write!(heat, "\t{v:.6}");
        }
        heat.push('\n');
    }
    write_text(&out.join("heatmap.tsv"), &heat)?;
    write_text(&out.join("plot_heatmap.py"), HEATMAP_SCRIPT)?;

    let estimates = pattern_counts(partitions, layout, Multiplicity::AtLeastOne)?.means();
    let truth_counts = truth_pattern_counts(truth, layout, Multiplicity::AtLeastOne)?;
    let mut rel = String::from("pattern\testimate\ttruth\trelative_error_pct\n");
    for (p, e) in relative_errors(&estimates, &truth_counts) {
        let est = estimates.get(&p).copied().unwrap_or(0.0);
        let tr = truth_counts.get(&p).copied().unwrap_or(0);
        let e = e.map_or("undefined".to_string(), |v| format!("{v:.4}"));
        let _ = writeln!(rel, "{p}\t{est:.4}\t{tr}\t{e}");
    }
    write_text(&out.join("relative_errors.tsv"), &rel)?;
    write_text(&out.join("evaluation.txt"), &text)?;
    Ok(text)
}

fn run_linkage(args: &RunArgs, default_mode: Mode) -> Result<()> {
    let settings = resolve(
        &args.chain,
        default_mode,
        &args.input,
        args.truth_column.as_ref(),
        args.delimiter,
        args.out.as_ref(),
    )?;
    if settings.inputs.is_empty() {
        return Err(Error::Config("no --input files".into()));
    }
    let loaded = load_files(
        &settings.inputs,
        &LoadOptions {
            delimiter: settings.delimiter,
            truth_column: settings.truth_column.clone(),
        },
    )?;
    let data = &loaded.data;
    let blocked = field_indices(data.schema(), &settings.block)?;
    let hyper = hyperparameters(data.schema(), &settings, &blocked)?;
    let blocks = build_blocks(data, &blocked)?;
    let chains = run_chains(data, &hyper, &blocks, &settings.config, settings.chains)?;

    create_dir(&settings.out)?;
    for (i, c) in chains.iter().enumerate() {
        save_samples(c, settings.out.join(format!("samples-{i}.bin")))?;
    }
    let summary = summarize(&settings.out, &settings, &chains, data)?;
    let mut text = summary;
    if let Some(truth) = &loaded.truth {
        let pooled = pooled_partitions(&chains);
        text += &write_evaluation(&settings.out, &pooled, truth, data.layout())?;
    }
    write_text(&settings.out.join("summary.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn summarize(
    out: &Path,
    settings: &Settings,
    chains: &[PosteriorSamples],
    data: &RecordStore,
) -> Result<String> {
    let mut text = settings_lines(settings);
    let _ = writeln!(text, "records = {}", data.num_records());
    let _ = writeln!(text, "files = {}", data.num_files());
    let mut total = AcceptanceStats::default();
    for (i, c) in chains.iter().enumerate() {
        let n = posterior_n(&c.partitions)?;
        text += &stats_lines(&format!("chain-{i}-"), &n, &c.stats);
        total.merge(&c.stats);
    }
    let pooled = pooled_partitions(chains);
    let n = posterior_n(&pooled)?;
    text += &stats_lines("pooled-", &n, &total);
    write_text(&out.join("posterior_n.tsv"), &n_tsv(&n))?;
    let layout = data.layout();
    let estimate = MmsTable::build(&pooled)?.shared_partition();
    let _ = writeln!(text, "estimate-n = {}", estimate.num_clusters());
    write_text(&out.join("estimate.tsv"), &estimate_tsv(&estimate, layout))?;
    if layout.num_files() <= 16 {
        let counts = pattern_counts(&pooled, layout, Multiplicity::AtLeastOne)?;
        write_text(
            &out.join("patterns.tsv"),
            &patterns_tsv(&counts.means(), layout.num_files()),
        )?;
    }
    Ok(text)
}

fn load_pooled(paths: &[PathBuf]) -> Result<(Vec<PosteriorSamples>, FileLayout)> {
    let chains: Vec<PosteriorSamples> = paths.iter().map(load_samples).collect::<Result<_>>()?;
    let sizes = chains[0].file_sizes.clone();
    if chains.iter().any(|c| c.file_sizes != sizes) {
        return Err(Error::Config(
            "sample files describe different record layouts".into(),
        ));
    }
    if chains.iter().any(|c| c.is_empty()) {
        return Err(Error::Config("a sample file holds no partitions".into()));
    }
    Ok((chains, FileLayout::new(&sizes)))
}

fn run_evaluate(args: &EvaluateArgs) -> Result<()> {
    let (chains, layout) = load_pooled(&args.samples)?;
    let loaded = load_files(
        &args.input,
        &LoadOptions {
            delimiter: delimiter_byte(args.delimiter.unwrap_or(','))?,
            truth_column: Some(args.truth_column.clone()),
        },
    )?;
    if loaded.data.layout().file_sizes() != layout.file_sizes() {
        return Err(Error::Config(
            "inputs do not match the samples' record layout".into(),
        ));
    }
    let truth = loaded.truth.expect("truth column requested");
    create_dir(&args.out)?;
    let text = write_evaluation(&args.out, &pooled_partitions(&chains), &truth, &layout)?;
    print!("{text}");
    Ok(())
}

fn parse_record(s: &str, layout: &FileLayout) -> Result<usize> {
    let id: RecordId = s
        .trim()
        .parse()
        .map_err(|_| Error::Query(format!("bad record id {s:?}")))?;
    layout
        .index_of(id)
        .ok_or_else(|| Error::Query(format!("record {s} outside the data")))
}

fn run_report(args: &ReportArgs) -> Result<()> {
    let (chains, layout) = load_pooled(&args.samples)?;
    let pooled = pooled_partitions(&chains);
    create_dir(&args.out)?;
    let mut text = String::new();
    let _ = writeln!(text, "mode = {}", chains[0].config.mode);
    let _ = writeln!(text, "acceptance = {}", chains[0].config.rule);
    let _ = writeln!(text, "chains = {}", chains.len());
    let n = posterior_n(&pooled)?;
    let _ = writeln!(text, "samples = {}", n.samples);
    let _ = writeln!(text, "mean-n = {:.4}", n.mean);
    let _ = writeln!(text, "sd-n = {:.4}", n.sd);
    write_text(&args.out.join("posterior_n.tsv"), &n_tsv(&n))?;

    let table = MmsTable::build(&pooled)?;
    let estimate = table.shared_partition();
    let _ = writeln!(text, "estimate-n = {}", estimate.num_clusters());
    write_text(
        &args.out.join("estimate.tsv"),
        &estimate_tsv(&estimate, &layout),
    )?;

    if layout.num_files() <= 16 {
        let counts = pattern_counts(&pooled, &layout, Multiplicity::AtLeastOne)?;
        write_text(
            &args.out.join("patterns.tsv"),
            &patterns_tsv(&counts.means(), layout.num_files()),
        )?;
        let exact = pattern_counts(&pooled, &layout, Multiplicity::ExactlyOne)?;
        let mut tsv = patterns_tsv(&exact.means(), layout.num_files());
        let _ = writeln!(
            tsv,
            "other\t{:.4}",
            exact.unmatched as f64 / exact.samples as f64
        );
        write_text(&args.out.join("patterns_exact.tsv"), &tsv)?;

        let kway = kway_match_probs(&pooled, &layout)?;
        let mut tsv = String::from("record\tpattern\tprobability\n");
        for (r, dist) in kway.iter().enumerate() {
            for (p, prob) in dist.probabilities() {
                let _ = writeln!(tsv, "{}\t{p}\t{prob:.6}", record_name(&layout, r));
            }
        }
        write_text(&args.out.join("kway.tsv"), &tsv)?;
    }

    for q in &args.query {
        let records: Vec<usize> = q
            .split(',')
            .map(|s| parse_record(s, &layout))
            .collect::<Result<_>>()?;
        let mms = mms_prob(&pooled, &records)?;
        let set = if records.len() >= 2 {
            format!(
                "{:.6}",
                set_match_prob(&pooled, &MatchQuery::new(records, layout.num_records())?)?
            )
        } else {
            "1".into()
        };
        let _ = writeln!(text, "query {q}: match = {set}, mms = {mms:.6}");
    }
    for r in &args.record {
        let index = parse_record(r, &layout)?;
        let report = table.report(index)?;
        let members: Vec<String> = report
            .best_set
            .iter()
            .map(|&m| record_name(&layout, m as usize))
            .collect();
        let _ = writeln!(
            text,
            "record {r}: most probable set {{{}}} with probability {:.6}",
            members.join(","),
            report.probability
        );
        for (set, prob) in table.candidates(index) {
            let members: Vec<String> = set
                .iter()
                .map(|&m| record_name(&layout, m as usize))
                .collect();
            let _ = writeln!(text, "  candidate {{{}}} {prob:.6}", members.join(","));
        }
    }
    if let Some(v) = args.threshold {
        let mut tsv =
            String::from("# threshold links are not transitive\nrecord_a\trecord_b\tprobability\n");
        for (a, b, p) in threshold_links(&pooled, v)? {
            let _ = writeln!(
                tsv,
                "{}\t{}\t{p:.6}",
                record_name(&layout, a as usize),
                record_name(&layout, b as usize)
            );
        }
        write_text(&args.out.join("threshold_links.tsv"), &tsv)?;
    }
    write_text(&args.out.join("report.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn run_simulate(args: &SimulateArgs) -> Result<()> {
    let settings = resolve(&args.chain, Mode::Link, &[], None, None, Some(&args.out))?;
    let names: Vec<String> = (0..args.levels.len()).map(|l| format!("f{l}")).collect();
    let labels: Vec<Vec<String>> = args
        .levels
        .iter()
        .map(|&m| (0..m).map(|v| format!("v{v}")).collect())
        .collect();
    let schema = FieldSchema::new(names, labels)?;
    let blocked = field_indices(&schema, &settings.block)?;
    let hyper = hyperparameters(&schema, &settings, &blocked)?;
    let truth = TruthSpec::FixedSizes {
        individuals: args.individuals,
        file_sizes: args.file_sizes.clone(),
    };
    let theta = ThetaSource::symmetric(&schema, args.theta_alpha);
    create_dir(&args.out)?;

    if let Some(levels) = &args.sweep {
        let spec = SweepSpec {
            truth,
            schema,
            theta,
            hyper,
            block_keys: blocked,
            seed: settings.config.seed,
        };
        let rows = distortion_sweep(levels, &spec, &settings.config)?;
        let mut tsv = String::from(
            "distortion\trecords\ttrue_n\tmean_n\tsd_n\tfnr\tfpr\testimate_fnr\testimate_fpr\tacceptance\n",
        );
        for r in &rows {
            let _ = writeln!(
                tsv,
                "{}\t{}\t{}\t{:.4}\t{:.4}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
                r.level,
                r.records,
                r.true_individuals,
                r.n.mean,
                r.n.sd,
                r.posterior.fnr,
                r.posterior.fpr,
                r.point_estimate.fnr,
                r.point_estimate.fpr,
                r.stats.acceptance_rate()
            );
        }
        let mut hist = String::from("distortion\tn\tcount\n");
        for r in &rows {
            for (v, c) in &r.n.histogram {
                let _ = writeln!(hist, "{}\t{v}\t{c}", r.level);
            }
        }
        write_text(&args.out.join("sweep.tsv"), &tsv)?;
        write_text(&args.out.join("sweep_n.tsv"), &hist)?;
        let text = settings_lines(&settings) + &tsv;
        write_text(&args.out.join("summary.txt"), &text)?;
        print!("{tsv}");
        return Ok(());
    }

    let sim = generate(
        &truth,
        &schema,
        &theta,
        args.distortion,
        &hyper,
        settings.config.seed,
    )?;
    let paths: Vec<PathBuf> = (0..sim.data.num_files())
        .map(|f| args.out.join(format!("file-{f}.csv")))
        .collect();
    write_files(&sim.data, Some(("id", &sim.truth)), &paths, b',')?;
    let mut text = String::new();
    let _ = writeln!(text, "individuals = {}", args.individuals);
    let _ = writeln!(
        text,
        "observed-individuals = {}",
        sim.truth.num_individuals()
    );
    let _ = writeln!(text, "records = {}", sim.data.num_records());
    let _ = writeln!(text, "distortion = {}", args.distortion);
    let _ = writeln!(text, "seed = {}", settings.config.seed);
    let _ = writeln!(text, "truth-links = {}", sim.truth.num_links());
    for p in &paths {
        let _ = writeln!(text, "wrote {}", p.display());
    }
    write_text(&args.out.join("summary.txt"), &text)?;
    print!("{text}");
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Link(args) => run_linkage(args, Mode::Link),
        Command::Dedup(args) => run_linkage(args, Mode::Dedup),
        Command::Simulate(args) => run_simulate(args),
        Command::Evaluate(args) => run_evaluate(args),
        Command::Report(args) => run_report(args),
    }
}

pub fn exit_code(error: &Error) -> i32 {
    match error {
        Error::Io { .. } => 2,
        Error::Config(_) | Error::Hyperparameters(_) | Error::Query(_) | Error::Simulation(_) => 3,
        Error::Input { .. }
        | Error::Schema(_)
        | Error::Dimension(_)
        | Error::Inconsistent(_)
        | Error::SampleStore { .. } => 4,
    }
}

/// Parse arguments, run, and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
