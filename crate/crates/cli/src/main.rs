use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use ipheur_core::corpus::{
    generate_zipf_corpus, load_corpus, Corpus, PoolLayout, SizeDistribution, ZipfCorpusParams,
};
use ipheur_core::probability::{
    global_model, observed_by_size, probability_range, read_tables_csv, read_thresholds_csv,
    subset_instruction_probs, subset_instruction_probs_for_size, subset_models, write_ranges_csv,
    write_tables_csv, write_thresholds_csv, ProbabilityTable, ScopeModel,
};
use ipheur_core::spacecount::{measure, write_measurements_csv, CountingMode, Grouping, MeasureOptions, NodeDepth};
use ipheur_core::subsets::{cluster_subsets, SubsetFamily, DEFAULT_CAP};
use ipheur_core::synth::{generate_program_corpus, synthesize, Schedule, SynthOptions, TestCaseSpec};
use ipheur_core::xval::{validate, write_validation_csv, ProbabilitySource, ValidateOptions};
use ipheur_core::Scope;
use rayon::prelude::*;

#[derive(Parser)]
#[command(name = "ipheur", version, about = "Instruction and solution probability heuristics for program search")]
struct Cli {
    /// Worker threads for per-subset and per-size work.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic Zipf-distributed corpus.
    Gen(GenArgs),
    /// Cluster a corpus into capped instruction subsets.
    Cluster(ClusterArgs),
    /// Global and per-subset instruction probability tables.
    Probs(ProbsArgs),
    /// Per-size solution probability thresholds.
    Thresholds(ThresholdsArgs),
    /// Exact admissible search-space sizes and reductions.
    Measure(MeasureArgs),
    /// Cross-validate thresholds on held-out units.
    Validate(ValidateArgs),
    /// Synthesize a program from input/output examples.
    Synth(SynthArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 10_000)]
    units: usize,
    #[arg(long, default_value_t = 200)]
    alphabet: usize,
    #[arg(long, default_value_t = 1.0)]
    exponent: f64,
    /// Unit sizes: `N` or inclusive `A..B`.
    #[arg(long, default_value = "1..40")]
    sizes: SizeDistribution,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Enable clustered mode with pools of this many instructions.
    #[arg(long)]
    pool_size: Option<usize>,
    #[arg(long, default_value_t = 3)]
    pool_core: usize,
    #[arg(long, default_value_t = 2)]
    pool_overlap: usize,
    /// Generate well-typed programs over the built-in stack DSL instead.
    #[arg(long)]
    dsl: bool,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct ClusterArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(long, default_value_t = DEFAULT_CAP)]
    cap: usize,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct ProbsArgs {
    #[arg(short, long)]
    input: PathBuf,
    /// Subset family; adds one table per subset.
    #[arg(long)]
    family: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_CAP)]
    cap: usize,
    /// Count per-subset occurrences only over units of this size.
    #[arg(long)]
    same_size: Option<usize>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct ThresholdsArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(long)]
    family: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_CAP)]
    cap: usize,
    #[arg(long, default_value = "1..40")]
    sizes: SizeRange,
    /// Also write possible/observed probability ranges per size.
    #[arg(long)]
    ranges: Option<PathBuf>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct MeasureArgs {
    /// Corpus to derive tables and thresholds from.
    #[arg(short, long, conflicts_with_all = ["table", "thresholds"])]
    input: Option<PathBuf>,
    #[arg(long, requires = "input")]
    family: Option<PathBuf>,
    /// Precomputed table CSV (as written by `probs`).
    #[arg(long, requires = "thresholds")]
    table: Option<PathBuf>,
    /// Precomputed thresholds CSV (as written by `thresholds`).
    #[arg(long, requires = "table")]
    thresholds: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_CAP)]
    cap: usize,
    #[arg(long, default_value = "1..20")]
    sizes: SizeRange,
    #[arg(long, default_value = "sequences")]
    mode: CountingMode,
    /// Count partial solutions of every size up to S.
    #[arg(long)]
    all_depths: bool,
    /// Enumerate equal-probability instructions as one class.
    #[arg(long)]
    collapse: bool,
    /// Skip the global scope when a family is given.
    #[arg(long)]
    subsets_only: bool,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0.001,0.01,0.05,0.25,0.5")]
    fractions: Vec<f64>,
    #[arg(long, default_value = "1..40")]
    sizes: SizeRange,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    /// Compute instruction probabilities from the training split only.
    #[arg(long)]
    train_only_probs: bool,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// Test-case spec JSON: `{"cases":[{"inputs":[...],"output":...}]}`.
    #[arg(long)]
    spec: PathBuf,
    /// Corpus over the DSL alphabet.
    #[arg(short, long)]
    input: PathBuf,
    #[arg(long)]
    family: PathBuf,
    #[arg(long, default_value_t = DEFAULT_CAP)]
    cap: usize,
    #[arg(long, default_value_t = 4)]
    max_size: usize,
    /// Decades the thresholds drop per widening round.
    #[arg(long, default_value_t = 2.0)]
    step: f64,
    #[arg(long, default_value_t = 64)]
    max_rounds: usize,
    #[arg(long)]
    no_prune: bool,
    #[arg(short, long)]
    output: PathBuf,
}

/// Inclusive size range `A..B`, or a single size.
#[derive(Debug, Clone, Copy)]
struct SizeRange {
    lo: usize,
    hi: usize,
}

impl SizeRange {
    fn sizes(&self) -> Vec<usize> {
        (self.lo..=self.hi).collect()
    }
}

impl std::str::FromStr for SizeRange {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let d: SizeDistribution = s.parse().map_err(|e| format!("{e}"))?;
        let (lo, hi) = d.bounds();
        Ok(SizeRange { lo, hi })
    }
}

/// Configuration problems found after argument parsing; exit code 2.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Writes through a temp file in the destination directory, then renames.
fn write_atomic(path: &Path, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating temp file in {}", dir.display()))?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        body(&mut w)?;
        w.flush()?;
    }
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn read_corpus(path: &Path) -> Result<Corpus> {
    load_corpus(path).with_context(|| format!("loading corpus {}", path.display()))
}

fn read_family(path: &Path, cap: usize) -> Result<SubsetFamily> {
    let f = File::open(path).with_context(|| format!("opening family {}", path.display()))?;
    SubsetFamily::read_jsonl(f, cap).with_context(|| format!("reading family {}", path.display()))
}

fn cmd_gen(a: &GenArgs) -> Result<()> {
    if a.units == 0 {
        return Err(usage("--units must be at least 1"));
    }
    let corpus = if a.dsl {
        if a.exponent.is_nan() || a.exponent <= 0.0 {
            return Err(usage("--exponent must be positive"));
        }
        generate_program_corpus(a.units, a.exponent, a.sizes, a.seed).corpus
    } else {
        let pools = a.pool_size.map(|pool_size| PoolLayout { pool_size, core: a.pool_core, overlap: a.pool_overlap });
        generate_zipf_corpus(&ZipfCorpusParams {
            num_units: a.units,
            alphabet_size: a.alphabet,
            zipf_exponent: a.exponent,
            sizes: a.sizes,
            seed: a.seed,
            pools,
        })
        .map_err(|e| usage(e.to_string()))?
    };
    write_atomic(&a.output, |w| Ok(corpus.write_jsonl(w)?))
}

fn cmd_cluster(a: &ClusterArgs) -> Result<()> {
    if a.cap == 0 {
        return Err(usage("--cap must be at least 1"));
    }
    let corpus = read_corpus(&a.input)?;
    let family = cluster_subsets(&corpus, a.cap);
    if !family.excluded_units.is_empty() {
        eprintln!(
            "excluded {} units with more than {} distinct instructions",
            family.excluded_units.len(),
            a.cap
        );
    }
    write_atomic(&a.output, |w| Ok(family.write_jsonl(w)?))
}

fn cmd_probs(a: &ProbsArgs) -> Result<()> {
    let corpus = read_corpus(&a.input)?;
    let mut tables = vec![ipheur_core::probability::global_instruction_probs(&corpus)];
    if let Some(path) = &a.family {
        let family = read_family(path, a.cap)?;
        let per_subset: Vec<Option<ProbabilityTable>> = family
            .subsets
            .par_iter()
            .map(|s| match a.same_size {
                Some(size) => subset_instruction_probs_for_size(&corpus, s, size),
                None => subset_instruction_probs(&corpus, s).map(Some),
            })
            .collect::<Result<_, _>>()?;
        tables.extend(per_subset.into_iter().flatten());
    }
    write_atomic(&a.output, |w| Ok(write_tables_csv(&tables, w)?))
}

fn models_for(corpus: &Corpus, family: Option<&SubsetFamily>, max_size: usize, with_global: bool) -> Result<Vec<ScopeModel>> {
    let mut models = Vec::new();
    if with_global {
        models.push(global_model(corpus, max_size));
    }
    if let Some(f) = family {
        models.extend(subset_models(corpus, f, max_size)?);
    }
    Ok(models)
}

fn cmd_thresholds(a: &ThresholdsArgs) -> Result<()> {
    let corpus = read_corpus(&a.input)?;
    let family = a.family.as_deref().map(|p| read_family(p, a.cap)).transpose()?;
    let mut models = models_for(&corpus, family.as_ref(), a.sizes.hi, true)?;
    for m in &mut models {
        m.thresholds.thresholds.retain(|s, _| *s >= a.sizes.lo);
        m.thresholds.support_counts.retain(|s, _| *s >= a.sizes.lo);
    }
    let tables: Vec<_> = models.iter().map(|m| m.thresholds.clone()).collect();
    write_atomic(&a.output, |w| Ok(write_thresholds_csv(&tables, w)?))?;

    if let Some(path) = &a.ranges {
        let all_ids: Vec<String> = corpus.units().iter().map(|u| u.id.clone()).collect();
        let mut rows = Vec::new();
        for m in &models {
            let ids = match (m.table.scope, family.as_ref()) {
                (Scope::PerSubset(id), Some(f)) => &f.get(id).expect("model built from family").covered_units,
                _ => &all_ids,
            };
            let observed = observed_by_size(&corpus, &m.table, ids, a.sizes.hi)?;
            for size in a.sizes.sizes() {
                let obs = observed.get(&size).map(Vec::as_slice);
                rows.push((m.table.scope, probability_range(&m.table, size, obs)));
            }
        }
        write_atomic(path, |w| Ok(write_ranges_csv(&rows, w)?))?;
    }
    Ok(())
}

fn cmd_measure(a: &MeasureArgs) -> Result<()> {
    if a.cap == 0 || a.sizes.lo == 0 {
        return Err(usage("--cap and sizes must be at least 1"));
    }
    let models: Vec<ScopeModel> = match (&a.input, &a.table, &a.thresholds) {
        (Some(input), None, None) => {
            let corpus = read_corpus(input)?;
            let family = a.family.as_deref().map(|p| read_family(p, a.cap)).transpose()?;
            let with_global = family.is_none() || !a.subsets_only;
            models_for(&corpus, family.as_ref(), a.sizes.hi, with_global)?
        }
        (None, Some(table), Some(thresholds)) => {
            let tables = read_tables_csv(File::open(table).with_context(|| format!("opening {}", table.display()))?)
                .with_context(|| format!("reading {}", table.display()))?;
            let ths = read_thresholds_csv(
                File::open(thresholds).with_context(|| format!("opening {}", thresholds.display()))?,
            )
            .with_context(|| format!("reading {}", thresholds.display()))?;
            let mut by_scope: BTreeMap<Scope, _> = ths.into_iter().map(|t| (t.scope, t)).collect();
            tables
                .into_iter()
                .filter_map(|table| by_scope.remove(&table.scope).map(|thresholds| ScopeModel { table, thresholds }))
                .collect()
        }
        _ => return Err(usage("measure needs either -i CORPUS or --table T.csv --thresholds H.csv")),
    };
    if models.is_empty() {
        bail!("no scope has both a table and thresholds");
    }
    let opts = MeasureOptions {
        is_cap: a.cap,
        mode: a.mode,
        depth: if a.all_depths { NodeDepth::AllDepths } else { NodeDepth::Leaves },
        grouping: if a.collapse { Grouping::Collapsed } else { Grouping::Distinct },
    };
    let outcome = measure(&models, &a.sizes.sizes(), &opts);
    if !outcome.missing.is_empty() {
        eprintln!("skipped {} (scope, size) pairs without a threshold", outcome.missing.len());
    }
    write_atomic(&a.output, |w| Ok(write_measurements_csv(&outcome.measurements, w)?))
}

fn cmd_validate(a: &ValidateArgs) -> Result<()> {
    if let Some(f) = a.fractions.iter().find(|f| !(**f > 0.0 && **f < 1.0)) {
        return Err(usage(format!("training fraction {f} is outside (0, 1)")));
    }
    let corpus = read_corpus(&a.input)?;
    let results = validate(
        &corpus,
        &ValidateOptions {
            fractions: a.fractions.clone(),
            max_size: a.sizes.hi,
            seed: a.seed,
            repeats: a.repeats,
            source: if a.train_only_probs { ProbabilitySource::TrainingOnly } else { ProbabilitySource::FullCorpus },
        },
    )?;
    let lo = a.sizes.lo;
    let results: Vec<_> = results
        .into_iter()
        .map(|mut r| {
            r.per_size_coverage.retain(|s, _| *s >= lo);
            r.sizes_without_threshold.retain(|s| *s >= lo);
            r
        })
        .collect();
    write_atomic(&a.output, |w| Ok(write_validation_csv(&results, w)?))
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    if a.max_size == 0 {
        return Err(usage("--max-size must be at least 1"));
    }
    let spec = TestCaseSpec::from_json(File::open(&a.spec).with_context(|| format!("opening {}", a.spec.display()))?)
        .with_context(|| format!("reading spec {}", a.spec.display()))?;
    let corpus = read_corpus(&a.input)?;
    let family = read_family(&a.family, a.cap)?;
    let models = subset_models(&corpus, &family, a.max_size)?;
    let schedule = if a.no_prune {
        Schedule::unpruned()
    } else {
        Schedule { step_decades: a.step, max_rounds: a.max_rounds, pruning: true }
    };
    let report = synthesize(&spec, &family, &models, &SynthOptions { max_size: a.max_size, schedule });
    write_atomic(&a.output, |w| {
        serde_json::to_writer_pretty(&mut *w, &report)?;
        writeln!(w)?;
        Ok(())
    })
}

fn run(cli: &Cli) -> Result<()> {
    if cli.threads == 0 {
        return Err(usage("--threads must be at least 1"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .map_err(|e| anyhow!("thread pool: {e}"))?;
    match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Cluster(a) => cmd_cluster(a),
        Command::Probs(a) => cmd_probs(a),
        Command::Thresholds(a) => cmd_thresholds(a),
        Command::Measure(a) => cmd_measure(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Synth(a) => cmd_synth(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}");
            eprintln!("run with --help for usage");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
