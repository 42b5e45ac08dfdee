//! Cross-validation of size thresholds on held-out program units.

use std::collections::{BTreeMap, HashSet};
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::corpus::{Corpus, ProgramUnit};
use crate::probability::{global_instruction_probs, solution_probability, ProbabilityTable};
use crate::scope::{admits, fmt_sig12};

#[derive(Debug, Error)]
pub enum ValidationError {
    #[error("training fraction {0} is outside (0, 1)")]
    Fraction(f64),
    #[error("corpus needs at least 2 units to split, got {0}")]
    TooSmall(usize),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Uniform random split by unit. The training side gets
/// `round(fraction * n)` units, clamped to `1..=n-1`.
pub fn split_corpus(corpus: &Corpus, fraction: f64, seed: u64) -> Result<(Corpus, Corpus), ValidationError> {
    let (train, test) = split_indices(corpus, fraction, seed)?;
    let pick = |idx: &[usize]| -> Corpus {
        Corpus::new(idx.iter().map(|&i| corpus.units()[i].clone()).collect()).expect("non-empty unique subset")
    };
    Ok((pick(&train), pick(&test)))
}

fn split_indices(corpus: &Corpus, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>), ValidationError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(ValidationError::Fraction(fraction));
    }
    let n = corpus.len();
    if n < 2 {
        return Err(ValidationError::TooSmall(n));
    }
    let n_train = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut train = idx[..n_train].to_vec();
    let mut test = idx[n_train..].to_vec();
    // keep corpus order within each side
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Where the global instruction probabilities come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbabilitySource {
    /// Whole corpus, computed before the split.
    #[default]
    FullCorpus,
    /// Training units only. Test units using an instruction never seen in
    /// training count as not covered.
    TrainingOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SizeCoverage {
    pub coverage_pct: f64,
    pub n_test_pus: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationResult {
    pub training_fraction: f64,
    pub repeat: usize,
    pub seed: u64,
    pub per_size_coverage: BTreeMap<usize, SizeCoverage>,
    /// Sizes with no training unit, hence no threshold.
    pub sizes_without_threshold: Vec<usize>,
    /// Sizes with a threshold but no test unit to check it against.
    pub sizes_without_test_units: Vec<usize>,
}

impl ValidationResult {
    /// Unweighted mean of per-size coverage.
    pub fn mean_coverage(&self) -> Option<f64> {
        if self.per_size_coverage.is_empty() {
            return None;
        }
        let sum: f64 = self.per_size_coverage.values().map(|c| c.coverage_pct).sum();
        Some(sum / self.per_size_coverage.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidateOptions {
    pub fractions: Vec<f64>,
    pub max_size: usize,
    pub seed: u64,
    /// Independent splits per fraction; repeat `r` uses seed `seed + r`.
    pub repeats: usize,
    pub source: ProbabilitySource,
}

fn log_ps(table: &ProbabilityTable, unit: &ProgramUnit) -> Option<f64> {
    solution_probability(table, &unit.instructions).ok()
}

/// Thresholds from `train`, coverage measured on `test`.
pub fn coverage(
    table: &ProbabilityTable,
    train: &[&ProgramUnit],
    test: &[&ProgramUnit],
    max_size: usize,
) -> (BTreeMap<usize, SizeCoverage>, Vec<usize>, Vec<usize>) {
    let mut thresholds: BTreeMap<usize, f64> = BTreeMap::new();
    for u in train.iter().filter(|u| u.size() <= max_size) {
        let ps = log_ps(table, u).expect("training units are in the table's scope");
        thresholds.entry(u.size()).and_modify(|t| *t = t.min(ps)).or_insert(ps);
    }
    let mut hits: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for u in test.iter().filter(|u| u.size() <= max_size) {
        let entry = hits.entry(u.size()).or_insert((0, 0));
        entry.1 += 1;
        if let (Some(thr), Some(ps)) = (thresholds.get(&u.size()), log_ps(table, u)) {
            if admits(ps, *thr) {
                entry.0 += 1;
            }
        }
    }
    let mut per_size = BTreeMap::new();
    let mut without_threshold = Vec::new();
    let mut without_test = Vec::new();
    for size in 1..=max_size {
        let (hit, n) = hits.get(&size).copied().unwrap_or((0, 0));
        match (thresholds.contains_key(&size), n) {
            (false, 0) => {}
            (false, _) => without_threshold.push(size),
            (true, 0) => without_test.push(size),
            (true, n) => {
                per_size.insert(size, SizeCoverage { coverage_pct: 100.0 * hit as f64 / n as f64, n_test_pus: n });
            }
        }
    }
    (per_size, without_threshold, without_test)
}

/// Runs the training-fraction sweep. Results are ordered by fraction, then
/// repeat, independent of the rayon pool size.
pub fn validate(corpus: &Corpus, opts: &ValidateOptions) -> Result<Vec<ValidationResult>, ValidationError> {
    for &f in &opts.fractions {
        if !(f > 0.0 && f < 1.0) {
            return Err(ValidationError::Fraction(f));
        }
    }
    if corpus.len() < 2 {
        return Err(ValidationError::TooSmall(corpus.len()));
    }
    let full_table = global_instruction_probs(corpus);
    let jobs: Vec<(f64, usize)> = opts
        .fractions
        .iter()
        .flat_map(|&f| (0..opts.repeats.max(1)).map(move |r| (f, r)))
        .collect();
    jobs.par_iter()
        .map(|&(fraction, repeat)| {
            let seed = opts.seed.wrapping_add(repeat as u64);
            let (train_idx, test_idx) = split_indices(corpus, fraction, seed)?;
            let train: Vec<&ProgramUnit> = train_idx.iter().map(|&i| &corpus.units()[i]).collect();
            let test: Vec<&ProgramUnit> = test_idx.iter().map(|&i| &corpus.units()[i]).collect();
            let train_table;
            let table = match opts.source {
                ProbabilitySource::FullCorpus => &full_table,
                ProbabilitySource::TrainingOnly => {
                    let sub = Corpus::new(train.iter().map(|u| (*u).clone()).collect()).expect("non-empty");
                    train_table = global_instruction_probs(&sub);
                    &train_table
                }
            };
            let (per_size_coverage, sizes_without_threshold, sizes_without_test_units) =
                coverage(table, &train, &test, opts.max_size);
            Ok(ValidationResult {
                training_fraction: fraction,
                repeat,
                seed,
                per_size_coverage,
                sizes_without_threshold,
                sizes_without_test_units,
            })
        })
        .collect()
}

/// Self-validation: thresholds and coverage on the same units.
pub fn self_coverage(corpus: &Corpus, table: &ProbabilityTable, max_size: usize) -> BTreeMap<usize, SizeCoverage> {
    let units: Vec<&ProgramUnit> = corpus.units().iter().collect();
    coverage(table, &units, &units, max_size).0
}

/// CSV: `fraction,size,coverage_pct,n_test_pus,repeat`. Sizes without a
/// threshold carry an empty coverage cell.
pub fn write_validation_csv<W: Write>(results: &[ValidationResult], w: W) -> Result<(), ValidationError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["fraction", "size", "coverage_pct", "n_test_pus", "repeat"])?;
    for r in results {
        let no_threshold: HashSet<usize> = r.sizes_without_threshold.iter().copied().collect();
        let mut sizes: Vec<usize> = r.per_size_coverage.keys().copied().chain(no_threshold.iter().copied()).collect();
        sizes.sort_unstable();
        for size in sizes {
            let (pct, n) = match r.per_size_coverage.get(&size) {
                Some(c) => (fmt_sig12(c.coverage_pct), c.n_test_pus),
                None => (String::new(), 0),
            };
            out.write_record([
                fmt_sig12(r.training_fraction),
                size.to_string(),
                pct,
                n.to_string(),
                r.repeat.to_string(),
            ])?;
        }
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}
