//! Exact size of the search space that survives a solution-probability
//! threshold.
//!
//! The counter walks multisets over instructions in descending probability
//! order, choosing how many copies of each instruction to take. A branch is
//! cut as soon as even filling every remaining slot with the best remaining
//! instruction cannot reach the threshold, so no admissible multiset is ever
//! lost and the result is exact.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::probability::{ProbabilityTable, ScopeModel};
use crate::scope::{admits, fmt_sig12, Scope, LOG_SLACK};

#[derive(Debug, Error)]
pub enum CountError {
    #[error("brute force limited to 8 instructions and size 8 (got {instructions} instructions, size {size})")]
    TooLarge { instructions: usize, size: usize },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CountingMode {
    /// Ordered instruction sequences of length S.
    Sequences,
    /// Unordered instruction multisets of cardinality S.
    Multisets,
}

impl fmt::Display for CountingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CountingMode::Sequences => "sequences",
            CountingMode::Multisets => "multisets",
        })
    }
}

impl FromStr for CountingMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sequences" => Ok(CountingMode::Sequences),
            "multisets" => Ok(CountingMode::Multisets),
            _ => Err(format!("unknown counting mode {s:?} (expected sequences|multisets)")),
        }
    }
}

/// Whether instructions with identical probability are enumerated one by one
/// or as a single class. Both give identical counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Grouping {
    #[default]
    Distinct,
    Collapsed,
}

/// Which nodes of the search tree to count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NodeDepth {
    /// Complete solutions of exactly size S.
    #[default]
    Leaves,
    /// Partial solutions of every size 1..=S, each against the size-S threshold.
    AllDepths,
}

/// Pascal's triangle in big integers, rows `0..=n`.
struct Binomials(Vec<Vec<BigUint>>);

impl Binomials {
    fn new(n: usize) -> Self {
        let mut rows: Vec<Vec<BigUint>> = Vec::with_capacity(n + 1);
        for i in 0..=n {
            let mut row = vec![BigUint::one(); i + 1];
            for j in 1..i {
                row[j] = &rows[i - 1][j - 1] + &rows[i - 1][j];
            }
            rows.push(row);
        }
        Binomials(rows)
    }

    fn get(&self, n: usize, k: usize) -> &BigUint {
        &self.0[n][k]
    }
}

/// Probability class: `width` instructions sharing one log probability.
#[derive(Debug, Clone, Copy)]
struct Class {
    log_prob: f64,
    width: usize,
}

fn classes(table: &ProbabilityTable, grouping: Grouping) -> Vec<Class> {
    let ranked = table.ranked();
    let mut out: Vec<(u64, Class)> = Vec::new();
    for (ins, lp) in ranked {
        let count = table.occurrence_counts[ins];
        match out.last_mut() {
            Some((c, class)) if grouping == Grouping::Collapsed && *c == count => class.width += 1,
            _ => out.push((count, Class { log_prob: lp, width: 1 })),
        }
    }
    out.into_iter().map(|(_, c)| c).collect()
}

struct Counter<'a> {
    classes: &'a [Class],
    threshold: f64,
    mode: CountingMode,
    binom: &'a Binomials,
    /// `powers[i][k]` = width_i^k, only for Sequences with collapsed classes.
    powers: Vec<Vec<BigUint>>,
}

impl Counter<'_> {
    /// Ways to place `k` copies drawn from class `i` into a block of `r` slots.
    fn weight(&self, i: usize, r: usize, k: usize) -> BigUint {
        let w = self.classes[i].width;
        match self.mode {
            CountingMode::Sequences if w == 1 => self.binom.get(r, k).clone(),
            CountingMode::Sequences => self.binom.get(r, k) * &self.powers[i][k],
            CountingMode::Multisets => self.binom.get(k + w - 1, w - 1).clone(),
        }
    }

    fn count(&self, i: usize, remaining: usize, acc: f64) -> BigUint {
        if remaining == 0 {
            return if admits(acc, self.threshold) { BigUint::one() } else { BigUint::zero() };
        }
        let cur = self.classes[i].log_prob;
        if acc + remaining as f64 * cur < self.threshold - LOG_SLACK {
            return BigUint::zero();
        }
        if i + 1 == self.classes.len() {
            return if admits(acc + remaining as f64 * cur, self.threshold) {
                self.weight(i, remaining, remaining)
            } else {
                BigUint::zero()
            };
        }
        let next = self.classes[i + 1].log_prob;
        let mut total = BigUint::zero();
        for k in (0..=remaining).rev() {
            let with_k = acc + k as f64 * cur;
            // the rest is bounded by the next class; fewer copies only lower it
            if with_k + (remaining - k) as f64 * next < self.threshold - LOG_SLACK {
                break;
            }
            let sub = self.count(i + 1, remaining - k, with_k);
            if !sub.is_zero() {
                total += self.weight(i, remaining, k) * sub;
            }
        }
        total
    }
}

/// Number of size-`size` solutions with log10 probability at least
/// `threshold` (with [`LOG_SLACK`] toward inclusion).
pub fn count_admissible(table: &ProbabilityTable, size: usize, threshold: f64, mode: CountingMode) -> BigUint {
    count_admissible_with(table, size, threshold, mode, Grouping::Distinct)
}

pub fn count_admissible_with(
    table: &ProbabilityTable,
    size: usize,
    threshold: f64,
    mode: CountingMode,
    grouping: Grouping,
) -> BigUint {
    assert!(size >= 1 && !table.is_empty());
    let classes = classes(table, grouping);
    let max_width = classes.iter().map(|c| c.width).max().unwrap_or(1);
    let binom = Binomials::new(size + max_width);
    let powers = if mode == CountingMode::Sequences && grouping == Grouping::Collapsed {
        classes
            .iter()
            .map(|c| {
                let base = BigUint::from(c.width);
                let mut v = vec![BigUint::one()];
                for k in 1..=size {
                    let next = &v[k - 1] * &base;
                    v.push(next);
                }
                v
            })
            .collect()
    } else {
        Vec::new()
    };
    Counter { classes: &classes, threshold, mode, binom: &binom, powers }.count(0, size, 0.0)
}

/// Sum of [`count_admissible_with`] over sizes `1..=size`, all against the
/// same threshold.
pub fn count_admissible_all_depths(
    table: &ProbabilityTable,
    size: usize,
    threshold: f64,
    mode: CountingMode,
    grouping: Grouping,
) -> BigUint {
    (1..=size).map(|s| count_admissible_with(table, s, threshold, mode, grouping)).sum()
}

/// Unpruned enumeration of every sequence (or every multiset). Test oracle;
/// refuses tables above 8 instructions or sizes above 8.
pub fn brute_force_count(
    table: &ProbabilityTable,
    size: usize,
    threshold: f64,
    mode: CountingMode,
) -> Result<BigUint, CountError> {
    let n = table.len();
    if n > 8 || size > 8 || n == 0 || size == 0 {
        return Err(CountError::TooLarge { instructions: n, size });
    }
    let lps: Vec<f64> = table.entries.values().copied().collect();
    let mut idx = vec![0usize; size];
    let mut count: u64 = 0;
    loop {
        let sorted = idx.windows(2).all(|w| w[0] <= w[1]);
        if mode == CountingMode::Sequences || sorted {
            let ps: f64 = idx.iter().map(|&i| lps[i]).sum();
            if admits(ps, threshold) {
                count += 1;
            }
        }
        // odometer increment
        let mut pos = size;
        loop {
            if pos == 0 {
                return Ok(BigUint::from(count));
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < n {
                break;
            }
            idx[pos] = 0;
        }
    }
}

/// `is_cap^size`: sequences of length `size` over a full instruction subset.
pub fn baseline_size(is_cap: usize, size: usize) -> BigUint {
    assert!(is_cap >= 1 && size >= 1);
    num_traits::pow(BigUint::from(is_cap), size)
}

/// log10 of a big integer; `-inf` for zero.
pub fn log10_big(n: &BigUint) -> f64 {
    if n.is_zero() {
        return f64::NEG_INFINITY;
    }
    let bits = n.bits();
    if bits <= 1000 {
        return n.to_f64().expect("fits in f64").log10();
    }
    let shift = bits - 64;
    let top = (n >> shift).to_f64().expect("64-bit value");
    top.log10() + shift as f64 * std::f64::consts::LOG10_2
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpaceMeasurement {
    pub scope: Scope,
    pub size: usize,
    pub threshold: f64,
    pub admissible_count: BigUint,
    pub baseline_count: BigUint,
    /// `log10(baseline) - log10(admissible)`; `+inf` when nothing is admissible.
    pub reduction_oom: f64,
    pub counting_mode: CountingMode,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasureOptions {
    pub is_cap: usize,
    pub mode: CountingMode,
    pub depth: NodeDepth,
    pub grouping: Grouping,
}

impl Default for MeasureOptions {
    fn default() -> Self {
        Self {
            is_cap: crate::subsets::DEFAULT_CAP,
            mode: CountingMode::Sequences,
            depth: NodeDepth::Leaves,
            grouping: Grouping::Distinct,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MeasureOutcome {
    pub measurements: Vec<SpaceMeasurement>,
    /// (scope, size) pairs skipped for lack of a threshold.
    pub missing: Vec<(Scope, usize)>,
}

pub fn measure_one(table: &ProbabilityTable, size: usize, threshold: f64, opts: &MeasureOptions) -> SpaceMeasurement {
    let (admissible_count, baseline_count) = match opts.depth {
        NodeDepth::Leaves => (
            count_admissible_with(table, size, threshold, opts.mode, opts.grouping),
            baseline_size(opts.is_cap, size),
        ),
        NodeDepth::AllDepths => (
            count_admissible_all_depths(table, size, threshold, opts.mode, opts.grouping),
            (1..=size).map(|s| baseline_size(opts.is_cap, s)).sum(),
        ),
    };
    let reduction_oom = if admissible_count.is_zero() {
        f64::INFINITY
    } else {
        log10_big(&baseline_count) - log10_big(&admissible_count)
    };
    SpaceMeasurement {
        scope: table.scope,
        size,
        threshold,
        admissible_count,
        baseline_count,
        reduction_oom,
        counting_mode: opts.mode,
    }
}

/// One measurement per (scope, size), scope-major in input order. Work runs
/// on the current rayon pool; ordering does not depend on thread count.
pub fn measure(models: &[ScopeModel], sizes: &[usize], opts: &MeasureOptions) -> MeasureOutcome {
    let jobs: Vec<(usize, usize)> = (0..models.len())
        .flat_map(|m| sizes.iter().map(move |&s| (m, s)))
        .collect();
    let results: Vec<Result<SpaceMeasurement, (Scope, usize)>> = jobs
        .par_iter()
        .map(|&(m, size)| {
            let model = &models[m];
            match model.thresholds.get(size) {
                Some(thr) => Ok(measure_one(&model.table, size, thr, opts)),
                None => Err((model.table.scope, size)),
            }
        })
        .collect();
    let mut out = MeasureOutcome::default();
    for r in results {
        match r {
            Ok(m) => out.measurements.push(m),
            Err(miss) => out.missing.push(miss),
        }
    }
    out
}

/// CSV: `scope,size,mode,threshold_log10,admissible_count,baseline_count,reduction_oom`.
pub fn write_measurements_csv<W: Write>(rows: &[SpaceMeasurement], w: W) -> Result<(), CountError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "scope",
        "size",
        "mode",
        "threshold_log10",
        "admissible_count",
        "baseline_count",
        "reduction_oom",
    ])?;
    for m in rows {
        out.write_record([
            m.scope.to_string(),
            m.size.to_string(),
            m.counting_mode.to_string(),
            fmt_sig12(m.threshold),
            m.admissible_count.to_string(),
            m.baseline_count.to_string(),
            fmt_sig12(m.reduction_oom),
        ])?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}
