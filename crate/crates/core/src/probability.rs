//! Instruction probabilities, solution probabilities and per-size thresholds.
//!
//! Everything is kept in log10: solution probabilities of long units fall far
//! below the smallest normal `f64`.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::corpus::{Corpus, InstructionId, ProgramUnit};
use crate::scope::{fmt_sig12, Scope};
use crate::subsets::{InstructionSubset, SubsetFamily};

#[derive(Debug, Error)]
pub enum ProbabilityError {
    #[error("instruction {0} has no entry in the {1} table")]
    MissingInstruction(InstructionId, Scope),
    #[error("subset {0} covers no program units")]
    EmptySubset(usize),
    #[error("unknown program unit {0:?}")]
    UnknownUnit(String),
    #[error("table for {0} has no occurrences")]
    EmptyTable(Scope),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("csv row {row}: {reason}")]
    BadRow { row: usize, reason: String },
}

/// Instruction → log10 probability, with the counts it was computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityTable {
    pub scope: Scope,
    pub entries: BTreeMap<InstructionId, f64>,
    pub occurrence_counts: BTreeMap<InstructionId, u64>,
    pub total_count: u64,
}

impl ProbabilityTable {
    /// Builds a table from raw occurrence counts. Zero counts get no entry.
    pub fn from_counts(
        scope: Scope,
        counts: impl IntoIterator<Item = (InstructionId, u64)>,
    ) -> Result<Self, ProbabilityError> {
        let occurrence_counts: BTreeMap<_, _> = counts.into_iter().filter(|(_, c)| *c > 0).collect();
        let total_count: u64 = occurrence_counts.values().sum();
        if total_count == 0 {
            return Err(ProbabilityError::EmptyTable(scope));
        }
        let total = total_count as f64;
        let entries = occurrence_counts
            .iter()
            .map(|(i, &c)| (i.clone(), (c as f64 / total).log10()))
            .collect();
        Ok(Self { scope, entries, occurrence_counts, total_count })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn log_prob(&self, ins: &InstructionId) -> Option<f64> {
        self.entries.get(ins).copied()
    }

    /// Sum of linear probabilities; 1 up to rounding.
    pub fn linear_sum(&self) -> f64 {
        self.entries.values().map(|lp| 10f64.powf(*lp)).sum()
    }

    pub fn min_log_prob(&self) -> f64 {
        self.entries.values().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_log_prob(&self) -> f64 {
        self.entries.values().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Entries by descending probability; ties broken by instruction id.
    pub fn ranked(&self) -> Vec<(&InstructionId, f64)> {
        let mut v: Vec<_> = self.entries.iter().map(|(i, &lp)| (i, lp)).collect();
        v.sort_by(|a, b| {
            self.occurrence_counts[b.0]
                .cmp(&self.occurrence_counts[a.0])
                .then_with(|| a.0.cmp(b.0))
        });
        v
    }
}

fn count_units<'a>(units: impl Iterator<Item = &'a ProgramUnit>) -> HashMap<InstructionId, u64> {
    let mut counts: HashMap<InstructionId, u64> = HashMap::new();
    for unit in units {
        for ins in &unit.instructions {
            *counts.entry(ins.clone()).or_insert(0) += 1;
        }
    }
    counts
}

/// Global instruction probabilities over every unit of the corpus.
pub fn global_instruction_probs(corpus: &Corpus) -> ProbabilityTable {
    ProbabilityTable::from_counts(Scope::Global, count_units(corpus.units().iter()))
        .expect("corpus units are never empty")
}

fn covered<'c>(
    corpus: &'c Corpus,
    subset: &InstructionSubset,
) -> Result<Vec<&'c ProgramUnit>, ProbabilityError> {
    if subset.covered_units.is_empty() {
        return Err(ProbabilityError::EmptySubset(subset.id));
    }
    subset
        .covered_units
        .iter()
        .map(|id| corpus.get(id).ok_or_else(|| ProbabilityError::UnknownUnit(id.clone())))
        .collect()
}

/// Per-subset instruction probabilities, counted over all covered units
/// regardless of their size.
pub fn subset_instruction_probs(
    corpus: &Corpus,
    subset: &InstructionSubset,
) -> Result<ProbabilityTable, ProbabilityError> {
    let units = covered(corpus, subset)?;
    ProbabilityTable::from_counts(Scope::PerSubset(subset.id), count_units(units.into_iter()))
}

/// Variant that counts only covered units of exactly `size` instructions.
/// Returns `Ok(None)` when no covered unit has that size.
pub fn subset_instruction_probs_for_size(
    corpus: &Corpus,
    subset: &InstructionSubset,
    size: usize,
) -> Result<Option<ProbabilityTable>, ProbabilityError> {
    let units = covered(corpus, subset)?;
    let counts = count_units(units.into_iter().filter(|u| u.size() == size));
    if counts.is_empty() {
        return Ok(None);
    }
    ProbabilityTable::from_counts(Scope::PerSubset(subset.id), counts).map(Some)
}

/// log10 of the product of instruction probabilities, duplicates included.
pub fn solution_probability(
    table: &ProbabilityTable,
    instructions: &[InstructionId],
) -> Result<f64, ProbabilityError> {
    instructions.iter().try_fold(0.0, |acc, ins| {
        table
            .log_prob(ins)
            .map(|lp| acc + lp)
            .ok_or_else(|| ProbabilityError::MissingInstruction(ins.clone(), table.scope))
    })
}

/// Per-size minimum solution probability.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdTable {
    pub scope: Scope,
    pub thresholds: BTreeMap<usize, f64>,
    /// Number of in-scope units of each size the minimum was taken over.
    pub support_counts: BTreeMap<usize, usize>,
}

impl ThresholdTable {
    pub fn get(&self, size: usize) -> Option<f64> {
        self.thresholds.get(&size).copied()
    }
}

/// Minimum solution probability per size over `scope_units`; sizes above
/// `max_size` or without any unit get no threshold.
pub fn derive_thresholds(
    corpus: &Corpus,
    table: &ProbabilityTable,
    scope_units: &[String],
    max_size: usize,
) -> Result<ThresholdTable, ProbabilityError> {
    let mut thresholds: BTreeMap<usize, f64> = BTreeMap::new();
    let mut support_counts: BTreeMap<usize, usize> = BTreeMap::new();
    for id in scope_units {
        let unit = corpus.get(id).ok_or_else(|| ProbabilityError::UnknownUnit(id.clone()))?;
        let size = unit.size();
        if size > max_size {
            continue;
        }
        let ps = solution_probability(table, &unit.instructions)?;
        thresholds
            .entry(size)
            .and_modify(|t| *t = t.min(ps))
            .or_insert(ps);
        *support_counts.entry(size).or_insert(0) += 1;
    }
    Ok(ThresholdTable { scope: table.scope, thresholds, support_counts })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbabilityRange {
    pub size: usize,
    pub min_possible: f64,
    pub max_possible: f64,
    pub observed_min: Option<f64>,
    pub observed_median: Option<f64>,
    pub observed_max: Option<f64>,
}

/// Lowest and highest possible solution probability at `size`, plus a
/// min/median/max summary of `observed` when given.
pub fn probability_range(table: &ProbabilityTable, size: usize, observed: Option<&[f64]>) -> ProbabilityRange {
    assert!(!table.is_empty() && size >= 1);
    let n = size as f64;
    let (mut observed_min, mut observed_median, mut observed_max) = (None, None, None);
    if let Some(obs) = observed.filter(|o| !o.is_empty()) {
        let mut v = obs.to_vec();
        v.sort_by(f64::total_cmp);
        let mid = v.len() / 2;
        observed_min = v.first().copied();
        observed_max = v.last().copied();
        observed_median = Some(if v.len() % 2 == 1 { v[mid] } else { (v[mid - 1] + v[mid]) / 2.0 });
    }
    ProbabilityRange {
        size,
        min_possible: n * table.min_log_prob(),
        max_possible: n * table.max_log_prob(),
        observed_min,
        observed_median,
        observed_max,
    }
}

/// Solution probabilities of in-scope units grouped by size.
pub fn observed_by_size(
    corpus: &Corpus,
    table: &ProbabilityTable,
    scope_units: &[String],
    max_size: usize,
) -> Result<BTreeMap<usize, Vec<f64>>, ProbabilityError> {
    let mut out: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for id in scope_units {
        let unit = corpus.get(id).ok_or_else(|| ProbabilityError::UnknownUnit(id.clone()))?;
        if unit.size() <= max_size {
            out.entry(unit.size()).or_default().push(solution_probability(table, &unit.instructions)?);
        }
    }
    Ok(out)
}

/// A probability table with the thresholds derived from it.
#[derive(Debug, Clone, PartialEq)]
pub struct ScopeModel {
    pub table: ProbabilityTable,
    pub thresholds: ThresholdTable,
}

pub fn global_model(corpus: &Corpus, max_size: usize) -> ScopeModel {
    let table = global_instruction_probs(corpus);
    let ids: Vec<String> = corpus.units().iter().map(|u| u.id.clone()).collect();
    let thresholds = derive_thresholds(corpus, &table, &ids, max_size).expect("global table covers the corpus");
    ScopeModel { table, thresholds }
}

/// Per-subset tables and thresholds, computed in parallel; output follows
/// family order.
pub fn subset_models(
    corpus: &Corpus,
    family: &SubsetFamily,
    max_size: usize,
) -> Result<Vec<ScopeModel>, ProbabilityError> {
    family
        .subsets
        .par_iter()
        .map(|s| {
            let table = subset_instruction_probs(corpus, s)?;
            let thresholds = derive_thresholds(corpus, &table, &s.covered_units, max_size)?;
            Ok(ScopeModel { table, thresholds })
        })
        .collect()
}

/// CSV: `scope,instruction,count,log10_probability`, one row per entry.
pub fn write_tables_csv<W: Write>(tables: &[ProbabilityTable], w: W) -> Result<(), ProbabilityError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["scope", "instruction", "count", "log10_probability"])?;
    for t in tables {
        for (ins, lp) in t.ranked() {
            out.write_record([
                t.scope.to_string(),
                ins.to_string(),
                t.occurrence_counts[ins].to_string(),
                fmt_sig12(lp),
            ])?;
        }
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Reads tables written by [`write_tables_csv`]. Probabilities are rebuilt
/// from the counts, so the round trip is exact.
pub fn read_tables_csv<R: Read>(r: R) -> Result<Vec<ProbabilityTable>, ProbabilityError> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut grouped: Vec<(Scope, Vec<(InstructionId, u64)>)> = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |reason: String| ProbabilityError::BadRow { row: n + 2, reason };
        if rec.len() < 3 {
            return Err(bad("expected scope,instruction,count".into()));
        }
        let scope: Scope = rec[0].parse().map_err(bad)?;
        let ins = InstructionId::new(&rec[1]).map_err(|e| bad(e.to_string()))?;
        let count: u64 = rec[2].parse().map_err(|_| bad(format!("bad count {:?}", &rec[2])))?;
        match grouped.last_mut() {
            Some((s, v)) if *s == scope => v.push((ins, count)),
            _ => grouped.push((scope, vec![(ins, count)])),
        }
    }
    grouped
        .into_iter()
        .map(|(scope, counts)| ProbabilityTable::from_counts(scope, counts))
        .collect()
}

/// CSV: `scope,size,count,log10_probability` where count is the support.
pub fn write_thresholds_csv<W: Write>(tables: &[ThresholdTable], w: W) -> Result<(), ProbabilityError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["scope", "size", "count", "log10_probability"])?;
    for t in tables {
        for (size, thr) in &t.thresholds {
            out.write_record([
                t.scope.to_string(),
                size.to_string(),
                t.support_counts[size].to_string(),
                fmt_sig12(*thr),
            ])?;
        }
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_thresholds_csv<R: Read>(r: R) -> Result<Vec<ThresholdTable>, ProbabilityError> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out: Vec<ThresholdTable> = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |reason: String| ProbabilityError::BadRow { row: n + 2, reason };
        if rec.len() < 4 {
            return Err(bad("expected scope,size,count,log10_probability".into()));
        }
        let scope: Scope = rec[0].parse().map_err(bad)?;
        let size: usize = rec[1].parse().map_err(|_| bad(format!("bad size {:?}", &rec[1])))?;
        let count: usize = rec[2].parse().map_err(|_| bad(format!("bad count {:?}", &rec[2])))?;
        let thr: f64 = rec[3].parse().map_err(|_| bad(format!("bad threshold {:?}", &rec[3])))?;
        if out.last().map(|t| t.scope) != Some(scope) {
            out.push(ThresholdTable { scope, thresholds: BTreeMap::new(), support_counts: BTreeMap::new() });
        }
        let t = out.last_mut().expect("pushed above");
        t.thresholds.insert(size, thr);
        t.support_counts.insert(size, count);
    }
    Ok(out)
}

/// CSV of possible and observed solution-probability ranges per size.
pub fn write_ranges_csv<W: Write>(rows: &[(Scope, ProbabilityRange)], w: W) -> Result<(), ProbabilityError> {
    let opt = |x: Option<f64>| x.map(fmt_sig12).unwrap_or_default();
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "scope",
        "size",
        "min_possible",
        "max_possible",
        "observed_min",
        "observed_median",
        "observed_max",
    ])?;
    for (scope, r) in rows {
        out.write_record([
            scope.to_string(),
            r.size.to_string(),
            fmt_sig12(r.min_possible),
            fmt_sig12(r.max_possible),
            opt(r.observed_min),
            opt(r.observed_median),
            opt(r.observed_max),
        ])?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subsets::InstructionSubset;
    use std::collections::BTreeSet;

    fn id(s: &str) -> InstructionId {
        InstructionId::new(s).unwrap()
    }

    fn ids(names: &[&str]) -> Vec<InstructionId> {
        names.iter().map(|n| id(n)).collect()
    }

    fn corpus(units: &[(&str, &[&str])]) -> Corpus {
        Corpus::new(
            units
                .iter()
                .map(|(u, ins)| ProgramUnit::new(*u, ids(ins)).unwrap())
                .collect(),
        )
        .unwrap()
    }

    fn table(probs: &[(&str, u64)]) -> ProbabilityTable {
        ProbabilityTable::from_counts(Scope::Global, probs.iter().map(|(n, c)| (id(n), *c))).unwrap()
    }

    fn subset(members: &[&str], covered: &[&str]) -> InstructionSubset {
        InstructionSubset {
            id: 0,
            members: members.iter().map(|m| id(m)).collect::<BTreeSet<_>>(),
            covered_units: covered.iter().map(|s| s.to_string()).collect(),
        }
    }

    const EPS: f64 = 1e-12;

    #[test]
    fn global_counts_duplicates() {
        let t = global_instruction_probs(&corpus(&[("u1", &["a", "a", "b"])]));
        assert!((t.log_prob(&id("a")).unwrap() - (2.0f64 / 3.0).log10()).abs() < EPS);
        assert!((t.log_prob(&id("b")).unwrap() - (1.0f64 / 3.0).log10()).abs() < EPS);
        assert_eq!(t.total_count, 3);
        let t = global_instruction_probs(&corpus(&[("u1", &["a"]), ("u2", &["a"])]));
        assert_eq!(t.log_prob(&id("a")), Some(0.0));
    }

    #[test]
    fn subset_tables() {
        let c = corpus(&[("u1", &["a", "a", "b"])]);
        let t = subset_instruction_probs(&c, &subset(&["a", "b"], &["u1"])).unwrap();
        assert_eq!(t.scope, Scope::PerSubset(0));
        assert!((t.log_prob(&id("a")).unwrap() - (2.0f64 / 3.0).log10()).abs() < EPS);

        let c = corpus(&[("u1", &["a"]), ("u2", &["b"])]);
        let t = subset_instruction_probs(&c, &subset(&["a", "b"], &["u1", "u2"])).unwrap();
        assert_eq!(t.log_prob(&id("a")), t.log_prob(&id("b")));
        assert!((t.log_prob(&id("a")).unwrap() - 0.5f64.log10()).abs() < EPS);

        assert!(matches!(
            subset_instruction_probs(&c, &subset(&["a"], &[])),
            Err(ProbabilityError::EmptySubset(0))
        ));
    }

    #[test]
    fn same_size_variant_filters_units() {
        let c = corpus(&[("u1", &["a"]), ("u2", &["b", "b"])]);
        let s = subset(&["a", "b"], &["u1", "u2"]);
        let t = subset_instruction_probs_for_size(&c, &s, 2).unwrap().unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.log_prob(&id("b")), Some(0.0));
        assert!(subset_instruction_probs_for_size(&c, &s, 3).unwrap().is_none());
    }

    #[test]
    fn solution_probability_examples() {
        let half = table(&[("a", 1), ("b", 1)]);
        let ps = solution_probability(&half, &ids(&["a", "b"])).unwrap();
        assert!((ps - 0.25f64.log10()).abs() < EPS);
        assert_eq!(solution_probability(&half, &ids(&["a"])).unwrap(), half.log_prob(&id("a")).unwrap());

        let skew = table(&[("a", 9), ("b", 1)]);
        let ps = solution_probability(&skew, &ids(&["a", "a", "b"])).unwrap();
        assert!((ps - 0.081f64.log10()).abs() < EPS);

        assert!(matches!(
            solution_probability(&skew, &ids(&["z"])),
            Err(ProbabilityError::MissingInstruction(..))
        ));
    }

    #[test]
    fn threshold_is_minimum_per_size() {
        let c = corpus(&[("u1", &["a", "b"]), ("u2", &["a", "a"]), ("u3", &["a", "b", "b"])]);
        let skew = table(&[("a", 9), ("b", 1)]);
        let units: Vec<String> = ["u1", "u2", "u3"].iter().map(|s| s.to_string()).collect();
        let th = derive_thresholds(&c, &skew, &units, 40).unwrap();
        assert!((th.get(2).unwrap() - 0.09f64.log10()).abs() < EPS);
        assert_eq!(th.support_counts[&2], 2);
        assert_eq!(
            th.get(3).unwrap(),
            solution_probability(&skew, &c.get("u3").unwrap().instructions).unwrap()
        );
        assert_eq!(th.get(1), None);
        let capped = derive_thresholds(&c, &skew, &units, 2).unwrap();
        assert_eq!(capped.get(3), None);
    }

    #[test]
    fn range_examples() {
        let skew = table(&[("a", 9), ("b", 1)]);
        let r = probability_range(&skew, 2, None);
        assert!((r.min_possible - 0.01f64.log10()).abs() < EPS);
        assert!((r.max_possible - 0.81f64.log10()).abs() < EPS);
        assert_eq!(r.observed_median, None);
        let r1 = probability_range(&skew, 1, Some(&[-1.0, -0.5, -0.2, -0.1]));
        assert_eq!(r1.min_possible, skew.min_log_prob());
        assert_eq!(r1.max_possible, skew.max_log_prob());
        assert_eq!(r1.observed_min, Some(-1.0));
        assert_eq!(r1.observed_max, Some(-0.1));
        assert!((r1.observed_median.unwrap() + 0.35).abs() < EPS);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let tables = vec![
            table(&[("a", 9), ("b", 1)]),
            ProbabilityTable::from_counts(Scope::PerSubset(3), [(id("c"), 2), (id("d"), 5)]).unwrap(),
        ];
        let mut buf = Vec::new();
        write_tables_csv(&tables, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("scope,instruction,count,log10_probability\nglobal,a,9,-0.0457574905607\n"), "{text}");
        assert_eq!(read_tables_csv(&buf[..]).unwrap(), tables);

        let c = corpus(&[("u1", &["a", "b"]), ("u2", &["a"])]);
        let th = derive_thresholds(&c, &tables[0], &["u1".into(), "u2".into()], 10).unwrap();
        let mut buf = Vec::new();
        write_thresholds_csv(std::slice::from_ref(&th), &mut buf).unwrap();
        let back = read_thresholds_csv(&buf[..]).unwrap();
        assert_eq!(back[0].support_counts, th.support_counts);
        for (s, v) in &th.thresholds {
            assert!((back[0].thresholds[s] - v).abs() < 1e-11);
        }
    }
}
