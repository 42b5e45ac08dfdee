//! Program-unit corpora: loading, writing and synthetic generation.
//!
//! A program unit is reduced to the multiset of instruction identifiers it
//! uses. Order inside a unit carries no meaning; duplicates do.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("empty corpus")]
    Empty,
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("duplicate program unit id {0:?}")]
    DuplicateId(String),
    #[error("program unit {0:?} has no instructions")]
    EmptyUnit(String),
    #[error("invalid instruction id {0:?}")]
    InvalidInstruction(String),
    #[error("invalid size distribution: {0}")]
    InvalidSizes(String),
    #[error("invalid generator parameters: {0}")]
    InvalidParams(String),
}

/// Opaque instruction token. Non-empty, no whitespace.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct InstructionId(String);

impl InstructionId {
    pub fn new(name: impl Into<String>) -> Result<Self, CorpusError> {
        let name = name.into();
        if name.is_empty() || name.chars().any(char::is_whitespace) {
            return Err(CorpusError::InvalidInstruction(name));
        }
        Ok(Self(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for InstructionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for InstructionId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        InstructionId::new(s).map_err(serde::de::Error::custom)
    }
}

impl FromStr for InstructionId {
    type Err = CorpusError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(s)
    }
}

/// A function, subroutine or main block, kept as an instruction multiset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProgramUnit {
    pub id: String,
    pub instructions: Vec<InstructionId>,
}

impl ProgramUnit {
    pub fn new(id: impl Into<String>, instructions: Vec<InstructionId>) -> Result<Self, CorpusError> {
        let id = id.into();
        if instructions.is_empty() {
            return Err(CorpusError::EmptyUnit(id));
        }
        Ok(Self { id, instructions })
    }

    /// Total instruction occurrences, duplicates included.
    pub fn size(&self) -> usize {
        self.instructions.len()
    }

    pub fn unique_instructions(&self) -> BTreeSet<InstructionId> {
        self.instructions.iter().cloned().collect()
    }

    /// Occurrence count per instruction.
    pub fn counts(&self) -> BTreeMap<&InstructionId, usize> {
        let mut counts = BTreeMap::new();
        for ins in &self.instructions {
            *counts.entry(ins).or_insert(0) += 1;
        }
        counts
    }
}

/// Multiset equality: same id and same instruction counts.
impl PartialEq for ProgramUnit {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id && self.counts() == other.counts()
    }
}

impl Eq for ProgramUnit {}

pub fn pu_size(pu: &ProgramUnit) -> usize {
    pu.size()
}

/// Validated, immutable collection of program units.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    units: Vec<ProgramUnit>,
    alphabet: BTreeSet<InstructionId>,
    index: HashMap<String, usize>,
}

impl Corpus {
    pub fn new(units: Vec<ProgramUnit>) -> Result<Self, CorpusError> {
        if units.is_empty() {
            return Err(CorpusError::Empty);
        }
        let mut index = HashMap::with_capacity(units.len());
        let mut alphabet = BTreeSet::new();
        for (i, unit) in units.iter().enumerate() {
            if unit.instructions.is_empty() {
                return Err(CorpusError::EmptyUnit(unit.id.clone()));
            }
            if index.insert(unit.id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateId(unit.id.clone()));
            }
            alphabet.extend(unit.instructions.iter().cloned());
        }
        Ok(Self { units, alphabet, index })
    }

    pub fn units(&self) -> &[ProgramUnit] {
        &self.units
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn alphabet(&self) -> &BTreeSet<InstructionId> {
        &self.alphabet
    }

    pub fn get(&self, id: &str) -> Option<&ProgramUnit> {
        self.index.get(id).map(|&i| &self.units[i])
    }

    /// Keep only units whose size is at most `max_size`. Returns `None` when
    /// nothing survives.
    pub fn filter_max_size(&self, max_size: usize) -> Option<Corpus> {
        let kept: Vec<_> = self.units.iter().filter(|u| u.size() <= max_size).cloned().collect();
        Corpus::new(kept).ok()
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<(), CorpusError> {
        for unit in &self.units {
            serde_json::to_writer(&mut w, unit).map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: Read>(r: R) -> Result<Self, CorpusError> {
        let mut units = Vec::new();
        let mut seen = HashMap::new();
        for (n, line) in BufReader::new(r).lines().enumerate() {
            let line = line?;
            let lineno = n + 1;
            if line.trim().is_empty() {
                continue;
            }
            let unit: ProgramUnit = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
                line: lineno,
                reason: e.to_string(),
            })?;
            if unit.instructions.is_empty() {
                return Err(CorpusError::Malformed {
                    line: lineno,
                    reason: format!("program unit {:?} has no instructions", unit.id),
                });
            }
            if seen.insert(unit.id.clone(), lineno).is_some() {
                return Err(CorpusError::DuplicateId(unit.id));
            }
            units.push(unit);
        }
        Corpus::new(units)
    }
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    Corpus::read_jsonl(File::open(path)?)
}

/// Bounded distribution of program-unit sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SizeDistribution {
    Fixed(usize),
    /// Uniform over `min..=max`.
    Uniform { min: usize, max: usize },
}

impl SizeDistribution {
    pub fn bounds(&self) -> (usize, usize) {
        match *self {
            SizeDistribution::Fixed(n) => (n, n),
            SizeDistribution::Uniform { min, max } => (min, max),
        }
    }

    fn validate(&self) -> Result<(), CorpusError> {
        let (lo, hi) = self.bounds();
        if lo == 0 || lo > hi {
            return Err(CorpusError::InvalidSizes(self.to_string()));
        }
        Ok(())
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        match *self {
            SizeDistribution::Fixed(n) => n,
            SizeDistribution::Uniform { min, max } => rng.gen_range(min..=max),
        }
    }
}

impl fmt::Display for SizeDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SizeDistribution::Fixed(n) => write!(f, "{n}"),
            SizeDistribution::Uniform { min, max } => write!(f, "{min}..{max}"),
        }
    }
}

/// Parses `"N"` or `"A..B"` (inclusive).
impl FromStr for SizeDistribution {
    type Err = CorpusError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || CorpusError::InvalidSizes(s.to_string());
        let d = match s.split_once("..") {
            Some((a, b)) => SizeDistribution::Uniform {
                min: a.trim().parse().map_err(|_| bad())?,
                max: b.trim().trim_start_matches('=').parse().map_err(|_| bad())?,
            },
            None => SizeDistribution::Fixed(s.trim().parse().map_err(|_| bad())?),
        };
        d.validate()?;
        Ok(d)
    }
}

/// Co-occurrence structure for the generator. The alphabet is split into a
/// shared core of the `core` most frequent instructions plus windows of the
/// remaining ranks; each pool is `core ∪ window` with `pool_size` members and
/// consecutive windows overlap by `overlap` instructions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolLayout {
    pub pool_size: usize,
    pub core: usize,
    pub overlap: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZipfCorpusParams {
    pub num_units: usize,
    pub alphabet_size: usize,
    pub zipf_exponent: f64,
    pub sizes: SizeDistribution,
    pub seed: u64,
    /// `None` draws every unit i.i.d. from the whole alphabet.
    pub pools: Option<PoolLayout>,
}

/// Instruction id for 1-based frequency rank `rank`.
pub fn ranked_instruction(rank: usize, alphabet_size: usize) -> InstructionId {
    let width = alphabet_size.to_string().len();
    InstructionId(format!("i{rank:0width$}"))
}

fn zipf_weights(n: usize, exponent: f64) -> Vec<f64> {
    (1..=n).map(|k| (k as f64).powf(-exponent)).collect()
}

/// Builds the member lists (as 0-based ranks) of every pool.
pub fn pool_members(layout: &PoolLayout, alphabet_size: usize) -> Result<Vec<Vec<usize>>, CorpusError> {
    let PoolLayout { pool_size, core, overlap } = *layout;
    if pool_size == 0 || core >= pool_size || core > alphabet_size {
        return Err(CorpusError::InvalidParams(format!(
            "pool_size {pool_size} must exceed core {core} and core must fit the alphabet"
        )));
    }
    let window = pool_size - core;
    if overlap >= window {
        return Err(CorpusError::InvalidParams(format!(
            "overlap {overlap} must be smaller than the pool window {window}"
        )));
    }
    let rest = alphabet_size - core;
    if rest == 0 {
        return Ok(vec![(0..core).collect()]);
    }
    let window = window.min(rest);
    let step = (window - overlap.min(window.saturating_sub(1))).max(1);
    let mut pools = Vec::new();
    let mut start = 0;
    loop {
        let mut members: Vec<usize> = (0..core).collect();
        members.extend((start..start + window).map(|i| core + (i % rest)));
        pools.push(members);
        if start + window >= rest {
            break;
        }
        start += step;
    }
    Ok(pools)
}

/// Deterministic Zipf-distributed synthetic corpus.
///
/// Without pools, instruction of rank `k` is drawn with probability
/// proportional to `k^-exponent`. With pools, each unit first picks a pool
/// (Zipf over pool index), then draws from the pool members with Zipf weights
/// over their position within the pool.
pub fn generate_zipf_corpus(params: &ZipfCorpusParams) -> Result<Corpus, CorpusError> {
    if params.alphabet_size == 0 {
        return Err(CorpusError::InvalidParams("alphabet size must be at least 1".into()));
    }
    if params.num_units == 0 {
        return Err(CorpusError::InvalidParams("number of units must be at least 1".into()));
    }
    if !(params.zipf_exponent > 0.0 && params.zipf_exponent.is_finite()) {
        return Err(CorpusError::InvalidParams(format!(
            "zipf exponent must be positive, got {}",
            params.zipf_exponent
        )));
    }
    params.sizes.validate()?;

    let names: Vec<InstructionId> = (1..=params.alphabet_size)
        .map(|r| ranked_instruction(r, params.alphabet_size))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let width = params.num_units.to_string().len();

    let pools: Vec<Vec<usize>> = match &params.pools {
        Some(layout) => pool_members(layout, params.alphabet_size)?,
        None => vec![(0..params.alphabet_size).collect()],
    };
    let pool_pick = WeightedIndex::new(zipf_weights(pools.len(), params.zipf_exponent))
        .expect("positive weights");
    let pool_draws: Vec<WeightedIndex<f64>> = pools
        .iter()
        .map(|p| WeightedIndex::new(zipf_weights(p.len(), params.zipf_exponent)).expect("positive weights"))
        .collect();

    let mut units = Vec::with_capacity(params.num_units);
    for n in 0..params.num_units {
        let size = params.sizes.sample(&mut rng);
        let p = if pools.len() == 1 { 0 } else { pool_pick.sample(&mut rng) };
        let instructions = (0..size)
            .map(|_| names[pools[p][pool_draws[p].sample(&mut rng)]].clone())
            .collect();
        units.push(ProgramUnit {
            id: format!("pu{n:0width$}"),
            instructions,
        });
    }
    Corpus::new(units)
}
