//! Instruction subsets: capped, overlapping instruction sets that each cover a
//! group of program units.

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, InstructionId};

pub const DEFAULT_CAP: usize = 10;

#[derive(Debug, Error)]
pub enum FamilyError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("subset {id} has {len} members, above cap {cap}")]
    OverCap { id: usize, len: usize, cap: usize },
    #[error("subset {0} is empty")]
    EmptySubset(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionSubset {
    pub id: usize,
    pub members: BTreeSet<InstructionId>,
    pub covered_units: Vec<String>,
}

impl InstructionSubset {
    pub fn contains_all<'a>(&self, instructions: impl IntoIterator<Item = &'a InstructionId>) -> bool {
        instructions.into_iter().all(|i| self.members.contains(i))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsetFamily {
    pub cap: usize,
    pub subsets: Vec<InstructionSubset>,
    /// Units left out because they use more than `cap` distinct instructions.
    pub excluded_units: Vec<String>,
}

impl SubsetFamily {
    pub fn len(&self) -> usize {
        self.subsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsets.is_empty()
    }

    pub fn get(&self, id: usize) -> Option<&InstructionSubset> {
        self.subsets.iter().find(|s| s.id == id)
    }

    /// One JSON object per subset: `id`, sorted `members`, `covered_units`.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for s in &self.subsets {
            serde_json::to_writer(&mut w, s)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: Read>(r: R, cap: usize) -> Result<Self, FamilyError> {
        let mut subsets = Vec::new();
        for (n, line) in BufReader::new(r).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let s: InstructionSubset = serde_json::from_str(&line).map_err(|e| FamilyError::Malformed {
                line: n + 1,
                reason: e.to_string(),
            })?;
            if s.members.is_empty() {
                return Err(FamilyError::EmptySubset(s.id));
            }
            if s.members.len() > cap {
                return Err(FamilyError::OverCap { id: s.id, len: s.members.len(), cap });
            }
            subsets.push(s);
        }
        Ok(SubsetFamily { cap, subsets, excluded_units: Vec::new() })
    }
}

/// Greedy first-fit-decreasing clustering.
///
/// Units are visited by descending distinct-instruction count (corpus order
/// on ties) and joined to the first subset whose union with the unit stays
/// within `cap`; otherwise they open a new subset.
pub fn cluster_subsets(corpus: &Corpus, cap: usize) -> SubsetFamily {
    assert!(cap >= 1, "cap must be at least 1");
    let mut order: Vec<(usize, BTreeSet<InstructionId>)> = corpus
        .units()
        .iter()
        .enumerate()
        .map(|(i, u)| (i, u.unique_instructions()))
        .collect();
    // stable: equal sizes keep corpus order
    order.sort_by_key(|u| std::cmp::Reverse(u.1.len()));

    let mut subsets: Vec<InstructionSubset> = Vec::new();
    let mut excluded = Vec::new();
    for (idx, unique) in order {
        let unit = &corpus.units()[idx];
        if unique.len() > cap {
            excluded.push(idx);
            continue;
        }
        let slot = subsets
            .iter()
            .position(|s| s.members.len() + unique.difference(&s.members).count() <= cap);
        match slot {
            Some(i) => {
                let s = &mut subsets[i];
                s.members.extend(unique);
                s.covered_units.push(unit.id.clone());
            }
            None => subsets.push(InstructionSubset {
                id: subsets.len(),
                members: unique,
                covered_units: vec![unit.id.clone()],
            }),
        }
    }
    excluded.sort_unstable();
    let excluded_units = excluded.into_iter().map(|i| corpus.units()[i].id.clone()).collect();
    SubsetFamily { cap, subsets, excluded_units }
}

/// Subsets whose members contain every instruction in `unique_instructions`.
pub fn covering_subsets<'f>(
    unique_instructions: &BTreeSet<InstructionId>,
    family: &'f SubsetFamily,
) -> Vec<&'f InstructionSubset> {
    family
        .subsets
        .iter()
        .filter(|s| s.contains_all(unique_instructions))
        .collect()
}
