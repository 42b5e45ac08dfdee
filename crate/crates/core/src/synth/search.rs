use serde::Serialize;

use super::dsl::{DslProgram, Op, Ty};
use super::TestCaseSpec;
use crate::probability::ScopeModel;
use crate::scope::{admits, Scope};
use crate::subsets::SubsetFamily;

/// Threshold widening: round `r` searches with `PST(S) - r * step_decades`,
/// never going below the size's lowest possible solution probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub step_decades: f64,
    /// Upper bound on rounds; the schedule also stops once every threshold
    /// has reached its floor.
    pub max_rounds: usize,
    /// `false` disables pruning entirely (single round, threshold `-inf`).
    pub pruning: bool,
}

impl Default for Schedule {
    fn default() -> Self {
        Self { step_decades: 2.0, max_rounds: 64, pruning: true }
    }
}

impl Schedule {
    pub fn unpruned() -> Self {
        Self { step_decades: 0.0, max_rounds: 1, pruning: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthOptions {
    pub max_size: usize,
    pub schedule: Schedule,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SearchReport {
    pub solution: Option<Vec<String>>,
    pub solution_subset: Option<usize>,
    pub solution_log10_ps: Option<f64>,
    /// Threshold in force when the solution was found.
    pub active_threshold: Option<f64>,
    pub nodes_expanded: u64,
    pub nodes_pruned_by_threshold: u64,
    pub nodes_rejected_ill_typed: u64,
    pub programs_tested: u64,
    /// log10 offset applied to every size threshold, one entry per round run.
    pub threshold_schedule_used: Vec<f64>,
    /// Instruction order tried at each step of the first searched subset.
    pub extension_order: Vec<String>,
}

struct SubsetSearch<'a> {
    spec: &'a TestCaseSpec,
    /// (op, log10 probability), most probable first.
    ops: Vec<(Op, f64)>,
    output: Ty,
    target: usize,
    threshold: f64,
}

impl SubsetSearch<'_> {
    fn dfs(&self, prog: &mut Vec<Op>, types: &[Ty], acc: f64, report: &mut SearchReport) -> Option<f64> {
        for &(op, lp) in &self.ops {
            let ps = acc + lp;
            if !admits(ps, self.threshold) {
                report.nodes_pruned_by_threshold += 1;
                continue;
            }
            let mut next = types.to_vec();
            if !op.apply_type(&mut next) {
                report.nodes_rejected_ill_typed += 1;
                continue;
            }
            report.nodes_expanded += 1;
            prog.push(op);
            if prog.len() == self.target {
                if next.last() == Some(&self.output) {
                    report.programs_tested += 1;
                    let candidate = DslProgram::new(prog.clone());
                    if self.spec.is_satisfied_by(&candidate) {
                        return Some(ps);
                    }
                }
            } else if let Some(found) = self.dfs(prog, &next, ps, report) {
                return Some(found);
            }
            prog.pop();
        }
        None
    }
}

/// Searches subsets in family order, sizes ascending within a subset, and
/// widens every threshold by the schedule step after each failed round.
///
/// `models[i]` must hold the table and thresholds of `family.subsets[i]`.
/// Sizes without a threshold fall back to the lowest possible probability
/// at that size, i.e. they are searched unpruned.
pub fn synthesize(
    spec: &TestCaseSpec,
    family: &SubsetFamily,
    models: &[ScopeModel],
    opts: &SynthOptions,
) -> SearchReport {
    assert_eq!(family.subsets.len(), models.len(), "one model per subset");
    let mut report = SearchReport::default();
    let inputs = spec.input_types();
    let output = spec.output_type();

    // per subset: DSL ops by descending probability
    let subset_ops: Vec<Vec<(Op, f64)>> = models
        .iter()
        .map(|m| {
            m.table
                .ranked()
                .into_iter()
                .filter_map(|(ins, lp)| ins.as_str().parse::<Op>().ok().map(|op| (op, lp)))
                .collect()
        })
        .collect();
    if let Some(first) = subset_ops.iter().find(|o| !o.is_empty()) {
        report.extension_order = first.iter().map(|(op, _)| op.name().to_string()).collect();
    }

    for round in 0..opts.schedule.max_rounds.max(1) {
        let offset = -(round as f64) * opts.schedule.step_decades;
        report.threshold_schedule_used.push(offset);
        let mut any_above_floor = false;
        for (m, ops) in models.iter().zip(&subset_ops) {
            if ops.is_empty() {
                continue;
            }
            let min_lp = ops.iter().map(|(_, lp)| *lp).fold(f64::INFINITY, f64::min);
            for size in 1..=opts.max_size {
                let floor = size as f64 * min_lp;
                let threshold = if opts.schedule.pruning {
                    let base = m.thresholds.get(size).unwrap_or(floor);
                    let t = base + offset;
                    if t > floor {
                        any_above_floor = true;
                        t
                    } else {
                        floor
                    }
                } else {
                    f64::NEG_INFINITY
                };
                let search = SubsetSearch { spec, ops: ops.clone(), output, target: size, threshold };
                let mut prog = Vec::with_capacity(size);
                if let Some(ps) = search.dfs(&mut prog, &inputs, 0.0, &mut report) {
                    report.solution = Some(prog.iter().map(|o| o.name().to_string()).collect());
                    report.solution_subset = match m.table.scope {
                        Scope::PerSubset(id) => Some(id),
                        Scope::Global => None,
                    };
                    report.solution_log10_ps = Some(ps);
                    report.active_threshold = Some(threshold);
                    return report;
                }
            }
        }
        if !opts.schedule.pruning || !any_above_floor || opts.schedule.step_decades <= 0.0 {
            break;
        }
    }
    report
}

/// Whether every prefix of `program` survives `threshold` under `model`, i.e.
/// the pruned search of that subset reaches it at its own size.
pub fn reachable(program: &DslProgram, model: &ScopeModel, threshold: f64) -> bool {
    let mut acc = 0.0;
    for op in &program.ops {
        match model.table.log_prob(&op.instruction_id()) {
            Some(lp) => acc += lp,
            None => return false,
        }
        if !admits(acc, threshold) {
            return false;
        }
    }
    true
}
