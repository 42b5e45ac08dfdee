//! Generate-and-test synthesis over the stack DSL, pruned by solution
//! probability.

mod dsl;
mod search;

pub use dsl::{evaluate, DslProgram, Fault, Op, Ty, Value};
pub use search::{reachable, synthesize, Schedule, SearchReport, SynthOptions};

use std::io::Read;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, ProgramUnit, SizeDistribution};

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("spec has no test cases")]
    NoCases,
    #[error("case {0} has {1} inputs, expected {2}")]
    Arity(usize, usize, usize),
    #[error("case {0} input types differ from case 0")]
    InputTypes(usize),
    #[error("case {0} output type differs from case 0")]
    OutputType(usize),
    #[error("spec json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub inputs: Vec<Value>,
    pub output: Value,
}

/// Input/output examples with consistent arity and types.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TestCaseSpec {
    pub cases: Vec<TestCase>,
}

#[derive(Deserialize)]
struct RawSpec {
    cases: Vec<TestCase>,
}

impl TestCaseSpec {
    pub fn new(cases: Vec<TestCase>) -> Result<Self, SpecError> {
        let first = cases.first().ok_or(SpecError::NoCases)?;
        let in_types: Vec<Ty> = first.inputs.iter().map(Value::ty).collect();
        let out_type = first.output.ty();
        for (i, c) in cases.iter().enumerate().skip(1) {
            if c.inputs.len() != in_types.len() {
                return Err(SpecError::Arity(i, c.inputs.len(), in_types.len()));
            }
            if c.inputs.iter().map(Value::ty).ne(in_types.iter().copied()) {
                return Err(SpecError::InputTypes(i));
            }
            if c.output.ty() != out_type {
                return Err(SpecError::OutputType(i));
            }
        }
        Ok(Self { cases })
    }

    pub fn from_json<R: Read>(r: R) -> Result<Self, SpecError> {
        let raw: RawSpec = serde_json::from_reader(r)?;
        Self::new(raw.cases)
    }

    pub fn input_types(&self) -> Vec<Ty> {
        self.cases[0].inputs.iter().map(Value::ty).collect()
    }

    pub fn output_type(&self) -> Ty {
        self.cases[0].output.ty()
    }

    pub fn is_satisfied_by(&self, program: &DslProgram) -> bool {
        self.cases
            .iter()
            .all(|c| evaluate(program, &c.inputs).as_ref() == Ok(&c.output))
    }
}

/// Input signatures used by the program generator.
pub const SIGNATURES: &[&[Ty]] = &[&[Ty::List], &[Ty::Int], &[Ty::Int, Ty::Int], &[Ty::List, Ty::Int]];

/// A generated corpus of well-typed DSL programs, kept in order alongside the
/// instruction-multiset view used by the probability model.
#[derive(Debug, Clone)]
pub struct ProgramCorpus {
    pub corpus: Corpus,
    pub programs: Vec<(DslProgram, Vec<Ty>)>,
}

/// Draws well-typed programs instruction by instruction. At each step the
/// candidates are the ops that type-check on the current stack (and, at the
/// last step, leave it non-empty); among them op `k` of [`Op::ALL`] has weight
/// `(k+1)^-exponent`.
pub fn generate_program_corpus(
    num_units: usize,
    exponent: f64,
    sizes: SizeDistribution,
    seed: u64,
) -> ProgramCorpus {
    assert!(num_units >= 1 && exponent > 0.0);
    let weights: Vec<f64> = (1..=Op::ALL.len()).map(|k| (k as f64).powf(-exponent)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = sizes.bounds();
    let width = num_units.to_string().len();
    let mut programs = Vec::with_capacity(num_units);
    let mut units = Vec::with_capacity(num_units);
    for n in 0..num_units {
        let size = rng.gen_range(lo..=hi);
        let sig = SIGNATURES[rng.gen_range(0..SIGNATURES.len())].to_vec();
        let program = sample_program(&mut rng, &weights, &sig, size);
        units.push(ProgramUnit::new(format!("p{n:0width$}"), program.instruction_ids()).expect("size >= 1"));
        programs.push((program, sig));
    }
    ProgramCorpus { corpus: Corpus::new(units).expect("unique ids"), programs }
}

fn sample_program<R: Rng>(rng: &mut R, weights: &[f64], inputs: &[Ty], size: usize) -> DslProgram {
    let mut stack = inputs.to_vec();
    let mut ops = Vec::with_capacity(size);
    for step in 0..size {
        let last = step + 1 == size;
        let candidates: Vec<(Op, Vec<Ty>)> = Op::ALL
            .iter()
            .filter_map(|&op| {
                let mut s = stack.clone();
                (op.apply_type(&mut s) && (!last || !s.is_empty())).then_some((op, s))
            })
            .collect();
        let w: Vec<f64> = candidates.iter().map(|(op, _)| weights[*op as usize]).collect();
        let pick = WeightedIndex::new(&w).expect("push ops always type-check");
        let (op, s) = candidates[pick.sample(rng)].clone();
        ops.push(op);
        stack = s;
    }
    DslProgram::new(ops)
}

/// Random inputs for a signature: small ints and short lists.
pub fn random_inputs<R: Rng>(rng: &mut R, sig: &[Ty]) -> Vec<Value> {
    sig.iter()
        .map(|t| match t {
            Ty::Int => Value::Int(rng.gen_range(-9..=9)),
            Ty::List => {
                let len = rng.gen_range(1..=5);
                Value::List((0..len).map(|_| rng.gen_range(-9..=9)).collect())
            }
        })
        .collect()
}

/// Builds a spec from a program by running it on random inputs. Returns
/// `None` if the program faults on any of the first `n_cases` distinct
/// inputs drawn.
pub fn spec_from_program<R: Rng>(rng: &mut R, program: &DslProgram, sig: &[Ty], n_cases: usize) -> Option<TestCaseSpec> {
    let mut cases: Vec<TestCase> = Vec::with_capacity(n_cases);
    let mut attempts = 0;
    while cases.len() < n_cases && attempts < n_cases * 10 {
        attempts += 1;
        let inputs = random_inputs(rng, sig);
        if cases.iter().any(|c| c.inputs == inputs) {
            continue;
        }
        let output = evaluate(program, &inputs).ok()?;
        cases.push(TestCase { inputs, output });
    }
    TestCaseSpec::new(cases).ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_validation() {
        assert!(matches!(TestCaseSpec::new(vec![]), Err(SpecError::NoCases)));
        let ok = r#"{"cases":[{"inputs":[5],"output":10},{"inputs":[2],"output":4}]}"#;
        let spec = TestCaseSpec::from_json(ok.as_bytes()).unwrap();
        assert_eq!(spec.input_types(), vec![Ty::Int]);
        assert!(spec.is_satisfied_by(&DslProgram::parse(["dup", "add"]).unwrap()));
        let arity = r#"{"cases":[{"inputs":[5],"output":10},{"inputs":[2,3],"output":4}]}"#;
        assert!(matches!(TestCaseSpec::from_json(arity.as_bytes()), Err(SpecError::Arity(1, 2, 1))));
        let types = r#"{"cases":[{"inputs":[5],"output":10},{"inputs":[[2]],"output":4}]}"#;
        assert!(matches!(TestCaseSpec::from_json(types.as_bytes()), Err(SpecError::InputTypes(1))));
    }

    #[test]
    fn generated_programs_are_well_typed_and_deterministic() {
        let a = generate_program_corpus(300, 1.0, SizeDistribution::Uniform { min: 1, max: 8 }, 5);
        let b = generate_program_corpus(300, 1.0, SizeDistribution::Uniform { min: 1, max: 8 }, 5);
        assert_eq!(a.corpus, b.corpus);
        for (p, sig) in &a.programs {
            assert!(p.result_type(sig).is_some(), "{p}");
            assert!((1..=8).contains(&p.len()));
        }
    }
}
