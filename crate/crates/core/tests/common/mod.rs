#![allow(dead_code)]

use ipheur_core::corpus::{generate_zipf_corpus, Corpus, InstructionId, PoolLayout, ProgramUnit, SizeDistribution, ZipfCorpusParams};
use ipheur_core::probability::ProbabilityTable;
use ipheur_core::subsets::{cluster_subsets, SubsetFamily};
use ipheur_core::synth::{generate_program_corpus, spec_from_program, synthesize, DslProgram, ProgramCorpus, Schedule, SynthOptions, TestCaseSpec};
use ipheur_core::probability::{subset_models, ScopeModel};
use ipheur_core::Scope;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn id(s: &str) -> InstructionId {
    InstructionId::new(s).unwrap()
}

pub fn corpus(units: &[(&str, &[&str])]) -> Corpus {
    Corpus::new(
        units
            .iter()
            .map(|(u, ins)| ProgramUnit::new(*u, ins.iter().map(|n| id(n)).collect()).unwrap())
            .collect(),
    )
    .unwrap()
}

pub fn table(counts: &[u64]) -> ProbabilityTable {
    ProbabilityTable::from_counts(
        Scope::Global,
        counts.iter().enumerate().map(|(i, c)| (id(&format!("x{i}")), *c)),
    )
    .unwrap()
}

/// Plain Zipf corpus: 10,000 units, 200 instructions, exponent 1, sizes 1..40.
pub fn zipf_corpus() -> Corpus {
    generate_zipf_corpus(&ZipfCorpusParams {
        num_units: 10_000,
        alphabet_size: 200,
        zipf_exponent: 1.0,
        sizes: SizeDistribution::Uniform { min: 1, max: 40 },
        seed: 1,
        pools: None,
    })
    .unwrap()
}

pub const POOLS: PoolLayout = PoolLayout { pool_size: 10, core: 3, overlap: 2 };

/// Clustered corpus with co-occurrence pools over a 120-instruction alphabet.
pub fn clustered_corpus(num_units: usize, alphabet_size: usize, seed: u64) -> Corpus {
    generate_zipf_corpus(&ZipfCorpusParams {
        num_units,
        alphabet_size,
        zipf_exponent: 1.0,
        sizes: SizeDistribution::Uniform { min: 1, max: 40 },
        seed,
        pools: Some(POOLS),
    })
    .unwrap()
}

pub struct SynthFixture {
    pub programs: ProgramCorpus,
    pub family: SubsetFamily,
    pub models: Vec<ScopeModel>,
}

/// Program corpus of 4000 units with sizes 1..8 and its cap-10 family.
pub fn synth_fixture() -> SynthFixture {
    let programs = generate_program_corpus(4000, 1.0, SizeDistribution::Uniform { min: 1, max: 8 }, 11);
    let family = cluster_subsets(&programs.corpus, 10);
    let models = subset_models(&programs.corpus, &family, 8).unwrap();
    SynthFixture { programs, family, models }
}

pub struct Planted {
    pub program: DslProgram,
    pub unit_id: String,
    pub spec: TestCaseSpec,
}

/// Distinct corpus programs of sizes 3..=6 turned into 5-case specs, keeping
/// only specs that no shorter program satisfies.
pub fn planted_specs(fx: &SynthFixture, wanted: usize) -> Vec<Planted> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, (program, sig)) in fx.programs.programs.iter().enumerate() {
        if out.len() == wanted {
            break;
        }
        if !(3..=6).contains(&program.len()) || !seen.insert(program.tokens()) {
            continue;
        }
        let Some(spec) = spec_from_program(&mut rng, program, sig, 5) else { continue };
        let short = synthesize(&spec, &fx.family, &fx.models, &SynthOptions { max_size: program.len() - 1, schedule: Schedule::unpruned() });
        if short.solution.is_some() {
            continue;
        }
        out.push(Planted { program: program.clone(), unit_id: fx.programs.corpus.units()[i].id.clone(), spec });
    }
    out
}

/// Least-squares slope of y over x.
pub fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let cov: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    cov / var
}

pub fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 { v[m] } else { (v[m - 1] + v[m]) / 2.0 }
}
