//! Age–fitness Pareto optimisation (AFPO).
//!
//! Each generation every member produces one mutated child, one fresh random
//! individual (age 0) is injected, the newcomers are evaluated, and survivors
//! are picked on two objectives: fitness (maximised) and age (minimised).
//! Children inherit their parent's age; survivors age by one per generation.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::genome::{self, clamp_length, Genome, Mode};
use crate::physics::SimConfig;
use crate::{fitness, Error};

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MutationConfig {
    /// Standard deviation of the additive normal perturbation.
    pub sigma: f64,
    /// Probability that a gene is visited by the mutation.
    pub per_voxel_prob: f64,
}

impl Default for MutationConfig {
    fn default() -> Self {
        MutationConfig { sigma: 0.75, per_voxel_prob: 0.5 }
    }
}

impl MutationConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!("mutation.sigma must be > 0, got {}", self.sigma)));
        }
        if !(0.0..=1.0).contains(&self.per_voxel_prob) {
            return Err(Error::Config(format!(
                "mutation.per_voxel_prob must lie in [0, 1], got {}",
                self.per_voxel_prob
            )));
        }
        Ok(())
    }
}

/// Which gene parameters a mutation actually changed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MutationFlags {
    /// Some starting length changed ("early" mutation).
    pub s0: bool,
    /// Some final length changed ("late" mutation).
    pub s1: bool,
}

/// Parameter types selected for an Evo-Devo mutation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ParamSet {
    Both,
    StartOnly,
    FinalOnly,
}

impl ParamSet {
    /// Fair coin for each parameter; if neither comes up, one more coin picks one.
    pub fn draw<R: Rng + ?Sized>(rng: &mut R) -> ParamSet {
        let start = rng.random_bool(0.5);
        let end = rng.random_bool(0.5);
        match (start, end) {
            (true, true) => ParamSet::Both,
            (true, false) => ParamSet::StartOnly,
            (false, true) => ParamSet::FinalOnly,
            (false, false) => {
                if rng.random_bool(0.5) {
                    ParamSet::StartOnly
                } else {
                    ParamSet::FinalOnly
                }
            }
        }
    }

    fn touches_start(self) -> bool {
        matches!(self, ParamSet::Both | ParamSet::StartOnly)
    }

    fn touches_final(self) -> bool {
        matches!(self, ParamSet::Both | ParamSet::FinalOnly)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Individual {
    pub id: u64,
    pub parent_id: Option<u64>,
    pub genome: Genome,
    /// Generations of genetic material; inherited by children.
    pub age: u32,
    pub fitness: Option<f64>,
    pub birth_generation: u32,
    pub mutation: MutationFlags,
}

impl Individual {
    pub fn new_random<R: Rng + ?Sized>(id: u64, mode: Mode, birth_generation: u32, rng: &mut R) -> Individual {
        Individual {
            id,
            parent_id: None,
            genome: genome::random_genome(mode, rng),
            age: 0,
            fitness: None,
            birth_generation,
            mutation: MutationFlags::default(),
        }
    }

    /// Fitness of an evaluated individual.
    ///
    /// Panics if the individual has not been evaluated.
    pub fn score(&self) -> f64 {
        self.fitness.unwrap_or_else(|| panic!("individual {} has not been evaluated", self.id))
    }
}

/// Produce a mutated child of `parent` with a fresh id.
pub fn mutate<R: Rng + ?Sized>(
    parent: &Individual,
    child_id: u64,
    birth_generation: u32,
    config: &MutationConfig,
    rng: &mut R,
) -> Individual {
    let normal = Normal::new(0.0, config.sigma).expect("sigma validated positive");
    let mut genes = *parent.genome.genes();
    let mut flags = MutationFlags::default();
    match parent.genome.mode() {
        Mode::Evo => {
            for g in genes.iter_mut() {
                if rng.random_bool(config.per_voxel_prob) {
                    let s = clamp_length(g.s0 + normal.sample(rng));
                    if s != g.s0 {
                        flags.s0 = true;
                        flags.s1 = true;
                    }
                    g.s0 = s;
                    g.s1 = s;
                }
            }
        }
        Mode::EvoDevo => {
            let set = ParamSet::draw(rng);
            for g in genes.iter_mut() {
                if rng.random_bool(config.per_voxel_prob) {
                    if set.touches_start() {
                        let s = clamp_length(g.s0 + normal.sample(rng));
                        flags.s0 |= s != g.s0;
                        g.s0 = s;
                    }
                    if set.touches_final() {
                        let s = clamp_length(g.s1 + normal.sample(rng));
                        flags.s1 |= s != g.s1;
                        g.s1 = s;
                    }
                }
            }
        }
    }
    Individual {
        id: child_id,
        parent_id: Some(parent.id),
        genome: Genome::with_genes_unchecked(genes, parent.genome.mode()),
        age: parent.age,
        fitness: None,
        birth_generation,
        mutation: flags,
    }
}

/// `a` is at least as fit and at least as young as `b`, and strictly better in one.
///
/// Panics if either individual is unevaluated.
pub fn pareto_dominates(a: &Individual, b: &Individual) -> bool {
    dominates((a.score(), a.age), (b.score(), b.age))
}

/// Dominance on raw `(fitness, age)` objectives.
pub fn dominates(a: (f64, u32), b: (f64, u32)) -> bool {
    a.0 >= b.0 && a.1 <= b.1 && (a.0 > b.0 || a.1 < b.1)
}

/// Order used to fill a partially admitted front: fitter first, then
/// younger, then lower id.
fn fill_order(a: &Individual, b: &Individual) -> Ordering {
    b.score()
        .partial_cmp(&a.score())
        .unwrap_or(Ordering::Equal)
        .then(a.age.cmp(&b.age))
        .then(a.id.cmp(&b.id))
}

/// Indices of the survivors among `candidates`, chosen by repeatedly peeling
/// off nondominated fronts; the front that would overflow `target` is
/// admitted in [`fill_order`]. Returned in ascending index order.
pub fn select_survivors(candidates: &[Individual], target: usize) -> Vec<usize> {
    let mut remaining: Vec<usize> = (0..candidates.len()).collect();
    let mut survivors = Vec::with_capacity(target);
    while survivors.len() < target && !remaining.is_empty() {
        let (front, rest): (Vec<usize>, Vec<usize>) = remaining.iter().partition(|&&i| {
            !remaining.iter().any(|&j| j != i && pareto_dominates(&candidates[j], &candidates[i]))
        });
        if survivors.len() + front.len() <= target {
            survivors.extend(front);
            remaining = rest;
        } else {
            let mut front = front;
            front.sort_by(|&a, &b| fill_order(&candidates[a], &candidates[b]));
            let need = target - survivors.len();
            survivors.extend(front.into_iter().take(need));
            break;
        }
    }
    survivors.sort_unstable();
    survivors
}

/// Fitness function used during evolution. Implementations must be pure:
/// the same genome always yields the same fitness.
pub trait Evaluator: Sync {
    fn fitness(&self, genome: &Genome) -> f64;
}

impl<F> Evaluator for F
where
    F: Fn(&Genome) -> f64 + Sync,
{
    fn fitness(&self, genome: &Genome) -> f64 {
        self(genome)
    }
}

/// Full-lifetime physics evaluation; blowups and rollovers score 0.
#[derive(Clone, Debug)]
pub struct SimEvaluator {
    pub sim: SimConfig,
}

impl Evaluator for SimEvaluator {
    fn fitness(&self, genome: &Genome) -> f64 {
        match fitness::evaluate(genome, &self.sim, fitness::EvalMode::Full) {
            Ok(trace) => trace.fitness,
            Err(e) => {
                log::warn!("evaluation failed, assigning fitness 0: {e}");
                0.0
            }
        }
    }
}

fn evaluate_all<E: Evaluator + ?Sized>(individuals: &mut [Individual], evaluator: &E) {
    individuals.par_iter_mut().filter(|i| i.fitness.is_none()).for_each(|ind| {
        let f = evaluator.fitness(&ind.genome);
        ind.fitness = Some(if f.is_finite() { f } else { 0.0 });
    });
}

/// Evolution settings that do not depend on where results are written.
#[derive(Clone, Debug, PartialEq)]
pub struct EvolutionParams {
    pub mode: Mode,
    pub population_size: usize,
    pub generations: u32,
    pub mutation: MutationConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Population {
    pub members: Vec<Individual>,
    pub generation: u32,
    pub rng_seed: u64,
    rng: ChaCha8Rng,
    next_id: u64,
}

/// Per-generation summary of the population after selection.
#[derive(Clone, Debug, PartialEq)]
pub struct GenerationSummary {
    pub generation: u32,
    pub best_fitness: f64,
    pub mean_fitness: f64,
    pub best_id: u64,
    pub best_window: f64,
}

/// Everything known about one individual once it has left the population
/// (or the run has ended).
#[derive(Clone, Debug, PartialEq)]
pub struct LineageRecord {
    pub id: u64,
    pub parent_id: Option<u64>,
    pub birth_generation: u32,
    pub age_at_death_or_end: u32,
    pub fitness: f64,
    pub window: f64,
    pub mutation: MutationFlags,
    pub genome: Genome,
}

impl LineageRecord {
    fn from_individual(ind: &Individual) -> LineageRecord {
        LineageRecord {
            id: ind.id,
            parent_id: ind.parent_id,
            birth_generation: ind.birth_generation,
            age_at_death_or_end: ind.age,
            fitness: ind.score(),
            window: crate::analysis::total_window(&ind.genome),
            mutation: ind.mutation,
            genome: ind.genome.clone(),
        }
    }

    pub fn mode(&self) -> Mode {
        self.genome.mode()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub seed: u64,
    pub mode: Mode,
    pub generations: Vec<GenerationSummary>,
    /// Every individual ever evaluated, ordered by id.
    pub lineage: Vec<LineageRecord>,
}

impl RunRecord {
    /// Highest-fitness member of the final population.
    pub fn champion(&self) -> Option<&LineageRecord> {
        let last = self.generations.last()?;
        self.lineage.iter().find(|r| r.id == last.best_id)
    }

    pub fn record(&self, id: u64) -> Option<&LineageRecord> {
        self.lineage.binary_search_by_key(&id, |r| r.id).ok().map(|i| &self.lineage[i])
    }
}

fn summarize(members: &[Individual], generation: u32) -> GenerationSummary {
    let best = members
        .iter()
        .min_by(|a, b| fill_order(a, b))
        .expect("population is never empty");
    let mean = members.iter().map(Individual::score).sum::<f64>() / members.len() as f64;
    GenerationSummary {
        generation,
        best_fitness: best.score(),
        mean_fitness: mean,
        best_id: best.id,
        best_window: crate::analysis::total_window(&best.genome),
    }
}

impl Population {
    /// A random, evaluated initial population (generation 0).
    pub fn initial<E: Evaluator + ?Sized>(params: &EvolutionParams, seed: u64, evaluator: &E) -> Population {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut members: Vec<Individual> = (0..params.population_size as u64)
            .map(|id| Individual::new_random(id, params.mode, 0, &mut rng))
            .collect();
        evaluate_all(&mut members, evaluator);
        Population { members, generation: 0, rng_seed: seed, rng, next_id: params.population_size as u64 }
    }

    fn fresh_id(&mut self) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    /// One AFPO generation. Returns the individuals that did not survive.
    pub fn step<E: Evaluator + ?Sized>(
        &mut self,
        params: &EvolutionParams,
        evaluator: &E,
    ) -> Vec<Individual> {
        assert!(self.members.iter().all(|m| m.fitness.is_some()), "all members must be evaluated");
        let birth = self.generation + 1;
        let target = self.members.len();
        let mut newcomers = Vec::with_capacity(target + 1);
        for i in 0..self.members.len() {
            let id = self.fresh_id();
            let child = mutate(&self.members[i], id, birth, &params.mutation, &mut self.rng);
            newcomers.push(child);
        }
        let id = self.fresh_id();
        newcomers.push(Individual::new_random(id, params.mode, birth, &mut self.rng));
        evaluate_all(&mut newcomers, evaluator);

        let mut candidates = std::mem::take(&mut self.members);
        candidates.extend(newcomers);
        let keep = select_survivors(&candidates, target);
        let mut survivors = Vec::with_capacity(target);
        let mut dead = Vec::with_capacity(candidates.len() - target);
        let mut keep = keep.into_iter().peekable();
        for (i, ind) in candidates.into_iter().enumerate() {
            if keep.next_if_eq(&i).is_some() {
                survivors.push(ind);
            } else {
                dead.push(ind);
            }
        }
        survivors.iter_mut().for_each(|m| m.age += 1);
        survivors.sort_by_key(|m| m.id);
        self.members = survivors;
        self.generation += 1;
        dead
    }
}

/// Run AFPO for `params.generations` generations from `seed`.
///
/// Evaluations run on the current rayon pool; results do not depend on its size.
pub fn run_evolution<E: Evaluator + ?Sized>(params: &EvolutionParams, seed: u64, evaluator: &E) -> RunRecord {
    let mut pop = Population::initial(params, seed, evaluator);
    let mut lineage: BTreeMap<u64, LineageRecord> = BTreeMap::new();
    let mut generations = vec![summarize(&pop.members, 0)];
    for _ in 0..params.generations {
        let dead = pop.step(params, evaluator);
        for d in &dead {
            lineage.insert(d.id, LineageRecord::from_individual(d));
        }
        generations.push(summarize(&pop.members, pop.generation));
    }
    for m in &pop.members {
        lineage.insert(m.id, LineageRecord::from_individual(m));
    }
    RunRecord { seed, mode: params.mode, generations, lineage: lineage.into_values().collect() }
}
