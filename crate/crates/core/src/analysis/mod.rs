//! Post-hoc statistics over evaluated robots and evolutionary runs.

pub mod figures;
pub mod plot;

use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::evolution::{run_evolution, EvolutionParams, LineageRecord, RunRecord, SimEvaluator};
use crate::fitness::{self, EvalMode};
use crate::genome::{random_genome, Genome, Mode};
use crate::physics::SimConfig;
use crate::Error;

/// Total development window over all 48 voxels: Σ |s1 − s0|.
pub fn total_window(genome: &Genome) -> f64 {
    2.0 * genome.genes().iter().map(|g| g.window()).sum::<f64>()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindowStat {
    pub individual_id: u64,
    pub window: f64,
}

/// Relative fitness change from parent to child, `F_C / F_P − 1`.
///
/// Only defined when both fitnesses are positive; returns `None` otherwise.
pub fn mutation_impact(parent_fitness: f64, child_fitness: f64) -> Option<f64> {
    (parent_fitness > 0.0 && child_fitness > 0.0).then(|| child_fitness / parent_fitness - 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MutationImpact {
    pub parent_id: u64,
    pub child_id: u64,
    pub parent_fitness: f64,
    pub child_fitness: f64,
    pub m: f64,
    /// The mutation changed some starting length.
    pub early: bool,
    /// The mutation changed some final length.
    pub late: bool,
}

/// Every parent–child pair in `lineage` with positive fitness on both sides
/// and a mutation that changed something.
pub fn mutation_impacts(lineage: &[LineageRecord]) -> Vec<MutationImpact> {
    let by_id = |id: u64| lineage.binary_search_by_key(&id, |r| r.id).ok().map(|i| &lineage[i]);
    lineage
        .iter()
        .filter(|c| c.mutation.s0 || c.mutation.s1)
        .filter_map(|c| {
            let p = by_id(c.parent_id?)?;
            let m = mutation_impact(p.fitness, c.fitness)?;
            Some(MutationImpact {
                parent_id: p.id,
                child_id: c.id,
                parent_fitness: p.fitness,
                child_fitness: c.fitness,
                m,
                early: c.mutation.s0,
                late: c.mutation.s1,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassMean {
    pub mean: f64,
    pub count: usize,
}

impl ClassMean {
    fn of(values: &[f64]) -> Option<ClassMean> {
        (!values.is_empty()).then(|| ClassMean { mean: mean(values), count: values.len() })
    }
}

/// Mean mutation impact of early mutations (touching any starting length)
/// and late mutations (touching final lengths only).
#[derive(Clone, Debug, PartialEq)]
pub struct EarlyLateSplit {
    pub early: Option<ClassMean>,
    pub late: Option<ClassMean>,
    pub early_values: Vec<f64>,
    pub late_values: Vec<f64>,
}

pub fn early_late_split(impacts: &[MutationImpact]) -> EarlyLateSplit {
    let early_values: Vec<f64> = impacts.iter().filter(|i| i.early).map(|i| i.m).collect();
    let late_values: Vec<f64> = impacts.iter().filter(|i| i.late && !i.early).map(|i| i.m).collect();
    EarlyLateSplit {
        early: ClassMean::of(&early_values),
        late: ClassMean::of(&late_values),
        early_values,
        late_values,
    }
}

/// Midranks (1-based) of `values`; ties share the mean of their positions.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PMethod {
    Exact,
    Normal,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MannWhitney {
    /// U statistic of the first sample: pairs (a, b) with a > b, ties counting ½.
    pub u: f64,
    /// U of the second sample; `u + u_other = n_a · n_b`.
    pub u_other: f64,
    pub n_a: usize,
    pub n_b: usize,
    /// Tie- and continuity-corrected normal score (0 when all values tie).
    pub z: f64,
    /// Two-sided p-value.
    pub p: f64,
    pub method: PMethod,
}

/// Pooled sizes up to this use the exact permutation distribution of U.
pub const EXACT_LIMIT: usize = 30;

/// Mann–Whitney U test with midranks for ties.
///
/// The two-sided p-value comes from the exact permutation distribution when
/// `n_a + n_b ≤ EXACT_LIMIT` and from the normal approximation (tie and
/// continuity corrected) otherwise.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MannWhitney, Error> {
    let mut out = mann_whitney_normal(a, b)?;
    if a.len() + b.len() <= EXACT_LIMIT {
        out.p = exact_p_value(a, b);
        out.method = PMethod::Exact;
    }
    Ok(out)
}

/// Like [`mann_whitney_u`] but always using the normal approximation.
pub fn mann_whitney_normal(a: &[f64], b: &[f64]) -> Result<MannWhitney, Error> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientData("Mann-Whitney U needs two non-empty samples".into()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::InsufficientData("Mann-Whitney U needs finite values".into()));
    }
    let (na, nb) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled);
    let ra: f64 = ranks[..na].iter().sum();
    let u = ra - (na * (na + 1)) as f64 / 2.0;
    let nab = (na * nb) as f64;
    let n = (na + nb) as f64;
    let ties: f64 = tie_groups(&pooled).map(|t| (t * t * t - t) as f64).sum();
    let var = nab / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)).max(1.0));
    let (z, p) = if var > 0.0 {
        let d = (u - nab / 2.0).abs();
        let z = (d - 0.5).max(0.0) / var.sqrt();
        (z.copysign(u - nab / 2.0), statrs::function::erf::erfc(z / std::f64::consts::SQRT_2).min(1.0))
    } else {
        (0.0, 1.0)
    };
    Ok(MannWhitney { u, u_other: nab - u, n_a: na, n_b: nb, z, p, method: PMethod::Normal })
}

fn tie_groups(values: &[f64]) -> impl Iterator<Item = usize> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut groups = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|&&v| v == sorted[i]).count();
        groups.push(j);
        i += j;
    }
    groups.into_iter()
}

/// Exact two-sided p-value of U under random assignment of the pooled
/// (midranked) values to the two groups: P(|U − μ| ≥ |u − μ|).
///
/// Counts subsets by dynamic programming over doubled rank sums, so the cost
/// grows as `n · n_a · n²`; intended for small samples.
pub fn exact_p_value(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let doubled: Vec<usize> = midranks(&pooled).iter().map(|r| (2.0 * r).round() as usize).collect();
    let max_sum: usize = doubled.iter().sum();
    // ways[k][s]: subsets of size k with doubled rank sum s.
    let mut ways = vec![vec![0f64; max_sum + 1]; na + 1];
    ways[0][0] = 1.0;
    for &r in &doubled {
        for k in (1..=na).rev() {
            let (lo, hi) = ways.split_at_mut(k);
            for s in (r..=max_sum).rev() {
                hi[0][s] += lo[k - 1][s - r];
            }
        }
    }
    // Doubled U = doubled rank sum − n_a(n_a + 1); centre is n_a·n_b.
    let offset = na * (na + 1);
    let observed: usize = doubled[..na].iter().sum();
    let centre = (na * nb) as i64;
    let dev = |s: usize| ((s as i64 - offset as i64) - centre).abs();
    let d_obs = dev(observed);
    let (mut hit, mut total) = (0.0, 0.0);
    for (s, &w) in ways[na].iter().enumerate() {
        if w > 0.0 {
            total += w;
            if dev(s) >= d_obs {
                hit += w;
            }
        }
    }
    (hit / total).min(1.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Spearman {
    pub rho: f64,
    pub n: usize,
    /// Two-sided p from the t approximation; 1 when undefined.
    pub p: f64,
}

/// Spearman rank correlation (Pearson correlation of midranks).
pub fn spearman(x: &[f64], y: &[f64]) -> Result<Spearman, Error> {
    if x.len() != y.len() {
        return Err(Error::InsufficientData(format!("length mismatch: {} vs {}", x.len(), y.len())));
    }
    if x.len() < 3 {
        return Err(Error::InsufficientData("Spearman correlation needs at least 3 pairs".into()));
    }
    let (rx, ry) = (midranks(x), midranks(y));
    let (mx, my) = (mean(&rx), mean(&ry));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    let n = x.len();
    if sxx == 0.0 || syy == 0.0 {
        return Ok(Spearman { rho: 0.0, n, p: 1.0 });
    }
    let rho = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let p = if rho.abs() >= 1.0 {
        0.0
    } else {
        let t = rho * (df / (1.0 - rho * rho)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
        2.0 * dist.cdf(-t.abs())
    };
    Ok(Spearman { rho, n, p })
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Linear-interpolated quantile (`q` in [0, 1]) of an unsorted sample.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty(), "quantile of an empty sample");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

/// Stateless seed derivation (SplitMix64 finaliser over the pair).
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RandomRobot {
    pub index: usize,
    pub fitness: f64,
    pub rolled_over: bool,
    pub genome: Genome,
}

/// Evaluate `n` random genomes of one mode. Genomes are drawn sequentially
/// from `seed`; evaluation runs on the current rayon pool.
pub fn random_search(n: usize, mode: Mode, sim: &SimConfig, seed: u64) -> Result<Vec<RandomRobot>, Error> {
    sim.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(match mode {
        Mode::Evo => 0,
        Mode::EvoDevo => 1,
    });
    let genomes: Vec<Genome> = (0..n).map(|_| random_genome(mode, &mut rng)).collect();
    genomes
        .into_par_iter()
        .enumerate()
        .map(|(index, genome)| {
            let trace = fitness::evaluate(&genome, sim, EvalMode::Full)?;
            Ok(RandomRobot { index, fitness: trace.fitness, rolled_over: trace.terminated_rollover, genome })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    /// `bins + 1` edges spanning the pooled range.
    pub edges: Vec<f64>,
    /// One count vector per input sample.
    pub counts: Vec<Vec<usize>>,
}

impl Histogram {
    /// Equal-width bins over the pooled range of all samples.
    pub fn pooled(samples: &[&[f64]], bins: usize) -> Result<Histogram, Error> {
        if bins == 0 {
            return Err(Error::Config("histogram needs at least one bin".into()));
        }
        let all = samples.iter().flat_map(|s| s.iter().copied());
        let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        if !lo.is_finite() {
            return Err(Error::InsufficientData("histogram of empty samples".into()));
        }
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
        let width = (hi - lo) / bins as f64;
        let edges = (0..=bins).map(|i| lo + i as f64 * width).collect();
        let counts = samples
            .iter()
            .map(|s| {
                let mut c = vec![0; bins];
                for &v in s.iter() {
                    c[(((v - lo) / width) as usize).min(bins - 1)] += 1;
                }
                c
            })
            .collect();
        Ok(Histogram { edges, counts })
    }

    pub fn bin_of(&self, value: f64) -> Option<usize> {
        let bins = self.edges.len() - 1;
        (value >= self.edges[0] && value <= self.edges[bins]).then(|| {
            let w = self.edges[1] - self.edges[0];
            (((value - self.edges[0]) / w) as usize).min(bins - 1)
        })
    }

    /// Index of the most populated bin of sample `i` (lowest index on ties).
    pub fn mode_bin(&self, i: usize) -> usize {
        let c = &self.counts[i];
        let max = *c.iter().max().unwrap_or(&0);
        c.iter().position(|&v| v == max).unwrap_or(0)
    }
}

/// Fraction of values with magnitude below `eps`.
pub fn fraction_near_zero(values: &[f64], eps: f64) -> f64 {
    values.iter().filter(|v| v.abs() < eps).count() as f64 / values.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineageStep {
    pub id: u64,
    pub birth_generation: u32,
    pub window: f64,
    pub fitness: f64,
}

/// Ancestry of `champion_id`, from its oldest ancestor to itself.
/// `records` must be sorted by id.
pub fn lineage_extract(records: &[LineageRecord], champion_id: u64) -> Result<Vec<LineageStep>, Error> {
    let mut path = Vec::new();
    let mut seen = HashSet::new();
    let mut next = Some(champion_id);
    while let Some(id) = next {
        if !seen.insert(id) {
            return Err(Error::InvalidGenome(format!("parent links form a cycle through individual {id}")));
        }
        let idx = records.binary_search_by_key(&id, |r| r.id).map_err(|_| Error::MissingAncestor(id))?;
        let r = &records[idx];
        path.push(LineageStep { id, birth_generation: r.birth_generation, window: r.window, fitness: r.fitness });
        next = r.parent_id;
    }
    path.reverse();
    Ok(path)
}

/// Individuals of a run whose fitness exceeds the run's median.
pub fn above_median(lineage: &[LineageRecord]) -> Vec<&LineageRecord> {
    if lineage.is_empty() {
        return Vec::new();
    }
    let f: Vec<f64> = lineage.iter().map(|r| r.fitness).collect();
    let m = median(&f);
    lineage.iter().filter(|r| r.fitness > m).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepCell {
    pub rate: f64,
    pub mode: Mode,
    pub run: u32,
    pub seed: u64,
    pub champion_fitness: f64,
}

/// Run evolution for every (rate, mode, run) cell. Run `r` uses seed
/// `derive_seed(seed, r)` at every rate and in both modes.
pub fn sweep(
    rates: &[f64],
    runs: u32,
    modes: &[Mode],
    base: &EvolutionParams,
    sim: &SimConfig,
    seed: u64,
) -> Result<Vec<SweepCell>, Error> {
    if let Some(r) = rates.iter().find(|r| !(0.0..=1.0).contains(*r)) {
        return Err(Error::Config(format!("sweep rate {r} outside [0, 1]")));
    }
    sim.validate()?;
    let evaluator = SimEvaluator { sim: sim.clone() };
    let mut cells = Vec::new();
    for &rate in rates {
        for &mode in modes {
            for run in 0..runs {
                let mut params = base.clone();
                params.mode = mode;
                params.mutation.per_voxel_prob = rate;
                let run_seed = derive_seed(seed, run as u64);
                let record = run_evolution(&params, run_seed, &evaluator);
                cells.push(SweepCell { rate, mode, run, seed: run_seed, champion_fitness: champion_fitness(&record) });
            }
        }
    }
    Ok(cells)
}

/// Best fitness in the final generation (0 for an empty record).
pub fn champion_fitness(record: &RunRecord) -> f64 {
    record.generations.last().map_or(0.0, |g| g.best_fitness)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrozenRow {
    pub id: u64,
    pub full_fitness: f64,
    pub frozen_fitness: f64,
}

/// Re-evaluate genomes with development frozen at midlife for two seconds.
pub fn reevaluate_frozen(genomes: &[(u64, f64, Genome)], sim: &SimConfig) -> Result<Vec<FrozenRow>, Error> {
    genomes
        .par_iter()
        .map(|(id, full, g)| {
            let t = fitness::evaluate(g, sim, EvalMode::FrozenMidlife)?;
            Ok(FrozenRow { id: *id, full_fitness: *full, frozen_fitness: t.fitness })
        })
        .collect()
}
