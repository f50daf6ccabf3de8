//! The eleven acceptance criteria, run in order with one pass/fail line each.
//!
//! Criteria 7, 9 and 11 evolve the desk preset twice (about an hour on one
//! core). Everything runs in a temporary directory.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use softbot_devo::analysis::figures::window_fitness_correlation;
use softbot_devo::analysis::{
    self, early_late_split, fraction_near_zero, mann_whitney_normal, mann_whitney_u, median, mutation_impact,
    mutation_impacts, total_window, Histogram,
};
use softbot_devo::evolution::{dominates, mutate, pareto_dominates, select_survivors, Individual, MutationFlags};
use softbot_devo::fitness::{evaluate, fitness_from_samples, total_volume};
use softbot_devo::genome::{
    actuation, current_length, damping_factor, random_genome, rest_length, ActuationParams, Gene, Genome, Mode,
    NUM_GENES,
};
use softbot_devo::records::{self, data_rows, RunDir};
use softbot_devo::{EvalMode, ExperimentConfig, MutationConfig};

type Outcome = Result<String, String>;

fn close(got: f64, want: f64, what: &str) -> Result<(), String> {
    let ok = if want == 0.0 { got.abs() <= 1e-12 } else { (got - want).abs() <= 1e-12 * want.abs() };
    if ok {
        Ok(())
    } else {
        Err(format!("{what}: got {got}, want {want}"))
    }
}

fn within(elapsed: Duration, limit: Duration, detail: String) -> Outcome {
    if elapsed <= limit {
        Ok(format!("{detail}; {:.2} s", elapsed.as_secs_f64()))
    } else {
        Err(format!("{detail}; took {:.1} s, limit {:.0} s", elapsed.as_secs_f64(), limit.as_secs_f64()))
    }
}

fn analytic_laws() -> Outcome {
    let start = Instant::now();
    let p = ActuationParams::default();
    let g = |a, b| Gene::new(a, b).unwrap();
    let mut checks = 0;
    let mut check = |got: f64, want: f64, what: &str| -> Result<(), String> {
        checks += 1;
        close(got, want, what)
    };
    check(damping_factor(1.0), 1.0, "d(1)")?;
    check(damping_factor(1.6), 1.0, "d(1.6)")?;
    check(damping_factor(0.25), 0.0, "d(0.25)")?;
    check(damping_factor(0.625), 0.5, "d(0.625)")?;
    check(actuation(0.0, p), 0.0, "a(0)")?;
    check(actuation(0.0625, p), 0.2, "a(1/16)")?;
    check(actuation(0.125, p), 0.0, "a(1/8)")?;
    check(actuation(0.1875, p), -0.2, "a(3/16)")?;
    check(rest_length(Gene::UNIT, 3.3, 8.0).unwrap(), 1.0, "r unit")?;
    check(rest_length(g(0.5, 1.5), 4.0, 8.0).unwrap(), 1.0, "r midlife")?;
    check(rest_length(g(1.5, 0.5), 8.0, 8.0).unwrap(), 0.5, "r end")?;
    check(rest_length(g(1.5, 0.5), 0.0, 8.0).unwrap(), 1.5, "r start")?;
    check(current_length(Gene::UNIT, 0.0, 8.0, p).unwrap(), 1.0, "L(0)")?;
    check(current_length(Gene::UNIT, 0.0625, 8.0, p).unwrap(), 1.2, "L peak")?;
    check(current_length(Gene::fixed(0.25).unwrap(), 1.37, 8.0, p).unwrap(), 0.25, "L fully damped")?;
    check(current_length(Gene::fixed(0.625).unwrap(), 0.0625, 8.0, p).unwrap(), 0.725, "L half damped")?;
    let unit = Genome::uniform(Gene::UNIT, Mode::Evo).unwrap();
    check(total_volume(&unit, 0.0, 8.0, p).unwrap(), 48.0, "Q unit")?;
    check(total_volume(&unit, 0.0625, 8.0, p).unwrap(), 48.0 * 1.2f64.powi(3), "Q peak")?;
    let half = Genome::uniform(Gene::fixed(0.5).unwrap(), Mode::Evo).unwrap();
    check(total_volume(&half, 0.0, 8.0, p).unwrap(), 6.0, "Q half")?;
    check(total_window(&unit), 0.0, "W evo")?;
    let mut genes = [Gene::UNIT; NUM_GENES];
    genes[3] = g(0.5, 1.5);
    check(total_window(&Genome::new(genes, Mode::EvoDevo).unwrap()), 2.0, "W one gene")?;
    check(total_window(&Genome::uniform(g(0.25, 1.75), Mode::EvoDevo).unwrap()), 72.0, "W widest")?;
    check(mutation_impact(1.3, 1.3).unwrap(), 0.0, "M neutral")?;
    check(mutation_impact(4.0, 2.0).unwrap(), -0.5, "M halved")?;
    check(mutation_impact(2.0, 3.0).unwrap(), 0.5, "M gain")?;
    if mutation_impact(0.0, 1.0).is_some() {
        return Err("M defined for zero parent fitness".into());
    }
    within(start.elapsed(), Duration::from_secs(1), format!("{checks} closed-form values at 1e-12"))
}

fn evo_equivalence(desk: &ExperimentConfig) -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for i in 0..100 {
        let g = random_genome(Mode::Evo, &mut rng);
        let a = evaluate(&g, &desk.sim, EvalMode::Full).map_err(|e| e.to_string())?;
        let b = evaluate(&g.to_evo_devo(), &desk.sim, EvalMode::Full).map_err(|e| e.to_string())?;
        if a != b {
            return Err(format!("genome {i}: traces differ"));
        }
    }
    within(start.elapsed(), Duration::from_secs(300), "100 genomes, identical traces".into())
}

fn fitness_reduction() -> Outcome {
    let one: Vec<(f64, f64)> = (0..=800).map(|i| (0.06 * i as f64, 48.0)).collect();
    close(fitness_from_samples(one), 1.0, "48 voxel lengths at volume 48")?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let q = rng.random_range(0.5..200.0);
        let n = rng.random_range(2..900);
        let ys: Vec<f64> = (0..n).map(|_| rng.random_range(-50.0..50.0)).collect();
        let f = fitness_from_samples(ys.iter().map(|&y| (y, q)));
        let want = (ys[n - 1] - ys[0]) / q;
        if (f - want).abs() > 1e-12 * want.abs().max(1.0) {
            return Err(format!("F {f} vs displacement/volume {want}"));
        }
    }
    Ok("fitness-of-one example exact; 1000 synthetic traces at 1e-12".into())
}

fn mutation_statistics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cfg = MutationConfig::default();
    let n = 100_000u64;
    let parent = |rng: &mut ChaCha8Rng, mode| Individual {
        id: 0,
        parent_id: None,
        genome: random_genome(mode, rng),
        age: 0,
        fitness: None,
        birth_generation: 0,
        mutation: MutationFlags::default(),
    };
    let mut sets = [0u64; 3];
    let mut genes = [0u64; 2];
    for (slot, mode) in [Mode::Evo, Mode::EvoDevo].into_iter().enumerate() {
        for i in 0..n {
            let p = parent(&mut rng, mode);
            let c = mutate(&p, i + 1, 1, &cfg, &mut rng);
            genes[slot] += p.genome.genes().iter().zip(c.genome.genes()).filter(|(a, b)| a != b).count() as u64;
            if mode == Mode::EvoDevo {
                match (c.mutation.s0, c.mutation.s1) {
                    (true, true) => sets[0] += 1,
                    (true, false) => sets[1] += 1,
                    (false, true) => sets[2] += 1,
                    (false, false) => {}
                }
            }
        }
    }
    let freq: Vec<f64> = sets.iter().map(|&c| c as f64 / n as f64).collect();
    let ratio = genes[1] as f64 / genes[0] as f64;
    let detail = format!(
        "both {:.4} s0-only {:.4} s1-only {:.4}; genes changed evo-devo/evo {:.4}",
        freq[0], freq[1], freq[2], ratio
    );
    let sets_ok = freq.iter().zip([0.25, 0.375, 0.375]).all(|(f, w)| (f - w).abs() < 0.01);
    if sets_ok && (ratio - 1.0).abs() < 0.02 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn afpo_properties() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let ind = |id, f: f64, age| Individual {
        id,
        parent_id: None,
        genome: Genome::uniform(Gene::UNIT, Mode::Evo).unwrap(),
        age,
        fitness: Some(f),
        birth_generation: 0,
        mutation: MutationFlags::default(),
    };
    for round in 0..10_000 {
        let target = rng.random_range(1..16);
        let pop: Vec<Individual> = (0..(2 * target + 1) as u64)
            .map(|id| ind(id, rng.random_range(0..8) as f64 / 4.0, rng.random_range(0..6)))
            .collect();
        for a in &pop {
            if pareto_dominates(a, a) {
                return Err(format!("round {round}: dominance is reflexive"));
            }
            for b in &pop {
                if pareto_dominates(a, b) && pareto_dominates(b, a) {
                    return Err(format!("round {round}: dominance is symmetric"));
                }
                for c in pop.iter().take(8) {
                    let (x, y, z) = ((a.score(), a.age), (b.score(), b.age), (c.score(), c.age));
                    if dominates(x, y) && dominates(y, z) && !dominates(x, z) {
                        return Err(format!("round {round}: dominance is not transitive"));
                    }
                }
            }
        }
        let keep = select_survivors(&pop, target);
        if keep.len() != target {
            return Err(format!("round {round}: {} survivors for {target} slots", keep.len()));
        }
        let kept = |i: usize| keep.binary_search(&i).is_ok();
        let front: Vec<usize> = (0..pop.len()).filter(|&i| !pop.iter().any(|o| pareto_dominates(o, &pop[i]))).collect();
        if front.len() <= target && !front.iter().all(|&i| kept(i)) {
            return Err(format!("round {round}: nondominated individual discarded"));
        }
        for d in (0..pop.len()).filter(|&i| !kept(i)) {
            if keep.iter().any(|&s| pareto_dominates(&pop[d], &pop[s])) {
                return Err(format!("round {round}: discarded {d} dominates a survivor"));
            }
        }
    }
    within(start.elapsed(), Duration::from_secs(30), "10^4 random populations".into())
}

fn random_search_direction(desk: &ExperimentConfig) -> Outcome {
    let start = Instant::now();
    let n = desk.random_search.n;
    let eps = desk.random_search.epsilon;
    let mut abs = Vec::new();
    let mut raw = Vec::new();
    for mode in [Mode::Evo, Mode::EvoDevo] {
        let robots = analysis::random_search(n, mode, &desk.sim, desk.seed).map_err(|e| e.to_string())?;
        let f: Vec<f64> = robots.iter().map(|r| r.fitness).collect();
        abs.push(f.iter().map(|v| v.abs()).collect::<Vec<f64>>());
        raw.push(f);
    }
    let (evo, devo) = (fraction_near_zero(&raw[0], eps), fraction_near_zero(&raw[1], eps));
    let mw = mann_whitney_u(&abs[1], &abs[0]).map_err(|e| e.to_string())?;
    let hist = Histogram::pooled(&[&raw[0], &raw[1]], desk.random_search.bins).map_err(|e| e.to_string())?;
    let zero = hist.bin_of(0.0);
    let detail = format!(
        "n={n} |F|<{eps}: evo {evo:.3} evo-devo {devo:.3}; MW on |F| U={} p={:.4}; zero in modal bin: evo {} evo-devo {}; {:.0} s",
        mw.u,
        mw.p,
        zero == Some(hist.mode_bin(0)),
        zero == Some(hist.mode_bin(1)),
        start.elapsed().as_secs_f64()
    );
    // Evo-Devo must have less mass near zero, i.e. larger |F|.
    if devo < evo && mw.p < 0.05 && mw.u > mw.u_other {
        Ok(detail)
    } else {
        Err(detail)
    }
}

struct DeskRuns {
    evo: RunDir,
    devo: RunDir,
    dirs: [PathBuf; 2],
}

fn run_desk(root: &Path, jobs: usize) -> Result<DeskRuns, String> {
    let desk = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../desk.cfg");
    let mut dirs = Vec::new();
    for mode in ["evo", "evo-devo"] {
        let out = root.join(mode);
        let code = softbot_devo::cli::main_with_args([
            "softbot",
            "--jobs",
            &jobs.to_string(),
            "evolve",
            "--config",
            desk.to_str().unwrap(),
            "--mode",
            mode,
            "--output",
            out.to_str().unwrap(),
        ]);
        if code != 0 {
            return Err(format!("evolve --mode {mode} exited with {code}"));
        }
        dirs.push(out);
    }
    let load = |p: &Path| records::load_run_dir(p).map_err(|e| e.to_string());
    Ok(DeskRuns { evo: load(&dirs[0])?, devo: load(&dirs[1])?, dirs: [dirs[0].clone(), dirs[1].clone()] })
}

fn champions(dir: &RunDir) -> Vec<f64> {
    dir.runs.iter().map(|r| analysis::champion_fitness(&r.record)).collect()
}

fn evolvability(runs: &DeskRuns, elapsed: Duration) -> Outcome {
    let (e, d) = (champions(&runs.evo), champions(&runs.devo));
    let mw = mann_whitney_u(&d, &e).map_err(|e| e.to_string())?;
    let elitist = runs
        .evo
        .runs
        .iter()
        .chain(&runs.devo.runs)
        .all(|r| r.record.generations.windows(2).all(|w| w[1].best_fitness >= w[0].best_fitness));
    let detail = format!(
        "median champion evo {:.4} evo-devo {:.4} over {}+{} runs; U={} p={:.4}; best fitness non-decreasing in all runs: {elitist}; {:.0} s",
        median(&e),
        median(&d),
        e.len(),
        d.len(),
        mw.u,
        mw.p,
        elapsed.as_secs_f64()
    );
    if median(&d) >= median(&e) && elitist {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn window_correlation(runs: &DeskRuns) -> Outcome {
    let s = window_fitness_correlation(&[&runs.devo]).map_err(|e| e.to_string())?;
    let detail = format!("spearman(W, F | F > run median) rho={:.4} n={} p={:.3e}", s.rho, s.n, s.p);
    if s.rho < 0.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn early_late(runs: &DeskRuns) -> Outcome {
    let impacts: Vec<_> = runs.devo.runs.iter().flat_map(|r| mutation_impacts(&r.record.lineage)).collect();
    let split = early_late_split(&impacts);
    let (Some(m0), Some(m1)) = (split.early, split.late) else {
        return Err(format!("missing class among {} pairs", impacts.len()));
    };
    let mw = mann_whitney_u(&split.late_values, &split.early_values).map_err(|e| e.to_string())?;
    let detail = format!(
        "evo-devo M0 (early)={:.4} n={} M1 (late only)={:.4} n={}; MW late vs early U={} p={:.3e}",
        m0.mean, m0.count, m1.mean, m1.count, mw.u, mw.p
    );
    if m1.mean > m0.mean && mw.p < 0.05 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn pair_u(a: &[f64], b: &[f64]) -> f64 {
    a.iter().flat_map(|x| b.iter().map(move |y| if x > y { 1.0 } else if x == y { 0.5 } else { 0.0 })).sum()
}

fn enumerated_p(a: &[f64], b: &[f64]) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let centre = (a.len() * b.len()) as f64 / 2.0;
    let observed = (pair_u(a, b) - centre).abs();
    let (mut hit, mut total) = (0u32, 0u32);
    for mask in 0u32..(1 << pooled.len()) {
        if mask.count_ones() as usize != a.len() {
            continue;
        }
        let x: Vec<f64> = (0..pooled.len()).filter(|i| mask & (1 << i) != 0).map(|i| pooled[i]).collect();
        let y: Vec<f64> = (0..pooled.len()).filter(|i| mask & (1 << i) == 0).map(|i| pooled[i]).collect();
        total += 1;
        hit += ((pair_u(&x, &y) - centre).abs() >= observed - 1e-9) as u32;
    }
    hit as f64 / total as f64
}

fn mann_whitney_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (mut worst, mut worst_normal, mut cases) = (0f64, 0f64, 0);
    for na in 1..=6 {
        for nb in 1..=6 {
            for trial in 0..30 {
                let mut draw = || if trial % 2 == 0 { rng.random_range(0..4) as f64 } else { rng.random::<f64>() };
                let a: Vec<f64> = (0..na).map(|_| draw()).collect();
                let b: Vec<f64> = (0..nb).map(|_| draw()).collect();
                let r = mann_whitney_u(&a, &b).map_err(|e| e.to_string())?;
                if r.u != pair_u(&a, &b) {
                    return Err(format!("{a:?} vs {b:?}: U {} vs {}", r.u, pair_u(&a, &b)));
                }
                let want = enumerated_p(&a, &b);
                worst = worst.max((r.p - want).abs());
                worst_normal = worst_normal.max((mann_whitney_normal(&a, &b).unwrap().p - want).abs());
                cases += 1;
            }
        }
    }
    let detail = format!(
        "{cases} sample pairs, U exact; max |p - enumerated| {worst:.2e} (normal approximation alone: {worst_normal:.3})"
    );
    if worst <= 0.05 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn determinism(first: &DeskRuns, second: &DeskRuns) -> Outcome {
    let mut files = 0;
    for (a, b) in first.dirs.iter().zip(&second.dirs) {
        let runs = records::read_manifest(&a.join(records::MANIFEST_FILE)).map_err(|e| e.to_string())?.1.len() as u32;
        for run in 0..runs {
            for (pa, pb) in [
                (records::generations_path(a, run), records::generations_path(b, run)),
                (records::lineage_path(a, run), records::lineage_path(b, run)),
            ] {
                let (ta, tb) = (std::fs::read(&pa).unwrap(), std::fs::read(&pb).unwrap());
                if ta != tb {
                    return Err(format!("{} differs from {}", pa.display(), pb.display()));
                }
                files += 1;
            }
        }
        let strip = |p: &Path| {
            let text = std::fs::read_to_string(p.join(records::MANIFEST_FILE)).unwrap();
            // Drop the wall-time column.
            let mut rows: Vec<String> =
                data_rows(&text).lines().map(|l| l.rsplit_once(',').unwrap().0.to_string()).collect();
            rows.sort();
            rows
        };
        if strip(a) != strip(b) {
            return Err(format!("manifest of {} differs", a.display()));
        }
    }
    Ok(format!("{files} run files byte-identical between --jobs 8 and a --jobs 1 rerun"))
}

#[test]
fn acceptance_criteria() {
    let desk = ExperimentConfig::desk();
    let tmp = tempfile::tempdir().unwrap();
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut report = |n: u32, name: &'static str, outcome: Outcome| {
        match &outcome {
            Ok(d) => println!("criterion {n:>2} PASS {name}: {d}"),
            Err(d) => println!("criterion {n:>2} FAIL {name}: {d}"),
        }
        results.push((n, name, outcome));
    };

    report(1, "analytic laws", analytic_laws());
    report(2, "evo equivalence", evo_equivalence(&desk));
    report(3, "fitness reduction", fitness_reduction());
    report(4, "mutation statistics", mutation_statistics());
    report(5, "afpo properties", afpo_properties());
    report(6, "random-search direction", random_search_direction(&desk));

    let start = Instant::now();
    let first = run_desk(&tmp.path().join("jobs8"), 8);
    let elapsed = start.elapsed();
    match &first {
        Ok(runs) => {
            report(7, "evolvability direction", evolvability(runs, elapsed));
            report(8, "window-fitness correlation", window_correlation(runs));
            report(9, "early/late asymmetry", early_late(runs));
        }
        Err(e) => {
            for (n, name) in [(7, "evolvability direction"), (8, "window-fitness correlation"), (9, "early/late asymmetry")] {
                report(n, name, Err(e.clone()));
            }
        }
    }
    report(10, "mann-whitney oracle", mann_whitney_oracle());
    let second = run_desk(&tmp.path().join("jobs1"), 1);
    let outcome = match (&first, &second) {
        (Ok(a), Ok(b)) => determinism(a, b),
        (Err(e), _) | (_, Err(e)) => Err(e.clone()),
    };
    report(11, "determinism", outcome);

    let failed: Vec<String> =
        results.iter().filter(|r| r.2.is_err()).map(|(n, name, _)| format!("{n} ({name})")).collect();
    println!("{} of {} criteria passed", results.len() - failed.len(), results.len());
    assert!(failed.is_empty(), "failed criteria: {}", failed.join(", "));
}
