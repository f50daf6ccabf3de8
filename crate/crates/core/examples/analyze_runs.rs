// Write two tiny experiments to disk the way `softbot evolve` does, load
// them back, and compute the statistics behind the analysis figures.

use softbot_devo::analysis::figures::{collect_impacts, fig4_trajectories, window_fitness_correlation};
use softbot_devo::analysis::{champion_fitness, early_late_split};
use softbot_devo::evolution::{run_evolution, SimEvaluator};
use softbot_devo::records::{self, ManifestEntry};
use softbot_devo::{ExperimentConfig, Mode};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let root = tempfile::tempdir()?;
    let mut dirs = Vec::new();
    for mode in [Mode::Evo, Mode::EvoDevo] {
        let mut cfg = ExperimentConfig::desk();
        cfg.mode = mode;
        cfg.population_size = 5;
        cfg.generations = 4;
        cfg.runs = 2;
        cfg.sim.eval_duration = 0.5;
        let dir = root.path().join(mode.as_str());
        std::fs::create_dir_all(&dir)?;
        std::fs::write(dir.join(records::CONFIG_FILE), cfg.to_toml())?;
        let evaluator = SimEvaluator { sim: cfg.sim.clone() };
        for run in 0..cfg.runs {
            let seed = softbot_devo::analysis::derive_seed(cfg.seed, run as u64);
            let record = run_evolution(&cfg.evolution_params(), seed, &evaluator);
            records::write_run(&dir, run, &record, &cfg.hash(), cfg.seed)?;
            let entry = ManifestEntry { run, seed, generations: cfg.generations, wall_seconds: 0.0 };
            records::append_manifest(&dir, &cfg.hash(), cfg.seed, &entry)?;
        }
        dirs.push(records::load_run_dir(&dir)?);
    }

    for d in &dirs {
        let champs: Vec<f64> = d.runs.iter().map(|r| champion_fitness(&r.record)).collect();
        println!("{}: champions {champs:.4?}", d.mode());
    }
    let refs: Vec<_> = dirs.iter().collect();
    let fig4 = fig4_trajectories(&[(&dirs[0], None), (&dirs[1], None)])?;
    print!("{}", fig4.comment_block());
    match window_fitness_correlation(&refs) {
        Ok(s) => println!("window vs fitness: rho={:.3} n={} p={:.3}", s.rho, s.n, s.p),
        Err(e) => println!("window vs fitness: {e}"),
    }
    let impacts: Vec<_> =
        collect_impacts(&refs).into_iter().filter(|(m, _, _)| *m == Mode::EvoDevo).map(|(_, _, i)| i).collect();
    let split = early_late_split(&impacts);
    println!("early {:?}\nlate {:?}", split.early, split.late);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
