// A small age-fitness Pareto run with the physics evaluator, reporting the
// best robot each generation and the champion's ancestry.

use softbot_devo::analysis::lineage_extract;
use softbot_devo::evolution::{run_evolution, EvolutionParams, SimEvaluator};
use softbot_devo::{Mode, MutationConfig, SimConfig};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let params = EvolutionParams {
        mode: Mode::EvoDevo,
        population_size: 6,
        generations: 5,
        mutation: MutationConfig::default(),
    };
    let evaluator = SimEvaluator { sim: SimConfig { eval_duration: 1.0, ..SimConfig::default() } };
    let record = run_evolution(&params, 3, &evaluator);
    for g in &record.generations {
        println!("gen {:>2} best {:.5} mean {:.5} W {:.2}", g.generation, g.best_fitness, g.mean_fitness, g.best_window);
    }
    let champion = record.champion().ok_or("empty run")?;
    println!("champion {} ({} individuals evaluated)", champion.id, record.lineage.len());
    for step in lineage_extract(&record.lineage, champion.id)? {
        println!("  id {:>3} born {:>2} W {:.2} F {:.5}", step.id, step.birth_generation, step.window, step.fitness);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
