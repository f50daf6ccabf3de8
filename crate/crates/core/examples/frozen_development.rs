// Freeze a developing robot at its midlife body and compare with its full
// developmental trajectory.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use softbot_devo::analysis::reevaluate_frozen;
use softbot_devo::genome::random_genome;
use softbot_devo::{evaluate, EvalMode, Mode, SimConfig};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let sim = SimConfig { eval_duration: 1.0, ..SimConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut genomes = Vec::new();
    for id in 0..4 {
        let g = random_genome(Mode::EvoDevo, &mut rng);
        let full = evaluate(&g, &sim, EvalMode::Full)?.fitness;
        genomes.push((id, full, g));
    }
    for row in reevaluate_frozen(&genomes, &sim)? {
        println!("robot {}: developing {:+.5} frozen at midlife {:+.5}", row.id, row.full_fitness, row.frozen_fitness);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
