// Simulate one random robot, print its fitness trace, and write the node
// trajectory that `softbot dump-trajectory` produces.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use softbot_devo::fitness::dump_trajectory;
use softbot_devo::genome::random_genome;
use softbot_devo::{evaluate, EvalMode, Mode, SimConfig};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let genome = random_genome(Mode::EvoDevo, &mut rng);
    let sim = SimConfig { eval_duration: 1.0, ..SimConfig::default() };

    let trace = evaluate(&genome, &sim, EvalMode::Full)?;
    println!("fitness {:.5}, rolled over: {}", trace.fitness, trace.terminated_rollover);
    for s in trace.samples.iter().step_by(20) {
        println!("  t={:.2} y={:+.4} Q={:.2}", s.t, s.y, s.q);
    }

    let path = std::env::temp_dir().join("softbot_example_trajectory.txt");
    let file = std::io::BufWriter::new(std::fs::File::create(&path)?);
    dump_trajectory(&genome, &sim, EvalMode::Full, file)?;
    println!("trajectory written to {}", path.display());
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
